//! Binary decision trees grown on binned features.
//!
//! Features are quantized once per fit: with at most `max_bins` distinct
//! values every value gets its own bin (exact CART); otherwise bin edges sit
//! at sample quantiles. Thresholds are midpoints between neighboring bins, so
//! a tree trained on bins predicts identically on the raw values.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone, PartialEq)]
pub enum Node {
    Leaf {
        value: f64,
    },
    /// Samples with `x[feature] <= threshold` go left.
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecisionTree {
    /// Root first; children always come after their parent.
    pub nodes: Vec<Node>,
    pub max_depth: Option<usize>,
}

impl DecisionTree {
    pub fn predict(&self, x: &[f64]) -> f64 {
        let mut i = 0;
        loop {
            match self.nodes[i] {
                Node::Leaf { value } => return value,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => i = if x[feature] <= threshold { left } else { right },
            }
        }
    }

    /// Number of splits on the longest root-to-leaf path.
    pub fn depth(&self) -> usize {
        let mut depth = vec![0usize; self.nodes.len()];
        let mut max = 0;
        for (i, node) in self.nodes.iter().enumerate() {
            max = max.max(depth[i]);
            if let Node::Split { left, right, .. } = *node {
                depth[left] = depth[i] + 1;
                depth[right] = depth[i] + 1;
            }
        }
        max
    }

    pub fn leaf_count(&self) -> usize {
        self.nodes
            .iter()
            .filter(|n| matches!(n, Node::Leaf { .. }))
            .count()
    }

    /// Structural check: children point forward, every node is reached
    /// exactly once, feature indices are below `n_features`, and the depth
    /// respects `max_depth`.
    pub fn is_valid(&self, n_features: usize) -> bool {
        if self.nodes.is_empty() {
            return false;
        }
        let mut parents = vec![0usize; self.nodes.len()];
        for (i, node) in self.nodes.iter().enumerate() {
            if let Node::Split {
                feature,
                threshold,
                left,
                right,
            } = *node
            {
                if feature >= n_features || !threshold.is_finite() {
                    return false;
                }
                if left <= i || right <= i || left == right || left >= self.nodes.len() || right >= self.nodes.len() {
                    return false;
                }
                parents[left] += 1;
                parents[right] += 1;
            }
        }
        parents[0] == 0
            && parents[1..].iter().all(|&p| p == 1)
            && self.max_depth.is_none_or(|m| self.depth() <= m)
    }
}

/// Column-major bin indices plus the cut points between bins.
#[derive(Debug, Clone)]
pub(crate) struct Binned {
    pub bins: Vec<Vec<u32>>,
    pub cuts: Vec<Vec<f64>>,
}

impl Binned {
    pub fn new(x: &[&[f64]], max_bins: usize) -> Self {
        let d = x.first().map_or(0, |r| r.len());
        let max_bins = max_bins.max(2);
        let mut bins = Vec::with_capacity(d);
        let mut cuts = Vec::with_capacity(d);
        for f in 0..d {
            let mut sorted: Vec<f64> = x.iter().map(|r| r[f]).collect();
            sorted.sort_by(f64::total_cmp);
            let mut distinct = sorted.clone();
            distinct.dedup();
            let c: Vec<f64> = if distinct.len() <= max_bins {
                distinct.windows(2).map(|w| midpoint(w[0], w[1])).collect()
            } else {
                let n = sorted.len();
                let mut c: Vec<f64> = (1..max_bins)
                    .map(|k| k * n / max_bins)
                    .filter(|&i| i > 0 && sorted[i - 1] < sorted[i])
                    .map(|i| midpoint(sorted[i - 1], sorted[i]))
                    .collect();
                c.dedup();
                c
            };
            bins.push(x.iter().map(|r| c.partition_point(|&t| t < r[f]) as u32).collect());
            cuts.push(c);
        }
        Binned { bins, cuts }
    }

    pub fn n_features(&self) -> usize {
        self.bins.len()
    }
}

/// A value strictly below `b` and at least `a`, for `a < b`.
fn midpoint(a: f64, b: f64) -> f64 {
    let m = a + (b - a) / 2.0;
    if m >= b {
        a
    } else {
        m
    }
}

/// Split criterion over per-bin accumulators.
pub(crate) trait Criterion: Sync {
    /// Accumulated statistics; the last entry is the sample count.
    type Acc: Copy + Default + Send;
    fn accumulate(&self, acc: &mut Self::Acc, sample: usize);
    fn add(a: &mut Self::Acc, b: &Self::Acc);
    fn sub(a: &Self::Acc, b: &Self::Acc) -> Self::Acc;
    fn count(a: &Self::Acc) -> f64;
    /// Node score; the gain of a split is `score(l) + score(r) - score(parent)`.
    fn score(&self, a: &Self::Acc) -> f64;
    fn leaf(&self, a: &Self::Acc) -> f64;
    fn accepts(&self, gain: f64, parent: &Self::Acc) -> bool;
}

/// Weighted Gini impurity for binary labels.
pub(crate) struct Gini<'a> {
    pub y: &'a [bool],
    pub weights: Option<&'a [f64]>,
}

impl Criterion for Gini<'_> {
    /// (positive weight, total weight, count)
    type Acc = [f64; 3];

    fn accumulate(&self, acc: &mut [f64; 3], s: usize) {
        let w = self.weights.map_or(1.0, |w| w[s]);
        if self.y[s] {
            acc[0] += w;
        }
        acc[1] += w;
        acc[2] += 1.0;
    }

    fn add(a: &mut [f64; 3], b: &[f64; 3]) {
        for k in 0..3 {
            a[k] += b[k];
        }
    }

    fn sub(a: &[f64; 3], b: &[f64; 3]) -> [f64; 3] {
        [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
    }

    fn count(a: &[f64; 3]) -> f64 {
        a[2]
    }

    fn score(&self, a: &[f64; 3]) -> f64 {
        if a[1] <= 0.0 {
            return 0.0;
        }
        let neg = a[1] - a[0];
        (a[0] * a[0] + neg * neg) / a[1]
    }

    fn leaf(&self, a: &[f64; 3]) -> f64 {
        if a[1] > 0.0 {
            a[0] / a[1]
        } else {
            0.0
        }
    }

    /// Impure nodes split even at zero gain (XOR-like layouts need one
    /// uninformative split before the informative ones).
    fn accepts(&self, gain: f64, parent: &[f64; 3]) -> bool {
        let pure = parent[0] <= 0.0 || parent[0] >= parent[1];
        !pure && gain >= -1e-9 * parent[1]
    }
}

/// Second-order boosting criterion with L2 leaf regularization.
pub(crate) struct Newton<'a> {
    pub grad: &'a [f64],
    pub hess: &'a [f64],
    pub lambda: f64,
}

impl Criterion for Newton<'_> {
    /// (G, H, count)
    type Acc = [f64; 3];

    fn accumulate(&self, acc: &mut [f64; 3], s: usize) {
        acc[0] += self.grad[s];
        acc[1] += self.hess[s];
        acc[2] += 1.0;
    }

    fn add(a: &mut [f64; 3], b: &[f64; 3]) {
        for k in 0..3 {
            a[k] += b[k];
        }
    }

    fn sub(a: &[f64; 3], b: &[f64; 3]) -> [f64; 3] {
        [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
    }

    fn count(a: &[f64; 3]) -> f64 {
        a[2]
    }

    fn score(&self, a: &[f64; 3]) -> f64 {
        a[0] * a[0] / (a[1] + self.lambda)
    }

    fn leaf(&self, a: &[f64; 3]) -> f64 {
        -a[0] / (a[1] + self.lambda)
    }

    fn accepts(&self, gain: f64, parent: &[f64; 3]) -> bool {
        gain > 1e-12 * (1.0 + self.score(parent))
    }
}

pub(crate) struct Grower<'a, C: Criterion> {
    pub binned: &'a Binned,
    pub criterion: &'a C,
    pub max_depth: Option<usize>,
    /// Features examined per node before settling for the best split so far.
    pub max_features: usize,
}

struct Best {
    feature: usize,
    bin: u32,
    gain: f64,
}

impl<C: Criterion> Grower<'_, C> {
    /// Grows a tree over `samples`. With an RNG, candidate features are
    /// visited in random order; the search stops after `max_features` once
    /// some split is acceptable, and otherwise keeps going.
    pub fn grow(&self, samples: &mut [usize], mut rng: Option<&mut ChaCha8Rng>) -> DecisionTree {
        let d = self.binned.n_features();
        let mut order: Vec<usize> = (0..d).collect();
        let mut nodes = vec![Node::Leaf { value: 0.0 }];
        let mut stack = vec![(0usize, 0usize, samples.len(), 0usize)];
        let mut hist: Vec<C::Acc> = Vec::new();
        while let Some((id, start, end, depth)) = stack.pop() {
            let here = &mut samples[start..end];
            let mut parent = C::Acc::default();
            for &s in here.iter() {
                self.criterion.accumulate(&mut parent, s);
            }
            let value = self.criterion.leaf(&parent);
            let can_split = here.len() >= 2 && self.max_depth.is_none_or(|m| depth < m);
            let best = if can_split {
                self.best_split(here, &parent, &mut order, &mut hist, rng.as_deref_mut())
            } else {
                None
            };
            let Some(best) = best else {
                nodes[id] = Node::Leaf { value };
                continue;
            };
            let col = &self.binned.bins[best.feature];
            let mut mid = 0;
            for i in 0..here.len() {
                if col[here[i]] <= best.bin {
                    here.swap(i, mid);
                    mid += 1;
                }
            }
            let (left, right) = (nodes.len(), nodes.len() + 1);
            nodes.push(Node::Leaf { value: 0.0 });
            nodes.push(Node::Leaf { value: 0.0 });
            nodes[id] = Node::Split {
                feature: best.feature,
                threshold: self.binned.cuts[best.feature][best.bin as usize],
                left,
                right,
            };
            // Right first so the left subtree is grown (and numbered) first.
            stack.push((right, start + mid, end, depth + 1));
            stack.push((left, start, start + mid, depth + 1));
        }
        DecisionTree {
            nodes,
            max_depth: self.max_depth,
        }
    }

    fn best_split(
        &self,
        samples: &[usize],
        parent: &C::Acc,
        order: &mut [usize],
        hist: &mut Vec<C::Acc>,
        mut rng: Option<&mut ChaCha8Rng>,
    ) -> Option<Best> {
        let d = order.len();
        let parent_score = self.criterion.score(parent);
        let mut best: Option<Best> = None;
        for i in 0..d {
            if let Some(rng) = rng.as_deref_mut() {
                let j = rng.random_range(i..d);
                order.swap(i, j);
            }
            if i >= self.max_features && best.is_some() {
                break;
            }
            let f = order[i];
            let cuts = &self.binned.cuts[f];
            if cuts.is_empty() {
                continue;
            }
            hist.clear();
            hist.resize(cuts.len() + 1, C::Acc::default());
            let col = &self.binned.bins[f];
            for &s in samples {
                self.criterion.accumulate(&mut hist[col[s] as usize], s);
            }
            let mut left = C::Acc::default();
            for (b, h) in hist[..cuts.len()].iter().enumerate() {
                C::add(&mut left, h);
                if C::count(&left) == 0.0 {
                    continue;
                }
                let right = C::sub(parent, &left);
                if C::count(&right) == 0.0 {
                    break;
                }
                let gain = self.criterion.score(&left) + self.criterion.score(&right) - parent_score;
                if !self.criterion.accepts(gain, parent) {
                    continue;
                }
                if best.as_ref().is_none_or(|bb| gain > bb.gain) {
                    best = Some(Best {
                        feature: f,
                        bin: b as u32,
                        gain,
                    });
                }
            }
        }
        best
    }
}
