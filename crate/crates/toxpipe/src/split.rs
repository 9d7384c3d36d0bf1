//! Seeded train/validation/test partition with per-assay stratification.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::assays::{Labels, N_ASSAYS};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SplitError {
    #[error("split fractions {0:?} must be non-negative and sum to 1")]
    BadFractions([f64; 3]),
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Split {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
}

impl Split {
    pub fn parts(&self) -> [&[usize]; 3] {
        [&self.train, &self.val, &self.test]
    }
}

/// Largest-remainder apportionment of `n` items; ties in the remainder go to
/// the earlier part.
pub fn split_sizes(n: usize, fractions: [f64; 3]) -> Result<[usize; 3], SplitError> {
    check_fractions(fractions)?;
    let exact: Vec<f64> = fractions.iter().map(|f| f * n as f64).collect();
    let mut sizes = [0usize; 3];
    for (s, e) in sizes.iter_mut().zip(&exact) {
        *s = e.floor() as usize;
    }
    let mut order = [0usize, 1, 2];
    order.sort_by(|&a, &b| {
        let ra = exact[a] - exact[a].floor();
        let rb = exact[b] - exact[b].floor();
        rb.total_cmp(&ra).then(a.cmp(&b))
    });
    let assigned: usize = sizes.iter().sum();
    for &j in order.iter().take(n.saturating_sub(assigned)) {
        sizes[j] += 1;
    }
    Ok(sizes)
}

fn check_fractions(f: [f64; 3]) -> Result<(), SplitError> {
    if f.iter().any(|v| !v.is_finite() || *v < 0.0) || (f.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
        return Err(SplitError::BadFractions(f));
    }
    Ok(())
}

/// Iterative stratification: records carrying the rarest active label are
/// placed first, each into the part that still wants the most actives of
/// that label. A swap pass then trades records between parts while that
/// brings per-assay active counts closer to proportional. Part sizes are
/// fixed up front by [`split_sizes`]; the seed only decides the visiting
/// order. Index lists come back sorted.
pub fn split(labels: &[Labels], seed: u64, fractions: [f64; 3]) -> Result<Split, SplitError> {
    let sizes = split_sizes(labels.len(), fractions)?;
    let mut order: Vec<usize> = (0..labels.len()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));

    let mut capacity = sizes.map(|s| s as f64);
    let mut wanted = [[0.0f64; N_ASSAYS]; 3];
    let mut actives = [0usize; N_ASSAYS];
    for row in labels {
        for (k, l) in row.iter().enumerate() {
            actives[k] += usize::from(*l == Some(true));
        }
    }
    for (j, w) in wanted.iter_mut().enumerate() {
        for k in 0..N_ASSAYS {
            w[k] = actives[k] as f64 * fractions[j];
        }
    }
    let mut by_rarity: Vec<usize> = (0..N_ASSAYS).filter(|&k| actives[k] > 0).collect();
    by_rarity.sort_by_key(|&k| (actives[k], k));

    let mut part = vec![usize::MAX; labels.len()];
    let place = |i: usize, j: usize, part: &mut [usize], capacity: &mut [f64; 3], wanted: &mut [[f64; N_ASSAYS]; 3]| {
        part[i] = j;
        capacity[j] -= 1.0;
        for (k, l) in labels[i].iter().enumerate() {
            if *l == Some(true) {
                wanted[j][k] -= 1.0;
            }
        }
    };
    for &k in &by_rarity {
        for &i in &order {
            if part[i] != usize::MAX || labels[i][k] != Some(true) {
                continue;
            }
            let j = (0..3)
                .filter(|&j| capacity[j] >= 1.0)
                .max_by(|&a, &b| {
                    wanted[a][k]
                        .total_cmp(&wanted[b][k])
                        .then(capacity[a].total_cmp(&capacity[b]))
                        .then(b.cmp(&a))
                })
                .expect("total capacity equals record count");
            place(i, j, &mut part, &mut capacity, &mut wanted);
        }
    }
    for &i in &order {
        if part[i] == usize::MAX {
            let j = (0..3)
                .max_by(|&a, &b| capacity[a].total_cmp(&capacity[b]).then(b.cmp(&a)))
                .expect("three parts");
            place(i, j, &mut part, &mut capacity, &mut wanted);
        }
    }
    let target: Vec<[f64; N_ASSAYS]> = fractions.iter().map(|f| actives.map(|a| a as f64 * f)).collect();
    rebalance(labels, &mut part, &target);
    let mut out = Split::default();
    for (i, &j) in part.iter().enumerate() {
        match j {
            0 => out.train.push(i),
            1 => out.val.push(i),
            _ => out.test.push(i),
        }
    }
    Ok(out)
}

/// Maximum full sweeps of the swap pass.
const MAX_SWEEPS: usize = 20;

/// Swaps records between parts while a swap lowers the squared deviation of
/// active counts from `target`, each term scaled by its target so small
/// parts are not ignored. Every sweep visits validation and test records in
/// index order and applies the best swap for each.
fn rebalance(labels: &[Labels], part: &mut [usize], target: &[[f64; N_ASSAYS]]) {
    let mask: Vec<u16> = labels
        .iter()
        .map(|l| l.iter().enumerate().fold(0u16, |m, (k, v)| m | (u16::from(*v == Some(true)) << k)))
        .collect();
    let mut got = [[0.0f64; N_ASSAYS]; 3];
    for (i, &j) in part.iter().enumerate() {
        for (k, g) in got[j].iter_mut().enumerate() {
            *g += f64::from((mask[i] >> k) & 1);
        }
    }
    let weight = |j: usize, k: usize| 1.0 / target[j][k].max(1.0);
    // Cost change of moving `gain` actives of each label into part `a` and
    // out of part `b`.
    let delta = |got: &[[f64; N_ASSAYS]; 3], a: usize, b: usize, gain: &[f64; N_ASSAYS]| -> f64 {
        let mut d = 0.0;
        for k in 0..N_ASSAYS {
            if gain[k] == 0.0 {
                continue;
            }
            let (da, db) = (got[a][k] - target[a][k], got[b][k] - target[b][k]);
            d += weight(a, k) * ((da + gain[k]).powi(2) - da * da);
            d += weight(b, k) * ((db - gain[k]).powi(2) - db * db);
        }
        d
    };
    for _ in 0..MAX_SWEEPS {
        let mut improved = false;
        for r in 0..labels.len() {
            let a = part[r];
            if a == 0 {
                continue;
            }
            let mut best: Option<(f64, usize)> = None;
            for s in 0..labels.len() {
                let b = part[s];
                if b == a || mask[s] == mask[r] {
                    continue;
                }
                let mut gain = [0.0; N_ASSAYS];
                for (k, g) in gain.iter_mut().enumerate() {
                    *g = f64::from((mask[s] >> k) & 1) - f64::from((mask[r] >> k) & 1);
                }
                let d = delta(&got, a, b, &gain);
                if d < -1e-9 && best.is_none_or(|(bd, _)| d < bd) {
                    best = Some((d, s));
                }
            }
            if let Some((_, s)) = best {
                let b = part[s];
                for k in 0..N_ASSAYS {
                    let g = f64::from((mask[s] >> k) & 1) - f64::from((mask[r] >> k) & 1);
                    got[a][k] += g;
                    got[b][k] -= g;
                }
                part.swap(r, s);
                improved = true;
            }
        }
        if !improved {
            break;
        }
    }
}
