//! 2D depiction: coordinate generation, rasterization and augmentation.
//!
//! Layout is a greedy breadth-first placement. Rings are regular polygons;
//! fused rings are reflected across their shared edge; acyclic chains zigzag
//! at 120°. Ring systems that cannot be built from edge-fused templates
//! (bridged, peri-fused) and any layout with clashing atoms are relaxed by a
//! short force-directed refinement.

use std::collections::VecDeque;
use std::f64::consts::PI;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::element;
use crate::molecule::{BondOrder, Molecule};
use crate::rings::smallest_rings;

pub const DEFAULT_SIZE: usize = 224;

/// Bonded pairs must end up within this range (bond-length units).
pub const BOND_LENGTH_RANGE: (f64, f64) = (0.5, 2.0);
const CLASH_DISTANCE: f64 = 0.4;
const MIN_SEPARATION: f64 = 1e-3;
const REFINE_ITERATIONS: usize = 100;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum DepictError {
    #[error("molecule has no atoms")]
    EmptyMolecule,
    #[error("molecule has {0} disconnected fragments")]
    Disconnected(usize),
    #[error("layout could not avoid overlapping atoms")]
    LayoutOverlap,
    #[error("layout has {layout} points for {atoms} atoms")]
    LayoutMismatch { layout: usize, atoms: usize },
    #[error("image size {0}x{1} is too small")]
    BadSize(usize, usize),
    #[error("image encoding failed: {0}")]
    Encode(String),
}

type Point = [f64; 2];

fn add(a: Point, b: Point) -> Point {
    [a[0] + b[0], a[1] + b[1]]
}
fn sub(a: Point, b: Point) -> Point {
    [a[0] - b[0], a[1] - b[1]]
}
fn scale(a: Point, k: f64) -> Point {
    [a[0] * k, a[1] * k]
}
fn norm(a: Point) -> f64 {
    a[0].hypot(a[1])
}
fn unit(a: Point) -> Point {
    let n = norm(a);
    if n < 1e-12 {
        [1.0, 0.0]
    } else {
        scale(a, 1.0 / n)
    }
}
fn polar(angle: f64) -> Point {
    [angle.cos(), angle.sin()]
}
fn angle_of(a: Point) -> f64 {
    a[1].atan2(a[0])
}
fn centroid(points: impl Iterator<Item = Point>) -> Point {
    let (mut s, mut n) = ([0.0, 0.0], 0.0);
    for p in points {
        s = add(s, p);
        n += 1.0;
    }
    scale(s, 1.0 / n)
}

/// Per-atom coordinates in bond-length units.
#[derive(Debug, Clone, PartialEq)]
pub struct Layout2D {
    pub coords: Vec<Point>,
}

impl Layout2D {
    pub fn distance(&self, a: usize, b: usize) -> f64 {
        norm(sub(self.coords[a], self.coords[b]))
    }
}

struct Placer<'m> {
    mol: &'m Molecule,
    rings: Vec<Vec<usize>>,
    ring_system: Vec<usize>,
    atom_rings: Vec<Vec<usize>>,
    pos: Vec<Option<Point>>,
    turn: Vec<f64>,
    ring_placed: Vec<bool>,
    needs_refine: bool,
    queue: VecDeque<usize>,
}

/// Generates 2D coordinates for a connected molecule.
pub fn layout2d(mol: &Molecule) -> Result<Layout2D, DepictError> {
    if mol.is_empty() {
        return Err(DepictError::EmptyMolecule);
    }
    if mol.fragment_count > 1 {
        return Err(DepictError::Disconnected(mol.fragment_count));
    }
    let rings = smallest_rings(mol);
    let n = mol.atom_count();
    let mut atom_rings = vec![Vec::new(); n];
    for (ri, ring) in rings.iter().enumerate() {
        for &a in ring {
            atom_rings[a].push(ri);
        }
    }
    let ring_system = ring_systems(&rings, n);
    let mut placer = Placer {
        mol,
        ring_placed: vec![false; rings.len()],
        rings,
        ring_system,
        atom_rings,
        pos: vec![None; n],
        turn: vec![1.0; n],
        needs_refine: false,
        queue: VecDeque::new(),
    };
    placer.run();
    let mut coords: Vec<Point> = placer
        .pos
        .iter()
        .map(|p| p.expect("connected molecule is fully placed"))
        .collect();
    if placer.needs_refine || has_clash(mol, &coords) {
        refine(mol, &mut coords);
    }
    let layout = Layout2D { coords };
    validate(mol, &layout)?;
    Ok(layout)
}

/// Groups rings sharing at least one atom; returns a system id per ring.
fn ring_systems(rings: &[Vec<usize>], n: usize) -> Vec<usize> {
    let mut parent: Vec<usize> = (0..rings.len()).collect();
    fn find(parent: &mut [usize], mut x: usize) -> usize {
        while parent[x] != x {
            parent[x] = parent[parent[x]];
            x = parent[x];
        }
        x
    }
    let mut owner = vec![usize::MAX; n];
    for (ri, ring) in rings.iter().enumerate() {
        for &a in ring {
            if owner[a] == usize::MAX {
                owner[a] = ri;
            } else {
                let (x, y) = (find(&mut parent, owner[a]), find(&mut parent, ri));
                parent[x.max(y)] = x.min(y);
            }
        }
    }
    (0..rings.len()).map(|r| find(&mut parent, r)).collect()
}

impl Placer<'_> {
    fn run(&mut self) {
        if self.atom_rings[0].is_empty() {
            self.pos[0] = Some([0.0, 0.0]);
            self.queue.push_back(0);
        } else {
            self.place_system(0, [0.0, 0.0], [1.0, 0.0]);
        }
        while let Some(a) = self.queue.pop_front() {
            let unplaced: Vec<usize> = self
                .mol
                .neighbors(a)
                .iter()
                .map(|&(b, _)| b)
                .filter(|&b| self.pos[b].is_none())
                .collect();
            if unplaced.is_empty() {
                continue;
            }
            let here = self.pos[a].expect("queued atoms are placed");
            let dirs = self.branch_directions(a, unplaced.len());
            for (&b, (dir, child_turn)) in unplaced.iter().zip(dirs) {
                if self.pos[b].is_some() {
                    continue;
                }
                let at = add(here, dir);
                if self.atom_rings[b].is_empty() {
                    self.pos[b] = Some(at);
                    self.turn[b] = child_turn;
                    self.queue.push_back(b);
                } else {
                    self.place_system(b, at, dir);
                }
            }
        }
    }

    /// Directions for `m` new bonds at atom `a`, with the zigzag turn sign to
    /// hand to each child.
    fn branch_directions(&self, a: usize, m: usize) -> Vec<(Point, f64)> {
        let here = self.pos[a].expect("placed");
        let placed: Vec<usize> = self
            .mol
            .neighbors(a)
            .iter()
            .map(|&(b, _)| b)
            .filter(|&b| self.pos[b].is_some())
            .collect();
        let base = -PI / 6.0;
        if placed.is_empty() {
            let step = if m == 2 { 2.0 * PI / 3.0 } else { 2.0 * PI / m as f64 };
            return (0..m)
                .map(|i| (polar(base - i as f64 * step), if i % 2 == 0 { 1.0 } else { -1.0 }))
                .collect();
        }
        let back = |b: usize| angle_of(sub(self.pos[b].expect("placed"), here));
        if placed.len() == 1 && m == 1 {
            let parent = placed[0];
            let incoming = back(parent) + PI;
            if self.is_linear(a) {
                return vec![(polar(incoming), self.turn[a])];
            }
            let s = self.turn[a];
            return vec![(polar(incoming + s * PI / 3.0), -s)];
        }
        let mut angles: Vec<f64> = placed.iter().map(|&b| back(b).rem_euclid(2.0 * PI)).collect();
        angles.sort_by(f64::total_cmp);
        let (mut gap_start, mut gap) = (angles[angles.len() - 1], angles[0] + 2.0 * PI - angles[angles.len() - 1]);
        for w in angles.windows(2) {
            if w[1] - w[0] > gap + 1e-9 {
                gap_start = w[0];
                gap = w[1] - w[0];
            }
        }
        let incoming = sub(here, self.pos[placed[0]].expect("placed"));
        (0..m)
            .map(|i| {
                let dir = polar(gap_start + gap * (i + 1) as f64 / (m + 1) as f64);
                let cross = incoming[0] * dir[1] - incoming[1] * dir[0];
                let turn = if cross > 1e-9 { -1.0 } else { 1.0 };
                (dir, turn)
            })
            .collect()
    }

    /// Triple bonds and cumulated double bonds keep chains straight.
    fn is_linear(&self, a: usize) -> bool {
        let orders: Vec<BondOrder> = self
            .mol
            .neighbors(a)
            .iter()
            .map(|&(_, bi)| self.mol.bonds[bi].order)
            .collect();
        orders.len() == 2
            && (orders.contains(&BondOrder::Triple)
                || orders.iter().all(|&o| o == BondOrder::Double))
    }

    /// Places the ring system containing `anchor` with the anchor at `at`,
    /// extending away from the incoming bond direction `dir`.
    fn place_system(&mut self, anchor: usize, at: Point, dir: Point) {
        let first = self.atom_rings[anchor][0];
        let system = self.ring_system[first];
        let ring = self.rings[first].clone();
        let k = ring.len();
        let radius = circumradius(k);
        let center = add(at, scale(unit(dir), radius));
        let start = ring.iter().position(|&a| a == anchor).expect("anchor in ring");
        let theta0 = angle_of(sub(at, center));
        for i in 0..k {
            let atom = ring[(start + i) % k];
            let p = add(center, scale(polar(theta0 + 2.0 * PI * i as f64 / k as f64), radius));
            self.set_ring_atom(atom, p);
        }
        self.ring_placed[first] = true;

        loop {
            let next = (0..self.rings.len())
                .filter(|&r| self.ring_system[r] == system && !self.ring_placed[r])
                .map(|r| (r, self.rings[r].iter().filter(|&&a| self.pos[a].is_some()).count()))
                .filter(|&(_, placed)| placed > 0)
                .max_by(|x, y| x.1.cmp(&y.1).then(y.0.cmp(&x.0)));
            let Some((r, _)) = next else { break };
            self.place_fused_ring(r);
            self.ring_placed[r] = true;
        }
    }

    fn set_ring_atom(&mut self, atom: usize, p: Point) {
        if self.pos[atom].is_none() {
            self.pos[atom] = Some(p);
            self.queue.push_back(atom);
        }
    }

    fn place_fused_ring(&mut self, r: usize) {
        let ring = self.rings[r].clone();
        let k = ring.len();
        let placed: Vec<bool> = ring.iter().map(|&a| self.pos[a].is_some()).collect();
        let count = placed.iter().filter(|&&p| p).count();
        if count == k {
            return;
        }
        // Rotate so the unplaced atoms form the tail ring[start+1 ..] if contiguous.
        let Some(first_unplaced_after_placed) =
            (0..k).find(|&i| placed[i] && !placed[(i + 1) % k])
        else {
            return;
        };
        let seq: Vec<usize> = (0..k).map(|i| ring[(first_unplaced_after_placed + 1 + i) % k]).collect();
        // seq begins with the unplaced run and ends with the placed atom before it.
        let unplaced_run = seq.iter().take_while(|&&a| self.pos[a].is_none()).count();
        let contiguous = seq[unplaced_run..].iter().all(|&a| self.pos[a].is_some());

        if count == 1 {
            // Spiro junction: grow the new ring away from the placed rings at the shared atom.
            let shared = seq[k - 1];
            let p = self.pos[shared].expect("placed");
            let away = self.away_from_placed_rings(shared, p);
            let radius = circumradius(k);
            let center = add(p, scale(away, radius));
            let theta0 = angle_of(sub(p, center));
            for (i, &atom) in seq.iter().take(k - 1).enumerate() {
                let q = add(center, scale(polar(theta0 + 2.0 * PI * (i + 1) as f64 / k as f64), radius));
                self.set_ring_atom(atom, q);
            }
            return;
        }

        if contiguous {
            // Regular polygon fused on the edge (u, v) adjoining the unplaced run.
            let v = seq[k - 1];
            let u = seq[k - 2];
            let (pu, pv) = (self.pos[u].expect("placed"), self.pos[v].expect("placed"));
            let mid = scale(add(pu, pv), 0.5);
            let edge = sub(pv, pu);
            let mut normal = unit([-edge[1], edge[0]]);
            let reference = self.shared_ring_centroid(u, v, r);
            if dot(sub(mid, reference), normal) < 0.0 {
                normal = scale(normal, -1.0);
            }
            let len = norm(edge).max(1e-9);
            let apothem = len / (2.0 * (PI / k as f64).tan());
            let radius = len / (2.0 * (PI / k as f64).sin());
            let center = add(mid, scale(normal, apothem));
            let av = angle_of(sub(pv, center));
            let au = angle_of(sub(pu, center));
            let step = 2.0 * PI / k as f64;
            let dir = if ((av - au).rem_euclid(2.0 * PI) - step).abs() < 1e-6 { 1.0 } else { -1.0 };
            let predicted: Vec<Point> = (0..k)
                .map(|i| add(center, scale(polar(av + dir * step * (i + 1) as f64), radius)))
                .collect();
            // Placed atoms other than u and v must already sit on the template.
            let consistent = seq[unplaced_run..k - 2]
                .iter()
                .enumerate()
                .all(|(j, &a)| norm(sub(self.pos[a].expect("placed"), predicted[unplaced_run + j])) < 0.1);
            if !consistent {
                self.needs_refine = true;
            }
            for (i, &atom) in seq.iter().take(unplaced_run).enumerate() {
                self.set_ring_atom(atom, predicted[i]);
            }
            return;
        }

        // Non-contiguous attachment (bridged systems): start unplaced atoms at
        // the centroid of their placed ring neighbors and let refinement sort it out.
        self.needs_refine = true;
        let c = centroid(ring.iter().filter_map(|&a| self.pos[a]));
        for (i, &atom) in ring.iter().enumerate() {
            if self.pos[atom].is_none() {
                let jitter = polar(i as f64 * 2.0 * PI / k as f64);
                self.set_ring_atom(atom, add(c, scale(jitter, 0.5)));
            }
        }
    }

    fn shared_ring_centroid(&self, u: usize, v: usize, except: usize) -> Point {
        let candidates: Vec<usize> = self.atom_rings[u]
            .iter()
            .copied()
            .filter(|&r| r != except && self.ring_placed[r] && self.rings[r].contains(&v))
            .collect();
        let ring = candidates.first().copied().or_else(|| {
            self.atom_rings[u]
                .iter()
                .copied()
                .find(|&r| r != except && self.ring_placed[r])
        });
        match ring {
            Some(r) => centroid(self.rings[r].iter().filter_map(|&a| self.pos[a])),
            None => centroid(self.pos.iter().flatten().copied()),
        }
    }

    fn away_from_placed_rings(&self, atom: usize, p: Point) -> Point {
        let placed: Vec<usize> = self.atom_rings[atom]
            .iter()
            .copied()
            .filter(|&r| self.ring_placed[r])
            .collect();
        if placed.is_empty() {
            return [1.0, 0.0];
        }
        let c = centroid(
            placed
                .iter()
                .map(|&r| centroid(self.rings[r].iter().filter_map(|&a| self.pos[a]))),
        );
        unit(sub(p, c))
    }
}

fn dot(a: Point, b: Point) -> f64 {
    a[0] * b[0] + a[1] * b[1]
}

fn circumradius(k: usize) -> f64 {
    1.0 / (2.0 * (PI / k as f64).sin())
}

fn has_clash(mol: &Molecule, coords: &[Point]) -> bool {
    for i in 0..coords.len() {
        for j in i + 1..coords.len() {
            if mol.bond_between(i, j).is_none() && norm(sub(coords[i], coords[j])) < CLASH_DISTANCE {
                return true;
            }
        }
    }
    false
}

/// Spring-and-repulsion relaxation: bonds pull toward length 1, non-bonded
/// pairs repel with 1/d².
fn refine(mol: &Molecule, coords: &mut [Point]) {
    let n = coords.len();
    const SPRING: f64 = 1.0;
    const REPULSION: f64 = 0.25;
    const CUTOFF: f64 = 3.0;
    const MAX_STEP: f64 = 0.2;
    // Coincident starting points get a deterministic nudge so forces have a direction.
    for i in 0..n {
        for j in 0..i {
            if norm(sub(coords[i], coords[j])) < 1e-9 {
                coords[i] = add(coords[i], scale(polar(i as f64 * 2.399_963), 0.05));
            }
        }
    }
    let mut forces = vec![[0.0, 0.0]; n];
    for iter in 0..REFINE_ITERATIONS {
        forces.iter_mut().for_each(|f| *f = [0.0, 0.0]);
        for bond in &mol.bonds {
            let (i, j) = bond.endpoints;
            let d = sub(coords[j], coords[i]);
            let len = norm(d).max(1e-6);
            let f = scale(d, SPRING * (len - 1.0) / len);
            forces[i] = add(forces[i], f);
            forces[j] = sub(forces[j], f);
        }
        for i in 0..n {
            for j in i + 1..n {
                if mol.bond_between(i, j).is_some() {
                    continue;
                }
                let d = sub(coords[j], coords[i]);
                let len = norm(d).max(0.05);
                if len > CUTOFF {
                    continue;
                }
                let f = scale(d, REPULSION / (len * len * len));
                forces[i] = sub(forces[i], f);
                forces[j] = add(forces[j], f);
            }
        }
        let step = 0.5 * (1.0 - iter as f64 / REFINE_ITERATIONS as f64) + 0.05;
        for (p, f) in coords.iter_mut().zip(&forces) {
            let mut delta = scale(*f, step);
            let len = norm(delta);
            if len > MAX_STEP {
                delta = scale(delta, MAX_STEP / len);
            }
            *p = add(*p, delta);
        }
    }
}

fn validate(mol: &Molecule, layout: &Layout2D) -> Result<(), DepictError> {
    let c = &layout.coords;
    if c.iter().any(|p| !p[0].is_finite() || !p[1].is_finite()) {
        return Err(DepictError::LayoutOverlap);
    }
    for bond in &mol.bonds {
        let d = layout.distance(bond.endpoints.0, bond.endpoints.1);
        if d < BOND_LENGTH_RANGE.0 || d > BOND_LENGTH_RANGE.1 {
            return Err(DepictError::LayoutOverlap);
        }
    }
    for i in 0..c.len() {
        for j in i + 1..c.len() {
            if layout.distance(i, j) < MIN_SEPARATION {
                return Err(DepictError::LayoutOverlap);
            }
        }
    }
    Ok(())
}

/// An RGB raster, row-major, three bytes per pixel.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StructImage {
    pub width: usize,
    pub height: usize,
    pub pixels: Vec<u8>,
}

pub const WHITE: [u8; 3] = [255, 255, 255];
pub const BLACK: [u8; 3] = [0, 0, 0];

/// Disk color for a heteroatom; `None` for carbon.
pub fn atom_color(atomic_number: u8) -> Option<[u8; 3]> {
    match atomic_number {
        element::CARBON => None,
        element::NITROGEN => Some([0, 0, 255]),
        element::OXYGEN => Some([255, 0, 0]),
        element::SULFUR => Some([204, 204, 0]),
        z if element::is_halogen(z) => Some([0, 170, 0]),
        element::PHOSPHORUS => Some([255, 128, 0]),
        _ => Some([255, 0, 255]),
    }
}

impl StructImage {
    pub fn blank(width: usize, height: usize) -> Self {
        StructImage {
            width,
            height,
            pixels: vec![255; width * height * 3],
        }
    }

    pub fn get(&self, x: usize, y: usize) -> [u8; 3] {
        let i = (y * self.width + x) * 3;
        [self.pixels[i], self.pixels[i + 1], self.pixels[i + 2]]
    }

    pub fn set(&mut self, x: usize, y: usize, rgb: [u8; 3]) {
        let i = (y * self.width + x) * 3;
        self.pixels[i..i + 3].copy_from_slice(&rgb);
    }

    pub fn encode_png(&self) -> Result<Vec<u8>, DepictError> {
        let img = image::RgbImage::from_raw(self.width as u32, self.height as u32, self.pixels.clone())
            .ok_or_else(|| DepictError::Encode("pixel buffer size".into()))?;
        let mut out = std::io::Cursor::new(Vec::new());
        img.write_to(&mut out, image::ImageFormat::Png)
            .map_err(|e| DepictError::Encode(e.to_string()))?;
        Ok(out.into_inner())
    }

    pub fn save_png(&self, path: &Path) -> Result<(), DepictError> {
        let bytes = self.encode_png()?;
        std::fs::write(path, bytes).map_err(|e| DepictError::Encode(e.to_string()))
    }

    pub fn decode_png(bytes: &[u8]) -> Result<Self, DepictError> {
        let img = image::load_from_memory_with_format(bytes, image::ImageFormat::Png)
            .map_err(|e| DepictError::Encode(e.to_string()))?
            .to_rgb8();
        Ok(StructImage {
            width: img.width() as usize,
            height: img.height() as usize,
            pixels: img.into_raw(),
        })
    }

    fn stroke(&mut self, a: Point, b: Point, width: f64, dash: Option<f64>) {
        let r = width / 2.0;
        let (x0, x1) = (a[0].min(b[0]) - r - 1.0, a[0].max(b[0]) + r + 1.0);
        let (y0, y1) = (a[1].min(b[1]) - r - 1.0, a[1].max(b[1]) + r + 1.0);
        let ab = sub(b, a);
        let len2 = dot(ab, ab);
        let len = len2.sqrt();
        for y in clamp_range(y0, y1, self.height) {
            for x in clamp_range(x0, x1, self.width) {
                let p = [x as f64 + 0.5, y as f64 + 0.5];
                let t = if len2 > 0.0 { (dot(sub(p, a), ab) / len2).clamp(0.0, 1.0) } else { 0.0 };
                let q = add(a, scale(ab, t));
                if norm(sub(p, q)) > r {
                    continue;
                }
                if let Some(period) = dash {
                    if ((t * len) / period).floor() as i64 % 2 == 1 {
                        continue;
                    }
                }
                self.set(x, y, BLACK);
            }
        }
    }

    fn disk(&mut self, c: Point, radius: f64, rgb: [u8; 3]) {
        for y in clamp_range(c[1] - radius - 1.0, c[1] + radius + 1.0, self.height) {
            for x in clamp_range(c[0] - radius - 1.0, c[0] + radius + 1.0, self.width) {
                let p = [x as f64 + 0.5, y as f64 + 0.5];
                if norm(sub(p, c)) <= radius {
                    self.set(x, y, rgb);
                }
            }
        }
    }
}

fn clamp_range(lo: f64, hi: f64, size: usize) -> std::ops::Range<usize> {
    let lo = lo.floor().max(0.0) as usize;
    let hi = (hi.ceil().max(0.0) as usize).min(size);
    lo.min(hi)..hi
}

/// Maps layout coordinates to pixel positions (y pointing down) and returns
/// them with the pixels-per-bond-length scale. The drawing is centered and
/// fits in 80% of each dimension; bonds are at most 16% of the shorter side.
pub fn pixel_coords(layout: &Layout2D, width: usize, height: usize) -> (Vec<Point>, f64) {
    let side = width.min(height) as f64;
    let (mut lo, mut hi) = ([f64::MAX; 2], [f64::MIN; 2]);
    for p in &layout.coords {
        for k in 0..2 {
            lo[k] = lo[k].min(p[k]);
            hi[k] = hi[k].max(p[k]);
        }
    }
    let center = scale(add(lo, hi), 0.5);
    let mut px_per_unit = 0.16 * side;
    for (k, size) in [width as f64, height as f64].into_iter().enumerate() {
        let extent = hi[k] - lo[k];
        if extent > 1e-9 {
            px_per_unit = px_per_unit.min(0.8 * size / extent);
        }
    }
    let px = layout
        .coords
        .iter()
        .map(|p| {
            [
                width as f64 / 2.0 + px_per_unit * (p[0] - center[0]),
                height as f64 / 2.0 - px_per_unit * (p[1] - center[1]),
            ]
        })
        .collect();
    (px, px_per_unit)
}

/// Draws the molecule: black bonds (parallel strokes for multiple bonds,
/// a dashed inner stroke for aromatic ones), colored disks for heteroatoms.
pub fn rasterize(
    mol: &Molecule,
    layout: &Layout2D,
    width: usize,
    height: usize,
) -> Result<StructImage, DepictError> {
    if layout.coords.len() != mol.atom_count() {
        return Err(DepictError::LayoutMismatch {
            layout: layout.coords.len(),
            atoms: mol.atom_count(),
        });
    }
    if width < 8 || height < 8 {
        return Err(DepictError::BadSize(width, height));
    }
    if mol.is_empty() {
        return Err(DepictError::EmptyMolecule);
    }
    let mut img = StructImage::blank(width, height);
    let side = width.min(height) as f64;
    let line = 2.0 * side / DEFAULT_SIZE as f64;

    let (px, px_per_unit) = pixel_coords(layout, width, height);

    let rings = smallest_rings(mol);
    let offset = (0.12 * px_per_unit).max(1.5 * line);
    for bond in &mol.bonds {
        let (i, j) = bond.endpoints;
        let (a, b) = (px[i], px[j]);
        let n = unit([-(b[1] - a[1]), b[0] - a[0]]);
        let ring = rings
            .iter()
            .filter(|r| r.contains(&i) && r.contains(&j))
            .min_by_key(|r| r.len());
        let inner = |img: &mut StructImage, dash: Option<f64>| {
            let mut side_n = n;
            if let Some(r) = ring {
                let c = centroid(r.iter().map(|&k| px[k]));
                if dot(sub(c, a), n) < 0.0 {
                    side_n = scale(n, -1.0);
                }
            }
            let shrink = scale(sub(b, a), 0.15);
            img.stroke(
                add(add(a, shrink), scale(side_n, offset)),
                sub(add(b, scale(side_n, offset)), shrink),
                line,
                dash,
            );
        };
        match bond.order {
            BondOrder::Single => img.stroke(a, b, line, None),
            BondOrder::Double if ring.is_some() => {
                img.stroke(a, b, line, None);
                inner(&mut img, None);
            }
            BondOrder::Double => {
                img.stroke(add(a, scale(n, offset / 2.0)), add(b, scale(n, offset / 2.0)), line, None);
                img.stroke(sub(a, scale(n, offset / 2.0)), sub(b, scale(n, offset / 2.0)), line, None);
            }
            BondOrder::Triple => {
                img.stroke(a, b, line, None);
                img.stroke(add(a, scale(n, offset)), add(b, scale(n, offset)), line, None);
                img.stroke(sub(a, scale(n, offset)), sub(b, scale(n, offset)), line, None);
            }
            BondOrder::Aromatic => {
                img.stroke(a, b, line, None);
                inner(&mut img, Some(2.0 * line));
            }
        }
    }

    let disk_radius = (0.28 * px_per_unit).max(2.0 * line);
    for (i, atom) in mol.atoms.iter().enumerate() {
        match atom_color(atom.element) {
            Some(rgb) => img.disk(px[i], disk_radius, rgb),
            None if mol.degree(i) == 0 => img.disk(px[i], 1.5 * line, BLACK),
            None => {}
        }
    }
    Ok(img)
}

/// Random rigid jitter: rotation in [-15°, 15°] and translation up to 5% of
/// each dimension, drawn from a ChaCha stream keyed by `seed`.
pub fn augment(img: &StructImage, seed: u64) -> StructImage {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let angle = rng.random_range(-15.0..=15.0f64).to_radians();
    let dx = rng.random_range(-0.05..=0.05) * img.width as f64;
    let dy = rng.random_range(-0.05..=0.05) * img.height as f64;
    transform(img, angle, dx, dy)
}

/// Rotates by `angle` radians about the image center, then translates by
/// `(dx, dy)` pixels. Nearest-neighbor sampling; uncovered pixels are white.
pub fn transform(img: &StructImage, angle: f64, dx: f64, dy: f64) -> StructImage {
    let mut out = StructImage::blank(img.width, img.height);
    let (cx, cy) = (img.width as f64 / 2.0, img.height as f64 / 2.0);
    let (s, c) = angle.sin_cos();
    for y in 0..img.height {
        for x in 0..img.width {
            let px = x as f64 + 0.5 - cx - dx;
            let py = y as f64 + 0.5 - cy - dy;
            let sx = c * px + s * py + cx;
            let sy = -s * px + c * py + cy;
            if sx < 0.0 || sy < 0.0 {
                continue;
            }
            let (ix, iy) = (sx.floor() as usize, sy.floor() as usize);
            if ix < img.width && iy < img.height {
                out.set(x, y, img.get(ix, iy));
            }
        }
    }
    out
}

/// Parses, lays out and rasterizes in one step.
pub fn depict(mol: &Molecule, size: usize) -> Result<StructImage, DepictError> {
    let layout = layout2d(mol)?;
    rasterize(mol, &layout, size, size)
}
