//! Seeded generator of Tox21-shaped data for tests and offline runs.
//!
//! Molecules are substituted aromatic rings, sometimes linked to a second
//! ring. Each assay label follows a fixed structural rule (for example
//! NR-AR is active exactly when a chlorine or bromine is present), then
//! some labels are flipped and some are blanked. The rules are visible both
//! to fingerprints and in the rendered images, so a working model should
//! beat chance on every assay while real data is unavailable.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::assays::{Labels, N_ASSAYS};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SyntheticParams {
    /// Chance a substituent is Cl or Br.
    pub heavy_halogen_rate: f64,
    /// Chance each observed label is flipped.
    pub label_noise: f64,
    /// Chance each label is blanked (NR-AR is never blank).
    pub missing_rate: f64,
}

impl Default for SyntheticParams {
    fn default() -> Self {
        SyntheticParams {
            heavy_halogen_rate: 0.13,
            label_noise: 0.03,
            missing_rate: 0.15,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Sub {
    Cl,
    Br,
    F,
    Methyl,
    Ethyl,
    Hydroxy,
    Methoxy,
    Amine,
    Dimethylamine,
    Carboxy,
    Nitro,
    Nitrile,
    Sulfonamide,
    Hydroxyethyl,
}

impl Sub {
    const ALL: [Sub; 14] = [
        Sub::Cl,
        Sub::Br,
        Sub::F,
        Sub::Methyl,
        Sub::Ethyl,
        Sub::Hydroxy,
        Sub::Methoxy,
        Sub::Amine,
        Sub::Dimethylamine,
        Sub::Carboxy,
        Sub::Nitro,
        Sub::Nitrile,
        Sub::Sulfonamide,
        Sub::Hydroxyethyl,
    ];

    fn smiles(self) -> &'static str {
        match self {
            Sub::Cl => "Cl",
            Sub::Br => "Br",
            Sub::F => "F",
            Sub::Methyl => "C",
            Sub::Ethyl => "CC",
            Sub::Hydroxy => "O",
            Sub::Methoxy => "OC",
            Sub::Amine => "N",
            Sub::Dimethylamine => "N(C)C",
            Sub::Carboxy => "C(=O)O",
            Sub::Nitro => "[N+](=O)[O-]",
            Sub::Nitrile => "C#N",
            Sub::Sulfonamide => "S(=O)(=O)N",
            Sub::Hydroxyethyl => "CCO",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Ring {
    Benzene,
    Pyridine,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Linker {
    Direct,
    Methylene,
    Amide,
    Ether,
}

impl Linker {
    fn smiles(self) -> &'static str {
        match self {
            Linker::Direct => "",
            Linker::Methylene => "C",
            Linker::Amide => "C(=O)N",
            Linker::Ether => "O",
        }
    }
}

/// Structure chosen before writing SMILES; labels derive from it.
#[derive(Debug, Clone, PartialEq)]
struct Plan {
    ring: Ring,
    subs: Vec<(usize, Sub)>,
    second: Option<(Linker, Ring, Vec<(usize, Sub)>)>,
}

fn ring_smiles(ring: Ring, digit: u8, attach: Option<&str>, subs: &[(usize, Sub)]) -> String {
    // Position 0 carries the ring-opening digit; for pyridine the nitrogen
    // sits at position 3, which never takes a substituent.
    let mut s = String::new();
    for pos in 0..6 {
        s.push_str(if ring == Ring::Pyridine && pos == 3 { "n" } else { "c" });
        if pos == 0 || pos == 5 {
            s.push(char::from(b'0' + digit));
        }
        if let (0, Some(a)) = (pos, attach) {
            s.push_str(&format!("({a})"));
        }
        if let Some((_, sub)) = subs.iter().find(|(p, _)| *p == pos) {
            s.push_str(&format!("({})", sub.smiles()));
        }
    }
    s
}

impl Plan {
    fn smiles(&self) -> String {
        let attach = self.second.as_ref().map(|(linker, ring, subs)| {
            format!("{}{}", linker.smiles(), ring_smiles(*ring, 2, None, subs))
        });
        ring_smiles(self.ring, 1, attach.as_deref(), &self.subs)
    }

    fn all_subs(&self) -> impl Iterator<Item = Sub> + '_ {
        let second = self.second.iter().flat_map(|(_, _, s)| s.iter().map(|&(_, x)| x));
        self.subs.iter().map(|&(_, x)| x).chain(second)
    }

    fn has(&self, sub: Sub) -> bool {
        self.all_subs().any(|s| s == sub)
    }

    fn rings(&self) -> Vec<Ring> {
        let mut r = vec![self.ring];
        if let Some((_, ring, _)) = &self.second {
            r.push(*ring);
        }
        r
    }

    /// Noise-free activity per assay.
    fn activity(&self) -> [bool; N_ASSAYS] {
        let heavy_halogen = self.has(Sub::Cl) || self.has(Sub::Br);
        let two_rings = self.second.is_some();
        let phenol = self.has(Sub::Hydroxy);
        let n_subs = self.all_subs().count();
        [
            heavy_halogen,
            heavy_halogen && two_rings,
            two_rings && self.second.as_ref().is_some_and(|s| s.0 == Linker::Direct),
            phenol,
            phenol && (heavy_halogen || self.has(Sub::F)),
            self.has(Sub::Carboxy),
            self.rings().contains(&Ring::Pyridine),
            self.has(Sub::Nitro),
            self.has(Sub::Nitrile),
            self.has(Sub::Sulfonamide),
            n_subs >= 4,
            self.has(Sub::Dimethylamine) || self.second.as_ref().is_some_and(|s| s.0 == Linker::Amide),
        ]
    }
}

fn pick_sub<R: Rng>(rng: &mut R, p: &SyntheticParams) -> Sub {
    if rng.random_bool(p.heavy_halogen_rate) {
        if rng.random_bool(0.5) {
            Sub::Cl
        } else {
            Sub::Br
        }
    } else {
        // Any of the other twelve.
        Sub::ALL[2 + rng.random_range(0..12)]
    }
}

fn pick_subs<R: Rng>(rng: &mut R, p: &SyntheticParams, ring: Ring, taken: &[usize], count: usize) -> Vec<(usize, Sub)> {
    let mut free: Vec<usize> = (0..6)
        .filter(|pos| !taken.contains(pos) && !(ring == Ring::Pyridine && *pos == 3))
        .collect();
    let mut subs = Vec::new();
    for _ in 0..count.min(free.len()) {
        let pos = free.remove(rng.random_range(0..free.len()));
        subs.push((pos, pick_sub(rng, p)));
    }
    subs.sort_by_key(|s| s.0);
    subs
}

fn pick_ring<R: Rng>(rng: &mut R) -> Ring {
    if rng.random_bool(0.2) {
        Ring::Pyridine
    } else {
        Ring::Benzene
    }
}

fn plan<R: Rng>(rng: &mut R, p: &SyntheticParams) -> Plan {
    let ring = pick_ring(rng);
    let second = rng.random_bool(0.4).then(|| {
        let linker = [Linker::Direct, Linker::Methylene, Linker::Amide, Linker::Ether][rng.random_range(0..4)];
        let ring2 = pick_ring(rng);
        let n = rng.random_range(0..3);
        (linker, ring2, pick_subs(rng, p, ring2, &[0], n))
    });
    let taken: &[usize] = if second.is_some() { &[0] } else { &[] };
    let n = rng.random_range(1..4);
    let subs = pick_subs(rng, p, ring, taken, n);
    Plan { ring, subs, second }
}

/// `n` records as (SMILES, labels), deterministic in `seed`.
pub fn generate(n: usize, seed: u64, params: &SyntheticParams) -> Vec<(String, Labels)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            let plan = plan(&mut rng, params);
            let truth = plan.activity();
            let mut labels: Labels = [None; N_ASSAYS];
            for (k, &active) in truth.iter().enumerate() {
                let flip = rng.random_bool(params.label_noise);
                let blank = k != 0 && rng.random_bool(params.missing_rate);
                if !blank {
                    labels[k] = Some(active != flip);
                }
            }
            (plan.smiles(), labels)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use toxpipe_core::parse;

    #[test]
    fn every_generated_smiles_parses() {
        for (s, labels) in generate(500, 1, &SyntheticParams::default()) {
            parse(&s).unwrap_or_else(|e| panic!("{s}: {e:?}"));
            assert!(labels[0].is_some());
        }
    }

    #[test]
    fn rules_hold_without_noise() {
        let p = SyntheticParams {
            label_noise: 0.0,
            missing_rate: 0.0,
            ..SyntheticParams::default()
        };
        for (s, labels) in generate(300, 2, &p) {
            let m = parse(&s).unwrap();
            let halogen = m.atoms.iter().any(|a| a.element == 17 || a.element == 35);
            assert_eq!(labels[0], Some(halogen), "{s}");
            let pyridine = m.atoms.iter().any(|a| a.element == 7 && a.aromatic);
            assert_eq!(labels[6], Some(pyridine), "{s}");
        }
    }

    #[test]
    fn prevalence_is_moderate() {
        let data = generate(2000, 3, &SyntheticParams::default());
        let active = data.iter().filter(|(_, l)| l[0] == Some(true)).count();
        let rate = active as f64 / data.len() as f64;
        assert!((0.2..0.45).contains(&rate), "{rate}");
    }

    #[test]
    fn deterministic() {
        let p = SyntheticParams::default();
        assert_eq!(generate(50, 9, &p), generate(50, 9, &p));
        assert_ne!(generate(50, 9, &p), generate(50, 10, &p));
    }
}
