//! SMILES tokenizer and parser.
//!
//! Supports the organic subset, bracket atoms for hydrogen through radon,
//! branches, ring closures (including `%nn`), dot-separated fragments and
//! explicit bond symbols. Stereo markers are accepted and discarded.

use std::collections::BTreeMap;

use thiserror::Error;

use crate::element;
use crate::molecule::{Atom, Bond, BondOrder, Molecule};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SmilesError {
    #[error("empty input")]
    EmptyInput,
    #[error("unknown character at position {0}")]
    UnknownCharacter(usize),
    #[error("unterminated bracket atom starting at position {0}")]
    UnterminatedBracket(usize),
    #[error("unknown element in bracket atom at position {0}")]
    UnknownElement(usize),
    #[error("malformed bracket atom at position {0}")]
    MalformedBracket(usize),
    #[error("ring closure {0} never closed")]
    UnclosedRing(u16),
    #[error("unmatched branch parenthesis")]
    UnmatchedBranch,
    #[error("unexpected token at position {0}")]
    UnexpectedToken(usize),
    #[error("conflicting bond symbols on ring closure at position {0}")]
    RingBondConflict(usize),
    #[error("duplicate bond or self-loop at position {0}")]
    DuplicateBond(usize),
    #[error("valence exceeded on atom {0}")]
    ValenceViolation(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TokenKind {
    AtomOrganic,
    AtomBracket,
    Bond,
    RingClosureDigit,
    BranchOpen,
    BranchClose,
    Dot,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Token<'a> {
    pub kind: TokenKind,
    pub text: &'a str,
    pub position: usize,
}

const ORGANIC_TWO: [&str; 2] = ["Cl", "Br"];
const ORGANIC_ONE: &[u8] = b"BCNOPSFIbcnops";
const BOND_CHARS: &[u8] = b"-=#:/\\";

/// Splits SMILES text into tokens. Token payloads concatenate back to the
/// input exactly.
pub fn tokenize(smiles: &str) -> Result<Vec<Token<'_>>, SmilesError> {
    if smiles.is_empty() {
        return Err(SmilesError::EmptyInput);
    }
    let bytes = smiles.as_bytes();
    let mut tokens = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i];
        if !c.is_ascii() {
            return Err(SmilesError::UnknownCharacter(i));
        }
        let (kind, len) = match c {
            b'[' => {
                let close = bytes[i..]
                    .iter()
                    .position(|&b| b == b']')
                    .ok_or(SmilesError::UnterminatedBracket(i))?;
                if let Some(bad) = bytes[i + 1..i + close]
                    .iter()
                    .position(|b| !is_bracket_char(*b))
                {
                    return Err(SmilesError::UnknownCharacter(i + 1 + bad));
                }
                (TokenKind::AtomBracket, close + 1)
            }
            b'(' => (TokenKind::BranchOpen, 1),
            b')' => (TokenKind::BranchClose, 1),
            b'.' => (TokenKind::Dot, 1),
            b'0'..=b'9' => (TokenKind::RingClosureDigit, 1),
            b'%' => {
                if bytes.len() >= i + 3 && bytes[i + 1].is_ascii_digit() && bytes[i + 2].is_ascii_digit() {
                    (TokenKind::RingClosureDigit, 3)
                } else {
                    return Err(SmilesError::UnknownCharacter(i));
                }
            }
            _ if BOND_CHARS.contains(&c) => (TokenKind::Bond, 1),
            _ if i + 1 < bytes.len() && ORGANIC_TWO.iter().any(|t| t.as_bytes() == &bytes[i..i + 2]) => {
                (TokenKind::AtomOrganic, 2)
            }
            _ if ORGANIC_ONE.contains(&c) => (TokenKind::AtomOrganic, 1),
            _ => return Err(SmilesError::UnknownCharacter(i)),
        };
        tokens.push(Token {
            kind,
            text: &smiles[i..i + len],
            position: i,
        });
        i += len;
    }
    Ok(tokens)
}

fn is_bracket_char(b: u8) -> bool {
    b.is_ascii_alphanumeric() || matches!(b, b'@' | b'+' | b'-' | b':')
}

/// Default implicit hydrogen count for an organic-subset atom.
///
/// `bond_order_sum` counts single and aromatic bonds as 1, double as 2 and
/// triple as 3. An aromatic atom gets one extra unit of bond order so that
/// `c` in benzene carries one hydrogen and `n` in pyridine none. The target
/// valence is the lowest standard valence not below the plain bond sum.
/// Atoms outside the organic subset get zero.
pub fn implicit_hydrogen_count(atom: &Atom, bond_order_sum: u8) -> u8 {
    let valences = element::allowed_valences(atom.element);
    let Some(&target) = valences.iter().find(|&&v| v >= bond_order_sum) else {
        return 0;
    };
    let accounted = bond_order_sum + u8::from(atom.aromatic);
    target.saturating_sub(accounted)
}

#[derive(Debug, Clone, Copy)]
enum BondSym {
    Order(BondOrder),
    /// `/` or `\`; treated as single.
    Directional,
}

impl BondSym {
    fn resolve(sym: Option<BondSym>, a: &Atom, b: &Atom) -> BondOrder {
        match sym {
            Some(BondSym::Order(o)) => o,
            Some(BondSym::Directional) => BondOrder::Single,
            None if a.aromatic && b.aromatic => BondOrder::Aromatic,
            None => BondOrder::Single,
        }
    }

    fn same(a: Option<BondSym>, b: Option<BondSym>) -> bool {
        match (a, b) {
            (None, _) | (_, None) => true,
            (Some(BondSym::Order(x)), Some(BondSym::Order(y))) => x == y,
            (Some(BondSym::Directional), Some(BondSym::Directional)) => true,
            (Some(BondSym::Directional), Some(BondSym::Order(o)))
            | (Some(BondSym::Order(o)), Some(BondSym::Directional)) => o == BondOrder::Single,
        }
    }
}

struct OpenRing {
    atom: usize,
    bond: Option<BondSym>,
}

/// Parses SMILES into a molecular graph. All fragments are kept; see
/// [`Molecule::desalt`].
pub fn parse(smiles: &str) -> Result<Molecule, SmilesError> {
    let tokens = tokenize(smiles)?;
    let mut atoms: Vec<Atom> = Vec::new();
    let mut bonds: Vec<Bond> = Vec::new();
    let mut prev: Option<usize> = None;
    let mut branches: Vec<Option<usize>> = Vec::new();
    let mut pending: Option<(BondSym, usize)> = None;
    let mut open_rings: BTreeMap<u16, OpenRing> = BTreeMap::new();
    // Whether the last token allows a following branch/ring digit.
    let mut after_atom = false;

    let add_bond = |bonds: &mut Vec<Bond>, a: usize, b: usize, order: BondOrder, pos: usize| {
        if a == b || bonds.iter().any(|x| x.contains(a) && x.contains(b)) {
            return Err(SmilesError::DuplicateBond(pos));
        }
        bonds.push(Bond::new(a, b, order));
        Ok(())
    };

    for tok in &tokens {
        match tok.kind {
            TokenKind::AtomOrganic | TokenKind::AtomBracket => {
                let mut atom = if tok.kind == TokenKind::AtomOrganic {
                    organic_atom(tok.text)
                } else {
                    bracket_atom(tok.text, tok.position)?
                };
                let idx = atoms.len();
                atom.index = idx;
                if let Some(p) = prev {
                    let sym = pending.take().map(|(s, _)| s);
                    let order = BondSym::resolve(sym, &atoms[p], &atom);
                    atoms.push(atom);
                    add_bond(&mut bonds, p, idx, order, tok.position)?;
                } else {
                    if let Some((_, pos)) = pending {
                        return Err(SmilesError::UnexpectedToken(pos));
                    }
                    atoms.push(atom);
                }
                prev = Some(idx);
                after_atom = true;
            }
            TokenKind::Bond => {
                if prev.is_none() || pending.is_some() {
                    return Err(SmilesError::UnexpectedToken(tok.position));
                }
                let sym = match tok.text {
                    "-" => BondSym::Order(BondOrder::Single),
                    "=" => BondSym::Order(BondOrder::Double),
                    "#" => BondSym::Order(BondOrder::Triple),
                    ":" => BondSym::Order(BondOrder::Aromatic),
                    _ => BondSym::Directional,
                };
                pending = Some((sym, tok.position));
                after_atom = false;
            }
            TokenKind::RingClosureDigit => {
                let Some(atom) = prev else {
                    return Err(SmilesError::UnexpectedToken(tok.position));
                };
                let label: u16 = tok.text.trim_start_matches('%').parse().expect("digits");
                let sym = pending.take().map(|(s, _)| s);
                if let Some(open) = open_rings.remove(&label) {
                    if !BondSym::same(open.bond, sym) {
                        return Err(SmilesError::RingBondConflict(tok.position));
                    }
                    let order = BondSym::resolve(sym.or(open.bond), &atoms[open.atom], &atoms[atom]);
                    add_bond(&mut bonds, open.atom, atom, order, tok.position)?;
                } else {
                    open_rings.insert(label, OpenRing { atom, bond: sym });
                }
                after_atom = true;
            }
            TokenKind::BranchOpen => {
                if prev.is_none() || !after_atom || pending.is_some() {
                    return Err(SmilesError::UnexpectedToken(tok.position));
                }
                branches.push(prev);
                after_atom = false;
            }
            TokenKind::BranchClose => {
                if pending.is_some() || !after_atom {
                    return Err(SmilesError::UnexpectedToken(tok.position));
                }
                prev = branches.pop().ok_or(SmilesError::UnmatchedBranch)?;
                after_atom = true;
            }
            TokenKind::Dot => {
                if !branches.is_empty() || pending.is_some() || prev.is_none() || !after_atom {
                    return Err(SmilesError::UnexpectedToken(tok.position));
                }
                prev = None;
                after_atom = false;
            }
        }
    }
    if let Some((_, pos)) = pending {
        return Err(SmilesError::UnexpectedToken(pos));
    }
    if !branches.is_empty() {
        return Err(SmilesError::UnmatchedBranch);
    }
    if let Some((&label, _)) = open_rings.iter().next() {
        return Err(SmilesError::UnclosedRing(label));
    }

    let mut bond_sum = vec![0u32; atoms.len()];
    for bond in &bonds {
        let c = u32::from(bond.order.valence_contribution());
        bond_sum[bond.endpoints.0] += c;
        bond_sum[bond.endpoints.1] += c;
    }
    let mut implicit_h = Vec::with_capacity(atoms.len());
    for (i, atom) in atoms.iter().enumerate() {
        let sum = bond_sum[i];
        let valences = element::allowed_valences(atom.element);
        let h = match atom.explicit_h {
            None => {
                let max = u32::from(*valences.last().expect("organic subset"));
                if sum > max {
                    return Err(SmilesError::ValenceViolation(i));
                }
                implicit_hydrogen_count(atom, sum as u8)
            }
            Some(explicit) => {
                if let Some(&max) = valences.last() {
                    let limit = u32::from(max) + u32::from(atom.formal_charge.unsigned_abs());
                    if sum + u32::from(explicit) > limit {
                        return Err(SmilesError::ValenceViolation(i));
                    }
                }
                0
            }
        };
        implicit_h.push(h);
    }
    Ok(Molecule::assemble(atoms, bonds, implicit_h))
}

fn organic_atom(text: &str) -> Atom {
    let aromatic = text.as_bytes()[0].is_ascii_lowercase();
    let symbol = if aromatic {
        text.to_ascii_uppercase()
    } else {
        text.to_string()
    };
    Atom {
        element: element::atomic_number(&symbol).expect("organic subset symbol"),
        aromatic,
        formal_charge: 0,
        explicit_h: None,
        isotope: None,
        index: 0,
    }
}

/// Parses `[isotope? symbol chiral? hcount? charge? class?]`.
fn bracket_atom(text: &str, position: usize) -> Result<Atom, SmilesError> {
    let inner = &text.as_bytes()[1..text.len() - 1];
    let malformed = SmilesError::MalformedBracket(position);
    let mut i = 0;

    let digits = |i: &mut usize| -> Option<u32> {
        let start = *i;
        while *i < inner.len() && inner[*i].is_ascii_digit() && *i - start < 4 {
            *i += 1;
        }
        if *i == start {
            None
        } else {
            std::str::from_utf8(&inner[start..*i]).ok()?.parse().ok()
        }
    };

    let isotope = digits(&mut i).map(|v| v as u16);

    // Element symbol: aromatic two-letter forms, then the periodic table
    // (two letters preferred), then aromatic single letters.
    let rest = std::str::from_utf8(&inner[i..]).map_err(|_| malformed.clone())?;
    let (element, aromatic, len) = if rest.starts_with("se") {
        (element::SELENIUM, true, 2)
    } else if rest.starts_with("as") {
        (element::ARSENIC, true, 2)
    } else if let Some(z) = rest.get(..2).and_then(element::atomic_number) {
        (z, false, 2)
    } else if let Some(z) = rest.get(..1).and_then(element::atomic_number) {
        (z, false, 1)
    } else if let Some(c) = rest.bytes().next().filter(|c| b"bcnops".contains(c)) {
        let upper = (c.to_ascii_uppercase() as char).to_string();
        (element::atomic_number(&upper).expect("aromatic subset"), true, 1)
    } else {
        return Err(SmilesError::UnknownElement(position));
    };
    i += len;

    // Chirality is discarded.
    if i < inner.len() && inner[i] == b'@' {
        i += 1;
        if i < inner.len() && inner[i] == b'@' {
            i += 1;
        } else if i + 1 < inner.len() && inner[i..i + 2].iter().all(u8::is_ascii_uppercase) {
            i += 2;
            if digits(&mut i).is_none() {
                return Err(malformed);
            }
        }
    }

    let mut explicit_h = 0u8;
    if i < inner.len() && inner[i] == b'H' {
        i += 1;
        explicit_h = match inner.get(i) {
            Some(d) if d.is_ascii_digit() => {
                i += 1;
                d - b'0'
            }
            _ => 1,
        };
    }

    let mut formal_charge: i8 = 0;
    if i < inner.len() && (inner[i] == b'+' || inner[i] == b'-') {
        let sign = inner[i];
        let unit: i8 = if sign == b'+' { 1 } else { -1 };
        i += 1;
        if i < inner.len() && inner[i] == sign {
            let mut count = 1;
            while i < inner.len() && inner[i] == sign {
                count += 1;
                i += 1;
            }
            if count > 15 {
                return Err(malformed);
            }
            formal_charge = unit * count;
        } else if let Some(mag) = digits(&mut i) {
            if mag > 15 {
                return Err(malformed);
            }
            formal_charge = unit * mag as i8;
        } else {
            formal_charge = unit;
        }
    }

    if i < inner.len() && inner[i] == b':' {
        i += 1;
        if digits(&mut i).is_none() {
            return Err(malformed);
        }
    }
    if i != inner.len() {
        return Err(malformed);
    }
    if aromatic && !element::can_be_aromatic(element) {
        return Err(SmilesError::UnknownElement(position));
    }
    Ok(Atom {
        element,
        aromatic,
        formal_charge,
        explicit_h: Some(explicit_h),
        isotope,
        index: 0,
    })
}

/// Writes SMILES for a single-fragment molecule by depth-first traversal
/// from `root`, visiting neighbors in the order given by `rank` (lower
/// first). Different roots and ranks give different but equivalent strings.
pub fn write_smiles(mol: &Molecule, root: usize, rank: &[usize]) -> String {
    let n = mol.atom_count();
    let mut visited = vec![false; n];
    let mut order: Vec<usize> = Vec::new();
    let mut tree_parent = vec![usize::MAX; n];
    // First pass: DFS to fix tree edges and collect ring-closure edges.
    let mut stack = vec![(root, usize::MAX)];
    let mut closures: Vec<(usize, usize)> = Vec::new();
    while let Some((a, parent)) = stack.pop() {
        if visited[a] {
            continue;
        }
        visited[a] = true;
        tree_parent[a] = parent;
        order.push(a);
        let mut nbrs: Vec<usize> = mol.neighbors(a).iter().map(|&(b, _)| b).collect();
        nbrs.sort_by_key(|&b| rank[b]);
        for &b in nbrs.iter().rev() {
            if !visited[b] {
                stack.push((b, a));
            }
        }
    }
    let position: Vec<usize> = {
        let mut p = vec![usize::MAX; n];
        for (i, &a) in order.iter().enumerate() {
            p[a] = i;
        }
        p
    };
    for bond in &mol.bonds {
        let (a, b) = bond.endpoints;
        if tree_parent[a] != b && tree_parent[b] != a {
            let (first, second) = if position[a] < position[b] { (a, b) } else { (b, a) };
            closures.push((first, second));
        }
    }
    closures.sort_by_key(|&(a, b)| (position[a], position[b]));

    let mut children: Vec<Vec<usize>> = vec![Vec::new(); n];
    for &a in &order {
        if tree_parent[a] != usize::MAX {
            children[tree_parent[a]].push(a);
        }
    }

    let mut out = String::new();
    let mut labels_in_use: Vec<bool> = vec![false; 100];
    let mut label_of: BTreeMap<(usize, usize), usize> = BTreeMap::new();
    write_atom_rec(
        mol,
        root,
        usize::MAX,
        &children,
        &closures,
        &mut labels_in_use,
        &mut label_of,
        &mut out,
    );
    out
}

#[allow(clippy::too_many_arguments)]
fn write_atom_rec(
    mol: &Molecule,
    start: usize,
    start_parent: usize,
    children: &[Vec<usize>],
    closures: &[(usize, usize)],
    labels_in_use: &mut [bool],
    label_of: &mut BTreeMap<(usize, usize), usize>,
    out: &mut String,
) {
    let mut a = start;
    let mut parent = start_parent;
    loop {
        if parent != usize::MAX {
            let bond = mol.bond_between(parent, a).expect("tree edge");
            out.push_str(bond_text(mol, bond.order, parent, a));
        }
        out.push_str(&atom_text(mol, a));
        for &(x, y) in closures {
            if x == a || y == a {
                let key = (x, y);
                if let Some(label) = label_of.remove(&key) {
                    labels_in_use[label] = false;
                    out.push_str(&ring_label(label));
                } else {
                    let label = (1..100).find(|&l| !labels_in_use[l]).expect("ring labels");
                    labels_in_use[label] = true;
                    label_of.insert(key, label);
                    let bond = mol.bond_between(x, y).expect("closure edge");
                    out.push_str(bond_text(mol, bond.order, x, y));
                    out.push_str(&ring_label(label));
                }
            }
        }
        let kids = &children[a];
        match kids.len() {
            0 => break,
            _ => {
                for &child in &kids[..kids.len() - 1] {
                    out.push('(');
                    write_atom_rec(mol, child, a, children, closures, labels_in_use, label_of, out);
                    out.push(')');
                }
                parent = a;
                a = kids[kids.len() - 1];
            }
        }
    }
}

fn ring_label(label: usize) -> String {
    if label < 10 {
        label.to_string()
    } else {
        format!("%{label:02}")
    }
}

fn bond_text(mol: &Molecule, order: BondOrder, a: usize, b: usize) -> &'static str {
    let both_aromatic = mol.atoms[a].aromatic && mol.atoms[b].aromatic;
    match order {
        BondOrder::Single if both_aromatic => "-",
        BondOrder::Single => "",
        BondOrder::Aromatic if both_aromatic => "",
        BondOrder::Aromatic => ":",
        BondOrder::Double => "=",
        BondOrder::Triple => "#",
    }
}

fn atom_text(mol: &Molecule, a: usize) -> String {
    let atom = &mol.atoms[a];
    let sym = if atom.aromatic {
        atom.symbol().to_ascii_lowercase()
    } else {
        atom.symbol().to_string()
    };
    let Some(h) = atom.explicit_h else {
        return sym;
    };
    let mut s = String::from("[");
    if let Some(iso) = atom.isotope {
        s.push_str(&iso.to_string());
    }
    s.push_str(&sym);
    match h {
        0 => {}
        1 => s.push('H'),
        _ => s.push_str(&format!("H{h}")),
    }
    match atom.formal_charge {
        0 => {}
        1 => s.push('+'),
        -1 => s.push('-'),
        c if c > 0 => s.push_str(&format!("+{c}")),
        c => s.push_str(&format!("-{}", -c)),
    }
    s.push(']');
    s
}
