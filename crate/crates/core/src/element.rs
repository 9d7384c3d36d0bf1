//! Element symbols and the valence table used for implicit hydrogens.

/// Element symbols indexed by atomic number minus one, hydrogen through radon.
pub const SYMBOLS: [&str; 86] = [
    "H", "He", "Li", "Be", "B", "C", "N", "O", "F", "Ne", "Na", "Mg", "Al", "Si", "P", "S", "Cl",
    "Ar", "K", "Ca", "Sc", "Ti", "V", "Cr", "Mn", "Fe", "Co", "Ni", "Cu", "Zn", "Ga", "Ge", "As",
    "Se", "Br", "Kr", "Rb", "Sr", "Y", "Zr", "Nb", "Mo", "Tc", "Ru", "Rh", "Pd", "Ag", "Cd", "In",
    "Sn", "Sb", "Te", "I", "Xe", "Cs", "Ba", "La", "Ce", "Pr", "Nd", "Pm", "Sm", "Eu", "Gd", "Tb",
    "Dy", "Ho", "Er", "Tm", "Yb", "Lu", "Hf", "Ta", "W", "Re", "Os", "Ir", "Pt", "Au", "Hg", "Tl",
    "Pb", "Bi", "Po", "At", "Rn",
];

pub const HYDROGEN: u8 = 1;
pub const BORON: u8 = 5;
pub const CARBON: u8 = 6;
pub const NITROGEN: u8 = 7;
pub const OXYGEN: u8 = 8;
pub const FLUORINE: u8 = 9;
pub const PHOSPHORUS: u8 = 15;
pub const SULFUR: u8 = 16;
pub const CHLORINE: u8 = 17;
pub const ARSENIC: u8 = 33;
pub const SELENIUM: u8 = 34;
pub const BROMINE: u8 = 35;
pub const IODINE: u8 = 53;

/// Atomic number for an element symbol, case-sensitive.
pub fn atomic_number(symbol: &str) -> Option<u8> {
    SYMBOLS
        .iter()
        .position(|s| *s == symbol)
        .map(|i| (i + 1) as u8)
}

pub fn symbol(atomic_number: u8) -> &'static str {
    match atomic_number {
        1..=86 => SYMBOLS[atomic_number as usize - 1],
        _ => "?",
    }
}

/// Standard valences of the organic subset, lowest first. Empty for elements
/// outside it.
pub fn allowed_valences(atomic_number: u8) -> &'static [u8] {
    match atomic_number {
        BORON => &[3],
        CARBON => &[4],
        NITROGEN => &[3, 5],
        OXYGEN => &[2],
        PHOSPHORUS => &[3, 5],
        SULFUR => &[2, 4, 6],
        FLUORINE | CHLORINE | BROMINE | IODINE => &[1],
        _ => &[],
    }
}

pub fn is_organic_subset(atomic_number: u8) -> bool {
    !allowed_valences(atomic_number).is_empty()
}

/// Elements that may carry the aromatic flag.
pub fn can_be_aromatic(atomic_number: u8) -> bool {
    matches!(
        atomic_number,
        BORON | CARBON | NITROGEN | OXYGEN | PHOSPHORUS | SULFUR | SELENIUM | ARSENIC
    )
}

pub fn is_halogen(atomic_number: u8) -> bool {
    matches!(atomic_number, FLUORINE | CHLORINE | BROMINE | IODINE)
}
