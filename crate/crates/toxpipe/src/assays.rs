/// The twelve Tox21 assays, in the fixed panel order used for every label
/// vector, model output and report.
pub const ASSAYS: [&str; 12] = [
    "NR-AR",
    "NR-AR-LBD",
    "NR-AhR",
    "NR-ER",
    "NR-ER-LBD",
    "NR-PPAR-gamma",
    "NR-Aromatase",
    "SR-ARE",
    "SR-ATAD5",
    "SR-HSE",
    "SR-MMP",
    "SR-p53",
];

pub const N_ASSAYS: usize = ASSAYS.len();

/// Tri-state labels for the whole panel.
pub type Labels = [Option<bool>; N_ASSAYS];

pub fn assay_index(name: &str) -> Option<usize> {
    ASSAYS.iter().position(|a| *a == name)
}
