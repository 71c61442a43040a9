//! The 24 fine-grained event classes, their 7 coarse parents, and the output
//! ordering shared by the graph, the manifest, and the correlation report.

use thiserror::Error;

pub const N_FINE: usize = 24;
pub const N_COARSE: usize = 7;
/// Fine + coarse + rating outputs.
pub const N_OUTPUTS: usize = N_FINE + N_COARSE + 1;

/// Manifest column names of the fine classes, in label-vector order.
pub const FINE_NAMES: [&str; N_FINE] = [
    "aircraft",
    "bus",
    "car",
    "general_traffic",
    "motorcycle",
    "rail",
    "screeching_brakes",
    "bells",
    "music",
    "bird_tweet",
    "dog_bark",
    "children",
    "laughter",
    "speech",
    "shouting",
    "footsteps",
    "siren",
    "horn",
    "rustling_leaves",
    "water",
    "construction",
    "non_identifiable",
    "ventilation",
    "other",
];

pub const COARSE_NAMES: [&str; N_COARSE] = [
    "vehicle",
    "music",
    "animals",
    "human_sounds",
    "alarm",
    "natural_sounds",
    "other",
];

/// Parent coarse class of each fine class.
pub const PARENT: [usize; N_FINE] = [
    0, 0, 0, 0, 0, 0, 0, // vehicle
    1, 1, // music
    2, 2, // animals
    3, 3, 3, 3, 3, // human sounds
    4, 4, // alarm
    5, 5, // natural sounds
    6, 6, 6, 6, // other
];

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum TaxonomyError {
    #[error("fine class index {0} out of range 0..{N_FINE}")]
    FineIndex(usize),
    #[error("unknown fine class name {0:?}")]
    FineName(String),
}

/// Coarse parent of fine class `fine`.
pub fn group_fine_to_coarse(fine: usize) -> Result<usize, TaxonomyError> {
    PARENT
        .get(fine)
        .copied()
        .ok_or(TaxonomyError::FineIndex(fine))
}

pub fn fine_index(name: &str) -> Result<usize, TaxonomyError> {
    FINE_NAMES
        .iter()
        .position(|&n| n == name)
        .ok_or_else(|| TaxonomyError::FineName(name.to_string()))
}

/// Fine classes grouped under coarse class `coarse`, ascending.
pub fn children(coarse: usize) -> impl Iterator<Item = usize> {
    (0..N_FINE).filter(move |&f| PARENT[f] == coarse)
}

/// Column labels of the 32 model outputs: fine, coarse, then rating.
pub fn output_labels() -> Vec<String> {
    FINE_NAMES
        .iter()
        .map(|n| format!("fae.{n}"))
        .chain(COARSE_NAMES.iter().map(|n| format!("cae.{n}")))
        .chain(std::iter::once("ar".to_string()))
        .collect()
}
