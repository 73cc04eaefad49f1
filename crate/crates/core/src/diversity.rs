//! Pairwise population similarity on route genes or trash bits, and its
//! normalization into a comparable [0, 1] diversity measure.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::evolution::Individual;

/// Which gene block the similarity penalty reads.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum DiversityMode {
    /// No similarity penalty; trash bits are absent.
    #[default]
    None,
    /// Count matching route genes position by position.
    DomainDistance,
    /// Count matching trash bits; the bits have no effect on waycost.
    Genealogical,
}

impl DiversityMode {
    pub fn label(self) -> &'static str {
        match self {
            DiversityMode::None => "none",
            DiversityMode::DomainDistance => "dom",
            DiversityMode::Genealogical => "gen",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum DiversityError {
    #[error("similarity is undefined when the diversity mode is none")]
    ModeIsNone,
    #[error("similarity needs at least two individuals, population has {0}")]
    PopulationTooSmall(usize),
    #[error("genealogical similarity needs trash bits, individuals have none")]
    NoTrashBits,
}

/// Raw route-gene similarity of `population[member]` against the rest of the
/// population: positionwise matches summed over all other members. The
/// member's self-comparison (always `n` matches) is subtracted, so a
/// population of clones scores `n * (len - 1)`.
pub fn similarity_dom(population: &[Individual], member: usize) -> u64 {
    let subject = &population[member];
    let n = subject.route.len();
    let mut matches = 0u64;
    for other in population {
        debug_assert_eq!(other.route.len(), n, "route lengths must agree");
        matches += subject
            .route
            .iter()
            .zip(&other.route)
            .filter(|(a, b)| a == b)
            .count() as u64;
    }
    matches - n as u64
}

/// Raw trash-bit similarity, same shape as [`similarity_dom`] but over the
/// neutral trash block.
pub fn similarity_gen(population: &[Individual], member: usize) -> u64 {
    let subject = &population[member];
    let t = subject.trash.len();
    let mut matches = 0u64;
    for other in population {
        debug_assert_eq!(other.trash.len(), t, "trash lengths must agree");
        matches += subject
            .trash
            .iter()
            .zip(&other.trash)
            .filter(|(a, b)| a == b)
            .count() as u64;
    }
    matches - t as u64
}

/// Raw similarity scaled into [0, 1] by its maximum attainable value,
/// `k * (len - 1)` where `k` is the compared gene count. 1 means the member
/// is a clone of every other member on the compared block.
pub fn normalized_similarity(
    population: &[Individual],
    member: usize,
    mode: DiversityMode,
) -> Result<f64, DiversityError> {
    if population.len() < 2 {
        return Err(DiversityError::PopulationTooSmall(population.len()));
    }
    let (raw, k) = match mode {
        DiversityMode::None => return Err(DiversityError::ModeIsNone),
        DiversityMode::DomainDistance => (
            similarity_dom(population, member),
            population[member].route.len(),
        ),
        DiversityMode::Genealogical => {
            if population[member].trash.is_empty() {
                return Err(DiversityError::NoTrashBits);
            }
            (
                similarity_gen(population, member),
                population[member].trash.len(),
            )
        }
    };
    Ok(raw as f64 / (k * (population.len() - 1)) as f64)
}

/// `1 - normalized_similarity`; 0 for a clone, 1 for a member sharing no
/// gene with anyone. A singleton population is maximally diverse by
/// convention.
pub fn diversity(
    population: &[Individual],
    member: usize,
    mode: DiversityMode,
) -> Result<f64, DiversityError> {
    if population.len() == 1 {
        return Ok(1.0);
    }
    Ok(1.0 - normalized_similarity(population, member, mode)?)
}
