//! Crate-wide error type.

use thiserror::Error;

use crate::partition::RegionId;
use crate::world::ReadingId;

#[derive(Debug, Error)]
pub enum Error {
    /// Scenario file is not valid JSON (message carries line/column).
    #[error("scenario parse error: {0}")]
    Parse(#[from] serde_json::Error),

    /// Scenario parsed but violates a named invariant.
    #[error("invalid scenario: {0}")]
    InvalidScenario(String),

    #[error("duplicate reading id {0}")]
    DuplicateReading(ReadingId),

    #[error("duplicate region id {0}")]
    DuplicateRegion(RegionId),

    #[error("unknown region id {0}")]
    UnknownRegion(RegionId),

    #[error("unknown reading id {0}")]
    UnknownReading(ReadingId),

    #[error("polarity {polarity} inconsistent with region {region} label {label} for reading {reading}")]
    PolarityMismatch {
        region: RegionId,
        reading: ReadingId,
        polarity: &'static str,
        label: char,
    },

    #[error("nonpositive area {0}")]
    NonpositiveArea(f64),

    #[error("network has {roots} root nodes, enumeration guard is {limit}")]
    TooManyRoots { roots: usize, limit: usize },

    #[error("impossible evidence: observed configuration has probability 0")]
    ImpossibleEvidence,

    #[error("degenerate weights: total sample weight is 0")]
    DegenerateWeights,

    #[error("exact inference budget exceeded: factor over {vars} variables, limit {limit}")]
    ExactBudgetExceeded { vars: usize, limit: usize },

    #[error("evidence must cover every reading leaf exactly once: {0}")]
    BadEvidence(String),

    #[error("contradictory deterministic evidence: update denominator is 0")]
    ContradictoryEvidence,

    #[error("total conflict{}", cell.map(|(x, y)| format!(" at cell ({x}, {y})")).unwrap_or_default())]
    TotalConflict { cell: Option<(u32, u32)> },

    #[error("region {0} has zero prior occupancy")]
    ZeroPrior(RegionId),

    #[error("region {0} has no posterior")]
    MissingPosterior(RegionId),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
