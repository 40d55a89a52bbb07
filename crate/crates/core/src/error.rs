use thiserror::Error;

/// Every failure the library can report.
///
/// Variants are grouped by [`ErrorClass`] so front ends can map them onto
/// stable exit codes.
#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum CoarseError {
    #[error("malformed word: letter {letter} outside alphabet of {n_generators} generators")]
    MalformedWord { letter: i32, n_generators: usize },
    #[error("parse error on line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("permutation {index} is not a bijection of 0..{degree}")]
    NotBijective { index: usize, degree: usize },
    #[error("matrix {index} has determinant {det} mod {modulus}, expected 1")]
    Determinant { index: usize, det: u64, modulus: u64 },
    #[error("budget exceeded: projected {projected} {what}, budget {budget}")]
    Budget {
        what: &'static str,
        projected: String,
        budget: u64,
    },
    #[error("unsupported base: {0}")]
    UnsupportedBase(String),
    #[error("no nonempty reduced closed word exists")]
    NoCycle,
    #[error("inconsistent tower: {0}")]
    InconsistentTower(String),
    #[error("ambiguous lift at step {step}: {candidates} preimages within distance {r}")]
    AmbiguousLift {
        step: usize,
        candidates: usize,
        r: u32,
    },
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error("endpoint mismatch: first path ends at {end}, second starts at {start}")]
    EndpointMismatch { end: u32, start: u32 },
    #[error("paths refer to different graphs")]
    GraphMismatch,
    #[error("complex is disconnected: {reached} of {total} vertices reachable from 0")]
    Disconnected { reached: usize, total: usize },
    #[error("wrong presentation: relator {relator} is not closed at vertex {vertex}")]
    WrongPresentation { relator: usize, vertex: u32 },
    #[error("internal consistency failure: {0}")]
    Internal(String),
    #[error("unavailable: {0}")]
    Unavailable(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("unsupported comparison: {0}")]
    UnsupportedComparison(String),
}

/// Coarse classification used for process exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    BadInput,
    Budget,
    Internal,
}

impl CoarseError {
    pub fn class(&self) -> ErrorClass {
        match self {
            CoarseError::Budget { .. } => ErrorClass::Budget,
            CoarseError::Internal(_) | CoarseError::InconsistentTower(_) => ErrorClass::Internal,
            _ => ErrorClass::BadInput,
        }
    }

    /// Short machine-readable tag.
    pub fn kind(&self) -> &'static str {
        match self {
            CoarseError::MalformedWord { .. } => "malformed_word",
            CoarseError::Parse { .. } => "parse",
            CoarseError::NotBijective { .. } => "not_bijective",
            CoarseError::Determinant { .. } => "determinant",
            CoarseError::Budget { .. } => "budget",
            CoarseError::UnsupportedBase(_) => "unsupported_base",
            CoarseError::NoCycle => "no_cycle",
            CoarseError::InconsistentTower(_) => "inconsistent_tower",
            CoarseError::AmbiguousLift { .. } => "ambiguous_lift",
            CoarseError::Precondition(_) => "precondition",
            CoarseError::EndpointMismatch { .. } => "endpoint_mismatch",
            CoarseError::GraphMismatch => "graph_mismatch",
            CoarseError::Disconnected { .. } => "disconnected",
            CoarseError::WrongPresentation { .. } => "wrong_presentation",
            CoarseError::Internal(_) => "internal",
            CoarseError::Unavailable(_) => "unavailable",
            CoarseError::InvalidArgument(_) => "invalid_argument",
            CoarseError::UnsupportedComparison(_) => "unsupported_comparison",
        }
    }

    pub(crate) fn budget(what: &'static str, projected: impl ToString, budget: u64) -> Self {
        CoarseError::Budget {
            what,
            projected: projected.to_string(),
            budget,
        }
    }
}

pub type Result<T> = std::result::Result<T, CoarseError>;
