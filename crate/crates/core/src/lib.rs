//! Coarse fundamental groups of Cayley graphs of finite quotients and the
//! rank invariants that tell box spaces apart.

pub mod boxspace;
pub mod cayley;
pub mod coarse_homotopy;
pub mod coarse_pi1;
pub mod config;
pub mod error;
pub mod reproduce;
pub mod towers;
pub mod words;
pub mod zlinalg;

pub use cayley::{CayleyQuotient, Covering, SystoleCertificate, SystoleKind, WordProblem};
pub use coarse_pi1::{DetectReport, FilledComplex};
pub use coarse_homotopy::{Closeness, HomotopyChain, RPath};
pub use error::{CoarseError, ErrorClass, Result};
pub use words::{parse_presentation, Presentation, Word};
pub use zlinalg::{H1Result, IntMatrix};
pub use towers::{SymbolicRank, Tower};
