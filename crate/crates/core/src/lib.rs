//! Saturated D-optimal design search with a stopping rule driven by the
//! estimated probability of discovering a new optimum.

pub mod discovery;
pub mod factorial;
pub mod linalg;
pub mod optimizer;
pub mod runner;
pub mod species;

pub use discovery::{fit_py, PYEstimate, PYParams};
pub use factorial::{Design, DesignProblem, FactorSpace, ModelSpec};
pub use optimizer::{run_algorithm, Algorithm, SearchConfig};
pub use species::{SpeciesKey, SpeciesLedger};
