//! Open Dicke model: Redfield-type atom-only master equation, its
//! semiclassical limit, and a joint atom-cavity reference solver.

pub mod dicke;
pub mod error;
pub mod fit;
pub mod integrate;
pub mod liouvillian;
pub mod oracle;
pub mod params;
pub mod semiclassics;
pub mod solvers;
pub mod sparse;

pub use dicke::{CMatrix, DickeDensityMatrix, SpinOperators};
pub use error::{Error, Result};
pub use liouvillian::{apply_generator, GeneratorSpec, Parity};
pub use params::{compute_rates, critical_coupling, ApproximationMode, ModelParams, RateSet};
