pub mod arl;
pub mod cli;
pub mod datasets;
pub mod error;
pub mod metrics;
pub mod nn;
pub mod spectral;
pub mod tensor;

pub use error::{Error, Result};
pub use tensor::{Graph, Real, Tensor, Var};
