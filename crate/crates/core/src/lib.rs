//! Categorical approximate likelihood for partially observed individual-based
//! epidemic models.

pub mod baselines;
pub mod cal;
pub mod error;
pub mod exact;
pub mod experiment;
pub mod infer;
pub mod model;
pub mod prob;
pub mod scalar;
pub mod simulate;

pub use error::{Error, Result};
pub use model::{AnyModel, Covariates, IndividualModel, ModelKind, ParamVector};
pub use prob::{OneHot, ProbVector, RngStream, StochasticMatrix};
pub use scalar::{Dual, Real};
