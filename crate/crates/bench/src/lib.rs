//! Benchmark fixtures.

use ibmcal::simulate::{generate_covariates, simulate, ObservationTrajectory};
use ibmcal::{AnyModel, IndividualModel, ModelKind, ParamVector, RngStream};

/// A model at its reference parameters with one simulated trajectory.
pub struct Fixture {
    pub model: AnyModel,
    pub theta: ParamVector,
    pub y: ObservationTrajectory,
}

pub fn fixture(kind: ModelKind, population: usize, horizon: usize) -> Fixture {
    let rng = RngStream::new(1);
    let cov = generate_covariates(kind.covariate_kind(), population, &rng.substream(&[0]))
        .expect("covariates");
    let model = kind.build(&cov, 1.0).expect("model");
    let theta = kind.reference_params(model.param_space()).expect("params");
    let (_, y) = simulate(&model, &theta, horizon, &rng.substream(&[1])).expect("simulation");
    Fixture { model, theta, y }
}
