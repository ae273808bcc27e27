//! Randomised agreement checks between the filter and the reference
//! likelihoods.

use std::ops::RangeInclusive;
use std::time::Instant;

use rand::Rng;

use crate::cal::{cal_filter, FilterOutput};
use crate::error::Result;
use crate::exact::{enumerate_approx_model_loglik, exact_forward_loglik, path_sum_loglik};
use crate::model::{AnyModel, IndividualModel, ModelKind, ParamVector};
use crate::prob::RngStream;
use crate::simulate::{generate_covariates, simulate, ObservationTrajectory};

/// A random small problem.
pub struct FuzzCase {
    pub kind: ModelKind,
    pub model: AnyModel,
    pub theta: ParamVector,
    pub y: ObservationTrajectory,
}

/// Draws a model from `kinds`, `N` and `T` uniformly from their ranges,
/// parameters uniform over each declared range, and data from the model.
pub fn fuzz_case(
    rng: &RngStream,
    kinds: &[ModelKind],
    pop: RangeInclusive<usize>,
    horizon: RangeInclusive<usize>,
    decoupled: bool,
) -> Result<FuzzCase> {
    let mut r = rng.substream(&[0]);
    let kind = kinds[r.random_range(0..kinds.len())];
    let n = r.random_range(pop);
    let horizon = r.random_range(horizon);
    let cov = generate_covariates(kind.covariate_kind(), n, &rng.substream(&[1]))?;
    let mut model = kind.build(&cov, 1.0)?;
    if decoupled {
        model = model.decoupled();
    }
    let space = model.param_space().clone();
    let values = space
        .entries()
        .iter()
        .map(|e| e.lower + r.uniform() * (e.upper - e.lower))
        .collect();
    let theta = ParamVector::new(space, values)?;
    let (_, y) = simulate(&model, &theta, horizon, &rng.substream(&[2]))?;
    Ok(FuzzCase {
        kind,
        model,
        theta,
        y,
    })
}

/// Outcome of one family of agreement trials.
#[derive(Clone, Debug, PartialEq)]
pub struct OracleCheck {
    pub name: &'static str,
    pub trials: usize,
    pub max_residual: f64,
    pub tolerance: f64,
    /// Smallest predictive probability of an actual observation.
    pub min_mu: f64,
    /// Filter increments that were NaN or infinite.
    pub nonfinite: usize,
    pub seconds: f64,
}

impl OracleCheck {
    pub fn passed(&self) -> bool {
        self.max_residual <= self.tolerance
    }

    fn new(name: &'static str, tolerance: f64) -> Self {
        OracleCheck {
            name,
            trials: 0,
            max_residual: 0.0,
            tolerance,
            min_mu: f64::INFINITY,
            nonfinite: 0,
            seconds: 0.0,
        }
    }

    fn record(&mut self, residual: f64, filter: &FilterOutput) {
        self.trials += 1;
        // NaN must count as a failure
        self.max_residual = if residual.is_nan() { f64::INFINITY } else { self.max_residual.max(residual) };
        self.min_mu = self.min_mu.min(filter.min_observed_mu);
        self.nonfinite += filter.increments.iter().filter(|v| !v.is_finite()).count();
    }
}

/// Filter against per-individual enumeration of the approximate model;
/// relative residual.
pub fn approx_identity(trials: usize, rng: &RngStream) -> Result<OracleCheck> {
    let clock = Instant::now();
    let mut check = OracleCheck::new("approx_model_identity", 1e-10);
    for i in 0..trials {
        let case = fuzz_case(&rng.substream(&[i as u64]), &ModelKind::ALL, 1..=5, 1..=4, false)?;
        let filter = cal_filter(&case.model, &case.theta, &case.y, false)?;
        let approx = enumerate_approx_model_loglik(&case.model, &case.theta, &case.y)?;
        check.record((filter.loglik - approx).abs() / filter.loglik.abs(), &filter);
    }
    check.seconds = clock.elapsed().as_secs_f64();
    Ok(check)
}

/// Filter against the joint forward recursion with interactions removed.
pub fn decoupled_exactness(trials: usize, rng: &RngStream) -> Result<OracleCheck> {
    let clock = Instant::now();
    let mut check = OracleCheck::new("decoupled_exactness", 1e-10);
    for i in 0..trials {
        let case = fuzz_case(&rng.substream(&[i as u64]), &ModelKind::ALL, 1..=3, 1..=4, true)?;
        let filter = cal_filter(&case.model, &case.theta, &case.y, false)?;
        let exact = exact_forward_loglik(&case.model, &case.theta, &case.y)?;
        check.record((filter.loglik - exact).abs(), &filter);
    }
    check.seconds = clock.elapsed().as_secs_f64();
    Ok(check)
}

/// Joint forward recursion against brute-force path enumeration on two
/// individuals with two states.
pub fn path_enumeration(trials: usize, rng: &RngStream) -> Result<OracleCheck> {
    let clock = Instant::now();
    let kinds: Vec<ModelKind> = ModelKind::ALL
        .into_iter()
        .filter(|k| k.num_states() == 2)
        .collect();
    let mut check = OracleCheck::new("path_enumeration", 1e-12);
    for i in 0..trials {
        let case = fuzz_case(&rng.substream(&[i as u64]), &kinds, 2..=2, 1..=3, false)?;
        let filter = cal_filter(&case.model, &case.theta, &case.y, false)?;
        let exact = exact_forward_loglik(&case.model, &case.theta, &case.y)?;
        let paths = path_sum_loglik(&case.model, &case.theta, &case.y)?;
        check.record((exact - paths).abs(), &filter);
    }
    check.seconds = clock.elapsed().as_secs_f64();
    Ok(check)
}
