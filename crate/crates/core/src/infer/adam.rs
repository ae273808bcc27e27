use rand_distr::StandardNormal;
use rayon::prelude::*;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{grad_at, TraceRow};
use crate::cal::cal_loglik;
use crate::error::{Error, Result};
use crate::model::{IndividualModel, ParamVector};
use crate::prob::RngStream;
use crate::simulate::ObservationTrajectory;

/// Adam settings; the objective is maximised.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OptimConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub iterations: usize,
    pub restarts: usize,
    pub seed: u64,
}

impl Default for OptimConfig {
    fn default() -> Self {
        OptimConfig {
            learning_rate: 0.1,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            iterations: 1000,
            restarts: 10,
            seed: 0,
        }
    }
}

impl OptimConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(Error::Config(format!("optimiser: {what}")));
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return bad("learning_rate must be a finite non-negative number");
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return bad("beta1 and beta2 must lie in [0, 1)");
        }
        if !(self.eps > 0.0) {
            return bad("eps must be positive");
        }
        if self.iterations == 0 {
            return bad("iterations must be at least 1");
        }
        if self.restarts == 0 {
            return bad("restarts must be at least 1");
        }
        Ok(())
    }
}

/// Result of one Adam run on an unconstrained objective.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamRun {
    pub u: Vec<f64>,
    /// Objective before each update.
    pub values: Vec<f64>,
}

/// Adam ascent with bias-corrected moments. `objective` returns the value and
/// gradient; a non-finite value or gradient stops the run with the iterate.
pub fn adam_ascent(
    mut objective: impl FnMut(&[f64]) -> Result<(f64, Vec<f64>)>,
    start: &[f64],
    cfg: &OptimConfig,
    mut on_iter: impl FnMut(usize, f64, &[f64]),
) -> Result<AdamRun> {
    let p = start.len();
    let mut u = start.to_vec();
    let mut m = vec![0.0; p];
    let mut v = vec![0.0; p];
    let mut values = Vec::with_capacity(cfg.iterations);
    let (mut b1t, mut b2t) = (1.0, 1.0);
    for it in 0..cfg.iterations {
        let (f, g) = objective(&u)?;
        if !f.is_finite() || g.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite {
                iteration: it,
                detail: format!("objective {f} at {u:?}"),
            });
        }
        on_iter(it, f, &u);
        values.push(f);
        b1t *= cfg.beta1;
        b2t *= cfg.beta2;
        for i in 0..p {
            m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g[i];
            v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g[i] * g[i];
            let m_hat = m[i] / (1.0 - b1t);
            let v_hat = v[i] / (1.0 - b2t);
            u[i] += cfg.learning_rate * m_hat / (v_hat.sqrt() + cfg.eps);
        }
    }
    Ok(AdamRun { u, values })
}

/// One multi-start restart: its trace and outcome.
#[derive(Clone, Debug)]
pub struct RestartOutcome {
    pub trace: Vec<TraceRow>,
    /// Final parameters and log-likelihood, or why the restart failed.
    pub result: std::result::Result<(ParamVector, f64), Error>,
}

#[derive(Clone, Debug)]
pub struct FitResult {
    pub theta: ParamVector,
    pub loglik: f64,
    pub best: usize,
    pub restarts: Vec<RestartOutcome>,
}

/// Maximum-likelihood fit by Adam from `cfg.restarts` standard-normal
/// unconstrained starting points. Frozen entries of `template` stay fixed.
///
/// Restarts that fail are kept in the output; an error is returned only when
/// every restart fails.
pub fn fit_mle<M: IndividualModel + ?Sized>(
    model: &M,
    template: &ParamVector,
    y: &ObservationTrajectory,
    cfg: &OptimConfig,
) -> Result<FitResult> {
    cfg.validate()?;
    let p = template.num_free();
    let root = RngStream::new(cfg.seed);
    let restarts: Vec<RestartOutcome> = (0..cfg.restarts)
        .into_par_iter()
        .map(|r| {
            let mut rng = root.substream(&[r as u64]);
            let start: Vec<f64> = (0..p).map(|_| rng.sample(StandardNormal)).collect();
            run_restart(model, template, y, cfg, &start)
        })
        .collect();
    let best = restarts
        .iter()
        .enumerate()
        .filter_map(|(i, o)| o.result.as_ref().ok().map(|(_, ll)| (i, *ll)))
        .fold(None, |acc: Option<(usize, f64)>, (i, ll)| match acc {
            Some((_, b)) if b >= ll => acc,
            _ => Some((i, ll)),
        });
    match best {
        Some((i, loglik)) => Ok(FitResult {
            theta: restarts[i].result.as_ref().expect("successful").0.clone(),
            loglik,
            best: i,
            restarts,
        }),
        None => Err(restarts
            .into_iter()
            .find_map(|o| o.result.err())
            .expect("at least one restart")),
    }
}

fn run_restart<M: IndividualModel + ?Sized>(
    model: &M,
    template: &ParamVector,
    y: &ObservationTrajectory,
    cfg: &OptimConfig,
    start: &[f64],
) -> RestartOutcome {
    let mut trace = Vec::with_capacity(cfg.iterations + 1);
    let run = adam_ascent(
        |u| grad_at(model, template, u, y),
        start,
        cfg,
        |it, f, u| {
            trace.push(TraceRow {
                iter: it,
                loglik: f,
                values: template.constrained_from(u),
            })
        },
    );
    let result = run.and_then(|run| {
        let theta = template.with_unconstrained(&run.u)?;
        let loglik = cal_loglik(model, &theta, y)?;
        if !loglik.is_finite() {
            return Err(Error::NonFinite {
                iteration: cfg.iterations,
                detail: format!("final objective {loglik}"),
            });
        }
        trace.push(TraceRow {
            iter: cfg.iterations,
            loglik,
            values: theta.values().to_vec(),
        });
        Ok((theta, loglik))
    });
    RestartOutcome { trace, result }
}
