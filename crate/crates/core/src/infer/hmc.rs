use std::collections::BTreeMap;
use std::io::Write;

use rand_distr::StandardNormal;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::grad_at;
use crate::error::{Error, Result};
use crate::model::{IndividualModel, ParamVector};
use crate::prob::RngStream;
use crate::simulate::ObservationTrajectory;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GaussianPrior {
    pub mean: f64,
    pub variance: f64,
}

/// Leapfrog HMC with identity mass and windowed step-size adaptation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HmcConfig {
    pub leapfrog_steps: usize,
    pub step_size: f64,
    pub iterations: usize,
    pub burn_in: usize,
    pub thin: usize,
    /// Iterations between step-size adjustments.
    pub window: usize,
    /// Target acceptance interval.
    pub band: [f64; 2],
    /// Relative step-size change when acceptance leaves the band.
    pub adjust: f64,
    /// Prior on every unconstrained coordinate unless overridden by name.
    pub prior: GaussianPrior,
    pub priors: BTreeMap<String, GaussianPrior>,
    /// Add transform log-Jacobians, i.e. read the prior as one on the
    /// constrained scale pushed through the transforms.
    pub jacobian: bool,
    pub seed: u64,
}

impl Default for HmcConfig {
    fn default() -> Self {
        HmcConfig {
            leapfrog_steps: 10,
            step_size: 0.01,
            iterations: 20_000,
            burn_in: 5_000,
            thin: 1,
            window: 1_000,
            band: [0.55, 0.75],
            adjust: 0.35,
            prior: GaussianPrior {
                mean: 0.0,
                variance: 100.0,
            },
            priors: BTreeMap::new(),
            jacobian: false,
            seed: 0,
        }
    }
}

impl HmcConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(Error::Config(format!("hmc: {what}")));
        if self.leapfrog_steps == 0 {
            return bad("leapfrog_steps must be at least 1");
        }
        if !(self.step_size > 0.0 && self.step_size.is_finite()) {
            return bad("step_size must be positive");
        }
        if self.iterations == 0 || self.window == 0 || self.thin == 0 {
            return bad("iterations, window and thin must be at least 1");
        }
        if self.burn_in >= self.iterations {
            return bad("burn_in must be smaller than iterations");
        }
        let [lo, hi] = self.band;
        if !(0.0 < lo && lo < hi && hi < 1.0) {
            return bad("band must satisfy 0 < low < high < 1");
        }
        if !(self.adjust > 0.0 && self.adjust < 1.0) {
            return bad("adjust must lie in (0, 1)");
        }
        for p in std::iter::once(&self.prior).chain(self.priors.values()) {
            if !(p.variance > 0.0 && p.mean.is_finite()) {
                return bad("prior variances must be positive");
            }
        }
        Ok(())
    }
}

/// Unnormalised log-posterior on the unconstrained free coordinates.
pub struct LogTarget<'a, M: IndividualModel + ?Sized> {
    model: &'a M,
    base: &'a ParamVector,
    y: &'a ObservationTrajectory,
    mean: Vec<f64>,
    precision: Vec<f64>,
    jacobian: bool,
}

/// Log-posterior value, its log-likelihood part and gradient.
#[derive(Clone, Debug)]
pub struct TargetPoint {
    pub log_post: f64,
    pub loglik: f64,
    pub grad: Vec<f64>,
}

impl<'a, M: IndividualModel + ?Sized> LogTarget<'a, M> {
    pub fn new(
        model: &'a M,
        base: &'a ParamVector,
        y: &'a ObservationTrajectory,
        cfg: &HmcConfig,
    ) -> Result<Self> {
        if let Some(name) = cfg.priors.keys().find(|k| !base.free_names().contains(k)) {
            return Err(Error::Config(format!("hmc: prior for unknown or frozen `{name}`")));
        }
        let (mean, precision) = base
            .free_names()
            .iter()
            .map(|n| {
                let p = cfg.priors.get(n).unwrap_or(&cfg.prior);
                (p.mean, 1.0 / p.variance)
            })
            .unzip();
        Ok(LogTarget {
            model,
            base,
            y,
            mean,
            precision,
            jacobian: cfg.jacobian,
        })
    }

    pub fn eval(&self, u: &[f64]) -> Result<TargetPoint> {
        let (loglik, mut grad) = grad_at(self.model, self.base, u, self.y)?;
        let mut log_post = loglik;
        for i in 0..u.len() {
            let dev = u[i] - self.mean[i];
            log_post -= 0.5 * self.precision[i] * dev * dev;
            grad[i] -= self.precision[i] * dev;
        }
        if self.jacobian {
            log_post += self.base.log_jacobian(u);
            for (g, s) in grad.iter_mut().zip(self.base.log_jacobian_grad(u)) {
                *g += s;
            }
        }
        Ok(TargetPoint {
            log_post,
            loglik,
            grad,
        })
    }
}

/// One retained draw.
#[derive(Clone, Debug, PartialEq)]
pub struct ChainRow {
    pub iter: usize,
    pub loglik: f64,
    /// Full constrained parameter vector.
    pub values: Vec<f64>,
    pub accepted: bool,
    pub step_size: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Chain {
    pub names: Vec<String>,
    pub rows: Vec<ChainRow>,
    /// Acceptance rate of each completed adaptation window.
    pub window_acceptance: Vec<f64>,
    /// Step size after the last adjustment.
    pub final_step_size: f64,
    pub accepted: usize,
}

impl Chain {
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let mut header = vec!["iter".to_string(), "loglik".to_string()];
        header.extend(self.names.iter().cloned());
        header.extend(["accepted".to_string(), "step_size".to_string()]);
        w.write_record(&header)?;
        for r in &self.rows {
            let mut rec = vec![r.iter.to_string(), format!("{:e}", r.loglik)];
            rec.extend(r.values.iter().map(|v| format!("{v:e}")));
            rec.push(u8::from(r.accepted).to_string());
            rec.push(format!("{:e}", r.step_size));
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }

    /// Mean and standard deviation of each parameter over retained draws.
    pub fn summary(&self) -> Vec<(f64, f64)> {
        let k = self.names.len();
        let n = self.rows.len() as f64;
        (0..k)
            .map(|j| {
                let mean = self.rows.iter().map(|r| r.values[j]).sum::<f64>() / n;
                let var = self
                    .rows
                    .iter()
                    .map(|r| (r.values[j] - mean).powi(2))
                    .sum::<f64>()
                    / (n - 1.0).max(1.0);
                (mean, var.sqrt())
            })
            .collect()
    }
}

/// Samples the posterior of the free parameters of `start`.
///
/// Proposals whose trajectory leaves the region where the target is finite
/// are rejected; a non-finite target at `start` is an error.
pub fn hmc_sample<M: IndividualModel + ?Sized>(
    model: &M,
    start: &ParamVector,
    y: &ObservationTrajectory,
    cfg: &HmcConfig,
) -> Result<Chain> {
    cfg.validate()?;
    let target = LogTarget::new(model, start, y, cfg)?;
    let mut u = start.unconstrained()?;
    let mut here = target.eval(&u)?;
    if !here.log_post.is_finite() || here.grad.iter().any(|g| !g.is_finite()) {
        return Err(Error::NonFinite {
            iteration: 0,
            detail: format!("log posterior {} at the starting point", here.log_post),
        });
    }
    let p = u.len();
    let root = RngStream::new(cfg.seed);
    let mut eps = cfg.step_size;
    let mut rows = Vec::new();
    let mut window_acceptance = Vec::new();
    let mut in_window = 0usize;
    let mut accepted_total = 0usize;

    for it in 0..cfg.iterations {
        let mut rng = root.substream(&[it as u64]);
        let momentum: Vec<f64> = (0..p).map(|_| rng.sample(StandardNormal)).collect();
        let proposal = leapfrog(&target, &u, &here, &momentum, eps, cfg.leapfrog_steps);
        let log_u: f64 = rng.random::<f64>().ln();
        let kinetic = |m: &[f64]| 0.5 * m.iter().map(|x| x * x).sum::<f64>();
        let accepted = match proposal {
            Some((u_new, at, m_new)) => {
                let log_ratio = (at.log_post - kinetic(&m_new)) - (here.log_post - kinetic(&momentum));
                if log_ratio.is_finite() && log_u < log_ratio {
                    u = u_new;
                    here = at;
                    true
                } else {
                    false
                }
            }
            None => false,
        };
        in_window += usize::from(accepted);
        accepted_total += usize::from(accepted);
        if it >= cfg.burn_in && (it - cfg.burn_in) % cfg.thin == 0 {
            rows.push(ChainRow {
                iter: it,
                loglik: here.loglik,
                values: start.constrained_from(&u),
                accepted,
                step_size: eps,
            });
        }
        if (it + 1) % cfg.window == 0 {
            let rate = in_window as f64 / cfg.window as f64;
            window_acceptance.push(rate);
            if rate < cfg.band[0] {
                eps *= 1.0 - cfg.adjust;
            } else if rate > cfg.band[1] {
                eps *= 1.0 + cfg.adjust;
            }
            in_window = 0;
        }
    }
    Ok(Chain {
        names: start.space().entries().iter().map(|e| e.name.clone()).collect(),
        rows,
        window_acceptance,
        final_step_size: eps,
        accepted: accepted_total,
    })
}

/// Integrates the Hamiltonian flow; `None` when the target fails on the way.
fn leapfrog<M: IndividualModel + ?Sized>(
    target: &LogTarget<'_, M>,
    u0: &[f64],
    at0: &TargetPoint,
    m0: &[f64],
    eps: f64,
    steps: usize,
) -> Option<(Vec<f64>, TargetPoint, Vec<f64>)> {
    let mut u = u0.to_vec();
    let mut m = m0.to_vec();
    let mut grad = at0.grad.clone();
    let mut at = None;
    for _ in 0..steps {
        for (mi, g) in m.iter_mut().zip(&grad) {
            *mi += 0.5 * eps * g;
        }
        for (ui, mi) in u.iter_mut().zip(&m) {
            *ui += eps * mi;
        }
        let point = target.eval(&u).ok()?;
        if !point.log_post.is_finite() || point.grad.iter().any(|g| !g.is_finite()) {
            return None;
        }
        for (mi, g) in m.iter_mut().zip(&point.grad) {
            *mi += 0.5 * eps * g;
        }
        grad.clone_from(&point.grad);
        at = Some(point);
    }
    at.map(|a| (u, a, m))
}
