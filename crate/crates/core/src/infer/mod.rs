//! Gradient-based calibration: forward-mode gradients of the log-likelihood,
//! multi-start Adam and Hamiltonian Monte Carlo.

mod adam;
mod hmc;

use std::io::Write;

pub use adam::{adam_ascent, fit_mle, AdamRun, FitResult, OptimConfig, RestartOutcome};
pub use hmc::{hmc_sample, Chain, ChainRow, GaussianPrior, HmcConfig, LogTarget, TargetPoint};

use crate::cal::{filter_pass, PassOptions};
use crate::error::Result;
use crate::model::{check_params, IndividualModel, ParamVector};
use crate::scalar::Dual;
use crate::simulate::ObservationTrajectory;

/// Log-likelihood and its gradient in the unconstrained coordinates of the
/// free parameters of `theta`.
pub fn grad_loglik<M: IndividualModel + ?Sized>(
    model: &M,
    theta: &ParamVector,
    y: &ObservationTrajectory,
) -> Result<(f64, Vec<f64>)> {
    let u = theta.unconstrained()?;
    grad_at(model, theta, &u, y)
}

/// Same as [`grad_loglik`] at unconstrained point `u`; frozen entries come
/// from `base`.
pub fn grad_at<M: IndividualModel + ?Sized>(
    model: &M,
    base: &ParamVector,
    u: &[f64],
    y: &ObservationTrajectory,
) -> Result<(f64, Vec<f64>)> {
    check_params(model, base)?;
    let p = u.len();
    if p == 0 {
        let th = base.constrained_from(u);
        let pass = filter_pass(model, &th, y, PassOptions::default())?;
        return Ok((pass.loglik, Vec::new()));
    }
    let mut grad = vec![0.0; p];
    let mut value = 0.0;
    let mut start = 0;
    while start < p {
        let len = (p - start).min(MAX_WIDTH);
        value = match len {
            1 => chunk::<1, M>(model, base, u, y, start, &mut grad)?,
            2 => chunk::<2, M>(model, base, u, y, start, &mut grad)?,
            3 => chunk::<3, M>(model, base, u, y, start, &mut grad)?,
            4 => chunk::<4, M>(model, base, u, y, start, &mut grad)?,
            5 => chunk::<5, M>(model, base, u, y, start, &mut grad)?,
            6 => chunk::<6, M>(model, base, u, y, start, &mut grad)?,
            7 => chunk::<7, M>(model, base, u, y, start, &mut grad)?,
            _ => chunk::<8, M>(model, base, u, y, start, &mut grad)?,
        };
        start += len;
    }
    Ok((value, grad))
}

/// Directions differentiated per filter pass.
pub const MAX_WIDTH: usize = 8;

fn chunk<const W: usize, M: IndividualModel + ?Sized>(
    model: &M,
    base: &ParamVector,
    u: &[f64],
    y: &ObservationTrajectory,
    start: usize,
    grad: &mut [f64],
) -> Result<f64> {
    let seeded: Vec<Dual<W>> = u
        .iter()
        .enumerate()
        .map(|(i, &x)| match i.checked_sub(start) {
            Some(dir) if dir < W => Dual::variable(x, dir),
            _ => Dual::constant(x),
        })
        .collect();
    let th = base.constrained_from(&seeded);
    let pass = filter_pass(model, &th, y, PassOptions::default())?;
    let end = (start + W).min(grad.len());
    grad[start..end].copy_from_slice(&pass.loglik.d[..end - start]);
    Ok(pass.loglik.v)
}

/// One row of an optimisation or sampling trace.
#[derive(Clone, Debug, PartialEq)]
pub struct TraceRow {
    pub iter: usize,
    pub loglik: f64,
    /// Full constrained parameter vector.
    pub values: Vec<f64>,
}

/// Writes `iter,loglik,<params>` rows, optionally prefixed by a `restart` column.
pub fn write_trace<W: Write>(
    writer: W,
    names: &[String],
    traces: &[(Option<usize>, &[TraceRow])],
) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let tagged = traces.iter().any(|t| t.0.is_some());
    let mut header: Vec<String> = Vec::new();
    if tagged {
        header.push("restart".into());
    }
    header.extend(["iter".to_string(), "loglik".to_string()]);
    header.extend(names.iter().cloned());
    w.write_record(&header)?;
    for (tag, rows) in traces {
        for r in rows.iter() {
            let mut rec: Vec<String> = Vec::with_capacity(header.len());
            if tagged {
                rec.push(tag.map(|t| t.to_string()).unwrap_or_default());
            }
            rec.push(r.iter.to_string());
            rec.push(format!("{:e}", r.loglik));
            rec.extend(r.values.iter().map(|v| format!("{v:e}")));
            w.write_record(&rec)?;
        }
    }
    w.flush()?;
    Ok(())
}
