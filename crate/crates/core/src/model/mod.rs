//! Individual-based compartmental models.
//!
//! A model is bound to a fixed population's covariates at construction. All
//! numerical entry points take the full constrained parameter vector as generic
//! scalars so the same code serves evaluation and differentiation.
//!
//! Per-evaluation work that depends only on covariates and parameters (for
//! example `exp(c_n b_S)`) is hoisted into a per-individual *factor table*
//! computed once by [`IndividualModel::factors`] and passed back to the other
//! methods.

mod covariates;
pub mod params;
pub mod zoo;

use std::sync::Arc;

pub use covariates::Covariates;
pub use params::{Domain, ParamEntry, ParamSpace, ParamVector};
pub use zoo::{AnyModel, ModelKind};

use crate::error::{Error, Result};
use crate::prob::{ProbVector, StochasticMatrix};
use crate::scalar::Real;

/// Per-evaluation data derived from covariates and one parameter value.
#[derive(Clone, Debug)]
pub struct Prepared<S> {
    /// `N x num_factors` table, row-major.
    pub factors: Vec<S>,
    pub width: usize,
    /// Dense pairwise contact weights, when the model uses them.
    pub pairs: Option<PairTable>,
}

impl<S> Prepared<S> {
    #[inline]
    pub fn row(&self, n: usize) -> &[S] {
        &self.factors[n * self.width..(n + 1) * self.width]
    }
}

/// `N x N` contact weights `g(w_n, w_k)` at a plain bandwidth value, with
/// their bandwidth derivative when gradients are needed.
#[derive(Clone, Debug)]
pub struct PairTable {
    pub n: usize,
    pub weight: Vec<f64>,
    pub slope: Vec<f64>,
}

/// The generic individual-based model: initial distribution, interaction
/// kernel, interaction-driven transition kernel and emission matrix.
pub trait IndividualModel: Send + Sync {
    fn name(&self) -> &str;

    /// Number of latent states `M`.
    fn num_states(&self) -> usize;

    /// Number of scalar interaction channels (1 or 2).
    fn num_channels(&self) -> usize {
        1
    }

    /// Population size the model is bound to.
    fn population(&self) -> usize;

    fn param_space(&self) -> &Arc<ParamSpace>;

    /// Declared bound `C` on every component of the interaction kernel.
    fn interaction_bound(&self) -> f64;

    /// Width of one row of the factor table.
    fn num_factors(&self) -> usize;

    /// Fills the `N x num_factors` factor table.
    fn factors<S: Real>(&self, theta: &[S], out: &mut [S]);

    /// Everything an evaluation at `theta` reuses across time steps.
    fn prepare<S: Real>(&self, theta: &[S]) -> Prepared<S> {
        let width = self.num_factors();
        let mut factors = vec![S::zero(); self.population() * width];
        self.factors(theta, &mut factors);
        Prepared {
            factors,
            width,
            pairs: None,
        }
    }

    /// `p0(w_n, theta)` into `out` (length `M`), given factor row `n`.
    fn initial<S: Real>(&self, theta: &[S], row: &[S], n: usize, out: &mut [S]);

    /// Interaction kernel `d(w_n, w_k, theta)` as a `channels x M` row-major
    /// block, evaluated from scratch.
    fn kernel<S: Real>(&self, theta: &[S], n: usize, k: usize, out: &mut [S]);

    /// Interaction summaries for all individuals given simplex rows `pi`
    /// (`N x M`), written as `N x channels`.
    ///
    /// Defaults to the dense double sum; models override with cheaper
    /// algebraically equal forms.
    fn interaction<S: Real>(&self, theta: &[S], prep: &Prepared<S>, pi: &[S], out: &mut [S]) {
        let _ = prep;
        dense_interaction(self, theta, pi, out)
    }

    /// `K_eta(w_n, theta)` into `out` (`M x M` row-major). `eta` has one entry per channel.
    fn transition<S: Real>(&self, theta: &[S], row: &[S], n: usize, eta: &[S], out: &mut [S]);

    /// `G(w_n, theta)` into `out` (`M x (M+1)` row-major); column 0 is "unreported".
    fn emission<S: Real>(&self, theta: &[S], row: &[S], n: usize, out: &mut [S]);

    /// Nonzero pattern of `p0` for individual `n`.
    fn initial_support(&self, n: usize) -> Vec<bool>;

    /// Nonzero pattern of `K` for individual `n` (for `eta > 0`).
    fn transition_support(&self, n: usize) -> Vec<bool>;

    /// Nonzero pattern of `G` for individual `n` (interior parameters).
    fn emission_support(&self, n: usize) -> Vec<bool>;
}

/// `(1/N) sum_k d(w_n, w_k)^T pi_k` evaluated literally.
pub fn dense_interaction<S: Real, M: IndividualModel + ?Sized>(
    model: &M,
    theta: &[S],
    pi: &[S],
    out: &mut [S],
) {
    let n_pop = model.population();
    let m = model.num_states();
    let ch = model.num_channels();
    let inv_n = 1.0 / n_pop as f64;
    let mut d = vec![S::zero(); ch * m];
    for n in 0..n_pop {
        let mut acc = vec![S::zero(); ch];
        for k in 0..n_pop {
            model.kernel(theta, n, k, &mut d);
            let pk = &pi[k * m..(k + 1) * m];
            for (c, a) in acc.iter_mut().enumerate() {
                let mut s = S::zero();
                for (dj, pj) in d[c * m..(c + 1) * m].iter().zip(pk) {
                    s += *dj * *pj;
                }
                *a += s;
            }
        }
        for (c, a) in acc.into_iter().enumerate() {
            out[n * ch + c] = a.scale(inv_n);
        }
    }
}

/// Interaction values for every individual at one time, `N x channels`.
#[derive(Clone, Debug, PartialEq)]
pub struct InteractionSummary {
    pub channels: usize,
    pub values: Vec<f64>,
}

impl InteractionSummary {
    pub fn get(&self, n: usize) -> &[f64] {
        &self.values[n * self.channels..(n + 1) * self.channels]
    }
}

pub(crate) fn check_params<M: IndividualModel + ?Sized>(model: &M, theta: &ParamVector) -> Result<()> {
    if theta.space().entries() != model.param_space().entries() {
        return Err(Error::Config(format!(
            "parameter vector does not belong to model `{}`",
            model.name()
        )));
    }
    Ok(())
}

fn check_index<M: IndividualModel + ?Sized>(model: &M, n: usize) -> Result<()> {
    if n >= model.population() {
        return Err(Error::ShapeMismatch(format!(
            "individual {n} outside population of {}",
            model.population()
        )));
    }
    Ok(())
}

/// `p0(w_n, theta)` for one individual.
pub fn initial_distribution<M: IndividualModel + ?Sized>(
    model: &M,
    theta: &ParamVector,
    n: usize,
) -> Result<ProbVector> {
    check_params(model, theta)?;
    check_index(model, n)?;
    let prep = model.prepare(theta.values());
    let mut out = vec![0.0; model.num_states()];
    model.initial(theta.values(), prep.row(n), n, &mut out);
    ProbVector::new(out)
}

/// Interaction summary computed from rows `pi` (`N x M`; one-hot rows allowed).
pub fn interaction<M: IndividualModel + ?Sized>(
    model: &M,
    theta: &ParamVector,
    pi: &[f64],
) -> Result<InteractionSummary> {
    check_params(model, theta)?;
    let n_pop = model.population();
    if pi.len() != n_pop * model.num_states() {
        return Err(Error::ShapeMismatch(format!(
            "expected {} simplex entries, got {}",
            n_pop * model.num_states(),
            pi.len()
        )));
    }
    let prep = model.prepare(theta.values());
    let mut values = vec![0.0; n_pop * model.num_channels()];
    model.interaction(theta.values(), &prep, pi, &mut values);
    Ok(InteractionSummary {
        channels: model.num_channels(),
        values,
    })
}

/// `K_eta(w_n, theta)`.
pub fn transition_matrix<M: IndividualModel + ?Sized>(
    model: &M,
    theta: &ParamVector,
    n: usize,
    eta: &[f64],
) -> Result<StochasticMatrix> {
    check_params(model, theta)?;
    check_index(model, n)?;
    let c = model.interaction_bound();
    if eta.len() != model.num_channels() {
        return Err(Error::ShapeMismatch(format!(
            "model `{}` takes {} interaction channels",
            model.name(),
            model.num_channels()
        )));
    }
    if let Some(&bad) = eta.iter().find(|&&e| !(0.0..=c).contains(&e)) {
        return Err(Error::OutOfDomain {
            name: "eta".into(),
            value: bad,
        });
    }
    let prep = model.prepare(theta.values());
    let m = model.num_states();
    let mut out = vec![0.0; m * m];
    model.transition(theta.values(), prep.row(n), n, eta, &mut out);
    StochasticMatrix::new(m, m, out)
}

/// `G(w_n, theta)`.
pub fn emission_matrix<M: IndividualModel + ?Sized>(
    model: &M,
    theta: &ParamVector,
    n: usize,
) -> Result<StochasticMatrix> {
    check_params(model, theta)?;
    check_index(model, n)?;
    let prep = model.prepare(theta.values());
    let m = model.num_states();
    let mut out = vec![0.0; m * (m + 1)];
    model.emission(theta.values(), prep.row(n), n, &mut out);
    StochasticMatrix::new(m, m + 1, out)
}

/// Squared Euclidean distance.
#[inline]
pub(crate) fn dist2(a: [f64; 2], b: [f64; 2]) -> f64 {
    let dx = a[0] - b[0];
    let dy = a[1] - b[1];
    dx * dx + dy * dy
}

/// Gaussian contact kernel `exp(-d2 / (2 phi^2)) / sqrt(2 pi phi^2)`.
#[inline]
pub(crate) fn gaussian_kernel<S: Real>(d2: f64, phi: S) -> S {
    let phi2 = phi * phi;
    (S::cst(-d2) / (phi2 + phi2)).exp() / (phi2.scale(2.0 * std::f64::consts::PI)).sqrt()
}

/// Value and `d/d phi` of the Gaussian contact kernel at plain `phi`.
#[inline]
pub(crate) fn gaussian_kernel_with_slope(d2: f64, phi: f64, inv_norm: f64) -> (f64, f64) {
    let g = (-d2 / (2.0 * phi * phi)).exp() * inv_norm;
    (g, g * (d2 / (phi * phi * phi) - 1.0 / phi))
}
