//! The categorical approximate filter and its log-likelihood.
//!
//! Each individual carries a categorical belief. A step propagates every
//! belief through its own transition kernel, where the interaction term is
//! computed from the population of filtered beliefs, then conditions on the
//! individual's own observation. The log-likelihood is the sum of the
//! per-individual log predictive probabilities of the observations.

use std::io::Write;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::model::{check_params, IndividualModel, ParamVector};
use crate::prob::argmax_index;
use crate::scalar::{CompensatedSum, Real};
use crate::simulate::ObservationTrajectory;

/// Largest state count handled by the fixed-size per-individual buffers.
pub const MAX_STATES: usize = 4;

/// Individuals per parallel work item.
const MIN_CHUNK: usize = 256;

/// Per-step beliefs kept when the filter runs with storage enabled.
#[derive(Clone, Debug, PartialEq)]
pub struct FilterStore {
    /// `N x M` initial beliefs.
    pub initial: Vec<f64>,
    /// `T x N x M` one-step predictions.
    pub predicted: Vec<f64>,
    /// `T x N x (M+1)` observation predictives.
    pub predictive: Vec<f64>,
    /// `T x N x M` filtered beliefs.
    pub filtered: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct FilterOutput {
    population: usize,
    states: usize,
    horizon: usize,
    channels: usize,
    pub loglik: f64,
    /// `T x N` log predictive probabilities of the observations.
    pub increments: Vec<f64>,
    /// `T x N x channels` interaction values used by each step.
    pub eta: Vec<f64>,
    /// Smallest predictive probability assigned to an actual observation.
    pub min_observed_mu: f64,
    pub store: Option<FilterStore>,
}

impl FilterOutput {
    pub fn population(&self) -> usize {
        self.population
    }

    pub fn states(&self) -> usize {
        self.states
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    /// Log predictive probability of `y[t][n]`, `t` in `1..=T`.
    pub fn increment(&self, t: usize, n: usize) -> f64 {
        self.increments[(t - 1) * self.population + n]
    }

    /// Interaction values driving the transition into time `t`.
    pub fn eta(&self, t: usize, n: usize) -> &[f64] {
        let i = ((t - 1) * self.population + n) * self.channels;
        &self.eta[i..i + self.channels]
    }

    fn stored(&self) -> Result<&FilterStore> {
        self.store.as_ref().ok_or(Error::MissingStore)
    }

    pub fn predicted(&self, t: usize, n: usize) -> Result<&[f64]> {
        let m = self.states;
        let i = ((t - 1) * self.population + n) * m;
        Ok(&self.stored()?.predicted[i..i + m])
    }

    pub fn predictive(&self, t: usize, n: usize) -> Result<&[f64]> {
        let m = self.states + 1;
        let i = ((t - 1) * self.population + n) * m;
        Ok(&self.stored()?.predictive[i..i + m])
    }

    /// Filtered belief at `t` in `0..=T` (`t = 0` is the initial belief).
    pub fn filtered(&self, t: usize, n: usize) -> Result<&[f64]> {
        let m = self.states;
        let s = self.stored()?;
        if t == 0 {
            return Ok(&s.initial[n * m..(n + 1) * m]);
        }
        let i = ((t - 1) * self.population + n) * m;
        Ok(&s.filtered[i..i + m])
    }

    /// Writes `t, n, state_index, pi_pred, mu, pi_filt`, one row per state;
    /// `mu` is the probability of being reported as that state.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        self.stored()?;
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["t", "n", "state_index", "pi_pred", "mu", "pi_filt"])?;
        for t in 1..=self.horizon {
            for n in 0..self.population {
                let (pred, mu, filt) = (
                    self.predicted(t, n)?,
                    self.predictive(t, n)?,
                    self.filtered(t, n)?,
                );
                for i in 0..self.states {
                    w.write_record([
                        t.to_string(),
                        n.to_string(),
                        i.to_string(),
                        format!("{:e}", pred[i]),
                        format!("{:e}", mu[i + 1]),
                        format!("{:e}", filt[i]),
                    ])?;
                }
            }
        }
        w.flush()?;
        Ok(())
    }
}

/// Output of one generic pass.
pub(crate) struct Pass<S> {
    pub loglik: S,
    pub increments: Vec<f64>,
    pub eta: Vec<f64>,
    pub min_observed_mu: f64,
    pub store: Option<FilterStore>,
}

#[derive(Clone, Copy, Debug, Default)]
pub(crate) struct PassOptions {
    /// Keep per-step increments and interaction values.
    pub trace: bool,
    /// Keep all beliefs.
    pub store: bool,
}

pub(crate) fn check_data<M: IndividualModel + ?Sized>(
    model: &M,
    y: &ObservationTrajectory,
) -> Result<()> {
    if y.population() != model.population() || y.states() != model.num_states() {
        return Err(Error::ShapeMismatch(format!(
            "observations cover {} individuals with {} states, model `{}` has {} and {}",
            y.population(),
            y.states(),
            model.name(),
            model.population(),
            model.num_states()
        )));
    }
    if model.num_states() > MAX_STATES {
        return Err(Error::Config(format!(
            "at most {MAX_STATES} latent states are supported"
        )));
    }
    Ok(())
}

struct StepOut<'a> {
    predicted: Option<&'a mut [f64]>,
    predictive: Option<&'a mut [f64]>,
}

/// One prediction and correction for a single individual.
///
/// `MS` is the state count and `MM = MS * MS`, so buffers live on the stack
/// at their exact size.
#[allow(clippy::too_many_arguments)]
#[inline]
fn step_one<S: Real, M: IndividualModel + ?Sized, const MS: usize, const MM: usize>(
    model: &M,
    theta: &[S],
    row: &[S],
    n: usize,
    eta: &[S],
    prev: &[S],
    g: &[S],
    y: usize,
    t: usize,
    belief: &mut [S],
    out: StepOut<'_>,
) -> Result<(S, f64)> {
    let m = MS;
    let mut k = [S::zero(); MM];
    model.transition(theta, row, n, eta, &mut k);
    let mut pred = [S::zero(); MS];
    for (x, &p) in prev.iter().enumerate() {
        for (j, slot) in pred.iter_mut().enumerate() {
            *slot += p * k[x * m + j];
        }
    }
    let cols = m + 1;
    let mut mu = S::zero();
    for (x, &p) in pred.iter().enumerate() {
        mu += p * g[x * cols + y];
    }
    let mu_v = mu.value();
    if !(mu_v > 0.0) {
        return Err(Error::SupportViolation { t, individual: n });
    }
    let inv = S::one() / mu;
    for (x, b) in belief.iter_mut().enumerate() {
        *b = pred[x] * g[x * cols + y] * inv;
    }
    if let Some(dst) = out.predicted {
        for (d, p) in dst.iter_mut().zip(&pred) {
            *d = p.value();
        }
    }
    if let Some(dst) = out.predictive {
        for (j, d) in dst.iter_mut().enumerate() {
            let mut acc = 0.0;
            for (x, p) in pred.iter().enumerate() {
                acc += p.value() * g[x * cols + j].value();
            }
            *d = acc;
        }
    }
    Ok((mu.ln(), mu_v))
}

/// Runs the filter with generic scalars. `theta` is the full constrained vector.
pub(crate) fn filter_pass<S: Real, M: IndividualModel + ?Sized>(
    model: &M,
    theta: &[S],
    y: &ObservationTrajectory,
    opts: PassOptions,
) -> Result<Pass<S>> {
    check_data(model, y)?;
    let n_pop = model.population();
    let m = model.num_states();
    let ch = model.num_channels();
    let horizon = y.horizon();
    let cols = m + 1;
    let prep = model.prepare(theta);

    let mut emission = vec![S::zero(); n_pop * m * cols];
    emission
        .par_chunks_mut(m * cols)
        .enumerate()
        .for_each(|(n, g)| model.emission(theta, prep.row(n), n, g));

    let mut belief = vec![S::zero(); n_pop * m];
    for (n, b) in belief.chunks_exact_mut(m).enumerate() {
        model.initial(theta, prep.row(n), n, b);
    }
    let mut next = vec![S::zero(); n_pop * m];
    let mut eta = vec![S::zero(); n_pop * ch];
    let mut incs: Vec<Option<(S, f64)>> = vec![None; n_pop];

    let mut store = opts.store.then(|| FilterStore {
        initial: belief.iter().map(|b| b.value()).collect(),
        predicted: vec![0.0; horizon * n_pop * m],
        predictive: vec![0.0; horizon * n_pop * cols],
        filtered: vec![0.0; horizon * n_pop * m],
    });
    let mut increments = Vec::with_capacity(if opts.trace { horizon * n_pop } else { 0 });
    let mut eta_trace = Vec::with_capacity(if opts.trace { horizon * n_pop * ch } else { 0 });
    let mut total = CompensatedSum::<S>::new();
    let mut min_mu = f64::INFINITY;

    for t in 1..=horizon {
        model.interaction(theta, &prep, &belief, &mut eta);
        let obs = y.at(t);
        let prev = &belief;
        let eta_ref = &eta;
        let emission_ref = &emission;
        let prep_ref = &prep;
        let run = |n: usize, b: &mut [S], out: StepOut<'_>| {
            let row = prep_ref.row(n);
            let e = &eta_ref[n * ch..(n + 1) * ch];
            let p = &prev[n * m..(n + 1) * m];
            let g = &emission_ref[n * m * cols..(n + 1) * m * cols];
            let o = obs[n] as usize;
            // dispatch inside the closure so each arm inlines
            match m {
                1 => step_one::<S, M, 1, 1>(model, theta, row, n, e, p, g, o, t, b, out),
                2 => step_one::<S, M, 2, 4>(model, theta, row, n, e, p, g, o, t, b, out),
                3 => step_one::<S, M, 3, 9>(model, theta, row, n, e, p, g, o, t, b, out),
                _ => step_one::<S, M, 4, 16>(model, theta, row, n, e, p, g, o, t, b, out),
            }
        };
        match store.as_mut() {
            Some(s) => {
                let pred = &mut s.predicted[(t - 1) * n_pop * m..t * n_pop * m];
                let mu = &mut s.predictive[(t - 1) * n_pop * cols..t * n_pop * cols];
                next.par_chunks_mut(m)
                    .zip(pred.par_chunks_mut(m))
                    .zip(mu.par_chunks_mut(cols))
                    .zip(incs.par_iter_mut())
                    .enumerate()
                    .with_min_len(MIN_CHUNK)
                    .for_each(|(n, (((b, p), u), inc))| {
                        let out = StepOut {
                            predicted: Some(p),
                            predictive: Some(u),
                        };
                        *inc = run(n, b, out).ok();
                    })
            }
            None => next
                .par_chunks_mut(m)
                .zip(incs.par_iter_mut())
                .enumerate()
                .with_min_len(MIN_CHUNK)
                .for_each(|(n, (b, inc))| {
                    let out = StepOut {
                        predicted: None,
                        predictive: None,
                    };
                    *inc = run(n, b, out).ok();
                }),
        }
        for (n, slot) in incs.iter().enumerate() {
            let Some((inc, mu)) = *slot else {
                return Err(Error::SupportViolation { t, individual: n });
            };
            total.add(inc);
            min_mu = min_mu.min(mu);
        }
        if opts.trace {
            increments.extend(incs.iter().flatten().map(|i| i.0.value()));
            eta_trace.extend(eta.iter().map(|e| e.value()));
        }
        if let Some(s) = store.as_mut() {
            let dst = &mut s.filtered[(t - 1) * n_pop * m..t * n_pop * m];
            for (d, b) in dst.iter_mut().zip(&next) {
                *d = b.value();
            }
        }
        std::mem::swap(&mut belief, &mut next);
    }
    Ok(Pass {
        loglik: total.total(),
        increments,
        eta: eta_trace,
        min_observed_mu: min_mu,
        store,
    })
}

/// Runs the filter, optionally keeping every belief.
pub fn cal_filter<M: IndividualModel + ?Sized>(
    model: &M,
    theta: &ParamVector,
    y: &ObservationTrajectory,
    store: bool,
) -> Result<FilterOutput> {
    check_params(model, theta)?;
    let pass = filter_pass(model, theta.values(), y, PassOptions { trace: true, store })?;
    Ok(FilterOutput {
        population: model.population(),
        states: model.num_states(),
        horizon: y.horizon(),
        channels: model.num_channels(),
        loglik: pass.loglik,
        increments: pass.increments,
        eta: pass.eta,
        min_observed_mu: pass.min_observed_mu,
        store: pass.store,
    })
}

/// Log-likelihood only; same value as [`cal_filter`].
pub fn cal_loglik<M: IndividualModel + ?Sized>(
    model: &M,
    theta: &ParamVector,
    y: &ObservationTrajectory,
) -> Result<f64> {
    check_params(model, theta)?;
    Ok(filter_pass(model, theta.values(), y, PassOptions::default())?.loglik)
}

/// Most probable filtered state per `(t, n)`, `t = 1..=T`, lowest index on ties.
pub fn classify(filter: &FilterOutput) -> Result<Vec<Vec<usize>>> {
    let store = filter.stored()?;
    let m = filter.states;
    Ok(store
        .filtered
        .chunks_exact(filter.population * m)
        .map(|row| row.chunks_exact(m).map(argmax_index).collect())
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exact::hmm_forward_loglik;
    use crate::model::{Covariates, ModelKind};
    use crate::prob::RngStream;
    use crate::simulate::{generate_covariates, simulate};
    use crate::AnyModel;

    fn setup(kind: ModelKind, n: usize, horizon: usize, seed: u64) -> (AnyModel, ParamVector, ObservationTrajectory) {
        let rng = RngStream::new(seed);
        let cov = generate_covariates(kind.covariate_kind(), n, &rng.substream(&[0])).unwrap();
        let model = kind.build(&cov, 1.0).unwrap();
        let theta = kind.reference_params(model.param_space()).unwrap();
        let (_, y) = simulate(&model, &theta, horizon, &rng.substream(&[1])).unwrap();
        (model, theta, y)
    }

    #[test]
    fn never_reported_gives_zero_loglik() {
        let (model, mut theta, _) = setup(ModelKind::HomogSis, 20, 10, 1);
        theta.set("q_S", 0.0).unwrap();
        theta.set("q_I", 0.0).unwrap();
        let y = ObservationTrajectory::new(20, 2, 10, vec![0; 200]).unwrap();
        let out = cal_filter(&model, &theta, &y, false).unwrap();
        // each increment is the log of a rounded sum of probabilities
        assert!(out.loglik.abs() <= 1e-12, "{}", out.loglik);
    }

    #[test]
    fn decoupled_filter_is_a_product_of_chains() {
        for kind in [ModelKind::SpatialSis, ModelKind::SirWellspec, ModelKind::SeirLogistic] {
            let (model, theta, y) = setup(kind, 15, 12, 2);
            let model = model.decoupled();
            let th = theta.values();
            let prep = model.prepare(th);
            let m = model.num_states();
            let zero = vec![0.0; model.num_channels()];
            let mut want = 0.0;
            for n in 0..15 {
                let mut p0 = vec![0.0; m];
                model.initial(th, prep.row(n), n, &mut p0);
                let mut k = vec![0.0; m * m];
                model.transition(th, prep.row(n), n, &zero, &mut k);
                let mut g = vec![0.0; m * (m + 1)];
                model.emission(th, prep.row(n), n, &mut g);
                let obs: Vec<usize> = (1..=12).map(|t| y.obs(t, n)).collect();
                want += hmm_forward_loglik(&p0, |_| k.clone(), &g, &obs).unwrap();
            }
            let got = cal_loglik(&model, &theta, &y).unwrap();
            assert!((got - want).abs() <= 1e-10 * want.abs(), "{kind}: {got} vs {want}");
        }
    }

    #[test]
    fn stored_beliefs_obey_prediction_and_bayes() {
        for kind in ModelKind::ALL {
            let (model, theta, y) = setup(kind, 50, 40, 3);
            let out = cal_filter(&model, &theta, &y, true).unwrap();
            let th = theta.values();
            let prep = model.prepare(th);
            let m = model.num_states();
            let ch = model.num_channels();
            for t in 1..=40 {
                for n in 0..50 {
                    let prev = out.filtered(t - 1, n).unwrap();
                    let pred = out.predicted(t, n).unwrap();
                    let mu = out.predictive(t, n).unwrap();
                    let filt = out.filtered(t, n).unwrap();
                    for v in [pred, mu, filt] {
                        assert!((v.iter().sum::<f64>() - 1.0).abs() <= 1e-10, "{kind}");
                        assert!(v.iter().all(|&x| x >= 0.0));
                    }
                    let eta = out.eta(t, n);
                    assert_eq!(eta.len(), ch);
                    let mut k = vec![0.0; m * m];
                    model.transition(th, prep.row(n), n, eta, &mut k);
                    for j in 0..m {
                        let want: f64 = (0..m).map(|x| prev[x] * k[x * m + j]).sum();
                        assert!((pred[j] - want).abs() <= 1e-14, "{kind} prediction");
                    }
                    let mut g = vec![0.0; m * (m + 1)];
                    model.emission(th, prep.row(n), n, &mut g);
                    let obs = y.obs(t, n);
                    let joint: Vec<f64> = (0..m).map(|x| pred[x] * g[x * (m + 1) + obs]).collect();
                    let evidence: f64 = joint.iter().sum();
                    for x in 0..m {
                        assert!((filt[x] - joint[x] / evidence).abs() <= 1e-12, "{kind} bayes");
                    }
                    assert!((out.increment(t, n) - evidence.ln()).abs() <= 1e-12);
                }
            }
            assert!(out.min_observed_mu > 1e-12, "{kind}");
        }
    }

    #[test]
    fn loglik_is_the_ordered_sum_of_increments() {
        let (model, theta, y) = setup(ModelKind::CommunitySis, 80, 30, 4);
        let out = cal_filter(&model, &theta, &y, false).unwrap();
        let mut sum = CompensatedSum::<f64>::new();
        out.increments.iter().for_each(|&i| sum.add(i));
        assert_eq!(sum.total(), out.loglik);
        assert_eq!(cal_loglik(&model, &theta, &y).unwrap(), out.loglik);
    }

    #[test]
    fn result_independent_of_thread_count() {
        let (model, theta, y) = setup(ModelKind::SpatialSis, 200, 20, 5);
        let run = |threads: usize| {
            rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .unwrap()
                .install(|| cal_filter(&model, &theta, &y, true).unwrap())
        };
        let one = run(1);
        for threads in [2, 8] {
            assert_eq!(run(threads), one);
        }
    }

    #[test]
    fn informative_reports_are_classified_exactly() {
        let kind = ModelKind::HomogSis;
        let (model, mut theta, _) = setup(kind, 30, 5, 6);
        for q in ["q_S", "q_I", "q_Se", "q_Sp"] {
            theta.set(q, 1.0).unwrap();
        }
        let (_, y) = simulate(&model, &theta, 15, &RngStream::new(60)).unwrap();
        let out = cal_filter(&model, &theta, &y, true).unwrap();
        let states = classify(&out).unwrap();
        for t in 1..=15 {
            for n in 0..30 {
                assert_eq!(states[t - 1][n] + 1, y.obs(t, n));
            }
        }
    }

    #[test]
    fn classify_breaks_ties_low_and_needs_storage() {
        let (model, theta, y) = setup(ModelKind::HomogSis, 3, 2, 7);
        let mut out = cal_filter(&model, &theta, &y, true).unwrap();
        let s = out.store.as_mut().unwrap();
        s.filtered[..6].copy_from_slice(&[0.9, 0.1, 0.5, 0.5, 0.2, 0.8]);
        assert_eq!(classify(&out).unwrap()[0], vec![0, 0, 1]);
        let bare = cal_filter(&model, &theta, &y, false).unwrap();
        assert!(matches!(classify(&bare), Err(Error::MissingStore)));
    }

    #[test]
    fn impossible_report_is_a_support_violation() {
        let kind = ModelKind::SeirLogistic;
        let cov = Covariates::from_columns(vec![("c1".into(), vec![0.0; 4])]).unwrap();
        let model = kind.build(&cov, 1.0).unwrap();
        let theta = kind.reference_params(model.param_space()).unwrap();
        // susceptible reports have probability zero
        let mut data = vec![0u8; 8];
        data[2] = 1;
        data[7] = 1;
        let y = ObservationTrajectory::new(4, 4, 2, data).unwrap();
        let err = cal_loglik(&model, &theta, &y).unwrap_err();
        assert!(matches!(err, Error::SupportViolation { t: 1, individual: 2 }), "{err}");
    }

    #[test]
    fn mismatched_data_rejected() {
        let (model, theta, _) = setup(ModelKind::HomogSis, 5, 2, 8);
        let y = ObservationTrajectory::new(4, 2, 2, vec![0; 8]).unwrap();
        assert!(matches!(cal_loglik(&model, &theta, &y), Err(Error::ShapeMismatch(_))));
    }

    #[test]
    fn filter_csv_layout() {
        let (model, theta, y) = setup(ModelKind::HomogSis, 2, 1, 9);
        let out = cal_filter(&model, &theta, &y, true).unwrap();
        let mut buf = Vec::new();
        out.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "t,n,state_index,pi_pred,mu,pi_filt");
        assert_eq!(lines.len(), 1 + 2 * 2);
    }
}
