//! Reference methods: a particle-filter likelihood estimator, the
//! report-driven classifiers and the scoring metrics.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cal::FilterOutput;
use crate::error::{Error, Result};
use crate::model::{check_params, IndividualModel, ParamVector};
use crate::prob::{argmax_index, sample_index, RngStream};
use crate::simulate::{LatentTrajectory, ObservationTrajectory};

/// Smallest log value used when scoring zero-probability entries.
pub const LOG_FLOOR: f64 = -745.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Proposal {
    /// Propagate with the model dynamics, weight by the emission.
    Bootstrap,
    /// Resample by the exact one-step predictive of each particle, then
    /// propagate from the observation-conditioned kernel.
    Auxiliary,
}

impl Proposal {
    pub fn as_str(self) -> &'static str {
        match self {
            Proposal::Bootstrap => "bootstrap",
            Proposal::Auxiliary => "auxiliary",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PfOutput {
    /// Log of the likelihood estimate.
    pub loglik: f64,
    /// Effective sample size of the weights at each `t` in `1..=T`.
    pub ess: Vec<f64>,
}

/// A population of `P` full latent configurations.
#[derive(Clone, Debug)]
pub struct ParticleEnsemble {
    population: usize,
    states: Vec<u8>,
}

impl ParticleEnsemble {
    pub fn len(&self) -> usize {
        self.states.len() / self.population
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn particle(&self, p: usize) -> &[u8] {
        &self.states[p * self.population..(p + 1) * self.population]
    }
}

/// Per-model quantities shared by all particles.
struct Frame<'a, M: IndividualModel + ?Sized> {
    model: &'a M,
    theta: &'a [f64],
    prep: crate::model::Prepared<f64>,
    emission: Vec<f64>,
}

impl<M: IndividualModel + ?Sized> Frame<'_, M> {
    /// Transition rows out of each individual's current state, `N x M`.
    fn rows_from(&self, x: &[u8]) -> Vec<f64> {
        let (n_pop, m, ch) = (x.len(), self.model.num_states(), self.model.num_channels());
        let mut pi = vec![0.0; n_pop * m];
        for (n, &s) in x.iter().enumerate() {
            pi[n * m + s as usize] = 1.0;
        }
        let mut eta = vec![0.0; n_pop * ch];
        self.model.interaction(self.theta, &self.prep, &pi, &mut eta);
        let mut k = vec![0.0; m * m];
        let mut rows = vec![0.0; n_pop * m];
        for (n, &s) in x.iter().enumerate() {
            self.model
                .transition(self.theta, self.prep.row(n), n, &eta[n * ch..(n + 1) * ch], &mut k);
            let from = s as usize;
            rows[n * m..(n + 1) * m].copy_from_slice(&k[from * m..(from + 1) * m]);
        }
        rows
    }

    fn emission_prob(&self, n: usize, x: usize, y: usize) -> f64 {
        let m = self.model.num_states();
        self.emission[(n * m + x) * (m + 1) + y]
    }
}

/// Particle estimate of the log-likelihood of `y` at `theta`, resampling
/// multinomially at every step.
///
/// Particle `p` draws from substream `[t, p]` of `rng`; resampling at `t`
/// draws from substream `[t]`.
pub fn pf_loglik<M: IndividualModel + ?Sized>(
    model: &M,
    theta: &ParamVector,
    y: &ObservationTrajectory,
    particles: usize,
    proposal: Proposal,
    rng: &RngStream,
) -> Result<PfOutput> {
    check_params(model, theta)?;
    crate::cal::check_data(model, y)?;
    if particles < 2 {
        return Err(Error::Config("particle count must be at least 2".into()));
    }
    let n_pop = model.population();
    let m = model.num_states();
    let th = theta.values();
    let prep = model.prepare(th);
    let mut emission = vec![0.0; n_pop * m * (m + 1)];
    for (n, g) in emission.chunks_exact_mut(m * (m + 1)).enumerate() {
        model.emission(th, prep.row(n), n, g);
    }
    let frame = Frame {
        model,
        theta: th,
        prep,
        emission,
    };

    let mut ens = ParticleEnsemble {
        population: n_pop,
        states: Vec::with_capacity(particles * n_pop),
    };
    let first: Vec<Vec<u8>> = (0..particles)
        .into_par_iter()
        .map(|p| {
            let mut r = rng.substream(&[0, p as u64]);
            let mut p0 = vec![0.0; m];
            (0..n_pop)
                .map(|n| {
                    model.initial(th, frame.prep.row(n), n, &mut p0);
                    sample_index(&p0, &mut r) as u8
                })
                .collect()
        })
        .collect();
    for x in first {
        ens.states.extend(x);
    }

    let ln_p = (particles as f64).ln();
    let mut loglik = 0.0;
    let mut ess = Vec::with_capacity(y.horizon());
    for t in 1..=y.horizon() {
        let obs = y.at(t);
        let next: Vec<u8>;
        let logw: Vec<f64>;
        match proposal {
            Proposal::Bootstrap => {
                let moved: Vec<(Vec<u8>, f64)> = (0..particles)
                    .into_par_iter()
                    .map(|p| {
                        let rows = frame.rows_from(ens.particle(p));
                        let mut r = rng.substream(&[t as u64, p as u64]);
                        let mut lw = 0.0;
                        let x: Vec<u8> = (0..n_pop)
                            .map(|n| {
                                let s = sample_index(&rows[n * m..(n + 1) * m], &mut r);
                                lw += frame.emission_prob(n, s, obs[n] as usize).ln();
                                s as u8
                            })
                            .collect();
                        (x, lw)
                    })
                    .collect();
                logw = moved.iter().map(|m| m.1).collect();
                let (inc, weights) = normalize_log_weights(&logw, t)?;
                loglik += inc - ln_p;
                ess.push(effective_size(&weights));
                let picks = multinomial(&weights, &mut rng.substream(&[t as u64]));
                next = picks.iter().flat_map(|&a| moved[a].0.iter().copied()).collect();
            }
            Proposal::Auxiliary => {
                // unnormalised conditional rows K(x, .) * G(., y) and their masses
                let looked: Vec<(Vec<f64>, f64)> = (0..particles)
                    .into_par_iter()
                    .map(|p| {
                        let mut rows = frame.rows_from(ens.particle(p));
                        let mut lw = 0.0;
                        for n in 0..n_pop {
                            let row = &mut rows[n * m..(n + 1) * m];
                            let mut mass = 0.0;
                            for (s, v) in row.iter_mut().enumerate() {
                                *v *= frame.emission_prob(n, s, obs[n] as usize);
                                mass += *v;
                            }
                            lw += mass.ln();
                            if mass > 0.0 {
                                row.iter_mut().for_each(|v| *v /= mass);
                            }
                        }
                        (rows, lw)
                    })
                    .collect();
                logw = looked.iter().map(|l| l.1).collect();
                let (inc, weights) = normalize_log_weights(&logw, t)?;
                loglik += inc - ln_p;
                ess.push(effective_size(&weights));
                let picks = multinomial(&weights, &mut rng.substream(&[t as u64]));
                let moved: Vec<Vec<u8>> = picks
                    .par_iter()
                    .enumerate()
                    .map(|(p, &a)| {
                        let rows = &looked[a].0;
                        let mut r = rng.substream(&[t as u64, p as u64]);
                        (0..n_pop)
                            .map(|n| sample_index(&rows[n * m..(n + 1) * m], &mut r) as u8)
                            .collect()
                    })
                    .collect();
                next = moved.concat();
            }
        }
        ens.states = next;
    }
    Ok(PfOutput { loglik, ess })
}

/// Returns `ln sum exp(logw)` and the normalised weights.
fn normalize_log_weights(logw: &[f64], t: usize) -> Result<(f64, Vec<f64>)> {
    let max = logw.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return Err(Error::Degenerate { t });
    }
    let w: Vec<f64> = logw.iter().map(|l| (l - max).exp()).collect();
    let total: f64 = w.iter().sum();
    Ok((max + total.ln(), w.into_iter().map(|x| x / total).collect()))
}

fn effective_size(w: &[f64]) -> f64 {
    1.0 / w.iter().map(|x| x * x).sum::<f64>()
}

/// `w.len()` ancestor indices drawn independently from `w`.
fn multinomial(w: &[f64], rng: &mut RngStream) -> Vec<usize> {
    let mut cdf: Vec<f64> = w
        .iter()
        .scan(0.0, |acc, x| {
            *acc += x;
            Some(*acc)
        })
        .collect();
    let last = cdf.len() - 1;
    cdf[last] = f64::INFINITY;
    (0..w.len())
        .map(|_| {
            let u = rng.uniform();
            let i = cdf.partition_point(|&c| c <= u);
            if w[i] > 0.0 {
                i
            } else {
                // rounding pushed u past the last positive weight
                w.iter().rposition(|&x| x > 0.0).unwrap_or(i)
            }
        })
        .collect()
}

/// Per-individual probability vectors for `t` in `1..=T`, stored `T x N x M`.
#[derive(Clone, Debug, PartialEq)]
pub struct StatePredictions {
    population: usize,
    states: usize,
    horizon: usize,
    probs: Vec<f64>,
}

impl StatePredictions {
    pub fn new(population: usize, states: usize, horizon: usize, probs: Vec<f64>) -> Result<Self> {
        if probs.len() != population * states * horizon {
            return Err(Error::ShapeMismatch(format!(
                "{} entries for {horizon} x {population} x {states} predictions",
                probs.len()
            )));
        }
        Ok(StatePredictions {
            population,
            states,
            horizon,
            probs,
        })
    }

    /// Filtered beliefs of a stored filter run.
    pub fn from_filter(out: &FilterOutput) -> Result<Self> {
        let (n_pop, m, horizon) = (out.population(), out.states(), out.horizon());
        let mut probs = Vec::with_capacity(horizon * n_pop * m);
        for t in 1..=horizon {
            for n in 0..n_pop {
                probs.extend_from_slice(out.filtered(t, n)?);
            }
        }
        Self::new(n_pop, m, horizon, probs)
    }

    pub fn population(&self) -> usize {
        self.population
    }

    pub fn states(&self) -> usize {
        self.states
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    /// Prediction for individual `n` at `t` in `1..=T`.
    pub fn get(&self, t: usize, n: usize) -> &[f64] {
        let i = ((t - 1) * self.population + n) * self.states;
        &self.probs[i..i + self.states]
    }
}

/// Report-driven classifier: the report when there is one, otherwise the
/// current guess. A report sets the guess to `confidence` on the reported
/// state and spreads the rest evenly; guesses start uniform.
pub fn previous_guess(y: &ObservationTrajectory, confidence: f64) -> Result<StatePredictions> {
    if !(confidence > 0.0 && confidence < 1.0) {
        return Err(Error::Config(format!(
            "confidence must lie in (0, 1), got {confidence}"
        )));
    }
    let (n_pop, m, horizon) = (y.population(), y.states(), y.horizon());
    let other = (1.0 - confidence) / (m - 1) as f64;
    let mut guess = vec![1.0 / m as f64; n_pop * m];
    let mut probs = Vec::with_capacity(horizon * n_pop * m);
    for t in 1..=horizon {
        for (n, &o) in y.at(t).iter().enumerate() {
            let g = &mut guess[n * m..(n + 1) * m];
            if o == 0 {
                probs.extend_from_slice(g);
            } else {
                let s = o as usize - 1;
                probs.extend((0..m).map(|i| f64::from(u8::from(i == s))));
                for (i, v) in g.iter_mut().enumerate() {
                    *v = if i == s { confidence } else { other };
                }
            }
        }
    }
    StatePredictions::new(n_pop, m, horizon, probs)
}

/// The report when there is one, otherwise uniform.
pub fn random_baseline(y: &ObservationTrajectory) -> StatePredictions {
    let (n_pop, m, horizon) = (y.population(), y.states(), y.horizon());
    let mut probs = Vec::with_capacity(horizon * n_pop * m);
    for t in 1..=horizon {
        for &o in y.at(t) {
            probs.extend((0..m).map(|i| match o {
                0 => 1.0 / m as f64,
                r => f64::from(u8::from(i + 1 == r as usize)),
            }));
        }
    }
    StatePredictions::new(n_pop, m, horizon, probs).expect("shape by construction")
}

fn check_shapes(x: &LatentTrajectory, p: &StatePredictions) -> Result<()> {
    if (x.population(), x.states(), x.horizon()) != (p.population, p.states, p.horizon) {
        return Err(Error::ShapeMismatch(format!(
            "latent path is {} x {} x {}, predictions are {} x {} x {}",
            x.horizon(),
            x.population(),
            x.states(),
            p.horizon,
            p.population,
            p.states
        )));
    }
    Ok(())
}

/// Mean negative log-probability of the true state over `t` in `1..=T`.
pub fn cross_entropy(x: &LatentTrajectory, p: &StatePredictions) -> Result<f64> {
    check_shapes(x, p)?;
    let mut total = 0.0;
    for t in 1..=p.horizon {
        for (n, &s) in x.at(t).iter().enumerate() {
            total -= p.get(t, n)[s as usize].ln().max(LOG_FLOOR);
        }
    }
    Ok(total / (p.horizon * p.population) as f64)
}

/// Percentage of `(t, n)` whose most probable state is the true one.
pub fn accuracy(x: &LatentTrajectory, p: &StatePredictions) -> Result<f64> {
    check_shapes(x, p)?;
    let mut hits = 0usize;
    for t in 1..=p.horizon {
        for (n, &s) in x.at(t).iter().enumerate() {
            hits += usize::from(argmax_index(p.get(t, n)) == s as usize);
        }
    }
    Ok(100.0 * hits as f64 / (p.horizon * p.population) as f64)
}

#[cfg(test)]
mod tests;
