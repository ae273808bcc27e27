//! Reference likelihoods for small problems.
//!
//! [`exact_forward_loglik`] runs the forward recursion on the joint state of
//! the whole population, with interactions computed from each joint
//! configuration. [`enumerate_approx_model_loglik`] evaluates the likelihood of
//! the model in which each individual follows its own chain driven by the
//! filter's interaction values; it must agree with the filter.
//! [`path_sum_loglik`] is the brute-force sum over joint latent paths.

use crate::cal::{cal_filter, cal_loglik};
use crate::error::{Error, Result};
use crate::model::{check_params, interaction, IndividualModel, ParamVector};
use crate::simulate::ObservationTrajectory;

/// Largest joint state space the exact recursion accepts.
pub const MAX_JOINT_STATES: usize = 4096;

fn joint_size(m: usize, n: usize) -> Option<usize> {
    let mut size: usize = 1;
    for _ in 0..n {
        size = size.checked_mul(m)?;
    }
    Some(size)
}

/// Exact `log p(y_{1:T})` by the forward algorithm on the joint state.
pub fn exact_forward_loglik<M: IndividualModel + ?Sized>(
    model: &M,
    theta: &ParamVector,
    y: &ObservationTrajectory,
) -> Result<f64> {
    check_params(model, theta)?;
    crate::cal::check_data(model, y)?;
    let n_pop = model.population();
    let m = model.num_states();
    let ch = model.num_channels();
    let size = joint_size(m, n_pop)
        .filter(|&s| s <= MAX_JOINT_STATES)
        .ok_or(Error::TooLarge {
            states: joint_size(m, n_pop).unwrap_or(usize::MAX),
            limit: MAX_JOINT_STATES,
        })?;
    let th = theta.values();
    let prep = model.prepare(th);
    let decode = |mut s: usize, out: &mut [usize]| {
        for x in out.iter_mut() {
            *x = s % m;
            s /= m;
        }
    };

    let initial: Vec<Vec<f64>> = (0..n_pop)
        .map(|n| {
            let mut p = vec![0.0; m];
            model.initial(th, prep.row(n), n, &mut p);
            p
        })
        .collect();
    let emission: Vec<Vec<f64>> = (0..n_pop)
        .map(|n| {
            let mut g = vec![0.0; m * (m + 1)];
            model.emission(th, prep.row(n), n, &mut g);
            g
        })
        .collect();

    let mut states = vec![0usize; n_pop];
    let mut alpha: Vec<f64> = (0..size)
        .map(|s| {
            decode(s, &mut states);
            states.iter().enumerate().map(|(n, &x)| initial[n][x]).product()
        })
        .collect();

    let mut loglik = 0.0;
    let mut pi = vec![0.0; n_pop * m];
    let mut eta = vec![0.0; n_pop * ch];
    let mut k = vec![0.0; m * m];
    for t in 1..=y.horizon() {
        let mut next = vec![0.0; size];
        for (s, &a) in alpha.iter().enumerate() {
            if a == 0.0 {
                continue;
            }
            decode(s, &mut states);
            pi.fill(0.0);
            for (n, &x) in states.iter().enumerate() {
                pi[n * m + x] = 1.0;
            }
            model.interaction(th, &prep, &pi, &mut eta);
            // joint transition row as a Kronecker product, built individual by individual
            let mut row = vec![a];
            for (n, &x) in states.iter().enumerate() {
                model.transition(th, prep.row(n), n, &eta[n * ch..(n + 1) * ch], &mut k);
                let kr = &k[x * m..(x + 1) * m];
                let mut grown = Vec::with_capacity(row.len() * m);
                for &p in kr {
                    grown.extend(row.iter().map(|&r| r * p));
                }
                row = grown;
            }
            for (dst, r) in next.iter_mut().zip(&row) {
                *dst += r;
            }
        }
        let obs = y.at(t);
        for (s, a) in next.iter_mut().enumerate() {
            if *a == 0.0 {
                continue;
            }
            decode(s, &mut states);
            for (n, &x) in states.iter().enumerate() {
                *a *= emission[n][x * (m + 1) + obs[n] as usize];
            }
        }
        let c: f64 = next.iter().sum();
        if !(c > 0.0) {
            return Err(Error::ZeroLikelihood);
        }
        loglik += c.ln();
        for a in next.iter_mut() {
            *a /= c;
        }
        alpha = next;
    }
    Ok(loglik)
}

/// Log-likelihood of one hidden Markov chain with time-varying kernels.
///
/// `transition(t)` returns the `M x M` kernel into time `t`; `emission` is
/// `M x (M+1)`; `obs[t-1]` is the observation at time `t`.
pub fn hmm_forward_loglik(
    initial: &[f64],
    mut transition: impl FnMut(usize) -> Vec<f64>,
    emission: &[f64],
    obs: &[usize],
) -> Result<f64> {
    let m = initial.len();
    let mut alpha = initial.to_vec();
    let mut loglik = 0.0;
    for (i, &o) in obs.iter().enumerate() {
        let k = transition(i + 1);
        let mut next = vec![0.0; m];
        for (j, slot) in next.iter_mut().enumerate() {
            let reach: f64 = (0..m).map(|x| alpha[x] * k[x * m + j]).sum();
            *slot = reach * emission[j * (m + 1) + o];
        }
        let c: f64 = next.iter().sum();
        if !(c > 0.0) {
            return Err(Error::ZeroLikelihood);
        }
        loglik += c.ln();
        alpha = next.into_iter().map(|a| a / c).collect();
    }
    Ok(loglik)
}

/// Sum over individuals of single-chain likelihoods under the kernels
/// driven by the filter's own interaction values.
pub fn enumerate_approx_model_loglik<M: IndividualModel + ?Sized>(
    model: &M,
    theta: &ParamVector,
    y: &ObservationTrajectory,
) -> Result<f64> {
    let filter = cal_filter(model, theta, y, false)?;
    let n_pop = model.population();
    let m = model.num_states();
    let th = theta.values();
    let prep = model.prepare(th);
    let mut total = 0.0;
    for n in 0..n_pop {
        let mut p0 = vec![0.0; m];
        model.initial(th, prep.row(n), n, &mut p0);
        let mut g = vec![0.0; m * (m + 1)];
        model.emission(th, prep.row(n), n, &mut g);
        let obs: Vec<usize> = (1..=y.horizon()).map(|t| y.obs(t, n)).collect();
        total += hmm_forward_loglik(
            &p0,
            |t| {
                let mut k = vec![0.0; m * m];
                model.transition(th, prep.row(n), n, filter.eta(t, n), &mut k);
                k
            },
            &g,
            &obs,
        )?;
    }
    Ok(total)
}

/// Exact minus approximate log-likelihood.
pub fn cal_gap<M: IndividualModel + ?Sized>(
    model: &M,
    theta: &ParamVector,
    y: &ObservationTrajectory,
) -> Result<f64> {
    let exact = exact_forward_loglik(model, theta, y)?;
    Ok(exact - cal_loglik(model, theta, y)?)
}

/// Largest number of joint latent paths [`path_sum_loglik`] will enumerate.
pub const MAX_PATHS: usize = 1 << 20;

fn digits(mut code: usize, base: usize, len: usize) -> Vec<usize> {
    (0..len)
        .map(|_| {
            let d = code % base;
            code /= base;
            d
        })
        .collect()
}

/// `log p(y_{1:T})` by summing the joint density over every latent path of
/// the whole population. Only for tiny problems.
pub fn path_sum_loglik<M: IndividualModel + ?Sized>(
    model: &M,
    theta: &ParamVector,
    y: &ObservationTrajectory,
) -> Result<f64> {
    check_params(model, theta)?;
    crate::cal::check_data(model, y)?;
    let (n_pop, m, horizon) = (model.population(), model.num_states(), y.horizon());
    let cells = n_pop * (horizon + 1);
    let paths = joint_size(m, cells)
        .filter(|&p| p <= MAX_PATHS)
        .ok_or(Error::TooLarge {
            states: joint_size(m, cells).unwrap_or(usize::MAX),
            limit: MAX_PATHS,
        })?;
    let th = theta.values();
    let prep = model.prepare(th);
    let mut p0 = vec![0.0; n_pop * m];
    let mut g = vec![0.0; n_pop * m * (m + 1)];
    for n in 0..n_pop {
        model.initial(th, prep.row(n), n, &mut p0[n * m..(n + 1) * m]);
        model.emission(th, prep.row(n), n, &mut g[n * m * (m + 1)..(n + 1) * m * (m + 1)]);
    }
    let mut k = vec![0.0; m * m];
    let mut total = 0.0;
    for code in 0..paths {
        let path = digits(code, m, cells);
        let at = |t: usize, n: usize| path[t * n_pop + n];
        let mut p: f64 = (0..n_pop).map(|n| p0[n * m + at(0, n)]).product();
        for t in 1..=horizon {
            if p == 0.0 {
                break;
            }
            let mut onehot = vec![0.0; n_pop * m];
            for n in 0..n_pop {
                onehot[n * m + at(t - 1, n)] = 1.0;
            }
            let eta = interaction(model, theta, &onehot)?;
            for n in 0..n_pop {
                model.transition(th, prep.row(n), n, eta.get(n), &mut k);
                let x = at(t, n);
                p *= k[at(t - 1, n) * m + x] * g[(n * m + x) * (m + 1) + y.obs(t, n)];
            }
        }
        total += p;
    }
    if total == 0.0 {
        return Err(Error::ZeroLikelihood);
    }
    Ok(total.ln())
}
