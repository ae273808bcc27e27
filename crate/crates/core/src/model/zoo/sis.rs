//! Susceptible-infective-susceptible models with regression-linked rates.

use std::sync::Arc;

use super::layout::Layout;
use crate::error::Result;
use crate::model::params::entry;
use crate::model::{Covariates, Domain, IndividualModel, ParamSpace, Prepared};
use crate::scalar::Real;

#[derive(Clone, Copy, Debug)]
struct Slots {
    p0: usize,
    beta: usize,
    b_s: usize,
    b_i: usize,
    gamma: usize,
    b_r: usize,
    phi: Option<usize>,
    eps: Option<usize>,
    q_s: usize,
    q_i: usize,
    q_se: usize,
    q_sp: usize,
}

const A: usize = 0;
const RATE: usize = 1;
const RECOVER: usize = 2;
const STAY: usize = 3;

/// Two-state model with infection hazard `beta e^{c b_S} eta (+ eps)`,
/// recovery hazard `gamma e^{c b_R}` and a sensitivity/specificity
/// observation model. Homogeneous, spatial and community mixing share it.
#[derive(Clone, Debug)]
pub struct SisModel {
    name: &'static str,
    layout: Layout,
    space: Arc<ParamSpace>,
    slots: Slots,
    c: Vec<f64>,
    h: f64,
    bound: f64,
}

fn space(spatial: bool) -> ParamSpace {
    let mut e = vec![
        entry("p0", Domain::UnitInterval, 0.01, 0.99),
        entry("beta", Domain::Positive, 0.01, 20.0),
        entry("b_S", Domain::Real, -3.0, 3.0),
        entry("b_I", Domain::Real, -3.0, 3.0),
        entry("gamma", Domain::Positive, 0.001, 5.0),
        entry("b_R", Domain::Real, -3.0, 3.0),
    ];
    if spatial {
        e.push(entry("phi", Domain::Positive, 0.1, 10.0));
        e.push(entry("eps", Domain::Positive, 1e-6, 1.0));
    }
    for q in ["q_S", "q_I", "q_Se", "q_Sp"] {
        e.push(entry(q, Domain::UnitInterval, 0.01, 0.99));
    }
    ParamSpace::new(e)
}

impl SisModel {
    pub fn homogeneous(cov: &Covariates, h: f64) -> Result<Self> {
        Self::build("homog_sis", Layout::Homogeneous, cov, h)
    }

    pub fn spatial(cov: &Covariates, h: f64) -> Result<Self> {
        Self::build("spatial_sis", Layout::points(cov)?, cov, h)
    }

    pub fn community(cov: &Covariates, h: f64) -> Result<Self> {
        Self::build("community_sis", Layout::communities(cov, false)?, cov, h)
    }

    fn build(name: &'static str, layout: Layout, cov: &Covariates, h: f64) -> Result<Self> {
        let c = cov.require_column("c1")?;
        let spatial = layout.is_spatial();
        let space = Arc::new(space(spatial));
        let at = |s: &str| space.index_of(s).expect("declared");
        let slots = Slots {
            p0: at("p0"),
            beta: at("beta"),
            b_s: at("b_S"),
            b_i: at("b_I"),
            gamma: at("gamma"),
            b_r: at("b_R"),
            phi: space.index_of("phi"),
            eps: space.index_of("eps"),
            q_s: at("q_S"),
            q_i: at("q_I"),
            q_se: at("q_Se"),
            q_sp: at("q_Sp"),
        };
        let b_max = space.upper("b_I").abs().max(space.lower("b_I").abs());
        let phi_min = if spatial { space.lower("phi") } else { 1.0 };
        let a_max = c.iter().map(|x| (x.abs() * b_max).exp()).fold(0.0, f64::max);
        let bound = a_max * layout.max_weight(phi_min);
        Ok(SisModel {
            name,
            layout,
            space,
            slots,
            c,
            h,
            bound,
        })
    }

    fn bandwidth<S: Real>(&self, theta: &[S]) -> S {
        self.slots.phi.map_or(S::one(), |i| theta[i])
    }
}

impl IndividualModel for SisModel {
    fn name(&self) -> &str {
        self.name
    }

    fn num_states(&self) -> usize {
        2
    }

    fn population(&self) -> usize {
        self.c.len()
    }

    fn param_space(&self) -> &Arc<ParamSpace> {
        &self.space
    }

    fn interaction_bound(&self) -> f64 {
        self.bound
    }

    fn num_factors(&self) -> usize {
        4
    }

    fn factors<S: Real>(&self, theta: &[S], out: &mut [S]) {
        let s = &self.slots;
        let (beta, gamma) = (theta[s.beta], theta[s.gamma]);
        for (row, &c) in out.chunks_exact_mut(4).zip(&self.c) {
            row[A] = theta[s.b_i].scale(c).exp();
            row[RATE] = (beta * theta[s.b_s].scale(c).exp()).scale(self.h);
            let hazard = (gamma * theta[s.b_r].scale(c).exp()).scale(self.h);
            row[RECOVER] = hazard.one_minus_exp_neg();
            row[STAY] = (-hazard).exp();
        }
    }

    fn prepare<S: Real>(&self, theta: &[S]) -> Prepared<S> {
        let mut factors = vec![S::zero(); self.population() * 4];
        self.factors(theta, &mut factors);
        let pairs = self
            .layout
            .pair_table(self.bandwidth(theta).value(), S::DIFFERENTIABLE);
        Prepared {
            factors,
            width: 4,
            pairs,
        }
    }

    fn initial<S: Real>(&self, theta: &[S], _row: &[S], _n: usize, out: &mut [S]) {
        let p0 = theta[self.slots.p0];
        out[0] = S::one() - p0;
        out[1] = p0;
    }

    fn kernel<S: Real>(&self, theta: &[S], n: usize, k: usize, out: &mut [S]) {
        let a = theta[self.slots.b_i].scale(self.c[k]).exp();
        out[0] = S::zero();
        out[1] = a * self.layout.weight(n, k, self.bandwidth(theta));
    }

    fn interaction<S: Real>(&self, theta: &[S], prep: &Prepared<S>, pi: &[S], out: &mut [S]) {
        let s: Vec<S> = (0..self.population())
            .map(|k| prep.row(k)[A] * pi[2 * k + 1])
            .collect();
        self.layout
            .spread(&s, self.bandwidth(theta), prep.pairs.as_ref(), out, 1);
    }

    fn transition<S: Real>(&self, theta: &[S], row: &[S], _n: usize, eta: &[S], out: &mut [S]) {
        let mut hazard = row[RATE] * eta[0];
        if let Some(e) = self.slots.eps {
            hazard += theta[e].scale(self.h);
        }
        out[0] = (-hazard).exp();
        out[1] = hazard.one_minus_exp_neg();
        out[2] = row[RECOVER];
        out[3] = row[STAY];
    }

    fn emission<S: Real>(&self, theta: &[S], _row: &[S], _n: usize, out: &mut [S]) {
        let s = &self.slots;
        let (qs, qi, se, sp) = (theta[s.q_s], theta[s.q_i], theta[s.q_se], theta[s.q_sp]);
        out[0] = S::one() - qs;
        out[1] = qs * sp;
        out[2] = qs * (S::one() - sp);
        out[3] = S::one() - qi;
        out[4] = qi * (S::one() - se);
        out[5] = qi * se;
    }

    fn initial_support(&self, _n: usize) -> Vec<bool> {
        vec![true; 2]
    }

    fn transition_support(&self, _n: usize) -> Vec<bool> {
        vec![true; 4]
    }

    fn emission_support(&self, _n: usize) -> Vec<bool> {
        vec![true; 6]
    }
}
