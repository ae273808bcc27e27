//! SIR with culling: infection pressure and culling pressure are two
//! interaction channels, and the initial state reflects pre-epidemic spread.

use std::sync::Arc;

use super::layout::Layout;
use crate::error::Result;
use crate::model::params::entry;
use crate::model::{Covariates, Domain, IndividualModel, ParamSpace, Prepared};
use crate::scalar::Real;

const TAU: usize = 0;
const BETA: usize = 1;
const B_S: usize = 2;
const B_I: usize = 4;
const PHI: usize = 6;
const EPS: usize = 7;
const GAMMA: usize = 8;
const PSI: usize = 9;
const RHO: usize = 10;
const Q_I: usize = 11;

const A: usize = 0;
const RATE: usize = 1;
const PRIOR: usize = 2;

#[derive(Clone, Debug)]
pub struct CullingModel {
    layout: Layout,
    space: Arc<ParamSpace>,
    c: Vec<[f64; 2]>,
    h: f64,
    bound: f64,
}

fn space() -> ParamSpace {
    ParamSpace::new(vec![
        entry("tau", Domain::Positive, 0.001, 5.0),
        entry("beta", Domain::Positive, 0.01, 20.0),
        entry("b_S_0", Domain::Real, -1.0, 1.0),
        entry("b_S_1", Domain::Real, -1.0, 1.0),
        entry("b_I_0", Domain::Real, -1.0, 1.0),
        entry("b_I_1", Domain::Real, -1.0, 1.0),
        entry("phi", Domain::Positive, 0.1, 10.0),
        entry("eps", Domain::Positive, 1e-6, 1.0),
        entry("gamma", Domain::Positive, 0.001, 5.0),
        entry("psi", Domain::Positive, 0.1, 10.0),
        entry("rho", Domain::Positive, 0.001, 20.0),
        entry("q_I", Domain::UnitInterval, 0.01, 0.99),
    ])
}

impl CullingModel {
    /// Needs `community`, `zbar`, centroids (`m1`/`m2` or `z1`/`z2`) and the
    /// two log-herd-size columns `c1`, `c2`.
    pub fn new(cov: &Covariates, h: f64) -> Result<Self> {
        let layout = Layout::communities(cov, true)?;
        let c: Vec<[f64; 2]> = cov
            .require_column("c1")?
            .into_iter()
            .zip(cov.require_column("c2")?)
            .map(|(a, b)| [a, b])
            .collect();
        let space = Arc::new(space());
        let b_max = |s: &str| space.upper(s).abs().max(space.lower(s).abs());
        let a_max = c
            .iter()
            .map(|x| (x[0].abs() * b_max("b_I_0") + x[1].abs() * b_max("b_I_1")).exp())
            .fold(0.0, f64::max);
        let bound = (a_max * layout.max_weight(space.lower("phi")))
            .max(layout.max_weight(space.lower("psi")));
        Ok(CullingModel {
            layout,
            space,
            c,
            h,
            bound,
        })
    }

    fn dot<S: Real>(theta: &[S], at: usize, c: [f64; 2]) -> S {
        theta[at].scale(c[0]) + theta[at + 1].scale(c[1])
    }
}

impl IndividualModel for CullingModel {
    fn name(&self) -> &str {
        "culling_sir"
    }

    fn num_states(&self) -> usize {
        3
    }

    fn num_channels(&self) -> usize {
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
        3
    }

    fn factors<S: Real>(&self, theta: &[S], out: &mut [S]) {
        let n_pop = self.population();
        let a: Vec<S> = self.c.iter().map(|&c| Self::dot(theta, B_I, c).exp()).collect();
        let mut prior = vec![S::zero(); n_pop];
        self.layout.spread(&a, theta[PHI], None, &mut prior, 1);
        for (n, row) in out.chunks_exact_mut(3).enumerate() {
            row[A] = a[n];
            row[RATE] = theta[BETA] * Self::dot(theta, B_S, self.c[n]).exp();
            row[PRIOR] = prior[n] * theta[TAU];
        }
    }

    fn initial<S: Real>(&self, theta: &[S], row: &[S], _n: usize, out: &mut [S]) {
        let hazard = row[RATE] * row[PRIOR] + theta[EPS];
        out[0] = (-hazard).exp();
        out[1] = hazard.one_minus_exp_neg();
        out[2] = S::zero();
    }

    fn kernel<S: Real>(&self, theta: &[S], n: usize, k: usize, out: &mut [S]) {
        out.fill(S::zero());
        out[1] = Self::dot(theta, B_I, self.c[k]).exp() * self.layout.weight(n, k, theta[PHI]);
        out[4] = self.layout.weight(n, k, theta[PSI]);
    }

    fn interaction<S: Real>(&self, theta: &[S], prep: &Prepared<S>, pi: &[S], out: &mut [S]) {
        let infected: Vec<S> = pi.chunks_exact(3).map(|p| p[1]).collect();
        let weighted: Vec<S> = infected
            .iter()
            .enumerate()
            .map(|(k, &p)| prep.row(k)[A] * p)
            .collect();
        self.layout.spread(&weighted, theta[PHI], None, out, 2);
        self.layout.spread(&infected, theta[PSI], None, &mut out[1..], 2);
    }

    fn transition<S: Real>(&self, theta: &[S], row: &[S], _n: usize, eta: &[S], out: &mut [S]) {
        let cull = (theta[RHO] * eta[1]).scale(self.h);
        let infect = (row[RATE] * eta[0] + theta[EPS]).scale(self.h);
        let recover = theta[GAMMA].scale(self.h);
        let (p_c, keep) = (cull.one_minus_exp_neg(), (-cull).exp());
        let (p_i, no_i) = (infect.one_minus_exp_neg(), (-infect).exp());
        let (p_r, no_r) = (recover.one_minus_exp_neg(), (-recover).exp());
        out.fill(S::zero());
        out[0] = keep * no_i;
        out[1] = keep * p_i;
        out[2] = p_c;
        out[4] = keep * no_r;
        out[5] = p_c + keep * p_r;
        out[8] = S::one();
    }

    fn emission<S: Real>(&self, theta: &[S], _row: &[S], _n: usize, out: &mut [S]) {
        out.fill(S::zero());
        out[0] = S::one();
        out[4] = S::one() - theta[Q_I];
        out[6] = theta[Q_I];
        out[8] = S::one();
    }

    fn initial_support(&self, _n: usize) -> Vec<bool> {
        vec![true, true, false]
    }

    fn transition_support(&self, _n: usize) -> Vec<bool> {
        vec![true, true, true, false, true, true, false, false, true]
    }

    fn emission_support(&self, _n: usize) -> Vec<bool> {
        vec![
            true, false, false, false, true, false, true, false, true, false, false, false,
        ]
    }
}
