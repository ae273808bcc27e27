//! Spatial susceptible-infective-removed model with an always-unreported
//! subpopulation, in a point-kernel and a community-kernel variant.

use std::sync::Arc;

use super::layout::Layout;
use crate::error::Result;
use crate::model::params::entry;
use crate::model::{Covariates, Domain, IndividualModel, ParamSpace, Prepared};
use crate::scalar::Real;

const P0: usize = 0;
const BETA: usize = 1;
const B_S: usize = 2;
const B_I: usize = 3;
const GAMMA: usize = 4;
const B_R: usize = 5;
const PHI: usize = 6;
const EPS: usize = 7;
const Q_S: usize = 8;
const Q_I: usize = 9;
const Q_R: usize = 10;

const A: usize = 0;
const RATE: usize = 1;
const RECOVER: usize = 2;
const STAY: usize = 3;

/// Region seeded at time zero: `z1 <= 5` and `z2 >= 8`.
pub fn in_seed_region(z: [f64; 2]) -> bool {
    z[0] <= 5.0 && z[1] >= 8.0
}

#[derive(Clone, Debug)]
pub struct SirModel {
    name: &'static str,
    layout: Layout,
    space: Arc<ParamSpace>,
    c: Vec<f64>,
    seeded: Vec<bool>,
    observed: Vec<bool>,
    h: f64,
    bound: f64,
}

fn space() -> ParamSpace {
    ParamSpace::new(vec![
        entry("p0", Domain::UnitInterval, 0.01, 0.99),
        entry("beta", Domain::Positive, 0.01, 20.0),
        entry("b_S", Domain::Real, -3.0, 3.0),
        entry("b_I", Domain::Real, -3.0, 3.0),
        entry("gamma", Domain::Positive, 0.001, 5.0),
        entry("b_R", Domain::Real, -3.0, 3.0),
        entry("phi", Domain::Positive, 0.1, 10.0),
        entry("eps", Domain::Positive, 1e-6, 1.0),
        entry("q_S", Domain::UnitInterval, 0.01, 0.99),
        entry("q_I", Domain::UnitInterval, 0.01, 0.99),
        entry("q_R", Domain::UnitInterval, 0.01, 0.99),
    ])
}

impl SirModel {
    /// Gaussian weights on individual positions.
    pub fn well_specified(cov: &Covariates, h: f64) -> Result<Self> {
        Self::build("sir_wellspec", Layout::points(cov)?, cov, h)
    }

    /// Gaussian weights on community centroids, with the within-community
    /// mean distance standing in for zero centroid distance.
    pub fn misspecified(cov: &Covariates, h: f64) -> Result<Self> {
        Self::build("sir_misspec", Layout::communities(cov, true)?, cov, h)
    }

    fn build(name: &'static str, layout: Layout, cov: &Covariates, h: f64) -> Result<Self> {
        let c = cov.require_column("c1")?;
        let seeded = cov
            .require_positions()?
            .iter()
            .map(|&z| in_seed_region(z))
            .collect();
        let observed = cov
            .column("unobserved")
            .map(|u| u.iter().map(|&x| x == 0.0).collect())
            .unwrap_or_else(|| vec![true; c.len()]);
        let space = Arc::new(space());
        let b_max = space.upper("b_I").abs().max(space.lower("b_I").abs());
        let a_max = c.iter().map(|x| (x.abs() * b_max).exp()).fold(0.0, f64::max);
        let bound = a_max * layout.max_weight(space.lower("phi"));
        Ok(SirModel {
            name,
            layout,
            space,
            c,
            seeded,
            observed,
            h,
            bound,
        })
    }
}

impl IndividualModel for SirModel {
    fn name(&self) -> &str {
        self.name
    }

    fn num_states(&self) -> usize {
        3
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
        for (row, &c) in out.chunks_exact_mut(4).zip(&self.c) {
            row[A] = theta[B_I].scale(c).exp();
            row[RATE] = (theta[BETA] * theta[B_S].scale(c).exp()).scale(self.h);
            let hazard = (theta[GAMMA] * theta[B_R].scale(c).exp()).scale(self.h);
            row[RECOVER] = hazard.one_minus_exp_neg();
            row[STAY] = (-hazard).exp();
        }
    }

    fn prepare<S: Real>(&self, theta: &[S]) -> Prepared<S> {
        let mut factors = vec![S::zero(); self.population() * 4];
        self.factors(theta, &mut factors);
        let pairs = self.layout.pair_table(theta[PHI].value(), S::DIFFERENTIABLE);
        Prepared {
            factors,
            width: 4,
            pairs,
        }
    }

    fn initial<S: Real>(&self, theta: &[S], _row: &[S], n: usize, out: &mut [S]) {
        if self.seeded[n] {
            out[0] = S::one() - theta[P0];
            out[1] = theta[P0];
        } else {
            out[0] = S::one();
            out[1] = S::zero();
        }
        out[2] = S::zero();
    }

    fn kernel<S: Real>(&self, theta: &[S], n: usize, k: usize, out: &mut [S]) {
        out.fill(S::zero());
        out[1] = theta[B_I].scale(self.c[k]).exp() * self.layout.weight(n, k, theta[PHI]);
    }

    fn interaction<S: Real>(&self, theta: &[S], prep: &Prepared<S>, pi: &[S], out: &mut [S]) {
        let s: Vec<S> = (0..self.population())
            .map(|k| prep.row(k)[A] * pi[3 * k + 1])
            .collect();
        self.layout
            .spread(&s, theta[PHI], prep.pairs.as_ref(), out, 1);
    }

    fn transition<S: Real>(&self, theta: &[S], row: &[S], _n: usize, eta: &[S], out: &mut [S]) {
        let hazard = row[RATE] * eta[0] + theta[EPS].scale(self.h);
        out.fill(S::zero());
        out[0] = (-hazard).exp();
        out[1] = hazard.one_minus_exp_neg();
        out[4] = row[STAY];
        out[5] = row[RECOVER];
        out[8] = S::one();
    }

    fn emission<S: Real>(&self, theta: &[S], _row: &[S], n: usize, out: &mut [S]) {
        out.fill(S::zero());
        for (x, q) in [Q_S, Q_I, Q_R].into_iter().enumerate() {
            if self.observed[n] {
                out[4 * x] = S::one() - theta[q];
                out[4 * x + 1 + x] = theta[q];
            } else {
                out[4 * x] = S::one();
            }
        }
    }

    fn initial_support(&self, n: usize) -> Vec<bool> {
        vec![true, self.seeded[n], false]
    }

    fn transition_support(&self, _n: usize) -> Vec<bool> {
        vec![true, true, false, false, true, true, false, false, true]
    }

    fn emission_support(&self, n: usize) -> Vec<bool> {
        let o = self.observed[n];
        (0..3)
            .flat_map(|x| (0..4).map(move |j| j == 0 || (o && j == x + 1)))
            .collect()
    }
}
