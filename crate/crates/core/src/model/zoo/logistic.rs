//! Homogeneous-mixing SIS and SEIR with logistic-link rates on `[1, c_n]`.

use std::sync::Arc;

use super::layout::Layout;
use crate::error::Result;
use crate::model::params::entry;
use crate::model::{Covariates, Domain, IndividualModel, ParamSpace, Prepared};
use crate::scalar::Real;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Stages {
    Sis,
    Seir,
}

const SEED: usize = 0;
const SUSCEPT: usize = 1;
const RECOVER: usize = 2;
const STAY: usize = 3;

#[derive(Clone, Debug)]
pub struct LogisticModel {
    stages: Stages,
    space: Arc<ParamSpace>,
    c: Vec<f64>,
    h: f64,
    eps: usize,
    b0: usize,
    b_s: usize,
    b_r: usize,
    rho: Option<usize>,
    q: Vec<usize>,
}

fn space(stages: Stages) -> ParamSpace {
    let mut e = vec![
        entry("b0_0", Domain::Real, -6.0, 3.0),
        entry("b0_1", Domain::Real, -3.0, 3.0),
        entry("eps", Domain::Positive, 1e-6, 1.0),
        entry("b_S_0", Domain::Real, -3.0, 3.0),
        entry("b_S_1", Domain::Real, -3.0, 3.0),
    ];
    if stages == Stages::Seir {
        e.push(entry("rho", Domain::Positive, 0.01, 5.0));
    }
    e.push(entry("b_R_0", Domain::Real, -3.0, 3.0));
    e.push(entry("b_R_1", Domain::Real, -3.0, 3.0));
    let qs: &[&str] = match stages {
        Stages::Sis => &["q_S", "q_I"],
        Stages::Seir => &["q_S", "q_E", "q_I", "q_R"],
    };
    for q in qs {
        e.push(entry(q, Domain::UnitInterval, 0.01, 0.99));
    }
    ParamSpace::new(e)
}

impl LogisticModel {
    pub fn new(stages: Stages, cov: &Covariates, h: f64) -> Result<Self> {
        let c = cov.require_column("c1")?;
        let space = Arc::new(space(stages));
        let at = |s: &str| space.index_of(s).expect("declared");
        let q = ["q_S", "q_E", "q_I", "q_R"]
            .iter()
            .filter_map(|n| space.index_of(n))
            .collect();
        Ok(LogisticModel {
            stages,
            c,
            h,
            eps: at("eps"),
            b0: at("b0_0"),
            b_s: at("b_S_0"),
            b_r: at("b_R_0"),
            rho: space.index_of("rho"),
            q,
            space,
        })
    }

    fn infective(&self) -> usize {
        match self.stages {
            Stages::Sis => 1,
            Stages::Seir => 2,
        }
    }

    fn linear<S: Real>(theta: &[S], at: usize, c: f64) -> S {
        theta[at] + theta[at + 1].scale(c)
    }
}

impl IndividualModel for LogisticModel {
    fn name(&self) -> &str {
        match self.stages {
            Stages::Sis => "sis_logistic",
            Stages::Seir => "seir_logistic",
        }
    }

    fn num_states(&self) -> usize {
        match self.stages {
            Stages::Sis => 2,
            Stages::Seir => 4,
        }
    }

    fn population(&self) -> usize {
        self.c.len()
    }

    fn param_space(&self) -> &Arc<ParamSpace> {
        &self.space
    }

    fn interaction_bound(&self) -> f64 {
        1.0
    }

    fn num_factors(&self) -> usize {
        4
    }

    fn factors<S: Real>(&self, theta: &[S], out: &mut [S]) {
        for (row, &c) in out.chunks_exact_mut(4).zip(&self.c) {
            row[SEED] = Self::linear(theta, self.b0, c).logistic();
            row[SUSCEPT] = Self::linear(theta, self.b_s, c).logistic();
            let hazard = Self::linear(theta, self.b_r, c).logistic().scale(self.h);
            row[RECOVER] = hazard.one_minus_exp_neg();
            row[STAY] = (-hazard).exp();
        }
    }

    fn initial<S: Real>(&self, _theta: &[S], row: &[S], _n: usize, out: &mut [S]) {
        out.fill(S::zero());
        out[0] = S::one() - row[SEED];
        out[self.infective()] = row[SEED];
    }

    fn kernel<S: Real>(&self, _theta: &[S], _n: usize, _k: usize, out: &mut [S]) {
        out.fill(S::zero());
        out[self.infective()] = S::one();
    }

    fn interaction<S: Real>(&self, _theta: &[S], _prep: &Prepared<S>, pi: &[S], out: &mut [S]) {
        let m = self.num_states();
        let s: Vec<S> = pi.chunks_exact(m).map(|p| p[self.infective()]).collect();
        Layout::Homogeneous.spread(&s, S::one(), None, out, 1);
    }

    fn transition<S: Real>(&self, theta: &[S], row: &[S], _n: usize, eta: &[S], out: &mut [S]) {
        let hazard = ((eta[0] + theta[self.eps]) * row[SUSCEPT]).scale(self.h);
        out.fill(S::zero());
        match self.stages {
            Stages::Sis => {
                out[0] = (-hazard).exp();
                out[1] = hazard.one_minus_exp_neg();
                out[2] = row[RECOVER];
                out[3] = row[STAY];
            }
            Stages::Seir => {
                let incubate = theta[self.rho.expect("seir has rho")].scale(self.h);
                out[0] = (-hazard).exp();
                out[1] = hazard.one_minus_exp_neg();
                out[5] = (-incubate).exp();
                out[6] = incubate.one_minus_exp_neg();
                out[10] = row[STAY];
                out[11] = row[RECOVER];
                out[15] = S::one();
            }
        }
    }

    fn emission<S: Real>(&self, theta: &[S], _row: &[S], _n: usize, out: &mut [S]) {
        let m = self.num_states();
        out.fill(S::zero());
        for (x, &q) in self.q.iter().enumerate() {
            out[x * (m + 1)] = S::one() - theta[q];
            out[x * (m + 1) + 1 + x] = theta[q];
        }
    }

    fn initial_support(&self, _n: usize) -> Vec<bool> {
        match self.stages {
            Stages::Sis => vec![true, true],
            Stages::Seir => vec![true, false, true, false],
        }
    }

    fn transition_support(&self, _n: usize) -> Vec<bool> {
        let m = self.num_states();
        match self.stages {
            Stages::Sis => vec![true; 4],
            Stages::Seir => (0..m * m)
                .map(|i| {
                    let (r, c) = (i / m, i % m);
                    c == r || (c == r + 1)
                })
                .collect(),
        }
    }

    fn emission_support(&self, _n: usize) -> Vec<bool> {
        let m = self.num_states();
        (0..m)
            .flat_map(|x| (0..=m).map(move |j| j == 0 || j == x + 1))
            .collect()
    }
}
