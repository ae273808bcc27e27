//! Concrete models and a closed enum dispatching over them.

mod culling;
mod layout;
mod logistic;
mod sir;
mod sis;

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

pub use culling::CullingModel;
pub use logistic::{LogisticModel, Stages};
pub use sir::{in_seed_region, SirModel};
pub use sis::SisModel;

use crate::error::{Error, Result};
use crate::model::{Covariates, IndividualModel, ParamSpace, ParamVector, Prepared};
use crate::scalar::Real;
use crate::simulate::CovariateKind;

#[cfg(test)]
mod tests;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    HomogSis,
    SpatialSis,
    CommunitySis,
    SirWellspec,
    SirMisspec,
    SisLogistic,
    SeirLogistic,
    CullingSir,
}

impl ModelKind {
    pub const ALL: [ModelKind; 8] = [
        ModelKind::HomogSis,
        ModelKind::SpatialSis,
        ModelKind::CommunitySis,
        ModelKind::SirWellspec,
        ModelKind::SirMisspec,
        ModelKind::SisLogistic,
        ModelKind::SeirLogistic,
        ModelKind::CullingSir,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ModelKind::HomogSis => "homog_sis",
            ModelKind::SpatialSis => "spatial_sis",
            ModelKind::CommunitySis => "community_sis",
            ModelKind::SirWellspec => "sir_wellspec",
            ModelKind::SirMisspec => "sir_misspec",
            ModelKind::SisLogistic => "sis_logistic",
            ModelKind::SeirLogistic => "seir_logistic",
            ModelKind::CullingSir => "culling_sir",
        }
    }

    /// Number of latent states.
    pub fn num_states(self) -> usize {
        match self {
            ModelKind::HomogSis
            | ModelKind::SpatialSis
            | ModelKind::CommunitySis
            | ModelKind::SisLogistic => 2,
            ModelKind::SirWellspec | ModelKind::SirMisspec | ModelKind::CullingSir => 3,
            ModelKind::SeirLogistic => 4,
        }
    }

    /// Synthetic covariate layout the model is calibrated on.
    pub fn covariate_kind(self) -> CovariateKind {
        match self {
            ModelKind::HomogSis | ModelKind::SisLogistic | ModelKind::SeirLogistic => {
                CovariateKind::GaussianScalar
            }
            ModelKind::SpatialSis | ModelKind::SirWellspec | ModelKind::SirMisspec => {
                CovariateKind::SpatialMixture
            }
            ModelKind::CommunitySis => CovariateKind::Community,
            ModelKind::CullingSir => CovariateKind::SyntheticFarms,
        }
    }

    /// Binds the model to a population's covariates with step length `h`.
    pub fn build(self, cov: &Covariates, h: f64) -> Result<AnyModel> {
        if !(h > 0.0 && h.is_finite()) {
            return Err(Error::OutOfDomain {
                name: "h".into(),
                value: h,
            });
        }
        Ok(match self {
            ModelKind::HomogSis => AnyModel::Sis(SisModel::homogeneous(cov, h)?),
            ModelKind::SpatialSis => AnyModel::Sis(SisModel::spatial(cov, h)?),
            ModelKind::CommunitySis => AnyModel::Sis(SisModel::community(cov, h)?),
            ModelKind::SirWellspec => AnyModel::Sir(SirModel::well_specified(cov, h)?),
            ModelKind::SirMisspec => AnyModel::Sir(SirModel::misspecified(cov, h)?),
            ModelKind::SisLogistic => AnyModel::Logistic(LogisticModel::new(Stages::Sis, cov, h)?),
            ModelKind::SeirLogistic => {
                AnyModel::Logistic(LogisticModel::new(Stages::Seir, cov, h)?)
            }
            ModelKind::CullingSir => AnyModel::Culling(CullingModel::new(cov, h)?),
        })
    }

    /// Reference parameter values used to generate synthetic data.
    pub fn reference_values(self) -> Vec<(&'static str, f64)> {
        let ln99 = 99f64.ln();
        match self {
            ModelKind::HomogSis => vec![
                ("p0", 0.01),
                ("beta", 2.0),
                ("b_S", 0.5),
                ("b_I", 1.0),
                ("gamma", 0.1),
                ("b_R", -0.5),
                ("q_S", 0.2),
                ("q_I", 0.5),
                ("q_Se", 0.9),
                ("q_Sp", 0.95),
            ],
            ModelKind::SpatialSis | ModelKind::CommunitySis => vec![
                ("p0", 0.01),
                ("beta", 2.0),
                ("b_S", 0.5),
                ("b_I", 1.0),
                ("gamma", 0.1),
                ("b_R", -0.5),
                ("phi", 1.0),
                ("eps", 1e-4),
                ("q_S", 0.2),
                ("q_I", 0.5),
                ("q_Se", 0.9),
                ("q_Sp", 0.95),
            ],
            ModelKind::SirWellspec | ModelKind::SirMisspec => vec![
                ("p0", 0.5),
                ("beta", 3.0),
                ("b_S", 0.5),
                ("b_I", 1.0),
                ("gamma", 0.1),
                ("b_R", -0.1),
                ("phi", 1.5),
                ("eps", 1e-4),
                ("q_S", 0.1),
                ("q_I", 0.2),
                ("q_R", 0.5),
            ],
            ModelKind::SisLogistic => vec![
                ("b0_0", -ln99),
                ("b0_1", 0.0),
                ("eps", 0.001),
                ("b_S_0", -1.0),
                ("b_S_1", 2.0),
                ("b_R_0", -1.0),
                ("b_R_1", -1.0),
                ("q_S", 0.6),
                ("q_I", 0.4),
            ],
            ModelKind::SeirLogistic => vec![
                ("b0_0", -ln99),
                ("b0_1", 0.0),
                ("eps", 0.001),
                ("b_S_0", -1.0),
                ("b_S_1", 2.0),
                ("rho", 0.2),
                ("b_R_0", -1.0),
                ("b_R_1", -1.0),
                ("q_S", 0.0),
                ("q_E", 0.0),
                ("q_I", 0.4),
                ("q_R", 0.6),
            ],
            ModelKind::CullingSir => vec![
                ("tau", 0.05),
                ("beta", 0.5),
                ("b_S_0", 0.2),
                ("b_S_1", 0.1),
                ("b_I_0", 0.2),
                ("b_I_1", 0.1),
                ("phi", 1.0),
                ("eps", 1e-4),
                ("gamma", 0.3),
                ("psi", 1.0),
                ("rho", 0.5),
                ("q_I", 0.7),
            ],
        }
    }

    /// Parameters treated as known when calibrating against reference data.
    pub fn default_frozen(self) -> &'static [&'static str] {
        match self {
            ModelKind::HomogSis => &["p0", "q_Se", "q_Sp"],
            ModelKind::SpatialSis | ModelKind::CommunitySis => &["p0", "eps", "q_Se", "q_Sp"],
            ModelKind::SirWellspec | ModelKind::SirMisspec => &["eps"],
            ModelKind::SisLogistic => &[],
            ModelKind::SeirLogistic => &["q_S", "q_E"],
            ModelKind::CullingSir => &[],
        }
    }

    /// Reference values with the default frozen set applied.
    pub fn reference_params(self, space: &Arc<ParamSpace>) -> Result<ParamVector> {
        let mut values = vec![0.0; space.len()];
        for (name, v) in self.reference_values() {
            let i = space
                .index_of(name)
                .ok_or_else(|| Error::Config(format!("unknown parameter `{name}`")))?;
            values[i] = v;
        }
        let mut p = ParamVector::new(space.clone(), values)?;
        p.freeze(self.default_frozen())?;
        Ok(p)
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ModelKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| {
                let known: Vec<&str> = ModelKind::ALL.iter().map(|k| k.as_str()).collect();
                Error::Config(format!("unknown model `{s}` (known: {})", known.join(", ")))
            })
    }
}

/// Any zoo model, optionally with its interaction switched off.
#[derive(Clone, Debug)]
pub enum AnyModel {
    Sis(SisModel),
    Sir(SirModel),
    Logistic(LogisticModel),
    Culling(CullingModel),
    /// Same model with `d = 0`, so every individual evolves independently.
    Decoupled(Box<AnyModel>),
}

impl AnyModel {
    pub fn decoupled(self) -> AnyModel {
        match self {
            AnyModel::Decoupled(_) => self,
            other => AnyModel::Decoupled(Box::new(other)),
        }
    }

    pub fn is_decoupled(&self) -> bool {
        matches!(self, AnyModel::Decoupled(_))
    }
}

macro_rules! dispatch {
    ($self:ident, $m:ident => $e:expr) => {
        match $self {
            AnyModel::Sis($m) => $e,
            AnyModel::Sir($m) => $e,
            AnyModel::Logistic($m) => $e,
            AnyModel::Culling($m) => $e,
            AnyModel::Decoupled(inner) => {
                let $m = inner.as_ref();
                $e
            }
        }
    };
}

impl IndividualModel for AnyModel {
    fn name(&self) -> &str {
        dispatch!(self, m => m.name())
    }

    fn num_states(&self) -> usize {
        dispatch!(self, m => m.num_states())
    }

    fn num_channels(&self) -> usize {
        dispatch!(self, m => m.num_channels())
    }

    fn population(&self) -> usize {
        dispatch!(self, m => m.population())
    }

    fn param_space(&self) -> &Arc<ParamSpace> {
        dispatch!(self, m => m.param_space())
    }

    fn interaction_bound(&self) -> f64 {
        dispatch!(self, m => m.interaction_bound())
    }

    fn num_factors(&self) -> usize {
        dispatch!(self, m => m.num_factors())
    }

    fn factors<S: Real>(&self, theta: &[S], out: &mut [S]) {
        dispatch!(self, m => m.factors(theta, out))
    }

    fn prepare<S: Real>(&self, theta: &[S]) -> Prepared<S> {
        match self {
            AnyModel::Decoupled(inner) => {
                let mut p = inner.prepare(theta);
                p.pairs = None;
                p
            }
            _ => dispatch!(self, m => m.prepare(theta)),
        }
    }

    fn initial<S: Real>(&self, theta: &[S], row: &[S], n: usize, out: &mut [S]) {
        dispatch!(self, m => m.initial(theta, row, n, out))
    }

    fn kernel<S: Real>(&self, theta: &[S], n: usize, k: usize, out: &mut [S]) {
        match self {
            AnyModel::Decoupled(_) => out.fill(S::zero()),
            _ => dispatch!(self, m => m.kernel(theta, n, k, out)),
        }
    }

    fn interaction<S: Real>(&self, theta: &[S], prep: &Prepared<S>, pi: &[S], out: &mut [S]) {
        match self {
            AnyModel::Decoupled(_) => out.fill(S::zero()),
            _ => dispatch!(self, m => m.interaction(theta, prep, pi, out)),
        }
    }

    fn transition<S: Real>(&self, theta: &[S], row: &[S], n: usize, eta: &[S], out: &mut [S]) {
        dispatch!(self, m => m.transition(theta, row, n, eta, out))
    }

    fn emission<S: Real>(&self, theta: &[S], row: &[S], n: usize, out: &mut [S]) {
        dispatch!(self, m => m.emission(theta, row, n, out))
    }

    fn initial_support(&self, n: usize) -> Vec<bool> {
        dispatch!(self, m => m.initial_support(n))
    }

    fn transition_support(&self, n: usize) -> Vec<bool> {
        dispatch!(self, m => m.transition_support(n))
    }

    fn emission_support(&self, n: usize) -> Vec<bool> {
        dispatch!(self, m => m.emission_support(n))
    }
}
