use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::baselines::Proposal;
use crate::error::{Error, Result};
use crate::infer::{HmcConfig, OptimConfig};
use crate::model::ModelKind;

/// What a run produces, in execution order.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Task {
    Simulate,
    Filter,
    Fit,
    Hmc,
    ComparePf,
    EvalBaselines,
    Verify,
}

/// One value or a list.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum OneOrMany<T> {
    One(T),
    Many(Vec<T>),
}

impl<T: Clone> OneOrMany<T> {
    pub fn to_vec(&self) -> Vec<T> {
        match self {
            OneOrMany::One(x) => vec![x.clone()],
            OneOrMany::Many(v) => v.clone(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelBlock {
    pub kind: ModelKind,
    /// Population size, or a list to sweep.
    pub population: OneOrMany<usize>,
    pub horizon: usize,
    /// Time step `h` of the transition kernels.
    #[serde(default = "unit_step")]
    pub step: f64,
    /// Data-generating values overriding the model's reference values.
    #[serde(default)]
    pub params: BTreeMap<String, f64>,
    /// Parameters held fixed during calibration; defaults to the model's own list.
    pub frozen: Option<Vec<String>>,
    /// Fraction of individuals that are never reported.
    #[serde(default)]
    pub unobserved_fraction: f64,
}

fn unit_step() -> f64 {
    1.0
}

fn one() -> usize {
    1
}

/// User-supplied inputs replacing the synthetic ones.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataBlock {
    pub covariates: Option<PathBuf>,
    pub observations: Option<PathBuf>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PfBlock {
    pub particles: Vec<usize>,
    pub runs: usize,
    pub proposals: Vec<Proposal>,
}

impl Default for PfBlock {
    fn default() -> Self {
        PfBlock {
            particles: vec![512, 2048],
            runs: 50,
            proposals: vec![Proposal::Bootstrap],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BaselineBlock {
    pub uncertain: f64,
    pub certain: f64,
    /// Alternative model fitted and scored alongside the data-generating one.
    pub misspecified: Option<ModelKind>,
}

impl Default for BaselineBlock {
    fn default() -> Self {
        BaselineBlock {
            uncertain: 0.34,
            certain: 0.99,
            misspecified: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VerifyBlock {
    pub approx_trials: usize,
    pub decoupled_trials: usize,
    pub path_trials: usize,
}

impl Default for VerifyBlock {
    fn default() -> Self {
        VerifyBlock {
            approx_trials: 100,
            decoupled_trials: 50,
            path_trials: 20,
        }
    }
}

/// A complete experiment description.
///
/// Seeds inside the optimiser and sampler blocks are ignored: every random
/// stream of a run is derived from `seed`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "one")]
    pub replicates: usize,
    pub tasks: Vec<Task>,
    pub model: ModelBlock,
    #[serde(default)]
    pub data: DataBlock,
    #[serde(default)]
    pub optim: OptimConfig,
    /// Multi-start fit whose best point starts the sampler.
    pub warm_start: Option<OptimConfig>,
    #[serde(default)]
    pub hmc: HmcConfig,
    #[serde(default)]
    pub pf: PfBlock,
    #[serde(default)]
    pub baselines: BaselineBlock,
    #[serde(default)]
    pub verify: VerifyBlock,
}

impl ExperimentConfig {
    pub fn from_toml_str(s: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(s).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_json_str(s: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(s).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads TOML, or JSON when the extension is `.json`.
    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let parsed = if path.extension().is_some_and(|e| e == "json") {
            Self::from_json_str(&text)
        } else {
            Self::from_toml_str(&text)
        };
        parsed.map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn to_json_string(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn populations(&self) -> Vec<usize> {
        self.model.population.to_vec()
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        let pops = self.populations();
        if pops.is_empty() || pops.contains(&0) {
            return bad("model.population: every population size must be at least 1".into());
        }
        if self.model.horizon == 0 {
            return bad("model.horizon: must be at least 1".into());
        }
        if !(self.model.step > 0.0 && self.model.step.is_finite()) {
            return bad("model.step: must be positive".into());
        }
        if !(0.0..=1.0).contains(&self.model.unobserved_fraction) {
            return bad("model.unobserved_fraction: must lie in [0, 1]".into());
        }
        if self.replicates == 0 {
            return bad("replicates: must be at least 1".into());
        }
        if self.tasks.is_empty() {
            return bad("tasks: at least one task is required".into());
        }
        self.optim.validate()?;
        if let Some(w) = &self.warm_start {
            w.validate()?;
        }
        self.hmc.validate()?;
        if self.pf.particles.iter().any(|&p| p < 2) || self.pf.runs == 0 {
            return bad("pf: particle counts must be at least 2 and runs at least 1".into());
        }
        for (name, g) in [("uncertain", self.baselines.uncertain), ("certain", self.baselines.certain)] {
            if !(g > 0.0 && g < 1.0) {
                return bad(format!("baselines.{name}: must lie in (0, 1)"));
            }
        }
        let needs_latent = [Task::EvalBaselines];
        if self.data.observations.is_some() && self.tasks.iter().any(|t| needs_latent.contains(t)) {
            return bad("eval-baselines needs simulated latent states, not an observations file".into());
        }
        if self.data.observations.is_some() && pops.len() > 1 {
            return bad("an observations file fixes a single population size".into());
        }
        Ok(())
    }
}
