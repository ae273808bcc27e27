//! Named parameter vectors and their bijections to unconstrained space.

use std::collections::BTreeMap;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::scalar::Real;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Domain {
    /// `(0, inf)`, optimized on the log scale.
    Positive,
    /// `[0, 1]`, optimized on the logit scale (free entries must be interior).
    UnitInterval,
    /// Unconstrained real.
    Real,
}

impl Domain {
    pub fn contains(self, x: f64) -> bool {
        match self {
            Domain::Positive => x > 0.0 && x.is_finite(),
            Domain::UnitInterval => (0.0..=1.0).contains(&x),
            Domain::Real => x.is_finite(),
        }
    }

    fn contains_interior(self, x: f64) -> bool {
        match self {
            Domain::UnitInterval => x > 0.0 && x < 1.0,
            _ => self.contains(x),
        }
    }

    pub fn to_unconstrained(self, x: f64) -> f64 {
        match self {
            Domain::Positive => x.ln(),
            Domain::UnitInterval => (x / (1.0 - x)).ln(),
            Domain::Real => x,
        }
    }

    pub fn from_unconstrained<S: Real>(self, u: S) -> S {
        match self {
            Domain::Positive => u.exp(),
            Domain::UnitInterval => u.logistic(),
            Domain::Real => u,
        }
    }

    /// `log |d theta / d u|` at unconstrained coordinate `u`.
    pub fn log_jacobian(self, u: f64) -> f64 {
        match self {
            Domain::Positive => u,
            Domain::UnitInterval => {
                // log sigma(u) + log(1 - sigma(u)), written to avoid overflow
                -(u.abs()) - 2.0 * (-(u.abs())).exp().ln_1p()
            }
            Domain::Real => 0.0,
        }
    }

    /// Derivative of [`Domain::log_jacobian`] with respect to `u`.
    pub fn log_jacobian_slope(self, u: f64) -> f64 {
        match self {
            Domain::Positive => 1.0,
            Domain::UnitInterval => 1.0 - 2.0 * u.logistic(),
            Domain::Real => 0.0,
        }
    }
}

/// One scalar parameter slot.
#[derive(Clone, Debug, PartialEq)]
pub struct ParamEntry {
    pub name: String,
    pub domain: Domain,
    /// Compact box used for fuzzing and interaction bounds.
    pub lower: f64,
    pub upper: f64,
}

/// Ordered list of parameter slots for one model.
#[derive(Clone, Debug, PartialEq)]
pub struct ParamSpace {
    entries: Vec<ParamEntry>,
}

impl ParamSpace {
    pub fn new(entries: Vec<ParamEntry>) -> Self {
        ParamSpace { entries }
    }

    pub fn entries(&self) -> &[ParamEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.entries.iter().position(|e| e.name == name)
    }

    pub fn upper(&self, name: &str) -> f64 {
        self.entries[self.index_of(name).expect("known parameter")].upper
    }

    pub fn lower(&self, name: &str) -> f64 {
        self.entries[self.index_of(name).expect("known parameter")].lower
    }
}

/// Builder shorthand used by the model zoo.
pub(crate) fn entry(name: &str, domain: Domain, lower: f64, upper: f64) -> ParamEntry {
    ParamEntry {
        name: name.to_string(),
        domain,
        lower,
        upper,
    }
}

/// Constrained parameter values plus a frozen mask.
///
/// Frozen entries are held at their value and excluded from the unconstrained
/// vector (and hence from gradients and sampling).
#[derive(Clone, Debug, PartialEq)]
pub struct ParamVector {
    space: Arc<ParamSpace>,
    values: Vec<f64>,
    frozen: Vec<bool>,
}

impl ParamVector {
    pub fn new(space: Arc<ParamSpace>, values: Vec<f64>) -> Result<Self> {
        if values.len() != space.len() {
            return Err(Error::ShapeMismatch(format!(
                "expected {} parameters, got {}",
                space.len(),
                values.len()
            )));
        }
        for (e, &v) in space.entries().iter().zip(&values) {
            if !e.domain.contains(v) {
                return Err(Error::OutOfDomain {
                    name: e.name.clone(),
                    value: v,
                });
            }
        }
        let frozen = vec![false; values.len()];
        Ok(ParamVector {
            space,
            values,
            frozen,
        })
    }

    pub fn space(&self) -> &Arc<ParamSpace> {
        &self.space
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn frozen_mask(&self) -> &[bool] {
        &self.frozen
    }

    pub fn get(&self, name: &str) -> Result<f64> {
        self.space
            .index_of(name)
            .map(|i| self.values[i])
            .ok_or_else(|| Error::Config(format!("unknown parameter `{name}`")))
    }

    pub fn set(&mut self, name: &str, value: f64) -> Result<()> {
        let i = self
            .space
            .index_of(name)
            .ok_or_else(|| Error::Config(format!("unknown parameter `{name}`")))?;
        if !self.space.entries()[i].domain.contains(value) {
            return Err(Error::OutOfDomain {
                name: name.to_string(),
                value,
            });
        }
        self.values[i] = value;
        Ok(())
    }

    pub fn freeze(&mut self, names: &[&str]) -> Result<()> {
        for name in names {
            let i = self
                .space
                .index_of(name)
                .ok_or_else(|| Error::Config(format!("unknown parameter `{name}`")))?;
            self.frozen[i] = true;
        }
        Ok(())
    }

    pub fn set_frozen_mask(&mut self, mask: Vec<bool>) {
        assert_eq!(mask.len(), self.values.len());
        self.frozen = mask;
    }

    pub fn free_indices(&self) -> Vec<usize> {
        (0..self.values.len()).filter(|&i| !self.frozen[i]).collect()
    }

    pub fn free_names(&self) -> Vec<String> {
        self.free_indices()
            .into_iter()
            .map(|i| self.space.entries()[i].name.clone())
            .collect()
    }

    pub fn num_free(&self) -> usize {
        self.frozen.iter().filter(|f| !**f).count()
    }

    /// Unconstrained coordinates of the free entries.
    pub fn unconstrained(&self) -> Result<Vec<f64>> {
        self.free_indices()
            .into_iter()
            .map(|i| {
                let e = &self.space.entries()[i];
                let v = self.values[i];
                if e.domain.contains_interior(v) {
                    Ok(e.domain.to_unconstrained(v))
                } else {
                    Err(Error::OutOfDomain {
                        name: e.name.clone(),
                        value: v,
                    })
                }
            })
            .collect()
    }

    /// Copy with the free entries replaced by the inverse transform of `u`.
    pub fn with_unconstrained(&self, u: &[f64]) -> Result<ParamVector> {
        let free = self.free_indices();
        if u.len() != free.len() {
            return Err(Error::ShapeMismatch(format!(
                "expected {} unconstrained coordinates, got {}",
                free.len(),
                u.len()
            )));
        }
        let mut out = self.clone();
        for (&i, &x) in free.iter().zip(u) {
            let v = self.space.entries()[i].domain.from_unconstrained(x);
            if !v.is_finite() {
                return Err(Error::OutOfDomain {
                    name: self.space.entries()[i].name.clone(),
                    value: v,
                });
            }
            out.values[i] = v;
        }
        Ok(out)
    }

    /// Full constrained vector as generic scalars; frozen entries are constants.
    pub fn constrained_from<S: Real>(&self, u: &[S]) -> Vec<S> {
        let mut it = u.iter();
        self.space
            .entries()
            .iter()
            .enumerate()
            .map(|(i, e)| {
                if self.frozen[i] {
                    S::cst(self.values[i])
                } else {
                    e.domain
                        .from_unconstrained(*it.next().expect("one coordinate per free entry"))
                }
            })
            .collect()
    }

    /// `sum log |d theta / d u|` over free entries.
    pub fn log_jacobian(&self, u: &[f64]) -> f64 {
        self.free_indices()
            .iter()
            .zip(u)
            .map(|(&i, &x)| self.space.entries()[i].domain.log_jacobian(x))
            .sum()
    }

    /// Gradient of [`ParamVector::log_jacobian`].
    pub fn log_jacobian_grad(&self, u: &[f64]) -> Vec<f64> {
        self.free_indices()
            .iter()
            .zip(u)
            .map(|(&i, &x)| self.space.entries()[i].domain.log_jacobian_slope(x))
            .collect()
    }

    /// JSON object of name to constrained value.
    pub fn to_json(&self) -> String {
        let map: BTreeMap<&str, f64> = self
            .space
            .entries()
            .iter()
            .zip(&self.values)
            .map(|(e, &v)| (e.name.as_str(), v))
            .collect();
        serde_json::to_string_pretty(&map).expect("plain map serializes")
    }

    /// Overrides entries named in a JSON object; unknown names are an error.
    pub fn update_from_json(&mut self, json: &str) -> Result<()> {
        let map: BTreeMap<String, f64> =
            serde_json::from_str(json).map_err(|e| Error::Config(e.to_string()))?;
        for (k, v) in map {
            self.set(&k, v)?;
        }
        Ok(())
    }
}
