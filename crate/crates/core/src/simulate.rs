//! Forward simulation of latent trajectories and observations, plus synthetic
//! covariate generators.

use std::collections::BTreeMap;
use std::io::{Read, Write};

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{check_params, Covariates, IndividualModel, ParamVector};
use crate::prob::{sample_index, RngStream};

/// Latent states `x[t][n]` for `t = 0..=T`, stored as indices.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LatentTrajectory {
    population: usize,
    states: usize,
    horizon: usize,
    data: Vec<u8>,
}

/// Observations `y[t][n]` for `t = 1..=T`; index 0 means unreported and
/// index `i + 1` means reported as state `i`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ObservationTrajectory {
    population: usize,
    states: usize,
    horizon: usize,
    data: Vec<u8>,
}

fn check_states(states: usize) -> Result<()> {
    if states == 0 || states > 254 {
        return Err(Error::Config(format!("unsupported state count {states}")));
    }
    Ok(())
}

impl LatentTrajectory {
    /// `data` holds `(horizon + 1) x population` state indices, time-major.
    pub fn new(population: usize, states: usize, horizon: usize, data: Vec<u8>) -> Result<Self> {
        check_states(states)?;
        if data.len() != (horizon + 1) * population {
            return Err(Error::ShapeMismatch(format!(
                "latent trajectory needs {} entries, got {}",
                (horizon + 1) * population,
                data.len()
            )));
        }
        if let Some(&bad) = data.iter().find(|&&x| x as usize >= states) {
            return Err(Error::ShapeMismatch(format!("state index {bad} out of range")));
        }
        Ok(LatentTrajectory {
            population,
            states,
            horizon,
            data,
        })
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

    #[inline]
    pub fn state(&self, t: usize, n: usize) -> usize {
        self.data[t * self.population + n] as usize
    }

    pub fn at(&self, t: usize) -> &[u8] {
        &self.data[t * self.population..(t + 1) * self.population]
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        write_grid(writer, "state_index", 0, self.population, &self.data)
    }

    pub fn read_csv<R: Read>(reader: R, states: usize) -> Result<Self> {
        let (population, times, data) = read_grid(reader, "state_index", 0, states)?;
        Self::new(population, states, times - 1, data)
    }
}

impl ObservationTrajectory {
    /// `data` holds `horizon x population` observation indices for `t = 1..=T`.
    pub fn new(population: usize, states: usize, horizon: usize, data: Vec<u8>) -> Result<Self> {
        check_states(states)?;
        if data.len() != horizon * population {
            return Err(Error::ShapeMismatch(format!(
                "observation trajectory needs {} entries, got {}",
                horizon * population,
                data.len()
            )));
        }
        if let Some(&bad) = data.iter().find(|&&y| y as usize > states) {
            return Err(Error::ShapeMismatch(format!(
                "observation index {bad} out of range"
            )));
        }
        Ok(ObservationTrajectory {
            population,
            states,
            horizon,
            data,
        })
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

    /// Observation index at `t` in `1..=T`.
    #[inline]
    pub fn obs(&self, t: usize, n: usize) -> usize {
        self.data[(t - 1) * self.population + n] as usize
    }

    /// Row of observations at `t` in `1..=T`.
    pub fn at(&self, t: usize) -> &[u8] {
        &self.data[(t - 1) * self.population..t * self.population]
    }

    /// Keeps only the first `horizon` time steps.
    pub fn truncated(&self, horizon: usize) -> ObservationTrajectory {
        let h = horizon.min(self.horizon);
        ObservationTrajectory {
            population: self.population,
            states: self.states,
            horizon: h,
            data: self.data[..h * self.population].to_vec(),
        }
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        write_grid(writer, "obs_index", 1, self.population, &self.data)
    }

    pub fn read_csv<R: Read>(reader: R, states: usize) -> Result<Self> {
        let (population, times, data) = read_grid(reader, "obs_index", 1, states + 1)?;
        Self::new(population, states, times, data)
    }
}

fn write_grid<W: Write>(writer: W, column: &str, t0: usize, population: usize, data: &[u8]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["t", "n", column])?;
    for (i, &v) in data.iter().enumerate() {
        let (t, n) = (i / population + t0, i % population);
        w.write_record([t.to_string(), n.to_string(), v.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a complete `(t, n) -> index` grid with `t` starting at `t0`.
fn read_grid<R: Read>(
    reader: R,
    column: &str,
    t0: usize,
    limit: usize,
) -> Result<(usize, usize, Vec<u8>)> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
    let col = |h: &str| {
        headers.iter().position(|x| x == h).ok_or_else(|| Error::Parse {
            row: 1,
            message: format!("missing `{h}` column"),
        })
    };
    let (ct, cn, cv) = (col("t")?, col("n")?, col(column)?);
    let mut cells: BTreeMap<(usize, usize), u8> = BTreeMap::new();
    for (i, rec) in rdr.records().enumerate() {
        let row = i + 2;
        let rec = rec?;
        let field = |j: usize, name: &str| -> Result<usize> {
            let s = rec.get(j).unwrap_or("");
            s.parse::<usize>().map_err(|_| Error::Parse {
                row,
                message: format!("column `{name}`: cannot parse `{s}` as an index"),
            })
        };
        let t = field(ct, "t")?;
        let n = field(cn, "n")?;
        let v = field(cv, column)?;
        if t < t0 {
            return Err(Error::Parse {
                row,
                message: format!("time {t} precedes the first time {t0}"),
            });
        }
        if v >= limit {
            return Err(Error::Parse {
                row,
                message: format!("`{column}` = {v} out of range (must be below {limit})"),
            });
        }
        if cells.insert((t - t0, n), v as u8).is_some() {
            return Err(Error::Parse {
                row,
                message: format!("duplicate entry for t={t}, n={n}"),
            });
        }
    }
    let times = cells.keys().map(|k| k.0 + 1).max().unwrap_or(0);
    let population = cells.keys().map(|k| k.1 + 1).max().unwrap_or(0);
    if times == 0 || cells.len() != times * population {
        return Err(Error::Parse {
            row: cells.len() + 1,
            message: format!(
                "expected a complete grid of {} rows, found {}",
                times * population,
                cells.len()
            ),
        });
    }
    Ok((population, times, cells.into_values().collect()))
}

/// Draws a latent path and observations from the model.
///
/// The draw for individual `n` at time `t` uses the substream `[t, n]` of
/// `rng` (state first, then observation), so results do not depend on the
/// number of worker threads.
pub fn simulate<M: IndividualModel>(
    model: &M,
    theta: &ParamVector,
    horizon: usize,
    rng: &RngStream,
) -> Result<(LatentTrajectory, ObservationTrajectory)> {
    check_params(model, theta)?;
    if horizon == 0 {
        return Err(Error::Config("horizon T must be at least 1".into()));
    }
    let n_pop = model.population();
    let m = model.num_states();
    let ch = model.num_channels();
    let th = theta.values();
    let prep = model.prepare(th);
    let emissions: Vec<Vec<f64>> = (0..n_pop)
        .into_par_iter()
        .map(|n| {
            let mut g = vec![0.0; m * (m + 1)];
            model.emission(th, prep.row(n), n, &mut g);
            g
        })
        .collect();

    let mut latent = Vec::with_capacity((horizon + 1) * n_pop);
    let mut observed = Vec::with_capacity(horizon * n_pop);
    let first: Vec<u8> = (0..n_pop)
        .into_par_iter()
        .map(|n| {
            let mut p = vec![0.0; m];
            model.initial(th, prep.row(n), n, &mut p);
            sample_index(&p, &mut rng.substream(&[0, n as u64])) as u8
        })
        .collect();
    latent.extend_from_slice(&first);

    let mut pi = vec![0.0; n_pop * m];
    let mut eta = vec![0.0; n_pop * ch];
    for t in 1..=horizon {
        let prev = &latent[(t - 1) * n_pop..t * n_pop];
        pi.fill(0.0);
        for (n, &x) in prev.iter().enumerate() {
            pi[n * m + x as usize] = 1.0;
        }
        model.interaction(th, &prep, &pi, &mut eta);
        let step: Vec<(u8, u8)> = (0..n_pop)
            .into_par_iter()
            .map(|n| {
                let mut k = vec![0.0; m * m];
                model.transition(th, prep.row(n), n, &eta[n * ch..(n + 1) * ch], &mut k);
                let mut r = rng.substream(&[t as u64, n as u64]);
                let from = prev[n] as usize;
                let x = sample_index(&k[from * m..(from + 1) * m], &mut r);
                let y = sample_index(&emissions[n][x * (m + 1)..(x + 1) * (m + 1)], &mut r);
                (x as u8, y as u8)
            })
            .collect();
        latent.extend(step.iter().map(|s| s.0));
        observed.extend(step.iter().map(|s| s.1));
    }
    Ok((
        LatentTrajectory::new(n_pop, m, horizon, latent)?,
        ObservationTrajectory::new(n_pop, m, horizon, observed)?,
    ))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CovariateKind {
    /// `c1 ~ N(0, 1)`.
    GaussianScalar,
    /// Positions from a 10-component Gaussian mixture, plus `c1`, the
    /// component label, its mean (`m1`, `m2`) and within-component mean
    /// distance (`zbar`).
    SpatialMixture,
    /// Like the mixture, but every position is its component mean.
    Community,
    /// Farm-like layout: component mean, within-distance and two log herd sizes.
    SyntheticFarms,
}

impl std::str::FromStr for CovariateKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gaussian-scalar" => Ok(CovariateKind::GaussianScalar),
            "spatial-mixture" => Ok(CovariateKind::SpatialMixture),
            "community" => Ok(CovariateKind::Community),
            "synthetic-farms" => Ok(CovariateKind::SyntheticFarms),
            _ => Err(Error::Config(format!("unknown covariate kind `{s}`"))),
        }
    }
}

pub const MIXTURE_COMPONENTS: usize = 10;
pub const MIXTURE_EXTENT: f64 = 10.0;

fn normal(rng: &mut RngStream) -> f64 {
    rng.sample(StandardNormal)
}

/// Mean pairwise distance among the positions of each group.
fn within_distance(positions: &[[f64; 2]], group: &[usize], groups: usize) -> Vec<f64> {
    let mut members: Vec<Vec<[f64; 2]>> = vec![Vec::new(); groups];
    for (p, &g) in positions.iter().zip(group) {
        members[g].push(*p);
    }
    members
        .iter()
        .map(|ps| {
            let mut total = 0.0;
            let mut count = 0usize;
            for i in 0..ps.len() {
                for j in i + 1..ps.len() {
                    total += crate::model::dist2(ps[i], ps[j]).sqrt();
                    count += 1;
                }
            }
            if count == 0 {
                0.0
            } else {
                total / count as f64
            }
        })
        .collect()
}

/// Synthetic covariates for `n` individuals, deterministic in `rng`'s seed.
pub fn generate_covariates(kind: CovariateKind, n: usize, rng: &RngStream) -> Result<Covariates> {
    if n == 0 {
        return Err(Error::Config("population size must be at least 1".into()));
    }
    let ids: Vec<String> = (0..n).map(|i| i.to_string()).collect();
    if kind == CovariateKind::GaussianScalar {
        let c: Vec<f64> = (0..n)
            .map(|i| normal(&mut rng.substream(&[1, i as u64])))
            .collect();
        return Covariates::new(ids, None, None, vec!["c1".into()], c);
    }

    let mut centre_rng = rng.substream(&[0]);
    let means: Vec<[f64; 2]> = (0..MIXTURE_COMPONENTS)
        .map(|_| {
            [
                centre_rng.uniform() * MIXTURE_EXTENT,
                centre_rng.uniform() * MIXTURE_EXTENT,
            ]
        })
        .collect();
    let mut group = Vec::with_capacity(n);
    let mut position = Vec::with_capacity(n);
    let mut extra = Vec::with_capacity(n);
    for i in 0..n {
        let mut r = rng.substream(&[1, i as u64]);
        let g = ((r.uniform() * MIXTURE_COMPONENTS as f64) as usize).min(MIXTURE_COMPONENTS - 1);
        let z = [means[g][0] + normal(&mut r), means[g][1] + normal(&mut r)];
        let c = match kind {
            CovariateKind::SyntheticFarms => {
                let cattle = (4.0 + normal(&mut r)).max(0.0);
                let sheep = (5.0 + 1.2 * normal(&mut r)).max(0.0);
                vec![cattle, sheep]
            }
            _ => vec![normal(&mut r)],
        };
        group.push(g);
        position.push(z);
        extra.push(c);
    }
    let zbar = within_distance(&position, &group, MIXTURE_COMPONENTS);

    let (names, values, positions): (Vec<&str>, Vec<f64>, Option<Vec<[f64; 2]>>) = match kind {
        CovariateKind::SpatialMixture => (
            vec!["c1", "m1", "m2", "zbar"],
            (0..n)
                .flat_map(|i| {
                    let g = group[i];
                    [extra[i][0], means[g][0], means[g][1], zbar[g]]
                })
                .collect(),
            Some(position),
        ),
        CovariateKind::Community => (
            vec!["c1"],
            extra.iter().map(|c| c[0]).collect(),
            Some(group.iter().map(|&g| means[g]).collect()),
        ),
        CovariateKind::SyntheticFarms => (
            vec!["m1", "m2", "zbar", "c1", "c2"],
            (0..n)
                .flat_map(|i| {
                    let g = group[i];
                    [means[g][0], means[g][1], zbar[g], extra[i][0], extra[i][1]]
                })
                .collect(),
            None,
        ),
        CovariateKind::GaussianScalar => unreachable!("handled above"),
    };
    Covariates::new(
        ids,
        Some(group),
        positions,
        names.into_iter().map(String::from).collect(),
        values,
    )
}

/// Marks a random `fraction` of the population as never reported through
/// an `unobserved` column (1 = never reported).
pub fn mark_unobserved(cov: &mut Covariates, fraction: f64, rng: &RngStream) -> Result<()> {
    if !(0.0..=1.0).contains(&fraction) {
        return Err(Error::OutOfDomain {
            name: "fraction".into(),
            value: fraction,
        });
    }
    let n = cov.len();
    let mut order: Vec<usize> = (0..n).collect();
    let mut r = rng.substream(&[2]);
    for i in (1..n).rev() {
        let j = r.random_range(0..=i);
        order.swap(i, j);
    }
    let hidden = (fraction * n as f64).round() as usize;
    let mut flag = vec![0.0; n];
    for &i in &order[..hidden] {
        flag[i] = 1.0;
    }
    cov.set_column("unobserved", &flag)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ModelKind;

    fn homog(n: usize, seed: u64) -> (crate::model::AnyModel, ParamVector) {
        let cov = generate_covariates(CovariateKind::GaussianScalar, n, &RngStream::new(seed)).unwrap();
        let model = ModelKind::HomogSis.build(&cov, 1.0).unwrap();
        let theta = ModelKind::HomogSis
            .reference_params(crate::model::IndividualModel::param_space(&model))
            .unwrap();
        (model, theta)
    }

    #[test]
    fn never_reported_gives_all_unreported() {
        let (model, mut theta) = homog(20, 1);
        theta.set("q_S", 0.0).unwrap();
        theta.set("q_I", 0.0).unwrap();
        let (_, y) = simulate(&model, &theta, 10, &RngStream::new(2)).unwrap();
        assert!((1..=10).all(|t| y.at(t).iter().all(|&o| o == 0)));
    }

    #[test]
    fn degenerate_kernel_alternates_then_absorbs() {
        // everyone starts infected, recovers surely, and is never reinfected
        let (model, mut theta) = homog(5, 3);
        theta.set("p0", 1.0).unwrap();
        theta.set("gamma", 1e3).unwrap();
        theta.set("b_R", 0.0).unwrap();
        theta.set("beta", 1e-300).unwrap();
        let (x, _) = simulate(&model, &theta, 4, &RngStream::new(4)).unwrap();
        assert!(x.at(0).iter().all(|&s| s == 1));
        for t in 1..=4 {
            assert!(x.at(t).iter().all(|&s| s == 0));
        }
    }

    #[test]
    fn reproducible_under_seed() {
        let (model, theta) = homog(200, 5);
        let a = simulate(&model, &theta, 20, &RngStream::new(6)).unwrap();
        let b = simulate(&model, &theta, 20, &RngStream::new(6)).unwrap();
        assert_eq!(a, b);
        let c = simulate(&model, &theta, 20, &RngStream::new(7)).unwrap();
        assert_ne!(a.0, c.0);
    }

    #[test]
    fn csv_roundtrip() {
        let (model, theta) = homog(7, 8);
        let (x, y) = simulate(&model, &theta, 3, &RngStream::new(9)).unwrap();
        let mut buf = Vec::new();
        x.write_csv(&mut buf).unwrap();
        assert_eq!(LatentTrajectory::read_csv(&buf[..], 2).unwrap(), x);
        buf.clear();
        y.write_csv(&mut buf).unwrap();
        assert_eq!(ObservationTrajectory::read_csv(&buf[..], 2).unwrap(), y);
    }

    #[test]
    fn out_of_range_observation_names_row() {
        let csv = "t,n,obs_index\n1,0,0\n1,1,3\n";
        match ObservationTrajectory::read_csv(csv.as_bytes(), 2) {
            Err(Error::Parse { row, .. }) => assert_eq!(row, 3),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn gaussian_covariates_have_small_mean() {
        let cov = generate_covariates(CovariateKind::GaussianScalar, 100_000, &RngStream::new(10)).unwrap();
        let c = cov.column("c1").unwrap();
        let mean = c.iter().sum::<f64>() / c.len() as f64;
        assert!(mean.abs() < 0.02, "{mean}");
    }

    #[test]
    fn community_positions_are_centroids() {
        let cov = generate_covariates(CovariateKind::Community, 100, &RngStream::new(11)).unwrap();
        let mut distinct: Vec<[f64; 2]> = cov.positions.clone().unwrap();
        distinct.sort_by(|a, b| a.partial_cmp(b).unwrap());
        distinct.dedup();
        assert!(distinct.len() <= MIXTURE_COMPONENTS);
        let labels = cov.community.as_ref().unwrap();
        let z = cov.positions.as_ref().unwrap();
        for i in 0..100 {
            for j in 0..100 {
                if labels[i] == labels[j] {
                    assert_eq!(z[i], z[j]);
                }
            }
        }
    }

    #[test]
    fn farm_covariates_layout() {
        let cov = generate_covariates(CovariateKind::SyntheticFarms, 50, &RngStream::new(12)).unwrap();
        assert_eq!(cov.names(), ["m1", "m2", "zbar", "c1", "c2"]);
        assert!(cov.community.is_some());
    }

    #[test]
    fn unobserved_marks_half() {
        let mut cov = generate_covariates(CovariateKind::GaussianScalar, 11, &RngStream::new(13)).unwrap();
        mark_unobserved(&mut cov, 0.5, &RngStream::new(14)).unwrap();
        let hidden: f64 = cov.column("unobserved").unwrap().iter().sum();
        assert_eq!(hidden, 6.0);
    }
}
