//! Config-driven experiment runs writing CSV artifacts.
//!
//! Every random stream of a run is a substream of the master seed keyed by
//! purpose, population index and replicate, so artifacts do not depend on
//! the number of worker threads.

mod config;
pub mod verify;

use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::RngCore;
use rayon::prelude::*;

pub use config::{
    BaselineBlock, DataBlock, ExperimentConfig, ModelBlock, OneOrMany, PfBlock, Task, VerifyBlock,
};
pub use verify::OracleCheck;

use crate::baselines::{
    accuracy, cross_entropy, pf_loglik, previous_guess, random_baseline, StatePredictions,
};
use crate::cal::{cal_filter, cal_loglik};
use crate::error::{Error, Result};
use crate::infer::{fit_mle, hmc_sample, write_trace, Chain, FitResult, OptimConfig};
use crate::model::{AnyModel, Covariates, IndividualModel, ModelKind, ParamVector};
use crate::prob::RngStream;
use crate::simulate::{
    generate_covariates, mark_unobserved, simulate, LatentTrajectory, ObservationTrajectory,
};

const COVARIATES: u64 = 1;
const SIMULATE: u64 = 2;
const FIT: u64 = 3;
const WARM_START: u64 = 4;
const HMC: u64 = 5;
const PF: u64 = 6;
const ALT_FIT: u64 = 7;
const VERIFY: u64 = 8;

/// Seed for a purpose-specific stream.
pub fn derive_seed(root: &RngStream, keys: &[u64]) -> u64 {
    root.substream(keys).next_u64()
}

/// Covariates, model, data-generating parameters and data of one replicate.
#[derive(Clone, Debug)]
pub struct Dataset {
    pub covariates: Covariates,
    pub model: AnyModel,
    pub theta: ParamVector,
    /// Absent when observations were read from a file.
    pub latent: Option<LatentTrajectory>,
    pub y: ObservationTrajectory,
}

/// Reference values of `kind` with overrides and a frozen set applied.
pub fn build_params(
    kind: ModelKind,
    model: &AnyModel,
    overrides: &std::collections::BTreeMap<String, f64>,
    frozen: Option<&[String]>,
) -> Result<ParamVector> {
    let mut theta = kind.reference_params(model.param_space())?;
    for (name, &v) in overrides {
        theta.set(name, v)?;
    }
    if let Some(names) = frozen {
        let names: Vec<&str> = names.iter().map(String::as_str).collect();
        theta.set_frozen_mask(vec![false; theta.values().len()]);
        theta.freeze(&names)?;
    }
    Ok(theta)
}

impl ExperimentConfig {
    /// Root stream of the run.
    pub fn root(&self) -> RngStream {
        RngStream::new(self.seed)
    }

    fn covariates_for(&self, n: usize, keys: &[u64]) -> Result<Covariates> {
        let kind = self.model.kind;
        let mut cov = match &self.data.covariates {
            Some(path) => Covariates::read_csv(open(path)?)?,
            None => generate_covariates(kind.covariate_kind(), n, &self.root().substream(keys))?,
        };
        if cov.len() != n {
            return Err(Error::ShapeMismatch(format!(
                "covariates describe {} individuals, the model asks for {n}",
                cov.len()
            )));
        }
        if self.model.unobserved_fraction > 0.0 {
            mark_unobserved(&mut cov, self.model.unobserved_fraction, &self.root().substream(keys))?;
        }
        Ok(cov)
    }

    /// Replicate `replicate` at the `pop_index`-th population size.
    pub fn dataset(&self, pop_index: usize, replicate: usize) -> Result<Dataset> {
        let n = self.populations()[pop_index];
        let key = [pop_index as u64, replicate as u64];
        let covariates = self.covariates_for(n, &[COVARIATES, key[0], key[1]])?;
        let model = self.model.kind.build(&covariates, self.model.step)?;
        let theta = build_params(
            self.model.kind,
            &model,
            &self.model.params,
            self.model.frozen.as_deref(),
        )?;
        let (latent, y) = match &self.data.observations {
            Some(path) => {
                let y = ObservationTrajectory::read_csv(open(path)?, model.num_states())?;
                (None, y)
            }
            None => {
                let stream = self.root().substream(&[SIMULATE, key[0], key[1]]);
                let (x, y) = simulate(&model, &theta, self.model.horizon, &stream)?;
                (Some(x), y)
            }
        };
        Ok(Dataset {
            covariates,
            model,
            theta,
            latent,
            y,
        })
    }

    fn optim_for(&self, base: &OptimConfig, keys: &[u64]) -> OptimConfig {
        OptimConfig {
            seed: derive_seed(&self.root(), keys),
            ..base.clone()
        }
    }
}

fn open(path: &Path) -> Result<File> {
    File::open(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))
}

/// What a run wrote and found.
#[derive(Clone, Debug, Default)]
pub struct RunReport {
    pub files: Vec<PathBuf>,
    pub oracle: Vec<OracleCheck>,
    /// One-line summaries for the console.
    pub notes: Vec<String>,
}

impl RunReport {
    pub fn oracle_failed(&self) -> bool {
        self.oracle.iter().any(|c| !c.passed())
    }

    fn write(
        &mut self,
        out: &Path,
        name: &str,
        body: impl FnOnce(BufWriter<File>) -> Result<()>,
    ) -> Result<()> {
        let path = out.join(name);
        let file = File::create(&path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
        body(BufWriter::new(file))?;
        self.files.push(path);
        Ok(())
    }
}

fn csv_writer(w: BufWriter<File>) -> csv::Writer<BufWriter<File>> {
    csv::Writer::from_writer(w)
}

fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0).max(1.0);
    (mean, var.sqrt())
}

/// Runs every task of `cfg`, writing artifacts under `out`.
pub fn run(cfg: &ExperimentConfig, out: &Path) -> Result<RunReport> {
    cfg.validate()?;
    std::fs::create_dir_all(out).map_err(|e| Error::Io(format!("{}: {e}", out.display())))?;
    let mut tasks = cfg.tasks.clone();
    tasks.sort();
    tasks.dedup();
    let mut report = RunReport::default();
    let needs_data = tasks.iter().any(|t| *t != Task::Verify);
    let first = if needs_data { Some(cfg.dataset(0, 0)?) } else { None };
    let mut first_fit: Option<FitResult> = None;

    for task in tasks {
        let data = first.as_ref();
        match task {
            Task::Simulate => simulate_task(cfg, data.expect("dataset"), out, &mut report)?,
            Task::Filter => filter_task(data.expect("dataset"), out, &mut report)?,
            Task::Fit => first_fit = Some(fit_task(cfg, out, &mut report)?),
            Task::Hmc => hmc_task(cfg, data.expect("dataset"), out, &mut report)?,
            Task::ComparePf => pf_task(cfg, data.expect("dataset"), out, &mut report)?,
            Task::EvalBaselines => {
                baselines_task(cfg, data.expect("dataset"), first_fit.take(), out, &mut report)?
            }
            Task::Verify => verify_task(cfg, out, &mut report)?,
        }
    }
    Ok(report)
}

fn simulate_task(
    cfg: &ExperimentConfig,
    data: &Dataset,
    out: &Path,
    report: &mut RunReport,
) -> Result<()> {
    report.write(out, "covariates.csv", |w| data.covariates.write_csv(w))?;
    if let Some(x) = &data.latent {
        report.write(out, "data_latent.csv", |w| x.write_csv(w))?;
    }
    report.write(out, "data_obs.csv", |w| data.y.write_csv(w))?;
    let reported: usize = (1..=data.y.horizon())
        .map(|t| data.y.at(t).iter().filter(|&&o| o != 0).count())
        .sum();
    report.notes.push(format!(
        "simulated {} with N={}, T={} ({reported} reports)",
        cfg.model.kind,
        data.y.population(),
        data.y.horizon()
    ));
    Ok(())
}

fn filter_task(data: &Dataset, out: &Path, report: &mut RunReport) -> Result<()> {
    let filter = cal_filter(&data.model, &data.theta, &data.y, true)?;
    report.write(out, "filter.csv", |w| filter.write_csv(w))?;
    report
        .notes
        .push(format!("filter log-likelihood {:.6}", filter.loglik));
    Ok(())
}

/// Fits every replicate at every population size.
fn fit_task(cfg: &ExperimentConfig, out: &Path, report: &mut RunReport) -> Result<FitResult> {
    let pops = cfg.populations();
    let jobs: Vec<(usize, usize)> = (0..pops.len())
        .flat_map(|i| (0..cfg.replicates).map(move |r| (i, r)))
        .collect();
    let fits: Vec<(Dataset, FitResult)> = jobs
        .par_iter()
        .map(|&(i, r)| {
            let data = cfg.dataset(i, r)?;
            let opt = cfg.optim_for(&cfg.optim, &[FIT, i as u64, r as u64]);
            let fit = fit_mle(&data.model, &data.theta, &data.y, &opt)?;
            Ok((data, fit))
        })
        .collect::<Result<_>>()?;

    let template = &fits[0].0.theta;
    let free = template.free_indices();
    let names: Vec<String> = template.free_names();
    let all_names: Vec<String> = template.space().entries().iter().map(|e| e.name.clone()).collect();

    report.write(out, "estimates.csv", |w| {
        let mut w = csv_writer(w);
        let mut header = vec!["population".to_string(), "replicate".into(), "loglik".into()];
        header.extend(names.iter().cloned());
        w.write_record(&header)?;
        for (&(i, r), (_, fit)) in jobs.iter().zip(&fits) {
            let mut rec = vec![pops[i].to_string(), r.to_string(), format!("{:e}", fit.loglik)];
            rec.extend(free.iter().map(|&j| format!("{:e}", fit.theta.values()[j])));
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    })?;

    report.write(out, "estimates_summary.csv", |w| {
        let mut w = csv_writer(w);
        w.write_record(["population", "parameter", "truth", "mean", "std"])?;
        for (i, &n) in pops.iter().enumerate() {
            for (&j, name) in free.iter().zip(&names) {
                let vals: Vec<f64> = jobs
                    .iter()
                    .zip(&fits)
                    .filter(|(job, _)| job.0 == i)
                    .map(|(_, (_, f))| f.theta.values()[j])
                    .collect();
                let (mean, std) = mean_std(&vals);
                w.write_record([
                    n.to_string(),
                    name.clone(),
                    format!("{:e}", template.values()[j]),
                    format!("{mean:e}"),
                    format!("{std:e}"),
                ])?;
            }
        }
        w.flush()?;
        Ok(())
    })?;

    let first = fits.into_iter().next().expect("at least one job").1;
    let traces: Vec<(Option<usize>, &[crate::infer::TraceRow])> = first
        .restarts
        .iter()
        .enumerate()
        .map(|(k, o)| (Some(k), o.trace.as_slice()))
        .collect();
    report.write(out, "fit_trace.csv", |w| write_trace(w, &all_names, &traces))?;
    report.notes.push(format!(
        "fitted {} replicate(s) at N = {:?}; first best log-likelihood {:.6}",
        cfg.replicates, pops, first.loglik
    ));
    Ok(first)
}

fn hmc_task(cfg: &ExperimentConfig, data: &Dataset, out: &Path, report: &mut RunReport) -> Result<()> {
    let start = match &cfg.warm_start {
        Some(w) => {
            let opt = cfg.optim_for(w, &[WARM_START]);
            fit_mle(&data.model, &data.theta, &data.y, &opt)?.theta
        }
        None => data.theta.clone(),
    };
    let mut hcfg = cfg.hmc.clone();
    hcfg.seed = derive_seed(&cfg.root(), &[HMC]);
    let chain = hmc_sample(&data.model, &start, &data.y, &hcfg)?;
    report.write(out, "chain.csv", |w| chain.write_csv(w))?;
    report.write(out, "hmc_summary.csv", |w| write_chain_summary(w, &chain, &data.theta))?;
    report.notes.push(format!(
        "hmc: {} retained draws, acceptance {:.3} overall, {:.3} in the last window",
        chain.rows.len(),
        chain.accepted as f64 / cfg.hmc.iterations as f64,
        chain.window_acceptance.last().copied().unwrap_or(f64::NAN)
    ));
    Ok(())
}

fn write_chain_summary(w: BufWriter<File>, chain: &Chain, truth: &ParamVector) -> Result<()> {
    let mut w = csv_writer(w);
    w.write_record(["parameter", "truth", "mean", "std", "frozen"])?;
    for (j, (name, (mean, std))) in chain.names.iter().zip(chain.summary()).enumerate() {
        w.write_record([
            name.clone(),
            format!("{:e}", truth.values()[j]),
            format!("{mean:e}"),
            format!("{std:e}"),
            u8::from(truth.frozen_mask()[j]).to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

fn pf_task(cfg: &ExperimentConfig, data: &Dataset, out: &Path, report: &mut RunReport) -> Result<()> {
    let mut rows: Vec<[String; 5]> = Vec::new();
    let clock = Instant::now();
    let cal = cal_loglik(&data.model, &data.theta, &data.y)?;
    let secs = clock.elapsed().as_secs_f64();
    rows.push(["cal".into(), "0".into(), "0".into(), format!("{cal:e}"), format!("{secs:e}")]);
    let root = cfg.root();
    for (k, &proposal) in cfg.pf.proposals.iter().enumerate() {
        for (i, &p) in cfg.pf.particles.iter().enumerate() {
            for run in 0..cfg.pf.runs {
                let stream = root.substream(&[PF, k as u64, i as u64, run as u64]);
                let clock = Instant::now();
                let est = match pf_loglik(&data.model, &data.theta, &data.y, p, proposal, &stream) {
                    Ok(o) => format!("{:e}", o.loglik),
                    Err(Error::Degenerate { .. }) => "failed".into(),
                    Err(e) => return Err(e),
                };
                let secs = clock.elapsed().as_secs_f64();
                rows.push([
                    proposal.as_str().into(),
                    p.to_string(),
                    run.to_string(),
                    est,
                    format!("{secs:e}"),
                ]);
            }
        }
    }
    report.write(out, "pf_compare.csv", |w| {
        let mut w = csv_writer(w);
        w.write_record(["method", "P", "run", "loglik", "seconds"])?;
        for r in &rows {
            w.write_record(r)?;
        }
        w.flush()?;
        Ok(())
    })?;
    report.notes.push(format!("particle comparison against CAL log-likelihood {cal:.6}"));
    Ok(())
}

/// Fitted filter beliefs of `model` on the data of `data`.
fn fitted_beliefs(
    model: &AnyModel,
    template: &ParamVector,
    y: &ObservationTrajectory,
    opt: &OptimConfig,
) -> Result<StatePredictions> {
    let fit = fit_mle(model, template, y, opt)?;
    StatePredictions::from_filter(&cal_filter(model, &fit.theta, y, true)?)
}

fn baselines_task(
    cfg: &ExperimentConfig,
    data: &Dataset,
    fit: Option<FitResult>,
    out: &Path,
    report: &mut RunReport,
) -> Result<()> {
    let x = data
        .latent
        .as_ref()
        .ok_or_else(|| Error::Config("eval-baselines needs simulated latent states".into()))?;
    let b = &cfg.baselines;
    let mut columns: Vec<(&str, StatePredictions)> = vec![
        ("Random", random_baseline(&data.y)),
        ("Prev. uncertain", previous_guess(&data.y, b.uncertain)?),
        ("Prev. certain", previous_guess(&data.y, b.certain)?),
    ];
    let cal = match fit {
        Some(f) => StatePredictions::from_filter(&cal_filter(&data.model, &f.theta, &data.y, true)?)?,
        None => {
            let opt = cfg.optim_for(&cfg.optim, &[FIT, 0, 0]);
            fitted_beliefs(&data.model, &data.theta, &data.y, &opt)?
        }
    };
    columns.push(("CAL", cal));
    if let Some(kind) = b.misspecified {
        let model = kind.build(&data.covariates, cfg.model.step)?;
        let template = kind.reference_params(model.param_space())?;
        let opt = cfg.optim_for(&cfg.optim, &[ALT_FIT]);
        columns.push(("CAL missp.", fitted_beliefs(&model, &template, &data.y, &opt)?));
    }
    let ce: Vec<f64> = columns
        .iter()
        .map(|(_, p)| cross_entropy(x, p))
        .collect::<Result<_>>()?;
    let acc: Vec<f64> = columns
        .iter()
        .map(|(_, p)| accuracy(x, p))
        .collect::<Result<_>>()?;
    report.write(out, "metrics.csv", |w| {
        let mut w = csv_writer(w);
        let mut header = vec!["metric".to_string()];
        header.extend(columns.iter().map(|c| c.0.to_string()));
        w.write_record(&header)?;
        for (name, vals) in [("cross_entropy", &ce), ("accuracy", &acc)] {
            let mut rec = vec![name.to_string()];
            rec.extend(vals.iter().map(|v| format!("{v:e}")));
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    })?;
    let summary: Vec<String> = columns
        .iter()
        .zip(ce.iter().zip(&acc))
        .map(|((n, _), (c, a))| format!("{n}: CE {c:.3}, acc {a:.2}%"))
        .collect();
    report.notes.push(summary.join("; "));
    Ok(())
}

fn verify_task(cfg: &ExperimentConfig, out: &Path, report: &mut RunReport) -> Result<()> {
    let root = cfg.root().substream(&[VERIFY]);
    let v = &cfg.verify;
    let checks = vec![
        verify::approx_identity(v.approx_trials, &root.substream(&[1]))?,
        verify::decoupled_exactness(v.decoupled_trials, &root.substream(&[2]))?,
        verify::path_enumeration(v.path_trials, &root.substream(&[3]))?,
    ];
    report.write(out, "verify.csv", |w| {
        let mut w = csv_writer(w);
        w.write_record([
            "check",
            "trials",
            "max_residual",
            "tolerance",
            "min_mu",
            "nonfinite",
            "passed",
        ])?;
        for c in &checks {
            w.write_record([
                c.name.to_string(),
                c.trials.to_string(),
                format!("{:e}", c.max_residual),
                format!("{:e}", c.tolerance),
                format!("{:e}", c.min_mu),
                c.nonfinite.to_string(),
                u8::from(c.passed()).to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    })?;
    for c in &checks {
        report.notes.push(format!(
            "{}: {} trials, max residual {:.3e} (tolerance {:.0e}) {}",
            c.name,
            c.trials,
            c.max_residual,
            c.tolerance,
            if c.passed() { "ok" } else { "FAILED" }
        ));
    }
    report.oracle.extend(checks);
    Ok(())
}
