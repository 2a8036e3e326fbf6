//! Build the model and data, run every configured sampler, write artifacts.

use std::collections::BTreeMap;
use std::path::Path;

use anyhow::{anyhow, bail, Context, Result};
use mpgas_core::conjugacy::ParamDraw;
use mpgas_core::diagnostics::{acf, histogram, summarize, update_frequency, Summary};
use mpgas_core::models::{
    simulate, EpidemicModel, GaussianIgModel, PopulationModel, StateSpaceModel,
};
use mpgas_core::rng::RngStream;
use mpgas_core::samplers::{
    run_chains, run_sampler, run_sampler_partial, Chain, Method, SamplerConfig,
};
use serde::Serialize;

use crate::config::{
    DataSpec, ExperimentConfig, ModelSpec, ResolvedRun, SamplerSpec, StateTransform,
};
use crate::data::load_observations;
use crate::output::{csv_writer, fmt_float, write_columns, write_json};

pub enum BuiltModel {
    Gaussian(GaussianIgModel),
    Epidemic(EpidemicModel),
    Population(PopulationModel),
}

impl BuiltModel {
    pub fn as_model(&self) -> &dyn StateSpaceModel {
        match self {
            BuiltModel::Gaussian(m) => m,
            BuiltModel::Epidemic(m) => m,
            BuiltModel::Population(m) => m,
        }
    }

    pub fn run(
        &self,
        config: &SamplerConfig,
        y: &[f64],
        chain_id: u64,
    ) -> mpgas_core::Result<Chain> {
        match self {
            BuiltModel::Population(m) => run_sampler_partial(m, config, y, chain_id),
            other => run_sampler(other.as_model(), config, y, chain_id),
        }
    }
}

/// `y` is needed only for the population model's default initial law.
pub fn build_model(spec: &ModelSpec, y: Option<&[f64]>) -> Result<BuiltModel> {
    Ok(match spec {
        ModelSpec::Benchmark { priors } => {
            BuiltModel::Gaussian(GaussianIgModel::benchmark(*priors)?)
        }
        ModelSpec::LinearGaussian {
            a,
            c,
            x0_mean,
            x0_var,
            priors,
        } => BuiltModel::Gaussian(GaussianIgModel::linear_gaussian(
            *a, *c, *x0_mean, *x0_var, *priors,
        )?),
        ModelSpec::Epidemic {
            population,
            background,
            contact,
            initial_rate,
            priors,
        } => BuiltModel::Epidemic(EpidemicModel::new(
            *population,
            *background,
            *contact,
            *initial_rate,
            *priors,
        )?),
        ModelSpec::Population {
            priors,
            c,
            x0_mean,
            x0_var,
        } => {
            let var = x0_var.unwrap_or(1.0);
            let m = match (x0_mean, y) {
                (Some(mean), _) => PopulationModel::new(priors.clone(), *c, *mean, var)?,
                (None, Some(y)) => {
                    let mut m = PopulationModel::for_counts(priors.clone(), *c, y)?;
                    m.x0_var = var;
                    m
                }
                (None, None) => {
                    bail!("field `model.x0_mean` is required to simulate from the population model")
                }
            };
            BuiltModel::Population(m)
        }
    })
}

/// Observations and, when simulated, the true states `x_{0:T}`.
pub struct Dataset {
    pub y: Vec<f64>,
    pub x: Option<Vec<f64>>,
}

pub fn load_data(cfg: &ExperimentConfig) -> Result<Dataset> {
    match &cfg.data {
        DataSpec::Path(p) => Ok(Dataset {
            y: load_observations(p)?,
            x: None,
        }),
        DataSpec::Simulate {
            theta,
            horizon,
            seed,
        } => {
            let model = build_model(&cfg.model, None)?;
            let m = model.as_model();
            let (x, y) = simulate(
                m,
                &ParamDraw::new(theta),
                *horizon,
                &mut RngStream::new(*seed, 0),
            )
            .context("field `data.simulate.theta`")?;
            Ok(Dataset { y, x: Some(x) })
        }
    }
}

pub struct RunResult {
    pub label: String,
    pub sampler: SamplerSpec,
    pub chains: Vec<Chain>,
}

pub struct ExperimentResult {
    pub config: ExperimentConfig,
    pub y: Vec<f64>,
    pub runs: Vec<RunResult>,
}

/// Sampler checks that need the horizon.
pub fn check_runs(cfg: &ExperimentConfig, horizon: usize) -> Result<Vec<ResolvedRun>> {
    let runs = cfg.resolved_runs();
    for r in &runs {
        r.sampler
            .to_sampler_config()
            .validate(horizon)
            .map_err(|e| anyhow!("run `{}`: {e}", r.label))?;
    }
    Ok(runs)
}

pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentResult> {
    let data = load_data(cfg)?;
    let model = build_model(&cfg.model, Some(&data.y))?;
    let runs = check_runs(cfg, data.y.len())?;
    let mut results = Vec::with_capacity(runs.len());
    for r in runs {
        let sc = r.sampler.to_sampler_config();
        let chains = run_chains(cfg.chains, |c| model.run(&sc, &data.y, c))
            .map_err(|e| anyhow!("run `{}`: {e}", r.label))?;
        results.push(RunResult {
            label: r.label,
            sampler: r.sampler,
            chains,
        });
    }
    Ok(ExperimentResult {
        config: cfg.clone(),
        y: data.y,
        runs: results,
    })
}

/// Write every artifact into `dir`; with several chains also one
/// subdirectory `chain-k` per chain.
pub fn write_outputs(res: &ExperimentResult, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    write_json(&dir.join("resolved_config.json"), &res.config)?;
    let k = res.config.chains;
    let all: Vec<usize> = (0..k).collect();
    write_set(res, dir, &all)?;
    if k > 1 {
        for c in 0..k {
            let sub = dir.join(format!("chain-{c}"));
            std::fs::create_dir_all(&sub)?;
            write_set(res, &sub, &[c])?;
        }
    }
    Ok(())
}

fn write_set(res: &ExperimentResult, dir: &Path, chains: &[usize]) -> Result<()> {
    let d = &res.config.diagnostics;
    write_samples(res, &dir.join("samples.csv"), chains)?;
    write_acf(res, &dir.join("acf.csv"), chains)?;
    if d.update_frequency {
        write_update_frequency(res, &dir.join("update_frequency.csv"), chains)?;
    }
    if d.filtered {
        write_filtered(res, &dir.join("filtered.csv"), chains)?;
    }
    if let Some(bins) = d.histogram_bins {
        write_histograms(res, &dir.join("histogram.csv"), chains, bins)?;
    }
    write_json(
        &dir.join("summary.json"),
        &summarize_experiment(res, chains)?,
    )
}

/// Parameter columns in order of first appearance across runs.
fn param_columns(res: &ExperimentResult) -> Vec<String> {
    let mut cols: Vec<String> = Vec::new();
    for r in &res.runs {
        for n in &r.chains[0].param_names {
            if !cols.contains(n) {
                cols.push(n.clone());
            }
        }
    }
    cols
}

fn write_samples(res: &ExperimentResult, path: &Path, chains: &[usize]) -> Result<()> {
    let cols = param_columns(res);
    let horizon = res.y.len();
    let states = res.config.diagnostics.write_states;
    let mut w = csv_writer(path)?;
    let mut header: Vec<String> = ["run", "chain", "iteration", "weight"]
        .map(String::from)
        .to_vec();
    header.extend(cols.iter().cloned());
    if states {
        header.extend((0..=horizon).map(|t| format!("x_{t}")));
    }
    w.write_record(&header)?;
    for r in &res.runs {
        let idx: Vec<Option<usize>> = cols.iter().map(|c| r.chains[0].param_index(c)).collect();
        for &c in chains {
            let ch = &r.chains[c];
            for m in 0..ch.iterations() {
                let mut row = vec![r.label.clone(), c.to_string(), m.to_string()];
                row.push(
                    ch.weights
                        .as_ref()
                        .map_or("1".into(), |wt| fmt_float(wt[m])),
                );
                let p = ch.param_row(m);
                row.extend(
                    idx.iter()
                        .map(|j| j.map_or(String::new(), |j| fmt_float(p[j]))),
                );
                if states {
                    if ch.has_trajectories() {
                        row.extend(ch.trajectory(m).iter().map(|v| fmt_float(*v)));
                    } else {
                        row.extend(std::iter::repeat_n(String::new(), horizon + 1));
                    }
                }
                w.write_record(&row)?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

/// Mean over chains of each chain's post-burn-in ACF; `None` for importance
/// samples, where autocorrelation has no meaning.
fn pooled_acf(r: &RunResult, chains: &[usize], j: usize, max_lag: usize) -> Option<Vec<f64>> {
    if r.sampler.method == Method::Mis {
        return None;
    }
    let mut total = vec![0.0; max_lag + 1];
    for &c in chains {
        let s = r.chains[c].param_series(j, r.sampler.burn_in);
        match acf(&s, max_lag.min(s.len().saturating_sub(1))) {
            Ok(a) => {
                for (l, v) in total.iter_mut().enumerate() {
                    *v += a.acf.get(l).copied().unwrap_or(f64::NAN);
                }
            }
            // constant or too short
            Err(_) => total.iter_mut().for_each(|v| *v = f64::NAN),
        }
    }
    Some(total.into_iter().map(|v| v / chains.len() as f64).collect())
}

fn write_acf(res: &ExperimentResult, path: &Path, chains: &[usize]) -> Result<()> {
    let max_lag = res.config.diagnostics.acf_max_lag;
    let mut cols = Vec::new();
    for r in &res.runs {
        for (j, name) in r.chains[0].param_names.iter().enumerate() {
            if let Some(a) = pooled_acf(r, chains, j, max_lag) {
                cols.push((format!("{}:{name}", r.label), a));
            }
        }
    }
    let lags: Vec<usize> = (0..=max_lag).collect();
    write_columns(path, "lag", &lags, &cols)
}

fn uf_range(res: &ExperimentResult) -> (usize, usize) {
    let t_max = res.y.len();
    match res.config.diagnostics.update_frequency_range {
        Some([a, b]) => (a.min(t_max), b.min(t_max)),
        None => (0, t_max),
    }
}

fn write_update_frequency(res: &ExperimentResult, path: &Path, chains: &[usize]) -> Result<()> {
    let (lo, hi) = uf_range(res);
    let width = res.y.len() + 1;
    let mut cols = Vec::new();
    for r in &res.runs {
        if r.sampler.method == Method::Mis {
            continue;
        }
        let mut total = vec![0.0; width];
        for &c in chains {
            let ch = &r.chains[c];
            let tail = &ch.trajectories[r.sampler.burn_in * width..];
            let f = update_frequency(tail, width).map_err(|e| anyhow!("run `{}`: {e}", r.label))?;
            total.iter_mut().zip(f).for_each(|(a, b)| *a += b);
        }
        let n = chains.len() as f64;
        cols.push((
            r.label.clone(),
            total[lo..=hi].iter().map(|v| v / n).collect(),
        ));
    }
    let ts: Vec<usize> = (lo..=hi).collect();
    write_columns(path, "t", &ts, &cols)
}

/// Post-burn-in rows pooled over chains with normalized weights.
fn pooled_rows(r: &RunResult, chains: &[usize]) -> Vec<(usize, usize, f64)> {
    let k = chains.len() as f64;
    let mut rows = Vec::new();
    for &c in chains {
        let ch = &r.chains[c];
        let from = r.sampler.burn_in;
        let n = (ch.iterations() - from) as f64;
        match ch.row_weights(from) {
            Some(w) => rows.extend(w.into_iter().enumerate().map(|(i, w)| (c, from + i, w / k))),
            None => rows.extend((from..ch.iterations()).map(|m| (c, m, 1.0 / (n * k)))),
        }
    }
    rows
}

fn write_filtered(res: &ExperimentResult, path: &Path, chains: &[usize]) -> Result<()> {
    let transform = res.config.diagnostics.state_transform;
    let mut w = csv_writer(path)?;
    w.write_record(["run", "t", "mean", "sd"])?;
    for r in &res.runs {
        let rows = pooled_rows(r, chains);
        for t in 0..=res.y.len() {
            let val = |&(c, m, _): &(usize, usize, f64)| {
                let x = r.chains[c].trajectory(m)[t];
                match transform {
                    StateTransform::Identity => x,
                    StateTransform::Exp => x.exp(),
                }
            };
            let mean: f64 = rows.iter().map(|row| row.2 * val(row)).sum();
            let var: f64 = rows
                .iter()
                .map(|row| row.2 * (val(row) - mean).powi(2))
                .sum();
            w.write_record([
                r.label.clone(),
                t.to_string(),
                fmt_float(mean),
                fmt_float(var.sqrt()),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

fn write_histograms(
    res: &ExperimentResult,
    path: &Path,
    chains: &[usize],
    bins: usize,
) -> Result<()> {
    let mut w = csv_writer(path)?;
    w.write_record(["run", "param", "lo", "hi", "count", "density"])?;
    for r in &res.runs {
        let rows = pooled_rows(r, chains);
        let weights: Vec<f64> = rows.iter().map(|x| x.2).collect();
        for (j, name) in r.chains[0].param_names.iter().enumerate() {
            let series: Vec<f64> = rows
                .iter()
                .map(|&(c, m, _)| r.chains[c].param_row(m)[j])
                .collect();
            let h = histogram(&series, bins, Some(&weights))
                .map_err(|e| anyhow!("run `{}`: {e}", r.label))?;
            for b in h {
                w.write_record([
                    r.label.clone(),
                    name.clone(),
                    fmt_float(b.lo),
                    fmt_float(b.hi),
                    fmt_float(b.count),
                    fmt_float(b.density),
                ])?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

#[derive(Serialize)]
pub struct ExperimentSummary {
    pub name: String,
    pub horizon: usize,
    pub chains: Vec<usize>,
    pub runs: Vec<RunSummary>,
}

#[derive(Serialize)]
pub struct RunSummary {
    pub label: String,
    pub method: Method,
    pub particles: usize,
    pub iterations: usize,
    pub burn_in: usize,
    pub seed: u64,
    pub wall_seconds: Vec<f64>,
    /// mPMMH only.
    pub acceptance_rate: Option<f64>,
    /// mIS only: `ln` of the mean evidence estimate.
    pub log_evidence: Option<f64>,
    pub params: BTreeMap<String, Summary>,
    pub lag1_acf: BTreeMap<String, f64>,
}

pub fn summarize_experiment(res: &ExperimentResult, chains: &[usize]) -> Result<ExperimentSummary> {
    let mut runs = Vec::new();
    for r in &res.runs {
        let rows = pooled_rows(r, chains);
        let weighted = r.sampler.method == Method::Mis;
        let mut params = BTreeMap::new();
        let mut lag1 = BTreeMap::new();
        for (j, name) in r.chains[0].param_names.iter().enumerate() {
            let series: Vec<f64> = rows
                .iter()
                .map(|&(c, m, _)| r.chains[c].param_row(m)[j])
                .collect();
            let weights: Vec<f64> = rows.iter().map(|x| x.2).collect();
            let mut s = summarize(&series, weighted.then_some(&weights[..]))
                .map_err(|e| anyhow!("run `{}`, parameter `{name}`: {e}", r.label))?;
            if !weighted && chains.len() > 1 {
                // concatenated chains are not one chain: add per-chain ESS
                let per: Vec<Summary> = chains
                    .iter()
                    .map(|&c| summarize(&r.chains[c].param_series(j, r.sampler.burn_in), None))
                    .collect::<mpgas_core::Result<_>>()?;
                s.ess = per.iter().map(|p| p.ess).sum();
                s.mcse =
                    per.iter().map(|p| p.mcse * p.mcse).sum::<f64>().sqrt() / chains.len() as f64;
            }
            params.insert(name.clone(), s);
            if let Some(a) = pooled_acf(r, chains, j, 1) {
                lag1.insert(name.clone(), a[1]);
            }
        }
        let acceptance_rate = (r.sampler.method == Method::Mpmmh).then(|| {
            chains
                .iter()
                .filter_map(|&c| r.chains[c].acceptance_rate(r.sampler.burn_in))
                .sum::<f64>()
                / chains.len() as f64
        });
        let log_evidence = weighted.then(|| {
            let lz: Vec<f64> = chains
                .iter()
                .flat_map(|&c| r.chains[c].log_z.iter().copied())
                .collect();
            mpgas_core::dist::log_sum_exp(&lz) - (lz.len() as f64).ln()
        });
        runs.push(RunSummary {
            label: r.label.clone(),
            method: r.sampler.method,
            particles: r.sampler.particles,
            iterations: r.sampler.iterations,
            burn_in: r.sampler.burn_in,
            seed: r.sampler.seed,
            wall_seconds: chains.iter().map(|&c| r.chains[c].wall_seconds).collect(),
            acceptance_rate,
            log_evidence,
            params,
            lag1_acf: lag1,
        });
    }
    Ok(ExperimentSummary {
        name: res.config.name.clone(),
        horizon: res.y.len(),
        chains: chains.to_vec(),
        runs,
    })
}

/// `observations.csv` (`t,y`) and `states.csv` (`t,x`) for a simulated data source.
pub fn write_simulation(cfg: &ExperimentConfig, dir: &Path) -> Result<()> {
    if !matches!(cfg.data, DataSpec::Simulate { .. }) {
        bail!("field `data` must be `simulate` for the simulate command");
    }
    let data = load_data(cfg)?;
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let ts: Vec<usize> = (1..=data.y.len()).collect();
    write_columns(
        &dir.join("observations.csv"),
        "t",
        &ts,
        &[("y".into(), data.y)],
    )?;
    let x = data.x.expect("simulated states");
    let ts: Vec<usize> = (0..x.len()).collect();
    write_columns(&dir.join("states.csv"), "t", &ts, &[("x".into(), x)])
}
