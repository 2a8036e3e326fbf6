//! Experiment configuration: one JSON document per experiment.

use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use mpgas_core::conjugacy::ParamDraw;
use mpgas_core::models::{EpidemicPrior, IgPriors, PopulationPrior};
use mpgas_core::samplers::{Method, SamplerConfig};
use mpgas_core::smc::{ProposalKind, Resampling};
use serde::{Deserialize, Serialize};
use serde_json::Value;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub name: String,
    #[serde(default)]
    pub description: String,
    pub model: ModelSpec,
    pub data: DataSpec,
    pub sampler: SamplerSpec,
    /// Variants of `sampler`; each becomes a labelled run. Empty means one run.
    #[serde(default)]
    pub runs: Vec<RunSpec>,
    #[serde(default = "one")]
    pub chains: usize,
    #[serde(default)]
    pub output: OutputSpec,
    #[serde(default)]
    pub diagnostics: DiagnosticsSpec,
}

fn one() -> usize {
    1
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ModelSpec {
    /// The nonlinear benchmark with unknown noise variances.
    Benchmark {
        #[serde(default = "default_ig")]
        priors: IgPriors,
    },
    LinearGaussian {
        a: f64,
        c: f64,
        #[serde(default)]
        x0_mean: f64,
        #[serde(default = "unit")]
        x0_var: f64,
        #[serde(default = "default_ig")]
        priors: IgPriors,
    },
    Epidemic {
        population: u64,
        background: f64,
        contact: f64,
        initial_rate: f64,
        priors: EpidemicPrior,
    },
    /// Log-population growth with density regulation exponent `c`.
    Population {
        #[serde(default)]
        priors: PopulationPrior,
        #[serde(default = "unit")]
        c: f64,
        /// Defaults to `ln y₁` with unit variance when unset.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        x0_mean: Option<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        x0_var: Option<f64>,
    },
}

fn default_ig() -> IgPriors {
    IgPriors::default()
}

fn unit() -> f64 {
    1.0
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub enum DataSpec {
    Simulate {
        theta: Vec<f64>,
        horizon: usize,
        seed: u64,
    },
    /// A `t,y` CSV; relative paths resolve against the config file.
    Path(PathBuf),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ProposalSpec {
    Bootstrap,
    MarginalizedBootstrap,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SamplerSpec {
    pub method: Method,
    pub particles: usize,
    pub iterations: usize,
    #[serde(default)]
    pub burn_in: usize,
    #[serde(default)]
    pub seed: u64,
    /// Defaults to the marginalized bootstrap for marginal methods.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub proposal: Option<ProposalSpec>,
    #[serde(default)]
    pub resampling: Resampling,
    #[serde(default)]
    pub block_b: usize,
    #[serde(default)]
    pub block_l: usize,
    /// Random-walk variance for mPMMH.
    #[serde(default = "default_tau")]
    pub tau: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub initial_theta: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub initial_theta_u: Option<Vec<f64>>,
    #[serde(default = "yes")]
    pub store_trajectories: bool,
}

fn default_tau() -> f64 {
    0.05
}

fn yes() -> bool {
    true
}

/// Per-run overrides of [`SamplerSpec`].
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub method: Option<Method>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub particles: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub iterations: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub burn_in: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub proposal: Option<ProposalSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub block_b: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub block_l: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tau: Option<f64>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSpec {
    /// Defaults to `out/<name>`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dir: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StateTransform {
    #[default]
    Identity,
    Exp,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiagnosticsSpec {
    #[serde(default = "default_lag")]
    pub acf_max_lag: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub histogram_bins: Option<usize>,
    #[serde(default = "yes")]
    pub update_frequency: bool,
    /// Inclusive `[first, last]` time range for update_frequency.csv.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub update_frequency_range: Option<[usize; 2]>,
    /// Write filtered.csv with per-time state means and standard deviations.
    #[serde(default)]
    pub filtered: bool,
    #[serde(default)]
    pub state_transform: StateTransform,
    /// Append x_0..x_T columns to samples.csv.
    #[serde(default)]
    pub write_states: bool,
}

fn default_lag() -> usize {
    50
}

impl Default for DiagnosticsSpec {
    fn default() -> Self {
        DiagnosticsSpec {
            acf_max_lag: default_lag(),
            histogram_bins: None,
            update_frequency: true,
            update_frequency_range: None,
            filtered: false,
            state_transform: StateTransform::Identity,
            write_states: false,
        }
    }
}

/// One fully resolved run.
#[derive(Clone, Debug)]
pub struct ResolvedRun {
    pub label: String,
    pub sampler: SamplerSpec,
}

impl SamplerSpec {
    pub fn to_sampler_config(&self) -> SamplerConfig {
        let mut c = SamplerConfig::new(self.method, self.particles, self.iterations);
        c.burn_in = self.burn_in;
        c.seed = self.seed;
        c.proposal = match self.effective_proposal() {
            ProposalSpec::Bootstrap => ProposalKind::Bootstrap,
            ProposalSpec::MarginalizedBootstrap => ProposalKind::MarginalizedBootstrap,
        };
        c.resampling = self.resampling;
        c.block_b = self.block_b;
        c.block_l = self.block_l;
        c.tau = self.tau;
        c.initial_theta = self.initial_theta.as_deref().map(ParamDraw::new);
        c.initial_theta_u = self.initial_theta_u.clone();
        c.store_trajectories = self.store_trajectories;
        c
    }

    pub fn effective_proposal(&self) -> ProposalSpec {
        self.proposal.unwrap_or(if self.method.is_marginal() {
            ProposalSpec::MarginalizedBootstrap
        } else {
            ProposalSpec::Bootstrap
        })
    }
}

impl ExperimentConfig {
    pub fn resolved_runs(&self) -> Vec<ResolvedRun> {
        if self.runs.is_empty() {
            return vec![ResolvedRun {
                label: default_label(&self.sampler),
                sampler: self.sampler.clone(),
            }];
        }
        self.runs
            .iter()
            .map(|r| {
                let mut s = self.sampler.clone();
                if let Some(m) = r.method {
                    s.method = m;
                    // a method change resets an inherited proposal default
                    if r.proposal.is_none() {
                        s.proposal = self
                            .sampler
                            .proposal
                            .filter(|_| m.is_marginal() == self.sampler.method.is_marginal());
                    }
                }
                s.particles = r.particles.unwrap_or(s.particles);
                s.iterations = r.iterations.unwrap_or(s.iterations);
                s.burn_in = r.burn_in.unwrap_or(s.burn_in);
                s.seed = r.seed.unwrap_or(s.seed);
                s.proposal = r.proposal.or(s.proposal);
                s.block_b = r.block_b.unwrap_or(s.block_b);
                s.block_l = r.block_l.unwrap_or(s.block_l);
                s.tau = r.tau.unwrap_or(s.tau);
                ResolvedRun {
                    label: r.label.clone().unwrap_or_else(|| default_label(&s)),
                    sampler: s,
                }
            })
            .collect()
    }

    pub fn output_dir(&self) -> PathBuf {
        self.output
            .dir
            .clone()
            .unwrap_or_else(|| Path::new("out").join(&self.name))
    }

    /// Checks that need no data; sampler checks that depend on `T` run later.
    pub fn validate(&self) -> Result<()> {
        if self.name.trim().is_empty() {
            bail!("field `name` must not be empty");
        }
        if self.chains == 0 {
            bail!("field `chains` must be at least 1");
        }
        let runs = self.resolved_runs();
        let mut labels: Vec<&str> = runs.iter().map(|r| r.label.as_str()).collect();
        labels.sort_unstable();
        if let Some(w) = labels.windows(2).find(|w| w[0] == w[1]) {
            bail!("duplicate run label `{}`", w[0]);
        }
        for r in &runs {
            let s = &r.sampler;
            let ctx = |field: &str| format!("run `{}`: field `sampler.{field}`", r.label);
            if s.particles == 0 {
                bail!("{} must be at least 1", ctx("particles"));
            }
            if s.iterations == 0 {
                bail!("{} must be at least 1", ctx("iterations"));
            }
            if s.burn_in >= s.iterations {
                bail!(
                    "{} = {} must be below iterations = {}",
                    ctx("burn_in"),
                    s.burn_in,
                    s.iterations
                );
            }
            if s.effective_proposal() == ProposalSpec::MarginalizedBootstrap
                && !s.method.is_marginal()
            {
                bail!(
                    "{}: the marginalized bootstrap needs a marginal method, not `{}`",
                    ctx("proposal"),
                    s.method
                );
            }
            if s.method == Method::Mpmmh && !matches!(self.model, ModelSpec::Population { .. }) {
                bail!(
                    "{}: mpmmh needs a model with unmarginalized parameters (kind `population`)",
                    ctx("method")
                );
            }
            if (self.diagnostics.filtered || self.diagnostics.update_frequency)
                && !s.store_trajectories
            {
                bail!(
                    "{}: filtered.csv and update_frequency.csv need stored trajectories",
                    ctx("store_trajectories")
                );
            }
        }
        if let DataSpec::Simulate { horizon, .. } = &self.data {
            if *horizon == 0 {
                bail!("field `data.simulate.horizon` must be at least 1");
            }
        }
        if let Some([a, b]) = self.diagnostics.update_frequency_range {
            if a > b {
                bail!(
                    "field `diagnostics.update_frequency_range` must be ascending, got [{a}, {b}]"
                );
            }
        }
        if self.diagnostics.histogram_bins == Some(0) {
            bail!("field `diagnostics.histogram_bins` must be at least 1");
        }
        Ok(())
    }
}

fn default_label(s: &SamplerSpec) -> String {
    format!("{}-N{}", s.method, s.particles)
}

/// Parse a config document; errors carry the line and column.
pub fn parse_config(text: &str, origin: &str) -> Result<ExperimentConfig> {
    serde_json::from_str(text).map_err(|e| anyhow!("{origin}:{}:{}: {e}", e.line(), e.column()))
}

/// Apply `key=value` overrides to a JSON document. Keys are dotted paths
/// (`sampler.iterations`, `runs.0.particles`); values parse as JSON and fall
/// back to plain strings.
pub fn apply_overrides(doc: &mut Value, overrides: &[String]) -> Result<()> {
    for ov in overrides {
        let (key, raw) = ov
            .split_once('=')
            .ok_or_else(|| anyhow!("override `{ov}` is not of the form key=value"))?;
        let value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
        let mut node = &mut *doc;
        let parts: Vec<&str> = key.split('.').collect();
        for (i, part) in parts.iter().enumerate() {
            let last = i + 1 == parts.len();
            node = match node {
                Value::Object(map) => {
                    if last {
                        map.insert(part.to_string(), value.clone());
                        break;
                    }
                    map.entry(part.to_string())
                        .or_insert_with(|| Value::Object(Default::default()))
                }
                Value::Array(items) => {
                    let idx: usize = part
                        .parse()
                        .map_err(|_| anyhow!("override `{key}`: `{part}` is not an array index"))?;
                    let len = items.len();
                    let slot = items.get_mut(idx).ok_or_else(|| {
                        anyhow!("override `{key}`: index {idx} out of range (length {len})")
                    })?;
                    if last {
                        *slot = value.clone();
                        break;
                    }
                    slot
                }
                _ => bail!("override `{key}`: `{part}` is not inside an object or array"),
            };
        }
    }
    Ok(())
}

/// Load, override, default and validate a config file. Relative data paths
/// are made absolute against the file's directory.
pub fn load_config(path: &Path, overrides: &[String]) -> Result<ExperimentConfig> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("reading config {}", path.display()))?;
    load_config_str(&text, &path.display().to_string(), path.parent(), overrides)
}

pub fn load_config_str(
    text: &str,
    origin: &str,
    base: Option<&Path>,
    overrides: &[String],
) -> Result<ExperimentConfig> {
    // parse once untouched so syntax and schema errors point into the file
    let mut cfg = parse_config(text, origin)?;
    if !overrides.is_empty() {
        let mut doc: Value = serde_json::from_str(text)?;
        apply_overrides(&mut doc, overrides)?;
        cfg = serde_json::from_value(doc).map_err(|e| anyhow!("{origin} after overrides: {e}"))?;
    }
    if let DataSpec::Path(p) = &mut cfg.data {
        if p.is_relative() {
            if let Some(base) = base {
                *p = base.join(&*p);
            }
        }
        if let Ok(abs) = p.canonicalize() {
            *p = abs;
        }
    }
    cfg.validate()?;
    Ok(cfg)
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"{
        "name": "small",
        "model": {"kind": "benchmark"},
        "data": {"simulate": {"theta": [10, 1], "horizon": 50, "seed": 1}},
        "sampler": {"method": "mpgas", "particles": 50, "iterations": 100}
    }"#;

    #[test]
    fn minimal_config_is_valid() {
        let cfg = load_config_str(MINIMAL, "t.json", None, &[]).unwrap();
        assert_eq!(cfg.chains, 1);
        let runs = cfg.resolved_runs();
        assert_eq!(runs.len(), 1);
        assert_eq!(runs[0].label, "mpgas-N50");
        assert_eq!(
            runs[0].sampler.effective_proposal(),
            ProposalSpec::MarginalizedBootstrap
        );
        assert_eq!(cfg.output_dir(), Path::new("out/small"));
    }

    #[test]
    fn unknown_key_reports_position() {
        let text = MINIMAL
            .replace("\"chains\"", "x")
            .replace("\"iterations\": 100", "\"iterations\": 100, \"itres\": 3");
        let err = load_config_str(&text, "t.json", None, &[])
            .unwrap_err()
            .to_string();
        assert!(err.contains("unknown field `itres`"), "{err}");
        assert!(err.starts_with("t.json:5:"), "{err}");
    }

    #[test]
    fn syntax_error_reports_position() {
        let err = load_config_str("{\n  \"name\": \"x\",\n  oops\n}", "t.json", None, &[])
            .unwrap_err()
            .to_string();
        assert!(err.starts_with("t.json:3:"), "{err}");
    }

    #[test]
    fn unknown_method_lists_tags() {
        let text = MINIMAL.replace("\"mpgas\"", "\"gibbs\"");
        let err = load_config_str(&text, "t.json", None, &[])
            .unwrap_err()
            .to_string();
        for tag in [
            "pg",
            "pgas",
            "mpg",
            "mpgas",
            "blocked-mpg",
            "blocked-mpgas",
            "mpmmh",
            "mis",
        ] {
            assert!(err.contains(&format!("`{tag}`")), "{err}");
        }
    }

    #[test]
    fn overrides_apply_and_are_checked() {
        let cfg = load_config_str(
            MINIMAL,
            "t.json",
            None,
            &[
                "sampler.iterations=7".into(),
                "sampler.method=pgas".into(),
                "chains=3".into(),
            ],
        )
        .unwrap();
        assert_eq!(cfg.sampler.iterations, 7);
        assert_eq!(cfg.sampler.method, Method::Pgas);
        assert_eq!(cfg.chains, 3);
        let err =
            load_config_str(MINIMAL, "t.json", None, &["sampler.itres=7".into()]).unwrap_err();
        assert!(err.to_string().contains("itres"));
        assert!(load_config_str(MINIMAL, "t.json", None, &["nokey".into()]).is_err());
    }

    #[test]
    fn run_variants_inherit_and_override() {
        let text = MINIMAL.replace(
            "\"iterations\": 100}",
            "\"iterations\": 100},\n \"runs\": [{\"method\": \"pgas\", \"particles\": 500}, {\"label\": \"m\"}]",
        );
        let cfg = load_config_str(&text, "t.json", None, &[]).unwrap();
        let runs = cfg.resolved_runs();
        assert_eq!(runs[0].label, "pgas-N500");
        assert_eq!(
            runs[0].sampler.effective_proposal(),
            ProposalSpec::Bootstrap
        );
        assert_eq!(runs[1].label, "m");
        assert_eq!(runs[1].sampler.particles, 50);
        let err = load_config_str(&text, "t.json", None, &["runs.0.label=m".into()]).unwrap_err();
        assert!(err.to_string().contains("duplicate run label"));
    }

    #[test]
    fn validation_names_fields() {
        let err = load_config_str(MINIMAL, "t.json", None, &["sampler.burn_in=100".into()])
            .unwrap_err()
            .to_string();
        assert!(err.contains("burn_in"), "{err}");
        let err = load_config_str(MINIMAL, "t.json", None, &["sampler.method=mpmmh".into()])
            .unwrap_err()
            .to_string();
        assert!(err.contains("mpmmh"), "{err}");
    }

    #[test]
    fn resolved_config_round_trips() {
        let cfg = load_config_str(MINIMAL, "t.json", None, &[]).unwrap();
        let text = serde_json::to_string_pretty(&cfg).unwrap();
        assert_eq!(load_config_str(&text, "r.json", None, &[]).unwrap(), cfg);
    }
}
