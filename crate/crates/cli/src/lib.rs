//! Experiment runner: JSON configs in, CSV and JSON artifacts out.

pub mod config;
pub mod data;
pub mod experiment;
pub mod output;
pub mod presets;

pub use config::{load_config, ExperimentConfig};
pub use experiment::{run_experiment, write_outputs};

use std::path::{Path, PathBuf};

use anyhow::Result;

/// Where `run` writes, after `--out` and the config's own `output.dir`.
pub fn resolve_output_dir(cfg: &ExperimentConfig, out: Option<&Path>) -> PathBuf {
    out.map(Path::to_path_buf)
        .unwrap_or_else(|| cfg.output_dir())
}

/// Load a config path or a preset name.
pub fn load_target(target: &str, overrides: &[String]) -> Result<ExperimentConfig> {
    let path = Path::new(target);
    if !path.exists() && presets::find(target).is_some() {
        return presets::load_preset(target, overrides);
    }
    load_config(path, overrides)
}

/// Load, run and write in one call; returns the output directory.
pub fn run_to_dir(target: &str, overrides: &[String], out: Option<&Path>) -> Result<PathBuf> {
    let mut cfg = load_target(target, overrides)?;
    let dir = resolve_output_dir(&cfg, out);
    cfg.output.dir = Some(dir.clone());
    let res = run_experiment(&cfg)?;
    write_outputs(&res, &dir)?;
    Ok(dir)
}
