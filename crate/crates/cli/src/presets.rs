//! Experiment presets shipped as config files in `presets/`.

use std::path::PathBuf;

use anyhow::{anyhow, Result};

use crate::config::{load_config_str, ExperimentConfig};

pub struct Preset {
    pub name: &'static str,
    pub text: &'static str,
}

pub const PRESETS: &[Preset] = &[
    Preset {
        name: "fig1",
        text: include_str!("../../../presets/fig1.json"),
    },
    Preset {
        name: "fig2-blocking",
        text: include_str!("../../../presets/fig2-blocking.json"),
    },
    Preset {
        name: "fig4-epidemic",
        text: include_str!("../../../presets/fig4-epidemic.json"),
    },
    Preset {
        name: "fig5-sparrows",
        text: include_str!("../../../presets/fig5-sparrows.json"),
    },
];

/// Directory the preset files live in; their relative data paths resolve here.
pub fn preset_dir() -> PathBuf {
    PathBuf::from(concat!(env!("CARGO_MANIFEST_DIR"), "/../../presets"))
}

pub fn find(name: &str) -> Option<&'static Preset> {
    PRESETS.iter().find(|p| p.name == name)
}

pub fn load_preset(name: &str, overrides: &[String]) -> Result<ExperimentConfig> {
    let p = find(name).ok_or_else(|| {
        let names: Vec<_> = PRESETS.iter().map(|p| p.name).collect();
        anyhow!("unknown preset `{name}`; available: {}", names.join(", "))
    })?;
    load_config_str(
        p.text,
        &format!("preset {name}"),
        Some(&preset_dir()),
        overrides,
    )
}

/// First line of the description, for listings.
pub fn describe(p: &Preset) -> Result<String> {
    let cfg = load_config_str(p.text, p.name, Some(&preset_dir()), &[])?;
    Ok(cfg.description)
}
