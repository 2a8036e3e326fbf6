//! Observation files: a `t,y` CSV with `t = 1, 2, …, T` and no gaps.

use std::io::Read;
use std::path::Path;

use anyhow::{anyhow, bail, Context, Result};

pub fn load_observations(path: &Path) -> Result<Vec<f64>> {
    let file = std::fs::File::open(path).with_context(|| format!("opening {}", path.display()))?;
    read_observations(file).with_context(|| format!("reading {}", path.display()))
}

pub fn read_observations(input: impl Read) -> Result<Vec<f64>> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(input);
    let header = rdr.headers()?.clone();
    if header.is_empty() || (header.len() == 1 && header[0].is_empty()) {
        bail!("empty file; expected a `t,y` header");
    }
    if header.len() != 2 || &header[0] != "t" || &header[1] != "y" {
        bail!(
            "header must be `t,y`, found `{}`",
            header.iter().collect::<Vec<_>>().join(",")
        );
    }
    let mut y = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let line = i + 2;
        let rec = rec.map_err(|e| anyhow!("line {line}: {e}"))?;
        let t: usize = rec[0]
            .parse()
            .map_err(|_| anyhow!("line {line}: t = `{}` is not a positive integer", &rec[0]))?;
        let v: f64 = rec[1]
            .parse()
            .map_err(|_| anyhow!("line {line}: y = `{}` is not a number", &rec[1]))?;
        let expected = y.len() + 1;
        if t != expected {
            if t < expected {
                bail!(
                    "line {line}: t = {t} is not ascending (previous t = {})",
                    expected - 1
                );
            }
            bail!(
                "line {line}: t jumps from {} to {t}; missing observations are not supported",
                expected - 1
            );
        }
        if !v.is_finite() {
            bail!("line {line}: y = {v} is not finite");
        }
        y.push(v);
    }
    if y.is_empty() {
        bail!("no observations after the header");
    }
    Ok(y)
}
