//! CSV and JSON writers. Floats carry 17 significant digits so every value
//! parses back to the same `f64`.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use anyhow::{Context, Result};

/// `%.17g`: fixed notation for exponents in `[-5, 17)`, scientific otherwise,
/// trailing zeros dropped.
pub fn fmt_float(x: f64) -> String {
    if x.is_nan() {
        return "NaN".into();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if x == 0.0 {
        return if x.is_sign_negative() {
            "-0".into()
        } else {
            "0".into()
        };
    }
    let sci = format!("{x:.16e}");
    let (mant, exp) = sci.split_once('e').expect("exponent");
    let exp: i32 = exp.parse().expect("exponent digits");
    if (-5..17).contains(&exp) {
        let fixed = format!("{x:.*}", (16 - exp) as usize);
        trim_zeros(&fixed).to_string()
    } else {
        format!("{}e{exp}", trim_zeros(mant))
    }
}

fn trim_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

pub fn csv_writer(path: &Path) -> Result<csv::Writer<BufWriter<File>>> {
    let f = File::create(path).with_context(|| format!("creating {}", path.display()))?;
    Ok(csv::Writer::from_writer(BufWriter::new(f)))
}

pub fn write_json(path: &Path, value: &impl serde::Serialize) -> Result<()> {
    let f = File::create(path).with_context(|| format!("creating {}", path.display()))?;
    let mut w = BufWriter::new(f);
    serde_json::to_writer_pretty(&mut w, value)?;
    writeln!(w)?;
    w.flush()?;
    Ok(())
}

/// `t,<label>` CSV of one series per column, all over the same `t` values.
pub fn write_columns(
    path: &Path,
    index: &str,
    ts: &[usize],
    columns: &[(String, Vec<f64>)],
) -> Result<()> {
    let mut w = csv_writer(path)?;
    let mut header = vec![index.to_string()];
    header.extend(columns.iter().map(|(n, _)| n.clone()));
    w.write_record(&header)?;
    for (i, t) in ts.iter().enumerate() {
        let mut row = vec![t.to_string()];
        row.extend(
            columns
                .iter()
                .map(|(_, v)| v.get(i).map_or(String::new(), |x| fmt_float(*x))),
        );
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}
