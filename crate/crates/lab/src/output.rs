//! Output directory and file writers.

use std::path::{Path, PathBuf};

use rotor_core::observables::Histogram;
use serde::Serialize;

use crate::LabError;

/// Environment variable that overrides the output directory.
pub const OUT_ENV: &str = "ROTORLAB_OUT";

/// `$ROTORLAB_OUT` if set, else `flag`, else `./rotorlab-out`.
pub fn out_dir(flag: Option<&Path>) -> PathBuf {
    match std::env::var_os(OUT_ENV) {
        Some(v) if !v.is_empty() => PathBuf::from(v),
        _ => flag.map(Path::to_path_buf).unwrap_or_else(|| PathBuf::from("rotorlab-out")),
    }
}

pub fn write_json<T: Serialize>(dir: &Path, name: &str, value: &T) -> Result<PathBuf, LabError> {
    std::fs::create_dir_all(dir)?;
    let path = dir.join(name);
    let mut text = serde_json::to_string_pretty(value).map_err(|e| LabError::Io(e.to_string()))?;
    text.push('\n');
    std::fs::write(&path, text)?;
    Ok(path)
}

pub fn write_csv<R: AsRef<[f64]>>(dir: &Path, name: &str, header: &[&str], rows: &[R]) -> Result<PathBuf, LabError> {
    std::fs::create_dir_all(dir)?;
    let path = dir.join(name);
    let err = |e: csv::Error| LabError::Io(e.to_string());
    let mut w = csv::Writer::from_path(&path).map_err(err)?;
    w.write_record(header).map_err(err)?;
    for r in rows {
        w.write_record(r.as_ref().iter().map(|v| format!("{v:e}"))).map_err(err)?;
    }
    w.flush()?;
    Ok(path)
}

/// Rows `center, density_1, density_2, ...` for histograms on one grid.
pub fn density_rows(hists: &[&Histogram]) -> Vec<Vec<f64>> {
    let dens: Vec<Vec<f64>> = hists.iter().map(|h| h.density()).collect();
    (0..hists[0].n_bins())
        .map(|i| {
            let mut row = vec![hists[0].center(i)];
            row.extend(dens.iter().map(|d| d[i]));
            row
        })
        .collect()
}
