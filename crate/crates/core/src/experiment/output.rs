use std::fmt::Write as _;
use std::path::Path;

use super::runner::{CurveRow, EpisodeRepeat, GarnetRepeat};
use crate::Result;

pub const CURVE_FORMAT: &str = "# abac-curve v1";
pub const CURVE_AGGREGATE_FORMAT: &str = "# abac-curve-aggregate v1";
pub const EPISODE_FORMAT: &str = "# abac-episodes v1";
pub const EPISODE_AGGREGATE_FORMAT: &str = "# abac-episodes-aggregate v1";

const CURVE_METRICS: [&str; 5] = ["eta_estimate", "exact_eta", "mse", "msbe", "mspbe"];

fn curve_values(row: &CurveRow) -> Vec<f64> {
    let mut v = vec![row.eta_estimate, row.exact_eta, row.mse, row.msbe, row.mspbe];
    v.extend(&row.s);
    v
}

fn curve_columns(num_params: usize) -> Vec<String> {
    CURVE_METRICS
        .iter()
        .map(|s| s.to_string())
        .chain((0..num_params).map(|i| format!("s_{i}")))
        .collect()
}

/// Per-repeat learning curve.
pub fn curve_csv(repeat: &GarnetRepeat, num_params: usize) -> String {
    let mut out = String::new();
    writeln!(out, "{CURVE_FORMAT}").unwrap();
    writeln!(out, "step,{}", curve_columns(num_params).join(",")).unwrap();
    for row in &repeat.rows {
        write!(out, "{}", row.step).unwrap();
        for v in curve_values(row) {
            write!(out, ",{v}").unwrap();
        }
        writeln!(out).unwrap();
    }
    out
}

/// Mean and standard error of `values`; the standard error of a single
/// value is 0.
pub fn mean_stderr(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    (mean, (var / n as f64).sqrt())
}

/// Mean and standard error of every curve column over the successful
/// repeats, aligned by probe index.
pub fn curve_aggregate_csv(repeats: &[&GarnetRepeat], num_params: usize) -> String {
    let columns = curve_columns(num_params);
    let mut out = String::new();
    writeln!(out, "{CURVE_AGGREGATE_FORMAT}").unwrap();
    write!(out, "step,repeats").unwrap();
    for c in &columns {
        write!(out, ",{c}_mean,{c}_stderr").unwrap();
    }
    writeln!(out).unwrap();
    let rows = repeats.iter().map(|r| r.rows.len()).min().unwrap_or(0);
    for i in 0..rows {
        write!(out, "{},{}", repeats[0].rows[i].step, repeats.len()).unwrap();
        let values: Vec<Vec<f64>> = repeats.iter().map(|r| curve_values(&r.rows[i])).collect();
        for c in 0..columns.len() {
            let column: Vec<f64> = values.iter().map(|v| v[c]).collect();
            let (m, se) = mean_stderr(&column);
            write!(out, ",{m},{se}").unwrap();
        }
        writeln!(out).unwrap();
    }
    out
}

pub fn episodes_csv(repeat: &EpisodeRepeat) -> String {
    let mut out = String::new();
    writeln!(out, "{EPISODE_FORMAT}").unwrap();
    writeln!(out, "episode,steps,cumulative_steps").unwrap();
    let mut total = 0;
    for (i, &t) in repeat.steps.iter().enumerate() {
        total += t;
        writeln!(out, "{i},{t},{total}").unwrap();
    }
    out
}

pub fn episodes_aggregate_csv(repeats: &[&EpisodeRepeat]) -> String {
    let mut out = String::new();
    writeln!(out, "{EPISODE_AGGREGATE_FORMAT}").unwrap();
    writeln!(out, "episode,repeats,steps_mean,steps_stderr").unwrap();
    let rows = repeats.iter().map(|r| r.steps.len()).min().unwrap_or(0);
    for i in 0..rows {
        let column: Vec<f64> = repeats.iter().map(|r| r.steps[i] as f64).collect();
        let (m, se) = mean_stderr(&column);
        writeln!(out, "{i},{},{m},{se}", repeats.len()).unwrap();
    }
    out
}

/// Final basis parameters, one row per parameter.
pub fn params_csv(params: &[f64]) -> String {
    let mut out = String::from("# abac-params v1\nindex,value\n");
    for (i, v) in params.iter().enumerate() {
        writeln!(out, "{i},{v}").unwrap();
    }
    out
}

pub fn write(path: &Path, contents: &str) -> Result<()> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent)?;
    }
    std::fs::write(path, contents)?;
    Ok(())
}
