//! Writers for simulation outputs: per-replication trace CSVs, regret
//! series CSVs, and a run summary in JSON.
//!
//! Floats are serialized in shortest round-trip form, so outputs are
//! byte-identical for identical run parameters regardless of thread count.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::sim::TraceSeries;
use crate::solver::OptimalSolution;
use crate::Result;

/// One row of a trace CSV; field names are the column headers.
#[derive(Debug, Serialize)]
struct TraceCsvRow {
    k: u64,
    #[serde(rename = "S_k")]
    s_k: f64,
    #[serde(rename = "D_k")]
    d_k: f64,
    #[serde(rename = "W_k")]
    w_k: f64,
    #[serde(rename = "L_k")]
    l_k: f64,
    gamma_k: f64,
    nu_k: f64,
    #[serde(rename = "U_k")]
    u_k: f64,
    #[serde(rename = "deltaX_delivery")]
    delta_x_delivery: f64,
    #[serde(rename = "deltaX_frame")]
    delta_x_frame: f64,
    err_path: f64,
    err_mart: f64,
    cum_err: f64,
    timeavg_mse: f64,
    regret: f64,
}

fn ensure_parent(path: &Path) -> Result<()> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent)?;
        }
    }
    Ok(())
}

/// Conventional file name for one replication's trace CSV.
pub fn trace_csv_name(policy_label: &str, replication: u64) -> String {
    format!("{policy_label}_rep{replication:02}.csv")
}

/// Writes one replication's stored rows as CSV. The running time-average
/// and cumulative regret columns are derived against `sol`.
pub fn write_trace_csv(path: &Path, trace: &TraceSeries, sol: &OptimalSolution) -> Result<()> {
    ensure_parent(path)?;
    let mut w = csv::Writer::from_path(path)?;
    let rows = &trace.rows;
    for i in 0..rows.len() {
        w.serialize(TraceCsvRow {
            k: rows.k[i],
            s_k: rows.s_start[i],
            d_k: rows.delay[i],
            w_k: rows.wait[i],
            l_k: rows.length[i],
            gamma_k: rows.gamma[i],
            nu_k: rows.nu[i],
            u_k: rows.queue[i],
            delta_x_delivery: rows.dx_delivery[i],
            delta_x_frame: rows.dx_frame[i],
            err_path: rows.err_path[i],
            err_mart: rows.err_mart[i],
            cum_err: rows.cum_err[i],
            timeavg_mse: rows.cum_err[i] / rows.s_end[i],
            regret: rows.cum_err[i] - sol.mse_opt * rows.s_end[i],
        })?;
    }
    w.flush()?;
    Ok(())
}

/// Writes a `(k, regret)` series as a two-column CSV.
pub fn write_regret_csv(path: &Path, series: &[(u64, f64)]) -> Result<()> {
    ensure_parent(path)?;
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["k", "regret"])?;
    for &(k, r) in series {
        w.write_record(&[k.to_string(), format_float(r)])?;
    }
    w.flush()?;
    Ok(())
}

fn format_float(x: f64) -> String {
    let mut buf = ryu_format(x);
    // Trim the trailing ".0" that shortest-form printing adds to integral
    // values, matching serde's CSV float output.
    if buf.ends_with(".0") {
        buf.truncate(buf.len() - 2);
    }
    buf
}

fn ryu_format(x: f64) -> String {
    // serde_json and csv both print floats in shortest round-trip form;
    // going through serde_json keeps manual records consistent with
    // serialized ones.
    serde_json::to_string(&x).unwrap_or_else(|_| x.to_string())
}

/// End-of-run statistics across replications, serialized as the run
/// summary JSON.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunSummary {
    pub model: String,
    pub policy: String,
    pub frames: u64,
    pub reps: u64,
    pub seed: u64,
    pub step: Option<f64>,
    pub gamma_star: f64,
    pub nu_star: f64,
    pub tau_star: f64,
    pub frame_length_star: f64,
    pub mse_opt: f64,
    pub final_timeavg_mse_mean: f64,
    pub final_timeavg_mse_se: f64,
    pub final_mean_length: f64,
    pub coarse_step_warning_frames: u64,
    pub per_rep_final_timeavg_mse: Vec<f64>,
}

/// Builds the run summary from finished traces and the reference solution.
pub fn summarize(
    traces: &[TraceSeries],
    sol: &OptimalSolution,
    seed: u64,
    step: Option<f64>,
) -> RunSummary {
    let n = traces.len() as f64;
    let finals: Vec<f64> = traces.iter().map(|t| t.final_time_average_mse()).collect();
    let mean = finals.iter().sum::<f64>() / n;
    let se = if traces.len() > 1 {
        let sample_var = finals.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
        (sample_var / n).sqrt()
    } else {
        0.0
    };
    RunSummary {
        model: traces[0].model_spec.clone(),
        policy: traces[0].policy_label.clone(),
        frames: traces[0].frames,
        reps: traces.len() as u64,
        seed,
        step,
        gamma_star: sol.gamma_star,
        nu_star: sol.nu_star,
        tau_star: sol.tau_star(),
        frame_length_star: sol.frame_length_star,
        mse_opt: sol.mse_opt,
        final_timeavg_mse_mean: mean,
        final_timeavg_mse_se: se,
        final_mean_length: traces.iter().map(|t| t.final_mean_length()).sum::<f64>() / n,
        coarse_step_warning_frames: traces.iter().map(|t| t.aggregates.warning_frames).sum(),
        per_rep_final_timeavg_mse: finals,
    }
}

/// Writes the run summary as pretty-printed JSON.
pub fn write_summary_json(path: &Path, summary: &RunSummary) -> Result<()> {
    ensure_parent(path)?;
    let text = serde_json::to_string_pretty(summary)
        .map_err(|e| crate::Error::Parse(format!("summary serialization failed: {e}")))?;
    fs::write(path, text + "\n")?;
    Ok(())
}
