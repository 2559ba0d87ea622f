//! Command-line front end for the sampling-policy library.
//!
//! Subcommands: `solve` (optimal operating point as JSON), `simulate`
//! (replicated traces to CSV plus a JSON summary), `regret` (cumulative
//! regret series), and `validate` (the library's self-check suite).
//!
//! Exit codes: 0 success, 1 usage or argument errors, 2 numeric failures
//! (solver, integration), 3 I/O errors, 4 validation check failures.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use wiener_sampling::analytic::AnalyticContext;
use wiener_sampling::output::{
    summarize, trace_csv_name, write_regret_csv, write_summary_json, write_trace_csv, RunSummary,
};
use wiener_sampling::policy::{OnlineConfig, PolicyKind, PolicySpec};
use wiener_sampling::sim::{regret_series, run_replications, TraceSeries};
use wiener_sampling::solver::{solve_constrained, solve_unconstrained, OptimalSolution};
use wiener_sampling::validate::run_suite;
use wiener_sampling::{DelayModel, Error, Result};

#[derive(Parser)]
#[command(
    name = "wsamp",
    version,
    about = "Sampling policies for remote estimation over a random-delay channel",
    after_help = "Exit codes: 0 ok, 1 usage, 2 numeric failure, 3 I/O, 4 validation failures."
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Solve for the optimal threshold policy and print it as JSON.
    Solve(RunArgs),
    /// Simulate replicated traces; write CSVs and a summary when --out is given.
    Simulate(RunArgs),
    /// Emit the cumulative regret series of a policy against the optimum.
    Regret(RunArgs),
    /// Run the analytic and simulation self-checks.
    Validate(ValidateArgs),
}

#[derive(Args, Clone)]
struct RunArgs {
    /// Delay model: det:d | uniform:a,b | lognormal:mu,sigma |
    /// lecam:delta,c,k | empirical:path
    #[arg(long)]
    delay: Option<String>,
    /// Policy: online | optimal | zerowait | const:w
    #[arg(long)]
    policy: Option<String>,
    /// Frames per replication.
    #[arg(long)]
    frames: Option<u64>,
    /// Independent replications.
    #[arg(long)]
    reps: Option<u64>,
    /// RNG seed; replication r runs on stream r of this seed.
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Learning-rate exponent, in (0.5, 1].
    #[arg(long)]
    alpha: Option<f64>,
    /// Lower bound on the mean delay used in the learning rate
    /// (default: half the model mean).
    #[arg(long)]
    dlb: Option<f64>,
    /// Sampling-frequency budget: a number, "inf", or "auto10" for
    /// 1/(10 * mean delay).
    #[arg(long)]
    fmax: Option<String>,
    /// Queue-to-multiplier scale of the online policy.
    #[arg(long, value_name = "V")]
    v: Option<f64>,
    /// Euler step override (default: per-frame rule).
    #[arg(long)]
    step: Option<f64>,
    /// Output directory for CSV and JSON files.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Stdout format for series data: csv or json.
    #[arg(long, default_value = "json")]
    format: String,
    /// Experiment preset: fig3, fig4, fig5, or fig6. Explicit flags win.
    #[arg(long)]
    preset: Option<String>,
}

#[derive(Args, Clone)]
struct ValidateArgs {
    /// Euler step forced on all simulation checks.
    #[arg(long)]
    step: Option<f64>,
    /// Report format: text or json.
    #[arg(long, default_value = "text")]
    format: String,
}

/// Fully resolved run configuration; serializes losslessly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct ExperimentConfig {
    delay: String,
    policy: String,
    frames: u64,
    replications: u64,
    seed: u64,
    alpha: f64,
    dbar_lb: Option<f64>,
    f_max: String,
    v: f64,
    step: Option<f64>,
    out: Option<PathBuf>,
    format: String,
    /// Cap on CSV rows per replication; rows are log-thinned to fit.
    checkpoints: Option<usize>,
}

impl ExperimentConfig {
    fn validate(&self) -> Result<()> {
        if self.frames == 0 || self.replications == 0 {
            return Err(Error::InvalidArgument(
                "frames and reps must be at least 1".into(),
            ));
        }
        if !(self.alpha > 0.5 && self.alpha <= 1.0) {
            return Err(Error::InvalidArgument(format!(
                "alpha must lie in (0.5, 1], got {}",
                self.alpha
            )));
        }
        if !(self.v > 0.0) {
            return Err(Error::InvalidArgument(format!("V must be positive, got {}", self.v)));
        }
        if self.format != "csv" && self.format != "json" {
            return Err(Error::InvalidArgument(format!(
                "format must be csv or json, got {}",
                self.format
            )));
        }
        Ok(())
    }
}

/// One preset bundle: the runs a figure's data requires.
struct Preset {
    delay: &'static str,
    frames: u64,
    reps: u64,
    fmax: &'static str,
    policies: &'static [&'static str],
    v_values: &'static [f64],
}

fn preset(name: &str) -> Result<Preset> {
    match name {
        "fig3" => Ok(Preset {
            delay: "lognormal:0.8,1.2",
            frames: 50_000,
            reps: 20,
            fmax: "inf",
            policies: &["online", "optimal", "zerowait"],
            v_values: &[1.0],
        }),
        "fig4" => Ok(Preset {
            delay: "lognormal:0.8,1.2",
            frames: 50_000,
            reps: 20,
            fmax: "inf",
            policies: &["online"],
            v_values: &[1.0],
        }),
        "fig5" | "fig6" => Ok(Preset {
            delay: "lognormal:0.8,1.2",
            frames: 50_000,
            reps: 20,
            fmax: "auto10",
            policies: &["online"],
            v_values: &[1.0, 10.0],
        }),
        other => Err(Error::InvalidArgument(format!(
            "unknown preset {other}; expected fig3, fig4, fig5, or fig6"
        ))),
    }
}

/// Resolves flags plus an optional preset into concrete run configs, one
/// per (policy, V) pair.
fn resolve_runs(args: &RunArgs) -> Result<Vec<ExperimentConfig>> {
    let preset = args.preset.as_deref().map(preset).transpose()?;
    let delay = args
        .delay
        .clone()
        .or_else(|| preset.as_ref().map(|p| p.delay.to_string()))
        .ok_or_else(|| Error::InvalidArgument("--delay is required (or use --preset)".into()))?;
    let frames = args
        .frames
        .or(preset.as_ref().map(|p| p.frames))
        .ok_or_else(|| Error::InvalidArgument("--frames is required (or use --preset)".into()))?;
    let reps = args.reps.or(preset.as_ref().map(|p| p.reps)).unwrap_or(1);
    let fmax = args
        .fmax
        .clone()
        .or_else(|| preset.as_ref().map(|p| p.fmax.to_string()))
        .unwrap_or_else(|| "inf".to_string());
    let policies: Vec<String> = match &args.policy {
        Some(p) => vec![p.clone()],
        None => match &preset {
            Some(p) => p.policies.iter().map(|s| s.to_string()).collect(),
            None => {
                return Err(Error::InvalidArgument(
                    "--policy is required (or use --preset)".into(),
                ))
            }
        },
    };
    let v_values: Vec<f64> = match args.v {
        Some(v) => vec![v],
        None => preset.as_ref().map(|p| p.v_values.to_vec()).unwrap_or_else(|| vec![1.0]),
    };
    let mut runs = Vec::new();
    for policy in &policies {
        for &v in &v_values {
            runs.push(ExperimentConfig {
                delay: delay.clone(),
                policy: policy.clone(),
                frames,
                replications: reps,
                seed: args.seed,
                alpha: args.alpha.unwrap_or(1.0),
                dbar_lb: args.dlb,
                f_max: fmax.clone(),
                v,
                step: args.step,
                out: args.out.clone(),
                format: args.format.clone(),
                checkpoints: None,
            });
        }
    }
    for r in &runs {
        r.validate()?;
    }
    Ok(runs)
}

fn resolve_fmax(spec: &str, model: &DelayModel) -> Result<f64> {
    match spec {
        "inf" => Ok(f64::INFINITY),
        "auto10" => {
            if model.mean() == 0.0 {
                return Err(Error::InvalidArgument(
                    "auto10 budget needs a positive mean delay".into(),
                ));
            }
            Ok(1.0 / (10.0 * model.mean()))
        }
        number => number
            .parse::<f64>()
            .map_err(|_| {
                Error::Parse(format!("fmax must be a number, \"inf\", or \"auto10\", got {number}"))
            })
            .and_then(|x| {
                if x > 0.0 {
                    Ok(x)
                } else {
                    Err(Error::InvalidArgument(format!("fmax must be positive, got {x}")))
                }
            }),
    }
}

fn solve_for(ctx: &AnalyticContext, f_max: f64) -> Result<OptimalSolution> {
    if f_max.is_finite() {
        solve_constrained(ctx, f_max)
    } else {
        solve_unconstrained(ctx)
    }
}

fn build_kind(
    spec: &PolicySpec,
    model: &DelayModel,
    sol: &OptimalSolution,
    config: &ExperimentConfig,
    f_max: f64,
) -> Result<PolicyKind> {
    Ok(match spec {
        PolicySpec::Online => {
            let online = match config.dbar_lb {
                Some(dlb) => OnlineConfig::new(config.alpha, dlb, f_max, config.v)?,
                None => OnlineConfig::for_model(model, config.alpha, f_max, config.v)?,
            };
            PolicyKind::Online(online)
        }
        PolicySpec::Optimal => PolicyKind::OptimalThreshold(sol.clone()),
        PolicySpec::ConstantWait(w) => PolicyKind::ConstantWait(*w),
        PolicySpec::ZeroWait => PolicyKind::ZeroWait,
    })
}

/// The exact shape `solve` prints.
#[derive(Serialize)]
struct SolveOutput {
    gamma_star: f64,
    nu_star: f64,
    tau_star: f64,
    frame_length_star: f64,
    mse_opt: f64,
    residual: f64,
}

fn cmd_solve(args: &RunArgs) -> Result<ExitCode> {
    let runs = resolve_solve_config(args)?;
    let model = DelayModel::parse(&runs.delay)?;
    let f_max = resolve_fmax(&runs.f_max, &model)?;
    let ctx = AnalyticContext::new(model)?;
    let sol = solve_for(&ctx, f_max)?;
    let out = SolveOutput {
        gamma_star: sol.gamma_star,
        nu_star: sol.nu_star,
        tau_star: sol.tau_star(),
        frame_length_star: sol.frame_length_star,
        mse_opt: sol.mse_opt,
        residual: sol.residual,
    };
    println!(
        "{}",
        serde_json::to_string_pretty(&out)
            .map_err(|e| Error::Parse(format!("serialization failed: {e}")))?
    );
    Ok(ExitCode::SUCCESS)
}

/// `solve` needs only the delay and budget; reuse the run resolver with
/// relaxed requirements.
fn resolve_solve_config(args: &RunArgs) -> Result<ExperimentConfig> {
    let mut args = args.clone();
    args.policy.get_or_insert_with(|| "optimal".into());
    args.frames.get_or_insert(1);
    let mut runs = resolve_runs(&args)?;
    Ok(runs.swap_remove(0))
}

/// Log-thinned row indices: at most `cap` of `len`, always keeping the
/// first and last.
fn thin_indices(len: usize, cap: usize) -> Vec<usize> {
    if cap >= len || len <= 2 {
        return (0..len).collect();
    }
    let lf = (len as f64).ln();
    let mut idx: Vec<usize> = (0..cap)
        .map(|i| ((lf * i as f64 / (cap - 1) as f64).exp().round() as usize).clamp(1, len) - 1)
        .collect();
    idx.push(len - 1);
    idx.sort_unstable();
    idx.dedup();
    idx
}

fn write_run_outputs(
    dir: &Path,
    file_tag: &str,
    traces: &[TraceSeries],
    sol: &OptimalSolution,
    summary: &RunSummary,
    checkpoints: Option<usize>,
) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    for t in traces {
        let mut trace = t;
        let thinned;
        if let Some(cap) = checkpoints {
            let idx = thin_indices(t.rows.len(), cap);
            if idx.len() < t.rows.len() {
                let mut copy = t.clone();
                let rows = &t.rows;
                macro_rules! take {
                    ($field:ident) => {
                        copy.rows.$field = idx.iter().map(|&i| rows.$field[i]).collect();
                    };
                }
                take!(k);
                take!(s_start);
                take!(delay);
                take!(wait);
                take!(length);
                take!(gamma);
                take!(nu);
                take!(queue);
                take!(dx_delivery);
                take!(dx_frame);
                take!(err_path);
                take!(err_mart);
                take!(cum_err);
                take!(s_end);
                thinned = copy;
                trace = &thinned;
            }
        }
        write_trace_csv(&dir.join(trace_csv_name(file_tag, trace.replication)), trace, sol)?;
    }
    write_summary_json(&dir.join(format!("{file_tag}_summary.json")), summary)?;
    Ok(())
}

fn cmd_simulate(args: &RunArgs) -> Result<ExitCode> {
    let runs = resolve_runs(args)?;
    let multi_v = runs.iter().any(|r| r.v != runs[0].v);
    let mut summaries = Vec::new();
    for config in &runs {
        let model = DelayModel::parse(&config.delay)?;
        let f_max = resolve_fmax(&config.f_max, &model)?;
        let ctx = AnalyticContext::new(model.clone())?;
        let sol = solve_for(&ctx, f_max)?;
        let spec = PolicySpec::parse(&config.policy)?;
        let kind = build_kind(&spec, &model, &sol, config, f_max)?;
        let traces = run_replications(
            &model,
            &kind,
            config.frames,
            config.replications,
            config.seed,
            config.step,
        )?;
        let summary = summarize(&traces, &sol, config.seed, config.step);
        if let Some(dir) = &config.out {
            let file_tag = if multi_v {
                format!("{}_V{}", kind.label(), config.v)
            } else {
                kind.label()
            };
            write_run_outputs(dir, &file_tag, &traces, &sol, &summary, config.checkpoints)?;
        }
        summaries.push(summary);
    }
    if args.format == "csv" {
        println!("policy,v,final_timeavg_mse_mean,final_timeavg_mse_se,final_mean_length");
        for (summary, config) in summaries.iter().zip(&runs) {
            println!(
                "{},{},{},{},{}",
                summary.policy,
                config.v,
                summary.final_timeavg_mse_mean,
                summary.final_timeavg_mse_se,
                summary.final_mean_length
            );
        }
    } else {
        println!(
            "{}",
            serde_json::to_string_pretty(&summaries)
                .map_err(|e| Error::Parse(format!("serialization failed: {e}")))?
        );
    }
    Ok(ExitCode::SUCCESS)
}

fn cmd_regret(args: &RunArgs) -> Result<ExitCode> {
    let runs = resolve_runs(args)?;
    if runs.len() != 1 {
        return Err(Error::InvalidArgument(
            "regret works on a single policy and V; pass --policy/--V".into(),
        ));
    }
    let config = &runs[0];
    let model = DelayModel::parse(&config.delay)?;
    let f_max = resolve_fmax(&config.f_max, &model)?;
    let ctx = AnalyticContext::new(model.clone())?;
    let sol = solve_for(&ctx, f_max)?;
    let spec = PolicySpec::parse(&config.policy)?;
    let kind = build_kind(&spec, &model, &sol, config, f_max)?;
    let traces = run_replications(
        &model,
        &kind,
        config.frames,
        config.replications,
        config.seed,
        config.step,
    )?;
    let series = regret_series(&traces, &sol)?;
    if let Some(dir) = &config.out {
        std::fs::create_dir_all(dir)?;
        write_regret_csv(&dir.join("regret.csv"), &series)?;
        let (k, r) = *series.last().unwrap();
        println!("{}", serde_json::json!({ "k": k, "regret": r }));
    } else if config.format == "csv" {
        println!("k,regret");
        for (k, r) in &series {
            println!("{k},{r}");
        }
    } else {
        let items: Vec<serde_json::Value> =
            series.iter().map(|(k, r)| serde_json::json!({ "k": k, "regret": r })).collect();
        println!(
            "{}",
            serde_json::to_string_pretty(&items)
                .map_err(|e| Error::Parse(format!("serialization failed: {e}")))?
        );
    }
    Ok(ExitCode::SUCCESS)
}

fn cmd_validate(args: &ValidateArgs) -> Result<ExitCode> {
    if let Some(s) = args.step {
        if !(s.is_finite() && s > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "step must be finite and positive, got {s}"
            )));
        }
    }
    let results = run_suite(args.step);
    let failed = results.iter().filter(|r| !r.passed).count();
    if args.format == "json" {
        let items: Vec<serde_json::Value> = results
            .iter()
            .map(|r| {
                serde_json::json!({ "name": r.name, "passed": r.passed, "detail": r.detail })
            })
            .collect();
        println!(
            "{}",
            serde_json::to_string_pretty(&items)
                .map_err(|e| Error::Parse(format!("serialization failed: {e}")))?
        );
    } else {
        for r in &results {
            println!("{}", r.render());
        }
        println!(
            "{} of {} checks passed",
            results.len() - failed,
            results.len()
        );
    }
    Ok(if failed == 0 { ExitCode::SUCCESS } else { ExitCode::from(4) })
}

fn exit_code_for(err: &Error) -> ExitCode {
    match err {
        Error::InvalidArgument(_) | Error::Parse(_) => ExitCode::from(1),
        Error::Solver(_) | Error::Integration(_) | Error::NonFinite(_) | Error::MismatchedModels(_) => {
            ExitCode::from(2)
        }
        Error::Io(_) => ExitCode::from(3),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let result = match &cli.cmd {
        Cmd::Solve(args) => cmd_solve(args),
        Cmd::Simulate(args) => cmd_simulate(args),
        Cmd::Regret(args) => cmd_regret(args),
        Cmd::Validate(args) => cmd_validate(args),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code_for(&e)
        }
    }
}
