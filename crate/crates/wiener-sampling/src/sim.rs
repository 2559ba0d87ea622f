//! Frame-by-frame simulation of a sampling policy over a delay channel,
//! with per-frame error accounting, checkpointed trace storage, and
//! replication fan-out.
//!
//! Each frame draws a delay, runs the policy's frame action through the
//! path kernel, charges the estimation error accrued over the frame, and
//! feeds the outcome back to the policy. Two error estimators are
//! maintained per frame: a direct path-integral form and a lower-variance
//! form that replaces the waiting-phase integral by its stopped-martingale
//! equivalent. Both have the same expectation, which the validation suite
//! checks.

use rayon::prelude::*;

use crate::analytic::AnalyticContext;
use crate::delay::DelayModel;
use crate::kernels::{default_step, first_exit_after_delay, fixed_wait_frame, ExitSample};
use crate::policy::{FrameAction, FrameRecord, PolicyKind};
use crate::rng::RngStream;
use crate::solver::OptimalSolution;
use crate::{Error, Result};

/// Traces at or below this many frames store every row; longer runs store
/// log-spaced checkpoints.
pub const FULL_STORAGE_LIMIT: u64 = 100_000;

/// Number of log-spaced checkpoints kept for long runs.
const CHECKPOINT_COUNT: usize = 512;

/// Default Euler step for fixed-wait frames, which have no threshold to
/// scale against.
const FIXED_WAIT_STEP: f64 = 1e-3;

/// Realized squared-error integral charged to one frame.
///
/// During the delay phase the estimate is still the previous frame's
/// sample, displaced by `prev` from the current one; afterwards the error
/// is the in-frame displacement itself. Expanding the square gives
/// `prev^2 * delay + 2 * prev * delay_integral_1 + path_integral_2`,
/// clamped at zero since the trapezoid cross term can undershoot.
pub fn frame_error_path(prev: f64, delay: f64, delay_integral_1: f64, path_integral_2: f64) -> f64 {
    (prev * prev * delay + 2.0 * prev * delay_integral_1 + path_integral_2).max(0.0)
}

/// Reduced-variance error estimate for one frame: the waiting-phase
/// integral is replaced by `displacement^4 / 6` (equal in expectation by
/// optional stopping) and the zero-mean delay cross term is dropped.
pub fn frame_error_mart(frame_displacement: f64, prev: f64, delay: f64) -> f64 {
    prev * prev * delay + frame_displacement.powi(4) / 6.0
}

/// Conditional second-moment budget for one frame's path error given the
/// running threshold level and the previous displacement; used as a sanity
/// ceiling on the realized `err_path^2` in the test suite.
fn frame_error_second_moment_bound(gamma_eff: f64, prev: f64, delay_fourth_moment: f64) -> f64 {
    let b = delay_fourth_moment;
    let t = 3.0 * gamma_eff;
    let lead = (277.0 / 31.0) * t.powi(4) + b;
    let c1 = lead * (t * t + (4.0f64 / 3.0).powi(4) * 3.0 * b.sqrt());
    let c2 = lead * (t.powi(4) + (8.0f64 / 7.0).powi(8) * 105.0 * b);
    3.0 * prev.powi(4) * b.sqrt() + 12.0 * c1 * prev * prev + 3.0 * c2
}

/// Column-oriented storage of the recorded trace rows.
#[derive(Debug, Clone, Default)]
pub struct TraceRows {
    pub k: Vec<u64>,
    pub s_start: Vec<f64>,
    pub delay: Vec<f64>,
    pub wait: Vec<f64>,
    pub length: Vec<f64>,
    pub gamma: Vec<f64>,
    pub nu: Vec<f64>,
    pub queue: Vec<f64>,
    pub dx_delivery: Vec<f64>,
    pub dx_frame: Vec<f64>,
    pub err_path: Vec<f64>,
    pub err_mart: Vec<f64>,
    pub cum_err: Vec<f64>,
    pub s_end: Vec<f64>,
}

impl TraceRows {
    fn push(&mut self, r: &FrameRecord, cum_err: f64, s_end: f64) {
        self.k.push(r.k);
        self.s_start.push(r.s_k);
        self.delay.push(r.d_k);
        self.wait.push(r.w_k);
        self.length.push(r.l_k);
        self.gamma.push(r.gamma_k);
        self.nu.push(r.nu_k);
        self.queue.push(r.u_k);
        self.dx_delivery.push(r.delta_x_delivery);
        self.dx_frame.push(r.delta_x_frame);
        self.err_path.push(r.error_path);
        self.err_mart.push(r.error_mart);
        self.cum_err.push(cum_err);
        self.s_end.push(s_end);
    }

    pub fn len(&self) -> usize {
        self.k.len()
    }

    pub fn is_empty(&self) -> bool {
        self.k.is_empty()
    }
}

/// Whole-trace sums kept for every frame regardless of row storage; the
/// consistency and acceptance checks run off these.
#[derive(Debug, Clone, Copy, Default)]
pub struct TraceAggregates {
    pub frames: u64,
    pub sum_delay: f64,
    pub sum_wait: f64,
    pub sum_length: f64,
    pub sum_length_sq: f64,
    pub sum_exit_sq: f64,
    pub sum_exit_quartic: f64,
    pub sum_exit_octic: f64,
    pub sum_path_integral_1: f64,
    pub sum_path_integral_1_sq: f64,
    pub sum_path_integral_2: f64,
    pub sum_err_path: f64,
    pub sum_err_mart: f64,
    pub sum_err_path_sq: f64,
    pub sum_moment_bound: f64,
    pub sum_wald_residual_sq: f64,
    pub sum_stopping_residual_sq: f64,
    pub sum_estimator_gap: f64,
    pub sum_estimator_gap_sq: f64,
    pub warning_frames: u64,
    pub final_epoch: f64,
    pub final_gamma: f64,
    pub final_nu: f64,
    pub final_queue: f64,
}

/// One replication's simulation output: identity, checkpointed rows, and
/// whole-run aggregates.
#[derive(Debug, Clone)]
pub struct TraceSeries {
    pub replication: u64,
    pub seed: u64,
    pub model_spec: String,
    pub policy_label: String,
    pub frames: u64,
    pub rows: TraceRows,
    pub aggregates: TraceAggregates,
}

impl TraceSeries {
    /// Running time-average error (reduced-variance estimator) at the end
    /// of the run.
    pub fn final_time_average_mse(&self) -> f64 {
        self.aggregates.sum_err_mart / self.aggregates.final_epoch
    }

    /// Running mean frame length at the end of the run.
    pub fn final_mean_length(&self) -> f64 {
        self.aggregates.sum_length / self.frames as f64
    }

    fn stores_all_rows(&self) -> bool {
        self.rows.len() as u64 == self.frames
    }
}

/// Frame indices at which a run of `frames` frames stores rows: everything
/// up to the full-storage limit, and a fixed number of log-spaced
/// checkpoints (always including 1 and the final frame) beyond it.
pub fn checkpoint_frames(frames: u64) -> Vec<u64> {
    if frames <= FULL_STORAGE_LIMIT {
        return (1..=frames).collect();
    }
    let lf = (frames as f64).ln();
    let mut ks: Vec<u64> = (0..CHECKPOINT_COUNT)
        .map(|i| (lf * i as f64 / (CHECKPOINT_COUNT - 1) as f64).exp().round() as u64)
        .map(|k| k.clamp(1, frames))
        .collect();
    ks.push(frames);
    ks.sort_unstable();
    ks.dedup();
    ks
}

/// Runs one replication of `kind` against `model` for `frames` frames.
///
/// `step_override` forces the Euler step for every frame; by default
/// threshold frames use the step recommended for their current threshold
/// and fixed-wait frames use 1e-3.
pub fn run_trace(
    model: &DelayModel,
    kind: &PolicyKind,
    frames: u64,
    rng: &mut RngStream,
    step_override: Option<f64>,
) -> Result<TraceSeries> {
    if frames == 0 {
        return Err(Error::InvalidArgument("frames must be positive".into()));
    }
    if let Some(s) = step_override {
        if !s.is_finite() || s <= 0.0 {
            return Err(Error::InvalidArgument(format!(
                "step override must be finite and > 0, got {s}"
            )));
        }
    }
    let mut instance = kind.instantiate();
    let checkpoints = checkpoint_frames(frames);
    let mut next_checkpoint = 0usize;

    let delay_b4 = model.fourth_moment();
    let mut rows = TraceRows::default();
    let mut agg = TraceAggregates { frames, ..Default::default() };
    let mut prev = 0.0;
    let mut epoch = 0.0;
    let mut cum_err = 0.0;

    for k in 1..=frames {
        let d = model.sample(rng);
        let (gamma_k, nu_k, u_k) = instance.levels();
        let sample: ExitSample = match instance.action() {
            FrameAction::Threshold(tau) => {
                let step = step_override.unwrap_or_else(|| default_step(tau));
                first_exit_after_delay(rng, d, tau, step)
            }
            FrameAction::FixedWait(w) => {
                let step = step_override.unwrap_or(FIXED_WAIT_STEP);
                fixed_wait_frame(rng, d, w, step)
            }
        }
        .map_err(|e| match e {
            Error::NonFinite(msg) => Error::NonFinite(format!("frame {k}: {msg}")),
            other => other,
        })?;

        let l = d + sample.wait_time;
        let err_path = frame_error_path(prev, d, sample.delay_integral_1, sample.path_integral_2);
        let err_mart = frame_error_mart(sample.exit_value, prev, d);
        let record = FrameRecord {
            k,
            s_k: epoch,
            d_k: d,
            w_k: sample.wait_time,
            l_k: l,
            delta_x_delivery: sample.delivery_value,
            delta_x_frame: sample.exit_value,
            prev_delta_x_frame: prev,
            error_path: err_path,
            error_mart: err_mart,
            gamma_k,
            nu_k,
            u_k,
        };

        agg.sum_delay += d;
        agg.sum_wait += sample.wait_time;
        agg.sum_length += l;
        agg.sum_length_sq += l * l;
        let exit_sq = sample.exit_value * sample.exit_value;
        agg.sum_exit_sq += exit_sq;
        agg.sum_exit_quartic += exit_sq * exit_sq;
        agg.sum_exit_octic += exit_sq * exit_sq * exit_sq * exit_sq;
        agg.sum_path_integral_1 += sample.path_integral_1;
        agg.sum_path_integral_1_sq += sample.path_integral_1 * sample.path_integral_1;
        agg.sum_path_integral_2 += sample.path_integral_2;
        agg.sum_err_path += err_path;
        agg.sum_err_mart += err_mart;
        agg.sum_err_path_sq += err_path * err_path;
        agg.sum_moment_bound += frame_error_second_moment_bound(gamma_k + nu_k, prev, delay_b4);
        let wald_resid = exit_sq - l;
        agg.sum_wald_residual_sq += wald_resid * wald_resid;
        let stop_resid = sample.path_integral_2 - exit_sq * exit_sq / 6.0;
        agg.sum_stopping_residual_sq += stop_resid * stop_resid;
        let gap = err_path - err_mart;
        agg.sum_estimator_gap += gap;
        agg.sum_estimator_gap_sq += gap * gap;
        if sample.precision_warning {
            agg.warning_frames += 1;
        }

        epoch += l;
        cum_err += err_mart;
        if next_checkpoint < checkpoints.len() && checkpoints[next_checkpoint] == k {
            rows.push(&record, cum_err, epoch);
            next_checkpoint += 1;
        }
        instance.observe(&record)?;
        prev = sample.exit_value;
    }

    let (final_gamma, final_nu, final_queue) = instance.levels();
    agg.final_epoch = epoch;
    agg.final_gamma = final_gamma;
    agg.final_nu = final_nu;
    agg.final_queue = final_queue;

    Ok(TraceSeries {
        replication: 0,
        seed: 0,
        model_spec: model.spec_string().to_string(),
        policy_label: kind.label(),
        frames,
        rows,
        aggregates: agg,
    })
}

/// Runs independent replications in parallel. Replication `r` uses RNG
/// stream `r` of `seed`, so the output is a pure function of
/// `(model, kind, frames, reps, seed, step)` regardless of thread count.
pub fn run_replications(
    model: &DelayModel,
    kind: &PolicyKind,
    frames: u64,
    reps: u64,
    seed: u64,
    step_override: Option<f64>,
) -> Result<Vec<TraceSeries>> {
    if reps == 0 {
        return Err(Error::InvalidArgument("reps must be positive".into()));
    }
    (0..reps)
        .into_par_iter()
        .map(|rep| {
            let mut rng = RngStream::new(seed, rep);
            let mut trace = run_trace(model, kind, frames, &mut rng, step_override)?;
            trace.replication = rep;
            trace.seed = seed;
            Ok(trace)
        })
        .collect()
}

fn check_trace_compatibility(traces: &[TraceSeries], sol: &OptimalSolution) -> Result<()> {
    if traces.is_empty() {
        return Err(Error::InvalidArgument("no traces given".into()));
    }
    for t in traces {
        if t.model_spec != sol.model_spec {
            return Err(Error::MismatchedModels(format!(
                "trace model {} vs solution model {}",
                t.model_spec, sol.model_spec
            )));
        }
        if t.rows.k != traces[0].rows.k {
            return Err(Error::MismatchedModels(
                "traces store different checkpoint sets".into(),
            ));
        }
    }
    Ok(())
}

/// Cumulative regret at each stored checkpoint, averaged over
/// replications: `mean(cum_err) - mse_opt * mean(elapsed)`.
pub fn regret_series(traces: &[TraceSeries], sol: &OptimalSolution) -> Result<Vec<(u64, f64)>> {
    check_trace_compatibility(traces, sol)?;
    let n = traces.len() as f64;
    let ks = &traces[0].rows.k;
    let mut out = Vec::with_capacity(ks.len());
    for i in 0..ks.len() {
        let mean_err: f64 = traces.iter().map(|t| t.rows.cum_err[i]).sum::<f64>() / n;
        let mean_end: f64 = traces.iter().map(|t| t.rows.s_end[i]).sum::<f64>() / n;
        out.push((ks[i], mean_err - sol.mse_opt * mean_end));
    }
    Ok(out)
}

/// Regret series with the per-frame cost and length replaced by their
/// conditional expectations given each frame's realized threshold level.
/// Much smoother than the realized series; diagnostic only. Requires
/// traces that stored every row.
pub fn conditional_regret_series(
    traces: &[TraceSeries],
    sol: &OptimalSolution,
    ctx: &AnalyticContext,
) -> Result<Vec<(u64, f64)>> {
    check_trace_compatibility(traces, sol)?;
    if ctx.model().spec_string() != sol.model_spec {
        return Err(Error::MismatchedModels(format!(
            "context model {} vs solution model {}",
            ctx.model().spec_string(),
            sol.model_spec
        )));
    }
    for t in traces {
        if !t.stores_all_rows() {
            return Err(Error::InvalidArgument(
                "conditional regret needs full row storage; rerun with fewer frames".into(),
            ));
        }
    }
    let dbar = ctx.model().mean();
    let n_rows = traces[0].rows.len();
    let mut mean_regret = vec![0.0f64; n_rows];
    for t in traces {
        let mut cum_cost = 0.0;
        let mut cum_len = 0.0;
        let mut prev = 0.0;
        for i in 0..n_rows {
            let a = 3.0 * (t.rows.gamma[i] + t.rows.nu[i]);
            let fm = ctx.frame_moments(a)?;
            cum_cost += prev * prev * dbar + fm.expected_max_sq / 6.0;
            cum_len += fm.expected_max;
            mean_regret[i] += cum_cost - sol.mse_opt * cum_len;
            prev = t.rows.dx_frame[i];
        }
    }
    let n = traces.len() as f64;
    Ok(traces[0]
        .rows
        .k
        .iter()
        .zip(mean_regret)
        .map(|(&k, r)| (k, r / n))
        .collect())
}

/// Running mean frame length at each stored checkpoint, averaged over
/// replications; for monitoring convergence to a sampling-frequency budget.
pub fn mean_length_series(traces: &[TraceSeries]) -> Result<Vec<(u64, f64)>> {
    if traces.is_empty() {
        return Err(Error::InvalidArgument("no traces given".into()));
    }
    for t in traces {
        if t.rows.k != traces[0].rows.k {
            return Err(Error::MismatchedModels(
                "traces store different checkpoint sets".into(),
            ));
        }
    }
    let n = traces.len() as f64;
    let ks = &traces[0].rows.k;
    let mut out = Vec::with_capacity(ks.len());
    for i in 0..ks.len() {
        let mean: f64 =
            traces.iter().map(|t| t.rows.s_end[i] / t.rows.k[i] as f64).sum::<f64>() / n;
        out.push((ks[i], mean));
    }
    Ok(out)
}
