//! Stochastic frame kernels: Gaussian draws, Wiener increments, and
//! band-exit simulation with path-integral accumulators.
//!
//! A frame starts at a sample epoch, holds the channel for `delay`, then
//! waits until the signal displacement since the sample hits a symmetric
//! `threshold` band (or for a fixed time, for signal-ignorant policies).
//! The displacement path is realized by Euler steps with a Brownian-bridge
//! boundary-crossing correction, which knocks the discretization bias of
//! the exit time from `O(sqrt(step))` down to `O(step)`. Both running path
//! integrals `int (X_t - X_S) dt` and `int (X_t - X_S)^2 dt` are
//! accumulated with the trapezoid rule on the same grid, so the simulator's
//! two error estimators see one path realization.

use crate::rng::RngStream;
use crate::{Error, Result};

/// A precision warning is raised when `step > WARN_FRACTION * threshold^2`;
/// the default step rule sits 4x below this line.
pub const STEP_WARN_FRACTION: f64 = 0.01;

/// Bridge-crossing probabilities below `exp(-30)` are treated as zero
/// (saves a uniform draw; the error is ~1e-13 per step).
const BRIDGE_EXPONENT_CUTOFF: f64 = -30.0;

/// Recommended Euler step for a given threshold:
/// `min(1e-3, threshold^2 / 400)`, falling back to `1e-3` when the
/// threshold is zero (no waiting phase to resolve).
pub fn default_step(threshold: f64) -> f64 {
    if threshold > 0.0 {
        (threshold * threshold / 400.0).min(1e-3)
    } else {
        1e-3
    }
}

/// One simulated frame: waiting time, end-of-frame displacement, and the
/// path integrals the error accounting needs.
#[derive(Debug, Clone, Copy)]
pub struct ExitSample {
    /// Length of the waiting phase (0 if the delivery already cleared the
    /// band).
    pub wait_time: f64,
    /// Displacement at the end of the frame, `X_{S+D+W} - X_S`. Pinned to
    /// the band edge when the waiting phase exited; keeps the delivery
    /// overshoot otherwise.
    pub exit_value: f64,
    /// Displacement at delivery, `X_{S+D} - X_S`.
    pub delivery_value: f64,
    /// `int (X_t - X_S) dt` over the whole frame.
    pub path_integral_1: f64,
    /// `int (X_t - X_S)^2 dt` over the whole frame; never negative.
    pub path_integral_2: f64,
    /// `int (X_t - X_S) dt` over the delay phase only.
    pub delay_integral_1: f64,
    /// Set when `step` is too coarse relative to the threshold band.
    pub precision_warning: bool,
}

/// One draw from `N(mean, variance)`. Zero variance returns `mean` exactly.
pub fn gaussian(rng: &mut RngStream, mean: f64, variance: f64) -> Result<f64> {
    if !mean.is_finite() || !variance.is_finite() || variance < 0.0 {
        return Err(Error::InvalidArgument(format!(
            "gaussian needs finite mean and variance >= 0, got mean={mean}, variance={variance}"
        )));
    }
    if variance == 0.0 {
        return Ok(mean);
    }
    Ok(mean + variance.sqrt() * rng.standard_normal())
}

/// The Wiener displacement accumulated over `delay`: `Z ~ N(0, delay)`.
/// Zero delay returns 0 exactly.
pub fn wiener_at_delay(rng: &mut RngStream, delay: f64) -> Result<f64> {
    if !delay.is_finite() || delay < 0.0 {
        return Err(Error::InvalidArgument(format!(
            "delay must be finite and >= 0, got {delay}"
        )));
    }
    if delay == 0.0 {
        return Ok(0.0);
    }
    Ok(delay.sqrt() * rng.standard_normal())
}

/// Running path state with trapezoid integral accumulators.
#[derive(Debug, Clone, Copy, Default)]
struct PathAccum {
    x: f64,
    int1: f64,
    int2: f64,
}

impl PathAccum {
    /// Advances to `x_new` over `dt`, accumulating both integrals.
    fn push(&mut self, dt: f64, x_new: f64) {
        self.int1 += dt * 0.5 * (self.x + x_new);
        self.int2 += dt * 0.5 * (self.x * self.x + x_new * x_new);
        self.x = x_new;
    }
}

/// Walks the path over a fixed horizon (no boundary), consuming one normal
/// draw per substep.
fn advance_fixed(rng: &mut RngStream, acc: &mut PathAccum, horizon: f64, step: f64) -> Result<()> {
    let n_full = (horizon / step).floor() as u64;
    let sqrt_step = step.sqrt();
    for _ in 0..n_full {
        let x_new = acc.x + sqrt_step * rng.standard_normal();
        acc.push(step, x_new);
    }
    let rem = horizon - n_full as f64 * step;
    if rem > 0.0 {
        let x_new = acc.x + rem.sqrt() * rng.standard_normal();
        acc.push(rem, x_new);
    }
    if !acc.x.is_finite() {
        return Err(Error::NonFinite(format!("path state became {}", acc.x)));
    }
    Ok(())
}

fn check_frame_args(delay: f64, threshold: f64, step: f64) -> Result<()> {
    if !delay.is_finite() || delay < 0.0 {
        return Err(Error::InvalidArgument(format!("delay must be finite and >= 0, got {delay}")));
    }
    if !threshold.is_finite() || threshold < 0.0 {
        return Err(Error::InvalidArgument(format!(
            "threshold must be finite and >= 0, got {threshold}"
        )));
    }
    if !step.is_finite() || step <= 0.0 {
        return Err(Error::InvalidArgument(format!("step must be finite and > 0, got {step}")));
    }
    Ok(())
}

/// Simulates one threshold frame: delay phase, then first exit of the
/// displacement from `[-threshold, threshold]`.
///
/// If the delivery displacement already satisfies `|Z| >= threshold` (in
/// particular whenever `threshold == 0`), the waiting time is 0 and the
/// realized displacement is kept as the exit value. Otherwise the waiting
/// phase advances by Euler steps; a step may end the frame either by
/// landing outside the band (exit epoch interpolated linearly) or by an
/// in-step Brownian-bridge crossing accepted with probability
/// `exp(-2 (tau - x_i)(tau - x_{i+1}) / step)` per boundary (crossing epoch
/// taken at mid-step). Band exits pin the exit value to the crossed edge.
pub fn first_exit_after_delay(
    rng: &mut RngStream,
    delay: f64,
    threshold: f64,
    step: f64,
) -> Result<ExitSample> {
    check_frame_args(delay, threshold, step)?;
    let warn = threshold > 0.0 && step > STEP_WARN_FRACTION * threshold * threshold;

    let mut acc = PathAccum::default();
    advance_fixed(rng, &mut acc, delay, step)?;
    let delivery = acc.x;
    let delay_int1 = acc.int1;

    if threshold == 0.0 || delivery.abs() >= threshold {
        return Ok(ExitSample {
            wait_time: 0.0,
            exit_value: delivery,
            delivery_value: delivery,
            path_integral_1: acc.int1,
            path_integral_2: acc.int2,
            delay_integral_1: delay_int1,
            precision_warning: warn,
        });
    }

    let mut wait = 0.0;
    let sqrt_step = step.sqrt();
    let (exit_dt, exit_value) = loop {
        let x = acc.x;
        let x_new = x + sqrt_step * rng.standard_normal();
        if !x_new.is_finite() {
            return Err(Error::NonFinite(format!("path state became {x_new}")));
        }
        if x_new.abs() >= threshold {
            // The step itself landed on or beyond a band edge; place the
            // crossing by linear interpolation.
            let side = if x_new > 0.0 { 1.0 } else { -1.0 };
            let frac = (side * threshold - x) / (x_new - x);
            break (frac * step, side * threshold);
        }
        // In-step crossing of either edge despite interior endpoints.
        let e_up = -2.0 * (threshold - x) * (threshold - x_new) / step;
        if e_up > BRIDGE_EXPONENT_CUTOFF && rng.uniform() < e_up.exp() {
            break (0.5 * step, threshold);
        }
        let e_dn = -2.0 * (threshold + x) * (threshold + x_new) / step;
        if e_dn > BRIDGE_EXPONENT_CUTOFF && rng.uniform() < e_dn.exp() {
            break (0.5 * step, -threshold);
        }
        acc.push(step, x_new);
        wait += step;
    };
    acc.push(exit_dt, exit_value);
    wait += exit_dt;

    Ok(ExitSample {
        wait_time: wait,
        exit_value,
        delivery_value: delivery,
        path_integral_1: acc.int1,
        path_integral_2: acc.int2,
        delay_integral_1: delay_int1,
        precision_warning: warn,
    })
}

/// Simulates one fixed-wait frame: delay phase, then exactly `wait` of
/// unmonitored waiting. The exit value is the displacement wherever the
/// path ends.
pub fn fixed_wait_frame(rng: &mut RngStream, delay: f64, wait: f64, step: f64) -> Result<ExitSample> {
    check_frame_args(delay, 0.0, step)?;
    if !wait.is_finite() || wait < 0.0 {
        return Err(Error::InvalidArgument(format!("wait must be finite and >= 0, got {wait}")));
    }
    let mut acc = PathAccum::default();
    advance_fixed(rng, &mut acc, delay, step)?;
    let delivery = acc.x;
    let delay_int1 = acc.int1;
    advance_fixed(rng, &mut acc, wait, step)?;
    Ok(ExitSample {
        wait_time: wait,
        exit_value: acc.x,
        delivery_value: delivery,
        path_integral_1: acc.int1,
        path_integral_2: acc.int2,
        delay_integral_1: delay_int1,
        precision_warning: false,
    })
}

/// State of one resolution level inside the coupled kernel.
struct CoupledPath {
    acc: PathAccum,
    step: f64,
    wait: f64,
    exit: Option<f64>,
}

impl CoupledPath {
    fn new(step: f64) -> Self {
        Self { acc: PathAccum::default(), step, wait: 0.0, exit: None }
    }

    /// One monitored Euler step with increment `sqrt(step) * n`; mirrors
    /// the single-path kernel's exit logic.
    fn step_monitored(&mut self, n: f64, threshold: f64, bridge: &mut RngStream) -> Result<()> {
        if self.exit.is_some() {
            return Ok(());
        }
        let x = self.acc.x;
        let x_new = x + self.step.sqrt() * n;
        if !x_new.is_finite() {
            return Err(Error::NonFinite(format!("path state became {x_new}")));
        }
        if x_new.abs() >= threshold {
            let side = if x_new > 0.0 { 1.0 } else { -1.0 };
            let frac = (side * threshold - x) / (x_new - x);
            self.acc.push(frac * self.step, side * threshold);
            self.wait += frac * self.step;
            self.exit = Some(side * threshold);
            return Ok(());
        }
        let e_up = -2.0 * (threshold - x) * (threshold - x_new) / self.step;
        if e_up > BRIDGE_EXPONENT_CUTOFF && bridge.uniform() < e_up.exp() {
            self.acc.push(0.5 * self.step, threshold);
            self.wait += 0.5 * self.step;
            self.exit = Some(threshold);
            return Ok(());
        }
        let e_dn = -2.0 * (threshold + x) * (threshold + x_new) / self.step;
        if e_dn > BRIDGE_EXPONENT_CUTOFF && bridge.uniform() < e_dn.exp() {
            self.acc.push(0.5 * self.step, -threshold);
            self.wait += 0.5 * self.step;
            self.exit = Some(-threshold);
            return Ok(());
        }
        self.acc.push(self.step, x_new);
        self.wait += self.step;
        Ok(())
    }

    fn into_sample(self, delivery: f64, delay_int1: f64, warn: bool) -> ExitSample {
        ExitSample {
            wait_time: self.wait,
            exit_value: self.exit.unwrap_or(self.acc.x),
            delivery_value: delivery,
            path_integral_1: self.acc.int1,
            path_integral_2: self.acc.int2,
            delay_integral_1: delay_int1,
            precision_warning: warn,
        }
    }
}

/// Simulates one frame at step sizes `step` and `step/2` on the *same*
/// Brownian path, for discretization-bias diagnostics: the pairwise sums of
/// the fine increments are exactly the coarse increments, so the two
/// returned samples differ only through discretization. `incr_rng` drives
/// the shared increments; `bridge_rng` drives both paths' independent
/// bridge-crossing decisions and must be a separate stream.
///
/// Returns `(coarse, fine)`.
pub fn first_exit_after_delay_coupled(
    incr_rng: &mut RngStream,
    bridge_rng: &mut RngStream,
    delay: f64,
    threshold: f64,
    step: f64,
) -> Result<(ExitSample, ExitSample)> {
    check_frame_args(delay, threshold, step)?;
    let warn = threshold > 0.0 && step > STEP_WARN_FRACTION * threshold * threshold;
    let half = 0.5 * step;

    let mut coarse = CoupledPath::new(step);
    let mut fine = CoupledPath::new(half);

    // Delay phase: lockstep over full coarse substeps, then the remainder,
    // keeping identical endpoints at both resolutions.
    let mut advance_pair = |coarse: &mut CoupledPath, fine: &mut CoupledPath, dt: f64| {
        let h = 0.5 * dt;
        let n1 = incr_rng.standard_normal();
        let n2 = incr_rng.standard_normal();
        let x0 = fine.acc.x;
        let x_half = x0 + h.sqrt() * n1;
        let x_full = x_half + h.sqrt() * n2;
        fine.acc.push(h, x_half);
        fine.acc.push(h, x_full);
        coarse.acc.push(dt, x_full);
    };
    let n_full = (delay / step).floor() as u64;
    for _ in 0..n_full {
        advance_pair(&mut coarse, &mut fine, step);
    }
    let rem = delay - n_full as f64 * step;
    if rem > 0.0 {
        advance_pair(&mut coarse, &mut fine, rem);
    }
    if !coarse.acc.x.is_finite() {
        return Err(Error::NonFinite(format!("path state became {}", coarse.acc.x)));
    }
    let delivery = coarse.acc.x;
    let (c_int1, f_int1) = (coarse.acc.int1, fine.acc.int1);

    if threshold == 0.0 || delivery.abs() >= threshold {
        coarse.exit = Some(delivery);
        fine.exit = Some(delivery);
        return Ok((
            coarse.into_sample(delivery, c_int1, warn),
            fine.into_sample(delivery, f_int1, warn),
        ));
    }

    // Waiting phase: shared increments while both levels are live; each
    // level applies its own exit logic at its own resolution.
    while coarse.exit.is_none() || fine.exit.is_none() {
        let n1 = incr_rng.standard_normal();
        let n2 = incr_rng.standard_normal();
        fine.step_monitored(n1, threshold, bridge_rng)?;
        fine.step_monitored(n2, threshold, bridge_rng)?;
        let n_coarse = std::f64::consts::FRAC_1_SQRT_2 * (n1 + n2);
        coarse.step_monitored(n_coarse, threshold, bridge_rng)?;
    }
    Ok((
        coarse.into_sample(delivery, c_int1, warn),
        fine.into_sample(delivery, f_int1, warn),
    ))
}
