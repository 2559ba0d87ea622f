//! Sampling policies: the online threshold learner and its baselines.
//!
//! Every policy reduces to a per-frame action: either *stop when the signal
//! has moved `tau` from the last sample* (threshold policies) or *wait a
//! fixed time after delivery* (signal-ignorant baselines). The online
//! policy adapts its threshold with a Robbins-Monro recursion driven by the
//! per-frame objective [`crate::analytic::g_point`] evaluated at the
//! delivery-time increment, and tracks sampling-budget violations in a
//! virtual queue `U_k` whose positive part sets the dual level
//! `nu_k = U_k^+ / V`.

use crate::analytic::g_point;
use crate::delay::DelayModel;
use crate::solver::OptimalSolution;
use crate::{Error, Result};

/// Static configuration of the online learner.
#[derive(Debug, Clone, Copy)]
pub struct OnlineConfig {
    /// Step-size decay exponent, in `(0.5, 1]`.
    pub alpha: f64,
    /// Known lower bound on the mean delay; scales the step size.
    pub dbar_lb: f64,
    /// Sampling-frequency budget (mean samples per unit time); may be
    /// `f64::INFINITY` for no budget.
    pub f_max: f64,
    /// Virtual-queue scaling for the dual level.
    pub v: f64,
}

impl OnlineConfig {
    pub fn new(alpha: f64, dbar_lb: f64, f_max: f64, v: f64) -> Result<Self> {
        if !(alpha > 0.5 && alpha <= 1.0) {
            return Err(Error::InvalidArgument(format!(
                "alpha must be in (0.5, 1], got {alpha}"
            )));
        }
        if !(dbar_lb.is_finite() && dbar_lb > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "mean-delay lower bound must be finite and > 0, got {dbar_lb}"
            )));
        }
        if !(f_max > 0.0) {
            return Err(Error::InvalidArgument(format!("f_max must be > 0, got {f_max}")));
        }
        if !(v.is_finite() && v > 0.0) {
            return Err(Error::InvalidArgument(format!("V must be finite and > 0, got {v}")));
        }
        Ok(Self { alpha, dbar_lb, f_max, v })
    }

    /// Config with the default bound `dbar_lb = E[D]/2` taken from the
    /// model. Fails for zero-mean delay models, where the bound must be
    /// chosen by hand.
    pub fn for_model(model: &DelayModel, alpha: f64, f_max: f64, v: f64) -> Result<Self> {
        let mean = model.mean();
        if mean <= 0.0 {
            return Err(Error::InvalidArgument(
                "delay model has zero mean; pass an explicit mean-delay lower bound".into(),
            ));
        }
        Self::new(alpha, mean / 2.0, f_max, v)
    }
}

/// Learner state before frame `k`.
#[derive(Debug, Clone, Copy)]
pub struct PolicyState {
    pub k: u64,
    /// Current mean-error level estimate (threshold via `3 gamma`).
    pub gamma: f64,
    /// Virtual queue of budget violations, in time units.
    pub u: f64,
    pub config: OnlineConfig,
}

impl PolicyState {
    /// Initial state: `gamma = 0`, empty queue, frame index 1.
    pub fn initial(config: OnlineConfig) -> Self {
        Self { k: 1, gamma: 0.0, u: 0.0, config }
    }

    /// Dual level `nu_k = max(U_k, 0) / V`.
    pub fn nu(&self) -> f64 {
        self.u.max(0.0) / self.config.v
    }

    /// Step size `eta_k = k^(-alpha) / (2 dbar_lb)`.
    pub fn eta(&self) -> f64 {
        (self.k as f64).powf(-self.config.alpha) / (2.0 * self.config.dbar_lb)
    }
}

/// Everything the simulator records about one completed frame.
#[derive(Debug, Clone, Copy)]
pub struct FrameRecord {
    pub k: u64,
    /// Epoch of the sample that opened this frame.
    pub s_k: f64,
    pub d_k: f64,
    pub w_k: f64,
    /// Frame length `d_k + w_k`.
    pub l_k: f64,
    /// Signal increment over the delay phase.
    pub delta_x_delivery: f64,
    /// Signal increment over the whole frame.
    pub delta_x_frame: f64,
    /// `delta_x_frame` of the previous frame (0 for the first frame).
    pub prev_delta_x_frame: f64,
    /// Path-integrated squared estimation error over the frame.
    pub error_path: f64,
    /// Unbiased closed-form estimator of the same frame error.
    pub error_mart: f64,
    pub gamma_k: f64,
    pub nu_k: f64,
    pub u_k: f64,
}

/// Threshold prescribed by the online learner: `sqrt(3 (gamma_k + nu_k))`.
pub fn online_wait_rule(state: &PolicyState) -> f64 {
    (3.0 * (state.gamma + state.nu())).sqrt()
}

/// One Robbins-Monro step after observing `frame`:
/// `gamma <- max(0, gamma + eta_k * g_point(gamma, nu, delta_x_delivery))`,
/// `U <- U + (1/f_max - L_k)`.
pub fn online_update(state: &PolicyState, frame: &FrameRecord) -> Result<PolicyState> {
    if frame.k != state.k {
        return Err(Error::InvalidArgument(format!(
            "frame index {} does not match state index {}",
            frame.k, state.k
        )));
    }
    let y = g_point(state.gamma, state.nu(), frame.delta_x_delivery);
    let gamma = (state.gamma + state.eta() * y).max(0.0);
    let budget = if state.config.f_max.is_infinite() { 0.0 } else { 1.0 / state.config.f_max };
    let u = state.u + budget - frame.l_k;
    Ok(PolicyState { k: state.k + 1, gamma, u, config: state.config })
}

/// A policy family member, ready to be instantiated per trace.
#[derive(Debug, Clone)]
pub enum PolicyKind {
    /// Adaptive threshold learned online.
    Online(OnlineConfig),
    /// Fixed threshold from the offline solution.
    OptimalThreshold(OptimalSolution),
    /// Fixed wait `w` after each delivery, ignoring the signal.
    ConstantWait(f64),
    /// Sample again the instant a delivery arrives.
    ZeroWait,
}

impl PolicyKind {
    /// Short label used in output file names.
    pub fn label(&self) -> String {
        match self {
            PolicyKind::Online(_) => "online".into(),
            PolicyKind::OptimalThreshold(_) => "optimal".into(),
            PolicyKind::ConstantWait(w) => format!("const{w}"),
            PolicyKind::ZeroWait => "zerowait".into(),
        }
    }

    pub fn instantiate(&self) -> PolicyInstance {
        let state = match self {
            PolicyKind::Online(cfg) => Some(PolicyState::initial(*cfg)),
            _ => None,
        };
        PolicyInstance { kind: self.clone(), state }
    }
}

/// What the frame kernel should do for the upcoming frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum FrameAction {
    /// Stop the waiting phase at absolute displacement `tau`.
    Threshold(f64),
    /// Wait exactly this long after delivery.
    FixedWait(f64),
}

/// Per-trace policy instance (owns the learner state when adaptive).
#[derive(Debug, Clone)]
pub struct PolicyInstance {
    kind: PolicyKind,
    state: Option<PolicyState>,
}

impl PolicyInstance {
    pub fn action(&self) -> FrameAction {
        match &self.kind {
            PolicyKind::Online(_) => {
                FrameAction::Threshold(online_wait_rule(self.state.as_ref().unwrap()))
            }
            PolicyKind::OptimalThreshold(sol) => FrameAction::Threshold(sol.tau_star()),
            PolicyKind::ConstantWait(w) => FrameAction::FixedWait(*w),
            PolicyKind::ZeroWait => FrameAction::Threshold(0.0),
        }
    }

    /// Levels `(gamma, nu, U)` to record for the upcoming frame.
    pub fn levels(&self) -> (f64, f64, f64) {
        match &self.kind {
            PolicyKind::Online(_) => {
                let s = self.state.as_ref().unwrap();
                (s.gamma, s.nu(), s.u)
            }
            PolicyKind::OptimalThreshold(sol) => (sol.gamma_star, sol.nu_star, 0.0),
            _ => (0.0, 0.0, 0.0),
        }
    }

    /// Feeds a completed frame back into the learner (no-op for fixed
    /// policies).
    pub fn observe(&mut self, frame: &FrameRecord) -> Result<()> {
        if let Some(state) = self.state.as_mut() {
            *state = online_update(state, frame)?;
        }
        Ok(())
    }
}

/// Parsed policy choice, before it is bound to a model and solver output.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PolicySpec {
    Online,
    Optimal,
    ConstantWait(f64),
    ZeroWait,
}

impl PolicySpec {
    /// Parses `"online"`, `"optimal"`, `"const:w"`, or `"zerowait"`.
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "online" => Ok(PolicySpec::Online),
            "optimal" => Ok(PolicySpec::Optimal),
            "zerowait" => Ok(PolicySpec::ZeroWait),
            _ => {
                if let Some(arg) = s.strip_prefix("const:") {
                    let w: f64 = arg
                        .trim()
                        .parse()
                        .map_err(|_| Error::Parse(format!("bad wait value {arg:?} in policy spec")))?;
                    if !(w.is_finite() && w >= 0.0) {
                        return Err(Error::Parse(format!("wait must be finite and >= 0, got {w}")));
                    }
                    Ok(PolicySpec::ConstantWait(w))
                } else {
                    Err(Error::Parse(format!(
                        "unknown policy {s:?} (expected online, optimal, const:w, or zerowait)"
                    )))
                }
            }
        }
    }

    pub fn label(&self) -> String {
        match self {
            PolicySpec::Online => "online".into(),
            PolicySpec::Optimal => "optimal".into(),
            PolicySpec::ConstantWait(w) => format!("const{w}"),
            PolicySpec::ZeroWait => "zerowait".into(),
        }
    }
}
