//! Closed-form frame statistics and the threshold objective.
//!
//! One sampling frame consists of a delay phase of length `D` (the channel
//! holds the packet) followed by a waiting phase that ends when the signal
//! has moved at least `tau` from the last sample. Writing `Z` for the
//! signal displacement accumulated over the delay (`Z | D ~ N(0, D)`) and
//! `a = tau^2`, the frame statistics reduce to expectations of
//! `max(a, Z^2)`:
//!
//! - expected frame length: `E[max(a, Z^2)]`;
//! - expected squared displacement at the frame end, to the fourth power:
//!   `E[max(a, Z^2)^2]` (drives the waiting-phase error integral);
//! - probability the frame actually waits: `P(Z^2 < a)`.
//!
//! For a candidate mean-error level `gamma` and a frequency-penalty level
//! `nu`, the per-frame objective is
//!
//! ```text
//! g(gamma, nu; z) = m^2 / 6 - gamma * m,   m = max(3 (gamma + nu), z^2),
//! ```
//!
//! and its delay average `g_bar(gamma, nu) = E[g(gamma, nu; Z_D)]` is
//! strictly decreasing in `gamma`; its root is the optimal threshold level.
//! [`AnalyticContext`] evaluates these by Gauss-Legendre quadrature over the
//! delay law (conditioning on `D = d` leaves one-dimensional normal-tail
//! integrals in closed form) or, as a fallback, by plain Monte Carlo.

use crate::delay::DelayModel;
use crate::rng::RngStream;
use crate::{Error, Result};
use statrs::function::erf::{erf, erfc};

/// Default quadrature node budget.
pub const DEFAULT_NODES: usize = 4096;
/// Smallest allowed node budget.
pub const MIN_NODES: usize = 64;
/// Default Monte Carlo fallback sample count.
pub const DEFAULT_MC_SAMPLES: usize = 1_000_000;
/// Smallest allowed Monte Carlo sample count.
pub const MIN_MC_SAMPLES: usize = 10_000;

/// Seed of the fixed internal stream used by Monte Carlo fallback
/// evaluation, so repeated evaluations share common random numbers.
const MC_SEED: u64 = 0xAC0F_FB01;

/// How expectations over the delay law are evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EvalMode {
    /// Gauss-Legendre quadrature with per-delay closed forms (default).
    Quadrature,
    /// Sample-average fallback with a fixed internal random stream.
    MonteCarlo,
}

/// Expectations of `max(a, Z_D^2)` and friends at one level `a`.
#[derive(Debug, Clone, Copy)]
pub struct FrameMoments {
    /// `E[max(a, Z^2)]`, the expected frame length at threshold `sqrt(a)`.
    pub expected_max: f64,
    /// `E[max(a, Z^2)^2]`.
    pub expected_max_sq: f64,
    /// `P(Z^2 < a)`, the probability the waiting phase has positive length.
    pub below_probability: f64,
    /// `E[(Z^2 - a)^2 ; Z^2 >= a]`, the squared overshoot tail.
    pub tail_excess_sq: f64,
}

/// Pointwise objective `m^2/6 - gamma * m` with `m = max(3(gamma+nu), z^2)`.
///
/// Domain: `gamma >= 0`, `nu >= 0`, `z` finite.
pub fn g_point(gamma: f64, nu: f64, z: f64) -> f64 {
    debug_assert!(gamma >= 0.0 && nu >= 0.0 && z.is_finite());
    let m = (3.0 * (gamma + nu)).max(z * z);
    m * m / 6.0 - gamma * m
}

/// Quadrature-backed evaluator for one delay model.
#[derive(Debug, Clone)]
pub struct AnalyticContext {
    model: DelayModel,
    nodes: Vec<(f64, f64)>,
    n_nodes: usize,
    mc_samples: usize,
    mode: EvalMode,
}

impl AnalyticContext {
    /// Builds an evaluator with default settings (4096 nodes, quadrature).
    pub fn new(model: DelayModel) -> Result<Self> {
        Self::with_options(model, DEFAULT_NODES, DEFAULT_MC_SAMPLES, EvalMode::Quadrature)
    }

    /// Builds an evaluator with explicit settings.
    pub fn with_options(
        model: DelayModel,
        nodes: usize,
        mc_samples: usize,
        mode: EvalMode,
    ) -> Result<Self> {
        if nodes < MIN_NODES {
            return Err(Error::InvalidArgument(format!(
                "node budget {nodes} is below the minimum {MIN_NODES}"
            )));
        }
        if mc_samples < MIN_MC_SAMPLES {
            return Err(Error::InvalidArgument(format!(
                "Monte Carlo sample count {mc_samples} is below the minimum {MIN_MC_SAMPLES}"
            )));
        }
        let pts = model.quadrature(nodes)?;
        let total: f64 = pts.iter().map(|&(_, w)| w).sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::Integration(format!(
                "quadrature weights sum to {total}, expected 1 (model {})",
                model.spec_string()
            )));
        }
        Ok(Self { model, nodes: pts, n_nodes: nodes, mc_samples, mode })
    }

    pub fn model(&self) -> &DelayModel {
        &self.model
    }

    pub fn node_budget(&self) -> usize {
        self.n_nodes
    }

    pub fn mc_samples(&self) -> usize {
        self.mc_samples
    }

    pub fn mode(&self) -> EvalMode {
        self.mode
    }

    /// Expectations of `max(a, Z_D^2)` powers at level `a >= 0`.
    ///
    /// Conditioned on `D = d`, `Z = sqrt(d) N` with `N` standard normal and
    /// `s = sqrt(a/d)`:
    ///
    /// ```text
    /// E[max(a, Z^2)   | d] = a P(|N|<=s) + d (2 s phi(s) + erfc(s/sqrt2))
    /// E[max(a, Z^2)^2 | d] = a^2 P(|N|<=s) + d^2 (2 phi(s)(s^3+3s) + 3 erfc(s/sqrt2))
    /// ```
    pub fn frame_moments(&self, a: f64) -> Result<FrameMoments> {
        if !(a.is_finite() && a >= 0.0) {
            return Err(Error::InvalidArgument(format!("level a must be finite and >= 0, got {a}")));
        }
        match self.mode {
            EvalMode::Quadrature => Ok(self.frame_moments_quadrature(a)),
            EvalMode::MonteCarlo => Ok(self.frame_moments_monte_carlo(a)),
        }
    }

    fn frame_moments_quadrature(&self, a: f64) -> FrameMoments {
        let inv_sqrt_2pi = 1.0 / (2.0 * std::f64::consts::PI).sqrt();
        let mut l = 0.0;
        let mut m2 = 0.0;
        let mut p = 0.0;
        for &(d, w) in &self.nodes {
            if d <= 0.0 {
                // Degenerate delay: Z = 0, so max(a, Z^2) = a.
                l += w * a;
                m2 += w * a * a;
                if a > 0.0 {
                    p += w;
                }
            } else if a == 0.0 {
                l += w * d;
                m2 += w * 3.0 * d * d;
            } else {
                let s = (a / d).sqrt();
                let c_in = erf(s / std::f64::consts::SQRT_2);
                let c_out = erfc(s / std::f64::consts::SQRT_2);
                let phi = inv_sqrt_2pi * (-0.5 * s * s).exp();
                l += w * (a * c_in + d * (2.0 * s * phi + c_out));
                m2 += w * (a * a * c_in + d * d * (2.0 * phi * (s * s * s + 3.0 * s) + 3.0 * c_out));
                p += w * c_in;
            }
        }
        let tail = (m2 - 2.0 * a * l + a * a).max(0.0);
        FrameMoments { expected_max: l, expected_max_sq: m2, below_probability: p, tail_excess_sq: tail }
    }

    fn frame_moments_monte_carlo(&self, a: f64) -> FrameMoments {
        let mut rng = RngStream::new(MC_SEED, 0);
        let n = self.mc_samples;
        let mut l = 0.0;
        let mut m2 = 0.0;
        let mut p = 0.0;
        let mut tail = 0.0;
        for _ in 0..n {
            let d = self.model.sample(&mut rng);
            let z = d.sqrt() * rng.standard_normal();
            let zsq = z * z;
            let m = a.max(zsq);
            l += m;
            m2 += m * m;
            if zsq < a {
                p += 1.0;
            } else {
                tail += (zsq - a) * (zsq - a);
            }
        }
        let nf = n as f64;
        FrameMoments {
            expected_max: l / nf,
            expected_max_sq: m2 / nf,
            below_probability: p / nf,
            tail_excess_sq: tail / nf,
        }
    }

    /// Delay-averaged objective `E[g(gamma, nu; Z_D)]`, assembled from the
    /// overshoot tail:
    ///
    /// ```text
    /// g_bar = E[(Z^2 - a)^2 ; Z^2 >= a] / 6 + nu E[max(a, Z^2)]
    ///         - 3 (gamma + nu)^2 / 2,        a = 3 (gamma + nu).
    /// ```
    pub fn g_bar(&self, gamma: f64, nu: f64) -> Result<f64> {
        check_levels(gamma, nu)?;
        if self.mode == EvalMode::MonteCarlo {
            return Ok(self.g_bar_monte_carlo(gamma, nu)?.0);
        }
        let a = 3.0 * (gamma + nu);
        let fm = self.frame_moments(a)?;
        Ok(fm.tail_excess_sq / 6.0 + nu * fm.expected_max - 1.5 * (gamma + nu) * (gamma + nu))
    }

    /// Same expectation assembled directly from the max moments,
    /// `E[max^2]/6 - gamma E[max]`. Used to cross-check [`Self::g_bar`];
    /// the two must agree to rounding error.
    pub fn g_bar_max_form(&self, gamma: f64, nu: f64) -> Result<f64> {
        check_levels(gamma, nu)?;
        let a = 3.0 * (gamma + nu);
        let fm = self.frame_moments(a)?;
        Ok(fm.expected_max_sq / 6.0 - gamma * fm.expected_max)
    }

    /// Monte Carlo estimate of `g_bar` with its standard error, using the
    /// fixed internal stream (common random numbers across calls).
    pub fn g_bar_monte_carlo(&self, gamma: f64, nu: f64) -> Result<(f64, f64)> {
        check_levels(gamma, nu)?;
        let mut rng = RngStream::new(MC_SEED, 0);
        let n = self.mc_samples;
        let mut sum = 0.0;
        let mut sum_sq = 0.0;
        for _ in 0..n {
            let d = self.model.sample(&mut rng);
            let z = d.sqrt() * rng.standard_normal();
            let g = g_point(gamma, nu, z);
            sum += g;
            sum_sq += g * g;
        }
        let nf = n as f64;
        let mean = sum / nf;
        let var = (sum_sq / nf - mean * mean).max(0.0);
        Ok((mean, (var / nf).sqrt()))
    }

    /// Expected frame length at squared threshold `tau_sq`:
    /// `E[max(tau_sq, Z_D^2)]`.
    pub fn expected_frame_length(&self, tau_sq: f64) -> Result<f64> {
        Ok(self.frame_moments(tau_sq)?.expected_max)
    }

    /// `E[max(tau_sq, Z_D^2)^2] / 6`, the expected waiting-phase
    /// contribution to the cumulative squared error of one frame.
    pub fn expected_frame_quartic(&self, tau_sq: f64) -> Result<f64> {
        Ok(self.frame_moments(tau_sq)?.expected_max_sq / 6.0)
    }

    /// Probability that a frame at squared threshold `tau_sq` has a
    /// positive waiting phase: `P(Z_D^2 < tau_sq)`.
    pub fn waiting_probability(&self, tau_sq: f64) -> Result<f64> {
        Ok(self.frame_moments(tau_sq)?.below_probability)
    }
}

fn check_levels(gamma: f64, nu: f64) -> Result<()> {
    if !(gamma.is_finite() && gamma >= 0.0) {
        return Err(Error::InvalidArgument(format!("gamma must be finite and >= 0, got {gamma}")));
    }
    if !(nu.is_finite() && nu >= 0.0) {
        return Err(Error::InvalidArgument(format!("nu must be finite and >= 0, got {nu}")));
    }
    Ok(())
}

/// Initial bisection bracket `(lo, hi)` for the root of `g_bar(., nu)`.
///
/// `lo = E[D]/6` and `hi` is the mean-error level of the constant-wait
/// policy at the longest admissible mean interval: `E[D^2]/(2 E[D])` when
/// `f_max` is infinite, else `(E[D^2] + 2 E[D]/f_max + 1/f_max^2) /
/// (2 (E[D] + 1/f_max))`. The root lies strictly inside for every
/// non-degenerate delay law.
pub fn gamma_bracket(model: &DelayModel, f_max: f64) -> Result<(f64, f64)> {
    if !(f_max > 0.0) {
        return Err(Error::InvalidArgument(format!("f_max must be > 0, got {f_max}")));
    }
    let dbar = model.mean();
    let m2 = model.second_moment();
    if dbar == 0.0 {
        return Ok((0.0, 0.0));
    }
    let lo = dbar / 6.0;
    let hi = if f_max.is_infinite() {
        m2 / (2.0 * dbar)
    } else {
        let t = 1.0 / f_max;
        0.5 * (m2 + 2.0 * dbar * t + t * t) / (dbar + t)
    };
    Ok((lo, hi))
}

/// Long-run time-average mean squared error of the policy that samples,
/// waits a fixed `w` after each delivery, and retransmits:
/// `(E[D^2] + 2 E[D] w + w^2) / (2 (E[D] + w)) + E[D]`.
pub fn constant_wait_time_average_mse(model: &DelayModel, w: f64) -> Result<f64> {
    if !(w.is_finite() && w >= 0.0) {
        return Err(Error::InvalidArgument(format!("wait must be finite and >= 0, got {w}")));
    }
    let dbar = model.mean();
    let denom = dbar + w;
    if denom == 0.0 {
        return Err(Error::InvalidArgument(
            "constant-wait policy has zero mean frame length (zero delay and zero wait)".into(),
        ));
    }
    let m2 = model.second_moment();
    Ok(0.5 * (m2 + 2.0 * dbar * w + w * w) / denom + dbar)
}
