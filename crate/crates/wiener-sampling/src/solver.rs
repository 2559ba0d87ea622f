//! Offline solvers for the optimal sampling threshold.
//!
//! The unconstrained optimum is the root of the strictly decreasing map
//! `gamma -> g_bar(gamma, 0)`, bracketed in closed form by delay moments
//! (`E[D]/6` below, the zero-wait mean-error level above). With a sampling
//! frequency budget `f_max`, a dual level `nu >= 0` enters: complementary
//! slackness either leaves `nu = 0` (budget slack) or pins the expected
//! frame length to exactly `1/f_max`. The outer map
//! `nu -> expected frame length at the inner root gamma(nu)` is monotone
//! increasing, so both layers are plain bisections.

use crate::analytic::{gamma_bracket, AnalyticContext};
use crate::delay::DelayModel;
use crate::{Error, Result};

/// Residual tolerance factor for the root `|g_bar| <= 1e-9 * max(1, E[D^2])`.
const ROOT_TOL_FACTOR: f64 = 1e-9;
/// Relative tolerance on the active frame-length constraint.
const CONSTRAINT_REL_TOL: f64 = 1e-8;
const MAX_BISECT_ITERS: usize = 200;

/// The solved optimal policy parameters.
///
/// `tau_sq_star = 3 (gamma_star + nu_star)` is the squared sampling
/// threshold, `frame_length_star` the expected frame length at that
/// threshold, and `mse_opt = gamma_star + E[D]` the optimal long-run
/// time-average mean squared error.
#[derive(Debug, Clone)]
pub struct OptimalSolution {
    pub gamma_star: f64,
    pub nu_star: f64,
    pub tau_sq_star: f64,
    pub frame_length_star: f64,
    pub mse_opt: f64,
    /// `|g_bar(gamma_star, nu_star)|` at the returned root.
    pub residual: f64,
    /// Complementary-slackness residual `nu_star * |frame_length - 1/f_max|`.
    pub cs_residual: f64,
    /// Canonical spec of the delay model this solution belongs to.
    pub model_spec: String,
}

impl OptimalSolution {
    /// Sampling threshold `sqrt(tau_sq_star)`.
    pub fn tau_star(&self) -> f64 {
        self.tau_sq_star.sqrt()
    }
}

fn root_tolerance(ctx: &AnalyticContext) -> f64 {
    ROOT_TOL_FACTOR * ctx.model().second_moment().max(1.0)
}

/// Bisects `gamma -> g_bar(gamma, nu)` on `[lo, hi]` down to `|g_bar| <= tol`.
/// Requires `g_bar(lo) > 0 > g_bar(hi)`; the caller vouches for the signs.
fn bisect_gamma(ctx: &AnalyticContext, nu: f64, mut lo: f64, mut hi: f64, tol: f64) -> Result<(f64, f64)> {
    for _ in 0..MAX_BISECT_ITERS {
        let mid = 0.5 * (lo + hi);
        let g = ctx.g_bar(mid, nu)?;
        if g.abs() <= tol {
            return Ok((mid, g.abs()));
        }
        if g > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= f64::EPSILON * hi.max(1.0) {
            // The interval collapsed without meeting the residual target;
            // report the midpoint residual honestly.
            let g = ctx.g_bar(0.5 * (lo + hi), nu)?;
            if g.abs() <= tol {
                return Ok((0.5 * (lo + hi), g.abs()));
            }
            return Err(Error::Solver(format!(
                "bisection interval collapsed at gamma={} with residual {} > tolerance {tol}",
                0.5 * (lo + hi),
                g.abs()
            )));
        }
    }
    Err(Error::Solver(format!(
        "no convergence after {MAX_BISECT_ITERS} bisection steps (nu={nu})"
    )))
}

/// Inner root `gamma(nu)` for the constrained solve: same bisection, but the
/// upper end grows by doubling until the sign flips (the closed-form bracket
/// covers only `nu = 0`).
fn root_gamma_at_nu(ctx: &AnalyticContext, nu: f64, hi_seed: f64, tol: f64) -> Result<(f64, f64)> {
    let lo = 0.0;
    let g_lo = ctx.g_bar(lo, nu)?;
    if g_lo.abs() <= tol {
        return Ok((lo, g_lo.abs()));
    }
    if g_lo < 0.0 {
        return Err(Error::Solver(format!(
            "g_bar(0, nu={nu}) = {g_lo} < 0; expected a positive left end"
        )));
    }
    let mut hi = hi_seed.max(nu).max(1e-6);
    for _ in 0..MAX_BISECT_ITERS {
        let g_hi = ctx.g_bar(hi, nu)?;
        if g_hi < 0.0 {
            return bisect_gamma(ctx, nu, lo, hi, tol);
        }
        hi *= 2.0;
    }
    Err(Error::Solver(format!("could not find a sign change in gamma for nu={nu}")))
}

/// Solves for the optimal threshold without a frequency constraint
/// (`nu_star = 0`).
pub fn solve_unconstrained(ctx: &AnalyticContext) -> Result<OptimalSolution> {
    let model = ctx.model();
    if model.mean() == 0.0 {
        // Degenerate zero-delay channel: sampling can track the signal
        // exactly, so the optimal threshold and error are zero.
        return Ok(OptimalSolution {
            gamma_star: 0.0,
            nu_star: 0.0,
            tau_sq_star: 0.0,
            frame_length_star: 0.0,
            mse_opt: 0.0,
            residual: 0.0,
            cs_residual: 0.0,
            model_spec: model.spec_string().to_string(),
        });
    }
    let (lo, hi) = gamma_bracket(model, f64::INFINITY)?;
    let tol = root_tolerance(ctx);
    let g_lo = ctx.g_bar(lo, 0.0)?;
    let g_hi = ctx.g_bar(hi, 0.0)?;
    if g_lo <= 0.0 || g_hi >= 0.0 {
        return Err(Error::Solver(format!(
            "bracket sign failure: g_bar({lo}) = {g_lo}, g_bar({hi}) = {g_hi}; \
             expected positive/negative (check quadrature configuration)"
        )));
    }
    let (gamma, residual) = bisect_gamma(ctx, 0.0, lo, hi, tol)?;
    let tau_sq = 3.0 * gamma;
    Ok(OptimalSolution {
        gamma_star: gamma,
        nu_star: 0.0,
        tau_sq_star: tau_sq,
        frame_length_star: ctx.expected_frame_length(tau_sq)?,
        mse_opt: gamma + model.mean(),
        residual,
        cs_residual: 0.0,
        model_spec: model.spec_string().to_string(),
    })
}

/// Solves for the optimal threshold under the mean-frequency budget
/// `f_max` (at most one sample per `1/f_max` time units on average).
pub fn solve_constrained(ctx: &AnalyticContext, f_max: f64) -> Result<OptimalSolution> {
    if !(f_max > 0.0) {
        return Err(Error::InvalidArgument(format!("f_max must be > 0, got {f_max}")));
    }
    let base = solve_unconstrained(ctx)?;
    if f_max.is_infinite() {
        return Ok(base);
    }
    let target = 1.0 / f_max;
    if base.frame_length_star >= target {
        return Ok(base);
    }

    // Outer bisection on nu. Expected frame length at level a is at least a,
    // so nu = target/3 already over-shoots the budget; [0, target/3] brackets.
    let tol = root_tolerance(ctx) / 10.0;
    let inner = |nu: f64| -> Result<(f64, f64, f64)> {
        let (gamma, residual) = root_gamma_at_nu(ctx, nu, base.gamma_star.max(1.0), tol)?;
        let l = ctx.expected_frame_length(3.0 * (gamma + nu))?;
        Ok((gamma, l, residual))
    };
    let mut nu_lo = 0.0;
    let mut h_lo = base.frame_length_star;
    let mut nu_hi = target / 3.0;
    let (_, mut h_hi, _) = inner(nu_hi)?;
    if h_hi < target {
        return Err(Error::Solver(format!(
            "frame length {h_hi} at nu={nu_hi} is below the target {target}; \
             the outer map should dominate its own threshold level"
        )));
    }
    let mono_slack = 1e-9 * target.max(1.0);
    let mut best = None;
    for _ in 0..MAX_BISECT_ITERS {
        let nu = 0.5 * (nu_lo + nu_hi);
        let (gamma, h, residual) = inner(nu)?;
        if h < h_lo - mono_slack || h > h_hi + mono_slack {
            return Err(Error::Solver(format!(
                "frame length is not monotone in nu: l({nu}) = {h} outside \
                 [l({nu_lo}) = {h_lo}, l({nu_hi}) = {h_hi}]"
            )));
        }
        if (h - target).abs() <= CONSTRAINT_REL_TOL * target {
            best = Some((gamma, nu, h, residual));
            break;
        }
        if h < target {
            nu_lo = nu;
            h_lo = h;
        } else {
            nu_hi = nu;
            h_hi = h;
        }
    }
    let (gamma, nu, l, residual) = best.ok_or_else(|| {
        Error::Solver(format!(
            "constraint bisection did not reach relative tolerance {CONSTRAINT_REL_TOL} \
             after {MAX_BISECT_ITERS} iterations"
        ))
    })?;
    Ok(OptimalSolution {
        gamma_star: gamma,
        nu_star: nu,
        tau_sq_star: 3.0 * (gamma + nu),
        frame_length_star: l,
        mse_opt: gamma + ctx.model().mean(),
        residual,
        cs_residual: nu * (l - target).abs(),
        model_spec: ctx.model().spec_string().to_string(),
    })
}

/// Perturbation width for the `lecam` delay family, derived from the
/// uniform-delay solution: `min(1 - 3 gamma_uni, 1/3, p_wait_uni / 2)`,
/// where `gamma_uni` solves the unconstrained problem for uniform(0,1)
/// delay and `p_wait_uni` is its waiting probability.
pub fn lecam_recommended_delta() -> Result<f64> {
    let ctx = AnalyticContext::new(DelayModel::uniform(0.0, 1.0)?)?;
    let sol = solve_unconstrained(&ctx)?;
    let p_wait = ctx.waiting_probability(sol.tau_sq_star)?;
    Ok((1.0 - 3.0 * sol.gamma_star).min(1.0 / 3.0).min(p_wait / 2.0))
}
