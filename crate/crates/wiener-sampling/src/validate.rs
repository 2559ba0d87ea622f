//! Self-check suite tying the analytic layer, the solver, and the
//! simulator together.
//!
//! The checks fall in two groups. Analytic checks verify structural
//! properties of the mean frame cost (concavity, slope identity, drift
//! inequality, duality gap) against independent finite differences and
//! grid searches. Simulation checks verify distribution-free identities
//! (Wald, optional stopping, estimator agreement) on freshly simulated
//! traces, so a discretization or accounting bug in the kernels cannot
//! hide behind the analytic layer.

use rayon::prelude::*;

use crate::analytic::{gamma_bracket, AnalyticContext, EvalMode};
use crate::delay::DelayModel;
use crate::policy::{OnlineConfig, PolicyKind};
use crate::rng::RngStream;
use crate::sim::{run_trace, TraceSeries};
use crate::solver::{solve_constrained, solve_unconstrained};
use crate::Result;

/// Outcome of one named check.
#[derive(Debug, Clone)]
pub struct CheckResult {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl CheckResult {
    /// One-line rendering, `PASS name: detail`.
    pub fn render(&self) -> String {
        let tag = if self.passed { "PASS" } else { "FAIL" };
        format!("{tag} {}: {}", self.name, self.detail)
    }
}

/// Seed for the suite's simulations; fixed so reruns are bit-identical.
const SUITE_SEED: u64 = 0x5EED_CAFE;

/// Frames per simulation check trace.
const SUITE_FRAMES: u64 = 1_000_000;

fn check(name: &str, body: impl FnOnce() -> Result<(bool, String)>) -> CheckResult {
    match body() {
        Ok((passed, detail)) => CheckResult { name: name.into(), passed, detail },
        Err(e) => CheckResult { name: name.into(), passed: false, detail: format!("error: {e}") },
    }
}

fn mean_and_se(sum: f64, sum_sq: f64, n: f64) -> (f64, f64) {
    let mean = sum / n;
    let var = (sum_sq / n - mean * mean).max(0.0);
    (mean, (var / n).sqrt())
}

/// Runs every check and returns the results in a fixed order. A forced
/// Euler step (`step_override`) propagates to all simulation checks; a
/// step too coarse for the thresholds in play fails the step-resolution
/// check and usually the identity checks with it.
pub fn run_suite(step_override: Option<f64>) -> Vec<CheckResult> {
    let mut results = analytic_checks();
    results.extend(simulation_checks(step_override));
    results
}

/// The analytic half of the suite; no random number use, runs in
/// milliseconds.
pub fn analytic_checks() -> Vec<CheckResult> {
    let mut out = Vec::new();

    let models: Vec<DelayModel> = match (|| -> Result<Vec<DelayModel>> {
        Ok(vec![
            DelayModel::deterministic(1.0)?,
            DelayModel::uniform(0.0, 1.0)?,
            DelayModel::lognormal(0.8, 1.2)?,
            DelayModel::lecam(0.25, 1.0, 2.0)?,
        ])
    })() {
        Ok(m) => m,
        Err(e) => {
            out.push(CheckResult {
                name: "model-setup".into(),
                passed: false,
                detail: format!("error: {e}"),
            });
            return out;
        }
    };
    // The heavy-tailed and perturbed models exercise the quadrature; the
    // first three also have cheap reference solutions.
    let smooth = &models[..3];

    out.push(check("delay-quadrature-mass", || {
        let mut worst = 0.0f64;
        for m in &models {
            let pts = m.quadrature(4096)?;
            let mass: f64 = pts.iter().map(|&(_, w)| w).sum();
            let mean: f64 = pts.iter().map(|&(d, w)| w * d).sum();
            let m2: f64 = pts.iter().map(|&(d, w)| w * d * d).sum();
            worst = worst
                .max((mass - 1.0).abs())
                .max((mean - m.mean()).abs() / m.mean().max(1.0))
                .max((m2 - m.second_moment()).abs() / m.second_moment().max(1.0));
        }
        Ok((worst < 1e-9, format!("worst mass/moment error {worst:.2e} (tol 1e-9)")))
    }));

    out.push(check("delay-sampling-moments", || {
        let n = 1_000_000u64;
        let mut worst = 0.0f64;
        let mut detail = String::new();
        for (i, m) in models.iter().enumerate() {
            let mut rng = RngStream::new(SUITE_SEED, 100 + i as u64);
            let (mut s1, mut s2, mut s1q, mut s2q) = (0.0, 0.0, 0.0, 0.0);
            for _ in 0..n {
                let d = m.sample(&mut rng);
                s1 += d;
                s2 += d * d;
                s1q += d * d;
                s2q += d * d * d * d;
            }
            let (mean, se1) = mean_and_se(s1, s1q, n as f64);
            let (m2, se2) = mean_and_se(s2, s2q, n as f64);
            let z1 = (mean - m.mean()).abs() / se1.max(1e-300);
            let z2 = (m2 - m.second_moment()).abs() / se2.max(1e-300);
            worst = worst.max(z1).max(z2);
            if z1.max(z2) > 4.0 {
                detail.push_str(&format!("{}: z=({z1:.1},{z2:.1}) ", m.spec_string()));
            }
        }
        Ok((worst <= 4.0, format!("{detail}worst z-score {worst:.2} (limit 4)")))
    }));

    out.push(check("cost-concavity", || {
        let mut worst_hi = f64::NEG_INFINITY;
        let mut worst_lo = f64::INFINITY;
        let mut max_slope = f64::NEG_INFINITY;
        for m in smooth {
            let ctx = AnalyticContext::new(m.clone())?;
            let (lo, hi) = gamma_bracket(m, f64::INFINITY)?;
            let n = 100usize;
            let h = (hi - lo) / (n as f64 - 1.0);
            let g: Vec<f64> =
                (0..n).map(|i| ctx.g_bar(lo + i as f64 * h, 0.0)).collect::<Result<_>>()?;
            for i in 1..n - 1 {
                let second = (g[i - 1] - 2.0 * g[i] + g[i + 1]) / (h * h);
                worst_hi = worst_hi.max(second);
                worst_lo = worst_lo.min(second);
            }
            for i in 1..n {
                max_slope = max_slope.max((g[i] - g[i - 1]) / h);
            }
        }
        let ok = worst_hi <= 1e-3 && worst_lo >= -3.0 - 1e-3 && max_slope < 0.0;
        Ok((
            ok,
            format!(
                "second differences in [{worst_lo:.4}, {worst_hi:.2e}] (need [-3, 0] within 1e-3), max slope {max_slope:.3e}"
            ),
        ))
    }));

    out.push(check("cost-slope-identity", || {
        let mut worst = 0.0f64;
        for m in smooth {
            let ctx = AnalyticContext::new(m.clone())?;
            let (_, hi) = gamma_bracket(m, f64::INFINITY)?;
            for i in 1..=20 {
                let gamma = hi * i as f64 / 20.0;
                let h = 1e-5 * gamma.max(1.0);
                let fd = (ctx.g_bar(gamma + h, 0.0)? - ctx.g_bar(gamma - h, 0.0)?) / (2.0 * h);
                let len = ctx.expected_frame_length(3.0 * gamma)?;
                worst = worst.max((fd + len).abs() / len);
            }
        }
        Ok((worst < 1e-4, format!("worst relative slope mismatch {worst:.2e} (tol 1e-4)")))
    }));

    out.push(check("drift-inequality", || {
        // For the drift toward the root: (gamma - gamma*) g(gamma) must be
        // bounded by the negative square with the frame-length coefficient
        // taken at min(gamma, gamma*), the weaker side of the concave arc.
        let mut worst = f64::NEG_INFINITY;
        for m in smooth {
            let ctx = AnalyticContext::new(m.clone())?;
            let sol = solve_unconstrained(&ctx)?;
            let gs = sol.gamma_star;
            for j in 1..=100 {
                let gamma = 3.0 * gs * j as f64 / 100.0;
                let diff = gamma - gs;
                let lhs = diff * ctx.g_bar(gamma, 0.0)?;
                let coeff = ctx.expected_frame_length(3.0 * gamma.min(gs))?;
                let rhs = -coeff * diff * diff;
                worst = worst.max((lhs - rhs) / rhs.abs().max(1.0));
            }
        }
        Ok((worst <= 1e-6, format!("worst normalized excess {worst:.2e} (tol 1e-6)")))
    }));

    out.push(check("cost-assembly-agreement", || {
        let mut worst = 0.0f64;
        for m in smooth {
            let ctx = AnalyticContext::new(m.clone())?;
            for &gamma in &[0.0, 0.1, 0.5, 2.0, 8.0] {
                for &nu in &[0.0, 0.5, 3.0] {
                    let a = ctx.g_bar(gamma, nu)?;
                    let b = ctx.g_bar_max_form(gamma, nu)?;
                    worst = worst.max((a - b).abs() / a.abs().max(b.abs()).max(1.0));
                }
            }
        }
        Ok((worst <= 1e-12, format!("worst normalized assembly gap {worst:.2e} (tol 1e-12)")))
    }));

    out.push(check("monte-carlo-cross-check", || {
        let mut worst = 0.0f64;
        for m in &[&models[0], &models[2]] {
            let quad = AnalyticContext::new((*m).clone())?;
            let mc = AnalyticContext::with_options((*m).clone(), 64, 200_000, EvalMode::MonteCarlo)?;
            let gamma = m.mean();
            let (est, se) = mc.g_bar_monte_carlo(gamma, 0.0)?;
            let reference = quad.g_bar(gamma, 0.0)?;
            worst = worst.max((est - reference).abs() / se.max(1e-300));
        }
        Ok((worst <= 4.0, format!("worst z-score {worst:.2} (limit 4)")))
    }));

    out.push(check("threshold-grid-argmin", || {
        let det = AnalyticContext::new(models[0].clone())?;
        let logn = AnalyticContext::new(models[2].clone())?;
        let cases = [
            (solve_unconstrained(&det)?, det),
            (
                {
                    let f_max = 1.0 / (10.0 * models[2].mean());
                    solve_constrained(&logn, f_max)?
                },
                logn,
            ),
        ];
        let mut worst_cells = 0.0f64;
        for (sol, ctx) in &cases {
            let a_star = sol.tau_sq_star;
            let level = sol.gamma_star + sol.nu_star;
            let n = 100usize;
            let cell = 3.0 * a_star / (n as f64 - 1.0);
            let mut best = (f64::INFINITY, 0.0);
            for j in 0..n {
                let a = cell * j as f64;
                let value = ctx.expected_frame_quartic(a)? - level * ctx.expected_frame_length(a)?;
                if value < best.0 {
                    best = (value, a);
                }
            }
            worst_cells = worst_cells.max((best.1 - a_star).abs() / cell);
        }
        Ok((
            worst_cells <= 1.0 + 1e-9,
            format!("grid argmin within {worst_cells:.3} cells of the stationary level (limit 1)"),
        ))
    }));

    out.push(check("duality-gap", || {
        let mut worst = 0.0f64;
        for m in smooth {
            let ctx = AnalyticContext::new(m.clone())?;
            let sol = solve_unconstrained(&ctx)?;
            let theta = ctx.expected_frame_quartic(sol.tau_sq_star)?
                - sol.gamma_star * ctx.expected_frame_length(sol.tau_sq_star)?;
            worst = worst.max(theta.abs() / m.second_moment().max(1.0));
        }
        // One budget-bound case: the full saddle value including the
        // multiplier term must also vanish.
        let m = &models[2];
        let ctx = AnalyticContext::new(m.clone())?;
        let target = 10.0 * m.mean();
        let sol = solve_constrained(&ctx, 1.0 / target)?;
        let lagrangian = ctx.expected_frame_quartic(sol.tau_sq_star)?
            - (sol.gamma_star + sol.nu_star) * ctx.expected_frame_length(sol.tau_sq_star)?
            + sol.nu_star * target;
        worst = worst.max(
            lagrangian.abs() / m.second_moment().max(sol.nu_star * target).max(1.0),
        );
        Ok((worst <= 1e-8, format!("worst normalized gap {worst:.2e} (tol 1e-8)")))
    }));

    out.push(check("mse-floor", || {
        let mut worst_margin = f64::INFINITY;
        for m in &models {
            let ctx = AnalyticContext::new(m.clone())?;
            let sol = solve_unconstrained(&ctx)?;
            let floor = 7.0 / 6.0 * m.mean();
            worst_margin = worst_margin.min((sol.mse_opt - floor) / m.mean().max(1e-300));
        }
        Ok((
            worst_margin >= -1e-9,
            format!("smallest normalized margin over the delay floor {worst_margin:.4e}"),
        ))
    }));

    out
}

/// The simulation half of the suite. Four million-frame traces are run in
/// parallel; identities are then tested on the stored aggregates.
pub fn simulation_checks(step_override: Option<f64>) -> Vec<CheckResult> {
    let mut out = Vec::new();
    let setup = (|| -> Result<Vec<TraceSeries>> {
        let det = DelayModel::deterministic(1.0)?;
        let uni = DelayModel::uniform(0.0, 1.0)?;
        let det_sol = solve_unconstrained(&AnalyticContext::new(det.clone())?)?;
        let uni_sol = solve_unconstrained(&AnalyticContext::new(uni.clone())?)?;
        let online = OnlineConfig::for_model(&det, 1.0, f64::INFINITY, 1.0)?;
        let configs: Vec<(DelayModel, PolicyKind)> = vec![
            (det.clone(), PolicyKind::ZeroWait),
            (det.clone(), PolicyKind::OptimalThreshold(det_sol)),
            (det, PolicyKind::Online(online)),
            (uni, PolicyKind::OptimalThreshold(uni_sol)),
        ];
        configs
            .into_par_iter()
            .enumerate()
            .map(|(i, (model, kind))| {
                let mut rng = RngStream::new(SUITE_SEED, i as u64);
                run_trace(&model, &kind, SUITE_FRAMES, &mut rng, step_override)
            })
            .collect()
    })();
    let traces = match setup {
        Ok(t) => t,
        Err(e) => {
            out.push(CheckResult {
                name: "simulation-setup".into(),
                passed: false,
                detail: format!("error: {e}"),
            });
            return out;
        }
    };
    let reference = &traces[1];

    out.push(check("wald-identity", || {
        let a = &reference.aggregates;
        let n = a.frames as f64;
        let (mean, se) = mean_and_se(
            a.sum_exit_sq - a.sum_length,
            a.sum_wald_residual_sq,
            n,
        );
        Ok((
            mean.abs() <= 3.0 * se,
            format!("mean(exit^2 - length) = {mean:.3e}, 3 se = {:.3e}", 3.0 * se),
        ))
    }));

    out.push(check("stopping-identity", || {
        let a = &reference.aggregates;
        let n = a.frames as f64;
        let (mean, se) = mean_and_se(
            a.sum_path_integral_2 - a.sum_exit_quartic / 6.0,
            a.sum_stopping_residual_sq,
            n,
        );
        Ok((
            mean.abs() <= 3.0 * se,
            format!("mean(area2 - exit^4/6) = {mean:.3e}, 3 se = {:.3e}", 3.0 * se),
        ))
    }));

    out.push(check("signed-area-centering", || {
        let a = &reference.aggregates;
        let n = a.frames as f64;
        let (mean, se) =
            mean_and_se(a.sum_path_integral_1, a.sum_path_integral_1_sq, n);
        Ok((
            mean.abs() <= 3.0 * se,
            format!("mean signed area = {mean:.3e}, 3 se = {:.3e}", 3.0 * se),
        ))
    }));

    out.push(check("estimator-agreement", || {
        let mut worst = 0.0f64;
        let mut detail = String::new();
        for t in &traces {
            let a = &t.aggregates;
            let n = a.frames as f64;
            let (mean, se) = mean_and_se(a.sum_estimator_gap, a.sum_estimator_gap_sq, n);
            let z = mean.abs() / se.max(1e-300);
            worst = worst.max(z);
            if z > 3.0 {
                detail.push_str(&format!(
                    "{}/{}: gap {mean:.3e} z={z:.1} ",
                    t.model_spec, t.policy_label
                ));
            }
        }
        Ok((worst <= 3.0, format!("{detail}worst |gap| z-score {worst:.2} (limit 3)")))
    }));

    out.push(check("renewal-consistency", || {
        // Exact bookkeeping on a small fully stored run, plus checkpoint
        // monotonicity on the long traces.
        let det = DelayModel::deterministic(1.0)?;
        let sol = solve_unconstrained(&AnalyticContext::new(det.clone())?)?;
        let mut rng = RngStream::new(SUITE_SEED, 10);
        let t = run_trace(&det, &PolicyKind::OptimalThreshold(sol), 500, &mut rng, step_override)?;
        let rows = &t.rows;
        let mut ok = rows.len() == 500;
        let mut sum_l = 0.0;
        for i in 0..rows.len() {
            ok &= rows.length[i] == rows.delay[i] + rows.wait[i];
            ok &= i == 0 || rows.s_end[i] > rows.s_end[i - 1];
            ok &= i == 0 || rows.cum_err[i] >= rows.cum_err[i - 1];
            ok &= rows.s_start[i] + rows.length[i] == rows.s_end[i];
            sum_l += rows.length[i];
        }
        ok &= (sum_l - t.aggregates.final_epoch).abs() <= 1e-9 * 500.0;
        for t in &traces {
            ok &= t.rows.s_end.windows(2).all(|w| w[0] < w[1]);
        }
        Ok((ok, "frame lengths, epochs, and cumulative error all consistent".into()))
    }));

    out.push(check("step-resolution", || {
        let warned: u64 = traces.iter().map(|t| t.aggregates.warning_frames).sum();
        Ok((
            warned == 0,
            if warned == 0 {
                "no frame ran with a step too coarse for its threshold".into()
            } else {
                format!("{warned} frames ran with a step too coarse for their threshold")
            },
        ))
    }));

    out
}
