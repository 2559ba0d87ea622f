//! End-to-end checks of the trace simulator: error accounting, moment
//! bounds, and convergence behavior of the online policy.

use wiener_sampling::analytic::AnalyticContext;
use wiener_sampling::delay::DelayModel;
use wiener_sampling::policy::{OnlineConfig, PolicyKind};
use wiener_sampling::rng::RngStream;
use wiener_sampling::sim::{regret_series, run_replications, run_trace};
use wiener_sampling::solver::solve_unconstrained;

/// The two per-frame error estimators share an expectation; their paired
/// difference must center on zero.
#[test]
fn error_estimators_agree_in_mean() {
    let model = DelayModel::deterministic(1.0).unwrap();
    let sol = solve_unconstrained(&AnalyticContext::new(model.clone()).unwrap()).unwrap();
    let mut rng = RngStream::new(7, 0);
    let t = run_trace(&model, &PolicyKind::OptimalThreshold(sol), 200_000, &mut rng, None).unwrap();
    let a = &t.aggregates;
    let n = a.frames as f64;
    let mean = a.sum_estimator_gap / n;
    let var = (a.sum_estimator_gap_sq / n - mean * mean).max(0.0);
    let se = (var / n).sqrt();
    assert!(
        mean.abs() <= 3.0 * se,
        "estimator gap {mean:.4e} exceeds 3 se = {:.4e}",
        3.0 * se
    );
}

/// Realized squared path errors stay under the conditional second-moment
/// budget derived from the running threshold level (with slack for the
/// budget being an expectation bound applied per realized frame).
#[test]
fn path_error_second_moment_within_budget()
{
    let model = DelayModel::uniform(0.0, 1.0).unwrap();
    let config = OnlineConfig::for_model(&model, 1.0, f64::INFINITY, 1.0).unwrap();
    let mut rng = RngStream::new(8, 0);
    let t = run_trace(&model, &PolicyKind::Online(config), 100_000, &mut rng, None).unwrap();
    let a = &t.aggregates;
    let mean_sq = a.sum_err_path_sq / a.frames as f64;
    let mean_bound = a.sum_moment_bound / a.frames as f64;
    assert!(
        mean_sq <= 5.0 * mean_bound,
        "mean err_path^2 = {mean_sq:.4e} exceeds 5x mean budget = {:.4e}",
        5.0 * mean_bound
    );
}

/// Under the exact optimal threshold the cumulative regret is a mean-zero
/// fluctuation; it must sit within sampling error of zero.
#[test]
fn optimal_policy_regret_centers_on_zero() {
    let model = DelayModel::deterministic(1.0).unwrap();
    let sol = solve_unconstrained(&AnalyticContext::new(model.clone()).unwrap()).unwrap();
    let kind = PolicyKind::OptimalThreshold(sol.clone());
    let traces = run_replications(&model, &kind, 20_000, 4, 11, None).unwrap();
    let finals: Vec<f64> = traces
        .iter()
        .map(|t| t.aggregates.sum_err_mart - sol.mse_opt * t.aggregates.final_epoch)
        .collect();
    let n = finals.len() as f64;
    let mean = finals.iter().sum::<f64>() / n;
    let var = finals.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
    let se = (var / n).sqrt();
    assert!(
        mean.abs() <= 4.0 * se,
        "final regret {mean:.3} exceeds 4 se = {:.3}",
        4.0 * se
    );
    // The series agrees with the aggregate at the final checkpoint.
    let series = regret_series(&traces, &sol).unwrap();
    let (_, last) = *series.last().unwrap();
    assert!((last - mean).abs() < 1e-9 * mean.abs().max(1.0));
}

/// The learner's mean distance to the optimal level decays over time:
/// across log-spaced checkpoints past the early transient, allowing at
/// most one inversion.
#[test]
fn online_distance_to_optimum_decays() {
    let model = DelayModel::uniform(0.0, 1.0).unwrap();
    let sol = solve_unconstrained(&AnalyticContext::new(model.clone()).unwrap()).unwrap();
    let config = OnlineConfig::for_model(&model, 1.0, f64::INFINITY, 1.0).unwrap();
    let kind = PolicyKind::Online(config);
    let traces = run_replications(&model, &kind, 10_000, 20, 1, None).unwrap();
    let checkpoints = [100usize, 316, 1000, 3162, 10_000];
    let mut means = Vec::new();
    for &k in &checkpoints {
        let m: f64 = traces
            .iter()
            .map(|t| (t.rows.gamma[k - 1] - sol.gamma_star).abs())
            .sum::<f64>()
            / traces.len() as f64;
        means.push(m);
    }
    let inversions = means.windows(2).filter(|w| w[1] > w[0]).count();
    assert!(
        inversions <= 1,
        "mean |gamma_k - gamma*| not decaying: {means:?} ({inversions} inversions)"
    );
    assert!(
        means.last().unwrap() < means.first().unwrap(),
        "no net contraction: {means:?}"
    );
}
