//! Gauss-Legendre quadrature nodes and weights.
//!
//! Nodes are the roots of the Legendre polynomial `P_n`, found by Newton
//! iteration from the Tricomi initial guess; weights follow from the
//! derivative identity `w_i = 2 / ((1 - x_i^2) P_n'(x_i)^2)`. An n-point
//! rule integrates polynomials up to degree `2n - 1` exactly, which is the
//! backbone of every smooth delay-distribution integral in [`crate::analytic`].

/// Nodes and weights of the n-point Gauss-Legendre rule on `[-1, 1]`,
/// in ascending node order.
///
/// # Panics
///
/// Panics if `n == 0`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n > 0, "quadrature order must be positive");
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    // Roots come in +/- pairs; compute the non-negative half.
    let half = n / 2 + n % 2;
    for i in 0..half {
        // Tricomi's approximation to the i-th root (counting from the
        // largest), accurate enough that Newton converges in a few steps.
        let k = i + 1;
        let theta = std::f64::consts::PI * (k as f64 - 0.25) / (n as f64 + 0.5);
        let mut x = theta.cos();
        for _ in 0..100 {
            let (p, d) = legendre_with_derivative(n, x);
            let dx = p / d;
            x -= dx;
            if dx.abs() < 1e-15 {
                break;
            }
        }
        // One polishing step after convergence; the derivative there is
        // the root derivative to working precision.
        let (p, d) = legendre_with_derivative(n, x);
        x -= p / d;
        let w = 2.0 / ((1.0 - x * x) * d * d);
        nodes[n - 1 - i] = x;
        weights[n - 1 - i] = w;
        nodes[i] = -x;
        weights[i] = w;
    }
    if n % 2 == 1 {
        nodes[n / 2] = 0.0;
    }
    (nodes, weights)
}

/// Evaluates `P_n(x)` and `P_n'(x)` via the three-term recurrence.
fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let mut p_prev = 1.0;
    let mut p = x;
    if n == 1 {
        return (x, 1.0);
    }
    for j in 2..=n {
        let jf = j as f64;
        let p_next = ((2.0 * jf - 1.0) * x * p - (jf - 1.0) * p_prev) / jf;
        p_prev = p;
        p = p_next;
    }
    let d = (n as f64) * (x * p - p_prev) / (x * x - 1.0);
    (p, d)
}

/// Rescales a `[-1, 1]` rule to `[a, b]`.
pub fn scale_to_interval(nodes: &[f64], weights: &[f64], a: f64, b: f64) -> Vec<(f64, f64)> {
    let mid = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    nodes
        .iter()
        .zip(weights)
        .map(|(&x, &w)| (mid + half * x, half * w))
        .collect()
}
