//! Channel delay distributions.
//!
//! A [`DelayModel`] bundles a distribution kind with its cached first,
//! second, and fourth moments (`mean`, `second_moment`, `fourth_moment`),
//! which the analytic layer and the solvers consume constantly. Supported
//! kinds:
//!
//! - `det:d` point mass at `d >= 0`;
//! - `uniform:a,b` uniform on `[a, b]`, `0 <= a < b`;
//! - `lognormal:mu,sigma` log-normal with log-mean `mu`, log-sd `sigma > 0`;
//! - `lecam:delta,c,k` a perturbed uniform on `[0, 1]` whose density is
//!   depressed by `c * sqrt(1/k)` on `[0, delta/2]` and raised by the same
//!   amount on `(1 - delta/2, 1]` (a local-alternative family used to probe
//!   estimator sensitivity);
//! - `empirical:path.csv` resampling with replacement from a recorded list
//!   of delays (one non-negative value per line), with plug-in moments.

use crate::quad;
use crate::rng::RngStream;
use crate::{Error, Result};
use std::path::Path;

/// Distribution kind with validated parameters.
#[derive(Debug, Clone, PartialEq)]
pub enum DelayKind {
    Deterministic { d: f64 },
    Uniform { a: f64, b: f64 },
    LogNormal { mu: f64, sigma: f64 },
    LecamPerturbedUniform { delta: f64, c: f64, k: f64 },
    Empirical { values: Vec<f64> },
}

/// A delay distribution with cached moments.
#[derive(Debug, Clone)]
pub struct DelayModel {
    kind: DelayKind,
    spec: String,
    mean: f64,
    second_moment: f64,
    fourth_moment: f64,
}

fn require_finite(name: &str, v: f64) -> Result<()> {
    if !v.is_finite() {
        return Err(Error::InvalidArgument(format!("{name} must be finite, got {v}")));
    }
    Ok(())
}

impl DelayModel {
    /// Point mass at `d >= 0`.
    pub fn deterministic(d: f64) -> Result<Self> {
        require_finite("d", d)?;
        if d < 0.0 {
            return Err(Error::InvalidArgument(format!("delay must be >= 0, got {d}")));
        }
        Ok(Self {
            kind: DelayKind::Deterministic { d },
            spec: format!("det:{d}"),
            mean: d,
            second_moment: d * d,
            fourth_moment: d * d * d * d,
        })
    }

    /// Uniform on `[a, b]` with `0 <= a < b`.
    pub fn uniform(a: f64, b: f64) -> Result<Self> {
        require_finite("a", a)?;
        require_finite("b", b)?;
        if !(0.0 <= a && a < b) {
            return Err(Error::InvalidArgument(format!(
                "uniform delay needs 0 <= a < b, got a={a}, b={b}"
            )));
        }
        // E[D^n] = (b^{n+1} - a^{n+1}) / ((n+1)(b-a))
        let moment = |n: i32| (b.powi(n + 1) - a.powi(n + 1)) / ((n as f64 + 1.0) * (b - a));
        Ok(Self {
            kind: DelayKind::Uniform { a, b },
            spec: format!("uniform:{a},{b}"),
            mean: moment(1),
            second_moment: moment(2),
            fourth_moment: moment(4),
        })
    }

    /// Log-normal: `D = exp(mu + sigma * N)` with `sigma > 0`.
    pub fn lognormal(mu: f64, sigma: f64) -> Result<Self> {
        require_finite("mu", mu)?;
        require_finite("sigma", sigma)?;
        if sigma <= 0.0 {
            return Err(Error::InvalidArgument(format!("sigma must be > 0, got {sigma}")));
        }
        // E[D^n] = exp(n mu + n^2 sigma^2 / 2)
        let moment = |n: f64| (n * mu + 0.5 * n * n * sigma * sigma).exp();
        Ok(Self {
            kind: DelayKind::LogNormal { mu, sigma },
            spec: format!("lognormal:{mu},{sigma}"),
            mean: moment(1.0),
            second_moment: moment(2.0),
            fourth_moment: moment(4.0),
        })
    }

    /// Perturbed uniform on `[0, 1]`; see [`lecam_density`].
    pub fn lecam(delta: f64, c: f64, k: f64) -> Result<Self> {
        validate_lecam(delta, c, k)?;
        let mut model = Self {
            kind: DelayKind::LecamPerturbedUniform { delta, c, k },
            spec: format!("lecam:{delta},{c},{k}"),
            mean: 0.0,
            second_moment: 0.0,
            fourth_moment: 0.0,
        };
        // The density is piecewise constant, so a modest piecewise rule is
        // exact for these polynomial integrands.
        let pts = model.quadrature(96)?;
        let moment =
            |n: i32| pts.iter().map(|&(x, w)| w * x.powi(n)).sum::<f64>();
        let total = moment(0);
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::Integration(format!(
                "perturbed-uniform density integrates to {total}, expected 1"
            )));
        }
        model.mean = moment(1);
        model.second_moment = moment(2);
        model.fourth_moment = moment(4);
        Ok(model)
    }

    /// Resampling distribution over recorded delays.
    pub fn empirical(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::InvalidArgument("empirical delay list is empty".into()));
        }
        for &v in &values {
            require_finite("delay", v)?;
            if v < 0.0 {
                return Err(Error::InvalidArgument(format!("delay must be >= 0, got {v}")));
            }
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let second = values.iter().map(|v| v * v).sum::<f64>() / n;
        let fourth = values.iter().map(|v| v * v * v * v).sum::<f64>() / n;
        Ok(Self {
            kind: DelayKind::Empirical { values },
            spec: format!("empirical:n={}", n as usize),
            mean,
            second_moment: second,
            fourth_moment: fourth,
        })
    }

    /// Loads an empirical model from a file with one delay per line.
    /// Blank lines and `#` comments are skipped.
    pub fn empirical_from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let mut values = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let v: f64 = line.parse().map_err(|_| {
                Error::Parse(format!("{}:{}: expected a number, got {line:?}", path.display(), i + 1))
            })?;
            values.push(v);
        }
        let mut model = Self::empirical(values)?;
        model.spec = format!("empirical:{}", path.display());
        Ok(model)
    }

    /// Parses a textual spec: `det:d`, `uniform:a,b`, `lognormal:mu,sigma`,
    /// `lecam:delta,c,k`, or `empirical:path.csv`.
    pub fn parse(spec: &str) -> Result<Self> {
        let (kind, args) = spec
            .split_once(':')
            .ok_or_else(|| Error::Parse(format!("delay spec {spec:?} has no ':'")))?;
        let nums = |expect: usize| -> Result<Vec<f64>> {
            let parts: Vec<&str> = args.split(',').collect();
            if parts.len() != expect {
                return Err(Error::Parse(format!(
                    "delay spec {spec:?}: expected {expect} parameter(s), got {}",
                    parts.len()
                )));
            }
            parts
                .iter()
                .map(|p| {
                    p.trim()
                        .parse::<f64>()
                        .map_err(|_| Error::Parse(format!("delay spec {spec:?}: bad number {p:?}")))
                })
                .collect()
        };
        match kind {
            "det" => {
                let v = nums(1)?;
                Self::deterministic(v[0])
            }
            "uniform" => {
                let v = nums(2)?;
                Self::uniform(v[0], v[1])
            }
            "lognormal" => {
                let v = nums(2)?;
                Self::lognormal(v[0], v[1])
            }
            "lecam" => {
                let v = nums(3)?;
                Self::lecam(v[0], v[1], v[2])
            }
            "empirical" => Self::empirical_from_file(Path::new(args)),
            other => Err(Error::Parse(format!("unknown delay kind {other:?}"))),
        }
    }

    pub fn kind(&self) -> &DelayKind {
        &self.kind
    }

    /// Canonical spec string; doubles as the model identity when traces and
    /// solutions are cross-checked.
    pub fn spec_string(&self) -> &str {
        &self.spec
    }

    /// First moment `E[D]`.
    pub fn mean(&self) -> f64 {
        self.mean
    }

    /// Second moment `E[D^2]`.
    pub fn second_moment(&self) -> f64 {
        self.second_moment
    }

    /// Fourth moment `E[D^4]`.
    pub fn fourth_moment(&self) -> f64 {
        self.fourth_moment
    }

    /// Draws one delay.
    pub fn sample(&self, rng: &mut RngStream) -> f64 {
        match &self.kind {
            DelayKind::Deterministic { d } => *d,
            DelayKind::Uniform { a, b } => a + (b - a) * rng.uniform(),
            DelayKind::LogNormal { mu, sigma } => (mu + sigma * rng.standard_normal()).exp(),
            DelayKind::LecamPerturbedUniform { delta, c, k } => {
                // Piecewise-linear CDF; invert by piece.
                let eps = c * (1.0 / k).sqrt();
                let u = rng.uniform();
                let f1 = (1.0 - eps) * delta / 2.0;
                let f2 = f1 + (1.0 - delta);
                if u < f1 {
                    u / (1.0 - eps)
                } else if u < f2 {
                    delta / 2.0 + (u - f1)
                } else {
                    (1.0 - delta / 2.0) + (u - f2) / (1.0 + eps)
                }
            }
            DelayKind::Empirical { values } => values[rng.index(values.len())],
        }
    }

    /// Probability-weighted nodes `(d_i, p_i)` with `sum p_i = 1`, suitable
    /// for integrating smooth functions of the delay. `n` is the total node
    /// budget; point-mass kinds ignore it.
    pub fn quadrature(&self, n: usize) -> Result<Vec<(f64, f64)>> {
        if n == 0 {
            return Err(Error::InvalidArgument("node count must be positive".into()));
        }
        match &self.kind {
            DelayKind::Deterministic { d } => Ok(vec![(*d, 1.0)]),
            DelayKind::Uniform { a, b } => {
                let (x, w) = quad::gauss_legendre(n);
                let density = 1.0 / (b - a);
                Ok(quad::scale_to_interval(&x, &w, *a, *b)
                    .into_iter()
                    .map(|(t, w)| (t, w * density))
                    .collect())
            }
            DelayKind::LogNormal { mu, sigma } => {
                // Integrate in log space: D = exp(mu + sigma u), u standard
                // normal. [-13, 13] keeps the truncation error of even
                // exp(4 sigma u)-weighted integrands far below the solver
                // tolerance for sigma up to ~2.5.
                const U_MAX: f64 = 13.0;
                let (x, w) = quad::gauss_legendre(n);
                let norm = 1.0 / (2.0 * std::f64::consts::PI).sqrt();
                Ok(quad::scale_to_interval(&x, &w, -U_MAX, U_MAX)
                    .into_iter()
                    .map(|(u, w)| ((mu + sigma * u).exp(), w * norm * (-0.5 * u * u).exp()))
                    .collect())
            }
            DelayKind::LecamPerturbedUniform { delta, c, k } => {
                let per_piece = (n / 3).max(4);
                let (x, w) = quad::gauss_legendre(per_piece);
                let breaks = [0.0, delta / 2.0, 1.0 - delta / 2.0, 1.0];
                let mut pts = Vec::with_capacity(3 * per_piece);
                for i in 0..3 {
                    for (t, wt) in quad::scale_to_interval(&x, &w, breaks[i], breaks[i + 1]) {
                        let f = lecam_density(*delta, *c, *k, t)?;
                        pts.push((t, wt * f));
                    }
                }
                Ok(pts)
            }
            DelayKind::Empirical { values } => {
                let p = 1.0 / values.len() as f64;
                Ok(values.iter().map(|&v| (v, p)).collect())
            }
        }
    }
}

fn validate_lecam(delta: f64, c: f64, k: f64) -> Result<()> {
    require_finite("delta", delta)?;
    require_finite("c", c)?;
    require_finite("k", k)?;
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::InvalidArgument(format!("delta must be in (0, 1), got {delta}")));
    }
    if c < 0.0 {
        return Err(Error::InvalidArgument(format!("c must be >= 0, got {c}")));
    }
    if k <= 0.0 {
        return Err(Error::InvalidArgument(format!("k must be > 0, got {k}")));
    }
    let eps = c * (1.0 / k).sqrt();
    if eps >= 1.0 {
        return Err(Error::InvalidArgument(format!(
            "perturbation c*sqrt(1/k) = {eps} must be < 1 to keep the density non-negative"
        )));
    }
    Ok(())
}

/// Density of the perturbed uniform at `x`: `1 - c*sqrt(1/k)` on
/// `[0, delta/2]`, `1` on `(delta/2, 1 - delta/2]`, `1 + c*sqrt(1/k)` on
/// `(1 - delta/2, 1]`, and `0` elsewhere.
pub fn lecam_density(delta: f64, c: f64, k: f64, x: f64) -> Result<f64> {
    validate_lecam(delta, c, k)?;
    if !x.is_finite() {
        return Err(Error::InvalidArgument(format!("x must be finite, got {x}")));
    }
    let eps = c * (1.0 / k).sqrt();
    Ok(if !(0.0..=1.0).contains(&x) {
        0.0
    } else if x <= delta / 2.0 {
        1.0 - eps
    } else if x <= 1.0 - delta / 2.0 {
        1.0
    } else {
        1.0 + eps
    })
}
