//! Comparison bounds along flow runs.

use std::sync::Arc;

use serde::Serialize;

use super::identities::{transverse_curvature, transverse_vector};
use crate::error::{Error, Result};
use crate::flow::MonitorSample;
use crate::metric::FinslerMetric;

/// Solution `α/(1 + αt)` of the Bernoulli equation `u' = −u²`, `u(0) = α`;
/// `NaN` once `1 + αt ≤ 0`.
pub fn bernoulli_solution(alpha: f64, t: f64) -> f64 {
    let d = 1.0 + alpha * t;
    if d > 0.0 {
        alpha / d
    } else {
        f64::NAN
    }
}

/// [`bernoulli_solution`], failing with `PoleReached` past the pole of a
/// negative `α`.
pub fn bernoulli_checked(alpha: f64, t: f64) -> Result<f64> {
    if 1.0 + alpha * t <= 0.0 {
        return Err(Error::PoleReached(-1.0 / alpha));
    }
    Ok(alpha / (1.0 + alpha * t))
}

/// Classical RK4 solve of `u' = −u²` from `u(0) = α` to `t` in `steps` steps.
pub fn bernoulli_rk4(alpha: f64, t: f64, steps: usize) -> f64 {
    let f = |u: f64| -u * u;
    let h = t / steps as f64;
    let mut u = alpha;
    for _ in 0..steps {
        let k1 = f(u);
        let k2 = f(u + 0.5 * h * k1);
        let k3 = f(u + 0.5 * h * k2);
        let k4 = f(u + h * k3);
        u += h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    }
    u
}

/// Outcome of one bound check.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Pass,
    Fail,
    ReportOnly,
}

/// A bound checked along a monitor series.
#[derive(Debug, Clone, Serialize)]
pub struct BoundCheck {
    pub id: String,
    /// Which run the check was made on.
    pub run: String,
    pub status: Status,
    /// `(t, margin)` per sample; the bound holds where the margin is `≥ 0`.
    pub margins: Vec<(f64, f64)>,
    pub first_violation: Option<f64>,
    pub alpha: Option<f64>,
    #[serde(rename = "K")]
    pub k: Option<f64>,
    /// Smallest `C` with `exp(−2CKt) ≤ R̄_t/R̄_0 ≤ exp(2CKt)` on the samples.
    pub fitted_c: Option<f64>,
}

impl BoundCheck {
    fn new(id: &str) -> Self {
        BoundCheck {
            id: id.into(),
            run: String::new(),
            status: Status::Pass,
            margins: Vec::new(),
            first_violation: None,
            alpha: None,
            k: None,
            fitted_c: None,
        }
    }

    pub fn min_margin(&self) -> f64 {
        self.margins
            .iter()
            .map(|m| m.1)
            .fold(f64::INFINITY, f64::min)
    }
}

/// Flag and Ricci curvature stay positive when they start positive.
pub fn check_positivity(samples: &[MonitorSample]) -> Result<BoundCheck> {
    let first = samples
        .first()
        .ok_or(Error::NotApplicable("empty series".into()))?;
    if !(first.min_flag > 0.0 && first.min_ric > 0.0) {
        return Err(Error::NotApplicable(format!(
            "initial curvature is not positive (min flag {}, min Ric {})",
            first.min_flag, first.min_ric
        )));
    }
    let mut c = BoundCheck::new("curvature_positivity");
    for s in samples {
        let m = s.min_flag.min(s.min_ric);
        if !(m > 0.0) && c.first_violation.is_none() {
            c.first_violation = Some(s.t);
            c.status = Status::Fail;
        }
        c.margins.push((s.t, m));
    }
    Ok(c)
}

/// `min Ric(t) ≥ α/(1 + αt)` with `α = min Ric(0) > 0`, up to `tol`.
pub fn check_lower_bound(samples: &[MonitorSample], tol: f64) -> Result<BoundCheck> {
    let alpha = samples
        .first()
        .ok_or(Error::NotApplicable("empty series".into()))?
        .min_ric;
    if !(alpha > 0.0) {
        return Err(Error::NotApplicable(format!(
            "initial minimum of Ric is {alpha}"
        )));
    }
    let mut c = BoundCheck::new("ricci_lower_bound");
    c.alpha = Some(alpha);
    for s in samples {
        let m = s.min_ric - bernoulli_solution(alpha, s.t);
        if !(m >= -tol) && c.first_violation.is_none() {
            c.first_violation = Some(s.t);
            c.status = Status::Fail;
        }
        c.margins.push((s.t, m));
    }
    Ok(c)
}

/// `F²R(V, V)` at fixed `(x, y, V)` along a run, with the running `K`.
#[derive(Debug, Clone, Serialize)]
pub struct RatioSample {
    pub t: f64,
    #[serde(rename = "K_bound")]
    pub k_bound: f64,
    pub values: Vec<f64>,
}

/// Tracks `F²R(V, V)` at `points` over the metrics of a run; `V` is fixed
/// from the orthonormal completion at the first metric.
pub fn ratio_series(
    metrics: &[(f64, Arc<dyn FinslerMetric>)],
    samples: &[MonitorSample],
    points: &[(Vec<f64>, Vec<f64>)],
) -> Result<Vec<RatioSample>> {
    let first = metrics
        .first()
        .ok_or(Error::NotApplicable("empty run".into()))?;
    let vs: Vec<Vec<f64>> = points
        .iter()
        .map(|(x, y)| transverse_vector(first.1.as_ref(), x, y))
        .collect::<Result<_>>()?;
    metrics
        .iter()
        .zip(samples)
        .map(|((t, m), s)| {
            let values = points
                .iter()
                .zip(&vs)
                .map(|((x, y), v)| transverse_curvature(m.as_ref(), x, y, v))
                .collect::<Result<_>>()?;
            Ok(RatioSample {
                t: *t,
                k_bound: s.k_bound,
                values,
            })
        })
        .collect()
}

/// Fits the constant `C` of the two-sided ratio bound with `K` the supremum
/// of the monitored `‖Ric‖` over the run. Report-only: `C` depends on the
/// sample set.
pub fn check_ratio_bounds(series: &[RatioSample]) -> Result<BoundCheck> {
    let first = series
        .first()
        .ok_or(Error::NotApplicable("empty series".into()))?;
    if let Some(v) = first.values.iter().find(|v| !(**v > 0.0)) {
        return Err(Error::NotApplicable(format!(
            "initial F²R(V, V) = {v} is not positive"
        )));
    }
    let k = series.iter().map(|s| s.k_bound).fold(0.0, f64::max);
    let mut c = BoundCheck::new("curvature_ratio_bound");
    c.status = Status::ReportOnly;
    c.k = Some(k);
    let mut fitted = 0.0f64;
    for s in series {
        let worst = s
            .values
            .iter()
            .zip(&first.values)
            .map(|(v, v0)| (v / v0).ln().abs())
            .fold(0.0, f64::max);
        if s.t > 0.0 {
            fitted = fitted.max(worst / (2.0 * k * s.t));
        }
        c.margins.push((s.t, worst));
    }
    c.fitted_c = Some(fitted);
    if !fitted.is_finite() {
        c.status = Status::Fail;
    }
    Ok(c)
}
