//! Analytic Finsler metric families used as the test corpus, their JSON
//! configuration, and sampling-based admissibility checks.

use std::collections::BTreeMap;
use std::f64::consts::{PI, TAU};
use std::fmt;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::jet::{jet_space, Jet, Scalar};

/// Distance from the poles below which polar-chart queries are rejected.
pub const POLE_MARGIN: f64 = 0.05;

/// Relative eigenvalue floor below which `g` counts as degenerate.
pub const DEGENERACY_RTOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FamilyId {
    Euclidean,
    RiemannianTorus,
    RoundSphere,
    Randers,
    ConformalPerturbation,
}

impl FamilyId {
    pub fn name(self) -> &'static str {
        match self {
            FamilyId::Euclidean => "euclidean",
            FamilyId::RiemannianTorus => "riemannian_torus",
            FamilyId::RoundSphere => "round_sphere",
            FamilyId::Randers => "randers",
            FamilyId::ConformalPerturbation => "conformal_perturbation",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Ok(match s {
            "euclidean" | "flat" => FamilyId::Euclidean,
            "riemannian_torus" | "torus" => FamilyId::RiemannianTorus,
            "round_sphere" | "sphere" => FamilyId::RoundSphere,
            "randers" => FamilyId::Randers,
            "conformal_perturbation" | "conformal" => FamilyId::ConformalPerturbation,
            other => return Err(Error::UnknownFamily(other.to_string())),
        })
    }

    fn allowed_params(self) -> &'static [&'static str] {
        match self {
            FamilyId::Euclidean => &[],
            FamilyId::RiemannianTorus => &["amp", "amp2"],
            FamilyId::RoundSphere => &["r"],
            FamilyId::Randers => &["b1", "b2", "b3", "wave", "amp"],
            FamilyId::ConformalPerturbation => &["amp", "amp2", "eps"],
        }
    }

    pub fn default_chart(self) -> Chart {
        match self {
            FamilyId::RoundSphere => Chart::SpherePolar,
            _ => Chart::PeriodicBox,
        }
    }
}

impl fmt::Display for FamilyId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Chart {
    PeriodicBox,
    SpherePolar,
}

/// Configuration of one metric family instance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MetricSpec {
    pub family: FamilyId,
    pub dim: usize,
    #[serde(default)]
    pub params: BTreeMap<String, f64>,
    pub chart: Chart,
}

impl MetricSpec {
    pub fn new(family: FamilyId, dim: usize) -> Self {
        MetricSpec {
            family,
            dim,
            params: BTreeMap::new(),
            chart: family.default_chart(),
        }
    }

    pub fn with(mut self, key: &str, value: f64) -> Self {
        self.params.insert(key.to_string(), value);
        self
    }

    pub fn param(&self, key: &str, default: f64) -> f64 {
        self.params.get(key).copied().unwrap_or(default)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Config(format!("metric JSON: {e}")))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("MetricSpec serializes")
    }

    /// Parses `family[:key=value,...]`, e.g. `sphere:r=2` or `randers:b=0.3,dim=3`.
    /// `b` abbreviates `b1`; `dim` selects the dimension (default 2).
    pub fn from_shorthand(s: &str) -> Result<Self> {
        let (name, rest) = match s.split_once(':') {
            Some((n, r)) => (n, r),
            None => (s, ""),
        };
        let family = FamilyId::parse(name.trim())?;
        let mut spec = MetricSpec::new(family, 2);
        for kv in rest.split(',').filter(|p| !p.trim().is_empty()) {
            let (k, v) = kv
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("expected key=value, got `{kv}`")))?;
            let v: f64 = v
                .trim()
                .parse()
                .map_err(|_| Error::Config(format!("bad number in `{kv}`")))?;
            match k.trim() {
                "dim" | "n" => spec.dim = v as usize,
                "b" => {
                    spec.params.insert("b1".into(), v);
                }
                key => {
                    spec.params.insert(key.to_string(), v);
                }
            }
        }
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if !(2..=3).contains(&self.dim) {
            return Err(Error::BadParams(format!(
                "dim must be 2 or 3, got {}",
                self.dim
            )));
        }
        let allowed = self.family.allowed_params();
        for (k, v) in &self.params {
            if !allowed.contains(&k.as_str()) {
                return Err(Error::BadParams(format!(
                    "parameter `{k}` is not defined for {}",
                    self.family
                )));
            }
            if !v.is_finite() {
                return Err(Error::BadParams(format!("parameter `{k}` is not finite")));
            }
        }
        if self.chart != self.family.default_chart() {
            return Err(Error::BadParams(format!(
                "{} requires the {:?} chart",
                self.family,
                self.family.default_chart()
            )));
        }
        if self.family == FamilyId::RoundSphere && self.param("r", 1.0) <= 0.0 {
            return Err(Error::BadParams("radius must be positive".into()));
        }
        if self.family == FamilyId::Randers && self.dim == 2 && self.params.contains_key("b3") {
            return Err(Error::BadParams("b3 requires dim = 3".into()));
        }
        Ok(())
    }
}

/// A Finsler structure evaluable on plain reals and on jets.
pub trait FinslerMetric: Send + Sync {
    fn dim(&self) -> usize;

    fn eval(&self, x: &[f64], y: &[f64]) -> f64;

    /// `F` composed with jet-valued coordinates; all jets share one space.
    fn eval_jet(&self, x: &[Jet], y: &[Jet]) -> Jet;

    /// Rejects chart points where derivatives are unreliable.
    fn check_point(&self, _x: &[f64]) -> Result<()> {
        Ok(())
    }

    /// True when `g` is known to be independent of `y`.
    fn is_riemannian(&self) -> bool {
        false
    }

    fn label(&self) -> String;
}

/// An analytic family built from a [`MetricSpec`].
#[derive(Debug, Clone)]
pub struct MetricFamily {
    pub spec: MetricSpec,
    kind: Kind,
}

#[derive(Debug, Clone)]
enum Kind {
    Euclidean,
    Conformal { amp: f64, amp2: f64 },
    Sphere { r: f64 },
    Randers { b: [f64; 3], wave: f64, amp: f64 },
    Perturbed { amp: f64, amp2: f64, eps: f64 },
}

pub fn build_metric(spec: &MetricSpec) -> Result<MetricFamily> {
    spec.validate()?;
    let kind = match spec.family {
        FamilyId::Euclidean => Kind::Euclidean,
        FamilyId::RiemannianTorus => Kind::Conformal {
            amp: spec.param("amp", 0.0),
            amp2: spec.param("amp2", 0.0),
        },
        FamilyId::RoundSphere => Kind::Sphere {
            r: spec.param("r", 1.0),
        },
        FamilyId::Randers => Kind::Randers {
            b: [
                spec.param("b1", 0.0),
                spec.param("b2", 0.0),
                spec.param("b3", 0.0),
            ],
            wave: spec.param("wave", 0.0),
            amp: spec.param("amp", 0.0),
        },
        FamilyId::ConformalPerturbation => Kind::Perturbed {
            amp: spec.param("amp", 0.1),
            amp2: spec.param("amp2", 0.0),
            eps: spec.param("eps", 0.1),
        },
    };
    Ok(MetricFamily {
        spec: spec.clone(),
        kind,
    })
}

fn norm_sq<S: Scalar>(y: &[S]) -> S {
    y[1..].iter().fold(y[0].clone() * y[0].clone(), |acc, v| {
        acc + v.clone() * v.clone()
    })
}

/// `u(x) = a cos x¹ + a₂ sin x²`.
fn conformal_exponent<S: Scalar>(x: &[S], amp: f64, amp2: f64) -> S {
    let mut u = x[0].lift(0.0);
    if amp != 0.0 {
        u = u + x[0].cos() * amp;
    }
    if amp2 != 0.0 {
        u = u + x[1].sin() * amp2;
    }
    u
}

impl MetricFamily {
    /// Shared expression for `F`, generic over the scalar type.
    pub fn evaluate<S: Scalar>(&self, x: &[S], y: &[S]) -> S {
        let n = self.spec.dim;
        match &self.kind {
            Kind::Euclidean => norm_sq(y).sqrt(),
            Kind::Conformal { amp, amp2 } => {
                conformal_exponent(x, *amp, *amp2).exp() * norm_sq(y).sqrt()
            }
            Kind::Sphere { r } => {
                // g = r² (dθ₁² + sin²θ₁ dθ₂² [+ sin²θ₁ sin²θ₂ dφ²])
                let s1 = x[0].sin();
                let mut w = s1.clone() * s1.clone();
                let mut q = y[0].clone() * y[0].clone() + w.clone() * y[1].clone() * y[1].clone();
                if n == 3 {
                    let s2 = x[1].sin();
                    w = w * s2.clone() * s2;
                    q = q + w * y[2].clone() * y[2].clone();
                }
                q.sqrt() * *r
            }
            Kind::Randers { b, wave, amp } => {
                let alpha = conformal_exponent(x, *amp, 0.0).exp() * norm_sq(y).sqrt();
                let mut beta = y[0].lift(0.0);
                for i in 0..n {
                    let mut bi = x[0].lift(b[i]);
                    if *wave != 0.0 {
                        let arg = if i == 0 { &x[1] } else { &x[0] };
                        bi = bi + arg.sin() * *wave;
                    }
                    beta = beta + bi * y[i].clone();
                }
                alpha + beta
            }
            Kind::Perturbed { amp, amp2, eps } => {
                let q = norm_sq(y);
                let quartic = y[1..].iter().fold(
                    y[0].clone() * y[0].clone() * y[0].clone() * y[0].clone(),
                    |acc, v| {
                        let v2 = v.clone() * v.clone();
                        acc + v2.clone() * v2
                    },
                );
                let base = (q.clone() + quartic * *eps / q).sqrt();
                conformal_exponent(x, *amp, *amp2).exp() * base
            }
        }
    }
}

impl FinslerMetric for MetricFamily {
    fn dim(&self) -> usize {
        self.spec.dim
    }

    fn eval(&self, x: &[f64], y: &[f64]) -> f64 {
        self.evaluate(x, y)
    }

    fn eval_jet(&self, x: &[Jet], y: &[Jet]) -> Jet {
        self.evaluate(x, y)
    }

    fn check_point(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.spec.dim || x.iter().any(|v| !v.is_finite()) {
            return Err(Error::ChartBoundary(x.to_vec()));
        }
        if self.spec.chart == Chart::SpherePolar {
            for &theta in &x[..self.spec.dim - 1] {
                if !(POLE_MARGIN..=PI - POLE_MARGIN).contains(&theta) {
                    return Err(Error::ChartBoundary(x.to_vec()));
                }
            }
        }
        Ok(())
    }

    fn is_riemannian(&self) -> bool {
        match &self.kind {
            Kind::Euclidean | Kind::Conformal { .. } | Kind::Sphere { .. } => true,
            Kind::Randers { b, wave, .. } => b.iter().all(|&v| v == 0.0) && *wave == 0.0,
            Kind::Perturbed { eps, .. } => *eps == 0.0,
        }
    }

    fn label(&self) -> String {
        let params: Vec<String> = self
            .spec
            .params
            .iter()
            .map(|(k, v)| format!("{k}={v}"))
            .collect();
        format!(
            "{}[n={}]({})",
            self.spec.family,
            self.spec.dim,
            params.join(",")
        )
    }
}

/// `F(x, y)` as a jet in the `n` fiber variables `y`, with `x` frozen.
pub fn fiber_jet(metric: &dyn FinslerMetric, x: &[f64], y: &[f64], order: usize) -> Jet {
    let n = metric.dim();
    let sp = jet_space(n, order);
    let xs: Vec<Jet> = x.iter().map(|&v| sp.constant(v)).collect();
    let ys: Vec<Jet> = (0..n).map(|i| sp.variable(i, y[i])).collect();
    metric.eval_jet(&xs, &ys)
}

/// Deterministic sample points `(x, y)` in the chart of `spec`.
///
/// Fiber directions for `n = 2` are evenly spaced angles `2πk/count` (so the
/// coordinate axes are always hit); for `n = 3` the signed axes come first,
/// then random unit vectors. Lengths are drawn from `[0.5, 2]`.
pub fn sample_points(spec: &MetricSpec, count: usize, seed: u64) -> Vec<(Vec<f64>, Vec<f64>)> {
    let n = spec.dim;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(count);
    for k in 0..count {
        let x: Vec<f64> = match spec.chart {
            Chart::PeriodicBox => (0..n).map(|_| rng.gen_range(0.0..TAU)).collect(),
            Chart::SpherePolar => (0..n)
                .map(|i| {
                    if i + 1 < n {
                        rng.gen_range(0.3..PI - 0.3)
                    } else {
                        rng.gen_range(0.0..TAU)
                    }
                })
                .collect(),
        };
        let dir: Vec<f64> = if n == 2 {
            let th = TAU * k as f64 / count as f64;
            vec![th.cos(), th.sin()]
        } else if k < 2 * n {
            let mut d = vec![0.0; n];
            d[k / 2] = if k % 2 == 0 { 1.0 } else { -1.0 };
            d
        } else {
            loop {
                let d: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
                let r = d.iter().map(|v| v * v).sum::<f64>().sqrt();
                if r > 0.1 && r <= 1.0 {
                    break d.iter().map(|v| v / r).collect();
                }
            }
        };
        let scale = rng.gen_range(0.5..2.0);
        out.push((x, dir.iter().map(|v| v * scale).collect()));
    }
    out
}

#[derive(Debug, Clone, Serialize)]
pub struct ValidationReport {
    pub samples: usize,
    /// `max |yⁱ ∂F/∂yⁱ − F|`
    pub euler_residual: f64,
    /// `max |F(x, λy) − λF(x, y)| / (λF)` over `λ ∈ {0.5, 2, 7}`
    pub homogeneity_residual: f64,
    pub min_eigenvalue: f64,
    pub max_eigenvalue: f64,
    /// `max |g_ij yⁱ yʲ − F²|`
    pub quadratic_residual: f64,
}

/// Sampled check of positivity, homogeneity and strong convexity.
pub fn validate_metric(metric: &MetricFamily, sample_count: usize) -> Result<ValidationReport> {
    validate_with(metric, &metric.spec, sample_count, 0x5eed)
}

pub fn validate_with(
    metric: &dyn FinslerMetric,
    spec: &MetricSpec,
    sample_count: usize,
    seed: u64,
) -> Result<ValidationReport> {
    if sample_count == 0 {
        return Err(Error::Config("sample_count must be at least 1".into()));
    }
    let n = metric.dim();
    let mut rep = ValidationReport {
        samples: sample_count,
        euler_residual: 0.0,
        homogeneity_residual: 0.0,
        min_eigenvalue: f64::INFINITY,
        max_eigenvalue: 0.0,
        quadratic_residual: 0.0,
    };
    for (x, y) in sample_points(spec, sample_count, seed) {
        metric.check_point(&x)?;
        let f = fiber_jet(metric, &x, &y, 2);
        let fv = f.value();
        if !(fv > 0.0) {
            return Err(Error::DegenerateMetric(format!(
                "F = {fv:e} is not positive at x = {x:?}, y = {y:?}"
            )));
        }
        let mut euler = 0.0;
        let mut unit = vec![0u8; n];
        for i in 0..n {
            unit[i] = 1;
            euler += y[i] * f.derivative(&unit);
            unit[i] = 0;
        }
        rep.euler_residual = rep.euler_residual.max((euler - fv).abs());
        for lambda in [0.5, 2.0, 7.0] {
            let ly: Vec<f64> = y.iter().map(|v| v * lambda).collect();
            let err = (metric.eval(&x, &ly) - lambda * fv).abs() / (lambda * fv);
            rep.homogeneity_residual = rep.homogeneity_residual.max(err);
        }
        let f2 = &f * &f;
        let g = DMatrix::from_fn(n, n, |i, j| {
            let mut e = vec![0u8; n];
            e[i] += 1;
            e[j] += 1;
            0.5 * f2.derivative(&e)
        });
        let quad: f64 = (0..n)
            .flat_map(|i| (0..n).map(move |j| (i, j)))
            .map(|(i, j)| g[(i, j)] * y[i] * y[j])
            .sum();
        rep.quadratic_residual = rep.quadratic_residual.max((quad - fv * fv).abs());
        let eig = g.symmetric_eigenvalues();
        let lo = eig.min();
        let hi = eig.max();
        rep.min_eigenvalue = rep.min_eigenvalue.min(lo);
        rep.max_eigenvalue = rep.max_eigenvalue.max(hi);
        if lo <= DEGENERACY_RTOL * hi.abs() {
            return Err(Error::DegenerateMetric(format!(
                "fundamental tensor eigenvalue {lo:e} (max {hi:e}) at x = {x:?}, y = {y:?}"
            )));
        }
    }
    Ok(rep)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn euclidean_is_norm() {
        let m = build_metric(&MetricSpec::new(FamilyId::Euclidean, 2)).unwrap();
        assert_eq!(m.eval(&[0.3, 1.0], &[3.0, 4.0]), 5.0);
        let rep = validate_metric(&m, 50).unwrap();
        assert!(rep.euler_residual < 1e-12);
        assert!((rep.min_eigenvalue - 1.0).abs() < 1e-12);
    }

    #[test]
    fn sphere_quadratic_identity() {
        let spec = MetricSpec::new(FamilyId::RoundSphere, 2).with("r", 2.0);
        let m = build_metric(&spec).unwrap();
        let rep = validate_metric(&m, 100).unwrap();
        assert!(rep.quadratic_residual < 1e-10);
    }

    #[test]
    fn randers_half_drift_is_convex() {
        let spec = MetricSpec::new(FamilyId::Randers, 2).with("b1", 0.5);
        let rep = validate_metric(&build_metric(&spec).unwrap(), 64).unwrap();
        assert!(rep.min_eigenvalue > 0.0);
    }

    #[test]
    fn randers_unit_drift_degenerates() {
        let spec = MetricSpec::new(FamilyId::Randers, 2).with("b1", 1.0);
        let err = validate_metric(&build_metric(&spec).unwrap(), 64).unwrap_err();
        assert!(matches!(err, Error::DegenerateMetric(_)), "{err}");
    }

    #[test]
    fn randers_zero_drift_reduces_to_alpha() {
        let r = build_metric(&MetricSpec::new(FamilyId::Randers, 2).with("amp", 0.2)).unwrap();
        let a =
            build_metric(&MetricSpec::new(FamilyId::RiemannianTorus, 2).with("amp", 0.2)).unwrap();
        let spec = MetricSpec::new(FamilyId::RiemannianTorus, 2);
        for (x, y) in sample_points(&spec, 1000, 11) {
            assert_eq!(r.eval(&x, &y), a.eval(&x, &y));
        }
    }

    #[test]
    fn rejects_bad_specs() {
        let bad_r = MetricSpec::new(FamilyId::RoundSphere, 2).with("r", -1.0);
        assert!(matches!(build_metric(&bad_r), Err(Error::BadParams(_))));
        let unknown = MetricSpec::new(FamilyId::Euclidean, 2).with("zeta", 1.0);
        assert!(matches!(build_metric(&unknown), Err(Error::BadParams(_))));
        assert!(matches!(
            MetricSpec::from_shorthand("hyperbolic"),
            Err(Error::UnknownFamily(_))
        ));
        assert!(matches!(
            build_metric(&MetricSpec::new(FamilyId::Euclidean, 4)),
            Err(Error::BadParams(_))
        ));
    }

    #[test]
    fn strict_json() {
        let ok = r#"{"family":"round_sphere","dim":2,"params":{"r":2.0},"chart":"sphere_polar"}"#;
        let spec = MetricSpec::from_json(ok).unwrap();
        assert_eq!(MetricSpec::from_json(&spec.to_json()).unwrap(), spec);
        let extra = r#"{"family":"euclidean","dim":2,"params":{},"chart":"periodic_box","x":1}"#;
        assert!(MetricSpec::from_json(extra).is_err());
        assert!(
            MetricSpec::from_json(r#"{"family":"nope","dim":2,"chart":"periodic_box"}"#).is_err()
        );
    }

    #[test]
    fn shorthand() {
        let s = MetricSpec::from_shorthand("sphere:r=2").unwrap();
        assert_eq!(s.family, FamilyId::RoundSphere);
        assert_eq!(s.param("r", 0.0), 2.0);
        let s = MetricSpec::from_shorthand("randers:b=0.3,dim=3").unwrap();
        assert_eq!(s.dim, 3);
        assert_eq!(s.param("b1", 0.0), 0.3);
    }

    #[test]
    fn poles_rejected() {
        let m = build_metric(&MetricSpec::new(FamilyId::RoundSphere, 2)).unwrap();
        assert!(m.check_point(&[0.01, 1.0]).is_err());
        assert!(m.check_point(&[PI - 0.01, 1.0]).is_err());
        assert!(m.check_point(&[1.0, 1.0]).is_ok());
    }
}
