//! Pointwise residuals of the curvature evolution identities along the flow.
//!
//! Time derivatives are central differences over three metrics at
//! `t − dt, t, t + dt` ([`TimeSlices`]); these can come from the closed-form
//! homothety solution, from grid states, or from [`FlowPerturbed`], which
//! follows the exact flow direction `∂t log F = −Ric` to second order.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::flow::{reconstruct_metric, GridState, Homothetic};
use crate::geometry::{coordinate_completion, PointJets};
use crate::indicatrix::{hessian_from_jets, indicatrix_curve};
use crate::jet::Jet;
use crate::metric::FinslerMetric;

/// Three metrics around time `t` spaced by `dt`.
#[derive(Clone)]
pub struct TimeSlices {
    pub t: f64,
    pub dt: f64,
    pub prev: Arc<dyn FinslerMetric>,
    pub cur: Arc<dyn FinslerMetric>,
    pub next: Arc<dyn FinslerMetric>,
}

impl TimeSlices {
    /// `F = r(t) F_model` with `r(t)² = r₀² − 2κt`.
    pub fn homothety(
        model: Arc<dyn FinslerMetric>,
        r0: f64,
        kappa: f64,
        t: f64,
        dt: f64,
    ) -> Result<Self> {
        let at = |s: f64| -> Result<Arc<dyn FinslerMetric>> {
            let r2 = r0 * r0 - 2.0 * kappa * s;
            if r2 <= 0.0 {
                return Err(Error::Extinction {
                    t: r0 * r0 / (2.0 * kappa),
                });
            }
            Ok(Arc::new(Homothetic {
                model: model.clone(),
                r: r2.sqrt(),
            }))
        };
        Ok(TimeSlices {
            t,
            dt,
            prev: at(t - dt)?,
            cur: at(t)?,
            next: at(t + dt)?,
        })
    }

    /// Consecutive grid states of one run.
    pub fn from_grid(prev: &GridState, cur: &GridState, next: &GridState) -> Result<Self> {
        let dt = next.t - cur.t;
        if !(dt > 0.0) || ((cur.t - prev.t) - dt).abs() > 1e-12 * dt.max(1.0) {
            return Err(Error::Config(
                "grid states must be equally spaced in time".into(),
            ));
        }
        Ok(TimeSlices {
            t: cur.t,
            dt,
            prev: Arc::new(reconstruct_metric(prev)?),
            cur: Arc::new(reconstruct_metric(cur)?),
            next: Arc::new(reconstruct_metric(next)?),
        })
    }

    /// `F·exp(∓ε Ric)` around `F` at `t = 0`, which matches the flow
    /// through `F` up to terms that cancel in central differences.
    pub fn infinitesimal(metric: Arc<dyn FinslerMetric>, eps: f64) -> Self {
        TimeSlices {
            t: 0.0,
            dt: eps,
            prev: Arc::new(FlowPerturbed {
                base: metric.clone(),
                eps: -eps,
            }),
            cur: metric.clone(),
            next: Arc::new(FlowPerturbed { base: metric, eps }),
        }
    }

    fn ddt(&self, q: impl Fn(&dyn FinslerMetric) -> Result<f64>) -> Result<f64> {
        Ok((q(self.next.as_ref())? - q(self.prev.as_ref())?) / (2.0 * self.dt))
    }
}

/// `F(x, y) exp(−ε Ric_F(x, y))`.
pub struct FlowPerturbed {
    pub base: Arc<dyn FinslerMetric>,
    pub eps: f64,
}

impl FinslerMetric for FlowPerturbed {
    fn dim(&self) -> usize {
        self.base.dim()
    }

    fn eval(&self, x: &[f64], y: &[f64]) -> f64 {
        let ric = PointJets::new(self.base.as_ref(), x, y, 4)
            .map(|pj| pj.ric_jet().value())
            .unwrap_or(f64::NAN);
        self.base.eval(x, y) * (-self.eps * ric).exp()
    }

    fn eval_jet(&self, x: &[Jet], y: &[Jet]) -> Jet {
        let ord = y[0].order();
        let x0: Vec<f64> = x.iter().map(|j| j.value()).collect();
        let y0: Vec<f64> = y.iter().map(|j| j.value()).collect();
        let f = self.base.eval_jet(x, y);
        let ric = match PointJets::new(self.base.as_ref(), &x0, &y0, ord + 4) {
            Ok(pj) => pj.ric_jet(),
            Err(_) => return f.lift(f64::NAN),
        };
        let subs: Vec<Option<Jet>> = x.iter().chain(y).map(|j| Some(j - j.value())).collect();
        let ric = ric.substitute(&subs);
        f * (ric * -self.eps).exp()
    }

    fn check_point(&self, x: &[f64]) -> Result<()> {
        self.base.check_point(x)
    }

    fn label(&self) -> String {
        format!("{} flowed by {}", self.base.label(), self.eps)
    }
}

/// Two sides of an evolution identity at one sample.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Residual {
    pub lhs: f64,
    pub rhs: f64,
}

impl Residual {
    pub fn abs(&self) -> f64 {
        (self.lhs - self.rhs).abs()
    }

    pub fn scale(&self) -> f64 {
        self.lhs.abs().max(self.rhs.abs())
    }
}

struct Curv {
    f2: f64,
    g: DMatrix<f64>,
    ginv: DMatrix<f64>,
    /// `R_jk = g_ji Rⁱ_k`
    r_low: DMatrix<f64>,
    /// `Rⁱ_k`
    r: DMatrix<f64>,
    ric: f64,
}

fn curvature(metric: &dyn FinslerMetric, x: &[f64], y: &[f64]) -> Result<Curv> {
    let pj = PointJets::new(metric, x, y, 4)?;
    let n = pj.n;
    let rj = pj.reduced_curvature_jets();
    let r = DMatrix::from_fn(n, n, |i, k| rj[i * n + k].value());
    let g = pj.g();
    Ok(Curv {
        f2: pj.f2().value(),
        r_low: &g * &r,
        ginv: pj.ginv(),
        ric: r.trace(),
        g,
        r,
    })
}

fn ricci_tensor(metric: &dyn FinslerMetric, x: &[f64], y: &[f64]) -> Result<DMatrix<f64>> {
    crate::geometry::ricci_tensor_az1(metric, x, y)
}

fn bilinear(m: &DMatrix<f64>, a: &[f64], b: &[f64]) -> f64 {
    DVector::from_column_slice(a).dot(&(m * DVector::from_column_slice(b)))
}

/// g-orthonormal frame `{l, e₁, …, e_{n−1}}` at `(x, y)`.
fn frame(g: &DMatrix<f64>, y: &[f64]) -> Vec<Vec<f64>> {
    let f = bilinear(g, y, y).sqrt();
    let mut out = vec![y.iter().map(|v| v / f).collect::<Vec<f64>>()];
    out.extend(
        coordinate_completion(g, y)
            .iter()
            .map(|e| e.iter().copied().collect()),
    );
    out
}

/// `∂t (F² R(Z, X))` against `−2 Σ_k F² R(e_k, X) Ric(e_k, Z)` for fixed
/// vectors `Z`, `X`.
pub fn hh_evolution_residual(
    s: &TimeSlices,
    z: &[f64],
    xv: &[f64],
    x: &[f64],
    y: &[f64],
) -> Result<Residual> {
    let rbar = |m: &dyn FinslerMetric| -> Result<f64> {
        let c = curvature(m, x, y)?;
        Ok(c.f2 * bilinear(&c.r_low, z, xv))
    };
    let lhs = s.ddt(rbar)?;
    let c = curvature(s.cur.as_ref(), x, y)?;
    let ric = ricci_tensor(s.cur.as_ref(), x, y)?;
    let mut rhs = 0.0;
    for e in frame(&c.g, y) {
        rhs += c.f2 * bilinear(&c.r_low, &e, xv) * bilinear(&ric, &e, z);
    }
    Ok(Residual {
        lhs,
        rhs: -2.0 * rhs,
    })
}

/// The same identity with `Z = X = V`, `V` the first vector of the
/// orthonormal completion of `l` at the current time.
pub fn transverse_evolution_residual(s: &TimeSlices, x: &[f64], y: &[f64]) -> Result<Residual> {
    let c = curvature(s.cur.as_ref(), x, y)?;
    let v = frame(&c.g, y)[1].clone();
    hh_evolution_residual(s, &v, &v, x, y)
}

/// `∂t (F² Ric)` against `−2F² R^{ij} Ric_ij`.
pub fn traced_evolution_residual(s: &TimeSlices, x: &[f64], y: &[f64]) -> Result<Residual> {
    let lhs = s.ddt(|m| {
        let c = curvature(m, x, y)?;
        Ok(c.f2 * c.ric)
    })?;
    let c = curvature(s.cur.as_ref(), x, y)?;
    let ric = ricci_tensor(s.cur.as_ref(), x, y)?;
    let r_upper = &c.r * &c.ginv;
    let rhs = -2.0 * c.f2 * r_upper.component_mul(&ric).sum();
    Ok(Residual { lhs, rhs })
}

/// Terms of the Ricci scalar evolution at the indicatrix point `y(θ)` of
/// the current metric.
#[derive(Debug, Clone, Serialize)]
pub struct RicciEvolution {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub ric: f64,
    /// `∂t Ric` by central differences.
    pub dt_ric: f64,
    /// `−F² R^{ij} ∂_i∂_j Ric`.
    pub ambient: f64,
    /// `−F² R^{αβ} ∇̇_α∂_β Ric + H^λ ∂_λ Ric`.
    pub sphere_bundle: f64,
    /// Residual of the product-rule Hessian identity on the indicatrix.
    pub hessian_identity: f64,
    /// Gap between the product-rule Hessian and the Levi-Civita Hessian of
    /// the induced metric.
    pub levi_civita_gap: f64,
}

impl RicciEvolution {
    pub fn ambient_residual(&self) -> f64 {
        (self.dt_ric - self.ambient).abs()
    }

    pub fn sphere_bundle_residual(&self) -> f64 {
        (self.dt_ric - self.sphere_bundle).abs()
    }

    pub fn conversion_residual(&self) -> f64 {
        (self.ambient - self.sphere_bundle).abs()
    }

    /// `∂t Ric − (sphere-bundle operator − Ric²)`; the inequality asks for
    /// this to be nonnegative.
    pub fn inequality_margin(&self) -> f64 {
        self.dt_ric - (self.sphere_bundle - self.ric * self.ric)
    }
}

pub fn ricci_evolution(s: &TimeSlices, x: &[f64], theta: &[f64]) -> Result<RicciEvolution> {
    let cur = s.cur.as_ref();
    let curve = indicatrix_curve(cur, x, theta, 2)?;
    let y: Vec<f64> = curve.iter().map(|c| c.value()).collect();
    let pj = PointJets::new(cur, x, &y, 6)?;
    let h = hessian_from_jets(&pj, theta, &curve)?;
    let dt_ric = s.ddt(|m| Ok(curvature(m, x, &y)?.ric))?;
    Ok(RicciEvolution {
        x: x.to_vec(),
        ric: h.ric,
        dt_ric,
        ambient: h.ambient_operator(),
        sphere_bundle: h.sphere_operator(),
        hessian_identity: h.residual(),
        levi_civita_gap: h.levi_civita_gap(),
        y,
    })
}

/// `F² R(V, V)` for a fixed vector `V`.
pub fn transverse_curvature(
    metric: &dyn FinslerMetric,
    x: &[f64],
    y: &[f64],
    v: &[f64],
) -> Result<f64> {
    let c = curvature(metric, x, y)?;
    Ok(c.f2 * bilinear(&c.r_low, v, v))
}

/// First vector of the orthonormal completion of `l` at `(x, y)`.
pub fn transverse_vector(metric: &dyn FinslerMetric, x: &[f64], y: &[f64]) -> Result<Vec<f64>> {
    let c = curvature(metric, x, y)?;
    Ok(frame(&c.g, y)[1].clone())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metric::{build_metric, FamilyId, MetricSpec};

    #[test]
    fn homothety_sphere_hh_evolution_is_exact() {
        let model: Arc<dyn FinslerMetric> =
            Arc::new(build_metric(&MetricSpec::new(FamilyId::RoundSphere, 2)).unwrap());
        let s = TimeSlices::homothety(model, 1.0, 1.0, 0.1, 1e-3).unwrap();
        let r =
            hh_evolution_residual(&s, &[1.0, 0.0], &[1.0, 0.0], &[1.0, 0.5], &[0.3, 0.7]).unwrap();
        assert!(r.abs() < 1e-9 * r.scale(), "{r:?}");
        assert!(r.scale() > 0.1);
    }

    #[test]
    fn infinitesimal_flow_matches_homothety() {
        // on the sphere both contexts describe the same flow
        let m = Arc::new(build_metric(&MetricSpec::new(FamilyId::RoundSphere, 2)).unwrap());
        let inf = TimeSlices::infinitesimal(m.clone(), 1e-3);
        let hom = TimeSlices::homothety(m, 1.0, 1.0, 0.0, 1e-3).unwrap();
        let (x, y) = ([1.0, 0.5], [0.3, 0.7]);
        let a = traced_evolution_residual(&inf, &x, &y).unwrap();
        let b = traced_evolution_residual(&hom, &x, &y).unwrap();
        assert!((a.lhs - b.lhs).abs() < 1e-6, "{a:?} {b:?}");
        let ea = ricci_evolution(&inf, &x, &[0.4]).unwrap();
        // ∂t Ric = 2 Ric² on the unit sphere
        assert!((ea.dt_ric - 2.0).abs() < 1e-5, "{}", ea.dt_ric);
    }
}
