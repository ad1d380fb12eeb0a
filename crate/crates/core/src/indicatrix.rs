//! Geometry of the indicatrix `S_x M = {y : F(x, y) = 1}` in angle charts.
//!
//! For `n = 2` the chart is `θ ↦ e(θ) = (cos θ, sin θ)`, for `n = 3` it is
//! polar `(a, b) ↦ (sin a cos b, sin a sin b, cos a)`. Points on the
//! indicatrix are `y(θ) = e(θ)/F(x, e(θ))`; all derivatives along the chart
//! are exact Taylor coefficients of jets in the angle variables.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::geometry::{PointJets, Tensor};
use crate::jet::{jet_space, Jet};
use crate::metric::FinslerMetric;

pub use crate::geometry::ORTHOGONALITY_TOL;

/// Unit direction `e(θ)` for `θ` of length `n − 1`.
pub fn direction(theta: &[f64]) -> Vec<f64> {
    match theta.len() {
        1 => vec![theta[0].cos(), theta[0].sin()],
        2 => {
            let (a, b) = (theta[0], theta[1]);
            vec![a.sin() * b.cos(), a.sin() * b.sin(), a.cos()]
        }
        k => panic!("angle charts exist for n = 2, 3 only (got {} angles)", k),
    }
}

/// Inverse of [`direction`] up to scale.
pub fn angles_of(y: &[f64]) -> Vec<f64> {
    match y.len() {
        2 => vec![y[1].atan2(y[0])],
        3 => {
            let r = (y[0] * y[0] + y[1] * y[1] + y[2] * y[2]).sqrt();
            vec![(y[2] / r).clamp(-1.0, 1.0).acos(), y[1].atan2(y[0])]
        }
        k => panic!("angle charts exist for n = 2, 3 only (got n = {k})"),
    }
}

fn direction_jets(theta: &[f64], order: usize) -> Vec<Jet> {
    let sp = jet_space(theta.len(), order);
    match theta.len() {
        1 => {
            let t = sp.variable(0, theta[0]);
            vec![t.cos(), t.sin()]
        }
        2 => {
            let a = sp.variable(0, theta[0]);
            let b = sp.variable(1, theta[1]);
            let sa = a.sin();
            vec![&sa * &b.cos(), &sa * &b.sin(), a.cos()]
        }
        k => panic!("angle charts exist for n = 2, 3 only (got {} angles)", k),
    }
}

fn check_angles(metric: &dyn FinslerMetric, theta: &[f64]) -> Result<()> {
    let n = metric.dim();
    if !(2..=3).contains(&n) || theta.len() != n - 1 {
        return Err(Error::Config(format!(
            "indicatrix charts need n in {{2, 3}} and n − 1 angles (n = {n}, {} angles)",
            theta.len()
        )));
    }
    if n == 3 && theta[0].sin().abs() < 1e-6 {
        return Err(Error::ChartBoundary(theta.to_vec()));
    }
    Ok(())
}

/// Jets in the angle variables of `y(θ) = e(θ)/F(x, e(θ))`.
pub fn indicatrix_curve(
    metric: &dyn FinslerMetric,
    x: &[f64],
    theta: &[f64],
    order: usize,
) -> Result<Vec<Jet>> {
    check_angles(metric, theta)?;
    metric.check_point(x)?;
    let e = direction_jets(theta, order);
    let xs: Vec<Jet> = x.iter().map(|&v| e[0].lift(v)).collect();
    let f = metric.eval_jet(&xs, &e);
    if !(f.value() > 0.0) || !f.is_finite() {
        return Err(Error::DegenerateMetric(format!(
            "F = {:e} at x = {x:?}, θ = {theta:?}",
            f.value()
        )));
    }
    let inv = f.recip();
    Ok(e.iter().map(|c| c * &inv).collect())
}

pub fn indicatrix_point(metric: &dyn FinslerMetric, x: &[f64], theta: &[f64]) -> Result<Vec<f64>> {
    check_angles(metric, theta)?;
    metric.check_point(x)?;
    let e = direction(theta);
    let f = metric.eval(x, &e);
    if !(f > 0.0) || !f.is_finite() {
        return Err(Error::DegenerateMetric(format!(
            "F = {f:e} at x = {x:?}, θ = {theta:?}"
        )));
    }
    Ok(e.iter().map(|c| c / f).collect())
}

/// Tangent frame of the indicatrix at `y(θ)`.
#[derive(Debug, Clone)]
pub struct IndicatrixFrame {
    pub theta: Vec<f64>,
    pub y: Vec<f64>,
    /// `y_α = ∂y/∂θ^α`, one vector per angle.
    pub tangents: Vec<Vec<f64>>,
    /// Second derivatives `y_αβ`, row-major over `(α, β)`.
    pub second: Vec<Vec<f64>>,
    /// Fundamental tensor `g_ij(x, y(θ))`.
    pub g: DMatrix<f64>,
    /// Induced metric `g_αβ = g(y_α, y_β)`.
    pub induced: DMatrix<f64>,
    /// Dual covectors `y^λ_k = g^{λμ} g_kj y^j_μ`, satisfying
    /// `y^λ_k y^k_μ = δ^λ_μ` and `y^λ_k y^k = 0`.
    pub dual: Vec<Vec<f64>>,
    /// `max_α |g(y, y_α)|`.
    pub orthogonality: f64,
}

impl IndicatrixFrame {
    pub fn dim(&self) -> usize {
        self.y.len() - 1
    }
}

fn frame_from_parts(theta: &[f64], curve: &[Jet], g: DMatrix<f64>) -> Result<IndicatrixFrame> {
    let n = curve.len();
    let m = n - 1;
    let unit = |a: usize| -> Vec<u8> {
        let mut e = vec![0u8; m];
        e[a] += 1;
        e
    };
    let y: Vec<f64> = curve.iter().map(|c| c.value()).collect();
    let tangents: Vec<Vec<f64>> = (0..m)
        .map(|a| curve.iter().map(|c| c.derivative(&unit(a))).collect())
        .collect();
    let mut second = Vec::with_capacity(m * m);
    for a in 0..m {
        for b in 0..m {
            let mut e = unit(a);
            e[b] += 1;
            second.push(curve.iter().map(|c| c.derivative(&e)).collect());
        }
    }
    let tv: Vec<DVector<f64>> = tangents
        .iter()
        .map(|t| DVector::from_column_slice(t))
        .collect();
    let yv = DVector::from_column_slice(&y);
    let induced = DMatrix::from_fn(m, m, |a, b| tv[a].dot(&(&g * &tv[b])));
    let inv = induced.clone().try_inverse().ok_or_else(|| {
        Error::DegenerateMetric(format!("induced metric singular at θ = {theta:?}"))
    })?;
    let lowered: Vec<DVector<f64>> = tv.iter().map(|t| &g * t).collect();
    let dual = (0..m)
        .map(|l| {
            let mut d = DVector::zeros(n);
            for (mu, low) in lowered.iter().enumerate() {
                d += low * inv[(l, mu)];
            }
            d.iter().copied().collect()
        })
        .collect();
    let gy = &g * &yv;
    let orthogonality = tv.iter().map(|t| gy.dot(t).abs()).fold(0.0, f64::max);
    Ok(IndicatrixFrame {
        theta: theta.to_vec(),
        y,
        tangents,
        second,
        g,
        induced,
        dual,
        orthogonality,
    })
}

/// Tangent frame at `y(θ)`; fails with [`Error::NotOrthogonal`] when
/// `g(y, y_α)` exceeds [`ORTHOGONALITY_TOL`].
pub fn indicatrix_basis(
    metric: &dyn FinslerMetric,
    x: &[f64],
    theta: &[f64],
) -> Result<IndicatrixFrame> {
    let curve = indicatrix_curve(metric, x, theta, 2)?;
    let y: Vec<f64> = curve.iter().map(|c| c.value()).collect();
    let pj = PointJets::new(metric, x, &y, 2)?;
    let frame = frame_from_parts(theta, &curve, pj.g())?;
    if frame.orthogonality > ORTHOGONALITY_TOL {
        return Err(Error::NotOrthogonal(frame.orthogonality));
    }
    Ok(frame)
}

/// Frame plus the Cartan data needed by the second-order identities.
struct Setting {
    frame: IndicatrixFrame,
    /// `A^i_jk = F C^i_jk` (with `F = 1` on the indicatrix).
    a: Tensor,
    /// Christoffel symbols `Γ̃^γ_αβ` of the induced metric, index `(γ, α, β)`.
    gamma: Vec<f64>,
}

fn contract3(t: &Tensor, u: &[f64], v: &[f64]) -> Vec<f64> {
    let n = t.n;
    (0..n)
        .map(|i| {
            let mut s = 0.0;
            for j in 0..n {
                for k in 0..n {
                    s += t.get(&[i, j, k]) * u[j] * v[k];
                }
            }
            s
        })
        .collect()
}

fn setting(pj: &PointJets, theta: &[f64], curve: &[Jet]) -> Result<Setting> {
    let n = pj.n;
    let m = n - 1;
    let frame = frame_from_parts(theta, curve, pj.g())?;
    let f = pj.f();
    let cart = pj.cartan_jets();
    let a = Tensor {
        n,
        rank: 3,
        data: cart.iter().map(|c| f * c.value()).collect(),
    };
    let c_low = Tensor {
        n,
        rank: 3,
        data: pj.cartan_lower_jets().iter().map(|c| c.value()).collect(),
    };
    let g = &frame.g;
    let t = &frame.tangents;
    let s = &frame.second;
    let gdot = |u: &[f64], v: &[f64]| {
        DVector::from_column_slice(u).dot(&(g * DVector::from_column_slice(v)))
    };
    // ∂_μ g_αβ = 2C(y_μ, y_α, y_β) + g(y_μα, y_β) + g(y_α, y_μβ)
    let dmetric = |mu: usize, al: usize, be: usize| {
        let c = contract3(&c_low, &t[al], &t[be]);
        let cterm: f64 = c.iter().zip(&t[mu]).map(|(a, b)| a * b).sum();
        2.0 * cterm + gdot(&s[mu * m + al], &t[be]) + gdot(&t[al], &s[mu * m + be])
    };
    let inv = frame
        .induced
        .clone()
        .try_inverse()
        .expect("checked in frame");
    let mut gamma = vec![0.0; m * m * m];
    for ga in 0..m {
        for al in 0..m {
            for be in 0..m {
                let mut v = 0.0;
                for de in 0..m {
                    let low =
                        0.5 * (dmetric(al, de, be) + dmetric(be, de, al) - dmetric(de, al, be));
                    v += inv[(ga, de)] * low;
                }
                gamma[(ga * m + al) * m + be] = v;
            }
        }
    }
    Ok(Setting { frame, a, gamma })
}

impl Setting {
    /// `∇̇_α y_β = y_αβ − Γ̃^γ_αβ y_γ`.
    fn covariant_second(&self, al: usize, be: usize) -> Vec<f64> {
        let m = self.frame.dim();
        let mut out = self.frame.second[al * m + be].clone();
        for ga in 0..m {
            let c = self.gamma[(ga * m + al) * m + be];
            for (o, t) in out.iter_mut().zip(&self.frame.tangents[ga]) {
                *o -= c * t;
            }
        }
        out
    }
}

/// Residual of the Gauss formula `∇̇_α y_β = −A(y_α, y_β) − g_αβ y` at `y(θ)`,
/// maximised over `α, β` and components.
pub fn gauss_formula_residual(metric: &dyn FinslerMetric, x: &[f64], theta: &[f64]) -> Result<f64> {
    let curve = indicatrix_curve(metric, x, theta, 2)?;
    let y: Vec<f64> = curve.iter().map(|c| c.value()).collect();
    let pj = PointJets::new(metric, x, &y, 3)?;
    let st = setting(&pj, theta, &curve)?;
    let m = st.frame.dim();
    let mut worst: f64 = 0.0;
    for al in 0..m {
        for be in 0..m {
            let lhs = st.covariant_second(al, be);
            let ayy = contract3(&st.a, &st.frame.tangents[al], &st.frame.tangents[be]);
            let gab = st.frame.induced[(al, be)];
            for i in 0..y.len() {
                let rhs = -ayy[i] - gab * y[i];
                worst = worst.max((lhs[i] - rhs).abs());
            }
        }
    }
    Ok(worst)
}

/// Second-order data of `Ric` on the indicatrix at `y(θ)`.
#[derive(Debug, Clone)]
pub struct IndicatrixHessian {
    pub frame: IndicatrixFrame,
    pub ric: f64,
    /// Ambient gradient `∂Ric/∂y^k`.
    pub grad: Vec<f64>,
    /// Ambient Hessian `∂²Ric/∂y^i∂y^j`.
    pub ambient_hessian: DMatrix<f64>,
    /// `∂_λ Ric`, the derivative along the angle chart.
    pub d_ric: Vec<f64>,
    /// `∇̇_α ∂_β Ric` from the product rule
    /// `(∇̇_α y_β)^j ∂_j Ric + y^j_β (∂_α ∂_j Ric − C^k_ji y^i_α ∂_k Ric)`.
    pub lhs: DMatrix<f64>,
    /// `F² y^i_α y^j_β ∂_i∂_j Ric − 2F A^k_ij y^i_α y^j_β ∂_k Ric`.
    pub rhs: DMatrix<f64>,
    /// Levi-Civita Hessian of `Ric` for the induced metric,
    /// `∂_α∂_β Ric − Γ̃^γ_αβ ∂_γ Ric`.
    pub intrinsic: DMatrix<f64>,
    /// `R^{ij} = Rⁱ_k g^{kj}`.
    pub r_upper: DMatrix<f64>,
    /// `A^k_ij` at the point.
    pub a: Tensor,
}

impl IndicatrixHessian {
    /// `max |lhs − rhs|`.
    pub fn residual(&self) -> f64 {
        (&self.lhs - &self.rhs).amax()
    }

    /// `max |intrinsic − lhs|`; equals `max |A(y_α, y_β)·∇Ric|` in exact arithmetic.
    pub fn levi_civita_gap(&self) -> f64 {
        (&self.intrinsic - &self.lhs).amax()
    }

    /// `R^{αβ} = F⁻² R^{ij} y^α_i y^β_j`.
    pub fn r_tangent(&self) -> DMatrix<f64> {
        let m = self.frame.dim();
        let f2 = self.f2();
        DMatrix::from_fn(m, m, |a, b| {
            let da = DVector::from_column_slice(&self.frame.dual[a]);
            let db = DVector::from_column_slice(&self.frame.dual[b]);
            da.dot(&(&self.r_upper * db)) / f2
        })
    }

    fn f2(&self) -> f64 {
        let y = DVector::from_column_slice(&self.frame.y);
        y.dot(&(&self.frame.g * &y))
    }

    /// `H^λ = −2 A^k_ij R^{ij} y^λ_k`.
    pub fn h_vector(&self) -> Vec<f64> {
        let n = self.frame.y.len();
        let mut ar = vec![0.0; n];
        for (k, v) in ar.iter_mut().enumerate() {
            for i in 0..n {
                for j in 0..n {
                    *v += self.a.get(&[k, i, j]) * self.r_upper[(i, j)];
                }
            }
        }
        self.frame
            .dual
            .iter()
            .map(|d| -2.0 * d.iter().zip(&ar).map(|(a, b)| a * b).sum::<f64>())
            .collect()
    }

    /// `−F² R^{ij} ∂_i∂_j Ric` in ambient coordinates.
    pub fn ambient_operator(&self) -> f64 {
        -self.f2() * self.r_upper.component_mul(&self.ambient_hessian).sum()
    }

    /// `−F² R^{αβ} ∇̇_α∂_β Ric + H^λ ∂_λ Ric` on the indicatrix.
    pub fn sphere_operator(&self) -> f64 {
        let rt = self.r_tangent();
        let h = self.h_vector();
        -self.f2() * rt.component_mul(&self.lhs).sum()
            + h.iter().zip(&self.d_ric).map(|(a, b)| a * b).sum::<f64>()
    }
}

/// Hessian data of `Ric` at `y(θ)`; needs sixth derivatives of `F²`.
pub fn sm_hessian_ric(
    metric: &dyn FinslerMetric,
    x: &[f64],
    theta: &[f64],
) -> Result<IndicatrixHessian> {
    let curve = indicatrix_curve(metric, x, theta, 2)?;
    let y: Vec<f64> = curve.iter().map(|c| c.value()).collect();
    let pj = PointJets::new(metric, x, &y, 6)?;
    hessian_from_jets(&pj, theta, &curve)
}

pub(crate) fn hessian_from_jets(
    pj: &PointJets,
    theta: &[f64],
    curve: &[Jet],
) -> Result<IndicatrixHessian> {
    let n = pj.n;
    let m = n - 1;
    let st = setting(pj, theta, curve)?;
    let ric = pj.ric_jet();
    let grad_jets: Vec<Jet> = (0..n).map(|k| ric.d(pj.yvar(k))).collect();
    let grad: Vec<f64> = grad_jets.iter().map(|j| j.value()).collect();
    let ambient_hessian = DMatrix::from_fn(n, n, |i, j| grad_jets[i].d(pj.yvar(j)).value());

    // substitute y − y₀ ↦ y(θ) − y₀, x frozen
    let subs: Vec<Option<Jet>> = (0..2 * n)
        .map(|v| {
            if v < n {
                None
            } else {
                let c = &curve[v - n];
                Some(c - c.value())
            }
        })
        .collect();
    let unit = |a: usize| -> Vec<u8> {
        let mut e = vec![0u8; m];
        e[a] += 1;
        e
    };
    let ric_theta = ric.substitute(&subs);
    let d_ric: Vec<f64> = (0..m).map(|a| ric_theta.derivative(&unit(a))).collect();
    // ∂_α ∂_j Ric along the chart
    let dgrad: Vec<Vec<f64>> = grad_jets
        .iter()
        .map(|gj| {
            let t = gj.substitute(&subs);
            (0..m).map(|a| t.derivative(&unit(a))).collect()
        })
        .collect();
    let cart = Tensor {
        n,
        rank: 3,
        data: pj.cartan_jets().iter().map(|c| c.value()).collect(),
    };
    let f = pj.f();
    let t = &st.frame.tangents;
    let dot = |u: &[f64], v: &[f64]| u.iter().zip(v).map(|(a, b)| a * b).sum::<f64>();

    let mut lhs = DMatrix::zeros(m, m);
    let mut rhs = DMatrix::zeros(m, m);
    let mut intrinsic = DMatrix::zeros(m, m);
    for al in 0..m {
        for be in 0..m {
            let cov = st.covariant_second(al, be);
            let mut v = dot(&cov, &grad);
            let c_ab = contract3(&cart, &t[al], &t[be]);
            for j in 0..n {
                v += t[be][j] * dgrad[j][al];
            }
            // y^j_β C^k_ji y^i_α ∂_k Ric
            v -= f * dot(&c_ab, &grad);
            lhs[(al, be)] = v;

            let h = DVector::from_column_slice(&t[al])
                .dot(&(&ambient_hessian * DVector::from_column_slice(&t[be])));
            let a_ab = contract3(&st.a, &t[al], &t[be]);
            rhs[(al, be)] = f * f * h - 2.0 * f * dot(&a_ab, &grad);

            let mut e = unit(al);
            e[be] += 1;
            let mut hess = ric_theta.derivative(&e);
            for ga in 0..m {
                hess -= st.gamma[(ga * m + al) * m + be] * d_ric[ga];
            }
            intrinsic[(al, be)] = hess;
        }
    }
    let r = pj.reduced_curvature_jets();
    let rmat = DMatrix::from_fn(n, n, |i, k| r[i * n + k].value());
    let r_upper = &rmat * pj.ginv();
    Ok(IndicatrixHessian {
        frame: st.frame,
        ric: ric.value(),
        grad,
        ambient_hessian,
        d_ric,
        lhs,
        rhs,
        intrinsic,
        r_upper,
        a: st.a,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metric::{build_metric, FamilyId, MetricSpec};

    fn randers2() -> crate::metric::MetricFamily {
        build_metric(
            &MetricSpec::new(FamilyId::Randers, 2)
                .with("b1", 0.2)
                .with("b2", -0.1)
                .with("wave", 0.1)
                .with("amp", 0.1),
        )
        .unwrap()
    }

    #[test]
    fn points_lie_on_indicatrix() {
        let m = randers2();
        for k in 0..12 {
            let th = [k as f64 * 0.5];
            let y = indicatrix_point(&m, &[0.3, 1.1], &th).unwrap();
            assert!((m.eval(&[0.3, 1.1], &y) - 1.0).abs() < 1e-14);
        }
    }

    #[test]
    fn frame_is_orthogonal_and_dual() {
        let m = randers2();
        let fr = indicatrix_basis(&m, &[0.3, 1.1], &[2.0]).unwrap();
        assert!(fr.orthogonality < 1e-13);
        let d = &fr.dual[0];
        let t = &fr.tangents[0];
        assert!((d[0] * t[0] + d[1] * t[1] - 1.0).abs() < 1e-13);
        assert!((d[0] * fr.y[0] + d[1] * fr.y[1]).abs() < 1e-13);
    }

    #[test]
    fn gauss_formula_holds() {
        let m = randers2();
        for k in 0..8 {
            let r = gauss_formula_residual(&m, &[0.7, -0.4], &[0.8 * k as f64]).unwrap();
            assert!(r < 1e-12, "residual {r}");
        }
        let s3 = build_metric(&MetricSpec::new(FamilyId::ConformalPerturbation, 3)).unwrap();
        let r = gauss_formula_residual(&s3, &[0.1, 0.2, 0.3], &[1.0, 0.4]).unwrap();
        assert!(r < 1e-12, "residual {r}");
    }

    #[test]
    fn hessian_identity_and_operator_conversion() {
        let m = randers2();
        let h = sm_hessian_ric(&m, &[0.7, -0.4], &[1.3]).unwrap();
        let scale = h.rhs.amax().max(1e-3);
        assert!(h.residual() < 1e-9 * scale, "{} vs {}", h.residual(), scale);
        let amb = h.ambient_operator();
        let sph = h.sphere_operator();
        assert!(
            (amb - sph).abs() < 1e-9 * amb.abs().max(1e-3),
            "{amb} vs {sph}"
        );
    }

    #[test]
    fn angle_round_trip() {
        for th in [[0.4, 1.0], [2.0, -2.5]] {
            let back = angles_of(&direction(&th));
            assert!((back[0] - th[0]).abs() < 1e-14 && (back[1] - th[1]).abs() < 1e-14);
        }
    }
}
