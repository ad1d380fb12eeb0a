//! Pointwise Cartan-connection geometry of a Finsler structure.
//!
//! Every quantity is obtained by running the defining formulas on jets of
//! `F²` in the `2n` variables `(x, y)`: `g_ij = ½ ∂²F²/∂yⁱ∂yʲ`, the spray
//! `Gⁱ = ¼ g^{ih}(∂²F²/∂y^h∂xʲ yʲ − ∂F²/∂x^h)`, the nonlinear connection
//! `Gⁱ_j = ∂Gⁱ/∂yʲ`, the horizontal derivative `δ_k = ∂/∂x^k − G^m_k ∂/∂y^m`,
//! the Cartan coefficients `Γ` and `C`, and the curvatures built from them.
//! Each derivative lowers the jet order by one, so the working order fixes
//! which quantities are available:
//!
//! | quantity                           | needs order |
//! |------------------------------------|-------------|
//! | `g`, `Gⁱ`                          | 2           |
//! | `C`, `Gⁱ_j`, `Γ`                   | 3           |
//! | `Rⁱ_k`, `Ric`, `R^h_kij`, `Rc_ij`  | 4           |
//! | `Ric_ij = [½F²Ric]_{yⁱyʲ}`         | 6           |
//!
//! The reduced curvature uses the sign that gives the unit round sphere flag
//! curvature `+1`.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::jet::{jet_space, Jet};
use crate::metric::{FinslerMetric, DEGENERACY_RTOL};

/// Default tolerance for the flag orthogonality precondition.
pub const ORTHOGONALITY_TOL: f64 = 1e-8;

/// Dense row-major tensor with all indices of range `n`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Tensor {
    pub n: usize,
    pub rank: usize,
    pub data: Vec<f64>,
}

impl Tensor {
    pub fn zeros(n: usize, rank: usize) -> Self {
        Tensor {
            n,
            rank,
            data: vec![0.0; n.pow(rank as u32)],
        }
    }

    pub fn offset(&self, idx: &[usize]) -> usize {
        debug_assert_eq!(idx.len(), self.rank);
        idx.iter().fold(0, |acc, &i| acc * self.n + i)
    }

    pub fn get(&self, idx: &[usize]) -> f64 {
        self.data[self.offset(idx)]
    }

    pub fn set(&mut self, idx: &[usize], v: f64) {
        let o = self.offset(idx);
        self.data[o] = v;
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn max_abs_diff(&self, other: &Tensor) -> f64 {
        self.data
            .iter()
            .zip(&other.data)
            .fold(0.0, |m, (a, b)| m.max((a - b).abs()))
    }

    pub fn to_matrix(&self) -> DMatrix<f64> {
        assert_eq!(self.rank, 2);
        DMatrix::from_row_slice(self.n, self.n, &self.data)
    }

    pub fn from_matrix(m: &DMatrix<f64>) -> Self {
        let n = m.nrows();
        let mut t = Tensor::zeros(n, 2);
        for i in 0..n {
            for j in 0..n {
                t.set(&[i, j], m[(i, j)]);
            }
        }
        t
    }
}

/// All multi-indices of length `rank` over `0..n`, in row-major order.
pub fn indices(n: usize, rank: usize) -> impl Iterator<Item = Vec<usize>> {
    (0..n.pow(rank as u32)).map(move |mut flat| {
        let mut idx = vec![0; rank];
        for slot in (0..rank).rev() {
            idx[slot] = flat % n;
            flat /= n;
        }
        idx
    })
}

/// Jets of the basic objects at one point `(x, y)`.
///
/// Variables `0..n` are `x`, variables `n..2n` are `y`.
pub struct PointJets {
    pub n: usize,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    ys: Vec<Jet>,
    f2: Jet,
    g: Vec<Jet>,
    ginv: Vec<Jet>,
    spray: Vec<Jet>,
    nonlinear: Vec<Jet>,
}

fn minor(m: &[Jet], n: usize, r: [usize; 2], c: [usize; 2]) -> Jet {
    &m[r[0] * n + c[0]] * &m[r[1] * n + c[1]] - &m[r[0] * n + c[1]] * &m[r[1] * n + c[0]]
}

/// Inverse of a symmetric 2×2 or 3×3 jet matrix by cofactors.
fn invert(m: &[Jet], n: usize) -> Vec<Jet> {
    match n {
        2 => {
            let det = &m[0] * &m[3] - &m[1] * &m[2];
            let inv = det.recip();
            vec![&m[3] * &inv, -(&m[1] * &inv), -(&m[2] * &inv), &m[0] * &inv]
        }
        3 => {
            let cof = |i: usize, j: usize| {
                let rows: Vec<usize> = (0..3).filter(|&r| r != i).collect();
                let cols: Vec<usize> = (0..3).filter(|&c| c != j).collect();
                let mnr = minor(m, 3, [rows[0], rows[1]], [cols[0], cols[1]]);
                if (i + j).is_multiple_of(2) {
                    mnr
                } else {
                    -mnr
                }
            };
            let c: Vec<Jet> = (0..9).map(|k| cof(k / 3, k % 3)).collect();
            let det = &(&m[0] * &c[0] + &m[1] * &c[1]) + &(&m[2] * &c[2]);
            let inv = det.recip();
            // inverse = adjugate / det, adjugate = cofactorᵀ
            (0..9).map(|k| &c[(k % 3) * 3 + k / 3] * &inv).collect()
        }
        _ => unreachable!("dimension checked at construction"),
    }
}

fn value_matrix(m: &[Jet], n: usize) -> DMatrix<f64> {
    DMatrix::from_fn(n, n, |i, j| m[i * n + j].value())
}

impl PointJets {
    /// Expands `F²` about `(x, y)` to total order `order` and assembles `g`,
    /// `g⁻¹` and the spray.
    pub fn new(metric: &dyn FinslerMetric, x: &[f64], y: &[f64], order: usize) -> Result<Self> {
        let n = metric.dim();
        if x.len() != n || y.len() != n {
            return Err(Error::Config(format!("point must have {n} coordinates")));
        }
        if y.iter().all(|&v| v == 0.0) || y.iter().any(|v| !v.is_finite()) {
            return Err(Error::DegenerateMetric(
                "y must be a finite nonzero vector".into(),
            ));
        }
        metric.check_point(x)?;
        assert!(order >= 2, "order must be at least 2");
        let sp = jet_space(2 * n, order);
        let xs: Vec<Jet> = (0..n).map(|i| sp.variable(i, x[i])).collect();
        let ys: Vec<Jet> = (0..n).map(|i| sp.variable(n + i, y[i])).collect();
        let f = metric.eval_jet(&xs, &ys);
        if !(f.value() > 0.0) || !f.is_finite() {
            return Err(Error::DegenerateMetric(format!(
                "F = {:e} at x = {x:?}, y = {y:?}",
                f.value()
            )));
        }
        let f2 = &f * &f;
        Self::from_f2(n, x, y, ys, f2)
    }

    /// Builds the pipeline from a precomputed jet of `F²` about `(x, y)` in
    /// the `2n`-variable layout.
    pub fn from_f2_jet(x: &[f64], y: &[f64], f2: Jet) -> Result<Self> {
        let n = x.len();
        let sp = f2.space();
        assert_eq!(sp.nvars(), 2 * n, "F² jet must have 2n variables");
        let ys = (0..n)
            .map(|i| sp.variable(n + i, y[i]).truncate(f2.order()))
            .collect();
        Self::from_f2(n, x, y, ys, f2)
    }

    fn from_f2(n: usize, x: &[f64], y: &[f64], ys: Vec<Jet>, f2: Jet) -> Result<Self> {
        let f2y: Vec<Jet> = (0..n).map(|i| f2.d(n + i)).collect();
        let mut g = Vec::with_capacity(n * n);
        for i in 0..n {
            for j in 0..n {
                g.push(f2y[i].d(n + j) * 0.5);
            }
        }
        let gv = value_matrix(&g, n);
        let eig = gv.clone().symmetric_eigenvalues();
        let (lo, hi) = (eig.min(), eig.max());
        if !(lo > DEGENERACY_RTOL * hi.abs()) {
            return Err(Error::DegenerateMetric(format!(
                "g has eigenvalue {lo:e} (max {hi:e}) at x = {x:?}, y = {y:?}"
            )));
        }
        let ginv = invert(&g, n);
        // Gⁱ = ¼ g^{ih} (∂²F²/∂y^h∂xʲ yʲ − ∂F²/∂x^h)
        let mut rhs = Vec::with_capacity(n);
        for h in 0..n {
            let mut t = -f2.d(h);
            for j in 0..n {
                t = t + &f2y[h].d(j) * &ys[j];
            }
            rhs.push(t);
        }
        let mut spray = Vec::with_capacity(n);
        for i in 0..n {
            let mut s = &ginv[i * n] * &rhs[0];
            for h in 1..n {
                s = s + &ginv[i * n + h] * &rhs[h];
            }
            spray.push(s * 0.25);
        }
        let mut nonlinear = Vec::new();
        if f2.order() >= 3 {
            for i in 0..n {
                for j in 0..n {
                    nonlinear.push(spray[i].d(n + j));
                }
            }
        }
        Ok(PointJets {
            n,
            x: x.to_vec(),
            y: y.to_vec(),
            ys,
            f2,
            g,
            ginv,
            spray,
            nonlinear,
        })
    }

    pub fn order(&self) -> usize {
        self.f2.order()
    }

    pub fn f2(&self) -> &Jet {
        &self.f2
    }

    pub fn f(&self) -> f64 {
        self.f2.value().sqrt()
    }

    pub fn g_jets(&self) -> &[Jet] {
        &self.g
    }

    pub fn ginv_jets(&self) -> &[Jet] {
        &self.ginv
    }

    pub fn spray_jets(&self) -> &[Jet] {
        &self.spray
    }

    /// The fiber coordinate `yⁱ` as a jet.
    pub fn y_jet(&self, i: usize) -> &Jet {
        &self.ys[i]
    }

    /// Jet-variable index of `xⁱ`.
    pub fn xvar(&self, i: usize) -> usize {
        i
    }

    /// Jet-variable index of `yⁱ`.
    pub fn yvar(&self, i: usize) -> usize {
        self.n + i
    }

    pub fn g(&self) -> DMatrix<f64> {
        value_matrix(&self.g, self.n)
    }

    pub fn ginv(&self) -> DMatrix<f64> {
        value_matrix(&self.ginv, self.n)
    }

    /// `Gⁱ_j = ∂Gⁱ/∂yʲ` (empty below order 3).
    pub fn nonlinear_jets(&self) -> &[Jet] {
        &self.nonlinear
    }

    /// `δ_k T = ∂T/∂x^k − G^m_k ∂T/∂y^m`.
    pub fn delta(&self, t: &Jet, k: usize) -> Jet {
        let n = self.n;
        let nl = &self.nonlinear;
        let mut out = t.d(k);
        for m in 0..n {
            out = out - &nl[m * n + k] * &t.d(n + m);
        }
        out
    }

    /// Lowered Cartan tensor `C_ijk = ¼ ∂³F²/∂yⁱ∂yʲ∂y^k`.
    pub fn cartan_lower_jets(&self) -> Vec<Jet> {
        let n = self.n;
        let mut out = Vec::with_capacity(n * n * n);
        for i in 0..n {
            for j in 0..n {
                for k in 0..n {
                    out.push(self.g[i * n + j].d(n + k) * 0.5);
                }
            }
        }
        out
    }

    /// `Cⁱ_jk = g^{ih} C_hjk`.
    pub fn cartan_jets(&self) -> Vec<Jet> {
        let n = self.n;
        let low = self.cartan_lower_jets();
        let mut out = Vec::with_capacity(n * n * n);
        for i in 0..n {
            for j in 0..n {
                for k in 0..n {
                    let mut s = &self.ginv[i * n] * &low[j * n + k];
                    for h in 1..n {
                        s = s + &self.ginv[i * n + h] * &low[(h * n + j) * n + k];
                    }
                    out.push(s);
                }
            }
        }
        out
    }

    /// `Γⁱ_jk = ½ g^{ih}(δ_j g_hk + δ_k g_jh − δ_h g_jk)`.
    pub fn christoffel_jets(&self) -> Vec<Jet> {
        let n = self.n;
        // dg[(a*n+b)*n+c] = δ_c g_ab
        let mut dg = Vec::with_capacity(n * n * n);
        for gab in &self.g {
            for c in 0..n {
                dg.push(self.delta(gab, c));
            }
        }
        let idx = |a: usize, b: usize, c: usize| (a * n + b) * n + c;
        let mut low = Vec::with_capacity(n * n * n);
        for h in 0..n {
            for j in 0..n {
                for k in 0..n {
                    low.push(&(&dg[idx(h, k, j)] + &dg[idx(j, h, k)]) - &dg[idx(j, k, h)]);
                }
            }
        }
        let mut out = Vec::with_capacity(n * n * n);
        for i in 0..n {
            for j in 0..n {
                for k in 0..n {
                    let mut s = &self.ginv[i * n] * &low[idx(0, j, k)];
                    for h in 1..n {
                        s = s + &self.ginv[i * n + h] * &low[idx(h, j, k)];
                    }
                    out.push(s * 0.5);
                }
            }
        }
        out
    }

    /// Reduced hh-curvature from spray derivatives,
    /// `Rⁱ_k = F⁻²(2∂_k Gⁱ − yʲ ∂_j ∂̇_k Gⁱ + 2Gʲ ∂̇_j∂̇_k Gⁱ − ∂̇_j Gⁱ ∂̇_k Gʲ)`.
    pub fn reduced_curvature_jets(&self) -> Vec<Jet> {
        let n = self.n;
        let nl = &self.nonlinear;
        let inv_f2 = self.f2.recip();
        let mut out = Vec::with_capacity(n * n);
        for i in 0..n {
            for k in 0..n {
                let gik = &nl[i * n + k];
                let mut s = self.spray[i].d(k) * 2.0;
                for j in 0..n {
                    s = s - &self.ys[j] * &gik.d(j);
                    s = s + &(&self.spray[j] * &nl[i * n + j].d(n + k)) * 2.0;
                    s = s - &nl[i * n + j] * &nl[j * n + k];
                }
                out.push(s * &inv_f2);
            }
        }
        out
    }

    /// Ricci scalar `Ric = Rⁱ_i`.
    pub fn ric_jet(&self) -> Jet {
        let n = self.n;
        let r = self.reduced_curvature_jets();
        (1..n).fold(r[0].clone(), |acc, i| acc + &r[i * n + i])
    }

    /// Full hh-curvature `R^h_kij` of the Cartan connection.
    pub fn hh_curvature_jets(&self) -> Vec<Jet> {
        let n = self.n;
        let gam = self.christoffel_jets();
        let c = self.cartan_jets();
        let i3 = |a: usize, b: usize, d: usize| (a * n + b) * n + d;
        let i4 = |a: usize, b: usize, d: usize, e: usize| ((a * n + b) * n + d) * n + e;
        // δ_i Γ^h_jk stored at i4(h, j, k, i)
        let mut dgam = Vec::with_capacity(n * n * n * n);
        for gm in &gam {
            for i in 0..n {
                dgam.push(self.delta(gm, i));
            }
        }
        let mut base = Vec::with_capacity(n * n * n * n);
        for h in 0..n {
            for k in 0..n {
                for i in 0..n {
                    for j in 0..n {
                        let mut s = &dgam[i4(h, j, k, i)] - &dgam[i4(h, i, k, j)];
                        for l in 0..n {
                            s = s + &gam[i3(l, j, k)] * &gam[i3(h, i, l)];
                            s = s - &gam[i3(l, i, k)] * &gam[i3(h, j, l)];
                        }
                        base.push(s);
                    }
                }
            }
        }
        // R^l_ij = y^p R^l_pij (the C term drops out since C^h_lk y^k = 0)
        let mut rl = Vec::with_capacity(n * n * n);
        for l in 0..n {
            for i in 0..n {
                for j in 0..n {
                    let mut s = &self.ys[0] * &base[i4(l, 0, i, j)];
                    for p in 1..n {
                        s = s + &self.ys[p] * &base[i4(l, p, i, j)];
                    }
                    rl.push(s);
                }
            }
        }
        let mut out = base;
        for h in 0..n {
            for k in 0..n {
                for i in 0..n {
                    for j in 0..n {
                        let mut s = out[i4(h, k, i, j)].clone();
                        for l in 0..n {
                            s = s + &rl[i3(l, i, j)] * &c[i3(h, l, k)];
                        }
                        out[i4(h, k, i, j)] = s;
                    }
                }
            }
        }
        out
    }
}

fn jets_to_tensor(n: usize, rank: usize, jets: &[Jet]) -> Tensor {
    Tensor {
        n,
        rank,
        data: jets.iter().map(|j| j.value()).collect(),
    }
}

pub fn fundamental_tensor(
    metric: &dyn FinslerMetric,
    x: &[f64],
    y: &[f64],
) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let pj = PointJets::new(metric, x, y, 2)?;
    Ok((pj.g(), pj.ginv()))
}

/// `Cⁱ_jk`, row-major `(i, j, k)`.
pub fn cartan_tensor(metric: &dyn FinslerMetric, x: &[f64], y: &[f64]) -> Result<Tensor> {
    let pj = PointJets::new(metric, x, y, 3)?;
    Ok(jets_to_tensor(pj.n, 3, &pj.cartan_jets()))
}

pub fn spray(metric: &dyn FinslerMetric, x: &[f64], y: &[f64]) -> Result<Vec<f64>> {
    let pj = PointJets::new(metric, x, y, 2)?;
    Ok(pj.spray.iter().map(|j| j.value()).collect())
}

/// `Gⁱ_j`, row-major `(i, j)`.
pub fn nonlinear_connection(metric: &dyn FinslerMetric, x: &[f64], y: &[f64]) -> Result<Tensor> {
    let pj = PointJets::new(metric, x, y, 3)?;
    let n = pj.n;
    Ok(jets_to_tensor(n, 2, pj.nonlinear_jets()))
}

/// `Γⁱ_jk`, row-major `(i, j, k)`.
pub fn cartan_christoffel(metric: &dyn FinslerMetric, x: &[f64], y: &[f64]) -> Result<Tensor> {
    let pj = PointJets::new(metric, x, y, 3)?;
    let g = pj.christoffel_jets();
    Ok(jets_to_tensor(pj.n, 3, &g))
}

/// `Rⁱ_k`, row-major `(i, k)`.
pub fn reduced_curvature(metric: &dyn FinslerMetric, x: &[f64], y: &[f64]) -> Result<Tensor> {
    let pj = PointJets::new(metric, x, y, 4)?;
    let r = pj.reduced_curvature_jets();
    Ok(jets_to_tensor(pj.n, 2, &r))
}

/// `R^h_kij`, row-major `(h, k, i, j)`.
pub fn hh_curvature(metric: &dyn FinslerMetric, x: &[f64], y: &[f64]) -> Result<Tensor> {
    let pj = PointJets::new(metric, x, y, 4)?;
    let r = pj.hh_curvature_jets();
    Ok(jets_to_tensor(pj.n, 4, &r))
}

/// Lowers the first index: `R_tkij = g_th R^h_kij`.
pub fn lower_first(g: &DMatrix<f64>, t: &Tensor) -> Tensor {
    let n = t.n;
    let mut out = Tensor::zeros(n, t.rank);
    let inner = n.pow(t.rank as u32 - 1);
    for a in 0..n {
        for rest in 0..inner {
            let v: f64 = (0..n).map(|h| g[(a, h)] * t.data[h * inner + rest]).sum();
            out.data[a * inner + rest] = v;
        }
    }
    out
}

/// `(1/F²) yʲ Rⁱ_{jkm} yᵐ`: the reduced curvature recovered from the full
/// hh-curvature.
pub fn contract_hh(hh: &Tensor, y: &[f64], f2: f64) -> Tensor {
    let n = hh.n;
    let mut out = Tensor::zeros(n, 2);
    for i in 0..n {
        for k in 0..n {
            let mut s = 0.0;
            for j in 0..n {
                for m in 0..n {
                    s += y[j] * hh.get(&[i, j, k, m]) * y[m];
                }
            }
            out.set(&[i, k], s / f2);
        }
    }
    out
}

/// `R_jk = g_ji Rⁱ_k`.
pub fn lowered_reduced(g: &DMatrix<f64>, r: &Tensor) -> DMatrix<f64> {
    g * r.to_matrix()
}

/// Flag curvature `K(x, y, l∧V) = V^j R_jk V^k / g(V, V)` for `V ⊥_g y`.
pub fn flag_curvature(metric: &dyn FinslerMetric, x: &[f64], y: &[f64], v: &[f64]) -> Result<f64> {
    let pj = PointJets::new(metric, x, y, 4)?;
    let r = jets_to_tensor(pj.n, 2, &pj.reduced_curvature_jets());
    flag_from_parts(&pj.g(), &r, y, v, ORTHOGONALITY_TOL)
}

pub fn flag_from_parts(
    g: &DMatrix<f64>,
    r: &Tensor,
    y: &[f64],
    v: &[f64],
    tol: f64,
) -> Result<f64> {
    let yv = DVector::from_column_slice(y);
    let vv = DVector::from_column_slice(v);
    let gvv = vv.dot(&(g * &vv));
    if !(gvv > 0.0) {
        return Err(Error::NotOrthogonal(f64::NAN));
    }
    let f = yv.dot(&(g * &yv)).sqrt();
    let gvl = vv.dot(&(g * &yv)) / f;
    if gvl.abs() > tol * gvv.sqrt() {
        return Err(Error::NotOrthogonal(gvl.abs()));
    }
    let rl = lowered_reduced(g, r);
    Ok(vv.dot(&(rl * &vv)) / gvv)
}

/// g-orthonormal completion `{e_1, …, e_{n−1}}` of `l = y/F`, by Gram–Schmidt
/// on `candidates` in order; a candidate whose residual norm falls below
/// `1e−6` of its own norm is skipped.
pub fn orthonormal_completion(
    g: &DMatrix<f64>,
    y: &[f64],
    candidates: &[DVector<f64>],
) -> Vec<DVector<f64>> {
    let n = g.nrows();
    let ip = |a: &DVector<f64>, b: &DVector<f64>| a.dot(&(g * b));
    let yv = DVector::from_column_slice(y);
    let l = &yv / ip(&yv, &yv).sqrt();
    let mut basis = vec![l];
    for c in candidates {
        if basis.len() == n {
            break;
        }
        let norm0 = ip(c, c).sqrt();
        let mut w = c.clone();
        for e in &basis {
            w -= e * ip(e, &w);
        }
        let nw = ip(&w, &w).sqrt();
        if nw > 1e-6 * norm0 {
            basis.push(w / nw);
        }
    }
    basis.remove(0);
    basis
}

/// Deterministic completion seeded by the coordinate vectors `∂_1, …, ∂_n`.
pub fn coordinate_completion(g: &DMatrix<f64>, y: &[f64]) -> Vec<DVector<f64>> {
    let n = g.nrows();
    let cands: Vec<DVector<f64>> = (0..n)
        .map(|i| {
            let mut e = DVector::zeros(n);
            e[i] = 1.0;
            e
        })
        .collect();
    orthonormal_completion(g, y, &cands)
}

pub fn ricci_scalar(metric: &dyn FinslerMetric, x: &[f64], y: &[f64]) -> Result<f64> {
    let pj = PointJets::new(metric, x, y, 4)?;
    Ok(pj.ric_jet().value())
}

/// Akbar-Zadeh Ricci tensor `Ric_ij = [½F² Ric]_{yⁱyʲ}`.
pub fn ricci_tensor_az1(metric: &dyn FinslerMetric, x: &[f64], y: &[f64]) -> Result<DMatrix<f64>> {
    let pj = PointJets::new(metric, x, y, 6)?;
    Ok(az_from_jets(&pj))
}

fn az_from_jets(pj: &PointJets) -> DMatrix<f64> {
    let n = pj.n;
    let half = &(pj.f2.clone() * 0.5) * &pj.ric_jet();
    let mut out = DMatrix::zeros(n, n);
    for i in 0..n {
        let di = half.d(n + i);
        for j in 0..n {
            out[(i, j)] = di.d(n + j).value();
        }
    }
    // symmetric up to rounding
    (&out + out.transpose()) * 0.5
}

/// `Rc_ij = ½(R_ij + R_ji)` with `R_ij = R^l_{ilj}`.
pub fn ricci_tensor_trace(
    metric: &dyn FinslerMetric,
    x: &[f64],
    y: &[f64],
) -> Result<DMatrix<f64>> {
    let hh = hh_curvature(metric, x, y)?;
    Ok(trace_ricci(&hh))
}

pub fn trace_ricci(hh: &Tensor) -> DMatrix<f64> {
    let n = hh.n;
    let r = DMatrix::from_fn(n, n, |i, j| {
        (0..n).map(|l| hh.get(&[l, i, l, j])).sum::<f64>()
    });
    (&r + r.transpose()) * 0.5
}

/// `‖Ric‖_g = sqrt(g^{ia} g^{jb} Ric_ij Ric_ab)`.
pub fn ricci_norm(metric: &dyn FinslerMetric, x: &[f64], y: &[f64]) -> Result<f64> {
    let pj = PointJets::new(metric, x, y, 6)?;
    let ric = az_from_jets(&pj);
    Ok(tensor_norm(&pj.ginv(), &ric))
}

pub fn tensor_norm(ginv: &DMatrix<f64>, t: &DMatrix<f64>) -> f64 {
    let m = ginv * t * ginv;
    m.component_mul(t).sum().max(0.0).sqrt()
}

/// Components of a Finsler tensor field of valence `(upper, lower)`, given as
/// jets in the variable layout of a [`PointJets`]. Upper indices come first
/// in the row-major layout.
#[derive(Clone)]
pub struct TensorField {
    pub upper: usize,
    pub lower: usize,
    pub comps: Vec<Jet>,
}

/// Horizontal `∇_l S` and vertical `∇̇_l S` covariant derivatives of the
/// Cartan connection for valence up to `(1, 2)`; the derivative index is
/// appended last.
pub fn covariant_derivatives(pj: &PointJets, s: &TensorField) -> Result<(Tensor, Tensor)> {
    if s.upper > 1 || s.lower > 2 {
        return Err(Error::ValenceUnsupported(s.upper, s.lower));
    }
    let n = pj.n;
    let rank = s.upper + s.lower;
    if s.comps.len() != n.pow(rank as u32) {
        return Err(Error::Config(
            "component count does not match valence".into(),
        ));
    }
    let gam = jets_to_tensor(n, 3, &pj.christoffel_jets());
    let c = jets_to_tensor(n, 3, &pj.cartan_jets());
    let vals = Tensor {
        n,
        rank,
        data: s.comps.iter().map(|j| j.value()).collect(),
    };
    let mut hor = Tensor::zeros(n, rank + 1);
    let mut ver = Tensor::zeros(n, rank + 1);
    for (flat, comp) in s.comps.iter().enumerate() {
        let mut idx: Vec<usize> = vec![0; rank];
        let mut rem = flat;
        for slot in (0..rank).rev() {
            idx[slot] = rem % n;
            rem /= n;
        }
        for l in 0..n {
            let mut h = pj.delta(comp, l).value();
            let mut v = comp.d(n + l).value();
            for slot in 0..rank {
                for sdx in 0..n {
                    let mut moved = idx.clone();
                    moved[slot] = sdx;
                    let sv = vals.get(&moved);
                    if slot < s.upper {
                        h += sv * gam.get(&[idx[slot], sdx, l]);
                        v += sv * c.get(&[idx[slot], sdx, l]);
                    } else {
                        h -= sv * gam.get(&[sdx, idx[slot], l]);
                        v -= sv * c.get(&[sdx, idx[slot], l]);
                    }
                }
            }
            let mut full = idx.clone();
            full.push(l);
            hor.set(&full, h);
            ver.set(&full, v);
        }
    }
    Ok((hor, ver))
}

impl PointJets {
    /// `g_jk` as a `(0, 2)` tensor field.
    pub fn metric_field(&self) -> TensorField {
        TensorField {
            upper: 0,
            lower: 2,
            comps: self.g.clone(),
        }
    }
}

/// Every pointwise quantity at one `(x, y)`.
#[derive(Debug, Clone, Serialize)]
pub struct CurvatureReport {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    #[serde(rename = "F")]
    pub f: f64,
    #[serde(rename = "g_ij")]
    pub g: Vec<f64>,
    #[serde(rename = "g^ij")]
    pub g_inv: Vec<f64>,
    #[serde(rename = "C^i_jk")]
    pub cartan: Vec<f64>,
    #[serde(rename = "G^i")]
    pub spray: Vec<f64>,
    #[serde(rename = "G^i_j")]
    pub nonlinear_connection: Vec<f64>,
    #[serde(rename = "Gamma^i_jk")]
    pub christoffel: Vec<f64>,
    #[serde(rename = "R^i_k")]
    pub reduced_curvature: Vec<f64>,
    #[serde(rename = "R^h_kij", skip_serializing_if = "Option::is_none")]
    pub hh_curvature: Option<Vec<f64>>,
    #[serde(rename = "Ric")]
    pub ric: f64,
    #[serde(rename = "Ric_ij")]
    pub ric_tensor: Vec<f64>,
}

fn row_major(m: &DMatrix<f64>) -> Vec<f64> {
    let mut out = Vec::with_capacity(m.len());
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            out.push(m[(i, j)]);
        }
    }
    out
}

impl CurvatureReport {
    pub fn n(&self) -> usize {
        self.x.len()
    }

    pub fn g_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.n(), self.n(), &self.g)
    }

    pub fn ric_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.n(), self.n(), &self.ric_tensor)
    }

    pub fn reduced(&self) -> Tensor {
        Tensor {
            n: self.n(),
            rank: 2,
            data: self.reduced_curvature.clone(),
        }
    }
}

/// Computes the full report; `with_hh` adds the hh-curvature.
pub fn curvature_report(
    metric: &dyn FinslerMetric,
    x: &[f64],
    y: &[f64],
    with_hh: bool,
) -> Result<CurvatureReport> {
    let pj = PointJets::new(metric, x, y, 6)?;
    let n = pj.n;
    let ric_tensor = az_from_jets(&pj);
    let reduced = pj.reduced_curvature_jets();
    let ric = (0..n).map(|i| reduced[i * n + i].value()).sum();
    let christoffel = pj.christoffel_jets();
    let hh = if with_hh {
        Some(pj.hh_curvature_jets().iter().map(|j| j.value()).collect())
    } else {
        None
    };
    Ok(CurvatureReport {
        x: x.to_vec(),
        y: y.to_vec(),
        f: pj.f(),
        g: row_major(&pj.g()),
        g_inv: row_major(&pj.ginv()),
        cartan: pj.cartan_jets().iter().map(|j| j.value()).collect(),
        spray: pj.spray.iter().map(|j| j.value()).collect(),
        nonlinear_connection: pj.nonlinear_jets().iter().map(|j| j.value()).collect(),
        christoffel: christoffel.iter().map(|j| j.value()).collect(),
        reduced_curvature: reduced.iter().map(|j| j.value()).collect(),
        hh_curvature: hh,
        ric,
        ric_tensor: row_major(&ric_tensor),
    })
}
