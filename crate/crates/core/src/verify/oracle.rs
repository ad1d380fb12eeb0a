//! Classical coordinate computation of Riemannian curvature from `F` values
//! alone, used as ground truth for the jet pipeline.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::geometry::{contract_hh, trace_ricci, CurvatureReport, Tensor};
use crate::metric::FinslerMetric;

/// Step for the nested fourth-order central differences.
const FD_STEP: f64 = 2e-3;

/// `g_ij(x)` by polarization of `F²` on coordinate vectors.
fn metric_at(metric: &dyn FinslerMetric, x: &[f64]) -> DMatrix<f64> {
    let n = x.len();
    let f2 = |v: &[f64]| {
        let f = metric.eval(x, v);
        f * f
    };
    let unit = |i: usize| {
        let mut e = vec![0.0; n];
        e[i] = 1.0;
        e
    };
    let diag: Vec<f64> = (0..n).map(|i| f2(&unit(i))).collect();
    DMatrix::from_fn(n, n, |i, j| {
        if i == j {
            diag[i]
        } else {
            let mut e = unit(i);
            e[j] = 1.0;
            0.5 * (f2(&e) - diag[i] - diag[j])
        }
    })
}

/// `∂_k T(x)` by the five-point stencil.
fn fd<T, F>(x: &[f64], k: usize, f: F) -> T
where
    F: Fn(&[f64]) -> T,
    T: std::ops::Sub<Output = T> + std::ops::Mul<f64, Output = T> + std::ops::Add<Output = T>,
{
    let h = FD_STEP;
    let at = |s: f64| {
        let mut p = x.to_vec();
        p[k] += s * h;
        f(&p)
    };
    (at(-2.0) - at(2.0)) * (1.0 / (12.0 * h)) + (at(1.0) - at(-1.0)) * (8.0 / (12.0 * h))
}

/// `Γ^i_jk(x)`, index `(i, j, k)`.
fn christoffel_at(metric: &dyn FinslerMetric, x: &[f64]) -> Tensor {
    let n = x.len();
    let g = metric_at(metric, x);
    let ginv = g
        .clone()
        .try_inverse()
        .expect("Riemannian metric is invertible");
    let dg: Vec<DMatrix<f64>> = (0..n).map(|k| fd(x, k, |p| metric_at(metric, p))).collect();
    let mut out = Tensor::zeros(n, 3);
    for i in 0..n {
        for j in 0..n {
            for k in 0..n {
                let mut s = 0.0;
                for h in 0..n {
                    s += ginv[(i, h)] * (dg[j][(h, k)] + dg[k][(j, h)] - dg[h][(j, k)]);
                }
                out.set(&[i, j, k], 0.5 * s);
            }
        }
    }
    out
}

#[derive(Clone)]
struct Flat(Vec<f64>);

impl std::ops::Sub for Flat {
    type Output = Flat;
    fn sub(self, o: Flat) -> Flat {
        Flat(self.0.iter().zip(&o.0).map(|(a, b)| a - b).collect())
    }
}

impl std::ops::Add for Flat {
    type Output = Flat;
    fn add(self, o: Flat) -> Flat {
        Flat(self.0.iter().zip(&o.0).map(|(a, b)| a + b).collect())
    }
}

impl std::ops::Mul<f64> for Flat {
    type Output = Flat;
    fn mul(self, s: f64) -> Flat {
        Flat(self.0.iter().map(|a| a * s).collect())
    }
}

/// Curvature of a Riemannian metric by finite differences of `g(x)`:
/// Christoffels from first differences, `R^h_kij = ∂_iΓ^h_jk − ∂_jΓ^h_ik +
/// Γ^l_jkΓ^h_il − Γ^l_ikΓ^h_jl` from second differences.
pub fn riemannian_oracle(
    metric: &dyn FinslerMetric,
    x: &[f64],
    y: &[f64],
) -> Result<CurvatureReport> {
    if !metric.is_riemannian() {
        return Err(Error::NotRiemannian(metric.label()));
    }
    metric.check_point(x)?;
    let n = x.len();
    let g = metric_at(metric, x);
    let ginv = g
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::DegenerateMetric(format!("g singular at x = {x:?}")))?;
    let gam = christoffel_at(metric, x);
    let dgam: Vec<Tensor> = (0..n)
        .map(|i| Tensor {
            n,
            rank: 3,
            data: fd(x, i, |p| Flat(christoffel_at(metric, p).data)).0,
        })
        .collect();
    let mut hh = Tensor::zeros(n, 4);
    for h in 0..n {
        for k in 0..n {
            for i in 0..n {
                for j in 0..n {
                    let mut s = dgam[i].get(&[h, j, k]) - dgam[j].get(&[h, i, k]);
                    for l in 0..n {
                        s += gam.get(&[l, j, k]) * gam.get(&[h, i, l])
                            - gam.get(&[l, i, k]) * gam.get(&[h, j, l]);
                    }
                    hh.set(&[h, k, i, j], s);
                }
            }
        }
    }
    let yv = nalgebra::DVector::from_column_slice(y);
    let f2 = yv.dot(&(&g * &yv));
    let reduced = contract_hh(&hh, y, f2);
    let ric = (0..n).map(|i| reduced.get(&[i, i])).sum();
    let ric_tensor = trace_ricci(&hh);
    let mut spray = vec![0.0; n];
    let mut nonlinear = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            for k in 0..n {
                let c = gam.get(&[i, j, k]);
                spray[i] += 0.5 * c * y[j] * y[k];
                nonlinear[i * n + j] += c * y[k];
            }
        }
    }
    let row_major =
        |m: &DMatrix<f64>| -> Vec<f64> { (0..n * n).map(|k| m[(k / n, k % n)]).collect() };
    Ok(CurvatureReport {
        x: x.to_vec(),
        y: y.to_vec(),
        f: f2.sqrt(),
        g: row_major(&g),
        g_inv: row_major(&ginv),
        cartan: vec![0.0; n * n * n],
        spray,
        nonlinear_connection: nonlinear,
        christoffel: gam.data,
        reduced_curvature: reduced.data,
        hh_curvature: Some(hh.data),
        ric,
        ric_tensor: row_major(&ric_tensor),
    })
}
