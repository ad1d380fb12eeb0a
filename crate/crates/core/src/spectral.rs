//! Fourier representation of periodic fields on `[0, 2π)³`.
//!
//! Layout is row-major over `(i₁, i₂, k)` with the last axis fastest; axis
//! lengths are `(nx, nx, nt)`. The interpolant is the real trigonometric
//! polynomial whose Nyquist modes are split evenly between `±N/2`, so odd
//! derivatives of a Nyquist mode vanish at the nodes.

use std::sync::Arc;

use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::jet::{factorial, jet_space};

/// Signed wavenumber of FFT bin `j` for an axis of length `n`.
pub fn wavenumber(j: usize, n: usize) -> f64 {
    if j <= n / 2 {
        j as f64
    } else {
        j as f64 - n as f64
    }
}

struct Plans {
    fwd: [Arc<dyn Fft<f64>>; 2],
    inv: [Arc<dyn Fft<f64>>; 2],
}

impl Plans {
    fn new(nx: usize, nt: usize) -> Self {
        let mut p = FftPlanner::new();
        Plans {
            fwd: [p.plan_fft_forward(nx), p.plan_fft_forward(nt)],
            inv: [p.plan_fft_inverse(nx), p.plan_fft_inverse(nt)],
        }
    }
}

/// In-place unnormalized 3-D transform.
fn transform(data: &mut [Complex64], nx: usize, nt: usize, plans: &Plans, inverse: bool) {
    let (px, pt) = if inverse {
        (&plans.inv[0], &plans.inv[1])
    } else {
        (&plans.fwd[0], &plans.fwd[1])
    };
    // fiber axis is contiguous
    pt.process(data);
    let mut buf = vec![Complex64::new(0.0, 0.0); nx];
    for stride in [nt, nx * nt] {
        let outer = if stride == nt { nx } else { 1 };
        for o in 0..outer {
            let inner_count = if stride == nt { nt } else { nx * nt };
            for r in 0..inner_count {
                let base = o * nx * nt + r;
                for (j, b) in buf.iter_mut().enumerate() {
                    *b = data[base + j * stride];
                }
                px.process(&mut buf);
                for (j, b) in buf.iter().enumerate() {
                    data[base + j * stride] = *b;
                }
            }
        }
    }
}

/// Normalized Fourier coefficients of a real periodic field.
pub struct Spectrum {
    pub nx: usize,
    pub nt: usize,
    coeffs: Vec<Complex64>,
    plans: Plans,
}

impl Spectrum {
    pub fn from_values(values: &[f64], nx: usize, nt: usize) -> Self {
        assert_eq!(values.len(), nx * nx * nt);
        let plans = Plans::new(nx, nt);
        let mut data: Vec<Complex64> = values.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        transform(&mut data, nx, nt, &plans, false);
        let scale = 1.0 / values.len() as f64;
        for c in &mut data {
            *c *= scale;
        }
        Spectrum {
            nx,
            nt,
            coeffs: data,
            plans,
        }
    }

    fn axis_len(&self, axis: usize) -> usize {
        if axis < 2 {
            self.nx
        } else {
            self.nt
        }
    }

    /// Nodal values of `∂^α` of the interpolant, `α = (a₁, a₂, a_θ)`.
    pub fn derivative_field(&self, alpha: [u8; 3]) -> Vec<f64> {
        let (nx, nt) = (self.nx, self.nt);
        // per-axis multipliers (iκ)^a, zero at Nyquist for odd a
        let mult: Vec<Vec<Complex64>> = (0..3)
            .map(|axis| {
                let n = self.axis_len(axis);
                let a = alpha[axis] as i32;
                (0..n)
                    .map(|j| {
                        if a % 2 == 1 && j == n / 2 {
                            Complex64::new(0.0, 0.0)
                        } else {
                            Complex64::new(0.0, wavenumber(j, n)).powi(a)
                        }
                    })
                    .collect()
            })
            .collect();
        let mut data = self.coeffs.clone();
        for j1 in 0..nx {
            for j2 in 0..nx {
                let m12 = mult[0][j1] * mult[1][j2];
                let row = &mut data[(j1 * nx + j2) * nt..(j1 * nx + j2 + 1) * nt];
                for (k, c) in row.iter_mut().enumerate() {
                    *c *= m12 * mult[2][k];
                }
            }
        }
        transform(&mut data, nx, nt, &self.plans, true);
        data.iter().map(|c| c.re).collect()
    }

    /// Taylor coefficients `∂^α f(z)/α!` of the interpolant at an arbitrary
    /// point, in the monomial order of `jet_space(3, order)`.
    pub fn taylor_at(&self, z: [f64; 3], order: usize) -> Vec<f64> {
        let (nx, nt) = (self.nx, self.nt);
        let k1 = order + 1;
        // w[axis][j][p] = d^p/dz^p of the mode-j basis function at z
        let weights: Vec<Vec<Vec<Complex64>>> = (0..3)
            .map(|axis| {
                let n = self.axis_len(axis);
                (0..n)
                    .map(|j| {
                        let basis = |kappa: f64| {
                            let e = Complex64::from_polar(1.0, kappa * z[axis]);
                            (0..k1)
                                .map(|p| Complex64::new(0.0, kappa).powi(p as i32) * e)
                                .collect::<Vec<_>>()
                        };
                        if j == n / 2 {
                            let h = n as f64 / 2.0;
                            basis(h)
                                .iter()
                                .zip(basis(-h))
                                .map(|(a, b)| (a + b) * 0.5)
                                .collect()
                        } else {
                            basis(wavenumber(j, n))
                        }
                    })
                    .collect()
            })
            .collect();
        let zero = Complex64::new(0.0, 0.0);
        // contract the fiber axis: t[(j1, j2), c]
        let mut t = vec![zero; nx * nx * k1];
        for j12 in 0..nx * nx {
            let row = &self.coeffs[j12 * nt..(j12 + 1) * nt];
            for (k, c) in row.iter().enumerate() {
                for p in 0..k1 {
                    t[j12 * k1 + p] += c * weights[2][k][p];
                }
            }
        }
        // contract x²: u[j1, b, c]
        let mut u = vec![zero; nx * k1 * k1];
        for j1 in 0..nx {
            for j2 in 0..nx {
                for b in 0..k1 {
                    let w = weights[1][j2][b];
                    for c in 0..k1 - b {
                        u[(j1 * k1 + b) * k1 + c] += t[(j1 * nx + j2) * k1 + c] * w;
                    }
                }
            }
        }
        let sp = jet_space(3, order);
        sp.monomials()
            .iter()
            .map(|e| {
                let (a, b, c) = (e[0] as usize, e[1] as usize, e[2] as usize);
                let mut s = zero;
                for j1 in 0..nx {
                    s += u[(j1 * k1 + b) * k1 + c] * weights[0][j1][a];
                }
                s.re / (factorial(a) * factorial(b) * factorial(c))
            })
            .collect()
    }

    pub fn value_at(&self, z: [f64; 3]) -> f64 {
        self.taylor_at(z, 0)[0]
    }
}

/// Removes fiber modes `|m| > modes` from every `θ`-column of a field
/// (no-op when `modes ≥ nt/2`).
pub fn project_fiber(values: &mut [f64], nt: usize, modes: usize) {
    if modes >= nt / 2 {
        return;
    }
    let mut p = FftPlanner::new();
    let fwd = p.plan_fft_forward(nt);
    let inv = p.plan_fft_inverse(nt);
    let mut buf = vec![Complex64::new(0.0, 0.0); nt];
    let scale = 1.0 / nt as f64;
    for col in values.chunks_mut(nt) {
        for (b, v) in buf.iter_mut().zip(col.iter()) {
            *b = Complex64::new(*v, 0.0);
        }
        fwd.process(&mut buf);
        for (j, b) in buf.iter_mut().enumerate() {
            if wavenumber(j, nt).abs() > modes as f64 {
                *b = Complex64::new(0.0, 0.0);
            }
        }
        inv.process(&mut buf);
        for (v, b) in col.iter_mut().zip(&buf) {
            *v = b.re * scale;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn field(nx: usize, nt: usize, f: impl Fn(f64, f64, f64) -> f64) -> Vec<f64> {
        let mut v = Vec::with_capacity(nx * nx * nt);
        for i in 0..nx {
            for j in 0..nx {
                for k in 0..nt {
                    let h = 2.0 * PI;
                    v.push(f(
                        h * i as f64 / nx as f64,
                        h * j as f64 / nx as f64,
                        h * k as f64 / nt as f64,
                    ));
                }
            }
        }
        v
    }

    #[test]
    fn fiber_projection_keeps_low_modes() {
        let f = |_: f64, b: f64, c: f64| b.sin() * (1.0 + (2.0 * c).cos()) + (5.0 * c).sin();
        let mut v = field(16, 16, f);
        project_fiber(&mut v, 16, 2);
        let want = field(16, 16, |_, b, c| b.sin() * (1.0 + (2.0 * c).cos()));
        for (x, y) in v.iter().zip(&want) {
            assert!((x - y).abs() < 1e-14);
        }
    }

    #[test]
    fn derivative_fields_of_trig_polynomial() {
        let f = |a: f64, b: f64, c: f64| (a + 2.0 * c).sin() * b.cos() + 0.3 * (3.0 * c).cos();
        let (nx, nt) = (16, 16);
        let s = Spectrum::from_values(&field(nx, nt, f), nx, nt);
        let d = s.derivative_field([1, 1, 2]);
        // ∂a ∂b ∂c² of sin(a + 2c) cos b = 4 cos(a + 2c) sin b
        let want = field(nx, nt, |a, b, c| 4.0 * (a + 2.0 * c).cos() * b.sin());
        for (x, y) in d.iter().zip(&want) {
            assert!((x - y).abs() < 1e-11);
        }
    }

    #[test]
    fn taylor_off_grid_matches_analytic() {
        let f = |a: f64, b: f64, c: f64| (a.cos() + 0.5 * (b - c).sin()).exp();
        let (nx, nt) = (32, 32);
        let s = Spectrum::from_values(&field(nx, nt, f), nx, nt);
        let z = [0.37, 1.91, 4.2];
        let tc = s.taylor_at(z, 2);
        assert!((tc[0] - f(z[0], z[1], z[2])).abs() < 1e-10);
        // coefficient of dz_a: ∂_a f = −sin a · f
        let sp = jet_space(3, 2);
        let ia = sp.index_of(&[1, 0, 0]).unwrap();
        assert!((tc[ia] + z[0].sin() * f(z[0], z[1], z[2])).abs() < 1e-9);
    }

    #[test]
    fn taylor_at_nodes_matches_fields() {
        let f = |a: f64, b: f64, c: f64| (a.sin() + (b + c).cos() * 0.2).exp();
        let (nx, nt) = (16, 16);
        let s = Spectrum::from_values(&field(nx, nt, f), nx, nt);
        let node = (3 * nx + 5) * nt + 7;
        let z = [
            2.0 * PI * 3.0 / 16.0,
            2.0 * PI * 5.0 / 16.0,
            2.0 * PI * 7.0 / 16.0,
        ];
        let tc = s.taylor_at(z, 3);
        let sp = jet_space(3, 3);
        for (i, e) in sp.monomials().iter().enumerate() {
            let fd = s.derivative_field([e[0], e[1], e[2]])[node];
            let fact: f64 = e.iter().map(|&k| factorial(k as usize)).product();
            assert!((tc[i] * fact - fd).abs() < 1e-10, "{e:?}");
        }
    }
}
