use std::f64::consts::TAU;

use ffl::format::fmt_f64;
use ffl::jet::jet_space;
use ffl::spectral::{project_fiber, Spectrum};
use ffl::verify::{bernoulli_checked, bernoulli_rk4, bernoulli_solution};
use ffl::Error;
use proptest::prelude::*;

fn column_field(nt: usize, coeffs: &[(f64, f64)]) -> Vec<f64> {
    (0..nt)
        .map(|k| {
            let th = TAU * k as f64 / nt as f64;
            coeffs
                .iter()
                .enumerate()
                .map(|(m, (a, b))| a * (m as f64 * th).cos() + b * (m as f64 * th).sin())
                .sum()
        })
        .collect()
}

proptest! {
    #[test]
    fn fmt_f64_round_trips(v in any::<f64>().prop_filter("finite", |v| v.is_finite())) {
        let back: f64 = fmt_f64(v).parse().unwrap();
        prop_assert_eq!(back.to_bits(), v.to_bits());
    }

    #[test]
    fn bernoulli_solves_its_ode(alpha in -3.0f64..3.0, t in 0.0f64..2.0) {
        prop_assume!(1.0 + alpha * t > 0.2);
        let u = bernoulli_solution(alpha, t);
        let h = 1e-5;
        let du = (bernoulli_solution(alpha, t + h) - bernoulli_solution(alpha, t - h)) / (2.0 * h);
        prop_assert!((du + u * u).abs() < 1e-6 * (1.0 + u * u));
        prop_assert!((bernoulli_rk4(alpha, t, 400) - u).abs() < 1e-8 * (1.0 + u.abs()));
        prop_assert_eq!(bernoulli_solution(alpha, 0.0), alpha);
    }

    #[test]
    fn bernoulli_pole_is_reported(alpha in -5.0f64..-0.1, extra in 0.0f64..1.0) {
        let pole = -1.0 / alpha;
        match bernoulli_checked(alpha, pole + extra) {
            Err(Error::PoleReached(t)) => prop_assert!((t - pole).abs() < 1e-12),
            other => prop_assert!(false, "{:?}", other),
        }
        prop_assert!(bernoulli_solution(alpha, pole + extra).is_nan());
    }

    #[test]
    fn fiber_projection_is_idempotent_and_keeps_low_modes(
        coeffs in proptest::collection::vec((-1.0f64..1.0, -1.0f64..1.0), 8),
        modes in 0usize..6,
    ) {
        let nt = 16;
        let full = column_field(nt, &coeffs);
        let low = column_field(nt, &coeffs[..=modes]);
        let mut once = full.clone();
        project_fiber(&mut once, nt, modes);
        for (a, b) in once.iter().zip(&low) {
            prop_assert!((a - b).abs() < 1e-12);
        }
        let mut twice = once.clone();
        project_fiber(&mut twice, nt, modes);
        for (a, b) in once.iter().zip(&twice) {
            prop_assert!((a - b).abs() < 1e-13);
        }
    }

    #[test]
    fn spectral_interpolation_is_exact_for_trig_polynomials(
        a in -1.0f64..1.0, b in -1.0f64..1.0, c in -1.0f64..1.0,
        z in proptest::array::uniform3(0.0f64..TAU),
    ) {
        let (nx, nt) = (16, 16);
        let f = |x1: f64, x2: f64, th: f64| a * (2.0 * x1).cos() + b * (x2 - th).sin() + c * (3.0 * th).cos() * x1.sin();
        let mut values = Vec::with_capacity(nx * nx * nt);
        for i1 in 0..nx {
            for i2 in 0..nx {
                for k in 0..nt {
                    let g = |i: usize, n: usize| TAU * i as f64 / n as f64;
                    values.push(f(g(i1, nx), g(i2, nx), g(k, nt)));
                }
            }
        }
        let sp = Spectrum::from_values(&values, nx, nt);
        prop_assert!((sp.value_at(z) - f(z[0], z[1], z[2])).abs() < 1e-12);
    }

    #[test]
    fn jet_elementary_identities(x in 0.2f64..3.0, y in -2.0f64..2.0) {
        let sp = jet_space(2, 5);
        let u = sp.variable(0, x);
        let v = sp.variable(1, y);
        let zero = |j: &ffl::jet::Jet| j.coeffs().iter().all(|c| c.abs() < 1e-11);
        // exp(ln u) = u, sin² + cos² = 1, sqrt(u)² = u, u · u⁻¹ = 1
        prop_assert!(zero(&(u.ln().exp() - &u)));
        prop_assert!(zero(&(v.sin() * v.sin() + v.cos() * v.cos() - 1.0)));
        prop_assert!(zero(&(u.sqrt() * u.sqrt() - &u)));
        prop_assert!(zero(&(&u * u.recip() - 1.0)));
        prop_assert!(zero(&(u.powf(2.5) - u.powf(0.5) * &u * &u)));
        // tan(atan v) = v through sin/cos
        let t = v.atan();
        prop_assert!(zero(&(t.sin() * t.cos().recip() - &v)));
        // ∂/∂u of u²v = 2uv
        let p = &u * &u * &v;
        prop_assert!((p.d(0).value() - 2.0 * x * y).abs() < 1e-12);
        prop_assert!((p.derivative(&[2, 1]) - 2.0).abs() < 1e-12);
    }
}
