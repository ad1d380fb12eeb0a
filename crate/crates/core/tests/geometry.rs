//! Curvature of metrics with closed-form geometry, and homogeneity
//! invariants on the corpus.

use ffl::geometry::*;
use ffl::metric::{build_metric, sample_points, FamilyId, FinslerMetric, MetricFamily, MetricSpec};
use ffl::verify::corpus;
use nalgebra::DMatrix;
use proptest::prelude::*;

fn spec(family: FamilyId, n: usize) -> MetricSpec {
    MetricSpec::new(family, n)
}

fn metric(s: &MetricSpec) -> MetricFamily {
    build_metric(s).unwrap()
}

#[test]
fn sphere_flag_curvature_is_inverse_square_radius() {
    for n in [2, 3] {
        for r in [0.5, 1.0, 2.0] {
            let s = spec(FamilyId::RoundSphere, n).with("r", r);
            let m = metric(&s);
            for (x, y) in sample_points(&s, 10, 1) {
                let pj = PointJets::new(&m, &x, &y, 4).unwrap();
                let g = pj.g();
                for v in coordinate_completion(&g, &y) {
                    let v: Vec<f64> = v.iter().copied().collect();
                    let k = flag_curvature(&m, &x, &y, &v).unwrap();
                    assert!((k - 1.0 / (r * r)).abs() < 1e-10, "n={n} r={r}: K = {k}");
                }
                let ric = ricci_scalar(&m, &x, &y).unwrap();
                assert!((ric - (n - 1) as f64 / (r * r)).abs() < 1e-10);
            }
        }
    }
}

#[test]
fn conformal_torus_gaussian_curvature() {
    // K = −e^{−2u} Δu for g = e^{2u} δ, u = a cos x¹
    let a = 0.1;
    let s = spec(FamilyId::RiemannianTorus, 2).with("amp", a);
    let m = metric(&s);
    for (x, y) in sample_points(&s, 20, 2) {
        let u = a * x[0].cos();
        let want = (-2.0 * u).exp() * a * x[0].cos();
        let ric = ricci_scalar(&m, &x, &y).unwrap();
        assert!((ric - want).abs() < 1e-12, "{ric} vs {want}");
        let az = ricci_tensor_az1(&m, &x, &y).unwrap();
        let (g, _) = fundamental_tensor(&m, &x, &y).unwrap();
        // Ric_ij = K g_ij in two dimensions
        assert!((az - &g * want).amax() < 1e-11);
    }
}

#[test]
fn euclidean_is_flat() {
    let s = spec(FamilyId::Euclidean, 3);
    let m = metric(&s);
    for (x, y) in sample_points(&s, 5, 3) {
        let r = curvature_report(&m, &x, &y, true).unwrap();
        assert!(r
            .cartan
            .iter()
            .chain(&r.spray)
            .chain(&r.reduced_curvature)
            .all(|v| v.abs() < 1e-14));
        assert!(r.hh_curvature.unwrap().iter().all(|v| v.abs() < 1e-14));
        assert_eq!(r.ric, 0.0);
    }
}

#[test]
fn minkowski_randers_is_flat_but_not_riemannian() {
    let s = spec(FamilyId::Randers, 2).with("b1", 0.3).with("b2", -0.2);
    let m = metric(&s);
    for (x, y) in sample_points(&s, 8, 4) {
        let r = curvature_report(&m, &x, &y, true).unwrap();
        assert!(r
            .spray
            .iter()
            .chain(&r.reduced_curvature)
            .all(|v| v.abs() < 1e-13));
        assert!(r.cartan.iter().any(|v| v.abs() > 1e-3));
    }
}

/// `g_ij = (F/α)(δ_ij − α_i α_j) + (b_i + α_i)(b_j + α_j)` with `α_i = y_i/α`.
fn randers_g(b: &[f64], y: &[f64]) -> DMatrix<f64> {
    let n = y.len();
    let alpha = y.iter().map(|v| v * v).sum::<f64>().sqrt();
    let beta: f64 = b.iter().zip(y).map(|(p, q)| p * q).sum();
    let f = alpha + beta;
    DMatrix::from_fn(n, n, |i, j| {
        let (ai, aj) = (y[i] / alpha, y[j] / alpha);
        let delta = if i == j { 1.0 } else { 0.0 };
        f / alpha * (delta - ai * aj) + (b[i] + ai) * (b[j] + aj)
    })
}

#[test]
fn randers_fundamental_tensor_matches_formula() {
    let b = [0.2, 0.1, -0.05];
    let s = spec(FamilyId::Randers, 3)
        .with("b1", b[0])
        .with("b2", b[1])
        .with("b3", b[2]);
    let m = metric(&s);
    for (x, y) in sample_points(&s, 12, 5) {
        let (g, _) = fundamental_tensor(&m, &x, &y).unwrap();
        assert!((g - randers_g(&b, &y)).amax() < 1e-13);
    }
}

#[test]
fn randers_cartan_vanishes_along_drift() {
    let s = spec(FamilyId::Randers, 2).with("b1", 0.3);
    let m = metric(&s);
    let along = cartan_tensor(&m, &[0.0, 0.0], &[1.0, 0.0]).unwrap();
    assert!(along.max_abs() < 1e-15);
    let across = cartan_tensor(&m, &[0.0, 0.0], &[0.0, 1.0]).unwrap();
    assert!(across.max_abs() > 0.1);
}

#[test]
fn flag_curvature_rejects_non_orthogonal_edge() {
    let s = spec(FamilyId::RoundSphere, 2);
    let m = metric(&s);
    let err = flag_curvature(&m, &[1.0, 0.2], &[1.0, 0.0], &[1.0, 1.0]).unwrap_err();
    assert!(matches!(err, ffl::Error::NotOrthogonal(_)));
}

#[test]
fn covariant_derivative_valence_guard() {
    let s = spec(FamilyId::Euclidean, 2);
    let m = metric(&s);
    let pj = PointJets::new(&m, &[0.0, 0.0], &[1.0, 0.0], 3).unwrap();
    let comps = vec![pj.g_jets()[0].clone(); 16];
    let field = TensorField {
        upper: 2,
        lower: 2,
        comps,
    };
    assert!(matches!(
        covariant_derivatives(&pj, &field),
        Err(ffl::Error::ValenceUnsupported(2, 2))
    ));
}

fn corpus_metrics() -> Vec<(MetricSpec, MetricFamily)> {
    corpus()
        .into_iter()
        .map(|s| (s.clone(), metric(&s)))
        .collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn curvature_is_invariant_under_fiber_scaling(which in 0usize..5, k in 0usize..16, lambda in 0.2f64..5.0) {
        let metrics = corpus_metrics();
        let (s, m) = &metrics[which % metrics.len()];
        let (x, y) = sample_points(s, 16, 9)[k].clone();
        let ys: Vec<f64> = y.iter().map(|v| v * lambda).collect();
        let a = PointJets::new(m, &x, &y, 4).unwrap();
        let b = PointJets::new(m, &x, &ys, 4).unwrap();
        prop_assert!((a.g() - b.g()).amax() < 1e-10);
        let ra: Vec<f64> = a.reduced_curvature_jets().iter().map(|j| j.value()).collect();
        let rb: Vec<f64> = b.reduced_curvature_jets().iter().map(|j| j.value()).collect();
        for (p, q) in ra.iter().zip(&rb) {
            prop_assert!((p - q).abs() < 1e-9 * (1.0 + p.abs()));
        }
        prop_assert!((m.eval(&x, &ys) - lambda * m.eval(&x, &y)).abs() < 1e-12 * lambda);
    }

    #[test]
    fn euler_identities_hold(which in 0usize..5, k in 0usize..16) {
        let metrics = corpus_metrics();
        let (s, m) = &metrics[which % metrics.len()];
        let (x, y) = sample_points(s, 16, 10)[k].clone();
        let pj = PointJets::new(m, &x, &y, 4).unwrap();
        let n = pj.n;
        let g = pj.g();
        let yv = nalgebra::DVector::from_column_slice(&y);
        // g(y, y) = F²
        prop_assert!((yv.dot(&(&g * &yv)) - pj.f2().value()).abs() < 1e-12 * pj.f2().value());
        // G^i is 2-homogeneous: y^j ∂G^i/∂y^j = 2G^i
        for i in 0..n {
            let gi = &pj.spray_jets()[i];
            let euler: f64 = (0..n).map(|j| y[j] * gi.d(pj.yvar(j)).value()).sum();
            prop_assert!((euler - 2.0 * gi.value()).abs() < 1e-11 * (1.0 + gi.value().abs()));
        }
    }
}
