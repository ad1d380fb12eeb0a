use std::f64::consts::TAU;

use ffl::flow::*;
use ffl::metric::{build_metric, FamilyId, MetricSpec};
use ffl::Error;

fn flat_grid(nx: usize, nt: usize, phi: impl Fn([f64; 2], f64) -> f64) -> GridState {
    let mut s = GridState::new(0.0, nx, nt, FamilyId::Euclidean, vec![0.0; nx * nx * nt]).unwrap();
    for idx in 0..s.len() {
        let (x, th) = s.node(idx);
        s.phi[idx] = phi(x, th);
    }
    s
}

fn grid_config(spec: MetricSpec, dt: f64, t_end: f64) -> FlowConfig {
    let mut cfg = FlowConfig::new(spec, FlowMode::Grid);
    cfg.nx = 16;
    cfg.ntheta = 16;
    cfg.dt = dt;
    cfg.t_end = t_end;
    cfg.cadence = t_end;
    cfg.sample_count = 4;
    cfg
}

#[test]
fn flat_torus_is_stationary() {
    let run = run_flow(&grid_config(
        MetricSpec::new(FamilyId::Euclidean, 2),
        0.01,
        0.05,
    ))
    .unwrap();
    assert!(run.stop.is_none());
    assert_eq!(run.samples.len(), 2);
    for s in &run.samples {
        assert!(s.min_ric.abs() < 1e-12 && s.max_ric.abs() < 1e-12);
        assert!((s.min_eig_g - 1.0).abs() < 1e-12);
    }
    let g = run.final_grid.unwrap();
    assert!(g.phi.iter().all(|v| v.abs() < 1e-12));
}

#[test]
fn fiber_mode_growth_rates() {
    // Around the flat metric φ = ε cos(k x¹) cos(mθ), m ≠ 1, has
    // ⟨Ric, φ⟩/⟨φ, φ⟩ = −k²(m² − 4)/4: fiber modes beyond m = 2 grow under the flow.
    let eps = 1e-6;
    for (k, m) in [
        (1.0, 0.0),
        (2.0, 0.0),
        (1.0, 2.0),
        (1.0, 3.0),
        (1.0, 4.0),
        (2.0, 4.0),
        (1.0, 6.0),
    ] {
        let s = flat_grid(16, 32, |x, th| eps * (k * x[0]).cos() * (m * th).cos());
        let f = grid_fields(&s).unwrap();
        let num: f64 = f.ric.iter().zip(&s.phi).map(|(r, p)| r * p).sum();
        let den: f64 = s.phi.iter().map(|p| p * p).sum();
        let want = -k * k * (m * m - 4.0) / 4.0;
        assert!(
            (num / den - want).abs() < 1e-4 * (1.0 + want.abs()),
            "k={k} m={m}: {}",
            num / den
        );
    }
}

#[test]
fn conformal_bump_curvature_on_grid() {
    // θ-independent φ = u(x¹) is Riemannian with K = −e^{−2u} u''
    let a = 0.1;
    let s = flat_grid(16, 16, |x, _| a * x[0].cos());
    let f = grid_fields(&s).unwrap();
    for (idx, ric) in f.ric.iter().enumerate() {
        let (x, _) = s.node(idx);
        let u = a * x[0].cos();
        assert!((ric - (-2.0 * u).exp() * u).abs() < 1e-12);
    }
}

#[test]
fn first_step_moves_against_curvature() {
    let spec = MetricSpec::new(FamilyId::RiemannianTorus, 2).with("amp", 0.1);
    let s0 = GridState::from_metric(&build_metric(&spec).unwrap(), 16, 16).unwrap();
    let f = grid_fields(&s0).unwrap();
    let s1 = step_flow_grid(&s0, 1e-3).unwrap();
    assert!((s1.t - 1e-3).abs() < 1e-15);
    for idx in 0..s0.len() {
        let d = s1.phi[idx] - s0.phi[idx];
        if f.ric[idx].abs() > 1e-3 {
            assert!(d * f.ric[idx] < 0.0);
            assert!((d / 1e-3 + f.ric[idx]).abs() < 1e-3 * f.ric[idx].abs());
        }
    }
}

#[test]
fn parametric_sphere_rows() {
    let mut cfg = FlowConfig::new(
        MetricSpec::new(FamilyId::RoundSphere, 2),
        FlowMode::Parametric,
    );
    cfg.dt = 0.1;
    cfg.cadence = 0.2;
    cfg.t_end = 0.4;
    cfg.sample_count = 4;
    let run = run_flow(&cfg).unwrap();
    let ric: Vec<f64> = run.samples.iter().map(|s| s.min_ric).collect();
    let want = [1.0, 1.0 / 0.6, 5.0];
    assert_eq!(ric.len(), 3);
    for (a, b) in ric.iter().zip(want) {
        assert!((a - b).abs() < 1e-10, "{ric:?}");
    }
    // Bernoulli bound α/(1 + αt) with α = 1
    for s in &run.samples {
        assert!((s.bernoulli_bound - 1.0 / (1.0 + s.t)).abs() < 1e-14);
    }
}

#[test]
fn parametric_sphere_stops_at_extinction() {
    let mut cfg = FlowConfig::new(
        MetricSpec::new(FamilyId::RoundSphere, 2),
        FlowMode::Parametric,
    );
    cfg.dt = 0.01;
    cfg.t_end = 0.6;
    let run = run_flow(&cfg).unwrap();
    match run.stop {
        Some(Error::Extinction { t }) => assert!((t - 0.5).abs() <= cfg.dt),
        other => panic!("expected extinction, got {other:?}"),
    }
    assert!(run.final_t < 0.5);
}

#[test]
fn grid_rejects_bad_sizes_and_sphere() {
    let mut cfg = grid_config(MetricSpec::new(FamilyId::Euclidean, 2), 0.01, 0.05);
    cfg.nx = 24;
    assert!(matches!(run_flow(&cfg), Err(Error::Config(_))));
    let cfg = grid_config(MetricSpec::new(FamilyId::RoundSphere, 2), 0.01, 0.05);
    assert!(matches!(run_flow(&cfg), Err(Error::NotApplicable(_))));
    let mut cfg = grid_config(MetricSpec::new(FamilyId::Euclidean, 2), 0.01, 0.05);
    cfg.cadence = 0.015;
    assert!(matches!(run_flow(&cfg), Err(Error::Config(_))));
}

#[test]
fn runs_are_deterministic() {
    let spec = MetricSpec::new(FamilyId::Randers, 2)
        .with("b1", 0.2)
        .with("wave", 0.1);
    let cfg = grid_config(spec, 0.002, 0.01);
    let a = run_flow(&cfg).unwrap();
    let b = run_flow(&cfg).unwrap();
    assert_eq!(a.csv(), b.csv());
    assert_eq!(a.final_grid, b.final_grid);
}

#[test]
fn snapshot_round_trip_through_file() {
    let spec = MetricSpec::new(FamilyId::ConformalPerturbation, 2).with("eps", 0.1);
    let mut cfg = grid_config(spec, 0.002, 0.004);
    cfg.cadence = 0.002;
    cfg.snapshots = true;
    let run = run_flow(&cfg).unwrap();
    assert_eq!(run.snapshots.len(), 3);
    let dir = tempfile::tempdir().unwrap();
    for s in &run.snapshots {
        let path = dir.path().join("snap.json");
        std::fs::write(&path, s.to_snapshot_json()).unwrap();
        let back = GridState::from_snapshot_json(&std::fs::read_to_string(&path).unwrap()).unwrap();
        assert_eq!(&back, s);
    }
    let metrics = run.metrics().unwrap();
    assert_eq!(metrics.len(), 3);
    // the reconstructed metric interpolates the grid exactly at the nodes
    let last = run.snapshots.last().unwrap();
    let m = reconstruct_metric(last).unwrap();
    for idx in (0..last.len()).step_by(97) {
        let (x, th) = last.node(idx);
        assert!((m.phi(&x, th) - last.phi[idx]).abs() < 1e-12);
        assert!(th < TAU);
    }
}

#[test]
fn corrupted_snapshot_is_rejected() {
    let s = flat_grid(16, 16, |_, _| 0.0);
    let mut v: serde_json::Value = serde_json::from_str(&s.to_snapshot_json()).unwrap();
    v["phi"].as_array_mut().unwrap().pop();
    assert!(matches!(
        GridState::from_snapshot_json(&v.to_string()),
        Err(Error::Config(_))
    ));
    assert!(GridState::from_snapshot_json("{not json").is_err());
}
