//! End-to-end acceptance checks, run sequentially in one test so timings are
//! not distorted by parallel tests. Each criterion prints one PASS/FAIL line,
//! also when output is captured.

use std::io::Write;
use std::time::Instant;

use ffl::error::Error;
use ffl::flow::{run_flow, FlowConfig, FlowMode, GridState};
use ffl::metric::{FamilyId, MetricSpec};
use ffl::verify::*;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn all_pass(reports: &[ResidualReport], ids: &[&str]) -> (bool, String) {
    let mut ok = true;
    let mut parts = Vec::new();
    for id in ids {
        let found: Vec<&ResidualReport> = reports.iter().filter(|r| r.id == *id).collect();
        if found.is_empty() {
            ok = false;
            parts.push(format!("{id} missing"));
        }
        for r in found {
            ok &= r.status == Status::Pass;
            parts.push(format!(
                "{id} {:.2e}",
                if r.relative {
                    r.relative_error()
                } else {
                    r.max_abs
                }
            ));
        }
    }
    (ok, parts.join(", "))
}

fn riemannian_oracle_agreement() -> Outcome {
    let specs = [
        MetricSpec::new(FamilyId::RoundSphere, 2),
        MetricSpec::new(FamilyId::RoundSphere, 2).with("r", 2.0),
        MetricSpec::new(FamilyId::RiemannianTorus, 2).with("amp", 0.1),
    ];
    let mut ok = true;
    let mut parts = Vec::new();
    for spec in &specs {
        let t0 = Instant::now();
        let rep = oracle_section(std::slice::from_ref(spec), 200, 7).unwrap();
        let secs = t0.elapsed().as_secs_f64();
        let (pass, d) = all_pass(
            &rep.identities,
            &[
                "oracle_flag_curvature",
                "oracle_ricci_scalar",
                "oracle_ricci_tensor",
            ],
        );
        ok &= pass && secs < 10.0;
        parts.push(format!(
            "{:?} r={}: {d} in {secs:.2}s",
            spec.family,
            spec.param("r", 1.0)
        ));
    }
    outcome(ok, parts.join("; "))
}

fn cross_path_equivalence() -> Outcome {
    let mut specs = randers_corpus();
    specs.push(MetricSpec::new(FamilyId::RiemannianTorus, 2).with("amp", 0.1));
    let rep = cross_path_section(&specs, 200, 7).unwrap();
    let (ok, d) = all_pass(&rep.identities, &["cross_path_reduced_curvature"]);
    let tol_ok = rep
        .identities
        .iter()
        .all(|r| r.tol == Some(1e-7) && r.relative);
    outcome(ok && tol_ok, d)
}

fn symmetry_and_annihilation() -> Outcome {
    let rep = symmetry_section(&corpus(), 7).unwrap();
    let ids = [
        "cartan_total_symmetry",
        "cartan_annihilates_y",
        "reduced_curvature_annihilates_y",
        "hh_curvature_skew_last_pair",
        "hh_curvature_skew_first_pair",
        "metric_compatibility",
    ];
    let (ok, d) = all_pass(&rep.identities, &ids);
    let tol_ok = rep.identities.iter().all(|r| r.tol == Some(1e-8));
    outcome(ok && tol_ok, d)
}

fn parametric_sphere_closed_form() -> Outcome {
    let mut ok = true;
    let mut parts = Vec::new();
    for (n, r0) in [(2usize, 1.0f64), (2, 1.5), (3, 1.0)] {
        let kappa = (n - 1) as f64;
        let extinction = r0 * r0 / (2.0 * kappa);
        let mut cfg = FlowConfig::new(
            MetricSpec::new(FamilyId::RoundSphere, n).with("r", r0),
            FlowMode::Parametric,
        );
        cfg.dt = 1e-3;
        cfg.cadence = 0.01;
        cfg.t_end = ((extinction + 0.1) * 100.0).round() / 100.0;
        cfg.sample_count = 8;
        let run = run_flow(&cfg).unwrap();
        let mut worst_r: f64 = 0.0;
        let mut worst_ric: f64 = 0.0;
        for (s, r) in run.samples.iter().zip(&run.radii) {
            let r2 = r0 * r0 - 2.0 * kappa * s.t;
            worst_r = worst_r.max((r * r - r2).abs() / r2);
            let ric = kappa / r2;
            worst_ric = worst_ric.max((s.min_ric - ric).abs().max((s.max_ric - ric).abs()) / ric);
        }
        let stop_t = match run.stop {
            Some(Error::Extinction { t }) => t,
            _ => f64::NAN,
        };
        let pass = worst_r <= 1e-10
            && worst_ric <= 1e-10
            && (stop_t - extinction).abs() <= cfg.dt
            && run.samples.len() == run.radii.len()
            && !run.samples.is_empty();
        ok &= pass;
        parts.push(format!(
            "n={n} r0={r0}: r² {worst_r:.1e}, Ric {worst_ric:.1e}, extinction {stop_t} (expected {extinction})"
        ));
    }
    outcome(ok, parts.join("; "))
}

fn lower_bound_and_positivity(rep: &VerifyReport) -> (Outcome, Outcome) {
    let lower = rep.bound("ricci_lower_bound");
    let lower_ok = !lower.is_empty()
        && lower
            .iter()
            .all(|b| b.status == Status::Pass && b.min_margin() >= -1e-9);
    let lower_d = lower
        .iter()
        .map(|b| format!("{}: min margin {:.2e}", b.run, b.min_margin()))
        .collect::<Vec<_>>()
        .join("; ");
    let pos = rep.bound("curvature_positivity");
    let pos_ok = !pos.is_empty()
        && pos
            .iter()
            .all(|b| b.status == Status::Pass && b.first_violation.is_none());
    let pos_d = pos
        .iter()
        .map(|b| format!("{}: min {:.3}", b.run, b.min_margin()))
        .collect::<Vec<_>>()
        .join("; ");
    (outcome(lower_ok, lower_d), outcome(pos_ok, pos_d))
}

fn conversion_algebra() -> Outcome {
    let rep = conversion_section(&randers_corpus()).unwrap();
    let (ok, d) = all_pass(&rep.identities, &["sphere_bundle_conversion"]);
    outcome(ok, d)
}

fn indicatrix_frame() -> Outcome {
    let rep = indicatrix_section(&corpus()).unwrap();
    let (ok, d) = all_pass(
        &rep.identities,
        &["indicatrix_orthogonality", "gauss_formula"],
    );
    let counts_ok = rep
        .identities
        .iter()
        .all(|r| r.count >= 64 * corpus().len());
    outcome(ok && counts_ok, d)
}

fn final_phi(spec: &MetricSpec, dt: f64, t_end: f64) -> GridState {
    let mut cfg = FlowConfig::new(spec.clone(), FlowMode::Grid);
    cfg.nx = 32;
    cfg.ntheta = 32;
    cfg.dt = dt;
    cfg.t_end = t_end;
    cfg.cadence = t_end;
    cfg.sample_count = 1;
    let run = run_flow(&cfg).unwrap();
    assert!(run.stop.is_none(), "{:?}", run.stop);
    run.final_grid.unwrap()
}

fn max_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(p, q)| (p - q).abs())
        .fold(0.0, f64::max)
}

fn grid_self_convergence() -> Outcome {
    let t0 = Instant::now();
    // conformal bump u = 0.1 cos x¹ on the flat torus
    let spec = MetricSpec::new(FamilyId::RiemannianTorus, 2).with("amp", 0.1);
    let dts = [0.1, 0.05, 0.025, 0.0125];
    let phis: Vec<Vec<f64>> = dts
        .iter()
        .map(|&dt| final_phi(&spec, dt, 0.1).phi)
        .collect();
    // Richardson extrapolation of the two finest runs
    let (a, b) = (&phis[2], &phis[3]);
    let reference: Vec<f64> = b.iter().zip(a).map(|(h, h2)| h + (h - h2) / 15.0).collect();
    let errs: Vec<f64> = phis.iter().map(|p| max_diff(p, &reference)).collect();
    // the last ratio is 16 by construction of the reference, so it is not used
    let orders: Vec<f64> = (0..2).map(|k| (errs[k] / errs[k + 1]).log2()).collect();
    let band = 3f64.log2();
    let secs = t0.elapsed().as_secs_f64();
    let ok = orders.iter().all(|p| (p - 4.0).abs() <= band) && secs < 300.0;
    outcome(
        ok,
        format!(
            "errors {:?}, orders {:.2?} (band 4 ± {band:.3}), {secs:.1}s",
            errs.iter().map(|e| format!("{e:.2e}")).collect::<Vec<_>>(),
            orders
        ),
    )
}

fn report_only_outputs() -> Outcome {
    let run = || {
        let mut rep = evolution_section(&corpus(), 3).unwrap();
        let b = bounds_section(3).unwrap();
        rep.identities.extend(b.identities);
        rep.bounds.extend(b.bounds);
        rep.not_applicable.extend(b.not_applicable);
        rep
    };
    let first = run();
    let second = run();
    let general = |id: &str| {
        first
            .identities
            .iter()
            .filter(|r| r.id == id && r.samples.starts_with("flow direction"))
            .count()
    };
    let present = [
        "hh_curvature_evolution",
        "traced_curvature_evolution",
        "ricci_scalar_evolution",
    ]
    .iter()
    .all(|id| general(id) >= 3);
    let report_only = first
        .identities
        .iter()
        .filter(|r| r.samples.starts_with("flow direction"))
        .all(|r| r.status == Status::ReportOnly);
    let fitted: Vec<f64> = first
        .bound("curvature_ratio_bound")
        .iter()
        .filter_map(|b| b.fitted_c)
        .collect();
    let fitted_ok = !fitted.is_empty() && fitted.iter().all(|c| c.is_finite());
    let deterministic = first.to_json() == second.to_json();
    outcome(
        present && report_only && fitted_ok && deterministic,
        format!("general residuals present {present}, report-only {report_only}, fitted C {fitted:.3?}, deterministic {deterministic}"),
    )
}

#[test]
fn acceptance() {
    // start below libtest's `test acceptance ...` prefix
    writeln!(std::io::stdout().lock()).unwrap();
    let mut results: Vec<(&str, Outcome)> = Vec::new();
    let mut record = |name: &'static str, o: Outcome| {
        // written to the stdout handle directly so the lines survive output capture
        let mut out = std::io::stdout().lock();
        writeln!(
            out,
            "[{}] {name}: {}",
            if o.pass { "PASS" } else { "FAIL" },
            o.detail
        )
        .unwrap();
        out.flush().unwrap();
        results.push((name, o));
    };
    record(
        "1 riemannian oracle agreement",
        riemannian_oracle_agreement(),
    );
    record("2 cross-path reduced curvature", cross_path_equivalence());
    record("3 symmetries and annihilation", symmetry_and_annihilation());
    record(
        "4 parametric sphere closed form",
        parametric_sphere_closed_form(),
    );
    let bounds = bounds_section(0).unwrap();
    let (lower, pos) = lower_bound_and_positivity(&bounds);
    record("5 ricci lower bound", lower);
    record("6 positivity preservation", pos);
    record("7 sphere-bundle conversion", conversion_algebra());
    record(
        "8 indicatrix orthogonality and gauss formula",
        indicatrix_frame(),
    );
    record("9 grid self-convergence", grid_self_convergence());
    record("10 report-only outputs", report_only_outputs());
    let failed: Vec<&str> = results
        .iter()
        .filter(|(_, o)| !o.pass)
        .map(|(n, _)| *n)
        .collect();
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
