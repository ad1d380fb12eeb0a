//! Jet-based curvature of a Riemannian torus compared with a finite-difference
//! Christoffel-symbol computation.
//!
//! cargo run --release --example riemannian_oracle

use ffl::geometry::curvature_report;
use ffl::metric::{build_metric, sample_points, FamilyId, MetricSpec};
use ffl::verify::riemannian_oracle;

fn main() -> ffl::Result<()> {
    let spec = MetricSpec::new(FamilyId::RiemannianTorus, 2).with("amp", 0.1);
    let metric = build_metric(&spec)?;
    println!(
        "{:>24} {:>14} {:>14} {:>10}",
        "x", "Ric (jets)", "Ric (oracle)", "rel diff"
    );
    for (x, y) in sample_points(&spec, 8, 1) {
        let jets = curvature_report(&metric, &x, &y, false)?;
        let oracle = riemannian_oracle(&metric, &x, &y)?;
        let rel = (jets.ric - oracle.ric).abs() / jets.ric.abs().max(1e-12);
        println!(
            "{:>24} {:>14.9} {:>14.9} {rel:>10.2e}",
            format!("{x:.3?}"),
            jets.ric,
            oracle.ric
        );
    }
    Ok(())
}
