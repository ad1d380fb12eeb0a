//! Curvature at one point of a Randers metric with a position-dependent drift.
//!
//! cargo run --release --example inspect_curvature

use ffl::geometry::{coordinate_completion, curvature_report, flag_curvature};
use ffl::metric::{build_metric, FamilyId, MetricSpec};

fn main() -> ffl::Result<()> {
    let spec = MetricSpec::new(FamilyId::Randers, 2)
        .with("b1", 0.3)
        .with("wave", 0.2)
        .with("amp", 0.1);
    let metric = build_metric(&spec)?;
    let (x, y) = ([0.7, 1.9], [0.4, 1.0]);

    let r = curvature_report(&metric, &x, &y, true)?;
    println!("F = {:.6}", r.f);
    println!("g_ij = {:.6?}", r.g);
    println!("C^i_jk = {:.6?}", r.cartan);
    println!("G^i = {:.6?}", r.spray);
    println!("R^i_k = {:.6?}", r.reduced_curvature);
    println!("Ric = {:.6}", r.ric);
    println!("Ric_ij = {:.6?}", r.ric_tensor);

    for v in coordinate_completion(&r.g_matrix(), &y) {
        let v: Vec<f64> = v.iter().copied().collect();
        println!(
            "K(y, {v:.4?}) = {:.6}",
            flag_curvature(&metric, &x, &y, &v)?
        );
    }
    Ok(())
}
