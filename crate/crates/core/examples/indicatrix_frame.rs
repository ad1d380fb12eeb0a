//! The indicatrix of a three-dimensional Randers metric: tangent frame,
//! orthogonality to `y`, the Gauss formula residual, and the second-order
//! data of `Ric` along the indicatrix.
//!
//! cargo run --release --example indicatrix_frame

use ffl::indicatrix::{gauss_formula_residual, indicatrix_basis, sm_hessian_ric};
use ffl::metric::{build_metric, FamilyId, MetricSpec};

fn main() -> ffl::Result<()> {
    let spec = MetricSpec::new(FamilyId::Randers, 3)
        .with("b1", 0.2)
        .with("b2", -0.1)
        .with("wave", 0.1);
    let metric = build_metric(&spec)?;
    let x = [0.3, 1.1, 2.0];

    for theta in [[0.9, 0.2], [1.6, 2.5], [2.3, 4.4]] {
        let frame = indicatrix_basis(&metric, &x, &theta)?;
        let gauss = gauss_formula_residual(&metric, &x, &theta)?;
        let h = sm_hessian_ric(&metric, &x, &theta)?;
        println!("θ = {theta:?}");
        println!("  y = {:.6?}", frame.y);
        println!("  induced metric = {:.6?}", frame.induced.as_slice());
        println!(
            "  |g(y, y_α)| = {:.2e}, Gauss residual = {gauss:.2e}",
            frame.orthogonality
        );
        println!(
            "  Ric = {:.6}, Hessian identity residual = {:.2e}, Levi-Civita gap = {:.2e}",
            h.ric,
            h.residual(),
            h.levi_civita_gap()
        );
    }
    Ok(())
}
