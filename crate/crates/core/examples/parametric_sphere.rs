//! Homothetic flow of the round sphere against `r(t)² = r0² − 2(n − 1)t`.
//!
//! cargo run --release --example parametric_sphere

use ffl::flow::{run_flow, FlowConfig, FlowMode};
use ffl::metric::{FamilyId, MetricSpec};

fn main() -> ffl::Result<()> {
    let mut cfg = FlowConfig::new(
        MetricSpec::new(FamilyId::RoundSphere, 3).with("r", 1.5),
        FlowMode::Parametric,
    );
    cfg.dt = 1e-3;
    cfg.cadence = 0.05;
    cfg.t_end = 0.6;
    let run = run_flow(&cfg)?;

    println!("{:>6} {:>12} {:>12} {:>12}", "t", "r", "exact r", "Ric");
    for (s, r) in run.samples.iter().zip(&run.radii) {
        let exact = (1.5f64.powi(2) - 4.0 * s.t).sqrt();
        println!("{:>6.2} {r:>12.8} {exact:>12.8} {:>12.6}", s.t, s.min_ric);
    }
    if let Some(stop) = &run.stop {
        println!(
            "stopped: {stop} (closed form: t = {})",
            1.5f64.powi(2) / 4.0
        );
    }
    Ok(())
}
