//! Runs selected verification sections and prints one line per check.
//!
//! cargo run --release --example verify_suite [section ...]

use ffl::verify::{run_verification, VerifyOptions};

fn main() -> ffl::Result<()> {
    let only: Vec<String> = std::env::args().skip(1).collect();
    let opts = VerifyOptions {
        only: (!only.is_empty()).then_some(only),
        ..Default::default()
    };
    let report = run_verification(&opts)?;
    for r in &report.identities {
        println!(
            "{:<8?} {:<36} {:<40} max {:.2e} (scale {:.2e})",
            r.status, r.id, r.samples, r.max_abs, r.scale
        );
    }
    for b in &report.bounds {
        println!(
            "{:<8?} {:<36} {:<40} min margin {:.3e}",
            b.status,
            b.id,
            b.run,
            b.min_margin()
        );
    }
    for na in &report.not_applicable {
        println!("n/a      {na}");
    }
    println!("passed: {}", report.passed());
    Ok(())
}
