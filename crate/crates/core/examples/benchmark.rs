//! A reduced benchmark: KR20, EFA and the structured-covariance fit scored
//! against the true single-variable reliability.
//!
//! `cargo run --release --example benchmark`

use relcov::bench::{render_report, run_benchmark, BenchPlan, ReportFormat};
use relcov::RngSeed;

pub fn main() {
    let plan = BenchPlan::sweep(RngSeed(1), 300, 25);
    for s in &plan.scenarios {
        println!("d = {:>2}, n = {}, {} replications", s.d, s.n, s.replications);
    }
    // the same plan as a config file for `simbench bench --config`
    let toml = plan.to_toml_string();
    assert_eq!(BenchPlan::from_toml_str(&toml).unwrap(), plan);
    let (table, manifest) = run_benchmark(&plan, true).unwrap();
    print!("{}", render_report(&table, ReportFormat::Text).unwrap());
    println!(
        "{} replications recorded; table recomputes from the manifest: {}",
        manifest.outcomes.len(),
        manifest.aggregate() == table
    );
}
