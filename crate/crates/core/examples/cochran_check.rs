//! Splits `‖x‖²` for standard normal `x` into the within-group,
//! between-group and grand-mean quadratic forms and checks each against its
//! chi-squared law.
//!
//! `cargo run --example cochran_check`

use relcov::anova::{cochran_empirical_check, CochranDecomposition};
use relcov::RngSeed;

pub fn main() {
    let d = CochranDecomposition::oneway(&[3, 4, 5]).unwrap();
    println!("ranks {:?} over dimension {}", d.ranks(), d.dim());
    let report = cochran_empirical_check(&d, 5_000, RngSeed(3)).unwrap();
    println!("ranks sum to the dimension: {}", report.hypotheses_met);
    for (j, ks) in report.ks.iter().enumerate() {
        if let Some(ks) = ks {
            println!(
                "form {j} vs chi2({}): D = {:.4}, p = {:.3}",
                report.ranks[j], ks.statistic, ks.p_value
            );
        }
    }
    for c in &report.correlations {
        println!("corr(form {}, form {}) = {:+.4}", c.i, c.j, c.correlation);
    }
}
