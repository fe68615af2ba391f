//! KR20, KR21 and the definitional ratio on a small binary test.
//!
//! `cargo run --example classical_reliability`

use relcov::ingest::parse_items;
use relcov::reliability::{
    item_stats, kr20, kr20_with, kr21, per_item_reliability, reliability_definitional,
    variance_of_mean, VarianceDivisor,
};

const RESPONSES: &str = "\
q1,q2,q3,q4,q5,q6
1,1,1,0,1,1
1,0,1,0,0,1
0,0,1,0,0,0
1,1,1,1,1,1
1,1,0,1,1,0
0,0,0,0,1,0
1,1,1,1,0,1
0,1,0,0,0,0
1,1,1,0,1,1
1,0,1,1,1,1
";

pub fn main() {
    let items = parse_items(RESPONSES).expect("well-formed item file");
    let stats = item_stats(&items).unwrap();
    println!("{} subjects, {} items", items.n(), items.k());
    println!("difficulties: {:?}", stats.p);
    println!("total-score variance: {:.4}", stats.sigma_x2);

    let r20 = kr20(&items).unwrap();
    let r21 = kr21(&items).unwrap();
    println!("KR20 = {:.4}", r20.coefficient);
    println!("KR21 = {:.4} (never above KR20)", r21.coefficient);
    assert!(r21.coefficient <= r20.coefficient + 1e-12);

    // n - 1 in the total variance, population item variances
    let sample = kr20_with(&items, VarianceDivisor::Sample).unwrap();
    println!("KR20 with sample total variance = {:.4}", sample.coefficient);

    // what one item of this test would achieve on its own
    let single = per_item_reliability(r20.coefficient, items.k()).unwrap();
    println!("implied single-item reliability = {single:.4}");

    let r = reliability_definitional(4.0, 1.0).unwrap();
    println!("observed variance 4, error variance 1 -> r = {}", r.coefficient);

    let v = variance_of_mean(1.0, 4, 3.0).unwrap();
    println!("variance of a 4-item mean with covariance sum 3: {}", v.var_of_mean);
}
