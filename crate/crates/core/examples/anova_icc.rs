//! One-way ANOVA, random-effects variance components and the intraclass
//! correlation, plus a balanced two-way decomposition.
//!
//! `cargo run --example anova_icc`

use rand_distr::{Distribution, Normal};
use relcov::anova::{
    estimate_random_effects, icc, oneway_f_test, pairwise_t_test, twoway_decompose,
    GroupedObservations, TwoWayLayout,
};
use relcov::ingest::parse_groups;
use relcov::RngSeed;

pub fn main() {
    let g = parse_groups(
        "rater,score\nA,4.1\nA,3.8\nA,4.4\nB,5.0\nB,5.3\nB,4.7\nC,3.1\nC,3.6\nC,2.9\n",
    )
    .unwrap();
    let table = oneway_f_test(&g).unwrap();
    println!(
        "between SS {:.4} (df {}), within SS {:.4} (df {}), total {:.4}",
        table.between_ss, table.df_between, table.within_ss, table.df_within, table.total_ss
    );
    println!(
        "F = {:.3}, p = {:.2e}",
        table.f_stat.unwrap(),
        table.p_value.unwrap()
    );
    let t = pairwise_t_test(&g, 0, 2).unwrap();
    println!("A vs C: t({}) = {:.3}, p = {:.4}", t.df, t.t_stat, t.p_value);

    // simulate 200 groups of 5 with known components and recover them
    let mut rng = RngSeed(11).rng();
    let between = Normal::new(0.0, 1.5).unwrap();
    let within = Normal::new(0.0, 1.0).unwrap();
    let groups = (0..200)
        .map(|_| {
            let a = between.sample(&mut rng);
            (0..5).map(|_| 10.0 + a + within.sample(&mut rng)).collect()
        })
        .collect();
    let sim = GroupedObservations::new(groups).unwrap();
    let vc = estimate_random_effects(&sim).unwrap();
    let rho = icc(&vc).unwrap();
    println!(
        "sigma_a^2 = {:.3} (true 2.25), sigma^2 = {:.3} (true 1), ICC = {:.3} (true {:.3})",
        vc.sigma_a2,
        vc.sigma2,
        rho.coefficient,
        2.25 / 3.25
    );

    let layout = TwoWayLayout::new(vec![
        vec![vec![1.0, 1.2], vec![2.0, 2.2], vec![3.1, 2.9]],
        vec![vec![2.0, 2.1], vec![3.2, 2.8], vec![4.0, 4.1]],
    ])
    .unwrap();
    let c = twoway_decompose(&layout);
    println!(
        "two-way: rows {:.3}, columns {:.3}, interaction {:.3}, residual {:.3}",
        c.row_ss, c.column_ss, c.interaction_ss, c.residual_ss
    );
}
