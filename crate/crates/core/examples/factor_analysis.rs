//! Principal-component factor extraction, varimax rotation and ω for a
//! one-factor solution.
//!
//! `cargo run --example factor_analysis`

use nalgebra::DVector;
use relcov::efa::{
    correlation_matrix, efa_reliability, extract_factors, varimax_fit, RetentionRule,
    VarimaxOptions,
};
use relcov::sampling::MvnSampler;
use relcov::{RngSeed, SymMatrix};

pub fn main() {
    // two blocks of three variables
    let r = SymMatrix::from_rows(&[
        vec![1.0, 0.6, 0.5, 0.1, 0.1, 0.0],
        vec![0.6, 1.0, 0.55, 0.15, 0.1, 0.05],
        vec![0.5, 0.55, 1.0, 0.1, 0.05, 0.1],
        vec![0.1, 0.15, 0.1, 1.0, 0.5, 0.45],
        vec![0.1, 0.1, 0.05, 0.5, 1.0, 0.55],
        vec![0.0, 0.05, 0.1, 0.45, 0.55, 1.0],
    ])
    .unwrap();
    let model = extract_factors(&r, RetentionRule::Kaiser).unwrap();
    println!("eigenvalues: {:.3?}", model.eigenvalues);
    println!("Kaiser keeps {} factors", model.m());
    let fit = varimax_fit(&model, VarimaxOptions::default()).unwrap();
    println!(
        "varimax: {} sweeps, criterion {:.4} -> {:.4}",
        fit.sweeps,
        fit.criterion_trace.first().unwrap(),
        fit.criterion_trace.last().unwrap()
    );
    println!("rotated loadings:{:.3}", fit.model.loadings);
    println!("communalities (unchanged by rotation): {:.3?}", fit.model.communalities);

    // one common factor: simulate, extract one factor, report omega
    let lambda = [0.8, 0.7, 0.75, 0.6, 0.65];
    let cov = SymMatrix::from_lower(nalgebra::DMatrix::from_fn(5, 5, |i, j| {
        if i == j {
            1.0
        } else {
            lambda[i] * lambda[j]
        }
    }));
    let sampler = MvnSampler::new(DVector::zeros(5), &cov).unwrap();
    let data = sampler.sample(2_000, &mut RngSeed(5).rng()).unwrap();
    let one = extract_factors(&correlation_matrix(&data).unwrap(), RetentionRule::Fixed(1)).unwrap();
    let omega = efa_reliability(&one).unwrap();
    println!("omega from 2000 draws = {:.4}", omega.coefficient);
}
