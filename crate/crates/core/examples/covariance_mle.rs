//! Maximum-likelihood coefficients for `Σ = 0.1·G₀ + 0.2·G₁ + 0.3·G₂` with
//! AR(1) bases, recovered from simulated data, plus a GLS mean fit.
//!
//! `cargo run --example covariance_mle`

use nalgebra::DVector;
use relcov::covstruct::{
    estimate_sigma, gls_beta, reliability_from_components, trace_system, CovarianceStructure,
    EstimateOptions, GlsDesign,
};
use relcov::matrix::ar1_matrix;
use relcov::sampling::{mvn_sample, scatter_matrix};
use relcov::{RngSeed, ScatterMatrix};

pub fn main() {
    let d = 5;
    let bases: Vec<_> = [0.9, 0.6, 0.3]
        .iter()
        .map(|&rho| ar1_matrix(d, rho).unwrap())
        .collect();
    let truth = CovarianceStructure::new(bases.clone(), vec![0.1, 0.2, 0.3]).unwrap();
    let sigma = truth.assemble_sigma();
    println!("diagonal of the true covariance: {:.2?}", (0..d).map(|i| sigma.get(i, i)).collect::<Vec<_>>());

    // with C equal to the truth the trace equations hold exactly
    let exact = ScatterMatrix::from_matrix(sigma.clone(), 1).unwrap();
    let sys = trace_system(&sigma, &bases, &exact).unwrap();
    let lhs = &sys.a * DVector::from_column_slice(truth.coefficients());
    println!("|A·σ − b| at the truth: {:.1e}", (lhs - &sys.b).norm());

    for n in [100, 1_000, 10_000] {
        let samples = mvn_sample(&[0.0; 5], &sigma, n, RngSeed(n as u64)).unwrap();
        let c = scatter_matrix(&samples);
        let fit = estimate_sigma(&c, &bases, &EstimateOptions::default()).unwrap();
        println!(
            "n = {n:>5}: sigma-hat = {:.4?} after {} iterations (converged {})",
            fit.sigma_hat, fit.iterations, fit.converged
        );
        let r = reliability_from_components(&fit, 2).unwrap();
        println!("          reliability with basis 2 as error: {:.4}", r.coefficient);
    }

    // GLS estimate of a linear trend in the mean under the same covariance
    let design = GlsDesign::new(vec![
        DVector::from_element(d, 1.0),
        DVector::from_fn(d, |i, _| i as f64),
    ])
    .unwrap();
    let x = DVector::from_column_slice(&[1.1, 1.9, 3.2, 3.9, 5.1]);
    let beta = gls_beta(&design, &sigma, &x).unwrap();
    println!("GLS intercept {:.4}, slope {:.4}", beta[0], beta[1]);
}
