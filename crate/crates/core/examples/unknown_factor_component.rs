//! Estimates `Σ = σ₀FFᵀ + σ₁G₁ + σ₂G₂` when `F` is unknown.
//!
//! `cargo run --example unknown_factor_component`

use nalgebra::DMatrix;
use relcov::covstruct::{
    assemble, estimate_with_unknown_g0, stationarity_residual, FactorOptions,
};
use relcov::matrix::ar1_matrix;
use relcov::sampling::{mvn_sample, scatter_matrix};
use relcov::{RngSeed, ScatterMatrix, SymMatrix};

pub fn main() {
    let f = DMatrix::from_column_slice(5, 1, &[0.9, -0.4, 1.2, 0.3, -0.8]);
    let known = vec![ar1_matrix(5, 0.6).unwrap(), SymMatrix::identity(5)];
    let sigma = [0.5, 0.2, 0.3];
    let mut bases = vec![SymMatrix::from_lower(&f * f.transpose())];
    bases.extend(known.iter().cloned());
    let truth = assemble(&bases, &sigma);

    let exact = ScatterMatrix::from_matrix(truth.clone(), 1).unwrap();
    println!(
        "gradient norm at the truth: {:.1e}",
        stationarity_residual(&exact, &f, &known, &sigma).unwrap()
    );

    let samples = mvn_sample(&[0.0; 5], &truth, 20_000, RngSeed(9)).unwrap();
    let c = scatter_matrix(&samples);
    let fit = estimate_with_unknown_g0(&c, &known, 1, &FactorOptions::default()).unwrap();
    println!(
        "{} cycles, converged {}, log-likelihood {:.2} -> {:.2}",
        fit.cycles,
        fit.converged,
        fit.objective_trace[0],
        fit.objective_trace.last().unwrap()
    );
    // F and σ₀ trade scale, so compare the fitted covariance
    let fitted = fit.fitted().unwrap();
    println!(
        "Frobenius distance to the true covariance: {:.4}",
        fitted.frobenius_distance(&truth)
    );
    println!("known-basis coefficients: {:.4?} (true 0.2, 0.3)", &fit.sigma_hat[1..]);
}
