//! Metropolis sampling of the latent θ and an SVG trace plot.
//!
//! `cargo run --example latent_mcmc`

use relcov::bench::emit_trace_plot;
use relcov::mcmc::{
    chain_summary, default_burn_in, metropolis, LatentThetaModel, MetropolisOptions,
};
use relcov::RngSeed;

pub fn main() {
    let x = vec![0.8, 1.4, 1.1, 0.6, 1.9, 1.2, 0.7, 1.3];
    let model = LatentThetaModel::with_default_scale(x.clone()).unwrap();
    let opts = MetropolisOptions {
        iterations: 20_000,
        seed: RngSeed(2),
        ..Default::default()
    };
    let chain = metropolis(&model, &opts).unwrap();
    let s = chain_summary(&chain, default_burn_in(chain.samples.len())).unwrap();
    println!(
        "posterior mean {:.4}, variance {:.5}, acceptance {:.3}, ESS {:.0}",
        s.mean,
        s.variance,
        s.acceptance_rate,
        s.effective_sample_size.unwrap_or(0.0)
    );
    let xbar = x.iter().sum::<f64>() / x.len() as f64;
    println!("sample mean {xbar:.4}");

    // long data sets underflow a direct product but not the log density
    let far = LatentThetaModel::with_default_scale(vec![30.0; 300]).unwrap();
    println!(
        "300 distant points: product {:e}, log density {:.1}",
        far.naive_joint_prob(0.0),
        far.log_joint(0.0)
    );

    let path = std::env::temp_dir().join("relcov_theta_trace.svg");
    emit_trace_plot(&chain, &path).unwrap();
    println!("trace plot written to {}", path.display());
}
