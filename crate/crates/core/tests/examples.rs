//! Every example runs to completion.

#[path = "../examples/classical_reliability.rs"]
mod classical_reliability;

#[path = "../examples/anova_icc.rs"]
mod anova_icc;

#[path = "../examples/cochran_check.rs"]
mod cochran_check;

#[path = "../examples/factor_analysis.rs"]
mod factor_analysis;

#[path = "../examples/covariance_mle.rs"]
mod covariance_mle;

#[path = "../examples/unknown_factor_component.rs"]
mod unknown_factor_component;

#[path = "../examples/latent_mcmc.rs"]
mod latent_mcmc;

#[path = "../examples/benchmark.rs"]
mod benchmark;

mod run {
    #[test]
    fn classical_reliability() {
        super::classical_reliability::main();
    }

    #[test]
    fn anova_icc() {
        super::anova_icc::main();
    }

    #[test]
    fn cochran_check() {
        super::cochran_check::main();
    }

    #[test]
    fn factor_analysis() {
        super::factor_analysis::main();
    }

    #[test]
    fn covariance_mle() {
        super::covariance_mle::main();
    }

    #[test]
    fn unknown_factor_component() {
        super::unknown_factor_component::main();
    }

    #[test]
    fn latent_mcmc() {
        super::latent_mcmc::main();
    }

    #[test]
    fn benchmark() {
        super::benchmark::main();
    }
}
