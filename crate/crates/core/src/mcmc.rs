//! Random-walk Metropolis sampler over a scalar latent θ with unnormalized
//! density `∏ N(x_i; θ, 1) · exp(-scale·|θ - x_i|)`.

use rand::Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sampling::RngSeed;

const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;

/// Smoothing constant of the linear-space acceptance ratio.
pub const LINEAR_SMOOTHING: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatentThetaModel {
    observations: Vec<f64>,
    phi_scale: f64,
}

impl LatentThetaModel {
    pub const DEFAULT_PHI_SCALE: f64 = 0.1;

    pub fn new(observations: Vec<f64>, phi_scale: f64) -> Result<Self> {
        if observations.iter().any(|x| !x.is_finite()) {
            return Err(Error::Input("observations must be finite".into()));
        }
        if !(phi_scale >= 0.0 && phi_scale.is_finite()) {
            return Err(Error::Domain(format!(
                "phi scale must be finite and non-negative, got {phi_scale}"
            )));
        }
        Ok(Self {
            observations,
            phi_scale,
        })
    }

    pub fn with_default_scale(observations: Vec<f64>) -> Result<Self> {
        Self::new(observations, Self::DEFAULT_PHI_SCALE)
    }

    pub fn observations(&self) -> &[f64] {
        &self.observations
    }

    pub fn phi_scale(&self) -> f64 {
        self.phi_scale
    }

    pub fn log_joint(&self, theta: f64) -> f64 {
        self.observations
            .iter()
            .map(|&x| {
                let r = x - theta;
                -LN_SQRT_2PI - 0.5 * r * r - self.phi_scale * r.abs()
            })
            .sum()
    }

    /// `exp(log_joint)`; may underflow to zero for long or distant data.
    pub fn joint_prob(&self, theta: f64) -> f64 {
        self.log_joint(theta).exp()
    }

    /// Direct product of the factors, for comparison with [`Self::joint_prob`].
    pub fn naive_joint_prob(&self, theta: f64) -> f64 {
        self.observations
            .iter()
            .map(|&x| likelihood(x, theta) * phi(theta, x, self.phi_scale))
            .product()
    }
}

/// Standard normal density of `xi - theta`.
pub fn likelihood(xi: f64, theta: f64) -> f64 {
    let r = xi - theta;
    (-0.5 * r * r - LN_SQRT_2PI).exp()
}

pub fn phi(theta: f64, xi: f64, scale: f64) -> f64 {
    (-scale * (theta - xi).abs()).exp()
}

/// How the Metropolis ratio is formed.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AcceptanceRule {
    /// `exp(log p* - log p)`, exact at any magnitude.
    #[default]
    LogSpace,
    /// `(p* + 1e-12) / (p + 1e-12)` on exponentiated densities. Biased once
    /// densities approach the smoothing constant.
    SmoothedLinear,
}

impl AcceptanceRule {
    pub fn probability(self, log_current: f64, log_proposed: f64) -> f64 {
        let ratio = match self {
            Self::LogSpace => (log_proposed - log_current).exp(),
            Self::SmoothedLinear => {
                (log_proposed.exp() + LINEAR_SMOOTHING) / (log_current.exp() + LINEAR_SMOOTHING)
            }
        };
        if ratio.is_nan() {
            // both densities are zero
            1.0
        } else {
            ratio.min(1.0)
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ThetaInit {
    /// Standard normal draw from the chain's generator.
    #[default]
    Random,
    Fixed(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetropolisOptions {
    pub iterations: usize,
    pub proposal_sd: f64,
    pub seed: RngSeed,
    pub init: ThetaInit,
    pub acceptance: AcceptanceRule,
}

impl Default for MetropolisOptions {
    fn default() -> Self {
        Self {
            iterations: 10_000,
            proposal_sd: 0.5,
            seed: RngSeed(0),
            init: ThetaInit::Random,
            acceptance: AcceptanceRule::LogSpace,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McmcChain {
    pub samples: Vec<f64>,
    pub acceptance_rate: f64,
    pub seed: RngSeed,
    pub proposal_sd: f64,
    pub initial_theta: f64,
}

/// One state per iteration; the state after each accept/reject is recorded.
pub fn metropolis(model: &LatentThetaModel, opts: &MetropolisOptions) -> Result<McmcChain> {
    if !(opts.proposal_sd > 0.0 && opts.proposal_sd.is_finite()) {
        return Err(Error::Domain(format!(
            "proposal sd must be positive, got {}",
            opts.proposal_sd
        )));
    }
    let mut rng = opts.seed.rng();
    let mut theta = match opts.init {
        ThetaInit::Random => StandardNormal.sample(&mut rng),
        ThetaInit::Fixed(t) if t.is_finite() => t,
        ThetaInit::Fixed(t) => return Err(Error::Input(format!("initial theta {t} is not finite"))),
    };
    let initial_theta = theta;
    let proposal = Normal::new(0.0, opts.proposal_sd)
        .map_err(|e| Error::Domain(e.to_string()))?;
    let mut log_p = model.log_joint(theta);
    let mut samples = Vec::with_capacity(opts.iterations);
    let mut accepted = 0usize;
    for _ in 0..opts.iterations {
        let star = theta + proposal.sample(&mut rng);
        let log_star = model.log_joint(star);
        let alpha = opts.acceptance.probability(log_p, log_star);
        let u: f64 = rng.random();
        if u < alpha {
            theta = star;
            log_p = log_star;
            accepted += 1;
        }
        samples.push(theta);
    }
    let acceptance_rate = if opts.iterations == 0 {
        0.0
    } else {
        accepted as f64 / opts.iterations as f64
    };
    Ok(McmcChain {
        samples,
        acceptance_rate,
        seed: opts.seed,
        proposal_sd: opts.proposal_sd,
        initial_theta,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainSummary {
    pub mean: f64,
    /// Divisor `n - 1`; zero for a single retained sample.
    pub variance: f64,
    pub acceptance_rate: f64,
    /// `None` when the retained samples are constant.
    pub effective_sample_size: Option<f64>,
    pub burn_in: usize,
    pub retained: usize,
}

/// Fraction of the chain discarded by default.
pub const DEFAULT_BURN_IN_FRACTION: f64 = 0.2;

pub fn default_burn_in(len: usize) -> usize {
    (len as f64 * DEFAULT_BURN_IN_FRACTION).floor() as usize
}

pub fn chain_summary(chain: &McmcChain, burn_in: usize) -> Result<ChainSummary> {
    if burn_in >= chain.samples.len() {
        return Err(Error::Input(format!(
            "burn-in {burn_in} leaves nothing of a chain of length {}",
            chain.samples.len()
        )));
    }
    let xs = &chain.samples[burn_in..];
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let ss: f64 = xs.iter().map(|x| (x - mean).powi(2)).sum();
    let variance = if xs.len() > 1 { ss / (n - 1.0) } else { 0.0 };
    Ok(ChainSummary {
        mean,
        variance,
        acceptance_rate: chain.acceptance_rate,
        effective_sample_size: effective_sample_size(xs),
        burn_in,
        retained: xs.len(),
    })
}

/// Initial positive sequence estimator: autocorrelations are summed in
/// adjacent pairs until a pair sum turns non-positive.
pub fn effective_sample_size(xs: &[f64]) -> Option<f64> {
    let n = xs.len();
    if n < 2 {
        return None;
    }
    let mean = xs.iter().sum::<f64>() / n as f64;
    let centered: Vec<f64> = xs.iter().map(|x| x - mean).collect();
    let c0 = centered.iter().map(|x| x * x).sum::<f64>() / n as f64;
    if !(c0 > 1e-300) {
        return None;
    }
    let rho = |lag: usize| -> f64 {
        centered[..n - lag]
            .iter()
            .zip(&centered[lag..])
            .map(|(a, b)| a * b)
            .sum::<f64>()
            / (n as f64 * c0)
    };
    let mut tau = -1.0;
    let mut k = 0;
    while 2 * k + 1 < n {
        let pair = rho(2 * k) + rho(2 * k + 1);
        if pair <= 0.0 {
            break;
        }
        tau += 2.0 * pair;
        k += 1;
    }
    Some(n as f64 / tau.max(1.0 / n as f64))
}
