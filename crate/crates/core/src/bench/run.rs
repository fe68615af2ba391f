use std::time::{SystemTime, UNIX_EPOCH};

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{BenchMethod, BenchPlan, ScenarioConfig};
use super::report::{BenchRow, BenchTable};
use crate::covstruct::{
    estimate_sigma, reliability_from_components, reliability_from_structure, CovarianceStructure,
    EstimateOptions,
};
use crate::efa::{correlation_matrix, efa_reliability, extract_factors, RetentionRule};
use crate::error::{Error, Result};
use crate::matrix::{validate_spd, SpdVerdict, SymMatrix, SPD_TOLERANCE};
use crate::reliability::{kr20, per_item_reliability, ItemResponseMatrix};
use crate::sampling::{scatter_matrix, MvnSampler, SampleSet, ScatterMatrix};

/// One replication's data.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub samples: SampleSet,
    pub scatter: ScatterMatrix,
    pub bases: Vec<SymMatrix>,
    pub sigma: SymMatrix,
    /// Reliability of a single variable under the true coefficients.
    pub true_reliability: f64,
}

/// Draws replication `rep` of `cfg` on its own substream.
pub fn generate_scenario(cfg: &ScenarioConfig, rep: usize) -> Result<Scenario> {
    cfg.validate()?;
    let bases = cfg.build_bases()?;
    let structure = CovarianceStructure::new(bases.clone(), cfg.sigma_true.clone())?;
    let sigma = structure.assemble_sigma();
    if validate_spd(&sigma, SPD_TOLERANCE)? != SpdVerdict::Spd {
        return Err(Error::Config(
            "true covariance is not positive definite".into(),
        ));
    }
    let true_reliability = reliability_from_structure(&structure, cfg.error_basis)?.coefficient;
    let sampler = MvnSampler::new(DVector::zeros(cfg.d), &sigma)?;
    let mut rng = cfg.seed.substream(rep as u64);
    let samples = sampler.sample(cfg.n, &mut rng)?;
    let scatter = scatter_matrix(&samples);
    Ok(Scenario {
        samples,
        scatter,
        bases,
        sigma,
        true_reliability,
    })
}

/// Each variable scored 1 above its true mean, 0 otherwise.
pub fn dichotomize(samples: &SampleSet) -> Result<ItemResponseMatrix> {
    let mu = samples.mu();
    let x = samples.rows();
    let items = DMatrix::from_fn(x.nrows(), x.ncols(), |i, j| {
        if x[(i, j)] > mu[j] {
            1.0
        } else {
            0.0
        }
    });
    ItemResponseMatrix::new(items)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodOutcome {
    pub method: BenchMethod,
    pub estimate: Option<f64>,
    pub error_pct: Option<f64>,
    pub failure: Option<String>,
    /// `Some(false)` for an estimator that ran out of iterations.
    pub converged: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicationOutcome {
    pub scenario: usize,
    pub replication: usize,
    pub true_reliability: Option<f64>,
    pub methods: Vec<MethodOutcome>,
}

/// Everything needed to rerun a benchmark and recompute its table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub software_version: String,
    pub config: BenchPlan,
    pub parallel: bool,
    pub started_unix_ms: u128,
    pub finished_unix_ms: u128,
    pub outcomes: Vec<ReplicationOutcome>,
}

impl RunManifest {
    /// The table implied by the recorded outcomes.
    pub fn aggregate(&self) -> BenchTable {
        aggregate(&self.config.methods, &self.outcomes)
    }

    pub fn non_converged(&self) -> usize {
        self.outcomes
            .iter()
            .flat_map(|o| &o.methods)
            .filter(|m| m.converged == Some(false))
            .count()
    }
}

fn single_item(r: f64, d: usize) -> Result<f64> {
    per_item_reliability(r, d)
}

fn estimate(method: BenchMethod, sc: &Scenario, cfg: &ScenarioConfig) -> Result<(f64, Option<bool>)> {
    match method {
        BenchMethod::Covmle => {
            let fit = estimate_sigma(&sc.scatter, &sc.bases, &EstimateOptions::default())?;
            let r = reliability_from_components(&fit, cfg.error_basis)?;
            Ok((r.coefficient, Some(fit.converged)))
        }
        BenchMethod::Efa => {
            let r = correlation_matrix(&sc.samples)?;
            let model = extract_factors(&r, RetentionRule::Fixed(1))?;
            let omega = efa_reliability(&model)?.coefficient;
            Ok((single_item(omega, cfg.d)?, None))
        }
        BenchMethod::Kr20 => {
            let items = dichotomize(&sc.samples)?;
            let composite = kr20(&items)?.coefficient;
            Ok((single_item(composite, cfg.d)?, None))
        }
    }
}

fn run_replication(
    plan: &BenchPlan,
    scenario: usize,
    replication: usize,
) -> ReplicationOutcome {
    let cfg = &plan.scenarios[scenario];
    let generated = generate_scenario(cfg, replication);
    let methods = plan
        .methods
        .iter()
        .map(|&method| {
            let result = generated.as_ref().map_err(|e| e.to_string()).and_then(|sc| {
                estimate(method, sc, cfg)
                    .map(|(r, conv)| (r, sc.true_reliability, conv))
                    .map_err(|e| e.to_string())
            });
            match result {
                Ok((r, truth, converged)) => MethodOutcome {
                    method,
                    estimate: Some(r),
                    error_pct: Some(100.0 * (r - truth).abs() / truth),
                    failure: None,
                    converged,
                },
                Err(msg) => MethodOutcome {
                    method,
                    estimate: None,
                    error_pct: None,
                    failure: Some(msg),
                    converged: None,
                },
            }
        })
        .collect();
    ReplicationOutcome {
        scenario,
        replication,
        true_reliability: generated.as_ref().ok().map(|s| s.true_reliability),
        methods,
    }
}

fn unix_ms() -> u128 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_millis())
        .unwrap_or(0)
}

/// Runs every replication of every scenario. Results are identical with
/// and without `parallel`: each replication owns an index-derived stream.
pub fn run_benchmark(plan: &BenchPlan, parallel: bool) -> Result<(BenchTable, RunManifest)> {
    plan.validate()?;
    // surface a bad truth before any sampling
    for cfg in &plan.scenarios {
        let bases = cfg.build_bases()?;
        let sigma = CovarianceStructure::new(bases, cfg.sigma_true.clone())?.assemble_sigma();
        if validate_spd(&sigma, SPD_TOLERANCE)? != SpdVerdict::Spd {
            return Err(Error::Config(
                "true covariance is not positive definite".into(),
            ));
        }
    }
    let tasks: Vec<(usize, usize)> = plan
        .scenarios
        .iter()
        .enumerate()
        .flat_map(|(s, cfg)| (0..cfg.replications).map(move |r| (s, r)))
        .collect();
    let started = unix_ms();
    let outcomes: Vec<ReplicationOutcome> = if parallel {
        tasks
            .par_iter()
            .map(|&(s, r)| run_replication(plan, s, r))
            .collect()
    } else {
        tasks
            .iter()
            .map(|&(s, r)| run_replication(plan, s, r))
            .collect()
    };
    let manifest = RunManifest {
        software_version: env!("CARGO_PKG_VERSION").to_string(),
        config: plan.clone(),
        parallel,
        started_unix_ms: started,
        finished_unix_ms: unix_ms(),
        outcomes,
    };
    Ok((manifest.aggregate(), manifest))
}

/// Mean and sample standard deviation of `error_pct` per method, summed in
/// (scenario, replication) order.
pub fn aggregate(methods: &[BenchMethod], outcomes: &[ReplicationOutcome]) -> BenchTable {
    let mut ordered: Vec<&ReplicationOutcome> = outcomes.iter().collect();
    ordered.sort_by_key(|o| (o.scenario, o.replication));
    let rows = methods
        .iter()
        .map(|&method| {
            let mut errors = Vec::new();
            let mut failures = 0;
            for o in &ordered {
                match o.methods.iter().find(|m| m.method == method) {
                    Some(MethodOutcome {
                        error_pct: Some(e), ..
                    }) => errors.push(*e),
                    _ => failures += 1,
                }
            }
            let n = errors.len();
            let mean = (n > 0).then(|| errors.iter().sum::<f64>() / n as f64);
            let std_dev = match mean {
                Some(m) if n >= 2 => {
                    (errors.iter().map(|e| (e - m).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
                }
                _ => 0.0,
            };
            BenchRow {
                method,
                avg_error_pct: mean,
                std_dev,
                replications: n,
                failures,
            }
        })
        .collect();
    BenchTable { rows }
}
