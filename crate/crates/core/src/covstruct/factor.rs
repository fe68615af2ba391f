//! Unknown first basis `G₀ = FFᵀ`, estimated jointly with the coefficients.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::{
    assemble, estimate_sigma, heuristic_init, log_likelihood_factored, EstimateOptions, Init,
};
use crate::error::{Error, Result};
use crate::matrix::{SpdFactor, SymMatrix};
use crate::sampling::ScatterMatrix;

const ARMIJO: f64 = 1e-4;
const SHRINK: f64 = 0.5;
const MIN_STEP: f64 = 1e-20;

#[derive(Debug, Clone, PartialEq)]
pub struct FactorOptions {
    pub max_cycles: usize,
    /// Stop once a cycle gains at most this much log-likelihood per observation.
    pub tol: f64,
    /// Gradient steps on `F` per cycle.
    pub f_steps: usize,
    /// Pin `σ₀` at zero, which reduces the problem to the known bases.
    pub fix_sigma0_zero: bool,
    /// Default: leading `r` eigenvectors of `C` scaled by `√λ`.
    pub init_f: Option<DMatrix<f64>>,
    /// `σ₀` first. Default: equal-share heuristic on `[FFᵀ, G₁, ..]`.
    pub init_sigma: Option<Vec<f64>>,
}

impl Default for FactorOptions {
    fn default() -> Self {
        Self {
            max_cycles: 5000,
            tol: 1e-14,
            f_steps: 5,
            fix_sigma0_zero: false,
            init_f: None,
            init_sigma: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FactorComponentResult {
    /// Identified only up to right multiplication by an orthogonal matrix,
    /// and jointly with `σ₀` only up to scale.
    pub f_hat: Vec<Vec<f64>>,
    /// `σ₀` first, then the known bases in order.
    pub sigma_hat: Vec<f64>,
    pub objective_trace: Vec<f64>,
    pub converged: bool,
    pub cycles: usize,
    /// Per-observation gradient norm at the returned parameters.
    pub stationarity_residual: f64,
    pub sigma_matrix: Vec<Vec<f64>>,
}

impl FactorComponentResult {
    pub fn f_matrix(&self) -> DMatrix<f64> {
        let d = self.f_hat.len();
        let r = self.f_hat.first().map_or(0, Vec::len);
        DMatrix::from_fn(d, r, |i, j| self.f_hat[i][j])
    }

    pub fn fitted(&self) -> Result<SymMatrix> {
        SymMatrix::from_rows(&self.sigma_matrix)
    }
}

fn outer(f: &DMatrix<f64>) -> SymMatrix {
    SymMatrix::from_lower(f * f.transpose())
}

fn full_bases(f: &DMatrix<f64>, known: &[SymMatrix]) -> Vec<SymMatrix> {
    let mut all = Vec::with_capacity(known.len() + 1);
    all.push(outer(f));
    all.extend_from_slice(known);
    all
}

/// Per-observation log-likelihood, `-inf` where `Σ` is not SPD.
fn objective(sigma: &SymMatrix, c: &ScatterMatrix) -> f64 {
    match SpdFactor::new(sigma) {
        Ok(f) => log_likelihood_factored(&f, c) / c.n_used() as f64,
        Err(_) => f64::NEG_INFINITY,
    }
}

/// `Σ⁻¹CΣ⁻¹ − Σ⁻¹`.
fn score_kernel(factor: &SpdFactor, c: &ScatterMatrix) -> DMatrix<f64> {
    let inv = factor.inverse().into_matrix();
    &inv * c.matrix().as_matrix() * &inv - inv
}

/// Norm of the per-observation log-likelihood gradient in `(σ, F)`.
///
/// `∂ℓ/∂σ_g = ½ tr(G_g M)` and `∂ℓ/∂F = σ₀ M F` with `M = Σ⁻¹CΣ⁻¹ − Σ⁻¹`.
pub fn stationarity_residual(
    c: &ScatterMatrix,
    f: &DMatrix<f64>,
    known: &[SymMatrix],
    sigma: &[f64],
) -> Result<f64> {
    if sigma.len() != known.len() + 1 {
        return Err(Error::Dimension {
            expected: known.len() + 1,
            got: sigma.len(),
        });
    }
    let bases = full_bases(f, known);
    let factor = SpdFactor::new(&assemble(&bases, sigma))?;
    let m = score_kernel(&factor, c);
    let mut sq = 0.0;
    for g in &bases {
        sq += (0.5 * g.as_matrix().component_mul(&m).sum()).powi(2);
    }
    sq += (sigma[0] * &m * f).norm_squared();
    Ok(sq.sqrt())
}

fn leading_factor(c: &ScatterMatrix, rank: usize) -> DMatrix<f64> {
    let eig = c.matrix().symmetric_eigen();
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let d = c.dim();
    let mut f = DMatrix::zeros(d, rank);
    for (j, &k) in order.iter().take(rank).enumerate() {
        let scale = eig.eigenvalues[k].max(0.0).sqrt();
        f.set_column(j, &(eig.eigenvectors.column(k) * scale));
    }
    f
}

/// Alternating ascent on `Σ = σ₀FFᵀ + Σ σ_g G_g`.
///
/// Each cycle re-solves the trace equations with `FFᵀ` as a fixed basis,
/// keeping the result only if the likelihood does not drop (otherwise
/// backtracking along the segment), then takes Armijo-backtracked gradient
/// steps on `F`. The objective trace is the full-sample log-likelihood.
pub fn estimate_with_unknown_g0(
    c: &ScatterMatrix,
    known: &[SymMatrix],
    rank: usize,
    opts: &FactorOptions,
) -> Result<FactorComponentResult> {
    let d = c.dim();
    if rank == 0 || rank > d {
        return Err(Error::Input(format!("rank must lie in 1..={d}, got {rank}")));
    }
    if let Some(g) = known.iter().find(|g| g.dim() != d) {
        return Err(Error::Dimension {
            expected: d,
            got: g.dim(),
        });
    }
    let mut f = match &opts.init_f {
        Some(f0) if f0.nrows() != d || f0.ncols() != rank => {
            return Err(Error::Dimension {
                expected: d * rank,
                got: f0.nrows() * f0.ncols(),
            })
        }
        Some(f0) => f0.clone(),
        None => leading_factor(c, rank),
    };
    let n = c.n_used() as f64;

    if opts.fix_sigma0_zero {
        let mut est_opts = EstimateOptions::default();
        if let Some(init) = &opts.init_sigma {
            est_opts.init = Init::Explicit(init.iter().skip(1).copied().collect());
        }
        let r = estimate_sigma(c, known, &est_opts)?;
        let mut sigma = vec![0.0];
        sigma.extend_from_slice(&r.sigma_hat);
        let residual = stationarity_residual(c, &f, known, &sigma)?;
        return Ok(FactorComponentResult {
            f_hat: rows_of(&f),
            sigma_hat: sigma,
            objective_trace: vec![r.log_likelihood],
            converged: r.converged,
            cycles: r.iterations,
            stationarity_residual: residual,
            sigma_matrix: r.sigma_matrix.to_rows(),
        });
    }

    let mut sigma = match &opts.init_sigma {
        Some(s) if s.len() != known.len() + 1 => {
            return Err(Error::Dimension {
                expected: known.len() + 1,
                got: s.len(),
            })
        }
        Some(s) => s.clone(),
        None => heuristic_init(c, &full_bases(&f, known)),
    };
    let mut current = objective(&assemble(&full_bases(&f, known), &sigma), c);
    if !current.is_finite() {
        return Err(Error::NotPositiveDefinite(
            "starting covariance is not positive definite".into(),
        ));
    }
    let mut trace = vec![current * n];
    let mut converged = false;
    let inner = EstimateOptions {
        max_iter: 200,
        tol: 1e-12,
        init: Init::Heuristic,
    };

    for _ in 0..opts.max_cycles {
        let start = current;
        let bases = full_bases(&f, known);

        // coefficients with F fixed
        let step = estimate_sigma(
            c,
            &bases,
            &EstimateOptions {
                init: Init::Explicit(sigma.clone()),
                ..inner.clone()
            },
        );
        match step {
            Ok(r) => {
                let mut t = 1.0;
                while t >= 1e-10 {
                    let cand: Vec<f64> = sigma
                        .iter()
                        .zip(&r.sigma_hat)
                        .map(|(a, b)| a + t * (b - a))
                        .collect();
                    let v = objective(&assemble(&bases, &cand), c);
                    if v >= current {
                        sigma = cand;
                        current = v;
                        break;
                    }
                    t *= SHRINK;
                }
            }
            Err(e) if e.is_numerical() => {}
            Err(e) => return Err(e),
        }

        // F with coefficients fixed
        for _ in 0..opts.f_steps {
            let here = assemble(&full_bases(&f, known), &sigma);
            let factor = SpdFactor::new(&here)?;
            let grad = sigma[0] * score_kernel(&factor, c) * &f;
            let gg = grad.norm_squared();
            if gg == 0.0 {
                break;
            }
            let mut t = 1.0;
            let mut moved = false;
            while t >= MIN_STEP {
                let cand = &f + t * &grad;
                let v = objective(&assemble(&full_bases(&cand, known), &sigma), c);
                if v >= current + ARMIJO * t * gg {
                    f = cand;
                    current = v;
                    moved = true;
                    break;
                }
                t *= SHRINK;
            }
            if !moved {
                break;
            }
        }

        if current < start {
            return Err(Error::LineSearch(format!(
                "objective fell from {start} to {current}"
            )));
        }
        trace.push(current * n);
        if current - start <= opts.tol {
            converged = true;
            break;
        }
    }

    let fitted = assemble(&full_bases(&f, known), &sigma);
    let residual = stationarity_residual(c, &f, known, &sigma)?;
    Ok(FactorComponentResult {
        f_hat: rows_of(&f),
        sigma_hat: sigma,
        cycles: trace.len() - 1,
        objective_trace: trace,
        converged,
        stationarity_residual: residual,
        sigma_matrix: fitted.to_rows(),
    })
}

fn rows_of(f: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..f.nrows())
        .map(|i| f.row(i).iter().copied().collect())
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matrix::ar1_matrix;

    fn truth() -> (DMatrix<f64>, Vec<SymMatrix>, Vec<f64>, ScatterMatrix) {
        let f = DMatrix::from_column_slice(5, 1, &[0.9, -0.4, 1.2, 0.3, -0.8]);
        let known = vec![ar1_matrix(5, 0.6).unwrap(), SymMatrix::identity(5)];
        let sigma = vec![0.5, 0.2, 0.3];
        let c = assemble(&full_bases(&f, &known), &sigma);
        (f, known, sigma, ScatterMatrix::from_matrix(c, 1000).unwrap())
    }

    #[test]
    fn truth_is_stationary() {
        let (f, known, sigma, c) = truth();
        assert!(stationarity_residual(&c, &f, &known, &sigma).unwrap() < 1e-8);
    }

    #[test]
    fn started_at_truth_stays_flat() {
        let (f, known, sigma, c) = truth();
        let opts = FactorOptions {
            init_f: Some(f),
            init_sigma: Some(sigma),
            ..Default::default()
        };
        let r = estimate_with_unknown_g0(&c, &known, 1, &opts).unwrap();
        let first = r.objective_trace[0];
        let last = *r.objective_trace.last().unwrap();
        assert!((last - first).abs() <= 1e-9 * first.abs());
        assert!(r.fitted().unwrap().frobenius_distance(c.matrix()) < 1e-8);
    }

    #[test]
    fn recovers_from_perturbed_start() {
        let (f, known, _, c) = truth();
        let f0 = &f + DMatrix::from_column_slice(5, 1, &[0.2, 0.1, -0.3, 0.25, 0.1]);
        let opts = FactorOptions {
            init_f: Some(f0),
            init_sigma: Some(vec![0.65, 0.26, 0.39]),
            ..Default::default()
        };
        let r = estimate_with_unknown_g0(&c, &known, 1, &opts).unwrap();
        assert!(r.objective_trace.windows(2).all(|w| w[1] >= w[0]));
        assert!(r.fitted().unwrap().frobenius_distance(c.matrix()) < 1e-4);
    }

    #[test]
    fn fixed_sigma0_matches_plain_estimator() {
        let (_, known, _, c) = truth();
        let opts = FactorOptions {
            fix_sigma0_zero: true,
            ..Default::default()
        };
        let r = estimate_with_unknown_g0(&c, &known, 1, &opts).unwrap();
        let plain = estimate_sigma(&c, &known, &EstimateOptions::default()).unwrap();
        assert_eq!(r.sigma_hat[0], 0.0);
        assert_eq!(&r.sigma_hat[1..], plain.sigma_hat.as_slice());
    }

    #[test]
    fn rank_out_of_range() {
        let (_, known, _, c) = truth();
        assert!(estimate_with_unknown_g0(&c, &known, 6, &FactorOptions::default()).is_err());
        assert!(estimate_with_unknown_g0(&c, &known, 0, &FactorOptions::default()).is_err());
    }
}
