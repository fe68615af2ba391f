//! Maximum-likelihood estimation for linearly structured covariance matrices
//! `Σ = Σ_g σ_g G_g` with known basis matrices `G_g`.
//!
//! The variance coefficients solve the trace equations
//!
//! ```text
//! Σ_f σ_f tr(Σ⁻¹ G_g Σ⁻¹ G_f) = tr(Σ⁻¹ G_g Σ⁻¹ C),   g = 0..m
//! ```
//!
//! where `C` is the known-mean scatter matrix. [`estimate_sigma`] iterates
//! the linearization: hold `Σ` at the current coefficients, solve the
//! `m × m` system for the next coefficients, and repeat until the step norm
//! drops below the tolerance. When `C` lies exactly in the span of the bases
//! a single step reaches it, because `tr(Σ⁻¹G_gΣ⁻¹C)` is then linear in the
//! true coefficients for any `Σ`.
//!
//! [`estimate_with_unknown_g0`] extends this to a basis `G₀ = FFᵀ` whose
//! factor `F` is itself estimated.

mod factor;

use std::collections::BTreeSet;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::{validate_spd, SpdFactor, SymMatrix, SPD_TOLERANCE};
use crate::reliability::{ReliabilityMethod, ReliabilityReport};
use crate::sampling::ScatterMatrix;

pub use factor::{
    estimate_with_unknown_g0, stationarity_residual, FactorComponentResult, FactorOptions,
};

/// Condition estimates above this abort the trace-system build.
pub const MAX_CONDITION: f64 = 1e14;

/// Basis matrices with their coefficients.
#[derive(Debug, Clone, PartialEq)]
pub struct CovarianceStructure {
    bases: Vec<SymMatrix>,
    coefficients: Vec<f64>,
}

impl CovarianceStructure {
    /// Every basis must share one dimension and be PSD.
    pub fn new(bases: Vec<SymMatrix>, coefficients: Vec<f64>) -> Result<Self> {
        check_bases(&bases)?;
        if coefficients.len() != bases.len() {
            return Err(Error::Dimension {
                expected: bases.len(),
                got: coefficients.len(),
            });
        }
        if coefficients.iter().any(|c| !c.is_finite()) {
            return Err(Error::Input("coefficients must be finite".into()));
        }
        Ok(Self {
            bases,
            coefficients,
        })
    }

    pub fn bases(&self) -> &[SymMatrix] {
        &self.bases
    }

    pub fn coefficients(&self) -> &[f64] {
        &self.coefficients
    }

    pub fn dim(&self) -> usize {
        self.bases[0].dim()
    }

    /// The implied `Σ = Σ σ_g G_g`.
    pub fn assemble_sigma(&self) -> SymMatrix {
        assemble(&self.bases, &self.coefficients)
    }
}

fn check_bases(bases: &[SymMatrix]) -> Result<usize> {
    let d = bases
        .first()
        .ok_or_else(|| Error::Input("need at least one basis matrix".into()))?
        .dim();
    for (g, b) in bases.iter().enumerate() {
        if b.dim() != d {
            return Err(Error::Dimension {
                expected: d,
                got: b.dim(),
            });
        }
        if !validate_spd(b, SPD_TOLERANCE)?.is_psd() {
            return Err(Error::Input(format!(
                "basis {g} is not positive semidefinite"
            )));
        }
    }
    Ok(d)
}

/// Dense `Σ σ_g G_g`; dimensions are assumed consistent.
pub fn assemble(bases: &[SymMatrix], coefficients: &[f64]) -> SymMatrix {
    let d = bases[0].dim();
    let mut out = DMatrix::zeros(d, d);
    for (b, &c) in bases.iter().zip(coefficients) {
        out += b.as_matrix() * c;
    }
    SymMatrix::from_lower(out)
}

/// Mean regressors `Z_1..Z_r` for `μ = Σ β_j Z_j`.
#[derive(Debug, Clone, PartialEq)]
pub struct GlsDesign {
    regressors: Vec<DVector<f64>>,
}

impl GlsDesign {
    pub fn new(regressors: Vec<DVector<f64>>) -> Result<Self> {
        let d = regressors
            .first()
            .ok_or_else(|| Error::Input("need at least one regressor".into()))?
            .len();
        if let Some(z) = regressors.iter().find(|z| z.len() != d) {
            return Err(Error::Dimension {
                expected: d,
                got: z.len(),
            });
        }
        let z = DMatrix::from_columns(&regressors);
        let sv = z.singular_values();
        let top = sv.max();
        if sv.len() < regressors.len() || sv.min() <= 1e-12 * top.max(f64::MIN_POSITIVE) {
            return Err(Error::Collinear);
        }
        Ok(Self { regressors })
    }

    pub fn matrix(&self) -> DMatrix<f64> {
        DMatrix::from_columns(&self.regressors)
    }

    pub fn len(&self) -> usize {
        self.regressors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.regressors.is_empty()
    }
}

/// Solves the GLS normal equations `Σ_j (Z_iᵀΣ⁻¹Z_j) β_j = Z_iᵀΣ⁻¹x`.
///
/// Works with whitened quantities `L⁻¹Z` and `L⁻¹x` from the Cholesky factor
/// of `Σ`; no inverse is formed.
pub fn gls_beta(design: &GlsDesign, sigma: &SymMatrix, x: &DVector<f64>) -> Result<DVector<f64>> {
    let z = design.matrix();
    if z.nrows() != sigma.dim() || x.len() != sigma.dim() {
        return Err(Error::Dimension {
            expected: sigma.dim(),
            got: if x.len() != sigma.dim() { x.len() } else { z.nrows() },
        });
    }
    let factor = SpdFactor::new(sigma)?;
    let l = factor.lower();
    let wz = l
        .solve_lower_triangular(&z)
        .ok_or_else(|| Error::NotPositiveDefinite("singular Cholesky factor".into()))?;
    let wx = l
        .solve_lower_triangular(x)
        .ok_or_else(|| Error::NotPositiveDefinite("singular Cholesky factor".into()))?;
    let gram = wz.tr_mul(&wz);
    let rhs = wz.tr_mul(&wx);
    let chol = gram.cholesky().ok_or(Error::Collinear)?;
    Ok(chol.solve(&rhs))
}

/// Linear system `A σ = b` of the trace equations at a fixed `Σ`.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceSystem {
    pub a: DMatrix<f64>,
    pub b: DVector<f64>,
    pub condition: f64,
}

/// `A[g][f] = tr(Σ⁻¹G_gΣ⁻¹G_f)`, `b[g] = tr(Σ⁻¹G_gΣ⁻¹C)`.
pub fn trace_system(sigma: &SymMatrix, bases: &[SymMatrix], c: &ScatterMatrix) -> Result<TraceSystem> {
    let factor = SpdFactor::with_jitter(sigma)?;
    trace_system_factored(&factor, bases, c)
}

fn trace_system_factored(
    factor: &SpdFactor,
    bases: &[SymMatrix],
    c: &ScatterMatrix,
) -> Result<TraceSystem> {
    let condition = factor.condition_estimate();
    if !(condition <= MAX_CONDITION) {
        return Err(Error::IllConditioned { condition });
    }
    let m = bases.len();
    // P_g = Σ⁻¹ G_g, Q = Σ⁻¹ C
    let p: Vec<DMatrix<f64>> = bases.iter().map(|g| factor.solve(g.as_matrix())).collect();
    let q = factor.solve(c.matrix().as_matrix());
    let mut a = DMatrix::zeros(m, m);
    let mut b = DVector::zeros(m);
    for g in 0..m {
        for f in g..m {
            let v = trace_of_product(&p[g], &p[f]);
            a[(g, f)] = v;
            a[(f, g)] = v;
        }
        b[g] = trace_of_product(&p[g], &q);
    }
    Ok(TraceSystem { a, b, condition })
}

/// `tr(XY)` without forming the product.
fn trace_of_product(x: &DMatrix<f64>, y: &DMatrix<f64>) -> f64 {
    x.component_mul(&y.transpose()).sum()
}

/// Gaussian log-likelihood of a known-mean sample with scatter `C` under `Σ`:
/// `-(n/2)(d log 2π + log|Σ| + tr(Σ⁻¹C))`.
pub fn log_likelihood(sigma: &SymMatrix, c: &ScatterMatrix) -> Result<f64> {
    let factor = SpdFactor::new(sigma)?;
    Ok(log_likelihood_factored(&factor, c))
}

pub(crate) fn log_likelihood_factored(factor: &SpdFactor, c: &ScatterMatrix) -> f64 {
    let d = c.dim() as f64;
    let n = c.n_used() as f64;
    let tr = factor.solve(c.matrix().as_matrix()).trace();
    -0.5 * n * (d * (2.0 * std::f64::consts::PI).ln() + factor.ln_determinant() + tr)
}

/// Starting point for [`estimate_sigma`].
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Init {
    /// `σ_g = tr(C) / (m · tr(G_g))`.
    #[default]
    Heuristic,
    Explicit(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateOptions {
    pub max_iter: usize,
    /// Convergence threshold on the Euclidean norm of the coefficient step.
    pub tol: f64,
    pub init: Init,
}

impl Default for EstimateOptions {
    fn default() -> Self {
        Self {
            max_iter: 1000,
            tol: 1e-3,
            init: Init::Heuristic,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iteration: usize,
    pub sigma: Vec<f64>,
    pub residual: f64,
}

/// Output of [`estimate_sigma`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimationResult {
    pub sigma_hat: Vec<f64>,
    pub iterations: usize,
    pub residual: f64,
    pub converged: bool,
    /// Indices whose coefficient was clamped to the floor at some iteration.
    pub projected: BTreeSet<usize>,
    #[serde(with = "sym_rows")]
    pub sigma_matrix: SymMatrix,
    /// Mean diagonal of every basis, for reading reliabilities off the fit.
    pub basis_mean_diagonal: Vec<f64>,
    pub log_likelihood: f64,
    pub trace: Vec<IterationRecord>,
}

mod sym_rows {
    use super::SymMatrix;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(m: &SymMatrix, s: S) -> Result<S::Ok, S::Error> {
        m.to_rows().serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<SymMatrix, D::Error> {
        let rows = Vec::<Vec<f64>>::deserialize(d)?;
        SymMatrix::from_rows(&rows).map_err(serde::de::Error::custom)
    }
}

/// Positive floor for coefficients, `1e-8 · tr(C) / d`.
pub fn coefficient_floor(c: &ScatterMatrix) -> f64 {
    1e-8 * c.matrix().trace() / c.dim() as f64
}

pub fn heuristic_init(c: &ScatterMatrix, bases: &[SymMatrix]) -> Vec<f64> {
    let m = bases.len() as f64;
    let tr_c = c.matrix().trace();
    bases
        .iter()
        .map(|g| {
            let tg = g.trace();
            if tg > 0.0 {
                tr_c / (m * tg)
            } else {
                0.0
            }
        })
        .collect()
}

/// Fixed-point solution of the trace equations.
///
/// Coefficients that come out below [`coefficient_floor`] are raised to it
/// before the next `Σ` is assembled and recorded in `projected`. The
/// covariance is factored with a one-time diagonal jitter on failure; a
/// second failure is a [`Error::SingularIterate`]. Running out of iterations
/// is not an error: the result carries `converged = false`.
pub fn estimate_sigma(
    c: &ScatterMatrix,
    bases: &[SymMatrix],
    opts: &EstimateOptions,
) -> Result<EstimationResult> {
    let d = check_bases(bases)?;
    if c.dim() != d {
        return Err(Error::Dimension {
            expected: d,
            got: c.dim(),
        });
    }
    let m = bases.len();
    let floor = coefficient_floor(c);
    let mut projected = BTreeSet::new();
    let mut prev = match &opts.init {
        Init::Heuristic => heuristic_init(c, bases),
        Init::Explicit(v) => {
            if v.len() != m {
                return Err(Error::Dimension {
                    expected: m,
                    got: v.len(),
                });
            }
            v.clone()
        }
    };
    for (g, s) in prev.iter_mut().enumerate() {
        if !(*s >= floor) {
            *s = floor;
            projected.insert(g);
        }
    }

    let mut trace = Vec::new();
    let mut residual = f64::INFINITY;
    let mut converged = false;
    for iteration in 1..=opts.max_iter {
        let sigma = assemble(bases, &prev);
        let factor = SpdFactor::with_jitter(&sigma)
            .map_err(|_| Error::SingularIterate { iteration })?;
        let system = trace_system_factored(&factor, bases, c)?;
        let mut next = system
            .a
            .clone()
            .lu()
            .solve(&system.b)
            .ok_or(Error::DependentBases)?;
        if next.iter().any(|v| !v.is_finite()) {
            return Err(Error::DependentBases);
        }
        for (g, s) in next.iter_mut().enumerate() {
            if *s < floor {
                *s = floor;
                projected.insert(g);
            }
        }
        residual = prev
            .iter()
            .zip(next.iter())
            .map(|(a, b)| (a - b).powi(2))
            .sum::<f64>()
            .sqrt();
        prev = next.iter().copied().collect();
        trace.push(IterationRecord {
            iteration,
            sigma: prev.clone(),
            residual,
        });
        if residual <= opts.tol {
            converged = true;
            break;
        }
    }

    let sigma_matrix = assemble(bases, &prev);
    let log_likelihood = SpdFactor::with_jitter(&sigma_matrix)
        .map(|f| log_likelihood_factored(&f, c))
        .unwrap_or(f64::NEG_INFINITY);
    Ok(EstimationResult {
        sigma_hat: prev,
        iterations: trace.len(),
        residual,
        converged,
        projected,
        sigma_matrix,
        basis_mean_diagonal: bases.iter().map(SymMatrix::mean_diagonal).collect(),
        log_likelihood,
        trace,
    })
}

fn component_reliability(
    coefficients: &[f64],
    basis_mean_diagonal: &[f64],
    total_mean_diagonal: f64,
    error_index: usize,
) -> Result<ReliabilityReport> {
    if error_index >= coefficients.len() {
        return Err(Error::Input(format!(
            "error basis index {error_index} out of range ({} bases)",
            coefficients.len()
        )));
    }
    if !(total_mean_diagonal > 0.0) {
        return Err(Error::Undefined("implied total variance is zero".into()));
    }
    let error_variance = coefficients[error_index] * basis_mean_diagonal[error_index];
    let mut report = ReliabilityReport::new(
        1.0 - error_variance / total_mean_diagonal,
        ReliabilityMethod::Covmle,
    )?;
    report.note("error_index", error_index);
    report.note("error_variance", error_variance);
    report.note("total_variance", total_mean_diagonal);
    Ok(report)
}

/// `1 - σ̂_err · mean diag(G_err) / mean diag(Σ̂)`.
pub fn reliability_from_components(
    result: &EstimationResult,
    error_index: usize,
) -> Result<ReliabilityReport> {
    component_reliability(
        &result.sigma_hat,
        &result.basis_mean_diagonal,
        result.sigma_matrix.mean_diagonal(),
        error_index,
    )
}

/// Same ratio evaluated at known coefficients.
pub fn reliability_from_structure(
    s: &CovarianceStructure,
    error_index: usize,
) -> Result<ReliabilityReport> {
    let diag: Vec<f64> = s.bases.iter().map(SymMatrix::mean_diagonal).collect();
    component_reliability(
        &s.coefficients,
        &diag,
        s.assemble_sigma().mean_diagonal(),
        error_index,
    )
}
