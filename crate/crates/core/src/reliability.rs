//! Classical reliability coefficients: KR20, KR21, the definitional variance
//! ratio, and the variance of a mean or linear combination with covariance terms.

use std::collections::BTreeMap;
use std::fmt;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::SymMatrix;

/// Which estimator produced a [`ReliabilityReport`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum ReliabilityMethod {
    Kr20,
    Kr21,
    Definitional,
    EfaOmega,
    Covmle,
    Icc,
}

impl fmt::Display for ReliabilityMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            ReliabilityMethod::Kr20 => "KR20",
            ReliabilityMethod::Kr21 => "KR21",
            ReliabilityMethod::Definitional => "DEFINITIONAL",
            ReliabilityMethod::EfaOmega => "EFA_OMEGA",
            ReliabilityMethod::Covmle => "COVMLE",
            ReliabilityMethod::Icc => "ICC",
        };
        f.write_str(s)
    }
}

/// A reliability coefficient with free-form diagnostics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReliabilityReport {
    pub coefficient: f64,
    pub method: ReliabilityMethod,
    pub diagnostics: BTreeMap<String, String>,
}

impl ReliabilityReport {
    pub(crate) fn new(coefficient: f64, method: ReliabilityMethod) -> Result<Self> {
        if !coefficient.is_finite() {
            return Err(Error::Undefined(format!("{method} coefficient is not finite")));
        }
        let mut report = Self {
            coefficient,
            method,
            diagnostics: BTreeMap::new(),
        };
        if !(0.0..=1.0).contains(&coefficient) {
            report.note("outside_unit_interval", "true");
        }
        Ok(report)
    }

    pub fn note(&mut self, key: &str, value: impl ToString) {
        self.diagnostics.insert(key.to_string(), value.to_string());
    }

    pub fn is_flagged(&self, key: &str) -> bool {
        self.diagnostics.contains_key(key)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ResponseKind {
    Binary,
    Real,
}

/// Subjects (rows) by items (columns) score table.
#[derive(Debug, Clone, PartialEq)]
pub struct ItemResponseMatrix {
    scores: DMatrix<f64>,
    kind: ResponseKind,
}

impl ItemResponseMatrix {
    /// Validates shape (n ≥ 2, k ≥ 2) and finiteness and detects binary data.
    /// Missing cells (NaN) are rejected.
    pub fn new(scores: DMatrix<f64>) -> Result<Self> {
        if scores.nrows() < 2 {
            return Err(Error::Input("need at least two subjects".into()));
        }
        if scores.ncols() < 2 {
            return Err(Error::Input("need at least two items".into()));
        }
        if let Some(pos) = scores.iter().position(|v| !v.is_finite()) {
            let (i, j) = (pos % scores.nrows(), pos / scores.nrows());
            return Err(Error::Input(format!(
                "missing or non-finite score at subject {i}, item {j}"
            )));
        }
        let kind = if scores.iter().all(|&v| v == 0.0 || v == 1.0) {
            ResponseKind::Binary
        } else {
            ResponseKind::Real
        };
        Ok(Self { scores, kind })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let k = rows.first().map_or(0, Vec::len);
        if let Some((i, r)) = rows.iter().enumerate().find(|(_, r)| r.len() != k) {
            return Err(Error::Input(format!(
                "subject {i} has {} scores, expected {k}",
                r.len()
            )));
        }
        Self::new(DMatrix::from_fn(rows.len(), k, |i, j| rows[i][j]))
    }

    pub fn n(&self) -> usize {
        self.scores.nrows()
    }

    pub fn k(&self) -> usize {
        self.scores.ncols()
    }

    pub fn kind(&self) -> ResponseKind {
        self.kind
    }

    pub fn scores(&self) -> &DMatrix<f64> {
        &self.scores
    }
}

/// Divisor used for the variance of sum scores.
///
/// `Population` (divisor n) keeps `p(1-p)` and `σ_x²` on one convention.
/// `Sample` uses n - 1 for `σ_x²` only, the mixed convention found in many
/// textbooks; it yields slightly smaller coefficients.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VarianceDivisor {
    #[default]
    Population,
    Sample,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ItemStats {
    pub p: Vec<f64>,
    pub p_bar: f64,
    pub sigma_x2: f64,
}

pub fn item_stats(m: &ItemResponseMatrix) -> Result<ItemStats> {
    item_stats_with(m, VarianceDivisor::Population)
}

pub fn item_stats_with(m: &ItemResponseMatrix, divisor: VarianceDivisor) -> Result<ItemStats> {
    if m.kind != ResponseKind::Binary {
        return Err(Error::Input(
            "item proportions require binary (0/1) scores".into(),
        ));
    }
    let n = m.n() as f64;
    let p: Vec<f64> = m.scores.column_iter().map(|c| c.sum() / n).collect();
    let p_bar = p.iter().sum::<f64>() / p.len() as f64;
    let sums: Vec<f64> = m.scores.row_iter().map(|r| r.sum()).collect();
    let mean = sums.iter().sum::<f64>() / n;
    let ss: f64 = sums.iter().map(|s| (s - mean).powi(2)).sum();
    let sigma_x2 = match divisor {
        VarianceDivisor::Population => ss / n,
        VarianceDivisor::Sample => ss / (n - 1.0),
    };
    Ok(ItemStats { p, p_bar, sigma_x2 })
}

fn kuder_richardson(
    m: &ItemResponseMatrix,
    divisor: VarianceDivisor,
    method: ReliabilityMethod,
) -> Result<ReliabilityReport> {
    let stats = item_stats_with(m, divisor)?;
    if stats.sigma_x2 <= 0.0 {
        return Err(Error::Undefined(
            "sum scores have zero variance (all subjects identical)".into(),
        ));
    }
    let k = m.k() as f64;
    let item_var = match method {
        ReliabilityMethod::Kr20 => stats.p.iter().map(|p| p * (1.0 - p)).sum::<f64>(),
        _ => k * stats.p_bar * (1.0 - stats.p_bar),
    };
    let coefficient = k / (k - 1.0) * (1.0 - item_var / stats.sigma_x2);
    let mut report = ReliabilityReport::new(coefficient, method)?;
    report.note("k", m.k());
    report.note("n", m.n());
    report.note("sigma_x2", stats.sigma_x2);
    report.note("divisor", format!("{divisor:?}").to_lowercase());
    Ok(report)
}

/// KR20 on binary items, population variances throughout. Unclamped.
pub fn kr20(m: &ItemResponseMatrix) -> Result<ReliabilityReport> {
    kuder_richardson(m, VarianceDivisor::Population, ReliabilityMethod::Kr20)
}

pub fn kr20_with(m: &ItemResponseMatrix, divisor: VarianceDivisor) -> Result<ReliabilityReport> {
    kuder_richardson(m, divisor, ReliabilityMethod::Kr20)
}

/// KR21: KR20 with every item difficulty replaced by the mean difficulty.
pub fn kr21(m: &ItemResponseMatrix) -> Result<ReliabilityReport> {
    kuder_richardson(m, VarianceDivisor::Population, ReliabilityMethod::Kr21)
}

pub fn kr21_with(m: &ItemResponseMatrix, divisor: VarianceDivisor) -> Result<ReliabilityReport> {
    kuder_richardson(m, divisor, ReliabilityMethod::Kr21)
}

/// `r_xx = 1 - σ_ε² / V_x`.
pub fn reliability_definitional(v_x: f64, sigma_eps2: f64) -> Result<ReliabilityReport> {
    if !(v_x > 0.0) || !v_x.is_finite() {
        return Err(Error::Domain(format!(
            "observed variance must be positive, got {v_x}"
        )));
    }
    if !(sigma_eps2 >= 0.0) || sigma_eps2 > v_x {
        return Err(Error::Domain(format!(
            "error variance must lie in [0, {v_x}], got {sigma_eps2}"
        )));
    }
    ReliabilityReport::new(1.0 - sigma_eps2 / v_x, ReliabilityMethod::Definitional)
}

/// Reliability of a single component implied by the reliability `r` of a
/// `k`-component composite under the Spearman-Brown relation.
pub fn per_item_reliability(r: f64, k: usize) -> Result<f64> {
    if k == 0 {
        return Err(Error::Input("composite length must be positive".into()));
    }
    let k = k as f64;
    let denom = k - (k - 1.0) * r;
    if !(denom > 0.0) {
        return Err(Error::Domain(format!(
            "composite reliability {r} has no per-item counterpart at length {k}"
        )));
    }
    Ok(r / denom)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanVarianceDecomposition {
    pub k: usize,
    pub sigma2: f64,
    pub cov_sum: f64,
    pub var_of_mean: f64,
}

/// `Var(x̄) = σ²/k + (2/k²) Σ_{i<j} Cov(x_i, x_j)`.
pub fn variance_of_mean(sigma2: f64, k: usize, cov_sum: f64) -> Result<MeanVarianceDecomposition> {
    if k == 0 {
        return Err(Error::Input("k must be at least 1".into()));
    }
    if !(sigma2 >= 0.0) || !cov_sum.is_finite() {
        return Err(Error::Domain("variance must be non-negative and finite".into()));
    }
    let kf = k as f64;
    let var_of_mean = (kf * sigma2 + 2.0 * cov_sum) / (kf * kf);
    if var_of_mean < 0.0 {
        return Err(Error::Domain(format!(
            "covariance sum {cov_sum} implies a negative variance of the mean"
        )));
    }
    Ok(MeanVarianceDecomposition {
        k,
        sigma2,
        cov_sum,
        var_of_mean,
    })
}

/// `Var(Σ βᵢ xᵢ) = βᵀ Σ β`.
pub fn linear_combination_variance(beta: &[f64], cov: &SymMatrix) -> Result<f64> {
    if beta.len() != cov.dim() {
        return Err(Error::Dimension {
            expected: cov.dim(),
            got: beta.len(),
        });
    }
    let v = cov.quadratic_form(&DVector::from_column_slice(beta));
    if v < -1e-12 * cov.as_matrix().amax() {
        return Err(Error::Domain(
            "covariance matrix is indefinite along these weights".into(),
        ));
    }
    Ok(v.max(0.0))
}
