//! Exploratory factor analysis on a correlation matrix: principal-axis
//! extraction by eigendecomposition, Kaiser retention, orthogonal rotation,
//! varimax, and a one-factor omega coefficient.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::{validate_spd, SymMatrix};
use crate::reliability::{ReliabilityMethod, ReliabilityReport};
use crate::sampling::SampleSet;

/// Tolerance for orthogonality of rotation matrices.
pub const ORTHOGONALITY_TOL: f64 = 1e-10;

/// Eigenvalues within this distance below 1 still pass the Kaiser rule,
/// so exact-unit eigenvalues survive rounding.
const KAISER_SLACK: f64 = 1e-10;

/// Pearson correlation matrix of the sample columns (means estimated from data).
pub fn correlation_matrix(s: &SampleSet) -> Result<SymMatrix> {
    if s.n() < 2 {
        return Err(Error::Input("need at least two observations".into()));
    }
    let n = s.n() as f64;
    let x = s.rows();
    let mut centered = x.clone();
    let mut sd = Vec::with_capacity(s.dim());
    for j in 0..s.dim() {
        let m = x.column(j).sum() / n;
        let mut col = centered.column_mut(j);
        col.add_scalar_mut(-m);
        let ss = col.norm_squared();
        if ss <= 0.0 {
            return Err(Error::Degenerate(format!(
                "{} has zero variance",
                s.column_name(j)
            )));
        }
        sd.push(ss.sqrt());
    }
    let mut r = centered.tr_mul(&centered);
    for i in 0..s.dim() {
        for j in 0..s.dim() {
            r[(i, j)] = if i == j {
                1.0
            } else {
                (r[(i, j)] / (sd[i] * sd[j])).clamp(-1.0, 1.0)
            };
        }
    }
    Ok(SymMatrix::from_lower(r))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RetentionRule {
    /// Keep factors with eigenvalue ≥ 1.
    Kaiser,
    Fixed(usize),
}

/// Loadings `A` (p × m) with derived summaries.
#[derive(Debug, Clone, PartialEq)]
pub struct FactorModel {
    pub loadings: DMatrix<f64>,
    /// All p eigenvalues of the correlation matrix, descending. Empty when
    /// the model was built directly from loadings.
    pub eigenvalues: Vec<f64>,
    /// Accumulated rotation applied to the unrotated loadings.
    pub rotation: DMatrix<f64>,
    /// Row sums of squared loadings.
    pub communalities: Vec<f64>,
    /// Column sums of squared loadings.
    pub factor_contributions: Vec<f64>,
    /// `1 - communality`.
    pub uniquenesses: Vec<f64>,
    pub diagnostics: Vec<String>,
}

impl FactorModel {
    pub fn from_loadings(loadings: DMatrix<f64>) -> Result<Self> {
        if loadings.nrows() == 0 || loadings.ncols() == 0 {
            return Err(Error::Input("loading matrix must be non-empty".into()));
        }
        if loadings.iter().any(|v| !v.is_finite()) {
            return Err(Error::Input("loadings must be finite".into()));
        }
        let m = loadings.ncols();
        let mut model = Self {
            loadings,
            eigenvalues: Vec::new(),
            rotation: DMatrix::identity(m, m),
            communalities: Vec::new(),
            factor_contributions: Vec::new(),
            uniquenesses: Vec::new(),
            diagnostics: Vec::new(),
        };
        model.refresh();
        Ok(model)
    }

    pub fn p(&self) -> usize {
        self.loadings.nrows()
    }

    pub fn m(&self) -> usize {
        self.loadings.ncols()
    }

    /// Common-variance part `A Aᵀ` of the fitted correlation matrix.
    pub fn common_variance(&self) -> DMatrix<f64> {
        &self.loadings * self.loadings.transpose()
    }

    fn refresh(&mut self) {
        self.communalities = self
            .loadings
            .row_iter()
            .map(|r| r.norm_squared())
            .collect();
        self.factor_contributions = self
            .loadings
            .column_iter()
            .map(|c| c.norm_squared())
            .collect();
        self.uniquenesses = self.communalities.iter().map(|h| 1.0 - h).collect();
    }
}

/// Eigendecomposition `R = V Λ Vᵀ`, keeping `m` factors with loadings `v_ij √λ_j`.
///
/// Eigenvalue ties keep the solver's column order (stable sort). Each
/// retained loading column is signed so that its sum is non-negative.
pub fn extract_factors(r: &SymMatrix, rule: RetentionRule) -> Result<FactorModel> {
    let p = r.dim();
    for i in 0..p {
        if (r.get(i, i) - 1.0).abs() > 1e-8 {
            return Err(Error::Input(format!(
                "correlation matrix needs a unit diagonal (entry {i} is {})",
                r.get(i, i)
            )));
        }
    }
    if !validate_spd(r, 1e-8)?.is_psd() {
        return Err(Error::Input("correlation matrix is not positive semidefinite".into()));
    }
    let eig = r.symmetric_eigen();
    let mut order: Vec<usize> = (0..p).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let eigenvalues: Vec<f64> = order.iter().map(|&i| eig.eigenvalues[i]).collect();

    let m = match rule {
        RetentionRule::Kaiser => eigenvalues
            .iter()
            .take_while(|&&l| l >= 1.0 - KAISER_SLACK)
            .count(),
        RetentionRule::Fixed(m) => {
            if m == 0 || m > p {
                return Err(Error::Input(format!(
                    "cannot retain {m} factors from {p} variables"
                )));
            }
            m
        }
    };
    if m == 0 {
        return Err(Error::Degenerate("no eigenvalue reaches 1".into()));
    }

    let mut loadings = DMatrix::zeros(p, m);
    for (col, &src) in order.iter().take(m).enumerate() {
        let scale = eigenvalues[col].max(0.0).sqrt();
        let v = eig.eigenvectors.column(src);
        let sign = if v.sum() < 0.0 { -1.0 } else { 1.0 };
        for i in 0..p {
            loadings[(i, col)] = sign * v[i] * scale;
        }
    }
    let mut model = FactorModel::from_loadings(loadings)?;
    model.eigenvalues = eigenvalues;
    if model.eigenvalues.iter().all(|l| (l - 1.0).abs() < 1e-8) {
        model
            .diagnostics
            .push("no common structure: all eigenvalues equal 1".into());
    }
    if model.communalities.iter().any(|&h| h > 1.0 + 1e-10) {
        model.diagnostics.push("heywood: communality above 1".into());
    }
    Ok(model)
}

/// `A* = A T` for an orthogonal `T`.
pub fn rotate(model: &FactorModel, t: &DMatrix<f64>) -> Result<FactorModel> {
    let m = model.m();
    if t.nrows() != m || t.ncols() != m {
        return Err(Error::Dimension {
            expected: m,
            got: t.nrows().max(t.ncols()),
        });
    }
    let defect = (t.transpose() * t - DMatrix::<f64>::identity(m, m)).amax();
    if defect > ORTHOGONALITY_TOL {
        return Err(Error::Input(format!(
            "rotation is not orthogonal (max |TᵀT - I| = {defect:.2e})"
        )));
    }
    let mut out = model.clone();
    out.loadings = &model.loadings * t;
    out.rotation = &model.rotation * t;
    out.refresh();
    Ok(out)
}

/// Raw varimax criterion `Σ_j [mean_i a_ij⁴ - (mean_i a_ij²)²]`.
pub fn varimax_criterion(loadings: &DMatrix<f64>) -> f64 {
    let p = loadings.nrows() as f64;
    loadings
        .column_iter()
        .map(|c| {
            let q = c.iter().map(|a| a.powi(4)).sum::<f64>() / p;
            let s = c.iter().map(|a| a * a).sum::<f64>() / p;
            q - s * s
        })
        .sum()
}

#[derive(Debug, Clone, PartialEq)]
pub struct VarimaxFit {
    pub model: FactorModel,
    /// Criterion before the first sweep and after each sweep.
    pub criterion_trace: Vec<f64>,
    pub sweeps: usize,
    pub converged: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VarimaxOptions {
    pub max_sweeps: usize,
    pub tol: f64,
}

impl Default for VarimaxOptions {
    fn default() -> Self {
        Self {
            max_sweeps: 100,
            tol: 1e-8,
        }
    }
}

/// Raw (unnormalized) varimax by pairwise plane rotations. Each plane
/// rotation uses the closed-form optimal angle, so the criterion never
/// decreases. Stops when a sweep's largest angle falls below `tol`.
pub fn varimax_fit(model: &FactorModel, opts: VarimaxOptions) -> Result<VarimaxFit> {
    let m = model.m();
    let mut a = model.loadings.clone();
    let mut t = DMatrix::<f64>::identity(m, m);
    let mut trace = vec![varimax_criterion(&a)];
    let mut sweeps = 0;
    let mut converged = m < 2;
    let p = a.nrows() as f64;

    while !converged && sweeps < opts.max_sweeps {
        sweeps += 1;
        let mut largest = 0.0_f64;
        for j in 0..m {
            for k in j + 1..m {
                let (mut su, mut sv, mut suv2, mut suv) = (0.0, 0.0, 0.0, 0.0);
                for i in 0..a.nrows() {
                    let (x, y) = (a[(i, j)], a[(i, k)]);
                    let u = x * x - y * y;
                    let v = 2.0 * x * y;
                    su += u;
                    sv += v;
                    suv2 += u * u - v * v;
                    suv += u * v;
                }
                let num = 2.0 * suv - 2.0 * su * sv / p;
                let den = suv2 - (su * su - sv * sv) / p;
                let phi = 0.25 * num.atan2(den);
                if phi.abs() < 1e-15 {
                    continue;
                }
                largest = largest.max(phi.abs());
                let (s, c) = phi.sin_cos();
                for i in 0..a.nrows() {
                    let (x, y) = (a[(i, j)], a[(i, k)]);
                    a[(i, j)] = c * x + s * y;
                    a[(i, k)] = -s * x + c * y;
                }
                for i in 0..m {
                    let (x, y) = (t[(i, j)], t[(i, k)]);
                    t[(i, j)] = c * x + s * y;
                    t[(i, k)] = -s * x + c * y;
                }
            }
        }
        trace.push(varimax_criterion(&a));
        converged = largest < opts.tol;
    }

    let mut rotated = rotate(model, &t)?;
    // keep the accumulated loadings bit-identical to the sweep result
    rotated.loadings = a;
    rotated.refresh();
    Ok(VarimaxFit {
        model: rotated,
        criterion_trace: trace,
        sweeps,
        converged,
    })
}

pub fn varimax(model: &FactorModel, max_sweeps: usize, tol: f64) -> Result<FactorModel> {
    varimax_fit(model, VarimaxOptions { max_sweeps, tol }).map(|f| f.model)
}

/// One-factor omega `(Σλ)² / ((Σλ)² + Σψ)`.
///
/// Negative uniquenesses (Heywood cases) are clamped to zero and flagged.
pub fn efa_reliability(model: &FactorModel) -> Result<ReliabilityReport> {
    if model.m() != 1 {
        return Err(Error::Unsupported(format!(
            "omega needs exactly one factor, model has {}",
            model.m()
        )));
    }
    let sum_loadings: f64 = model.loadings.column(0).sum();
    let mut heywood = 0;
    let sum_unique: f64 = model
        .uniquenesses
        .iter()
        .map(|&psi| {
            if psi < 0.0 {
                heywood += 1;
                0.0
            } else {
                psi
            }
        })
        .sum();
    let common = sum_loadings * sum_loadings;
    if common + sum_unique <= 0.0 {
        return Err(Error::Undefined("model implies zero total variance".into()));
    }
    let mut report = ReliabilityReport::new(
        common / (common + sum_unique),
        ReliabilityMethod::EfaOmega,
    )?;
    if heywood > 0 {
        report.note("heywood_clamped", heywood);
    }
    Ok(report)
}
