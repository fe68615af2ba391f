//! Dense symmetric matrices and positive-definiteness checks.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default relative tolerance used when classifying eigenvalues.
pub const SPD_TOLERANCE: f64 = 1e-10;

/// A dense, exactly symmetric real matrix.
///
/// The upper triangle is always a copy of the lower triangle, so
/// `get(i, j) == get(j, i)` holds bit-for-bit.
#[derive(Debug, Clone, PartialEq)]
pub struct SymMatrix {
    inner: DMatrix<f64>,
}

impl SymMatrix {
    /// Wraps a square matrix, requiring symmetry to within `1e-12` relative to
    /// the largest entry. The lower triangle becomes canonical.
    pub fn new(m: DMatrix<f64>) -> Result<Self> {
        if m.nrows() != m.ncols() {
            return Err(Error::Dimension {
                expected: m.nrows(),
                got: m.ncols(),
            });
        }
        if m.nrows() == 0 {
            return Err(Error::Input("matrix dimension must be at least 1".into()));
        }
        if m.iter().any(|v| !v.is_finite()) {
            return Err(Error::Input("matrix has non-finite entries".into()));
        }
        let scale = m.amax().max(f64::MIN_POSITIVE);
        let d = m.nrows();
        for i in 0..d {
            for j in 0..i {
                if (m[(i, j)] - m[(j, i)]).abs() > 1e-12 * scale {
                    return Err(Error::Input(format!(
                        "matrix is not symmetric at ({i}, {j})"
                    )));
                }
            }
        }
        Ok(Self::from_lower(m))
    }

    /// Builds from the lower triangle of `m`, ignoring the upper triangle.
    pub fn from_lower(mut m: DMatrix<f64>) -> Self {
        assert_eq!(m.nrows(), m.ncols(), "matrix must be square");
        let d = m.nrows();
        for i in 0..d {
            for j in 0..i {
                m[(j, i)] = m[(i, j)];
            }
        }
        Self { inner: m }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let d = rows.len();
        if let Some(bad) = rows.iter().find(|r| r.len() != d) {
            return Err(Error::Dimension {
                expected: d,
                got: bad.len(),
            });
        }
        Self::new(DMatrix::from_fn(d, d, |i, j| rows[i][j]))
    }

    pub fn identity(d: usize) -> Self {
        Self {
            inner: DMatrix::identity(d, d),
        }
    }

    pub fn zeros(d: usize) -> Self {
        Self {
            inner: DMatrix::zeros(d, d),
        }
    }

    /// Matrix with every entry equal to one.
    pub fn ones(d: usize) -> Self {
        Self {
            inner: DMatrix::from_element(d, d, 1.0),
        }
    }

    pub fn dim(&self) -> usize {
        self.inner.nrows()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.inner[(i, j)]
    }

    pub fn as_matrix(&self) -> &DMatrix<f64> {
        &self.inner
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.inner
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        (0..self.dim())
            .map(|i| self.inner.row(i).iter().copied().collect())
            .collect()
    }

    pub fn trace(&self) -> f64 {
        self.inner.trace()
    }

    pub fn mean_diagonal(&self) -> f64 {
        self.trace() / self.dim() as f64
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            inner: &self.inner * factor,
        }
    }

    /// `self += factor * other`, keeping exact symmetry.
    pub fn add_scaled(&mut self, factor: f64, other: &SymMatrix) -> Result<()> {
        if other.dim() != self.dim() {
            return Err(Error::Dimension {
                expected: self.dim(),
                got: other.dim(),
            });
        }
        self.inner += &other.inner * factor;
        Ok(())
    }

    pub fn frobenius_distance(&self, other: &SymMatrix) -> f64 {
        (&self.inner - &other.inner).norm()
    }

    /// Eigenvalues in ascending order.
    pub fn eigenvalues(&self) -> Vec<f64> {
        let mut ev: Vec<f64> = self.inner.clone().symmetric_eigenvalues().iter().copied().collect();
        ev.sort_by(f64::total_cmp);
        ev
    }

    pub fn symmetric_eigen(&self) -> SymmetricEigen<f64, Dyn> {
        self.inner.clone().symmetric_eigen()
    }

    /// `v^T M v`.
    pub fn quadratic_form(&self, v: &DVector<f64>) -> f64 {
        v.dot(&(&self.inner * v))
    }
}

/// Outcome of [`validate_spd`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SpdVerdict {
    Spd,
    PsdSingular,
    Indefinite,
}

impl SpdVerdict {
    pub fn is_psd(self) -> bool {
        !matches!(self, SpdVerdict::Indefinite)
    }
}

/// Classifies `m` by its smallest eigenvalue against `±tol · max|λ|`.
pub fn validate_spd(m: &SymMatrix, tol: f64) -> Result<SpdVerdict> {
    if m.as_matrix().iter().any(|v| !v.is_finite()) {
        return Err(Error::Input("matrix has non-finite entries".into()));
    }
    let ev = m.eigenvalues();
    let largest = ev.iter().fold(0.0_f64, |acc, v| acc.max(v.abs()));
    let threshold = tol * largest;
    let smallest = ev[0];
    Ok(if smallest > threshold {
        SpdVerdict::Spd
    } else if smallest >= -threshold {
        SpdVerdict::PsdSingular
    } else {
        SpdVerdict::Indefinite
    })
}

/// AR(1) correlation matrix with entries `rho^|i-j|`.
pub fn ar1_matrix(d: usize, rho: f64) -> Result<SymMatrix> {
    if d == 0 {
        return Err(Error::Input("dimension must be at least 1".into()));
    }
    if !rho.is_finite() || rho.abs() >= 1.0 {
        return Err(Error::Domain(format!(
            "AR(1) coefficient must lie in (-1, 1), got {rho}"
        )));
    }
    let m = DMatrix::from_fn(d, d, |i, j| {
        if i == j {
            1.0
        } else {
            rho.powi(i.abs_diff(j) as i32)
        }
    });
    Ok(SymMatrix::from_lower(m))
}

/// Cholesky factor of an SPD matrix, possibly after a diagonal jitter.
#[derive(Debug, Clone)]
pub struct SpdFactor {
    chol: Cholesky<f64, Dyn>,
    /// Amount added to the diagonal, zero when none was needed.
    pub jitter: f64,
}

impl SpdFactor {
    /// Plain factorization, failing on anything not numerically SPD.
    pub fn new(m: &SymMatrix) -> Result<Self> {
        Cholesky::new(m.as_matrix().clone())
            .map(|chol| Self { chol, jitter: 0.0 })
            .ok_or_else(|| Error::NotPositiveDefinite("Cholesky factorization failed".into()))
    }

    /// Factorization with one retry after adding `1e-10 · mean diag` to the diagonal.
    pub fn with_jitter(m: &SymMatrix) -> Result<Self> {
        if let Ok(f) = Self::new(m) {
            return Ok(f);
        }
        let jitter = 1e-10 * m.mean_diagonal().abs();
        if jitter == 0.0 {
            return Err(Error::NotPositiveDefinite("zero diagonal".into()));
        }
        let mut shifted = m.as_matrix().clone();
        for i in 0..m.dim() {
            shifted[(i, i)] += jitter;
        }
        Cholesky::new(shifted)
            .map(|chol| Self { chol, jitter })
            .ok_or_else(|| {
                Error::NotPositiveDefinite("Cholesky failed after diagonal jitter".into())
            })
    }

    pub fn lower(&self) -> DMatrix<f64> {
        self.chol.l()
    }

    pub fn solve(&self, b: &DMatrix<f64>) -> DMatrix<f64> {
        self.chol.solve(b)
    }

    pub fn solve_vec(&self, b: &DVector<f64>) -> DVector<f64> {
        self.chol.solve(b)
    }

    pub fn inverse(&self) -> SymMatrix {
        SymMatrix::from_lower(self.chol.inverse())
    }

    pub fn ln_determinant(&self) -> f64 {
        let l = self.chol.l_dirty();
        2.0 * (0..l.nrows()).map(|i| l[(i, i)].ln()).sum::<f64>()
    }

    /// Squared ratio of the extreme Cholesky pivots, a cheap lower bound on
    /// the 2-norm condition number.
    pub fn condition_estimate(&self) -> f64 {
        let l = self.chol.l_dirty();
        let (mut lo, mut hi) = (f64::INFINITY, 0.0_f64);
        for i in 0..l.nrows() {
            lo = lo.min(l[(i, i)]);
            hi = hi.max(l[(i, i)]);
        }
        (hi / lo).powi(2)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ar1_entries_follow_powers() {
        let m = ar1_matrix(5, 0.9).unwrap();
        assert_eq!(m.get(0, 1), 0.9);
        assert!((m.get(0, 2) - 0.81).abs() < 1e-15);
        for i in 0..5 {
            assert_eq!(m.get(i, i), 1.0);
        }
    }

    #[test]
    fn ar1_zero_rho_is_identity() {
        assert_eq!(ar1_matrix(3, 0.0).unwrap(), SymMatrix::identity(3));
    }

    #[test]
    fn ar1_two_by_two() {
        let m = ar1_matrix(2, 0.6).unwrap();
        assert_eq!(m.to_rows(), vec![vec![1.0, 0.6], vec![0.6, 1.0]]);
    }

    #[test]
    fn ar1_rejects_unit_rho() {
        assert!(matches!(ar1_matrix(3, 1.0), Err(Error::Domain(_))));
        assert!(matches!(ar1_matrix(3, -1.5), Err(Error::Domain(_))));
        assert!(ar1_matrix(0, 0.5).is_err());
    }

    #[test]
    fn spd_classification() {
        assert_eq!(
            validate_spd(&SymMatrix::identity(3), SPD_TOLERANCE).unwrap(),
            SpdVerdict::Spd
        );
        assert_eq!(
            validate_spd(&SymMatrix::ones(2), SPD_TOLERANCE).unwrap(),
            SpdVerdict::PsdSingular
        );
        let indefinite = SymMatrix::from_rows(&[vec![1.0, 2.0], vec![2.0, 1.0]]).unwrap();
        assert_eq!(
            validate_spd(&indefinite, SPD_TOLERANCE).unwrap(),
            SpdVerdict::Indefinite
        );
        let ev = indefinite.eigenvalues();
        assert!((ev[0] + 1.0).abs() < 1e-12 && (ev[1] - 3.0).abs() < 1e-12);
    }

    #[test]
    fn non_finite_entries_rejected() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, f64::NAN, f64::NAN, 1.0]);
        assert!(matches!(SymMatrix::new(m), Err(Error::Input(_))));
    }

    #[test]
    fn asymmetric_input_rejected() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.4, 1.0]);
        assert!(SymMatrix::new(m).is_err());
    }

    #[test]
    fn jitter_rescues_borderline_matrix() {
        // rank one, Cholesky fails without the shift
        let m = SymMatrix::ones(3);
        assert!(SpdFactor::new(&m).is_err());
        let f = SpdFactor::with_jitter(&m).unwrap();
        assert!(f.jitter > 0.0);
        assert!(SpdFactor::with_jitter(&SymMatrix::zeros(2)).is_err());
    }

    #[test]
    fn factor_inverse_and_determinant() {
        let m = SymMatrix::from_rows(&[vec![4.0, 2.0], vec![2.0, 3.0]]).unwrap();
        let f = SpdFactor::new(&m).unwrap();
        assert!((f.ln_determinant() - 8.0_f64.ln()).abs() < 1e-14);
        let prod = m.as_matrix() * f.inverse().as_matrix();
        assert!((prod - DMatrix::identity(2, 2)).amax() < 1e-14);
    }
}
