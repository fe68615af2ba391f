//! Seeded random streams, sample sets, multivariate-normal draws and scatter matrices.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::{validate_spd, SpdFactor, SpdVerdict, SymMatrix, SPD_TOLERANCE};

/// Seed for the crate's random streams.
///
/// Streams are ChaCha8 generators keyed by `seed` (expanded with
/// `SeedableRng::seed_from_u64`). Substream `i` uses the same key with the
/// ChaCha stream counter set to `i`, so substreams never overlap.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct RngSeed(pub u64);

impl RngSeed {
    pub fn new(seed: u64) -> Self {
        Self(seed)
    }

    pub fn value(self) -> u64 {
        self.0
    }

    /// Stream 0.
    pub fn rng(self) -> ChaCha8Rng {
        self.substream(0)
    }

    pub fn substream(self, index: u64) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.0);
        rng.set_stream(index);
        rng
    }

    /// A new seed derived from this one, for nesting (scenario -> replication).
    pub fn child(self, index: u64) -> RngSeed {
        RngSeed(splitmix64(self.0 ^ splitmix64(index.wrapping_add(0x5851_f42d_4c95_7f2d))))
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// `n` observations of a `dim`-variate vector together with a known mean.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleSet {
    rows: DMatrix<f64>,
    mu: DVector<f64>,
    labels: Option<Vec<String>>,
}

impl SampleSet {
    /// `rows` is `n × dim`; `mu` must have length `dim`.
    pub fn new(rows: DMatrix<f64>, mu: DVector<f64>) -> Result<Self> {
        if rows.nrows() == 0 {
            return Err(Error::Input("sample set needs at least one row".into()));
        }
        if rows.ncols() == 0 {
            return Err(Error::Input("sample set needs at least one variable".into()));
        }
        if mu.len() != rows.ncols() {
            return Err(Error::Dimension {
                expected: rows.ncols(),
                got: mu.len(),
            });
        }
        if rows.iter().chain(mu.iter()).any(|v| !v.is_finite()) {
            return Err(Error::Input("sample set has non-finite values".into()));
        }
        Ok(Self {
            rows,
            mu,
            labels: None,
        })
    }

    pub fn from_rows(rows: &[Vec<f64>], mu: &[f64]) -> Result<Self> {
        let dim = mu.len();
        if let Some((i, r)) = rows.iter().enumerate().find(|(_, r)| r.len() != dim) {
            return Err(Error::Input(format!(
                "row {i} has {} values, expected {dim}",
                r.len()
            )));
        }
        let m = DMatrix::from_fn(rows.len(), dim, |i, j| rows[i][j]);
        Self::new(m, DVector::from_column_slice(mu))
    }

    pub fn with_labels(mut self, labels: Vec<String>) -> Result<Self> {
        if labels.len() != self.dim() {
            return Err(Error::Dimension {
                expected: self.dim(),
                got: labels.len(),
            });
        }
        self.labels = Some(labels);
        Ok(self)
    }

    /// Replaces the known mean with the column means of the data.
    pub fn with_estimated_mean(mut self) -> Self {
        let n = self.n() as f64;
        self.mu = DVector::from_fn(self.dim(), |j, _| self.rows.column(j).sum() / n);
        self
    }

    pub fn n(&self) -> usize {
        self.rows.nrows()
    }

    pub fn dim(&self) -> usize {
        self.rows.ncols()
    }

    pub fn rows(&self) -> &DMatrix<f64> {
        &self.rows
    }

    pub fn mu(&self) -> &DVector<f64> {
        &self.mu
    }

    pub fn labels(&self) -> Option<&[String]> {
        self.labels.as_deref()
    }

    pub fn column_name(&self, j: usize) -> String {
        match &self.labels {
            Some(l) => l[j].clone(),
            None => format!("column {j}"),
        }
    }
}

/// Known-mean second-moment matrix `C = (1/n) Σ (x - μ)(x - μ)ᵀ`.
#[derive(Debug, Clone, PartialEq)]
pub struct ScatterMatrix {
    c: SymMatrix,
    n_used: usize,
}

impl ScatterMatrix {
    /// Wraps a matrix that is already a second-moment estimate, for instance an
    /// exact population covariance. Rejects matrices that are not PSD.
    pub fn from_matrix(c: SymMatrix, n_used: usize) -> Result<Self> {
        if n_used == 0 {
            return Err(Error::Input("scatter matrix needs n >= 1".into()));
        }
        if validate_spd(&c, SPD_TOLERANCE)? == SpdVerdict::Indefinite {
            return Err(Error::NotPositiveDefinite(
                "scatter matrix must be positive semidefinite".into(),
            ));
        }
        Ok(Self { c, n_used })
    }

    pub fn matrix(&self) -> &SymMatrix {
        &self.c
    }

    pub fn n_used(&self) -> usize {
        self.n_used
    }

    pub fn dim(&self) -> usize {
        self.c.dim()
    }
}

/// Scatter matrix about the sample set's known mean, divisor `n`.
pub fn scatter_matrix(s: &SampleSet) -> ScatterMatrix {
    let mut centered = s.rows.clone();
    for mut row in centered.row_iter_mut() {
        row -= s.mu.transpose();
    }
    let c = centered.tr_mul(&centered) / s.n() as f64;
    ScatterMatrix {
        c: SymMatrix::from_lower(c),
        n_used: s.n(),
    }
}

/// Draws from `N(mu, sigma)` through the Cholesky factor of `sigma`.
#[derive(Debug, Clone)]
pub struct MvnSampler {
    mu: DVector<f64>,
    lower: DMatrix<f64>,
}

impl MvnSampler {
    pub fn new(mu: DVector<f64>, sigma: &SymMatrix) -> Result<Self> {
        if mu.len() != sigma.dim() {
            return Err(Error::Dimension {
                expected: sigma.dim(),
                got: mu.len(),
            });
        }
        match validate_spd(sigma, SPD_TOLERANCE)? {
            SpdVerdict::Spd => {}
            verdict => {
                return Err(Error::NotPositiveDefinite(format!(
                    "covariance is {verdict:?}"
                )))
            }
        }
        let lower = SpdFactor::new(sigma)?.lower();
        Ok(Self { mu, lower })
    }

    pub fn dim(&self) -> usize {
        self.mu.len()
    }

    pub fn draw<R: rand::Rng + ?Sized>(&self, rng: &mut R) -> DVector<f64> {
        let z = DVector::from_fn(self.dim(), |_, _| StandardNormal.sample(rng));
        &self.mu + &self.lower * z
    }

    pub fn sample<R: rand::Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Result<SampleSet> {
        let d = self.dim();
        let mut rows = DMatrix::zeros(n, d);
        for i in 0..n {
            let x = self.draw(rng);
            rows.row_mut(i).copy_from(&x.transpose());
        }
        SampleSet::new(rows, self.mu.clone())
    }
}

/// `n` i.i.d. draws from `N(mu, sigma)` on the seed's stream 0.
pub fn mvn_sample(mu: &[f64], sigma: &SymMatrix, n: usize, seed: RngSeed) -> Result<SampleSet> {
    let sampler = MvnSampler::new(DVector::from_column_slice(mu), sigma)?;
    sampler.sample(n, &mut seed.rng())
}
