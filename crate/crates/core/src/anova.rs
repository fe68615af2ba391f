//! One-way and two-way ANOVA, F and t tests, random-effects variance
//! components, the intraclass correlation, and an empirical check of
//! Cochran's theorem.

use nalgebra::{DMatrix, DVector};
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::{validate_spd, SymMatrix, SPD_TOLERANCE};
use crate::reliability::{ReliabilityMethod, ReliabilityReport};
use crate::sampling::RngSeed;
use crate::special::{ks_test, t_two_sided_p, Dist, KsResult};

/// Observations split into `k ≥ 2` groups, each non-empty.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupedObservations {
    groups: Vec<Vec<f64>>,
}

impl GroupedObservations {
    pub fn new(groups: Vec<Vec<f64>>) -> Result<Self> {
        if groups.len() < 2 {
            return Err(Error::Input("need at least two groups".into()));
        }
        if let Some(i) = groups.iter().position(Vec::is_empty) {
            return Err(Error::Input(format!("group {i} is empty")));
        }
        if groups.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::Input("observations must be finite".into()));
        }
        Ok(Self { groups })
    }

    pub fn groups(&self) -> &[Vec<f64>] {
        &self.groups
    }

    pub fn k(&self) -> usize {
        self.groups.len()
    }

    pub fn n(&self) -> usize {
        self.groups.iter().map(Vec::len).sum()
    }

    pub fn sizes(&self) -> Vec<usize> {
        self.groups.iter().map(Vec::len).collect()
    }

    /// Common group size when the design is balanced.
    pub fn balanced_size(&self) -> Option<usize> {
        let n0 = self.groups[0].len();
        self.groups.iter().all(|g| g.len() == n0).then_some(n0)
    }

    fn group_means(&self) -> Vec<f64> {
        self.groups.iter().map(|g| mean(g)).collect()
    }

    fn grand_mean(&self) -> f64 {
        self.groups.iter().flatten().sum::<f64>() / self.n() as f64
    }
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// One-way ANOVA table. Mean squares and test results are `None` when undefined.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnovaTable {
    pub total_ss: f64,
    pub within_ss: f64,
    pub between_ss: f64,
    pub df_between: usize,
    pub df_within: usize,
    pub bms: f64,
    pub wms: Option<f64>,
    pub f_stat: Option<f64>,
    pub p_value: Option<f64>,
    pub flags: Vec<String>,
}

/// Sums of squares by direct summation.
pub fn oneway_decompose(g: &GroupedObservations) -> AnovaTable {
    let means = g.group_means();
    let grand = g.grand_mean();
    let mut total_ss = 0.0;
    let mut within_ss = 0.0;
    let mut between_ss = 0.0;
    for (group, &m) in g.groups.iter().zip(&means) {
        for &y in group {
            total_ss += (y - grand).powi(2);
            within_ss += (y - m).powi(2);
        }
        between_ss += group.len() as f64 * (m - grand).powi(2);
    }
    let df_between = g.k() - 1;
    let df_within = g.n() - g.k();
    let bms = between_ss / df_between as f64;
    let wms = (df_within > 0).then(|| within_ss / df_within as f64);
    let mut flags = Vec::new();
    if total_ss == 0.0 {
        flags.push("all_observations_identical".to_string());
    }
    if df_within == 0 {
        flags.push("no_within_degrees_of_freedom".to_string());
    }
    let f_stat = wms.filter(|&w| w > 0.0).map(|w| bms / w);
    if f_stat.is_none() {
        flags.push("f_statistic_undefined".to_string());
    }
    AnovaTable {
        total_ss,
        within_ss,
        between_ss,
        df_between,
        df_within,
        bms,
        wms,
        f_stat,
        p_value: None,
        flags,
    }
}

/// `F = BMS/WMS` against `F(k-1, n-k)`.
pub fn oneway_f_test(g: &GroupedObservations) -> Result<AnovaTable> {
    let mut table = oneway_decompose(g);
    if table.df_within == 0 {
        return Err(Error::Degenerate(
            "no within-group degrees of freedom".into(),
        ));
    }
    let f = table.f_stat.ok_or_else(|| {
        Error::Degenerate("within-group mean square is zero".into())
    })?;
    let dist = Dist::F {
        df1: table.df_between as f64,
        df2: table.df_within as f64,
    };
    table.p_value = Some(dist.sf(f)?);
    Ok(table)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TTestResult {
    pub t_stat: f64,
    pub p_value: f64,
    pub df: usize,
}

/// Two-group comparison using the pooled WMS of all groups, `t ~ t(n-k)`.
pub fn pairwise_t_test(g: &GroupedObservations, i: usize, j: usize) -> Result<TTestResult> {
    if i == j {
        return Err(Error::Input("group indices must differ".into()));
    }
    if i >= g.k() || j >= g.k() {
        return Err(Error::Input(format!(
            "group index out of range (k = {})",
            g.k()
        )));
    }
    let table = oneway_decompose(g);
    let wms = table
        .wms
        .filter(|&w| w > 0.0)
        .ok_or_else(|| Error::Degenerate("within-group mean square is zero".into()))?;
    let (a, b) = (&g.groups[i], &g.groups[j]);
    let se = ((1.0 / a.len() as f64 + 1.0 / b.len() as f64) * wms).sqrt();
    let t_stat = (mean(a) - mean(b)) / se;
    let df = table.df_within;
    Ok(TTestResult {
        t_stat,
        p_value: t_two_sided_p(t_stat, df as f64)?,
        df,
    })
}

/// Balanced `r × c` layout with `m ≥ 1` replicates per cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TwoWayLayout {
    cells: Vec<Vec<Vec<f64>>>,
}

impl TwoWayLayout {
    pub fn new(cells: Vec<Vec<Vec<f64>>>) -> Result<Self> {
        let r = cells.len();
        let c = cells.first().map_or(0, Vec::len);
        if r == 0 || c == 0 {
            return Err(Error::Input("layout needs at least one row and column".into()));
        }
        if cells.iter().any(|row| row.len() != c) {
            return Err(Error::Input("rows have different numbers of cells".into()));
        }
        let m = cells[0][0].len();
        if m == 0 {
            return Err(Error::Input("cells need at least one replicate".into()));
        }
        if cells.iter().flatten().any(|cell| cell.len() != m) {
            return Err(Error::Unsupported(
                "unbalanced two-way layouts are not supported".into(),
            ));
        }
        if cells.iter().flatten().flatten().any(|v| !v.is_finite()) {
            return Err(Error::Input("observations must be finite".into()));
        }
        Ok(Self { cells })
    }

    pub fn rows(&self) -> usize {
        self.cells.len()
    }

    pub fn cols(&self) -> usize {
        self.cells[0].len()
    }

    pub fn replicates(&self) -> usize {
        self.cells[0][0].len()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TwoWayComponents {
    pub residual_ss: f64,
    pub row_ss: f64,
    pub column_ss: f64,
    pub interaction_ss: f64,
    pub total_ss: f64,
    pub df_residual: usize,
    pub df_row: usize,
    pub df_column: usize,
    pub df_interaction: usize,
}

/// Squares and sums each of the four deviation terms of the balanced two-way model.
pub fn twoway_decompose(t: &TwoWayLayout) -> TwoWayComponents {
    let (r, c, m) = (t.rows(), t.cols(), t.replicates());
    let cell_mean: Vec<Vec<f64>> = t
        .cells
        .iter()
        .map(|row| row.iter().map(|cell| mean(cell)).collect())
        .collect();
    let row_mean: Vec<f64> = cell_mean.iter().map(|row| mean(row)).collect();
    let col_mean: Vec<f64> = (0..c)
        .map(|j| cell_mean.iter().map(|row| row[j]).sum::<f64>() / r as f64)
        .collect();
    let grand = mean(&row_mean);

    let mut out = TwoWayComponents {
        residual_ss: 0.0,
        row_ss: 0.0,
        column_ss: 0.0,
        interaction_ss: 0.0,
        total_ss: 0.0,
        df_residual: r * c * (m - 1),
        df_row: r - 1,
        df_column: c - 1,
        df_interaction: (r - 1) * (c - 1),
    };
    for i in 0..r {
        for j in 0..c {
            let row_dev = row_mean[i] - grand;
            let col_dev = col_mean[j] - grand;
            let inter = cell_mean[i][j] - row_mean[i] - col_mean[j] + grand;
            for &y in &t.cells[i][j] {
                out.residual_ss += (y - cell_mean[i][j]).powi(2);
                out.row_ss += row_dev * row_dev;
                out.column_ss += col_dev * col_dev;
                out.interaction_ss += inter * inter;
                out.total_ss += (y - grand).powi(2);
            }
        }
    }
    out
}

/// Between-group and within-group variances of the random-effects model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VarianceComponents {
    pub sigma_a2: f64,
    pub sigma2: f64,
    /// Set when the moment estimate of `sigma_a2` was negative and clamped to 0.
    pub projected: bool,
}

impl VarianceComponents {
    pub fn new(sigma_a2: f64, sigma2: f64) -> Result<Self> {
        if !(sigma_a2 >= 0.0 && sigma2 >= 0.0) || !sigma_a2.is_finite() || !sigma2.is_finite() {
            return Err(Error::Domain("variance components must be non-negative".into()));
        }
        Ok(Self {
            sigma_a2,
            sigma2,
            projected: false,
        })
    }
}

/// Moment estimator for balanced designs: `σ̂² = WMS`, `σ̂_A² = max(0, (BMS - WMS)/n₀)`.
pub fn estimate_random_effects(g: &GroupedObservations) -> Result<VarianceComponents> {
    let n0 = g.balanced_size().ok_or_else(|| {
        Error::Unsupported(
            "moment estimator needs equal group sizes; use the structured-covariance estimator"
                .into(),
        )
    })?;
    if n0 < 2 {
        return Err(Error::Degenerate(
            "need at least two observations per group".into(),
        ));
    }
    let table = oneway_decompose(g);
    let wms = table.wms.expect("df_within > 0 when n0 >= 2");
    let raw = (table.bms - wms) / n0 as f64;
    Ok(VarianceComponents {
        sigma_a2: raw.max(0.0),
        sigma2: wms,
        projected: raw < 0.0,
    })
}

/// `ρ = σ_A² / (σ² + σ_A²)`.
pub fn icc(components: &VarianceComponents) -> Result<ReliabilityReport> {
    let total = components.sigma_a2 + components.sigma2;
    if total <= 0.0 {
        return Err(Error::Undefined(
            "both variance components are zero".into(),
        ));
    }
    let mut report = ReliabilityReport::new(components.sigma_a2 / total, ReliabilityMethod::Icc)?;
    if components.projected {
        report.note("sigma_a2_projected", "true");
    }
    Ok(report)
}

/// Quadratic forms `Q_j = XᵀA_jX` over a common dimension.
#[derive(Debug, Clone, PartialEq)]
pub struct CochranDecomposition {
    forms: Vec<SymMatrix>,
    ranks: Vec<usize>,
    dim: usize,
}

impl CochranDecomposition {
    /// Each form must be PSD; ranks are counted from eigenvalues above
    /// `1e-8 · max|λ|`.
    pub fn new(forms: Vec<SymMatrix>) -> Result<Self> {
        let dim = forms
            .first()
            .ok_or_else(|| Error::Input("need at least one quadratic form".into()))?
            .dim();
        let mut ranks = Vec::with_capacity(forms.len());
        for (j, a) in forms.iter().enumerate() {
            if a.dim() != dim {
                return Err(Error::Dimension {
                    expected: dim,
                    got: a.dim(),
                });
            }
            if !validate_spd(a, SPD_TOLERANCE)?.is_psd() {
                return Err(Error::Input(format!("form {j} is not positive semidefinite")));
            }
            let ev = a.eigenvalues();
            let top = ev.last().copied().unwrap_or(0.0).abs();
            ranks.push(ev.iter().filter(|&&l| l > 1e-8 * top).count());
        }
        Ok(Self { forms, ranks, dim })
    }

    /// Within-group, between-group and grand-mean projections for a one-way
    /// layout with the given group sizes. Ranks are n - k, k - 1 and 1.
    pub fn oneway(sizes: &[usize]) -> Result<Self> {
        if sizes.len() < 2 || sizes.contains(&0) {
            return Err(Error::Input("need at least two non-empty groups".into()));
        }
        let n: usize = sizes.iter().sum();
        let mut group_avg = DMatrix::zeros(n, n);
        let mut start = 0;
        for &s in sizes {
            for i in start..start + s {
                for j in start..start + s {
                    group_avg[(i, j)] = 1.0 / s as f64;
                }
            }
            start += s;
        }
        let grand = DMatrix::from_element(n, n, 1.0 / n as f64);
        let within = DMatrix::identity(n, n) - &group_avg;
        let between = &group_avg - &grand;
        Self::new(vec![
            SymMatrix::from_lower(within),
            SymMatrix::from_lower(between),
            SymMatrix::from_lower(grand),
        ])
    }

    pub fn ranks(&self) -> &[usize] {
        &self.ranks
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn forms(&self) -> &[SymMatrix] {
        &self.forms
    }

    /// Whether the rank condition `Σ r_j = n` holds.
    pub fn is_complete(&self) -> bool {
        self.ranks.iter().sum::<usize>() == self.dim
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairCorrelation {
    pub i: usize,
    pub j: usize,
    pub correlation: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CochranReport {
    pub dim: usize,
    pub ranks: Vec<usize>,
    pub hypotheses_met: bool,
    /// KS test of each form against `χ²(r_j)`; `None` for rank-zero forms.
    pub ks: Vec<Option<KsResult>>,
    pub correlations: Vec<PairCorrelation>,
    pub draws: usize,
}

/// Draws `X ~ N(0, I_n)`, evaluates every `Q_j`, and reports KS distances to
/// `χ²(r_j)` and pairwise sample correlations. Reports rather than asserts:
/// an incomplete rank sum is flagged in `hypotheses_met`.
pub fn cochran_empirical_check(
    d: &CochranDecomposition,
    n_draws: usize,
    seed: RngSeed,
) -> Result<CochranReport> {
    if n_draws < 2 {
        return Err(Error::Input("need at least two draws".into()));
    }
    let mut rng = seed.rng();
    let m = d.forms.len();
    let mut q = vec![Vec::with_capacity(n_draws); m];
    for _ in 0..n_draws {
        let x = DVector::from_fn(d.dim, |_, _| StandardNormal.sample(&mut rng));
        for (j, a) in d.forms.iter().enumerate() {
            q[j].push(a.quadratic_form(&x));
        }
    }
    let mut ks = Vec::with_capacity(m);
    for (j, sample) in q.iter().enumerate() {
        let r = d.ranks[j];
        ks.push(if r == 0 {
            None
        } else {
            let dist = Dist::ChiSquared { df: r as f64 };
            Some(ks_test(sample, |x| dist.cdf(x).unwrap_or(f64::NAN)))
        });
    }
    let mut correlations = Vec::new();
    for i in 0..m {
        for j in i + 1..m {
            correlations.push(PairCorrelation {
                i,
                j,
                correlation: pearson(&q[i], &q[j]),
            });
        }
    }
    Ok(CochranReport {
        dim: d.dim,
        ranks: d.ranks.clone(),
        hypotheses_met: d.is_complete(),
        ks,
        correlations,
        draws: n_draws,
    })
}

pub(crate) fn pearson(a: &[f64], b: &[f64]) -> f64 {
    let ma = mean(a);
    let mb = mean(b);
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma).powi(2);
        sbb += (y - mb).powi(2);
    }
    if saa == 0.0 || sbb == 0.0 {
        return 0.0;
    }
    sab / (saa * sbb).sqrt()
}
