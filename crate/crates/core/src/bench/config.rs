use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::{ar1_matrix, validate_spd, SymMatrix, SPD_TOLERANCE};
use crate::sampling::RngSeed;

pub const CONFIG_VERSION: u32 = 1;

/// How one basis matrix is produced.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BasisSpec {
    /// `ρ^|i-j|`; `rho = 0` is the identity.
    Ar1 { rho: f64 },
    /// Headerless CSV of a `d × d` symmetric matrix.
    File { path: PathBuf },
}

impl BasisSpec {
    pub fn build(&self, d: usize) -> Result<SymMatrix> {
        match self {
            Self::Ar1 { rho } => ar1_matrix(d, *rho),
            Self::File { path } => {
                let m = read_matrix_csv(path)?;
                if m.dim() != d {
                    return Err(Error::Dimension {
                        expected: d,
                        got: m.dim(),
                    });
                }
                Ok(m)
            }
        }
    }
}

/// Reads a square matrix from a headerless CSV file.
pub fn read_matrix_csv(path: &Path) -> Result<SymMatrix> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    let mut rows = Vec::new();
    for (i, rec) in reader.records().enumerate() {
        let line = i as u64 + 1;
        let rec = rec.map_err(|e| Error::Parse {
            line,
            message: e.to_string(),
        })?;
        let row = rec
            .iter()
            .map(|cell| {
                cell.parse::<f64>().map_err(|_| Error::Parse {
                    line,
                    message: format!("not a number: {cell:?}"),
                })
            })
            .collect::<Result<Vec<f64>>>()?;
        rows.push(row);
    }
    SymMatrix::from_rows(&rows)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum BenchMethod {
    #[serde(rename = "KR20")]
    Kr20,
    #[serde(rename = "EFA")]
    Efa,
    #[serde(rename = "COVMLE")]
    Covmle,
}

impl BenchMethod {
    pub const ALL: [BenchMethod; 3] = [Self::Kr20, Self::Efa, Self::Covmle];

    pub fn label(self) -> &'static str {
        match self {
            Self::Kr20 => "KR20",
            Self::Efa => "EFA",
            Self::Covmle => "COVMLE",
        }
    }
}

impl fmt::Display for BenchMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for BenchMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "KR20" => Ok(Self::Kr20),
            "EFA" => Ok(Self::Efa),
            "COVMLE" => Ok(Self::Covmle),
            _ => Err(Error::Config(format!("unknown method {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub d: usize,
    pub bases: Vec<BasisSpec>,
    pub sigma_true: Vec<f64>,
    /// Index of the basis that carries measurement error.
    pub error_basis: usize,
    pub n: usize,
    pub replications: usize,
    pub seed: RngSeed,
}

impl ScenarioConfig {
    /// Three AR(1) bases at ρ = 0.9, 0.6, 0 with coefficients 0.1, 0.2, 0.3.
    /// The last basis is the identity and is read as error.
    pub fn ar1_scenario(d: usize, n: usize, replications: usize, seed: RngSeed) -> Self {
        Self {
            d,
            bases: [0.9, 0.6, 0.0]
                .iter()
                .map(|&rho| BasisSpec::Ar1 { rho })
                .collect(),
            sigma_true: vec![0.1, 0.2, 0.3],
            error_basis: 2,
            n,
            replications,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.d == 0 {
            return Err(Error::Config("d must be positive".into()));
        }
        if self.bases.is_empty() {
            return Err(Error::Config("at least one basis is required".into()));
        }
        if self.bases.len() != self.sigma_true.len() {
            return Err(Error::Config(format!(
                "{} bases but {} coefficients",
                self.bases.len(),
                self.sigma_true.len()
            )));
        }
        if self.error_basis >= self.bases.len() {
            return Err(Error::Config(format!(
                "error_basis {} out of range",
                self.error_basis
            )));
        }
        if self.replications == 0 {
            return Err(Error::Config("replications must be at least 1".into()));
        }
        if self.n == 0 {
            return Err(Error::Config("n must be positive".into()));
        }
        Ok(())
    }

    pub fn build_bases(&self) -> Result<Vec<SymMatrix>> {
        let bases = self
            .bases
            .iter()
            .map(|b| b.build(self.d))
            .collect::<Result<Vec<_>>>()?;
        for (g, b) in bases.iter().enumerate() {
            if !validate_spd(b, SPD_TOLERANCE)?.is_psd() {
                return Err(Error::Config(format!("basis {g} is not positive semidefinite")));
            }
        }
        Ok(bases)
    }
}

/// A set of scenarios run under one method list.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BenchPlan {
    pub version: u32,
    pub methods: Vec<BenchMethod>,
    pub scenarios: Vec<ScenarioConfig>,
}

impl BenchPlan {
    pub const SWEEP_DIMS: [usize; 4] = [5, 10, 15, 20];
    pub const SWEEP_N: usize = 500;
    pub const SWEEP_REPLICATIONS: usize = 250;

    /// The AR(1) scenario at d = 5, 10, 15, 20.
    pub fn default_sweep(seed: RngSeed) -> Self {
        Self::sweep(seed, Self::SWEEP_N, Self::SWEEP_REPLICATIONS)
    }

    pub fn sweep(seed: RngSeed, n: usize, replications: usize) -> Self {
        let scenarios = Self::SWEEP_DIMS
            .iter()
            .enumerate()
            .map(|(i, &d)| ScenarioConfig::ar1_scenario(d, n, replications, seed.child(i as u64)))
            .collect();
        Self {
            version: CONFIG_VERSION,
            methods: BenchMethod::ALL.to_vec(),
            scenarios,
        }
    }

    /// Small-sample setting: d = 5 with three observations per
    /// replication. Too few observations for stable estimates; useful as a
    /// stress case.
    pub fn tiny_sample(seed: RngSeed, replications: usize) -> Self {
        let mut s = ScenarioConfig::ar1_scenario(5, 3, replications, seed.child(0));
        s.bases[2] = BasisSpec::Ar1 { rho: 0.3 };
        // no identity basis in this setting; the weakest AR(1) is read as error
        Self {
            version: CONFIG_VERSION,
            methods: BenchMethod::ALL.to_vec(),
            scenarios: vec![s],
        }
    }

    /// Reseeds scenario `i` with `seed.child(i)`.
    pub fn reseed(&mut self, seed: RngSeed) {
        for (i, s) in self.scenarios.iter_mut().enumerate() {
            s.seed = seed.child(i as u64);
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.version != CONFIG_VERSION {
            return Err(Error::Config(format!(
                "unsupported config version {} (expected {CONFIG_VERSION})",
                self.version
            )));
        }
        if self.methods.is_empty() {
            return Err(Error::Config("no methods requested".into()));
        }
        if self.scenarios.is_empty() {
            return Err(Error::Config("no scenarios".into()));
        }
        self.scenarios.iter().try_for_each(ScenarioConfig::validate)
    }

    pub fn from_toml_str(s: &str) -> Result<Self> {
        let plan: Self = toml::from_str(s).map_err(|e| Error::Config(e.to_string()))?;
        plan.validate()?;
        Ok(plan)
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text)
            .map_err(|e| match e {
                Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
                other => other,
            })
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("plan serializes")
    }
}
