//! `simbench` command-line front end.
//!
//! Exit codes: 0 success, 1 usage, 2 data or validation error, 3 numerical
//! failure (including non-convergence under `--strict`).

use std::ffi::OsString;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::{json, Value};

use crate::anova::{
    estimate_random_effects, icc, oneway_decompose, oneway_f_test, pairwise_t_test,
    cochran_empirical_check, CochranDecomposition,
};
use crate::bench::{
    render_report, render_trace_svg, run_benchmark, write_output, BenchPlan, ReportFormat,
};
use crate::covstruct::{
    estimate_sigma, estimate_with_unknown_g0, reliability_from_components, EstimateOptions,
    FactorOptions,
};
use crate::efa::{
    correlation_matrix, efa_reliability, extract_factors, varimax_fit, RetentionRule,
    VarimaxOptions,
};
use crate::error::{Error, Result};
use crate::ingest::{parse_groups, parse_items, parse_samples};
use crate::matrix::{ar1_matrix, SymMatrix};
use crate::mcmc::{
    chain_summary, default_burn_in, metropolis, AcceptanceRule, LatentThetaModel,
    MetropolisOptions, ThetaInit,
};
use crate::reliability::{kr20_with, kr21_with, ReliabilityReport, VarianceDivisor};
use crate::sampling::{scatter_matrix, RngSeed};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DATA: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;

pub const DEFAULT_SEED: u64 = 20_240_601;

#[derive(Debug, Parser)]
#[command(name = "simbench", version, about = "Reliability estimators and their Monte-Carlo benchmark")]
pub struct Cli {
    /// Master seed for every random draw. A bench plan file keeps its own
    /// seeds unless this is given.
    #[arg(long, global = true, env = "SIMBENCH_SEED")]
    pub seed: Option<u64>,
    /// Write the report here instead of stdout.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[arg(long, global = true, value_enum, default_value_t = Format::Text)]
    pub format: Format,
    /// Treat non-convergence as a failure (exit 3).
    #[arg(long, global = true)]
    pub strict: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Text,
    Json,
    Csv,
}

impl From<Format> for ReportFormat {
    fn from(f: Format) -> Self {
        match f {
            Format::Text => ReportFormat::Text,
            Format::Json => ReportFormat::Json,
            Format::Csv => ReportFormat::Csv,
        }
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// KR20 from a binary item CSV.
    Kr20(ItemArgs),
    /// KR21 from a binary item CSV.
    Kr21(ItemArgs),
    /// One-way ANOVA, random-effects components and ICC from a group,value CSV.
    Anova(AnovaArgs),
    /// Principal-component factor extraction from a samples CSV.
    Efa(EfaArgs),
    /// Structured-covariance maximum likelihood from a samples CSV.
    Covmle(CovmleArgs),
    /// Metropolis sampler for the latent θ model.
    Mcmc(McmcArgs),
    /// Monte-Carlo comparison of KR20, EFA and COVMLE.
    Bench(BenchArgs),
    /// Empirical check of the one-way quadratic-form decomposition.
    Cochran(CochranArgs),
}

#[derive(Debug, Args)]
pub struct ItemArgs {
    pub input: PathBuf,
    #[arg(long, value_enum, default_value_t = Divisor::Population)]
    pub divisor: Divisor,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Divisor {
    Population,
    Sample,
}

#[derive(Debug, Args)]
pub struct AnovaArgs {
    pub input: PathBuf,
    /// Also run the pooled t test between two groups, e.g. `0,2`.
    #[arg(long, value_parser = parse_pair)]
    pub pair: Option<(usize, usize)>,
}

fn parse_pair(s: &str) -> std::result::Result<(usize, usize), String> {
    let (i, j) = s.split_once(',').ok_or("expected two indices like 0,2")?;
    let index = |v: &str| v.trim().parse::<usize>().map_err(|e| format!("{v:?}: {e}"));
    Ok((index(i)?, index(j)?))
}

#[derive(Debug, Args)]
pub struct EfaArgs {
    pub input: PathBuf,
    /// Number of factors; Kaiser's rule when omitted.
    #[arg(long)]
    pub factors: Option<usize>,
    #[arg(long)]
    pub varimax: bool,
}

#[derive(Debug, Args)]
pub struct CovmleArgs {
    pub input: PathBuf,
    /// `ar1:RHO`, `identity`, `ones` or `file:PATH`; repeat once per basis.
    #[arg(long = "basis", required = true)]
    pub bases: Vec<String>,
    /// Basis index read as measurement error.
    #[arg(long)]
    pub error_basis: Option<usize>,
    /// Center at zero instead of the column means.
    #[arg(long)]
    pub zero_mean: bool,
    #[arg(long, default_value_t = 1e-3)]
    pub tol: f64,
    #[arg(long, default_value_t = 1000)]
    pub max_iter: usize,
    /// Estimate an extra component `σ₀FFᵀ` with `F` of this rank.
    #[arg(long)]
    pub unknown_rank: Option<usize>,
}

#[derive(Debug, Args)]
pub struct McmcArgs {
    /// Comma-separated observations.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub observations: Vec<f64>,
    #[arg(long, default_value_t = 10_000)]
    pub iterations: usize,
    #[arg(long, default_value_t = 0.5)]
    pub proposal_sd: f64,
    #[arg(long, default_value_t = LatentThetaModel::DEFAULT_PHI_SCALE)]
    pub phi_scale: f64,
    /// Default: 20% of the chain.
    #[arg(long)]
    pub burn_in: Option<usize>,
    #[arg(long, allow_hyphen_values = true)]
    pub init: Option<f64>,
    #[arg(long, value_enum, default_value_t = Acceptance::Log)]
    pub acceptance: Acceptance,
    /// Write every sample as CSV.
    #[arg(long)]
    pub samples_out: Option<PathBuf>,
    /// Write the trace plot as SVG.
    #[arg(long)]
    pub plot: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Acceptance {
    Log,
    SmoothedLinear,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    /// TOML plan; the default sweep when omitted.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Override replications per scenario.
    #[arg(long)]
    pub replications: Option<usize>,
    /// Override samples per replication.
    #[arg(long)]
    pub n: Option<usize>,
    /// Use the tiny-sample setting (d = 5, n = 3).
    #[arg(long, conflicts_with = "config")]
    pub tiny_sample: bool,
    /// Run replications on one thread. Output is identical either way.
    #[arg(long)]
    pub serial: bool,
    /// Manifest path; defaults to `<out>.manifest.json` when `--out` is set.
    #[arg(long)]
    pub manifest: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct CochranArgs {
    /// Group sizes, e.g. `3,4,5`.
    #[arg(long, value_delimiter = ',', required = true)]
    pub sizes: Vec<usize>,
    #[arg(long, default_value_t = 10_000)]
    pub draws: usize,
}

/// Output of one subcommand before formatting.
struct Report {
    json: Value,
    text: String,
    /// Set when an iterative estimator stopped without converging.
    non_converged: bool,
}

/// Parses `args` (including the program name) and runs the command.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    match execute(&cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_numerical() {
                EXIT_NUMERICAL
            } else {
                EXIT_DATA
            }
        }
    }
}

fn execute(cli: &Cli) -> Result<i32> {
    let seed = RngSeed(cli.seed.unwrap_or(DEFAULT_SEED));
    let report = match &cli.command {
        Command::Kr20(a) => kr_command(a, true)?,
        Command::Kr21(a) => kr_command(a, false)?,
        Command::Anova(a) => anova_command(a)?,
        Command::Efa(a) => efa_command(a)?,
        Command::Covmle(a) => covmle_command(a)?,
        Command::Mcmc(a) => mcmc_command(a, seed)?,
        Command::Bench(a) => return bench_command(a, cli, seed),
        Command::Cochran(a) => cochran_command(a, seed)?,
    };
    let text = match cli.format {
        Format::Text => report.text,
        Format::Json => pretty(&report.json)?,
        Format::Csv => flat_csv(&report.json),
    };
    write_output(&text, cli.out.as_deref())?;
    if report.non_converged {
        eprintln!("warning: estimator did not converge");
        if cli.strict {
            return Ok(EXIT_NUMERICAL);
        }
    }
    Ok(EXIT_OK)
}

fn pretty(v: &Value) -> Result<String> {
    let mut s = serde_json::to_string_pretty(v)?;
    s.push('\n');
    Ok(s)
}

/// `key,value` rows for every scalar leaf, with dotted paths.
fn flat_csv(v: &Value) -> String {
    fn walk(prefix: &str, v: &Value, out: &mut Vec<(String, String)>) {
        match v {
            Value::Object(map) => {
                for (k, child) in map {
                    let key = if prefix.is_empty() {
                        k.clone()
                    } else {
                        format!("{prefix}.{k}")
                    };
                    walk(&key, child, out);
                }
            }
            Value::Array(items) => {
                for (i, child) in items.iter().enumerate() {
                    walk(&format!("{prefix}.{i}"), child, out);
                }
            }
            Value::Null => out.push((prefix.to_string(), String::new())),
            Value::String(s) => out.push((prefix.to_string(), s.clone())),
            other => out.push((prefix.to_string(), other.to_string())),
        }
    }
    let mut rows = Vec::new();
    walk("", v, &mut rows);
    let mut w = csv::Writer::from_writer(Vec::new());
    let _ = w.write_record(["key", "value"]);
    for (k, val) in rows {
        let _ = w.write_record([k, val]);
    }
    String::from_utf8(w.into_inner().unwrap_or_default()).unwrap_or_default()
}

fn read(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn reliability_text(r: &ReliabilityReport) -> String {
    let mut s = format!("{}: {:.6}\n", r.method, r.coefficient);
    for (k, v) in &r.diagnostics {
        let _ = writeln!(s, "  {k}: {v}");
    }
    s
}

fn kr_command(a: &ItemArgs, twenty: bool) -> Result<Report> {
    let items = parse_items(&read(&a.input)?)?;
    let divisor = match a.divisor {
        Divisor::Population => VarianceDivisor::Population,
        Divisor::Sample => VarianceDivisor::Sample,
    };
    let r = if twenty {
        kr20_with(&items, divisor)?
    } else {
        kr21_with(&items, divisor)?
    };
    Ok(Report {
        text: reliability_text(&r),
        json: serde_json::to_value(&r)?,
        non_converged: false,
    })
}

fn anova_command(a: &AnovaArgs) -> Result<Report> {
    let g = parse_groups(&read(&a.input)?)?;
    let table = match oneway_f_test(&g) {
        Ok(t) => t,
        Err(Error::Degenerate(_)) => oneway_decompose(&g),
        Err(e) => return Err(e),
    };
    let mut json = json!({ "table": table });
    let mut text = String::new();
    let _ = writeln!(text, "{:<9} {:>14} {:>6} {:>14}", "Source", "SS", "df", "MS");
    let _ = writeln!(
        text,
        "{:<9} {:>14.6} {:>6} {:>14.6}",
        "Between", table.between_ss, table.df_between, table.bms
    );
    let wms = table.wms.map_or_else(|| "n/a".into(), |v| format!("{v:.6}"));
    let _ = writeln!(
        text,
        "{:<9} {:>14.6} {:>6} {:>14}",
        "Within", table.within_ss, table.df_within, wms
    );
    let _ = writeln!(text, "{:<9} {:>14.6}", "Total", table.total_ss);
    if let (Some(f), Some(p)) = (table.f_stat, table.p_value) {
        let _ = writeln!(text, "F = {f:.6}, p = {p:.6e}");
    }
    for flag in &table.flags {
        let _ = writeln!(text, "note: {flag}");
    }
    if g.balanced_size().is_some_and(|n| n >= 2) {
        let vc = estimate_random_effects(&g)?;
        match icc(&vc) {
            Ok(r) => {
                let _ = writeln!(
                    text,
                    "sigma_a2 = {:.6}, sigma2 = {:.6}, ICC = {:.6}",
                    vc.sigma_a2, vc.sigma2, r.coefficient
                );
                json["variance_components"] = serde_json::to_value(vc)?;
                json["icc"] = serde_json::to_value(&r)?;
            }
            Err(e) => {
                let _ = writeln!(text, "ICC undefined: {e}");
            }
        }
    }
    if let Some((i, j)) = a.pair {
        let t = pairwise_t_test(&g, i, j)?;
        let _ = writeln!(
            text,
            "t({}) = {:.6}, p = {:.6e} for groups {} and {}",
            t.df, t.t_stat, t.p_value, i, j
        );
        json["t_test"] = serde_json::to_value(t)?;
    }
    Ok(Report {
        json,
        text,
        non_converged: false,
    })
}

fn matrix_rows(m: &nalgebra::DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

fn efa_command(a: &EfaArgs) -> Result<Report> {
    let samples = parse_samples(&read(&a.input)?)?;
    let r = correlation_matrix(&samples)?;
    let rule = a.factors.map_or(RetentionRule::Kaiser, RetentionRule::Fixed);
    let mut model = extract_factors(&r, rule)?;
    let mut non_converged = false;
    if a.varimax && model.m() > 1 {
        let fit = varimax_fit(&model, VarimaxOptions::default())?;
        non_converged = !fit.converged;
        model = fit.model;
    }
    let omega = if model.m() == 1 {
        Some(efa_reliability(&model)?)
    } else {
        None
    };
    let names: Vec<String> = (0..samples.dim()).map(|j| samples.column_name(j)).collect();
    let mut text = format!("retained factors: {}\n", model.m());
    let _ = writeln!(text, "eigenvalues: {}", join(&model.eigenvalues));
    let _ = writeln!(text, "{:<12} loadings / communality", "variable");
    for (i, name) in names.iter().enumerate() {
        let row: Vec<f64> = model.loadings.row(i).iter().copied().collect();
        let _ = writeln!(text, "{name:<12} {}  | {:.4}", join(&row), model.communalities[i]);
    }
    for d in &model.diagnostics {
        let _ = writeln!(text, "note: {d}");
    }
    if let Some(o) = &omega {
        text.push_str(&reliability_text(o));
    }
    let json = json!({
        "variables": names,
        "eigenvalues": model.eigenvalues,
        "loadings": matrix_rows(&model.loadings),
        "communalities": model.communalities,
        "uniquenesses": model.uniquenesses,
        "factor_contributions": model.factor_contributions,
        "diagnostics": model.diagnostics,
        "omega": omega,
    });
    Ok(Report {
        json,
        text,
        non_converged,
    })
}

fn join(xs: &[f64]) -> String {
    xs.iter()
        .map(|x| format!("{x:.4}"))
        .collect::<Vec<_>>()
        .join(" ")
}

/// `ar1:RHO`, `identity`, `ones` or `file:PATH`.
pub fn parse_basis(spec: &str, d: usize) -> Result<SymMatrix> {
    let (kind, arg) = spec.split_once(':').unwrap_or((spec, ""));
    match kind {
        "identity" => Ok(SymMatrix::identity(d)),
        "ones" => Ok(SymMatrix::ones(d)),
        "ar1" => {
            let rho: f64 = arg
                .parse()
                .map_err(|_| Error::Config(format!("bad AR(1) coefficient in {spec:?}")))?;
            ar1_matrix(d, rho)
        }
        "file" => {
            let m = crate::bench::read_matrix_csv(Path::new(arg))?;
            if m.dim() != d {
                return Err(Error::Dimension {
                    expected: d,
                    got: m.dim(),
                });
            }
            Ok(m)
        }
        _ => Err(Error::Config(format!("unknown basis {spec:?}"))),
    }
}

fn covmle_command(a: &CovmleArgs) -> Result<Report> {
    let mut samples = parse_samples(&read(&a.input)?)?;
    if a.zero_mean {
        let (rows, d) = (samples.rows().clone(), samples.dim());
        let labels = samples.labels().map(<[String]>::to_vec);
        samples = crate::sampling::SampleSet::new(rows, nalgebra::DVector::zeros(d))?;
        if let Some(l) = labels {
            samples = samples.with_labels(l)?;
        }
    }
    let d = samples.dim();
    let bases = a
        .bases
        .iter()
        .map(|s| parse_basis(s, d))
        .collect::<Result<Vec<_>>>()?;
    let c = scatter_matrix(&samples);

    if let Some(rank) = a.unknown_rank {
        let r = estimate_with_unknown_g0(&c, &bases, rank, &FactorOptions::default())?;
        let mut text = format!(
            "cycles: {}, converged: {}, stationarity residual: {:.3e}\n",
            r.cycles, r.converged, r.stationarity_residual
        );
        let _ = writeln!(text, "sigma0 (F component): {:.6}", r.sigma_hat[0]);
        for (g, s) in r.sigma_hat[1..].iter().enumerate() {
            let _ = writeln!(text, "sigma[{g}] ({}): {s:.6}", a.bases[g]);
        }
        return Ok(Report {
            non_converged: !r.converged,
            json: serde_json::to_value(&r)?,
            text,
        });
    }

    let opts = EstimateOptions {
        max_iter: a.max_iter,
        tol: a.tol,
        ..Default::default()
    };
    let r = estimate_sigma(&c, &bases, &opts)?;
    let reliability = a
        .error_basis
        .map(|e| reliability_from_components(&r, e))
        .transpose()?;
    let mut text = format!(
        "iterations: {}, converged: {}, residual: {:.3e}\n",
        r.iterations, r.converged, r.residual
    );
    for (g, s) in r.sigma_hat.iter().enumerate() {
        let mark = if r.projected.contains(&g) { " (floored)" } else { "" };
        let _ = writeln!(text, "sigma[{g}] ({}): {s:.6}{mark}", a.bases[g]);
    }
    let _ = writeln!(text, "log-likelihood: {:.6}", r.log_likelihood);
    if let Some(rel) = &reliability {
        text.push_str(&reliability_text(rel));
    }
    let mut json = serde_json::to_value(&r)?;
    json["reliability"] = serde_json::to_value(&reliability)?;
    Ok(Report {
        non_converged: !r.converged,
        json,
        text,
    })
}

fn mcmc_command(a: &McmcArgs, seed: RngSeed) -> Result<Report> {
    let model = LatentThetaModel::new(a.observations.clone(), a.phi_scale)?;
    let opts = MetropolisOptions {
        iterations: a.iterations,
        proposal_sd: a.proposal_sd,
        seed,
        init: a.init.map_or(ThetaInit::Random, ThetaInit::Fixed),
        acceptance: match a.acceptance {
            Acceptance::Log => AcceptanceRule::LogSpace,
            Acceptance::SmoothedLinear => AcceptanceRule::SmoothedLinear,
        },
    };
    let chain = metropolis(&model, &opts)?;
    if let Some(p) = &a.samples_out {
        let mut s = String::from("iteration,theta\n");
        for (i, t) in chain.samples.iter().enumerate() {
            let _ = writeln!(s, "{i},{t}");
        }
        std::fs::write(p, s).map_err(|e| Error::io(p, e))?;
    }
    if let Some(p) = &a.plot {
        let svg = render_trace_svg(&chain)?;
        std::fs::write(p, svg).map_err(|e| Error::io(p, e))?;
    }
    let burn_in = a.burn_in.unwrap_or_else(|| default_burn_in(chain.samples.len()));
    let summary = chain_summary(&chain, burn_in)?;
    let ess = summary
        .effective_sample_size
        .map_or_else(|| "degenerate".into(), |e| format!("{e:.1}"));
    let text = format!(
        "iterations: {}\nburn-in: {}\nmean: {:.6}\nvariance: {:.6}\nacceptance rate: {:.4}\neffective sample size: {ess}\n",
        chain.samples.len(),
        summary.burn_in,
        summary.mean,
        summary.variance,
        summary.acceptance_rate
    );
    Ok(Report {
        json: json!({ "seed": seed, "proposal_sd": chain.proposal_sd, "summary": summary }),
        text,
        non_converged: false,
    })
}

fn bench_command(a: &BenchArgs, cli: &Cli, seed: RngSeed) -> Result<i32> {
    let mut plan = match (&a.config, a.tiny_sample) {
        (Some(path), _) => BenchPlan::from_path(path)?,
        (None, true) => BenchPlan::tiny_sample(seed, BenchPlan::SWEEP_REPLICATIONS),
        (None, false) => BenchPlan::default_sweep(seed),
    };
    if a.config.is_none() || cli.seed.is_some() {
        plan.reseed(seed);
    }
    for s in &mut plan.scenarios {
        if let Some(r) = a.replications {
            s.replications = r;
        }
        if let Some(n) = a.n {
            s.n = n;
        }
    }
    let (table, manifest) = run_benchmark(&plan, !a.serial)?;
    write_output(&render_report(&table, cli.format.into())?, cli.out.as_deref())?;
    let manifest_path = a.manifest.clone().or_else(|| {
        cli.out.as_ref().map(|o| {
            let mut p = o.clone().into_os_string();
            p.push(".manifest.json");
            PathBuf::from(p)
        })
    });
    if let Some(p) = manifest_path {
        let text = serde_json::to_string_pretty(&manifest)?;
        std::fs::write(&p, text).map_err(|e| Error::io(&p, e))?;
    }
    let stalled = manifest.non_converged();
    if stalled > 0 {
        eprintln!("warning: {stalled} fits did not converge");
        if cli.strict {
            return Ok(EXIT_NUMERICAL);
        }
    }
    Ok(EXIT_OK)
}

fn cochran_command(a: &CochranArgs, seed: RngSeed) -> Result<Report> {
    let decomposition = CochranDecomposition::oneway(&a.sizes)?;
    let r = cochran_empirical_check(&decomposition, a.draws, seed)?;
    let mut text = format!(
        "dimension {}, ranks {:?}, ranks sum to dimension: {}\n",
        r.dim, r.ranks, r.hypotheses_met
    );
    for (j, ks) in r.ks.iter().enumerate() {
        match ks {
            Some(k) => {
                let _ = writeln!(
                    text,
                    "form {j}: chi2({}) KS D = {:.4}, p = {:.4}",
                    r.ranks[j], k.statistic, k.p_value
                );
            }
            None => {
                let _ = writeln!(text, "form {j}: rank 0");
            }
        }
    }
    for c in &r.correlations {
        let _ = writeln!(text, "corr(form {}, form {}) = {:.4}", c.i, c.j, c.correlation);
    }
    Ok(Report {
        json: serde_json::to_value(&r)?,
        text,
        non_converged: false,
    })
}
