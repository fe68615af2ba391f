use std::fmt::Write as _;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::config::BenchMethod;
use crate::error::{Error, Result};
use crate::mcmc::McmcChain;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchRow {
    pub method: BenchMethod,
    /// `None` when every replication failed.
    pub avg_error_pct: Option<f64>,
    pub std_dev: f64,
    pub replications: usize,
    pub failures: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchTable {
    pub rows: Vec<BenchRow>,
}

impl BenchTable {
    pub fn row(&self, method: BenchMethod) -> Option<&BenchRow> {
        self.rows.iter().find(|r| r.method == method)
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReportFormat {
    #[default]
    Text,
    Json,
    Csv,
}

impl FromStr for ReportFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "text" => Ok(Self::Text),
            "json" => Ok(Self::Json),
            "csv" => Ok(Self::Csv),
            _ => Err(Error::Config(format!("unknown format {s:?}"))),
        }
    }
}

const CSV_HEADER: [&str; 5] = ["method", "avg_error_pct", "std_dev", "replications", "failures"];

pub fn render_report(table: &BenchTable, format: ReportFormat) -> Result<String> {
    match format {
        ReportFormat::Text => Ok(render_text(table)),
        ReportFormat::Json => {
            let mut s = serde_json::to_string_pretty(table)?;
            s.push('\n');
            Ok(s)
        }
        ReportFormat::Csv => render_csv(table),
    }
}

fn render_text(table: &BenchTable) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "{:<8}  {:>17}  {:>18}", "Method", "Average Error (%)", "Standard deviation");
    for r in &table.rows {
        let avg = r
            .avg_error_pct
            .map_or_else(|| "n/a".to_string(), |v| format!("{v:.1}"));
        let _ = write!(out, "{:<8}  {:>17}  {:>18.1}", r.method.label(), avg, r.std_dev);
        if r.failures > 0 {
            let _ = write!(out, "  ({} failed)", r.failures);
        }
        out.push('\n');
    }
    out
}

fn render_csv(table: &BenchTable) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let to_err = |e: csv::Error| Error::Input(e.to_string());
    w.write_record(CSV_HEADER).map_err(to_err)?;
    for r in &table.rows {
        w.write_record([
            r.method.label().to_string(),
            r.avg_error_pct.map_or_else(String::new, |v| v.to_string()),
            r.std_dev.to_string(),
            r.replications.to_string(),
            r.failures.to_string(),
        ])
        .map_err(to_err)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Input(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

/// Inverse of the CSV rendering.
pub fn parse_csv_table(text: &str) -> Result<BenchTable> {
    let mut reader = csv::ReaderBuilder::new().from_reader(text.as_bytes());
    let header = reader.headers().map_err(|e| Error::Parse {
        line: 1,
        message: e.to_string(),
    })?;
    if header.iter().ne(CSV_HEADER) {
        return Err(Error::Parse {
            line: 1,
            message: format!("expected header {}", CSV_HEADER.join(",")),
        });
    }
    let mut rows = Vec::new();
    for (i, rec) in reader.records().enumerate() {
        let line = i as u64 + 2;
        let rec = rec.map_err(|e| Error::Parse {
            line,
            message: e.to_string(),
        })?;
        let bad = |what: &str| Error::Parse {
            line,
            message: format!("bad {what}"),
        };
        let num = |j: usize, what: &str| rec[j].parse::<f64>().map_err(|_| bad(what));
        let count = |j: usize, what: &str| rec[j].parse::<usize>().map_err(|_| bad(what));
        rows.push(BenchRow {
            method: rec[0].parse().map_err(|_| bad("method"))?,
            avg_error_pct: if rec[1].is_empty() {
                None
            } else {
                Some(num(1, "avg_error_pct")?)
            },
            std_dev: num(2, "std_dev")?,
            replications: count(3, "replications")?,
            failures: count(4, "failures")?,
        });
    }
    Ok(BenchTable { rows })
}

/// Writes the rendered table to `path`, or to stdout when `path` is `None`.
pub fn emit_report(table: &BenchTable, format: ReportFormat, path: Option<&Path>) -> Result<()> {
    write_output(&render_report(table, format)?, path)
}

pub(crate) fn write_output(text: &str, path: Option<&Path>) -> Result<()> {
    match path {
        Some(p) => std::fs::write(p, text).map_err(|e| Error::io(p, e)),
        None => {
            let mut out = std::io::stdout().lock();
            out.write_all(text.as_bytes())
                .and_then(|_| out.flush())
                .map_err(|e| Error::io("<stdout>", e))
        }
    }
}

const WIDTH: f64 = 800.0;
const HEIGHT: f64 = 400.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 20.0;
const TOP: f64 = 20.0;
const BOTTOM: f64 = 50.0;

/// SVG line plot of θ against iteration.
pub fn render_trace_svg(chain: &McmcChain) -> Result<String> {
    let xs = &chain.samples;
    if xs.is_empty() {
        return Err(Error::Input("cannot plot an empty chain".into()));
    }
    let (mut lo, mut hi) = xs
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &x| (a.min(x), b.max(x)));
    if hi - lo < 1e-12 {
        lo -= 0.5;
        hi += 0.5;
    }
    let plot_w = WIDTH - LEFT - RIGHT;
    let plot_h = HEIGHT - TOP - BOTTOM;
    let last = (xs.len() - 1).max(1) as f64;
    let px = |i: usize| LEFT + plot_w * i as f64 / last;
    let py = |v: f64| TOP + plot_h * (hi - v) / (hi - lo);

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}">"#
    );
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<g stroke="black" stroke-width="1"><line x1="{LEFT}" y1="{b}" x2="{r}" y2="{b}"/><line x1="{LEFT}" y1="{TOP}" x2="{LEFT}" y2="{b}"/></g>"#,
        b = TOP + plot_h,
        r = LEFT + plot_w
    );
    let _ = writeln!(s, r#"<g font-family="sans-serif" font-size="11">"#);
    for k in 0..=4 {
        let v = lo + (hi - lo) * k as f64 / 4.0;
        let _ = writeln!(
            s,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="end">{v:.3}</text>"#,
            LEFT - 6.0,
            py(v) + 4.0
        );
        let i = ((xs.len() - 1) as f64 * k as f64 / 4.0).round() as usize;
        let _ = writeln!(
            s,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{i}</text>"#,
            px(i),
            TOP + plot_h + 16.0
        );
    }
    let _ = writeln!(s, "</g>");
    let _ = writeln!(
        s,
        r#"<text x="{:.1}" y="{:.1}" font-family="sans-serif" font-size="13" text-anchor="middle">Iteration</text>"#,
        LEFT + plot_w / 2.0,
        HEIGHT - 10.0
    );
    let _ = writeln!(
        s,
        r#"<text x="16" y="{:.1}" font-family="sans-serif" font-size="13" text-anchor="middle" transform="rotate(-90 16 {:.1})">θ</text>"#,
        TOP + plot_h / 2.0,
        TOP + plot_h / 2.0
    );
    let _ = write!(s, r#"<polyline fill="none" stroke="steelblue" stroke-width="1" points=""#);
    for (i, &v) in xs.iter().enumerate() {
        if i > 0 {
            s.push(' ');
        }
        let _ = write!(s, "{:.2},{:.2}", px(i), py(v));
    }
    let _ = writeln!(s, r#""/>"#);
    s.push_str("</svg>\n");
    Ok(s)
}

pub fn emit_trace_plot(chain: &McmcChain, path: &Path) -> Result<()> {
    let svg = render_trace_svg(chain)?;
    std::fs::write(path, svg).map_err(|e| Error::io(path, e))
}
