//! CSV input for the three data shapes the library consumes.
//!
//! Every file needs a header row. Line numbers in errors are 1-based and
//! count the header.

use std::path::Path;
use std::str::FromStr;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::anova::GroupedObservations;
use crate::error::{Error, Result};
use crate::reliability::ItemResponseMatrix;
use crate::sampling::SampleSet;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Layout {
    /// One row per subject, one column per item.
    Items,
    /// Two columns: group id, value.
    Groups,
    /// One row per observation, one column per variable.
    Samples,
}

impl FromStr for Layout {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "items" => Ok(Self::Items),
            "groups" => Ok(Self::Groups),
            "samples" => Ok(Self::Samples),
            _ => Err(Error::Config(format!("unknown layout {s:?}"))),
        }
    }
}

#[derive(Debug, Clone)]
pub enum Ingested {
    Items(ItemResponseMatrix),
    Groups(GroupedObservations),
    Samples(SampleSet),
}

struct Table {
    header: Vec<String>,
    rows: Vec<(u64, Vec<String>)>,
}

fn read_table(text: &str) -> Result<Table> {
    let mut reader = csv::ReaderBuilder::new()
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let header: Vec<String> = reader
        .headers()
        .map_err(|e| Error::Parse {
            line: 1,
            message: e.to_string(),
        })?
        .iter()
        .map(str::to_string)
        .collect();
    if header.is_empty() || header.iter().all(String::is_empty) {
        return Err(Error::Parse {
            line: 1,
            message: "empty file or missing header".into(),
        });
    }
    let mut rows = Vec::new();
    for rec in reader.records() {
        let rec = rec.map_err(|e| Error::Parse {
            line: e.position().map_or(0, |p| p.line()),
            message: e.to_string(),
        })?;
        let line = rec.position().map_or(0, |p| p.line());
        if rec.len() == 1 && rec[0].is_empty() {
            continue;
        }
        if rec.len() != header.len() {
            return Err(Error::Parse {
                line,
                message: format!("expected {} fields, found {}", header.len(), rec.len()),
            });
        }
        rows.push((line, rec.iter().map(str::to_string).collect()));
    }
    if rows.is_empty() {
        return Err(Error::Parse {
            line: 2,
            message: "no data rows".into(),
        });
    }
    Ok(Table { header, rows })
}

fn number(cell: &str, line: u64, column: &str) -> Result<f64> {
    match cell.parse::<f64>() {
        Ok(v) if v.is_finite() => Ok(v),
        _ => Err(Error::Parse {
            line,
            message: format!("column {column:?}: not a finite number: {cell:?}"),
        }),
    }
}

fn numeric_matrix(t: &Table) -> Result<DMatrix<f64>> {
    let n = t.rows.len();
    let p = t.header.len();
    let mut m = DMatrix::zeros(n, p);
    for (i, (line, row)) in t.rows.iter().enumerate() {
        for (j, cell) in row.iter().enumerate() {
            m[(i, j)] = number(cell, *line, &t.header[j])?;
        }
    }
    Ok(m)
}

pub fn parse_items(text: &str) -> Result<ItemResponseMatrix> {
    ItemResponseMatrix::new(numeric_matrix(&read_table(text)?)?)
}

/// Groups keep the order in which their ids first appear.
pub fn parse_groups(text: &str) -> Result<GroupedObservations> {
    let t = read_table(text)?;
    if t.header.len() != 2 {
        return Err(Error::Parse {
            line: 1,
            message: format!("groups layout needs 2 columns, found {}", t.header.len()),
        });
    }
    let mut ids: Vec<String> = Vec::new();
    let mut groups: Vec<Vec<f64>> = Vec::new();
    for (line, row) in &t.rows {
        let v = number(&row[1], *line, &t.header[1])?;
        match ids.iter().position(|id| id == &row[0]) {
            Some(g) => groups[g].push(v),
            None => {
                ids.push(row[0].clone());
                groups.push(vec![v]);
            }
        }
    }
    GroupedObservations::new(groups)
}

/// Column labels come from the header; the mean is the column average.
pub fn parse_samples(text: &str) -> Result<SampleSet> {
    let t = read_table(text)?;
    let m = numeric_matrix(&t)?;
    let p = m.ncols();
    SampleSet::new(m, nalgebra::DVector::zeros(p))?
        .with_labels(t.header.clone())
        .map(SampleSet::with_estimated_mean)
}

pub fn parse_csv(text: &str, layout: Layout) -> Result<Ingested> {
    Ok(match layout {
        Layout::Items => Ingested::Items(parse_items(text)?),
        Layout::Groups => Ingested::Groups(parse_groups(text)?),
        Layout::Samples => Ingested::Samples(parse_samples(text)?),
    })
}

pub fn ingest_csv(path: &Path, layout: Layout) -> Result<Ingested> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_csv(&text, layout)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::reliability::{kr20, ResponseKind};

    #[test]
    fn binary_items() {
        let m = parse_items("a,b\n1,0\n0,1\n").unwrap();
        assert_eq!(m.kind(), ResponseKind::Binary);
        assert_eq!((m.n(), m.k()), (2, 2));
    }

    #[test]
    fn real_items_refused_by_kr20() {
        let m = parse_items("a,b\n1,0.5\n0,1\n1,1\n").unwrap();
        assert_eq!(m.kind(), ResponseKind::Real);
        assert!(kr20(&m).is_err());
    }

    #[test]
    fn three_groups() {
        let g = parse_groups("group,score\nA,1\nB,2\nA,3\nC,4\nB,5\nA,6\n").unwrap();
        assert_eq!(g.sizes(), vec![3, 2, 1]);
        assert_eq!(g.groups()[0], vec![1.0, 3.0, 6.0]);
    }

    #[test]
    fn samples_keep_labels() {
        let s = parse_samples("x,y\n1,2\n3,6\n").unwrap();
        assert_eq!(s.labels().unwrap(), ["x", "y"]);
        assert_eq!(s.mu()[1], 4.0);
    }

    #[test]
    fn errors_carry_line_numbers() {
        assert!(matches!(
            parse_items("a,b\n1,0\n1\n"),
            Err(Error::Parse { line: 3, .. })
        ));
        assert!(matches!(
            parse_items("a,b\n1,0\n0,1\nx,1\n"),
            Err(Error::Parse { line: 4, .. })
        ));
        assert!(matches!(parse_items(""), Err(Error::Parse { line: 1, .. })));
        assert!(matches!(parse_items("a,b\n"), Err(Error::Parse { .. })));
    }
}
