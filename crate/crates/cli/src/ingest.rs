//! CSV reading and writing for the three data layouts.
//!
//! Headers name the columns: randomized files carry `a,y[,y2,y3]`,
//! multi-source files add `site`, observational files carry `x1..xk,a,y`.
//! Column order is free and unknown columns are ignored.

use std::io::{Read, Write};
use std::path::Path;

use cfdist::{Arm, MultiSourceSample, ObservationalSample, Points, RandomizedSample};

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Schema {
    Randomized,
    MultiSource,
    Observational,
}

/// Header names to read; `None` selects the conventional names.
#[derive(Debug, Clone, Default)]
pub struct ColumnMap {
    pub treatment: Option<String>,
    pub outcomes: Option<Vec<String>>,
    pub site: Option<String>,
    pub covariates: Option<Vec<String>>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Dataset {
    Randomized(RandomizedSample),
    MultiSource(MultiSourceSample),
    Observational(ObservationalSample),
}

pub fn ingest_csv(path: &Path, schema: Schema, columns: &ColumnMap) -> CliResult<Dataset> {
    let file = std::fs::File::open(path).map_err(|e| CliError::io(path, e))?;
    read_csv(file, schema, columns)
}

struct Layout {
    treatment: usize,
    outcomes: Vec<usize>,
    site: Option<usize>,
    covariates: Vec<usize>,
    names: Vec<String>,
}

fn layout(headers: &csv::StringRecord, schema: Schema, columns: &ColumnMap) -> CliResult<Layout> {
    let names: Vec<String> = headers.iter().map(str::to_string).collect();
    if names.iter().all(String::is_empty) {
        return Err(CliError::Schema("missing header row".into()));
    }
    for (i, n) in names.iter().enumerate() {
        if names[..i].contains(n) {
            return Err(CliError::Schema(format!("duplicate column '{n}'")));
        }
    }
    let find = |n: &str| names.iter().position(|h| h == n);
    let require =
        |n: &str| find(n).ok_or_else(|| CliError::Schema(format!("missing column '{n}'")));
    // Conventional names form a contiguous run: first, prefix2, prefix3, ...
    let run = |first: &str, prefix: &str| -> Vec<usize> {
        let mut idx: Vec<usize> = find(first).into_iter().collect();
        while let Some(i) = find(&format!("{prefix}{}", idx.len() + 1)) {
            idx.push(i);
        }
        idx
    };

    let treatment = require(columns.treatment.as_deref().unwrap_or("a"))?;
    let outcomes = match &columns.outcomes {
        Some(list) if !list.is_empty() => {
            list.iter().map(|n| require(n)).collect::<CliResult<_>>()?
        }
        _ => {
            require("y")?;
            run("y", "y")
        }
    };
    let site = match schema {
        Schema::MultiSource => Some(require(columns.site.as_deref().unwrap_or("site"))?),
        _ => None,
    };
    let covariates = match schema {
        Schema::Observational => match &columns.covariates {
            Some(list) if !list.is_empty() => {
                list.iter().map(|n| require(n)).collect::<CliResult<_>>()?
            }
            _ => {
                require("x1")?;
                run("x1", "x")
            }
        },
        _ => Vec::new(),
    };
    Ok(Layout {
        treatment,
        outcomes,
        site,
        covariates,
        names,
    })
}

fn field<'r>(
    rec: &'r csv::StringRecord,
    col: usize,
    layout: &Layout,
    row: usize,
) -> CliResult<&'r str> {
    match rec.get(col) {
        Some(v) if !v.is_empty() => Ok(v),
        _ => Err(CliError::Value {
            row,
            message: format!("missing value in column '{}'", layout.names[col]),
        }),
    }
}

fn number(rec: &csv::StringRecord, col: usize, layout: &Layout, row: usize) -> CliResult<f64> {
    let raw = field(rec, col, layout, row)?;
    match raw.parse::<f64>() {
        Ok(v) if v.is_finite() => Ok(v),
        _ => Err(CliError::Value {
            row,
            message: format!(
                "column '{}' is not a finite number: '{raw}'",
                layout.names[col]
            ),
        }),
    }
}

fn arm(rec: &csv::StringRecord, layout: &Layout, row: usize) -> CliResult<Arm> {
    let raw = field(rec, layout.treatment, layout, row)?;
    match raw.parse::<f64>() {
        Ok(0.0) => Ok(Arm::Control),
        Ok(1.0) => Ok(Arm::Treated),
        _ => Err(CliError::Value {
            row,
            message: format!("treatment must be 0 or 1, found '{raw}'"),
        }),
    }
}

/// Parses CSV text from any reader; see [`ingest_csv`].
pub fn read_csv(reader: impl Read, schema: Schema, columns: &ColumnMap) -> CliResult<Dataset> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .flexible(true)
        .from_reader(reader);
    let headers = rdr
        .headers()
        .map_err(|e| CliError::Schema(format!("unreadable header: {e}")))?
        .clone();
    let layout = layout(&headers, schema, columns)?;

    let mut arms = Vec::new();
    let mut y = Vec::new();
    let mut x = Vec::new();
    let mut sites: Vec<String> = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let row = i + 1;
        let rec = rec.map_err(|e| CliError::Value {
            row,
            message: e.to_string(),
        })?;
        if rec.len() != headers.len() {
            return Err(CliError::Value {
                row,
                message: format!("expected {} fields, found {}", headers.len(), rec.len()),
            });
        }
        arms.push(arm(&rec, &layout, row)?);
        for &c in &layout.outcomes {
            y.push(number(&rec, c, &layout, row)?);
        }
        for &c in &layout.covariates {
            x.push(number(&rec, c, &layout, row)?);
        }
        if let Some(c) = layout.site {
            sites.push(field(&rec, c, &layout, row)?.to_string());
        }
    }
    if arms.is_empty() {
        return Err(CliError::Schema("no data rows".into()));
    }

    let outcomes = Points::new(layout.outcomes.len(), y)?;
    Ok(match schema {
        Schema::Randomized => Dataset::Randomized(RandomizedSample::new(arms, outcomes)?),
        Schema::Observational => {
            let covariates = Points::new(layout.covariates.len(), x)?;
            Dataset::Observational(ObservationalSample::new(covariates, arms, outcomes)?)
        }
        Schema::MultiSource => {
            let mut labels: Vec<String> = Vec::new();
            let mut members: Vec<Vec<usize>> = Vec::new();
            for (i, s) in sites.iter().enumerate() {
                match labels.iter().position(|l| l == s) {
                    Some(k) => members[k].push(i),
                    None => {
                        labels.push(s.clone());
                        members.push(vec![i]);
                    }
                }
            }
            let samples = members
                .iter()
                .map(|idx| {
                    let site_arms = idx.iter().map(|&i| arms[i]).collect();
                    RandomizedSample::new(site_arms, outcomes.select(idx))
                })
                .collect::<cfdist::Result<Vec<_>>>()?;
            Dataset::MultiSource(MultiSourceSample::with_labels(samples, labels)?)
        }
    })
}

fn numbered<'a>(prefix: &'a str, first: &'a str, k: usize) -> impl Iterator<Item = String> + 'a {
    (1..=k).map(move |i| {
        if i == 1 {
            first.to_string()
        } else {
            format!("{prefix}{i}")
        }
    })
}

fn write_rows(
    w: &mut csv::Writer<impl Write>,
    site: Option<&str>,
    x: Option<&Points>,
    arms: &[Arm],
    y: &Points,
) -> csv::Result<()> {
    for (i, a) in arms.iter().enumerate() {
        let mut rec: Vec<String> = Vec::new();
        rec.extend(site.map(str::to_string));
        if let Some(x) = x {
            rec.extend(x.row(i).iter().map(f64::to_string));
        }
        rec.push(a.indicator().to_string());
        rec.extend(y.row(i).iter().map(f64::to_string));
        w.write_record(&rec)?;
    }
    Ok(())
}

/// Writes a dataset with conventional headers. Numbers use the shortest
/// representation that parses back to the same value.
pub fn write_csv(data: &Dataset, out: impl Write) -> CliResult<()> {
    let mut w = csv::Writer::from_writer(out);
    let to_err = |e: csv::Error| CliError::Io {
        path: "<output>".into(),
        message: e.to_string(),
    };
    let ys = |d: usize| numbered("y", "y", d).collect::<Vec<_>>();
    match data {
        Dataset::Randomized(s) => {
            let mut h = vec!["a".to_string()];
            h.extend(ys(s.dim()));
            w.write_record(&h).map_err(to_err)?;
            write_rows(&mut w, None, None, s.arms(), s.outcomes()).map_err(to_err)?;
        }
        Dataset::MultiSource(m) => {
            let mut h = vec!["site".to_string(), "a".to_string()];
            h.extend(ys(m.dim()));
            w.write_record(&h).map_err(to_err)?;
            for (s, label) in m.sites().iter().zip(m.labels()) {
                write_rows(&mut w, Some(label), None, s.arms(), s.outcomes()).map_err(to_err)?;
            }
        }
        Dataset::Observational(o) => {
            let mut h: Vec<String> = numbered("x", "x1", o.covariate_dim()).collect();
            h.push("a".into());
            h.extend(ys(o.dim()));
            w.write_record(&h).map_err(to_err)?;
            write_rows(&mut w, None, Some(o.covariates()), o.arms(), o.outcomes())
                .map_err(to_err)?;
        }
    }
    w.flush().map_err(|e| CliError::Io {
        path: "<output>".into(),
        message: e.to_string(),
    })
}
