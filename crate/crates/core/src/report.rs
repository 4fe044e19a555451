//! Evaluation CSV rows and the per-method `(rho, mean_wsr)` series built
//! from them.

use std::fmt::Write as _;

use crate::error::{Error, Result};

pub const EVAL_HEADER: &str = "sample_id,method,rho,wsr";
pub const SERIES_HEADER: &str = "method,rho,mean_wsr";
/// `sample_id` of summary rows.
pub const SUMMARY_ID: &str = "mean";

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SampleId {
    Index(usize),
    Mean,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EvalRow {
    pub sample_id: SampleId,
    pub method: String,
    pub rho: f64,
    pub wsr: f64,
}

impl EvalRow {
    pub fn sample(index: usize, method: &str, rho: f64, wsr: f64) -> Self {
        Self {
            sample_id: SampleId::Index(index),
            method: method.to_string(),
            rho,
            wsr,
        }
    }
}

/// Per-sample rows for one method at one SNR.
pub fn method_rows(method: &str, rho: f64, values: &[f64]) -> Vec<EvalRow> {
    values
        .iter()
        .enumerate()
        .map(|(i, &w)| EvalRow::sample(i, method, rho, w))
        .collect()
}

/// Appends a summary row for every `(method, rho)` group, in order of first
/// appearance.
pub fn with_summaries(rows: Vec<EvalRow>) -> Vec<EvalRow> {
    let series = aggregate(&rows);
    let mut out = rows;
    out.extend(series.into_iter().map(|p| EvalRow {
        sample_id: SampleId::Mean,
        method: p.method,
        rho: p.rho,
        wsr: p.mean_wsr,
    }));
    out
}

pub fn eval_csv(rows: &[EvalRow]) -> String {
    let mut s = String::from(EVAL_HEADER);
    s.push('\n');
    for r in rows {
        match r.sample_id {
            SampleId::Index(i) => write!(s, "{i}").unwrap(),
            SampleId::Mean => s.push_str(SUMMARY_ID),
        }
        writeln!(s, ",{},{},{}", r.method, r.rho, r.wsr).unwrap();
    }
    s
}

fn parse_f64(field: &str, name: &str, line: usize) -> Result<f64> {
    field.trim().parse::<f64>().map_err(|_| Error::Parse {
        line,
        msg: format!("invalid {name} `{field}`"),
    })
}

/// Parses an evaluation CSV. Line numbers in errors are 1-based.
pub fn parse_eval_csv(text: &str) -> Result<Vec<EvalRow>> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        None => return Ok(Vec::new()),
        Some((_, h)) if h.trim() == EVAL_HEADER => {}
        Some((_, h)) => {
            return Err(Error::Parse {
                line: 1,
                msg: format!("expected header `{EVAL_HEADER}`, found `{h}`"),
            })
        }
    }
    let mut rows = Vec::new();
    for (idx, raw) in lines {
        let line = idx + 1;
        if raw.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = raw.split(',').collect();
        if fields.len() != 4 {
            return Err(Error::Parse {
                line,
                msg: format!("expected 4 fields, found {}", fields.len()),
            });
        }
        let sample_id = match fields[0].trim() {
            SUMMARY_ID => SampleId::Mean,
            id => SampleId::Index(id.parse().map_err(|_| Error::Parse {
                line,
                msg: format!("invalid sample_id `{id}`"),
            })?),
        };
        let method = fields[1].trim();
        if method.is_empty() {
            return Err(Error::Parse {
                line,
                msg: "empty method".into(),
            });
        }
        rows.push(EvalRow {
            sample_id,
            method: method.to_string(),
            rho: parse_f64(fields[2], "rho", line)?,
            wsr: parse_f64(fields[3], "wsr", line)?,
        });
    }
    Ok(rows)
}

#[derive(Clone, Debug, PartialEq)]
pub struct SeriesPoint {
    pub method: String,
    pub rho: f64,
    pub mean_wsr: f64,
}

/// Mean WSR per `(method, rho)` from per-sample rows; summary rows are
/// ignored. Methods keep their order of first appearance, SNRs ascend.
pub fn aggregate(rows: &[EvalRow]) -> Vec<SeriesPoint> {
    let mut groups: Vec<(String, f64, f64, usize)> = Vec::new();
    for r in rows.iter().filter(|r| r.sample_id != SampleId::Mean) {
        match groups
            .iter_mut()
            .find(|g| g.0 == r.method && g.1.to_bits() == r.rho.to_bits())
        {
            Some(g) => {
                g.2 += r.wsr;
                g.3 += 1;
            }
            None => groups.push((r.method.clone(), r.rho, r.wsr, 1)),
        }
    }
    let mut methods: Vec<&str> = Vec::new();
    for g in &groups {
        if !methods.contains(&g.0.as_str()) {
            methods.push(&g.0);
        }
    }
    let mut out: Vec<SeriesPoint> = groups
        .iter()
        .map(|(m, rho, sum, n)| SeriesPoint {
            method: m.clone(),
            rho: *rho,
            mean_wsr: sum / *n as f64,
        })
        .collect();
    out.sort_by(|a, b| {
        let ma = methods.iter().position(|m| *m == a.method);
        let mb = methods.iter().position(|m| *m == b.method);
        ma.cmp(&mb).then(a.rho.total_cmp(&b.rho))
    });
    out
}

pub fn series_csv(points: &[SeriesPoint]) -> String {
    let mut s = String::from(SERIES_HEADER);
    s.push('\n');
    for p in points {
        writeln!(s, "{},{},{}", p.method, p.rho, p.mean_wsr).unwrap();
    }
    s
}
