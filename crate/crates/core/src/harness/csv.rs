//! CSV export. Reals are written in scientific notation with 17 significant
//! digits, which parses back to the identical `f64`. Files are UTF-8 with LF
//! line endings and no trailing metadata.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::solver::Trace;

use super::stats::{Metric, ReplicationStats};

pub const TRACE_HEADER: &str = "k,cum_samples,gap_norm,err";
pub const STATS_HEADER: &str = "k,cum_samples,metric,mean,ci_low,ci_high";

pub fn format_real(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn parse_real(s: &str) -> Result<f64> {
    s.trim()
        .parse::<f64>()
        .map_err(|_| Error::Parse(format!("`{s}` is not a real number")))
}

pub fn trace_to_csv(trace: &Trace) -> String {
    let mut out = String::with_capacity(64 * (trace.len() + 1));
    out.push_str(TRACE_HEADER);
    out.push('\n');
    for r in &trace.records {
        let err = r.err.map(format_real).unwrap_or_default();
        out.push_str(&format!(
            "{},{},{},{}\n",
            r.k,
            r.cumulative_samples,
            format_real(r.gap_norm),
            err
        ));
    }
    out
}

pub fn stats_to_csv(stats: &ReplicationStats) -> String {
    let mut out = String::new();
    out.push_str(STATS_HEADER);
    out.push('\n');
    for row in &stats.rows {
        for (metric, s) in &row.metrics {
            out.push_str(&format!(
                "{},{},{},{},{},{}\n",
                row.k,
                row.cum_samples,
                metric,
                format_real(s.mean),
                format_real(s.ci_low),
                format_real(s.ci_high)
            ));
        }
    }
    out
}

fn write(path: &Path, contents: &str) -> Result<()> {
    fs::write(path, contents).map_err(|e| Error::io(path, e))
}

pub fn export_trace_csv(trace: &Trace, path: &Path) -> Result<()> {
    write(path, &trace_to_csv(trace))
}

pub fn export_stats_csv(stats: &ReplicationStats, path: &Path) -> Result<()> {
    write(path, &stats_to_csv(stats))
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraceRow {
    pub k: usize,
    pub cum_samples: u64,
    pub gap_norm: f64,
    pub err: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StatsCsvRow {
    pub k: usize,
    pub cum_samples: u64,
    pub metric: Metric,
    pub mean: f64,
    pub ci_low: f64,
    pub ci_high: f64,
}

fn data_lines<'a>(text: &'a str, header: &str) -> Result<impl Iterator<Item = (usize, &'a str)>> {
    let mut lines = text.lines();
    match lines.next() {
        Some(h) if h == header => Ok(lines.enumerate().map(|(i, l)| (i + 2, l))),
        other => Err(Error::Parse(format!(
            "expected header `{header}`, found `{}`",
            other.unwrap_or("")
        ))),
    }
}

fn parse_int<T: std::str::FromStr>(s: &str, line: usize) -> Result<T> {
    s.parse()
        .map_err(|_| Error::Parse(format!("line {line}: `{s}` is not an integer")))
}

pub fn parse_trace_csv(text: &str) -> Result<Vec<TraceRow>> {
    data_lines(text, TRACE_HEADER)?
        .map(|(line, l)| {
            let f: Vec<&str> = l.split(',').collect();
            if f.len() != 4 {
                return Err(Error::Parse(format!("line {line}: expected 4 fields")));
            }
            Ok(TraceRow {
                k: parse_int(f[0], line)?,
                cum_samples: parse_int(f[1], line)?,
                gap_norm: parse_real(f[2])?,
                err: if f[3].is_empty() { None } else { Some(parse_real(f[3])?) },
            })
        })
        .collect()
}

pub fn parse_stats_csv(text: &str) -> Result<Vec<StatsCsvRow>> {
    data_lines(text, STATS_HEADER)?
        .map(|(line, l)| {
            let f: Vec<&str> = l.split(',').collect();
            if f.len() != 6 {
                return Err(Error::Parse(format!("line {line}: expected 6 fields")));
            }
            Ok(StatsCsvRow {
                k: parse_int(f[0], line)?,
                cum_samples: parse_int(f[1], line)?,
                metric: Metric::from_name(f[2])
                    .ok_or_else(|| Error::Parse(format!("line {line}: unknown metric `{}`", f[2])))?,
                mean: parse_real(f[3])?,
                ci_low: parse_real(f[4])?,
                ci_high: parse_real(f[5])?,
            })
        })
        .collect()
}

pub fn read_trace_csv(path: &Path) -> Result<Vec<TraceRow>> {
    parse_trace_csv(&fs::read_to_string(path).map_err(|e| Error::io(path, e))?)
}

pub fn read_stats_csv(path: &Path) -> Result<Vec<StatsCsvRow>> {
    parse_stats_csv(&fs::read_to_string(path).map_err(|e| Error::io(path, e))?)
}
