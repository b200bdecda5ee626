//! `.cand` candidate files: one tab-separated line per cluster.
//!
//! Columns: snr (2 decimals), peak_sample, time_s (9 decimals), width_index,
//! dm_trial, dm (3 decimals), members, begin_sample, end_sample.

use std::io::{self, Write};

use crate::cluster::ClusterResult;
use crate::fbio::FilterbankHeader;

/// Formats one cluster as a `.cand` line (no newline).
pub fn format_line(c: &ClusterResult, tsamp: f64) -> String {
    let r = &c.representative;
    format!(
        "{:.2}\t{}\t{:.9}\t{}\t{}\t{:.3}\t{}\t{}\t{}",
        r.snr,
        r.peak_sample,
        r.peak_sample as f64 * tsamp,
        r.width_index,
        r.dm_trial,
        r.dm,
        c.members,
        c.begin_sample,
        c.end_sample
    )
}

/// Writes `clusters` sorted by (peak_sample, dm_trial) and returns the
/// number of lines.
pub fn write_candidates<W: Write>(clusters: &[ClusterResult], header: &FilterbankHeader, mut sink: W) -> io::Result<usize> {
    let mut order: Vec<&ClusterResult> = clusters.iter().collect();
    order.sort_by(|a, b| {
        let (x, y) = (&a.representative, &b.representative);
        x.peak_sample
            .cmp(&y.peak_sample)
            .then(x.dm_trial.cmp(&y.dm_trial))
            .then(x.width_index.cmp(&y.width_index))
    });
    for c in &order {
        writeln!(sink, "{}", format_line(c, header.tsamp))?;
    }
    sink.flush()?;
    Ok(order.len())
}

/// One parsed `.cand` line.
#[derive(Debug, Clone, PartialEq)]
pub struct CandRecord {
    pub snr: f64,
    pub peak_sample: u64,
    pub time_s: f64,
    pub width_index: u32,
    pub dm_trial: u32,
    pub dm: f64,
    pub members: usize,
    pub begin_sample: u64,
    pub end_sample: u64,
}

#[derive(Debug, thiserror::Error, PartialEq)]
#[error("line {line}: {reason}")]
pub struct ParseError {
    pub line: usize,
    pub reason: String,
}

fn field<T: std::str::FromStr>(parts: &[&str], i: usize, line: usize) -> Result<T, ParseError> {
    parts[i]
        .parse()
        .map_err(|_| ParseError { line, reason: format!("column {} not parseable: {:?}", i + 1, parts[i]) })
}

/// Parses the text of a `.cand` file. Blank lines are ignored.
pub fn parse_candidates(text: &str) -> Result<Vec<CandRecord>, ParseError> {
    let mut out = Vec::new();
    for (n, raw) in text.lines().enumerate() {
        let line = n + 1;
        if raw.trim().is_empty() {
            continue;
        }
        let p: Vec<&str> = raw.split('\t').collect();
        if p.len() != 9 {
            return Err(ParseError { line, reason: format!("expected 9 columns, found {}", p.len()) });
        }
        out.push(CandRecord {
            snr: field(&p, 0, line)?,
            peak_sample: field(&p, 1, line)?,
            time_s: field(&p, 2, line)?,
            width_index: field(&p, 3, line)?,
            dm_trial: field(&p, 4, line)?,
            dm: field(&p, 5, line)?,
            members: field(&p, 6, line)?,
            begin_sample: field(&p, 7, line)?,
            end_sample: field(&p, 8, line)?,
        });
    }
    Ok(out)
}
