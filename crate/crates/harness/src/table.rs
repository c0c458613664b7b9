//! Per-replication rows, their CSV form and the summaries computed from
//! them.

use std::io::{Read, Write};

use anyhow::{ensure, Context, Result};
use serde::{Deserialize, Serialize};

use selectcond::stats::{ks_uniform, median};
use selectcond::InferenceResult;

pub const COLUMNS: [&str; 8] = ["rep", "estimate", "lo", "hi", "covered", "length", "pvalue", "flags"];

/// Flag carried by rows whose replication failed.
pub const ERROR_FLAG: &str = "error";

#[derive(Debug, Clone, PartialEq)]
pub struct Row {
    pub rep: u64,
    pub estimate: f64,
    pub lo: f64,
    pub hi: f64,
    pub covered: bool,
    pub length: f64,
    pub pvalue: f64,
    pub flags: String,
}

impl Row {
    pub fn from_result(rep: u64, r: &InferenceResult, truth: f64) -> Self {
        Self {
            rep,
            estimate: r.estimate,
            lo: r.ci.lower,
            hi: r.ci.upper,
            covered: r.ci.contains(truth),
            length: r.ci.length(),
            pvalue: r.pvalue,
            flags: r.diagnostics.flags(),
        }
    }

    pub fn failed(rep: u64, err: &dyn std::fmt::Display) -> Self {
        let msg: String = err.to_string().chars().filter(|c| *c != '|' && *c != ',').collect();
        Self {
            rep,
            estimate: f64::NAN,
            lo: f64::NAN,
            hi: f64::NAN,
            covered: false,
            length: f64::NAN,
            pvalue: f64::NAN,
            flags: format!("{ERROR_FLAG}: {msg}"),
        }
    }

    pub fn is_failed(&self) -> bool {
        self.flags.starts_with(ERROR_FLAG)
    }
}

/// 17 significant digits, so values survive a text round trip.
pub fn fmt_f64(v: f64) -> String {
    if v.is_nan() {
        "NaN".into()
    } else if v.is_infinite() {
        if v > 0.0 { "inf" } else { "-inf" }.into()
    } else {
        format!("{v:.16e}")
    }
}

fn parse_f64(s: &str) -> Result<f64> {
    s.parse::<f64>().with_context(|| format!("bad number `{s}`"))
}

pub fn write_rows<W: Write>(out: W, rows: &[Row]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(COLUMNS)?;
    for r in rows {
        w.write_record([
            r.rep.to_string(),
            fmt_f64(r.estimate),
            fmt_f64(r.lo),
            fmt_f64(r.hi),
            (r.covered as u8).to_string(),
            fmt_f64(r.length),
            fmt_f64(r.pvalue),
            r.flags.clone(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_rows<R: Read>(input: R) -> Result<Vec<Row>> {
    let mut rd = csv::Reader::from_reader(input);
    let header: Vec<String> = rd.headers()?.iter().map(str::to_owned).collect();
    ensure!(header == COLUMNS, "unexpected columns {header:?}");
    rd.records()
        .map(|rec| {
            let rec = rec?;
            Ok(Row {
                rep: rec[0].parse()?,
                estimate: parse_f64(&rec[1])?,
                lo: parse_f64(&rec[2])?,
                hi: parse_f64(&rec[3])?,
                covered: match &rec[4] {
                    "1" => true,
                    "0" => false,
                    other => anyhow::bail!("bad coverage flag `{other}`"),
                },
                length: parse_f64(&rec[5])?,
                pvalue: parse_f64(&rec[6])?,
                flags: rec[7].to_owned(),
            })
        })
        .collect()
}

/// Summary of one table. Statistics that are undefined or infinite (for
/// instance a median length when most intervals are unbounded) are `None`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableSummary {
    pub rows: usize,
    pub failed: usize,
    pub coverage: Option<f64>,
    pub coverage_se: Option<f64>,
    pub median_length: Option<f64>,
    /// Kolmogorov–Smirnov distance of the p-values from Uniform(0, 1).
    pub ks_pvalue: Option<f64>,
    /// Mean over finite estimates.
    pub mean_estimate: Option<f64>,
    pub divergent: usize,
    pub unbounded: usize,
}

fn finite_or_none(v: f64) -> Option<f64> {
    v.is_finite().then_some(v)
}

impl TableSummary {
    pub fn of(rows: &[Row]) -> Self {
        let ok: Vec<&Row> = rows.iter().filter(|r| !r.is_failed()).collect();
        let n = ok.len() as f64;
        let (coverage, coverage_se) = if ok.is_empty() {
            (None, None)
        } else {
            let c = ok.iter().filter(|r| r.covered).count() as f64 / n;
            (Some(c), Some((c * (1.0 - c) / n).sqrt()))
        };
        let lengths: Vec<f64> = ok.iter().map(|r| r.length).collect();
        let pvals: Vec<f64> = ok.iter().map(|r| r.pvalue).filter(|p| p.is_finite()).collect();
        let est: Vec<f64> = ok.iter().map(|r| r.estimate).filter(|e| e.is_finite()).collect();
        Self {
            rows: rows.len(),
            failed: rows.len() - ok.len(),
            coverage,
            coverage_se,
            median_length: if lengths.is_empty() {
                None
            } else {
                finite_or_none(median(&lengths))
            },
            ks_pvalue: if pvals.is_empty() {
                None
            } else {
                Some(ks_uniform(&pvals))
            },
            mean_estimate: if est.is_empty() {
                None
            } else {
                Some(est.iter().sum::<f64>() / est.len() as f64)
            },
            divergent: ok.iter().filter(|r| r.flags.contains("divergent-mle")).count(),
            unbounded: ok.iter().filter(|r| r.flags.contains("unbounded")).count(),
        }
    }
}

/// Median over replications of `length(a) / length(b)`, pairing rows by
/// `rep` and skipping failed or undefined pairs.
pub fn median_length_ratio(a: &[Row], b: &[Row]) -> Option<f64> {
    let ratios: Vec<f64> = a
        .iter()
        .zip(b)
        .filter(|(x, y)| x.rep == y.rep && !x.is_failed() && !y.is_failed())
        .map(|(x, y)| x.length / y.length)
        .filter(|r| !r.is_nan())
        .collect();
    if ratios.is_empty() {
        None
    } else {
        finite_or_none(median(&ratios))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(rep: u64, est: f64, covered: bool, length: f64, p: f64) -> Row {
        Row {
            rep,
            estimate: est,
            lo: est - length / 2.0,
            hi: est + length / 2.0,
            covered,
            length,
            pvalue: p,
            flags: String::new(),
        }
    }

    #[test]
    fn csv_round_trip_is_exact() {
        let rows = vec![
            row(0, 0.1 + 0.2, true, std::f64::consts::PI, 1e-300),
            Row {
                lo: f64::NEG_INFINITY,
                length: f64::INFINITY,
                flags: "divergent-mle|unbounded-lower".into(),
                ..row(1, -1.0 / 3.0, false, 1.0, 0.5)
            },
            Row::failed(2, &"no root, really"),
        ];
        let mut buf = Vec::new();
        write_rows(&mut buf, &rows).unwrap();
        let back = read_rows(buf.as_slice()).unwrap();
        assert_eq!(back.len(), 3);
        for (a, b) in rows.iter().zip(&back) {
            assert_eq!(a.estimate.to_bits(), b.estimate.to_bits());
            assert_eq!(a.lo.to_bits(), b.lo.to_bits());
            assert_eq!(a.flags, b.flags);
        }
        assert!(back[2].is_failed());
    }

    #[test]
    fn summary_skips_failed_rows() {
        let rows = vec![
            row(0, 1.0, true, 2.0, 0.1),
            row(1, 3.0, false, 4.0, 0.7),
            Row::failed(2, &"boom"),
        ];
        let s = TableSummary::of(&rows);
        assert_eq!(s.rows, 3);
        assert_eq!(s.failed, 1);
        assert_eq!(s.coverage, Some(0.5));
        assert_eq!(s.median_length, Some(3.0));
        assert_eq!(s.mean_estimate, Some(2.0));
    }

    #[test]
    fn ratio_pairs_by_replication() {
        let a = vec![
            row(0, 0.0, true, 1.0, 0.5),
            row(1, 0.0, true, 3.0, 0.5),
            row(2, 0.0, true, 2.0, 0.5),
        ];
        let b = vec![
            row(0, 0.0, true, 2.0, 0.5),
            row(1, 0.0, true, 4.0, 0.5),
            row(2, 0.0, true, 2.0, 0.5),
        ];
        assert_eq!(median_length_ratio(&a, &b), Some(0.75));
    }
}
