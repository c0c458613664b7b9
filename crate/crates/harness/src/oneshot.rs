//! One-shot inference on user-supplied data.

use std::sync::Arc;

use anyhow::{ensure, Context, Result};
use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use selectcond::location_model::{decompose, selective_location_inference, LocationFamily};
use selectcond::polyhedral::{infer_linear, marginal_screening_event, projection_target};
use selectcond::selective_model::{GaussianMean, SelectionFunction, SelectiveModel};
use selectcond::two_stage::{conditional_inference, unconditional_inference, SampleSizePrior, TwoStageData};
use selectcond::winners::{infer_winner, WinnersData, WinnersModelKind};
use selectcond::{Alternative, InferenceResult};

/// Numbers separated by commas, whitespace or newlines. Lines starting
/// with `#` are skipped, as is a first line that is not numeric (a header).
pub fn parse_numbers(text: &str) -> Result<Vec<f64>> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let tokens: Vec<&str> = line
            .split(|c: char| c == ',' || c.is_whitespace())
            .filter(|t| !t.is_empty())
            .collect();
        let parsed: Result<Vec<f64>, _> = tokens.iter().map(|t| t.parse::<f64>()).collect();
        match parsed {
            Ok(v) => out.extend(v),
            Err(_) if i == 0 => continue,
            Err(e) => return Err(e).with_context(|| format!("line {}: `{line}`", i + 1)),
        }
    }
    ensure!(out.iter().all(|v| v.is_finite()), "data must be finite");
    Ok(out)
}

/// Rows of numbers, one per line, all the same length.
pub fn parse_matrix(text: &str) -> Result<DMatrix<f64>> {
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for line in text
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
    {
        rows.push(parse_numbers(line)?);
    }
    rows.retain(|r| !r.is_empty());
    ensure!(!rows.is_empty(), "design is empty");
    let p = rows[0].len();
    ensure!(rows.iter().all(|r| r.len() == p), "design rows differ in length");
    Ok(DMatrix::from_row_iterator(rows.len(), p, rows.into_iter().flatten()))
}

pub fn winners(y: Vec<f64>, sigma: f64, kind: WinnersModelKind, level: f64) -> Result<InferenceResult> {
    let d = WinnersData::new(y, sigma)?;
    Ok(infer_winner(&d, kind, level)?)
}

pub fn location(y: &[f64], family: &str, alpha: f64, level: f64) -> Result<InferenceResult> {
    let fam = LocationFamily::by_name(family)?;
    let conf = decompose(y, &fam)?;
    Ok(selective_location_inference(&conf, &fam, alpha, level)?)
}

#[derive(Debug, Clone, Serialize)]
pub struct TwoStageReport {
    pub conditional: InferenceResult,
    pub unconditional: Option<InferenceResult>,
}

/// The first `n1` values are the screening stage, the rest the follow-up.
pub fn two_stage(
    y: &[f64],
    n1: usize,
    threshold: f64,
    prior: Option<SampleSizePrior>,
    level: f64,
) -> Result<TwoStageReport> {
    ensure!(
        n1 >= 1 && n1 <= y.len(),
        "n1 = {n1} does not fit {} observations",
        y.len()
    );
    let d = TwoStageData::new(y[..n1].to_vec(), y[n1..].to_vec(), threshold)?;
    Ok(TwoStageReport {
        conditional: conditional_inference(&d, level)?,
        unconditional: prior.map(|p| unconditional_inference(&d, &p, level)).transpose()?,
    })
}

/// Mean of `n` Gaussian observations, selected when the sample mean exceeds
/// `threshold` (or its absolute value does, with `two_sided`).
pub fn mean(y: &[f64], sigma: f64, threshold: f64, two_sided: bool, level: f64) -> Result<InferenceResult> {
    let fam = GaussianMean::new(y.len(), sigma)?;
    let sel = if two_sided {
        SelectionFunction::abs_mean_above(threshold)
    } else {
        SelectionFunction::mean_above(threshold)
    };
    let model = SelectiveModel::new(Arc::new(fam), sel);
    Ok(model.infer(y, level, 0.0, Alternative::TwoSided)?)
}

#[derive(Debug, Clone, Serialize)]
pub struct ScreeningRow {
    pub variable: usize,
    pub sign: f64,
    pub result: InferenceResult,
}

/// Marginal screening of the columns of `x` (rescaled to unit norm) at
/// `threshold`, then inference for each selected partial coefficient.
pub fn screening(x: DMatrix<f64>, y: Vec<f64>, threshold: f64, sigma: f64, level: f64) -> Result<Vec<ScreeningRow>> {
    ensure!(
        x.nrows() == y.len(),
        "design has {} rows but there are {} responses",
        x.nrows(),
        y.len()
    );
    ensure!(sigma > 0.0, "sigma must be positive");
    let mut x = x;
    for (j, mut c) in x.column_iter_mut().enumerate() {
        let norm = c.norm();
        ensure!(norm > 0.0, "column {j} is zero");
        c /= norm;
    }
    // work on the unit-variance scale
    let y = DVector::from_vec(y) / sigma;
    let scr = marginal_screening_event(&x, &y, threshold / sigma)?;
    let polys = [scr.polyhedron.clone()];
    scr.selected
        .iter()
        .zip(&scr.signs)
        .enumerate()
        .map(|(k, (&variable, &sign))| {
            let target = projection_target(&x, &scr.selected, k)?;
            let mut result = infer_linear(&polys, &target, &y, 1.0, level, 0.0, Alternative::TwoSided)?;
            result.estimate *= sigma;
            result.ci.lower *= sigma;
            result.ci.upper *= sigma;
            Ok(ScreeningRow { variable, sign, result })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn numbers_accept_commas_spaces_and_a_header() {
        let v = parse_numbers("y\n1.5, 2\n# comment\n-3 4e-1\n").unwrap();
        assert_eq!(v, vec![1.5, 2.0, -3.0, 0.4]);
        assert!(parse_numbers("1\nfoo\n").is_err());
    }

    #[test]
    fn screening_is_equivariant_in_sigma() {
        let x = parse_matrix("1 0.2\n0.3 1\n-0.5 0.4\n0.1 -0.7\n").unwrap();
        let y = vec![2.5, 0.4, -1.1, 0.3];
        let a = screening(x.clone(), y.clone(), 1.0, 1.0, 0.9).unwrap();
        let b = screening(x, y.iter().map(|v| 3.0 * v).collect(), 3.0, 3.0, 0.9).unwrap();
        assert_eq!(a.len(), b.len());
        for (r, s) in a.iter().zip(&b) {
            assert_eq!(r.variable, s.variable);
            assert!((3.0 * r.result.estimate - s.result.estimate).abs() < 1e-8);
            assert!((r.result.pvalue - s.result.pvalue).abs() < 1e-10);
        }
    }
}
