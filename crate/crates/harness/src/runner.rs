//! Runs a configured experiment. Replication `r` draws only from stream
//! `r` of the experiment seed, and results are collected in replication
//! order, so output does not depend on the number of workers.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, ensure, Context, Result};
use nalgebra::{DMatrix, DVector};
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use selectcond::ancillarity::{self, Outcome};
use selectcond::location_model::{decompose, location_pvalue, selective_location_inference, LocationFamily};
use selectcond::polyhedral::{infer_linear, marginal_screening_event, projection_target};
use selectcond::rng::{replication_stream, Stream};
use selectcond::two_stage::{conditional_inference, simulate_selected_random_size, unconditional_inference};
use selectcond::winners::{infer_winner, WinnersData, WinnersModelKind};
use selectcond::{Alternative, Error};

use crate::config::{
    AncillarityParams, EventKind, ExperimentConfig, LocationParams, Params, PolyhedralParams, Scenario, TwoStageParams,
    WinnersParams,
};
use crate::table::{median_length_ratio, read_rows, write_rows, Row, TableSummary};

/// Give up on a replication after this many rejected draws.
const MAX_ATTEMPTS: usize = 1_000_000;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AuditRow {
    pub rep: u64,
    pub g_outcome: Outcome,
    pub m_outcome: Outcome,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditSummary {
    pub instances: usize,
    pub g_preserved: usize,
    pub m_preserved: usize,
    pub skipped: usize,
}

impl AuditSummary {
    pub fn of(rows: &[AuditRow]) -> Self {
        let count = |f: &dyn Fn(&AuditRow) -> bool| rows.iter().filter(|r| f(r)).count();
        Self {
            instances: rows.len(),
            g_preserved: count(&|r| r.g_outcome == Outcome::Preserved),
            m_preserved: count(&|r| r.m_outcome == Outcome::Preserved),
            skipped: count(&|r| {
                r.g_outcome == Outcome::HypothesisViolated || r.m_outcome == Outcome::HypothesisViolated
            }),
        }
    }

    pub fn all_preserved(&self) -> bool {
        self.g_preserved + self.skipped >= self.instances && self.m_preserved + self.skipped >= self.instances
    }
}

/// The fixed zero-probability instance, reported next to the audits.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CounterexampleReport {
    pub outcome: Outcome,
    pub base_grid_complete: bool,
    pub selective_grid_complete: bool,
    /// Null vector of the unselected model.
    pub witness: Option<Vec<f64>>,
}

pub fn counterexample_report() -> Result<CounterexampleReport> {
    let (model, sel) = ancillarity::g_counterexample();
    let cmp = ancillarity::compare_g_ancillarity(&model, &sel)?;
    let base = ancillarity::is_g_ancillary(&model, 0)?;
    Ok(CounterexampleReport {
        outcome: cmp.outcome,
        base_grid_complete: cmp.per_psi[0].0,
        selective_grid_complete: cmp.per_psi[0].1,
        witness: base.witness,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub enum Tables {
    Inference(Vec<(String, Vec<Row>)>),
    Audit(Vec<AuditRow>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunOutput {
    pub config: ExperimentConfig,
    pub tables: Tables,
    pub counterexample: Option<CounterexampleReport>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub scenario: String,
    pub seed: u64,
    pub n_reps: usize,
    pub level: Option<f64>,
    pub version: String,
    /// File name of each table and its summary.
    pub tables: BTreeMap<String, TableSummary>,
    /// Median over replications of the first table's interval length over
    /// the second's, for scenarios that compare two models.
    pub median_length_ratio: Option<f64>,
    /// Median length of the first table over that of the second.
    pub ratio_of_median_lengths: Option<f64>,
    pub audit: Option<AuditSummary>,
    pub counterexample: Option<CounterexampleReport>,
}

fn table_name(scenario: Scenario, model: Option<&str>) -> String {
    match model {
        Some(m) => format!("{scenario}-{m}.csv"),
        None => format!("{scenario}.csv"),
    }
}

fn par_reps<T, F>(n: usize, jobs: usize, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(u64) -> T + Sync + Send,
{
    let pool = rayon::ThreadPoolBuilder::new().num_threads(jobs.max(1)).build()?;
    Ok(pool.install(|| (0..n as u64).into_par_iter().map(&f).collect()))
}

fn normal(rng: &mut Stream) -> f64 {
    StandardNormal.sample(rng)
}

fn draw_winners(p: &WinnersParams, rng: &mut Stream) -> Result<WinnersData> {
    for _ in 0..MAX_ATTEMPTS {
        let y: Vec<f64> = p.theta.iter().map(|t| t + p.sigma * normal(rng)).collect();
        let d = WinnersData::new(y, p.sigma)?;
        if p.selected.is_none_or(|i| d.selected_index() == i) {
            return Ok(d);
        }
    }
    bail!("selected index never won in {MAX_ATTEMPTS} draws")
}

fn infer_row(rep: u64, res: selectcond::Result<selectcond::InferenceResult>, truth: f64) -> Row {
    match res {
        Ok(r) => Row::from_result(rep, &r, truth),
        Err(e) => Row::failed(rep, &e),
    }
}

fn winners_rep(p: &WinnersParams, kinds: &[WinnersModelKind], seed: u64, rep: u64) -> Vec<Row> {
    let mut rng = replication_stream(seed, rep);
    match draw_winners(p, &mut rng) {
        Ok(d) => {
            let truth = p.theta[d.selected_index()];
            kinds
                .iter()
                .map(|&k| infer_row(rep, infer_winner(&d, k, p.level), truth))
                .collect()
        }
        Err(e) => kinds.iter().map(|_| Row::failed(rep, &e)).collect(),
    }
}

/// Design with unit-norm columns drawn from a stream reserved for it.
pub fn screening_design(n: usize, p: usize, seed: u64) -> DMatrix<f64> {
    let mut rng = replication_stream(seed, u64::MAX);
    let mut x = DMatrix::from_fn(n, p, |_, _| normal(&mut rng));
    for mut c in x.column_iter_mut() {
        let norm = c.norm();
        c /= norm;
    }
    x
}

fn polyhedral_rep(p: &PolyhedralParams, x: &DMatrix<f64>, mu: &DVector<f64>, seed: u64, rep: u64) -> Row {
    let mut rng = replication_stream(seed, rep);
    let mut attempt = || -> selectcond::Result<Row> {
        for _ in 0..MAX_ATTEMPTS {
            let y = mu + DVector::from_fn(p.n, |_, _| normal(&mut rng));
            let scr = match marginal_screening_event(x, &y, p.threshold) {
                Ok(s) => s,
                Err(Error::NoSelection) => continue,
                Err(e) => return Err(e),
            };
            let target = projection_target(x, &scr.selected, 0)?;
            let polys = match p.event {
                EventKind::Signs => vec![scr.polyhedron.clone()],
                EventKind::Union => scr.event_union(x, p.threshold)?,
            };
            let truth = target.statistic(mu);
            let r = infer_linear(&polys, &target, &y, 1.0, p.level, 0.0, Alternative::TwoSided)?;
            return Ok(Row::from_result(rep, &r, truth));
        }
        Err(Error::NoSelection)
    };
    attempt().unwrap_or_else(|e| Row::failed(rep, &e))
}

fn two_stage_rep(cfg: &ExperimentConfig, p: &TwoStageParams, seed: u64, rep: u64) -> Vec<Row> {
    let mut rng = replication_stream(seed, rep);
    let data = cfg.prior().map_err(|e| e.to_string()).and_then(|prior| {
        simulate_selected_random_size(&prior, p.n2, p.theta, p.threshold, &mut rng)
            .map(|d| (prior, d))
            .map_err(|e| e.to_string())
    });
    match data {
        Ok((prior, d)) => vec![
            infer_row(rep, conditional_inference(&d, p.level), p.theta),
            infer_row(rep, unconditional_inference(&d, &prior, p.level), p.theta),
        ],
        Err(e) => vec![Row::failed(rep, &e), Row::failed(rep, &e)],
    }
}

fn location_rep(p: &LocationParams, fam: &LocationFamily, seed: u64, rep: u64) -> Row {
    let mut rng = replication_stream(seed, rep);
    let mut attempt = || -> selectcond::Result<Row> {
        for _ in 0..MAX_ATTEMPTS {
            let y = (0..p.n)
                .map(|_| Ok(p.theta + fam.sample(&mut rng)?))
                .collect::<selectcond::Result<Vec<f64>>>()?;
            let conf = decompose(&y, fam)?;
            if location_pvalue(&conf, fam)? <= p.alpha {
                let r = selective_location_inference(&conf, fam, p.alpha, p.level)?;
                return Ok(Row::from_result(rep, &r, p.theta));
            }
        }
        Err(Error::SelectionVanishes)
    };
    attempt().unwrap_or_else(|e| Row::failed(rep, &e))
}

fn audit_rep(p: &AncillarityParams, seed: u64, rep: u64) -> Result<AuditRow> {
    Ok(AuditRow {
        rep,
        g_outcome: ancillarity::g_audit_instance(seed, rep)?.outcome,
        m_outcome: ancillarity::m_audit_instance(seed, rep, p.eps)?.outcome,
    })
}

fn split(rows: Vec<Vec<Row>>, names: &[String]) -> Vec<(String, Vec<Row>)> {
    let mut tables: Vec<(String, Vec<Row>)> = names
        .iter()
        .map(|n| (n.clone(), Vec::with_capacity(rows.len())))
        .collect();
    for per_rep in rows {
        for (t, row) in tables.iter_mut().zip(per_rep) {
            t.1.push(row);
        }
    }
    tables
}

/// Runs every replication of `cfg` on `jobs` workers.
pub fn run(cfg: &ExperimentConfig, jobs: usize) -> Result<RunOutput> {
    cfg.validate()?;
    let seed = cfg.seed;
    let n = cfg.n_reps();
    let sc = cfg.scenario;
    let mut counterexample = None;
    let tables = match &cfg.params {
        Params::Winners(p) => {
            let kinds: Vec<WinnersModelKind> = match sc {
                Scenario::WinnersCompare => vec![WinnersModelKind::FullVector, WinnersModelKind::ConditionalOnLosers],
                _ => vec![WinnersModelKind::ConditionalOnLosers],
            };
            let names: Vec<String> = if kinds.len() == 1 {
                vec![table_name(sc, None)]
            } else {
                kinds.iter().map(|k| table_name(sc, Some(k.label()))).collect()
            };
            Tables::Inference(split(par_reps(n, jobs, |r| winners_rep(p, &kinds, seed, r))?, &names))
        }
        Params::Polyhedral(p) => {
            let x = screening_design(p.n, p.p, p.design_seed.unwrap_or(seed));
            let beta = DVector::from_vec(p.beta.clone().unwrap_or_else(|| vec![0.0; p.p]));
            let mu = &x * beta;
            let rows = par_reps(n, jobs, |r| polyhedral_rep(p, &x, &mu, seed, r))?;
            Tables::Inference(vec![(table_name(sc, None), rows)])
        }
        Params::TwoStage(p) => {
            let names = vec![
                table_name(sc, Some("conditional")),
                table_name(sc, Some("unconditional")),
            ];
            Tables::Inference(split(par_reps(n, jobs, |r| two_stage_rep(cfg, p, seed, r))?, &names))
        }
        Params::Location(p) => {
            let fam = LocationFamily::by_name(&p.family)?;
            let rows = par_reps(n, jobs, |r| location_rep(p, &fam, seed, r))?;
            Tables::Inference(vec![(table_name(sc, None), rows)])
        }
        Params::Ancillarity(p) => {
            if p.counterexample {
                counterexample = Some(counterexample_report()?);
            }
            let rows = par_reps(n, jobs, |r| audit_rep(p, seed, r))?
                .into_iter()
                .collect::<Result<Vec<_>>>()?;
            Tables::Audit(rows)
        }
    };
    Ok(RunOutput {
        config: cfg.clone(),
        tables,
        counterexample,
    })
}

impl RunOutput {
    pub fn summary(&self) -> Summary {
        summarize(&self.config, &self.tables, self.counterexample.clone())
    }

    /// Rows of the named table.
    pub fn rows(&self, name: &str) -> Option<&[Row]> {
        match &self.tables {
            Tables::Inference(t) => t.iter().find(|(n, _)| n == name).map(|(_, r)| r.as_slice()),
            Tables::Audit(_) => None,
        }
    }

    /// CSV text of every table, in output order.
    pub fn csv_bytes(&self) -> Result<Vec<(String, Vec<u8>)>> {
        match &self.tables {
            Tables::Inference(tables) => tables
                .iter()
                .map(|(name, rows)| {
                    let mut buf = Vec::new();
                    write_rows(&mut buf, rows)?;
                    Ok((name.clone(), buf))
                })
                .collect(),
            Tables::Audit(rows) => {
                let mut w = csv::Writer::from_writer(Vec::new());
                for r in rows {
                    w.serialize(r)?;
                }
                Ok(vec![(table_name(self.config.scenario, None), w.into_inner()?)])
            }
        }
    }

    /// Writes the tables and `<scenario>-summary.json` into `dir`.
    pub fn write(&self, dir: &Path) -> Result<Vec<PathBuf>> {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        let mut written = Vec::new();
        for (name, bytes) in self.csv_bytes()? {
            let path = dir.join(name);
            fs::write(&path, bytes).with_context(|| format!("writing {}", path.display()))?;
            written.push(path);
        }
        let path = summary_path(dir, self.config.scenario);
        fs::write(&path, serde_json::to_string_pretty(&self.summary())? + "\n")?;
        written.push(path);
        Ok(written)
    }
}

pub fn summary_path(dir: &Path, scenario: Scenario) -> PathBuf {
    dir.join(format!("{scenario}-summary.json"))
}

fn summarize(cfg: &ExperimentConfig, tables: &Tables, counterexample: Option<CounterexampleReport>) -> Summary {
    let mut out = Summary {
        scenario: cfg.scenario.to_string(),
        seed: cfg.seed,
        n_reps: cfg.n_reps(),
        level: cfg.level(),
        version: env!("CARGO_PKG_VERSION").to_string(),
        tables: BTreeMap::new(),
        median_length_ratio: None,
        ratio_of_median_lengths: None,
        audit: None,
        counterexample,
    };
    match tables {
        Tables::Inference(t) => {
            for (name, rows) in t {
                out.tables.insert(name.clone(), TableSummary::of(rows));
            }
            if let [(na, a), (nb, b)] = t.as_slice() {
                out.median_length_ratio = median_length_ratio(a, b);
                out.ratio_of_median_lengths = match (out.tables[na].median_length, out.tables[nb].median_length) {
                    (Some(x), Some(y)) => Some(x / y),
                    _ => None,
                };
            }
        }
        Tables::Audit(rows) => out.audit = Some(AuditSummary::of(rows)),
    }
    out
}

fn close(a: Option<f64>, b: Option<f64>) -> bool {
    match (a, b) {
        (None, None) => true,
        (Some(x), Some(y)) => (x - y).abs() <= 1e-12 * x.abs().max(1.0),
        _ => false,
    }
}

fn same_table(a: &TableSummary, b: &TableSummary) -> bool {
    a.rows == b.rows
        && a.failed == b.failed
        && a.divergent == b.divergent
        && a.unbounded == b.unbounded
        && close(a.coverage, b.coverage)
        && close(a.coverage_se, b.coverage_se)
        && close(a.median_length, b.median_length)
        && close(a.ks_pvalue, b.ks_pvalue)
        && close(a.mean_estimate, b.mean_estimate)
}

/// Re-reads the tables written to `dir`, recomputes the summary and
/// compares it with the stored one.
pub fn verify(dir: &Path, scenario: Scenario) -> Result<()> {
    let path = summary_path(dir, scenario);
    let stored: Summary =
        serde_json::from_str(&fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?)?;
    if scenario == Scenario::AncillarityAudit {
        let file = dir.join(table_name(scenario, None));
        let rows: Vec<AuditRow> = csv::Reader::from_path(&file)?.deserialize().collect::<Result<_, _>>()?;
        ensure!(
            Some(AuditSummary::of(&rows)) == stored.audit,
            "audit summary does not match {}",
            file.display()
        );
        return Ok(());
    }
    let mut tables = Vec::new();
    for name in stored.tables.keys() {
        let file = dir.join(name);
        let rows = read_rows(fs::File::open(&file).with_context(|| format!("opening {}", file.display()))?)?;
        ensure!(
            same_table(&TableSummary::of(&rows), &stored.tables[name]),
            "summary of {name} does not match its rows"
        );
        tables.push((name.clone(), rows));
    }
    // Comparison statistics use the table order of the run, which puts the
    // first model first; the stored map is sorted by name.
    let ordered = order_like_run(scenario, tables);
    if let [(_, a), (_, b)] = ordered.as_slice() {
        ensure!(
            close(median_length_ratio(a, b), stored.median_length_ratio),
            "median length ratio does not match the rows"
        );
    }
    Ok(())
}

fn order_like_run(scenario: Scenario, mut tables: Vec<(String, Vec<Row>)>) -> Vec<(String, Vec<Row>)> {
    let first = match scenario {
        Scenario::WinnersCompare => table_name(scenario, Some(WinnersModelKind::FullVector.label())),
        Scenario::TwoStageCompare => table_name(scenario, Some("conditional")),
        _ => return tables,
    };
    tables.sort_by_key(|(n, _)| *n != first);
    tables
}

#[cfg(test)]
mod tests {
    use super::*;

    fn config(doc: &str) -> ExperimentConfig {
        ExperimentConfig::from_json(doc).unwrap()
    }

    #[test]
    fn worker_count_does_not_change_output() {
        let cfg = config(
            r#"{"scenario": "winners-compare", "seed": 3,
                "params": {"theta": [0.5, 0, 1], "level": 0.9, "n_reps": 24}}"#,
        );
        let a = run(&cfg, 1).unwrap().csv_bytes().unwrap();
        let b = run(&cfg, 4).unwrap().csv_bytes().unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), 2);
    }

    #[test]
    fn written_results_verify() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = config(
            r#"{"scenario": "two-stage-compare", "seed": 5,
                "params": {"prior_support": [4, 8], "n2": 4, "theta": 0.3, "level": 0.9, "n_reps": 12}}"#,
        );
        let out = run(&cfg, 2).unwrap();
        out.write(dir.path()).unwrap();
        verify(dir.path(), cfg.scenario).unwrap();
        // tampering with a row breaks verification
        let file = dir.path().join("two-stage-compare-conditional.csv");
        let text = fs::read_to_string(&file).unwrap();
        let mut lines: Vec<String> = text.lines().map(str::to_owned).collect();
        let mut cells: Vec<String> = lines[1].split(',').map(str::to_owned).collect();
        cells[4] = if cells[4] == "1" { "0".into() } else { "1".into() };
        lines[1] = cells.join(",");
        fs::write(&file, lines.join("\n") + "\n").unwrap();
        assert!(verify(dir.path(), cfg.scenario).is_err());
    }

    #[test]
    fn audit_scenario_reports_counterexample() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = config(
            r#"{"scenario": "ancillarity-audit", "seed": 1,
                "params": {"n_reps": 20, "counterexample": true}}"#,
        );
        let out = run(&cfg, 2).unwrap();
        let s = out.summary();
        assert!(s.audit.as_ref().unwrap().all_preserved());
        let ce = s.counterexample.unwrap();
        assert_eq!(ce.outcome, Outcome::Broken);
        assert!(ce.witness.is_some());
        out.write(dir.path()).unwrap();
        verify(dir.path(), cfg.scenario).unwrap();
    }

    #[test]
    fn failures_become_flagged_rows() {
        // the first index essentially never wins here
        let p = WinnersParams {
            theta: vec![-60.0, 0.0],
            sigma: 1.0,
            level: 0.9,
            n_reps: 1,
            selected: Some(0),
        };
        let rows = winners_rep(&p, &[WinnersModelKind::ConditionalOnLosers], 1, 0);
        assert!(rows[0].is_failed());
    }
}
