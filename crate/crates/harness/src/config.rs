//! Experiment configuration documents.
//!
//! A config is a JSON object `{scenario, seed, jobs, params}`; `params` is
//! checked against the scenario's own parameter set and unknown keys are
//! rejected at both levels.

use std::fmt;
use std::path::Path;

use anyhow::{bail, ensure, Context, Result};
use serde::{Deserialize, Serialize};

use selectcond::location_model::{LocationFamily, REGISTERED};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scenario {
    WinnersCompare,
    WinnersCoverage,
    PolyhedralUniformity,
    PolyhedralCoverage,
    TwoStageCompare,
    LocationCoverage,
    AncillarityAudit,
}

impl Scenario {
    pub const ALL: [Scenario; 7] = [
        Scenario::WinnersCompare,
        Scenario::WinnersCoverage,
        Scenario::PolyhedralUniformity,
        Scenario::PolyhedralCoverage,
        Scenario::TwoStageCompare,
        Scenario::LocationCoverage,
        Scenario::AncillarityAudit,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Scenario::WinnersCompare => "winners-compare",
            Scenario::WinnersCoverage => "winners-coverage",
            Scenario::PolyhedralUniformity => "polyhedral-uniformity",
            Scenario::PolyhedralCoverage => "polyhedral-coverage",
            Scenario::TwoStageCompare => "two-stage-compare",
            Scenario::LocationCoverage => "location-coverage",
            Scenario::AncillarityAudit => "ancillarity-audit",
        }
    }

    pub fn parse(name: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|s| s.name() == name)
            .with_context(|| format!("unknown scenario `{name}`"))
    }
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    scenario: String,
    #[serde(default)]
    seed: u64,
    #[serde(default)]
    jobs: Option<usize>,
    params: serde_json::Value,
}

fn one() -> f64 {
    1.0
}

fn default_threshold() -> f64 {
    selectcond::two_stage::DEFAULT_THRESHOLD
}

fn default_eps() -> f64 {
    0.05
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WinnersParams {
    pub theta: Vec<f64>,
    #[serde(default = "one")]
    pub sigma: f64,
    pub level: f64,
    pub n_reps: usize,
    /// Keep only datasets where this index wins; otherwise the target is
    /// whichever index wins.
    #[serde(default)]
    pub selected: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EventKind {
    /// Selected set and signs.
    #[default]
    Signs,
    /// Selected set only (union over sign patterns).
    Union,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PolyhedralParams {
    pub n: usize,
    pub p: usize,
    pub threshold: f64,
    /// Regression coefficients of the mean; zero when absent.
    #[serde(default)]
    pub beta: Option<Vec<f64>>,
    #[serde(default)]
    pub event: EventKind,
    pub level: f64,
    pub n_reps: usize,
    /// Seed for the design matrix; the experiment seed when absent.
    #[serde(default)]
    pub design_seed: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TwoStageParams {
    pub prior_support: Vec<usize>,
    /// Uniform when absent.
    #[serde(default)]
    pub prior_probs: Option<Vec<f64>>,
    pub n2: usize,
    pub theta: f64,
    #[serde(default = "default_threshold")]
    pub threshold: f64,
    pub level: f64,
    pub n_reps: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LocationParams {
    pub family: String,
    pub n: usize,
    pub theta: f64,
    /// Significance level of the screening test of `θ = 0`.
    pub alpha: f64,
    pub level: f64,
    pub n_reps: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AncillarityParams {
    pub n_reps: usize,
    #[serde(default = "default_eps")]
    pub eps: f64,
    #[serde(default)]
    pub counterexample: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Params {
    Winners(WinnersParams),
    Polyhedral(PolyhedralParams),
    TwoStage(TwoStageParams),
    Location(LocationParams),
    Ancillarity(AncillarityParams),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub scenario: Scenario,
    pub seed: u64,
    pub jobs: Option<usize>,
    pub params: Params,
}

fn check_level(name: &str, v: f64) -> Result<()> {
    ensure!(v > 0.0 && v < 1.0, "{name} must lie in (0, 1), got {v}");
    Ok(())
}

fn check_reps(n: usize) -> Result<()> {
    ensure!(n >= 1, "n_reps must be at least 1");
    Ok(())
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let raw: RawConfig = serde_json::from_str(text).context("malformed config")?;
        let scenario = Scenario::parse(&raw.scenario)?;
        let p = raw.params;
        let params = match scenario {
            Scenario::WinnersCompare | Scenario::WinnersCoverage => Params::Winners(serde_json::from_value(p)?),
            Scenario::PolyhedralUniformity | Scenario::PolyhedralCoverage => {
                Params::Polyhedral(serde_json::from_value(p)?)
            }
            Scenario::TwoStageCompare => Params::TwoStage(serde_json::from_value(p)?),
            Scenario::LocationCoverage => Params::Location(serde_json::from_value(p)?),
            Scenario::AncillarityAudit => Params::Ancillarity(serde_json::from_value(p)?),
        };
        let cfg = Self {
            scenario,
            seed: raw.seed,
            jobs: raw.jobs,
            params,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        Self::from_json(&text).with_context(|| format!("in {}", path.display()))
    }

    pub fn validate(&self) -> Result<()> {
        if let Some(j) = self.jobs {
            ensure!(j >= 1, "jobs must be at least 1");
        }
        match &self.params {
            Params::Winners(w) => {
                ensure!(w.theta.len() >= 2, "theta needs at least two entries");
                ensure!(w.theta.iter().all(|t| t.is_finite()), "theta entries must be finite");
                ensure!(w.sigma > 0.0 && w.sigma.is_finite(), "sigma must be positive");
                check_level("level", w.level)?;
                check_reps(w.n_reps)?;
                if let Some(i) = w.selected {
                    ensure!(i < w.theta.len(), "selected index {i} out of range");
                    ensure!(
                        self.scenario == Scenario::WinnersCoverage,
                        "`selected` applies to winners-coverage only"
                    );
                }
            }
            Params::Polyhedral(q) => {
                ensure!(q.n >= 1 && q.p >= 1, "n and p must be positive");
                ensure!(q.threshold >= 0.0, "threshold must be nonnegative");
                if let Some(b) = &q.beta {
                    ensure!(b.len() == q.p, "beta has {} entries, expected {}", b.len(), q.p);
                    if self.scenario == Scenario::PolyhedralUniformity {
                        ensure!(b.iter().all(|&v| v == 0.0), "polyhedral-uniformity needs a null mean");
                    }
                }
                ensure!(q.event == EventKind::Signs || q.p <= 16, "union events need p <= 16");
                check_level("level", q.level)?;
                check_reps(q.n_reps)?;
            }
            Params::TwoStage(t) => {
                if let Some(p) = &t.prior_probs {
                    ensure!(
                        p.len() == t.prior_support.len(),
                        "prior_probs and prior_support differ in length"
                    );
                }
                ensure!(t.theta.is_finite(), "theta must be finite");
                check_level("level", t.level)?;
                check_reps(t.n_reps)?;
                self.prior()?;
            }
            Params::Location(l) => {
                if LocationFamily::by_name(&l.family).is_err() {
                    bail!("unknown family `{}` (registered: {})", l.family, REGISTERED.join(", "));
                }
                ensure!(l.n >= 1, "n must be positive");
                ensure!(l.theta.is_finite(), "theta must be finite");
                ensure!(l.alpha > 0.0 && l.alpha <= 1.0, "alpha must lie in (0, 1]");
                check_level("level", l.level)?;
                check_reps(l.n_reps)?;
            }
            Params::Ancillarity(a) => {
                check_reps(a.n_reps)?;
                ensure!(a.eps > 0.0 && a.eps < 1.0, "eps must lie in (0, 1)");
            }
        }
        let expected = match self.scenario {
            Scenario::WinnersCompare | Scenario::WinnersCoverage => matches!(self.params, Params::Winners(_)),
            Scenario::PolyhedralUniformity | Scenario::PolyhedralCoverage => {
                matches!(self.params, Params::Polyhedral(_))
            }
            Scenario::TwoStageCompare => matches!(self.params, Params::TwoStage(_)),
            Scenario::LocationCoverage => matches!(self.params, Params::Location(_)),
            Scenario::AncillarityAudit => matches!(self.params, Params::Ancillarity(_)),
        };
        ensure!(expected, "parameters do not match scenario {}", self.scenario);
        Ok(())
    }

    pub fn n_reps(&self) -> usize {
        match &self.params {
            Params::Winners(p) => p.n_reps,
            Params::Polyhedral(p) => p.n_reps,
            Params::TwoStage(p) => p.n_reps,
            Params::Location(p) => p.n_reps,
            Params::Ancillarity(p) => p.n_reps,
        }
    }

    pub fn level(&self) -> Option<f64> {
        match &self.params {
            Params::Winners(p) => Some(p.level),
            Params::Polyhedral(p) => Some(p.level),
            Params::TwoStage(p) => Some(p.level),
            Params::Location(p) => Some(p.level),
            Params::Ancillarity(_) => None,
        }
    }

    /// Replaces the confidence level of an inference scenario.
    pub fn set_level(&mut self, level: f64) -> Result<()> {
        check_level("level", level)?;
        match &mut self.params {
            Params::Winners(p) => p.level = level,
            Params::Polyhedral(p) => p.level = level,
            Params::TwoStage(p) => p.level = level,
            Params::Location(p) => p.level = level,
            Params::Ancillarity(_) => bail!("ancillarity-audit has no confidence level"),
        }
        Ok(())
    }

    /// The sample-size prior of a two-stage config.
    pub fn prior(&self) -> Result<selectcond::two_stage::SampleSizePrior> {
        use selectcond::two_stage::SampleSizePrior;
        let Params::TwoStage(t) = &self.params else {
            bail!("not a two-stage config");
        };
        Ok(match &t.prior_probs {
            Some(p) => SampleSizePrior::new(t.prior_support.clone(), p.clone())?,
            None => SampleSizePrior::uniform(t.prior_support.clone())?,
        })
    }
}
