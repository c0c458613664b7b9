//! Selective densities `f_S(y; θ) = f(y; θ) p(y) / φ(θ)` for an arbitrary
//! parametric family and selection function.
//!
//! The normalizer `φ(θ) = E_θ[p(Y)]` is computed by a closed form when one
//! is registered, by log-space adaptive quadrature for one-dimensional
//! continuous data, by exact summation for enumerated discrete supports,
//! and by Monte Carlo otherwise. Conditioning on an ancillary value `a`
//! swaps in the family of `T | A = a` and the reduced selection
//! `t ↦ p(t, a)`, so the normalizer becomes `φ(θ; a)`.

mod family;
mod selection;

use std::fmt;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub use family::{GaussianMean, ParametricFamily, Support};
pub use selection::{randomized_selection_prob, SelectionFunction, SelectionKind};

use crate::distributions::truncated::{log_add_exp, log_sum_exp};
use crate::error::{Error, Result};
use crate::inference::{invert_pivot, Alternative, Diagnostics, InferenceResult, InversionOptions};
use crate::numerics::{integrate, maximize_bfgs, maximize_scalar, QuadOptions};
use crate::rng::replication_stream;

pub type ClosedFormNormalizer = Arc<dyn Fn(&[f64], Option<&[f64]>) -> f64 + Send + Sync>;

// Below this φ is treated as zero by `selection_probability`.
const PHI_FLOOR: f64 = 1e-300;

#[derive(Clone)]
pub enum NormalizerStrategy {
    /// `φ(θ)` (or `φ(θ; a)` when the ancillary is passed) in closed form.
    ClosedForm(ClosedFormNormalizer),
    Quadrature {
        max_intervals: usize,
    },
    MonteCarlo {
        draws: usize,
        seed: u64,
    },
}

impl NormalizerStrategy {
    pub fn closed_form<F: Fn(&[f64], Option<&[f64]>) -> f64 + Send + Sync + 'static>(f: F) -> Self {
        NormalizerStrategy::ClosedForm(Arc::new(f))
    }

    pub fn label(&self) -> &'static str {
        match self {
            NormalizerStrategy::ClosedForm(_) => "closed-form",
            NormalizerStrategy::Quadrature { .. } => "quadrature",
            NormalizerStrategy::MonteCarlo { .. } => "monte-carlo",
        }
    }
}

impl fmt::Debug for NormalizerStrategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            NormalizerStrategy::ClosedForm(_) => write!(f, "ClosedForm"),
            NormalizerStrategy::Quadrature { max_intervals } => write!(f, "Quadrature({max_intervals})"),
            NormalizerStrategy::MonteCarlo { draws, seed } => write!(f, "MonteCarlo({draws}, seed {seed})"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Conditioning {
    OnSelection,
    OnSelectionAndAncillary(Vec<f64>),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Normalizer {
    pub value: f64,
    pub log_value: f64,
    /// Monte Carlo standard error of `value`; `None` for deterministic rules.
    pub std_error: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Mle {
    pub theta: Vec<f64>,
    pub loglik: f64,
}

#[derive(Clone)]
pub struct SelectiveModel {
    family: Arc<dyn ParametricFamily>,
    selection: SelectionFunction,
    normalizer: Option<NormalizerStrategy>,
    conditioning: Conditioning,
    seed: u64,
}

impl fmt::Debug for SelectiveModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SelectiveModel")
            .field("selection", &self.selection)
            .field("normalizer", &self.normalizer)
            .field("conditioning", &self.conditioning)
            .finish()
    }
}

/// The model after conditioning has been applied.
struct Resolved {
    family: Arc<dyn ParametricFamily>,
    selection: SelectionFunction,
    /// The law and selection used for `φ` and the pivot: the family's own,
    /// or those of its scalar statistic when selection acts through it.
    norm_family: Arc<dyn ParametricFamily>,
    norm_selection: SelectionFunction,
    strategy: Strategy,
    ancillary: Option<Vec<f64>>,
}

enum Strategy {
    ClosedForm(ClosedFormNormalizer),
    Quadrature(usize),
    Exact(Vec<Vec<f64>>),
    MonteCarlo(usize, u64),
}

impl Strategy {
    fn label(&self) -> &'static str {
        match self {
            Strategy::ClosedForm(_) => "closed-form",
            Strategy::Quadrature(_) => "quadrature",
            Strategy::Exact(_) => "exact-sum",
            Strategy::MonteCarlo(..) => "monte-carlo",
        }
    }
}

const DEFAULT_QUAD_INTERVALS: usize = 64;
const DEFAULT_MC_DRAWS: usize = 100_000;

impl SelectiveModel {
    pub fn new(family: Arc<dyn ParametricFamily>, selection: SelectionFunction) -> Self {
        Self {
            family,
            selection,
            normalizer: None,
            conditioning: Conditioning::OnSelection,
            seed: 0,
        }
    }

    pub fn with_normalizer(mut self, strategy: NormalizerStrategy) -> Self {
        self.normalizer = Some(strategy);
        self
    }

    /// Condition on `A = a` in addition to selection.
    pub fn conditioned_on(mut self, a: Vec<f64>) -> Self {
        self.conditioning = Conditioning::OnSelectionAndAncillary(a);
        self
    }

    /// Seed for the multi-start jitter (and the default MC normalizer).
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn family(&self) -> &Arc<dyn ParametricFamily> {
        &self.family
    }

    pub fn selection(&self) -> &SelectionFunction {
        &self.selection
    }

    pub fn conditioning(&self) -> &Conditioning {
        &self.conditioning
    }

    fn resolve(&self) -> Result<Resolved> {
        let (family, selection, ancillary) = match &self.conditioning {
            Conditioning::OnSelection => (self.family.clone(), self.selection.clone(), None),
            Conditioning::OnSelectionAndAncillary(a) => {
                let fam = self
                    .family
                    .conditional_family(a)
                    .ok_or_else(|| Error::invalid("conditioning", "family has no conditional law given A"))?;
                (fam, self.selection.at_ancillary(a)?, Some(a.clone()))
            }
        };
        let through_statistic = match (&self.normalizer, &self.conditioning) {
            (None | Some(NormalizerStrategy::Quadrature { .. }), Conditioning::OnSelection)
                if selection.depends_only_on_statistic() && family.data_len() > 1 =>
            {
                family.statistic_family().map(|f| (f, selection.at_ancillary(&[])))
            }
            _ => None,
        };
        let (norm_family, norm_selection) = match through_statistic {
            Some((f, s)) => (f, s?),
            None => (family.clone(), selection.clone()),
        };
        let discrete = match norm_family.support() {
            Support::Discrete(points) => Some(points),
            Support::Continuous => None,
        };
        let strategy = match (&self.normalizer, discrete) {
            (Some(NormalizerStrategy::ClosedForm(f)), _) => Strategy::ClosedForm(f.clone()),
            (Some(NormalizerStrategy::MonteCarlo { draws, seed }), _) => Strategy::MonteCarlo(*draws, *seed),
            (_, Some(points)) => Strategy::Exact(points),
            (Some(NormalizerStrategy::Quadrature { max_intervals }), None) => {
                if norm_family.data_len() != 1 {
                    return Err(Error::invalid("normalizer", "quadrature needs one-dimensional data"));
                }
                Strategy::Quadrature(*max_intervals)
            }
            (None, None) if norm_family.data_len() == 1 => Strategy::Quadrature(DEFAULT_QUAD_INTERVALS),
            (None, None) => Strategy::MonteCarlo(DEFAULT_MC_DRAWS, self.seed),
        };
        Ok(Resolved {
            family,
            selection,
            norm_family,
            norm_selection,
            strategy,
            ancillary,
        })
    }

    /// The datum seen by the resolved model: `y` itself, or `[t]` under
    /// ancillary conditioning (after checking `y` carries that ancillary).
    fn datum(&self, y: &[f64]) -> Result<Vec<f64>> {
        if y.len() != self.family.data_len() {
            return Err(Error::invalid(
                "y",
                format!("expected {} values, got {}", self.family.data_len(), y.len()),
            ));
        }
        match &self.conditioning {
            Conditioning::OnSelection => Ok(y.to_vec()),
            Conditioning::OnSelectionAndAncillary(a) => {
                let (t, ay) = self
                    .family
                    .reduce(y)
                    .ok_or_else(|| Error::invalid("conditioning", "family has no (t, a) reduction"))?;
                let same =
                    ay.len() == a.len() && ay.iter().zip(a).all(|(u, v)| (u - v).abs() <= 1e-9 * v.abs().max(1.0));
                if !same {
                    return Err(Error::invalid(
                        "y",
                        "ancillary of y differs from the conditioning value",
                    ));
                }
                Ok(vec![t])
            }
        }
    }

    fn check_theta(&self, theta: &[f64]) -> Result<()> {
        let bounds = self.family.param_bounds();
        if theta.len() != bounds.len() {
            return Err(Error::invalid("theta", format!("expected {} parameters", bounds.len())));
        }
        for (v, (lo, hi)) in theta.iter().zip(bounds) {
            if !(*v >= lo && *v <= hi) {
                return Err(Error::invalid("theta", format!("{v} outside [{lo}, {hi}]")));
            }
        }
        Ok(())
    }

    /// `φ(θ)`, or `φ(θ; a)` under ancillary conditioning.
    pub fn selection_probability(&self, theta: &[f64]) -> Result<Normalizer> {
        self.check_theta(theta)?;
        let r = self.resolve()?;
        let (log_value, std_error) = log_phi(&r, theta)?;
        let value = log_value.exp();
        if !(value >= PHI_FLOOR) {
            return Err(Error::UnsupportedSelection);
        }
        Ok(Normalizer {
            value,
            log_value,
            std_error,
        })
    }

    pub fn normalizer_label(&self) -> Result<&'static str> {
        Ok(self.resolve()?.strategy.label())
    }

    /// `log f(y; θ) + log p(y) − log φ(θ)`; with ancillary conditioning the
    /// density is that of `T | a` and the normalizer `φ(θ; a)`.
    pub fn selective_log_density(&self, y: &[f64], theta: &[f64]) -> Result<f64> {
        self.check_theta(theta)?;
        let r = self.resolve()?;
        let d = self.datum(y)?;
        let p = r.selection.prob(&d)?;
        if p <= 0.0 {
            return Err(Error::InconsistentDatum);
        }
        let (lphi, _) = log_phi(&r, theta)?;
        if lphi == f64::NEG_INFINITY {
            return Err(Error::UnsupportedSelection);
        }
        Ok(r.family.log_density(&d, theta) + p.ln() - lphi)
    }

    /// Maximizes the selective log-likelihood from five starts (the family's
    /// initial guess plus four seeded jitters) and keeps the best.
    pub fn selective_mle(&self, y: &[f64]) -> Result<Mle> {
        let r = self.resolve()?;
        let d = self.datum(y)?;
        let p = r.selection.prob(&d)?;
        if p <= 0.0 {
            return Err(Error::InconsistentDatum);
        }
        let lp = p.ln();
        let loglik = |theta: &[f64]| -> f64 {
            match log_phi(&r, theta) {
                Ok((lphi, _)) if lphi > f64::NEG_INFINITY => r.family.log_density(&d, theta) + lp - lphi,
                _ => f64::NEG_INFINITY,
            }
        };
        let bounds = r.family.param_bounds();
        let scale = r.family.scale();
        let base: Vec<f64> = r
            .family
            .initial_guess(&d)
            .iter()
            .zip(&bounds)
            .map(|(v, &(lo, hi))| v.clamp(lo, hi))
            .collect();
        let mut jitter = ChaCha8Rng::seed_from_u64(self.seed);
        let mut best: Option<Mle> = None;
        let mut first_err = None;
        for k in 0..5 {
            let start: Vec<f64> = base
                .iter()
                .zip(&bounds)
                .map(|(v, &(lo, hi))| {
                    let j = if k == 0 {
                        0.0
                    } else {
                        jitter.random_range(-1.0..1.0) * scale
                    };
                    (v + j).clamp(lo, hi)
                })
                .collect();
            let res = if start.len() == 1 {
                maximize_scalar(|t| loglik(&[t]), start[0], 0.5 * scale, bounds[0].0, bounds[0].1, 1e-10)
                    .map(|(x, fx)| (vec![x], fx))
            } else {
                maximize_bfgs(loglik, &start, &bounds, 1e-6)
            };
            match res {
                Ok((theta, ll)) => {
                    if best.as_ref().is_none_or(|b| ll > b.loglik) {
                        best = Some(Mle { theta, loglik: ll });
                    }
                }
                Err(e) => {
                    first_err.get_or_insert(e);
                }
            }
        }
        best.ok_or_else(|| first_err.unwrap_or_else(|| Error::Numerical("no MLE start converged".into())))
    }

    /// `(P_θ(T ≤ t_obs | selection), P_θ(T > t_obs | selection))` for the
    /// family's scalar statistic `T`.
    pub fn selective_cdf(&self, t_obs: f64, theta: &[f64]) -> Result<(f64, f64)> {
        self.check_theta(theta)?;
        let r = self.resolve()?;
        selective_cdf_sf(&r, t_obs, theta)
    }

    /// Observed scalar statistic of `y` (conditional `t` when conditioning).
    pub fn observed_statistic(&self, y: &[f64]) -> Result<f64> {
        let d = self.datum(y)?;
        Ok(match self.conditioning {
            Conditioning::OnSelection => self.family.statistic(&d),
            Conditioning::OnSelectionAndAncillary(_) => d[0],
        })
    }

    /// MLE, equal-tailed CI by inversion of the selective CDF of the
    /// statistic, and the p-value for `θ = null`. Only for scalar `θ` with
    /// a statistic that is stochastically increasing in `θ`.
    pub fn infer(&self, y: &[f64], level: f64, null: f64, alternative: Alternative) -> Result<InferenceResult> {
        if self.family.dim() != 1 {
            return Err(Error::invalid("family", "interval inversion needs a scalar parameter"));
        }
        let r = self.resolve()?;
        let t_obs = self.observed_statistic(y)?;
        let mut diagnostics = Diagnostics::with_normalizer(r.strategy.label());
        let estimate = match self.selective_mle(y) {
            Ok(m) => m.theta[0],
            Err(Error::DivergentMle { positive, .. }) => {
                diagnostics.divergent_mle = true;
                if positive {
                    f64::INFINITY
                } else {
                    f64::NEG_INFINITY
                }
            }
            Err(e) => return Err(e),
        };
        let (lo, hi) = r.family.param_bounds()[0];
        let scale = r.family.scale();
        let start = if estimate.is_finite() {
            estimate
        } else {
            t_obs.clamp(lo, hi)
        };
        let pivot = |theta: f64| selective_cdf_sf(&r, t_obs, &[theta.clamp(lo, hi)]);
        let inv = invert_pivot(pivot, &InversionOptions::new(level, start, scale))?;
        diagnostics.unbounded_lower = inv.unbounded_lower;
        diagnostics.unbounded_upper = inv.unbounded_upper;
        if let Strategy::MonteCarlo(..) = r.strategy {
            diagnostics.mc_std_error = log_phi(&r, &[start])?.1;
        }
        let (c, s) = selective_cdf_sf(&r, t_obs, &[null])?;
        Ok(InferenceResult {
            estimate,
            ci: inv.interval,
            pvalue: alternative.pvalue(c, s),
            model_kind: "selective".into(),
            diagnostics,
        })
    }
}

/// `ln φ(θ)` and the MC standard error of `φ` when sampled.
fn log_phi(r: &Resolved, theta: &[f64]) -> Result<(f64, Option<f64>)> {
    match &r.strategy {
        Strategy::ClosedForm(f) => {
            let v = f(theta, r.ancillary.as_deref());
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::Numerical(format!("closed-form normalizer returned {v}")));
            }
            Ok((v.ln(), None))
        }
        Strategy::Exact(points) => Ok((
            log_sum_exp(
                points
                    .iter()
                    .map(|y| r.norm_family.log_density(y, theta) + r.norm_selection.raw(y).ln()),
            ),
            None,
        )),
        Strategy::Quadrature(max_intervals) => {
            let logh = |x: f64| r.norm_family.log_density(&[x], theta) + r.norm_selection.raw(&[x]).ln();
            let v = log_integral_1d(
                logh,
                f64::NEG_INFINITY,
                f64::INFINITY,
                r.norm_selection.breakpoints(),
                r.norm_family.center(theta),
                r.norm_family.scale(),
                *max_intervals,
            )?;
            Ok((v, None))
        }
        Strategy::MonteCarlo(draws, seed) => {
            let mut rng = replication_stream(*seed, 0);
            let mut sum = 0.0;
            let mut sum2 = 0.0;
            for _ in 0..*draws {
                let y = r.norm_family.sample(theta, &mut rng);
                let p = r.norm_selection.raw(&y);
                sum += p;
                sum2 += p * p;
            }
            let n = *draws as f64;
            let m = sum / n;
            let var = ((sum2 / n - m * m) * n / (n - 1.0)).max(0.0);
            Ok((m.ln(), Some((var / n).sqrt())))
        }
    }
}

fn selective_cdf_sf(r: &Resolved, t_obs: f64, theta: &[f64]) -> Result<(f64, f64)> {
    let (lc, ls) = match &r.strategy {
        Strategy::Exact(points) => {
            let mut below = Vec::new();
            let mut above = Vec::new();
            for y in points {
                let w = r.norm_family.log_density(y, theta) + r.norm_selection.raw(y).ln();
                if r.norm_family.statistic(y) <= t_obs {
                    below.push(w);
                } else {
                    above.push(w);
                }
            }
            (log_sum_exp(below), log_sum_exp(above))
        }
        Strategy::Quadrature(max_intervals) => {
            let logh = |x: f64| r.norm_family.log_density(&[x], theta) + r.norm_selection.raw(&[x]).ln();
            let (center, scale) = (r.norm_family.center(theta), r.norm_family.scale());
            let bp = r.norm_selection.breakpoints();
            (
                log_integral_1d(logh, f64::NEG_INFINITY, t_obs, bp, center, scale, *max_intervals)?,
                log_integral_1d(logh, t_obs, f64::INFINITY, bp, center, scale, *max_intervals)?,
            )
        }
        Strategy::ClosedForm(_) if r.norm_family.data_len() == 1 => {
            let logh = |x: f64| r.norm_family.log_density(&[x], theta) + r.norm_selection.raw(&[x]).ln();
            let (center, scale) = (r.norm_family.center(theta), r.norm_family.scale());
            let bp = r.norm_selection.breakpoints();
            (
                log_integral_1d(
                    logh,
                    f64::NEG_INFINITY,
                    t_obs,
                    bp,
                    center,
                    scale,
                    DEFAULT_QUAD_INTERVALS,
                )?,
                log_integral_1d(logh, t_obs, f64::INFINITY, bp, center, scale, DEFAULT_QUAD_INTERVALS)?,
            )
        }
        Strategy::ClosedForm(_) | Strategy::MonteCarlo(..) => {
            let (draws, seed) = match r.strategy {
                Strategy::MonteCarlo(d, s) => (d, s),
                _ => (DEFAULT_MC_DRAWS, 0),
            };
            let mut rng = replication_stream(seed, 1);
            let (mut below, mut above) = (0.0, 0.0);
            for _ in 0..draws {
                let y = r.norm_family.sample(theta, &mut rng);
                let p = r.norm_selection.raw(&y);
                if r.norm_family.statistic(&y) <= t_obs {
                    below += p;
                } else {
                    above += p;
                }
            }
            (below.ln(), above.ln())
        }
    };
    let total = log_add_exp(lc, ls);
    if total == f64::NEG_INFINITY {
        return Err(Error::UnsupportedSelection);
    }
    Ok(((lc - total).exp(), (ls - total).exp()))
}

/// `ln ∫_lo^hi exp(logh)` for a 1-D integrand that may be discontinuous at
/// `breaks` and whose bulk sits near `center`. The integrand is rescaled
/// by its largest probed value so that tiny integrals stay representable.
pub(crate) fn log_integral_1d<F: Fn(f64) -> f64>(
    logh: F,
    lo: f64,
    hi: f64,
    breaks: &[f64],
    center: f64,
    scale: f64,
    max_intervals: usize,
) -> Result<f64> {
    if !(lo < hi) {
        return Ok(f64::NEG_INFINITY);
    }
    let mut pts = vec![lo, hi];
    let inside = |x: f64| x > lo && x < hi && x.is_finite();
    pts.extend(breaks.iter().copied().filter(|&b| inside(b)));
    if center.is_finite() {
        pts.extend(
            [-10.0, -3.0, 0.0, 3.0, 10.0]
                .iter()
                .map(|k| center + k * scale)
                .filter(|&x| inside(x)),
        );
    }
    pts.sort_by(f64::total_cmp);
    pts.dedup();

    let eps = |x: f64| 1e-9 * x.abs().max(scale);
    let mut probes = Vec::new();
    for w in pts.windows(2) {
        let (a, b) = (w[0], w[1]);
        match (a.is_finite(), b.is_finite()) {
            (true, true) => {
                probes.push(a + eps(a).min(0.5 * (b - a)));
                probes.push(b - eps(b).min(0.5 * (b - a)));
                probes.extend((1..16).map(|i| a + (b - a) * i as f64 / 16.0));
            }
            (false, true) => {
                probes.push(b - eps(b));
                probes.extend((0..10).map(|k| b - scale * (2f64.powi(k))));
            }
            (true, false) => {
                probes.push(a + eps(a));
                probes.extend((0..10).map(|k| a + scale * (2f64.powi(k))));
            }
            (false, false) => {
                probes.extend((-10..=10).map(|k| k as f64 * scale));
            }
        }
    }
    let peak = probes
        .iter()
        .map(|&x| logh(x))
        .filter(|v| v.is_finite())
        .fold(f64::NEG_INFINITY, f64::max);
    if peak == f64::NEG_INFINITY {
        return Ok(f64::NEG_INFINITY);
    }
    let g = |x: f64| (logh(x) - peak).exp();
    let mut total = 0.0;
    for w in pts.windows(2) {
        let (a, b) = (w[0], w[1]);
        // Shrink the substitution scale when the integrand falls off fast
        // from the finite edge of a half-line.
        let local = if a.is_finite() && b.is_finite() {
            scale
        } else {
            let edge = if a.is_finite() { a } else { b };
            let dir = if a.is_finite() { 1.0 } else { -1.0 };
            let h = 1e-4 * scale;
            let x0 = edge + dir * eps(edge);
            let slope = (logh(x0 + dir * h) - logh(x0)) / h;
            if slope.is_finite() && slope < 0.0 {
                scale.min(1.0 / -slope).max(1e-12 * scale)
            } else {
                scale
            }
        };
        let opts = QuadOptions {
            rel_tol: 1e-12,
            abs_tol: 1e-15 * scale,
            max_intervals,
            scale: local,
        };
        total += integrate(g, a, b, &opts)?.value;
    }
    if !(total > 0.0) {
        return Ok(f64::NEG_INFINITY);
    }
    Ok(peak + total.ln())
}
