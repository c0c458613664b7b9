//! Two-stage Gaussian designs where the second stage only happens when the
//! first-stage sum clears a threshold: `Σ stage1 > z √n1` with unit-variance
//! observations `Y_i ~ N(θ, 1)`.
//!
//! With a random first-stage size `n1 ~ f_{N1}` there are two selective
//! models: conditioning on selection only (the sample size then carries
//! information about θ), or conditioning on selection after `n1`.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::distributions::truncated::{log_add_exp, log_sum_exp};
use crate::distributions::{normal, TruncatedGaussian};
use crate::error::{Error, Result};
use crate::inference::{check_level, invert_pivot, Diagnostics, InferenceResult, InversionOptions};
use crate::numerics::{log_integrate, maximize_scalar};

pub const DEFAULT_THRESHOLD: f64 = 1.96;

// Normalizers below this are reported as vanishing.
const LOG_PHI_FLOOR: f64 = -690.775_527_898_213_7; // ln 1e-300

#[derive(Debug, Clone, PartialEq)]
pub struct TwoStageData {
    stage1: Vec<f64>,
    stage2: Vec<f64>,
    threshold: f64,
}

impl TwoStageData {
    /// Data that passed the deterministic screen `Σ stage1 > z √n1`.
    pub fn new(stage1: Vec<f64>, stage2: Vec<f64>, threshold: f64) -> Result<Self> {
        let d = Self::unscreened(stage1, stage2, threshold)?;
        if !(d.stage1_sum() > threshold * (d.n1() as f64).sqrt()) {
            return Err(Error::InconsistentDatum);
        }
        Ok(d)
    }

    /// Data whose selection is randomized, so any first stage is possible.
    pub fn unscreened(stage1: Vec<f64>, stage2: Vec<f64>, threshold: f64) -> Result<Self> {
        if stage1.is_empty() {
            return Err(Error::invalid("stage1", "need at least one observation"));
        }
        if stage1.iter().chain(&stage2).any(|v| !v.is_finite()) {
            return Err(Error::invalid("data", "observations must be finite"));
        }
        if !threshold.is_finite() {
            return Err(Error::invalid("threshold", "must be finite"));
        }
        Ok(Self {
            stage1,
            stage2,
            threshold,
        })
    }

    pub fn n1(&self) -> usize {
        self.stage1.len()
    }

    pub fn n2(&self) -> usize {
        self.stage2.len()
    }

    pub fn n(&self) -> usize {
        self.n1() + self.n2()
    }

    pub fn stage1(&self) -> &[f64] {
        &self.stage1
    }

    pub fn stage2(&self) -> &[f64] {
        &self.stage2
    }

    pub fn threshold(&self) -> f64 {
        self.threshold
    }

    pub fn stage1_sum(&self) -> f64 {
        self.stage1.iter().sum()
    }

    pub fn total_sum(&self) -> f64 {
        self.stage1_sum() + self.stage2.iter().sum::<f64>()
    }

    pub fn mean(&self) -> f64 {
        self.total_sum() / self.n() as f64
    }
}

/// Known law `f_{N1}` of the first-stage sample size on a finite support.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleSizePrior {
    support: Vec<usize>,
    probs: Vec<f64>,
}

impl SampleSizePrior {
    pub fn new(support: Vec<usize>, probs: Vec<f64>) -> Result<Self> {
        if support.is_empty() || support.len() != probs.len() {
            return Err(Error::invalid(
                "prior",
                "support and probabilities must be nonempty and equally long",
            ));
        }
        if support.contains(&0) {
            return Err(Error::invalid("prior", "sample sizes must be positive"));
        }
        let mut sorted = support.clone();
        sorted.sort_unstable();
        sorted.dedup();
        if sorted.len() != support.len() {
            return Err(Error::invalid("prior", "duplicate sample size"));
        }
        if probs.iter().any(|p| !(*p >= 0.0)) {
            return Err(Error::invalid("prior", "probabilities must be nonnegative"));
        }
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::invalid("prior", format!("probabilities sum to {total}")));
        }
        Ok(Self { support, probs })
    }

    pub fn point_mass(n1: usize) -> Result<Self> {
        Self::new(vec![n1], vec![1.0])
    }

    pub fn uniform(support: Vec<usize>) -> Result<Self> {
        let k = support.len();
        Self::new(support, vec![1.0 / k as f64; k])
    }

    pub fn support(&self) -> &[usize] {
        &self.support
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn prob(&self, n1: usize) -> f64 {
        self.support
            .iter()
            .position(|&k| k == n1)
            .map_or(0.0, |i| self.probs[i])
    }

    pub fn mean(&self) -> f64 {
        self.support.iter().zip(&self.probs).map(|(&k, p)| k as f64 * p).sum()
    }
}

fn gaussian_loglik(data: &TwoStageData, theta: f64) -> f64 {
    data.stage1
        .iter()
        .chain(&data.stage2)
        .map(|&y| normal::log_pdf(y - theta))
        .sum()
}

/// ln Φ(θ√n1 − z): probability that a first stage of size `n1` passes.
fn log_pass(n1: usize, theta: f64, z: f64) -> f64 {
    normal::log_cdf(theta * (n1 as f64).sqrt() - z)
}

fn checked(log_phi: f64) -> Result<f64> {
    if log_phi < LOG_PHI_FLOOR || log_phi.is_nan() {
        Err(Error::SelectionVanishes)
    } else {
        Ok(log_phi)
    }
}

/// ln of `Σ_ñ f(ñ) Φ(θ√ñ − z)`.
fn log_marginal_pass(prior: &SampleSizePrior, theta: f64, z: f64) -> f64 {
    log_sum_exp(
        prior
            .support
            .iter()
            .zip(&prior.probs)
            .map(|(&k, &p)| p.ln() + log_pass(k, theta, z)),
    )
}

/// Log-likelihood when only selection is conditioned on; `n1` is random.
pub fn unconditional_loglik(data: &TwoStageData, prior: &SampleSizePrior, theta: f64) -> Result<f64> {
    let w = prior.prob(data.n1());
    if w <= 0.0 {
        return Err(Error::invalid(
            "data",
            format!("n1 = {} outside the prior support", data.n1()),
        ));
    }
    let denom = checked(log_marginal_pass(prior, theta, data.threshold))?;
    Ok(w.ln() + gaussian_loglik(data, theta) - denom)
}

/// Log-likelihood conditioning on selection after `n1` (the prior drops out).
pub fn conditional_loglik(data: &TwoStageData, theta: f64) -> Result<f64> {
    let denom = checked(log_pass(data.n1(), theta, data.threshold))?;
    Ok(gaussian_loglik(data, theta) - denom)
}

/// `f_S(n1; θ) ∝ f_{N1}(n1) Φ(θ√n1 − z)` over the prior support.
pub fn sample_size_pmf_given_selection(prior: &SampleSizePrior, theta: f64, threshold: f64) -> Result<Vec<f64>> {
    let logs: Vec<f64> = prior
        .support
        .iter()
        .zip(&prior.probs)
        .map(|(&k, &p)| p.ln() + log_pass(k, theta, threshold))
        .collect();
    let top = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !top.is_finite() {
        return Err(Error::SelectionVanishes);
    }
    let w: Vec<f64> = logs.iter().map(|l| (l - top).exp()).collect();
    let total: f64 = w.iter().sum();
    Ok(w.into_iter().map(|v| v / total).collect())
}

/// File-drawer log-likelihood. Without randomization this is the
/// truncated likelihood given `Σ stage1 > z√n1`; with Gaussian noise of sd
/// `γ` added to the screening statistic it includes `log p(y)` and the
/// closed-form normalizer `Φ((θ n1 − z√n1)/√(n1 + γ²))`.
pub fn file_drawer_loglik(data: &TwoStageData, theta: f64, randomization_scale: Option<f64>) -> Result<f64> {
    let n1 = data.n1() as f64;
    let cut = data.threshold * n1.sqrt();
    match randomization_scale {
        None => {
            if !(data.stage1_sum() > cut) {
                return Err(Error::InconsistentDatum);
            }
            conditional_loglik(data, theta)
        }
        Some(g) => {
            if !(g > 0.0 && g.is_finite()) {
                return Err(Error::invalid("randomization_scale", format!("{g} must be positive")));
            }
            let log_p = normal::log_cdf((data.stage1_sum() - cut) / g);
            if log_p == f64::NEG_INFINITY {
                return Err(Error::InconsistentDatum);
            }
            let denom = checked(normal::log_cdf((theta * n1 - cut) / (n1 + g * g).sqrt()))?;
            Ok(gaussian_loglik(data, theta) + log_p - denom)
        }
    }
}

fn maximize<F: Fn(f64) -> Result<f64>>(f: F, data: &TwoStageData) -> Result<f64> {
    let step = 0.5 / (data.n() as f64).sqrt();
    let m = data.mean();
    maximize_scalar(|t| f(t).unwrap_or(f64::NEG_INFINITY), m, step, m - 1e3, m + 1e3, 1e-12).map(|(x, _)| x)
}

pub fn conditional_mle(data: &TwoStageData) -> Result<f64> {
    maximize(|t| conditional_loglik(data, t), data)
}

pub fn unconditional_mle(data: &TwoStageData, prior: &SampleSizePrior) -> Result<f64> {
    maximize(|t| unconditional_loglik(data, prior, t), data)
}

pub fn file_drawer_mle(data: &TwoStageData, randomization_scale: Option<f64>) -> Result<f64> {
    maximize(|t| file_drawer_loglik(data, t, randomization_scale), data)
}

/// `(P(S ≤ s), P(S > s))` for the total sum `S` given selection at size
/// `n1`: a Gaussian truncated to `S1 > z√n1` convolved with `N(θ n2, n2)`.
fn total_sum_cdf_sf(n1: usize, n2: usize, theta: f64, z: f64, s: f64) -> Result<(f64, f64)> {
    let (f1, f2) = (n1 as f64, n2 as f64);
    let cut = z * f1.sqrt();
    let sd1 = f1.sqrt();
    if n2 == 0 {
        let tg = TruncatedGaussian::interval(theta * f1, sd1, cut, f64::INFINITY)?;
        return Ok(tg.cdf_sf(s));
    }
    let sd2 = f2.sqrt();
    let log_s1 = |u: f64| normal::log_pdf((u - theta * f1) / sd1) - sd1.ln();
    let below = |u: f64| log_s1(u) + normal::log_cdf((s - u - theta * f2) / sd2);
    let above = |u: f64| log_s1(u) + normal::log_sf((s - u - theta * f2) / sd2);
    let scale = sd1.min(sd2);
    let mode_of = |g: &dyn Fn(f64) -> f64| {
        let start = (theta * f1).max(cut);
        maximize_scalar(g, start, scale, cut, cut + 1e6 * sd1, 1e-9)
            .map(|(x, _)| x)
            .unwrap_or(cut)
    };
    let lc = log_integrate(below, cut, f64::INFINITY, mode_of(&below), scale)?;
    let ls = log_integrate(above, cut, f64::INFINITY, mode_of(&above), scale)?;
    let total = log_add_exp(lc, ls);
    if total == f64::NEG_INFINITY {
        return Err(Error::SelectionVanishes);
    }
    Ok(((lc - total).exp(), (ls - total).exp()))
}

/// Pivot for the unconditional model: the law of the overall mean mixes
/// the per-`n1` laws with weights `f_S(n1; θ)`.
fn mean_cdf_sf_unconditional(prior: &SampleSizePrior, n2: usize, theta: f64, z: f64, ybar: f64) -> Result<(f64, f64)> {
    let w = sample_size_pmf_given_selection(prior, theta, z)?;
    let (mut c, mut s) = (0.0, 0.0);
    for (&k, wk) in prior.support.iter().zip(w) {
        if wk == 0.0 {
            continue;
        }
        let (ck, sk) = total_sum_cdf_sf(k, n2, theta, z, ybar * (k + n2) as f64)?;
        c += wk * ck;
        s += wk * sk;
    }
    Ok((c, s))
}

#[derive(Debug, Clone, PartialEq)]
pub struct TwoStageComparison {
    pub conditional: InferenceResult,
    pub unconditional: InferenceResult,
    /// Unconditional minus conditional point estimate.
    pub estimate_delta: f64,
    /// Unconditional minus conditional interval length.
    pub length_delta: f64,
}

fn estimate_or_flag(r: Result<f64>, diagnostics: &mut Diagnostics) -> Result<f64> {
    match r {
        Ok(v) => Ok(v),
        Err(Error::DivergentMle { positive, .. }) => {
            diagnostics.divergent_mle = true;
            Ok(if positive { f64::INFINITY } else { f64::NEG_INFINITY })
        }
        Err(e) => Err(e),
    }
}

/// Inference conditioning on selection after the sample size: MLE, CI by
/// inverting the law of the total sum, p-value for θ = 0 (greater).
pub fn conditional_inference(data: &TwoStageData, level: f64) -> Result<InferenceResult> {
    check_level(level)?;
    let (n1, n2, z) = (data.n1(), data.n2(), data.threshold);
    let s = data.total_sum();
    let mut diagnostics = Diagnostics::with_normalizer("closed-form");
    let estimate = estimate_or_flag(conditional_mle(data), &mut diagnostics)?;
    let scale = 1.0 / (data.n() as f64).sqrt();
    let pivot = |theta: f64| total_sum_cdf_sf(n1, n2, theta, z, s);
    let inv = invert_pivot(pivot, &InversionOptions::new(level, data.mean(), scale))?;
    diagnostics.unbounded_lower = inv.unbounded_lower;
    diagnostics.unbounded_upper = inv.unbounded_upper;
    Ok(InferenceResult {
        estimate,
        ci: inv.interval,
        pvalue: total_sum_cdf_sf(n1, n2, 0.0, z, s)?.1,
        model_kind: "conditional".into(),
        diagnostics,
    })
}

/// Inference conditioning on selection only, with `n1` drawn from `prior`.
pub fn unconditional_inference(data: &TwoStageData, prior: &SampleSizePrior, level: f64) -> Result<InferenceResult> {
    check_level(level)?;
    if prior.prob(data.n1()) <= 0.0 {
        return Err(Error::invalid(
            "data",
            format!("n1 = {} outside the prior support", data.n1()),
        ));
    }
    let (n2, z, ybar) = (data.n2(), data.threshold, data.mean());
    let mut diagnostics = Diagnostics::with_normalizer("closed-form");
    let estimate = estimate_or_flag(unconditional_mle(data, prior), &mut diagnostics)?;
    let scale = 1.0 / (data.n() as f64).sqrt();
    let pivot = |theta: f64| mean_cdf_sf_unconditional(prior, n2, theta, z, ybar);
    let inv = invert_pivot(pivot, &InversionOptions::new(level, ybar, scale))?;
    diagnostics.unbounded_lower = inv.unbounded_lower;
    diagnostics.unbounded_upper = inv.unbounded_upper;
    Ok(InferenceResult {
        estimate,
        ci: inv.interval,
        pvalue: mean_cdf_sf_unconditional(prior, n2, 0.0, z, ybar)?.1,
        model_kind: "unconditional".into(),
        diagnostics,
    })
}

pub fn compare_two_stage_inference(
    data: &TwoStageData,
    prior: &SampleSizePrior,
    level: f64,
) -> Result<TwoStageComparison> {
    let conditional = conditional_inference(data, level)?;
    let unconditional = unconditional_inference(data, prior, level)?;
    Ok(TwoStageComparison {
        estimate_delta: unconditional.estimate - conditional.estimate,
        length_delta: unconditional.ci.length() - conditional.ci.length(),
        conditional,
        unconditional,
    })
}

/// Draws a selected dataset with first-stage size `n1`: the stage-1 sum
/// from its truncated law, plus centred Gaussian residuals (independent of
/// the sum), then an unscreened second stage.
pub fn simulate_selected<R: Rng + ?Sized>(
    n1: usize,
    n2: usize,
    theta: f64,
    threshold: f64,
    rng: &mut R,
) -> Result<TwoStageData> {
    if n1 == 0 {
        return Err(Error::invalid("n1", "must be positive"));
    }
    let f1 = n1 as f64;
    let tg = TruncatedGaussian::interval(theta * f1, f1.sqrt(), threshold * f1.sqrt(), f64::INFINITY)?;
    let s1 = tg.sample(rng);
    let e: Vec<f64> = (0..n1).map(|_| StandardNormal.sample(rng)).collect();
    let ebar = e.iter().sum::<f64>() / f1;
    let stage1: Vec<f64> = e.iter().map(|v| s1 / f1 + v - ebar).collect();
    let stage2: Vec<f64> = (0..n2)
        .map(|_| {
            let v: f64 = StandardNormal.sample(rng);
            theta + v
        })
        .collect();
    // Rounding in the reconstruction can nudge a sum sitting on the cut.
    TwoStageData::new(stage1.clone(), stage2.clone(), threshold)
        .or_else(|_| TwoStageData::unscreened(stage1, stage2, threshold))
}

/// Draws `n1` from its law given selection, then a selected dataset.
pub fn simulate_selected_random_size<R: Rng + ?Sized>(
    prior: &SampleSizePrior,
    n2: usize,
    theta: f64,
    threshold: f64,
    rng: &mut R,
) -> Result<TwoStageData> {
    let w = sample_size_pmf_given_selection(prior, theta, threshold)?;
    let u: f64 = rng.random();
    let mut acc = 0.0;
    let mut n1 = *prior.support.last().expect("nonempty support");
    for (&k, wk) in prior.support.iter().zip(&w) {
        acc += wk;
        if u < acc {
            n1 = k;
            break;
        }
    }
    simulate_selected(n1, n2, theta, threshold, rng)
}
