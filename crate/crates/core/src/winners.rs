//! Inference for the mean of the largest of several Gaussian observations.
//!
//! Two sampling models are supported for the winner `Y_I`, `I = argmax Y_i`:
//!
//! * [`WinnersModelKind::ConditionalOnLosers`]: the losers are held fixed,
//!   so `Y_I` is `N(θ_I, σ²)` truncated to `[max losers, ∞)`;
//! * [`WinnersModelKind::FullVector`]: the whole vector is random and only
//!   the event "`I` wins" is conditioned on; the loser means are replaced
//!   by their observed values.
//!
//! Indices are 0-based.

use serde::{Deserialize, Serialize};

use crate::distributions::{normal, TruncatedGaussian};
use crate::error::{Error, Result};
use crate::inference::{check_level, invert_pivot, Alternative, Diagnostics, InferenceResult, InversionOptions};
use crate::numerics::{log_integrate, maximize_scalar};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum WinnersModelKind {
    FullVector,
    ConditionalOnLosers,
}

impl WinnersModelKind {
    pub fn label(self) -> &'static str {
        match self {
            WinnersModelKind::FullVector => "full-vector",
            WinnersModelKind::ConditionalOnLosers => "conditional-on-losers",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct WinnersData {
    y: Vec<f64>,
    sigma: f64,
    selected: usize,
}

impl WinnersData {
    pub fn new(y: Vec<f64>, sigma: f64) -> Result<Self> {
        if !(sigma > 0.0 && sigma.is_finite()) {
            return Err(Error::invalid("sigma", format!("{sigma} must be positive")));
        }
        let selected = argmax_select(&y)?;
        if y.iter().any(|v| v.is_infinite()) {
            return Err(Error::invalid("y", "entries must be finite"));
        }
        Ok(Self { y, sigma, selected })
    }

    pub fn y(&self) -> &[f64] {
        &self.y
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn selected_index(&self) -> usize {
        self.selected
    }

    pub fn winner(&self) -> f64 {
        self.y[self.selected]
    }

    pub fn losers(&self) -> Vec<f64> {
        self.y
            .iter()
            .enumerate()
            .filter(|&(i, _)| i != self.selected)
            .map(|(_, &v)| v)
            .collect()
    }

    pub fn max_loser(&self) -> f64 {
        self.losers().into_iter().fold(f64::NEG_INFINITY, f64::max)
    }
}

/// Index of the largest entry, lowest index on ties.
pub fn argmax_select(y: &[f64]) -> Result<usize> {
    if y.len() < 2 {
        return Err(Error::invalid("y", "need at least two observations"));
    }
    if y.iter().any(|v| v.is_nan()) {
        return Err(Error::invalid("y", "NaN entry"));
    }
    let mut best = 0;
    for (i, &v) in y.iter().enumerate().skip(1) {
        if v > y[best] {
            best = i;
        }
    }
    Ok(best)
}

fn check_sigma(sigma: f64) -> Result<()> {
    if sigma > 0.0 && sigma.is_finite() {
        Ok(())
    } else {
        Err(Error::invalid("sigma", format!("{sigma} must be positive")))
    }
}

/// ln of `φ((x − θ_w)/σ)/σ · Π_{i≠w} Φ((x − θ_i)/σ)`.
fn log_win_integrand(x: f64, theta_w: f64, others: &[f64], sigma: f64) -> f64 {
    let mut v = normal::log_pdf((x - theta_w) / sigma) - sigma.ln();
    for &t in others {
        v += normal::log_cdf((x - t) / sigma);
    }
    v
}

/// Mode of the log-concave winning integrand.
fn win_mode(theta_w: f64, others: &[f64], sigma: f64) -> f64 {
    let hi = others.iter().copied().fold(theta_w, f64::max);
    let f = |x: f64| log_win_integrand(x, theta_w, others, sigma);
    // the mode lies between θ_w and max(θ_w, others) + a few σ
    maximize_scalar(
        f,
        theta_w.max(hi - 3.0 * sigma),
        0.5 * sigma,
        theta_w - 1e3 * sigma,
        hi + 1e3 * sigma,
        1e-8,
    )
    .map(|(x, _)| x)
    .unwrap_or(theta_w)
}

/// ln P(Y_w > Y_i for all i ≠ w) for independent `Y_i ~ N(θ_i, σ²)`,
/// integrating `y` from `−∞` to `hi`.
fn log_win_prob_below(theta_w: f64, others: &[f64], sigma: f64, hi: f64) -> Result<f64> {
    let mode = win_mode(theta_w, others, sigma);
    log_integrate(
        |x| log_win_integrand(x, theta_w, others, sigma),
        f64::NEG_INFINITY,
        hi,
        mode,
        sigma,
    )
}

fn split_others(theta: &[f64], w: usize) -> Vec<f64> {
    theta
        .iter()
        .enumerate()
        .filter(|&(i, _)| i != w)
        .map(|(_, &v)| v)
        .collect()
}

/// `P_θ(Y_1 > Y_i ∀ i > 1)`: the probability that the first coordinate wins.
pub fn normalizer_full(theta: &[f64], sigma: f64) -> Result<f64> {
    Ok(log_normalizer_full(theta, sigma)?.exp())
}

pub fn log_normalizer_full(theta: &[f64], sigma: f64) -> Result<f64> {
    check_sigma(sigma)?;
    if theta.len() < 2 {
        return Err(Error::invalid("theta", "need at least two means"));
    }
    if theta.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("theta", "means must be finite"));
    }
    log_win_prob_below(theta[0], &theta[1..], sigma, f64::INFINITY)
}

/// Probability that each coordinate is the winner.
pub fn winner_probabilities(theta: &[f64], sigma: f64) -> Result<Vec<f64>> {
    (0..theta.len())
        .map(|w| {
            let mut t = vec![theta[w]];
            t.extend(split_others(theta, w));
            normalizer_full(&t, sigma)
        })
        .collect()
}

/// `P_{θ_1}(Y_1 > max(losers))` with the losers fixed.
pub fn normalizer_losers(theta1: f64, losers: &[f64], sigma: f64) -> Result<f64> {
    check_sigma(sigma)?;
    if losers.is_empty() {
        return Err(Error::invalid("losers", "empty"));
    }
    if losers.iter().any(|v| v.is_nan()) {
        return Err(Error::invalid("losers", "NaN entry"));
    }
    let m = losers.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    Ok(normal::sf((m - theta1) / sigma))
}

/// MLE, equal-tailed CI and p-value for `θ_winner = 0` (one-sided, greater).
pub fn infer_winner(data: &WinnersData, kind: WinnersModelKind, level: f64) -> Result<InferenceResult> {
    check_level(level)?;
    match kind {
        WinnersModelKind::ConditionalOnLosers => infer_conditional_on_losers(data, level),
        WinnersModelKind::FullVector => infer_full_vector(data, level),
    }
}

fn infer_conditional_on_losers(data: &WinnersData, level: f64) -> Result<InferenceResult> {
    let (y, s) = (data.winner(), data.sigma);
    let m = data.max_loser();
    let tg = TruncatedGaussian::interval(y, s, m, f64::INFINITY)?;
    let mut diagnostics = Diagnostics::with_normalizer("closed-form");
    let estimate = match tg.mle_mu(y) {
        Ok(v) => v,
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
    let pivot = |theta: f64| Ok(tg.with_mu(theta)?.cdf_sf(y));
    let inv = invert_pivot(pivot, &InversionOptions::new(level, y, s))?;
    diagnostics.unbounded_lower = inv.unbounded_lower;
    diagnostics.unbounded_upper = inv.unbounded_upper;
    Ok(InferenceResult {
        estimate,
        ci: inv.interval,
        pvalue: Alternative::Greater.pvalue(tg.with_mu(0.0)?.cdf(y), tg.with_mu(0.0)?.sf(y)),
        model_kind: WinnersModelKind::ConditionalOnLosers.label().into(),
        diagnostics,
    })
}

/// Selective law of the winning value with loser means plugged in at their
/// observed values: density ∝ `φ((x − θ)/σ) Π Φ((x − y_i)/σ)`.
struct PlugInWinner {
    losers: Vec<f64>,
    sigma: f64,
}

impl PlugInWinner {
    fn log_mass(&self, theta: f64, lo: f64, hi: f64) -> Result<f64> {
        let mode = win_mode(theta, &self.losers, self.sigma);
        log_integrate(
            |x| log_win_integrand(x, theta, &self.losers, self.sigma),
            lo,
            hi,
            mode,
            self.sigma,
        )
    }

    fn cdf_sf(&self, theta: f64, x: f64) -> Result<(f64, f64)> {
        let below = self.log_mass(theta, f64::NEG_INFINITY, x)?;
        let above = self.log_mass(theta, x, f64::INFINITY)?;
        let total = crate::distributions::truncated::log_add_exp(below, above);
        if total == f64::NEG_INFINITY {
            return Err(Error::UnsupportedSelection);
        }
        Ok(((below - total).exp(), (above - total).exp()))
    }

    fn loglik(&self, theta: f64, x: f64) -> f64 {
        match log_win_prob_below(theta, &self.losers, self.sigma, f64::INFINITY) {
            Ok(lphi) if lphi.is_finite() => normal::log_pdf((x - theta) / self.sigma) - lphi,
            _ => f64::NEG_INFINITY,
        }
    }
}

fn infer_full_vector(data: &WinnersData, level: f64) -> Result<InferenceResult> {
    let (y, s) = (data.winner(), data.sigma);
    let model = PlugInWinner {
        losers: data.losers(),
        sigma: s,
    };
    let mut diagnostics = Diagnostics::with_normalizer("quadrature");
    diagnostics
        .notes
        .push("loser means plugged in at observed values".into());
    let estimate = match maximize_scalar(|t| model.loglik(t, y), y, 0.5 * s, y - 1e4 * s, y + 1e4 * s, 1e-10) {
        Ok((t, _)) => t,
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
    let pivot = |theta: f64| model.cdf_sf(theta, y);
    let inv = invert_pivot(pivot, &InversionOptions::new(level, y, s))?;
    diagnostics.unbounded_lower = inv.unbounded_lower;
    diagnostics.unbounded_upper = inv.unbounded_upper;
    let (c0, s0) = model.cdf_sf(0.0, y)?;
    Ok(InferenceResult {
        estimate,
        ci: inv.interval,
        pvalue: Alternative::Greater.pvalue(c0, s0),
        model_kind: WinnersModelKind::FullVector.label().into(),
        diagnostics,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn argmax_rules() {
        assert_eq!(argmax_select(&[3.0, 1.0, 2.0]).unwrap(), 0);
        assert_eq!(argmax_select(&[2.0, 2.0, 1.0]).unwrap(), 0);
        assert_eq!(argmax_select(&[1.0, 2.0, 2.0]).unwrap(), 1);
        assert!(argmax_select(&[1.0, f64::NAN]).is_err());
        assert!(argmax_select(&[1.0]).is_err());
    }

    #[test]
    fn equal_means_are_exchangeable() {
        for m in 2..=6 {
            let v = normalizer_full(&vec![0.3; m], 1.7).unwrap();
            assert!((v - 1.0 / m as f64).abs() <= 1e-8, "m={m}: {v}");
        }
    }

    #[test]
    fn two_means_reduce_to_difference() {
        // Y_1 − Y_2 ~ N(1, 2): P(Y_1 > Y_2) = Φ(1/√2)
        let v = normalizer_full(&[1.0, 0.0], 1.0).unwrap();
        assert!((v - 0.760_249_938_906_523_3).abs() < 1e-10, "{v}");
    }

    #[test]
    fn winner_probabilities_partition() {
        let theta = [0.3, -1.0, 2.2, 0.0, 1.1];
        let p = winner_probabilities(&theta, 0.8).unwrap();
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-8);
        assert!(p.iter().all(|&v| (0.0..=1.0).contains(&v)));
    }

    #[test]
    fn losers_normalizer() {
        assert_eq!(normalizer_losers(1.5, &[1.5, -3.0], 1.0).unwrap(), 0.5);
        let v = normalizer_losers(3.0, &[0.0, -2.0], 1.0).unwrap();
        assert!((v - 0.998_650_101_968_369_9).abs() < 1e-15);
        assert_eq!(
            normalizer_losers(0.2, &[0.7, 0.1], 1.0),
            normalizer_losers(0.2, &[0.7, -5.0], 1.0)
        );
        assert!(normalizer_losers(0.0, &[], 1.0).is_err());
    }

    #[test]
    fn losers_interval_matches_truncated_inversion() {
        let data = WinnersData::new(vec![2.0, 0.0, -1.0], 1.0).unwrap();
        let r = infer_winner(&data, WinnersModelKind::ConditionalOnLosers, 0.9).unwrap();
        assert!((r.ci.lower - 0.060_153_297_206_662_01).abs() < 1e-6, "{:?}", r.ci);
        assert!((r.ci.upper - 3.643_616_749_467_383).abs() < 1e-6, "{:?}", r.ci);
        assert!(r.ci.lower <= r.estimate && r.estimate <= r.ci.upper);
    }

    #[test]
    fn vanishing_truncation_gives_z_interval() {
        let data = WinnersData::new(vec![0.4, -1e6, -1e6 - 1.0], 1.0).unwrap();
        let r = infer_winner(&data, WinnersModelKind::ConditionalOnLosers, 0.9).unwrap();
        let z = normal::quantile(0.95);
        assert!((r.ci.lower - (0.4 - z)).abs() < 1e-6);
        assert!((r.ci.upper - (0.4 + z)).abs() < 1e-6);
        assert!((r.estimate - 0.4).abs() < 1e-9);
    }

    #[test]
    fn boundary_winner_is_flagged() {
        let data = WinnersData::new(vec![1.0, 1.0 - 1e-14, 0.0], 1.0).unwrap();
        let r = infer_winner(&data, WinnersModelKind::ConditionalOnLosers, 0.9).unwrap();
        assert!(r.diagnostics.divergent_mle);
        assert_eq!(r.ci.lower, f64::NEG_INFINITY);
        assert!(r.diagnostics.unbounded_lower);
    }

    #[test]
    fn full_vector_is_translation_equivariant() {
        let y = vec![1.3, 0.2, 0.9, -0.4];
        let a = infer_winner(
            &WinnersData::new(y.clone(), 1.0).unwrap(),
            WinnersModelKind::FullVector,
            0.9,
        )
        .unwrap();
        let shifted: Vec<f64> = y.iter().map(|v| v + 2.5).collect();
        let b = infer_winner(
            &WinnersData::new(shifted, 1.0).unwrap(),
            WinnersModelKind::FullVector,
            0.9,
        )
        .unwrap();
        assert!((b.estimate - a.estimate - 2.5).abs() < 1e-6);
        assert!((b.ci.lower - a.ci.lower - 2.5).abs() < 1e-6);
        assert!((b.ci.upper - a.ci.upper - 2.5).abs() < 1e-6);
    }
}
