//! Conditional inference in a one-dimensional location family
//! `f(y_i; θ) = g(y_i − θ)` given the configuration `a = y − θ̂·1`.
//!
//! Given `a`, the MLE `T = θ̂` has density `c(θ, a) Π g(t + a_i − θ)`. A
//! dataset is analysed only when the conditional p-value `u(T, a)` for
//! `θ = 0` is at most `α`, which in `t` is the region `t > t_α(a)`.

use rand::Rng;

use crate::distributions::normal;
use crate::error::{Error, Result};
use crate::inference::{check_level, invert_pivot, Diagnostics, InferenceResult, InversionOptions};
use crate::numerics::{brent, integrate, log_integrate, maximize_scalar, search_bracket, Bracket, QuadOptions};

/// A base density `g` given by its logarithm.
#[derive(Debug, Clone, Copy)]
pub struct LocationFamily {
    name: &'static str,
    log_g: fn(f64) -> f64,
    quantile: Option<fn(f64) -> f64>,
    scale: f64,
}

fn log_gaussian(x: f64) -> f64 {
    normal::log_pdf(x)
}

fn log_laplace(x: f64) -> f64 {
    -x.abs() - std::f64::consts::LN_2
}

fn log_logistic(x: f64) -> f64 {
    let ax = x.abs();
    -ax - 2.0 * (-ax).exp().ln_1p()
}

fn laplace_quantile(p: f64) -> f64 {
    if p < 0.5 {
        (2.0 * p).ln()
    } else {
        -(2.0 * (1.0 - p)).ln()
    }
}

fn logistic_quantile(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

pub const REGISTERED: [&str; 3] = ["gaussian", "laplace", "logistic"];

impl LocationFamily {
    pub fn gaussian() -> Self {
        Self {
            name: "gaussian",
            log_g: log_gaussian,
            quantile: Some(normal::quantile),
            scale: 1.0,
        }
    }

    pub fn laplace() -> Self {
        Self {
            name: "laplace",
            log_g: log_laplace,
            quantile: Some(laplace_quantile),
            scale: std::f64::consts::SQRT_2,
        }
    }

    pub fn logistic() -> Self {
        Self {
            name: "logistic",
            log_g: log_logistic,
            quantile: Some(logistic_quantile),
            scale: std::f64::consts::PI / 3f64.sqrt(),
        }
    }

    pub fn by_name(name: &str) -> Result<Self> {
        match name {
            "gaussian" => Ok(Self::gaussian()),
            "laplace" => Ok(Self::laplace()),
            "logistic" => Ok(Self::logistic()),
            other => Err(Error::invalid(
                "family",
                format!("unknown family `{other}` (registered: {})", REGISTERED.join(", ")),
            )),
        }
    }

    /// A user density; rejected unless `exp(log_g)` integrates to 1 within
    /// `1e-8`. `scale` is a rough spread used to size quadrature panels.
    /// The density should be log-concave for the conditional machinery to
    /// be reliable.
    pub fn custom(name: &'static str, log_g: fn(f64) -> f64, scale: f64) -> Result<Self> {
        let fam = Self {
            name,
            log_g,
            quantile: None,
            scale,
        };
        let total = fam.total_mass()?;
        if (total - 1.0).abs() > 1e-8 {
            return Err(Error::invalid("log_g", format!("density integrates to {total}")));
        }
        Ok(fam)
    }

    pub fn name(&self) -> &'static str {
        self.name
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    pub fn log_g(&self, x: f64) -> f64 {
        (self.log_g)(x)
    }

    /// `∫ g`, for checking normalization.
    pub fn total_mass(&self) -> Result<f64> {
        let opts = QuadOptions {
            scale: self.scale,
            ..QuadOptions::default()
        };
        Ok(integrate(|x| (self.log_g)(x).exp(), f64::NEG_INFINITY, f64::INFINITY, &opts)?.value)
    }

    /// One draw from `g` (registered families only).
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<f64> {
        let q = self
            .quantile
            .ok_or_else(|| Error::invalid("family", format!("no sampler for `{}`", self.name)))?;
        let u: f64 = rng.random();
        // avoid the endpoints of (0, 1)
        Ok(q(u.clamp(f64::MIN_POSITIVE, 1.0 - f64::EPSILON)))
    }

    fn loglik(&self, y: &[f64], theta: f64) -> f64 {
        y.iter().map(|&v| (self.log_g)(v - theta)).sum()
    }

    /// `d/dθ Σ log g(y_i − θ)` by central differences.
    fn score(&self, y: &[f64], theta: f64) -> f64 {
        let h = 1e-5 * self.scale;
        (self.loglik(y, theta + h) - self.loglik(y, theta - h)) / (2.0 * h)
    }
}

/// `(θ̂, a)` with `a = y − θ̂·1`.
#[derive(Debug, Clone, PartialEq)]
pub struct Configuration {
    a: Vec<f64>,
    theta_hat: f64,
}

impl Configuration {
    /// Checks that `a` is a genuine configuration for `fam`: the score of
    /// `Σ log g(a_i − s)` at `s = 0` vanishes within `1e-8`.
    pub fn new(a: Vec<f64>, theta_hat: f64, fam: &LocationFamily) -> Result<Self> {
        if a.is_empty() {
            return Err(Error::invalid("a", "empty configuration"));
        }
        if a.iter().any(|v| !v.is_finite()) || !theta_hat.is_finite() {
            return Err(Error::invalid("a", "entries must be finite"));
        }
        let s = fam.score(&a, 0.0);
        if s.abs() > 1e-8 * (a.len() as f64) {
            return Err(Error::invalid(
                "a",
                format!("not a configuration: score {s:e} at the estimate"),
            ));
        }
        Ok(Self { a, theta_hat })
    }

    pub fn a(&self) -> &[f64] {
        &self.a
    }

    pub fn theta_hat(&self) -> f64 {
        self.theta_hat
    }

    pub fn n(&self) -> usize {
        self.a.len()
    }
}

/// MLE of the location and the residual configuration.
pub fn decompose(y: &[f64], fam: &LocationFamily) -> Result<Configuration> {
    if y.is_empty() {
        return Err(Error::invalid("y", "need at least one observation"));
    }
    if y.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("y", "observations must be finite"));
    }
    let lo = y.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = y.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !fam.loglik(y, lo).is_finite() {
        return Err(Error::Numerical("likelihood not finite".into()));
    }
    // For log-concave g the score is decreasing and changes sign in the hull.
    let theta_hat = if lo == hi {
        lo
    } else {
        let score = |t: f64| Ok(y.iter().map(|&v| -dlog(fam, v - t)).sum::<f64>());
        let (slo, shi) = (score(lo)?, score(hi)?);
        if slo == 0.0 {
            lo
        } else if shi == 0.0 {
            hi
        } else {
            brent(score, lo, hi, 1e-14 * (hi - lo).max(1.0), 500)?
        }
    };
    let theta_hat = polish(y, fam, theta_hat);
    let a = y.iter().map(|v| v - theta_hat).collect();
    Configuration::new(a, theta_hat, fam)
}

/// `-d/dθ log g(x − θ)`-style derivative `(log g)'(x)`, analytic for the
/// registered families.
fn dlog(fam: &LocationFamily, x: f64) -> f64 {
    match fam.name {
        "gaussian" => -x,
        "laplace" => -x.signum() * (x != 0.0) as i32 as f64,
        "logistic" => -(0.5 * x).tanh(),
        _ => {
            let h = 1e-6 * fam.scale;
            ((fam.log_g)(x + h) - (fam.log_g)(x - h)) / (2.0 * h)
        }
    }
}

/// Snaps a piecewise-linear (Laplace) estimate onto the data point it
/// brackets so that the configuration has an exact zero.
fn polish(y: &[f64], fam: &LocationFamily, theta: f64) -> f64 {
    if fam.name != "laplace" {
        return theta;
    }
    y.iter()
        .copied()
        .min_by(|a, b| (a - theta).abs().total_cmp(&(b - theta).abs()))
        .filter(|v| (v - theta).abs() < 1e-9 * v.abs().max(1.0))
        .unwrap_or(theta)
}

fn log_prod_g(fam: &LocationFamily, a: &[f64], s: f64) -> f64 {
    a.iter().map(|&ai| (fam.log_g)(s + ai)).sum()
}

fn quad_scale(conf: &Configuration, fam: &LocationFamily) -> f64 {
    fam.scale / (conf.n() as f64).sqrt()
}

/// `ln ∫_lo^hi Π g(s + a_i) ds`; the integrand is log-concave with its
/// mode at `s = 0` because the configuration has zero score there.
fn log_mass(conf: &Configuration, fam: &LocationFamily, lo: f64, hi: f64) -> Result<f64> {
    log_integrate(|s| log_prod_g(fam, &conf.a, s), lo, hi, 0.0, quad_scale(conf, fam))
}

/// `ln c(θ, a)`; independent of θ.
pub fn log_conditional_density_constant(conf: &Configuration, fam: &LocationFamily) -> Result<f64> {
    let m = log_mass(conf, fam, f64::NEG_INFINITY, f64::INFINITY)?;
    if !m.is_finite() {
        return Err(Error::Numerical("normalizing integral is not finite".into()));
    }
    Ok(-m)
}

/// `c(θ, a) = 1 / ∫ Π g(t + a_i − θ) dt`.
pub fn conditional_density_constant(theta: f64, conf: &Configuration, fam: &LocationFamily) -> Result<f64> {
    if !theta.is_finite() {
        return Err(Error::invalid("theta", "must be finite"));
    }
    Ok(log_conditional_density_constant(conf, fam)?.exp())
}

/// Conditional density of `T` given `a` at `t` under `θ`.
pub fn conditional_log_density(t: f64, theta: f64, conf: &Configuration, fam: &LocationFamily) -> Result<f64> {
    Ok(log_conditional_density_constant(conf, fam)? + log_prod_g(fam, &conf.a, t - theta))
}

/// `u(t, a) = c(0, a) ∫_t^∞ Π g(s + a_i) ds` at the observed `t = θ̂`.
pub fn location_pvalue(conf: &Configuration, fam: &LocationFamily) -> Result<f64> {
    Ok(tail_pvalue(conf, fam, conf.theta_hat)?.exp())
}

/// ln u(t, a) for an arbitrary `t`.
fn tail_pvalue(conf: &Configuration, fam: &LocationFamily, t: f64) -> Result<f64> {
    let above = log_mass(conf, fam, t, f64::INFINITY)?;
    let below = log_mass(conf, fam, f64::NEG_INFINITY, t)?;
    Ok(above - crate::distributions::truncated::log_add_exp(above, below))
}

/// `t_α(a)`: the point where `u(t, a) = α` (`−∞` when `α = 1`).
pub fn selection_cutoff(conf: &Configuration, fam: &LocationFamily, alpha: f64) -> Result<f64> {
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(Error::invalid("alpha", format!("{alpha} not in (0, 1]")));
    }
    if alpha == 1.0 {
        return Ok(f64::NEG_INFINITY);
    }
    let la = alpha.ln();
    let scale = quad_scale(conf, fam);
    let mut g = |t: f64| Ok(la - tail_pvalue(conf, fam, t)?);
    // g is increasing in t
    let g0 = g(0.0)?;
    let dir = if g0 > 0.0 { -1.0 } else { 1.0 };
    match search_bracket(&mut g, 0.0, dir, scale, 1e3 * scale)? {
        Bracket::Found(a, b) if a == b => Ok(a),
        Bracket::Found(a, b) => brent(&mut g, a, b, 1e-13 * scale, 300),
        Bracket::Unbounded => Err(Error::Numerical(format!("no cutoff found for alpha {alpha}"))),
    }
}

/// MLE, CI and p-value (θ = 0, greater) for θ from the law of `T | a`
/// truncated to the selection region `t > t_α(a)`.
pub fn selective_location_inference(
    conf: &Configuration,
    fam: &LocationFamily,
    alpha: f64,
    ci_level: f64,
) -> Result<InferenceResult> {
    check_level(ci_level)?;
    let t_alpha = selection_cutoff(conf, fam, alpha)?;
    let t = conf.theta_hat;
    if t < t_alpha {
        return Err(Error::InconsistentDatum);
    }
    let scale = quad_scale(conf, fam);
    let mut diagnostics = Diagnostics::with_normalizer("quadrature");

    // ln P(T > t_α) under θ, up to the constant c.
    let log_sel = |theta: f64| log_mass(conf, fam, t_alpha - theta, f64::INFINITY);
    let loglik = |theta: f64| match log_sel(theta) {
        Ok(ls) if ls.is_finite() => log_prod_g(fam, &conf.a, t - theta) - ls,
        _ => f64::NEG_INFINITY,
    };
    let estimate = if t - t_alpha < 1e-12 * scale {
        diagnostics.divergent_mle = true;
        f64::NEG_INFINITY
    } else {
        match maximize_scalar(loglik, t, scale, t - 1e4 * scale, t + 1e4 * scale, 1e-12) {
            Ok((x, _)) => x,
            Err(Error::DivergentMle { positive, .. }) => {
                diagnostics.divergent_mle = true;
                if positive {
                    f64::INFINITY
                } else {
                    f64::NEG_INFINITY
                }
            }
            Err(e) => return Err(e),
        }
    };

    let pivot = |theta: f64| -> Result<(f64, f64)> {
        let below = log_mass(conf, fam, t_alpha - theta, t - theta)?;
        let above = log_mass(conf, fam, t - theta, f64::INFINITY)?;
        let total = crate::distributions::truncated::log_add_exp(below, above);
        if total == f64::NEG_INFINITY {
            return Err(Error::UnsupportedSelection);
        }
        Ok(((below - total).exp(), (above - total).exp()))
    };
    let inv = invert_pivot(pivot, &InversionOptions::new(ci_level, t, scale))?;
    diagnostics.unbounded_lower = inv.unbounded_lower;
    diagnostics.unbounded_upper = inv.unbounded_upper;
    Ok(InferenceResult {
        estimate,
        ci: inv.interval,
        pvalue: pivot(0.0)?.1,
        model_kind: format!("location-{}", fam.name),
        diagnostics,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::distributions::TruncatedGaussian;

    const Y: [f64; 5] = [0.3, 1.9, -0.4, 1.1, 0.8];

    #[test]
    fn registered_families_are_normalized() {
        for name in REGISTERED {
            let fam = LocationFamily::by_name(name).unwrap();
            assert!((fam.total_mass().unwrap() - 1.0).abs() < 1e-8, "{name}");
        }
        assert!(LocationFamily::by_name("cauchy").is_err());
        assert!(LocationFamily::custom("half", |x| normal::log_pdf(x) - 1.0, 1.0).is_err());
    }

    #[test]
    fn known_estimators() {
        let c = decompose(&Y, &LocationFamily::gaussian()).unwrap();
        let mean = Y.iter().sum::<f64>() / 5.0;
        assert!((c.theta_hat() - mean).abs() < 1e-10);
        let c = decompose(&Y, &LocationFamily::laplace()).unwrap();
        assert!((c.theta_hat() - 0.8).abs() < 1e-8);
    }

    #[test]
    fn decomposition_is_equivariant() {
        let fam = LocationFamily::logistic();
        let a = decompose(&Y, &fam).unwrap();
        let shifted: Vec<f64> = Y.iter().map(|v| v + 3.25).collect();
        let b = decompose(&shifted, &fam).unwrap();
        assert!((b.theta_hat() - a.theta_hat() - 3.25).abs() < 1e-10);
        for (u, v) in a.a().iter().zip(b.a()) {
            assert!((u - v).abs() < 1e-10);
        }
    }

    #[test]
    fn non_configuration_is_rejected() {
        let fam = LocationFamily::gaussian();
        assert!(Configuration::new(vec![1.0, 1.0], 0.0, &fam).is_err());
        assert!(Configuration::new(vec![1.0, -1.0], 0.0, &fam).is_ok());
    }

    #[test]
    fn gaussian_constant_closed_form() {
        let fam = LocationFamily::gaussian();
        let c = decompose(&Y, &fam).unwrap();
        let n = 5.0;
        let ss: f64 = c.a().iter().map(|v| v * v).sum();
        // c = (2π)^{n/2} e^{Σa²/2} / √(2π/n)
        let want = (0.5 * n * (2.0 * std::f64::consts::PI).ln() + 0.5 * ss
            - 0.5 * (2.0 * std::f64::consts::PI / n).ln())
        .exp();
        let got0 = conditional_density_constant(0.0, &c, &fam).unwrap();
        let got1 = conditional_density_constant(1.0, &c, &fam).unwrap();
        assert!(((got0 - want) / want).abs() < 1e-8);
        assert!(((got0 - got1) / got0).abs() < 1e-10);
    }

    #[test]
    fn gaussian_pvalue_closed_form() {
        let fam = LocationFamily::gaussian();
        let c = decompose(&Y, &fam).unwrap();
        let u = location_pvalue(&c, &fam).unwrap();
        assert!((u - normal::sf(5f64.sqrt() * c.theta_hat())).abs() < 1e-8);
    }

    #[test]
    fn pvalue_decreases_in_t() {
        let fam = LocationFamily::logistic();
        let c = decompose(&Y, &fam).unwrap();
        let mut prev = 1.0;
        for k in -20..=20 {
            let u = tail_pvalue(&c, &fam, 0.2 * k as f64).unwrap().exp();
            assert!(u <= prev);
            prev = u;
        }
    }

    #[test]
    fn gaussian_selective_inference_is_truncated_normal() {
        let fam = LocationFamily::gaussian();
        let y = [1.4, 0.9, 1.7, 0.2, 1.3];
        let c = decompose(&y, &fam).unwrap();
        let r = selective_location_inference(&c, &fam, 0.05, 0.9).unwrap();
        let sd = 1.0 / 5f64.sqrt();
        let cut = sd * normal::quantile(0.95);
        let tg = TruncatedGaussian::interval(0.0, sd, cut, f64::INFINITY).unwrap();
        let t = c.theta_hat();
        assert!((r.estimate - tg.mle_mu(t).unwrap()).abs() < 1e-6);
        let pivot = |th: f64| Ok(tg.with_mu(th)?.cdf_sf(t));
        let inv = invert_pivot(pivot, &InversionOptions::new(0.9, t, sd)).unwrap();
        assert!(
            (r.ci.lower - inv.interval.lower).abs() < 1e-6,
            "{:?} {:?}",
            r.ci,
            inv.interval
        );
        assert!((r.ci.upper - inv.interval.upper).abs() < 1e-6);
        assert!((r.pvalue - tg.sf(t)).abs() < 1e-8);
    }

    #[test]
    fn no_selection_recovers_conditional_inference() {
        let fam = LocationFamily::gaussian();
        let c = decompose(&Y, &fam).unwrap();
        let r = selective_location_inference(&c, &fam, 1.0, 0.9).unwrap();
        let half = normal::quantile(0.95) / 5f64.sqrt();
        assert!((r.ci.lower - (c.theta_hat() - half)).abs() < 1e-6);
        assert!((r.ci.upper - (c.theta_hat() + half)).abs() < 1e-6);
        assert!((r.estimate - c.theta_hat()).abs() < 1e-6);
    }
}
