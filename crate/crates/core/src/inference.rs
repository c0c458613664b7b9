//! Result records and equal-tailed test inversion shared by all models.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{brent, search_bracket, Bracket};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Interval {
    pub lower: f64,
    pub upper: f64,
}

impl Interval {
    pub fn new(lower: f64, upper: f64) -> Self {
        Self { lower, upper }
    }

    pub fn length(&self) -> f64 {
        self.upper - self.lower
    }

    pub fn contains(&self, x: f64) -> bool {
        self.lower <= x && x <= self.upper
    }

    pub fn shifted(&self, delta: f64) -> Self {
        Self::new(self.lower + delta, self.upper + delta)
    }
}

/// Direction of the alternative hypothesis for p-values.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Alternative {
    #[default]
    Greater,
    Less,
    TwoSided,
}

impl Alternative {
    /// p-value from the null CDF and survival function at the observed value.
    pub fn pvalue(self, cdf: f64, sf: f64) -> f64 {
        match self {
            Alternative::Greater => sf,
            Alternative::Less => cdf,
            Alternative::TwoSided => (2.0 * cdf.min(sf)).min(1.0),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct Diagnostics {
    /// How the selection probability was computed.
    pub normalizer: String,
    pub mc_std_error: Option<f64>,
    pub divergent_mle: bool,
    pub unbounded_lower: bool,
    pub unbounded_upper: bool,
    pub notes: Vec<String>,
}

impl Diagnostics {
    pub fn with_normalizer(normalizer: impl Into<String>) -> Self {
        Self {
            normalizer: normalizer.into(),
            ..Default::default()
        }
    }

    /// Compact flag string, `|`-separated, empty when nothing is flagged.
    pub fn flags(&self) -> String {
        let mut f = Vec::new();
        if self.divergent_mle {
            f.push("divergent-mle");
        }
        if self.unbounded_lower {
            f.push("unbounded-lower");
        }
        if self.unbounded_upper {
            f.push("unbounded-upper");
        }
        f.join("|")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InferenceResult {
    pub estimate: f64,
    pub ci: Interval,
    pub pvalue: f64,
    pub model_kind: String,
    pub diagnostics: Diagnostics,
}

#[derive(Debug, Clone, Copy)]
pub struct InversionOptions {
    pub level: f64,
    /// Where the bracket search starts, usually the observed statistic.
    pub start: f64,
    /// Initial bracket step; doubled until a sign change.
    pub step: f64,
    /// Largest distance from `start` searched before declaring an endpoint
    /// unbounded.
    pub span: f64,
    pub xtol: f64,
}

impl InversionOptions {
    pub fn new(level: f64, start: f64, scale: f64) -> Self {
        Self {
            level,
            start,
            step: 0.5 * scale,
            span: 50.0 * scale,
            xtol: 1e-10 * scale,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Inverted {
    pub interval: Interval,
    pub unbounded_lower: bool,
    pub unbounded_upper: bool,
}

pub fn check_level(level: f64) -> Result<()> {
    if level > 0.0 && level < 1.0 {
        Ok(())
    } else {
        Err(Error::invalid("level", format!("{level} not in (0, 1)")))
    }
}

/// Equal-tailed confidence interval by inverting a pivot.
///
/// `pivot(θ)` returns `(P_θ(T ≤ t_obs), P_θ(T > t_obs))`, stochastically
/// increasing in θ so that the CDF at the observed value decreases. The
/// lower endpoint solves `P_θ(T > t_obs) = α/2`, the upper solves
/// `P_θ(T ≤ t_obs) = α/2`. Endpoints not bracketed within `span` of the
/// start are reported as ±∞.
pub fn invert_pivot<F>(mut pivot: F, opts: &InversionOptions) -> Result<Inverted>
where
    F: FnMut(f64) -> Result<(f64, f64)>,
{
    check_level(opts.level)?;
    let half = 0.5 * (1.0 - opts.level);

    // Both functions are increasing in θ.
    let mut g_lower = |theta: f64| -> Result<f64> { Ok(pivot(theta)?.1 - half) };
    let (lo, unbounded_lower) = solve_increasing(&mut g_lower, opts)?;
    let mut g_upper = |theta: f64| -> Result<f64> { Ok(half - pivot(theta)?.0) };
    let (hi, unbounded_upper) = solve_increasing(&mut g_upper, opts)?;
    Ok(Inverted {
        interval: Interval::new(lo, hi),
        unbounded_lower,
        unbounded_upper,
    })
}

/// Root of an increasing function. When no sign change is found within
/// the span the root is reported as ±∞ in the direction searched, with
/// the flag set.
fn solve_increasing<G: FnMut(f64) -> Result<f64>>(g: &mut G, opts: &InversionOptions) -> Result<(f64, bool)> {
    let g0 = g(opts.start)?;
    if g0 == 0.0 {
        return Ok((opts.start, false));
    }
    let dir = if g0 > 0.0 { -1.0 } else { 1.0 };
    match search_bracket(&mut *g, opts.start, dir, opts.step, opts.span)? {
        Bracket::Found(a, b) if a == b => Ok((a, false)),
        Bracket::Found(a, b) => Ok((brent(&mut *g, a, b, opts.xtol, 300)?, false)),
        Bracket::Unbounded => Ok((dir * f64::INFINITY, true)),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::distributions::normal;

    #[test]
    fn gaussian_pivot_gives_z_interval() {
        let t_obs = 0.0;
        let pivot = |theta: f64| Ok((normal::cdf(t_obs - theta), normal::sf(t_obs - theta)));
        let inv = invert_pivot(pivot, &InversionOptions::new(0.95, t_obs, 1.0)).unwrap();
        let z = normal::quantile(0.975);
        assert!((inv.interval.lower + z).abs() < 1e-9);
        assert!((inv.interval.upper - z).abs() < 1e-9);
        assert!(!inv.unbounded_lower && !inv.unbounded_upper);
    }

    #[test]
    fn saturated_pivot_reports_unbounded_lower() {
        // P_θ(T > t) never drops below 0.06, so no θ is rejected on the low side.
        let pivot = |theta: f64| {
            let s = 0.06 + 0.9 * normal::cdf(theta);
            Ok((1.0 - s, s))
        };
        let inv = invert_pivot(pivot, &InversionOptions::new(0.9, 0.0, 1.0)).unwrap();
        assert!(inv.unbounded_lower);
        assert_eq!(inv.interval.lower, f64::NEG_INFINITY);
    }

    #[test]
    fn pvalue_sides() {
        assert_eq!(Alternative::Greater.pvalue(0.9, 0.1), 0.1);
        assert_eq!(Alternative::Less.pvalue(0.9, 0.1), 0.9);
        assert!((Alternative::TwoSided.pvalue(0.9, 0.1) - 0.2).abs() < 1e-15);
    }
}
