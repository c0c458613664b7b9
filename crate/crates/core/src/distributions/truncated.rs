//! Gaussian law restricted to a finite union of disjoint intervals.
//!
//! All interval masses are kept as logarithms of standardized masses, so
//! truncation sets tens of standard deviations from the mean still yield
//! finite, monotone CDF values. Intervals are treated as half-open
//! `[l, u)`; the distinction is measure-zero.

use rand::Rng;

use super::normal;
use crate::error::{Error, Result};
use crate::numerics::{brent, search_bracket, Bracket};

#[derive(Debug, Clone, PartialEq)]
pub struct TruncatedGaussian {
    mu: f64,
    sigma: f64,
    intervals: Vec<(f64, f64)>,
    /// ln of the standard-normal mass of each interval.
    log_masses: Vec<f64>,
    log_total: f64,
}

/// ln of Φ(b) − Φ(a) for standardized `a < b`, without cancellation when both
/// endpoints sit in the same tail.
pub fn log_std_mass(a: f64, b: f64) -> f64 {
    if !(a < b) {
        return f64::NEG_INFINITY;
    }
    if a >= 0.0 {
        let la = normal::log_sf(a);
        let lb = normal::log_sf(b);
        la + log1mexp(lb - la)
    } else if b <= 0.0 {
        let lb = normal::log_cdf(b);
        let la = normal::log_cdf(a);
        lb + log1mexp(la - lb)
    } else {
        (-(normal::cdf(a) + normal::sf(b))).ln_1p()
    }
}

/// ln(1 − eˣ) for x ≤ 0.
#[inline]
fn log1mexp(x: f64) -> f64 {
    if x > -std::f64::consts::LN_2 {
        (-x.exp_m1()).ln()
    } else {
        (-x.exp()).ln_1p()
    }
}

#[inline]
pub(crate) fn log_add_exp(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    let m = a.max(b);
    m + ((a - m).exp() + (b - m).exp()).ln()
}

pub(crate) fn log_sum_exp(values: impl IntoIterator<Item = f64>) -> f64 {
    values.into_iter().fold(f64::NEG_INFINITY, log_add_exp)
}

/// Quantile of a standard normal restricted to `[a, b]` at fraction `r` of
/// that interval's mass.
fn std_interval_quantile(a: f64, b: f64, r: f64) -> f64 {
    if r <= 0.0 {
        return a;
    }
    if r >= 1.0 {
        return b;
    }
    let z = if a >= 0.0 {
        let la = normal::log_sf(a);
        let lb = normal::log_sf(b);
        // Q(z) = Q(a) − r (Q(a) − Q(b))
        normal::isf_log(la + (r * (lb - la).exp_m1()).ln_1p())
    } else if b <= 0.0 {
        -std_interval_quantile(-b, -a, 1.0 - r)
    } else {
        let pa = normal::cdf(a);
        let pb = normal::cdf(b);
        let p = pa + r * (pb - pa);
        if p < 0.5 {
            normal::quantile(p)
        } else {
            let q = normal::sf(b) + (1.0 - r) * (pb - pa);
            normal::isf_log(q.ln())
        }
    };
    z.clamp(a, b)
}

impl TruncatedGaussian {
    /// Builds the law from ordered, disjoint intervals `l_1 < u_1 ≤ l_2 < …`.
    pub fn new(mu: f64, sigma: f64, intervals: Vec<(f64, f64)>) -> Result<Self> {
        if !mu.is_finite() {
            return Err(Error::invalid("mu", "must be finite"));
        }
        if !(sigma > 0.0 && sigma.is_finite()) {
            return Err(Error::invalid("sigma", "must be positive and finite"));
        }
        if intervals.is_empty() {
            return Err(Error::EmptyTruncation);
        }
        for (i, &(l, u)) in intervals.iter().enumerate() {
            if l.is_nan() || u.is_nan() || !(l < u) {
                return Err(Error::invalid(
                    "truncation",
                    format!("interval {i} = ({l}, {u}) is not proper"),
                ));
            }
            if i > 0 && intervals[i - 1].1 > l {
                return Err(Error::invalid("truncation", "intervals must be ordered and disjoint"));
            }
        }
        let log_masses: Vec<f64> = intervals
            .iter()
            .map(|&(l, u)| log_std_mass((l - mu) / sigma, (u - mu) / sigma))
            .collect();
        let log_total = log_sum_exp(log_masses.iter().copied());
        if log_total == f64::NEG_INFINITY || log_total.is_nan() {
            return Err(Error::EmptyTruncation);
        }
        Ok(Self {
            mu,
            sigma,
            intervals,
            log_masses,
            log_total,
        })
    }

    /// Single-interval truncation `[lower, upper)`.
    pub fn interval(mu: f64, sigma: f64, lower: f64, upper: f64) -> Result<Self> {
        Self::new(mu, sigma, vec![(lower, upper)])
    }

    /// Untruncated normal.
    pub fn untruncated(mu: f64, sigma: f64) -> Result<Self> {
        Self::interval(mu, sigma, f64::NEG_INFINITY, f64::INFINITY)
    }

    /// Accepts intervals in any order, merging overlaps and touching ends.
    pub fn from_union(mu: f64, sigma: f64, intervals: &[(f64, f64)]) -> Result<Self> {
        Self::new(mu, sigma, merge_intervals(intervals))
    }

    pub fn mu(&self) -> f64 {
        self.mu
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn intervals(&self) -> &[(f64, f64)] {
        &self.intervals
    }

    /// Same truncation set, new location.
    pub fn with_mu(&self, mu: f64) -> Result<Self> {
        Self::new(mu, self.sigma, self.intervals.clone())
    }

    /// ln of the standard-normal mass of the truncation set.
    pub fn log_mass(&self) -> f64 {
        self.log_total
    }

    pub fn support_min(&self) -> f64 {
        self.intervals[0].0
    }

    pub fn support_max(&self) -> f64 {
        self.intervals[self.intervals.len() - 1].1
    }

    pub fn contains(&self, x: f64) -> bool {
        self.intervals.iter().any(|&(l, u)| l <= x && x < u)
    }

    /// Normalized probability of each interval.
    pub fn interval_probabilities(&self) -> Vec<f64> {
        self.log_masses.iter().map(|lm| (lm - self.log_total).exp()).collect()
    }

    pub fn log_pdf(&self, x: f64) -> f64 {
        if !self.contains(x) {
            return f64::NEG_INFINITY;
        }
        normal::log_pdf((x - self.mu) / self.sigma) - self.sigma.ln() - self.log_total
    }

    pub fn pdf(&self, x: f64) -> f64 {
        self.log_pdf(x).exp()
    }

    /// ln of the (unnormalized) standard masses below and above `x`.
    fn split_log_mass(&self, x: f64) -> (f64, f64) {
        let z = (x - self.mu) / self.sigma;
        let mut below = f64::NEG_INFINITY;
        let mut above = f64::NEG_INFINITY;
        for (&(l, u), &lm) in self.intervals.iter().zip(&self.log_masses) {
            if x >= u {
                below = log_add_exp(below, lm);
            } else if x <= l {
                above = log_add_exp(above, lm);
            } else {
                let a = (l - self.mu) / self.sigma;
                let b = (u - self.mu) / self.sigma;
                below = log_add_exp(below, log_std_mass(a, z));
                above = log_add_exp(above, log_std_mass(z, b));
            }
        }
        (below, above)
    }

    /// `(P(T ≤ x), P(T > x))`, each accurate on its own small side.
    pub fn cdf_sf(&self, x: f64) -> (f64, f64) {
        if x.is_nan() {
            return (f64::NAN, f64::NAN);
        }
        let (below, above) = self.split_log_mass(x);
        let total = log_add_exp(below, above);
        let c = (below - total).exp();
        let s = (above - total).exp();
        if c < s {
            (c, 1.0 - c)
        } else {
            (1.0 - s, s)
        }
    }

    pub fn cdf(&self, x: f64) -> f64 {
        self.cdf_sf(x).0
    }

    pub fn sf(&self, x: f64) -> f64 {
        self.cdf_sf(x).1
    }

    /// ln P(T > x).
    pub fn log_sf(&self, x: f64) -> f64 {
        let (below, above) = self.split_log_mass(x);
        above - log_add_exp(below, above)
    }

    /// ln P(T ≤ x).
    pub fn log_cdf(&self, x: f64) -> f64 {
        let (below, above) = self.split_log_mass(x);
        below - log_add_exp(below, above)
    }

    /// E[T].
    pub fn mean(&self) -> f64 {
        let mut m = 0.0;
        for (&(l, u), &lm) in self.intervals.iter().zip(&self.log_masses) {
            let w = (lm - self.log_total).exp();
            if w > 0.0 {
                m += w * self.interval_mean(l, u, lm);
            }
        }
        m
    }

    fn interval_mean(&self, l: f64, u: f64, log_mass: f64) -> f64 {
        let (mu, s) = (self.mu, self.sigma);
        let a = (l - mu) / s;
        let b = (u - mu) / s;
        let v = match (l.is_finite(), u.is_finite()) {
            (false, false) => mu,
            (true, false) => l + s * normal::hazard_excess(a),
            (false, true) => u - s * normal::hazard_excess(-b),
            (true, true) => {
                // standardized mean (φ(a) − φ(b)) / mass
                let m = (normal::log_pdf(a) - log_mass).exp() - (normal::log_pdf(b) - log_mass).exp();
                if a >= 0.0 {
                    l + s * (m - a)
                } else if b <= 0.0 {
                    u - s * (b - m)
                } else {
                    mu + s * m
                }
            }
        };
        v.clamp(l, u)
    }

    /// The `mu` whose truncated mean equals `x`; this is the maximum
    /// likelihood estimate of the location from a single draw `x` (the
    /// family is exponential in `mu`). Reports divergence when `x` sits
    /// within `1e-12·sigma` of the edge of the support.
    pub fn mle_mu(&self, x: f64) -> Result<f64> {
        let s = self.sigma;
        if !(x.is_finite()) {
            return Err(Error::invalid("x", "must be finite"));
        }
        if x - self.support_min() <= 1e-12 * s {
            return Err(Error::DivergentMle {
                coordinate: 0,
                positive: false,
            });
        }
        if self.support_max() - x <= 1e-12 * s {
            return Err(Error::DivergentMle {
                coordinate: 0,
                positive: true,
            });
        }
        let mut g = |mu: f64| -> Result<f64> { Ok(self.with_mu(mu)?.mean() - x) };
        let g0 = g(x)?;
        if g0 == 0.0 {
            return Ok(x);
        }
        let dir = if g0 > 0.0 { -1.0 } else { 1.0 };
        match search_bracket(&mut g, x, dir, s, 1e12 * s)? {
            Bracket::Found(a, b) if a == b => Ok(a),
            Bracket::Found(a, b) => brent(&mut g, a, b, 1e-12 * s, 300),
            Bracket::Unbounded => Err(Error::DivergentMle {
                coordinate: 0,
                positive: dir > 0.0,
            }),
        }
    }

    /// Inverse of [`cdf`](Self::cdf) for `0 < q < 1`.
    pub fn quantile(&self, q: f64) -> Result<f64> {
        if !(q > 0.0 && q < 1.0) {
            return Err(Error::invalid("q", format!("{q} not in (0, 1)")));
        }
        let probs = self.interval_probabilities();
        let last = probs.len() - 1;
        let mut acc = 0.0;
        for (i, &p) in probs.iter().enumerate() {
            if q <= acc + p || i == last {
                let r = if p > 0.0 { ((q - acc) / p).clamp(0.0, 1.0) } else { 0.5 };
                return Ok(self.quantile_in(i, r));
            }
            acc += p;
        }
        unreachable!("loop returns on the last interval")
    }

    fn quantile_in(&self, i: usize, r: f64) -> f64 {
        let (l, u) = self.intervals[i];
        let a = (l - self.mu) / self.sigma;
        let b = (u - self.mu) / self.sigma;
        let z = std_interval_quantile(a, b, r);
        (self.mu + self.sigma * z).clamp(l, u)
    }

    /// One draw. Inverse-CDF in general; far single-tail intervals (beyond
    /// 6σ) use exponential-proposal rejection.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let i = if self.intervals.len() == 1 {
            0
        } else {
            let u: f64 = rng.random();
            let probs = self.interval_probabilities();
            let mut acc = 0.0;
            let mut chosen = probs.len() - 1;
            for (k, p) in probs.iter().enumerate() {
                acc += p;
                if u < acc {
                    chosen = k;
                    break;
                }
            }
            chosen
        };
        let (l, u) = self.intervals[i];
        let a = (l - self.mu) / self.sigma;
        let b = (u - self.mu) / self.sigma;
        const FAR: f64 = 6.0;
        let z = if a > FAR {
            tail_rejection(rng, a, b)
        } else if b < -FAR {
            -tail_rejection(rng, -b, -a)
        } else {
            let r: f64 = rng.random();
            std_interval_quantile(a, b, r)
        };
        (self.mu + self.sigma * z).clamp(l, u)
    }
}

/// Standard normal restricted to `[a, b]` with `a > 0` large, sampled from an
/// exponential proposal shifted to `a`.
fn tail_rejection<R: Rng + ?Sized>(rng: &mut R, a: f64, b: f64) -> f64 {
    if b.is_finite() {
        // proposal rate a, truncated to [a, b]; acceptance exp(-(x-a)²/2)
        let width = b - a;
        let tail = (-a * width).exp_m1(); // e^{-a w} - 1
        loop {
            let u: f64 = rng.random();
            let x = a - (u * tail).ln_1p() / a;
            let v: f64 = rng.random();
            if v.ln() <= -0.5 * (x - a) * (x - a) {
                return x.min(b);
            }
        }
    }
    let lambda = 0.5 * (a + (a * a + 4.0).sqrt());
    loop {
        let u: f64 = rng.random();
        let x = a - (1.0 - u).ln() / lambda;
        let v: f64 = rng.random();
        if v.ln() <= -0.5 * (x - lambda) * (x - lambda) {
            return x;
        }
    }
}

/// Sorts and merges overlapping or touching intervals, dropping empty ones.
pub fn merge_intervals(intervals: &[(f64, f64)]) -> Vec<(f64, f64)> {
    let mut v: Vec<(f64, f64)> = intervals.iter().copied().filter(|(l, u)| l < u).collect();
    v.sort_by(|x, y| x.0.total_cmp(&y.0));
    let mut out: Vec<(f64, f64)> = Vec::with_capacity(v.len());
    for (l, u) in v {
        match out.last_mut() {
            Some(last) if l <= last.1 => last.1 = last.1.max(u),
            _ => out.push((l, u)),
        }
    }
    out
}
