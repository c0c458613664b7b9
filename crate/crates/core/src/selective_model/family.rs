use std::sync::Arc;

use rand::RngCore;
use rand_distr::{Distribution, StandardNormal};

use crate::distributions::normal;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub enum Support {
    Continuous,
    /// Every possible data vector, enumerated.
    Discrete(Vec<Vec<f64>>),
}

/// A parametric family `{f(y; θ) : θ ∈ Θ}` with `Θ` a box.
pub trait ParametricFamily: Send + Sync {
    /// Number of parameters.
    fn dim(&self) -> usize;

    /// Length of one data vector.
    fn data_len(&self) -> usize;

    fn log_density(&self, y: &[f64], theta: &[f64]) -> f64;

    fn sample(&self, theta: &[f64], rng: &mut dyn RngCore) -> Vec<f64>;

    fn param_bounds(&self) -> Vec<(f64, f64)>;

    fn support(&self) -> Support {
        Support::Continuous
    }

    /// Scalar statistic used for tests and intervals (defaults to `y[0]`).
    fn statistic(&self, y: &[f64]) -> f64 {
        y[0]
    }

    /// Sufficient split `y ↦ (t, a)` with `a` ancillary, when available.
    fn reduce(&self, _y: &[f64]) -> Option<(f64, Vec<f64>)> {
        None
    }

    /// The one-dimensional family of `T | A = a`, data `[t]`.
    fn conditional_family(&self, _a: &[f64]) -> Option<Arc<dyn ParametricFamily>> {
        None
    }

    /// The marginal family of the statistic, data `[t]`.
    fn statistic_family(&self) -> Option<Arc<dyn ParametricFamily>> {
        None
    }

    /// Rough centre of the statistic's distribution under `θ`.
    fn center(&self, theta: &[f64]) -> f64 {
        theta[0]
    }

    /// Rough spread of the statistic.
    fn scale(&self) -> f64 {
        1.0
    }

    fn initial_guess(&self, y: &[f64]) -> Vec<f64>;
}

/// `Y_1..Y_n` i.i.d. `N(θ, σ²)` with `σ` known.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaussianMean {
    n: usize,
    sigma: f64,
}

impl GaussianMean {
    pub fn new(n: usize, sigma: f64) -> Result<Self> {
        if n == 0 {
            return Err(Error::invalid("n", "need at least one observation"));
        }
        if !(sigma > 0.0 && sigma.is_finite()) {
            return Err(Error::invalid("sigma", format!("{sigma} must be positive")));
        }
        Ok(Self { n, sigma })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    fn sd_of_mean(&self) -> f64 {
        self.sigma / (self.n as f64).sqrt()
    }
}

impl ParametricFamily for GaussianMean {
    fn dim(&self) -> usize {
        1
    }

    fn data_len(&self) -> usize {
        self.n
    }

    fn log_density(&self, y: &[f64], theta: &[f64]) -> f64 {
        let ls = self.sigma.ln();
        y.iter()
            .map(|&v| normal::log_pdf((v - theta[0]) / self.sigma) - ls)
            .sum()
    }

    fn sample(&self, theta: &[f64], rng: &mut dyn RngCore) -> Vec<f64> {
        (0..self.n)
            .map(|_| {
                let z: f64 = StandardNormal.sample(rng);
                theta[0] + self.sigma * z
            })
            .collect()
    }

    fn param_bounds(&self) -> Vec<(f64, f64)> {
        vec![(-1e6 * self.sigma, 1e6 * self.sigma)]
    }

    fn statistic(&self, y: &[f64]) -> f64 {
        y.iter().sum::<f64>() / y.len() as f64
    }

    fn reduce(&self, y: &[f64]) -> Option<(f64, Vec<f64>)> {
        let t = self.statistic(y);
        Some((t, y.iter().map(|v| v - t).collect()))
    }

    fn conditional_family(&self, _a: &[f64]) -> Option<Arc<dyn ParametricFamily>> {
        // The mean is independent of the residuals.
        Some(Arc::new(GaussianMean {
            n: 1,
            sigma: self.sd_of_mean(),
        }))
    }

    fn statistic_family(&self) -> Option<Arc<dyn ParametricFamily>> {
        Some(Arc::new(GaussianMean {
            n: 1,
            sigma: self.sd_of_mean(),
        }))
    }

    fn scale(&self) -> f64 {
        self.sd_of_mean()
    }

    fn initial_guess(&self, y: &[f64]) -> Vec<f64> {
        vec![self.statistic(y)]
    }
}
