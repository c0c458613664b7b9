use std::fmt;
use std::sync::Arc;

use crate::distributions::normal;
use crate::error::{Error, Result};

pub type SelectionEval = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;
pub type ReducedEval = Arc<dyn Fn(f64, &[f64]) -> f64 + Send + Sync>;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SelectionKind {
    Deterministic,
    Randomized,
}

/// `y ↦ p(y)`, the probability that data `y` get selected.
#[derive(Clone)]
pub struct SelectionFunction {
    kind: SelectionKind,
    eval: SelectionEval,
    reduced: Option<ReducedEval>,
    breakpoints: Vec<f64>,
    statistic_only: bool,
}

impl fmt::Debug for SelectionFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SelectionFunction")
            .field("kind", &self.kind)
            .field("reduced", &self.reduced.is_some())
            .field("breakpoints", &self.breakpoints)
            .field("statistic_only", &self.statistic_only)
            .finish()
    }
}

fn mean(y: &[f64]) -> f64 {
    y.iter().sum::<f64>() / y.len() as f64
}

impl SelectionFunction {
    /// Everything is selected.
    pub fn always() -> Self {
        Self::deterministic(|_| true)
            .with_reduced(|_, _| 1.0)
            .through_statistic()
    }

    pub fn deterministic<F: Fn(&[f64]) -> bool + Send + Sync + 'static>(pred: F) -> Self {
        Self {
            kind: SelectionKind::Deterministic,
            eval: Arc::new(move |y| if pred(y) { 1.0 } else { 0.0 }),
            reduced: None,
            breakpoints: Vec::new(),
            statistic_only: false,
        }
    }

    pub fn randomized<F: Fn(&[f64]) -> f64 + Send + Sync + 'static>(p: F) -> Self {
        Self {
            kind: SelectionKind::Randomized,
            eval: Arc::new(p),
            reduced: None,
            breakpoints: Vec::new(),
            statistic_only: false,
        }
    }

    /// Attaches `p(t, a)` expressed through the sufficient pair of the family.
    pub fn with_reduced<F: Fn(f64, &[f64]) -> f64 + Send + Sync + 'static>(mut self, p: F) -> Self {
        self.reduced = Some(Arc::new(p));
        self
    }

    /// Declares that `p` depends on `y` only through the family's scalar
    /// statistic, so the reduced form ignores `a`. Requires a reduced form.
    pub fn through_statistic(mut self) -> Self {
        self.statistic_only = self.reduced.is_some();
        self
    }

    pub fn depends_only_on_statistic(&self) -> bool {
        self.statistic_only
    }

    /// Points where a 1-D `p` is discontinuous; quadrature splits there.
    pub fn with_breakpoints(mut self, points: Vec<f64>) -> Self {
        self.breakpoints = points;
        self
    }

    /// `1{ȳ > c}`.
    pub fn mean_above(c: f64) -> Self {
        Self::deterministic(move |y| mean(y) > c)
            .with_reduced(move |t, _| if t > c { 1.0 } else { 0.0 })
            .through_statistic()
            .with_breakpoints(vec![c])
    }

    /// `1{|ȳ| > c}`.
    pub fn abs_mean_above(c: f64) -> Self {
        Self::deterministic(move |y| mean(y).abs() > c)
            .with_reduced(move |t, _| if t.abs() > c { 1.0 } else { 0.0 })
            .through_statistic()
            .with_breakpoints(vec![-c, c])
    }

    /// `P(ȳ + W > threshold)` with `W ~ N(0, scale²)`.
    pub fn randomized_mean_above(threshold: f64, scale: f64) -> Result<Self> {
        randomized_selection_prob(0.0, threshold, scale)?;
        Ok(Self::randomized(move |y| normal::cdf((mean(y) - threshold) / scale))
            .with_reduced(move |t, _| normal::cdf((t - threshold) / scale))
            .through_statistic())
    }

    pub fn kind(&self) -> SelectionKind {
        self.kind
    }

    pub fn has_reduced(&self) -> bool {
        self.reduced.is_some()
    }

    pub fn breakpoints(&self) -> &[f64] {
        &self.breakpoints
    }

    /// Unchecked `p(y)`; non-finite values are mapped to 0.
    pub(crate) fn raw(&self, y: &[f64]) -> f64 {
        let p = (self.eval)(y);
        if p.is_finite() {
            p
        } else {
            0.0
        }
    }

    /// `p(y)`, validated against the kind's range.
    pub fn prob(&self, y: &[f64]) -> Result<f64> {
        self.check((self.eval)(y))
    }

    pub fn reduced_prob(&self, t: f64, a: &[f64]) -> Result<f64> {
        let r = self
            .reduced
            .as_ref()
            .ok_or_else(|| Error::invalid("selection", "no reduced form p(t, a) registered"))?;
        self.check(r(t, a))
    }

    /// The 1-D selection `t ↦ p(t, a)` at a fixed ancillary value.
    pub fn at_ancillary(&self, a: &[f64]) -> Result<Self> {
        let r = self
            .reduced
            .clone()
            .ok_or_else(|| Error::invalid("selection", "no reduced form p(t, a) registered"))?;
        let a = a.to_vec();
        let a2 = a.clone();
        let r2 = r.clone();
        Ok(Self {
            kind: self.kind,
            eval: Arc::new(move |y| r(y[0], &a)),
            reduced: Some(Arc::new(move |t, _| r2(t, &a2))),
            breakpoints: self.breakpoints.clone(),
            statistic_only: true,
        })
    }

    fn check(&self, p: f64) -> Result<f64> {
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::invalid("selection", format!("p = {p} outside [0, 1]")));
        }
        if self.kind == SelectionKind::Deterministic && p != 0.0 && p != 1.0 {
            return Err(Error::invalid(
                "selection",
                format!("deterministic selection returned {p}"),
            ));
        }
        Ok(p)
    }
}

/// `Φ((t_stat − threshold)/noise_scale)`: the chance that `t_stat + W`
/// clears `threshold` when `W ~ N(0, noise_scale²)`.
pub fn randomized_selection_prob(t_stat: f64, threshold: f64, noise_scale: f64) -> Result<f64> {
    if !(noise_scale > 0.0) || !noise_scale.is_finite() {
        return Err(Error::invalid(
            "noise_scale",
            format!("{noise_scale} must be positive and finite"),
        ));
    }
    Ok(normal::cdf((t_stat - threshold) / noise_scale))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn randomized_probability_values() {
        assert_eq!(randomized_selection_prob(1.3, 1.3, 2.0).unwrap(), 0.5);
        assert!((randomized_selection_prob(1.0, 0.0, 1.0).unwrap() - 0.841_344_746_068_542_9).abs() < 1e-15);
        assert_eq!(randomized_selection_prob(0.1, 0.0, 1e-8).unwrap(), 1.0);
        assert_eq!(randomized_selection_prob(-0.1, 0.0, 1e-8).unwrap(), 0.0);
        assert!(randomized_selection_prob(0.0, 0.0, 0.0).is_err());
        assert!(randomized_selection_prob(0.0, 0.0, -1.0).is_err());
    }

    #[test]
    fn deterministic_range_is_enforced() {
        let bad = SelectionFunction {
            kind: SelectionKind::Deterministic,
            eval: Arc::new(|_| 0.5),
            reduced: None,
            breakpoints: vec![],
            statistic_only: false,
        };
        assert!(bad.prob(&[0.0]).is_err());
        let s = SelectionFunction::mean_above(1.0);
        assert_eq!(s.prob(&[2.0]).unwrap(), 1.0);
        assert_eq!(s.prob(&[0.0, 1.0]).unwrap(), 0.0);
        assert_eq!(s.reduced_prob(1.5, &[]).unwrap(), 1.0);
    }

    #[test]
    fn randomized_out_of_range_is_rejected() {
        let s = SelectionFunction::randomized(|y| y[0]);
        assert!(s.prob(&[1.5]).is_err());
        assert_eq!(s.prob(&[0.25]).unwrap(), 0.25);
    }
}
