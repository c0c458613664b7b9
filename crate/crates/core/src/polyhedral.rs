//! Inference for a linear target `ψ = ηᵀθ` from `Y ~ N(θ, σ² I)` after a
//! selection event `{A y ≤ b}` (or a union of such polyhedra).
//!
//! Along the line `y(τ) = z + c τ`, `c = η/‖η‖²`, `z = y − c ηᵀy`, each
//! polyhedron is an interval of `τ`, so `ηᵀY` given selection and `z` is a
//! Gaussian truncated to a union of intervals.

use nalgebra::{DMatrix, DVector};

use crate::distributions::{merge_intervals, TruncatedGaussian};
use crate::error::{Error, Result};
use crate::inference::{
    check_level, invert_pivot, Alternative, Diagnostics, InferenceResult, InversionOptions, Inverted,
};

/// Slack allowed on `A y ≤ b` when checking that the observation is feasible.
pub const FEASIBILITY_SLACK: f64 = 1e-9;

/// `{y : A y ≤ b}`.
#[derive(Debug, Clone, PartialEq)]
pub struct Polyhedron {
    a: DMatrix<f64>,
    b: DVector<f64>,
}

impl Polyhedron {
    pub fn new(a: DMatrix<f64>, b: DVector<f64>) -> Result<Self> {
        if a.nrows() != b.len() {
            return Err(Error::invalid(
                "b",
                format!("{} rows in A but {} entries in b", a.nrows(), b.len()),
            ));
        }
        if a.iter().chain(b.iter()).any(|v| v.is_nan()) {
            return Err(Error::invalid("A", "NaN entry"));
        }
        Ok(Self { a, b })
    }

    /// The whole space `R^n` (no constraints).
    pub fn unconstrained(n: usize) -> Self {
        Self {
            a: DMatrix::zeros(0, n),
            b: DVector::zeros(0),
        }
    }

    pub fn a(&self) -> &DMatrix<f64> {
        &self.a
    }

    pub fn b(&self) -> &DVector<f64> {
        &self.b
    }

    pub fn dim(&self) -> usize {
        self.a.ncols()
    }

    pub fn n_constraints(&self) -> usize {
        self.a.nrows()
    }

    /// Largest `(A y − b)_j`, or `−∞` with no rows.
    pub fn max_violation(&self, y: &DVector<f64>) -> f64 {
        (&self.a * y - &self.b)
            .iter()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn contains(&self, y: &DVector<f64>) -> bool {
        self.max_violation(y) <= FEASIBILITY_SLACK
    }

    fn check_dim(&self, n: usize) -> Result<()> {
        if self.dim() == n {
            Ok(())
        } else {
            Err(Error::invalid(
                "y",
                format!("polyhedron lives in R^{} but y has {n} entries", self.dim()),
            ))
        }
    }

    /// `{τ : A(z + c τ) ≤ b}` as an interval, `None` when empty.
    fn line_interval(&self, z: &DVector<f64>, c: &DVector<f64>) -> Option<(f64, f64)> {
        let ac = &self.a * c;
        let az = &self.a * z;
        let mut lo = f64::NEG_INFINITY;
        let mut hi = f64::INFINITY;
        for j in 0..self.a.nrows() {
            let slack = self.b[j] - az[j];
            let row_scale = self.a.row(j).norm() * c.norm();
            if ac[j].abs() <= 1e-12 * row_scale {
                if slack < -FEASIBILITY_SLACK {
                    return None;
                }
            } else if ac[j] > 0.0 {
                hi = hi.min(slack / ac[j]);
            } else {
                lo = lo.max(slack / ac[j]);
            }
        }
        (lo < hi).then_some((lo, hi))
    }
}

/// `ψ = ηᵀθ`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearTarget {
    eta: DVector<f64>,
}

impl LinearTarget {
    pub fn new(eta: DVector<f64>) -> Result<Self> {
        let norm = eta.norm();
        if !(norm > 0.0 && norm.is_finite()) {
            return Err(Error::invalid("eta", "must be a finite nonzero vector"));
        }
        Ok(Self { eta })
    }

    pub fn eta(&self) -> &DVector<f64> {
        &self.eta
    }

    pub fn norm_sq(&self) -> f64 {
        self.eta.norm_squared()
    }

    pub fn statistic(&self, y: &DVector<f64>) -> f64 {
        self.eta.dot(y)
    }

    /// `(z, c)` with `y = z + c ηᵀy` and `ηᵀz = 0`.
    fn decompose(&self, y: &DVector<f64>) -> (DVector<f64>, DVector<f64>) {
        let c = &self.eta / self.norm_sq();
        let z = y - &c * self.statistic(y);
        (z, c)
    }
}

/// Numerical rank with tolerance `1e-10` relative to the largest singular value.
pub fn numerical_rank(m: &DMatrix<f64>) -> usize {
    if m.nrows() == 0 || m.ncols() == 0 {
        return 0;
    }
    let sv = m.singular_values();
    let top = sv.iter().copied().fold(0.0, f64::max);
    if top == 0.0 {
        return 0;
    }
    sv.iter().filter(|&&s| s > 1e-10 * top).count()
}

/// The target whose value is coefficient `j` of the projection of the mean
/// onto the columns `s` of `x`: `η = row j of (X_sᵀX_s)⁻¹X_sᵀ`.
pub fn projection_target(x: &DMatrix<f64>, s: &[usize], j: usize) -> Result<LinearTarget> {
    if s.is_empty() {
        return Err(Error::NoSelection);
    }
    if j >= s.len() {
        return Err(Error::invalid(
            "j",
            format!("{j} out of range for {} selected columns", s.len()),
        ));
    }
    if let Some(&bad) = s.iter().find(|&&k| k >= x.ncols()) {
        return Err(Error::invalid("s", format!("column {bad} out of range")));
    }
    let xs = x.select_columns(s);
    let rank = numerical_rank(&xs);
    if rank < s.len() {
        return Err(Error::RankDeficient { rank, cols: s.len() });
    }
    let gram = xs.transpose() * &xs;
    let chol = gram.cholesky().ok_or(Error::RankDeficient { rank, cols: s.len() })?;
    // η = X_s (X_sᵀX_s)⁻¹ e_j
    let mut e = DVector::zeros(s.len());
    e[j] = 1.0;
    let w = chol.solve(&e);
    LinearTarget::new(xs * w)
}

/// `[V⁻, V⁺]`: the values of `ηᵀy` compatible with `poly` when the part of
/// `y` orthogonal to `η` is held fixed.
pub fn truncation_bounds(poly: &Polyhedron, target: &LinearTarget, y: &DVector<f64>) -> Result<(f64, f64)> {
    poly.check_dim(y.len())?;
    target_dim(target, y)?;
    let violation = poly.max_violation(y);
    if violation > FEASIBILITY_SLACK {
        return Err(Error::Infeasible { violation });
    }
    let (z, c) = target.decompose(y);
    let t = target.statistic(y);
    let (lo, hi) = poly.line_interval(&z, &c).ok_or(Error::EmptyAlongTarget)?;
    // slack-feasible observations can sit a rounding error outside
    Ok((lo.min(t), hi.max(t)))
}

fn target_dim(target: &LinearTarget, y: &DVector<f64>) -> Result<()> {
    if target.eta.len() == y.len() {
        Ok(())
    } else {
        Err(Error::invalid(
            "eta",
            format!("length {} but y has {}", target.eta.len(), y.len()),
        ))
    }
}

/// Truncation set of `ηᵀY` for a union of polyhedra: the merged union of
/// each polyhedron's interval along the target line.
pub fn union_truncation(polys: &[Polyhedron], target: &LinearTarget, y: &DVector<f64>) -> Result<Vec<(f64, f64)>> {
    if polys.is_empty() {
        return Err(Error::invalid("polys", "empty union"));
    }
    target_dim(target, y)?;
    let (z, c) = target.decompose(y);
    let t = target.statistic(y);
    let mut feasible = false;
    let mut pieces = Vec::new();
    for p in polys {
        p.check_dim(y.len())?;
        if p.contains(y) {
            feasible = true;
            let (lo, hi) = p.line_interval(&z, &c).ok_or(Error::EmptyAlongTarget)?;
            pieces.push((lo.min(t), hi.max(t)));
        } else if let Some(iv) = p.line_interval(&z, &c) {
            pieces.push(iv);
        }
    }
    if !feasible {
        let violation = polys.iter().map(|p| p.max_violation(y)).fold(f64::INFINITY, f64::min);
        return Err(Error::Infeasible { violation });
    }
    Ok(merge_intervals(&pieces))
}

fn law(
    polys: &[Polyhedron],
    target: &LinearTarget,
    y: &DVector<f64>,
    sigma2: f64,
    mean: f64,
) -> Result<TruncatedGaussian> {
    if !(sigma2 > 0.0 && sigma2.is_finite()) {
        return Err(Error::invalid("sigma2", format!("{sigma2} must be positive")));
    }
    let intervals = union_truncation(polys, target, y)?;
    TruncatedGaussian::new(mean, (sigma2 * target.norm_sq()).sqrt(), intervals)
}

/// p-value for `ψ = psi0` from the truncated law of `ηᵀY`.
pub fn selective_pvalue_linear(
    polys: &[Polyhedron],
    target: &LinearTarget,
    y: &DVector<f64>,
    sigma2: f64,
    psi0: f64,
    alternative: Alternative,
) -> Result<f64> {
    let tg = law(polys, target, y, sigma2, psi0)?;
    let (c, s) = tg.cdf_sf(target.statistic(y));
    Ok(alternative.pvalue(c, s))
}

/// Equal-tailed interval for `ψ` by inverting the truncated-Gaussian CDF.
pub fn selective_ci_linear(
    polys: &[Polyhedron],
    target: &LinearTarget,
    y: &DVector<f64>,
    sigma2: f64,
    level: f64,
) -> Result<Inverted> {
    check_level(level)?;
    let t = target.statistic(y);
    let tg = law(polys, target, y, sigma2, t)?;
    let pivot = |psi: f64| Ok(tg.with_mu(psi)?.cdf_sf(t));
    invert_pivot(pivot, &InversionOptions::new(level, t, tg.sigma()))
}

/// MLE, interval and p-value for `ψ` in one record.
pub fn infer_linear(
    polys: &[Polyhedron],
    target: &LinearTarget,
    y: &DVector<f64>,
    sigma2: f64,
    level: f64,
    psi0: f64,
    alternative: Alternative,
) -> Result<InferenceResult> {
    let t = target.statistic(y);
    let tg = law(polys, target, y, sigma2, t)?;
    let mut diagnostics = Diagnostics::with_normalizer("closed-form");
    let estimate = match tg.mle_mu(t) {
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
    let inv = selective_ci_linear(polys, target, y, sigma2, level)?;
    diagnostics.unbounded_lower = inv.unbounded_lower;
    diagnostics.unbounded_upper = inv.unbounded_upper;
    let (c, s) = tg.with_mu(psi0)?.cdf_sf(t);
    Ok(InferenceResult {
        estimate,
        ci: inv.interval,
        pvalue: alternative.pvalue(c, s),
        model_kind: "polyhedral".into(),
        diagnostics,
    })
}

/// Outcome of marginal screening: the selected columns, the signs of their
/// scores, and the polyhedron of responses giving the same selection with
/// the same signs.
#[derive(Debug, Clone, PartialEq)]
pub struct Screening {
    pub selected: Vec<usize>,
    pub signs: Vec<f64>,
    pub polyhedron: Polyhedron,
}

fn check_normalized(x: &DMatrix<f64>) -> Result<()> {
    for (j, col) in x.column_iter().enumerate() {
        if (col.norm() - 1.0).abs() > 1e-8 {
            return Err(Error::invalid(
                "x",
                format!("column {j} has norm {}, expected 1", col.norm()),
            ));
        }
    }
    Ok(())
}

/// Selects `{j : |x_jᵀy| > threshold}`. Returns [`Error::NoSelection`] when
/// nothing passes.
pub fn marginal_screening_event(x: &DMatrix<f64>, y: &DVector<f64>, threshold: f64) -> Result<Screening> {
    if x.nrows() != y.len() {
        return Err(Error::invalid(
            "y",
            format!("x has {} rows but y has {} entries", x.nrows(), y.len()),
        ));
    }
    if !(threshold >= 0.0) {
        return Err(Error::invalid("threshold", "must be nonnegative"));
    }
    check_normalized(x)?;
    let scores = x.transpose() * y;
    let selected: Vec<usize> = (0..x.ncols()).filter(|&j| scores[j].abs() > threshold).collect();
    if selected.is_empty() {
        return Err(Error::NoSelection);
    }
    let signs: Vec<f64> = selected.iter().map(|&j| scores[j].signum()).collect();
    let polyhedron = screening_polyhedron(x, &selected, &signs, threshold);
    Ok(Screening {
        selected,
        signs,
        polyhedron,
    })
}

impl Screening {
    /// `{ỹ : screening selects exactly these columns}`, any signs: one
    /// polyhedron per sign pattern.
    pub fn event_union(&self, x: &DMatrix<f64>, threshold: f64) -> Result<Vec<Polyhedron>> {
        let k = self.selected.len();
        if k > 16 {
            return Err(Error::invalid(
                "selected",
                format!("{k} columns give too many sign patterns"),
            ));
        }
        Ok((0..1usize << k)
            .map(|mask| {
                let signs: Vec<f64> = (0..k).map(|i| if mask >> i & 1 == 1 { -1.0 } else { 1.0 }).collect();
                screening_polyhedron(x, &self.selected, &signs, threshold)
            })
            .collect())
    }
}

fn screening_polyhedron(x: &DMatrix<f64>, selected: &[usize], signs: &[f64], threshold: f64) -> Polyhedron {
    let n = x.nrows();
    let p = x.ncols();
    let n_rows = selected.len() + 2 * (p - selected.len());
    let mut a = DMatrix::zeros(n_rows, n);
    let mut b = DVector::zeros(n_rows);
    let mut r = 0;
    for j in 0..p {
        let col = x.column(j);
        if let Some(pos) = selected.iter().position(|&k| k == j) {
            // signs_j x_jᵀy ≥ threshold
            a.row_mut(r).copy_from(&(-signs[pos] * col.transpose()));
            b[r] = -threshold;
            r += 1;
        } else {
            a.row_mut(r).copy_from(&col.transpose());
            b[r] = threshold;
            a.row_mut(r + 1).copy_from(&(-col.transpose()));
            b[r + 1] = threshold;
            r += 2;
        }
    }
    Polyhedron { a, b }
}
