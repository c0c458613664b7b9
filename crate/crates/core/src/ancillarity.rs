//! Ancillarity checks on finite models `f_A(a; ψ, χ)` and their behaviour
//! under selection with probabilities `φ(ψ; a)`.
//!
//! Completeness is checked on the χ grid only, so a positive answer means
//! "grid-complete". The mode condition for M-ancillarity is checked on the
//! raw sample space: on a finite space there is no smooth reparameterization
//! to search over.

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::{Distribution, Exp1};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::replication_stream;

const RANK_TOL: f64 = 1e-10;
const SUM_TOL: f64 = 1e-12;

/// Probability tables indexed by `(ψ, χ, a)`.
#[derive(Debug, Clone, PartialEq)]
pub struct FiniteModel {
    a_space: Vec<f64>,
    psi_grid: Vec<f64>,
    chi_grid: Vec<f64>,
    table: Vec<f64>,
}

impl FiniteModel {
    /// `table[p][c]` is the law of `A` at `(ψ_p, χ_c)`.
    pub fn new(a_space: Vec<f64>, psi_grid: Vec<f64>, chi_grid: Vec<f64>, table: Vec<Vec<Vec<f64>>>) -> Result<Self> {
        let (k, c, p) = (a_space.len(), chi_grid.len(), psi_grid.len());
        if k == 0 || c == 0 || p == 0 {
            return Err(Error::invalid("table", "grids must be non-empty"));
        }
        if table.len() != p || table.iter().any(|s| s.len() != c || s.iter().any(|r| r.len() != k)) {
            return Err(Error::invalid("table", format!("expected a {p}x{c}x{k} array")));
        }
        for (pi, slab) in table.iter().enumerate() {
            for (ci, row) in slab.iter().enumerate() {
                if row.iter().any(|&v| !(v >= 0.0) || !v.is_finite()) {
                    return Err(Error::invalid(
                        "table",
                        format!("negative or non-finite entry at ({pi}, {ci})"),
                    ));
                }
                let s: f64 = row.iter().sum();
                if (s - 1.0).abs() > SUM_TOL {
                    return Err(Error::invalid("table", format!("slice ({pi}, {ci}) sums to {s}")));
                }
            }
        }
        Ok(Self {
            a_space,
            psi_grid,
            chi_grid,
            table: table.into_iter().flatten().flatten().collect(),
        })
    }

    pub fn n_a(&self) -> usize {
        self.a_space.len()
    }

    pub fn n_psi(&self) -> usize {
        self.psi_grid.len()
    }

    pub fn n_chi(&self) -> usize {
        self.chi_grid.len()
    }

    pub fn a_space(&self) -> &[f64] {
        &self.a_space
    }

    pub fn psi_grid(&self) -> &[f64] {
        &self.psi_grid
    }

    pub fn chi_grid(&self) -> &[f64] {
        &self.chi_grid
    }

    pub fn prob(&self, psi: usize, chi: usize, a: usize) -> f64 {
        self.table[(psi * self.n_chi() + chi) * self.n_a() + a]
    }

    /// Law of `A` at `(ψ_p, χ_c)`.
    pub fn row(&self, psi: usize, chi: usize) -> &[f64] {
        let k = self.n_a();
        let start = (psi * self.n_chi() + chi) * k;
        &self.table[start..start + k]
    }

    fn check_psi(&self, psi: usize) -> Result<()> {
        if psi >= self.n_psi() {
            return Err(Error::invalid(
                "psi_index",
                format!("{psi} out of range for {} values", self.n_psi()),
            ));
        }
        Ok(())
    }
}

/// Selection probabilities `φ(ψ; a)`, indexed by `(ψ, a)`.
#[derive(Debug, Clone, PartialEq)]
pub struct FiniteSelection {
    n_a: usize,
    phi: Vec<f64>,
}

impl FiniteSelection {
    pub fn new(phi: Vec<Vec<f64>>) -> Result<Self> {
        let n_a = phi.first().map_or(0, Vec::len);
        if n_a == 0 || phi.iter().any(|r| r.len() != n_a) {
            return Err(Error::invalid("phi", "expected a non-empty rectangular array"));
        }
        if phi.iter().flatten().any(|&v| !(0.0..=1.0).contains(&v)) {
            return Err(Error::invalid("phi", "entries must lie in [0, 1]"));
        }
        Ok(Self {
            n_a,
            phi: phi.into_iter().flatten().collect(),
        })
    }

    /// `φ(ψ; a) = 1` everywhere.
    pub fn identity(model: &FiniteModel) -> Self {
        Self::constant(model, 1.0)
    }

    pub fn constant(model: &FiniteModel, value: f64) -> Self {
        Self {
            n_a: model.n_a(),
            phi: vec![value; model.n_a() * model.n_psi()],
        }
    }

    pub fn n_psi(&self) -> usize {
        self.phi.len() / self.n_a
    }

    pub fn phi(&self, psi: usize, a: usize) -> f64 {
        self.phi[psi * self.n_a + a]
    }

    fn row(&self, psi: usize) -> &[f64] {
        &self.phi[psi * self.n_a..(psi + 1) * self.n_a]
    }

    pub fn is_strictly_positive(&self) -> bool {
        self.phi.iter().all(|&v| v > 0.0)
    }

    /// Whether `φ(ψ; ·)` is constant in `a` for every ψ.
    pub fn is_constant_in_a(&self) -> bool {
        (0..self.n_psi()).all(|p| {
            let r = self.row(p);
            r.iter().all(|&v| v == r[0])
        })
    }

    fn check_shape(&self, model: &FiniteModel) -> Result<()> {
        if self.n_a != model.n_a() || self.n_psi() != model.n_psi() {
            return Err(Error::invalid(
                "phi",
                format!("shape {}x{} does not match the model", self.n_psi(), self.n_a),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GReport {
    pub grid_complete: bool,
    /// Indices of `a` with positive mass for some χ.
    pub support: Vec<usize>,
    pub rank: usize,
    /// A non-zero `g` on the support with `E[g(A)] = 0` for every χ.
    pub witness: Option<Vec<f64>>,
}

/// Rank of the rows restricted to the columns where some row is positive,
/// plus a null vector when the rank is short.
fn rank_over_support(rows: &[&[f64]]) -> Result<GReport> {
    let k = rows[0].len();
    let support: Vec<usize> = (0..k).filter(|&j| rows.iter().any(|r| r[j] > 0.0)).collect();
    if support.is_empty() {
        return Err(Error::invalid("model", "empty support"));
    }
    let s = support.len();
    // pad to a square so that the SVD exposes the whole right null space
    let n = rows.len().max(s);
    let m = DMatrix::from_fn(n, s, |i, j| if i < rows.len() { rows[i][support[j]] } else { 0.0 });
    let svd = m.svd(false, true);
    let v_t = svd.v_t.as_ref().ok_or_else(|| Error::Numerical("SVD failed".into()))?;
    let top = svd.singular_values.iter().copied().fold(0.0, f64::max);
    let rank = svd.singular_values.iter().filter(|&&x| x > RANK_TOL * top).count();
    let witness = (rank < s).then(|| {
        let (idx, _) = svd
            .singular_values
            .iter()
            .enumerate()
            .min_by(|a, b| a.1.total_cmp(b.1))
            .expect("non-empty");
        let mut g = vec![0.0; k];
        for (j, &col) in support.iter().enumerate() {
            g[col] = v_t[(idx, j)];
        }
        g
    });
    Ok(GReport {
        grid_complete: rank == s,
        support,
        rank,
        witness,
    })
}

/// Whether `A` is complete for χ at `ψ_psi`, over the χ grid.
pub fn is_g_ancillary(model: &FiniteModel, psi: usize) -> Result<GReport> {
    model.check_psi(psi)?;
    let rows: Vec<&[f64]> = (0..model.n_chi()).map(|c| model.row(psi, c)).collect();
    rank_over_support(&rows)
}

/// The selective model `φ(ψ; a) f_A(a; ψ, χ) / φ(ψ, χ)`.
pub fn apply_selection(model: &FiniteModel, sel: &FiniteSelection) -> Result<FiniteModel> {
    sel.check_shape(model)?;
    let mut table = Vec::with_capacity(model.table.len());
    for p in 0..model.n_psi() {
        for c in 0..model.n_chi() {
            let w: Vec<f64> = model.row(p, c).iter().zip(sel.row(p)).map(|(f, phi)| f * phi).collect();
            let total: f64 = w.iter().sum();
            if !(total > 0.0) {
                return Err(Error::SelectionVanishes);
            }
            table.extend(w.iter().map(|v| v / total));
        }
    }
    Ok(FiniteModel { table, ..model.clone() })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Outcome {
    Preserved,
    Broken,
    HypothesisViolated,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GPreservation {
    pub outcome: Outcome,
    /// Per ψ: (base grid-complete, selective grid-complete).
    pub per_psi: Vec<(bool, bool)>,
}

/// Compares grid-completeness before and after selection for every ψ,
/// without checking that φ is positive.
pub fn compare_g_ancillarity(model: &FiniteModel, sel: &FiniteSelection) -> Result<GPreservation> {
    let selective = apply_selection(model, sel)?;
    let per_psi = (0..model.n_psi())
        .map(|p| {
            Ok((
                is_g_ancillary(model, p)?.grid_complete,
                is_g_ancillary(&selective, p)?.grid_complete,
            ))
        })
        .collect::<Result<Vec<_>>>()?;
    let outcome = if per_psi.iter().all(|(a, b)| a == b) {
        Outcome::Preserved
    } else {
        Outcome::Broken
    };
    Ok(GPreservation { outcome, per_psi })
}

/// Checks that selection with positive φ neither creates nor destroys
/// grid-completeness. Skipped when some `φ(ψ; a)` is zero.
pub fn check_g_preservation(model: &FiniteModel, sel: &FiniteSelection) -> Result<GPreservation> {
    sel.check_shape(model)?;
    if !sel.is_strictly_positive() {
        return Ok(GPreservation {
            outcome: Outcome::HypothesisViolated,
            per_psi: Vec::new(),
        });
    }
    compare_g_ancillarity(model, sel)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MReport {
    pub ancillary: bool,
    /// The first `a` that is not an approximate mode of any member.
    pub witness: Option<usize>,
}

/// Whether every `a` is an approximate mode of some `f_A(·; ψ, χ)`:
/// `f(a) > (1 − ε) max f`.
pub fn is_m_ancillary(model: &FiniteModel, psi: usize, eps: f64) -> Result<MReport> {
    model.check_psi(psi)?;
    if !(eps > 0.0 && eps < 1.0) {
        return Err(Error::invalid("eps", format!("{eps} not in (0, 1)")));
    }
    let maxima: Vec<f64> = (0..model.n_chi())
        .map(|c| model.row(psi, c).iter().copied().fold(0.0, f64::max))
        .collect();
    let witness =
        (0..model.n_a()).find(|&a| !(0..model.n_chi()).any(|c| model.prob(psi, c, a) > (1.0 - eps) * maxima[c]));
    Ok(MReport {
        ancillary: witness.is_none(),
        witness,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MPreservation {
    pub outcome: Outcome,
    /// Per ψ: the relaxed tolerance `1 − (1 − ε) min φ / max φ`.
    pub eps_prime: Vec<f64>,
    /// Per ψ: (base at ε, selective at ε′).
    pub per_psi: Vec<(bool, bool)>,
}

/// Checks that M-ancillarity at ε implies M-ancillarity of the selective
/// model at the relaxed ε′. When φ is constant in `a` the converse is
/// checked too, at ε′ = ε.
pub fn check_m_preservation(model: &FiniteModel, sel: &FiniteSelection, eps: f64) -> Result<MPreservation> {
    sel.check_shape(model)?;
    if !sel.is_strictly_positive() {
        return Ok(MPreservation {
            outcome: Outcome::HypothesisViolated,
            eps_prime: Vec::new(),
            per_psi: Vec::new(),
        });
    }
    let selective = apply_selection(model, sel)?;
    let constant = sel.is_constant_in_a();
    let mut eps_prime = Vec::with_capacity(model.n_psi());
    let mut per_psi = Vec::with_capacity(model.n_psi());
    let mut holds = true;
    for p in 0..model.n_psi() {
        let row = sel.row(p);
        let lo = row.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = row.iter().copied().fold(0.0, f64::max);
        let ep = if constant { eps } else { 1.0 - (1.0 - eps) * lo / hi };
        let base = is_m_ancillary(model, p, eps)?.ancillary;
        let after = if ep < 1.0 {
            is_m_ancillary(&selective, p, ep)?.ancillary
        } else {
            true
        };
        holds &= !base || after;
        if constant {
            holds &= base == after;
        }
        eps_prime.push(ep);
        per_psi.push((base, after));
    }
    Ok(MPreservation {
        outcome: if holds { Outcome::Preserved } else { Outcome::Broken },
        eps_prime,
        per_psi,
    })
}

/// A model where a zero selection probability hides the only coordinate on
/// which a null vector differs, so selection turns an incomplete statistic
/// into a complete one.
pub fn g_counterexample() -> (FiniteModel, FiniteSelection) {
    let model = FiniteModel::new(
        vec![1.0, 2.0, 3.0],
        vec![0.0],
        vec![0.0, 1.0],
        vec![vec![vec![0.2, 0.3, 0.5], vec![0.5, 0.3, 0.2]]],
    )
    .expect("valid table");
    let sel = FiniteSelection::new(vec![vec![1.0, 1.0, 0.0]]).expect("valid selection");
    (model, sel)
}

fn random_simplex<R: Rng + ?Sized>(rng: &mut R, k: usize) -> Vec<f64> {
    let w: Vec<f64> = (0..k).map(|_| Exp1.sample(rng)).collect();
    let s: f64 = w.iter().sum();
    w.into_iter().map(|v: f64| v / s).collect()
}

/// A random model with `K, C ≤ max_dim` and up to three ψ values; rows are
/// uniform on the simplex.
pub fn random_model<R: Rng + ?Sized>(rng: &mut R, max_dim: usize) -> FiniteModel {
    let k = rng.random_range(1..=max_dim);
    let c = rng.random_range(1..=max_dim);
    let p = rng.random_range(1..=3);
    let table = (0..p)
        .map(|_| (0..c).map(|_| random_simplex(rng, k)).collect())
        .collect();
    FiniteModel::new(
        (0..k).map(|i| i as f64).collect(),
        (0..p).map(|i| i as f64).collect(),
        (0..c).map(|i| i as f64).collect(),
        table,
    )
    .expect("simplex rows are valid")
}

/// φ drawn uniformly from `[lo, hi]`.
pub fn random_selection<R: Rng + ?Sized>(rng: &mut R, model: &FiniteModel, lo: f64, hi: f64) -> FiniteSelection {
    let phi = (0..model.n_psi())
        .map(|_| (0..model.n_a()).map(|_| rng.random_range(lo..=hi)).collect())
        .collect();
    FiniteSelection::new(phi).expect("probabilities in range")
}

/// One completeness audit instance on stream `i` of `seed`.
pub fn g_audit_instance(seed: u64, i: u64) -> Result<GPreservation> {
    let mut rng = replication_stream(seed, i);
    let model = random_model(&mut rng, 6);
    let sel = random_selection(&mut rng, &model, 0.01, 1.0);
    check_g_preservation(&model, &sel)
}

/// One mode-condition audit instance on stream `i` of `seed`, with φ in
/// `[0.5, 1]`.
pub fn m_audit_instance(seed: u64, i: u64, eps: f64) -> Result<MPreservation> {
    let mut rng = replication_stream(seed, i);
    let model = random_model(&mut rng, 6);
    let sel = random_selection(&mut rng, &model, 0.5, 1.0);
    check_m_preservation(&model, &sel, eps)
}
