//! Guaranteed two-sided bounds `c̲ vᵀMv ≤ vᵀAv ≤ c̄ vᵀMv` for the block
//! preconditioners, their classical counterparts, and a brute-force
//! per-element oracle.

use std::collections::HashMap;

use nalgebra::{DMatrix, SymmetricEigen};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::fem::CoefficientField;
use crate::operator::PreconditionerKind;
use crate::orthopoly::{d_sequence, h_extremes_from_d, max_root, Family};
use crate::stochastic_basis::{
    assemble_g, assemble_g_tilde, IndexSetKind, MultiIndexSet, SplitVariant,
};

/// Largest `N_P` for which the oracle runs dense eigensolves.
pub const ORACLE_CAP: usize = 2000;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BoundKind {
    MeanBased,
    Truncated,
    SplittingTp,
    SplittingComplete,
}

impl BoundKind {
    pub fn is_splitting(&self) -> bool {
        matches!(self, BoundKind::SplittingTp | BoundKind::SplittingComplete)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ClassicalBounds {
    pub c_lower: f64,
    pub c_upper: f64,
    /// `c̄/c̲`, or `+∞` when `c̲ ≤ 0`.
    pub kappa_bound: f64,
    pub vacuous: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SpectralBounds {
    pub kind: BoundKind,
    pub c_lower: f64,
    pub c_upper: f64,
    /// `c̄/c̲`, or `+∞` when `c̲ ≤ 0`.
    pub kappa_bound: f64,
    /// `c̲ ≤ 0`: the lower bound carries no information.
    pub vacuous: bool,
    pub cbs_gamma: Option<f64>,
    pub gs2_kappa_bound: Option<f64>,
    pub t_arg: Option<usize>,
    pub classical: Option<ClassicalBounds>,
}

fn ratio(lo: f64, hi: f64) -> (f64, bool) {
    if lo > 0.0 {
        (hi / lo, false)
    } else {
        (f64::INFINITY, true)
    }
}

impl SpectralBounds {
    fn new(kind: BoundKind, c_lower: f64, c_upper: f64) -> Self {
        let (kappa_bound, vacuous) = ratio(c_lower, c_upper);
        SpectralBounds {
            kind,
            c_lower,
            c_upper,
            kappa_bound,
            vacuous,
            cbs_gamma: None,
            gs2_kappa_bound: None,
            t_arg: None,
            classical: None,
        }
    }

    pub fn with_classical(mut self, c: ClassicalBounds) -> Self {
        self.classical = Some(c);
        self
    }
}

fn symmetric(kind: BoundKind, family: Family, s: usize, mu: f64) -> Result<SpectralBounds> {
    if !(mu >= 0.0) {
        return Err(Error::Domain(format!("mu must be >= 0, got {mu}")));
    }
    let l = max_root(family, s)?;
    Ok(SpectralBounds::new(kind, 1.0 - mu * l, 1.0 + mu * l))
}

/// `1 ∓ μ λ_max(ψ_s)` with `s` the largest degree count of the basis.
pub fn mean_based_bounds(family: Family, set: &IndexSetKind, mu: f64) -> Result<SpectralBounds> {
    symmetric(BoundKind::MeanBased, family, set.max_degree_count(), mu)
}

/// Same formula with `μ_class`; vacuous once `μ_class λ_max ≥ 1`.
pub fn classical_bounds(family: Family, set: &IndexSetKind, mu_class: f64) -> Result<ClassicalBounds> {
    let b = symmetric(BoundKind::MeanBased, family, set.max_degree_count(), mu_class)?;
    Ok(ClassicalBounds {
        c_lower: b.c_lower,
        c_upper: b.c_upper,
        kappa_bound: b.kappa_bound,
        vacuous: b.vacuous,
    })
}

/// Dropping the last expansion term: `1 ∓ μ λ_max(ψ_{s_K})`.
pub fn truncated_bounds(family: Family, s_k: usize, mu: f64) -> Result<SpectralBounds> {
    symmetric(BoundKind::Truncated, family, s_k, mu)
}

fn splitting_from_d(kind: BoundKind, d: f64, t: usize) -> SpectralBounds {
    let (lo, hi) = h_extremes_from_d(d);
    let mut b = SpectralBounds::new(kind, lo, hi);
    b.t_arg = Some(t);
    b.cbs_gamma = Some(hi - 1.0);
    b.gs2_kappa_bound = Some(1.0 / d);
    b
}

/// Extremes of `H_{s_K}`.
pub fn splitting_bounds_tp(family: Family, s_k: usize, mu: f64) -> Result<SpectralBounds> {
    let d = d_sequence(family, mu, s_k)?;
    Ok(splitting_from_d(BoundKind::SplittingTp, d.last(), s_k))
}

/// Extremes over `H_1 … H_s`; `t_arg` is the first `t` minimizing `d_t`.
pub fn splitting_bounds_complete(family: Family, s: usize, mu: f64) -> Result<SpectralBounds> {
    let d = d_sequence(family, mu, s)?;
    let (mut t_arg, mut d_min) = (1, d.d(1));
    for t in 2..=s {
        if d.d(t) < d_min {
            d_min = d.d(t);
            t_arg = t;
        }
    }
    Ok(splitting_from_d(BoundKind::SplittingComplete, d_min, t_arg))
}

/// Fills the CBS constant `γ = c̄ − 1` and the two-block Gauss–Seidel bound
/// `1/(1 − γ²)`.
pub fn cbs_and_gs2(bounds: &SpectralBounds) -> Result<SpectralBounds> {
    if !bounds.kind.is_splitting() {
        return Err(Error::Usage(format!(
            "CBS constants are defined for splitting bounds, not {:?}",
            bounds.kind
        )));
    }
    let gamma = bounds.c_upper - 1.0;
    let mut out = bounds.clone();
    out.cbs_gamma = Some(gamma);
    out.gs2_kappa_bound = Some(1.0 / (1.0 - gamma * gamma));
    Ok(out)
}

/// Analytic bounds for the preconditioner `kind` on `set`.
pub fn bounds_for(
    kind: PreconditionerKind,
    family: Family,
    set: &IndexSetKind,
    mu: f64,
) -> Result<SpectralBounds> {
    match (kind, set) {
        (PreconditionerKind::MeanBased, _) => mean_based_bounds(family, set, mu),
        (PreconditionerKind::TruncatedTp, IndexSetKind::TensorProduct(s)) => {
            truncated_bounds(family, *s.last().unwrap(), mu)
        }
        (
            PreconditionerKind::SplittingTp | PreconditionerKind::GaussSeidel2,
            IndexSetKind::TensorProduct(s),
        ) => splitting_bounds_tp(family, *s.last().unwrap(), mu),
        (
            PreconditionerKind::SplittingComplete | PreconditionerKind::GaussSeidel2,
            IndexSetKind::Complete { s, .. },
        ) => splitting_bounds_complete(family, *s, mu),
        _ => Err(Error::Usage(format!(
            "no bound for preconditioner '{}' on this basis",
            kind.name()
        ))),
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct OracleResult {
    pub c_lower: f64,
    pub c_upper: f64,
    /// Elements attaining the extremes.
    pub argmin: usize,
    pub argmax: usize,
}

/// Sharp per-element constants: extreme eigenvalues of the pencils
/// `(Σ a_k G_k, Σ ã_k G̃_k)` over all elements.
pub fn element_equivalence_oracle(
    family: Family,
    set: &MultiIndexSet,
    field: &CoefficientField,
    kind: PreconditionerKind,
) -> Result<OracleResult> {
    let np = set.len();
    if np > ORACLE_CAP {
        return Err(Error::SizeLimit {
            what: "N_P for the element oracle",
            size: np,
            cap: ORACLE_CAP,
        });
    }
    if field.k() != set.num_vars() {
        return Err(Error::Usage(format!(
            "field has K = {}, basis has {} variables",
            field.k(),
            set.num_vars()
        )));
    }
    if !kind.applies_to(set.kind()) || kind == PreconditionerKind::GaussSeidel2 {
        return Err(Error::Usage(format!(
            "the element oracle covers block-diagonal preconditioners only, not '{}'",
            kind.name()
        )));
    }
    let kk = field.k();
    let dense = |m: &crate::sparse::CsrMatrix| DMatrix::from_fn(np, np, |i, j| m.get(i, j));
    let g: Vec<DMatrix<f64>> = (0..=kk)
        .map(|k| Ok(dense(&assemble_g(family, set, k)?.matrix)))
        .collect::<Result<_>>()?;
    // (G̃_k, keep a_k) per kind.
    let gt: Vec<Option<DMatrix<f64>>> = (0..=kk)
        .map(|k| -> Result<Option<DMatrix<f64>>> {
            Ok(match kind {
                PreconditionerKind::MeanBased => (k == 0).then(|| g[0].clone()),
                PreconditionerKind::TruncatedTp => (k < kk).then(|| g[k].clone()),
                PreconditionerKind::SplittingTp if k == kk => Some(dense(
                    &assemble_g_tilde(family, set, k, SplitVariant::SplitTp)?.matrix,
                )),
                PreconditionerKind::SplittingComplete if k > 0 => Some(dense(
                    &assemble_g_tilde(family, set, k, SplitVariant::SplitComplete)?.matrix,
                )),
                _ => Some(g[k].clone()),
            })
        })
        .collect::<Result<_>>()?;

    // Elements with identical coefficient columns share one eigensolve.
    let mut unique: Vec<Vec<f64>> = Vec::new();
    let mut first_elem: Vec<usize> = Vec::new();
    let mut seen: HashMap<Vec<u64>, usize> = HashMap::new();
    let mut which = Vec::with_capacity(field.num_elements());
    for j in 0..field.num_elements() {
        let col = field.column(j);
        let key: Vec<u64> = col.iter().map(|v| v.to_bits()).collect();
        let id = *seen.entry(key).or_insert_with(|| {
            unique.push(col);
            first_elem.push(j);
            unique.len() - 1
        });
        which.push(id);
    }

    let extremes: Vec<Result<(f64, f64)>> = unique
        .par_iter()
        .zip(first_elem.par_iter())
        .map(|(a, &elem)| {
            let mut x = DMatrix::zeros(np, np);
            let mut y = DMatrix::zeros(np, np);
            for k in 0..=kk {
                x += &g[k] * a[k];
                if let Some(t) = &gt[k] {
                    y += t * a[k];
                }
            }
            let chol = nalgebra::Cholesky::new(y).ok_or(Error::SingularElement { element: elem })?;
            let linv = chol
                .l()
                .try_inverse()
                .ok_or(Error::SingularElement { element: elem })?;
            let c = &linv * x * linv.transpose();
            let c = (&c + c.transpose()) * 0.5;
            let ev = SymmetricEigen::new(c).eigenvalues;
            let lo = ev.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = ev.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            Ok((lo, hi))
        })
        .collect();
    let extremes: Vec<(f64, f64)> = extremes.into_iter().collect::<Result<_>>()?;

    let mut out = OracleResult {
        c_lower: f64::INFINITY,
        c_upper: f64::NEG_INFINITY,
        argmin: 0,
        argmax: 0,
    };
    for (j, &u) in which.iter().enumerate() {
        let (lo, hi) = extremes[u];
        if lo < out.c_lower {
            out.c_lower = lo;
            out.argmin = j;
        }
        if hi > out.c_upper {
            out.c_upper = hi;
            out.argmax = j;
        }
    }
    Ok(out)
}

/// `H_s = (I ± μ diag(G_{s−1}, 0))⁻¹ (I ± μ G_s)` as a dense matrix pencil
/// `(I ± μ G_s, I ± μ diag(G_{s−1}, 0))`; returns its eigenvalues ascending.
pub fn h_matrix_eigenvalues(family: Family, mu: f64, s: usize, sign: f64) -> Result<Vec<f64>> {
    let set = MultiIndexSet::complete(1, s)?;
    let g = assemble_g(family, &set, 1)?.matrix;
    let a = DMatrix::from_fn(s, s, |i, j| {
        let id = if i == j { 1.0 } else { 0.0 };
        id + sign * mu * g.get(i, j)
    });
    let m = DMatrix::from_fn(s, s, |i, j| {
        let id = if i == j { 1.0 } else { 0.0 };
        let gij = if i + 1 < s && j + 1 < s { g.get(i, j) } else { 0.0 };
        id + sign * mu * gij
    });
    crate::eigsolve::generalized_eigenvalues(&a, &m)
}
