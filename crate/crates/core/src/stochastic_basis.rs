//! Multi-index sets for tensor-product and complete polynomial spaces, and
//! the sparse stochastic matrices `G_k` and `G̃_k` over them.

use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::orthopoly::{recurrence_coeffs, BasisShape, Family};
use crate::sparse::CsrMatrix;

/// Upper bound on `N_P` accepted by [`MultiIndexSet::new`].
pub const DEFAULT_MAX_SIZE: usize = 1 << 22;

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum IndexSetKind {
    /// Degrees `s_1 … s_K`: coordinate `k` ranges over `0..s_k`.
    TensorProduct(Vec<usize>),
    /// Total degree `< s` in `k` variables.
    Complete { k: usize, s: usize },
}

impl IndexSetKind {
    pub fn num_vars(&self) -> usize {
        match self {
            IndexSetKind::TensorProduct(s) => s.len(),
            IndexSetKind::Complete { k, .. } => *k,
        }
    }

    /// `s` for the mean-based bound: `max s_k` or the complete degree cap.
    pub fn max_degree_count(&self) -> usize {
        match self {
            IndexSetKind::TensorProduct(s) => s.iter().copied().max().unwrap_or(1),
            IndexSetKind::Complete { s, .. } => *s,
        }
    }

    pub fn shape(&self) -> BasisShape {
        match self {
            IndexSetKind::TensorProduct(s) => BasisShape::TensorProduct(s.clone()),
            IndexSetKind::Complete { k, s } => BasisShape::Complete { k: *k, s: *s },
        }
    }

    pub fn is_tensor(&self) -> bool {
        matches!(self, IndexSetKind::TensorProduct(_))
    }
}

#[derive(Clone, Debug)]
pub struct MultiIndexSet {
    kind: IndexSetKind,
    indices: Vec<Vec<usize>>,
    lookup: HashMap<Vec<usize>, usize>,
}

impl PartialEq for MultiIndexSet {
    fn eq(&self, other: &Self) -> bool {
        self.kind == other.kind && self.indices == other.indices
    }
}

fn binomial(n: usize, k: usize) -> Option<usize> {
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc * (n - i) as u128 / (i + 1) as u128;
        if acc > usize::MAX as u128 {
            return None;
        }
    }
    Some(acc as usize)
}

impl MultiIndexSet {
    pub fn new(kind: IndexSetKind) -> Result<Self> {
        Self::with_cap(kind, DEFAULT_MAX_SIZE)
    }

    pub fn with_cap(kind: IndexSetKind, cap: usize) -> Result<Self> {
        let indices = match &kind {
            IndexSetKind::TensorProduct(s) => {
                if s.is_empty() {
                    return Err(Error::Domain("need at least one random variable (K >= 1)".into()));
                }
                if s.iter().any(|&x| x == 0) {
                    return Err(Error::Domain("tensor-product degrees s_k must be >= 1".into()));
                }
                let size = s
                    .iter()
                    .try_fold(1usize, |acc, &x| acc.checked_mul(x))
                    .unwrap_or(usize::MAX);
                if size > cap {
                    return Err(Error::SizeLimit {
                        what: "N_P",
                        size,
                        cap,
                    });
                }
                tensor_indices(s)
            }
            IndexSetKind::Complete { k, s } => {
                if *k == 0 {
                    return Err(Error::Domain("need at least one random variable (K >= 1)".into()));
                }
                if *s == 0 {
                    return Err(Error::Domain("complete degree cap s must be >= 1".into()));
                }
                let size = binomial(k + s - 1, *k).unwrap_or(usize::MAX);
                if size > cap {
                    return Err(Error::SizeLimit {
                        what: "N_P",
                        size,
                        cap,
                    });
                }
                complete_indices(*k, *s)
            }
        };
        let lookup = indices.iter().enumerate().map(|(i, t)| (t.clone(), i)).collect();
        Ok(MultiIndexSet {
            kind,
            indices,
            lookup,
        })
    }

    pub fn tensor(degrees: &[usize]) -> Result<Self> {
        Self::new(IndexSetKind::TensorProduct(degrees.to_vec()))
    }

    pub fn complete(k: usize, s: usize) -> Result<Self> {
        Self::new(IndexSetKind::Complete { k, s })
    }

    pub fn kind(&self) -> &IndexSetKind {
        &self.kind
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn num_vars(&self) -> usize {
        self.kind.num_vars()
    }

    pub fn index(&self, i: usize) -> &[usize] {
        &self.indices[i]
    }

    pub fn indices(&self) -> &[Vec<usize>] {
        &self.indices
    }

    pub fn position(&self, tuple: &[usize]) -> Option<usize> {
        self.lookup.get(tuple).copied()
    }

    pub fn total_degree(&self, i: usize) -> usize {
        self.indices[i].iter().sum()
    }
}

/// Leftmost coordinate changes fastest.
fn tensor_indices(s: &[usize]) -> Vec<Vec<usize>> {
    let n: usize = s.iter().product();
    let mut out = Vec::with_capacity(n);
    let mut cur = vec![0usize; s.len()];
    for _ in 0..n {
        out.push(cur.clone());
        for (c, &cap) in cur.iter_mut().zip(s) {
            *c += 1;
            if *c < cap {
                break;
            }
            *c = 0;
        }
    }
    out
}

/// By total degree; inside a level, lexicographically decreasing.
fn complete_indices(k: usize, s: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    for deg in 0..s {
        let mut level = Vec::new();
        let mut cur = vec![0usize; k];
        compositions(deg, 0, &mut cur, &mut level);
        out.extend(level);
    }
    out
}

/// Appends all `k`-tuples summing to `rest` (from coordinate `pos` on), in
/// lexicographically decreasing order.
fn compositions(rest: usize, pos: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
    if pos + 1 == cur.len() {
        cur[pos] = rest;
        out.push(cur.clone());
        return;
    }
    for v in (0..=rest).rev() {
        cur[pos] = v;
        compositions(rest - v, pos + 1, cur, out);
    }
    cur[pos] = 0;
}

/// `G_k` (or an annihilated `G̃_k`) over a multi-index set; `k = 0` is the
/// identity.
#[derive(Clone, Debug, PartialEq)]
pub struct StochasticMatrix {
    pub k: usize,
    pub matrix: CsrMatrix,
}

impl StochasticMatrix {
    pub fn size(&self) -> usize {
        self.matrix.nrows()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SplitVariant {
    SplitTp,
    SplitComplete,
}

/// The `s × s` Jacobi factor as CSR; `drop_last` removes the final coupling.
fn jacobi_csr(family: Family, s: usize, drop_last: bool) -> Result<CsrMatrix> {
    let mut t = Vec::new();
    let last = if drop_last { s.saturating_sub(1) } else { s };
    for n in 1..last {
        let b = recurrence_coeffs(family, n)?.1.sqrt();
        t.push((n - 1, n, b));
        t.push((n, n - 1, b));
    }
    CsrMatrix::from_triplets(s, s, &t, false)
}

/// Kronecker form `I_{s_K} ⊗ … ⊗ J_k ⊗ … ⊗ I_{s_1}` under leftmost-fastest
/// ordering.
fn tensor_g(family: Family, s: &[usize], k: usize, drop_last: bool) -> Result<CsrMatrix> {
    let mut acc = CsrMatrix::identity(1);
    for (idx, &sk) in s.iter().enumerate().rev() {
        let factor = if idx + 1 == k {
            jacobi_csr(family, sk, drop_last)?
        } else {
            CsrMatrix::identity(sk)
        };
        acc = acc.kron(&factor);
    }
    Ok(acc)
}

/// Differ-by-one rule: `(i, j)` couples iff the tuples differ by one in
/// coordinate `k` only; value `√β_{min+1}`.
fn neighbour_g(
    family: Family,
    set: &MultiIndexSet,
    k: usize,
    keep: impl Fn(usize, usize) -> bool,
) -> Result<CsrMatrix> {
    let mut t = Vec::new();
    let mut probe = Vec::new();
    for i in 0..set.len() {
        probe.clear();
        probe.extend_from_slice(set.index(i));
        let c = probe[k - 1];
        probe[k - 1] = c + 1;
        if let Some(j) = set.position(&probe) {
            if keep(i, j) {
                let b = recurrence_coeffs(family, c + 1)?.1.sqrt();
                t.push((i, j, b));
                t.push((j, i, b));
            }
        }
    }
    CsrMatrix::from_triplets(set.len(), set.len(), &t, false)
}

pub fn assemble_g(family: Family, set: &MultiIndexSet, k: usize) -> Result<StochasticMatrix> {
    family.validate()?;
    if k > set.num_vars() {
        return Err(Error::Domain(format!(
            "k = {k} exceeds the number of random variables {}",
            set.num_vars()
        )));
    }
    let matrix = if k == 0 {
        CsrMatrix::identity(set.len())
    } else {
        match set.kind() {
            IndexSetKind::TensorProduct(s) => tensor_g(family, s, k, false)?,
            IndexSetKind::Complete { .. } => neighbour_g(family, set, k, |_, _| true)?,
        }
    };
    Ok(StochasticMatrix { k, matrix })
}

/// Couplings between the coarse space and its top layer removed.
pub fn assemble_g_tilde(
    family: Family,
    set: &MultiIndexSet,
    k: usize,
    variant: SplitVariant,
) -> Result<StochasticMatrix> {
    family.validate()?;
    let kk = set.num_vars();
    match (variant, set.kind()) {
        (SplitVariant::SplitTp, IndexSetKind::TensorProduct(s)) => {
            if k != kk {
                return Err(Error::Usage(format!(
                    "tensor-product splitting only modifies the last coordinate (k = {kk}), got k = {k}"
                )));
            }
            Ok(StochasticMatrix {
                k,
                matrix: tensor_g(family, s, k, true)?,
            })
        }
        (SplitVariant::SplitComplete, IndexSetKind::Complete { s, .. }) => {
            if k == 0 || k > kk {
                return Err(Error::Usage(format!("complete splitting needs 1 <= k <= {kk}, got {k}")));
            }
            let top = s - 1;
            let matrix = neighbour_g(family, set, k, |i, j| {
                // i has the lower degree of the pair
                !(set.total_degree(i) + 1 == top && set.total_degree(j) == top)
            })?;
            Ok(StochasticMatrix { k, matrix })
        }
        (v, kind) => Err(Error::Usage(format!(
            "splitting variant {v:?} does not apply to a {} basis",
            if kind.is_tensor() { "tensor-product" } else { "complete" }
        ))),
    }
}
