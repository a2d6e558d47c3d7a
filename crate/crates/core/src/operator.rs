//! The Kronecker-structured operator `A = Σ_k G_k ⊗ F_k` and block
//! preconditioners built from restrictions of it.
//!
//! Vectors use polynomial-major layout: entry `(i, r)` of the stochastic
//! index `i` and interior node `r` sits at `i·N_FE + r`.

use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::fem::{assemble_f, check_field, CoefficientField, FeMatrix, Mesh};
use crate::orthopoly::Family;
use crate::sparse::{CsrMatrix, SkylineCholesky};
use crate::stochastic_basis::{
    assemble_g, assemble_g_tilde, IndexSetKind, MultiIndexSet, SplitVariant, StochasticMatrix,
};

/// Default cap on `N_P·N_FE` for dense assembly.
pub const DENSE_CAP: usize = 6000;

#[derive(Clone, Debug)]
pub struct Term {
    pub g: StochasticMatrix,
    pub f: FeMatrix,
}

#[derive(Clone, Debug)]
pub struct GalerkinOperator {
    n_p: usize,
    n_fe: usize,
    terms: Vec<Term>,
}

impl GalerkinOperator {
    pub fn new(terms: Vec<Term>) -> Result<Self> {
        let first = terms
            .first()
            .ok_or_else(|| Error::Domain("operator needs at least one term".into()))?;
        let n_p = first.g.size();
        let n_fe = first.f.nrows();
        for t in &terms {
            for (want, got) in [
                (n_p, t.g.matrix.nrows()),
                (n_p, t.g.matrix.ncols()),
                (n_fe, t.f.nrows()),
                (n_fe, t.f.ncols()),
            ] {
                if want != got {
                    return Err(Error::DimensionMismatch {
                        expected: want,
                        got,
                    });
                }
            }
        }
        Ok(GalerkinOperator { n_p, n_fe, terms })
    }

    pub fn dim(&self) -> usize {
        self.n_p * self.n_fe
    }

    pub fn n_p(&self) -> usize {
        self.n_p
    }

    pub fn n_fe(&self) -> usize {
        self.n_fe
    }

    pub fn terms(&self) -> &[Term] {
        &self.terms
    }

    fn check_len(&self, n: usize) -> Result<()> {
        if n != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: n,
            });
        }
        Ok(())
    }

    /// Output block `i`: `Σ_k F_k (Σ_j G_k(i,j) v_j)`, restricted to input
    /// blocks with `cols[j]` when a mask is given.
    fn block_apply(&self, i: usize, v: &[f64], cols: Option<&[bool]>, out: &mut [f64], w: &mut [f64]) {
        let nfe = self.n_fe;
        out.iter_mut().for_each(|x| *x = 0.0);
        for t in &self.terms {
            let (gc, gv) = t.g.matrix.row(i);
            let mut any = false;
            w.iter_mut().for_each(|x| *x = 0.0);
            for (&j, &g) in gc.iter().zip(gv) {
                if cols.is_some_and(|m| !m[j]) {
                    continue;
                }
                any = true;
                for (wr, vr) in w.iter_mut().zip(&v[j * nfe..(j + 1) * nfe]) {
                    *wr += g * vr;
                }
            }
            if !any {
                continue;
            }
            for (r, o) in out.iter_mut().enumerate() {
                let (fc, fv) = t.f.row(r);
                let mut acc = 0.0;
                for (&c, &a) in fc.iter().zip(fv) {
                    acc += a * w[c];
                }
                *o += acc;
            }
        }
    }

    /// `y = A v`.
    pub fn matvec_into(&self, v: &[f64], y: &mut [f64]) -> Result<()> {
        self.check_len(v.len())?;
        self.check_len(y.len())?;
        let nfe = self.n_fe;
        y.par_chunks_mut(nfe)
            .enumerate()
            .for_each_init(|| vec![0.0; nfe], |w, (i, out)| self.block_apply(i, v, None, out, w));
        Ok(())
    }

    pub fn matvec(&self, v: &[f64]) -> Result<Vec<f64>> {
        let mut y = vec![0.0; self.dim()];
        self.matvec_into(v, &mut y)?;
        Ok(y)
    }

    /// Blocks `rows` of `A` applied to the part of `v` selected by `cols`.
    /// `v` is full length; the result holds `rows.len()` blocks in order.
    pub(crate) fn apply_restricted(&self, rows: &[usize], cols: &[bool], v: &[f64]) -> Vec<f64> {
        let nfe = self.n_fe;
        let mut y = vec![0.0; rows.len() * nfe];
        y.par_chunks_mut(nfe)
            .zip(rows.par_iter())
            .for_each_init(
                || vec![0.0; nfe],
                |w, (out, &i)| self.block_apply(i, v, Some(cols), out, w),
            );
        y
    }

    /// Explicit `Σ_k G_k ⊗ F_k`.
    pub fn assemble_dense(&self, cap: usize) -> Result<DMatrix<f64>> {
        let n = self.dim();
        if n > cap {
            return Err(Error::SizeLimit {
                what: "dense operator dimension",
                size: n,
                cap,
            });
        }
        let nfe = self.n_fe;
        let mut a = DMatrix::zeros(n, n);
        for t in &self.terms {
            for (i, j, g) in t.g.matrix.iter() {
                for (r, s, f) in t.f.iter() {
                    a[(i * nfe + r, j * nfe + s)] += g * f;
                }
            }
        }
        Ok(a)
    }
}

/// Mesh, coefficients and polynomial basis with the assembled operator.
#[derive(Clone, Debug)]
pub struct DiscreteProblem {
    pub mesh: Mesh,
    pub field: CoefficientField,
    pub family: Family,
    pub basis: MultiIndexSet,
    pub operator: GalerkinOperator,
}

impl DiscreteProblem {
    pub fn assemble(
        mesh: Mesh,
        field: CoefficientField,
        family: Family,
        basis: MultiIndexSet,
    ) -> Result<Self> {
        check_field(&mesh, &field)?;
        if field.k() != basis.num_vars() {
            return Err(Error::Usage(format!(
                "coefficient field has K = {} random terms, basis has {} variables",
                field.k(),
                basis.num_vars()
            )));
        }
        let terms = (0..=field.k())
            .map(|k| {
                Ok(Term {
                    g: assemble_g(family, &basis, k)?,
                    f: assemble_f(&mesh, &field, k)?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let operator = GalerkinOperator::new(terms)?;
        Ok(DiscreteProblem {
            mesh,
            field,
            family,
            basis,
            operator,
        })
    }

    pub fn k(&self) -> usize {
        self.field.k()
    }

    pub fn dim(&self) -> usize {
        self.operator.dim()
    }

    pub fn f(&self, k: usize) -> &FeMatrix {
        &self.operator.terms[k].f
    }

    pub fn g(&self, k: usize) -> &StochasticMatrix {
        &self.operator.terms[k].g
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum PreconditionerKind {
    MeanBased,
    TruncatedTp,
    SplittingTp,
    SplittingComplete,
    GaussSeidel2,
}

impl PreconditionerKind {
    pub const ALL: [PreconditionerKind; 5] = [
        PreconditionerKind::MeanBased,
        PreconditionerKind::TruncatedTp,
        PreconditionerKind::SplittingTp,
        PreconditionerKind::SplittingComplete,
        PreconditionerKind::GaussSeidel2,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            PreconditionerKind::MeanBased => "mean",
            PreconditionerKind::TruncatedTp => "truncated",
            PreconditionerKind::SplittingTp => "splitting-tp",
            PreconditionerKind::SplittingComplete => "splitting-complete",
            PreconditionerKind::GaussSeidel2 => "gauss-seidel",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.name() == s)
    }

    /// Whether the kind can be built on this basis.
    pub fn applies_to(&self, kind: &IndexSetKind) -> bool {
        match self {
            PreconditionerKind::MeanBased | PreconditionerKind::GaussSeidel2 => true,
            PreconditionerKind::TruncatedTp | PreconditionerKind::SplittingTp => kind.is_tensor(),
            PreconditionerKind::SplittingComplete => !kind.is_tensor(),
        }
    }
}

/// A diagonal block of `M` over a group of polynomial indices, factored in
/// node-major order so the envelope stays narrow.
#[derive(Clone, Debug)]
struct Block {
    polys: Vec<usize>,
    factor: SkylineCholesky,
}

impl Block {
    fn build(terms: &[Term], polys: Vec<usize>, n_p: usize, n_fe: usize) -> Result<Self> {
        let m = polys.len();
        let mut local = vec![usize::MAX; n_p];
        for (a, &p) in polys.iter().enumerate() {
            local[p] = a;
        }
        let mut trip = Vec::new();
        for t in terms {
            for &p in &polys {
                let a = local[p];
                let (gc, gv) = t.g.matrix.row(p);
                for (&q, &g) in gc.iter().zip(gv) {
                    let b = local[q];
                    if b == usize::MAX {
                        return Err(Error::Usage(
                            "preconditioner groups are not closed under the stochastic couplings".into(),
                        ));
                    }
                    for (r, s, f) in t.f.iter() {
                        trip.push((r * m + a, s * m + b, g * f));
                    }
                }
            }
        }
        let mat = CsrMatrix::from_triplets(m * n_fe, m * n_fe, &trip, false)?;
        Ok(Block {
            polys,
            factor: SkylineCholesky::factor(&mat)?,
        })
    }

    /// Solves with this block's part of `r` (full layout). The result holds
    /// one `N_FE` chunk per polynomial of the group, in group order.
    fn solve(&self, r: &[f64], n_fe: usize) -> Vec<f64> {
        let m = self.polys.len();
        let mut z = vec![0.0; m * n_fe];
        for (a, &p) in self.polys.iter().enumerate() {
            for rr in 0..n_fe {
                z[rr * m + a] = r[p * n_fe + rr];
            }
        }
        self.factor.solve_in_place(&mut z);
        let mut out = vec![0.0; m * n_fe];
        for a in 0..m {
            for rr in 0..n_fe {
                out[a * n_fe + rr] = z[rr * m + a];
            }
        }
        out
    }
}

#[derive(Clone, Debug)]
enum Structure {
    /// One `F_0` factor applied to every polynomial block.
    Shared(SkylineCholesky),
    Blocks(Vec<Block>),
    /// Symmetric two-block Gauss–Seidel: `D_1` on `u`, `D_2` on `w`,
    /// couplings taken from `A`.
    Gs2 {
        d1: Block,
        d2: Block,
        u_mask: Vec<bool>,
        w_mask: Vec<bool>,
        a: GalerkinOperator,
    },
}

#[derive(Clone, Debug)]
pub struct Preconditioner {
    kind: PreconditionerKind,
    n_p: usize,
    n_fe: usize,
    /// `Σ G̃_k ⊗ F_k` for the block-diagonal kinds.
    m_op: Option<GalerkinOperator>,
    structure: Structure,
}

/// Coarse/detail split of the basis: `(coarse, top)`.
fn splitting_groups(basis: &MultiIndexSet) -> (Vec<usize>, Vec<usize>) {
    let n = basis.len();
    let is_top: Box<dyn Fn(usize) -> bool> = match basis.kind() {
        IndexSetKind::TensorProduct(s) => {
            let last = s.len() - 1;
            let top = s[last] - 1;
            Box::new(move |i| basis.index(i)[last] == top)
        }
        IndexSetKind::Complete { s, .. } => {
            let top = s - 1;
            Box::new(move |i| basis.total_degree(i) == top)
        }
    };
    (0..n).partition(|&i| !is_top(i))
}

fn splitting_terms(problem: &DiscreteProblem) -> Result<Vec<Term>> {
    let family = problem.family;
    let basis = &problem.basis;
    let kk = problem.k();
    let mut terms = Vec::with_capacity(kk + 1);
    for k in 0..=kk {
        let g = match basis.kind() {
            IndexSetKind::TensorProduct(_) if k == kk && k > 0 => {
                assemble_g_tilde(family, basis, k, SplitVariant::SplitTp)?
            }
            IndexSetKind::Complete { .. } if k > 0 => {
                assemble_g_tilde(family, basis, k, SplitVariant::SplitComplete)?
            }
            _ => problem.g(k).clone(),
        };
        terms.push(Term {
            g,
            f: problem.f(k).clone(),
        });
    }
    Ok(terms)
}

fn build_blocks(terms: &[Term], groups: Vec<Vec<usize>>, n_p: usize, n_fe: usize) -> Result<Vec<Block>> {
    groups
        .into_par_iter()
        .filter(|g| !g.is_empty())
        .map(|g| Block::build(terms, g, n_p, n_fe))
        .collect()
}

impl Preconditioner {
    pub fn build(problem: &DiscreteProblem, kind: PreconditionerKind) -> Result<Self> {
        let basis = problem.basis.kind();
        if !kind.applies_to(basis) {
            return Err(Error::Usage(format!(
                "preconditioner '{}' does not apply to a {} basis",
                kind.name(),
                if basis.is_tensor() { "tensor-product" } else { "complete" }
            )));
        }
        let n_p = problem.operator.n_p();
        let n_fe = problem.operator.n_fe();
        let kk = problem.k();
        let (m_op, structure) = match kind {
            PreconditionerKind::MeanBased => {
                let terms = vec![problem.operator.terms[0].clone()];
                let factor = SkylineCholesky::factor(problem.f(0))?;
                (Some(GalerkinOperator::new(terms)?), Structure::Shared(factor))
            }
            PreconditionerKind::TruncatedTp => {
                let terms: Vec<Term> = problem.operator.terms[..kk].to_vec();
                let IndexSetKind::TensorProduct(s) = basis else { unreachable!() };
                let sk = s[kk - 1];
                let mut groups = vec![Vec::new(); sk];
                for i in 0..n_p {
                    groups[problem.basis.index(i)[kk - 1]].push(i);
                }
                let blocks = build_blocks(&terms, groups, n_p, n_fe)?;
                (Some(GalerkinOperator::new(terms)?), Structure::Blocks(blocks))
            }
            PreconditionerKind::SplittingTp | PreconditionerKind::SplittingComplete => {
                let terms = splitting_terms(problem)?;
                let (u, w) = splitting_groups(&problem.basis);
                let blocks = build_blocks(&terms, vec![u, w], n_p, n_fe)?;
                (Some(GalerkinOperator::new(terms)?), Structure::Blocks(blocks))
            }
            PreconditionerKind::GaussSeidel2 => {
                let terms = splitting_terms(problem)?;
                let (u, w) = splitting_groups(&problem.basis);
                let mut u_mask = vec![false; n_p];
                u.iter().for_each(|&i| u_mask[i] = true);
                let w_mask: Vec<bool> = u_mask.iter().map(|b| !b).collect();
                if u.is_empty() || w.is_empty() {
                    // Degenerate split: no coupling, plain block solve.
                    let blocks = build_blocks(&terms, vec![u, w], n_p, n_fe)?;
                    (Some(GalerkinOperator::new(terms)?), Structure::Blocks(blocks))
                } else {
                    let (d1, d2) = rayon::join(
                        || Block::build(&terms, u, n_p, n_fe),
                        || Block::build(&terms, w, n_p, n_fe),
                    );
                    (
                        None,
                        Structure::Gs2 {
                            d1: d1?,
                            d2: d2?,
                            u_mask,
                            w_mask,
                            a: problem.operator.clone(),
                        },
                    )
                }
            }
        };
        Ok(Preconditioner {
            kind,
            n_p,
            n_fe,
            m_op,
            structure,
        })
    }

    pub fn kind(&self) -> PreconditionerKind {
        self.kind
    }

    pub fn dim(&self) -> usize {
        self.n_p * self.n_fe
    }

    fn check_len(&self, n: usize) -> Result<()> {
        if n != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: n,
            });
        }
        Ok(())
    }

    /// `M⁻¹ r`.
    pub fn apply_inverse(&self, r: &[f64]) -> Result<Vec<f64>> {
        self.check_len(r.len())?;
        let nfe = self.n_fe;
        let mut x = vec![0.0; r.len()];
        match &self.structure {
            Structure::Shared(f) => {
                x.copy_from_slice(r);
                x.par_chunks_mut(nfe).for_each(|b| f.solve_in_place(b));
            }
            Structure::Blocks(blocks) => {
                let parts: Vec<Vec<f64>> = blocks.par_iter().map(|b| b.solve(r, nfe)).collect();
                for (b, part) in blocks.iter().zip(parts) {
                    scatter(&mut x, &b.polys, &part, nfe);
                }
            }
            Structure::Gs2 {
                d1,
                d2,
                u_mask,
                w_mask,
                a,
            } => {
                let y1 = d1.solve(r, nfe);
                scatter(&mut x, &d1.polys, &y1, nfe);
                // r_2 − B y_1
                let by1 = a.apply_restricted(&d2.polys, u_mask, &x);
                let mut t = gather(r, &d2.polys, nfe);
                t.iter_mut().zip(&by1).for_each(|(ti, bi)| *ti -= bi);
                let mut tf = vec![0.0; r.len()];
                scatter(&mut tf, &d2.polys, &t, nfe);
                let x2 = d2.solve(&tf, nfe);
                let mut full2 = vec![0.0; r.len()];
                scatter(&mut full2, &d2.polys, &x2, nfe);
                // x_1 = y_1 − D_1⁻¹ Bᵀ x_2
                let btx2 = a.apply_restricted(&d1.polys, w_mask, &full2);
                let mut bf = vec![0.0; r.len()];
                scatter(&mut bf, &d1.polys, &btx2, nfe);
                let corr = d1.solve(&bf, nfe);
                let x1: Vec<f64> = y1.iter().zip(&corr).map(|(a, b)| a - b).collect();
                x.iter_mut().for_each(|v| *v = 0.0);
                scatter(&mut x, &d1.polys, &x1, nfe);
                scatter(&mut x, &d2.polys, &x2, nfe);
            }
        }
        Ok(x)
    }

    /// `M v`.
    pub fn apply(&self, v: &[f64]) -> Result<Vec<f64>> {
        self.check_len(v.len())?;
        match (&self.m_op, &self.structure) {
            (Some(m), _) => m.matvec(v),
            (
                None,
                Structure::Gs2 {
                    d1,
                    d2,
                    u_mask,
                    w_mask,
                    a,
                },
            ) => {
                // M = A + [0, 0; 0, B D_1⁻¹ Bᵀ]
                let nfe = self.n_fe;
                let mut y = a.matvec(v)?;
                let btv = a.apply_restricted(&d1.polys, w_mask, v);
                let mut full = vec![0.0; v.len()];
                scatter(&mut full, &d1.polys, &btv, nfe);
                let z = d1.solve(&full, nfe);
                let mut zf = vec![0.0; v.len()];
                scatter(&mut zf, &d1.polys, &z, nfe);
                let bz = a.apply_restricted(&d2.polys, u_mask, &zf);
                for (blk, &p) in d2.polys.iter().enumerate() {
                    for r in 0..nfe {
                        y[p * nfe + r] += bz[blk * nfe + r];
                    }
                }
                Ok(y)
            }
            _ => unreachable!("block-diagonal kinds always keep their operator"),
        }
    }

    /// The operator `Σ G̃_k ⊗ F_k` for block-diagonal kinds.
    pub fn operator(&self) -> Option<&GalerkinOperator> {
        self.m_op.as_ref()
    }
}

fn scatter(x: &mut [f64], polys: &[usize], part: &[f64], nfe: usize) {
    for (a, &p) in polys.iter().enumerate() {
        x[p * nfe..(p + 1) * nfe].copy_from_slice(&part[a * nfe..(a + 1) * nfe]);
    }
}

fn gather(x: &[f64], polys: &[usize], nfe: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(polys.len() * nfe);
    for &p in polys {
        out.extend_from_slice(&x[p * nfe..(p + 1) * nfe]);
    }
    out
}
