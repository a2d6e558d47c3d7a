//! Extreme eigenvalues of `A` and of the pencil `(A, M)` by Lanczos, and
//! preconditioned conjugate gradients.

use nalgebra::{DMatrix, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::operator::{GalerkinOperator, Preconditioner, Term, DENSE_CAP};
use crate::orthopoly::tridiag_eigen;
use crate::sparse::SkylineCholesky;

pub const DEFAULT_SEED: u64 = 42;

/// Symmetric linear map.
pub trait LinearOperator: Sync {
    fn dim(&self) -> usize;
    fn apply(&self, x: &[f64]) -> Result<Vec<f64>>;
}

/// Application of `M⁻¹` for a symmetric positive definite `M`.
pub trait InverseOperator: Sync {
    fn dim(&self) -> usize;
    fn apply_inverse(&self, r: &[f64]) -> Result<Vec<f64>>;
}

impl LinearOperator for GalerkinOperator {
    fn dim(&self) -> usize {
        GalerkinOperator::dim(self)
    }

    fn apply(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.matvec(x)
    }
}

impl LinearOperator for Preconditioner {
    fn dim(&self) -> usize {
        Preconditioner::dim(self)
    }

    fn apply(&self, x: &[f64]) -> Result<Vec<f64>> {
        Preconditioner::apply(self, x)
    }
}

impl InverseOperator for Preconditioner {
    fn dim(&self) -> usize {
        Preconditioner::dim(self)
    }

    fn apply_inverse(&self, r: &[f64]) -> Result<Vec<f64>> {
        Preconditioner::apply_inverse(self, r)
    }
}

impl LinearOperator for DMatrix<f64> {
    fn dim(&self) -> usize {
        self.nrows()
    }

    fn apply(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.ncols() {
            return Err(Error::DimensionMismatch {
                expected: self.ncols(),
                got: x.len(),
            });
        }
        Ok((self * DMatrix::from_column_slice(x.len(), 1, x)).as_slice().to_vec())
    }
}

/// `M = I`.
#[derive(Clone, Copy, Debug)]
pub struct Identity(pub usize);

impl InverseOperator for Identity {
    fn dim(&self) -> usize {
        self.0
    }

    fn apply_inverse(&self, r: &[f64]) -> Result<Vec<f64>> {
        Ok(r.to_vec())
    }
}

/// `F_0⁻¹` on every polynomial block of `A`.
struct MeanSolve {
    factor: SkylineCholesky,
    n_fe: usize,
    n: usize,
}

impl InverseOperator for MeanSolve {
    fn dim(&self) -> usize {
        self.n
    }

    fn apply_inverse(&self, r: &[f64]) -> Result<Vec<f64>> {
        use rayon::prelude::*;
        let mut x = r.to_vec();
        x.par_chunks_mut(self.n_fe).for_each(|b| self.factor.solve_in_place(b));
        Ok(x)
    }
}

/// `A⁻¹` applied through PCG.
struct InverseByPcg<'a> {
    a: &'a GalerkinOperator,
    m: &'a MeanSolve,
    tol: f64,
    max_iter: usize,
}

impl LinearOperator for InverseByPcg<'_> {
    fn dim(&self) -> usize {
        self.a.dim()
    }

    fn apply(&self, x: &[f64]) -> Result<Vec<f64>> {
        Ok(pcg(self.a, self.m, x, self.tol, self.max_iter)?.x)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EigEstimate {
    pub lambda_min: f64,
    pub lambda_max: f64,
    /// Relative residual bounds for `(λ_min, λ_max)`.
    pub residual_norms: (f64, f64),
    pub iterations: usize,
    /// True when the values come from the dense fallback.
    pub dense: bool,
}

impl EigEstimate {
    pub fn condition(&self) -> f64 {
        self.lambda_max / self.lambda_min
    }
}

#[derive(Clone, Copy, Debug)]
pub struct LanczosOptions {
    pub tol: f64,
    pub max_iter: usize,
    pub seed: u64,
}

impl Default for LanczosOptions {
    fn default() -> Self {
        LanczosOptions {
            tol: 1e-8,
            max_iter: 1000,
            seed: DEFAULT_SEED,
        }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    y.iter_mut().zip(x).for_each(|(yi, xi)| *yi += alpha * xi);
}

/// Result of a Lanczos run: Ritz extremes plus the basis when requested.
pub struct LanczosRun {
    pub estimate: EigEstimate,
    /// M-orthonormal basis vectors (kept for diagnostics).
    pub basis: Vec<Vec<f64>>,
}

/// Lanczos for `A y = λ M y` in the `M` inner product with full
/// reorthogonalization. Stores `q_j` and `M q_j`, so only `M⁻¹` is needed.
pub fn lanczos(
    a: &dyn LinearOperator,
    m: &dyn InverseOperator,
    opts: LanczosOptions,
) -> Result<LanczosRun> {
    lanczos_ends(a, m, opts, true)
}

/// [`lanczos`]; with `both = false` only the largest Ritz value has to meet
/// the tolerance.
fn lanczos_ends(
    a: &dyn LinearOperator,
    m: &dyn InverseOperator,
    opts: LanczosOptions,
    both: bool,
) -> Result<LanczosRun> {
    let n = a.dim();
    if m.dim() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: m.dim(),
        });
    }
    if n == 0 {
        return Err(Error::Domain("empty operator".into()));
    }
    let max_iter = opts.max_iter.min(n).max(1);
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut p: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
    let mut q = m.apply_inverse(&p)?;
    let nrm = dot(&p, &q).sqrt();
    q.iter_mut().for_each(|x| *x /= nrm);
    p.iter_mut().for_each(|x| *x /= nrm);

    let mut qs: Vec<Vec<f64>> = Vec::new();
    let mut ps: Vec<Vec<f64>> = Vec::new();
    let mut alpha: Vec<f64> = Vec::new();
    let mut beta: Vec<f64> = Vec::new();
    let mut best = (f64::NAN, f64::NAN, f64::INFINITY, f64::INFINITY);

    for j in 0..max_iter {
        let mut w = a.apply(&q)?;
        let al = dot(&q, &w);
        axpy(-al, &p, &mut w);
        if let Some(pp) = ps.last() {
            axpy(-beta[j - 1], pp, &mut w);
        }
        qs.push(q);
        ps.push(p);
        alpha.push(al);
        for _ in 0..2 {
            for (qi, pi) in qs.iter().zip(&ps) {
                let c = dot(qi, &w);
                axpy(-c, pi, &mut w);
            }
        }
        let u = m.apply_inverse(&w)?;
        let b2 = dot(&w, &u);
        let b = b2.max(0.0).sqrt();

        let eig = tridiag_eigen(&alpha, &beta, &[j], f64::EPSILON)?;
        let k = eig.values.len();
        let (lo, hi) = (eig.values[0], eig.values[k - 1]);
        let scale = lo.abs().max(hi.abs()).max(f64::MIN_POSITIVE);
        // Invariant subspace when the new direction has collapsed.
        let breakdown = b <= 1e-14 * scale;
        let (r_lo, r_hi) = if breakdown {
            (0.0, 0.0)
        } else {
            (b * eig.rows[0][0].abs() / lo.abs(), b * eig.rows[0][k - 1].abs() / hi.abs())
        };
        best = (lo, hi, r_lo, r_hi);
        if breakdown || ((r_lo <= opts.tol || !both) && r_hi <= opts.tol) || j + 1 == n {
            return Ok(LanczosRun {
                estimate: EigEstimate {
                    lambda_min: lo,
                    lambda_max: hi,
                    residual_norms: (r_lo, r_hi),
                    iterations: j + 1,
                    dense: false,
                },
                basis: qs,
            });
        }
        beta.push(b);
        q = u;
        q.iter_mut().for_each(|x| *x /= b);
        p = w;
        p.iter_mut().for_each(|x| *x /= b);
    }
    Err(Error::LanczosNoConvergence {
        iterations: max_iter,
        lambda_min: best.0,
        lambda_max: best.1,
        residual_min: best.2,
        residual_max: best.3,
    })
}

/// Extreme eigenvalues of `M⁻¹ A`.
pub fn extreme_eigs_generalized(
    a: &GalerkinOperator,
    m: &Preconditioner,
    opts: LanczosOptions,
) -> Result<EigEstimate> {
    match lanczos(a, m, opts) {
        Ok(run) => Ok(run.estimate),
        Err(e @ Error::LanczosNoConvergence { .. }) if a.dim() <= DENSE_CAP => {
            dense_generalized(a, m).map_err(|_| e)
        }
        Err(e) => Err(e),
    }
}

/// Dense eigenvalues of the pencil, `M` built column by column.
pub fn dense_generalized(a: &GalerkinOperator, m: &Preconditioner) -> Result<EigEstimate> {
    let n = a.dim();
    let ad = a.assemble_dense(DENSE_CAP)?;
    let mut md = DMatrix::zeros(n, n);
    let mut e = vec![0.0; n];
    for j in 0..n {
        e[j] = 1.0;
        let col = m.apply(&e)?;
        md.set_column(j, &nalgebra::DVector::from_vec(col));
        e[j] = 0.0;
    }
    let md = (&md + md.transpose()) * 0.5;
    let ev = generalized_eigenvalues(&ad, &md)?;
    Ok(EigEstimate {
        lambda_min: ev[0],
        lambda_max: ev[ev.len() - 1],
        residual_norms: (0.0, 0.0),
        iterations: 0,
        dense: true,
    })
}

/// Eigenvalues of `L⁻¹ A L⁻ᵀ` with `M = L Lᵀ`, ascending.
pub fn generalized_eigenvalues(a: &DMatrix<f64>, m: &DMatrix<f64>) -> Result<Vec<f64>> {
    let chol = nalgebra::Cholesky::new(m.clone()).ok_or(Error::Factorization {
        row: 0,
        pivot: f64::NAN,
    })?;
    let l = chol.l();
    let linv = l
        .clone()
        .try_inverse()
        .ok_or(Error::Factorization { row: 0, pivot: 0.0 })?;
    let c = &linv * a * linv.transpose();
    let c = (&c + c.transpose()) * 0.5;
    let mut ev: Vec<f64> = SymmetricEigen::new(c).eigenvalues.iter().copied().collect();
    ev.sort_by(f64::total_cmp);
    Ok(ev)
}

/// Extreme eigenvalues of `A`. The top end uses plain Lanczos; the bottom
/// end runs Lanczos on `A⁻¹`, applying `A⁻¹` by PCG with the mean-based
/// preconditioner, and inverts the Ritz value.
pub fn extreme_eigs(a: &GalerkinOperator, opts: LanczosOptions) -> Result<EigEstimate> {
    let n = a.dim();
    let attempt = || -> Result<EigEstimate> {
        let top = lanczos_ends(a, &Identity(n), opts, false)?.estimate;
        let f0 = mean_term(a)?;
        let mean = MeanSolve {
            factor: SkylineCholesky::factor(&f0.f)?,
            n_fe: a.n_fe(),
            n,
        };
        let inv = InverseByPcg {
            a,
            m: &mean,
            tol: (opts.tol * 1e-4).clamp(1e-14, 1e-10),
            max_iter: 10_000,
        };
        let bottom = lanczos_ends(&inv, &Identity(n), opts, false)?.estimate;
        Ok(EigEstimate {
            lambda_min: 1.0 / bottom.lambda_max,
            lambda_max: top.lambda_max,
            residual_norms: (bottom.residual_norms.1, top.residual_norms.1),
            iterations: top.iterations + bottom.iterations,
            dense: false,
        })
    };
    match attempt() {
        Ok(e) => Ok(e),
        Err(e @ Error::LanczosNoConvergence { .. }) if n <= DENSE_CAP => {
            let ad = a.assemble_dense(DENSE_CAP)?;
            let mut ev: Vec<f64> = SymmetricEigen::new(ad).eigenvalues.iter().copied().collect();
            ev.sort_by(f64::total_cmp);
            if ev.is_empty() {
                return Err(e);
            }
            Ok(EigEstimate {
                lambda_min: ev[0],
                lambda_max: ev[ev.len() - 1],
                residual_norms: (0.0, 0.0),
                iterations: 0,
                dense: true,
            })
        }
        Err(e) => Err(e),
    }
}

/// The `G_0 = I` term.
fn mean_term(a: &GalerkinOperator) -> Result<&Term> {
    let t = &a.terms()[0];
    if t.g.k != 0 {
        return Err(Error::Usage("operator's first term is not the mean term".into()));
    }
    Ok(t)
}

#[derive(Clone, Debug)]
pub struct PcgResult {
    pub x: Vec<f64>,
    pub iterations: usize,
    /// Relative residual `‖r_k‖/‖b‖`, starting with `k = 0`.
    pub residual_history: Vec<f64>,
}

/// Preconditioned conjugate gradients from `x_0 = 0`.
pub fn pcg(
    a: &dyn LinearOperator,
    m: &dyn InverseOperator,
    b: &[f64],
    tol: f64,
    max_iter: usize,
) -> Result<PcgResult> {
    pcg_observed(a, m, b, tol, max_iter, &mut |_, _| {})
}

/// [`pcg`] calling `observe(k, x_k)` after every iteration.
pub fn pcg_observed(
    a: &dyn LinearOperator,
    m: &dyn InverseOperator,
    b: &[f64],
    tol: f64,
    max_iter: usize,
    observe: &mut dyn FnMut(usize, &[f64]),
) -> Result<PcgResult> {
    let n = a.dim();
    if b.len() != n || m.dim() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: if b.len() != n { b.len() } else { m.dim() },
        });
    }
    if let Some(i) = b.iter().position(|v| !v.is_finite()) {
        return Err(Error::Domain(format!("right-hand side entry {i} is not finite")));
    }
    let bnorm = dot(b, b).sqrt();
    let mut x = vec![0.0; n];
    if bnorm == 0.0 {
        return Ok(PcgResult {
            x,
            iterations: 0,
            residual_history: vec![0.0],
        });
    }
    let mut r = b.to_vec();
    let mut z = m.apply_inverse(&r)?;
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    let mut history = vec![1.0];
    for it in 1..=max_iter {
        let q = a.apply(&p)?;
        let pq = dot(&p, &q);
        if !(pq > 0.0) {
            return Err(Error::NoConvergence {
                solver: "pcg (operator not positive definite)",
                iterations: it,
            });
        }
        let alpha = rz / pq;
        axpy(alpha, &p, &mut x);
        axpy(-alpha, &q, &mut r);
        observe(it, &x);
        let rel = dot(&r, &r).sqrt() / bnorm;
        history.push(rel);
        if rel <= tol {
            return Ok(PcgResult {
                x,
                iterations: it,
                residual_history: history,
            });
        }
        z = m.apply_inverse(&r)?;
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        p.iter_mut().zip(&z).for_each(|(pi, zi)| *pi = zi + beta * *pi);
    }
    Err(Error::PcgNoConvergence {
        iterations: max_iter,
        final_residual: *history.last().unwrap(),
        history,
    })
}

/// CG iteration bound `⌈½√κ ln(2/tol)⌉`.
pub fn cg_iteration_bound(kappa: f64, tol: f64) -> usize {
    (0.5 * kappa.sqrt() * (2.0 / tol).ln()).ceil() as usize
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coeff_dsl::parse;
    use crate::fem::{sample_coefficients, Mesh};
    use crate::operator::{DiscreteProblem, PreconditionerKind};
    use crate::orthopoly::Family;
    use crate::stochastic_basis::MultiIndexSet;

    fn problem(n: usize, exprs: &[&str], basis: MultiIndexSet) -> DiscreteProblem {
        let mesh = Mesh::interval(n).unwrap();
        let e: Vec<_> = exprs.iter().map(|s| parse(s).unwrap()).collect();
        let field = sample_coefficients(&e, &mesh).unwrap();
        DiscreteProblem::assemble(mesh, field, Family::Legendre, basis).unwrap()
    }

    struct DenseInv(DMatrix<f64>);

    impl InverseOperator for DenseInv {
        fn dim(&self) -> usize {
            self.0.nrows()
        }
        fn apply_inverse(&self, r: &[f64]) -> Result<Vec<f64>> {
            let x = self.0.clone().cholesky().unwrap().solve(&DMatrix::from_column_slice(r.len(), 1, r));
            Ok(x.as_slice().to_vec())
        }
    }

    fn random_spd(n: usize, seed: u64) -> DMatrix<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let b = DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
        &b * b.transpose() + DMatrix::identity(n, n) * (n as f64 * 0.1)
    }

    #[test]
    fn pencil_matches_dense() {
        let n = 120;
        let a = random_spd(n, 1);
        let m = random_spd(n, 2);
        let est = lanczos(&a, &DenseInv(m.clone()), LanczosOptions { tol: 1e-10, max_iter: n, seed: 42 })
            .unwrap()
            .estimate;
        let ev = generalized_eigenvalues(&a, &m).unwrap();
        assert!((est.lambda_min - ev[0]).abs() < 1e-8 * ev[0].abs());
        assert!((est.lambda_max - ev[n - 1]).abs() < 1e-8 * ev[n - 1].abs());
    }

    #[test]
    fn basis_is_m_orthonormal() {
        let n = 80;
        let a = random_spd(n, 3);
        let m = random_spd(n, 4);
        let run = lanczos(&a, &DenseInv(m.clone()), LanczosOptions { tol: 1e-12, max_iter: n, seed: 1 }).unwrap();
        assert!(run.basis.len() > 5);
        for (i, qi) in run.basis.iter().enumerate() {
            let mqi = m.apply(qi).unwrap();
            for (j, qj) in run.basis.iter().enumerate() {
                let want = if i == j { 1.0 } else { 0.0 };
                assert!((dot(&mqi, qj) - want).abs() < 1e-8);
            }
        }
        let short = lanczos(&a, &DenseInv(m), LanczosOptions { tol: 0.0, max_iter: 30, seed: 1 });
        assert!(matches!(short, Err(Error::LanczosNoConvergence { iterations: 30, .. })));
    }

    #[test]
    fn m_equal_a_gives_ones() {
        let p = problem(8, &["1", "0.4*x1", "0.3"], MultiIndexSet::complete(2, 3).unwrap());
        // With zero fluctuations every kind reproduces A exactly.
        let p0 = problem(8, &["1", "0", "0"], MultiIndexSet::complete(2, 3).unwrap());
        let m = Preconditioner::build(&p0, PreconditionerKind::MeanBased).unwrap();
        let e = extreme_eigs_generalized(&p0.operator, &m, LanczosOptions::default()).unwrap();
        assert!((e.lambda_min - 1.0).abs() < 1e-12 && (e.lambda_max - 1.0).abs() < 1e-12);
        let m = Preconditioner::build(&p, PreconditionerKind::MeanBased).unwrap();
        let e = extreme_eigs_generalized(&p.operator, &m, LanczosOptions::default()).unwrap();
        let d = dense_generalized(&p.operator, &m).unwrap();
        assert!((e.lambda_min - d.lambda_min).abs() < 1e-8);
        assert!((e.lambda_max - d.lambda_max).abs() < 1e-8);
    }

    #[test]
    fn kappa_a_matches_dense() {
        let p = problem(12, &["1", "0.3*sin(pi*x1)", "0.2*x1"], MultiIndexSet::complete(2, 4).unwrap());
        let e = extreme_eigs(&p.operator, LanczosOptions::default()).unwrap();
        let ad = p.operator.assemble_dense(DENSE_CAP).unwrap();
        let mut ev: Vec<f64> = SymmetricEigen::new(ad).eigenvalues.iter().copied().collect();
        ev.sort_by(f64::total_cmp);
        assert!((e.lambda_min - ev[0]).abs() < 1e-8 * ev[0]);
        assert!((e.lambda_max - ev[ev.len() - 1]).abs() < 1e-8 * ev[ev.len() - 1]);
        // n = 2, a single unknown per block and identity coefficients.
        let p = problem(2, &["1", "0"], MultiIndexSet::complete(1, 3).unwrap());
        let e = extreme_eigs(&p.operator, LanczosOptions::default()).unwrap();
        assert!((e.condition() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn pcg_basics() {
        let p = problem(10, &["1", "0.5*x1"], MultiIndexSet::complete(1, 4).unwrap());
        let m = Preconditioner::build(&p, PreconditionerKind::MeanBased).unwrap();
        let zero = pcg(&p.operator, &m, &vec![0.0; p.dim()], 1e-8, 100).unwrap();
        assert_eq!(zero.iterations, 0);
        assert!(zero.x.iter().all(|&v| v == 0.0));

        let p0 = problem(10, &["1 + x1", "0"], MultiIndexSet::complete(1, 4).unwrap());
        let m0 = Preconditioner::build(&p0, PreconditionerKind::MeanBased).unwrap();
        let b: Vec<f64> = (0..p0.dim()).map(|i| (i as f64).cos()).collect();
        assert_eq!(pcg(&p0.operator, &m0, &b, 1e-10, 10).unwrap().iterations, 1);

        let b: Vec<f64> = (0..p.dim()).map(|i| (i as f64 * 0.3).sin()).collect();
        let res = pcg(&p.operator, &m, &b, 1e-10, 200).unwrap();
        let ax = p.operator.matvec(&res.x).unwrap();
        let err: f64 = ax.iter().zip(&b).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        assert!(err <= 1e-10 * dot(&b, &b).sqrt() * 1.0001);
        assert!(matches!(
            pcg(&p.operator, &Identity(p.dim()), &b, 1e-14, 3),
            Err(Error::PcgNoConvergence { iterations: 3, .. })
        ));
    }

    #[test]
    fn pcg_energy_error_monotone() {
        let p = problem(9, &["1", "0.4*sin(pi*x1)", "0.3*x1"], MultiIndexSet::complete(2, 3).unwrap());
        let m = Preconditioner::build(&p, PreconditionerKind::MeanBased).unwrap();
        let ad = p.operator.assemble_dense(DENSE_CAP).unwrap();
        let b: Vec<f64> = (0..p.dim()).map(|i| 1.0 + (i as f64).sin()).collect();
        let xs = ad.clone().cholesky().unwrap().solve(&DMatrix::from_column_slice(b.len(), 1, &b));
        let mut errs = Vec::new();
        pcg_observed(&p.operator, &m, &b, 1e-13, 200, &mut |_, x| {
            let e = DMatrix::from_column_slice(x.len(), 1, x) - &xs;
            errs.push((e.transpose() * &ad * &e)[(0, 0)].sqrt());
        })
        .unwrap();
        assert!(errs.len() > 3);
        for w in errs.windows(2) {
            assert!(w[1] <= w[0] * (1.0 + 1e-12));
        }
    }
}
