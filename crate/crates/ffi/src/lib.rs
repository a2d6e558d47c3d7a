//! C ABI for `sgp`.
//!
//! Every function returns an [`SgpStatus`]. On failure the message is kept in
//! a thread-local slot and can be read with [`sgp_last_error_message`].
//! Problems and preconditioners are opaque handles released with their
//! `_free` function. Arrays are caller-allocated; lengths are documented per
//! function.

use std::cell::RefCell;
use std::ffi::{c_char, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use sgp::bounds::{bounds_for, SpectralBounds};
use sgp::eigsolve::{extreme_eigs_generalized, pcg, LanczosOptions};
use sgp::fem::{compute_mu, CoefficientField, ElementKind, Mesh};
use sgp::operator::{DiscreteProblem, Preconditioner, PreconditionerKind};
use sgp::orthopoly::{d_sequence, gauss_rule, Family};
use sgp::stochastic_basis::{IndexSetKind, MultiIndexSet};
use sgp::Error;

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SgpStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Numerical = 3,
    Panic = 4,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SgpFamily {
    Hermite = 0,
    Legendre = 1,
    ChebyshevU = 2,
    /// Uses the `gamma` argument.
    Gegenbauer = 3,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SgpPreconditionerKind {
    MeanBased = 0,
    TruncatedTp = 1,
    SplittingTp = 2,
    SplittingComplete = 3,
    GaussSeidel = 4,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SgpElement {
    /// Bilinear quadrilaterals.
    Q1 = 0,
    /// Two linear triangles per square.
    P1 = 1,
}

/// Polynomial basis: `complete != 0` selects total degree `< s[0]` in `k`
/// variables, otherwise `s` holds the `k` per-variable sizes.
#[repr(C)]
#[derive(Clone, Copy, Debug)]
pub struct SgpBasis {
    pub k: usize,
    pub complete: i32,
    pub s: *const usize,
}

/// Spectral enclosure `[c_lower, c_upper]` of `M⁻¹A`. Fields that do not
/// apply to the preconditioner kind are NaN, `t_arg` is 0 then.
#[repr(C)]
#[derive(Clone, Copy, Debug, Default)]
pub struct SgpBounds {
    pub c_lower: f64,
    pub c_upper: f64,
    pub kappa_bound: f64,
    pub vacuous: i32,
    pub cbs_gamma: f64,
    pub gs2_kappa_bound: f64,
    pub t_arg: usize,
}

pub struct SgpProblem(DiscreteProblem);

pub struct SgpPreconditioner(Preconditioner);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

enum Fail {
    Null(&'static str),
    Sgp(Error),
}

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail::Sgp(e)
    }
}

fn invalid(msg: impl Into<String>) -> Fail {
    Fail::Sgp(Error::Usage(msg.into()))
}

/// Runs `f`, records any failure and maps it to a status.
fn guard(f: impl FnOnce() -> Result<(), Fail>) -> SgpStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => SgpStatus::Ok,
        Ok(Err(Fail::Null(what))) => {
            set_error(format!("null pointer: {what}"));
            SgpStatus::NullPointer
        }
        Ok(Err(Fail::Sgp(e))) => {
            set_error(e.to_string());
            if e.is_numerical() {
                SgpStatus::Numerical
            } else {
                SgpStatus::InvalidArgument
            }
        }
        Err(p) => {
            let msg = p
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| p.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_error(format!("internal panic: {msg}"));
            SgpStatus::Panic
        }
    }
}

unsafe fn slice<'a, T>(p: *const T, n: usize, what: &'static str) -> Result<&'a [T], Fail> {
    if n == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(Fail::Null(what));
    }
    Ok(std::slice::from_raw_parts(p, n))
}

unsafe fn slice_mut<'a, T>(p: *mut T, n: usize, what: &'static str) -> Result<&'a mut [T], Fail> {
    if n == 0 {
        return Ok(&mut []);
    }
    if p.is_null() {
        return Err(Fail::Null(what));
    }
    Ok(std::slice::from_raw_parts_mut(p, n))
}

unsafe fn out<'a, T>(p: *mut T, what: &'static str) -> Result<&'a mut T, Fail> {
    p.as_mut().ok_or(Fail::Null(what))
}

fn family(f: SgpFamily, gamma: f64) -> Result<Family, Fail> {
    Ok(match f {
        SgpFamily::Hermite => Family::Hermite,
        SgpFamily::Legendre => Family::Legendre,
        SgpFamily::ChebyshevU => Family::ChebyshevU,
        SgpFamily::Gegenbauer => Family::gegenbauer(gamma)?,
    })
}

fn kind(k: SgpPreconditionerKind) -> PreconditionerKind {
    match k {
        SgpPreconditionerKind::MeanBased => PreconditionerKind::MeanBased,
        SgpPreconditionerKind::TruncatedTp => PreconditionerKind::TruncatedTp,
        SgpPreconditionerKind::SplittingTp => PreconditionerKind::SplittingTp,
        SgpPreconditionerKind::SplittingComplete => PreconditionerKind::SplittingComplete,
        SgpPreconditionerKind::GaussSeidel => PreconditionerKind::GaussSeidel2,
    }
}

unsafe fn basis_kind(b: &SgpBasis) -> Result<IndexSetKind, Fail> {
    if b.complete != 0 {
        let s = slice(b.s, 1, "basis.s")?;
        Ok(IndexSetKind::Complete { k: b.k, s: s[0] })
    } else {
        Ok(IndexSetKind::TensorProduct(slice(b.s, b.k, "basis.s")?.to_vec()))
    }
}

fn nan_or(x: Option<f64>) -> f64 {
    x.unwrap_or(f64::NAN)
}

fn to_c(b: &SpectralBounds) -> SgpBounds {
    SgpBounds {
        c_lower: b.c_lower,
        c_upper: b.c_upper,
        kappa_bound: b.kappa_bound,
        vacuous: b.vacuous as i32,
        cbs_gamma: nan_or(b.cbs_gamma),
        gs2_kappa_bound: nan_or(b.gs2_kappa_bound),
        t_arg: b.t_arg.unwrap_or(0),
    }
}

/// Message of the last failure on this thread, or NULL. The pointer stays
/// valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn sgp_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn sgp_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Writes `d_1 … d_s` to `d_out` (length `s`).
///
/// # Safety
/// `d_out` must point to `s` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn sgp_d_sequence(
    fam: SgpFamily,
    gamma: f64,
    mu: f64,
    s: usize,
    d_out: *mut f64,
) -> SgpStatus {
    guard(|| {
        let out = slice_mut(d_out, s, "d_out")?;
        let d = d_sequence(family(fam, gamma)?, mu, s)?;
        for (t, o) in out.iter_mut().enumerate() {
            *o = d.d(t + 1);
        }
        Ok(())
    })
}

/// Gauss nodes and weights of the `s`-point rule.
///
/// # Safety
/// `nodes` and `weights` must each point to `s` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn sgp_gauss_rule(
    fam: SgpFamily,
    gamma: f64,
    s: usize,
    nodes: *mut f64,
    weights: *mut f64,
) -> SgpStatus {
    guard(|| {
        let n = slice_mut(nodes, s, "nodes")?;
        let w = slice_mut(weights, s, "weights")?;
        let rule = gauss_rule(family(fam, gamma)?, s)?;
        n.copy_from_slice(&rule.nodes);
        w.copy_from_slice(&rule.weights);
        Ok(())
    })
}

/// Analytic bounds for a preconditioner kind at dominance ratio `mu`.
///
/// # Safety
/// `basis.s` must be valid as described on [`SgpBasis`]; `out` must be
/// writable.
#[no_mangle]
pub unsafe extern "C" fn sgp_bounds(
    pk: SgpPreconditionerKind,
    fam: SgpFamily,
    gamma: f64,
    basis: SgpBasis,
    mu: f64,
    out_bounds: *mut SgpBounds,
) -> SgpStatus {
    guard(|| {
        let o = out(out_bounds, "out")?;
        let b = bounds_for(kind(pk), family(fam, gamma)?, &basis_kind(&basis)?, mu)?;
        *o = to_c(&b);
        Ok(())
    })
}

/// Assembles a problem on `(0,1)` or `(0,1)²` with piecewise constant
/// coefficients. `coeffs` holds `(basis.k + 1) × n_elements` values, term
/// major: `coeffs[k * n_elements + j]` is `a_k` on element `j`. In 2D the
/// elements are numbered row by row along x. Pass `ny = 0` for 1D.
///
/// # Safety
/// `coeffs` must hold the stated number of doubles; `basis.s` as on
/// [`SgpBasis`]; `out_problem` must be writable.
#[no_mangle]
pub unsafe extern "C" fn sgp_problem_new(
    nx: usize,
    ny: usize,
    element: SgpElement,
    fam: SgpFamily,
    gamma: f64,
    basis: SgpBasis,
    coeffs: *const f64,
    out_problem: *mut *mut SgpProblem,
) -> SgpStatus {
    guard(|| {
        let o = out(out_problem, "out_problem")?;
        *o = ptr::null_mut();
        let mesh = if ny == 0 {
            Mesh::interval(nx)?
        } else {
            let k = match element {
                SgpElement::Q1 => ElementKind::Bilinear,
                SgpElement::P1 => ElementKind::SplitTriangles,
            };
            Mesh::square(nx, ny, k)?
        };
        let n_el = mesh.num_elements();
        let terms = basis.k.checked_add(1).ok_or_else(|| invalid("k overflows"))?;
        let len = terms.checked_mul(n_el).ok_or_else(|| invalid("coefficient array too large"))?;
        let c = slice(coeffs, len, "coeffs")?;
        let field = CoefficientField::new(c.chunks(n_el).map(<[f64]>::to_vec).collect())?;
        let set = MultiIndexSet::new(basis_kind(&basis)?)?;
        let p = DiscreteProblem::assemble(mesh, field, family(fam, gamma)?, set)?;
        *o = Box::into_raw(Box::new(SgpProblem(p)));
        Ok(())
    })
}

/// # Safety
/// `problem` must come from [`sgp_problem_new`] and not be used afterwards.
/// NULL is ignored.
#[no_mangle]
pub unsafe extern "C" fn sgp_problem_free(problem: *mut SgpProblem) {
    if !problem.is_null() {
        drop(Box::from_raw(problem));
    }
}

/// Total number of unknowns `N_P · N_FE`.
///
/// # Safety
/// `problem` must be a live handle; `out_dim` writable.
#[no_mangle]
pub unsafe extern "C" fn sgp_problem_dim(problem: *const SgpProblem, out_dim: *mut usize) -> SgpStatus {
    guard(|| {
        let p = problem.as_ref().ok_or(Fail::Null("problem"))?;
        *out(out_dim, "out_dim")? = p.0.dim();
        Ok(())
    })
}

/// Sampled dominance ratio μ and the classical ratio μ_class.
///
/// # Safety
/// `problem` must be a live handle; the outputs writable.
#[no_mangle]
pub unsafe extern "C" fn sgp_problem_mu(
    problem: *const SgpProblem,
    out_mu: *mut f64,
    out_mu_class: *mut f64,
) -> SgpStatus {
    guard(|| {
        let p = problem.as_ref().ok_or(Fail::Null("problem"))?;
        let (mu, mu_class) = compute_mu(&p.0.field);
        *out(out_mu, "out_mu")? = mu;
        *out(out_mu_class, "out_mu_class")? = mu_class;
        Ok(())
    })
}

/// `y = A x`; both arrays have length `sgp_problem_dim`.
///
/// # Safety
/// `problem` must be a live handle; `x` and `y` must not overlap.
#[no_mangle]
pub unsafe extern "C" fn sgp_problem_matvec(
    problem: *const SgpProblem,
    x: *const f64,
    y: *mut f64,
) -> SgpStatus {
    guard(|| {
        let p = problem.as_ref().ok_or(Fail::Null("problem"))?;
        let n = p.0.dim();
        let x = slice(x, n, "x")?;
        let y = slice_mut(y, n, "y")?;
        p.0.operator.matvec_into(x, y)?;
        Ok(())
    })
}

/// Builds and factors a preconditioner for `problem`. The handle does not
/// borrow the problem.
///
/// # Safety
/// `problem` must be a live handle; `out_prec` writable.
#[no_mangle]
pub unsafe extern "C" fn sgp_preconditioner_new(
    problem: *const SgpProblem,
    pk: SgpPreconditionerKind,
    out_prec: *mut *mut SgpPreconditioner,
) -> SgpStatus {
    guard(|| {
        let o = out(out_prec, "out_prec")?;
        *o = ptr::null_mut();
        let p = problem.as_ref().ok_or(Fail::Null("problem"))?;
        let m = Preconditioner::build(&p.0, kind(pk))?;
        *o = Box::into_raw(Box::new(SgpPreconditioner(m)));
        Ok(())
    })
}

/// # Safety
/// `prec` must come from [`sgp_preconditioner_new`] and not be used
/// afterwards. NULL is ignored.
#[no_mangle]
pub unsafe extern "C" fn sgp_preconditioner_free(prec: *mut SgpPreconditioner) {
    if !prec.is_null() {
        drop(Box::from_raw(prec));
    }
}

/// `z = M⁻¹ r`.
///
/// # Safety
/// `prec` must be a live handle; `r` and `z` hold the problem dimension.
#[no_mangle]
pub unsafe extern "C" fn sgp_preconditioner_solve(
    prec: *const SgpPreconditioner,
    r: *const f64,
    z: *mut f64,
) -> SgpStatus {
    guard(|| {
        let m = prec.as_ref().ok_or(Fail::Null("prec"))?;
        let n = m.0.dim();
        let r = slice(r, n, "r")?;
        let z = slice_mut(z, n, "z")?;
        z.copy_from_slice(&m.0.apply_inverse(r)?);
        Ok(())
    })
}

/// PCG from a zero initial guess until `‖r‖/‖b‖ ≤ tol`.
///
/// # Safety
/// Live handles; `b` and `x` hold the problem dimension; `out_iterations`
/// may be NULL.
#[no_mangle]
pub unsafe extern "C" fn sgp_pcg(
    problem: *const SgpProblem,
    prec: *const SgpPreconditioner,
    b: *const f64,
    tol: f64,
    max_iter: usize,
    x: *mut f64,
    out_iterations: *mut usize,
) -> SgpStatus {
    guard(|| {
        let p = problem.as_ref().ok_or(Fail::Null("problem"))?;
        let m = prec.as_ref().ok_or(Fail::Null("prec"))?;
        let n = p.0.dim();
        let b = slice(b, n, "b")?;
        let x = slice_mut(x, n, "x")?;
        let res = pcg(&p.0.operator, &m.0, b, tol, max_iter)?;
        x.copy_from_slice(&res.x);
        if let Some(it) = out_iterations.as_mut() {
            *it = res.iterations;
        }
        Ok(())
    })
}

/// Extreme eigenvalues of `M⁻¹A` by Lanczos (dense fallback on small
/// problems).
///
/// # Safety
/// Live handles; the outputs writable.
#[no_mangle]
pub unsafe extern "C" fn sgp_extreme_eigs(
    problem: *const SgpProblem,
    prec: *const SgpPreconditioner,
    tol: f64,
    max_iter: usize,
    seed: u64,
    out_min: *mut f64,
    out_max: *mut f64,
) -> SgpStatus {
    guard(|| {
        let p = problem.as_ref().ok_or(Fail::Null("problem"))?;
        let m = prec.as_ref().ok_or(Fail::Null("prec"))?;
        let lo = out(out_min, "out_min")?;
        let hi = out(out_max, "out_max")?;
        let e = extreme_eigs_generalized(&p.0.operator, &m.0, LanczosOptions { tol, max_iter, seed })?;
        *lo = e.lambda_min;
        *hi = e.lambda_max;
        Ok(())
    })
}
