//! Symmetric orthogonal polynomial families, their Jacobi matrices, Gauss
//! rules and the `d_j` sequence that drives the splitting bounds.
//!
//! All families here have `α_n = 0`, so Jacobi matrices have a zero diagonal.

use crate::error::{Error, Result};

mod tridiag;

pub use tridiag::{tridiag_eigen, TridiagEigen};

/// Default relative tolerance for the tridiagonal eigensolver.
pub const EIG_TOL: f64 = f64::EPSILON;

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Family {
    Hermite,
    Legendre,
    ChebyshevU,
    Gegenbauer { gamma: f64 },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Support {
    /// (−∞, ∞)
    RealLine,
    /// [−1, 1]
    Interval,
}

impl Family {
    pub fn gegenbauer(gamma: f64) -> Result<Self> {
        let f = Family::Gegenbauer { gamma };
        f.validate()?;
        Ok(f)
    }

    pub fn validate(&self) -> Result<()> {
        if let Family::Gegenbauer { gamma } = *self {
            if !(gamma > -0.5) || !gamma.is_finite() {
                return Err(Error::Domain(format!(
                    "gegenbauer parameter must satisfy gamma > -1/2, got {gamma}"
                )));
            }
        }
        Ok(())
    }

    pub fn support(&self) -> Support {
        match self {
            Family::Hermite => Support::RealLine,
            _ => Support::Interval,
        }
    }

    /// Beta-type families live on [−1, 1].
    pub fn is_bounded(&self) -> bool {
        self.support() == Support::Interval
    }

    pub fn name(&self) -> String {
        match self {
            Family::Hermite => "hermite".into(),
            Family::Legendre => "legendre".into(),
            Family::ChebyshevU => "chebyshev-u".into(),
            Family::Gegenbauer { gamma } => format!("gegenbauer({gamma})"),
        }
    }

    /// `β_n`, unchecked. `n ≥ 1`.
    fn beta(&self, n: usize) -> f64 {
        let nf = n as f64;
        match *self {
            Family::Hermite => nf / 2.0,
            Family::Legendre => nf * nf / ((2.0 * nf - 1.0) * (2.0 * nf + 1.0)),
            Family::ChebyshevU => 0.25,
            Family::Gegenbauer { gamma } => {
                // γ = 0 (Chebyshev T) is a removable 0/0 at n = 1.
                if n == 1 && gamma == 0.0 {
                    return 0.5;
                }
                (nf + 2.0 * gamma - 1.0) * nf
                    / ((2.0 * nf - 2.0 + 2.0 * gamma) * (2.0 * nf + 2.0 * gamma))
            }
        }
    }
}

/// `(α_n, β_n)` of the three-term recurrence.
pub fn recurrence_coeffs(family: Family, n: usize) -> Result<(f64, f64)> {
    family.validate()?;
    if n == 0 {
        return Err(Error::Domain("recurrence index must be >= 1".into()));
    }
    Ok((0.0, family.beta(n)))
}

#[derive(Clone, Debug, PartialEq)]
pub struct JacobiMatrix {
    pub diagonal: Vec<f64>,
    pub offdiagonal: Vec<f64>,
}

impl JacobiMatrix {
    pub fn size(&self) -> usize {
        self.diagonal.len()
    }

    /// Largest absolute row sum.
    pub fn norm_inf(&self) -> f64 {
        let n = self.size();
        (0..n)
            .map(|i| {
                let mut r = self.diagonal[i].abs();
                if i > 0 {
                    r += self.offdiagonal[i - 1].abs();
                }
                if i + 1 < n {
                    r += self.offdiagonal[i].abs();
                }
                r
            })
            .fold(0.0, f64::max)
    }
}

pub fn jacobi_matrix(family: Family, s: usize) -> Result<JacobiMatrix> {
    family.validate()?;
    if s == 0 {
        return Err(Error::Domain("jacobi matrix size must be >= 1".into()));
    }
    Ok(JacobiMatrix {
        diagonal: vec![0.0; s],
        offdiagonal: (1..s).map(|n| family.beta(n).sqrt()).collect(),
    })
}

/// All eigenvalues of `j`, ascending.
pub fn tridiag_eigenvalues(j: &JacobiMatrix, tol: f64) -> Result<Vec<f64>> {
    if !(tol > 0.0) {
        return Err(Error::Domain(format!("tolerance must be positive, got {tol}")));
    }
    Ok(tridiag_eigen(&j.diagonal, &j.offdiagonal, &[], tol)?.values)
}

/// `λ_max(ψ_s)`, the largest root of the degree-`s` polynomial.
pub fn max_root(family: Family, s: usize) -> Result<f64> {
    if s == 1 {
        family.validate()?;
        return Ok(0.0);
    }
    let j = jacobi_matrix(family, s)?;
    let ev = tridiag_eigenvalues(&j, EIG_TOL)?;
    Ok(*ev.last().unwrap())
}

#[derive(Clone, Debug, PartialEq)]
pub struct GaussRule {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl GaussRule {
    pub fn integrate(&self, f: impl Fn(f64) -> f64) -> f64 {
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(&x, &w)| w * f(x))
            .sum()
    }
}

/// Quadrature attached to the flipped Jacobi matrix: nodes are the roots of
/// `ψ_s`, weights are the squared *last* eigenvector components of
/// `G_{s,1}`, so that `Σ w_j f(λ_j) = e_sᵀ f(G_{s,1}) e_s`.
pub fn gauss_rule(family: Family, s: usize) -> Result<GaussRule> {
    let j = jacobi_matrix(family, s)?;
    let eig = tridiag_eigen(&j.diagonal, &j.offdiagonal, &[s - 1], EIG_TOL)?;
    let weights = eig.rows[0].iter().map(|z| z * z).collect();
    Ok(GaussRule {
        nodes: eig.values,
        weights,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct DSequence {
    pub family: Family,
    pub mu: f64,
    /// `d_1 … d_s`; `values[0] = d_1 = 1`.
    pub values: Vec<f64>,
}

impl DSequence {
    /// `d_t`, 1-based.
    pub fn d(&self, t: usize) -> f64 {
        self.values[t - 1]
    }

    pub fn last(&self) -> f64 {
        *self.values.last().unwrap()
    }
}

/// `d_1 = 1`, `d_j = 1 − μ² β_{j−1} / d_{j−1}`.
pub fn d_sequence(family: Family, mu: f64, s: usize) -> Result<DSequence> {
    family.validate()?;
    if s == 0 {
        return Err(Error::Domain("s must be >= 1".into()));
    }
    if !(mu >= 0.0) || !mu.is_finite() {
        return Err(Error::Domain(format!("mu must be finite and >= 0, got {mu}")));
    }
    let mut values = Vec::with_capacity(s);
    values.push(1.0);
    for j in 2..=s {
        let prev = values[j - 2];
        let d = 1.0 - mu * mu * family.beta(j - 1) / prev;
        if !(d > 0.0) {
            return Err(Error::DominanceViolation { index: j, value: d });
        }
        values.push(d);
    }
    Ok(DSequence { family, mu, values })
}

/// `1/d_s` evaluated through the Gauss rule.
pub fn d_inverse_by_quadrature(family: Family, mu: f64, s: usize) -> Result<f64> {
    let rule = gauss_rule(family, s)?;
    let mut acc = 0.0;
    for (&x, &w) in rule.nodes.iter().zip(&rule.weights) {
        let den = 1.0 - mu * mu * x * x;
        if !(den > 0.0) {
            return Err(Error::DominanceViolation { index: s, value: den });
        }
        acc += w / den;
    }
    Ok(acc)
}

/// The two non-unit eigenvalues of `H_s`: `1 ∓ √(1 − d_s)`.
pub fn h_extreme_eigs(family: Family, mu: f64, s: usize) -> Result<(f64, f64)> {
    let d = d_sequence(family, mu, s)?;
    Ok(h_extremes_from_d(d.last()))
}

pub(crate) fn h_extremes_from_d(d: f64) -> (f64, f64) {
    let r = (1.0 - d).max(0.0).sqrt();
    (1.0 - r, 1.0 + r)
}

/// Shape of the polynomial space, as needed by [`mu_bar`].
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum BasisShape {
    TensorProduct(Vec<usize>),
    Complete { k: usize, s: usize },
}

/// Positivity threshold `μ̄`. Returns `+∞` when no constraint applies
/// (Hermite with all degrees zero).
pub fn mu_bar(family: Family, shape: &BasisShape) -> f64 {
    if family.is_bounded() {
        return 1.0;
    }
    let m = match shape {
        BasisShape::TensorProduct(s) => {
            s.iter().map(|&x| x.saturating_sub(1)).sum::<usize>() as f64 * 2.0
        }
        BasisShape::Complete { s, .. } => 2.0 * (s.saturating_sub(1)) as f64,
    };
    if m == 0.0 {
        f64::INFINITY
    } else {
        m.powf(-0.5)
    }
}
