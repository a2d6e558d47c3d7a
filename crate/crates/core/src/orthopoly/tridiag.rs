//! Implicit QL with Wilkinson shifts for symmetric tridiagonal matrices.
//!
//! Rotations act on columns of the eigenvector matrix, and every row of that
//! matrix evolves independently. So callers ask for a set of rows (first row
//! for Lanczos-style weights, last row for residual estimates) and pay O(s)
//! per row instead of O(s²).

use crate::error::{Error, Result};

#[derive(Clone, Debug)]
pub struct TridiagEigen {
    /// Ascending.
    pub values: Vec<f64>,
    /// `rows[r][i]` is component `requested_rows[r]` of the unit eigenvector
    /// belonging to `values[i]`.
    pub rows: Vec<Vec<f64>>,
}

/// Eigen-decomposition of the symmetric tridiagonal matrix with diagonal
/// `diag` and off-diagonal `off` (`off.len() == diag.len() - 1`).
pub fn tridiag_eigen(diag: &[f64], off: &[f64], rows: &[usize], tol: f64) -> Result<TridiagEigen> {
    let n = diag.len();
    if n == 0 || off.len() + 1 != n {
        return Err(Error::DimensionMismatch {
            expected: n.saturating_sub(1),
            got: off.len(),
        });
    }
    if let Some(&r) = rows.iter().find(|&&r| r >= n) {
        return Err(Error::Domain(format!("eigenvector row {r} out of range for size {n}")));
    }
    let tol = tol.max(f64::EPSILON);
    let mut d = diag.to_vec();
    let mut e = off.to_vec();
    e.push(0.0);
    let mut z: Vec<Vec<f64>> = rows
        .iter()
        .map(|&r| {
            let mut v = vec![0.0; n];
            v[r] = 1.0;
            v
        })
        .collect();

    let anorm = d
        .iter()
        .map(|x| x.abs())
        .chain(e.iter().map(|x| x.abs()))
        .fold(0.0, f64::max);
    let floor = f64::EPSILON * anorm;
    let cap = 50 * n.max(1);
    let mut total = 0usize;

    for l in 0..n {
        loop {
            let mut m = l;
            while m + 1 < n {
                let dd = d[m].abs() + d[m + 1].abs();
                if e[m].abs() <= tol * dd || e[m].abs() <= floor {
                    break;
                }
                m += 1;
            }
            if m == l {
                break;
            }
            total += 1;
            if total > cap {
                return Err(Error::NoConvergence {
                    solver: "tridiagonal QL",
                    iterations: total,
                });
            }
            let mut g = (d[l + 1] - d[l]) / (2.0 * e[l]);
            let mut r = g.hypot(1.0);
            g = d[m] - d[l] + e[l] / (g + r.copysign(g));
            let (mut s, mut c, mut p) = (1.0, 1.0, 0.0);
            let mut underflow = false;
            let mut i = m;
            while i > l {
                i -= 1;
                let f = s * e[i];
                let b = c * e[i];
                r = f.hypot(g);
                e[i + 1] = r;
                if r == 0.0 {
                    d[i + 1] -= p;
                    e[m] = 0.0;
                    underflow = true;
                    break;
                }
                s = f / r;
                c = g / r;
                g = d[i + 1] - p;
                r = (d[i] - g) * s + 2.0 * c * b;
                p = s * r;
                d[i + 1] = g + p;
                g = c * r - b;
                for row in z.iter_mut() {
                    let f = row[i + 1];
                    row[i + 1] = s * row[i] + c * f;
                    row[i] = c * row[i] - s * f;
                }
            }
            if underflow {
                continue;
            }
            d[l] -= p;
            e[l] = g;
            e[m] = 0.0;
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| d[a].total_cmp(&d[b]));
    let values = order.iter().map(|&i| d[i]).collect();
    let rows = z
        .into_iter()
        .map(|row| order.iter().map(|&i| row[i]).collect())
        .collect();
    Ok(TridiagEigen { values, rows })
}
