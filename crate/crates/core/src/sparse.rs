//! Compressed-row sparse matrices and an envelope (skyline) Cholesky.

use crate::error::{Error, Result};

/// Compressed-row matrix with sorted, duplicate-free column indices.
#[derive(Clone, Debug, PartialEq)]
pub struct CsrMatrix {
    nrows: usize,
    ncols: usize,
    indptr: Vec<usize>,
    indices: Vec<usize>,
    values: Vec<f64>,
}

impl CsrMatrix {
    pub fn zeros(nrows: usize, ncols: usize) -> Self {
        CsrMatrix {
            nrows,
            ncols,
            indptr: vec![0; nrows + 1],
            indices: Vec::new(),
            values: Vec::new(),
        }
    }

    pub fn identity(n: usize) -> Self {
        CsrMatrix {
            nrows: n,
            ncols: n,
            indptr: (0..=n).collect(),
            indices: (0..n).collect(),
            values: vec![1.0; n],
        }
    }

    /// Builds from `(row, col, value)` triplets; duplicates are summed in
    /// input order and exact zeros are kept only if `keep_zeros`.
    pub fn from_triplets(
        nrows: usize,
        ncols: usize,
        triplets: &[(usize, usize, f64)],
        keep_zeros: bool,
    ) -> Result<Self> {
        let mut counts = vec![0usize; nrows + 1];
        for &(r, c, _) in triplets {
            if r >= nrows || c >= ncols {
                return Err(Error::Domain(format!(
                    "triplet ({r}, {c}) outside a {nrows}x{ncols} matrix"
                )));
            }
            counts[r + 1] += 1;
        }
        for i in 0..nrows {
            counts[i + 1] += counts[i];
        }
        let mut order = vec![0usize; triplets.len()];
        let mut next = counts.clone();
        for (t, &(r, _, _)) in triplets.iter().enumerate() {
            order[next[r]] = t;
            next[r] += 1;
        }
        let mut indptr = Vec::with_capacity(nrows + 1);
        let mut indices = Vec::with_capacity(triplets.len());
        let mut values = Vec::with_capacity(triplets.len());
        indptr.push(0);
        let mut row_buf: Vec<(usize, f64)> = Vec::new();
        for r in 0..nrows {
            row_buf.clear();
            row_buf.extend(order[counts[r]..counts[r + 1]].iter().map(|&t| (triplets[t].1, triplets[t].2)));
            // Stable sort keeps input order among duplicates, so sums are
            // reproducible.
            row_buf.sort_by_key(|&(c, _)| c);
            let mut k = 0;
            while k < row_buf.len() {
                let c = row_buf[k].0;
                let mut v = 0.0;
                while k < row_buf.len() && row_buf[k].0 == c {
                    v += row_buf[k].1;
                    k += 1;
                }
                if keep_zeros || v != 0.0 {
                    indices.push(c);
                    values.push(v);
                }
            }
            indptr.push(indices.len());
        }
        Ok(CsrMatrix {
            nrows,
            ncols,
            indptr,
            indices,
            values,
        })
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn indptr(&self) -> &[usize] {
        &self.indptr
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Column indices and values of row `i`.
    pub fn row(&self, i: usize) -> (&[usize], &[f64]) {
        let (a, b) = (self.indptr[i], self.indptr[i + 1]);
        (&self.indices[a..b], &self.values[a..b])
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let (cols, vals) = self.row(i);
        match cols.binary_search(&j) {
            Ok(p) => vals[p],
            Err(_) => 0.0,
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.nrows).flat_map(move |i| {
            let (cols, vals) = self.row(i);
            cols.iter().zip(vals).map(move |(&j, &v)| (i, j, v))
        })
    }

    /// `y = self * x`.
    pub fn matvec_into(&self, x: &[f64], y: &mut [f64]) {
        for (i, yi) in y.iter_mut().enumerate() {
            let (cols, vals) = self.row(i);
            let mut acc = 0.0;
            for (&j, &v) in cols.iter().zip(vals) {
                acc += v * x[j];
            }
            *yi = acc;
        }
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.nrows];
        self.matvec_into(x, &mut y);
        y
    }

    pub fn scaled(&self, alpha: f64) -> Self {
        let mut out = self.clone();
        out.values.iter_mut().for_each(|v| *v *= alpha);
        out
    }

    pub fn is_zero(&self) -> bool {
        self.values.iter().all(|&v| v == 0.0)
    }

    pub fn is_symmetric(&self, tol: f64) -> bool {
        self.nrows == self.ncols && self.iter().all(|(i, j, v)| (self.get(j, i) - v).abs() <= tol)
    }

    /// Kronecker product `self ⊗ other`.
    pub fn kron(&self, other: &CsrMatrix) -> CsrMatrix {
        let nrows = self.nrows * other.nrows;
        let ncols = self.ncols * other.ncols;
        let mut indptr = Vec::with_capacity(nrows + 1);
        let mut indices = Vec::with_capacity(self.nnz() * other.nnz());
        let mut values = Vec::with_capacity(self.nnz() * other.nnz());
        indptr.push(0);
        for i in 0..self.nrows {
            let (ac, av) = self.row(i);
            for p in 0..other.nrows {
                let (bc, bv) = other.row(p);
                for (&j, &a) in ac.iter().zip(av) {
                    for (&q, &b) in bc.iter().zip(bv) {
                        indices.push(j * other.ncols + q);
                        values.push(a * b);
                    }
                }
                indptr.push(indices.len());
            }
        }
        CsrMatrix {
            nrows,
            ncols,
            indptr,
            indices,
            values,
        }
    }

    /// Rows and columns restricted to `keep` (in that order).
    pub fn submatrix(&self, keep: &[usize]) -> CsrMatrix {
        let mut map = vec![usize::MAX; self.ncols];
        for (new, &old) in keep.iter().enumerate() {
            map[old] = new;
        }
        let mut trip = Vec::new();
        for (new_i, &old_i) in keep.iter().enumerate() {
            let (cols, vals) = self.row(old_i);
            for (&j, &v) in cols.iter().zip(vals) {
                if map[j] != usize::MAX {
                    trip.push((new_i, map[j], v));
                }
            }
        }
        CsrMatrix::from_triplets(keep.len(), keep.len(), &trip, true).expect("indices in range")
    }

    /// Row-major dense copy.
    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let mut d = vec![vec![0.0; self.ncols]; self.nrows];
        for (i, j, v) in self.iter() {
            d[i][j] = v;
        }
        d
    }

    /// Matrix Market coordinate text, 1-based, 17 significant digits.
    pub fn to_matrix_market(&self) -> String {
        let mut s = String::new();
        s.push_str("%%MatrixMarket matrix coordinate real general\n");
        s.push_str(&format!("{} {} {}\n", self.nrows, self.ncols, self.nnz()));
        for (i, j, v) in self.iter() {
            s.push_str(&format!("{} {} {:.16e}\n", i + 1, j + 1, v));
        }
        s
    }
}

/// Cholesky factor `L` stored by rows over the lower envelope of a symmetric
/// positive definite matrix. Fill-in stays inside the envelope, so banded
/// stiffness-like matrices factor in O(n·w²).
#[derive(Clone, Debug)]
pub struct SkylineCholesky {
    n: usize,
    /// First stored column of each row.
    first: Vec<usize>,
    /// Offset of row `i`'s first stored entry in `data`.
    start: Vec<usize>,
    data: Vec<f64>,
}

impl SkylineCholesky {
    /// Factors the lower triangle of `a`; the upper triangle is ignored.
    pub fn factor(a: &CsrMatrix) -> Result<Self> {
        let n = a.nrows();
        if a.ncols() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: a.ncols(),
            });
        }
        let mut first = vec![0usize; n];
        for (i, f) in first.iter_mut().enumerate() {
            let (cols, _) = a.row(i);
            *f = cols.first().map_or(i, |&c| c.min(i));
        }
        let mut start = vec![0usize; n + 1];
        for i in 0..n {
            start[i + 1] = start[i] + (i - first[i] + 1);
        }
        let mut data = vec![0.0; start[n]];
        for i in 0..n {
            let (cols, vals) = a.row(i);
            for (&j, &v) in cols.iter().zip(vals) {
                if j <= i {
                    data[start[i] + j - first[i]] += v;
                }
            }
        }
        for i in 0..n {
            let fi = first[i];
            let si = start[i];
            for j in fi..i {
                let fj = first[j];
                let sj = start[j];
                let lo = fi.max(fj);
                let len = j - lo;
                let ri = &data[si + lo - fi..si + lo - fi + len];
                let rj = &data[sj + lo - fj..sj + lo - fj + len];
                let dot: f64 = ri.iter().zip(rj).map(|(x, y)| x * y).sum();
                let ljj = data[sj + j - fj];
                let idx = si + j - fi;
                data[idx] = (data[idx] - dot) / ljj;
            }
            let row = &data[si..si + i - fi];
            let sq: f64 = row.iter().map(|x| x * x).sum();
            let piv = data[si + i - fi] - sq;
            if !(piv > 0.0) || !piv.is_finite() {
                return Err(Error::Factorization { row: i, pivot: piv });
            }
            data[si + i - fi] = piv.sqrt();
        }
        start.truncate(n);
        Ok(SkylineCholesky {
            n,
            first,
            start,
            data,
        })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    /// Stored entries of `L`.
    pub fn envelope_size(&self) -> usize {
        self.data.len()
    }

    /// Overwrites `b` with `A⁻¹ b`.
    pub fn solve_in_place(&self, b: &mut [f64]) {
        let n = self.n;
        for i in 0..n {
            let fi = self.first[i];
            let si = self.start[i];
            let row = &self.data[si..si + i - fi];
            let dot: f64 = row.iter().zip(&b[fi..i]).map(|(l, y)| l * y).sum();
            b[i] = (b[i] - dot) / self.data[si + i - fi];
        }
        for i in (0..n).rev() {
            let fi = self.first[i];
            let si = self.start[i];
            let xi = b[i] / self.data[si + i - fi];
            b[i] = xi;
            let row = &self.data[si..si + i - fi];
            for (bk, l) in b[fi..i].iter_mut().zip(row) {
                *bk -= l * xi;
            }
        }
    }
}
