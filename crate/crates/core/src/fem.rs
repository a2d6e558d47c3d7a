//! Uniform meshes on `[0,1]^d`, element stiffness matrices, per-element
//! coefficient sampling, assembly of `F_k` and the dominance statistics.
//!
//! Boundary nodes carry homogeneous Dirichlet conditions and are dropped from
//! the numbering.

use crate::coeff_dsl::CoeffExpr;
use crate::error::{Error, Result};
use crate::sparse::CsrMatrix;

pub type FeMatrix = CsrMatrix;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ElementKind {
    /// Piecewise linear on intervals (1D).
    Linear,
    /// Bilinear Q1 on rectangles (2D).
    Bilinear,
    /// Two linear triangles per rectangle, split along the (0,0)-(1,1)
    /// diagonal (2D). Coefficients stay constant per rectangle.
    SplitTriangles,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Mesh {
    nx: usize,
    /// 0 in one dimension.
    ny: usize,
    kind: ElementKind,
}

impl Mesh {
    pub fn interval(n: usize) -> Result<Self> {
        if n < 2 {
            return Err(Error::Domain(format!("need at least 2 elements, got {n}")));
        }
        Ok(Mesh {
            nx: n,
            ny: 0,
            kind: ElementKind::Linear,
        })
    }

    pub fn square(nx: usize, ny: usize, kind: ElementKind) -> Result<Self> {
        if nx < 2 || ny < 2 {
            return Err(Error::Domain(format!(
                "need at least 2 elements per axis, got {nx}x{ny}"
            )));
        }
        if kind == ElementKind::Linear {
            return Err(Error::Domain("2D meshes use bilinear or split-triangle elements".into()));
        }
        Ok(Mesh { nx, ny, kind })
    }

    pub fn dim(&self) -> usize {
        if self.ny == 0 {
            1
        } else {
            2
        }
    }

    pub fn kind(&self) -> ElementKind {
        self.kind
    }

    /// `(n_x, n_y)`; `n_y = 0` in one dimension.
    pub fn extents(&self) -> (usize, usize) {
        (self.nx, self.ny)
    }

    pub fn num_elements(&self) -> usize {
        if self.ny == 0 {
            self.nx
        } else {
            self.nx * self.ny
        }
    }

    /// Interior (free) node count.
    pub fn num_dofs(&self) -> usize {
        if self.ny == 0 {
            self.nx - 1
        } else {
            (self.nx - 1) * (self.ny - 1)
        }
    }

    pub fn h(&self) -> (f64, f64) {
        let hx = 1.0 / self.nx as f64;
        let hy = if self.ny == 0 { 0.0 } else { 1.0 / self.ny as f64 };
        (hx, hy)
    }

    /// Element midpoint; `y` is `None` in one dimension.
    pub fn midpoint(&self, j: usize) -> (f64, Option<f64>) {
        let (hx, hy) = self.h();
        if self.ny == 0 {
            ((j as f64 + 0.5) * hx, None)
        } else {
            let (ex, ey) = (j % self.nx, j / self.nx);
            ((ex as f64 + 0.5) * hx, Some((ey as f64 + 0.5) * hy))
        }
    }

    /// Interior numbering of the element's nodes; `None` for boundary nodes.
    /// 2D node order: (ex,ey), (ex+1,ey), (ex+1,ey+1), (ex,ey+1).
    pub fn element_dofs(&self, j: usize) -> Vec<Option<usize>> {
        if self.ny == 0 {
            let inner = |i: usize| (i >= 1 && i < self.nx).then(|| i - 1);
            vec![inner(j), inner(j + 1)]
        } else {
            let (ex, ey) = (j % self.nx, j / self.nx);
            let node = |ix: usize, iy: usize| {
                (ix >= 1 && ix < self.nx && iy >= 1 && iy < self.ny)
                    .then(|| (iy - 1) * (self.nx - 1) + (ix - 1))
            };
            vec![
                node(ex, ey),
                node(ex + 1, ey),
                node(ex + 1, ey + 1),
                node(ex, ey + 1),
            ]
        }
    }

    /// Local stiffness with unit coefficient (row-major).
    pub fn element_stiffness(&self, _j: usize) -> Vec<Vec<f64>> {
        let (hx, hy) = self.h();
        match self.kind {
            ElementKind::Linear => {
                let a = 1.0 / hx;
                vec![vec![a, -a], vec![-a, a]]
            }
            ElementKind::Bilinear => {
                let rx = hy / hx / 6.0;
                let ry = hx / hy / 6.0;
                let kx = [
                    [2.0, -2.0, -1.0, 1.0],
                    [-2.0, 2.0, 1.0, -1.0],
                    [-1.0, 1.0, 2.0, -2.0],
                    [1.0, -1.0, -2.0, 2.0],
                ];
                let ky = [
                    [2.0, 1.0, -1.0, -2.0],
                    [1.0, 2.0, -2.0, -1.0],
                    [-1.0, -2.0, 2.0, 1.0],
                    [-2.0, -1.0, 1.0, 2.0],
                ];
                (0..4)
                    .map(|r| (0..4).map(|c| rx * kx[r][c] + ry * ky[r][c]).collect())
                    .collect()
            }
            ElementKind::SplitTriangles => {
                let pts = [(0.0, 0.0), (hx, 0.0), (hx, hy), (0.0, hy)];
                let mut k = vec![vec![0.0; 4]; 4];
                for tri in [[0usize, 1, 2], [0, 2, 3]] {
                    let local = triangle_stiffness([pts[tri[0]], pts[tri[1]], pts[tri[2]]]);
                    for a in 0..3 {
                        for b in 0..3 {
                            k[tri[a]][tri[b]] += local[a][b];
                        }
                    }
                }
                k
            }
        }
    }

    /// `∫ φ_r` over the element for each local node.
    fn element_hat_integrals(&self) -> Vec<f64> {
        let (hx, hy) = self.h();
        match self.kind {
            ElementKind::Linear => vec![hx / 2.0; 2],
            ElementKind::Bilinear => vec![hx * hy / 4.0; 4],
            ElementKind::SplitTriangles => {
                let a = hx * hy;
                vec![a / 3.0, a / 6.0, a / 3.0, a / 6.0]
            }
        }
    }

    /// Points at which the sup-based dominance is sampled: a uniform sub-grid
    /// with `refine` cells per element and axis, vertices included.
    pub fn refined_points(&self, refine: usize) -> Vec<(f64, Option<f64>)> {
        let refine = refine.max(1);
        let mx = self.nx * refine;
        if self.ny == 0 {
            (0..=mx).map(|i| (i as f64 / mx as f64, None)).collect()
        } else {
            let my = self.ny * refine;
            let mut out = Vec::with_capacity((mx + 1) * (my + 1));
            for iy in 0..=my {
                for ix in 0..=mx {
                    out.push((ix as f64 / mx as f64, Some(iy as f64 / my as f64)));
                }
            }
            out
        }
    }
}

fn triangle_stiffness(p: [(f64, f64); 3]) -> [[f64; 3]; 3] {
    let area2 = (p[1].0 - p[0].0) * (p[2].1 - p[0].1) - (p[2].0 - p[0].0) * (p[1].1 - p[0].1);
    // Gradient of barycentric i is (y_j − y_k, x_k − x_j) / area2.
    let grad = |i: usize| {
        let (j, k) = ((i + 1) % 3, (i + 2) % 3);
        ((p[j].1 - p[k].1) / area2, (p[k].0 - p[j].0) / area2)
    };
    let area = area2.abs() / 2.0;
    let mut out = [[0.0; 3]; 3];
    for a in 0..3 {
        for b in 0..3 {
            let (ga, gb) = (grad(a), grad(b));
            out[a][b] = area * (ga.0 * gb.0 + ga.1 * gb.1);
        }
    }
    out
}

/// `values[k][j] = a_k` on element `j`.
#[derive(Clone, Debug, PartialEq)]
pub struct CoefficientField {
    values: Vec<Vec<f64>>,
}

impl CoefficientField {
    /// Checks shape and `a_0 > 0`.
    pub fn new(values: Vec<Vec<f64>>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::Coefficient("at least a_0 is required".into()));
        }
        let n = values[0].len();
        if n == 0 {
            return Err(Error::Coefficient("field has no elements".into()));
        }
        if let Some(k) = values.iter().position(|row| row.len() != n) {
            return Err(Error::Coefficient(format!(
                "a_{k} has {} element values, a_0 has {n}",
                values[k].len()
            )));
        }
        for (k, row) in values.iter().enumerate() {
            if let Some(j) = row.iter().position(|v| !v.is_finite()) {
                return Err(Error::Coefficient(format!("a_{k} is not finite on element {j}")));
            }
        }
        if let Some(j) = values[0].iter().position(|&v| v <= 0.0) {
            return Err(Error::Coefficient(format!(
                "a_0 must be positive, got {} on element {j}",
                values[0][j]
            )));
        }
        Ok(CoefficientField { values })
    }

    /// Number of random terms `K`.
    pub fn k(&self) -> usize {
        self.values.len() - 1
    }

    pub fn num_elements(&self) -> usize {
        self.values[0].len()
    }

    pub fn values(&self) -> &[Vec<f64>] {
        &self.values
    }

    /// `(a_0, …, a_K)` on element `j`.
    pub fn column(&self, j: usize) -> Vec<f64> {
        self.values.iter().map(|row| row[j]).collect()
    }

    /// Parses `N_elem` rows of `K+1` whitespace-separated numbers. Blank
    /// lines and `#` comments are skipped.
    pub fn from_table(text: &str) -> Result<Self> {
        let mut rows: Vec<Vec<f64>> = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap().trim();
            if line.is_empty() {
                continue;
            }
            let row: Vec<f64> = line
                .split_whitespace()
                .map(|t| {
                    t.parse::<f64>().map_err(|_| {
                        Error::Coefficient(format!("line {}: cannot parse '{t}'", lineno + 1))
                    })
                })
                .collect::<Result<_>>()?;
            if let Some(first) = rows.first() {
                if first.len() != row.len() {
                    return Err(Error::Coefficient(format!(
                        "line {}: expected {} columns, found {}",
                        lineno + 1,
                        first.len(),
                        row.len()
                    )));
                }
            }
            rows.push(row);
        }
        if rows.is_empty() {
            return Err(Error::Coefficient("coefficient table is empty".into()));
        }
        let ncol = rows[0].len();
        let values = (0..ncol).map(|k| rows.iter().map(|r| r[k]).collect()).collect();
        Self::new(values)
    }

    pub fn to_table(&self) -> String {
        let mut s = String::new();
        for j in 0..self.num_elements() {
            let cells: Vec<String> = self.values.iter().map(|r| format!("{:.17e}", r[j])).collect();
            s.push_str(&cells.join(" "));
            s.push('\n');
        }
        s
    }
}

/// Samples each expression at every element midpoint.
pub fn sample_coefficients(exprs: &[CoeffExpr], mesh: &Mesh) -> Result<CoefficientField> {
    let mut values = Vec::with_capacity(exprs.len());
    for e in exprs {
        let mut row = Vec::with_capacity(mesh.num_elements());
        for j in 0..mesh.num_elements() {
            let (x, y) = mesh.midpoint(j);
            row.push(e.eval(x, y)?);
        }
        values.push(row);
    }
    CoefficientField::new(values)
}

pub fn check_field(mesh: &Mesh, field: &CoefficientField) -> Result<()> {
    if field.num_elements() != mesh.num_elements() {
        return Err(Error::DimensionMismatch {
            expected: mesh.num_elements(),
            got: field.num_elements(),
        });
    }
    Ok(())
}

/// Sparse matrix with `coeff[j]` times the scattered unit stiffness of each
/// element. Elements are visited in index order.
pub fn assemble_weighted(mesh: &Mesh, coeff: &[f64]) -> FeMatrix {
    let n = mesh.num_dofs();
    let mut trip = Vec::with_capacity(mesh.num_elements() * 16);
    let k_unit = mesh.element_stiffness(0);
    for (j, &a) in coeff.iter().enumerate() {
        if a == 0.0 {
            continue;
        }
        let dofs = mesh.element_dofs(j);
        for (r, dr) in dofs.iter().enumerate() {
            let Some(dr) = dr else { continue };
            for (c, dc) in dofs.iter().enumerate() {
                let Some(dc) = dc else { continue };
                trip.push((*dr, *dc, a * k_unit[r][c]));
            }
        }
    }
    CsrMatrix::from_triplets(n, n, &trip, false).expect("dofs in range")
}

/// `F_k = Σ_j a_k^(j) F^(j)`.
pub fn assemble_f(mesh: &Mesh, field: &CoefficientField, k: usize) -> Result<FeMatrix> {
    check_field(mesh, field)?;
    if k > field.k() {
        return Err(Error::Domain(format!("k = {k} exceeds K = {}", field.k())));
    }
    Ok(assemble_weighted(mesh, &field.values[k]))
}

/// Element `j`'s scattered unit stiffness as an `N_FE × N_FE` matrix.
pub fn scattered_element(mesh: &Mesh, j: usize) -> FeMatrix {
    let mut coeff = vec![0.0; mesh.num_elements()];
    coeff[j] = 1.0;
    assemble_weighted(mesh, &coeff)
}

/// `(μ, μ_class)`: local dominance `max_j Σ_{k≥1}|a_k|/a_0` and the global
/// analogue `Σ_k max_j |a_k| / min_j a_0`.
pub fn compute_mu(field: &CoefficientField) -> (f64, f64) {
    let v = field.values();
    let mut mu = 0.0f64;
    for j in 0..field.num_elements() {
        let s: f64 = v[1..].iter().map(|row| row[j].abs()).sum();
        mu = mu.max(s / v[0][j]);
    }
    let a0_min = v[0].iter().copied().fold(f64::INFINITY, f64::min);
    let cls: f64 = v[1..]
        .iter()
        .map(|row| row.iter().fold(0.0f64, |m, x| m.max(x.abs())))
        .sum();
    (mu, cls / a0_min)
}

/// Supremum of `Σ_{k≥1}|a_k(x)|/a_0(x)` over the refined point grid.
pub fn mu_sup(exprs: &[CoeffExpr], mesh: &Mesh, refine: usize) -> Result<f64> {
    let mut mu = 0.0f64;
    for (x, y) in mesh.refined_points(refine) {
        let a0 = exprs[0].eval(x, y)?;
        if !(a0 > 0.0) {
            return Err(Error::Coefficient(format!(
                "a_0 must be positive, got {a0} at ({x}, {y:?})"
            )));
        }
        let mut s = 0.0;
        for e in &exprs[1..] {
            s += e.eval(x, y)?.abs();
        }
        mu = mu.max(s / a0);
    }
    Ok(mu)
}

/// Load vector `∫ f φ_r` with `f` taken at element midpoints.
pub fn load_vector(mesh: &Mesh, f: &CoeffExpr) -> Result<Vec<f64>> {
    let mut b = vec![0.0; mesh.num_dofs()];
    let w = mesh.element_hat_integrals();
    for j in 0..mesh.num_elements() {
        let (x, y) = mesh.midpoint(j);
        let fv = f.eval(x, y)?;
        for (r, d) in mesh.element_dofs(j).into_iter().enumerate() {
            if let Some(d) = d {
                b[d] += fv * w[r];
            }
        }
    }
    Ok(b)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coeff_dsl::parse;
    use crate::sparse::SkylineCholesky;
    use nalgebra::{DMatrix, SymmetricEigen};

    fn exprs(src: &[&str]) -> Vec<CoeffExpr> {
        src.iter().map(|s| parse(s).unwrap()).collect()
    }

    fn dense(m: &CsrMatrix) -> DMatrix<f64> {
        DMatrix::from_fn(m.nrows(), m.ncols(), |i, j| m.get(i, j))
    }

    #[test]
    fn mesh_sizes() {
        let m = Mesh::interval(30).unwrap();
        assert_eq!((m.num_elements(), m.num_dofs()), (30, 29));
        let m = Mesh::square(20, 20, ElementKind::Bilinear).unwrap();
        assert_eq!((m.num_elements(), m.num_dofs()), (400, 361));
        assert_eq!(Mesh::interval(2).unwrap().num_dofs(), 1);
        assert!(Mesh::interval(1).is_err());
        assert!(Mesh::square(20, 1, ElementKind::Bilinear).is_err());
        assert!((Mesh::interval(30).unwrap().midpoint(4).0 - 4.5 / 30.0).abs() < 1e-15);
    }

    #[test]
    fn stiffness_matrices() {
        let m = Mesh::interval(30).unwrap();
        let k = m.element_stiffness(0);
        assert!((k[0][0] - 30.0).abs() < 1e-12 && (k[0][1] + 30.0).abs() < 1e-12);
        let ev = SymmetricEigen::new(DMatrix::from_fn(2, 2, |i, j| k[i][j])).eigenvalues;
        let mut ev: Vec<f64> = ev.iter().copied().collect();
        ev.sort_by(f64::total_cmp);
        assert!(ev[0].abs() < 1e-12 && (ev[1] - 60.0).abs() < 1e-12);

        let q1 = Mesh::square(7, 7, ElementKind::Bilinear).unwrap().element_stiffness(3);
        let want = [
            [4.0, -1.0, -2.0, -1.0],
            [-1.0, 4.0, -1.0, -2.0],
            [-2.0, -1.0, 4.0, -1.0],
            [-1.0, -2.0, -1.0, 4.0],
        ];
        for r in 0..4 {
            assert!(q1[r].iter().sum::<f64>().abs() < 1e-14);
            for c in 0..4 {
                assert!((q1[r][c] - want[r][c] / 6.0).abs() < 1e-15);
            }
        }
        let p1 = Mesh::square(5, 5, ElementKind::SplitTriangles).unwrap().element_stiffness(0);
        let want = [
            [1.0, -0.5, 0.0, -0.5],
            [-0.5, 1.0, -0.5, 0.0],
            [0.0, -0.5, 1.0, -0.5],
            [-0.5, 0.0, -0.5, 1.0],
        ];
        for r in 0..4 {
            for c in 0..4 {
                assert!((p1[r][c] - want[r][c]).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn assembly_1d() {
        let m = Mesh::interval(2).unwrap();
        let f = sample_coefficients(&exprs(&["1"]), &m).unwrap();
        let f0 = assemble_f(&m, &f, 0).unwrap();
        assert_eq!(f0.get(0, 0), 4.0);
        let m = Mesh::interval(30).unwrap();
        let f = sample_coefficients(&exprs(&["1", "0.3*sin(pi*x1)", "0"]), &m).unwrap();
        let f0 = assemble_f(&m, &f, 0).unwrap();
        for i in 0..29 {
            assert!((f0.get(i, i) - 60.0).abs() < 1e-12);
            if i + 1 < 29 {
                assert!((f0.get(i, i + 1) + 30.0).abs() < 1e-12);
            }
        }
        assert!(assemble_f(&m, &f, 2).unwrap().is_zero());
        assert!(assemble_f(&m, &f, 3).is_err());
    }

    #[test]
    fn element_sum_is_unit_assembly() {
        for m in [
            Mesh::interval(9).unwrap(),
            Mesh::square(5, 4, ElementKind::Bilinear).unwrap(),
            Mesh::square(4, 4, ElementKind::SplitTriangles).unwrap(),
        ] {
            let f = sample_coefficients(&exprs(&["1"]), &m).unwrap();
            let f0 = dense(&assemble_f(&m, &f, 0).unwrap());
            let mut sum = DMatrix::zeros(m.num_dofs(), m.num_dofs());
            for j in 0..m.num_elements() {
                let e = dense(&scattered_element(&m, j));
                let ev = SymmetricEigen::new(e.clone()).eigenvalues;
                assert!(ev.iter().all(|&x| x >= -1e-12));
                sum += e;
            }
            assert!((sum - &f0).abs().max() < 1e-14 * f0.abs().max());
            assert!(SkylineCholesky::factor(&assemble_f(&m, &f, 0).unwrap()).is_ok());
        }
    }

    #[test]
    fn mu_values() {
        let m = Mesh::interval(30).unwrap();
        let f = sample_coefficients(&exprs(&["1", "0.5", "0"]), &m).unwrap();
        assert!(f.values()[1].iter().all(|&v| v == 0.5));
        let zero = sample_coefficients(&exprs(&["1", "0", "0"]), &m).unwrap();
        assert_eq!(compute_mu(&zero), (0.0, 0.0));
        let s2 = exprs(&[
            "1",
            "0.5*chi(0, 1/3)",
            "0.2*chi(1/3, 2/3)",
            "0.2*chi(2/3, 1)",
        ]);
        let (mu, cls) = compute_mu(&sample_coefficients(&s2, &m).unwrap());
        assert!((mu - 0.5).abs() < 1e-15 && (cls - 0.9).abs() < 1e-15);
        let scaled = CoefficientField::new(
            sample_coefficients(&s2, &m).unwrap().values().iter().map(|r| r.iter().map(|v| v * 3.7).collect()).collect(),
        )
        .unwrap();
        let (mu2, cls2) = compute_mu(&scaled);
        assert!((mu2 - mu).abs() < 1e-14 && (cls2 - cls).abs() < 1e-14);
    }

    #[test]
    fn field_validation() {
        assert!(CoefficientField::new(vec![vec![1.0, -1.0]]).is_err());
        assert!(CoefficientField::new(vec![vec![1.0], vec![1.0, 2.0]]).is_err());
        let m = Mesh::interval(4).unwrap();
        assert!(matches!(
            sample_coefficients(&exprs(&["x1 - 0.5"]), &m),
            Err(Error::Coefficient(_))
        ));
        let t = CoefficientField::from_table("# a0 a1\n1 0.5\n2 0.25\n\n1 0\n").unwrap();
        assert_eq!(t.k(), 1);
        assert_eq!(t.column(1), vec![2.0, 0.25]);
        assert_eq!(CoefficientField::from_table(&t.to_table()).unwrap(), t);
        assert!(CoefficientField::from_table("1 2\n3\n").is_err());
        assert!(CoefficientField::from_table("1 x\n").is_err());
        let field = CoefficientField::new(vec![vec![1.0; 3]]).unwrap();
        assert!(assemble_f(&m, &field, 0).is_err());
    }

    #[test]
    fn load_vectors() {
        let one = parse("1").unwrap();
        assert_eq!(load_vector(&Mesh::interval(2).unwrap(), &one).unwrap(), vec![0.5]);
        let b = load_vector(&Mesh::interval(30).unwrap(), &one).unwrap();
        assert!(b.iter().all(|v| (v - 1.0 / 30.0).abs() < 1e-15));
        let z = load_vector(&Mesh::interval(30).unwrap(), &parse("0").unwrap()).unwrap();
        assert!(z.iter().all(|&v| v == 0.0));
        for kind in [ElementKind::Bilinear, ElementKind::SplitTriangles] {
            let b = load_vector(&Mesh::square(4, 4, kind).unwrap(), &one).unwrap();
            assert!(b.iter().all(|v| (v - 1.0 / 16.0).abs() < 1e-15));
        }
    }

    #[test]
    fn sup_dominates_midpoint() {
        let m = Mesh::square(20, 20, ElementKind::Bilinear).unwrap();
        let e = exprs(&["1", "0.3*sin(pi*x1)", "0.3*sin(pi*x2)", "0.23*sin(2*pi*x1)"]);
        let (mid, _) = compute_mu(&sample_coefficients(&e, &m).unwrap());
        let sup = mu_sup(&e, &m, 16).unwrap();
        assert!(sup >= mid);
    }
}
