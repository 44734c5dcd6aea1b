//! Sparse matrix assembly storage and the direct solver used for the Newton
//! linear systems.
//!
//! The global matrices are nonsymmetric (the multiplier coupling breaks the
//! saddle-point symmetry) and indefinite, so the systems are solved by a
//! sparse LU with partial pivoting and a fill-reducing column ordering,
//! provided by `faer`. One iterative-refinement pass backs the residual
//! bound of [`direct_solve`].

use crate::error::{Error, Result};
use faer::prelude::*;
use faer::sparse::{SparseColMatRef, SymbolicSparseColMatRef};
use std::io::Write;
use std::path::Path;

/// Relative residual bound guaranteed by [`direct_solve`].
pub const SOLVE_RESIDUAL_BOUND: f64 = 1e-10;

/// Unassembled matrix contributions; duplicate positions are summed on
/// conversion to CSR.
#[derive(Debug, Clone, Default)]
pub struct Triplets {
    pub entries: Vec<(usize, usize, f64)>,
}

impl Triplets {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_capacity(cap: usize) -> Self {
        Triplets { entries: Vec::with_capacity(cap) }
    }

    #[inline]
    pub fn push(&mut self, row: usize, col: usize, value: f64) {
        self.entries.push((row, col, value));
    }

    pub fn append(&mut self, other: &mut Triplets) {
        self.entries.append(&mut other.entries);
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// Square sparse matrix in compressed row storage.
#[derive(Debug, Clone)]
pub struct SparseMatrix {
    pub n: usize,
    pub row_ptr: Vec<usize>,
    pub col_idx: Vec<usize>,
    pub values: Vec<f64>,
}

impl SparseMatrix {
    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    /// `y = A x`.
    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.n);
        let mut y = vec![0.0; self.n];
        for row in 0..self.n {
            let mut acc = 0.0;
            for k in self.row_ptr[row]..self.row_ptr[row + 1] {
                acc += self.values[k] * x[self.col_idx[k]];
            }
            y[row] = acc;
        }
        y
    }

    /// Entry accessor for tests and diagnostics; zero when absent.
    pub fn get(&self, row: usize, col: usize) -> f64 {
        let lo = self.row_ptr[row];
        let hi = self.row_ptr[row + 1];
        match self.col_idx[lo..hi].binary_search(&col) {
            Ok(k) => self.values[lo + k],
            Err(_) => 0.0,
        }
    }

    /// Compressed column arrays (the transpose scatter of the row storage).
    fn to_csc(&self) -> (Vec<usize>, Vec<usize>, Vec<f64>) {
        let nnz = self.nnz();
        let mut col_ptr = vec![0usize; self.n + 1];
        for &c in &self.col_idx {
            col_ptr[c + 1] += 1;
        }
        for c in 0..self.n {
            col_ptr[c + 1] += col_ptr[c];
        }
        let mut next = col_ptr.clone();
        let mut row_idx = vec![0usize; nnz];
        let mut vals = vec![0.0; nnz];
        for row in 0..self.n {
            for k in self.row_ptr[row]..self.row_ptr[row + 1] {
                let c = self.col_idx[k];
                let dst = next[c];
                row_idx[dst] = row;
                vals[dst] = self.values[k];
                next[c] += 1;
            }
        }
        (col_ptr, row_idx, vals)
    }
}

/// Converts triplets to CSR, summing duplicates. Explicit zeros (including
/// duplicates that cancel) are retained in the pattern.
pub fn csr_from_triplets(n: usize, triplets: &Triplets) -> Result<SparseMatrix> {
    if n == 0 {
        return Err(Error::invalid("matrix dimension must be at least 1"));
    }
    for &(r, c, _) in &triplets.entries {
        if r >= n || c >= n {
            return Err(Error::invalid(format!(
                "triplet ({r}, {c}) out of range for dimension {n}"
            )));
        }
    }
    let mut order: Vec<usize> = (0..triplets.len()).collect();
    order.sort_by_key(|&k| {
        let (r, c, _) = triplets.entries[k];
        (r, c)
    });

    let mut row_ptr = vec![0usize; n + 1];
    let mut col_idx = Vec::new();
    let mut values = Vec::new();
    let mut last: Option<(usize, usize)> = None;
    for &k in &order {
        let (r, c, v) = triplets.entries[k];
        if last == Some((r, c)) {
            *values.last_mut().expect("entry exists") += v;
        } else {
            col_idx.push(c);
            values.push(v);
            row_ptr[r + 1] += 1;
            last = Some((r, c));
        }
    }
    for r in 0..n {
        row_ptr[r + 1] += row_ptr[r];
    }
    Ok(SparseMatrix { n, row_ptr, col_idx, values })
}

fn norm2(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Owned sparse LU factorization of a CSR matrix.
struct LuFactors {
    lu: faer::sparse::linalg::solvers::Lu<usize, f64>,
}

impl LuFactors {
    fn new(a: &SparseMatrix) -> Result<Self> {
        let (col_ptr, row_idx, vals) = a.to_csc();
        let symbolic = SymbolicSparseColMatRef::new_checked(a.n, a.n, &col_ptr, None, &row_idx);
        let mat = SparseColMatRef::new(symbolic, &vals);
        let lu = mat
            .sp_lu()
            .map_err(|e| Error::SingularMatrix(format!("sparse LU factorization failed: {e:?}")))?;
        Ok(LuFactors { lu })
    }

    fn solve(&self, rhs: &[f64]) -> Vec<f64> {
        let mut x = Mat::from_fn(rhs.len(), 1, |i, _| rhs[i]);
        self.lu.solve_in_place(x.as_mut());
        (0..rhs.len()).map(|i| x[(i, 0)]).collect()
    }
}

/// Index of the single dense row, if the matrix has exactly one. A dense
/// row destroys the fill-reducing column ordering of the LU (every column
/// pair becomes adjacent through it), so it is handled by bordered
/// elimination instead.
fn single_dense_row(a: &SparseMatrix) -> Option<usize> {
    if a.n < 256 {
        return None;
    }
    let threshold = (a.n / 16).max(48);
    let mut dense = None;
    for row in 0..a.n {
        if a.row_ptr[row + 1] - a.row_ptr[row] >= threshold {
            if dense.is_some() {
                return None;
            }
            dense = Some(row);
        }
    }
    dense
}

/// Solves the bordered system
///
/// ```text
/// [ K  c ] [x]   [f]
/// [ r  d ] [s] = [g]
/// ```
///
/// where row/column `l` of `A` is the border. `K` may be singular on a
/// one-dimensional kernel (removing a constraint row typically leaves one),
/// so it is deflated by a single diagonal bump at the dominant entry of the
/// border row; the bump is undone exactly through a 2x2 correction system.
fn bordered_solve(a: &SparseMatrix, b: &[f64], l: usize) -> Result<Vec<f64>> {
    let n = a.n;
    let m = n - 1;
    let red = |i: usize| if i < l { i } else { i - 1 };

    let mut k_trips = Triplets::with_capacity(a.nnz());
    let mut border_col = vec![0.0; m];
    let mut border_row = vec![0.0; m];
    let mut corner = 0.0;
    let mut max_abs = 0.0f64;
    for row in 0..n {
        for k in a.row_ptr[row]..a.row_ptr[row + 1] {
            let col = a.col_idx[k];
            let v = a.values[k];
            max_abs = max_abs.max(v.abs());
            match (row == l, col == l) {
                (false, false) => k_trips.push(red(row), red(col), v),
                (false, true) => border_col[red(row)] = v,
                (true, false) => border_row[red(col)] = v,
                (true, true) => corner = v,
            }
        }
    }

    // Deflation bump at the dominant border-row position.
    let j = border_row
        .iter()
        .enumerate()
        .max_by(|x, y| x.1.abs().total_cmp(&y.1.abs()))
        .map(|(i, _)| i)
        .ok_or_else(|| Error::SingularMatrix("empty border row".into()))?;
    let rho = max_abs.max(1e-30);
    k_trips.push(j, j, rho);
    let k_deflated = csr_from_triplets(m, &k_trips)?;
    let factors = LuFactors::new(&k_deflated)?;

    let y_c = factors.solve(&border_col);
    let e_j: Vec<f64> = (0..m).map(|i| if i == j { 1.0 } else { 0.0 }).collect();
    let y_j = factors.solve(&e_j);
    if y_c.iter().chain(&y_j).any(|v| !v.is_finite()) {
        return Err(Error::SingularMatrix("bordered elimination failed".into()));
    }

    // Solves A z = rhs for one right-hand side, exactly (up to roundoff):
    // with K = K_deflated - rho e_j e_j^T,
    //   z_main = p - lambda y_c + rho s y_j,  s = z_main[j],
    // and (s, lambda) from a 2x2 system.
    let dot = |u: &[f64], v: &[f64]| u.iter().zip(v).map(|(a, b)| a * b).sum::<f64>();
    let solve_one = |rhs: &[f64]| -> Result<Vec<f64>> {
        let f: Vec<f64> = (0..n).filter(|&i| i != l).map(|i| rhs[i]).collect();
        let g = rhs[l];
        let p = factors.solve(&f);
        // (1 - rho y_j[j]) s + y_c[j] lambda = p[j]
        // (rho r.y_j) s + (d - r.y_c) lambda = g - r.p
        let a11 = 1.0 - rho * y_j[j];
        let a12 = y_c[j];
        let a21 = rho * dot(&border_row, &y_j);
        let a22 = corner - dot(&border_row, &y_c);
        let r1 = p[j];
        let r2 = g - dot(&border_row, &p);
        let det = a11 * a22 - a12 * a21;
        if det.abs() < 1e-300 {
            return Err(Error::SingularMatrix("bordered correction system is singular".into()));
        }
        let s = (r1 * a22 - a12 * r2) / det;
        let lambda = (a11 * r2 - a21 * r1) / det;
        let mut z = vec![0.0; n];
        for i in 0..n {
            if i != l {
                let ri = red(i);
                z[i] = p[ri] - lambda * y_c[ri] + rho * s * y_j[ri];
            }
        }
        z[l] = lambda;
        Ok(z)
    };

    let scale = norm2(b).max(1e-30);
    let mut sol = solve_one(b)?;
    let mut rel = f64::INFINITY;
    for _ in 0..8 {
        let ax = a.matvec(&sol);
        let resid: Vec<f64> = (0..n).map(|i| b[i] - ax[i]).collect();
        rel = norm2(&resid) / scale;
        if !rel.is_finite() {
            return Err(Error::SingularMatrix("residual is non-finite".into()));
        }
        if rel <= SOLVE_RESIDUAL_BOUND {
            return Ok(sol);
        }
        let correction = solve_one(&resid)?;
        for (x, dx) in sol.iter_mut().zip(&correction) {
            *x += dx;
        }
    }
    Err(Error::ResidualBound { achieved: rel, bound: SOLVE_RESIDUAL_BOUND })
}

fn plain_solve(a: &SparseMatrix, b: &[f64]) -> Result<Vec<f64>> {
    let factors = LuFactors::new(a)?;
    let mut sol = factors.solve(b);
    if sol.iter().any(|v| !v.is_finite()) {
        return Err(Error::SingularMatrix(
            "factorization produced a non-finite solution (zero pivot)".into(),
        ));
    }

    let scale = norm2(b).max(1e-30);
    let residual = |sol: &[f64]| -> f64 {
        let ax = a.matvec(sol);
        let mut acc = 0.0;
        for i in 0..a.n {
            let r = b[i] - ax[i];
            acc += r * r;
        }
        acc.sqrt() / scale
    };

    let mut rel = residual(&sol);
    if rel > SOLVE_RESIDUAL_BOUND {
        // One refinement pass off the existing factorization.
        let ax = a.matvec(&sol);
        let r: Vec<f64> = (0..a.n).map(|i| b[i] - ax[i]).collect();
        let d = factors.solve(&r);
        for (x, dx) in sol.iter_mut().zip(&d) {
            *x += dx;
        }
        rel = residual(&sol);
    }
    if !rel.is_finite() {
        return Err(Error::SingularMatrix("residual is non-finite".into()));
    }
    if rel > SOLVE_RESIDUAL_BOUND {
        return Err(Error::ResidualBound { achieved: rel, bound: SOLVE_RESIDUAL_BOUND });
    }
    Ok(sol)
}

/// Solves `A x = b` by sparse LU with partial pivoting and a fill-reducing
/// ordering. The returned solution satisfies
/// `|A x - b| / max(|b|, 1e-30) <= 1e-10` (iterative refinement backs the
/// bound). A single dense row (the global trace constraint produces one) is
/// peeled off by bordered elimination before factorization; everything else
/// goes through the plain path.
pub fn direct_solve(a: &SparseMatrix, b: &[f64]) -> Result<Vec<f64>> {
    if b.len() != a.n {
        return Err(Error::invalid(format!(
            "rhs length {} does not match dimension {}",
            b.len(),
            a.n
        )));
    }
    if let Some(l) = single_dense_row(a) {
        if let Ok(sol) = bordered_solve(a, b, l) {
            return Ok(sol);
        }
        // The bordered strategy is best-effort; fall back to factoring the
        // full matrix.
    }
    plain_solve(a, b)
}

/// Writes the matrix in MatrixMarket coordinate format.
pub fn write_matrix_market(a: &SparseMatrix, path: &Path) -> Result<()> {
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(out, "%%MatrixMarket matrix coordinate real general")?;
    writeln!(out, "{} {} {}", a.n, a.n, a.nnz())?;
    for row in 0..a.n {
        for k in a.row_ptr[row]..a.row_ptr[row + 1] {
            writeln!(out, "{} {} {}", row + 1, a.col_idx[k] + 1, self::fmt_f64(a.values[k]))?;
        }
    }
    Ok(())
}

/// Shortest decimal that round-trips to the same f64.
pub(crate) fn fmt_f64(v: f64) -> String {
    format!("{v}")
}
