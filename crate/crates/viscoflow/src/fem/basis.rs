//! Element bases: discontinuous P1 tensors for the strain and multiplier
//! fields, and the first-order H(div) element (each tensor row a BDM
//! element) for the stress.
//!
//! The stress basis is constructed per cell as the dual basis of the edge
//! moment functionals
//!
//! ```text
//! l_{e,0}(v) = int_e (v . n_e) ds,
//! l_{e,1}(v) = int_e (v . n_e) (2s - 1) ds,
//! ```
//!
//! where `n_e` and the arc parameter `s` follow the global low -> high edge
//! orientation. Adjacent cells therefore see the same functionals on a
//! shared edge, which enforces normal-trace continuity, and the duality
//! holds on the physical element by construction (equivalent to the
//! contravariant Piola map of a reference basis, without per-cell sign
//! bookkeeping).

use crate::error::{Error, Result};
use crate::fem::quadrature::gauss_legendre_unit;
use crate::mesh::{cell_geometry, edge_canonical_normal, CellGeometry, Mesh};
use crate::tensor::{Mat2, Vec2, UNIT_TENSORS};

/// Barycentric hat functions at a reference point.
#[inline]
pub fn p1_values(xi: [f64; 2]) -> [f64; 3] {
    [1.0 - xi[0] - xi[1], xi[0], xi[1]]
}

/// The 12 tensor basis functions of the discontinuous P1 tensor space at a
/// reference point, indexed as `4 * vertex + component` with components in
/// row-major order.
pub fn eval_p1disc_tensor_basis(xi: [f64; 2]) -> [Mat2; 12] {
    let lambda = p1_values(xi);
    let mut out = [[[0.0; 2]; 2]; 12];
    for (i, &l) in lambda.iter().enumerate() {
        for (c, unit) in UNIT_TENSORS.iter().enumerate() {
            let mut t = *unit;
            t[0][0] *= l;
            t[0][1] *= l;
            t[1][0] *= l;
            t[1][1] *= l;
            out[4 * i + c] = t;
        }
    }
    out
}

/// The H(div) vector basis of one cell: six P1 vector fields dual to the six
/// edge moment functionals. Index `2 * local_edge + moment`.
#[derive(Debug, Clone)]
pub struct HdivCellBasis {
    /// `coeffs[k][j]`: coefficient of monomial `k` in basis function `j`,
    /// with monomials `(1,0), (x,0), (y,0), (0,1), (0,x), (0,y)`.
    coeffs: [[f64; 6]; 6],
    /// Constant row-divergence of each basis function.
    pub divs: [f64; 6],
}

impl HdivCellBasis {
    pub fn build(mesh: &Mesh, cell: usize, geo: &CellGeometry) -> Result<Self> {
        if geo.det <= 0.0 {
            return Err(Error::invalid(format!("cell {cell} is degenerate")));
        }
        let gauss = gauss_legendre_unit(2).expect("2-point rule exists");
        let verts = mesh.cells[cell];

        // Moment functionals applied to the P1 monomial basis.
        let mut m = [[0.0; 6]; 6];
        for le in 0..3 {
            let (edge, _) = mesh.cell_edges[cell][le];
            let [lo, hi] = mesh.edges[edge];
            debug_assert!({
                let pair = (verts[le].min(verts[(le + 1) % 3]), verts[le].max(verts[(le + 1) % 3]));
                pair == (lo, hi)
            });
            let (n, len) = edge_canonical_normal(mesh, edge);
            let (a, b) = (mesh.vertices[lo], mesh.vertices[hi]);
            for &(s, w) in &gauss {
                let x = [a[0] + s * (b[0] - a[0]), a[1] + s * (b[1] - a[1])];
                let leg = 2.0 * s - 1.0;
                // Normal components of the monomials at x.
                let mono_n = [n[0], x[0] * n[0], x[1] * n[0], n[1], x[0] * n[1], x[1] * n[1]];
                for k in 0..6 {
                    m[2 * le][k] += w * len * mono_n[k];
                    m[2 * le + 1][k] += w * len * mono_n[k] * leg;
                }
            }
        }

        let coeffs = invert6(m).ok_or_else(|| {
            Error::invalid(format!("H(div) moment matrix of cell {cell} is singular"))
        })?;
        let mut divs = [0.0; 6];
        for (j, d) in divs.iter_mut().enumerate() {
            *d = coeffs[1][j] + coeffs[5][j];
        }
        Ok(HdivCellBasis { coeffs, divs })
    }

    /// Value of vector basis function `j` at a physical point.
    #[inline]
    pub fn eval_vec(&self, j: usize, x: Vec2) -> Vec2 {
        let c = &self.coeffs;
        [
            c[0][j] + c[1][j] * x[0] + c[2][j] * x[1],
            c[3][j] + c[4][j] * x[0] + c[5][j] * x[1],
        ]
    }

    /// Values of the 12 tensor basis functions (row `r` carrying vector
    /// basis `j`, the other row zero) at a physical point. Index
    /// `4 * local_edge + 2 * row + moment`.
    pub fn eval_tensors(&self, x: Vec2) -> [Mat2; 12] {
        let mut out = [[[0.0; 2]; 2]; 12];
        for le in 0..3 {
            for mom in 0..2 {
                let v = self.eval_vec(2 * le + mom, x);
                for r in 0..2 {
                    let mut t = [[0.0; 2]; 2];
                    t[r] = v;
                    out[4 * le + 2 * r + mom] = t;
                }
            }
        }
        out
    }

    /// Row-divergence vectors of the 12 tensor basis functions (constant).
    pub fn tensor_divs(&self) -> [Vec2; 12] {
        let mut out = [[0.0; 2]; 12];
        for le in 0..3 {
            for mom in 0..2 {
                let d = self.divs[2 * le + mom];
                for r in 0..2 {
                    let mut v = [0.0; 2];
                    v[r] = d;
                    out[4 * le + 2 * r + mom] = v;
                }
            }
        }
        out
    }
}

/// Builds the geometry and H(div) basis of a cell in one call.
pub fn hdiv_basis(mesh: &Mesh, cell: usize) -> Result<(CellGeometry, HdivCellBasis)> {
    let geo = cell_geometry(mesh, cell)?;
    let basis = HdivCellBasis::build(mesh, cell, &geo)?;
    Ok((geo, basis))
}

/// Gauss-Jordan inverse with partial pivoting; `None` if singular.
fn invert6(m: [[f64; 6]; 6]) -> Option<[[f64; 6]; 6]> {
    let mut a = m;
    let mut inv = [[0.0; 6]; 6];
    for (i, row) in inv.iter_mut().enumerate() {
        row[i] = 1.0;
    }
    for col in 0..6 {
        let mut pivot = col;
        for r in col + 1..6 {
            if a[r][col].abs() > a[pivot][col].abs() {
                pivot = r;
            }
        }
        if a[pivot][col].abs() < 1e-14 {
            return None;
        }
        a.swap(col, pivot);
        inv.swap(col, pivot);
        let d = a[col][col];
        for k in 0..6 {
            a[col][k] /= d;
            inv[col][k] /= d;
        }
        for r in 0..6 {
            if r != col {
                let f = a[r][col];
                if f != 0.0 {
                    for k in 0..6 {
                        a[r][k] -= f * a[col][k];
                        inv[r][k] -= f * inv[col][k];
                    }
                }
            }
        }
    }
    Some(inv)
}
