//! Global degree-of-freedom enumeration for the seven-field block system.
//!
//! Field order: strain `theta` (12 per cell), stress `sigma` (4 per edge),
//! velocity `u` (2 per cell), vorticity `u_hat` (1 per cell), pressure `phi`
//! (1 per cell), multiplier `q` (12 per cell), and the global trace
//! multiplier `lambda` (one scalar, last).

use crate::error::{Error, Result};
use crate::mesh::Mesh;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DofLayout {
    pub n_cells: usize,
    pub n_edges: usize,
    pub off_theta: usize,
    pub off_sigma: usize,
    pub off_u: usize,
    pub off_uhat: usize,
    pub off_phi: usize,
    pub off_q: usize,
    pub off_lambda: usize,
    pub total_dofs: usize,
}

impl DofLayout {
    pub fn n_theta(&self) -> usize {
        12 * self.n_cells
    }

    pub fn n_sigma(&self) -> usize {
        4 * self.n_edges
    }

    pub fn n_u(&self) -> usize {
        2 * self.n_cells
    }

    pub fn n_uhat(&self) -> usize {
        self.n_cells
    }

    pub fn n_phi(&self) -> usize {
        self.n_cells
    }

    pub fn n_q(&self) -> usize {
        12 * self.n_cells
    }

    /// Strain dof: `node` is the local vertex (0..3), `comp` the row-major
    /// tensor component (0..4).
    #[inline]
    pub fn theta_dof(&self, cell: usize, node: usize, comp: usize) -> usize {
        self.off_theta + 12 * cell + 4 * node + comp
    }

    /// Stress dof: two rows times two edge moments per edge.
    #[inline]
    pub fn sigma_dof(&self, edge: usize, row: usize, moment: usize) -> usize {
        self.off_sigma + 4 * edge + 2 * row + moment
    }

    #[inline]
    pub fn u_dof(&self, cell: usize, comp: usize) -> usize {
        self.off_u + 2 * cell + comp
    }

    #[inline]
    pub fn uhat_dof(&self, cell: usize) -> usize {
        self.off_uhat + cell
    }

    #[inline]
    pub fn phi_dof(&self, cell: usize) -> usize {
        self.off_phi + cell
    }

    #[inline]
    pub fn q_dof(&self, cell: usize, node: usize, comp: usize) -> usize {
        self.off_q + 12 * cell + 4 * node + comp
    }

    #[inline]
    pub fn lambda_dof(&self) -> usize {
        self.off_lambda
    }
}

/// Enumerates the global dofs of a mesh. Rejects empty meshes.
pub fn build_dof_layout(mesh: &Mesh) -> Result<DofLayout> {
    let n_cells = mesh.num_cells();
    let n_edges = mesh.num_edges();
    if n_cells == 0 {
        return Err(Error::invalid("mesh has no cells"));
    }
    let off_theta = 0;
    let off_sigma = off_theta + 12 * n_cells;
    let off_u = off_sigma + 4 * n_edges;
    let off_uhat = off_u + 2 * n_cells;
    let off_phi = off_uhat + n_cells;
    let off_q = off_phi + n_cells;
    let off_lambda = off_q + 12 * n_cells;
    Ok(DofLayout {
        n_cells,
        n_edges,
        off_theta,
        off_sigma,
        off_u,
        off_uhat,
        off_phi,
        off_q,
        off_lambda,
        total_dofs: off_lambda + 1,
    })
}
