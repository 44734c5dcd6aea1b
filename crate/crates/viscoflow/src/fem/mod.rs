//! Reference elements, quadrature and dof bookkeeping for the k = 0
//! discretization.

pub mod basis;
pub mod layout;
pub mod quadrature;

pub use basis::{eval_p1disc_tensor_basis, hdiv_basis, p1_values, HdivCellBasis};
pub use layout::{build_dof_layout, DofLayout};
pub use quadrature::{gauss_legendre_unit, quadrature, QuadratureRule};

/// Quadrature degree used for the cell integrals: exact for products of two
/// P1 factors, adequate sampling for the viscosity nonlinearity.
pub const CELL_QUADRATURE_DEGREE: usize = 4;

/// Quadrature degree for the multiplier rows. The three-point rule is
/// unisolvent for P1, so testing the multiplier equation against the twelve
/// cell basis tensors pins `q = gamma tau_s theta / |theta|_gamma` pointwise
/// at the rule's points. That keeps the discrete multiplier inside the yield
/// ball where the Newton matrix samples it, which is what makes the
/// projection asymptotically inactive and the iteration superlinear. (The
/// rule is still exact for the bilinear mass term.)
pub const MULTIPLIER_QUADRATURE_DEGREE: usize = 2;

/// Edge rule order for boundary data integrals.
pub const EDGE_QUADRATURE_ORDER: usize = 4;
