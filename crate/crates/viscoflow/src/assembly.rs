//! Assembly of the nonlinear residual and the semismooth-Newton matrix of
//! the seven-field system.
//!
//! Row blocks, in dof order (tests in parentheses):
//!
//! * stress rows (tensor `tau`): `-int theta:tau - int u.Div tau
//!   - int u_hat:tau + lambda int tr(tau) + int (tau.n).u_D`,
//! * pressure rows (`psi`): `-int psi tr(theta)`,
//! * strain rows (`xi`): `int nu(|theta|) theta:xi + int q:xi - int sigma:xi
//!   - int phi tr(xi)`,
//! * velocity rows (`v`): `-int v.Div sigma - int v.f`,
//! * vorticity rows (`v_hat`): `-int v_hat:sigma`,
//! * multiplier rows (`w`): `int (gamma tau_s theta - |theta|_gamma q):w`,
//! * trace row: `int tr(sigma)`.
//!
//! Dirichlet data enters only through the natural boundary term on the
//! stress rows; stress-free edges simply contribute nothing. The Newton
//! matrix linearizes these rows, optionally replacing `q` by its projection
//! onto the yield ball inside the active-set coupling term (and only there).
//!
//! The cell loop is embarrassingly parallel. Per-cell buffers are
//! concatenated in cell order before accumulation, so results are bitwise
//! identical whether assembled sequentially or in parallel.

use crate::error::{Error, Result};
use crate::fem::{
    hdiv_basis, p1_values, quadrature, DofLayout, HdivCellBasis, QuadratureRule,
    CELL_QUADRATURE_DEGREE, EDGE_QUADRATURE_ORDER, MULTIPLIER_QUADRATURE_DEGREE,
};
use crate::fem::quadrature::gauss_legendre_unit;
use crate::linalg::{csr_from_triplets, SparseMatrix, Triplets};
use crate::mesh::{BoundaryTag, CellGeometry, Mesh};
use crate::rheology::{ModelParams, STRAIN_FLOOR};
use crate::tensor::{ddot, frob, trace, Mat2, Vec2};

/// Coefficient blocks of the seven fields.
#[derive(Debug, Clone, PartialEq)]
pub struct State {
    pub theta: Vec<f64>,
    pub sigma: Vec<f64>,
    pub u: Vec<f64>,
    pub u_hat: Vec<f64>,
    pub phi: Vec<f64>,
    pub q: Vec<f64>,
    pub lambda: f64,
}

impl State {
    pub fn zeros(layout: &DofLayout) -> State {
        State {
            theta: vec![0.0; layout.n_theta()],
            sigma: vec![0.0; layout.n_sigma()],
            u: vec![0.0; layout.n_u()],
            u_hat: vec![0.0; layout.n_uhat()],
            phi: vec![0.0; layout.n_phi()],
            q: vec![0.0; layout.n_q()],
            lambda: 0.0,
        }
    }

    pub fn validate(&self, layout: &DofLayout) -> Result<()> {
        let sizes = [
            (self.theta.len(), layout.n_theta(), "theta"),
            (self.sigma.len(), layout.n_sigma(), "sigma"),
            (self.u.len(), layout.n_u(), "u"),
            (self.u_hat.len(), layout.n_uhat(), "u_hat"),
            (self.phi.len(), layout.n_phi(), "phi"),
            (self.q.len(), layout.n_q(), "q"),
        ];
        for (got, want, name) in sizes {
            if got != want {
                return Err(Error::invalid(format!(
                    "{name} block has {got} coefficients, layout wants {want}"
                )));
            }
        }
        let finite = self
            .theta
            .iter()
            .chain(&self.sigma)
            .chain(&self.u)
            .chain(&self.u_hat)
            .chain(&self.phi)
            .chain(&self.q)
            .all(|v| v.is_finite())
            && self.lambda.is_finite();
        if !finite {
            return Err(Error::invalid("state contains non-finite coefficients"));
        }
        Ok(())
    }

    pub fn to_flat(&self, layout: &DofLayout) -> Vec<f64> {
        let mut flat = vec![0.0; layout.total_dofs];
        flat[layout.off_theta..layout.off_theta + self.theta.len()].copy_from_slice(&self.theta);
        flat[layout.off_sigma..layout.off_sigma + self.sigma.len()].copy_from_slice(&self.sigma);
        flat[layout.off_u..layout.off_u + self.u.len()].copy_from_slice(&self.u);
        flat[layout.off_uhat..layout.off_uhat + self.u_hat.len()].copy_from_slice(&self.u_hat);
        flat[layout.off_phi..layout.off_phi + self.phi.len()].copy_from_slice(&self.phi);
        flat[layout.off_q..layout.off_q + self.q.len()].copy_from_slice(&self.q);
        flat[layout.off_lambda] = self.lambda;
        flat
    }

    pub fn from_flat(layout: &DofLayout, flat: &[f64]) -> State {
        State {
            theta: flat[layout.off_theta..layout.off_theta + layout.n_theta()].to_vec(),
            sigma: flat[layout.off_sigma..layout.off_sigma + layout.n_sigma()].to_vec(),
            u: flat[layout.off_u..layout.off_u + layout.n_u()].to_vec(),
            u_hat: flat[layout.off_uhat..layout.off_uhat + layout.n_uhat()].to_vec(),
            phi: flat[layout.off_phi..layout.off_phi + layout.n_phi()].to_vec(),
            q: flat[layout.off_q..layout.off_q + layout.n_q()].to_vec(),
            lambda: flat[layout.off_lambda],
        }
    }

    /// `self += alpha * other`.
    pub fn axpy(&mut self, alpha: f64, other: &State) {
        let pairs = [
            (&mut self.theta, &other.theta),
            (&mut self.sigma, &other.sigma),
            (&mut self.u, &other.u),
            (&mut self.u_hat, &other.u_hat),
            (&mut self.phi, &other.phi),
            (&mut self.q, &other.q),
        ];
        for (dst, src) in pairs {
            for (d, s) in dst.iter_mut().zip(src) {
                *d += alpha * s;
            }
        }
        self.lambda += alpha * other.lambda;
    }

    /// Strain tensor of one cell at barycentric coordinates.
    pub fn theta_at(&self, cell: usize, lambda: [f64; 3]) -> Mat2 {
        p1_tensor(&self.theta[12 * cell..12 * cell + 12], &lambda)
    }

    /// Multiplier tensor of one cell at barycentric coordinates.
    pub fn q_at(&self, cell: usize, lambda: [f64; 3]) -> Mat2 {
        p1_tensor(&self.q[12 * cell..12 * cell + 12], &lambda)
    }
}

/// Boundary handling per tag.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BcKind {
    /// Velocity data imposed through the natural flux term.
    DirichletFlux,
    /// Do-nothing outflow: the boundary integral is omitted.
    StressFree,
}

/// Body force, Dirichlet velocity data and the boundary-kind map.
pub struct ProblemData {
    pub body_force: Box<dyn Fn(Vec2) -> Vec2 + Sync + Send>,
    pub dirichlet: Box<dyn Fn(Vec2) -> Vec2 + Sync + Send>,
    pub bc_kind: Box<dyn Fn(BoundaryTag) -> BcKind + Sync + Send>,
}

impl ProblemData {
    /// All-Dirichlet problem.
    pub fn new(
        body_force: impl Fn(Vec2) -> Vec2 + Sync + Send + 'static,
        dirichlet: impl Fn(Vec2) -> Vec2 + Sync + Send + 'static,
    ) -> Self {
        ProblemData {
            body_force: Box::new(body_force),
            dirichlet: Box::new(dirichlet),
            bc_kind: Box::new(|_| BcKind::DirichletFlux),
        }
    }

    pub fn with_bc(
        mut self,
        bc_kind: impl Fn(BoundaryTag) -> BcKind + Sync + Send + 'static,
    ) -> Self {
        self.bc_kind = Box::new(bc_kind);
        self
    }
}

/// Net Dirichlet boundary flux `int_dOmega u_D . n ds`, the quantity that
/// must vanish for all-Dirichlet problems.
pub fn boundary_flux(mesh: &Mesh, data: &ProblemData) -> Result<f64> {
    let gauss = gauss_legendre_unit(EDGE_QUADRATURE_ORDER)?;
    let mut flux = 0.0;
    for (e, tag) in mesh.boundary_tags.iter().enumerate() {
        if !tag.is_boundary() {
            continue;
        }
        let cell = mesh.edge_cells[e][0].expect("boundary edge has a cell");
        let geo = crate::mesh::cell_geometry(mesh, cell)?;
        let le = mesh.cell_edges[cell]
            .iter()
            .position(|&(idx, _)| idx == e)
            .expect("edge belongs to cell");
        let n = geo.edge_normals[le];
        let len = geo.edge_lengths[le];
        let [a, b] = mesh.edges[e];
        let (pa, pb) = (mesh.vertices[a], mesh.vertices[b]);
        for &(s, w) in &gauss {
            let x = [pa[0] + s * (pb[0] - pa[0]), pa[1] + s * (pb[1] - pa[1])];
            let ud = (data.dirichlet)(x);
            flux += w * len * (ud[0] * n[0] + ud[1] * n[1]);
        }
    }
    Ok(flux)
}

/// Per-quadrature-point data of one cell.
struct QpData {
    x: Vec2,
    wdet: f64,
    lambda: [f64; 3],
    /// The 12 stress tensor basis values.
    sig: [Mat2; 12],
    sig_tr: [f64; 12],
}

/// Quadrature data for the multiplier rows (only P1 fields appear there).
struct QpLite {
    wdet: f64,
    lambda: [f64; 3],
}

/// Everything the kernels need about one cell.
struct CellCtx {
    cell: usize,
    geo: CellGeometry,
    qps: Vec<QpData>,
    /// Points at which the multiplier equation is enforced.
    qps_m: Vec<QpLite>,
    /// Constant row-divergences of the stress basis.
    sig_div: [Vec2; 12],
    basis: HdivCellBasis,
}

fn cell_ctx(mesh: &Mesh, rule: &QuadratureRule, rule_m: &QuadratureRule, cell: usize) -> Result<CellCtx> {
    let (geo, basis) = hdiv_basis(mesh, cell)?;
    let mut qps = Vec::with_capacity(rule.len());
    for qi in 0..rule.len() {
        let xi = rule.ref_point(qi);
        let x = geo.map(xi);
        let sig = basis.eval_tensors(x);
        let mut sig_tr = [0.0; 12];
        for (t, s) in sig.iter().enumerate() {
            sig_tr[t] = trace(s);
        }
        qps.push(QpData {
            x,
            wdet: rule.weights[qi] * geo.det,
            lambda: p1_values(xi),
            sig,
            sig_tr,
        });
    }
    let qps_m = (0..rule_m.len())
        .map(|qi| QpLite {
            wdet: rule_m.weights[qi] * geo.det,
            lambda: p1_values(rule_m.ref_point(qi)),
        })
        .collect();
    let sig_div = basis.tensor_divs();
    Ok(CellCtx { cell, geo, qps, qps_m, sig_div, basis })
}

/// Evaluates a P1 tensor field from its 12 cell coefficients.
#[inline]
fn p1_tensor(coeffs: &[f64], lambda: &[f64; 3]) -> Mat2 {
    let mut out = [[0.0; 2]; 2];
    for (i, &l) in lambda.iter().enumerate() {
        for c in 0..4 {
            out[c / 2][c % 2] += l * coeffs[4 * i + c];
        }
    }
    out
}

/// Local dof indices of a cell in the global layout, for the blocks that the
/// kernels touch.
struct LocalDofs {
    theta: [usize; 12],
    sigma: [usize; 12],
    u: [usize; 2],
    uhat: usize,
    phi: usize,
    q: [usize; 12],
    lambda: usize,
}

fn local_dofs(mesh: &Mesh, layout: &DofLayout, cell: usize) -> LocalDofs {
    let mut theta = [0; 12];
    let mut q = [0; 12];
    for node in 0..3 {
        for c in 0..4 {
            theta[4 * node + c] = layout.theta_dof(cell, node, c);
            q[4 * node + c] = layout.q_dof(cell, node, c);
        }
    }
    let mut sigma = [0; 12];
    for le in 0..3 {
        let (edge, _) = mesh.cell_edges[cell][le];
        for r in 0..2 {
            for m in 0..2 {
                sigma[4 * le + 2 * r + m] = layout.sigma_dof(edge, r, m);
            }
        }
    }
    LocalDofs {
        theta,
        sigma,
        u: [layout.u_dof(cell, 0), layout.u_dof(cell, 1)],
        uhat: layout.uhat_dof(cell),
        phi: layout.phi_dof(cell),
        q,
        lambda: layout.lambda_dof(),
    }
}

/// Boundary contribution `int_e (tau . n) . u_D ds` of the Dirichlet edges
/// of a cell, added to the stress-row residual (or to the negated Stokes
/// right-hand side).
fn dirichlet_edge_terms(
    mesh: &Mesh,
    ctx: &CellCtx,
    data: &ProblemData,
    mut add: impl FnMut(usize, f64),
) -> Result<()> {
    let gauss = gauss_legendre_unit(EDGE_QUADRATURE_ORDER)?;
    for le in 0..3 {
        let (edge, _) = mesh.cell_edges[ctx.cell][le];
        let tag = mesh.boundary_tags[edge];
        if !tag.is_boundary() || (data.bc_kind)(tag) != BcKind::DirichletFlux {
            continue;
        }
        let n = ctx.geo.edge_normals[le];
        let len = ctx.geo.edge_lengths[le];
        let [a, b] = mesh.edges[edge];
        let (pa, pb) = (mesh.vertices[a], mesh.vertices[b]);
        for &(s, w) in &gauss {
            let x = [pa[0] + s * (pb[0] - pa[0]), pa[1] + s * (pb[1] - pa[1])];
            let ud = (data.dirichlet)(x);
            for mom in 0..2 {
                let v = ctx.basis.eval_vec(2 * le + mom, x);
                let vn = v[0] * n[0] + v[1] * n[1];
                for r in 0..2 {
                    // Tensor basis with row r: (tau . n) . u_D = (v . n) u_D[r].
                    add(4 * le + 2 * r + mom, w * len * vn * ud[r]);
                }
            }
        }
    }
    Ok(())
}

/// Residual contributions of one cell as (global index, value) pairs.
fn residual_cell(
    mesh: &Mesh,
    layout: &DofLayout,
    params: &ModelParams,
    data: &ProblemData,
    state: &State,
    rule: &QuadratureRule,
    rule_m: &QuadratureRule,
    cell: usize,
) -> Result<Vec<(usize, f64)>> {
    let ctx = cell_ctx(mesh, rule, rule_m, cell)?;
    let dofs = local_dofs(mesh, layout, cell);

    let theta_c = &state.theta[12 * cell..12 * cell + 12];
    let q_c = &state.q[12 * cell..12 * cell + 12];
    let sigma_c: Vec<f64> = dofs.sigma.iter().map(|&g| state.sigma[g - layout.off_sigma]).collect();
    let u_c = [state.u[2 * cell], state.u[2 * cell + 1]];
    let uhat_c = state.u_hat[cell];
    let phi_c = state.phi[cell];

    let mut r_sig = [0.0; 12];
    let mut r_theta = [0.0; 12];
    let mut r_q = [0.0; 12];
    let mut r_u = [0.0; 2];
    let mut r_uhat = 0.0;
    let mut r_phi = 0.0;
    let mut r_lambda = 0.0;

    // Constant over the cell: Div sigma_h.
    let mut div_sigma = [0.0; 2];
    for t in 0..12 {
        div_sigma[0] += sigma_c[t] * ctx.sig_div[t][0];
        div_sigma[1] += sigma_c[t] * ctx.sig_div[t][1];
    }

    for qp in &ctx.qps {
        let w = qp.wdet;
        let theta = p1_tensor(theta_c, &qp.lambda);
        let qten = p1_tensor(q_c, &qp.lambda);
        let mut sigma = [[0.0; 2]; 2];
        for t in 0..12 {
            if sigma_c[t] != 0.0 {
                sigma[0][0] += sigma_c[t] * qp.sig[t][0][0];
                sigma[0][1] += sigma_c[t] * qp.sig[t][0][1];
                sigma[1][0] += sigma_c[t] * qp.sig[t][1][0];
                sigma[1][1] += sigma_c[t] * qp.sig[t][1][1];
            }
        }

        let tmag = frob(&theta);
        let nu = params.nu_unchecked(tmag);
        let f = (data.body_force)(qp.x);

        // Stress rows.
        for t in 0..12 {
            let tau = &qp.sig[t];
            let mut val = -ddot(&theta, tau);
            val -= u_c[0] * ctx.sig_div[t][0] + u_c[1] * ctx.sig_div[t][1];
            val -= uhat_c * (tau[0][1] - tau[1][0]);
            val += state.lambda * qp.sig_tr[t];
            r_sig[t] += w * val;
        }
        // Pressure row.
        r_phi -= w * trace(&theta);
        // Strain rows.
        for (l, rt) in r_theta.iter_mut().enumerate() {
            let lam = qp.lambda[l / 4];
            let c = l % 4;
            let xi_coeff = lam; // basis tensor is lam * E_c
            let theta_dot = theta[c / 2][c % 2] * xi_coeff;
            let q_dot = qten[c / 2][c % 2] * xi_coeff;
            let sigma_dot = sigma[c / 2][c % 2] * xi_coeff;
            let tr_xi = if c == 0 || c == 3 { xi_coeff } else { 0.0 };
            *rt += w * (nu * theta_dot + q_dot - sigma_dot - phi_c * tr_xi);
        }
        // Velocity rows.
        r_u[0] += w * (-div_sigma[0] - f[0]);
        r_u[1] += w * (-div_sigma[1] - f[1]);
        // Vorticity row.
        r_uhat -= w * (sigma[0][1] - sigma[1][0]);
        // Trace row.
        r_lambda += w * trace(&sigma);
    }

    // Multiplier rows, on their own rule.
    for qp in &ctx.qps_m {
        let w = qp.wdet;
        let theta = p1_tensor(theta_c, &qp.lambda);
        let qten = p1_tensor(q_c, &qp.lambda);
        let huber = params.huber_abs(frob(&theta));
        let plastic = crate::tensor::sub(
            &crate::tensor::scale(&theta, params.gamma * params.tau_s),
            &crate::tensor::scale(&qten, huber),
        );
        for (l, rq) in r_q.iter_mut().enumerate() {
            let lam = qp.lambda[l / 4];
            let c = l % 4;
            *rq += w * lam * plastic[c / 2][c % 2];
        }
    }

    dirichlet_edge_terms(mesh, &ctx, data, |t, v| r_sig[t] += v)?;

    let mut out = Vec::with_capacity(41);
    for t in 0..12 {
        out.push((dofs.sigma[t], r_sig[t]));
    }
    for l in 0..12 {
        out.push((dofs.theta[l], r_theta[l]));
        out.push((dofs.q[l], r_q[l]));
    }
    out.push((dofs.u[0], r_u[0]));
    out.push((dofs.u[1], r_u[1]));
    out.push((dofs.uhat, r_uhat));
    out.push((dofs.phi, r_phi));
    out.push((dofs.lambda, r_lambda));
    Ok(out)
}

/// Which matrix the cell kernel emits.
#[derive(Clone, Copy)]
enum MatrixKind<'a> {
    /// Newton matrix at a state, with or without the multiplier projection.
    Newton { state: &'a State, use_projection: bool },
    /// Constant-viscosity Stokes blocks (no multiplier coupling).
    Stokes,
}

fn jacobian_cell(
    mesh: &Mesh,
    layout: &DofLayout,
    params: &ModelParams,
    kind: MatrixKind,
    rule: &QuadratureRule,
    rule_m: &QuadratureRule,
    cell: usize,
    trips: &mut Triplets,
) -> Result<()> {
    let ctx = cell_ctx(mesh, rule, rule_m, cell)?;
    let dofs = local_dofs(mesh, layout, cell);

    // Scalar P1 mass and weighted variants.
    let mut sm = [[0.0; 3]; 3]; // plain, cell rule
    let mut sm_m = [[0.0; 3]; 3]; // plain, multiplier rule
    let mut sm_nu = [[0.0; 3]; 3]; // nu(|theta|)-weighted
    let mut sm_hub = [[0.0; 3]; 3]; // |theta|_gamma-weighted, multiplier rule
    let mut rank1_nu = [[0.0; 12]; 12]; // nu' coupling, strain rows x strain cols
    let mut rank1_chi = [[0.0; 12]; 12]; // active-set coupling, multiplier rows x strain cols

    let newton_state = match kind {
        MatrixKind::Newton { state, .. } => Some(state),
        MatrixKind::Stokes => None,
    };

    for qp in &ctx.qps {
        let w = qp.wdet;
        for a in 0..3 {
            for b in 0..3 {
                sm[a][b] += w * qp.lambda[a] * qp.lambda[b];
            }
        }
        match kind {
            MatrixKind::Stokes => {
                for a in 0..3 {
                    for b in 0..3 {
                        sm_nu[a][b] += w * params.mu * qp.lambda[a] * qp.lambda[b];
                    }
                }
            }
            MatrixKind::Newton { state, .. } => {
                let theta = p1_tensor(&state.theta[12 * cell..12 * cell + 12], &qp.lambda);
                let tmag = frob(&theta);
                let nu = params.nu_unchecked(tmag);
                for a in 0..3 {
                    for b in 0..3 {
                        sm_nu[a][b] += w * nu * qp.lambda[a] * qp.lambda[b];
                    }
                }
                // d_l = (theta : basis_l) at this point.
                let mut d = [0.0; 12];
                for (l, dl) in d.iter_mut().enumerate() {
                    *dl = qp.lambda[l / 4] * theta[(l % 4) / 2][(l % 4) % 2];
                }
                if tmag >= STRAIN_FLOOR {
                    let coef = params.nu_prime_unchecked(tmag) / tmag;
                    for i in 0..12 {
                        if d[i] != 0.0 {
                            for j in 0..12 {
                                rank1_nu[i][j] += w * coef * d[i] * d[j];
                            }
                        }
                    }
                }
            }
        }
    }

    if let MatrixKind::Newton { state, use_projection } = kind {
        for qp in &ctx.qps_m {
            let w = qp.wdet;
            let theta = p1_tensor(&state.theta[12 * cell..12 * cell + 12], &qp.lambda);
            let qten = p1_tensor(&state.q[12 * cell..12 * cell + 12], &qp.lambda);
            let tmag = frob(&theta);
            let huber = params.huber_abs(tmag);
            for a in 0..3 {
                for b in 0..3 {
                    sm_m[a][b] += w * qp.lambda[a] * qp.lambda[b];
                    sm_hub[a][b] += w * huber * qp.lambda[a] * qp.lambda[b];
                }
            }
            if params.chi_active(tmag) {
                let qhat = if use_projection { params.project_q(&qten) } else { qten };
                let coef = params.gamma / tmag.max(STRAIN_FLOOR);
                let mut d = [0.0; 12];
                let mut e = [0.0; 12];
                for l in 0..12 {
                    d[l] = qp.lambda[l / 4] * theta[(l % 4) / 2][(l % 4) % 2];
                    e[l] = qp.lambda[l / 4] * qhat[(l % 4) / 2][(l % 4) % 2];
                }
                for i in 0..12 {
                    if e[i] != 0.0 {
                        for j in 0..12 {
                            rank1_chi[i][j] -= w * coef * e[i] * d[j];
                        }
                    }
                }
            }
        }
    }

    // Stress rows x strain cols and the transpose: -(xi : tau) moments.
    for t in 0..12 {
        let r = (t % 4) / 2;
        for node in 0..3 {
            for col in 0..2 {
                let c = 2 * r + col;
                let l = 4 * node + c;
                let mut val = 0.0;
                for qp in &ctx.qps {
                    val -= qp.wdet * qp.lambda[node] * qp.sig[t][r][col];
                }
                trips.push(dofs.sigma[t], dofs.theta[l], val);
                trips.push(dofs.theta[l], dofs.sigma[t], val);
            }
        }
    }

    let area = ctx.geo.area;
    for t in 0..12 {
        let r = (t % 4) / 2;
        // Stress rows x velocity cols (and transpose): -div moments.
        let val = -ctx.sig_div[t][r] * area;
        trips.push(dofs.sigma[t], dofs.u[r], val);
        trips.push(dofs.u[r], dofs.sigma[t], val);

        // Stress rows x vorticity col (and transpose).
        let mut skew = 0.0;
        let mut tr_m = 0.0;
        for qp in &ctx.qps {
            skew -= qp.wdet * (qp.sig[t][0][1] - qp.sig[t][1][0]);
            tr_m += qp.wdet * qp.sig_tr[t];
        }
        trips.push(dofs.sigma[t], dofs.uhat, skew);
        trips.push(dofs.uhat, dofs.sigma[t], skew);

        // Stress rows x trace multiplier (and transpose).
        trips.push(dofs.sigma[t], dofs.lambda, tr_m);
        trips.push(dofs.lambda, dofs.sigma[t], tr_m);
    }

    // Pressure row x strain cols and strain rows x pressure col.
    for node in 0..3 {
        for c in [0usize, 3] {
            let l = 4 * node + c;
            let mut val = 0.0;
            for qp in &ctx.qps {
                val -= qp.wdet * qp.lambda[node];
            }
            trips.push(dofs.phi, dofs.theta[l], val);
            trips.push(dofs.theta[l], dofs.phi, val);
        }
    }

    // Strain rows x strain cols: viscous mass plus the nu' coupling.
    for i in 0..12 {
        for j in 0..12 {
            let mut val = rank1_nu[i][j];
            if i % 4 == j % 4 {
                val += sm_nu[i / 4][j / 4];
            }
            trips.push(dofs.theta[i], dofs.theta[j], val);
        }
    }

    if newton_state.is_some() {
        let gt = params.gamma * params.tau_s;
        for i in 0..12 {
            for j in 0..12 {
                // Strain rows x multiplier cols: the plain mass.
                if i % 4 == j % 4 {
                    trips.push(dofs.theta[i], dofs.q[j], sm[i / 4][j / 4]);
                }
                // Multiplier rows x strain cols.
                let mut val = rank1_chi[i][j];
                if i % 4 == j % 4 {
                    val += gt * sm_m[i / 4][j / 4];
                }
                trips.push(dofs.q[i], dofs.theta[j], val);
                // Multiplier rows x multiplier cols.
                if i % 4 == j % 4 {
                    trips.push(dofs.q[i], dofs.q[j], -sm_hub[i / 4][j / 4]);
                }
            }
        }
    }

    Ok(())
}

/// Runs `f` over all cells, in parallel when the `parallel` feature is
/// enabled, and returns the per-cell results in cell order.
fn map_cells<T: Send>(
    n_cells: usize,
    f: impl Fn(usize) -> Result<T> + Sync + Send,
) -> Result<Vec<T>> {
    #[cfg(feature = "parallel")]
    {
        if let Some(pool) = crate::threads::pool() {
            use rayon::prelude::*;
            return pool.install(|| (0..n_cells).into_par_iter().map(f).collect());
        }
    }
    (0..n_cells).map(f).collect()
}

fn map_cells_seq<T>(n_cells: usize, f: impl Fn(usize) -> Result<T>) -> Result<Vec<T>> {
    (0..n_cells).map(f).collect()
}

/// Galerkin residual of the discrete system at `state`.
pub fn assemble_residual(
    mesh: &Mesh,
    layout: &DofLayout,
    params: &ModelParams,
    data: &ProblemData,
    state: &State,
) -> Result<Vec<f64>> {
    state.validate(layout)?;
    let rule = quadrature(CELL_QUADRATURE_DEGREE)?;
    let rule_m = quadrature(MULTIPLIER_QUADRATURE_DEGREE)?;
    let per_cell = map_cells(layout.n_cells, |cell| {
        residual_cell(mesh, layout, params, data, state, &rule, &rule_m, cell)
    })?;
    Ok(accumulate_residual(layout, per_cell))
}

/// Sequential variant of [`assemble_residual`] (used by the benchmark suite
/// to compare against the parallel path).
pub fn assemble_residual_seq(
    mesh: &Mesh,
    layout: &DofLayout,
    params: &ModelParams,
    data: &ProblemData,
    state: &State,
) -> Result<Vec<f64>> {
    state.validate(layout)?;
    let rule = quadrature(CELL_QUADRATURE_DEGREE)?;
    let rule_m = quadrature(MULTIPLIER_QUADRATURE_DEGREE)?;
    let per_cell = map_cells_seq(layout.n_cells, |cell| {
        residual_cell(mesh, layout, params, data, state, &rule, &rule_m, cell)
    })?;
    Ok(accumulate_residual(layout, per_cell))
}

fn accumulate_residual(layout: &DofLayout, per_cell: Vec<Vec<(usize, f64)>>) -> Vec<f64> {
    let mut res = vec![0.0; layout.total_dofs];
    for contributions in per_cell {
        for (idx, val) in contributions {
            res[idx] += val;
        }
    }
    res
}

/// Slant (generalized) derivative of the residual at `state`. With
/// `use_projection` the multiplier is projected onto the yield ball inside
/// the active-set coupling term only.
pub fn assemble_jacobian(
    mesh: &Mesh,
    layout: &DofLayout,
    params: &ModelParams,
    data: &ProblemData,
    state: &State,
    use_projection: bool,
) -> Result<SparseMatrix> {
    let _ = data;
    state.validate(layout)?;
    let rule = quadrature(CELL_QUADRATURE_DEGREE)?;
    let rule_m = quadrature(MULTIPLIER_QUADRATURE_DEGREE)?;
    let per_cell = map_cells(layout.n_cells, |cell| {
        let mut t = Triplets::with_capacity(600);
        jacobian_cell(
            mesh,
            layout,
            params,
            MatrixKind::Newton { state, use_projection },
            &rule,
            &rule_m,
            cell,
            &mut t,
        )?;
        Ok(t)
    })?;
    let mut all = Triplets::with_capacity(per_cell.iter().map(|t| t.len()).sum());
    for mut t in per_cell {
        all.append(&mut t);
    }
    csr_from_triplets(layout.total_dofs, &all)
}

/// Sequential variant of [`assemble_jacobian`].
pub fn assemble_jacobian_seq(
    mesh: &Mesh,
    layout: &DofLayout,
    params: &ModelParams,
    data: &ProblemData,
    state: &State,
    use_projection: bool,
) -> Result<SparseMatrix> {
    let _ = data;
    state.validate(layout)?;
    let rule = quadrature(CELL_QUADRATURE_DEGREE)?;
    let rule_m = quadrature(MULTIPLIER_QUADRATURE_DEGREE)?;
    let per_cell = map_cells_seq(layout.n_cells, |cell| {
        let mut t = Triplets::with_capacity(600);
        jacobian_cell(
            mesh,
            layout,
            params,
            MatrixKind::Newton { state, use_projection },
            &rule,
            &rule_m,
            cell,
            &mut t,
        )?;
        Ok(t)
    })?;
    let mut all = Triplets::with_capacity(per_cell.iter().map(|t| t.len()).sum());
    for mut t in per_cell {
        all.append(&mut t);
    }
    csr_from_triplets(layout.total_dofs, &all)
}

/// Index map from the full layout onto the Stokes subsystem (everything but
/// the multiplier block; the trace dof moves down into its slot).
pub fn stokes_index(layout: &DofLayout, full: usize) -> Option<usize> {
    if full < layout.off_q {
        Some(full)
    } else if full == layout.off_lambda {
        Some(layout.off_q)
    } else {
        None
    }
}

/// Number of unknowns of the Stokes subsystem.
pub fn stokes_dofs(layout: &DofLayout) -> usize {
    layout.total_dofs - layout.n_q()
}

/// The linear dual-mixed Stokes system: constant viscosity `mu`, no plastic
/// term, same saddle-point, boundary and trace structure.
pub fn assemble_stokes_system(
    mesh: &Mesh,
    layout: &DofLayout,
    params: &ModelParams,
    data: &ProblemData,
) -> Result<(SparseMatrix, Vec<f64>)> {
    let rule = quadrature(CELL_QUADRATURE_DEGREE)?;
    let rule_m = quadrature(MULTIPLIER_QUADRATURE_DEGREE)?;
    let per_cell = map_cells(layout.n_cells, |cell| {
        let mut t = Triplets::with_capacity(400);
        jacobian_cell(mesh, layout, params, MatrixKind::Stokes, &rule, &rule_m, cell, &mut t)?;
        Ok(t)
    })?;
    let mut all = Triplets::with_capacity(per_cell.iter().map(|t| t.len()).sum());
    for t in per_cell {
        for (r, c, v) in t.entries {
            let (Some(r), Some(c)) = (stokes_index(layout, r), stokes_index(layout, c)) else {
                continue;
            };
            all.push(r, c, v);
        }
    }
    let matrix = csr_from_triplets(stokes_dofs(layout), &all)?;

    // The residual at the zero state is minus the right-hand side.
    let zero = State::zeros(layout);
    let res = assemble_residual(mesh, layout, params, data, &zero)?;
    let mut rhs = vec![0.0; stokes_dofs(layout)];
    for (full, val) in res.iter().enumerate() {
        if let Some(reduced) = stokes_index(layout, full) {
            rhs[reduced] = -val;
        }
    }
    Ok((matrix, rhs))
}

/// Scatters a Stokes solution back into a full state, leaving the
/// multiplier block zero.
pub fn state_from_stokes(layout: &DofLayout, stokes: &[f64]) -> State {
    let mut flat = vec![0.0; layout.total_dofs];
    for full in 0..layout.total_dofs {
        if let Some(reduced) = stokes_index(layout, full) {
            flat[full] = stokes[reduced];
        }
    }
    State::from_flat(layout, &flat)
}

/// Sets the multiplier block to `gamma tau_s theta / |theta|_gamma`
/// evaluated at the P1 interpolation nodes.
pub fn interpolate_multiplier(layout: &DofLayout, params: &ModelParams, state: &mut State) {
    for cell in 0..layout.n_cells {
        for node in 0..3 {
            let base = 12 * cell + 4 * node;
            let theta: Mat2 = [
                [state.theta[base], state.theta[base + 1]],
                [state.theta[base + 2], state.theta[base + 3]],
            ];
            let huber = params.huber_abs(frob(&theta));
            // huber = 0 only when tau_s = 0 and theta vanishes; the
            // multiplier is zero there.
            let scale = if huber > 0.0 { params.gamma * params.tau_s / huber } else { 0.0 };
            for c in 0..4 {
                state.q[base + c] = scale * theta[c / 2][c % 2];
            }
        }
    }
}

/// Applies the regularized viscous operator to a strain coefficient vector:
/// the strain rows of the residual restricted to the `a_gamma` form
/// (viscous part plus the Huber quotient), with the multiplier eliminated.
pub fn a_gamma_apply(
    mesh: &Mesh,
    layout: &DofLayout,
    params: &ModelParams,
    theta: &[f64],
) -> Result<Vec<f64>> {
    if theta.len() != layout.n_theta() {
        return Err(Error::invalid("theta coefficient vector has wrong length"));
    }
    let rule = quadrature(CELL_QUADRATURE_DEGREE)?;
    let per_cell = map_cells(layout.n_cells, |cell| {
        let geo = crate::mesh::cell_geometry(mesh, cell)?;
        let mut local = [0.0; 12];
        for qi in 0..rule.len() {
            let xi = rule.ref_point(qi);
            let lambda = p1_values(xi);
            let w = rule.weights[qi] * geo.det;
            let th = p1_tensor(&theta[12 * cell..12 * cell + 12], &lambda);
            let tmag = frob(&th);
            let coef = params.nu_unchecked(tmag) + params.gamma * params.tau_s / params.huber_abs(tmag);
            for (l, out) in local.iter_mut().enumerate() {
                *out += w * coef * lambda[l / 4] * th[(l % 4) / 2][(l % 4) % 2];
            }
        }
        Ok(local)
    })?;
    let mut out = vec![0.0; layout.n_theta()];
    for (cell, local) in per_cell.iter().enumerate() {
        out[12 * cell..12 * cell + 12].copy_from_slice(local);
    }
    Ok(out)
}

/// Largest Frobenius norm of the projected multiplier over all quadrature
/// points (the quantity bounded by `tau_s` when the projection is active).
pub fn max_projected_multiplier_norm(
    layout: &DofLayout,
    params: &ModelParams,
    state: &State,
) -> Result<f64> {
    let rule = quadrature(MULTIPLIER_QUADRATURE_DEGREE)?;
    let mut max = 0.0f64;
    for cell in 0..layout.n_cells {
        for qi in 0..rule.len() {
            let lambda = p1_values(rule.ref_point(qi));
            let q = p1_tensor(&state.q[12 * cell..12 * cell + 12], &lambda);
            max = max.max(frob(&params.project_q(&q)));
        }
    }
    Ok(max)
}

/// Pointwise multiplier-identity defect `max |gamma tau_s theta -
/// |theta|_gamma q|` over quadrature points, together with the natural
/// scale `gamma tau_s max|theta| + tau_s`.
pub fn multiplier_identity_residual(
    layout: &DofLayout,
    params: &ModelParams,
    state: &State,
) -> Result<(f64, f64)> {
    let rule = quadrature(MULTIPLIER_QUADRATURE_DEGREE)?;
    let mut max_defect = 0.0f64;
    let mut max_theta = 0.0f64;
    for cell in 0..layout.n_cells {
        for qi in 0..rule.len() {
            let lambda = p1_values(rule.ref_point(qi));
            let th = p1_tensor(&state.theta[12 * cell..12 * cell + 12], &lambda);
            let q = p1_tensor(&state.q[12 * cell..12 * cell + 12], &lambda);
            let tmag = frob(&th);
            max_theta = max_theta.max(tmag);
            let defect = crate::tensor::sub(
                &crate::tensor::scale(&th, params.gamma * params.tau_s),
                &crate::tensor::scale(&q, params.huber_abs(tmag)),
            );
            max_defect = max_defect.max(frob(&defect));
        }
    }
    Ok((max_defect, params.gamma * params.tau_s * max_theta + params.tau_s))
}
