//! Cross-checks the residual assembly against a deliberately naive
//! reference implementation: per-dof quadrature loops with independent
//! geometry handling (barycentric mapping, shoelace areas), an independent
//! construction of the H(div) basis (full-pivot elimination against 3-point
//! edge moments), and straight-line accumulation of every weak-form term.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use viscoflow::assembly::{assemble_residual, BcKind, ProblemData, State};
use viscoflow::fem::{
    build_dof_layout, gauss_legendre_unit, quadrature, DofLayout, CELL_QUADRATURE_DEGREE,
    MULTIPLIER_QUADRATURE_DEGREE,
};
use viscoflow::mesh::{build_channel, build_crossed_rect, BoundaryTag, Mesh, Rect};
use viscoflow::rheology::ModelParams;

type Vec2 = [f64; 2];

/// Solves a 6x6 system by Gaussian elimination with full pivoting
/// (deliberately different from the implementation's solver).
fn solve6(mut a: [[f64; 6]; 6], mut b: [f64; 6]) -> [f64; 6] {
    let mut col_perm = [0usize; 6];
    for (i, c) in col_perm.iter_mut().enumerate() {
        *c = i;
    }
    for k in 0..6 {
        let (mut pr, mut pc, mut best) = (k, k, 0.0f64);
        for r in k..6 {
            for c in k..6 {
                if a[r][c].abs() > best {
                    best = a[r][c].abs();
                    pr = r;
                    pc = c;
                }
            }
        }
        assert!(best > 1e-14, "oracle moment matrix is singular");
        a.swap(k, pr);
        b.swap(k, pr);
        for row in a.iter_mut() {
            row.swap(k, pc);
        }
        col_perm.swap(k, pc);
        for r in k + 1..6 {
            let f = a[r][k] / a[k][k];
            for c in k..6 {
                a[r][c] -= f * a[k][c];
            }
            b[r] -= f * b[k];
        }
    }
    let mut y = [0.0; 6];
    for r in (0..6).rev() {
        let mut acc = b[r];
        for c in r + 1..6 {
            acc -= a[r][c] * y[c];
        }
        y[r] = acc / a[r][r];
    }
    let mut x = [0.0; 6];
    for k in 0..6 {
        x[col_perm[k]] = y[k];
    }
    x
}

/// Vector H(div) basis function `j` of a cell, evaluated at `x`, built from
/// scratch: dual to the canonical edge moments.
fn oracle_basis(mesh: &Mesh, cell: usize) -> Vec<Box<dyn Fn(Vec2) -> Vec2>> {
    let gauss = gauss_legendre_unit(3).unwrap();
    let mut m = [[0.0f64; 6]; 6];
    for le in 0..3 {
        let (edge, _) = mesh.cell_edges[cell][le];
        let [lo, hi] = mesh.edges[edge];
        let (a, b) = (mesh.vertices[lo], mesh.vertices[hi]);
        let t = [b[0] - a[0], b[1] - a[1]];
        let len = (t[0] * t[0] + t[1] * t[1]).sqrt();
        let n = [t[1] / len, -t[0] / len];
        for &(s, w) in &gauss {
            let x = [a[0] + s * t[0], a[1] + s * t[1]];
            let mono_n = [n[0], x[0] * n[0], x[1] * n[0], n[1], x[0] * n[1], x[1] * n[1]];
            for k in 0..6 {
                m[2 * le][k] += w * len * mono_n[k];
                m[2 * le + 1][k] += w * len * mono_n[k] * (2.0 * s - 1.0);
            }
        }
    }
    (0..6)
        .map(|j| {
            let mut rhs = [0.0; 6];
            rhs[j] = 1.0;
            let c = solve6(m, rhs);
            Box::new(move |x: Vec2| {
                [c[0] + c[1] * x[0] + c[2] * x[1], c[3] + c[4] * x[0] + c[5] * x[1]]
            }) as Box<dyn Fn(Vec2) -> Vec2>
        })
        .collect()
}

fn shoelace(a: Vec2, b: Vec2, c: Vec2) -> f64 {
    0.5 * ((b[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (b[1] - a[1]))
}

fn frob(m: &[[f64; 2]; 2]) -> f64 {
    (m[0][0] * m[0][0] + m[0][1] * m[0][1] + m[1][0] * m[1][0] + m[1][1] * m[1][1]).sqrt()
}

/// Straight-line reference residual.
fn oracle_residual(
    mesh: &Mesh,
    layout: &DofLayout,
    params: &ModelParams,
    data: &ProblemData,
    state: &State,
) -> Vec<f64> {
    let rule = quadrature(CELL_QUADRATURE_DEGREE).unwrap();
    let rule_m = quadrature(MULTIPLIER_QUADRATURE_DEGREE).unwrap();
    let egauss = gauss_legendre_unit(4).unwrap();
    let mut res = vec![0.0; layout.total_dofs];

    for cell in 0..mesh.num_cells() {
        let [ia, ib, ic] = mesh.cells[cell];
        let (va, vb, vc) = (mesh.vertices[ia], mesh.vertices[ib], mesh.vertices[ic]);
        let area = shoelace(va, vb, vc);
        let basis = oracle_basis(mesh, cell);

        // Field evaluation helpers working on barycentric coordinates.
        let at = |lam: [f64; 3]| -> Vec2 {
            [
                lam[0] * va[0] + lam[1] * vb[0] + lam[2] * vc[0],
                lam[0] * va[1] + lam[1] * vb[1] + lam[2] * vc[1],
            ]
        };
        let p1_field = |coeffs: &[f64], lam: [f64; 3]| -> [[f64; 2]; 2] {
            let mut out = [[0.0; 2]; 2];
            for node in 0..3 {
                for comp in 0..4 {
                    out[comp / 2][comp % 2] += lam[node] * coeffs[12 * cell + 4 * node + comp];
                }
            }
            out
        };
        let sigma_tensor = |x: Vec2| -> ([[f64; 2]; 2], f64) {
            // Returns sigma(x) and tr(sigma(x)).
            let mut out = [[0.0; 2]; 2];
            for le in 0..3 {
                let (edge, _) = mesh.cell_edges[cell][le];
                for row in 0..2 {
                    for mom in 0..2 {
                        let dof = layout.sigma_dof(edge, row, mom) - layout.off_sigma;
                        let v = basis[2 * le + mom](x);
                        out[row][0] += state.sigma[dof] * v[0];
                        out[row][1] += state.sigma[dof] * v[1];
                    }
                }
            }
            (out, out[0][0] + out[1][1])
        };
        // Row divergence of sigma (constant): finite differences of the
        // linear basis are exact.
        let div_sigma = {
            let probe = |x: Vec2| sigma_tensor(x).0;
            let h = 0.25;
            let base = at([1.0 / 3.0; 3]);
            let dx0 = probe([base[0] + h, base[1]]);
            let dx1 = probe([base[0] - h, base[1]]);
            let dy0 = probe([base[0], base[1] + h]);
            let dy1 = probe([base[0], base[1] - h]);
            [
                (dx0[0][0] - dx1[0][0]) / (2.0 * h) + (dy0[0][1] - dy1[0][1]) / (2.0 * h),
                (dx0[1][0] - dx1[1][0]) / (2.0 * h) + (dy0[1][1] - dy1[1][1]) / (2.0 * h),
            ]
        };

        let u = [state.u[2 * cell], state.u[2 * cell + 1]];
        let uhat = state.u_hat[cell];
        let phi = state.phi[cell];

        for qi in 0..rule.len() {
            let lam = rule.points[qi];
            let w = rule.weights[qi] * 2.0 * area;
            let x = at(lam);
            let theta = p1_field(&state.theta, lam);
            let q = p1_field(&state.q, lam);
            let (sigma, tr_sigma) = sigma_tensor(x);
            let nu = params.nu(frob(&theta)).unwrap();
            let f = (data.body_force)(x);

            // Stress rows.
            for le in 0..3 {
                let (edge, _) = mesh.cell_edges[cell][le];
                for row in 0..2 {
                    for mom in 0..2 {
                        let v = basis[2 * le + mom](x);
                        let mut tau = [[0.0; 2]; 2];
                        tau[row] = v;
                        let dof = layout.sigma_dof(edge, row, mom);
                        let mut val = 0.0;
                        for r in 0..2 {
                            for c in 0..2 {
                                val -= theta[r][c] * tau[r][c];
                            }
                        }
                        // Divergence of this basis tensor via the analytic
                        // coefficients: d/dx of component (row,0) plus d/dy
                        // of component (row,1).
                        let vx = basis[2 * le + mom]([x[0] + 0.5, x[1]]);
                        let vx2 = basis[2 * le + mom]([x[0] - 0.5, x[1]]);
                        let vy = basis[2 * le + mom]([x[0], x[1] + 0.5]);
                        let vy2 = basis[2 * le + mom]([x[0], x[1] - 0.5]);
                        let div = (vx[0] - vx2[0]) + (vy[1] - vy2[1]);
                        val -= u[row] * div;
                        val -= uhat * (tau[0][1] - tau[1][0]);
                        val += state.lambda * (tau[0][0] + tau[1][1]);
                        res[dof] += w * val;
                    }
                }
            }
            // Pressure row.
            res[layout.phi_dof(cell)] -= w * (theta[0][0] + theta[1][1]);
            // Strain rows.
            for node in 0..3 {
                for comp in 0..4 {
                    let dof = layout.theta_dof(cell, node, comp);
                    let xi = lam[node];
                    let (r, c) = (comp / 2, comp % 2);
                    let tr_xi = if r == c { xi } else { 0.0 };
                    res[dof] += w
                        * (nu * theta[r][c] * xi + q[r][c] * xi - sigma[r][c] * xi - phi * tr_xi);
                }
            }
            // Velocity rows.
            res[layout.u_dof(cell, 0)] += w * (-div_sigma[0] - f[0]);
            res[layout.u_dof(cell, 1)] += w * (-div_sigma[1] - f[1]);
            // Vorticity row.
            res[layout.uhat_dof(cell)] -= w * (sigma[0][1] - sigma[1][0]);
            // Trace row.
            res[layout.lambda_dof()] += w * tr_sigma;
        }

        // Multiplier rows on their own rule.
        for qi in 0..rule_m.len() {
            let lam = rule_m.points[qi];
            let w = rule_m.weights[qi] * 2.0 * area;
            let theta = p1_field(&state.theta, lam);
            let q = p1_field(&state.q, lam);
            let huber = params.huber_abs(frob(&theta));
            for node in 0..3 {
                for comp in 0..4 {
                    let dof = layout.q_dof(cell, node, comp);
                    let (r, c) = (comp / 2, comp % 2);
                    res[dof] += w
                        * lam[node]
                        * (params.gamma * params.tau_s * theta[r][c] - huber * q[r][c]);
                }
            }
        }

        // Dirichlet boundary terms.
        for le in 0..3 {
            let (edge, _) = mesh.cell_edges[cell][le];
            let tag = mesh.boundary_tags[edge];
            if !tag.is_boundary() || (data.bc_kind)(tag) != BcKind::DirichletFlux {
                continue;
            }
            let p = mesh.vertices[mesh.cells[cell][le]];
            let qv = mesh.vertices[mesh.cells[cell][(le + 1) % 3]];
            let t = [qv[0] - p[0], qv[1] - p[1]];
            let len = (t[0] * t[0] + t[1] * t[1]).sqrt();
            // Outward normal of a counterclockwise cell.
            let n = [t[1] / len, -t[0] / len];
            for &(s, w) in &egauss {
                let x = [p[0] + s * t[0], p[1] + s * t[1]];
                let ud = (data.dirichlet)(x);
                for mom in 0..2 {
                    let v = basis[2 * le + mom](x);
                    let vn = v[0] * n[0] + v[1] * n[1];
                    for row in 0..2 {
                        let dof = layout.sigma_dof(edge, row, mom);
                        res[dof] += w * len * vn * ud[row];
                    }
                }
            }
        }
    }
    res
}

fn random_state(layout: &DofLayout, seed: u64, theta_scale: f64) -> State {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut state = State::zeros(layout);
    for v in state.theta.iter_mut() {
        *v = rng.random_range(-theta_scale..theta_scale);
    }
    for v in state
        .sigma
        .iter_mut()
        .chain(state.u.iter_mut())
        .chain(state.u_hat.iter_mut())
        .chain(state.phi.iter_mut())
        .chain(state.q.iter_mut())
    {
        *v = rng.random_range(-1.0..1.0);
    }
    state.lambda = rng.random_range(-1.0..1.0);
    state
}

fn compare(mesh: &Mesh, params: &ModelParams, data: &ProblemData, seed: u64) {
    let layout = build_dof_layout(mesh).unwrap();
    let state = random_state(&layout, seed, 3.0 * params.tau_s.max(0.1) / params.gamma);
    let fast = assemble_residual(mesh, &layout, params, data, &state).unwrap();
    let slow = oracle_residual(mesh, &layout, params, data, &state);
    let mut worst = 0.0f64;
    for (i, (a, b)) in fast.iter().zip(&slow).enumerate() {
        let err = (a - b).abs() / (1.0 + b.abs());
        if err > worst {
            worst = err;
        }
        assert!(
            err <= 1e-12,
            "entry {i}: implementation {a}, oracle {b} (scaled error {err:.3e})"
        );
    }
    println!("worst scaled deviation {worst:.3e} over {} entries", fast.len());
}

#[test]
fn residual_matches_oracle_on_crossed_mesh() {
    let mesh = build_crossed_rect(3, 2, Rect { x0: -0.2, y0: 0.3, x1: 1.4, y1: 1.5 }).unwrap();
    let data = ProblemData::new(
        |x| [2.0 * x[1] - 1.0, x[0] * x[0]],
        |x| [x[1] * 0.25, -0.1 * x[0]],
    );
    let params = ModelParams::herschel_bulkley(1.75, 1.0, 2.5, 1e3).unwrap();
    compare(&mesh, &params, &data, 101);
    let params = ModelParams::carreau(4.0, 0.7, 1.0, 1e2).unwrap();
    compare(&mesh, &params, &data, 102);
}

#[test]
fn residual_matches_oracle_on_channel_with_outflow() {
    let mesh = build_channel(4.0, 1.0, 0.5, 2).unwrap();
    let data = ProblemData::new(
        |_| [0.0, 0.0],
        |x| if x[0] < 1e-12 { [1.0 - x[1] * x[1], 0.0] } else { [0.0, 0.0] },
    )
    .with_bc(|tag| {
        if tag == BoundaryTag::Outflow {
            BcKind::StressFree
        } else {
            BcKind::DirichletFlux
        }
    });
    let params = ModelParams::casson(1.0, 2.5, 1e3).unwrap();
    compare(&mesh, &params, &data, 103);
}

#[test]
fn zero_state_zero_data_is_exactly_zero_both_ways() {
    let mesh = build_crossed_rect(2, 2, Rect::UNIT).unwrap();
    let layout = build_dof_layout(&mesh).unwrap();
    let params = ModelParams::herschel_bulkley(2.0, 1.0, 1.0, 1e3).unwrap();
    let data = ProblemData::new(|_| [0.0, 0.0], |_| [0.0, 0.0]);
    let state = State::zeros(&layout);
    let fast = assemble_residual(&mesh, &layout, &params, &data, &state).unwrap();
    let slow = oracle_residual(&mesh, &layout, &params, &data, &state);
    assert!(fast.iter().all(|&v| v == 0.0));
    assert!(slow.iter().all(|&v| v == 0.0));
}
