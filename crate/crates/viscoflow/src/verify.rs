//! Independent verification oracles: finite-difference slant-derivative
//! checks, the Huber inequality and operator monotonicity property suites,
//! and a manufactured-solution convergence study for the Stokes limit.
//!
//! Every suite has a mutated companion that seeds a deliberate bug and must
//! report a failure; the `verify` command runs both directions.

use crate::assembly::{
    a_gamma_apply, assemble_jacobian, assemble_residual, assemble_stokes_system, ProblemData,
    State,
};
use crate::error::{Error, Result};
use crate::fem::{
    build_dof_layout, p1_values, quadrature, DofLayout, CELL_QUADRATURE_DEGREE,
    MULTIPLIER_QUADRATURE_DEGREE,
};
use crate::linalg::{direct_solve, SparseMatrix};
use crate::mesh::{build_crossed_rect, Mesh, Rect};
use crate::rheology::ModelParams;
use crate::tensor::{frob, sub, Mat2};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Outcome of the Huber inequality suite.
#[derive(Debug)]
pub struct HuberSuiteResult {
    pub pass: bool,
    pub samples: usize,
    pub violations: usize,
    /// Pairs per case split: (both yielded, first only, second only, neither).
    pub case_counts: [usize; 4],
    pub counterexample: Option<(Mat2, Mat2, f64)>,
}

fn random_mat2(rng: &mut ChaCha8Rng, scale: f64) -> Mat2 {
    [
        [rng.random_range(-scale..scale), rng.random_range(-scale..scale)],
        [rng.random_range(-scale..scale), rng.random_range(-scale..scale)],
    ]
}

fn huber_suite_impl(samples: usize, gammas: &[f64], lipschitz_factor: f64) -> HuberSuiteResult {
    let mut rng = ChaCha8Rng::seed_from_u64(0x48_55_42_45);
    let tau_s = 1.0;
    let mut result = HuberSuiteResult {
        pass: true,
        samples: 0,
        violations: 0,
        case_counts: [0; 4],
        counterexample: None,
    };
    for &gamma in gammas {
        let params = ModelParams::herschel_bulkley(1.75, 1.0, tau_s, gamma)
            .expect("valid suite parameters");
        let kink = tau_s / gamma;
        for k in 0..samples {
            // Mix broad pairs with pairs concentrated at the kink.
            let scale = match k % 3 {
                0 => 3.0 * kink,
                1 => kink * 1.05,
                _ => 2.0,
            };
            let a = random_mat2(&mut rng, scale);
            let b = if k % 5 == 0 {
                // Nearby pair straddling the kink.
                let mut b = a;
                b[0][0] += rng.random_range(-0.1 * kink..0.1 * kink);
                b
            } else {
                random_mat2(&mut rng, scale)
            };
            let case = match (params.chi_active(frob(&a)), params.chi_active(frob(&b))) {
                (true, true) => 0,
                (true, false) => 1,
                (false, true) => 2,
                (false, false) => 3,
            };
            result.case_counts[case] += 1;
            result.samples += 1;

            let lhs = params.huber_abs(frob(&a)) - params.huber_abs(frob(&b));
            let rhs = lipschitz_factor * gamma * frob(&sub(&a, &b)) + 1e-12;
            if lhs > rhs {
                result.violations += 1;
                if result.counterexample.is_none() {
                    result.counterexample = Some((a, b, lhs - rhs));
                }
            }
        }
    }
    result.pass = result.violations == 0 && result.case_counts.iter().all(|&c| c > 0);
    result
}

/// Checks `|A|_gamma - |B|_gamma <= gamma |A - B| + 1e-12` on random tensor
/// pairs (including near-kink pairs), classifying every pair into the four
/// yielded/unyielded case splits.
pub fn huber_property_suite(samples: usize, gammas: &[f64]) -> HuberSuiteResult {
    huber_suite_impl(samples, gammas, 1.0)
}

/// Self-falsification: the same sampling against a halved Lipschitz factor
/// must produce violations.
pub fn huber_property_suite_mutated(samples: usize, gammas: &[f64]) -> HuberSuiteResult {
    huber_suite_impl(samples, gammas, 0.5)
}

fn theta_vector(rng: &mut ChaCha8Rng, layout: &DofLayout, scale: f64) -> Vec<f64> {
    (0..layout.n_theta()).map(|_| rng.random_range(-scale..scale)).collect()
}

/// Minimum of `<A_gamma(t1) - A_gamma(t2), t1 - t2>` over random coefficient
/// pairs; the operator is monotone, so the minimum should not drop below
/// `-1e-12` (up to roundoff).
pub fn monotonicity_suite(
    resolution: usize,
    params: &ModelParams,
    samples: usize,
    seed: u64,
) -> Result<f64> {
    monotonicity_impl(resolution, params, samples, seed, false)
}

/// Self-falsification: the Huber quotient enters with a large negative
/// coefficient, which destroys monotonicity and must be detected.
pub fn monotonicity_suite_mutated(
    resolution: usize,
    params: &ModelParams,
    samples: usize,
    seed: u64,
) -> Result<f64> {
    monotonicity_impl(resolution, params, samples, seed, true)
}

fn monotonicity_impl(
    resolution: usize,
    params: &ModelParams,
    samples: usize,
    seed: u64,
    mutate: bool,
) -> Result<f64> {
    let mesh = build_crossed_rect(resolution, resolution, Rect::UNIT)?;
    let layout = build_dof_layout(&mesh)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let kink = params.tau_s / params.gamma;
    let mut min_pairing = f64::INFINITY;
    for k in 0..samples {
        let scale = if k % 2 == 0 { 2.0 * kink } else { 1.0 };
        let t1 = theta_vector(&mut rng, &layout, scale);
        let t2 = if k % 7 == 0 { t1.clone() } else { theta_vector(&mut rng, &layout, scale) };
        let (a1, a2) = if mutate {
            (
                a_gamma_apply_mutated(&mesh, &layout, params, &t1)?,
                a_gamma_apply_mutated(&mesh, &layout, params, &t2)?,
            )
        } else {
            (
                a_gamma_apply(&mesh, &layout, params, &t1)?,
                a_gamma_apply(&mesh, &layout, params, &t2)?,
            )
        };
        let pairing: f64 = a1
            .iter()
            .zip(&a2)
            .zip(t1.iter().zip(&t2))
            .map(|((r1, r2), (x1, x2))| (r1 - r2) * (x1 - x2))
            .sum();
        min_pairing = min_pairing.min(pairing);
    }
    Ok(min_pairing)
}

/// The `a_gamma` operator with a seeded sign bug in the plastic quotient.
fn a_gamma_apply_mutated(
    mesh: &Mesh,
    layout: &DofLayout,
    params: &ModelParams,
    theta: &[f64],
) -> Result<Vec<f64>> {
    let rule = quadrature(CELL_QUADRATURE_DEGREE)?;
    let mut out = vec![0.0; layout.n_theta()];
    for cell in 0..layout.n_cells {
        let geo = crate::mesh::cell_geometry(mesh, cell)?;
        for qi in 0..rule.len() {
            let lambda = p1_values(rule.ref_point(qi));
            let w = rule.weights[qi] * geo.det;
            let mut th = [[0.0; 2]; 2];
            for (i, &l) in lambda.iter().enumerate() {
                for c in 0..4 {
                    th[c / 2][c % 2] += l * theta[12 * cell + 4 * i + c];
                }
            }
            let tmag = frob(&th);
            let coef = params.nu_unchecked(tmag)
                - params.gamma * params.tau_s / params.huber_abs(tmag);
            for l in 0..12 {
                out[12 * cell + l] += w * coef * lambda[l / 4] * th[(l % 4) / 2][(l % 4) % 2];
            }
        }
    }
    Ok(out)
}

/// Result of the finite-difference slant-derivative check.
#[derive(Debug)]
pub struct FdJacobianResult {
    pub max_rel_error: f64,
    pub checked_entries: usize,
    pub draws_needed: usize,
}

/// Compares the assembled Newton matrix against central differences of the
/// residual on a small crossed mesh, at a random state kept away from the
/// Huber kink and the strain floor. Entries below 1e-8 in magnitude are
/// skipped (they carry only cancellation noise).
pub fn fd_jacobian_check(
    resolution: usize,
    params: &ModelParams,
    seed: u64,
) -> Result<FdJacobianResult> {
    fd_jacobian_impl(resolution, params, seed, false)
}

/// Self-falsification: one matrix block is scaled by 1.01 before the
/// comparison, which must push the reported error above 1e-3.
pub fn fd_jacobian_check_mutated(
    resolution: usize,
    params: &ModelParams,
    seed: u64,
) -> Result<FdJacobianResult> {
    fd_jacobian_impl(resolution, params, seed, true)
}

fn fd_jacobian_impl(
    resolution: usize,
    params: &ModelParams,
    seed: u64,
    mutate: bool,
) -> Result<FdJacobianResult> {
    let mesh = build_crossed_rect(resolution, resolution, Rect::UNIT)?;
    let layout = build_dof_layout(&mesh)?;
    let data = ProblemData::new(|_| [0.0, 0.0], |_| [0.0, 0.0]);
    let mut points: Vec<[f64; 3]> = Vec::new();
    for degree in [CELL_QUADRATURE_DEGREE, MULTIPLIER_QUADRATURE_DEGREE] {
        let rule = quadrature(degree)?;
        points.extend((0..rule.len()).map(|qi| p1_values(rule.ref_point(qi))));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let kink = params.tau_s / params.gamma;
    let margin = 1e-3 * kink;
    let scale = kink.max(1.0);
    let mut draws = 0usize;
    let state = loop {
        draws += 1;
        if draws > 100 {
            return Err(Error::SeedFailure { draws: 100 });
        }
        let mut state = State::zeros(&layout);
        for v in state.theta.iter_mut() {
            *v = rng.random_range(-1.2 * kink..1.2 * kink);
        }
        for v in state
            .sigma
            .iter_mut()
            .chain(state.u.iter_mut())
            .chain(state.u_hat.iter_mut())
            .chain(state.phi.iter_mut())
            .chain(state.q.iter_mut())
        {
            *v = rng.random_range(-scale..scale);
        }
        state.lambda = rng.random_range(-scale..scale);

        // Admissible iff every sampling point of both rules is away from the
        // kink and from the strain floor.
        let mut admissible = true;
        'cells: for cell in 0..layout.n_cells {
            for lambda in &points {
                let tmag = frob(&state.theta_at(cell, *lambda));
                if tmag < 1e-3 || (tmag - kink).abs() < margin {
                    admissible = false;
                    break 'cells;
                }
            }
        }
        if admissible {
            break state;
        }
    };

    // The exact slant derivative (no projection, so the matrix is the true
    // generalized derivative away from the kink).
    let mut jac = assemble_jacobian(&mesh, &layout, params, &data, &state, false)?;
    if mutate {
        corrupt_multiplier_block(&layout, &mut jac);
    }

    let flat = state.to_flat(&layout);
    let mut max_rel = 0.0f64;
    let mut checked = 0usize;
    for j in 0..layout.total_dofs {
        let h = 1e-6 * (1.0 + flat[j].abs());
        let mut plus = flat.clone();
        plus[j] += h;
        let mut minus = flat.clone();
        minus[j] -= h;
        let rp = assemble_residual(&mesh, &layout, params, &data, &State::from_flat(&layout, &plus))?;
        let rm =
            assemble_residual(&mesh, &layout, params, &data, &State::from_flat(&layout, &minus))?;
        for i in 0..layout.total_dofs {
            let fd = (rp[i] - rm[i]) / (2.0 * h);
            let ja = jac.get(i, j);
            let mag = fd.abs().max(ja.abs());
            if mag > 1e-8 {
                checked += 1;
                max_rel = max_rel.max((fd - ja).abs() / mag);
            }
        }
    }
    Ok(FdJacobianResult { max_rel_error: max_rel, checked_entries: checked, draws_needed: draws })
}

/// Scales the multiplier-row/strain-column block by 1.01 in place.
fn corrupt_multiplier_block(layout: &DofLayout, jac: &mut SparseMatrix) {
    let q_range = layout.off_q..layout.off_q + layout.n_q();
    let theta_range = layout.off_theta..layout.off_theta + layout.n_theta();
    for row in q_range {
        for k in jac.row_ptr[row]..jac.row_ptr[row + 1] {
            if theta_range.contains(&jac.col_idx[k]) {
                jac.values[k] *= 1.01;
            }
        }
    }
}

/// Errors and observed orders of the manufactured-solution study.
#[derive(Debug)]
pub struct MmsResult {
    pub resolutions: Vec<usize>,
    pub velocity_errors: Vec<f64>,
    pub pressure_errors: Vec<f64>,
    pub velocity_rates: Vec<f64>,
    pub pressure_rates: Vec<f64>,
}

impl MmsResult {
    /// Mean observed velocity order across the refinement path.
    pub fn velocity_rate(&self) -> f64 {
        self.velocity_rates.iter().sum::<f64>() / self.velocity_rates.len() as f64
    }

    pub fn errors_decrease_monotonically(&self) -> bool {
        self.velocity_errors.windows(2).all(|w| w[1] < w[0])
    }
}

/// Divergence-free manufactured solution on the unit square:
/// `u = curl(psi)` with `psi = x^2 (1-x)^2 y^2 (1-y)^2` and
/// `phi = x^3 - 1/4` (zero mean).
pub mod mms {
    fn bump(t: f64) -> (f64, f64, f64, f64, f64) {
        // t^2 (1-t)^2 and its first four derivatives.
        let v = t * t * (1.0 - t) * (1.0 - t);
        let d1 = 2.0 * t - 6.0 * t * t + 4.0 * t * t * t;
        let d2 = 2.0 - 12.0 * t + 12.0 * t * t;
        let d3 = -12.0 + 24.0 * t;
        let d4 = 24.0;
        (v, d1, d2, d3, d4)
    }

    pub fn velocity(x: [f64; 2]) -> [f64; 2] {
        let (xv, xd1, _, _, _) = bump(x[0]);
        let (yv, yd1, _, _, _) = bump(x[1]);
        [xv * yd1, -xd1 * yv]
    }

    pub fn pressure(x: [f64; 2]) -> f64 {
        x[0] * x[0] * x[0] - 0.25
    }

    /// Body force for the constant-viscosity momentum equation
    /// `-Div(mu E(u)) + grad(phi) = f` with `mu = 1`.
    pub fn body_force(x: [f64; 2]) -> [f64; 2] {
        let (xv, xd1, xd2, xd3, _) = bump(x[0]);
        let (yv, yd1, yd2, yd3, _) = bump(x[1]);
        // Delta u = (d/dy Delta psi, -d/dx Delta psi) with
        // Delta psi = X'' Y + X Y''.
        let lap_u1 = xd2 * yd1 + xv * yd3;
        let lap_u2 = -(xd3 * yv + xd1 * yd2);
        [-0.5 * lap_u1 + 3.0 * x[0] * x[0], -0.5 * lap_u2]
    }
}

/// Runs the Stokes manufactured-solution study over the given resolutions.
pub fn stokes_mms_convergence(levels: &[usize]) -> Result<MmsResult> {
    stokes_mms_impl(levels, 1.0)
}

/// Self-falsification: the body force is scaled, so the discrete solutions
/// converge to the wrong field and the observed order collapses.
pub fn stokes_mms_convergence_mutated(levels: &[usize]) -> Result<MmsResult> {
    stokes_mms_impl(levels, 2.0)
}

fn stokes_mms_impl(levels: &[usize], force_factor: f64) -> Result<MmsResult> {
    if levels.len() < 2 {
        return Err(Error::invalid("need at least two refinement levels"));
    }
    let params = ModelParams::herschel_bulkley(2.0, 1.0, 0.0, 1.0)?;
    let mut velocity_errors = Vec::new();
    let mut pressure_errors = Vec::new();
    for &nx in levels {
        let mesh = build_crossed_rect(nx, nx, Rect::UNIT)?;
        let layout = build_dof_layout(&mesh)?;
        let data = ProblemData::new(
            move |x| {
                let f = mms::body_force(x);
                [force_factor * f[0], force_factor * f[1]]
            },
            mms::velocity,
        );
        let (matrix, rhs) = assemble_stokes_system(&mesh, &layout, &params, &data)?;
        let sol = direct_solve(&matrix, &rhs)?;

        let rule = quadrature(6)?;
        let mut verr = 0.0;
        let mut perr = 0.0;
        for cell in 0..layout.n_cells {
            let geo = crate::mesh::cell_geometry(&mesh, cell)?;
            let (uh0, uh1) = (sol[layout.u_dof(cell, 0)], sol[layout.u_dof(cell, 1)]);
            let ph = sol[layout.phi_dof(cell)];
            for qi in 0..rule.len() {
                let x = geo.map(rule.ref_point(qi));
                let w = rule.weights[qi] * geo.det;
                let ue = mms::velocity(x);
                verr += w * ((uh0 - ue[0]).powi(2) + (uh1 - ue[1]).powi(2));
                perr += w * (ph - mms::pressure(x)).powi(2);
            }
        }
        velocity_errors.push(verr.sqrt());
        pressure_errors.push(perr.sqrt());
    }

    let rate = |errors: &[f64]| -> Vec<f64> {
        errors.windows(2).map(|w| (w[0] / w[1]).log2()).collect()
    };
    Ok(MmsResult {
        resolutions: levels.to_vec(),
        velocity_rates: rate(&velocity_errors),
        pressure_rates: rate(&pressure_errors),
        velocity_errors,
        pressure_errors,
    })
}

/// One TAP-style check line.
#[derive(Debug)]
pub struct TapLine {
    pub name: String,
    pub pass: bool,
    pub detail: String,
}

/// Runs every verification suite (including the mutation self-checks) and
/// returns TAP lines.
pub fn run_all(seed: u64) -> Vec<TapLine> {
    let mut lines = Vec::new();
    let mut push = |name: &str, pass: bool, detail: String| {
        lines.push(TapLine { name: name.to_string(), pass, detail });
    };

    let gammas = [1.0, 1e3, 1e6];
    let huber = huber_property_suite(20_000, &gammas);
    push(
        "huber_lipschitz_inequality",
        huber.pass,
        format!("{} samples, {} violations, cases {:?}", huber.samples, huber.violations, huber.case_counts),
    );
    let huber_mut = huber_property_suite_mutated(20_000, &gammas);
    push(
        "huber_suite_detects_seeded_bug",
        huber_mut.violations > 0,
        format!("{} violations under halved bound", huber_mut.violations),
    );

    let mut mono_ok = true;
    let mut mono_detail = String::new();
    for p in [1.6, 1.75, 2.0, 4.0] {
        let params = ModelParams::herschel_bulkley(p, 1.0, 10.0, 1e3).expect("valid params");
        match monotonicity_suite(8, &params, 250, seed) {
            Ok(min) => {
                if min < -1e-12 {
                    mono_ok = false;
                }
                mono_detail.push_str(&format!("p={p}: min {min:.3e}; "));
            }
            Err(e) => {
                mono_ok = false;
                mono_detail.push_str(&format!("p={p}: {e}; "));
            }
        }
    }
    push("operator_monotonicity", mono_ok, mono_detail);
    let params = ModelParams::herschel_bulkley(2.0, 1.0, 10.0, 1e3).expect("valid params");
    let mono_mut = monotonicity_suite_mutated(8, &params, 100, seed);
    push(
        "monotonicity_suite_detects_seeded_bug",
        matches!(mono_mut, Ok(min) if min < -1e-12),
        format!("{mono_mut:?}"),
    );

    let mut fd_ok = true;
    let mut fd_detail = String::new();
    for p in [1.75, 2.0, 4.0] {
        let params = ModelParams::herschel_bulkley(p, 1.0, 5.0, 10.0).expect("valid params");
        match fd_jacobian_check(4, &params, seed) {
            Ok(r) => {
                if r.max_rel_error > 1e-5 {
                    fd_ok = false;
                }
                fd_detail.push_str(&format!("p={p}: {:.3e}; ", r.max_rel_error));
            }
            Err(e) => {
                fd_ok = false;
                fd_detail.push_str(&format!("p={p}: {e}; "));
            }
        }
    }
    push("slant_jacobian_finite_difference", fd_ok, fd_detail);
    let params = ModelParams::herschel_bulkley(1.75, 1.0, 5.0, 10.0).expect("valid params");
    let fd_mut = fd_jacobian_check_mutated(4, &params, seed);
    push(
        "fd_jacobian_detects_seeded_bug",
        matches!(&fd_mut, Ok(r) if r.max_rel_error > 1e-3),
        format!("{:?}", fd_mut.map(|r| r.max_rel_error)),
    );

    match stokes_mms_convergence(&[8, 16, 32]) {
        Ok(mms) => {
            let rate = mms.velocity_rate();
            push(
                "stokes_manufactured_convergence",
                rate >= 0.9 && rate <= 1.5 && mms.errors_decrease_monotonically(),
                format!(
                    "velocity rate {rate:.3}, errors {:?}",
                    mms.velocity_errors.iter().map(|e| format!("{e:.3e}")).collect::<Vec<_>>()
                ),
            );
        }
        Err(e) => push("stokes_manufactured_convergence", false, e.to_string()),
    }
    match stokes_mms_convergence_mutated(&[8, 16]) {
        Ok(mms) => push(
            "mms_detects_seeded_bug",
            mms.velocity_rate() < 0.9,
            format!("mutated velocity rate {:.3}", mms.velocity_rate()),
        ),
        Err(e) => push("mms_detects_seeded_bug", false, e.to_string()),
    }

    lines
}
