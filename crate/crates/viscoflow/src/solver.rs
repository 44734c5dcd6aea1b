//! The semismooth Newton driver.
//!
//! Full Newton steps, no damping: the projection of the multiplier inside
//! the matrix already acts as a globalization. The iteration stops once the
//! l2 norm of the concatenated residual vector drops below `tol` relative to
//! the initial residual.

use crate::assembly::{
    assemble_jacobian, assemble_residual, assemble_stokes_system, interpolate_multiplier,
    state_from_stokes, ProblemData, State,
};
use crate::error::{Error, Result};
use crate::fem::{build_dof_layout, DofLayout};
use crate::linalg::direct_solve;
use crate::mesh::Mesh;
use crate::rheology::ModelParams;
use serde::{Deserialize, Serialize};

/// Initial guess selection.
#[derive(Debug, Clone, Default)]
pub enum InitStrategy {
    /// Solve the dual-mixed Stokes system with constant viscosity `mu` and
    /// interpolate the multiplier from its closed form.
    #[default]
    Stokes,
    /// All-zero state.
    Zero,
    /// Caller-provided state.
    Given(State),
}

/// Newton driver configuration.
#[derive(Debug, Clone)]
pub struct SsnConfig {
    /// Relative stopping tolerance on the residual norm.
    pub tol: f64,
    pub max_iters: usize,
    /// Project the multiplier onto the yield ball in the matrix (on by
    /// default).
    pub use_projection: bool,
    pub init: InitStrategy,
}

impl Default for SsnConfig {
    fn default() -> Self {
        SsnConfig { tol: 1e-5, max_iters: 50, use_projection: true, init: InitStrategy::Stokes }
    }
}

impl SsnConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tol > 0.0 && self.tol < 1.0) {
            return Err(Error::invalid(format!("tolerance {} must lie in (0, 1)", self.tol)));
        }
        if self.max_iters == 0 {
            return Err(Error::invalid("max_iters must be at least 1"));
        }
        Ok(())
    }
}

/// Residual history and active-set statistics of one solve.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveReport {
    /// Number of Newton steps taken.
    pub iterations: usize,
    /// Residual norms, starting with the initial residual
    /// (`iterations + 1` entries).
    pub residuals: Vec<f64>,
    /// Residuals normalized by the initial one; first entry 1.
    pub relative_residuals: Vec<f64>,
    pub converged: bool,
    pub active_cells: usize,
    pub active_fraction: f64,
}

/// Floor on the initial residual below which the state counts as already
/// converged: relative tolerances are meaningless once the residual sits at
/// the assembly roundoff level. The floor scales with the data vector (the
/// residual of the zero state), with 1 as a lower bound so zero-data
/// problems short-circuit too.
pub const RESIDUAL_FLOOR: f64 = 1e-14;

fn norm2(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Builds the initial state per the configured strategy.
pub fn initialize(
    mesh: &Mesh,
    layout: &DofLayout,
    params: &ModelParams,
    data: &ProblemData,
    config: &SsnConfig,
) -> Result<State> {
    match &config.init {
        InitStrategy::Zero => Ok(State::zeros(layout)),
        InitStrategy::Given(state) => {
            state.validate(layout)?;
            Ok(state.clone())
        }
        InitStrategy::Stokes => {
            let (matrix, rhs) = assemble_stokes_system(mesh, layout, params, data)?;
            let sol = direct_solve(&matrix, &rhs)?;
            let mut state = state_from_stokes(layout, &sol);
            interpolate_multiplier(layout, params, &mut state);
            Ok(state)
        }
    }
}

/// One Newton step at `state`: returns the full increment and the residual
/// norm at `state` (before the step).
pub fn ssn_step(
    mesh: &Mesh,
    layout: &DofLayout,
    params: &ModelParams,
    data: &ProblemData,
    config: &SsnConfig,
    state: &State,
) -> Result<(State, f64)> {
    let res = assemble_residual(mesh, layout, params, data, state)?;
    let rnorm = norm2(&res);
    let jac = assemble_jacobian(mesh, layout, params, data, state, config.use_projection)?;
    let rhs: Vec<f64> = res.iter().map(|v| -v).collect();
    let delta = direct_solve(&jac, &rhs)?;
    Ok((State::from_flat(layout, &delta), rnorm))
}

/// Active cells (yielded at the barycenter) and their fraction.
pub fn active_set_stats(state: &State, mesh: &Mesh, params: &ModelParams) -> (usize, f64) {
    let third = [1.0 / 3.0; 3];
    let n_cells = mesh.num_cells();
    let mut active = 0usize;
    for cell in 0..n_cells {
        let theta = state.theta_at(cell, third);
        if params.chi_active(crate::tensor::frob(&theta)) {
            active += 1;
        }
    }
    (active, active as f64 / n_cells as f64)
}

/// Runs the Newton iteration to convergence (or `max_iters`).
pub fn ssn_solve(
    mesh: &Mesh,
    params: &ModelParams,
    data: &ProblemData,
    config: &SsnConfig,
) -> Result<(State, SolveReport)> {
    ssn_solve_observed(mesh, params, data, config, |_, _| {})
}

/// [`ssn_solve`] with a per-iteration observer, called with the state at
/// which each Newton matrix is assembled.
pub fn ssn_solve_observed(
    mesh: &Mesh,
    params: &ModelParams,
    data: &ProblemData,
    config: &SsnConfig,
    mut observer: impl FnMut(usize, &State),
) -> Result<(State, SolveReport)> {
    config.validate()?;
    let layout = build_dof_layout(mesh)?;
    let mut state = initialize(mesh, &layout, params, data, config)?;

    let res = assemble_residual(mesh, &layout, params, data, &state)?;
    let r0 = norm2(&res);
    let data_norm = norm2(&assemble_residual(mesh, &layout, params, data, &State::zeros(&layout))?);
    let mut residuals = vec![r0];
    let mut res = res;
    let mut converged = r0 < RESIDUAL_FLOOR * data_norm.max(1.0);

    if !converged {
        for iteration in 0..config.max_iters {
            observer(iteration, &state);
            let jac = assemble_jacobian(mesh, &layout, params, data, &state, config.use_projection)
                .map_err(|e| Error::StepFailed { iteration, source: Box::new(e) })?;
            let rhs: Vec<f64> = res.iter().map(|v| -v).collect();
            let delta = direct_solve(&jac, &rhs)
                .map_err(|e| Error::StepFailed { iteration, source: Box::new(e) })?;
            state.axpy(1.0, &State::from_flat(&layout, &delta));

            res = assemble_residual(mesh, &layout, params, data, &state)?;
            let rn = norm2(&res);
            residuals.push(rn);
            if rn / r0 <= config.tol {
                converged = true;
                break;
            }
        }
    }

    let relative_residuals: Vec<f64> = if r0 > 0.0 {
        residuals.iter().map(|r| r / r0).collect()
    } else {
        vec![1.0]
    };
    let (active_cells, active_fraction) = active_set_stats(&state, mesh, params);
    let report = SolveReport {
        iterations: residuals.len() - 1,
        residuals,
        relative_residuals,
        converged,
        active_cells,
        active_fraction,
    };
    Ok((state, report))
}

/// Relative residual down to which the globalized driver keeps the
/// projection switched on before handing over to the plain unprojected
/// iteration.
pub const WARMUP_TOL: f64 = 1e-4;

/// Globalized driver for the unprojected iteration.
///
/// The plain Newton matrix without the multiplier projection is only a
/// sound model while `|q| <= tau_s`; started from scratch the full-step
/// iteration leaves that region and diverges. The projection is exactly the
/// globalization device, so this driver runs a projected warm-up phase down
/// to [`WARMUP_TOL`] (relative) and continues with the unprojected matrix
/// from there, which converges superlinearly on its own. The report covers
/// the whole run, normalized by the initial residual, and the overall
/// stopping test is `config.tol` relative to that same initial residual.
pub fn ssn_solve_globalized(
    mesh: &Mesh,
    params: &ModelParams,
    data: &ProblemData,
    config: &SsnConfig,
) -> Result<(State, SolveReport)> {
    config.validate()?;
    if config.use_projection {
        return ssn_solve(mesh, params, data, config);
    }

    let warm_config = SsnConfig {
        tol: WARMUP_TOL.max(config.tol).min(0.99),
        use_projection: true,
        init: config.init.clone(),
        max_iters: config.max_iters,
    };
    let (warm_state, warm_report) = ssn_solve(mesh, params, data, &warm_config)?;
    let r0 = warm_report.residuals[0];
    let warm_last = *warm_report.residuals.last().expect("nonempty history");
    if r0 == 0.0 || !warm_report.converged {
        // Degenerate data or a failed warm-up: nothing to hand over.
        return Ok((warm_state, warm_report));
    }
    if warm_last <= config.tol * r0 {
        // The warm-up already reached the caller's tolerance (loose target
        // or a superlinear overshoot).
        return Ok((warm_state, warm_report));
    }

    // Continue without the projection; the tolerance is rebased so the
    // combined run still stops at `tol` relative to the original residual.
    let main_tol = (config.tol * r0 / warm_last).clamp(1e-300, 0.99);
    let remaining = config.max_iters.saturating_sub(warm_report.iterations).max(1);
    let main_config = SsnConfig {
        tol: main_tol,
        max_iters: remaining,
        use_projection: false,
        init: InitStrategy::Given(warm_state),
    };
    let (state, main_report) = ssn_solve(mesh, params, data, &main_config)?;

    let mut residuals = warm_report.residuals.clone();
    residuals.extend_from_slice(&main_report.residuals[1..]);
    let relative_residuals: Vec<f64> = residuals.iter().map(|r| r / r0).collect();
    let converged = *relative_residuals.last().unwrap() <= config.tol;
    let report = SolveReport {
        iterations: residuals.len() - 1,
        converged,
        active_cells: main_report.active_cells,
        active_fraction: main_report.active_fraction,
        residuals,
        relative_residuals,
    };
    Ok((state, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::assembly::max_projected_multiplier_norm;
    use crate::mesh::{build_crossed_rect, Rect};
    use crate::tensor::frob;

    fn reservoir_data() -> ProblemData {
        ProblemData::new(
            |x| [300.0 * (x[1] - 0.5), 300.0 * (0.5 - x[0])],
            |_| [0.0, 0.0],
        )
    }

    #[test]
    fn zero_data_initializes_to_zero_in_both_modes() {
        let mesh = build_crossed_rect(2, 2, Rect::UNIT).unwrap();
        let layout = build_dof_layout(&mesh).unwrap();
        let params = ModelParams::herschel_bulkley(1.75, 1.0, 10.0, 1e3).unwrap();
        let data = ProblemData::new(|_| [0.0, 0.0], |_| [0.0, 0.0]);
        for init in [InitStrategy::Stokes, InitStrategy::Zero] {
            let config = SsnConfig { init, ..SsnConfig::default() };
            let state = initialize(&mesh, &layout, &params, &data, &config).unwrap();
            assert!(state.to_flat(&layout).iter().all(|&v| v.abs() < 1e-9));
        }
    }

    #[test]
    fn stokes_init_gives_swirl_and_bounded_multiplier() {
        let mesh = build_crossed_rect(8, 8, Rect::UNIT).unwrap();
        let layout = build_dof_layout(&mesh).unwrap();
        let params = ModelParams::herschel_bulkley(1.75, 1.0, 10.0, 1e3).unwrap();
        let config = SsnConfig::default();
        let state = initialize(&mesh, &layout, &params, &reservoir_data(), &config).unwrap();
        let unorm: f64 = state.u.iter().map(|v| v * v).sum::<f64>().sqrt();
        assert!(unorm > 1e-6, "velocity should be nonzero, got |u| = {unorm}");
        // |q| <= tau_s at every interpolation node by the closed form.
        for cell in 0..layout.n_cells {
            for node in 0..3 {
                let base = 12 * cell + 4 * node;
                let q = [
                    [state.q[base], state.q[base + 1]],
                    [state.q[base + 2], state.q[base + 3]],
                ];
                assert!(frob(&q) <= params.tau_s + 1e-12);
            }
        }
    }

    #[test]
    fn pure_stokes_converges_in_one_iteration() {
        let mesh = build_crossed_rect(4, 4, Rect::UNIT).unwrap();
        let params = ModelParams::herschel_bulkley(2.0, 1.0, 0.0, 1e3).unwrap();
        let config = SsnConfig { tol: 1e-10, ..SsnConfig::default() };
        let (_, report) = ssn_solve(&mesh, &params, &reservoir_data(), &config).unwrap();
        assert!(report.converged);
        assert!(report.iterations <= 1, "took {} iterations", report.iterations);
    }

    #[test]
    fn newton_fixed_point_has_tiny_increment() {
        let mesh = build_crossed_rect(4, 4, Rect::UNIT).unwrap();
        let layout = build_dof_layout(&mesh).unwrap();
        let params = ModelParams::herschel_bulkley(1.75, 1.0, 5.0, 1e3).unwrap();
        let data = reservoir_data();
        let config = SsnConfig { tol: 1e-12, max_iters: 60, ..SsnConfig::default() };
        let (state, report) = ssn_solve(&mesh, &params, &data, &config).unwrap();
        assert!(report.converged);
        let (delta, rnorm) = ssn_step(&mesh, &layout, &params, &data, &config, &state).unwrap();
        let dnorm = norm2(&delta.to_flat(&layout));
        let scale = norm2(&state.to_flat(&layout));
        assert!(rnorm <= 1e-12 * report.residuals[0].max(1.0));
        assert!(dnorm <= 1e-8 * scale.max(1.0), "increment {dnorm}, state scale {scale}");
    }

    #[test]
    fn early_steps_from_stokes_init_make_progress() {
        // The first full step trades a large strain correction for a
        // transient bump in the gamma-weighted multiplier rows, so the
        // total residual norm is not monotone at step one; it is back below
        // the initial residual by step two and the strain-row block
        // decreases immediately.
        let mesh = build_crossed_rect(16, 16, Rect::UNIT).unwrap();
        let layout = build_dof_layout(&mesh).unwrap();
        let params = ModelParams::herschel_bulkley(1.75, 1.0, 10.0, 1e3).unwrap();
        let data = reservoir_data();
        let config = SsnConfig { tol: 1e-10, ..SsnConfig::default() };
        let init = initialize(&mesh, &layout, &params, &data, &config).unwrap();

        let res0 = assemble_residual(&mesh, &layout, &params, &data, &init).unwrap();
        let (delta, r0) = ssn_step(&mesh, &layout, &params, &data, &config, &init).unwrap();
        assert!((norm2(&res0) - r0).abs() <= 1e-12 * r0);

        let mut next = init.clone();
        next.axpy(1.0, &delta);
        let res1 = assemble_residual(&mesh, &layout, &params, &data, &next).unwrap();
        let strain = |v: &[f64]| norm2(&v[layout.off_theta..layout.off_theta + layout.n_theta()]);
        assert!(strain(&res1) < strain(&res0), "strain rows should improve in one step");

        let (delta2, r1) = ssn_step(&mesh, &layout, &params, &data, &config, &next).unwrap();
        next.axpy(1.0, &delta2);
        let res2 = assemble_residual(&mesh, &layout, &params, &data, &next).unwrap();
        let _ = r1;
        assert!(norm2(&res2) < r0, "two steps should be below the initial residual");
    }

    #[test]
    fn globalized_unprojected_solve_matches_projected() {
        let mesh = build_crossed_rect(8, 8, Rect::UNIT).unwrap();
        let layout = build_dof_layout(&mesh).unwrap();
        let data = ProblemData::new(
            |_| [0.0, 0.0],
            |x| if x[1] > 1.0 - 1e-12 { [1.0, 0.0] } else { [0.0, 0.0] },
        );
        let params = ModelParams::herschel_bulkley(1.75, 1.0, 2.5, 1e3).unwrap();
        let on = SsnConfig { tol: 1e-9, max_iters: 40, ..SsnConfig::default() };
        let off = SsnConfig { use_projection: false, ..on.clone() };
        let (state_on, report_on) = ssn_solve(&mesh, &params, &data, &on).unwrap();
        let (state_off, report_off) = ssn_solve_globalized(&mesh, &params, &data, &off).unwrap();
        assert!(report_on.converged);
        assert!(report_off.converged, "globalized unprojected run should converge");
        let a = state_on.to_flat(&layout);
        let b = state_off.to_flat(&layout);
        let diff: f64 = a.iter().zip(&b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt();
        let scale: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
        assert!(diff <= 1e-6 * scale, "states differ by {:.3e} relative", diff / scale);
        // A projected run through the globalized entry point is just the
        // plain solve.
        let (_, via) = ssn_solve_globalized(&mesh, &params, &data, &on).unwrap();
        assert_eq!(via, report_on);
    }

    #[test]
    fn projection_is_identity_below_yield() {
        let mesh = build_crossed_rect(3, 3, Rect::UNIT).unwrap();
        let layout = build_dof_layout(&mesh).unwrap();
        let params = ModelParams::herschel_bulkley(1.75, 1.0, 10.0, 1e3).unwrap();
        let data = reservoir_data();
        let config_on = SsnConfig { tol: 1e-10, ..SsnConfig::default() };
        let config_off = SsnConfig { use_projection: false, ..config_on.clone() };
        let state = initialize(&mesh, &layout, &params, &data, &config_on).unwrap();
        // Initialization bounds |q| by tau_s, so both matrices agree.
        assert!(
            max_projected_multiplier_norm(&layout, &params, &state).unwrap()
                <= params.tau_s + 1e-12
        );
        let (d_on, _) = ssn_step(&mesh, &layout, &params, &data, &config_on, &state).unwrap();
        let (d_off, _) = ssn_step(&mesh, &layout, &params, &data, &config_off, &state).unwrap();
        let flat_on = d_on.to_flat(&layout);
        let flat_off = d_off.to_flat(&layout);
        let scale = norm2(&flat_on).max(1.0);
        for (a, b) in flat_on.iter().zip(&flat_off) {
            assert!((a - b).abs() <= 1e-14 * scale);
        }
    }

    #[test]
    fn zero_state_has_no_active_cells_and_reports_are_deterministic() {
        let mesh = build_crossed_rect(6, 6, Rect::UNIT).unwrap();
        let layout = build_dof_layout(&mesh).unwrap();
        let params = ModelParams::herschel_bulkley(1.75, 1.0, 10.0, 1e3).unwrap();
        let zero = State::zeros(&layout);
        let (active, fraction) = active_set_stats(&zero, &mesh, &params);
        assert_eq!(active, 0);
        assert_eq!(fraction, 0.0);

        let config = SsnConfig { tol: 1e-8, ..SsnConfig::default() };
        let (_, r1) = ssn_solve(&mesh, &params, &reservoir_data(), &config).unwrap();
        let (_, r2) = ssn_solve(&mesh, &params, &reservoir_data(), &config).unwrap();
        assert_eq!(r1, r2);
        assert_eq!(r1.relative_residuals[0], 1.0);
        assert_eq!(r1.residuals.len(), r1.iterations + 1);
    }

    #[test]
    fn tiny_tau_activates_everything() {
        let mesh = build_crossed_rect(6, 6, Rect::UNIT).unwrap();
        let params = ModelParams::herschel_bulkley(1.75, 1.0, 1e-9, 1e3).unwrap();
        let config = SsnConfig { tol: 1e-8, ..SsnConfig::default() };
        let (state, report) = ssn_solve(&mesh, &params, &reservoir_data(), &config).unwrap();
        assert!(report.converged);
        let (active, fraction) = active_set_stats(&state, &mesh, &params);
        assert_eq!(active, mesh.num_cells());
        assert_eq!(fraction, 1.0);
    }

    #[test]
    fn nonconvergence_returns_report_not_error() {
        let mesh = build_crossed_rect(4, 4, Rect::UNIT).unwrap();
        let params = ModelParams::herschel_bulkley(1.75, 1.0, 10.0, 1e3).unwrap();
        let config = SsnConfig { tol: 1e-13, max_iters: 1, ..SsnConfig::default() };
        let (_, report) = ssn_solve(&mesh, &params, &reservoir_data(), &config).unwrap();
        assert!(!report.converged);
        assert_eq!(report.iterations, 1);
    }

    #[test]
    fn rejects_bad_config() {
        assert!(SsnConfig { tol: 0.0, ..SsnConfig::default() }.validate().is_err());
        assert!(SsnConfig { tol: 1.5, ..SsnConfig::default() }.validate().is_err());
        assert!(SsnConfig { max_iters: 0, ..SsnConfig::default() }.validate().is_err());
    }
}
