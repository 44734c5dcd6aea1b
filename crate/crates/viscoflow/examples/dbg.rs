// temporary debug: acceptance-scale survey
use std::collections::HashMap;
use std::time::Instant;
use viscoflow::fem::build_dof_layout;
use viscoflow::solver::*;
use viscoflow::verify::stokes_mms_convergence;
use viscoflow::ModelParams;
use viscoflow::cases::reservoir;

fn main() {
    let t = Instant::now();
    let mms = stokes_mms_convergence(&[8, 16, 32]).unwrap();
    println!("mms [{:?}]: vel errors {:?}", t.elapsed(), mms.velocity_errors);
    println!("  vel rates {:?} press rates {:?}", mms.velocity_rates, mms.pressure_rates);

    let (mesh, data) = reservoir(32).unwrap();
    let layout = build_dof_layout(&mesh).unwrap();
    for tau_s in [1.0, 5.0, 10.0, 15.0] {
        let params = ModelParams::herschel_bulkley(1.75, 1.0, tau_s, 1e3).unwrap();
        let config = SsnConfig { tol: 1e-10, max_iters: 50, ..SsnConfig::default() };
        let t = Instant::now();
        let (state, report) = ssn_solve(&mesh, &params, &data, &config).unwrap();
        let tail: Vec<String> = report.relative_residuals.iter().rev().take(4).rev().map(|r| format!("{r:.1e}")).collect();
        println!(
            "tau_s={tau_s}: conv={} iters={} active={}/{} frac={:.4} [{:?}] tail={tail:?}",
            report.converged, report.iterations, report.active_cells, mesh.num_cells(), report.active_fraction, t.elapsed()
        );
        if (tau_s - 10.0).abs() < 1e-12 {
            // symmetry check: u(T x) = R u(x), T(x,y) = (y, 1-x), R = [[0,1],[-1,0]]
            let mut index: HashMap<(i64, i64), usize> = HashMap::new();
            let key = |p: [f64; 2]| ((p[0] * 1e9).round() as i64, (p[1] * 1e9).round() as i64);
            for c in 0..mesh.num_cells() {
                index.insert(key(mesh.barycenter(c)), c);
            }
            let mut max_diff = 0.0f64;
            let mut max_u = 0.0f64;
            for c in 0..mesh.num_cells() {
                let b = mesh.barycenter(c);
                let tb = [b[1], 1.0 - b[0]];
                let j = *index.get(&key(tb)).expect("rotated cell exists");
                let u = [state.u[2 * c], state.u[2 * c + 1]];
                let ru = [u[1], -u[0]];
                let uj = [state.u[2 * j], state.u[2 * j + 1]];
                max_diff = max_diff.max((uj[0] - ru[0]).abs().max((uj[1] - ru[1]).abs()));
                max_u = max_u.max(u[0].abs().max(u[1].abs()));
            }
            println!("  symmetry: max diff {max_diff:.3e}, max |u| {max_u:.3e}, ratio {:.3e}", max_diff / max_u);
        }
    }
}
