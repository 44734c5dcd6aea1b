//! Command-line driver: benchmark presets, config files, solver outputs,
//! and the verification suites.

mod config;
mod report;

use clap::{Parser, Subcommand};
use config::{apply_config_file, Case, Init, Model, RunConfig};
use report::RunStats;
use std::path::PathBuf;
use std::process::ExitCode;
use viscoflow::assembly::{boundary_flux, BcKind, ProblemData};
use viscoflow::cases;
use viscoflow::fem::build_dof_layout;
use viscoflow::mesh::{build_crossed_rect, Mesh, Rect};
use viscoflow::solver::{ssn_solve, ssn_solve_globalized, InitStrategy, SsnConfig};
use viscoflow::{vtk, Error, Result};

#[derive(Parser)]
#[command(
    name = "viscoflow",
    about = "Dual-mixed FEM solver for 2D viscoplastic flows with yield",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve a benchmark or custom problem and write the outputs.
    Run(RunArgs),
    /// Run the verification suites (TAP output, nonzero exit on failure).
    Verify(VerifyArgs),
}

#[derive(clap::Args)]
struct RunArgs {
    /// Flat key=value config file; command-line flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Benchmark case.
    #[arg(long, value_enum)]
    case: Option<Case>,
    /// Mesh resolution: grid squares per side (reservoir/cavity) or cells
    /// per unit length (channel).
    #[arg(long)]
    nx: Option<usize>,
    /// Constitutive law.
    #[arg(long, value_enum)]
    model: Option<Model>,
    /// Flow index (ignored for the Casson law).
    #[arg(long)]
    p: Option<f64>,
    #[arg(long)]
    mu: Option<f64>,
    #[arg(long = "tau-s")]
    tau_s: Option<f64>,
    #[arg(long)]
    gamma: Option<f64>,
    /// Relative residual tolerance.
    #[arg(long)]
    tol: Option<f64>,
    #[arg(long = "max-iters")]
    max_iters: Option<usize>,
    /// Assemble the Newton matrix without the multiplier projection. Such
    /// runs are globalized by a short projected warm-up phase, because the
    /// plain unprojected iteration is only locally convergent.
    #[arg(long = "no-projection")]
    no_projection: bool,
    /// Initialization strategy.
    #[arg(long, value_enum)]
    init: Option<Init>,
    /// Output directory (created if missing); no files are written without it.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long = "no-vtk")]
    no_vtk: bool,
    #[arg(long = "no-csv")]
    no_csv: bool,
    #[arg(long = "no-json")]
    no_json: bool,
    #[arg(long = "no-svg")]
    no_svg: bool,
}

#[derive(clap::Args)]
struct VerifyArgs {
    /// Seed for the randomized suites.
    #[arg(long, default_value_t = 7)]
    seed: u64,
}

fn resolve_config(args: &RunArgs) -> Result<RunConfig> {
    let mut config = RunConfig::default();
    if let Some(path) = &args.config {
        apply_config_file(&mut config, path)?;
    }
    if let Some(case) = args.case {
        config.case = case;
    }
    if let Some(nx) = args.nx {
        config.nx = nx;
    }
    if let Some(model) = args.model {
        config.model = model;
    }
    if let Some(p) = args.p {
        config.p = p;
    }
    if let Some(mu) = args.mu {
        config.mu = mu;
    }
    if let Some(tau_s) = args.tau_s {
        config.tau_s = tau_s;
    }
    if let Some(gamma) = args.gamma {
        config.gamma = gamma;
    }
    if let Some(tol) = args.tol {
        config.tol = tol;
    }
    if let Some(max_iters) = args.max_iters {
        config.max_iters = max_iters;
    }
    if args.no_projection {
        config.use_projection = false;
    }
    if let Some(init) = args.init {
        config.init = init;
    }
    if let Some(out) = &args.out {
        config.out = Some(out.clone());
    }
    if args.no_vtk {
        config.vtk = false;
    }
    if args.no_csv {
        config.residual_csv = false;
    }
    if args.no_json {
        config.stats_json = false;
    }
    if args.no_svg {
        config.residual_svg = false;
    }
    Ok(config)
}

fn build_case(config: &RunConfig) -> Result<(Mesh, ProblemData)> {
    match config.case {
        Case::Reservoir => cases::reservoir(config.nx),
        Case::Cavity => cases::cavity(config.nx),
        Case::Channel => cases::channel(config.nx),
        Case::Custom => {
            let custom = config.custom.clone().ok_or_else(|| {
                Error::InvalidArgument(
                    "--case custom needs a config file with custom_* keys \
                     (custom_x0/y0/x1/y1, custom_nx/ny, custom_fx/fy)"
                        .into(),
                )
            })?;
            if custom.nx == 0 || custom.ny == 0 {
                return Err(Error::InvalidArgument(
                    "custom case: custom_nx and custom_ny must be at least 1".into(),
                ));
            }
            let mesh = build_crossed_rect(
                custom.nx,
                custom.ny,
                Rect { x0: custom.x0, y0: custom.y0, x1: custom.x1, y1: custom.y1 },
            )?;
            let (fx, fy) = (custom.fx, custom.fy);
            Ok((mesh, ProblemData::new(move |_| [fx, fy], |_| [0.0, 0.0])))
        }
    }
}

fn case_name(case: Case) -> &'static str {
    match case {
        Case::Reservoir => "reservoir",
        Case::Cavity => "cavity",
        Case::Channel => "channel",
        Case::Custom => "custom",
    }
}

fn run(args: &RunArgs) -> Result<bool> {
    let config = resolve_config(args)?;
    let params = config.model_params()?;
    let (mesh, data) = build_case(&config)?;
    mesh.validate()?;

    // All-Dirichlet problems must carry compatible boundary data.
    let all_dirichlet = mesh
        .boundary_tags
        .iter()
        .filter(|t| t.is_boundary())
        .all(|&t| (data.bc_kind)(t) == BcKind::DirichletFlux);
    if all_dirichlet {
        let flux = boundary_flux(&mesh, &data)?;
        if flux.abs() > 1e-10 {
            return Err(Error::InvalidArgument(format!(
                "Dirichlet data is incompatible: net boundary flux {flux:.3e}"
            )));
        }
    }

    let ssn = SsnConfig {
        tol: config.tol,
        max_iters: config.max_iters,
        use_projection: config.use_projection,
        init: match config.init {
            Init::Stokes => InitStrategy::Stokes,
            Init::Zero => InitStrategy::Zero,
        },
    };
    eprintln!(
        "case {} nx {} ({} cells), {:?}, tau_s {}, gamma {:.0e}, tol {:.0e}",
        case_name(config.case),
        config.nx,
        mesh.num_cells(),
        params.law,
        params.tau_s,
        params.gamma,
        config.tol,
    );
    let (state, solve_report) = if config.use_projection {
        ssn_solve(&mesh, &params, &data, &ssn)?
    } else {
        ssn_solve_globalized(&mesh, &params, &data, &ssn)?
    };

    for (i, rel) in solve_report.relative_residuals.iter().enumerate() {
        println!("iteration {i}: relative residual {rel:e}");
    }
    println!(
        "{} after {} iterations; active cells {}/{} ({:.1}%)",
        if solve_report.converged { "converged" } else { "NOT converged" },
        solve_report.iterations,
        solve_report.active_cells,
        mesh.num_cells(),
        100.0 * solve_report.active_fraction
    );

    if let Some(out) = &config.out {
        std::fs::create_dir_all(out)?;
        let layout = build_dof_layout(&mesh)?;
        if config.vtk {
            vtk::write_solution(&mesh, &layout, &params, &state, &out.join("solution.vtk"))?;
        }
        if config.residual_csv {
            report::write_csv(&solve_report, &out.join("residual.csv"))?;
        }
        if config.stats_json {
            let stats = RunStats {
                case: case_name(config.case).to_string(),
                nx: config.nx,
                model: params,
                tol: config.tol,
                max_iters: config.max_iters,
                use_projection: config.use_projection,
                init: match config.init {
                    Init::Stokes => "stokes".to_string(),
                    Init::Zero => "zero".to_string(),
                },
                report: solve_report.clone(),
            };
            report::write_stats(&stats, &out.join("stats.json"))?;
        }
        if config.residual_svg {
            report::write_svg(&solve_report, &out.join("residual.svg"))?;
        }
        eprintln!("outputs written to {}", out.display());
    }
    Ok(solve_report.converged)
}

fn verify(args: &VerifyArgs) -> bool {
    let lines = viscoflow::verify::run_all(args.seed);
    println!("1..{}", lines.len());
    let mut all_ok = true;
    for (i, line) in lines.iter().enumerate() {
        let status = if line.pass { "ok" } else { "not ok" };
        all_ok &= line.pass;
        println!("{status} {} - {} # {}", i + 1, line.name, line.detail);
    }
    all_ok
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match &cli.command {
        Command::Run(args) => match run(args) {
            Ok(true) => ExitCode::SUCCESS,
            Ok(false) => {
                eprintln!("error: solver did not converge");
                ExitCode::from(2)
            }
            Err(e) => {
                eprintln!("error: {e}");
                ExitCode::from(1)
            }
        },
        Command::Verify(args) => {
            if verify(args) {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(1)
            }
        }
    }
}
