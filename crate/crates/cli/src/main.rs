//! `sdot`: semi-discrete optimal transport on triangle soups.

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use serde_json::json;

use sdot_core::apps::{quantize, register, remesh};
use sdot_core::io::{self, InputDigest, RunReport};
use sdot_core::solver::{damped_newton, verify_solution, SolverConfig};
use sdot_core::transport::transport_cost;
use sdot_core::{Error, SimplexSoup};

#[derive(Parser, Debug)]
#[command(name = "sdot", version, about = "Semi-discrete optimal transport from triangle soups to point sets")]
struct Cli {
    /// Seed for every random choice (sampling, jitter).
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,

    /// Worker threads for diagram evaluation (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct MeshArgs {
    /// Triangle soup (OFF or OBJ).
    #[arg(long)]
    mesh: PathBuf,

    /// Per-vertex density, one value per line.
    #[arg(long)]
    density: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct SolverArgs {
    #[arg(long, default_value_t = 1e-6)]
    eta: f64,

    #[arg(long = "max-iter", default_value_t = 100)]
    max_iter: usize,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Solve for the weights matching the point masses.
    Solve {
        #[command(flatten)]
        mesh: MeshArgs,
        /// Target points (XYZ with optional mass column, or PLY).
        #[arg(long)]
        points: PathBuf,
        #[command(flatten)]
        solver: SolverArgs,
        /// JSON run report.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Final cells as OBJ, one group per site.
        #[arg(long = "export-cells")]
        export_cells: Option<PathBuf>,
    },
    /// Optimal quantization by Lloyd iterations.
    Quantize {
        #[command(flatten)]
        mesh: MeshArgs,
        #[arg(long)]
        n: usize,
        #[arg(long, default_value_t = 10)]
        iters: usize,
        #[command(flatten)]
        solver: SolverArgs,
        /// Final points (XYZ).
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Dual mesh of the transport diagram onto the mesh vertices.
    Remesh {
        #[command(flatten)]
        mesh: MeshArgs,
        #[command(flatten)]
        solver: SolverArgs,
        /// Dual mesh (OBJ).
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Rigid registration of a point cloud onto the mesh (OT-ICP).
    Register {
        #[command(flatten)]
        mesh: MeshArgs,
        #[arg(long)]
        points: PathBuf,
        #[arg(long = "max-outer", default_value_t = 10)]
        max_outer: usize,
        #[command(flatten)]
        solver: SolverArgs,
        /// Transform and history (JSON).
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        report: Option<PathBuf>,
    },
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Solve { .. } => "solve",
            Command::Quantize { .. } => "quantize",
            Command::Remesh { .. } => "remesh",
            Command::Register { .. } => "register",
        }
    }

    fn solver(&self) -> &SolverArgs {
        match self {
            Command::Solve { solver, .. }
            | Command::Quantize { solver, .. }
            | Command::Remesh { solver, .. }
            | Command::Register { solver, .. } => solver,
        }
    }

    fn report_path(&self) -> Option<&Path> {
        match self {
            Command::Solve { out, .. } => out.as_deref(),
            Command::Quantize { report, .. } | Command::Remesh { report, .. } | Command::Register { report, .. } => {
                report.as_deref()
            }
        }
    }
}

fn load_soup(args: &MeshArgs, report: &mut RunReport) -> sdot_core::Result<SimplexSoup> {
    let loaded = io::load_mesh(&args.mesh, args.density.as_deref())?;
    for w in loaded.warnings {
        report.warn(w);
    }
    let soup = loaded.soup.normalize()?;
    let conn = soup.check_strong_connectedness();
    if !conn.connected {
        let w = format!(
            "support is not strongly connected ({} edge-connected components); the Newton system may be singular",
            conn.components.len()
        );
        log::warn!("{w}");
        report.warn(w);
    }
    Ok(soup)
}

fn run(cli: &Cli, config: &SolverConfig, report: &mut RunReport) -> sdot_core::Result<()> {
    match &cli.command {
        Command::Solve {
            mesh,
            points,
            out: _,
            export_cells,
            ..
        } => {
            let soup = load_soup(mesh, report)?;
            let sites = io::load_points(points)?;
            report.inputs = Some(InputDigest::new(&soup, Some(&sites)));
            let outcome = damped_newton(&soup, &sites, config).inspect_err(|e| attach_report(e, report))?;
            let summary = transport_cost(&outcome.diagram, &outcome.sites);
            let cert = verify_solution(&soup, &outcome.sites, &outcome.weights, config.eta, outcome.report.epsilon0)?;
            if let Some(path) = export_cells {
                io::export_cells(&outcome.diagram, path)?;
                report.outputs.push(path.clone());
            }
            report.result = json!({
                "weights": outcome.weights,
                "masses": outcome.diagram.masses,
                "target_masses": outcome.sites.masses_scaled_to(soup.total_mass()),
                "residual": outcome.report.residuals.last(),
                "iterations": outcome.report.iterations,
                "transport_cost": summary.total_cost,
                "certificate": cert,
            });
            report.solves.push(outcome.report);
        }
        Command::Quantize { mesh, n, iters, out, .. } => {
            let soup = load_soup(mesh, report)?;
            report.inputs = Some(InputDigest::new(&soup, None));
            let q = quantize(&soup, *n, *iters, config)?;
            if let Some(path) = out {
                io::write_points(path, &q.sites)?;
                report.outputs.push(path.clone());
            }
            report.result = json!({
                "history": q.history,
                "final_cost": q.final_cost,
                "points": q.sites.positions(),
            });
            report.solves.extend(q.reports);
        }
        Command::Remesh { mesh, out, .. } => {
            let soup = load_soup(mesh, report)?;
            report.inputs = Some(InputDigest::new(&soup, None));
            let r = remesh(&soup, config)?;
            if let Some(path) = out {
                io::write_dual_mesh(path, &r.mesh)?;
                report.outputs.push(path.clone());
            }
            report.result = json!({
                "vertices": r.mesh.vertices.len(),
                "faces": r.mesh.faces.len(),
                "euler_characteristic": r.mesh.euler_characteristic(),
                "unsupported_faces": r.mesh.unsupported_faces(&r.diagram).len(),
            });
            report.solves.push(r.report);
        }
        Command::Register {
            mesh,
            points,
            max_outer,
            out,
            ..
        } => {
            let soup = load_soup(mesh, report)?;
            let cloud = io::load_points(points)?;
            report.inputs = Some(InputDigest::new(&soup, Some(&cloud)));
            let reg = register(&soup, &cloud, *max_outer, config)?;
            let result = json!({
                "rotation": reg.transform.rotation,
                "translation": reg.transform.translation,
                "rms_history": reg.history,
                "iterations": reg.iterations,
                "converged": reg.converged,
            });
            if let Some(path) = out {
                io::write_json(path, &result)?;
                report.outputs.push(path.clone());
            }
            report.result = result;
            report.solves.extend(reg.reports);
        }
    }
    Ok(())
}

/// Keeps the partial solve history of a failed run.
fn attach_report(e: &Error, report: &mut RunReport) {
    if let Error::LineSearch { report: r, .. } | Error::NonConvergence { report: r, .. } = e.root() {
        report.solves.push((**r).clone());
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("SDOT_LOG", "info"))
        .format_timestamp(None)
        .init();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("cannot configure {n} threads: {e}");
            return ExitCode::from(2);
        }
    }

    let s = cli.command.solver();
    let config = SolverConfig {
        eta: s.eta,
        max_iterations: s.max_iter,
        seed: cli.seed,
        ..SolverConfig::default()
    };
    let start = Instant::now();
    let mut report = RunReport::new(
        cli.command.name(),
        json!({ "solver": config, "seed": cli.seed }),
    );
    let outcome = config.validate().and_then(|_| run(&cli, &config, &mut report));
    report.collect_warnings();
    let code = match &outcome {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            report.error = Some(e.to_string());
            if e.is_validation() {
                2
            } else {
                3
            }
        }
    };
    report.wall_time_s = start.elapsed().as_secs_f64();
    if let Some(path) = cli.command.report_path() {
        if let Err(e) = io::write_json(path, &report) {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    }
    if code == 0 {
        println!("{} finished in {:.3}s", report.command, report.wall_time_s);
    }
    ExitCode::from(code)
}
