//! Command-line front end: load graphs, run the solvers, emit
//! machine-readable reports and solution files.
//!
//! Exit codes: 0 success, 1 no solution found (vortex divergence or an
//! unresolved bracket — a scientific result, not a failure), 2 input errors,
//! 3 iteration budget exceeded for the Dirac solve.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};

use graph_mfe::torus::{build_torus_graph, critical_slope, find_critical_points, torus_green};
use graph_mfe::vortex::{estimate_lambda_c, LambdaCOptions, VortexStatus};
use graph_mfe::{
    DiracOptions, DiracProblem, Error as MfeError, SolutionFile, TorusSpec, VortexOptions,
    VortexProblem, WeightedGraph,
};

#[derive(Parser)]
#[command(
    name = "graph-mfe",
    about = "Mean field equation solvers on finite weighted graphs",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct CommonOpts {
    /// Residual target.
    #[arg(long)]
    tol: Option<f64>,
    /// Iteration budget.
    #[arg(long)]
    max_iters: Option<usize>,
    /// Write the solution / report here (atomically).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Suppress the summary on stdout.
    #[arg(long)]
    quiet: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Solve Δu + e^u = ρδ₀.
    SolveDirac {
        #[arg(long)]
        graph: PathBuf,
        #[arg(long)]
        rho: f64,
        /// Vertex id carrying the Dirac mass.
        #[arg(long)]
        pole: String,
        /// Print the per-step (phase, J, residual) trace.
        #[arg(long)]
        verbose: bool,
        #[command(flatten)]
        common: CommonOpts,
    },
    /// Solve Δu = λe^u(e^u−1) + 4πΣδ_{p_j} by monotone iteration.
    SolveVortex {
        #[arg(long)]
        graph: PathBuf,
        #[arg(long)]
        lambda: f64,
        /// Vortex vertex id; repeat for multiplicity.
        #[arg(long = "vortex", required = true)]
        vortices: Vec<String>,
        /// Screening constant override (must be ≥ 2λ).
        #[arg(long)]
        k: Option<f64>,
        /// Divergence floor offset: diverged when min v < −(‖u₀‖∞ + offset).
        #[arg(long, default_value_t = 50.0)]
        divergence_floor: f64,
        #[command(flatten)]
        common: CommonOpts,
    },
    /// Bracket the critical λ by bisection.
    LambdaC {
        #[arg(long)]
        graph: PathBuf,
        #[arg(long = "vortex", required = true)]
        vortices: Vec<String>,
        /// Bracket width target (absolute); defaults to 10⁻³·16πM/Vol.
        #[arg(long)]
        width: Option<f64>,
        /// First upper candidate, doubled until a solve succeeds.
        #[arg(long)]
        initial_upper: Option<f64>,
        #[command(flatten)]
        common: CommonOpts,
    },
    /// Discrete torus Green's function, its critical points and their slope.
    TorusGreen {
        /// Grid refinement.
        #[arg(long)]
        n: u32,
        /// τ = 1/2 + i quotient (periods (n,0) and (n/2,n)); needs even n.
        #[arg(long, value_parser = ["tau-half-plus-i"])]
        preset: Option<String>,
        /// Explicit period vectors "a,b,c,d".
        #[arg(long, conflicts_with = "preset")]
        periods: Option<String>,
        #[command(flatten)]
        common: CommonOpts,
    },
    /// Re-check a solution file's residual against its graph.
    Verify {
        #[arg(long)]
        graph: PathBuf,
        #[arg(long)]
        solution: PathBuf,
        #[arg(long)]
        quiet: bool,
    },
}

fn main() -> ExitCode {
    match run() {
        Ok(code) => ExitCode::from(code),
        Err(err) => {
            eprintln!("error: {err:#}");
            let code = err
                .downcast_ref::<MfeError>()
                .map_or(2, |e| match e {
                    MfeError::MaxIterationsExceeded(_) => 3,
                    MfeError::BudgetExhausted { .. } => 1,
                    _ => 2,
                });
            ExitCode::from(code)
        }
    }
}

fn load_graph(path: &Path) -> Result<WeightedGraph> {
    let text = fs::read_to_string(path)
        .with_context(|| format!("cannot read graph file {}", path.display()))?;
    Ok(WeightedGraph::from_json_str(&text)?)
}

/// Writes atomically: temp file in the target directory, then rename.
fn write_atomic(path: &Path, contents: &str) -> Result<()> {
    let tmp = path.with_extension("tmp-write");
    fs::write(&tmp, contents)
        .with_context(|| format!("cannot write {}", tmp.display()))?;
    fs::rename(&tmp, path)
        .with_context(|| format!("cannot move output into place at {}", path.display()))?;
    Ok(())
}

fn run() -> Result<u8> {
    match Cli::parse().command {
        Command::SolveDirac {
            graph,
            rho,
            pole,
            verbose,
            common,
        } => solve_dirac(&graph, rho, &pole, verbose, &common),
        Command::SolveVortex {
            graph,
            lambda,
            vortices,
            k,
            divergence_floor,
            common,
        } => solve_vortex(&graph, lambda, &vortices, k, divergence_floor, &common),
        Command::LambdaC {
            graph,
            vortices,
            width,
            initial_upper,
            common,
        } => lambda_c(&graph, &vortices, width, initial_upper, &common),
        Command::TorusGreen {
            n,
            preset,
            periods,
            common,
        } => torus_green_cmd(n, preset.as_deref(), periods.as_deref(), &common),
        Command::Verify {
            graph,
            solution,
            quiet,
        } => verify(&graph, &solution, quiet),
    }
}

fn solve_dirac(
    graph_path: &Path,
    rho: f64,
    pole: &str,
    verbose: bool,
    common: &CommonOpts,
) -> Result<u8> {
    let g = load_graph(graph_path)?;
    let problem = DiracProblem::new(&g, rho, pole)?;
    let mut opts = DiracOptions {
        record_trace: verbose,
        ..DiracOptions::default()
    };
    if let Some(tol) = common.tol {
        opts.tol = tol;
    }
    if let Some(n) = common.max_iters {
        opts.max_iters = n;
    }
    let (u, report) = problem.solve(&opts)?;
    if verbose {
        for (k, step) in report.trace.iter().enumerate() {
            eprintln!(
                "step {k:5} {:8} J={:.12e} residual={:.3e}",
                format!("{:?}", step.phase).to_lowercase(),
                step.j_value,
                step.residual_sup
            );
        }
    }
    let file = SolutionFile::for_dirac(&problem, &u, &report);
    if let Some(out) = &common.out {
        write_atomic(out, &file.to_json_string())?;
    }
    if !common.quiet {
        println!(
            "dirac: converged rho={rho} pole={pole} residual_sup={:.3e} \
             constraint_defect={:.3e} lambda_lagrange={:.12} iterations={}",
            report.residual_sup, report.constraint_defect, report.lambda_lagrange,
            report.iterations
        );
    }
    Ok(0)
}

fn solve_vortex(
    graph_path: &Path,
    lambda: f64,
    vortices: &[String],
    k: Option<f64>,
    divergence_floor: f64,
    common: &CommonOpts,
) -> Result<u8> {
    let g = load_graph(graph_path)?;
    let problem = VortexProblem::new(&g, lambda, vortices)?;
    let mut opts = VortexOptions {
        k_override: k,
        divergence_floor_offset: divergence_floor,
        ..VortexOptions::default()
    };
    if let Some(tol) = common.tol {
        opts.tol = tol;
    }
    if let Some(n) = common.max_iters {
        opts.max_iters = n;
    }
    let (solution, trace, report) = problem.solve(&opts)?;

    // the file records the last iterate either way; its status field tells
    // whether the stored field solves the equation
    let u_for_file = match &solution {
        Some(u) => u.clone(),
        None => {
            let u0 = problem.solve_background()?;
            let values = u0
                .values()
                .iter()
                .zip(trace.last_v.values())
                .map(|(&a, &b)| a + b)
                .collect();
            g.field(values)?
        }
    };
    let file = SolutionFile::for_vortex(&problem, &u_for_file, &report);
    if let Some(out) = &common.out {
        write_atomic(out, &file.to_json_string())?;
    }

    let status_line = match report.status {
        VortexStatus::Converged => "converged",
        VortexStatus::Diverged(_) => "diverged",
        VortexStatus::BudgetExhausted => "budget_exhausted",
    };
    if !common.quiet {
        let last_step = trace.steps.last().expect("trace is nonempty");
        println!(
            "vortex: {status_line} lambda={lambda} M={} bound={:.6} residual_sup={:.3e} \
             iterations={} v_range=[{:.4},{:.4}] u_max={:.4e} mass_defect={:.3e}",
            problem.multiplicity(),
            report.lambda_bound,
            report.residual_sup,
            report.iterations,
            last_step.v_min,
            last_step.v_max,
            report.u_max,
            report.mass_defect,
        );
    }
    Ok(if report.status.is_converged() { 0 } else { 1 })
}

fn lambda_c(
    graph_path: &Path,
    vortices: &[String],
    width: Option<f64>,
    initial_upper: Option<f64>,
    common: &CommonOpts,
) -> Result<u8> {
    let g = load_graph(graph_path)?;
    let mut opts = LambdaCOptions {
        width,
        initial_upper,
        ..LambdaCOptions::default()
    };
    if let Some(tol) = common.tol {
        opts.solve.tol = tol;
    }
    if let Some(n) = common.max_iters {
        opts.solve.max_iters = n;
    }
    let bracket = estimate_lambda_c(&g, vortices, &opts)?;
    let mut report = String::new();
    writeln!(report, "{{")?;
    writeln!(report, "  \"lower\": {},", bracket.lower)?;
    writeln!(report, "  \"upper\": {},", bracket.upper)?;
    writeln!(report, "  \"bound_necessary\": {},", bracket.bound_necessary)?;
    writeln!(
        report,
        "  \"lower_status\": \"{}\",",
        if bracket.lower_report.status.is_converged() {
            "converged"
        } else {
            "no_solution_found"
        }
    )?;
    writeln!(
        report,
        "  \"upper_status\": \"{}\"",
        if bracket.upper_report.status.is_converged() {
            "converged"
        } else {
            "no_solution_found"
        }
    )?;
    writeln!(report, "}}")?;
    if let Some(out) = &common.out {
        write_atomic(out, &report)?;
    }
    if !common.quiet {
        println!(
            "lambda-c: bracket=[{:.12}, {:.12}] width={:.3e} bound={:.12}",
            bracket.lower,
            bracket.upper,
            bracket.upper - bracket.lower,
            bracket.bound_necessary
        );
    }
    Ok(0)
}

fn torus_green_cmd(
    n: u32,
    preset: Option<&str>,
    periods: Option<&str>,
    common: &CommonOpts,
) -> Result<u8> {
    let spec = match (preset, periods) {
        (_, Some(text)) => {
            let parts: Vec<i64> = text
                .split(',')
                .map(|s| s.trim().parse::<i64>())
                .collect::<std::result::Result<_, _>>()
                .context("--periods expects four integers \"a,b,c,d\"")?;
            anyhow::ensure!(parts.len() == 4, "--periods expects four integers \"a,b,c,d\"");
            TorusSpec::with_periods(n, [[parts[0], parts[1]], [parts[2], parts[3]]])?
        }
        _ => TorusSpec::tau_half_plus_i(n)?,
    };
    let tg = build_torus_graph(&spec)?;
    let green = torus_green(&tg)?;
    let residual = graph_mfe::solution::green_residual_sup(
        tg.graph(),
        tg.graph().vertex_id(tg.origin()),
        &green,
    )?;
    let tol = common.tol.unwrap_or(1e-12);
    let cps = find_critical_points(&tg, &green, tol)?;
    let slope = critical_slope(&cps, &tg);

    let mut csv = String::from("i,j,refined_x,refined_y,class,G_value\n");
    for pt in &cps.points {
        let (x, y) = tg.continuum(pt.refined);
        writeln!(
            csv,
            "{},{},{},{},{},{}",
            pt.lattice.0,
            pt.lattice.1,
            x,
            y,
            pt.class.as_str(),
            pt.g_value
        )?;
    }
    writeln!(csv, "# green_residual_sup,{residual}")?;
    match &slope {
        Ok(s) => writeln!(csv, "# slope,{s}")?,
        Err(MfeError::AmbiguousCriticalSet(k)) => {
            writeln!(csv, "# slope,ambiguous ({k} additional points)")?
        }
        Err(e) => anyhow::bail!("slope computation failed: {e}"),
    }

    if let Some(out) = &common.out {
        write_atomic(out, &csv)?;
    } else {
        print!("{csv}");
    }
    if !common.quiet {
        println!(
            "torus-green: n={n} vertices={} critical_points={} residual_sup={:.3e}{}",
            tg.graph().vertex_count(),
            cps.points.len(),
            residual,
            match &slope {
                Ok(s) => format!(" slope={s:.8}"),
                Err(_) => String::new(),
            }
        );
    }
    Ok(0)
}

fn verify(graph_path: &Path, solution_path: &Path, quiet: bool) -> Result<u8> {
    let g = load_graph(graph_path)?;
    let text = fs::read_to_string(solution_path)
        .with_context(|| format!("cannot read solution file {}", solution_path.display()))?;
    let file = SolutionFile::from_json_str(&text)?;
    let (stored, recomputed) = file.verify(&g)?;
    let ok = (stored - recomputed).abs() <= 1e-12 * stored.abs().max(1.0);
    if !quiet {
        println!(
            "verify: stored_residual={stored:.17e} recomputed={recomputed:.17e} {}",
            if ok { "OK" } else { "MISMATCH" }
        );
    }
    Ok(if ok { 0 } else { 1 })
}
