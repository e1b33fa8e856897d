use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};

use stochplast::cell::sigma;
use stochplast::config::RunConfig;
use stochplast::effective::solve_effective;
use stochplast::eps::{average_plastic_strain, average_stress, residual_report, solve_eps};
use stochplast::experiments::{run_averaging_experiment, run_ergodic_check, run_korn_check};
use stochplast::media::{LawSpec, ProbabilityLaw};
use stochplast::path::StrainPath;
use stochplast::report::{emit_report, PlotSpec, ReportTable, Value};
use stochplast::tensor::SymTensor;
use stochplast::{Error, Result};

#[derive(Parser, Debug)]
#[command(name = "stochplast", version, about = "Stochastic homogenization of elastoplasticity with kinematic hardening")]
struct Cli {
    /// JSON run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory for CSV/SVG files.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// Overrides the configured seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (defaults to all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Solve the ε-problem on the configured mesh.
    Eps,
    /// Evaluate Σ(ξ) and Π(ξ) on periodized samples.
    Cell(CellArgs),
    /// Solve the effective problem with per-element cell states.
    Macro,
    /// Compare domain averages of ε-solutions with Σ(ξ).
    Average,
    /// Korn ratio of random periodic fields.
    Korn,
    /// Decay of spatial averages towards the expectation.
    Ergodic,
}

#[derive(Args, Debug)]
struct CellArgs {
    /// Lattice cells per side of the torus (N).
    #[arg(long)]
    cells: Option<usize>,
    /// Mesh subdivisions per cell (r).
    #[arg(long)]
    refinements: Option<usize>,
    /// Monte-Carlo samples (M).
    #[arg(long)]
    samples: Option<usize>,
    #[arg(long)]
    delta: Option<f64>,
    /// JSON file holding a `law` block.
    #[arg(long)]
    law: Option<PathBuf>,
    /// Strain path CSV.
    #[arg(long)]
    xi: Option<PathBuf>,
}

fn components(prefix: &str, k: usize) -> Vec<String> {
    (0..k).map(|c| format!("{prefix}_{c}")).collect()
}

fn tensor_cells(t: &SymTensor) -> impl Iterator<Item = Value> + '_ {
    t.mandel().iter().map(|&x| Value::Float(x))
}

fn table_with(name: &str, columns: &[String]) -> ReportTable {
    let cols: Vec<&str> = columns.iter().map(String::as_str).collect();
    ReportTable::new(name, &cols)
}

fn run_eps(cfg: &RunConfig, out: &Path) -> Result<()> {
    let problem = cfg.eps_problem()?;
    let traj = solve_eps(&problem)?;
    let mesh = problem.mesh();
    let all: Vec<usize> = (0..mesh.n_elements()).collect();
    let sig = average_stress(&traj, mesh, &all)?;
    let p = average_plastic_strain(&traj, mesh, &all)?;
    let k = cfg.dimension()?.k();
    let mut cols = vec!["t".to_string()];
    cols.extend(components("sigma", k));
    cols.extend(components("p", k));
    cols.extend(["newton_iterations", "residual", "flow_residual", "seed", "epsilon"].map(String::from));
    let mut table = table_with("eps", &cols);
    for m in 0..traj.times.len() {
        let mut row = vec![Value::Float(traj.times[m])];
        row.extend(tensor_cells(&sig[m]));
        row.extend(tensor_cells(&p[m]));
        row.extend([
            Value::from(traj.newton_iterations[m]),
            Value::Float(traj.residuals[m]),
            Value::Float(traj.flow_residuals[m]),
            Value::Seed(cfg.seed),
            Value::Float(cfg.epsilon),
        ]);
        table.push(row)?;
    }
    emit_report(&table, &out.join("eps.csv"), None)?;
    let r = residual_report(&traj, &problem);
    println!("elements={} steps={}", mesh.n_elements(), traj.times.len() - 1);
    println!(
        "bound_ratio={:.6e} max_decomposition={:.3e} max_constitutive={:.3e} max_flow_residual={:.3e}",
        r.ratio, r.max_decomposition, r.max_constitutive, r.max_flow_residual
    );
    println!(
        "min_dissipation={:.3e} energy_defect_discrete={:.3e} energy_defect={:.3e}",
        r.min_dissipation, r.energy_defect_discrete, r.energy_defect
    );
    Ok(())
}

fn run_cell(cfg: &RunConfig, args: &CellArgs, out: &Path) -> Result<()> {
    let mut rve = cfg.rve_config()?;
    if let Some(n) = args.cells {
        rve.cells = n;
    }
    if let Some(r) = args.refinements {
        rve.refinements = r;
    }
    if let Some(m) = args.samples {
        rve.samples = m;
    }
    if let Some(d) = args.delta {
        rve.delta = d;
    }
    let dim = cfg.dimension()?;
    if let Some(path) = &args.law {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Io {
            path: path.clone(),
            source: e,
        })?;
        let spec: LawSpec = serde_json::from_str(&text).map_err(|e| Error::config(format!("{}: {e}", path.display())))?;
        rve.law = Arc::new(ProbabilityLaw::new(spec, dim)?);
    }
    let xi = match &args.xi {
        Some(path) => StrainPath::read_csv(path, dim)?,
        None => cfg.xi()?,
    };
    let times = cfg.times()?;
    let res = sigma(&rve, &xi, &times)?;
    let k = dim.k();
    let mut cols = vec!["t".to_string()];
    cols.extend(components("xi", k));
    cols.extend(components("sigma", k));
    cols.extend(components("pi", k));
    cols.extend(components("sigma_stderr", k));
    cols.extend(["N", "r", "M", "seed", "delta"].map(String::from));
    let mut table = table_with("cell", &cols);
    for (m, &t) in times.iter().enumerate() {
        let mut row = vec![Value::Float(t)];
        row.extend(tensor_cells(&xi.at(t)));
        row.extend(tensor_cells(&res.sigma[m]));
        row.extend(tensor_cells(&res.pi[m]));
        row.extend(tensor_cells(&res.mc_stderr[m]));
        row.extend([
            Value::from(rve.cells),
            Value::from(rve.refinements),
            Value::from(rve.samples),
            Value::Seed(rve.base_seed),
            Value::Float(rve.delta),
        ]);
        table.push(row)?;
    }
    emit_report(&table, &out.join("cell.csv"), None)
}

fn run_macro(cfg: &RunConfig, out: &Path) -> Result<()> {
    let mc = cfg.macro_config()?;
    let sol = solve_effective(&mc)?;
    let mesh = &mc.mesh;
    let k = cfg.dimension()?.k();
    let mut cols = vec!["t".to_string()];
    cols.extend(components("sigma", k));
    cols.extend(components("pi", k));
    cols.extend(["max_displacement", "newton_iterations", "residual", "seed", "tolerance"].map(String::from));
    let mut table = table_with("macro", &cols);
    let total = mesh.total_volume();
    for m in 0..sol.times.len() {
        let mut s = SymTensor::zero(cfg.dimension()?);
        let mut p = s;
        for (e, g) in mesh.geometries().iter().enumerate() {
            s += sol.sigma[m][e].scale(g.volume / total);
            p += sol.pi[m][e].scale(g.volume / total);
        }
        let mut row = vec![Value::Float(sol.times[m])];
        row.extend(tensor_cells(&s));
        row.extend(tensor_cells(&p));
        row.extend([
            Value::Float(sol.u[m].iter().fold(0.0f64, |a, v| a.max(v.abs()))),
            Value::from(sol.newton_iterations[m]),
            Value::Float(sol.residuals[m]),
            Value::Seed(mc.rve.base_seed),
            Value::Float(mc.tol),
        ]);
        table.push(row)?;
    }
    emit_report(&table, &out.join("macro.csv"), None)
}

fn plot(x: &str, y: &str, series: Option<&str>, log: bool) -> PlotSpec {
    PlotSpec {
        x: x.into(),
        y: y.into(),
        series: series.map(Into::into),
        log_x: log,
        log_y: log,
    }
}

fn run(cli: &Cli) -> Result<()> {
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Error::config(format!("--threads: {e}")))?;
    }
    let path = cli.config.as_ref().ok_or_else(|| Error::config("--config <json> is required"))?;
    let mut cfg = RunConfig::load(path)?;
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    let out = cli.out.as_path();
    match &cli.command {
        Command::Eps => run_eps(&cfg, out),
        Command::Cell(args) => run_cell(&cfg, args, out),
        Command::Macro => run_macro(&cfg, out),
        Command::Average => {
            let report = run_averaging_experiment(&cfg.averaging_spec()?)?;
            let svg = out.join("average.svg");
            emit_report(&report.table, &out.join("average.csv"), Some((&svg, &plot("t", "discrepancy", Some("epsilon"), false))))?;
            for (eps, d) in &report.discrepancy {
                println!("epsilon={eps} l2_discrepancy={d:.6e}");
            }
            println!("a_invariant={}", report.a_invariant);
            Ok(())
        }
        Command::Korn => {
            let report = run_korn_check(&cfg.korn_spec()?)?;
            emit_report(&report.table, &out.join("korn.csv"), None)?;
            println!("max_ratio={:.12} skipped={}", report.max_ratio, report.skipped);
            Ok(())
        }
        Command::Ergodic => {
            let report = run_ergodic_check(&cfg.ergodic_spec()?)?;
            let svg = out.join("ergodic.svg");
            emit_report(&report.table, &out.join("ergodic.csv"), Some((&svg, &plot("L", "error", Some("seed"), true))))?;
            println!("exponent={:.4}", report.exponent);
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
