mod config;
mod error;
mod run;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use sgw_core::frame::{frame_bounds, kernel_curves, quality_factor, KernelSpec};
use sgw_core::graph::{CorticalGraph, EdgeWeights};
use sgw_core::io;
use sgw_core::mesh::load_mesh;
use sgw_core::simulation::{run_sweep, Geometry};

use crate::config::RunConfig;
use crate::error::CliError;

/// Environment variable holding the default root for run directories.
const OUT_ROOT_ENV: &str = "SGW_OUT_ROOT";

/// Sparse source estimation in a spectral graph wavelet domain: scenario
/// simulation, solver runs and metric reports.
#[derive(Parser, Debug)]
#[command(name = "sgw", author, version, about)]
struct Cli {
    /// Worker threads for scenario-level parallelism (0 = logical cores).
    #[arg(long, global = true, default_value_t = 0)]
    threads: usize,
    /// Verbosity (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct ConfigArgs {
    /// Run configuration (JSON); defaults are used when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Master seed, overriding the configuration.
    #[arg(long)]
    seed: Option<u64>,
    /// Run directory, overriding the configuration and $SGW_OUT_ROOT.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Simulate scenarios into a run directory.
    Simulate(ConfigArgs),
    /// Solve the scenarios of a run directory and score the estimates.
    Solve {
        /// Run directory created by `simulate`.
        #[arg(long)]
        run: PathBuf,
        /// Only run these configured solvers (by name, e.g. MCE, sgw-SBL).
        #[arg(long = "solver")]
        solvers: Vec<String>,
    },
    /// Simulate, solve and report in one pass.
    Sweep(ConfigArgs),
    /// Aggregate the records of a run directory into summary tables.
    Report {
        #[arg(long)]
        run: PathBuf,
    },
    /// Frame bounds, quality factor and kernel curves for a configuration.
    DiagnoseFrame(ConfigArgs),
    /// Size and connectivity of the configured surface, or of an OFF file.
    MeshInfo {
        #[command(flatten)]
        config: ConfigArgs,
        /// OFF file to inspect instead of the configured surface.
        #[arg(long)]
        mesh: Option<PathBuf>,
    },
    /// Print the JSON schema of run configurations.
    Schema,
    /// Print the default run configuration.
    Init,
}

fn resolve(args: &ConfigArgs) -> Result<(RunConfig, Option<PathBuf>), CliError> {
    let mut config = match &args.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = args.seed {
        config.master_seed = seed;
    }
    let out = args.out.clone().or_else(|| config.output_dir.clone());
    config.output_dir = None;
    config.validate()?;
    Ok((config, out))
}

/// `--out`, else the configured directory, else `run-<hash>` under
/// `$SGW_OUT_ROOT` (or `./runs`).
fn run_dir(config: &RunConfig, out: Option<PathBuf>) -> Result<PathBuf, CliError> {
    if let Some(dir) = out {
        return Ok(dir);
    }
    let root = std::env::var_os(OUT_ROOT_ENV)
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from("runs"));
    let hash = io::config_hash(config)?;
    Ok(root.join(format!("run-{}", &hash[..12])))
}

fn cmd_simulate(args: &ConfigArgs) -> Result<(), CliError> {
    let (config, out) = resolve(args)?;
    let dir = run_dir(&config, out)?;
    let geometry = Geometry::build(&config.geometry)?;
    let n = run::simulate(&dir, &config, &geometry)?;
    println!("simulated {n} scenarios into {}", dir.display());
    Ok(())
}

fn cmd_solve(dir: &Path, names: &[String]) -> Result<(), CliError> {
    let config = run::load_config(dir)?;
    let solvers: Vec<_> = if names.is_empty() {
        config.sweep.solvers.clone()
    } else {
        let mut picked = Vec::new();
        for name in names {
            let spec = config
                .sweep
                .solvers
                .iter()
                .find(|s| s.name().eq_ignore_ascii_case(name))
                .ok_or_else(|| CliError::Config(format!("solver {name} is not configured for this run")))?;
            picked.push(spec.clone());
        }
        picked
    };
    let geometry = Geometry::build(&config.geometry)?;
    let result = run::solve(dir, &config, &geometry, &solvers)?;
    println!(
        "{} records, {} solver failures in {}",
        result.records.len(),
        result.failures.len(),
        dir.display()
    );
    Ok(())
}

fn cmd_sweep(args: &ConfigArgs) -> Result<(), CliError> {
    let (config, out) = resolve(args)?;
    let dir = run_dir(&config, out)?;
    run::create_dir(&dir)?;
    let geometry = Geometry::build(&config.geometry)?;
    let result = run_sweep(&geometry, &config.sweep, config.master_seed, |o| {
        run::write_scenario(&dir, o.patch_size, o.index, &o.scenario)
            .map_err(|e| sgw_core::Error::Format(e.to_string()))
    })?;
    run::write_results(&dir, &result)?;
    run::write_manifest(&dir, "sweep", &config, result.records.len(), result.failures.len())?;
    for f in &result.failures {
        log::warn!("{} failed on size {} #{}: {}", f.solver, f.patch_size, f.scenario, f.message);
    }
    let (report, _) = run::report(&dir)?;
    print!("{}", report.to_text());
    println!("run directory: {}", dir.display());
    Ok(())
}

fn cmd_report(dir: &Path) -> Result<(), CliError> {
    let (report, files) = run::report(dir)?;
    print!("{}", report.to_text());
    println!("wrote {}, {}, {}", files.text.display(), files.json.display(), files.csv.display());
    Ok(())
}

fn cmd_diagnose_frame(args: &ConfigArgs) -> Result<(), CliError> {
    let (config, out) = resolve(args)?;
    let mesh = config.geometry.build_mesh()?;
    let graph = CorticalGraph::from_mesh(&mesh, EdgeWeights::Binary);
    let spectrum = graph.eigendecompose(config.geometry.eigen_cap)?;
    let frame = &config.geometry.frame;
    let spec = KernelSpec::design(spectrum.lambda_max, frame.cutoff_divisor, frame.n_scales)?;
    let (a, b) = frame_bounds(&spectrum, &spec)?;
    println!("vertices        {}", mesh.n_vertices());
    println!("lambda_max      {:.6}", spec.lambda_max);
    println!("lambda_min      {:.6}", spec.lambda_min);
    println!("scales          {:?}", spec.scales);
    println!("Q (half power)  {:.4}", quality_factor());
    println!("(A, B)          ({a:.4}, {b:.4})");
    println!("(sqrt A, sqrt B) ({:.4}, {:.4})", a.sqrt(), b.sqrt());
    if let Some(dir) = out {
        std::fs::create_dir_all(&dir).map_err(|e| CliError::io(&dir, e))?;
        let curves = kernel_curves(&spec, 512);
        let mut header = vec!["lambda".to_string(), "h".to_string()];
        header.extend((1..=spec.n_scales).map(|j| format!("g{j}")));
        let path = dir.join("kernels.csv");
        let mut w = csv::Writer::from_path(&path).map_err(|e| CliError::Input(e.to_string()))?;
        w.write_record(&header).map_err(|e| CliError::Input(e.to_string()))?;
        for row in curves.rows() {
            w.write_record(row.iter().map(|v| v.to_string()))
                .map_err(|e| CliError::Input(e.to_string()))?;
        }
        w.flush().map_err(|e| CliError::io(&path, e))?;
        #[derive(serde::Serialize)]
        struct FrameDiagnostics<'a> {
            kernels: &'a KernelSpec,
            bounds: (f64, f64),
            sqrt_bounds: (f64, f64),
        }
        io::write_json(
            dir.join("frame.json"),
            &FrameDiagnostics {
                kernels: &spec,
                bounds: (a, b),
                sqrt_bounds: (a.sqrt(), b.sqrt()),
            },
        )?;
        println!("wrote {}", dir.display());
    }
    Ok(())
}

fn cmd_mesh_info(args: &ConfigArgs, file: Option<&Path>) -> Result<(), CliError> {
    let mesh = match file {
        Some(path) => load_mesh(path)?,
        None => resolve(args)?.0.geometry.build_mesh()?,
    };
    let graph = CorticalGraph::from_mesh(&mesh, EdgeWeights::Binary);
    let edges = mesh.edges();
    let v = mesh.vertices();
    let mean_edge = edges
        .iter()
        .map(|&(i, k)| (0..3).map(|d| (v[i][d] - v[k][d]).powi(2)).sum::<f64>().sqrt())
        .sum::<f64>()
        / edges.len().max(1) as f64;
    println!("vertices          {}", mesh.n_vertices());
    println!("triangles         {}", mesh.triangles().len());
    println!("edges             {}", graph.n_edges());
    println!("components        {}", graph.components());
    println!("bounding radius   {:.6}", mesh.bounding_radius());
    println!("mean edge length  {mean_edge:.6}");
    Ok(())
}

fn dispatch(cli: Cli) -> Result<(), CliError> {
    if cli.threads > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(cli.threads)
            .build_global()
            .map_err(|e| CliError::Config(e.to_string()))?;
    }
    match &cli.command {
        Command::Simulate(args) => cmd_simulate(args),
        Command::Solve { run, solvers } => cmd_solve(run, solvers),
        Command::Sweep(args) => cmd_sweep(args),
        Command::Report { run } => cmd_report(run),
        Command::DiagnoseFrame(args) => cmd_diagnose_frame(args),
        Command::MeshInfo { config, mesh } => cmd_mesh_info(config, mesh.as_deref()),
        Command::Schema => {
            println!("{}", serde_json::to_string_pretty(&config::schema()).expect("schema serializes"));
            Ok(())
        }
        Command::Init => {
            let text = serde_json::to_string_pretty(&RunConfig::default()).expect("config serializes");
            println!("{text}");
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => log::LevelFilter::Warn,
        1 => log::LevelFilter::Info,
        _ => log::LevelFilter::Debug,
    };
    env_logger::Builder::new().filter_level(level).parse_default_env().init();
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
