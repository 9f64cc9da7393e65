use std::fs;
use std::io::BufReader;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};

use scvx_core::config::{bundled, LoadedConfig};
use scvx_core::conic::{self, ConicProgram};
use scvx_core::{load_config, run_case, run_sweep, Error, MeshMode, NlMode, Overrides};

const EXIT_CONVERGED: u8 = 0;
const EXIT_NOT_CONVERGED: u8 = 2;
const EXIT_CONFIG: u8 = 3;
const EXIT_INTERNAL: u8 = 4;

#[derive(Parser, Debug)]
#[command(name = "scvx", version, about = "Minimum-fuel low-thrust trajectories by successive convexification")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Solve a single case and write its artifacts
    Run(CaseArgs),
    /// Run a node-count and strategy sweep; writes sweep.csv
    Sweep {
        #[command(flatten)]
        case: CaseArgs,
        /// Run cells one after another instead of in parallel
        #[arg(long)]
        serial: bool,
    },
    /// Solve a conic program from a plain-text dump
    SolveDump {
        path: PathBuf,
        #[arg(long, default_value_t = 1e-8)]
        tolerance: f64,
        #[arg(long, default_value_t = 200)]
        max_iterations: u32,
    },
    /// Print a bundled configuration
    ShowConfig {
        #[arg(value_parser = ["cr3bp-halo", "earth-dionysus", "cr3bp-sweep"])]
        name: String,
    },
}

#[derive(Args, Debug)]
struct CaseArgs {
    /// TOML case or sweep configuration
    #[arg(long)]
    config: PathBuf,
    /// Number of nodes K
    #[arg(long)]
    nodes: Option<usize>,
    #[arg(long, value_parser = parse_mode::<MeshMode>)]
    mesh: Option<MeshMode>,
    #[arg(long = "nl-index", value_parser = parse_mode::<NlMode>)]
    nl_index: Option<NlMode>,
    #[arg(long = "max-iters")]
    max_iters: Option<usize>,
    #[arg(long = "out-dir")]
    out_dir: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Write every assembled subproblem to <out-dir>/subproblems
    #[arg(long)]
    dump_subproblems: bool,
}

fn parse_mode<T>(s: &str) -> std::result::Result<T, String>
where
    T: std::str::FromStr<Err = Error>,
{
    s.parse().map_err(|e: Error| e.to_string())
}

impl CaseArgs {
    fn overrides(&self) -> Overrides {
        Overrides {
            nodes: self.nodes,
            mesh: self.mesh,
            nonlinearity_index: self.nl_index,
            max_iterations: self.max_iters,
            out_dir: self.out_dir.clone(),
            seed: self.seed,
        }
    }
}

/// Failure classes mapped onto exit codes.
enum Failure {
    Config(anyhow::Error),
    Internal(anyhow::Error),
}

fn classify(e: anyhow::Error) -> Failure {
    match e.downcast_ref::<Error>() {
        Some(Error::Config(_) | Error::Argument(_)) => Failure::Config(e),
        _ => Failure::Internal(e),
    }
}

fn load(path: &Path, o: &Overrides) -> std::result::Result<LoadedConfig, Failure> {
    let mut cfg = load_config(path).map_err(|e| Failure::Config(e.into()))?;
    let checked = match &mut cfg {
        LoadedConfig::Case(c) => {
            c.apply(o);
            c.validate()
        }
        LoadedConfig::Sweep(s) => {
            s.apply(o);
            s.validate()
        }
    };
    checked.map_err(|e| Failure::Config(e.into()))?;
    Ok(cfg)
}

fn run(args: &CaseArgs) -> std::result::Result<u8, Failure> {
    let LoadedConfig::Case(case) = load(&args.config, &args.overrides())? else {
        return Err(Failure::Config(anyhow::anyhow!(
            "{} is a sweep configuration; use `scvx sweep`",
            args.config.display()
        )));
    };
    let mut case = case;
    let dir = case.output.dir.clone();
    if args.dump_subproblems {
        case.scvx.dump_dir = Some(dir.join("subproblems"));
    }
    let out = run_case(&case, &dir, &mut |_| {})
        .with_context(|| format!("case {}", args.config.display()))
        .map_err(classify)?;
    let resolved = case.to_toml().map_err(|e| Failure::Internal(e.into()))?;
    fs::write(dir.join("config.toml"), resolved).map_err(|e| Failure::Internal(e.into()))?;
    let s = &out.summary;
    println!(
        "{}: {:?} after {} iterations ({} accepted); final mass {:.4} kg, propellant {:.4} kg, max defect {:.3e}, {} switches",
        s.model,
        s.termination,
        s.iterations,
        s.accepted_iterations,
        s.final_mass_kg,
        s.propellant_kg,
        s.max_defect,
        s.switches
    );
    println!("artifacts in {}", dir.display());
    Ok(if s.converged { EXIT_CONVERGED } else { EXIT_NOT_CONVERGED })
}

fn sweep(args: &CaseArgs, serial: bool) -> std::result::Result<u8, Failure> {
    let LoadedConfig::Sweep(cfg) = load(&args.config, &args.overrides())? else {
        return Err(Failure::Config(anyhow::anyhow!(
            "{} has no [sweep] table; use `scvx run`",
            args.config.display()
        )));
    };
    let rows = run_sweep(&cfg, !serial).map_err(|e| classify(e.into()))?;
    for r in &rows {
        println!(
            "K={:<5} mesh={:<8} nl={:<3} rep={} converged={:<5} iterations={:<3} final mass {:.4} kg",
            r.label.nodes,
            r.label.mesh,
            r.label.nonlinearity_index,
            r.repetition,
            r.converged,
            r.iterations,
            r.final_mass_kg
        );
    }
    println!("sweep table in {}", cfg.case.output.dir.join("sweep.csv").display());
    let all = rows.iter().all(|r| r.converged);
    Ok(if all { EXIT_CONVERGED } else { EXIT_NOT_CONVERGED })
}

fn solve_dump(path: &Path, tolerance: f64, max_iterations: u32) -> std::result::Result<u8, Failure> {
    let file = fs::File::open(path)
        .with_context(|| format!("open {}", path.display()))
        .map_err(Failure::Config)?;
    let program = ConicProgram::read_dump(BufReader::new(file)).map_err(|e| classify(e.into()))?;
    let opts = conic::SolverOptions { tolerance, max_iterations };
    let sol = conic::solve(&program, &opts).map_err(|e| classify(e.into()))?;
    println!(
        "status {} objective {:.12e} iterations {} residuals primal {:.2e} dual {:.2e} gap {:.2e}",
        sol.status, sol.objective, sol.iterations, sol.residuals.primal, sol.residuals.dual, sol.residuals.gap
    );
    Ok(if sol.status == conic::SolveStatus::Optimal { EXIT_CONVERGED } else { EXIT_NOT_CONVERGED })
}

fn show_config(name: &str) -> Result<()> {
    let text = match name {
        "cr3bp-halo" => bundled::CR3BP_HALO,
        "earth-dionysus" => bundled::EARTH_DIONYSUS,
        _ => bundled::CR3BP_SWEEP,
    };
    print!("{text}");
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { EXIT_CONFIG } else { EXIT_CONVERGED });
        }
    };
    let outcome = match &cli.command {
        Command::Run(args) => run(args),
        Command::Sweep { case, serial } => sweep(case, *serial),
        Command::SolveDump { path, tolerance, max_iterations } => solve_dump(path, *tolerance, *max_iterations),
        Command::ShowConfig { name } => show_config(name).map(|_| EXIT_CONVERGED).map_err(Failure::Internal),
    };
    match outcome {
        Ok(code) => ExitCode::from(code),
        Err(Failure::Config(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(EXIT_CONFIG)
        }
        Err(Failure::Internal(e)) => {
            eprintln!("internal error: {e:#}");
            ExitCode::from(EXIT_INTERNAL)
        }
    }
}
