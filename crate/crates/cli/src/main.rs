use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde_json::json;

use ppm::error::{ConfigErrors, SimulationError};
use ppm::scenario_io::{parse_scenario, read_checkpoint, report_run, run_scenario, RunEvent, Scenario};

#[derive(Parser)]
#[command(name = "ppm", version, about = "Nonlocal large-deformation elastoplastic failure simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario file.
    Run {
        scenario: PathBuf,
        /// Output directory (default: the scenario's, else runs/<name>).
        #[arg(long)]
        output: Option<PathBuf>,
        /// Worker threads (default: PPM_THREADS, else all cores).
        #[arg(long, env = "PPM_THREADS")]
        threads: Option<usize>,
        /// Checkpoint cadence in simulated seconds.
        #[arg(long)]
        checkpoint_every: Option<f64>,
        /// Resume the loading phase from a checkpoint file.
        #[arg(long)]
        resume: Option<PathBuf>,
    },
    /// Run the kinematics, plasticity and integrator property suites.
    Verify {
        /// Random cases per suite.
        #[arg(long, default_value_t = 100)]
        cases: usize,
        #[arg(long, default_value_t = 7)]
        seed: u64,
    },
    /// Extract loading curve peak, ground profile and band angles from a
    /// run directory.
    Report { run_dir: PathBuf },
}

enum Failure {
    Config(ConfigErrors),
    Simulation(SimulationError),
    Verify(usize),
}

impl From<SimulationError> for Failure {
    fn from(e: SimulationError) -> Self {
        Failure::Simulation(e)
    }
}

impl From<ppm::error::IoError> for Failure {
    fn from(e: ppm::error::IoError) -> Self {
        Failure::Simulation(e.into())
    }
}

impl Failure {
    fn summary(&self) -> serde_json::Value {
        match self {
            Failure::Config(errs) => json!({
                "error": "config",
                "issues": errs.0.iter().map(|i| json!({
                    "field": i.field,
                    "line": i.line,
                    "message": i.message,
                })).collect::<Vec<_>>(),
            }),
            Failure::Simulation(e) => {
                let kind = match e {
                    SimulationError::Kinematics { .. } => "kinematics",
                    SimulationError::Plasticity { .. } => "plasticity",
                    SimulationError::NonFinite { .. } => "non-finite",
                    SimulationError::Relaxation { .. } => "relaxation",
                    SimulationError::Lattice(_) => "lattice",
                    SimulationError::Config(_) => "config",
                    SimulationError::Io(_) => "io",
                };
                let mut v = json!({ "error": kind, "message": e.to_string() });
                if let SimulationError::Relaxation { trace, .. } = e {
                    v["kinetic_energy_trace"] = json!(trace);
                }
                v
            }
            Failure::Verify(n) => json!({ "error": "verify", "failed_suites": n }),
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run {
            scenario,
            output,
            threads,
            checkpoint_every,
            resume,
        } => {
            if let Err(e) = configure_threads(threads) {
                eprintln!("{e}");
                return ExitCode::from(2);
            }
            run(&scenario, output, checkpoint_every, resume)
        }
        Command::Verify { cases, seed } => verify(cases, seed),
        Command::Report { run_dir } => report_run(&run_dir, None)
            .map(|r| print!("{}", r.summary()))
            .map_err(Failure::from),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("{}", f.summary());
            ExitCode::FAILURE
        }
    }
}

fn configure_threads(threads: Option<usize>) -> Result<(), String> {
    match threads {
        Some(0) => Err("--threads must be at least 1".into()),
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| e.to_string()),
        None => Ok(()),
    }
}

fn load(path: &Path) -> Result<Scenario, Failure> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| ppm::error::IoError::new(format!("reading {}", path.display()), e))?;
    parse_scenario(&text).map_err(Failure::Config)
}

fn run(path: &Path, output: Option<PathBuf>, checkpoint_every: Option<f64>, resume: Option<PathBuf>) -> Result<(), Failure> {
    let scenario = load(path)?;
    let dir = output
        .or_else(|| scenario.output.directory.as_ref().map(PathBuf::from))
        .unwrap_or_else(|| Path::new("runs").join(&scenario.name));
    let mut plan = scenario.output.plan();
    if checkpoint_every.is_some() {
        plan.checkpoint_every = checkpoint_every;
    }
    let resume = match resume {
        Some(p) => Some((read_checkpoint(&p)?, p.display().to_string())),
        None => None,
    };
    run_scenario(&scenario, &dir, &plan, resume, &mut |event| match event {
        RunEvent::Started {
            name,
            points,
            bonds,
            dt,
            steps,
        } => eprintln!("{name}: {points} points, {bonds} bonds, dt = {dt:e} s, {steps} steps -> {}", dir.display()),
        RunEvent::Warning(w) => eprintln!("warning: {w}"),
        RunEvent::Relaxed(r) => eprintln!(
            "relaxation converged in {} steps (kinetic energy {:e} of peak {:e})",
            r.steps, r.final_kinetic_energy, r.peak_kinetic_energy
        ),
        RunEvent::Finished(s) => eprintln!(
            "finished {} steps to t = {:.4} s in {:.1} s, {} snapshots",
            s.steps, s.time, s.wall_seconds, s.snapshots
        ),
    })?;
    let report = report_run(&dir, None)?;
    print!("{}", report.summary());
    Ok(())
}

fn verify(cases: usize, seed: u64) -> Result<(), Failure> {
    let results = ppm::verify::run_all(cases, seed);
    println!("{:<34} {:<6} detail", "suite", "result");
    for r in &results {
        println!("{:<34} {:<6} {}", r.name, if r.passed { "PASS" } else { "FAIL" }, r.detail);
    }
    let failed = results.iter().filter(|r| !r.passed).count();
    if failed == 0 {
        Ok(())
    } else {
        Err(Failure::Verify(failed))
    }
}
