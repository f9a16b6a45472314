use clap::{Parser, Subcommand};
use degenbeam::harness::{
    self, cli_certify, cli_mms, cli_run, cli_spectrum, cli_sweep, cli_validate, default_jobs,
    expand_grid,
};
use degenbeam::scenario::Scenario;
use std::path::PathBuf;
use std::process::ExitCode;

/// Simulation and decay certification for a degenerate Euler-Bernoulli
/// beam with axial tension and delayed boundary feedback.
#[derive(Parser)]
#[command(name = "degenbeam", version, about)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Check every structural assumption and print the certificate constants.
    Validate {
        path: PathBuf,
        /// Report violations without failing.
        #[arg(long)]
        lenient: bool,
    },
    /// Simulate the scenario and emit the trajectory CSV.
    Run {
        path: PathBuf,
        /// Run even when strict validation fails; gated columns stay empty.
        #[arg(long)]
        lenient: bool,
        /// Also dump full states (long-format CSV next to the output file).
        #[arg(long)]
        full_state: bool,
        /// Write the CSV here instead of stdout.
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Run and verify every decay-certificate check.
    Certify { path: PathBuf },
    /// Spectral abscissa of the closed-loop generator, optionally on a grid.
    Spectrum {
        path: PathBuf,
        /// Comma-separated delayed-gain values to scan.
        #[arg(long, value_delimiter = ',')]
        kd: Option<Vec<f64>>,
        /// Comma-separated delay values to scan.
        #[arg(long, value_delimiter = ',')]
        tau: Option<Vec<f64>>,
        /// Refuse eigensolves beyond this state dimension.
        #[arg(long, default_value_t = 2000)]
        dim_cap: usize,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Run/certify/eigensolve a scenario grid and aggregate one row each.
    Sweep {
        paths: Vec<PathBuf>,
        /// Comma-separated delayed-gain values (template mode).
        #[arg(long, value_delimiter = ',')]
        kd: Option<Vec<f64>>,
        /// Comma-separated delay values (template mode).
        #[arg(long, value_delimiter = ',')]
        tau: Option<Vec<f64>>,
        /// Worker count (default: DEGENBEAM_JOBS or available cores).
        #[arg(long)]
        jobs: Option<usize>,
        #[arg(long, default_value_t = 2000)]
        dim_cap: usize,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Manufactured-solution refinement study on the scenario coefficients.
    Mms {
        path: PathBuf,
        /// Number of refinement levels.
        #[arg(long, default_value_t = 3)]
        levels: usize,
    },
}

fn load(path: &PathBuf) -> Result<Scenario, i32> {
    Scenario::from_path(path).map_err(|e| {
        eprintln!("error: {e}");
        harness::exit_code(&e)
    })
}

fn emit(text: &str, output: Option<&PathBuf>) -> Result<(), i32> {
    match output {
        Some(p) => std::fs::write(p, text).map_err(|e| {
            eprintln!("error: cannot write {}: {e}", p.display());
            2
        }),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn dispatch(cmd: Cmd) -> Result<i32, i32> {
    let fail = |e: degenbeam::Error| {
        eprintln!("error: {e}");
        harness::exit_code(&e)
    };
    match cmd {
        Cmd::Validate { path, lenient } => {
            let scn = load(&path)?;
            let out = cli_validate(&scn, lenient).map_err(fail)?;
            print!("{}", out.stdout);
            Ok(out.code)
        }
        Cmd::Run {
            path,
            lenient,
            full_state,
            output,
        } => {
            let scn = load(&path)?;
            let art = cli_run(&scn, lenient, full_state).map_err(fail)?;
            emit(&art.csv, output.as_ref())?;
            if let (Some(states), Some(p)) = (art.states.as_ref(), output.as_ref()) {
                let mut sp = p.clone();
                sp.set_extension("states.csv");
                std::fs::write(&sp, states).map_err(|e| {
                    eprintln!("error: cannot write {}: {e}", sp.display());
                    2
                })?;
            }
            eprint!("{}", art.summary);
            Ok(0)
        }
        Cmd::Certify { path } => {
            let scn = load(&path)?;
            let out = cli_certify(&scn).map_err(fail)?;
            print!("{}", out.stdout);
            Ok(out.code)
        }
        Cmd::Spectrum {
            path,
            kd,
            tau,
            dim_cap,
            output,
        } => {
            let scn = load(&path)?;
            let csv = cli_spectrum(&scn, kd.as_deref(), tau.as_deref(), dim_cap).map_err(fail)?;
            emit(&csv, output.as_ref())?;
            Ok(0)
        }
        Cmd::Sweep {
            paths,
            kd,
            tau,
            jobs,
            dim_cap,
            output,
        } => {
            if paths.is_empty() {
                eprintln!("error: sweep needs at least one scenario path");
                return Err(2);
            }
            let grid = if paths.len() == 1 {
                let scn = load(&paths[0])?;
                expand_grid(&scn, kd.as_deref().unwrap_or(&[]), tau.as_deref().unwrap_or(&[]))
            } else {
                if kd.is_some() || tau.is_some() {
                    eprintln!("error: parameter ranges need a single template scenario");
                    return Err(2);
                }
                let mut grid = Vec::new();
                for p in &paths {
                    let label = p
                        .file_stem()
                        .map(|s| s.to_string_lossy().into_owned())
                        .unwrap_or_else(|| p.display().to_string());
                    grid.push((label, load(p)?));
                }
                grid.sort_by(|a, b| a.0.cmp(&b.0));
                grid
            };
            let jobs = jobs.unwrap_or_else(default_jobs);
            let csv = cli_sweep(&grid, jobs, dim_cap).map_err(fail)?;
            emit(&csv, output.as_ref())?;
            Ok(0)
        }
        Cmd::Mms { path, levels } => {
            let scn = load(&path)?;
            let out = cli_mms(&scn, levels).map_err(fail)?;
            print!("{out}");
            Ok(0)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli.cmd) {
        Ok(code) | Err(code) => ExitCode::from(code as u8),
    }
}
