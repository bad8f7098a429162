//! Command-line front end and experiment harness.
//!
//! Every subcommand reads a JSON config, writes its result to `--out` or
//! stdout, and maps failures to an error JSON on stderr with exit code 2
//! (invalid input) or 3 (runtime failure).

pub mod experiment;
pub mod oracle_check;

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::fluid::{assemble_linear, fluid_trajectory, spectral_report};
use crate::model::{NetworkConfig, OccupancyVector};
use crate::relaxed::{solve_rp, RelaxedReport};
use crate::sim::{hitting_time_to, replication_seed, Initial, DEFAULT_HITTING_CAP};

pub use experiment::{
    emit_plot_data, run_experiment, ExperimentOutput, ExperimentRow, ExperimentSpec, InitialSpec,
    CSV_HEADER,
};
pub use oracle_check::{oracle_check, OracleReport};

pub const EXIT_OK: i32 = 0;
pub const EXIT_VALIDATION: i32 = 2;
pub const EXIT_RUNTIME: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "whittle-aoi", version, about = "Whittle index scheduling for age of information")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Solve the relaxed problem and print W*, theta*, thresholds and z*.
    SolveRp {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Simulate policies on one instance and write experiment CSV rows.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, value_delimiter = ',', default_value = "whittle")]
        policies: Vec<String>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 10_000)]
        horizon: u64,
        #[arg(long, default_value_t = 1)]
        replications: u32,
        #[arg(long)]
        epsilon: Option<f64>,
        /// Common starting age of every user.
        #[arg(long, default_value_t = 1)]
        initial_age: u32,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Time for the Whittle-policy occupancy to enter a ball around z*.
    HittingTime {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value_t = 0.05)]
        epsilon: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 10)]
        replications: u32,
        /// Slot cap per replication.
        #[arg(long, default_value_t = DEFAULT_HITTING_CAP)]
        horizon: u64,
        #[arg(long, default_value_t = 1)]
        initial_age: u32,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Iterate the fluid map and write `t,dist_to_zstar,in_region_flag` rows.
    Fluid {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value_t = 500)]
        horizon: u64,
        #[arg(long, default_value_t = 1)]
        initial_age: u32,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Spectral radius of the linear-region matrix.
    Spectral {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Compare closed forms with brute-force oracles.
    OracleCheck {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run an experiment spec; flags override the spec's fields.
    Experiment {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        horizon: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, value_delimiter = ',')]
        policies: Option<Vec<String>>,
        #[arg(long, value_delimiter = ',')]
        n_sweep: Option<Vec<usize>>,
        #[arg(long)]
        epsilon: Option<f64>,
        #[arg(long)]
        replications: Option<u32>,
    },
    /// Aggregate experiment CSV rows per (n, policy).
    PlotData {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Serialize)]
struct ErrorReport<'a> {
    error: &'a str,
    message: String,
}

#[derive(Serialize)]
struct HittingReport {
    n: usize,
    epsilon: f64,
    initial_age: u32,
    cap: u64,
    times: Vec<Option<u64>>,
    hits: usize,
    mean: Option<f64>,
    se: Option<f64>,
}

fn emit(out: &Option<PathBuf>, text: &str, stdout: &mut dyn Write) -> Result<()> {
    match out {
        Some(path) => std::fs::write(path, text)?,
        None => stdout.write_all(text.as_bytes())?,
    }
    Ok(())
}

fn json<T: Serialize>(value: &T) -> Result<String> {
    Ok(serde_json::to_string_pretty(value)? + "\n")
}

fn load(path: &Path) -> Result<NetworkConfig> {
    NetworkConfig::from_json_file(path)
}

/// Executes one parsed command.
pub fn execute(command: Command, stdout: &mut dyn Write) -> Result<()> {
    match command {
        Command::SolveRp { config, out } => {
            let sol = solve_rp(&load(&config)?)?;
            emit(&out, &json(&RelaxedReport::from(&sol))?, stdout)
        }
        Command::Simulate {
            config,
            policies,
            seed,
            horizon,
            replications,
            epsilon,
            initial_age,
            out,
        } => {
            let base = load(&config)?;
            let spec = ExperimentSpec {
                n_sweep: vec![base.n],
                base,
                policies,
                replications,
                horizon,
                master_seed: seed,
                epsilon,
                initial: InitialSpec::AllAt(initial_age),
                out: None,
            };
            let result = run_experiment(&spec)?;
            emit(&out, &experiment::rows_to_csv(&result.rows)?, stdout)
        }
        Command::HittingTime {
            config,
            epsilon,
            seed,
            replications,
            horizon,
            initial_age,
            out,
        } => {
            let cfg = load(&config)?;
            let sol = solve_rp(&cfg)?;
            let initial = Initial::AllAt(initial_age);
            initial.ages(&cfg)?;
            let times = (0..replications as u64)
                .into_par_iter()
                .map(|r| hitting_time_to(&cfg, &sol.z_star, &initial, epsilon, replication_seed(seed, r), horizon))
                .collect::<Result<Vec<_>>>()?;
            let hit: Vec<f64> = times.iter().flatten().map(|&t| t as f64).collect();
            let stats = (!hit.is_empty()).then(|| experiment::mean_se(&hit));
            let report = HittingReport {
                n: cfg.n,
                epsilon,
                initial_age,
                cap: horizon,
                hits: hit.len(),
                mean: stats.map(|s| s.0),
                se: stats.map(|s| s.1),
                times,
            };
            emit(&out, &json(&report)?, stdout)
        }
        Command::Fluid {
            config,
            horizon,
            initial_age,
            out,
        } => {
            let cfg = load(&config)?;
            let sol = solve_rp(&cfg)?;
            if initial_age == 0 || initial_age as usize > cfg.l {
                return Err(Error::Range(format!("initial age {initial_age} not in 1..={}", cfg.l)));
            }
            let z0: OccupancyVector = OccupancyVector::concentrated(&cfg, initial_age as usize);
            let tr = fluid_trajectory(&z0, horizon as usize, &cfg, &sol);
            let mut text = String::from("t,dist_to_zstar,in_region_flag\n");
            for p in &tr.points {
                text.push_str(&format!("{},{},{}\n", p.t, p.dist_to_zstar, u8::from(p.in_region)));
            }
            emit(&out, &text, stdout)
        }
        Command::Spectral { config, out } => {
            let cfg = load(&config)?;
            let sol = solve_rp(&cfg)?;
            let report = spectral_report(&assemble_linear(&cfg, &sol)?)?;
            emit(&out, &json(&report)?, stdout)
        }
        Command::OracleCheck { config, out } => {
            let report = oracle_check(&load(&config)?)?;
            emit(&out, &json(&report)?, stdout)?;
            if report.passed {
                Ok(())
            } else {
                Err(Error::Convergence("one or more oracle checks failed".into()))
            }
        }
        Command::Experiment {
            config,
            seed,
            horizon,
            out,
            policies,
            n_sweep,
            epsilon,
            replications,
        } => {
            let mut spec = ExperimentSpec::from_json_file(&config)?;
            if let Some(v) = seed {
                spec.master_seed = v;
            }
            if let Some(v) = horizon {
                spec.horizon = v;
            }
            if let Some(v) = policies {
                spec.policies = v;
            }
            if let Some(v) = n_sweep {
                spec.n_sweep = v;
            }
            if let Some(v) = epsilon {
                spec.epsilon = Some(v);
            }
            if let Some(v) = replications {
                spec.replications = v;
            }
            if out.is_some() {
                spec.out = out;
            }
            let result = run_experiment(&spec)?;
            if spec.out.is_none() {
                stdout.write_all(experiment::rows_to_csv(&result.rows)?.as_bytes())?;
            }
            Ok(())
        }
        Command::PlotData { input, out } => {
            emit_plot_data(input, out)?;
            Ok(())
        }
    }
}

/// Parses arguments, runs the command and returns the process exit code.
pub fn run<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = write!(stderr, "{e}");
            return if e.use_stderr() { EXIT_VALIDATION } else { EXIT_OK };
        }
    };
    match execute(cli.command, stdout) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            let report = ErrorReport {
                error: e.kind(),
                message: e.to_string(),
            };
            let _ = writeln!(
                stderr,
                "{}",
                serde_json::to_string(&report).unwrap_or_else(|_| e.to_string())
            );
            if e.is_validation() {
                EXIT_VALIDATION
            } else {
                EXIT_RUNTIME
            }
        }
    }
}
