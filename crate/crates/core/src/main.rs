use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use cwhfmt::bench::{bench_csv, run_bench, SweepSpec};
use cwhfmt::planner::data::{DataError, PrecomputeError};
use cwhfmt::planner::{precompute, PrecomputedGraphData};
use cwhfmt::report::{run_online, write_outputs};
use cwhfmt::scenario::{Scenario, ScenarioError};

const EXIT_IO: u8 = 1;
const EXIT_INVALID: u8 = 2;
const EXIT_SAMPLING: u8 = 3;
const EXIT_PLAN_FAILED: u8 = 4;

/// Fuel-optimal, actively-safe rendezvous planning under CWH dynamics.
///
/// The environment variable CWHFMT_THREADS caps the worker pool.
#[derive(Parser, Debug)]
#[command(name = "cwhfmt", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Build samples, neighbour sets and certificates for every leg.
    Precompute {
        /// Scenario TOML file.
        #[arg(long)]
        scenario: PathBuf,
        /// Output binary data file.
        #[arg(long)]
        out: PathBuf,
        /// Also write the JSON twin of the data file here.
        #[arg(long)]
        json: Option<PathBuf>,
    },
    /// Plan online from precomputed data and write the result files.
    Plan {
        /// Scenario TOML file.
        #[arg(long)]
        scenario: PathBuf,
        /// Binary data file produced by `precompute` for this scenario.
        #[arg(long)]
        data: PathBuf,
        /// Skip trajectory smoothing.
        #[arg(long)]
        no_smooth: bool,
        /// Certify every sampled point of every edge.
        #[arg(long)]
        strict_safety: bool,
        /// Output prefix; writes PREFIX.traj.csv, PREFIX.burns.csv,
        /// PREFIX.report.json, PREFIX.cam.json and PREFIX.timing.json.
        #[arg(long)]
        out: PathBuf,
    },
    /// Sweep sample count and cost threshold, writing a tidy CSV.
    Bench {
        /// Scenario TOML file.
        #[arg(long)]
        scenario: PathBuf,
        /// Sweep terms such as `n=650:2000:9 jbar=0.2:0.4:5`; `n` counts
        /// samples over all legs.
        #[arg(long, num_args = 1..)]
        sweep: Vec<String>,
        /// Output CSV file.
        #[arg(long)]
        out: PathBuf,
    },
}

fn fail(code: u8, msg: impl std::fmt::Display) -> ExitCode {
    eprintln!("error: {msg}");
    ExitCode::from(code)
}

fn load_scenario(path: &PathBuf) -> Result<Scenario, ExitCode> {
    Scenario::from_path(path).map_err(|e| match e {
        ScenarioError::Io(_) => fail(EXIT_IO, e),
        _ => fail(EXIT_INVALID, e),
    })
}

fn precompute_exit(e: PrecomputeError) -> ExitCode {
    match e {
        PrecomputeError::Sampling { .. } => fail(EXIT_SAMPLING, e),
    }
}

fn configure_threads() {
    if let Some(n) = std::env::var("CWHFMT_THREADS").ok().and_then(|v| v.parse::<usize>().ok()) {
        if n > 0 {
            let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
        }
    }
}

fn run(cli: Cli) -> Result<(), ExitCode> {
    match cli.command {
        Command::Precompute { scenario, out, json } => {
            let sc = load_scenario(&scenario)?;
            let data = precompute(&sc).map_err(precompute_exit)?;
            data.save(&out).map_err(|e| fail(EXIT_IO, e))?;
            if let Some(j) = json {
                std::fs::write(&j, data.to_json()).map_err(|e| fail(EXIT_IO, e))?;
            }
            let s = data.summary();
            println!(
                "legs {} samples {} edges {} certified_safe {}",
                s.legs, s.samples, s.edges, s.certified_safe
            );
            Ok(())
        }
        Command::Plan {
            scenario,
            data,
            no_smooth,
            strict_safety,
            out,
        } => {
            let mut sc = load_scenario(&scenario)?;
            let d = PrecomputedGraphData::load_for(&data, &sc).map_err(|e| match e {
                DataError::Io(_) => fail(EXIT_IO, e),
                _ => fail(EXIT_INVALID, e),
            })?;
            if strict_safety {
                sc.planner.strict_safety = true;
            }
            let smoothing = sc.smoothing.enabled && !no_smooth;
            let run = run_online(&sc, &d, smoothing);
            write_outputs(&sc, &run, &out).map_err(|e| fail(EXIT_IO, e))?;
            if !run.succeeded() {
                return Err(fail(
                    EXIT_PLAN_FAILED,
                    run.report.message.as_deref().unwrap_or("planner failure"),
                ));
            }
            println!(
                "total_cost_mps {} online_seconds {:.3}",
                run.report.total_cost_mps.unwrap_or(f64::NAN),
                run.online_seconds
            );
            Ok(())
        }
        Command::Bench { scenario, sweep, out } => {
            let sc = load_scenario(&scenario)?;
            let spec = SweepSpec::parse(&sweep, &sc).map_err(|e| fail(EXIT_INVALID, e))?;
            let rows = run_bench(&sc, &spec).map_err(precompute_exit)?;
            std::fs::write(&out, bench_csv(&rows)).map_err(|e| fail(EXIT_IO, e))?;
            let ok = rows.iter().filter(|r| r.cost.is_some()).count();
            println!("cells {} successful rows {} of {}", rows.len() / 2, ok, rows.len());
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    configure_threads();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(code) => code,
    }
}
