//! Cost versus run-time sweeps over the sample count and cost threshold.
//!
//! The data is precomputed once at the largest sample count and threshold.
//! Halton sample sets are prefix-stable, so every sweep cell uses an exact
//! subset of it.

use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::planner::data::PrecomputeError;
use crate::planner::precompute;
use crate::report::{run_online, Outcome};
use crate::scenario::Scenario;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SweepError {
    #[error("invalid sweep `{0}`: expected name=start:stop:count")]
    Syntax(String),
    #[error("unknown sweep variable `{0}` (expected n or jbar)")]
    UnknownVariable(String),
    #[error("invalid sweep range for `{0}`")]
    Range(String),
}

/// Grid of total sample counts and thresholds.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepSpec {
    pub n_total: Vec<usize>,
    pub j_bar: Vec<f64>,
}

fn linspace(start: f64, stop: f64, count: usize) -> Vec<f64> {
    if count == 1 {
        return vec![start];
    }
    // Rounded to 12 significant digits so that grid values print cleanly.
    (0..count)
        .map(|k| {
            let v = start + (stop - start) * k as f64 / (count - 1) as f64;
            format!("{v:.11e}").parse().expect("formatted float parses")
        })
        .collect()
}

impl SweepSpec {
    /// Parses terms such as `n=650:2000:9` and `jbar=0.2:0.4:5`. A missing
    /// variable takes its scenario value.
    pub fn parse(terms: &[String], scenario: &Scenario) -> Result<Self, SweepError> {
        let mut spec = SweepSpec {
            n_total: vec![scenario.planner.n_per_leg * scenario.waypoints.len()],
            j_bar: vec![scenario.planner.j_bar_mps],
        };
        for term in terms {
            let (name, range) = term.split_once('=').ok_or_else(|| SweepError::Syntax(term.clone()))?;
            let parts: Vec<&str> = range.split(':').collect();
            let values = match parts.as_slice() {
                [v] => {
                    let v: f64 = v.parse().map_err(|_| SweepError::Syntax(term.clone()))?;
                    vec![v]
                }
                [a, b, c] => {
                    let a: f64 = a.parse().map_err(|_| SweepError::Syntax(term.clone()))?;
                    let b: f64 = b.parse().map_err(|_| SweepError::Syntax(term.clone()))?;
                    let c: usize = c.parse().map_err(|_| SweepError::Syntax(term.clone()))?;
                    if c == 0 || !(a > 0.0 && b >= a) {
                        return Err(SweepError::Range(term.clone()));
                    }
                    linspace(a, b, c)
                }
                _ => return Err(SweepError::Syntax(term.clone())),
            };
            match name {
                "n" => spec.n_total = values.iter().map(|v| v.round() as usize).collect(),
                "jbar" | "j_bar" => spec.j_bar = values,
                other => return Err(SweepError::UnknownVariable(other.to_string())),
            }
        }
        if spec.n_total.iter().any(|&n| n < scenario.waypoints.len()) || spec.j_bar.iter().any(|&j| !(j > 0.0)) {
            return Err(SweepError::Range(format!("{terms:?}")));
        }
        Ok(spec)
    }
}

/// One CSV row.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchRow {
    pub n: usize,
    pub j_bar: f64,
    pub smoothed: bool,
    pub cost: Option<f64>,
    pub online_seconds: f64,
    pub outcome: Outcome,
}

/// Scenario of one sweep cell. The velocity margin of the base scenario is
/// kept fixed so that every cell samples the same space.
pub fn cell_scenario(base: &Scenario, n_total: usize, j_bar: f64) -> Scenario {
    let mut s = base.clone();
    s.sampling.velocity_margin_mps = Some(base.velocity_margin());
    s.planner.n_per_leg = (n_total / base.waypoints.len()).max(1);
    s.planner.j_bar_mps = j_bar;
    s
}

pub fn run_bench(scenario: &Scenario, sweep: &SweepSpec) -> Result<Vec<BenchRow>, PrecomputeError> {
    let n_max = *sweep.n_total.iter().max().expect("non-empty sweep");
    let j_max = sweep.j_bar.iter().copied().fold(0.0, f64::max);
    let full = precompute(&cell_scenario(scenario, n_max, j_max))?;
    let cells: Vec<(usize, f64)> = sweep
        .n_total
        .iter()
        .flat_map(|&n| sweep.j_bar.iter().map(move |&j| (n, j)))
        .collect();
    let rows: Vec<Vec<BenchRow>> = cells
        .par_iter()
        .map(|&(n, j)| {
            let cell = cell_scenario(scenario, n, j);
            let data = full.restricted(cell.planner.n_per_leg, cell.n_goal(), j);
            [false, true]
                .iter()
                .map(|&smoothed| {
                    let run = run_online(&cell, &data, smoothed);
                    BenchRow {
                        n,
                        j_bar: j,
                        smoothed,
                        cost: run.report.total_cost_mps,
                        online_seconds: run.online_seconds,
                        outcome: run.report.outcome,
                    }
                })
                .collect()
        })
        .collect();
    Ok(rows.into_iter().flatten().collect())
}

pub fn bench_csv(rows: &[BenchRow]) -> String {
    let mut out = String::from("n,j_bar,smoothed,cost,online_seconds,outcome\n");
    for r in rows {
        let cost = r.cost.map(|c| c.to_string()).unwrap_or_default();
        let outcome = match r.outcome {
            Outcome::Success => "success",
            Outcome::Failure => "failure",
        };
        let _ = writeln!(out, "{},{},{},{},{},{}", r.n, r.j_bar, r.smoothed, cost, r.online_seconds, outcome);
    }
    out
}
