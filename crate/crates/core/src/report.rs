//! Online orchestration and result files.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::cwh::{propagate_schedule, sample_trajectory};
use crate::planner::chain::{smooth_plan, SmoothingReport};
use crate::planner::fmt::SearchStats;
use crate::planner::{chain_waypoints, Plan, PlanError, PlanningContext, PrecomputedGraphData};
use crate::scenario::Scenario;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    Success,
    Failure,
}

/// Distance of the propagated end state from the final waypoint.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EndStateError {
    pub position_m: f64,
    pub velocity_mps: f64,
    pub within_tolerance: bool,
}

/// Deterministic summary of one online run. Wall-clock time is reported
/// separately so that identical inputs give identical reports.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub scenario: String,
    pub outcome: Outcome,
    pub message: Option<String>,
    pub failed_leg: Option<usize>,
    pub n_total: usize,
    pub j_bar_mps: f64,
    pub merge_mode: bool,
    pub strict_safety: bool,
    pub smoothing_enabled: bool,
    pub leg_costs_mps: Vec<f64>,
    pub unsmoothed_cost_mps: Option<f64>,
    pub total_cost_mps: Option<f64>,
    pub fuel_allocated_mps: Option<f64>,
    pub fuel_ratio: Option<f64>,
    pub burn_count: usize,
    pub all_burns_certified: bool,
    pub plan_duration_s: Option<f64>,
    pub end_state_error: Option<EndStateError>,
    pub smoothing: Option<SmoothingReport>,
    pub leg_stats: Vec<SearchStats>,
}

/// Result of [`run_online`].
#[derive(Clone, Debug)]
pub struct OnlineRun {
    pub report: RunReport,
    /// Final plan (smoothed when enabled) on success.
    pub plan: Option<Plan>,
    pub unsmoothed: Option<Plan>,
    pub online_seconds: f64,
}

impl OnlineRun {
    pub fn succeeded(&self) -> bool {
        self.report.outcome == Outcome::Success
    }
}

fn end_state_error(scenario: &Scenario, plan: &Plan) -> EndStateError {
    let model = scenario.model();
    let xf = propagate_schedule(&model, &plan.x_init, &plan.schedule, plan.t_final);
    let goal = scenario.goal_region(scenario.waypoints.len() - 1);
    let position_m = (xf.r - goal.center.r).norm();
    let velocity_mps = (xf.v - goal.center.v).norm();
    let within_tolerance = if goal.is_exact() {
        position_m <= 1e-8 && velocity_mps <= 1e-8
    } else {
        position_m <= goal.eps_r + 1e-8 && velocity_mps <= goal.eps_v + 1e-8
    };
    EndStateError {
        position_m,
        velocity_mps,
        within_tolerance,
    }
}

/// Plans (and optionally smooths) with already-loaded data; times only the
/// online phase.
pub fn run_online(scenario: &Scenario, data: &PrecomputedGraphData, smoothing: bool) -> OnlineRun {
    let start = Instant::now();
    let mut ctx = PlanningContext::from_scenario(scenario);
    ctx.j_bar = ctx.j_bar.min(data.j_bar);
    let x_init = scenario.initial_state();
    let result = chain_waypoints(&ctx, data, &x_init).and_then(|plan| {
        if smoothing {
            let (s, rep) = smooth_plan(
                &ctx,
                data,
                &plan,
                scenario.smoothing.scope,
                &scenario.smoothing_options(),
                scenario.planner.dv_max_mps,
            )?;
            Ok((Some(plan), s, Some(rep)))
        } else {
            Ok((None, plan, None))
        }
    });
    let online_seconds = start.elapsed().as_secs_f64();
    let n_total = data.legs.iter().map(|l| l.samples.n).sum();
    let mut report = RunReport {
        scenario: scenario.name.clone(),
        outcome: Outcome::Failure,
        message: None,
        failed_leg: None,
        n_total,
        j_bar_mps: ctx.j_bar,
        merge_mode: ctx.merge,
        strict_safety: ctx.strict,
        smoothing_enabled: smoothing,
        leg_costs_mps: Vec::new(),
        unsmoothed_cost_mps: None,
        total_cost_mps: None,
        fuel_allocated_mps: None,
        fuel_ratio: None,
        burn_count: 0,
        all_burns_certified: false,
        plan_duration_s: None,
        end_state_error: None,
        smoothing: None,
        leg_stats: Vec::new(),
    };
    match result {
        Ok((unsmoothed, plan, smoothing_report)) => {
            let base = unsmoothed.as_ref().unwrap_or(&plan);
            report.outcome = Outcome::Success;
            report.leg_costs_mps = base.legs.iter().map(|l| l.cost).collect();
            report.leg_stats = base.legs.iter().map(|l| l.stats).collect();
            report.unsmoothed_cost_mps = Some(base.cost);
            report.total_cost_mps = Some(plan.cost);
            report.fuel_allocated_mps = Some(plan.fuel);
            report.fuel_ratio = (plan.cost > 0.0).then(|| plan.fuel / plan.cost);
            report.burn_count = plan.burns.len();
            report.all_burns_certified = plan.all_burns_certified();
            report.plan_duration_s = Some(plan.t_final);
            report.end_state_error = Some(end_state_error(scenario, &plan));
            report.smoothing = smoothing_report;
            OnlineRun {
                report,
                plan: Some(plan),
                unsmoothed,
                online_seconds,
            }
        }
        Err(e) => {
            report.message = Some(e.to_string());
            if let PlanError::LegFailed { leg, stats } = &e {
                report.failed_leg = Some(*leg);
                report.leg_stats = vec![*stats];
            }
            OnlineRun {
                report,
                plan: None,
                unsmoothed: None,
                online_seconds,
            }
        }
    }
}

/// Trajectory sampled at `dt`: `t, dx, dy, dz, dvx_state, dvy_state, dvz_state`.
pub fn trajectory_csv(scenario: &Scenario, plan: &Plan) -> String {
    let mut out = String::from("t,dx,dy,dz,dvx_state,dvy_state,dvz_state\n");
    for (t, s) in sample_trajectory(&scenario.model(), &plan.x_init, &plan.schedule, plan.t_final, scenario.dt()) {
        let _ = writeln!(out, "{},{},{},{},{},{},{}", t, s.r.x, s.r.y, s.r.z, s.v.x, s.v.y, s.v.z);
    }
    out
}

/// Burns: `tau, dvx, dvy, dvz, norm, fuel_allocated`.
pub fn burns_csv(plan: &Plan) -> String {
    let mut out = String::from("tau,dvx,dvy,dvz,norm,fuel_allocated\n");
    for b in &plan.burns {
        let d = b.impulse.dv;
        let _ = writeln!(out, "{},{},{},{},{},{}", b.impulse.tau, d.x, d.y, d.z, d.norm(), b.allocation.fuel);
    }
    out
}

/// Abort plan per burn.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CamEntry {
    pub burn: usize,
    pub tau: f64,
    pub pre_state: [f64; 6],
    pub certificate: crate::safety::CamCertificate,
}

pub fn cam_json(plan: &Plan) -> String {
    let entries: Vec<CamEntry> = plan
        .burns
        .iter()
        .enumerate()
        .map(|(burn, b)| CamEntry {
            burn,
            tau: b.impulse.tau,
            pre_state: b.pre_state.to_array(),
            certificate: b.certificate.clone(),
        })
        .collect();
    serde_json::to_string_pretty(&entries).expect("certificates serialise")
}

pub fn report_json(report: &RunReport) -> String {
    serde_json::to_string_pretty(report).expect("report serialises")
}

/// Paths of the files written by [`write_outputs`].
pub fn output_paths(prefix: &Path) -> [PathBuf; 5] {
    let p = |ext: &str| {
        let mut s = prefix.as_os_str().to_owned();
        s.push(ext);
        PathBuf::from(s)
    };
    [
        p(".traj.csv"),
        p(".burns.csv"),
        p(".report.json"),
        p(".cam.json"),
        p(".timing.json"),
    ]
}

/// Writes the trajectory, burns, report, abort plans and timing files.
/// Only the report and timing files are written for a failed run.
pub fn write_outputs(scenario: &Scenario, run: &OnlineRun, prefix: &Path) -> std::io::Result<()> {
    let [traj, burns, report, cam, timing] = output_paths(prefix);
    if let Some(parent) = prefix.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent)?;
    }
    if let Some(plan) = &run.plan {
        std::fs::write(traj, trajectory_csv(scenario, plan))?;
        std::fs::write(burns, burns_csv(plan))?;
        std::fs::write(cam, cam_json(plan))?;
    }
    std::fs::write(report, report_json(&run.report))?;
    std::fs::write(
        timing,
        serde_json::to_string_pretty(&serde_json::json!({ "online_seconds": run.online_seconds }))
            .expect("timing serialises"),
    )?;
    Ok(())
}
