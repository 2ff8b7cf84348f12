//! Fast Marching Tree over precomputed leg data.

use std::cmp::Reverse;
use std::collections::BinaryHeap;

use nalgebra::Vector3;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::allocation::Chaser;
use crate::cwh::{sample_trajectory, BurnSchedule, Impulse, OrbitModel, State};
use crate::geometry::{Environment, TargetSphere};
use crate::reach::{forward_row, Edge};
use crate::safety::SafetyContext;
use crate::scenario::Scenario;
use crate::steering::{Steerer, SteeringSolution};

use super::data::LegData;

/// Everything the online phase needs besides the precomputed data.
#[derive(Clone, Debug)]
pub struct PlanningContext {
    pub model: OrbitModel,
    /// Obstacles without state bounds.
    pub env: Environment,
    pub safety: SafetyContext,
    pub chaser: Chaser,
    pub target: TargetSphere,
    pub steerer: Steerer,
    pub dt: f64,
    pub j_bar: f64,
    /// Cost-to-come accounts for merging arrival and departure burns.
    pub merge: bool,
    /// Certify every `dt` point of every edge, not just the burn states.
    pub strict: bool,
    pub prune: bool,
}

impl PlanningContext {
    pub fn from_scenario(s: &Scenario) -> Self {
        let model = s.model();
        Self {
            model,
            env: s.environment(),
            safety: s.safety_context(),
            chaser: s.chaser(),
            target: s.target(),
            steerer: Steerer::new(model, s.steering_limits()).expect("validated steering limits"),
            dt: s.dt(),
            j_bar: s.planner.j_bar_mps,
            merge: s.planner.merge_mode,
            strict: s.planner.strict_safety,
            prune: s.planner.prune,
        }
    }

    /// Nominal allocation and plume check of a burn at pre-burn state `x`.
    pub fn burn_ok(&self, x: &State, dv: &Vector3<f64>) -> bool {
        self.chaser.nominal_burn(x, dv, &self.target).is_ok()
    }

    /// Safety of the state just before an arrival burn `dv` that ends at
    /// the certified sample `arrived`.
    pub fn arrival_ok(&self, arrived: &State, dv: &Vector3<f64>) -> bool {
        *dv == Vector3::zeros()
            || self.safety.prefix_safe(&arrived.r, dv)
            || self.safety.certify(&arrived.with_impulse(&-dv)).safe
    }

    /// Every sampled point of the scheduled arc is certified safe.
    pub fn arc_certified(&self, x0: &State, schedule: &BurnSchedule, t_end: f64) -> bool {
        sample_trajectory(&self.model, x0, schedule, t_end, self.dt)
            .par_iter()
            .all(|(_, s)| self.safety.certify(s).safe)
    }
}

/// Search counters.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SearchStats {
    pub samples: usize,
    pub root_neighbors: usize,
    pub expansions: usize,
    pub edges_checked: usize,
    pub edges_rejected: usize,
    pub nodes_connected: usize,
}

/// One edge of a leg solution.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PathStep {
    pub from: State,
    pub to: State,
    /// Sample index of `to` within the leg.
    pub to_index: usize,
    pub sol: SteeringSolution,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LegPlan {
    pub steps: Vec<PathStep>,
    /// Cost-to-come of the goal node minus that of the root.
    pub cost: f64,
    pub final_state: State,
    /// Arrival burn at the final state (zero for an empty leg).
    pub arrival_dv: Vector3<f64>,
    pub stats: SearchStats,
}

#[derive(Debug, Error, Clone, PartialEq)]
#[error("frontier exhausted before reaching the goal region")]
pub struct LegFailure {
    pub stats: SearchStats,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Tag {
    Unvisited,
    Pending,
    Frontier,
    Interior,
    Rejected,
}

/// Heap key ordered by cost, then by index.
#[derive(Clone, Copy, Debug, PartialEq)]
struct Key(f64, usize);

impl Eq for Key {}

impl PartialOrd for Key {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Key {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.0.total_cmp(&other.0).then(self.1.cmp(&other.1))
    }
}

/// Runs FMT* on one leg from `root`, whose pending arrival burn is
/// `root_dv_in` (zero at the start of the mission).
pub fn fmt_plan(ctx: &PlanningContext, leg: &LegData, root: &State, root_dv_in: &Vector3<f64>) -> Result<LegPlan, LegFailure> {
    let samples = &leg.samples.states;
    let n = samples.len();
    let r = n;
    let mut stats = SearchStats {
        samples: n,
        ..Default::default()
    };
    let env = ctx.env.with_bounds(Some(leg.bounds));
    let goal = &leg.goal;
    let is_goal = |i: usize| -> bool {
        if goal.is_exact() {
            samples[i] == goal.center
        } else {
            leg.samples.is_goal(i) || goal.contains(&samples[i])
        }
    };
    let root_is_goal = if goal.is_exact() { *root == goal.center } else { goal.contains(root) };
    if root_is_goal {
        return Ok(LegPlan {
            steps: Vec::new(),
            cost: 0.0,
            final_state: *root,
            arrival_dv: *root_dv_in,
            stats,
        });
    }

    let root_row = forward_row(&ctx.steerer, root, samples, ctx.j_bar, ctx.prune, None);
    stats.root_neighbors = root_row.len();
    let mut root_to: Vec<Option<usize>> = vec![None; n];
    for (k, e) in root_row.iter().enumerate() {
        root_to[e.to] = Some(k);
    }
    let state = |i: usize| if i == r { root } else { &samples[i] };
    let fwd = |i: usize| -> &[Edge] {
        if i == r {
            &root_row
        } else {
            &leg.neighbors.fwd[i]
        }
    };

    let mut tag = vec![Tag::Unvisited; n + 1];
    let mut cost = vec![f64::INFINITY; n + 1];
    let mut parent: Vec<Option<(usize, SteeringSolution)>> = vec![None; n + 1];
    let mut arrival = vec![Vector3::zeros(); n + 1];
    arrival[r] = if ctx.merge { *root_dv_in } else { Vector3::zeros() };
    cost[r] = arrival[r].norm();
    tag[r] = Tag::Frontier;
    let mut heap = BinaryHeap::new();

    let edge_cost = |y: usize, sol: &SteeringSolution, cost: &[f64], arrival: &[Vector3<f64>]| -> f64 {
        if ctx.merge {
            cost[y] - arrival[y].norm() + (arrival[y] + sol.dv1).norm() + sol.dv2.norm()
        } else {
            cost[y] + sol.cost
        }
    };

    let mut z = r;
    loop {
        if z != r && is_goal(z) {
            break;
        }
        stats.expansions += 1;
        let mut added = Vec::new();
        for e in fwd(z) {
            let x = e.to;
            if tag[x] != Tag::Unvisited {
                continue;
            }
            let mut best: Option<(f64, usize, SteeringSolution)> = None;
            let mut consider = |y: usize, sol: &SteeringSolution| {
                let c = edge_cost(y, sol, &cost, &arrival);
                if best.map_or(true, |(bc, by, _)| c < bc || (c == bc && y < by)) {
                    best = Some((c, y, *sol));
                }
            };
            for &(y, k) in &leg.neighbors.bwd[x] {
                if tag[y] == Tag::Frontier {
                    consider(y, &leg.neighbors.fwd[y][k].sol);
                }
            }
            if tag[r] == Tag::Frontier {
                if let Some(k) = root_to[x] {
                    consider(r, &root_row[k].sol);
                }
            }
            let Some((c, y, sol)) = best else {
                continue;
            };
            stats.edges_checked += 1;
            if edge_feasible(ctx, &env, state(y), &arrival[y], &sol, &samples[x]) {
                cost[x] = c;
                parent[x] = Some((y, sol));
                arrival[x] = sol.dv2;
                tag[x] = Tag::Pending;
                added.push(x);
            } else {
                stats.edges_rejected += 1;
                tag[x] = Tag::Rejected;
            }
        }
        tag[z] = Tag::Interior;
        stats.nodes_connected += added.len();
        for x in added {
            tag[x] = Tag::Frontier;
            heap.push(Reverse(Key(cost[x], x)));
        }
        z = loop {
            match heap.pop() {
                Some(Reverse(Key(_, i))) if tag[i] == Tag::Frontier => break i,
                Some(_) => continue,
                None => return Err(LegFailure { stats }),
            }
        };
    }

    let mut steps = Vec::new();
    let mut cur = z;
    while let Some((p, sol)) = parent[cur] {
        steps.push(PathStep {
            from: *state(p),
            to: samples[cur],
            to_index: cur,
            sol,
        });
        cur = p;
    }
    steps.reverse();
    Ok(LegPlan {
        steps,
        cost: cost[z] - cost[r],
        final_state: samples[z],
        arrival_dv: arrival[z],
        stats,
    })
}

/// Lazy feasibility check of the edge `y -> x` leaving `y` with pending
/// arrival burn `arrival_y`.
fn edge_feasible(
    ctx: &PlanningContext,
    env: &Environment,
    y: &State,
    arrival_y: &Vector3<f64>,
    sol: &SteeringSolution,
    x: &State,
) -> bool {
    let sched = BurnSchedule::from_impulses(vec![Impulse::new(sol.dv1, 0.0), Impulse::new(sol.dv2, sol.duration)]);
    if !env.trajectory_feasible(&ctx.model, y, &sched, sol.duration, ctx.dt) {
        return false;
    }
    let departure_ok = if ctx.merge {
        ctx.burn_ok(&y.with_impulse(&-arrival_y), &(arrival_y + sol.dv1))
    } else {
        ctx.burn_ok(y, &sol.dv1)
    };
    if !departure_ok {
        return false;
    }
    let x_pre = x.with_impulse(&-sol.dv2);
    if !ctx.burn_ok(&x_pre, &sol.dv2) || !ctx.arrival_ok(x, &sol.dv2) {
        return false;
    }
    !ctx.strict || ctx.arc_certified(y, &sched, sol.duration)
}
