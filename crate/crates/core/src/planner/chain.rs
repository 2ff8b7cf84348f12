//! Multi-waypoint chaining, burn merging, plan assembly and smoothing.

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::allocation::AllocationResult;
use crate::cwh::{propagate_schedule, sample_trajectory, BurnSchedule, Impulse, State};
use crate::geometry::StateSpaceBox;
use crate::safety::CamCertificate;
use crate::scenario::SmoothingScope;
use crate::smoothing::{smooth, SmoothingError, SmoothingOptions, SmoothingOutcome};

use super::data::PrecomputedGraphData;
use super::fmt::{fmt_plan, LegPlan, PlanningContext, SearchStats};

/// Net impulse of two burns at the same instant.
pub fn merge_junction(dv_in: &Impulse, dv_out: &Impulse) -> Impulse {
    assert_eq!(dv_in.tau, dv_out.tau, "merged burns must be simultaneous");
    Impulse::new(dv_in.dv + dv_out.dv, dv_in.tau)
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PlanError {
    #[error("initial state is infeasible or not certified safe")]
    UnsafeInitialState,
    #[error("leg {leg}: frontier exhausted before reaching the goal region")]
    LegFailed { leg: usize, stats: SearchStats },
    #[error("planned burn {index} cannot be executed: {reason}")]
    BurnRejected { index: usize, reason: String },
}

/// One executed burn with its allocation and abort plan.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BurnRecord {
    pub impulse: Impulse,
    pub pre_state: State,
    pub allocation: AllocationResult,
    pub certificate: CamCertificate,
    /// Sample reached by the arrival part of this burn, if any.
    pub arrives_at: Option<State>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Plan {
    pub x_init: State,
    pub final_state: State,
    pub legs: Vec<LegPlan>,
    /// Start time of every leg, plus the end time.
    pub leg_times: Vec<f64>,
    pub schedule: BurnSchedule,
    pub t_final: f64,
    pub burns: Vec<BurnRecord>,
    pub cost: f64,
    pub fuel: f64,
}

impl Plan {
    pub fn all_burns_certified(&self) -> bool {
        self.burns.iter().all(|b| b.certificate.safe)
    }
}

/// Raw burn before merging, tagged with the sample it arrives at.
#[derive(Clone, Copy, Debug)]
struct RawBurn {
    impulse: Impulse,
    /// `Some(sample)` for an arrival burn ending at `sample`.
    arrives_at: Option<State>,
}

/// Certificate of a burn at `pre` with impulse `dv`. The direct abort plan
/// from `pre` is tried first; otherwise the portion `prefix` of the burn is
/// executed as part of the abort, after which the certified state `anchor`
/// is reached.
pub fn burn_certificate(ctx: &PlanningContext, pre: &State, prefix: &Vector3<f64>, anchor: &State) -> CamCertificate {
    let direct = ctx.safety.certify(pre);
    if direct.safe {
        return direct;
    }
    let base = ctx.safety.certify(anchor);
    if !base.safe {
        return direct;
    }
    let with_prefix = ctx.safety.certify_with_prefix(&anchor.r, prefix, &base);
    if with_prefix.safe {
        with_prefix
    } else {
        direct
    }
}

fn assemble_burns(ctx: &PlanningContext, x_init: &State, raw: &[RawBurn]) -> Result<Vec<BurnRecord>, PlanError> {
    let schedule = BurnSchedule::from_impulses(raw.iter().map(|b| b.impulse).collect());
    let mut out = Vec::with_capacity(raw.len());
    let mut x = *x_init;
    let mut t = 0.0;
    let mut applied = 0;
    for (index, b) in raw.iter().enumerate() {
        if b.impulse.tau > t {
            // Coast from the last burn to this one.
            x = propagate_schedule(&ctx.model, &x, &BurnSchedule::new(), b.impulse.tau - t);
            t = b.impulse.tau;
        }
        let pre = x;
        let allocation = ctx
            .chaser
            .nominal_burn(&pre, &b.impulse.dv, &ctx.target)
            .map_err(|e| PlanError::BurnRejected {
                index,
                reason: e.to_string(),
            })?;
        let post = pre.with_impulse(&b.impulse.dv);
        let (prefix, anchor) = match b.arrives_at {
            Some(s) => (s.v - pre.v, s),
            None => (b.impulse.dv, post),
        };
        let certificate = burn_certificate(ctx, &pre, &prefix, &anchor);
        out.push(BurnRecord {
            impulse: b.impulse,
            pre_state: pre,
            allocation,
            certificate,
            arrives_at: b.arrives_at,
        });
        x = post;
        applied += 1;
    }
    debug_assert_eq!(applied, schedule.len());
    Ok(out)
}

fn finish_plan(
    ctx: &PlanningContext,
    x_init: &State,
    legs: Vec<LegPlan>,
    leg_times: Vec<f64>,
    raw: Vec<RawBurn>,
) -> Result<Plan, PlanError> {
    let burns = assemble_burns(ctx, x_init, &raw)?;
    let schedule = BurnSchedule::from_impulses(raw.iter().map(|b| b.impulse).collect());
    let t_final = *leg_times.last().unwrap_or(&0.0);
    let final_state = legs.last().map_or(*x_init, |l| l.final_state);
    Ok(Plan {
        x_init: *x_init,
        final_state,
        legs,
        leg_times,
        cost: schedule.cost(),
        fuel: burns.iter().map(|b| b.allocation.fuel).sum(),
        schedule,
        t_final,
        burns,
    })
}

/// Plans every leg in sequence and assembles the burn schedule.
pub fn chain_waypoints(ctx: &PlanningContext, data: &PrecomputedGraphData, x_init: &State) -> Result<Plan, PlanError> {
    if !ctx.env.point_feasible(x_init) || !ctx.safety.certify(x_init).safe {
        return Err(PlanError::UnsafeInitialState);
    }
    let mut legs = Vec::with_capacity(data.legs.len());
    let mut leg_times = vec![0.0];
    let mut root = *x_init;
    let mut root_dv_in = Vector3::zeros();
    let mut t = 0.0;
    // (arrival burn, sample it ends at) pending merge with the next departure.
    let mut pending: Option<(Impulse, State)> = None;
    let mut raw: Vec<RawBurn> = Vec::new();
    let push = |raw: &mut Vec<RawBurn>, b: RawBurn| {
        if b.impulse.dv != Vector3::zeros() {
            raw.push(b);
        }
    };
    for (i, leg) in data.legs.iter().enumerate() {
        let lp = fmt_plan(ctx, leg, &root, &root_dv_in).map_err(|f| PlanError::LegFailed { leg: i, stats: f.stats })?;
        for step in &lp.steps {
            let dep = Impulse::new(step.sol.dv1, t);
            match pending.take() {
                Some((arr, at)) if ctx.merge => push(
                    &mut raw,
                    RawBurn {
                        impulse: merge_junction(&arr, &dep),
                        arrives_at: Some(at),
                    },
                ),
                Some((arr, at)) => {
                    push(
                        &mut raw,
                        RawBurn {
                            impulse: arr,
                            arrives_at: Some(at),
                        },
                    );
                    push(&mut raw, RawBurn { impulse: dep, arrives_at: None });
                }
                None => push(&mut raw, RawBurn { impulse: dep, arrives_at: None }),
            }
            t += step.sol.duration;
            pending = Some((Impulse::new(step.sol.dv2, t), step.to));
        }
        root = lp.final_state;
        root_dv_in = lp.arrival_dv;
        legs.push(lp);
        leg_times.push(t);
    }
    if let Some((arr, at)) = pending {
        push(
            &mut raw,
            RawBurn {
                impulse: arr,
                arrives_at: Some(at),
            },
        );
    }
    finish_plan(ctx, x_init, legs, leg_times, raw)
}

/// True when the position/velocity lies in at least one of `boxes`.
fn in_any(boxes: &[StateSpaceBox], x: &State) -> bool {
    boxes.iter().any(|b| b.contains(x))
}

/// Feasibility of a candidate schedule from `x0` over `[0, t_end]`:
/// obstacles and leg bounds at every sampled point, nominal allocation and
/// plume at every burn, and certified burn states.
pub fn schedule_feasible(
    ctx: &PlanningContext,
    boxes: &[StateSpaceBox],
    x0: &State,
    schedule: &BurnSchedule,
    t_end: f64,
) -> bool {
    let pts = sample_trajectory(&ctx.model, x0, schedule, t_end, ctx.dt);
    if pts.iter().any(|(_, s)| ctx.env.collides(&s.r) || !in_any(boxes, s)) {
        return false;
    }
    let mut x = *x0;
    let mut t = 0.0;
    for imp in schedule.impulses() {
        if imp.tau > t {
            x = propagate_schedule(&ctx.model, &x, &BurnSchedule::new(), imp.tau - t);
            t = imp.tau;
        }
        if !ctx.burn_ok(&x, &imp.dv) {
            return false;
        }
        let post = x.with_impulse(&imp.dv);
        if !burn_certificate(ctx, &x, &imp.dv, &post).safe {
            return false;
        }
        x = post;
    }
    !ctx.strict || ctx.arc_certified(x0, schedule, t_end)
}

/// Shifts every impulse time by `-offset`.
fn shifted(schedule: &BurnSchedule, offset: f64) -> BurnSchedule {
    BurnSchedule::from_impulses(schedule.impulses().iter().map(|i| Impulse::new(i.dv, i.tau - offset)).collect())
}

/// Smoothing summary per smoothed segment.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SmoothingReport {
    pub segments: Vec<SegmentReport>,
    pub cost_before: f64,
    pub cost_after: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SegmentReport {
    pub t_start: f64,
    pub t_end: f64,
    pub alpha: f64,
    pub evaluations: usize,
    pub optimum_cost: f64,
    pub optimum_bound: f64,
    /// Set when the fixed-time problem failed and the segment was left
    /// unchanged.
    pub error: Option<String>,
}

/// Applies trajectory smoothing to `plan` and re-assembles its burns.
pub fn smooth_plan(
    ctx: &PlanningContext,
    data: &PrecomputedGraphData,
    plan: &Plan,
    scope: SmoothingScope,
    opts: &SmoothingOptions,
    dv_max: f64,
) -> Result<(Plan, SmoothingReport), PlanError> {
    let boxes: Vec<StateSpaceBox> = data.legs.iter().map(|l| l.bounds).collect();
    let segments: Vec<(f64, f64, bool)> = match scope {
        SmoothingScope::WholePlan => vec![(0.0, plan.t_final, true)],
        SmoothingScope::PerLeg => {
            let k = plan.leg_times.len() - 1;
            (0..k)
                .map(|i| (plan.leg_times[i], plan.leg_times[i + 1], i + 1 == k))
                .collect()
        }
    };
    let mut impulses: Vec<Impulse> = plan.schedule.impulses().to_vec();
    let mut reports = Vec::new();
    for (t0, t1, last) in segments {
        let in_seg = |tau: f64| tau >= t0 && (tau < t1 || (last && tau <= t1));
        let idx: Vec<usize> = (0..impulses.len()).filter(|&i| in_seg(impulses[i].tau)).collect();
        if idx.is_empty() {
            continue;
        }
        let before: Vec<Impulse> = impulses.iter().copied().filter(|i| i.tau < t0).collect();
        let x0 = propagate_schedule(&ctx.model, &plan.x_init, &BurnSchedule::from_impulses(before), t0);
        let upto: Vec<Impulse> = impulses.iter().copied().filter(|i| i.tau < t1 || (last && i.tau <= t1)).collect();
        let x1 = propagate_schedule(&ctx.model, &plan.x_init, &BurnSchedule::from_impulses(upto), t1);
        let seg = BurnSchedule::from_impulses(idx.iter().map(|&i| impulses[i]).collect());
        let local = shifted(&seg, t0);
        let feasible = |s: &BurnSchedule| schedule_feasible(ctx, &boxes, &x0, s, t1 - t0);
        let outcome: Result<SmoothingOutcome, SmoothingError> =
            smooth(&ctx.model, &x0, &x1, &local, t1 - t0, dv_max, opts, feasible);
        match outcome {
            Ok(o) => {
                for (k, &i) in idx.iter().enumerate() {
                    impulses[i] = Impulse::new(o.schedule.impulses()[k].dv, impulses[i].tau);
                }
                reports.push(SegmentReport {
                    t_start: t0,
                    t_end: t1,
                    alpha: o.alpha,
                    evaluations: o.evaluations,
                    optimum_cost: o.optimum_cost,
                    optimum_bound: o.optimum_bound,
                    error: None,
                });
            }
            Err(e) => reports.push(SegmentReport {
                t_start: t0,
                t_end: t1,
                alpha: 0.0,
                evaluations: 0,
                optimum_cost: f64::NAN,
                optimum_bound: f64::NAN,
                error: Some(e.to_string()),
            }),
        }
    }
    // Unchanged burns keep their arrival anchors.
    let raw: Vec<RawBurn> = impulses
        .iter()
        .zip(&plan.burns)
        .filter(|(i, _)| i.dv != Vector3::zeros())
        .map(|(&impulse, b)| RawBurn {
            impulse,
            arrives_at: if impulse == b.impulse { b.arrives_at } else { None },
        })
        .collect();
    let smoothed = finish_plan(ctx, &plan.x_init, plan.legs.clone(), plan.leg_times.clone(), raw)?;
    let report = SmoothingReport {
        segments: reports,
        cost_before: plan.cost,
        cost_after: smoothed.cost,
    };
    Ok((smoothed, report))
}
