//! Active-safety certification with one-burn circularisation aborts.
//!
//! A collision-avoidance maneuver (CAM) coasts from the failure state for a
//! sweep angle `theta` of the reference orbit and then fires a single burn
//! that circularises the relative orbit outside the radial band spanned by
//! the keep-out zone. The burn angle is chosen from a finite candidate set
//! that provably contains the constrained minimum of the burn magnitude.

use std::f64::consts::{FRAC_PI_2, PI};

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::allocation::{enumerate_failure_modes, AbortRejection, Chaser, FailureMask};
use crate::cwh::{propagate_coast, sample_trajectory, BurnSchedule, Impulse, OrbitModel, State};
use crate::geometry::{EllipsoidKoz, Environment, TargetSphere};

/// Velocity tolerance of the invariant-set membership test [m/s].
pub const INVARIANT_VEL_TOL: f64 = 1e-9;

#[derive(Debug, Error, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SafetyError {
    #[error("state is inside the keep-out zone or admits no invariant circularisation")]
    UnsafeState,
}

/// Radial keep-out band of half-width `rho_x`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct InvariantSetSpec {
    pub rho_x: f64,
}

/// Circular relative orbit outside the keep-out band.
pub fn is_invariant(model: &OrbitModel, x: &State, spec: &InvariantSetSpec) -> bool {
    x.r.x.abs() >= spec.rho_x
        && x.v.x.abs() <= INVARIANT_VEL_TOL
        && (x.v.y + 1.5 * model.omega() * x.r.x).abs() <= INVARIANT_VEL_TOL
}

/// Impulse that leaves `x` on a circular, in-plane relative orbit at its
/// current radial offset.
pub fn circularization_burn(model: &OrbitModel, x: &State) -> Vector3<f64> {
    Vector3::new(-x.v.x, -1.5 * model.omega() * x.r.x - x.v.y, -x.v.z)
}

/// Coefficients `(S, C)` with `d/dtheta |dv_circ(theta)|^2 = S sin 2theta + C cos 2theta`
/// for a coast starting at `x`.
pub fn cam_gradient_coeffs(model: &OrbitModel, x: &State) -> (f64, f64) {
    let w = model.omega();
    let k = 3.0 * w * x.r.x + 2.0 * x.v.y;
    let s = 0.75 * k * k - 0.75 * x.v.x * x.v.x + w * w * x.r.z * x.r.z - x.v.z * x.v.z;
    let c = 1.5 * x.v.x * k - 2.0 * w * x.v.z * x.r.z;
    (s, c)
}

/// Circularisation burn magnitude after coasting a sweep angle `theta`.
pub fn cam_cost(model: &OrbitModel, x: &State, theta: f64) -> f64 {
    let s = propagate_coast(model, x, theta / model.omega());
    circularization_burn(model, &s).norm()
}

/// Radial offset after coasting `theta`: `P + Q cos theta + R sin theta`.
fn radial_harmonics(model: &OrbitModel, x: &State) -> (f64, f64, f64) {
    let w = model.omega();
    (
        4.0 * x.r.x + 2.0 * x.v.y / w,
        -3.0 * x.r.x - 2.0 * x.v.y / w,
        x.v.x / w,
    )
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CamResult {
    /// Sweep angle of the reference orbit before the burn [rad].
    pub theta_star: f64,
    /// Coast time before the burn [s].
    pub t_h: f64,
    pub dv_circ: Impulse,
    /// State just before the burn.
    pub burn_state: State,
    /// State just after the burn.
    pub post_state: State,
    /// Upper end of the admissible sweep [rad].
    pub theta_max: f64,
}

impl CamResult {
    pub fn cost(&self) -> f64 {
        self.dv_circ.norm()
    }

    /// Coast arc from the failure state to the burn at step `dt`.
    pub fn coast_samples(&self, model: &OrbitModel, x_fail: &State, dt: f64) -> Vec<(f64, State)> {
        sample_trajectory(model, x_fail, &BurnSchedule::new(), self.t_h, dt)
    }
}

/// Last time before the coast from `x` first enters `koz`, found by a
/// `dt`-resolution scan and bisection; `None` if it stays clear for a full
/// period.
fn first_koz_entry(model: &OrbitModel, x: &State, koz: &EllipsoidKoz, dt: f64) -> Option<f64> {
    let period = model.period();
    let steps = (period / dt).ceil() as usize;
    let mut prev = 0.0;
    for k in 1..=steps {
        let t = (k as f64 * dt).min(period);
        if koz.contains(&propagate_coast(model, x, t).r) {
            let (mut lo, mut hi) = (prev, t);
            for _ in 0..80 {
                if hi - lo <= 1e-9 {
                    break;
                }
                let mid = 0.5 * (lo + hi);
                if koz.contains(&propagate_coast(model, x, mid).r) {
                    hi = mid;
                } else {
                    lo = mid;
                }
            }
            return Some(lo);
        }
        prev = t;
    }
    None
}

/// Candidate sweep angles: the bounds, the stationary points of the burn
/// magnitude and the crossings of the keep-out band edge.
pub fn cam_candidates(model: &OrbitModel, x: &State, rho_x: f64, theta_max: f64) -> Vec<f64> {
    let mut out = vec![0.0, theta_max];
    let (s, c) = cam_gradient_coeffs(model, x);
    if s != 0.0 || c != 0.0 {
        let base = 0.5 * (-c).atan2(s);
        for k in -2..=8 {
            out.push(base + k as f64 * FRAC_PI_2);
        }
    }
    let (p, q, r) = radial_harmonics(model, x);
    let amp = q.hypot(r);
    if amp > 0.0 {
        let phase = r.atan2(q);
        for edge in [rho_x, -rho_x] {
            let ratio = (edge - p) / amp;
            if ratio.abs() <= 1.0 {
                let a = ratio.acos();
                for root in [phase + a, phase - a] {
                    let base = root.rem_euclid(2.0 * PI);
                    // Nudge the root so the burn point lies strictly
                    // outside the band.
                    for d in [0.0, 1e-12, -1e-12, 1e-10, -1e-10, 1e-8, -1e-8, 1e-6, -1e-6] {
                        let th = base + d;
                        if (p + q * th.cos() + r * th.sin()).abs() > rho_x {
                            out.push(th);
                            break;
                        }
                    }
                }
            }
        }
    }
    out.retain(|t| *t >= 0.0 && *t <= theta_max);
    out.sort_by(f64::total_cmp);
    out.dedup();
    out
}

/// Minimum-magnitude circularisation CAM from `x_fail`, coasting no further
/// than the first `dt`-resolved entry into `koz` (or one full orbit).
pub fn optimal_cam(model: &OrbitModel, x_fail: &State, koz: &EllipsoidKoz, dt: f64) -> Result<CamResult, SafetyError> {
    if koz.contains(&x_fail.r) {
        return Err(SafetyError::UnsafeState);
    }
    let rho_x = koz.rho_x();
    let w = model.omega();
    let theta_max = first_koz_entry(model, x_fail, koz, dt).map_or(2.0 * PI, |t| w * t);
    let mut best: Option<(f64, f64, State)> = None;
    for th in cam_candidates(model, x_fail, rho_x, theta_max) {
        let s = propagate_coast(model, x_fail, th / w);
        if s.r.x.abs() <= rho_x {
            continue;
        }
        let cost = circularization_burn(model, &s).norm();
        if best.map_or(true, |(_, c, _)| cost < c) {
            best = Some((th, cost, s));
        }
    }
    let (theta_star, _, burn_state) = best.ok_or(SafetyError::UnsafeState)?;
    let dv = circularization_burn(model, &burn_state);
    let t_h = theta_star / w;
    Ok(CamResult {
        theta_star,
        t_h,
        dv_circ: Impulse::new(dv, t_h),
        burn_state,
        post_state: burn_state.with_impulse(&dv),
        theta_max,
    })
}

/// Outcome for one failure mode.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Feasible,
    UnsafeState,
    ArcCollision,
    NoHealthyThruster,
    PlumeImpingement,
}

impl From<AbortRejection> for Verdict {
    fn from(r: AbortRejection) -> Self {
        match r {
            AbortRejection::NoHealthyThruster => Verdict::NoHealthyThruster,
            AbortRejection::PlumeImpingement => Verdict::PlumeImpingement,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModeVerdict {
    pub failed: Vec<usize>,
    pub verdict: Verdict,
}

/// Per-failure-mode abort feasibility of one state.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CamCertificate {
    pub cam: Option<CamResult>,
    /// Burns executed before the CAM proper (eliminated rendezvous burns).
    pub prefix: Vec<Vector3<f64>>,
    pub verdicts: Vec<ModeVerdict>,
    pub safe: bool,
}

impl CamCertificate {
    fn from_verdicts(cam: Option<CamResult>, prefix: Vec<Vector3<f64>>, verdicts: Vec<ModeVerdict>) -> Self {
        let safe = verdicts.iter().all(|v| v.verdict == Verdict::Feasible);
        Self {
            cam,
            prefix,
            verdicts,
            safe,
        }
    }

    /// Compact record kept in precomputed data.
    pub fn summary(&self) -> CamSummary {
        CamSummary {
            safe: self.safe,
            theta_star: self.cam.map_or(f64::NAN, |c| c.theta_star),
            t_h: self.cam.map_or(f64::NAN, |c| c.t_h),
            dv: self.cam.map_or([f64::NAN; 3], |c| c.dv_circ.dv.into()),
        }
    }
}

/// CAM parameters and overall verdict stored per sample.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CamSummary {
    pub safe: bool,
    pub theta_star: f64,
    pub t_h: f64,
    pub dv: [f64; 3],
}

/// Everything needed to certify states: dynamics, obstacles, vehicle and
/// fault tolerance.
#[derive(Clone, Debug)]
pub struct SafetyContext {
    pub model: OrbitModel,
    /// Obstacles checked along abort arcs; any box bounds are ignored.
    pub env: Environment,
    pub chaser: Chaser,
    pub target: TargetSphere,
    pub fault_tolerance: usize,
    pub dt: f64,
    /// Post-circularisation verification horizon [s].
    pub post_horizon: f64,
    modes: Vec<FailureMask>,
}

impl SafetyContext {
    pub fn new(
        model: OrbitModel,
        env: &Environment,
        chaser: Chaser,
        target: TargetSphere,
        fault_tolerance: usize,
        dt: f64,
    ) -> Self {
        let modes = enumerate_failure_modes(chaser.thrusters.len(), fault_tolerance);
        Self {
            post_horizon: model.period(),
            model,
            env: env.with_bounds(None),
            chaser,
            target,
            fault_tolerance,
            dt,
            modes,
        }
    }

    pub fn modes(&self) -> &[FailureMask] {
        &self.modes
    }

    fn uniform(&self, cam: Option<CamResult>, verdict: Verdict) -> CamCertificate {
        let verdicts = self
            .modes
            .iter()
            .map(|m| ModeVerdict {
                failed: m.failed(),
                verdict,
            })
            .collect();
        CamCertificate::from_verdicts(cam, Vec::new(), verdicts)
    }

    fn arc_clear(&self, x0: &State, t_end: f64) -> bool {
        sample_trajectory(&self.model, x0, &BurnSchedule::new(), t_end, self.dt)
            .iter()
            .all(|(_, s)| !self.env.collides(&s.r))
    }

    /// Computes the optimal CAM once and evaluates it under every failure
    /// mode up to the fault tolerance.
    pub fn certify(&self, x: &State) -> CamCertificate {
        let cam = match optimal_cam(&self.model, x, &self.env.koz, self.dt) {
            Ok(c) => c,
            Err(SafetyError::UnsafeState) => return self.uniform(None, Verdict::UnsafeState),
        };
        if !self.arc_clear(x, cam.t_h) || !self.arc_clear(&cam.post_state, self.post_horizon) {
            return self.uniform(Some(cam), Verdict::ArcCollision);
        }
        let verdicts = self
            .modes
            .iter()
            .map(|m| ModeVerdict {
                failed: m.failed(),
                verdict: match self
                    .chaser
                    .abort_burn_feasible(&cam.burn_state.r, &cam.dv_circ.dv, m, &self.target)
                {
                    Ok(()) => Verdict::Feasible,
                    Err(e) => e.into(),
                },
            })
            .collect();
        CamCertificate::from_verdicts(Some(cam), Vec::new(), verdicts)
    }

    /// Certificate of a state that still has to execute `dv_prefix` at
    /// `position` before the state certified by `base` is reached.
    pub fn certify_with_prefix(&self, position: &Vector3<f64>, dv_prefix: &Vector3<f64>, base: &CamCertificate) -> CamCertificate {
        let verdicts = self
            .modes
            .iter()
            .zip(&base.verdicts)
            .map(|(m, v)| ModeVerdict {
                failed: v.failed.clone(),
                verdict: if v.verdict != Verdict::Feasible {
                    v.verdict
                } else {
                    match self.chaser.abort_burn_feasible(position, dv_prefix, m, &self.target) {
                        Ok(()) => Verdict::Feasible,
                        Err(e) => e.into(),
                    }
                },
            })
            .collect();
        let mut prefix = vec![*dv_prefix];
        prefix.extend(base.prefix.iter().copied());
        CamCertificate::from_verdicts(base.cam, prefix, verdicts)
    }

    /// Abort check for a prefix burn alone, given an already-safe base.
    pub fn prefix_safe(&self, position: &Vector3<f64>, dv_prefix: &Vector3<f64>) -> bool {
        self.modes
            .iter()
            .all(|m| self.chaser.abort_burn_feasible(position, dv_prefix, m, &self.target).is_ok())
    }

    /// Safety with the abort policy forced to "never burn": the free coast
    /// must stay clear of every obstacle over `horizon`.
    pub fn certify_passive(&self, x: &State, horizon: f64) -> bool {
        self.arc_clear(x, horizon)
    }
}
