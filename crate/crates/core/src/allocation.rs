//! Minimum-effort thruster allocation, failure-mode enumeration and the
//! nadir-pointing attitude policy.

use nalgebra::{DMatrix, DVector, Matrix3, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cwh::State;
use crate::geometry::{PlumeModel, TargetSphere};
use crate::lp;

/// Feasibility tolerance of the allocation LP.
pub const LP_TOL: f64 = 1e-9;

/// Allocations below this magnitude are treated as "not firing" when
/// generating plumes.
pub const FIRING_THRESHOLD: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AllocationError {
    #[error("failure mode cannot realise the commanded impulse and moment")]
    Infeasible,
    #[error("invalid thruster configuration: {0}")]
    InvalidConfig(String),
}

/// One thruster: mounting point, impulse direction and magnitude bounds.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Thruster {
    /// Position relative to the centre of mass, body frame [m].
    pub position: Vector3<f64>,
    /// Unit impulse direction, body frame.
    pub direction: Vector3<f64>,
    pub dv_min: f64,
    pub dv_max: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ThrusterConfig {
    pub thrusters: Vec<Thruster>,
}

impl ThrusterConfig {
    pub fn new(thrusters: Vec<Thruster>) -> Result<Self, AllocationError> {
        let cfg = Self { thrusters };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), AllocationError> {
        if self.thrusters.is_empty() {
            return Err(AllocationError::InvalidConfig("at least one thruster is required".into()));
        }
        for (k, t) in self.thrusters.iter().enumerate() {
            if (t.direction.norm() - 1.0).abs() > 1e-12 {
                return Err(AllocationError::InvalidConfig(format!("thruster {k} direction is not unit length")));
            }
            if !(t.dv_min >= 0.0 && t.dv_min <= t.dv_max) || t.position.iter().any(|v| !v.is_finite()) {
                return Err(AllocationError::InvalidConfig(format!("thruster {k} has invalid bounds or position")));
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.thrusters.len()
    }

    pub fn is_empty(&self) -> bool {
        self.thrusters.is_empty()
    }

    /// Sixteen thrusters on a cube of edge `edge` metres.
    ///
    /// Every body axis has a pair of thrusters per sign, mounted on opposite
    /// edges of the face the exhaust leaves from, so each pair fires
    /// torque-free along its axis. Four extra `z` thrusters sit on the `y`
    /// edges of the `z` faces, duplicating that axis with a second moment arm.
    pub fn default_cube(edge: f64) -> Self {
        let h = 0.5 * edge;
        let e = [Vector3::x(), Vector3::y(), Vector3::z()];
        let mut thrusters = Vec::with_capacity(16);
        let mut push = |position: Vector3<f64>, direction: Vector3<f64>| {
            thrusters.push(Thruster {
                position,
                direction,
                dv_min: 0.0,
                dv_max: f64::INFINITY,
            })
        };
        for a in 0..3 {
            let b = (a + 1) % 3;
            for s in [1.0, -1.0] {
                for t in [1.0, -1.0] {
                    push(-e[a] * (s * h) + e[b] * (t * h), e[a] * s);
                }
            }
        }
        for s in [1.0, -1.0] {
            for t in [1.0, -1.0] {
                push(-e[2] * (s * h) + e[1] * (t * h), e[2] * s);
            }
        }
        Self { thrusters }
    }

    /// Stacked 6 x K matrix mapping thruster magnitudes to net impulse
    /// (rows 0-2) and net moment (rows 3-5).
    pub fn effect_matrix(&self) -> DMatrix<f64> {
        let k = self.len();
        let mut m = DMatrix::zeros(6, k);
        for (j, t) in self.thrusters.iter().enumerate() {
            let moment = t.position.cross(&t.direction);
            for i in 0..3 {
                m[(i, j)] = t.direction[i];
                m[(i + 3, j)] = moment[i];
            }
        }
        m
    }
}

/// Per-thruster availability (`true` = healthy).
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct FailureMask {
    pub eta: Vec<bool>,
}

impl FailureMask {
    pub fn all_healthy(k: usize) -> Self {
        Self { eta: vec![true; k] }
    }

    pub fn with_failed(k: usize, failed: &[usize]) -> Self {
        let mut eta = vec![true; k];
        for &f in failed {
            eta[f] = false;
        }
        Self { eta }
    }

    pub fn failed(&self) -> Vec<usize> {
        (0..self.eta.len()).filter(|&i| !self.eta[i]).collect()
    }

    pub fn healthy_count(&self) -> usize {
        self.eta.iter().filter(|&&e| e).count()
    }
}

/// Every mask with at most `f` failed thrusters: first by number of
/// failures, then lexicographically by failed indices.
pub fn enumerate_failure_modes(k: usize, f: usize) -> Vec<FailureMask> {
    assert!(f <= k, "fault tolerance exceeds thruster count");
    fn combos(k: usize, left: usize, start: usize, cur: &mut Vec<usize>, out: &mut Vec<FailureMask>) {
        if left == 0 {
            out.push(FailureMask::with_failed(k, cur));
            return;
        }
        for i in start..=k - left {
            cur.push(i);
            combos(k, left - 1, i + 1, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::with_capacity(failure_mode_count(k, f));
    for count in 0..=f {
        combos(k, count, 0, &mut Vec::with_capacity(count), &mut out);
    }
    out
}

/// Number of masks with at most `f` of `k` thrusters failed.
pub fn failure_mode_count(k: usize, f: usize) -> usize {
    let mut total = 0usize;
    let mut binom = 1usize;
    for i in 0..=f {
        total += binom;
        binom = binom * (k - i) / (i + 1);
    }
    total
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AllocationResult {
    pub magnitudes: Vec<f64>,
    pub fuel: f64,
}

/// Solves `min sum dv_k` subject to the net-impulse and net-moment equalities
/// and per-thruster bounds, with failed thrusters fixed at zero.
pub fn allocate(
    dv_net_body: &Vector3<f64>,
    moment_net: &Vector3<f64>,
    config: &ThrusterConfig,
    mask: &FailureMask,
) -> Result<AllocationResult, AllocationError> {
    let k = config.len();
    assert_eq!(mask.eta.len(), k, "mask length must match thruster count");
    let active: Vec<usize> = (0..k).filter(|&j| mask.eta[j]).collect();
    let bounded: Vec<usize> = active
        .iter()
        .copied()
        .filter(|&j| config.thrusters[j].dv_max.is_finite())
        .collect();
    let n_var = active.len() + bounded.len();
    let n_row = 6 + bounded.len();
    let effect = config.effect_matrix();

    let mut target = DVector::zeros(6);
    for i in 0..3 {
        target[i] = dv_net_body[i];
        target[i + 3] = moment_net[i];
    }
    for &j in &active {
        let lo = config.thrusters[j].dv_min;
        if lo != 0.0 {
            for i in 0..6 {
                target[i] -= effect[(i, j)] * lo;
            }
        }
    }

    let mut a = DMatrix::zeros(n_row, n_var);
    let mut b = DVector::zeros(n_row);
    let mut c = DVector::zeros(n_var);
    for (col, &j) in active.iter().enumerate() {
        for i in 0..6 {
            a[(i, col)] = effect[(i, j)];
        }
        c[col] = 1.0;
    }
    b.rows_mut(0, 6).copy_from(&target);
    for (r, &j) in bounded.iter().enumerate() {
        let col = active.iter().position(|&x| x == j).unwrap();
        a[(6 + r, col)] = 1.0;
        a[(6 + r, active.len() + r)] = 1.0;
        b[6 + r] = config.thrusters[j].dv_max - config.thrusters[j].dv_min;
    }

    let sol = lp::solve(&a, &b, &c, LP_TOL).map_err(|_| AllocationError::Infeasible)?;
    let mut magnitudes = vec![0.0; k];
    for (col, &j) in active.iter().enumerate() {
        magnitudes[j] = config.thrusters[j].dv_min + sol.x[col];
    }
    let result = AllocationResult {
        fuel: magnitudes.iter().sum(),
        magnitudes,
    };
    let (res_dv, res_m) = residuals(&result, dv_net_body, moment_net, config);
    let scale = 1.0f64.max(dv_net_body.norm()).max(moment_net.norm());
    if res_dv > 1e-8 * scale || res_m > 1e-8 * scale {
        return Err(AllocationError::Infeasible);
    }
    Ok(result)
}

/// Net impulse and net moment residual norms of an allocation.
pub fn residuals(
    result: &AllocationResult,
    dv_net_body: &Vector3<f64>,
    moment_net: &Vector3<f64>,
    config: &ThrusterConfig,
) -> (f64, f64) {
    let mut dv = Vector3::zeros();
    let mut m = Vector3::zeros();
    for (t, &mag) in config.thrusters.iter().zip(&result.magnitudes) {
        dv += t.direction * mag;
        m += t.position.cross(&t.direction) * mag;
    }
    ((dv - dv_net_body).norm(), (m - moment_net).norm())
}

/// Constant LVLH-to-body rotation of a nadir-pointing chaser: body `z`
/// points to nadir (LVLH `-x`), body `x` along the in-track direction.
pub fn attitude_policy(_x: &State) -> Matrix3<f64> {
    Matrix3::new(
        0.0, 1.0, 0.0, //
        0.0, 0.0, -1.0, //
        -1.0, 0.0, 0.0,
    )
}

/// Chaser vehicle: thruster layout, exhaust plume and circumscribing radius.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Chaser {
    pub thrusters: ThrusterConfig,
    pub plume: PlumeModel,
    pub radius: f64,
}

/// Why a nominal burn was rejected.
#[derive(Debug, Error, Clone, Copy, PartialEq, Eq)]
pub enum BurnRejection {
    #[error("burn cannot be allocated torque-free")]
    Unallocatable,
    #[error("thruster plume impinges on the target")]
    PlumeImpingement,
}

impl Chaser {
    /// Allocates a nominal (all thrusters healthy) burn commanded in LVLH at
    /// state `x` and checks every firing thruster's plume against the target.
    pub fn nominal_burn(
        &self,
        x: &State,
        dv_lvlh: &Vector3<f64>,
        target: &TargetSphere,
    ) -> Result<AllocationResult, BurnRejection> {
        let k = self.thrusters.len();
        if *dv_lvlh == Vector3::zeros() {
            return Ok(AllocationResult {
                magnitudes: vec![0.0; k],
                fuel: 0.0,
            });
        }
        let rot = attitude_policy(x);
        let dv_body = rot * dv_lvlh;
        let alloc = allocate(&dv_body, &Vector3::zeros(), &self.thrusters, &FailureMask::all_healthy(k))
            .map_err(|_| BurnRejection::Unallocatable)?;
        let body_to_lvlh = rot.transpose();
        for (t, &mag) in self.thrusters.thrusters.iter().zip(&alloc.magnitudes) {
            if mag > FIRING_THRESHOLD {
                let apex = x.r + body_to_lvlh * t.position;
                if target.impinged_by(&self.plume, apex, body_to_lvlh * t.direction, 0.0) {
                    return Err(BurnRejection::PlumeImpingement);
                }
            }
        }
        Ok(alloc)
    }

    /// Abort-burn feasibility under a failure mode using the turn-burn-turn
    /// relaxation: the vehicle may reorient so that any healthy thruster
    /// delivers the burn, and the plume then leaves along `-dv` from a point
    /// within the chaser radius of `position`.
    pub fn abort_burn_feasible(
        &self,
        position: &Vector3<f64>,
        dv: &Vector3<f64>,
        mask: &FailureMask,
        target: &TargetSphere,
    ) -> Result<(), AbortRejection> {
        let n = dv.norm();
        if n == 0.0 {
            return Ok(());
        }
        if mask.healthy_count() == 0 {
            return Err(AbortRejection::NoHealthyThruster);
        }
        if target.impinged_by(&self.plume, *position, dv / n, self.radius) {
            return Err(AbortRejection::PlumeImpingement);
        }
        Ok(())
    }
}

#[derive(Debug, Error, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum AbortRejection {
    #[error("no healthy thruster remains")]
    NoHealthyThruster,
    #[error("abort-burn plume impinges on the target")]
    PlumeImpingement,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_cube_shape() {
        let cfg = ThrusterConfig::default_cube(1.0);
        assert_eq!(cfg.len(), 16);
        cfg.validate().unwrap();
        assert_eq!(cfg.effect_matrix().rank(1e-9), 6);
    }

    #[test]
    fn zero_command_costs_nothing() {
        let cfg = ThrusterConfig::default_cube(1.0);
        let r = allocate(&Vector3::zeros(), &Vector3::zeros(), &cfg, &FailureMask::all_healthy(16)).unwrap();
        assert_eq!(r.fuel, 0.0);
        assert!(r.magnitudes.iter().all(|m| *m == 0.0));
    }

    #[test]
    fn centreline_thruster_is_exact() {
        let t = |p: [f64; 3], d: [f64; 3]| Thruster {
            position: Vector3::from(p),
            direction: Vector3::from(d),
            dv_min: 0.0,
            dv_max: f64::INFINITY,
        };
        let cfg = ThrusterConfig::new(vec![
            t([-0.5, 0.0, 0.0], [1.0, 0.0, 0.0]),
            t([0.0, -0.5, 0.5], [0.0, 1.0, 0.0]),
            t([0.0, -0.5, -0.5], [0.0, 1.0, 0.0]),
        ])
        .unwrap();
        let cmd = Vector3::new(0.3, 0.0, 0.0);
        let r = allocate(&cmd, &Vector3::zeros(), &cfg, &FailureMask::all_healthy(3)).unwrap();
        assert!((r.fuel - 0.3).abs() < 1e-15);
        let cmd = Vector3::new(-0.3, 0.0, 0.0);
        assert_eq!(
            allocate(&cmd, &Vector3::zeros(), &cfg, &FailureMask::all_healthy(3)),
            Err(AllocationError::Infeasible)
        );
    }

    #[test]
    fn failure_mode_counts() {
        assert_eq!(enumerate_failure_modes(8, 0).len(), 1);
        let modes = enumerate_failure_modes(8, 2);
        assert_eq!(modes.len(), 37);
        assert_eq!(failure_mode_count(8, 2), 37);
        assert_eq!(failure_mode_count(16, 2), 137);
        let mut seen = std::collections::HashSet::new();
        assert!(modes.iter().all(|m| seen.insert(m.clone())));
        assert_eq!(modes[1].failed(), vec![0]);
        assert_eq!(modes[9].failed(), vec![0, 1]);
        assert_eq!(modes[36].failed(), vec![6, 7]);
        assert_eq!(enumerate_failure_modes(3, 3).len(), 8);
    }

    #[test]
    fn attitude_is_proper_rotation() {
        let r = attitude_policy(&State::zeros());
        assert!((r * r.transpose() - Matrix3::identity()).amax() < 1e-15);
        assert!((r.determinant() - 1.0).abs() < 1e-15);
        assert_eq!(r * Vector3::new(-1.0, 0.0, 0.0), Vector3::z());
        assert_eq!(r, attitude_policy(&State::new([5.0, 1.0, 2.0], [0.1, 0.0, 0.0])));
    }

    #[test]
    fn bounds_are_respected() {
        let mut cfg = ThrusterConfig::default_cube(1.0);
        for t in &mut cfg.thrusters {
            t.dv_max = 0.05;
        }
        let cmd = Vector3::new(0.08, 0.0, 0.0);
        let r = allocate(&cmd, &Vector3::zeros(), &cfg, &FailureMask::all_healthy(16)).unwrap();
        assert!(r.magnitudes.iter().all(|m| *m <= 0.05 + 1e-12));
        let cmd = Vector3::new(0.2, 0.0, 0.0);
        assert!(allocate(&cmd, &Vector3::zeros(), &cfg, &FailureMask::all_healthy(16)).is_err());
    }
}
