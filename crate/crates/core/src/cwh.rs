//! Closed-form Clohessy-Wiltshire-Hill relative dynamics.
//!
//! States are expressed in the target's LVLH frame: `x` radial, `y` in-track,
//! `z` out-of-plane. Time is always measured relative to the start of the
//! maneuver being propagated.

use std::f64::consts::PI;

use nalgebra::{Matrix3, Matrix6, Vector3, Vector6};
use serde::{Deserialize, Serialize};

/// Circular reference orbit, characterised by its mean motion.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct OrbitModel {
    omega: f64,
}

impl OrbitModel {
    /// Mean motion of a ~705 km LEO orbit (Landsat-7 class).
    pub const LEO_705KM_OMEGA: f64 = 1.0592e-3;

    pub fn new(omega: f64) -> Option<Self> {
        (omega.is_finite() && omega > 0.0).then_some(Self { omega })
    }

    pub fn leo_705km() -> Self {
        Self {
            omega: Self::LEO_705KM_OMEGA,
        }
    }

    #[inline]
    pub fn omega(&self) -> f64 {
        self.omega
    }

    #[inline]
    pub fn period(&self) -> f64 {
        2.0 * PI / self.omega
    }

    /// Continuous-time dynamics matrix `A` of `xdot = A x + B u`.
    pub fn dynamics_matrix(&self) -> Matrix6<f64> {
        let w = self.omega;
        let mut a = Matrix6::zeros();
        a[(0, 3)] = 1.0;
        a[(1, 4)] = 1.0;
        a[(2, 5)] = 1.0;
        a[(3, 0)] = 3.0 * w * w;
        a[(3, 4)] = 2.0 * w;
        a[(4, 3)] = -2.0 * w;
        a[(5, 2)] = -w * w;
        a
    }
}

/// Input matrix `B`: impulses act on the velocity components only.
pub fn input_matrix() -> nalgebra::Matrix6x3<f64> {
    let mut b = nalgebra::Matrix6x3::zeros();
    b[(3, 0)] = 1.0;
    b[(4, 1)] = 1.0;
    b[(5, 2)] = 1.0;
    b
}

/// Relative position and velocity of the chaser in LVLH.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct State {
    pub r: Vector3<f64>,
    pub v: Vector3<f64>,
}

impl State {
    pub fn new(r: [f64; 3], v: [f64; 3]) -> Self {
        Self {
            r: Vector3::from(r),
            v: Vector3::from(v),
        }
    }

    pub fn zeros() -> Self {
        Self {
            r: Vector3::zeros(),
            v: Vector3::zeros(),
        }
    }

    pub fn from_vector(x: &Vector6<f64>) -> Self {
        Self {
            r: Vector3::new(x[0], x[1], x[2]),
            v: Vector3::new(x[3], x[4], x[5]),
        }
    }

    pub fn from_array(x: [f64; 6]) -> Self {
        Self::new([x[0], x[1], x[2]], [x[3], x[4], x[5]])
    }

    pub fn to_vector(&self) -> Vector6<f64> {
        Vector6::new(self.r.x, self.r.y, self.r.z, self.v.x, self.v.y, self.v.z)
    }

    pub fn to_array(&self) -> [f64; 6] {
        [self.r.x, self.r.y, self.r.z, self.v.x, self.v.y, self.v.z]
    }

    pub fn is_finite(&self) -> bool {
        self.r.iter().chain(self.v.iter()).all(|c| c.is_finite())
    }

    pub fn is_planar(&self) -> bool {
        self.r.z == 0.0 && self.v.z == 0.0
    }

    /// State after an instantaneous velocity change.
    pub fn with_impulse(&self, dv: &Vector3<f64>) -> Self {
        Self {
            r: self.r,
            v: self.v + dv,
        }
    }
}

/// Instantaneous velocity change applied at time `tau`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Impulse {
    pub dv: Vector3<f64>,
    pub tau: f64,
}

impl Impulse {
    pub fn new(dv: Vector3<f64>, tau: f64) -> Self {
        Self { dv, tau }
    }

    #[inline]
    pub fn norm(&self) -> f64 {
        self.dv.norm()
    }
}

/// Time-ordered sequence of impulses.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct BurnSchedule {
    impulses: Vec<Impulse>,
}

impl BurnSchedule {
    pub fn new() -> Self {
        Self::default()
    }

    /// Builds a schedule, stably sorting impulses by time.
    pub fn from_impulses(mut impulses: Vec<Impulse>) -> Self {
        impulses.sort_by(|a, b| a.tau.total_cmp(&b.tau));
        Self { impulses }
    }

    /// Appends an impulse. Panics if it would break time ordering.
    pub fn push(&mut self, impulse: Impulse) {
        if let Some(last) = self.impulses.last() {
            assert!(
                impulse.tau >= last.tau,
                "impulse at {} precedes last impulse at {}",
                impulse.tau,
                last.tau
            );
        }
        self.impulses.push(impulse);
    }

    pub fn impulses(&self) -> &[Impulse] {
        &self.impulses
    }

    pub fn len(&self) -> usize {
        self.impulses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.impulses.is_empty()
    }

    /// Sum of impulse 2-norms.
    pub fn cost(&self) -> f64 {
        self.impulses.iter().map(Impulse::norm).sum()
    }

    pub fn times(&self) -> Vec<f64> {
        self.impulses.iter().map(|i| i.tau).collect()
    }

    /// Stacked impulse vector `[dv_1; dv_2; ...]`.
    pub fn stacked(&self) -> Vec<f64> {
        self.impulses
            .iter()
            .flat_map(|i| [i.dv.x, i.dv.y, i.dv.z])
            .collect()
    }
}

/// State-transition matrix `e^{AT}` for a fixed elapsed time.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Stm {
    pub phi: Matrix6<f64>,
}

impl Stm {
    #[inline]
    pub fn apply(&self, x: &State) -> State {
        State::from_vector(&(self.phi * x.to_vector()))
    }
}

/// Closed-form state-transition matrix for elapsed time `t` (negative allowed).
pub fn stm(model: &OrbitModel, t: f64) -> Stm {
    let w = model.omega;
    let th = w * t;
    let (s, c) = th.sin_cos();
    let mut p = Matrix6::zeros();

    // radial
    p[(0, 0)] = 4.0 - 3.0 * c;
    p[(0, 3)] = s / w;
    p[(0, 4)] = 2.0 * (1.0 - c) / w;
    // in-track
    p[(1, 0)] = 6.0 * (s - th);
    p[(1, 1)] = 1.0;
    p[(1, 3)] = -2.0 * (1.0 - c) / w;
    p[(1, 4)] = (4.0 * s - 3.0 * th) / w;
    // out-of-plane
    p[(2, 2)] = c;
    p[(2, 5)] = s / w;
    // radial rate
    p[(3, 0)] = 3.0 * w * s;
    p[(3, 3)] = c;
    p[(3, 4)] = 2.0 * s;
    // in-track rate
    p[(4, 0)] = -6.0 * w * (1.0 - c);
    p[(4, 3)] = -2.0 * s;
    p[(4, 4)] = 4.0 * c - 3.0;
    // out-of-plane rate
    p[(5, 2)] = -w * s;
    p[(5, 5)] = c;

    Stm { phi: p }
}

/// Coasting propagation `x(T) = Phi(T) x0`.
///
/// Evaluated component-wise so the planar subspace is preserved exactly.
pub fn propagate_coast(model: &OrbitModel, x0: &State, t: f64) -> State {
    let w = model.omega;
    let th = w * t;
    let (s, c) = th.sin_cos();
    let (x, y, z) = (x0.r.x, x0.r.y, x0.r.z);
    let (vx, vy, vz) = (x0.v.x, x0.v.y, x0.v.z);
    State {
        r: Vector3::new(
            (4.0 - 3.0 * c) * x + (s / w) * vx + (2.0 * (1.0 - c) / w) * vy,
            6.0 * (s - th) * x + y - (2.0 * (1.0 - c) / w) * vx + ((4.0 * s - 3.0 * th) / w) * vy,
            c * z + (s / w) * vz,
        ),
        v: Vector3::new(
            3.0 * w * s * x + c * vx + 2.0 * s * vy,
            -6.0 * w * (1.0 - c) * x - 2.0 * s * vx + (4.0 * c - 3.0) * vy,
            -w * s * z + c * vz,
        ),
    }
}

/// State at time `t` when starting from `x0` at time 0 and applying every
/// impulse with `tau <= t` (an impulse exactly at `t` is included).
pub fn propagate_schedule(model: &OrbitModel, x0: &State, schedule: &BurnSchedule, t: f64) -> State {
    let mut state = *x0;
    let mut now = 0.0;
    for imp in schedule.impulses() {
        if imp.tau > t {
            break;
        }
        state = propagate_coast(model, &state, imp.tau - now).with_impulse(&imp.dv);
        now = imp.tau;
    }
    propagate_coast(model, &state, t - now)
}

/// Samples a scheduled trajectory on `[0, t_end]` at step `dt`, including every
/// burn instant (pre- and post-burn) and the terminal time.
pub fn sample_trajectory(
    model: &OrbitModel,
    x0: &State,
    schedule: &BurnSchedule,
    t_end: f64,
    dt: f64,
) -> Vec<(f64, State)> {
    assert!(dt > 0.0, "dt must be positive");
    let mut out = Vec::new();
    let mut state = *x0;
    let mut seg_start = 0.0;
    let mut burns = schedule.impulses().iter().filter(|b| b.tau <= t_end).peekable();
    let steps = (t_end / dt).floor() as usize;
    let mut grid = (0..=steps).map(|k| k as f64 * dt).peekable();

    loop {
        let next_burn = burns.peek().map(|b| b.tau);
        let next_grid = grid.peek().copied();
        match (next_grid, next_burn) {
            (Some(tg), Some(tb)) if tg < tb => {
                out.push((tg, propagate_coast(model, &state, tg - seg_start)));
                grid.next();
            }
            (_, Some(tb)) => {
                let pre = propagate_coast(model, &state, tb - seg_start);
                out.push((tb, pre));
                let b = burns.next().unwrap();
                state = pre.with_impulse(&b.dv);
                seg_start = tb;
                out.push((tb, state));
                if next_grid == Some(tb) {
                    grid.next();
                }
            }
            (Some(tg), None) => {
                out.push((tg, propagate_coast(model, &state, tg - seg_start)));
                grid.next();
            }
            (None, None) => break,
        }
    }
    if out.last().map_or(true, |(t, _)| *t < t_end) {
        out.push((t_end, propagate_coast(model, &state, t_end - seg_start)));
    }
    out
}

/// `Phi(T) B` : effect at time `T` of a unit impulse applied at time 0.
pub fn impulse_response(model: &OrbitModel, t: f64) -> nalgebra::Matrix6x3<f64> {
    stm(model, t).phi.fixed_view::<6, 3>(0, 3).into_owned()
}

/// Two-impulse transition matrix `[Phi(T) B, B]` for burns at `0` and `T`.
pub fn impulse_matrix(model: &OrbitModel, t: f64) -> Matrix6<f64> {
    let mut m = Matrix6::zeros();
    m.fixed_view_mut::<6, 3>(0, 0).copy_from(&impulse_response(model, t));
    m.fixed_view_mut::<3, 3>(3, 3).copy_from(&Matrix3::identity());
    m
}

/// Aggregated impulse matrix `[Phi(t_f - tau_1) B, ..., Phi(t_f - tau_N) B]`
/// (6 x 3N, column-major blocks).
pub fn stacked_impulse_matrix(model: &OrbitModel, t_final: f64, times: &[f64]) -> nalgebra::DMatrix<f64> {
    let mut m = nalgebra::DMatrix::zeros(6, 3 * times.len());
    for (i, &tau) in times.iter().enumerate() {
        m.view_mut((0, 3 * i), (6, 3))
            .copy_from(&impulse_response(model, t_final - tau));
    }
    m
}

#[cfg(test)]
mod tests {
    use super::*;

    fn model() -> OrbitModel {
        OrbitModel::leo_705km()
    }

    #[test]
    fn stm_at_zero_is_identity() {
        assert_eq!(stm(&model(), 0.0).phi, Matrix6::identity());
    }

    #[test]
    fn in_track_offset_is_equilibrium() {
        let x0 = State::new([0.0, 123.0, 0.0], [0.0; 3]);
        for t in [1.0, 600.0, 5000.0, -300.0] {
            assert_eq!(propagate_coast(&model(), &x0, t), x0);
        }
    }

    #[test]
    fn radial_offset_drifts_by_twelve_pi_per_period() {
        let m = model();
        let dx = 10.0;
        let x0 = State::new([dx, 0.0, 0.0], [0.0; 3]);
        let xt = propagate_coast(&m, &x0, m.period());
        assert!((xt.r.y + 12.0 * PI * dx).abs() < 1e-9);
        assert!((xt.r.x - dx).abs() < 1e-9);
        assert!(xt.r.z.abs() < 1e-12);
        assert!(xt.v.norm() < 1e-12);
    }

    #[test]
    fn period_identity() {
        let m = OrbitModel::new(2.5e-3).unwrap();
        assert!((m.period() * m.omega() - 2.0 * PI).abs() < 1e-15);
        assert!(OrbitModel::new(0.0).is_none());
        assert!(OrbitModel::new(f64::NAN).is_none());
    }

    #[test]
    fn matrix_and_componentwise_propagation_agree() {
        let m = model();
        let x0 = State::new([12.0, -40.0, 3.0], [0.01, -0.02, 0.005]);
        for t in [0.0, 17.0, 900.0, -1234.5] {
            let a = stm(&m, t).apply(&x0).to_vector();
            let b = propagate_coast(&m, &x0, t).to_vector();
            assert!((a - b).norm() < 1e-10 * (1.0 + a.norm()));
        }
    }

    #[test]
    fn impulse_at_query_time_is_included() {
        let m = model();
        let x0 = State::new([5.0, 5.0, 0.0], [0.0; 3]);
        let dv = Vector3::new(0.1, -0.2, 0.0);
        let sched = BurnSchedule::from_impulses(vec![Impulse::new(dv, 100.0)]);
        let before = propagate_schedule(&m, &x0, &sched, 100.0 - 1e-9);
        let at = propagate_schedule(&m, &x0, &sched, 100.0);
        let coast = propagate_coast(&m, &x0, 100.0);
        assert!((at.r - coast.r).norm() < 1e-12);
        assert!((at.v - coast.v - dv).norm() < 1e-12);
        assert!((before.v - coast.v).norm() < 1e-9);
    }

    #[test]
    fn impulse_matrix_structure() {
        let m = model();
        let zero = impulse_matrix(&m, 0.0);
        assert_eq!(zero.fixed_view::<3, 6>(0, 0), nalgebra::Matrix3x6::zeros());
        assert_eq!(zero.rank(1e-12), 3);

        let short = impulse_matrix(&m, 0.05 * m.period());
        let sv = short.singular_values();
        let cond = sv.max() / sv.min();
        assert!(cond.is_finite() && cond < 1e8, "cond = {cond}");

        let full = impulse_matrix(&m, m.period());
        let scale = full.norm().powi(6);
        assert!(full.determinant().abs() < 1e-12 * scale);
    }

    #[test]
    fn trajectory_sampling_includes_burns_and_end() {
        let m = model();
        let x0 = State::new([100.0, 0.0, 0.0], [0.0; 3]);
        let sched = BurnSchedule::from_impulses(vec![
            Impulse::new(Vector3::new(0.0, 0.1, 0.0), 25.0),
            Impulse::new(Vector3::new(0.0, -0.1, 0.0), 30.0),
        ]);
        let pts = sample_trajectory(&m, &x0, &sched, 33.0, 10.0);
        let times: Vec<f64> = pts.iter().map(|p| p.0).collect();
        assert_eq!(times, vec![0.0, 10.0, 20.0, 25.0, 25.0, 30.0, 30.0, 33.0]);
        let end = propagate_schedule(&m, &x0, &sched, 33.0);
        assert!((pts.last().unwrap().1.to_vector() - end.to_vector()).norm() < 1e-12);
    }
}
