//! Minimum-fuel two-impulse steering between two states.
//!
//! For a fixed duration `T` the two impulses are the unique solution of
//! `[Phi(T)B  B] [dv1; dv2] = xf - Phi(T) x0`. The duration itself is chosen by
//! a coarse uniform grid over `(0, t_max]` followed by golden-section
//! refinement inside every bracketed local minimum.

use nalgebra::{Matrix6, Vector3, Vector6};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cwh::{impulse_matrix, stm, Impulse, OrbitModel, State};

/// Condition number above which a duration is treated as singular.
pub const MAX_CONDITION: f64 = 1e12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SteeringError {
    #[error("impulse matrix is singular for duration {duration} s (condition {condition:e})")]
    SingularDuration { duration: f64, condition: f64 },
    #[error("no duration in (0, {t_max}] satisfies the per-burn limit of {dv_max} m/s")]
    NoFeasibleSolution { t_max: f64, dv_max: f64 },
    #[error("invalid steering limits: {0}")]
    InvalidLimits(&'static str),
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SteeringLimits {
    /// Longest admissible maneuver [s].
    pub t_max: f64,
    /// Per-burn magnitude cap [m/s].
    pub dv_max: f64,
    /// Coarse grid size for the duration search.
    pub t_grid: usize,
    /// Golden-section termination width [s].
    pub refine_tol: f64,
}

impl SteeringLimits {
    /// 64-point grid, `t_max = 0.1` period, unbounded burns.
    pub fn for_orbit(model: &OrbitModel) -> Self {
        Self::with_t_max(0.1 * model.period())
    }

    pub fn with_t_max(t_max: f64) -> Self {
        Self {
            t_max,
            dv_max: f64::INFINITY,
            t_grid: 64,
            refine_tol: t_max * 1e-4,
        }
    }

    pub fn validate(&self, model: &OrbitModel) -> Result<(), SteeringError> {
        if !(self.t_max > 0.0 && self.t_max < model.period()) {
            return Err(SteeringError::InvalidLimits("t_max must lie in (0, period)"));
        }
        if self.t_grid < 16 {
            return Err(SteeringError::InvalidLimits("t_grid must be at least 16"));
        }
        if !(self.refine_tol > 0.0) {
            return Err(SteeringError::InvalidLimits("refine_tol must be positive"));
        }
        if !(self.dv_max > 0.0) {
            return Err(SteeringError::InvalidLimits("dv_max must be positive"));
        }
        Ok(())
    }
}

/// Two-impulse transfer: `dv1` at relative time 0, `dv2` at `duration`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SteeringSolution {
    pub dv1: Vector3<f64>,
    pub dv2: Vector3<f64>,
    pub duration: f64,
    pub cost: f64,
}

impl SteeringSolution {
    pub fn new(dv1: Vector3<f64>, dv2: Vector3<f64>, duration: f64) -> Self {
        Self {
            dv1,
            dv2,
            duration,
            cost: dv1.norm() + dv2.norm(),
        }
    }

    pub fn impulses(&self) -> [Impulse; 2] {
        [
            Impulse::new(self.dv1, 0.0),
            Impulse::new(self.dv2, self.duration),
        ]
    }

    /// Norm of the stacked 6-vector `[dv1; dv2]`.
    pub fn stacked_norm(&self) -> f64 {
        (self.dv1.norm_squared() + self.dv2.norm_squared()).sqrt()
    }
}

/// 1-norm condition number; cheap once the inverse is available.
fn condition_1(m: &Matrix6<f64>, inv: &Matrix6<f64>) -> f64 {
    let norm1 = |a: &Matrix6<f64>| {
        a.column_iter()
            .map(|c| c.iter().map(|v| v.abs()).sum::<f64>())
            .fold(0.0, f64::max)
    };
    norm1(m) * norm1(inv)
}

/// Precomputed pieces for solving the boundary problem at one duration.
#[derive(Clone, Debug)]
struct DurationKernel {
    duration: f64,
    phi: Matrix6<f64>,
    inv: Option<Matrix6<f64>>,
}

impl DurationKernel {
    fn new(model: &OrbitModel, duration: f64) -> Self {
        let phi = stm(model, duration).phi;
        let m = impulse_matrix(model, duration);
        let inv = m
            .try_inverse()
            .filter(|inv| condition_1(&m, inv) <= MAX_CONDITION);
        Self { duration, phi, inv }
    }

    #[inline]
    fn solve(&self, x0: &Vector6<f64>, xf: &Vector6<f64>) -> Option<(Vector3<f64>, Vector3<f64>)> {
        let inv = self.inv.as_ref()?;
        let dv = inv * (xf - self.phi * x0);
        Some((
            Vector3::new(dv[0], dv[1], dv[2]),
            Vector3::new(dv[3], dv[4], dv[5]),
        ))
    }
}

/// Exact two-impulse solution for a prescribed duration.
pub fn steer_fixed_t(
    model: &OrbitModel,
    x0: &State,
    xf: &State,
    duration: f64,
) -> Result<SteeringSolution, SteeringError> {
    let m = impulse_matrix(model, duration);
    let inv = m.try_inverse();
    let condition = inv.as_ref().map_or(f64::INFINITY, |inv| condition_1(&m, inv));
    let Some(inv) = inv.filter(|_| condition <= MAX_CONDITION) else {
        return Err(SteeringError::SingularDuration {
            duration,
            condition,
        });
    };
    let phi = stm(model, duration).phi;
    let dv = inv * (xf.to_vector() - phi * x0.to_vector());
    Ok(SteeringSolution::new(
        Vector3::new(dv[0], dv[1], dv[2]),
        Vector3::new(dv[3], dv[4], dv[5]),
        duration,
    ))
}

/// Reusable solver holding the coarse duration grid for one orbit and limit set.
///
/// Building one costs a few dozen 6x6 inversions; each subsequent solve only
/// does matrix-vector products on the grid plus a handful of fresh kernels in
/// refinement.
#[derive(Clone, Debug)]
pub struct Steerer {
    model: OrbitModel,
    limits: SteeringLimits,
    grid: Vec<DurationKernel>,
}

impl Steerer {
    pub fn new(model: OrbitModel, limits: SteeringLimits) -> Result<Self, SteeringError> {
        limits.validate(&model)?;
        let step = limits.t_max / limits.t_grid as f64;
        let grid = (1..=limits.t_grid)
            .map(|k| DurationKernel::new(&model, step * k as f64))
            .collect();
        Ok(Self {
            model,
            limits,
            grid,
        })
    }

    pub fn model(&self) -> &OrbitModel {
        &self.model
    }

    pub fn limits(&self) -> &SteeringLimits {
        &self.limits
    }

    pub fn grid_durations(&self) -> impl Iterator<Item = f64> + '_ {
        self.grid.iter().map(|k| k.duration)
    }

    fn admissible(&self, dv1: &Vector3<f64>, dv2: &Vector3<f64>) -> bool {
        dv1.norm() <= self.limits.dv_max && dv2.norm() <= self.limits.dv_max
    }

    fn eval(&self, kernel: &DurationKernel, x0: &Vector6<f64>, xf: &Vector6<f64>) -> f64 {
        match kernel.solve(x0, xf) {
            Some((a, b)) if self.admissible(&a, &b) => a.norm() + b.norm(),
            _ => f64::INFINITY,
        }
    }

    fn eval_at(&self, duration: f64, x0: &Vector6<f64>, xf: &Vector6<f64>) -> f64 {
        self.eval(&DurationKernel::new(&self.model, duration), x0, xf)
    }

    /// Cost at every grid duration (infinite where singular or over the cap).
    pub fn grid_costs(&self, x0: &State, xf: &State) -> Vec<f64> {
        let (a, b) = (x0.to_vector(), xf.to_vector());
        self.grid.iter().map(|k| self.eval(k, &a, &b)).collect()
    }

    /// Stacked impulse norm at every grid duration.
    pub fn grid_stacked_norms(&self, x0: &State, xf: &State) -> Vec<f64> {
        let (a, b) = (x0.to_vector(), xf.to_vector());
        self.grid
            .iter()
            .map(|k| {
                k.solve(&a, &b)
                    .map_or(f64::INFINITY, |(p, q)| (p.norm_squared() + q.norm_squared()).sqrt())
            })
            .collect()
    }

    /// Golden-section search of the cost on `[lo, hi]`.
    fn golden(&self, mut lo: f64, mut hi: f64, x0: &Vector6<f64>, xf: &Vector6<f64>) -> (f64, f64) {
        const INV_PHI: f64 = 0.618_033_988_749_894_9;
        let mut c = hi - INV_PHI * (hi - lo);
        let mut d = lo + INV_PHI * (hi - lo);
        let mut fc = self.eval_at(c, x0, xf);
        let mut fd = self.eval_at(d, x0, xf);
        while hi - lo > self.limits.refine_tol {
            if fc <= fd {
                hi = d;
                d = c;
                fd = fc;
                c = hi - INV_PHI * (hi - lo);
                fc = self.eval_at(c, x0, xf);
            } else {
                lo = c;
                c = d;
                fc = fd;
                d = lo + INV_PHI * (hi - lo);
                fd = self.eval_at(d, x0, xf);
            }
        }
        if fc <= fd {
            (c, fc)
        } else {
            (d, fd)
        }
    }

    /// Best duration over the grid and refined local minima.
    fn best_duration(&self, x0: &Vector6<f64>, xf: &Vector6<f64>, costs: &[f64]) -> Option<(f64, f64)> {
        let n = costs.len();
        let step = self.limits.t_max / n as f64;
        let mut best: Option<(f64, f64)> = None;
        let mut consider = |t: f64, c: f64| {
            if c.is_finite() && best.map_or(true, |(_, bc)| c < bc) {
                best = Some((t, c));
            }
        };
        for (k, &c) in costs.iter().enumerate() {
            consider(self.grid[k].duration, c);
        }
        for k in 0..n {
            let c = costs[k];
            if !c.is_finite() {
                continue;
            }
            let left = if k == 0 { f64::INFINITY } else { costs[k - 1] };
            let right = if k + 1 == n { f64::INFINITY } else { costs[k + 1] };
            if c <= left && c <= right {
                // Left bracket of the first grid point stops short of the
                // singular duration T = 0.
                let lo = if k == 0 { step * 1e-3 } else { self.grid[k - 1].duration };
                let hi = if k + 1 == n { self.grid[k].duration } else { self.grid[k + 1].duration };
                let (t, fc) = self.golden(lo, hi, x0, xf);
                consider(t, fc);
            }
        }
        best
    }

    /// Minimum-cost two-impulse transfer over durations in `[0, t_max]`.
    pub fn solve(&self, x0: &State, xf: &State) -> Result<SteeringSolution, SteeringError> {
        let (a, b) = (x0.to_vector(), xf.to_vector());
        let costs: Vec<f64> = self.grid.iter().map(|k| self.eval(k, &a, &b)).collect();
        self.finish(x0, xf, &a, &b, &costs)
    }

    /// Like [`Steerer::solve`] but returns `None` without refining when every
    /// grid duration already needs a stacked impulse of at least
    /// `prune_factor * j_bar`, so the pair cannot be a neighbour.
    pub fn solve_within(
        &self,
        x0: &State,
        xf: &State,
        j_bar: f64,
        prune_factor: f64,
    ) -> Option<SteeringSolution> {
        let (a, b) = (x0.to_vector(), xf.to_vector());
        let mut costs = Vec::with_capacity(self.grid.len());
        let mut outside = true;
        let threshold = prune_factor * j_bar;
        for k in &self.grid {
            match k.solve(&a, &b) {
                Some((p, q)) => {
                    if (p.norm_squared() + q.norm_squared()).sqrt() < threshold {
                        outside = false;
                    }
                    costs.push(if self.admissible(&p, &q) {
                        p.norm() + q.norm()
                    } else {
                        f64::INFINITY
                    });
                }
                None => costs.push(f64::INFINITY),
            }
        }
        if outside && x0.r != xf.r {
            return None;
        }
        self.finish(x0, xf, &a, &b, &costs).ok()
    }

    fn finish(
        &self,
        x0: &State,
        xf: &State,
        a: &Vector6<f64>,
        b: &Vector6<f64>,
        costs: &[f64],
    ) -> Result<SteeringSolution, SteeringError> {
        let mut best: Option<SteeringSolution> = None;
        if x0.r == xf.r {
            let dv = xf.v - x0.v;
            if dv.norm() <= self.limits.dv_max {
                best = Some(SteeringSolution::new(Vector3::zeros(), dv, 0.0));
            }
        }
        if let Some((t, c)) = self.best_duration(a, b, costs) {
            if best.map_or(true, |s| c < s.cost) {
                let kernel = DurationKernel::new(&self.model, t);
                let (dv1, dv2) = kernel.solve(a, b).expect("finite cost implies a solvable kernel");
                best = Some(SteeringSolution::new(dv1, dv2, t));
            }
        }
        best.ok_or(SteeringError::NoFeasibleSolution {
            t_max: self.limits.t_max,
            dv_max: self.limits.dv_max,
        })
    }
}

/// Minimum-fuel two-impulse transfer from `x0` to `xf` within `limits`.
pub fn solve_2pbvp(
    model: &OrbitModel,
    x0: &State,
    xf: &State,
    limits: &SteeringLimits,
) -> Result<SteeringSolution, SteeringError> {
    Steerer::new(*model, *limits)?.solve(x0, xf)
}

/// Steering cost `J(x0, xf)`; `+inf` when no admissible transfer exists.
pub fn steering_cost(model: &OrbitModel, x0: &State, xf: &State, limits: &SteeringLimits) -> f64 {
    solve_2pbvp(model, x0, xf, limits).map_or(f64::INFINITY, |s| s.cost)
}
