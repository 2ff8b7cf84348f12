//! Post-processing of a planned burn schedule: re-optimise the impulse
//! vectors at the fixed burn times, then move towards that optimum as far as
//! the safety and feasibility checks allow.

use nalgebra::{DMatrix, DVector, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cwh::{stm, stacked_impulse_matrix, BurnSchedule, Impulse, OrbitModel, State};
use crate::socp::{self, SocpError, SocpOptions, SocpProblem};

/// Largest boundary-condition error accepted for a smoothed schedule.
pub const BC_TOL: f64 = 1e-8;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SmoothingError {
    #[error("fixed-time fuel problem failed: {0}")]
    Socp(#[from] SocpError),
    #[error("schedule has no burns")]
    EmptySchedule,
}

/// Minimum-fuel impulses at fixed burn times `times` (all `<= t_final`)
/// moving `x_init` at time 0 to `x_goal` at `t_final`, with each impulse
/// at most `dv_max`.
///
/// When every out-of-plane component of the data vanishes the problem is
/// solved in the plane with two-dimensional blocks.
pub fn min_fuel_fixed_times(
    model: &OrbitModel,
    x_init: &State,
    x_goal: &State,
    times: &[f64],
    t_final: f64,
    dv_max: f64,
    opts: &SocpOptions,
) -> Result<(Vec<Vector3<f64>>, f64, f64), SmoothingError> {
    if times.is_empty() {
        return Err(SmoothingError::EmptySchedule);
    }
    let m = stacked_impulse_matrix(model, t_final, times);
    let b = x_goal.to_vector() - stm(model, t_final).phi * x_init.to_vector();
    let planar = b[2] == 0.0 && b[5] == 0.0;
    let n = times.len();
    let (mp, bp, block) = if planar {
        let rows = [0usize, 1, 3, 4];
        let mut mp = DMatrix::zeros(4, 2 * n);
        for (ri, &r) in rows.iter().enumerate() {
            for i in 0..n {
                mp[(ri, 2 * i)] = m[(r, 3 * i)];
                mp[(ri, 2 * i + 1)] = m[(r, 3 * i + 1)];
            }
        }
        (mp, DVector::from_iterator(4, rows.iter().map(|&r| b[r])), 2)
    } else {
        (m, DVector::from_column_slice(b.as_slice()), 3)
    };
    let sol = socp::solve(
        &SocpProblem {
            m: mp,
            b: bp,
            block,
            cap: dv_max,
        },
        opts,
    )?;
    let dvs = sol
        .u
        .as_slice()
        .chunks(block)
        .map(|c| Vector3::new(c[0], c[1], if block == 3 { c[2] } else { 0.0 }))
        .collect();
    Ok((dvs, sol.objective, sol.dual_bound))
}

/// Per-burn convex combination `(1 - alpha) a + alpha b` at matching times.
pub fn blend(nominal: &BurnSchedule, target: &[Vector3<f64>], alpha: f64) -> BurnSchedule {
    let imps = nominal
        .impulses()
        .iter()
        .zip(target)
        .map(|(imp, t)| Impulse::new(imp.dv * (1.0 - alpha) + t * alpha, imp.tau))
        .collect();
    BurnSchedule::from_impulses(imps)
}

/// Boundary-condition error of `sched` from `x_init` to `x_goal` at `t_final`.
pub fn boundary_error(model: &OrbitModel, x_init: &State, x_goal: &State, sched: &BurnSchedule, t_final: f64) -> f64 {
    let xf = crate::cwh::propagate_schedule(model, x_init, sched, t_final);
    (xf.to_vector() - x_goal.to_vector()).amax()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SmoothingOptions {
    /// Bisection resolution on the blend parameter.
    pub alpha_tol: f64,
    pub socp: SocpOptions,
}

impl Default for SmoothingOptions {
    fn default() -> Self {
        Self {
            alpha_tol: 1.0 / 64.0,
            socp: SocpOptions::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SmoothingOutcome {
    pub alpha: f64,
    pub schedule: BurnSchedule,
    pub cost: f64,
    /// Cost of the unconstrained fixed-time optimum.
    pub optimum_cost: f64,
    /// Certified lower bound on the fixed-time optimum.
    pub optimum_bound: f64,
    pub evaluations: usize,
}

/// Largest blend parameter on a bisection grid for which `feasible` accepts
/// the blended schedule, its boundary error is within [`BC_TOL`], and its
/// cost does not exceed the nominal cost. `alpha = 0` returns the nominal
/// schedule unchanged.
#[allow(clippy::too_many_arguments)]
pub fn smooth<F>(
    model: &OrbitModel,
    x_init: &State,
    x_goal: &State,
    nominal: &BurnSchedule,
    t_final: f64,
    dv_max: f64,
    opts: &SmoothingOptions,
    feasible: F,
) -> Result<SmoothingOutcome, SmoothingError>
where
    F: Fn(&BurnSchedule) -> bool,
{
    let times = nominal.times();
    let (target, optimum_cost, optimum_bound) =
        min_fuel_fixed_times(model, x_init, x_goal, &times, t_final, dv_max, &opts.socp)?;
    let nominal_cost = nominal.cost();
    let accept = |s: &BurnSchedule| {
        s.cost() <= nominal_cost && boundary_error(model, x_init, x_goal, s, t_final) <= BC_TOL && feasible(s)
    };
    let max_evals = (1.0 / opts.alpha_tol).log2().ceil() as usize + 1;
    let mut evaluations = 1;
    let full = blend(nominal, &target, 1.0);
    let (alpha, schedule) = if accept(&full) {
        (1.0, full)
    } else {
        let (mut lo, mut hi) = (0.0f64, 1.0f64);
        let mut best = nominal.clone();
        while evaluations < max_evals && hi - lo > opts.alpha_tol {
            let mid = 0.5 * (lo + hi);
            let cand = blend(nominal, &target, mid);
            evaluations += 1;
            if accept(&cand) {
                lo = mid;
                best = cand;
            } else {
                hi = mid;
            }
        }
        (lo, best)
    };
    let cost = schedule.cost();
    Ok(SmoothingOutcome {
        alpha,
        schedule,
        cost,
        optimum_cost,
        optimum_bound,
        evaluations,
    })
}
