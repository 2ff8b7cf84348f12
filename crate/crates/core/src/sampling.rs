//! Deterministic Halton sampling of per-leg state spaces and goal regions.

use nalgebra::Vector3;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cwh::{OrbitModel, State};
use crate::geometry::StateSpaceBox;

/// First six primes, one Halton base per dimension.
pub const HALTON_BASES: [u64; 6] = [2, 3, 5, 7, 11, 13];

/// Window over which acceptance is monitored for stalls.
pub const STALL_WINDOW: usize = 10_000;
/// A window with this many acceptances or fewer counts as stalled.
pub const STALL_MAX_ACCEPTED: usize = 10;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum SamplingError {
    #[error("sampling stalled: {accepted} of {window} recent draws accepted while collecting {phase} samples")]
    SamplingExhausted {
        phase: &'static str,
        accepted: usize,
        window: usize,
    },
}

/// Radical inverse of `index` in `base`.
pub fn radical_inverse(mut index: u64, base: u64) -> f64 {
    let inv = 1.0 / base as f64;
    let mut f = inv;
    let mut out = 0.0;
    while index > 0 {
        out += f * (index % base) as f64;
        index /= base;
        f *= inv;
    }
    out
}

/// Halton point number `index` (starting at 1) in `dim <= 6` dimensions.
pub fn halton(index: u64, dim: usize) -> Vec<f64> {
    assert!(index >= 1, "Halton indices start at 1");
    assert!(dim <= HALTON_BASES.len(), "at most six Halton dimensions");
    HALTON_BASES[..dim].iter().map(|&b| radical_inverse(index, b)).collect()
}

/// Ball or point goal region: position within `eps_r`, velocity within
/// `eps_v` of `center`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GoalRegion {
    pub center: State,
    pub eps_r: f64,
    pub eps_v: f64,
}

impl GoalRegion {
    pub fn is_exact(&self) -> bool {
        self.eps_r == 0.0 && self.eps_v == 0.0
    }

    pub fn contains(&self, x: &State) -> bool {
        (x.r - self.center.r).norm() <= self.eps_r && (x.v - self.center.v).norm() <= self.eps_v
    }
}

/// Hyper-rectangular sample space of one leg.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SampleSpace {
    pub bounds: StateSpaceBox,
    pub planar: bool,
}

impl SampleSpace {
    pub fn dim(&self) -> usize {
        if self.planar {
            4
        } else {
            6
        }
    }

    /// Box around a leg's start and goal states.
    ///
    /// Positions span both endpoints plus `position_margin`. Radial velocity
    /// spans `+-velocity_margin`; in-track velocity spans the circular-orbit
    /// velocity `-1.5 omega x` over the radial range, widened by
    /// `velocity_margin`. Endpoint velocities are always included.
    pub fn around(
        model: &OrbitModel,
        start: &State,
        goal: &State,
        position_margin: f64,
        velocity_margin: f64,
        planar: bool,
    ) -> Self {
        let w = model.omega();
        let mut lo = [0.0; 6];
        let mut hi = [0.0; 6];
        for i in 0..3 {
            lo[i] = start.r[i].min(goal.r[i]) - position_margin;
            hi[i] = start.r[i].max(goal.r[i]) + position_margin;
        }
        let circ_a = -1.5 * w * lo[0];
        let circ_b = -1.5 * w * hi[0];
        lo[3] = -velocity_margin;
        hi[3] = velocity_margin;
        lo[4] = circ_a.min(circ_b) - velocity_margin;
        hi[4] = circ_a.max(circ_b) + velocity_margin;
        lo[5] = -velocity_margin;
        hi[5] = velocity_margin;
        for i in 3..6 {
            lo[i] = lo[i].min(start.v[i - 3]).min(goal.v[i - 3]);
            hi[i] = hi[i].max(start.v[i - 3]).max(goal.v[i - 3]);
        }
        if planar {
            lo[2] = 0.0;
            hi[2] = 0.0;
            lo[5] = 0.0;
            hi[5] = 0.0;
        }
        Self {
            bounds: StateSpaceBox { lower: lo, upper: hi },
            planar,
        }
    }

    /// Maps a unit-cube point to a state in the box.
    pub fn scale(&self, u: &[f64]) -> State {
        let b = &self.bounds;
        let lerp = |i: usize, t: f64| b.lower[i] + t * (b.upper[i] - b.lower[i]);
        if self.planar {
            State::new([lerp(0, u[0]), lerp(1, u[1]), 0.0], [lerp(3, u[2]), lerp(4, u[3]), 0.0])
        } else {
            State::new(
                [lerp(0, u[0]), lerp(1, u[1]), lerp(2, u[2])],
                [lerp(3, u[3]), lerp(4, u[4]), lerp(5, u[5])],
            )
        }
    }

    /// Maps a unit-cube point into the goal ball. Each of the position and
    /// velocity blocks goes through the radial cube-to-ball map
    /// `c * |c|_inf / |c|_2` on `[-1, 1]^k`.
    pub fn scale_goal(&self, u: &[f64], goal: &GoalRegion) -> State {
        let k = if self.planar { 2 } else { 3 };
        let to_ball = |c: &[f64]| -> Vector3<f64> {
            let mut v = Vector3::zeros();
            for (i, x) in c.iter().enumerate() {
                v[i] = 2.0 * x - 1.0;
            }
            let n2 = v.norm();
            if n2 == 0.0 {
                return v;
            }
            v * (v.amax() / n2)
        };
        let dr = to_ball(&u[..k]) * goal.eps_r;
        let dv = to_ball(&u[k..2 * k]) * goal.eps_v;
        State {
            r: goal.center.r + dr,
            v: goal.center.v + dv,
        }
    }
}

/// Accepted samples of one leg: `n` space samples followed by `n_goal`
/// goal-region samples.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SampleSet {
    pub states: Vec<State>,
    pub n: usize,
    pub n_goal: usize,
}

impl SampleSet {
    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn is_goal(&self, i: usize) -> bool {
        i >= self.n && i < self.n + self.n_goal
    }
}

/// Draws Halton candidates in order, keeping those accepted by `filter`,
/// until `count` are kept. Candidates are filtered in parallel batches and
/// merged in index order.
fn draw<F, M>(count: usize, map: M, filter: &F, phase: &'static str) -> Result<Vec<(State, usize)>, SamplingError>
where
    F: Fn(&State) -> bool + Sync,
    M: Fn(u64) -> State + Sync,
{
    let mut out = Vec::with_capacity(count);
    let mut index: u64 = 1;
    // Acceptance flags of the most recent draws.
    let mut recent = std::collections::VecDeque::with_capacity(STALL_WINDOW);
    let mut recent_accepted = 0usize;
    while out.len() < count {
        let batch = (2 * (count - out.len())).clamp(64, 4096) as u64;
        let results: Vec<(State, bool)> = (index..index + batch)
            .into_par_iter()
            .map(|i| {
                let s = map(i);
                (s, filter(&s))
            })
            .collect();
        for (offset, (s, ok)) in results.into_iter().enumerate() {
            if out.len() == count {
                break;
            }
            if ok {
                out.push((s, index as usize + offset));
            }
            recent.push_back(ok);
            recent_accepted += ok as usize;
            if recent.len() > STALL_WINDOW {
                recent_accepted -= recent.pop_front().unwrap() as usize;
            }
            if recent.len() == STALL_WINDOW && recent_accepted <= STALL_MAX_ACCEPTED {
                return Err(SamplingError::SamplingExhausted {
                    phase,
                    accepted: recent_accepted,
                    window: STALL_WINDOW,
                });
            }
        }
        index += batch;
    }
    Ok(out)
}

/// Builds the sample set of one leg.
///
/// `filter` must accept exactly the states that are collision-free and
/// certified safe. In exact goal mode the goal state itself is the single
/// goal sample (and must pass the filter).
pub fn sample_free<F>(
    space: &SampleSpace,
    n: usize,
    goal: &GoalRegion,
    n_goal: usize,
    filter: F,
) -> Result<SampleSet, SamplingError>
where
    F: Fn(&State) -> bool + Sync,
{
    let d = space.dim();
    let mut states: Vec<State> = draw(n, |i| space.scale(&halton(i, d)), &filter, "state-space")?
        .into_iter()
        .map(|(s, _)| s)
        .collect();
    let goal_states: Vec<State> = if goal.is_exact() {
        if filter(&goal.center) {
            vec![goal.center]
        } else {
            return Err(SamplingError::SamplingExhausted {
                phase: "goal",
                accepted: 0,
                window: 1,
            });
        }
    } else {
        draw(n_goal, |i| space.scale_goal(&halton(i, d), goal), &filter, "goal")?
            .into_iter()
            .map(|(s, _)| s)
            .collect()
    };
    let n_goal = goal_states.len();
    states.extend(goal_states);
    Ok(SampleSet { states, n, n_goal })
}
