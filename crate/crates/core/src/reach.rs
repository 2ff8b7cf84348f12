//! Cost-threshold reachability: exact neighbour sets and the ellipsoidal
//! bounds obtained from the controllability Gramian.
//!
//! For a fixed duration `T` the stacked two-impulse vector is
//! `dV = Phi_v^{-1} d` with `d = x_f - Phi(T) x_0`, so
//! `|dV|^2 = d^T G^{-1} d` with `G = Phi_v Phi_v^T`. Because the two-impulse
//! cost `J` satisfies `|dV| <= J <= sqrt(2) |dV|`, the level sets of
//! `d^T G^{-1} d` sandwich the reachable set at every duration.

use nalgebra::{Matrix6, SymmetricEigen};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cwh::{impulse_matrix, stm, OrbitModel, State};
use crate::steering::{Steerer, SteeringLimits, SteeringSolution};

/// Grid pairs whose stacked impulse is at least this multiple of the
/// threshold at every grid duration are skipped before refinement.
pub const PRUNE_FACTOR: f64 = 2.0;

/// Neighbour-set parameters.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReachSpec {
    pub j_bar: f64,
    pub limits: SteeringLimits,
}

/// Controllability Gramian `G(T) = Phi_v Phi_v^T` of the two-impulse map.
pub fn gramian(model: &OrbitModel, t: f64) -> Matrix6<f64> {
    let m = impulse_matrix(model, t);
    m * m.transpose()
}

/// Extreme eigenvalues `(lambda_min, lambda_max)` of `G(T)`.
pub fn gramian_extremes(model: &OrbitModel, t: f64) -> (f64, f64) {
    let eig = SymmetricEigen::new(gramian(model, t)).eigenvalues;
    (eig.min(), eig.max())
}

/// Fitted constants of the Gramian eigenvalue bounds on `(0, t_max]`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GramianBounds {
    /// `min_T lambda_min(G(T)) / T^2` over the scan.
    pub m_min: f64,
    /// Analytic bound `(exp(|A| t_max) + 1)^2` with the spectral norm of `A`.
    pub m_max: f64,
}

/// Scans `points` durations on `(0, t_max]`.
pub fn fit_gramian_bounds(model: &OrbitModel, t_max: f64, points: usize) -> GramianBounds {
    let a_norm = model.dynamics_matrix().singular_values().max();
    let m_max = ((a_norm * t_max).exp() + 1.0).powi(2);
    let m_min = (1..=points)
        .map(|k| {
            let t = t_max * k as f64 / points as f64;
            gramian_extremes(model, t).0 / (t * t)
        })
        .fold(f64::INFINITY, f64::min);
    GramianBounds { m_min, m_max }
}

/// Classification of an end state against the ellipsoidal bounds at one
/// duration.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum ReachClass {
    /// Cost at this duration is surely below the threshold.
    InsideInner,
    /// Not decided by the bounds.
    Annulus,
    /// Cost at this duration is surely at least the threshold.
    OutsideOuter,
}

/// Compares `x_f` with the ellipsoids centred at the coast point
/// `Phi(T) x_0`: the inner one has shape matrix `2 G^{-1} / J^2` and the
/// outer one `G^{-1} / J^2`.
pub fn reach_bounds_contains(model: &OrbitModel, x0: &State, xf: &State, t: f64, j_bar: f64) -> ReachClass {
    let d = xf.to_vector() - stm(model, t).phi * x0.to_vector();
    let Some(dv) = impulse_matrix(model, t).try_inverse().map(|inv| inv * d) else {
        return ReachClass::Annulus;
    };
    let q = dv.norm_squared();
    let jb2 = j_bar * j_bar;
    if 2.0 * q < jb2 {
        ReachClass::InsideInner
    } else if q >= jb2 {
        ReachClass::OutsideOuter
    } else {
        ReachClass::Annulus
    }
}

/// One stored neighbour: target sample index and the steering solution.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Edge {
    pub to: usize,
    pub sol: SteeringSolution,
}

/// Directed neighbour lists with cost below the threshold.
#[derive(Clone, Debug, PartialEq, Default, Serialize, Deserialize)]
pub struct NeighborSets {
    /// `fwd[i]`: edges leaving sample `i`, sorted by target index.
    pub fwd: Vec<Vec<Edge>>,
    /// `bwd[j]`: `(i, k)` with `fwd[i][k].to == j`, sorted by `i`.
    pub bwd: Vec<Vec<(usize, usize)>>,
}

impl NeighborSets {
    pub fn from_forward(fwd: Vec<Vec<Edge>>) -> Self {
        let mut bwd = vec![Vec::new(); fwd.len()];
        for (i, row) in fwd.iter().enumerate() {
            for (k, e) in row.iter().enumerate() {
                bwd[e.to].push((i, k));
            }
        }
        Self { fwd, bwd }
    }

    pub fn edge_count(&self) -> usize {
        self.fwd.iter().map(Vec::len).sum()
    }

    /// Edge `i -> j` if present.
    pub fn edge(&self, i: usize, j: usize) -> Option<&Edge> {
        self.fwd[i]
            .binary_search_by_key(&j, |e| e.to)
            .ok()
            .map(|k| &self.fwd[i][k])
    }

    /// Keeps only edges with cost below `j_bar`.
    pub fn restricted(&self, j_bar: f64) -> Self {
        Self::from_forward(
            self.fwd
                .iter()
                .map(|row| row.iter().copied().filter(|e| e.sol.cost < j_bar).collect())
                .collect(),
        )
    }
}

/// Forward row from `x` to every target with cost below `j_bar`.
pub fn forward_row(steerer: &Steerer, x: &State, targets: &[State], j_bar: f64, prune: bool, skip: Option<usize>) -> Vec<Edge> {
    targets
        .iter()
        .enumerate()
        .filter(|(j, _)| Some(*j) != skip)
        .filter_map(|(j, y)| {
            let sol = if prune {
                steerer.solve_within(x, y, j_bar, PRUNE_FACTOR)?
            } else {
                steerer.solve(x, y).ok()?
            };
            (sol.cost < j_bar).then_some(Edge { to: j, sol })
        })
        .collect()
}

/// All-pairs neighbour sets; `prune` enables the ellipsoid prefilter.
pub fn build_neighbor_sets(model: &OrbitModel, samples: &[State], spec: &ReachSpec, prune: bool) -> NeighborSets {
    let steerer = Steerer::new(*model, spec.limits).expect("steering limits validated by caller");
    let fwd: Vec<Vec<Edge>> = (0..samples.len())
        .into_par_iter()
        .map(|i| forward_row(&steerer, &samples[i], samples, spec.j_bar, prune, Some(i)))
        .collect();
    NeighborSets::from_forward(fwd)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sampling::halton;

    fn model() -> OrbitModel {
        OrbitModel::leo_705km()
    }

    #[test]
    fn gramian_is_symmetric() {
        let m = model();
        let g = gramian(&m, 250.0);
        assert!((g - g.transpose()).amax() <= 1e-12 * g.amax());
    }

    #[test]
    fn coast_point_is_inside_inner() {
        let m = model();
        let x0 = State::new([10.0, 20.0, 3.0], [0.1, -0.2, 0.01]);
        let xf = crate::cwh::propagate_coast(&m, &x0, 300.0);
        assert_eq!(reach_bounds_contains(&m, &x0, &xf, 300.0, 1e-6), ReachClass::InsideInner);
    }

    #[test]
    fn doubling_threshold_doubles_semi_axes() {
        let m = model();
        let x0 = State::new([10.0, 20.0, 0.0], [0.1, -0.2, 0.0]);
        let coast = crate::cwh::propagate_coast(&m, &x0, 300.0);
        let off = State::new([5.0, -4.0, 0.0], [0.01, 0.0, 0.0]);
        let p = |s: f64| State::from_vector(&(coast.to_vector() + off.to_vector() * s));
        for s in [0.3, 1.0, 3.0] {
            assert_eq!(
                reach_bounds_contains(&m, &x0, &p(s), 300.0, 0.1),
                reach_bounds_contains(&m, &x0, &p(2.0 * s), 300.0, 0.2)
            );
        }
    }

    #[test]
    fn tiny_threshold_gives_empty_lists_and_duplicates_connect() {
        let m = model();
        let spec = ReachSpec {
            j_bar: 1e-12,
            limits: SteeringLimits::for_orbit(&m),
        };
        let pts: Vec<State> = (1..=20)
            .map(|i| {
                let u = halton(i, 4);
                State::new([u[0] * 200.0 - 100.0, u[1] * 400.0 - 200.0, 0.0], [u[2] * 0.2 - 0.1, u[3] * 0.2 - 0.1, 0.0])
            })
            .collect();
        let ns = build_neighbor_sets(&m, &pts, &spec, true);
        assert_eq!(ns.edge_count(), 0);

        let dup = vec![pts[3], pts[3]];
        let ns = build_neighbor_sets(&m, &dup, &spec, true);
        assert_eq!(ns.edge(0, 1).unwrap().sol.cost, 0.0);
        assert_eq!(ns.edge(1, 0).unwrap().sol.cost, 0.0);
    }

    #[test]
    fn duality_of_lists() {
        let m = model();
        let spec = ReachSpec {
            j_bar: 0.3,
            limits: SteeringLimits::for_orbit(&m),
        };
        let pts: Vec<State> = (1..=40)
            .map(|i| {
                let u = halton(i, 4);
                State::new([u[0] * 200.0 - 100.0, u[1] * 400.0 - 200.0, 0.0], [u[2] * 0.2 - 0.1, u[3] * 0.2 - 0.1, 0.0])
            })
            .collect();
        let ns = build_neighbor_sets(&m, &pts, &spec, true);
        for (i, row) in ns.fwd.iter().enumerate() {
            for (k, e) in row.iter().enumerate() {
                assert!(ns.bwd[e.to].contains(&(i, k)));
                assert!(e.sol.cost < 0.3);
            }
        }
        let total: usize = ns.bwd.iter().map(Vec::len).sum();
        assert_eq!(total, ns.edge_count());
    }
}
