//! Independent reference implementations shared by the integration tests.
//!
//! Nothing here calls into the library's numerical kernels: propagation uses
//! an adaptive Dormand-Prince integrator or a generic matrix exponential, and
//! linear programs are solved by enumerating basic feasible solutions.

#![allow(dead_code)]

use std::path::PathBuf;

use nalgebra::{DMatrix, DVector, Matrix6, Matrix6x3, Vector6};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use cwhfmt::scenario::Scenario;

pub const OMEGA: f64 = 1.0592e-3;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn workspace_root() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../..")
}

pub fn default_scenario_path() -> PathBuf {
    workspace_root().join("scenarios/default_planar.toml")
}

pub fn default_scenario() -> Scenario {
    Scenario::from_path(&default_scenario_path()).expect("default scenario loads")
}

/// Linear CWH system matrix written out from the equations of motion.
pub fn system_matrix(w: f64) -> Matrix6<f64> {
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

pub fn input_matrix() -> Matrix6x3<f64> {
    let mut b = Matrix6x3::zeros();
    b[(3, 0)] = 1.0;
    b[(4, 1)] = 1.0;
    b[(5, 2)] = 1.0;
    b
}

/// State transition matrix by the generic matrix exponential.
pub fn expm_stm(w: f64, t: f64) -> Matrix6<f64> {
    (system_matrix(w) * t).exp()
}

/// Two-impulse map `[Phi(T) B | B]`.
pub fn impulse_matrix(w: f64, t: f64) -> Matrix6<f64> {
    let mut m = Matrix6::zeros();
    m.fixed_view_mut::<6, 3>(0, 0).copy_from(&(expm_stm(w, t) * input_matrix()));
    m.fixed_view_mut::<6, 3>(0, 3).copy_from(&input_matrix());
    m
}

/// Dormand-Prince 5(4) integration of `x' = A x` over `[0, t]`.
pub fn rk45(a: &Matrix6<f64>, x0: &Vector6<f64>, t: f64, rtol: f64, atol: f64) -> Vector6<f64> {
    const A: [[f64; 6]; 7] = [
        [0.0; 6],
        [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
        [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
        [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
        [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
        [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
        [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
    ];
    const B5: [f64; 7] = [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0, 0.0];
    const B4: [f64; 7] = [
        5179.0 / 57600.0,
        0.0,
        7571.0 / 16695.0,
        393.0 / 640.0,
        -92097.0 / 339200.0,
        187.0 / 2100.0,
        1.0 / 40.0,
    ];
    let mut x = *x0;
    let mut now = 0.0;
    let mut h = t / 200.0;
    while now < t {
        if now + h > t {
            h = t - now;
        }
        let mut k = [Vector6::zeros(); 7];
        k[0] = a * x;
        for s in 1..7 {
            let mut xs = x;
            for j in 0..s {
                xs += k[j] * (h * A[s][j]);
            }
            k[s] = a * xs;
        }
        let mut x5 = x;
        let mut x4 = x;
        for s in 0..7 {
            x5 += k[s] * (h * B5[s]);
            x4 += k[s] * (h * B4[s]);
        }
        let err = (0..6)
            .map(|i| (x5[i] - x4[i]).abs() / (atol + rtol * x[i].abs().max(x5[i].abs())))
            .fold(0.0, f64::max);
        if err <= 1.0 {
            now += h;
            x = x5;
        }
        let factor = if err == 0.0 { 5.0 } else { (0.9 * err.powf(-0.2)).clamp(0.2, 5.0) };
        h *= factor;
    }
    x
}

/// Two-impulse boundary solutions on `points` durations evenly spaced on
/// `(0, t_max]`, each solved directly.
pub struct DurationGrid {
    kernels: Vec<(Matrix6<f64>, Option<Matrix6<f64>>)>,
}

impl DurationGrid {
    pub fn new(w: f64, t_max: f64, points: usize) -> Self {
        let kernels = (1..=points)
            .map(|k| {
                let t = t_max * k as f64 / points as f64;
                (expm_stm(w, t), impulse_matrix(w, t).try_inverse())
            })
            .collect();
        Self { kernels }
    }

    /// Smallest `|dv1| + |dv2|` over the grid.
    pub fn min_cost(&self, x0: &Vector6<f64>, xf: &Vector6<f64>) -> f64 {
        self.kernels
            .iter()
            .filter_map(|(phi, inv)| {
                let dv = inv.as_ref()? * (xf - phi * x0);
                let c = dv.fixed_rows::<3>(0).norm() + dv.fixed_rows::<3>(3).norm();
                c.is_finite().then_some(c)
            })
            .fold(f64::INFINITY, f64::min)
    }
}

fn combinations(n: usize, k: usize, mut f: impl FnMut(&[usize])) {
    let mut idx: Vec<usize> = (0..k).collect();
    loop {
        f(&idx);
        let mut i = k;
        while i > 0 && idx[i - 1] == i - 1 + n - k {
            i -= 1;
        }
        if i == 0 {
            return;
        }
        idx[i - 1] += 1;
        for j in i..k {
            idx[j] = idx[j - 1] + 1;
        }
    }
}

/// `min sum x` subject to `A x = b`, `x >= 0`, by enumerating every basis of
/// `rank(A)` columns. `A` must have full row rank.
pub fn lp_vertex_min(a: &DMatrix<f64>, b: &DVector<f64>) -> Option<f64> {
    let (m, n) = a.shape();
    let scale = 1.0f64.max(b.amax());
    let mut best: Option<f64> = None;
    combinations(n, m, |cols| {
        let sub = DMatrix::from_fn(m, m, |i, j| a[(i, cols[j])]);
        let lu = sub.clone().lu();
        if lu.determinant().abs() < 1e-12 {
            return;
        }
        if let Some(x) = lu.solve(b) {
            if x.iter().all(|&v| v >= -1e-12 * scale) && (&sub * &x - b).amax() <= 1e-10 * scale {
                let f: f64 = x.iter().map(|v| v.max(0.0)).sum();
                if best.map_or(true, |c| f < c) {
                    best = Some(f);
                }
            }
        }
    });
    best
}
