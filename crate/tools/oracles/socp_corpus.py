"""Reference optima for fixed-time minimum-fuel impulse problems.

Each case fixes burn times and asks for the impulses that move x_init to
x_goal at t_final with the least sum of Euclidean impulse norms, optionally
with a per-impulse norm cap. The state transition matrix is the matrix
exponential of the CWH system matrix, evaluated by scipy, and the conic
problem is solved by cvxpy (Clarabel) at tight tolerances.

Usage: python3 socp_corpus.py > crates/core/tests/fixtures/socp_corpus.json
"""

import json
import sys

import cvxpy as cp
import numpy as np
from scipy.linalg import expm


def system_matrix(w):
    a = np.zeros((6, 6))
    a[0:3, 3:6] = np.eye(3)
    a[3, 0] = 3 * w * w
    a[3, 4] = 2 * w
    a[4, 3] = -2 * w
    a[5, 2] = -w * w
    return a


def solve(w, x0, xf, times, tf, cap, planar):
    a = system_matrix(w)
    b_in = np.vstack([np.zeros((3, 3)), np.eye(3)])
    rhs = xf - expm(a * tf) @ x0
    dim = 2 if planar else 3
    rows = [0, 1, 3, 4] if planar else list(range(6))
    u = [cp.Variable(dim) for _ in times]
    lhs = 0
    for uk, tk in zip(u, times):
        g = (expm(a * (tf - tk)) @ b_in)[rows, :dim]
        lhs = lhs + g @ uk
    cons = [lhs == rhs[rows]]
    if np.isfinite(cap):
        cons += [cp.norm(uk, 2) <= cap for uk in u]
    prob = cp.Problem(cp.Minimize(sum(cp.norm(uk, 2) for uk in u)), cons)
    prob.solve(
        solver=cp.CLARABEL,
        tol_gap_abs=1e-12,
        tol_gap_rel=1e-12,
        tol_feas=1e-12,
        max_iter=500,
    )
    if prob.status != cp.OPTIMAL:
        return None, None
    burns = [np.pad(uk.value, (0, 3 - dim)).tolist() for uk in u]
    return float(prob.value), burns


def main():
    rng = np.random.default_rng(20240617)
    cases = []
    while len(cases) < 50:
        idx = len(cases)
        planar = idx % 2 == 0
        w = rng.uniform(0.9e-3, 1.2e-3)
        period = 2 * np.pi / w
        tf = rng.uniform(0.05, 0.3) * period
        k = int(rng.integers(2, 7))
        times = np.sort(rng.uniform(0.0, tf, size=k))
        times[0] = 0.0
        x0 = np.concatenate([rng.uniform(-200, 200, 3), rng.uniform(-0.3, 0.3, 3)])
        xf = np.concatenate([rng.uniform(-200, 200, 3), rng.uniform(-0.3, 0.3, 3)])
        if planar:
            x0[[2, 5]] = 0.0
            xf[[2, 5]] = 0.0
        cap = float("inf")
        obj, burns = solve(w, x0, xf, times, tf, cap, planar)
        if obj is None:
            continue
        if idx % 5 == 4:
            largest = max(np.linalg.norm(b) for b in burns)
            cap = 0.9 * largest
            obj, burns = solve(w, x0, xf, times, tf, cap, planar)
            if obj is None:
                continue
        cases.append(
            {
                "omega": w,
                "x_init": x0.tolist(),
                "x_goal": xf.tolist(),
                "times": times.tolist(),
                "t_final": tf,
                "dv_max": cap if np.isfinite(cap) else None,
                "objective": obj,
                "burns": burns,
            }
        )
    json.dump({"solver": "cvxpy/clarabel", "cases": cases}, sys.stdout, indent=1)


if __name__ == "__main__":
    main()
