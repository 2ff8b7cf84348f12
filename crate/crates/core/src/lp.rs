//! Dense two-phase simplex for small standard-form linear programs
//! `min c^T x  s.t.  A x = b, x >= 0`, using Bland's rule throughout so the
//! pivot sequence is deterministic and cannot cycle.

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

#[derive(Debug, Error, Clone, Copy, PartialEq, Eq)]
pub enum LpError {
    #[error("linear program is infeasible")]
    Infeasible,
    #[error("linear program is unbounded")]
    Unbounded,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LpSolution {
    pub x: DVector<f64>,
    pub objective: f64,
    /// Basic column per surviving (non-redundant) row.
    pub basis: Vec<usize>,
}

struct Tableau {
    t: DMatrix<f64>,
    basis: Vec<usize>,
    rhs: usize,
}

impl Tableau {
    fn pivot(&mut self, row: usize, col: usize) {
        let p = self.t[(row, col)];
        let cols = self.t.ncols();
        for j in 0..cols {
            self.t[(row, j)] /= p;
        }
        for i in 0..self.t.nrows() {
            if i == row {
                continue;
            }
            let f = self.t[(i, col)];
            if f != 0.0 {
                for j in 0..cols {
                    let v = self.t[(row, j)];
                    self.t[(i, j)] -= f * v;
                }
            }
        }
        self.basis[row] = col;
    }

    /// Runs Bland-rule iterations with the objective in the last row and
    /// only columns `< allowed` eligible to enter.
    fn optimise(&mut self, allowed: usize, tol: f64) -> Result<(), LpError> {
        let obj = self.t.nrows() - 1;
        let m = self.basis.len();
        loop {
            let Some(col) = (0..allowed).find(|&j| self.t[(obj, j)] < -tol) else {
                return Ok(());
            };
            let mut best: Option<(usize, f64)> = None;
            for i in 0..m {
                let a = self.t[(i, col)];
                if a > tol {
                    let ratio = self.t[(i, self.rhs)] / a;
                    best = match best {
                        None => Some((i, ratio)),
                        Some((bi, br)) => {
                            if ratio < br - tol || (ratio <= br + tol && self.basis[i] < self.basis[bi]) {
                                Some((i, ratio))
                            } else {
                                Some((bi, br))
                            }
                        }
                    };
                }
            }
            let Some((row, _)) = best else {
                return Err(LpError::Unbounded);
            };
            self.pivot(row, col);
        }
    }
}

/// Solves `min c^T x  s.t.  A x = b, x >= 0` with feasibility tolerance `tol`.
pub fn solve(a: &DMatrix<f64>, b: &DVector<f64>, c: &DVector<f64>, tol: f64) -> Result<LpSolution, LpError> {
    let (m, n) = a.shape();
    assert_eq!(b.len(), m);
    assert_eq!(c.len(), n);
    let rhs = n + m;
    let mut t = DMatrix::zeros(m + 1, n + m + 1);
    for i in 0..m {
        let s = if b[i] < 0.0 { -1.0 } else { 1.0 };
        for j in 0..n {
            t[(i, j)] = s * a[(i, j)];
        }
        t[(i, n + i)] = 1.0;
        t[(i, rhs)] = s * b[i];
    }
    // Phase 1 reduced costs: minimise the sum of artificials.
    for j in 0..n {
        t[(m, j)] = -(0..m).map(|i| t[(i, j)]).sum::<f64>();
    }
    t[(m, rhs)] = -(0..m).map(|i| t[(i, rhs)]).sum::<f64>();
    let mut tab = Tableau {
        t,
        basis: (n..n + m).collect(),
        rhs,
    };
    tab.optimise(n, tol)?;
    let scale = 1.0 + b.amax();
    if -tab.t[(m, rhs)] > tol * scale {
        return Err(LpError::Infeasible);
    }

    // Pivot remaining artificials out of the basis; rows where that is
    // impossible are linearly dependent and get dropped.
    let mut keep = vec![true; m];
    for i in 0..m {
        if tab.basis[i] >= n {
            match (0..n).find(|&j| tab.t[(i, j)].abs() > tol) {
                Some(j) => tab.pivot(i, j),
                None => keep[i] = false,
            }
        }
    }
    let rows: Vec<usize> = (0..m).filter(|&i| keep[i]).collect();
    let mut t2 = DMatrix::zeros(rows.len() + 1, n + 1);
    let mut basis = Vec::with_capacity(rows.len());
    for (r, &i) in rows.iter().enumerate() {
        for j in 0..n {
            t2[(r, j)] = tab.t[(i, j)];
        }
        t2[(r, n)] = tab.t[(i, rhs)];
        basis.push(tab.basis[i]);
    }
    let k = rows.len();
    for j in 0..n {
        t2[(k, j)] = c[j] - (0..k).map(|r| c[basis[r]] * t2[(r, j)]).sum::<f64>();
    }
    t2[(k, n)] = -(0..k).map(|r| c[basis[r]] * t2[(r, n)]).sum::<f64>();
    let mut tab = Tableau { t: t2, basis, rhs: n };
    tab.optimise(n, tol)?;

    let mut x = DVector::zeros(n);
    for (r, &j) in tab.basis.iter().enumerate() {
        x[j] = tab.t[(r, n)].max(0.0);
    }
    refine(a, b, &tab.basis, &mut x, tol);
    let objective = c.dot(&x);
    Ok(LpSolution {
        x,
        objective,
        basis: tab.basis,
    })
}

/// Recomputes the basic variables from the original data to remove
/// round-off accumulated during pivoting.
fn refine(a: &DMatrix<f64>, b: &DVector<f64>, basis: &[usize], x: &mut DVector<f64>, tol: f64) {
    let ab = a.select_columns(basis);
    let svd = ab.svd(true, true);
    let Ok(xb) = svd.solve(b, 1e-14) else {
        return;
    };
    if xb.iter().any(|v| *v < -tol) {
        return;
    }
    let mut candidate = x.clone();
    for (r, &j) in basis.iter().enumerate() {
        candidate[j] = xb[r].max(0.0);
    }
    let old = (a * &*x - b).amax();
    let new = (a * &candidate - b).amax();
    if new <= old {
        *x = candidate;
    }
}
