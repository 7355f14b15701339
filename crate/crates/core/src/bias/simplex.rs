//! Dense two-phase primal simplex with Bland's rule.
//!
//! Sized for the minimum-ℓ₁ interpolation problems this crate solves
//! (hundreds of columns); Bland's rule guarantees termination under
//! degeneracy and gives deterministic tie-breaking, which the sparse-recovery
//! comparisons rely on.

use crate::error::{CoreError, Result};
use crate::linalg::DenseMat;

const EPS: f64 = 1e-9;

struct Tableau {
    /// m rows × (ncols + 1); last column is the rhs
    rows: Vec<Vec<f64>>,
    basis: Vec<usize>,
    ncols: usize,
}

impl Tableau {
    fn rhs(&self, i: usize) -> f64 {
        self.rows[i][self.ncols]
    }

    fn pivot(&mut self, r: usize, c: usize) {
        let piv = self.rows[r][c];
        let inv = 1.0 / piv;
        for v in self.rows[r].iter_mut() {
            *v *= inv;
        }
        let prow = self.rows[r].clone();
        for (i, row) in self.rows.iter_mut().enumerate() {
            if i == r {
                continue;
            }
            let f = row[c];
            if f != 0.0 {
                for j in 0..=self.ncols {
                    row[j] -= f * prow[j];
                }
            }
        }
        self.basis[r] = c;
    }

    /// Reduced costs for objective `c` (length ncols).
    fn reduced_costs(&self, c: &[f64]) -> Vec<f64> {
        let mut r = c.to_vec();
        for (i, &bj) in self.basis.iter().enumerate() {
            let cb = c[bj];
            if cb != 0.0 {
                for j in 0..self.ncols {
                    r[j] -= cb * self.rows[i][j];
                }
            }
        }
        r
    }

    /// Minimise `c` over the current feasible basis; Bland's rule.
    /// `allowed` restricts the columns that may enter.
    fn run(&mut self, c: &[f64], allowed: usize) -> Result<()> {
        loop {
            let red = self.reduced_costs(c);
            let entering = (0..allowed).find(|&j| red[j] < -EPS);
            let Some(e) = entering else {
                return Ok(());
            };
            // ratio test, smallest basis index breaks ties
            let mut leave: Option<(usize, f64)> = None;
            for i in 0..self.rows.len() {
                let a = self.rows[i][e];
                if a > EPS {
                    let ratio = self.rhs(i) / a;
                    match leave {
                        None => leave = Some((i, ratio)),
                        Some((li, lr)) => {
                            if ratio < lr - EPS
                                || (ratio < lr + EPS && self.basis[i] < self.basis[li])
                            {
                                leave = Some((i, ratio));
                            }
                        }
                    }
                }
            }
            let Some((r, _)) = leave else {
                return Err(CoreError::Unbounded);
            };
            self.pivot(r, e);
        }
    }

    fn objective(&self, c: &[f64]) -> f64 {
        self.basis
            .iter()
            .enumerate()
            .map(|(i, &bj)| c[bj] * self.rhs(i))
            .sum()
    }
}

/// Solve `min c·z  s.t.  A z = rhs, z ≥ 0`.
pub fn solve_lp_eq(a: &DenseMat, rhs: &[f64], c: &[f64]) -> Result<Vec<f64>> {
    let m = a.rows();
    let nv = a.cols();
    assert_eq!(rhs.len(), m);
    assert_eq!(c.len(), nv);

    let ncols = nv + m;
    let mut rows = Vec::with_capacity(m);
    for i in 0..m {
        let mut row = vec![0.0; ncols + 1];
        let flip = if rhs[i] < 0.0 { -1.0 } else { 1.0 };
        for j in 0..nv {
            row[j] = flip * a.at(i, j);
        }
        row[nv + i] = 1.0;
        row[ncols] = flip * rhs[i];
        rows.push(row);
    }
    let mut t = Tableau {
        rows,
        basis: (nv..nv + m).collect(),
        ncols,
    };

    // phase 1: drive the artificials to zero
    let mut c1 = vec![0.0; ncols];
    for v in c1.iter_mut().skip(nv) {
        *v = 1.0;
    }
    t.run(&c1, ncols)?;
    let p1 = t.objective(&c1);
    if p1 > 1e-7 {
        return Err(CoreError::Infeasible(p1));
    }
    // pivot lingering artificials out where possible (they sit at value 0)
    for i in 0..t.rows.len() {
        if t.basis[i] >= nv {
            if let Some(j) = (0..nv).find(|&j| t.rows[i][j].abs() > EPS) {
                t.pivot(i, j);
            }
        }
    }

    // phase 2 over the real columns only
    let mut c2 = vec![0.0; ncols];
    c2[..nv].copy_from_slice(c);
    t.run(&c2, nv)?;

    let mut z = vec![0.0; nv];
    for (i, &bj) in t.basis.iter().enumerate() {
        if bj < nv {
            z[bj] = t.rhs(i);
        }
    }
    Ok(z)
}
