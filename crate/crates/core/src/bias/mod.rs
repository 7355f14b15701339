//! Independent solvers for the limiting interpolator.
//!
//! The trained trajectory's ledger fixes a scale `α∞` and tilt `φ∞`; the
//! interpolator the algorithm converges to is the unique `β ∈ S` with
//! `½ argsinh(β/α∞²) − φ∞ ∈ span(x_1, …, x_n)`. Writing that span element as
//! `Xᵀν` inverts to the smooth parametrisation
//!
//! ```text
//!   β(ν) = α∞² ⊙ sinh(2φ∞ + 2Xᵀν),
//! ```
//!
//! so solving `X β(ν) = y` for the `n`-vector `ν` (damped Newton with
//! backtracking) recovers the interpolator without running the optimiser.
//! The minimum-ℓ₁ interpolator baseline comes from a dense simplex on
//! `min Σ(β⁺ + β⁻)  s.t.  X(β⁺ − β⁻) = y`.

pub mod simplex;

use crate::data::Dataset;
use crate::error::{CoreError, Result};
use crate::linalg::{dot, norm_l1, norm_l2, norm_linf, DenseMat};
use crate::mirror::MirrorLedger;
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

pub const DEFAULT_NEWTON_ITERS: usize = 200;
pub const DEFAULT_NEWTON_TOL: f64 = 1e-12;
const ARMIJO: f64 = 1e-4;
const BACKTRACK_FLOOR: f64 = 1e-12;

/// The implicit-regularisation problem extracted from a converged run.
#[derive(Debug, Clone)]
pub struct BiasProblem {
    /// normalised design, n×d
    pub x: DenseMat,
    pub y: Vec<f64>,
    /// `ln α∞²` componentwise (authoritative; `alpha_inf` may underflow)
    pub log_alpha_inf_sq: Vec<f64>,
    pub phi_inf: Vec<f64>,
    pub alpha_inf: Vec<f64>,
    pub max_newton_iters: usize,
    pub tol: f64,
}

impl BiasProblem {
    pub fn from_ledger(ds: &Dataset, ledger: &MirrorLedger) -> Result<BiasProblem> {
        let lim = ledger.limits()?;
        Ok(BiasProblem {
            x: ds.x.clone(),
            y: ds.y.clone(),
            log_alpha_inf_sq: lim.log_alpha_inf_sq,
            phi_inf: ledger.phi(),
            alpha_inf: lim.alpha_inf,
            max_newton_iters: DEFAULT_NEWTON_ITERS,
            tol: DEFAULT_NEWTON_TOL,
        })
    }

    /// Build directly from a scale/tilt pair (e.g. `φ∞ = 0, α∞ = α` for the
    /// gradient-flow reference problem).
    pub fn from_scale_tilt(ds: &Dataset, alpha_inf: &[f64], phi_inf: &[f64]) -> Result<BiasProblem> {
        if alpha_inf.len() != ds.d || phi_inf.len() != ds.d {
            return Err(CoreError::DimensionMismatch("alpha_inf/phi_inf".into()));
        }
        if !alpha_inf.iter().all(|a| *a > 0.0 && a.is_finite()) {
            return Err(CoreError::InvalidParam("alpha_inf must be positive".into()));
        }
        Ok(BiasProblem {
            x: ds.x.clone(),
            y: ds.y.clone(),
            log_alpha_inf_sq: alpha_inf.iter().map(|a| 2.0 * a.ln()).collect(),
            phi_inf: phi_inf.to_vec(),
            alpha_inf: alpha_inf.to_vec(),
            max_newton_iters: DEFAULT_NEWTON_ITERS,
            tol: DEFAULT_NEWTON_TOL,
        })
    }

    fn beta_of_nu(&self, nu: &[f64], out: &mut [f64]) {
        let a = self.x.t_matvec(nu);
        for i in 0..out.len() {
            let arg = 2.0 * self.phi_inf[i] + 2.0 * a[i];
            let la = self.log_alpha_inf_sq[i];
            out[i] = 0.5 * ((la + arg).exp() - (la - arg).exp());
        }
    }

    fn dcosh_of_nu(&self, nu: &[f64], out: &mut [f64]) {
        let a = self.x.t_matvec(nu);
        for i in 0..out.len() {
            let arg = 2.0 * self.phi_inf[i] + 2.0 * a[i];
            let la = self.log_alpha_inf_sq[i];
            out[i] = (la + arg).exp() + (la - arg).exp();
        }
    }
}

/// Solver output with residual diagnostics.
#[derive(Debug, Clone)]
pub struct BiasSolution {
    pub beta_star: Vec<f64>,
    /// span coefficients ν of `∇h_∞(β*) = Xᵀν`
    pub dual: Vec<f64>,
    pub kkt_residual: f64,
    pub interp_residual: f64,
    pub newton_iters: usize,
}

/// `asinh(b / e^{la})` without forming the possibly-overflowing ratio.
fn asinh_scaled(b: f64, la: f64) -> f64 {
    if b == 0.0 {
        return 0.0;
    }
    let logz = b.abs().ln() - la;
    if logz > 34.0 {
        // asinh(z) = ln(2z) + O(z⁻²); error < 1e-30 here
        b.signum() * (std::f64::consts::LN_2 + logz)
    } else {
        (b * (-la).exp()).asinh()
    }
}

/// Damped Newton on the dual ν (n unknowns), backtracking on ‖Xβ(ν) − y‖₂².
pub fn solve_implicit_bias(p: &BiasProblem) -> Result<BiasSolution> {
    let n = p.y.len();
    let d = p.phi_inf.len();
    let mut nu = vec![0.0; n];
    let mut beta = vec![0.0; d];
    let mut dvec = vec![0.0; d];
    let mut iters = 0;

    let residual = |nu: &[f64], beta: &mut [f64]| -> (Vec<f64>, f64) {
        p.beta_of_nu(nu, beta);
        let mut g = p.x.matvec(beta);
        for i in 0..n {
            g[i] -= p.y[i];
        }
        let f = 0.5 * dot(&g, &g);
        (g, f)
    };

    let (mut g, mut f) = residual(&nu, &mut beta);
    for it in 0..p.max_newton_iters {
        iters = it;
        if norm_linf(&g) <= p.tol {
            break;
        }
        p.dcosh_of_nu(&nu, &mut dvec);
        // J = X diag(D) Xᵀ, symmetric positive definite for full-row-rank X
        let mut j = DMatrix::zeros(n, n);
        for r in 0..n {
            for c in 0..=r {
                let mut s = 0.0;
                let xr = p.x.row(r);
                let xc = p.x.row(c);
                for i in 0..d {
                    s += xr[i] * dvec[i] * xc[i];
                }
                j[(r, c)] = s;
                j[(c, r)] = s;
            }
        }
        let neg_g = DVector::from_iterator(n, g.iter().map(|v| -v));
        let delta = match j.clone().lu().solve(&neg_g) {
            Some(sol) if sol.iter().all(|v| v.is_finite()) => sol,
            _ => {
                let ridge = 1e-12 * (j.trace() / n as f64).max(1.0);
                for i in 0..n {
                    j[(i, i)] += ridge;
                }
                match j.lu().solve(&neg_g) {
                    Some(sol) if sol.iter().all(|v| v.is_finite()) => sol,
                    _ => return Err(CoreError::SingularJacobian),
                }
            }
        };
        // backtracking line search
        let mut t = 1.0;
        loop {
            let trial: Vec<f64> = (0..n).map(|i| nu[i] + t * delta[i]).collect();
            let (gt, ft) = residual(&trial, &mut beta);
            if ft.is_finite() && ft <= f * (1.0 - ARMIJO * t) {
                nu = trial;
                g = gt;
                f = ft;
                break;
            }
            t *= 0.5;
            if t < BACKTRACK_FLOOR {
                return Err(CoreError::NewtonStalled(norm_linf(&g)));
            }
        }
    }
    p.beta_of_nu(&nu, &mut beta);
    let interp_residual = {
        let mut r = p.x.matvec(&beta);
        for i in 0..n {
            r[i] -= p.y[i];
        }
        norm_linf(&r)
    };
    if interp_residual > p.tol {
        return Err(CoreError::NewtonStalled(interp_residual));
    }
    // KKT residual of the returned point: ½ argsinh(β/α∞²) − φ∞ − Xᵀν
    let xtnu = p.x.t_matvec(&nu);
    let mut kkt = 0.0_f64;
    for i in 0..d {
        let r = 0.5 * asinh_scaled(beta[i], p.log_alpha_inf_sq[i]) - p.phi_inf[i] - xtnu[i];
        kkt = kkt.max(r.abs());
    }
    Ok(BiasSolution {
        beta_star: beta,
        dual: nu,
        kkt_residual: kkt,
        interp_residual,
        newton_iters: iters,
    })
}

/// Minimum-ℓ₁ interpolator via the simplex: `min Σ(β⁺+β⁻) s.t. X(β⁺−β⁻) = y`.
pub fn min_l1_interpolator(ds: &Dataset) -> Result<Vec<f64>> {
    let n = ds.n;
    let d = ds.d;
    let mut a = DenseMat::zeros(n, 2 * d);
    for i in 0..n {
        for j in 0..d {
            *a.at_mut(i, j) = ds.x.at(i, j);
            *a.at_mut(i, d + j) = -ds.x.at(i, j);
        }
    }
    let z = simplex::solve_lp_eq(&a, &ds.y, &vec![1.0; 2 * d])?;
    Ok((0..d).map(|j| z[j] - z[d + j]).collect())
}

/// Distances and support diagnostics for a recovered interpolator.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SolutionMetrics {
    pub dist_l1_to_ref: f64,
    pub dist_l2_to_truth: Option<f64>,
    pub l1_norm: f64,
    pub support_precision: Option<f64>,
    pub support_recall: Option<f64>,
}

/// Metrics at detection threshold `1e-3 · ‖β‖∞`.
pub fn solution_metrics(beta: &[f64], ds: &Dataset, l1ref: &[f64]) -> SolutionMetrics {
    let dist_l1_to_ref = beta
        .iter()
        .zip(l1ref)
        .map(|(a, b)| (a - b).abs())
        .sum::<f64>();
    let l1_norm = norm_l1(beta);
    let (dist_l2_to_truth, support_precision, support_recall) = match &ds.sparse_truth {
        None => (None, None, None),
        Some(truth) => {
            let diff: Vec<f64> = beta.iter().zip(truth).map(|(a, b)| a - b).collect();
            let thr = 1e-3 * norm_linf(beta);
            let detected: Vec<bool> = beta.iter().map(|b| b.abs() > thr).collect();
            let actual: Vec<bool> = truth.iter().map(|t| *t != 0.0).collect();
            let tp = detected
                .iter()
                .zip(&actual)
                .filter(|(d, a)| **d && **a)
                .count() as f64;
            let np = detected.iter().filter(|d| **d).count() as f64;
            let na = actual.iter().filter(|a| **a).count() as f64;
            let precision = if np > 0.0 { tp / np } else { 1.0 };
            let recall = if na > 0.0 { tp / na } else { 1.0 };
            (Some(norm_l2(&diff)), Some(precision), Some(recall))
        }
    };
    SolutionMetrics {
        dist_l1_to_ref,
        dist_l2_to_truth,
        l1_norm,
        support_precision,
        support_recall,
    }
}

/// JSON-serialisable solver output.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SolutionJson {
    pub beta: Vec<f64>,
    pub dual: Vec<f64>,
    pub kkt_residual: f64,
    pub interp_residual: f64,
    pub l1_norm: f64,
    pub dist_l1ref: f64,
}

impl SolutionJson {
    pub fn new(sol: &BiasSolution, l1ref: &[f64]) -> SolutionJson {
        SolutionJson {
            beta: sol.beta_star.clone(),
            dual: sol.dual.clone(),
            kkt_residual: sol.kkt_residual,
            interp_residual: sol.interp_residual,
            l1_norm: norm_l1(&sol.beta_star),
            dist_l1ref: sol
                .beta_star
                .iter()
                .zip(l1ref)
                .map(|(a, b)| (a - b).abs())
                .sum(),
        }
    }
}
