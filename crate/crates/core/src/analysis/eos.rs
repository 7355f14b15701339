//! Edge-of-stability step-size scans and the empirical divergence threshold.
//!
//! Divergence within a fixed iteration budget is the finite proxy for
//! `Σ_k L(β_k) = ∞`; a MaxIters run still has finite loss and counts as
//! non-diverged.

use crate::bias::{min_l1_interpolator, solution_metrics};
use crate::data::Dataset;
use crate::error::{CoreError, Result};
use crate::linalg::norm_l1;
use crate::train::{train, RunStatus, Schedule, TrainConfig};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// Iteration budget used to classify a step size as divergent.
pub const DIVERGENCE_BUDGET: usize = 100_000;
/// Relative bisection tolerance on γ̃_max.
pub const BISECT_RTOL: f64 = 1e-3;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EosEntry {
    pub gamma: f64,
    pub status: RunStatus,
    pub iters: u64,
    /// ‖β − β*_ℓ₁‖₁ (NaN unless converged)
    pub dist_l1_to_l1min: f64,
    /// ‖β − β*_sparse‖₂ (NaN unless converged and truth present)
    pub dist_l2_to_truth: f64,
    pub gain_l1: f64,
    pub oscillation: Option<f64>,
    pub max_step_grad_inf: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EosScanResult {
    pub entries: Vec<EosEntry>,
    /// largest verified-convergent step size; `None` if the grid never diverged
    pub gamma_tilde_max: Option<f64>,
    pub budget_iters: usize,
}

fn run_one(ds: &Dataset, base: &TrainConfig, gamma: f64, budget: usize) -> Result<RunStatus> {
    let mut cfg = base.clone();
    cfg.gamma = Schedule::Constant(gamma);
    cfg.max_iters = budget;
    cfg.track_md_residual = false;
    cfg.record_every = Some(usize::MAX);
    Ok(train(ds, &cfg)?.status)
}

/// Train at every grid point (ascending), then bisect the divergence
/// boundary to relative tolerance `BISECT_RTOL`.
pub fn eos_scan(ds: &Dataset, base: &TrainConfig, grid: &[f64]) -> Result<EosScanResult> {
    if grid.is_empty() || grid.windows(2).any(|w| w[0] >= w[1]) || grid[0] <= 0.0 {
        return Err(CoreError::InvalidParam(
            "gamma grid must be positive and strictly ascending".into(),
        ));
    }
    let budget = base.max_iters.min(DIVERGENCE_BUDGET);
    let l1ref = min_l1_interpolator(ds)?;

    let entries: Vec<Result<EosEntry>> = grid
        .par_iter()
        .map(|&gamma| {
            let mut cfg = base.clone();
            cfg.gamma = Schedule::Constant(gamma);
            cfg.max_iters = budget;
            cfg.track_md_residual = false;
            cfg.record_every = Some(usize::MAX);
            let traj = train(ds, &cfg)?;
            let (dist_l1, dist_truth, gain_l1) = if traj.status == RunStatus::Converged {
                let m = solution_metrics(traj.final_beta(), ds, &l1ref);
                (
                    m.dist_l1_to_ref,
                    m.dist_l2_to_truth.unwrap_or(f64::NAN),
                    norm_l1(&traj.ledger.gain()),
                )
            } else {
                (f64::NAN, f64::NAN, f64::NAN)
            };
            Ok(EosEntry {
                gamma,
                status: traj.status,
                iters: traj.stats.iters,
                dist_l1_to_l1min: dist_l1,
                dist_l2_to_truth: dist_truth,
                gain_l1,
                oscillation: traj.stats.oscillation_fraction,
                max_step_grad_inf: traj.stats.max_step_grad_inf,
            })
        })
        .collect();
    let entries: Vec<EosEntry> = entries.into_iter().collect::<Result<_>>()?;

    if entries.iter().all(|e| e.status == RunStatus::Diverged) {
        return Err(CoreError::InvalidParam(
            "entire grid diverged; gamma_tilde_max is below the grid".into(),
        ));
    }
    let first_div = entries.iter().position(|e| e.status == RunStatus::Diverged);
    let gamma_tilde_max = match first_div {
        None => None,
        Some(i) => {
            let hi0 = entries[i].gamma;
            let lo0 = entries[..i]
                .iter()
                .rev()
                .find(|e| e.status != RunStatus::Diverged)
                .map(|e| e.gamma)
                .unwrap_or(hi0 * 0.5);
            let mut lo = lo0;
            let mut hi = hi0;
            while hi / lo > 1.0 + BISECT_RTOL {
                let mid = (lo * hi).sqrt();
                if run_one(ds, base, mid, budget)? == RunStatus::Diverged {
                    hi = mid;
                } else {
                    lo = mid;
                }
            }
            Some(lo)
        }
    };
    Ok(EosScanResult {
        entries,
        gamma_tilde_max,
        budget_iters: budget,
    })
}
