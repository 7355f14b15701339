//! Magnitude of the gain vector: the proof-safe sandwich
//! `λ_b·S ≤ E‖Gain_γ‖₁ ≤ 4Λ_b·S` with `S = γ² Σ_k L(β_k)`, and the
//! `S = Θ(γ ln(1/α) ‖β*_ℓ₁‖₁)` scaling check.

use crate::analysis::spectral::lambda_bounds;
use crate::bias::min_l1_interpolator;
use crate::data::Dataset;
use crate::error::{CoreError, Result};
use crate::linalg::{norm_l1, norm_linf};
use crate::train::{default_stepsize, train, RunStatus, Schedule, TrainConfig};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SeedGain {
    pub seed: u64,
    pub gain_l1: f64,
    /// S = Σ_k γ² L(β_k)
    pub s: f64,
    pub iters: u64,
}

/// Sandwich report. For `b = n` the run is deterministic and one seed is
/// used; otherwise seed means with standard errors.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GainSandwich {
    pub b: usize,
    pub n_seeds: usize,
    pub lambda_b: f64,
    pub cap_lambda_b: f64,
    pub mean_gain_l1: f64,
    pub mean_s: f64,
    /// λ_b·S̄ and 4Λ_b·S̄ (proof-safe constants)
    pub lhs: f64,
    pub rhs: f64,
    /// the displayed (unsafe) upper constant Λ_b·S̄, reported only
    pub displayed_rhs: f64,
    /// standard errors of the margin terms (0 for deterministic runs)
    pub se_lo: f64,
    pub se_hi: f64,
    pub holds_lo: bool,
    pub holds_hi: bool,
    pub per_seed: Vec<SeedGain>,
}

fn mean_and_se(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    if v.len() < 2 {
        return (mean, 0.0);
    }
    let var = v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Run `n_seeds` trajectories (seeds `base.seed, base.seed+1, …`) and check
/// the sandwich within `slack_se` standard errors. Every run must converge.
pub fn gain_sandwich(
    ds: &Dataset,
    base: &TrainConfig,
    n_seeds: usize,
    slack_se: f64,
) -> Result<GainSandwich> {
    let b = base.batch_size;
    let n_seeds = if b == ds.n { 1 } else { n_seeds.max(1) };
    let runs: Vec<Result<SeedGain>> = (0..n_seeds as u64)
        .into_par_iter()
        .map(|i| {
            let mut cfg = base.clone();
            cfg.seed = base.seed.wrapping_add(i);
            cfg.track_md_residual = false;
            cfg.record_every = Some(usize::MAX);
            let traj = train(ds, &cfg)?;
            if traj.status != RunStatus::Converged {
                return Err(CoreError::InvalidParam(format!(
                    "seed {} did not converge ({:?} after {} iters)",
                    cfg.seed, traj.status, traj.stats.iters
                )));
            }
            Ok(SeedGain {
                seed: cfg.seed,
                gain_l1: norm_l1(&traj.ledger.gain()),
                s: traj.stats.sum_gamma_sq_loss,
                iters: traj.stats.iters,
            })
        })
        .collect();
    let per_seed: Vec<SeedGain> = runs.into_iter().collect::<Result<_>>()?;

    let rep = lambda_bounds(ds, b)?;
    let gains: Vec<f64> = per_seed.iter().map(|r| r.gain_l1).collect();
    let ss: Vec<f64> = per_seed.iter().map(|r| r.s).collect();
    let (mean_gain, _) = mean_and_se(&gains);
    let (mean_s, _) = mean_and_se(&ss);
    // margins per seed; their SE handles gain/S correlation correctly
    let mlo: Vec<f64> = per_seed
        .iter()
        .map(|r| r.gain_l1 - rep.lambda_b * r.s)
        .collect();
    let mhi: Vec<f64> = per_seed
        .iter()
        .map(|r| 4.0 * rep.cap_lambda_b * r.s - r.gain_l1)
        .collect();
    let (mean_lo, se_lo) = mean_and_se(&mlo);
    let (mean_hi, se_hi) = mean_and_se(&mhi);
    let tol = 1e-12 * mean_gain.abs().max(1e-300);
    Ok(GainSandwich {
        b,
        n_seeds,
        lambda_b: rep.lambda_b,
        cap_lambda_b: rep.cap_lambda_b,
        mean_gain_l1: mean_gain,
        mean_s,
        lhs: rep.lambda_b * mean_s,
        rhs: 4.0 * rep.cap_lambda_b * mean_s,
        displayed_rhs: rep.cap_lambda_b * mean_s,
        se_lo,
        se_hi,
        holds_lo: mean_lo >= -slack_se * se_lo - tol,
        holds_hi: mean_hi >= -slack_se * se_hi - tol,
        per_seed,
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScalingEntry {
    pub alpha: f64,
    pub gamma: f64,
    pub s: f64,
    /// γ · ln(1/α) · ‖β*_ℓ₁‖₁
    pub predictor: f64,
    pub ratio: f64,
    pub iters: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScalingReport {
    pub entries: Vec<ScalingEntry>,
    pub min_ratio: f64,
    pub max_ratio: f64,
}

/// Fit `S = γ² Σ L(β_k)` against `γ ln(1/α) ‖β*_ℓ₁‖₁` over an α sweep at the
/// default step size; errors if any run fails to converge.
pub fn sum_loss_scaling(
    ds: &Dataset,
    base: &TrainConfig,
    alphas: &[f64],
    stepsize_c: f64,
) -> Result<ScalingReport> {
    if alphas.is_empty() || !alphas.iter().all(|a| *a > 0.0 && *a < 1.0) {
        return Err(CoreError::InvalidParam("alphas must lie in (0,1)".into()));
    }
    let l1 = min_l1_interpolator(ds)?;
    let l1_norm = norm_l1(&l1);
    if norm_linf(&ds.y) == 0.0 {
        return Err(CoreError::InvalidParam("trivial dataset (y = 0)".into()));
    }
    let entries: Vec<Result<ScalingEntry>> = alphas
        .par_iter()
        .map(|&a| {
            let alpha = vec![a; ds.d];
            let gamma = default_stepsize(ds, base.batch_size, &alpha, &l1, stepsize_c)?;
            let mut cfg = base.clone();
            cfg.alpha = alpha;
            cfg.gamma = Schedule::Constant(gamma);
            cfg.track_md_residual = false;
            cfg.record_every = Some(usize::MAX);
            let traj = train(ds, &cfg)?;
            if traj.status != RunStatus::Converged {
                return Err(CoreError::InvalidParam(format!(
                    "alpha={a}: run did not converge ({:?})",
                    traj.status
                )));
            }
            let predictor = gamma * (1.0 / a).ln() * l1_norm;
            let s = traj.stats.sum_gamma_sq_loss;
            Ok(ScalingEntry {
                alpha: a,
                gamma,
                s,
                predictor,
                ratio: s / predictor,
                iters: traj.stats.iters,
            })
        })
        .collect();
    let entries: Vec<ScalingEntry> = entries.into_iter().collect::<Result<_>>()?;
    let min_ratio = entries.iter().map(|e| e.ratio).fold(f64::INFINITY, f64::min);
    let max_ratio = entries.iter().map(|e| e.ratio).fold(0.0_f64, f64::max);
    Ok(ScalingReport {
        entries,
        min_ratio,
        max_ratio,
    })
}
