//! Hyperbolic-entropy machinery.
//!
//! The training iterates `β_k` satisfy a stochastic mirror-descent recursion
//! with time-varying potentials
//!
//! ```text
//!   ∇h_{k+1}(β_{k+1}) = ∇h_k(β_k) − γ_k g_k,
//!   h_k(β) = ψ_{α_k}(β) − ⟨φ_k, β⟩,
//! ```
//!
//! where `ψ_α` is the hyperbolic entropy and the scale/tilt pair `(α_k, φ_k)`
//! is driven by the running sums of `q₊` and `q₋` evaluated at `γ_ℓ g_ℓ`:
//!
//! ```text
//!   q±(x) = ∓2x − ln((1 ∓ x)²),       q(x) = ½(q₊(x) + q₋(x)) = −½ ln((1 − x²)²),
//!   α²_{±,k} = α² ⊙ exp(−Σ_{ℓ<k} q±(γ_ℓ g_ℓ)),
//!   α_k² = α_{+,k} ⊙ α_{−,k},         φ_k = ½ argsinh((α²_{+,k} − α²_{−,k}) / (2α_k²)).
//! ```
//!
//! The [`MirrorLedger`] accumulates those sums in log-space (the products can
//! underflow near the edge of stability) and exposes the limit quantities
//! `α∞` and `β̃₀ = ½(α²_{+,∞} − α²_{−,∞})` together with the gain vector
//! `Gain_γ = ln(α²/α∞²) = Σ_k q(γ_k g_k)`.

use crate::error::{CoreError, Result};
use crate::linalg::norm_linf;
use serde::{Deserialize, Serialize};

/// Degeneracy window around |γg| = 1 where the potential loses invertibility.
pub const DEGENERATE_TOL: f64 = 1e-12;

/// Below this threshold `q` and `q±` are evaluated by series; the direct
/// `ln`-based forms lose relative accuracy to cancellation as x → 0 and the
/// ledger accumulates millions of tiny terms.
const SERIES_CUTOFF: f64 = 1.0 / 128.0;

/// Even/odd parts of the series of q₊ around 0:
/// q₊(x) = x² + (2/3)x³ + (1/2)x⁴ + (2/5)x⁵ + (1/3)x⁶ + (2/7)x⁷ + (1/4)x⁸ + O(x⁹)
#[inline]
fn q_series(x: f64) -> (f64, f64) {
    let x2 = x * x;
    let even = x2 * (1.0 + x2 * (0.5 + x2 * (1.0 / 3.0 + x2 * 0.25)));
    let odd = x * x2 * (2.0 / 3.0 + x2 * (0.4 + x2 * (2.0 / 7.0)));
    (even, odd)
}

/// `q(x) = −½ ln((1−x²)²)`, with `q(±1) = +∞`.
pub fn q(x: f64) -> f64 {
    let a = x.abs();
    if a <= SERIES_CUTOFF {
        q_series(x).0
    } else if a < 0.5 {
        -(-x * x).ln_1p()
    } else {
        // split to keep accuracy near |x| = 1; ln(0) = −∞ gives q = +∞ there
        -((1.0 - x).abs().ln() + (1.0 + x).abs().ln())
    }
}

/// `q₊(x) = −2x − ln((1−x)²)`, with `q₊(1) = +∞`. Real-valued for all x.
pub fn q_plus(x: f64) -> f64 {
    if x.abs() <= SERIES_CUTOFF {
        let (e, o) = q_series(x);
        e + o
    } else if x < 1.0 {
        -2.0 * x - 2.0 * (-x).ln_1p()
    } else if x == 1.0 {
        f64::INFINITY
    } else {
        -2.0 * x - 2.0 * (x - 1.0).ln()
    }
}

/// `q₋(x) = 2x − ln((1+x)²)`, with `q₋(−1) = +∞`.
pub fn q_minus(x: f64) -> f64 {
    q_plus(-x)
}

/// `(q₊(x), q₋(x))` sharing the series fast path; this is the ledger's hot call.
#[inline]
pub fn q_pair(x: f64) -> (f64, f64) {
    if x.abs() <= SERIES_CUTOFF {
        let (e, o) = q_series(x);
        (e + o, e - o)
    } else {
        (q_plus(x), q_minus(x))
    }
}

/// Hyperbolic entropy `ψ_α(β) = ½ Σ_i (β_i argsinh(β_i/α_i²) − √(β_i² + α_i⁴) + α_i²)`.
pub fn psi(beta: &[f64], alpha: &[f64]) -> f64 {
    debug_assert_eq!(beta.len(), alpha.len());
    let mut acc = 0.0;
    for (b, a) in beta.iter().zip(alpha) {
        let a2 = a * a;
        acc += b * (b / a2).asinh() - (b * b + a2 * a2).sqrt() + a2;
    }
    0.5 * acc
}

/// `∇ψ_α(β) = ½ argsinh(β/α²)` componentwise.
pub fn psi_grad(beta: &[f64], alpha: &[f64]) -> Vec<f64> {
    beta.iter()
        .zip(alpha)
        .map(|(b, a)| 0.5 * (b / (a * a)).asinh())
        .collect()
}

/// Scale/tilt pair defining a reference potential `h(β) = ψ_α(β) − ⟨φ, β⟩`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PotentialParams {
    pub alpha: Vec<f64>,
    pub phi: Vec<f64>,
}

impl PotentialParams {
    pub fn new(alpha: Vec<f64>, phi: Vec<f64>) -> Result<Self> {
        if alpha.len() != phi.len() {
            return Err(CoreError::DimensionMismatch("alpha/phi".into()));
        }
        if !alpha.iter().all(|a| *a > 0.0 && a.is_finite()) || !phi.iter().all(|p| p.is_finite()) {
            return Err(CoreError::InvalidParam(
                "potential needs positive finite alpha and finite phi".into(),
            ));
        }
        Ok(PotentialParams { alpha, phi })
    }

    pub fn value(&self, beta: &[f64]) -> f64 {
        psi(beta, &self.alpha) - crate::linalg::dot(&self.phi, beta)
    }
}

/// `∇h(β) = ½ argsinh(β/α²) − φ`.
pub fn potential_grad(beta: &[f64], p: &PotentialParams) -> Vec<f64> {
    beta.iter()
        .zip(p.alpha.iter().zip(&p.phi))
        .map(|(b, (a, f))| 0.5 * (b / (a * a)).asinh() - f)
        .collect()
}

/// `φ = ½ argsinh((α₊² − α₋²)/(2α²))` with `α² = √(α₊² α₋²)`; equals `½ ln(α₊/α₋)`.
pub fn phi_of_alphas(alpha_plus_sq: &[f64], alpha_minus_sq: &[f64]) -> Result<Vec<f64>> {
    if alpha_plus_sq.len() != alpha_minus_sq.len() {
        return Err(CoreError::DimensionMismatch("alpha±".into()));
    }
    if !alpha_plus_sq.iter().chain(alpha_minus_sq).all(|v| *v > 0.0) {
        return Err(CoreError::InvalidParam("alpha±² must be positive".into()));
    }
    Ok(alpha_plus_sq
        .iter()
        .zip(alpha_minus_sq)
        .map(|(p, m)| 0.5 * ((p - m) / (2.0 * (p * m).sqrt())).asinh())
        .collect())
}

/// Bregman divergence of the hyperbolic entropy,
/// `D_ψ(β, β') = ψ(β) − ψ(β') − ⟨∇ψ(β'), β − β'⟩`.
///
/// A linear tilt cancels in any Bregman divergence, so this is also the
/// divergence of every `h = ψ_α − ⟨φ, ·⟩`.
pub fn bregman_psi(beta: &[f64], beta_ref: &[f64], alpha: &[f64]) -> f64 {
    let g = psi_grad(beta_ref, alpha);
    let mut lin = 0.0;
    for i in 0..beta.len() {
        lin += g[i] * (beta[i] - beta_ref[i]);
    }
    psi(beta, alpha) - psi(beta_ref, alpha) - lin
}

/// Limit quantities extracted from a converged ledger.
#[derive(Debug, Clone, PartialEq)]
pub struct LedgerLimits {
    pub alpha_inf: Vec<f64>,
    pub beta_tilde0: Vec<f64>,
    /// `ln α∞²` — authoritative at extreme gains where `alpha_inf` underflows.
    pub log_alpha_inf_sq: Vec<f64>,
    /// Whether `|β̃₀| ≤ α₀²` held componentwise (guaranteed when every step
    /// satisfied ‖γg‖∞ ≤ 1, so that q± ≥ 0).
    pub perturbation_within_alpha0: bool,
}

/// Running sums defining the time-varying potentials of one trajectory.
#[derive(Debug, Clone, PartialEq)]
pub struct MirrorLedger {
    alpha0: Vec<f64>,
    log_alpha0_sq: Vec<f64>,
    sum_qplus: Vec<f64>,
    sum_qminus: Vec<f64>,
    sum_grad: Vec<f64>,
    degenerate: Vec<bool>,
    steps: u64,
}

impl MirrorLedger {
    pub fn new(alpha0: &[f64]) -> Result<Self> {
        if alpha0.is_empty() || !alpha0.iter().all(|a| *a > 0.0 && a.is_finite()) {
            return Err(CoreError::InvalidParam(
                "ledger needs a positive finite alpha0".into(),
            ));
        }
        let d = alpha0.len();
        Ok(MirrorLedger {
            alpha0: alpha0.to_vec(),
            log_alpha0_sq: alpha0.iter().map(|a| 2.0 * a.ln()).collect(),
            sum_qplus: vec![0.0; d],
            sum_qminus: vec![0.0; d],
            sum_grad: vec![0.0; d],
            degenerate: vec![false; d],
            steps: 0,
        })
    }

    pub fn dim(&self) -> usize {
        self.alpha0.len()
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }

    pub fn alpha0(&self) -> &[f64] {
        &self.alpha0
    }

    pub fn sum_qplus(&self) -> &[f64] {
        &self.sum_qplus
    }

    pub fn sum_qminus(&self) -> &[f64] {
        &self.sum_qminus
    }

    pub fn sum_grad(&self) -> &[f64] {
        &self.sum_grad
    }

    pub fn is_degenerate(&self) -> bool {
        self.degenerate.iter().any(|d| *d)
    }

    pub fn degenerate_coords(&self) -> Vec<usize> {
        self.degenerate
            .iter()
            .enumerate()
            .filter(|(_, d)| **d)
            .map(|(i, _)| i)
            .collect()
    }

    /// Advance the accumulators by one step with gradient `g` and step `gamma`.
    pub fn update(&mut self, g: &[f64], gamma: f64) {
        debug_assert_eq!(g.len(), self.dim());
        for i in 0..g.len() {
            let x = gamma * g[i];
            if (x.abs() - 1.0).abs() <= DEGENERATE_TOL {
                self.degenerate[i] = true;
                continue;
            }
            let (qp, qm) = q_pair(x);
            self.sum_qplus[i] += qp;
            self.sum_qminus[i] += qm;
            self.sum_grad[i] += x;
        }
        self.steps += 1;
    }

    /// `ln α_k²` componentwise.
    pub fn log_alpha_sq(&self) -> Vec<f64> {
        (0..self.dim())
            .map(|i| self.log_alpha0_sq[i] - 0.5 * (self.sum_qplus[i] + self.sum_qminus[i]))
            .collect()
    }

    /// `α_k²` componentwise.
    pub fn alpha_sq(&self) -> Vec<f64> {
        self.log_alpha_sq().iter().map(|l| l.exp()).collect()
    }

    /// Current tilt `φ_k = ¼ (Σq₋ − Σq₊) = ½ ln(α₊/α₋)`.
    pub fn phi(&self) -> Vec<f64> {
        (0..self.dim())
            .map(|i| 0.25 * (self.sum_qminus[i] - self.sum_qplus[i]))
            .collect()
    }

    /// Current `(α_k, φ_k)`; errors if any coordinate is degenerate.
    pub fn potential(&self) -> Result<PotentialParams> {
        if let Some(i) = self.degenerate.iter().position(|d| *d) {
            return Err(CoreError::NonInvertiblePotential(i));
        }
        let alpha: Vec<f64> = self.log_alpha_sq().iter().map(|l| (0.5 * l).exp()).collect();
        PotentialParams::new(alpha, self.phi())
    }

    /// `Gain = ½ (Σq₊ + Σq₋) = ln(α₀²/α_k²)` componentwise.
    pub fn gain(&self) -> Vec<f64> {
        (0..self.dim())
            .map(|i| 0.5 * (self.sum_qplus[i] + self.sum_qminus[i]))
            .collect()
    }

    /// Limit scale and perturbation: `α∞² = α₀² e^{−Gain}`,
    /// `β̃₀ = ½(α²_{+} − α²_{−})`.
    pub fn limits(&self) -> Result<LedgerLimits> {
        if let Some(i) = self.degenerate.iter().position(|d| *d) {
            return Err(CoreError::NonInvertiblePotential(i));
        }
        let d = self.dim();
        let mut alpha_inf = vec![0.0; d];
        let mut beta_tilde0 = vec![0.0; d];
        let mut log_alpha_inf_sq = vec![0.0; d];
        let mut within = true;
        for i in 0..d {
            let la0 = self.log_alpha0_sq[i];
            let gain = 0.5 * (self.sum_qplus[i] + self.sum_qminus[i]);
            log_alpha_inf_sq[i] = la0 - gain;
            // multiplicative form so zero gain returns α₀ exactly
            alpha_inf[i] = self.alpha0[i] * (-0.5 * gain).exp();
            beta_tilde0[i] = 0.5 * ((la0 - self.sum_qplus[i]).exp() - (la0 - self.sum_qminus[i]).exp());
            let a0sq = la0.exp();
            if beta_tilde0[i].abs() > a0sq * (1.0 + 1e-12) {
                within = false;
            }
        }
        Ok(LedgerLimits {
            alpha_inf,
            beta_tilde0,
            log_alpha_inf_sq,
            perturbation_within_alpha0: within,
        })
    }

    /// Diagnostic for the factor-2 mismatch between the corollary form
    /// `2α∞² sinh(2φ∞)` and the theorem form `β̃₀ = ½(α₊² − α₋²)`: returns the
    /// max componentwise ratio of the former to the latter (identically 2).
    pub fn corollary_ratio(&self) -> Result<f64> {
        let lim = self.limits()?;
        let phi = self.phi();
        let mut ratio: f64 = f64::NAN;
        for i in 0..self.dim() {
            if lim.beta_tilde0[i] != 0.0 {
                let cor = 2.0 * lim.log_alpha_inf_sq[i].exp() * (2.0 * phi[i]).sinh();
                let r = cor / lim.beta_tilde0[i];
                ratio = if ratio.is_nan() { r } else { ratio.max(r) };
            }
        }
        Ok(ratio)
    }

    pub fn to_dump(&self) -> Result<LedgerDump> {
        let lim = self.limits()?;
        Ok(LedgerDump {
            alpha0: self.alpha0.clone(),
            sum_qplus: self.sum_qplus.clone(),
            sum_qminus: self.sum_qminus.clone(),
            sum_grad: self.sum_grad.clone(),
            gain: self.gain(),
            alpha_inf: lim.alpha_inf,
            beta_tilde0: lim.beta_tilde0,
        })
    }

    pub fn from_dump(dump: &LedgerDump) -> Result<MirrorLedger> {
        let mut ledger = MirrorLedger::new(&dump.alpha0)?;
        let d = ledger.dim();
        if dump.sum_qplus.len() != d || dump.sum_qminus.len() != d || dump.sum_grad.len() != d {
            return Err(CoreError::DimensionMismatch("ledger dump".into()));
        }
        ledger.sum_qplus = dump.sum_qplus.clone();
        ledger.sum_qminus = dump.sum_qminus.clone();
        ledger.sum_grad = dump.sum_grad.clone();
        Ok(ledger)
    }
}

/// JSON-serialisable ledger state (full-precision decimals).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LedgerDump {
    pub alpha0: Vec<f64>,
    pub sum_qplus: Vec<f64>,
    pub sum_qminus: Vec<f64>,
    pub sum_grad: Vec<f64>,
    pub gain: Vec<f64>,
    pub alpha_inf: Vec<f64>,
    pub beta_tilde0: Vec<f64>,
}

/// Max residual of `∇h_{k+1}(β_{k+1}) = ∇h_k(β_k) − γ_k g_k` over a recorded
/// trajectory.
///
/// When the trajectory holds every step (`record_every == 1`) the ledger is
/// replayed from `α₀` and the residual recomputed from scratch; otherwise the
/// value tracked online during training is returned.
pub fn verify_md_identity(traj: &crate::train::Trajectory) -> Result<f64> {
    if traj.ledger.is_degenerate() {
        return Err(CoreError::NonInvertiblePotential(
            traj.ledger.degenerate_coords()[0],
        ));
    }
    if traj.record_every == 1 && traj.records.len() as u64 == traj.stats.iters {
        // records[k] holds (β_k, g_k, γ_k); the final state carries β_K.
        let mut ledger = MirrorLedger::new(traj.ledger.alpha0())?;
        let mut max_res = 0.0_f64;
        for k in 0..traj.records.len() {
            let rec = &traj.records[k];
            let grad_h_k = potential_grad(&rec.beta, &ledger.potential()?);
            ledger.update(&rec.grad, rec.gamma);
            let beta_next = if k + 1 < traj.records.len() {
                &traj.records[k + 1].beta
            } else {
                &traj.final_state.beta
            };
            let grad_h_k1 = potential_grad(beta_next, &ledger.potential()?);
            let res: Vec<f64> = (0..grad_h_k.len())
                .map(|i| grad_h_k1[i] - grad_h_k[i] + rec.gamma * rec.grad[i])
                .collect();
            max_res = max_res.max(norm_linf(&res));
        }
        Ok(max_res)
    } else if traj.stats.md_residual_tracked {
        Ok(traj.stats.md_residual_max)
    } else {
        Err(CoreError::InvalidParam(
            "records are thinned and the md residual was not tracked online".into(),
        ))
    }
}

/// Weighted-ℓ₁ limit of the hyperbolic entropy for heterogeneous scales
/// `ᾶ_i = α^{1+h_i}`: returns `Σ (1+h_i)|β_i|` and the relative gap of
/// `ψ_ᾶ(β)/ln(1/α)` to it.
pub fn weighted_l1_limit(beta: &[f64], alpha_base: f64, h: &[f64]) -> Result<(f64, f64)> {
    if !(alpha_base > 0.0 && alpha_base < 1.0) {
        return Err(CoreError::InvalidParam(
            "alpha_base must lie in (0, 1)".into(),
        ));
    }
    if beta.len() != h.len() {
        return Err(CoreError::DimensionMismatch("beta/h".into()));
    }
    if !h.iter().all(|v| *v >= 0.0) {
        return Err(CoreError::InvalidParam("weights h must be nonnegative".into()));
    }
    let limit: f64 = beta.iter().zip(h).map(|(b, hi)| (1.0 + hi) * b.abs()).sum();
    let log_inv_alpha = -alpha_base.ln();
    let alpha_tilde: Vec<f64> = h.iter().map(|hi| alpha_base.powf(1.0 + hi)).collect();
    let scaled = psi(beta, &alpha_tilde) / log_inv_alpha;
    let gap = if limit > 0.0 {
        (scaled - limit).abs() / limit
    } else {
        scaled.abs()
    };
    Ok((limit, gap))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    #[test]
    fn q_reference_values() {
        assert_eq!(q(0.0), 0.0);
        assert_relative_eq!(q(0.5), -(0.75_f64.ln()), max_relative = 1e-15);
        assert_relative_eq!(q(0.5), 0.2876820724517809, max_relative = 1e-12);
        assert_eq!(q(1.0), f64::INFINITY);
        assert_eq!(q(-1.0), f64::INFINITY);
        // negative beyond √2
        assert!(q(1.5) < 0.0);
        assert_relative_eq!(q(-0.1), -(0.99_f64.ln()), max_relative = 1e-14);
    }

    #[test]
    fn q_pm_reference_values() {
        assert_eq!(q_plus(0.0), 0.0);
        assert_eq!(q_minus(0.0), 0.0);
        assert_relative_eq!(q_plus(-0.1), 0.2 - 1.21_f64.ln(), max_relative = 1e-13);
        assert_relative_eq!(q_plus(-0.1), 0.0093796408, max_relative = 1e-7);
        assert_relative_eq!(q_minus(-0.1), -0.2 - 0.81_f64.ln(), max_relative = 1e-12);
        assert_eq!(q_plus(1.0), f64::INFINITY);
        assert_eq!(q_minus(-1.0), f64::INFINITY);
        // real-valued beyond 1 (edge-of-stability steps overshoot transiently)
        assert!(q_plus(1.77).is_finite());
        assert!(q_minus(1.77).is_finite());
    }

    #[test]
    fn q_is_mean_of_q_pm_on_grid() {
        for i in 0..1000 {
            let x = -0.99 + 1.98 * (i as f64 + 0.5) / 1000.0;
            let err = (0.5 * (q_plus(x) + q_minus(x)) - q(x)).abs();
            assert!(err <= 1e-12, "x={x}, err={err}");
        }
    }

    #[test]
    fn q_two_sided_bound() {
        // x² ≤ q(x) ≤ 2x² for |x| ≤ ½
        for i in 0..1000 {
            let x = -0.5 + (i as f64 + 0.5) / 1000.0;
            let v = q(x);
            assert!(v >= x * x - 1e-15, "lower bound at {x}");
            assert!(v <= 2.0 * x * x + 1e-15, "upper bound at {x}");
        }
    }

    #[test]
    fn q_series_matches_ln_path_at_cutoff() {
        for &x in &[
            SERIES_CUTOFF * 0.999,
            SERIES_CUTOFF,
            -SERIES_CUTOFF,
            1e-3,
            -2.5e-3,
            1e-6,
        ] {
            let direct_p = -2.0 * x - 2.0 * (-x as f64).ln_1p();
            let direct_m = 2.0 * x - 2.0 * (x as f64).ln_1p();
            let (qp, qm) = q_pair(x);
            assert_relative_eq!(qp, direct_p, max_relative = 1e-11);
            assert_relative_eq!(qm, direct_m, max_relative = 1e-11);
        }
    }

    #[test]
    fn psi_reference_values() {
        assert_eq!(psi(&[0.0, 0.0], &[1.0, 0.5]), 0.0);
        let v = psi(&[1.0], &[1.0]);
        assert_relative_eq!(
            v,
            0.5 * (1.0_f64.asinh() - 2.0_f64.sqrt() + 1.0),
            max_relative = 1e-15
        );
        assert_relative_eq!(v, 0.2335800123, max_relative = 1e-9);
        // small-α asymptote: ψ_α(β)/ln(1/α) → |β|
        let alpha: f64 = 1e-4;
        let scaled = psi(&[1.0], &[alpha]) / (1.0 / alpha).ln();
        assert!((scaled - 1.0).abs() < 0.05, "scaled = {scaled}");
    }

    #[test]
    fn psi_grad_matches_finite_differences_and_inverse() {
        let mut rng = crate::rng::RngStream::new(5);
        let d = 6;
        let alpha: Vec<f64> = (0..d).map(|_| 0.2 + rng.next_f64()).collect();
        for _ in 0..10 {
            let beta: Vec<f64> = (0..d).map(|_| rng.gauss()).collect();
            let g = psi_grad(&beta, &alpha);
            let h = 1e-5;
            for j in 0..d {
                let mut bp = beta.clone();
                let mut bm = beta.clone();
                bp[j] += h;
                bm[j] -= h;
                let fd = (psi(&bp, &alpha) - psi(&bm, &alpha)) / (2.0 * h);
                assert_relative_eq!(g[j], fd, max_relative = 1e-6, epsilon = 1e-9);
            }
        }
        // inverse evaluation: β = sinh(2)·α² ⟹ ∇ψ = 1
        let g = psi_grad(&[2.0_f64.sinh()], &[1.0]);
        assert_relative_eq!(g[0], 1.0, max_relative = 1e-14);
        assert_eq!(psi_grad(&[0.0], &[0.3])[0], 0.0);
    }

    #[test]
    fn potential_grad_tilt() {
        let mut rng = crate::rng::RngStream::new(8);
        let d = 5;
        let alpha: Vec<f64> = (0..d).map(|_| 0.3 + rng.next_f64()).collect();
        let beta: Vec<f64> = (0..d).map(|_| rng.gauss()).collect();
        // φ = ∇ψ(β) cancels the gradient at β
        let phi = psi_grad(&beta, &alpha);
        let p = PotentialParams::new(alpha.clone(), phi).unwrap();
        assert!(norm_linf(&potential_grad(&beta, &p)) < 1e-15);
        // φ = 0 reduces to ∇ψ
        let p0 = PotentialParams::new(alpha.clone(), vec![0.0; d]).unwrap();
        let g0 = potential_grad(&beta, &p0);
        let gp = psi_grad(&beta, &alpha);
        for j in 0..d {
            assert_eq!(g0[j], gp[j]);
        }
        // finite differences of ψ − ⟨φ, ·⟩
        let phi: Vec<f64> = (0..d).map(|_| rng.gauss()).collect();
        let p = PotentialParams::new(alpha.clone(), phi).unwrap();
        let g = potential_grad(&beta, &p);
        let h = 1e-5;
        for j in 0..d {
            let mut bp = beta.clone();
            let mut bm = beta.clone();
            bp[j] += h;
            bm[j] -= h;
            let fd = (p.value(&bp) - p.value(&bm)) / (2.0 * h);
            assert_relative_eq!(g[j], fd, max_relative = 1e-6, epsilon = 1e-9);
        }
    }

    #[test]
    fn phi_of_alphas_values() {
        let z = phi_of_alphas(&[1.0, 3.0], &[1.0, 3.0]).unwrap();
        assert_eq!(z, vec![0.0, 0.0]);
        let p = phi_of_alphas(&[2.0], &[1.0]).unwrap();
        assert_relative_eq!(p[0], 0.25 * 2.0_f64.ln(), max_relative = 1e-14);
        assert_relative_eq!(p[0], 0.1732868, max_relative = 1e-6);
        let m = phi_of_alphas(&[1.0], &[2.0]).unwrap();
        assert_relative_eq!(m[0], -p[0], max_relative = 1e-14);
        assert!(phi_of_alphas(&[0.0], &[1.0]).is_err());
    }

    #[test]
    fn ledger_single_update_matches_q_values() {
        // one update with γg = −0.1 in d=1
        let mut ledger = MirrorLedger::new(&[0.5]).unwrap();
        ledger.update(&[-1.0], 0.1);
        let qp = q_plus(-0.1);
        let qm = q_minus(-0.1);
        assert_relative_eq!(ledger.sum_qplus()[0], qp, max_relative = 1e-14);
        assert_relative_eq!(ledger.sum_qminus()[0], qm, max_relative = 1e-14);
        // α₁² = α₀² e^{−q(−0.1)}
        assert_relative_eq!(
            ledger.alpha_sq()[0],
            0.25 * (-q(-0.1)).exp(),
            max_relative = 1e-13
        );
        // φ₁ = ¼(q₋ − q₊)
        let p = ledger.potential().unwrap();
        assert_relative_eq!(p.phi[0], 0.25 * (qm - qp), max_relative = 1e-13);
        // gain after one step = q(−0.1) = −ln(0.99)
        assert_relative_eq!(ledger.gain()[0], -(0.99_f64.ln()), max_relative = 1e-12);
    }

    #[test]
    fn ledger_opposite_updates_cancel_phi() {
        let mut ledger = MirrorLedger::new(&[1.0]).unwrap();
        ledger.update(&[0.2], 1.0);
        ledger.update(&[-0.2], 1.0);
        let p = ledger.potential().unwrap();
        assert!(p.phi[0].abs() < 1e-16);
        // but the scale strictly decreased
        assert!(ledger.alpha_sq()[0] < 1.0);
    }

    #[test]
    fn ledger_zero_gradient_is_identity() {
        let mut ledger = MirrorLedger::new(&[0.1, 0.2]).unwrap();
        let before = ledger.clone();
        ledger.update(&[0.0, 0.0], 0.5);
        assert_eq!(ledger.sum_qplus(), before.sum_qplus());
        assert_eq!(ledger.gain(), vec![0.0, 0.0]);
        let lim = ledger.limits().unwrap();
        assert_eq!(lim.alpha_inf, vec![0.1, 0.2]);
        assert_eq!(lim.beta_tilde0, vec![0.0, 0.0]);
    }

    #[test]
    fn ledger_gain_consistency() {
        let mut rng = crate::rng::RngStream::new(2);
        let mut ledger = MirrorLedger::new(&[0.1, 0.3, 0.7]).unwrap();
        for _ in 0..200 {
            let g: Vec<f64> = (0..3).map(|_| 0.3 * rng.gauss()).collect();
            ledger.update(&g, 0.5);
        }
        // gain = ln(α₀²/α_k²)
        let gain = ledger.gain();
        let alpha_sq = ledger.alpha_sq();
        for i in 0..3 {
            let expect = (ledger.alpha0()[i].powi(2) / alpha_sq[i]).ln();
            assert_relative_eq!(gain[i], expect, max_relative = 1e-12, epsilon = 1e-12);
        }
        // φ via phi_of_alphas agrees with the ledger's φ
        let ap2: Vec<f64> = (0..3)
            .map(|i| (2.0 * ledger.alpha0()[i].ln() - ledger.sum_qplus()[i]).exp())
            .collect();
        let am2: Vec<f64> = (0..3)
            .map(|i| (2.0 * ledger.alpha0()[i].ln() - ledger.sum_qminus()[i]).exp())
            .collect();
        let phi = phi_of_alphas(&ap2, &am2).unwrap();
        let p = ledger.potential().unwrap();
        for i in 0..3 {
            assert_relative_eq!(phi[i], p.phi[i], max_relative = 1e-10, epsilon = 1e-12);
        }
    }

    #[test]
    fn ledger_degenerate_flag() {
        let mut ledger = MirrorLedger::new(&[1.0]).unwrap();
        ledger.update(&[1.0], 1.0); // γg = 1 exactly
        assert!(ledger.is_degenerate());
        assert!(matches!(
            ledger.potential(),
            Err(CoreError::NonInvertiblePotential(0))
        ));
        assert!(ledger.limits().is_err());
    }

    #[test]
    fn corollary_ratio_is_two() {
        let mut rng = crate::rng::RngStream::new(4);
        let mut ledger = MirrorLedger::new(&[0.1, 0.1]).unwrap();
        for _ in 0..50 {
            let g: Vec<f64> = (0..2).map(|_| 0.4 * rng.gauss()).collect();
            ledger.update(&g, 1.0);
        }
        let r = ledger.corollary_ratio().unwrap();
        assert_relative_eq!(r, 2.0, max_relative = 1e-9);
    }

    #[test]
    fn ledger_dump_roundtrip() {
        let mut ledger = MirrorLedger::new(&[0.1, 0.2]).unwrap();
        ledger.update(&[0.3, -0.2], 0.7);
        let dump = ledger.to_dump().unwrap();
        let json = serde_json::to_string(&dump).unwrap();
        let back: LedgerDump = serde_json::from_str(&json).unwrap();
        let restored = MirrorLedger::from_dump(&back).unwrap();
        assert_eq!(restored.sum_qplus(), ledger.sum_qplus());
        assert_eq!(restored.sum_qminus(), ledger.sum_qminus());
        assert_eq!(
            restored.limits().unwrap().beta_tilde0,
            ledger.limits().unwrap().beta_tilde0
        );
    }

    #[test]
    fn weighted_l1_examples() {
        let (lim, _) = weighted_l1_limit(&[1.0, -2.0], 1e-3, &[0.0, 0.0]).unwrap();
        assert_relative_eq!(lim, 3.0);
        let (lim, gap) = weighted_l1_limit(&[1.0, 1.0], 1e-8, &[1.0, 0.0]).unwrap();
        assert_relative_eq!(lim, 3.0);
        assert!(gap <= 0.02, "gap = {gap}");
        let (lim, gap) = weighted_l1_limit(&[0.0, 0.0], 1e-4, &[1.0, 2.0]).unwrap();
        assert_eq!(lim, 0.0);
        assert!(gap.abs() < 1e-6);
        assert!(weighted_l1_limit(&[1.0], 1.0, &[0.0]).is_err());
    }

    proptest! {
        #[test]
        fn argsinh_identity_random_pairs(
            lp in -3.0f64..3.0,
            lm in -3.0f64..3.0,
        ) {
            // φ(α₊², α₋²) = ½ ln(α₊/α₋)
            let ap2 = lp.exp();
            let am2 = lm.exp();
            let phi = phi_of_alphas(&[ap2], &[am2]).unwrap()[0];
            let expect = 0.25 * (ap2 / am2).ln();
            prop_assert!((phi - expect).abs() <= 1e-12 * (1.0 + expect.abs()));
        }

        #[test]
        fn bregman_is_positive_definite(
            b1 in proptest::collection::vec(-3.0f64..3.0, 4),
            b2 in proptest::collection::vec(-3.0f64..3.0, 4),
            la in proptest::collection::vec(-2.0f64..0.5, 4),
        ) {
            let alpha: Vec<f64> = la.iter().map(|l| l.exp()).collect();
            let dvv = bregman_psi(&b1, &b1, &alpha);
            prop_assert!(dvv.abs() < 1e-12);
            let d12 = bregman_psi(&b1, &b2, &alpha);
            let dist: f64 = b1.iter().zip(&b2).map(|(a, b)| (a - b).abs()).sum();
            if dist > 1e-6 {
                prop_assert!(d12 > 0.0, "D = {d12} at distance {dist}");
            } else {
                prop_assert!(d12 >= -1e-12);
            }
        }

        #[test]
        fn gain_nonnegative_under_step_bound(
            xs in proptest::collection::vec(-1.4f64..1.4, 1..40),
        ) {
            // every |γg| ≤ √2 keeps the gain ≥ 0
            let mut ledger = MirrorLedger::new(&[1.0]).unwrap();
            for x in &xs {
                ledger.update(&[*x], 1.0);
            }
            if !ledger.is_degenerate() {
                prop_assert!(ledger.gain()[0] >= -1e-12);
            }
        }
    }
}
