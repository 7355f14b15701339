//! Step engines for the two network parametrisations.
//!
//! Both describe the same predictor `β` and, started from the paired
//! initialisations (`u₀ = √2·α, v₀ = 0` and `w±,₀ = α`), produce identical
//! `β_k` sequences. Engines implement a common trait and are selected by
//! name at runtime; `½(w₊² − w₋²)` is the canonical choice because the
//! mirror-descent ledger algebra is native to it.

use crate::error::{CoreError, Result};

/// Full snapshot of both parametrisations at one iterate.
///
/// `β = u ⊙ v = ½(w₊² − w₋²)`. An engine evolves its own pair; the other is
/// reconstructed through `z = w₊ ⊙ w₋ = ½(u² − v²)`:
/// `u² = z + √(β² + z²)`, `v² = √(β² + z²) − z`, `w±² = √(β² + z²) ± β`.
#[derive(Debug, Clone, PartialEq)]
pub struct DlnState {
    pub u: Vec<f64>,
    pub v: Vec<f64>,
    pub wplus: Vec<f64>,
    pub wminus: Vec<f64>,
    pub beta: Vec<f64>,
}

impl DlnState {
    /// Build the full snapshot from w± coordinates (β derived).
    pub fn from_wpm_coords(wp: &[f64], wm: &[f64]) -> DlnState {
        let beta: Vec<f64> = wp
            .iter()
            .zip(wm)
            .map(|(p, m)| 0.5 * (p * p - m * m))
            .collect();
        DlnState::from_wpm(wp, wm, &beta)
    }

    fn from_wpm(wp: &[f64], wm: &[f64], beta: &[f64]) -> DlnState {
        let d = beta.len();
        let mut u = vec![0.0; d];
        let mut v = vec![0.0; d];
        for j in 0..d {
            let z = wp[j] * wm[j];
            let sq = (beta[j] * beta[j] + z * z).sqrt();
            let u2 = (z + sq).max(0.0);
            u[j] = u2.sqrt();
            v[j] = if u[j] > 0.0 {
                beta[j] / u[j]
            } else {
                (sq - z).max(0.0).sqrt()
            };
        }
        DlnState {
            u,
            v,
            wplus: wp.to_vec(),
            wminus: wm.to_vec(),
            beta: beta.to_vec(),
        }
    }

    fn from_uv(u: &[f64], v: &[f64], beta: &[f64]) -> DlnState {
        let d = beta.len();
        let mut wp = vec![0.0; d];
        let mut wm = vec![0.0; d];
        for j in 0..d {
            let z = 0.5 * (u[j] * u[j] - v[j] * v[j]);
            let sq = (beta[j] * beta[j] + z * z).sqrt();
            wp[j] = (sq + beta[j]).max(0.0).sqrt();
            wm[j] = (sq - beta[j]).max(0.0).sqrt();
        }
        DlnState {
            u: u.to_vec(),
            v: v.to_vec(),
            wplus: wp,
            wminus: wm,
            beta: beta.to_vec(),
        }
    }
}

/// One interchangeable update rule: advance the native coordinates by the
/// gradient step `γ·g` taken on the prediction parameter.
pub trait StepEngine: Send {
    fn name(&self) -> &'static str;
    fn beta(&self) -> &[f64];
    fn step(&mut self, gamma: f64, g: &[f64]);
    fn snapshot(&self) -> DlnState;
}

/// `β = u ⊙ v`; gradient step on (u, v) jointly.
pub struct UvEngine {
    u: Vec<f64>,
    v: Vec<f64>,
    beta: Vec<f64>,
}

impl UvEngine {
    pub fn new(alpha: &[f64]) -> UvEngine {
        let sqrt2 = std::f64::consts::SQRT_2;
        UvEngine {
            u: alpha.iter().map(|a| sqrt2 * a).collect(),
            v: vec![0.0; alpha.len()],
            beta: vec![0.0; alpha.len()],
        }
    }
}

impl StepEngine for UvEngine {
    fn name(&self) -> &'static str {
        "uv"
    }

    fn beta(&self) -> &[f64] {
        &self.beta
    }

    #[inline]
    fn step(&mut self, gamma: f64, g: &[f64]) {
        for j in 0..g.len() {
            let x = gamma * g[j];
            let u0 = self.u[j];
            let v0 = self.v[j];
            self.u[j] = u0 - x * v0;
            self.v[j] = v0 - x * u0;
            self.beta[j] = self.u[j] * self.v[j];
        }
    }

    fn snapshot(&self) -> DlnState {
        DlnState::from_uv(&self.u, &self.v, &self.beta)
    }
}

/// `β = ½(w₊² − w₋²)`; the update is multiplicative: `w±' = (1 ∓ γg) ⊙ w±`.
pub struct WpmEngine {
    wp: Vec<f64>,
    wm: Vec<f64>,
    beta: Vec<f64>,
}

impl WpmEngine {
    pub fn new(alpha: &[f64]) -> WpmEngine {
        WpmEngine {
            wp: alpha.to_vec(),
            wm: alpha.to_vec(),
            beta: vec![0.0; alpha.len()],
        }
    }
}

impl StepEngine for WpmEngine {
    fn name(&self) -> &'static str {
        "wpm"
    }

    fn beta(&self) -> &[f64] {
        &self.beta
    }

    #[inline]
    fn step(&mut self, gamma: f64, g: &[f64]) {
        for j in 0..g.len() {
            let x = gamma * g[j];
            self.wp[j] *= 1.0 - x;
            self.wm[j] *= 1.0 + x;
            self.beta[j] = 0.5 * (self.wp[j] * self.wp[j] - self.wm[j] * self.wm[j]);
        }
    }

    fn snapshot(&self) -> DlnState {
        DlnState::from_wpm(&self.wp, &self.wm, &self.beta)
    }
}

/// Registered engine names, canonical one first.
pub const ENGINE_NAMES: &[&str] = &["wpm", "uv"];

/// Look up an engine by registry name and initialise it at scale `alpha`.
pub fn engine_by_name(name: &str, alpha: &[f64]) -> Result<Box<dyn StepEngine>> {
    match name {
        "wpm" => Ok(Box::new(WpmEngine::new(alpha))),
        "uv" => Ok(Box::new(UvEngine::new(alpha))),
        other => Err(CoreError::InvalidParam(format!(
            "unknown engine `{other}` (have: {})",
            ENGINE_NAMES.join(", ")
        ))),
    }
}

/// The paper-matched initial state (β₀ = 0 in both parametrisations).
pub fn init_state(alpha: &[f64]) -> Result<DlnState> {
    if alpha.is_empty() || !alpha.iter().all(|a| *a > 0.0 && a.is_finite()) {
        return Err(CoreError::InvalidParam(
            "alpha must be positive componentwise".into(),
        ));
    }
    Ok(WpmEngine::new(alpha).snapshot())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn init_state_matches_paper() {
        let st = init_state(&[1.0]).unwrap();
        assert_relative_eq!(st.u[0], std::f64::consts::SQRT_2, max_relative = 1e-15);
        assert_eq!(st.v[0], 0.0);
        assert_eq!(st.beta[0], 0.0);
        let st = init_state(&vec![0.1; 30]).unwrap();
        assert!(st.beta.iter().all(|b| *b == 0.0));
        assert!(st.wplus.iter().all(|w| *w == 0.1));
        assert!(st.wminus.iter().all(|w| *w == 0.1));
        assert!(init_state(&[0.0]).is_err());
        assert!(init_state(&[1.0, -0.5]).is_err());
    }

    #[test]
    fn hand_computed_single_step() {
        // d=1, α=1, g=−1, γ=0.1 → β' = 0.2 in both engines
        let mut uv = UvEngine::new(&[1.0]);
        uv.step(0.1, &[-1.0]);
        assert_relative_eq!(uv.beta()[0], 0.2, max_relative = 1e-14);
        let snap = uv.snapshot();
        assert_relative_eq!(snap.u[0], std::f64::consts::SQRT_2, max_relative = 1e-15);
        assert_relative_eq!(snap.v[0], 0.1 * std::f64::consts::SQRT_2, max_relative = 1e-14);

        let mut wpm = WpmEngine::new(&[1.0]);
        wpm.step(0.1, &[-1.0]);
        assert_relative_eq!(wpm.beta()[0], 0.2, max_relative = 1e-14);
        let snap = wpm.snapshot();
        assert_relative_eq!(snap.wplus[0], 1.1, max_relative = 1e-15);
        assert_relative_eq!(snap.wminus[0], 0.9, max_relative = 1e-15);

        // the two engines agree to 1 ulp after this step
        assert!((uv.beta()[0] - wpm.beta()[0]).abs() <= 1e-15);
    }

    #[test]
    fn zero_gradient_is_identity() {
        for name in ENGINE_NAMES {
            let mut e = engine_by_name(name, &[0.4, 0.7]).unwrap();
            let before = e.snapshot();
            e.step(0.3, &[0.0, 0.0]);
            assert_eq!(e.snapshot(), before, "{name}");
        }
    }

    #[test]
    fn sign_flip_symmetry_at_init() {
        // v = 0: flipping g flips β'
        let mut a = UvEngine::new(&[1.0]);
        let mut b = UvEngine::new(&[1.0]);
        a.step(0.1, &[2.0]);
        b.step(0.1, &[-2.0]);
        assert_relative_eq!(a.beta()[0], -b.beta()[0], max_relative = 1e-15);
    }

    #[test]
    fn wpm_step_hitting_one_zeroes_coordinate() {
        // γg = 1 exactly: w₊ becomes exactly 0 and stays there
        let mut e = WpmEngine::new(&[0.5]);
        e.step(1.0, &[1.0]);
        let snap = e.snapshot();
        assert_eq!(snap.wplus[0], 0.0);
        e.step(1.0, &[-3.0]);
        assert_eq!(e.snapshot().wplus[0], 0.0);
    }

    #[test]
    fn snapshot_reconstruction_consistent() {
        let mut rng = crate::rng::RngStream::new(12);
        for name in ENGINE_NAMES {
            let alpha: Vec<f64> = (0..8).map(|_| 0.05 + rng.next_f64()).collect();
            let mut e = engine_by_name(name, &alpha).unwrap();
            for _ in 0..50 {
                let g: Vec<f64> = (0..8).map(|_| rng.gauss()).collect();
                e.step(0.05, &g);
            }
            let s = e.snapshot();
            for j in 0..8 {
                let via_uv = s.u[j] * s.v[j];
                let via_wpm = 0.5 * (s.wplus[j] * s.wplus[j] - s.wminus[j] * s.wminus[j]);
                let scale = s.beta[j].abs().max(1e-12);
                assert!(
                    (via_uv - s.beta[j]).abs() <= 1e-12 * scale,
                    "{name}: uv product off"
                );
                assert!(
                    (via_wpm - s.beta[j]).abs() <= 1e-12 * scale,
                    "{name}: wpm halves off"
                );
            }
        }
    }

    #[test]
    fn unknown_engine_is_rejected() {
        assert!(engine_by_name("sgd", &[1.0]).is_err());
    }
}
