//! Shape of the (stochastic) gradient at initialisation, and the trajectory
//! diagnostic comparing the accumulated squared gradients to it.

use crate::analysis::spectral::expected_sq_grad_init;
use crate::data::Dataset;
use crate::error::{CoreError, Result};
use crate::train::Trajectory;
use serde::{Deserialize, Serialize};

/// Squared gradients at β₀ = 0 for full-batch and single-sample sampling,
/// with on/off-support heterogeneity ratios.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ShapeReport {
    /// `∇L(β₀)² = (Hβ*)²`
    pub grad_sq_gd: Vec<f64>,
    /// `E_i[∇L_i(β₀)²] = (1/n) Σ_i x_i² ⟨x_i, β*⟩²`
    pub grad_sq_sgd: Vec<f64>,
    /// on-support mean ÷ off-support mean
    pub gd_ratio: f64,
    pub sgd_ratio: f64,
}

fn support_ratio(v: &[f64], support: &[bool]) -> f64 {
    let mut on = 0.0;
    let mut non = 0.0;
    let mut n_on = 0usize;
    let mut n_off = 0usize;
    for (x, s) in v.iter().zip(support) {
        if *s {
            on += x;
            n_on += 1;
        } else {
            non += x;
            n_off += 1;
        }
    }
    if n_on == 0 || n_off == 0 {
        return f64::NAN;
    }
    (on / n_on as f64) / (non / n_off as f64)
}

/// Requires a sparse truth (the ratios are relative to its support).
pub fn init_gradient_shape(ds: &Dataset) -> Result<ShapeReport> {
    let truth = ds
        .sparse_truth
        .as_ref()
        .ok_or_else(|| CoreError::InvalidParam("dataset has no sparse truth".into()))?;
    let support: Vec<bool> = truth.iter().map(|t| *t != 0.0).collect();
    let zero = vec![0.0; ds.d];
    let g0 = ds.full_gradient(&zero);
    let grad_sq_gd: Vec<f64> = g0.iter().map(|g| g * g).collect();
    let grad_sq_sgd = expected_sq_grad_init(ds, 1)?;
    let gd_ratio = support_ratio(&grad_sq_gd, &support);
    let sgd_ratio = support_ratio(&grad_sq_sgd, &support);
    Ok(ShapeReport {
        grad_sq_gd,
        grad_sq_sgd,
        gd_ratio,
        sgd_ratio,
    })
}

/// Componentwise ratio of `Σ_k g_k²` along the trajectory to
/// `E_B[∇L_B(β₀)²]`, normalised to unit mean. Purely diagnostic.
pub fn shady_ratio(traj: &Trajectory, ds: &Dataset) -> Result<Vec<f64>> {
    let expect = expected_sq_grad_init(ds, traj.batch_size)?;
    let mut ratio: Vec<f64> = traj
        .stats
        .sum_grad_sq
        .iter()
        .zip(&expect)
        .map(|(s, e)| if *e > 0.0 { s / e } else { f64::NAN })
        .collect();
    let finite: Vec<f64> = ratio.iter().copied().filter(|v| v.is_finite()).collect();
    if !finite.is_empty() {
        let mean = finite.iter().sum::<f64>() / finite.len() as f64;
        if mean > 0.0 {
            for r in ratio.iter_mut() {
                *r /= mean;
            }
        }
    }
    Ok(ratio)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{make_gaussian_dataset, make_gaussian_dataset_aligned, Dataset};
    use crate::linalg::DenseMat;
    use crate::rng::RngStream;
    use approx::assert_relative_eq;

    #[test]
    fn identity_design_is_exactly_the_truth() {
        // X = I·√n scaling ⟹ ∇L(β₀)² = (β*)² exactly
        let n = 4;
        let mut raw = DenseMat::zeros(n, n);
        for i in 0..n {
            *raw.at_mut(i, i) = (n as f64).sqrt();
        }
        let truth = vec![1.0, 0.0, 0.0, 0.0];
        let raw_y: Vec<f64> = (0..n).map(|i| raw.at(i, i) * truth[i]).collect();
        let ds = Dataset::from_raw(raw, raw_y, Some(truth.clone()), None).unwrap();
        let rep = init_gradient_shape(&ds).unwrap();
        for j in 0..n {
            assert_relative_eq!(rep.grad_sq_gd[j], truth[j] * truth[j], epsilon = 1e-14);
        }
    }

    #[test]
    fn centered_rip_regime_heterogeneity() {
        let mut rng = RngStream::new(1234);
        let ds = make_gaussian_dataset(50, 100, 2, 0.0, 1.0, 1.0, &mut rng).unwrap();
        let rep = init_gradient_shape(&ds).unwrap();
        assert!(rep.gd_ratio >= 5.0, "GD ratio {}", rep.gd_ratio);
        assert!(
            rep.sgd_ratio >= 1.0 / 3.0 && rep.sgd_ratio <= 3.0,
            "SGD ratio {}",
            rep.sgd_ratio
        );
    }

    #[test]
    fn uncentered_data_is_homogeneous() {
        let mut rng = RngStream::new(77);
        let ds = make_gaussian_dataset_aligned(50, 100, 2, 5.0, 1.0, 1.0, &mut rng).unwrap();
        let rep = init_gradient_shape(&ds).unwrap();
        assert!(rep.gd_ratio <= 3.0, "uncentered GD ratio {}", rep.gd_ratio);
        assert!(
            rep.sgd_ratio >= 1.0 / 3.0 && rep.sgd_ratio <= 3.0,
            "uncentered SGD ratio {}",
            rep.sgd_ratio
        );
    }

    #[test]
    fn missing_truth_is_an_error() {
        let ds = Dataset::from_raw(
            DenseMat::from_rows(1, 2, vec![1.0, 2.0]),
            vec![1.0],
            None,
            None,
        )
        .unwrap();
        assert!(init_gradient_shape(&ds).is_err());
    }
}
