//! Spectral sandwich constants for the expected squared batch Hessian.
//!
//! For uniformly sampled size-`b` batches the closed form is
//!
//! ```text
//!   H̃_b = E_B[H_B²] = (1/(bn)) Σ_i ‖x_i‖² x_i x_iᵀ
//!         + ((b−1)/(bn(n−1))) Σ_{i≠j} ⟨x_i, x_j⟩ x_i x_jᵀ,
//! ```
//!
//! and `λ_b, Λ_b` are the extreme generalized eigenvalues of the pencil
//! `(H̃_b, H)` restricted to `range(H)`.

use crate::data::Dataset;
use crate::error::{CoreError, Result};
use crate::linalg::{sym_eigen, DenseMat};

/// Relative eigenvalue cutoff defining `range(H)`.
pub const RANGE_TOL: f64 = 1e-10;

/// Exact `E_B[H_B²]` by the combinatorial closed form (no Monte Carlo).
pub fn expected_sq_batch_hessian(ds: &Dataset, b: usize) -> Result<DenseMat> {
    if b == 0 || b > ds.n {
        return Err(CoreError::BatchOutOfRange { b, n: ds.n });
    }
    let n = ds.n as f64;
    let d = ds.d;
    // T1 = Σ ‖x_i‖² x_i x_iᵀ over raw rows
    let mut t1 = DenseMat::zeros(d, d);
    for i in 0..ds.n {
        let row = ds.raw_rows.row(i);
        let norm_sq: f64 = row.iter().map(|v| v * v).sum();
        t1.add_outer(row, norm_sq);
    }
    // Σ_{i≠j} ⟨x_i,x_j⟩ x_i x_jᵀ = (XᵣᵀXᵣ)² − T1 = (nH)² − T1
    let bf = b as f64;
    let c1 = 1.0 / (bf * n);
    let c2 = if b > 1 {
        (bf - 1.0) / (bf * n * (n - 1.0))
    } else {
        0.0
    };
    let mut out = DenseMat::zeros(d, d);
    if c2 != 0.0 {
        let h2 = ds.h.matmul(&ds.h);
        let n2 = n * n;
        for i in 0..d {
            for j in 0..d {
                *out.at_mut(i, j) = c1 * t1.at(i, j) + c2 * (n2 * h2.at(i, j) - t1.at(i, j));
            }
        }
    } else {
        for i in 0..d {
            for j in 0..d {
                *out.at_mut(i, j) = c1 * t1.at(i, j);
            }
        }
    }
    Ok(out)
}

/// Componentwise `E_B[(∇L_B(β₀))²]` at the zero initialisation, exact for
/// uniform size-`b` batches. With `a_ij = x_ij y_i` (raw scale),
/// `E[g_j²] = (1/(bn)) Σ_i a_ij² + ((b−1)/(bn(n−1))) [(Σ_i a_ij)² − Σ_i a_ij²]`.
pub fn expected_sq_grad_init(ds: &Dataset, b: usize) -> Result<Vec<f64>> {
    if b == 0 || b > ds.n {
        return Err(CoreError::BatchOutOfRange { b, n: ds.n });
    }
    let n = ds.n as f64;
    let bf = b as f64;
    let c2 = if b > 1 {
        (bf - 1.0) / (bf * n * (n - 1.0))
    } else {
        0.0
    };
    let mut out = vec![0.0; ds.d];
    for j in 0..ds.d {
        let mut sum = 0.0;
        let mut sum_sq = 0.0;
        for i in 0..ds.n {
            let a = ds.raw_rows.at(i, j) * ds.raw_y[i];
            sum += a;
            sum_sq += a * a;
        }
        out[j] = sum_sq / (bf * n) + c2 * (sum * sum - sum_sq);
    }
    Ok(out)
}

/// Extreme generalized eigenvalues of the pencil `(M, H)` on `range(H)`:
/// eigen-decompose `H`, drop eigenvalues below `RANGE_TOL·λ_max`, and take the
/// spectrum of `Λ^{-1/2} Qᵀ M Q Λ^{-1/2}`.
pub fn pencil_extremes(m: &DenseMat, h: &DenseMat) -> Result<(f64, f64)> {
    let d = h.rows();
    let (vals, vecs) = sym_eigen(h);
    let lam_max = vals[d - 1];
    if !(lam_max > 0.0) {
        return Err(CoreError::InvalidParam("H has rank 0".into()));
    }
    let keep: Vec<usize> = (0..d).filter(|&i| vals[i] > RANGE_TOL * lam_max).collect();
    let r = keep.len();
    // W = M·Q_r, then M_red = Λ^{-1/2} Q_rᵀ W Λ^{-1/2}
    let mut reduced = DenseMat::zeros(r, r);
    let mut w_col = vec![0.0; d];
    let mut q_col = vec![0.0; d];
    let mut cols: Vec<Vec<f64>> = Vec::with_capacity(r);
    for &c in &keep {
        for i in 0..d {
            q_col[i] = vecs[(i, c)];
        }
        for i in 0..d {
            w_col[i] = crate::linalg::dot(m.row(i), &q_col);
        }
        cols.push(w_col.clone());
    }
    for (a, &ca) in keep.iter().enumerate() {
        for i in 0..d {
            q_col[i] = vecs[(i, ca)];
        }
        for bcol in 0..r {
            let val = crate::linalg::dot(&q_col, &cols[bcol]);
            *reduced.at_mut(a, bcol) = val / (vals[ca].sqrt() * vals[keep[bcol]].sqrt());
        }
    }
    let (rvals, _) = sym_eigen(&reduced);
    Ok((rvals[0], rvals[r - 1]))
}

/// The sandwich constants `λ_b H ⪯ E_B[H_B²] ⪯ Λ_b H` for one batch size.
#[derive(Debug, Clone)]
pub struct SpectralReport {
    pub b: usize,
    pub lambda_b: f64,
    pub cap_lambda_b: f64,
    pub htilde_b: DenseMat,
}

pub fn lambda_bounds(ds: &Dataset, b: usize) -> Result<SpectralReport> {
    let htilde_b = expected_sq_batch_hessian(ds, b)?;
    let (lo, hi) = pencil_extremes(&htilde_b, &ds.h)?;
    Ok(SpectralReport {
        b,
        lambda_b: lo,
        cap_lambda_b: hi,
        htilde_b,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{batch_hessian, enumerate_batches, make_gaussian_dataset};
    use crate::rng::RngStream;
    use approx::assert_relative_eq;

    #[test]
    fn full_batch_is_h_squared() {
        let mut rng = RngStream::new(3);
        let ds = make_gaussian_dataset(5, 4, 1, 0.0, 1.0, 1.0, &mut rng).unwrap();
        let ht = expected_sq_batch_hessian(&ds, 5).unwrap();
        let h2 = ds.h.matmul(&ds.h);
        for i in 0..4 {
            for j in 0..4 {
                assert_relative_eq!(ht.at(i, j), h2.at(i, j), epsilon = 1e-12, max_relative = 1e-12);
            }
        }
    }

    #[test]
    fn single_sample_form() {
        let mut rng = RngStream::new(4);
        let ds = make_gaussian_dataset(6, 3, 1, 0.0, 1.0, 1.0, &mut rng).unwrap();
        let ht = expected_sq_batch_hessian(&ds, 1).unwrap();
        let mut expect = DenseMat::zeros(3, 3);
        for i in 0..6 {
            let row = ds.raw_rows.row(i);
            let ns: f64 = row.iter().map(|v| v * v).sum();
            expect.add_outer(row, ns / 6.0);
        }
        for i in 0..3 {
            for j in 0..3 {
                assert_relative_eq!(ht.at(i, j), expect.at(i, j), max_relative = 1e-12);
            }
        }
    }

    #[test]
    fn matches_brute_force_enumeration() {
        // all n ≤ 6, all b
        for n in 2..=6usize {
            let ds =
                make_gaussian_dataset(n, 4, 1, 0.3, 1.0, 1.0, &mut RngStream::new(n as u64)).unwrap();
            for b in 1..=n {
                let ht = expected_sq_batch_hessian(&ds, b).unwrap();
                let batches = enumerate_batches(n, b);
                let mut acc = DenseMat::zeros(4, 4);
                for batch in &batches {
                    let hb = batch_hessian(&ds, batch).unwrap();
                    let hb2 = hb.matmul(&hb);
                    for i in 0..4 {
                        for j in 0..4 {
                            *acc.at_mut(i, j) += hb2.at(i, j) / batches.len() as f64;
                        }
                    }
                }
                for i in 0..4 {
                    for j in 0..4 {
                        assert_relative_eq!(
                            ht.at(i, j),
                            acc.at(i, j),
                            epsilon = 1e-12,
                            max_relative = 1e-10
                        );
                    }
                }
            }
        }
    }

    #[test]
    fn grad_init_matches_enumeration() {
        for n in 2..=6usize {
            let ds =
                make_gaussian_dataset(n, 5, 2, 0.0, 1.0, 1.0, &mut RngStream::new(40 + n as u64))
                    .unwrap();
            let zero = vec![0.0; 5];
            for b in 1..=n {
                let expect = expected_sq_grad_init(&ds, b).unwrap();
                let batches = enumerate_batches(n, b);
                let mut acc = vec![0.0; 5];
                for batch in &batches {
                    let g = crate::data::batch_gradient(&zero, &ds, batch).unwrap();
                    for j in 0..5 {
                        acc[j] += g[j] * g[j] / batches.len() as f64;
                    }
                }
                for j in 0..5 {
                    assert_relative_eq!(expect[j], acc[j], epsilon = 1e-12, max_relative = 1e-9);
                }
            }
        }
    }

    #[test]
    fn full_batch_extremes_are_h_eigenvalues() {
        let mut rng = RngStream::new(9);
        let ds = make_gaussian_dataset(6, 10, 2, 0.0, 1.0, 1.0, &mut rng).unwrap();
        let rep = lambda_bounds(&ds, 6).unwrap();
        let (vals, _) = sym_eigen(&ds.h);
        let lam_max = vals[9];
        let lam_min_pos = vals
            .iter()
            .copied()
            .filter(|v| *v > RANGE_TOL * lam_max)
            .fold(f64::INFINITY, f64::min);
        assert_relative_eq!(rep.lambda_b, lam_min_pos, max_relative = 1e-10);
        assert_relative_eq!(rep.cap_lambda_b, lam_max, max_relative = 1e-10);
    }

    #[test]
    fn orthonormal_pair_b1() {
        // two orthonormal raw rows (n=2, d=2): λ₁ = Λ₁ and within [min‖x‖², max‖x‖²]
        let ds = Dataset::from_raw(
            DenseMat::from_rows(2, 2, vec![1.0, 0.0, 0.0, 1.0]),
            vec![0.0, 0.0],
            None,
            None,
        )
        .unwrap();
        let rep = lambda_bounds(&ds, 1).unwrap();
        assert_relative_eq!(rep.lambda_b, rep.cap_lambda_b, max_relative = 1e-12);
        assert!(rep.lambda_b >= 1.0 - 1e-12 && rep.cap_lambda_b <= 1.0 + 1e-12);
    }

    use crate::data::Dataset;

    #[test]
    fn sandwich_psd_on_range() {
        // min eig of (H̃ − λ_b H) and (Λ_b H − H̃) on range(H) ≥ −1e-10·λmax(H)
        let mut rng = RngStream::new(21);
        let ds = make_gaussian_dataset(8, 12, 2, 0.0, 1.0, 1.0, &mut rng).unwrap();
        for b in [1usize, 4, 8] {
            let rep = lambda_bounds(&ds, b).unwrap();
            let d = ds.d;
            let mut lo_gap = DenseMat::zeros(d, d);
            let mut hi_gap = DenseMat::zeros(d, d);
            for i in 0..d {
                for j in 0..d {
                    *lo_gap.at_mut(i, j) = rep.htilde_b.at(i, j) - rep.lambda_b * ds.h.at(i, j);
                    *hi_gap.at_mut(i, j) = rep.cap_lambda_b * ds.h.at(i, j) - rep.htilde_b.at(i, j);
                }
            }
            let (vals, _) = sym_eigen(&ds.h);
            let tol = 1e-10 * vals[d - 1];
            let (lo_min, _) = pencil_extremes(&lo_gap, &ds.h).unwrap();
            let (hi_min, _) = pencil_extremes(&hi_gap, &ds.h).unwrap();
            // pencil extremes are relative to H; scale back by λ's of H is not
            // needed for the sign check
            assert!(lo_min >= -tol, "b={b}: lo {lo_min}");
            assert!(hi_min >= -tol, "b={b}: hi {hi_min}");
        }
    }

    #[test]
    fn lambda_monotone_in_b_on_overparametrised_gaussian() {
        // d ≫ n: λ_b and Λ_b non-increasing over b ∈ {1, n/2, n}
        let mut rng = RngStream::new(33);
        let ds = make_gaussian_dataset(10, 40, 2, 0.0, 1.0, 1.0, &mut rng).unwrap();
        let bs = [1usize, 5, 10];
        let reps: Vec<SpectralReport> = bs.iter().map(|&b| lambda_bounds(&ds, b).unwrap()).collect();
        for w in reps.windows(2) {
            assert!(
                w[1].lambda_b <= w[0].lambda_b * (1.0 + 1e-9),
                "λ_b increased: {} -> {}",
                w[0].lambda_b,
                w[1].lambda_b
            );
            assert!(
                w[1].cap_lambda_b <= w[0].cap_lambda_b * (1.0 + 1e-9),
                "Λ_b increased"
            );
        }
    }
}
