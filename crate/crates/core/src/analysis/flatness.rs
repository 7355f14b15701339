//! Hessian of the non-convex neuron loss `F(w) = L(½(w₊² − w₋²))` and the
//! flatness summary (sharpness and trace) at a recovered solution.

use crate::data::Dataset;
use crate::linalg::{sym_eigen, DenseMat};
use crate::train::DlnState;
use serde::{Deserialize, Serialize};

/// The 2d×2d block matrix
/// `[diag(∇L)  0; 0  −diag(∇L)] + [D₊HD₊  −D₊HD₋; −D₋HD₊  D₋HD₋]`
/// with `D± = diag(w±)`.
pub fn hessian_f(state: &DlnState, ds: &Dataset) -> DenseMat {
    let d = ds.d;
    let gl = ds.full_gradient(&state.beta);
    let mut out = DenseMat::zeros(2 * d, 2 * d);
    for i in 0..d {
        *out.at_mut(i, i) = gl[i];
        *out.at_mut(d + i, d + i) = -gl[i];
    }
    let wp = &state.wplus;
    let wm = &state.wminus;
    for i in 0..d {
        for j in 0..d {
            let h = ds.h.at(i, j);
            *out.at_mut(i, j) += wp[i] * h * wp[j];
            *out.at_mut(d + i, d + j) += wm[i] * h * wm[j];
            *out.at_mut(i, d + j) += -wp[i] * h * wm[j];
            *out.at_mut(d + i, j) += -wm[i] * h * wp[j];
        }
    }
    out
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FlatnessReport {
    pub lambda_max: f64,
    pub trace: f64,
}

/// Sharpness (`λ_max(∇²F)`) and trace at the given state.
pub fn flatness_report(state: &DlnState, ds: &Dataset) -> FlatnessReport {
    let h = hessian_f(state, ds);
    let (vals, _) = sym_eigen(&h);
    let trace = (0..h.rows()).map(|i| h.at(i, i)).sum();
    FlatnessReport {
        lambda_max: vals[vals.len() - 1],
        trace,
    }
}
