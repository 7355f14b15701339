//! Quantitative verification machinery: spectral sandwich constants, gain
//! bounds, gradient-shape reports, edge-of-stability scans, flatness of the
//! neuron loss, and concentration benches.

pub mod conc;
pub mod eos;
pub mod flatness;
pub mod gain;
pub mod shape;
pub mod spectral;

pub use conc::{all_benches, bench_by_name, ConcBench, ConcParams, ConcReport};
pub use eos::{eos_scan, EosEntry, EosScanResult, DIVERGENCE_BUDGET};
pub use flatness::{flatness_report, hessian_f, FlatnessReport};
pub use gain::{gain_sandwich, sum_loss_scaling, GainSandwich, ScalingReport};
pub use shape::{init_gradient_shape, shady_ratio, ShapeReport};
pub use spectral::{
    expected_sq_batch_hessian, expected_sq_grad_init, lambda_bounds, pencil_extremes,
    SpectralReport,
};
