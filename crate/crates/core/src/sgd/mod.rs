//! SGD and DP-SGD on synthetic problems, and the gradient statistics the
//! SGD membership test needs.

mod grad_stats;
mod problems;
mod trainer;

use nalgebra::DVector;

pub use grad_stats::{
    estimate_grad_stats, reference_gradients, select_target, GradientStats, Provenance, Ridge,
};
pub use problems::{
    detectability, detectability_at_optimum, linreg_grad_stats, LinRegProblem, LogRegProblem,
    LossModel, MeanEstimationProblem, Sample,
};
pub use trainer::{clip_to_norm, run_dpsgd, run_sgd, ParamTrace, SgdConfig, StepMeta};

#[allow(unused_imports)]
pub(crate) use trainer::{draw_batch, DATA_STREAM};

/// θ* shifted by a unit vector along (1, …, 1)/√d.
pub fn default_theta0(theta_star: &DVector<f64>) -> DVector<f64> {
    let d = theta_star.len() as f64;
    theta_star.map(|v| v + 1.0 / d.sqrt())
}
