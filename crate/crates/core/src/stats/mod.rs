//! Numeric kernels shared by the mechanisms, tests and auditor.

mod linalg;
mod rng;
mod special;

pub use linalg::{mahalanobis_sq, sample_gaussian, GaussianParams, SpdMatrix};
pub use rng::RngStream;
pub use special::{
    chi2_cdf, log_sum_exp, noncentral_chi2_cdf, std_normal_cdf, std_normal_interval,
    std_normal_quantile, std_normal_sf,
};
