//! Special functions: normal CDF, log-sum-exp and the (non-)central
//! chi-squared CDF.

use statrs::distribution::{ContinuousCDF, Normal};
use statrs::function::gamma::{gamma_lr, ln_gamma};

use crate::error::{Error, Result};

const SQRT_2: f64 = std::f64::consts::SQRT_2;

/// Poisson tail mass left out of the non-central chi-squared series.
const NCX2_TAIL: f64 = 1e-14;

/// Φ(x), the standard normal CDF.
pub fn std_normal_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x / SQRT_2)
}

/// 1 − Φ(x), evaluated without cancellation for large x.
pub fn std_normal_sf(x: f64) -> f64 {
    0.5 * libm::erfc(x / SQRT_2)
}

/// P(lo < Z < hi) for Z ~ N(0, 1), using whichever tail keeps precision.
pub fn std_normal_interval(lo: f64, hi: f64) -> f64 {
    if hi <= lo {
        return 0.0;
    }
    if lo > 0.0 {
        std_normal_sf(lo) - std_normal_sf(hi)
    } else if hi < 0.0 {
        std_normal_cdf(hi) - std_normal_cdf(lo)
    } else {
        1.0 - std_normal_cdf(lo) - std_normal_sf(hi)
    }
}

/// Φ⁻¹(p) for p in (0, 1), polished with one Newton step against
/// [`std_normal_cdf`].
pub fn std_normal_quantile(p: f64) -> f64 {
    let x = Normal::standard().inverse_cdf(p);
    if !x.is_finite() {
        return x;
    }
    let pdf = (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt();
    if pdf == 0.0 {
        return x;
    }
    let err = if x > 0.0 {
        (1.0 - p) - std_normal_sf(x)
    } else {
        std_normal_cdf(x) - p
    };
    x - err / pdf
}

/// log Σ exp(vᵢ) with the max-subtraction trick.
pub fn log_sum_exp(values: &[f64]) -> Result<f64> {
    let max = values
        .iter()
        .copied()
        .fold(None, |acc: Option<f64>, v| {
            Some(acc.map_or(v, |m| m.max(v)))
        })
        .ok_or(Error::EmptyStatistics)?;
    if max.is_infinite() {
        return Ok(max);
    }
    let sum: f64 = values.iter().map(|v| (v - max).exp()).sum();
    Ok(max + sum.ln())
}

/// CDF of the central chi-squared distribution with `dof` degrees of freedom.
pub fn chi2_cdf(x: f64, dof: u32) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    if x.is_infinite() {
        return 1.0;
    }
    gamma_lr(0.5 * dof as f64, 0.5 * x)
}

/// CDF of the non-central chi-squared distribution χ²_d(λ).
///
/// Evaluated as the Poisson(λ/2) mixture of central χ²_{d+2j} CDFs, summed
/// outward from the Poisson mode until the geometric bound on the omitted
/// Poisson mass on each side drops below 1e-14.
pub fn noncentral_chi2_cdf(x: f64, dof: u32, lambda: f64) -> Result<f64> {
    if !lambda.is_finite() || lambda < 0.0 {
        return Err(Error::OutOfRange {
            name: "lambda",
            value: lambda,
            range: "[0, inf)",
        });
    }
    if dof == 0 {
        return Err(Error::OutOfRange {
            name: "dof",
            value: 0.0,
            range: "[1, inf)",
        });
    }
    if x.is_nan() {
        return Err(Error::Numerical("noncentral_chi2_cdf at NaN".into()));
    }
    if x <= 0.0 {
        return Ok(0.0);
    }
    if lambda == 0.0 {
        return Ok(chi2_cdf(x, dof));
    }

    let half = 0.5 * lambda;
    let a0 = 0.5 * dof as f64;
    let hx = 0.5 * x;
    let mode = half.floor();
    let log_w_mode = -half + mode * half.ln() - ln_gamma(mode + 1.0);
    let w_mode = log_w_mode.exp();

    let mut total = w_mode * gamma_lr(a0 + mode, hx);

    // upward: ratio w_{j+1}/w_j = half / (j + 1) < 1 for j >= mode
    let mut w = w_mode;
    let mut j = mode;
    loop {
        j += 1.0;
        w *= half / j;
        total += w * gamma_lr(a0 + j, hx);
        let r = half / (j + 1.0);
        if w * r / (1.0 - r) < 0.5 * NCX2_TAIL {
            break;
        }
    }

    // downward: ratio w_{j-1}/w_j = j / half < 1 for j <= mode
    let mut w = w_mode;
    let mut j = mode;
    while j > 0.0 {
        w *= j / half;
        j -= 1.0;
        total += w * gamma_lr(a0 + j, hx);
        let r = j / half;
        if j == 0.0 || w * r / (1.0 - r) < 0.5 * NCX2_TAIL {
            break;
        }
    }

    Ok(total.clamp(0.0, 1.0))
}
