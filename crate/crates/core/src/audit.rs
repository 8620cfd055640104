//! High-confidence ε lower bounds from game records, and the Gaussian
//! accountant that defines the true ε of the synthetic DP-SGD testbed.
//!
//! With ᾱ, β̄ upper confidence bounds on the errors of the test "T > γ",
//! any (ε, δ)-DP mechanism satisfies both
//! e^ε ≥ (1 − δ − β̄)/ᾱ and e^ε ≥ (1 − δ − ᾱ)/β̄, so the larger of the two
//! over all γ lower-bounds ε. The DKW band is uniform in γ, so the sweep
//! costs no union bound.

use serde::{Serialize, Serializer};

use crate::error::{check_range, Result};
use crate::game::{estimate_errors, threshold_grid, Observation};
use crate::sgd::SgdConfig;
use crate::stats::{std_normal_cdf, std_normal_sf};

/// Which thresholds the audit sweeps.
#[derive(Clone, Debug, Default, PartialEq)]
pub enum GammaSweep {
    /// Every observed statistic plus ±∞; attains the supremum over ℝ.
    #[default]
    Observed,
    Fixed(Vec<f64>),
}

#[derive(Clone, Debug, PartialEq)]
pub struct AuditConfig {
    pub delta: f64,
    pub xi: f64,
    pub sweep: GammaSweep,
}

impl AuditConfig {
    pub fn new(delta: f64, xi: f64) -> Result<Self> {
        let c = Self {
            delta,
            xi,
            sweep: GammaSweep::Observed,
        };
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        check_range(
            "delta",
            self.delta,
            (0.0..1.0).contains(&self.delta),
            "[0, 1)",
        )?;
        check_range("xi", self.xi, self.xi > 0.0 && self.xi < 1.0, "(0, 1)")
    }
}

/// Which inequality produced the bound: `Alpha` divides by ᾱ, `Beta` by β̄.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Alpha,
    Beta,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AuditOutcome {
    pub epsilon_lb: f64,
    #[serde(serialize_with = "extended_f64")]
    pub gamma: f64,
    pub side: Side,
    pub alpha_ucb: f64,
    pub beta_ucb: f64,
    pub n0: usize,
    pub n1: usize,
    pub xi: f64,
    pub delta: f64,
}

/// JSON has no infinities; write them as the strings "inf" and "-inf".
fn extended_f64<S: Serializer>(x: &f64, s: S) -> std::result::Result<S::Ok, S::Error> {
    if x.is_finite() {
        s.serialize_f64(*x)
    } else if *x > 0.0 {
        s.serialize_str("inf")
    } else if *x < 0.0 {
        s.serialize_str("-inf")
    } else {
        s.serialize_str("nan")
    }
}

/// √(ln(4/ξ)/(2N)).
pub fn dkw_half_width(n: usize, xi: f64) -> f64 {
    ((4.0 / xi).ln() / (2.0 * n as f64)).sqrt()
}

#[derive(Clone, Debug, PartialEq)]
pub struct UcbErrors {
    pub gammas: Vec<f64>,
    pub alpha: Vec<f64>,
    pub beta: Vec<f64>,
    pub n0: usize,
    pub n1: usize,
}

/// Empirical errors raised by the DKW half-width of their class, capped at 1.
pub fn ucb_errors(obs: &[Observation], gammas: &[f64], xi: f64) -> Result<UcbErrors> {
    check_range("xi", xi, xi > 0.0 && xi < 1.0, "(0, 1)")?;
    let est = estimate_errors(obs, gammas)?;
    let h0 = dkw_half_width(est.n0, xi);
    let h1 = dkw_half_width(est.n1, xi);
    Ok(UcbErrors {
        alpha: est.alpha.iter().map(|a| (a + h0).min(1.0)).collect(),
        beta: est.beta.iter().map(|b| (b + h1).min(1.0)).collect(),
        gammas: est.gammas,
        n0: est.n0,
        n1: est.n1,
    })
}

fn log_ratio(num: f64, den: f64) -> f64 {
    if num <= 0.0 {
        f64::NEG_INFINITY
    } else {
        (num / den).ln()
    }
}

/// ε̲ maximized over thresholds and both inequalities, clamped at 0.
pub fn epsilon_lower_bound(obs: &[Observation], config: &AuditConfig) -> Result<AuditOutcome> {
    config.validate()?;
    let gammas = match &config.sweep {
        GammaSweep::Observed => threshold_grid(obs),
        GammaSweep::Fixed(g) => g.clone(),
    };
    let ucb = ucb_errors(obs, &gammas, config.xi)?;
    let keep = 1.0 - config.delta;
    let mut best = (f64::NEG_INFINITY, 0, Side::Alpha);
    for (i, (&a, &b)) in ucb.alpha.iter().zip(&ucb.beta).enumerate() {
        for (v, side) in [
            (log_ratio(keep - b, a), Side::Alpha),
            (log_ratio(keep - a, b), Side::Beta),
        ] {
            if v > best.0 {
                best = (v, i, side);
            }
        }
    }
    let (value, i, side) = best;
    Ok(AuditOutcome {
        epsilon_lb: value.max(0.0),
        gamma: ucb.gammas.get(i).copied().unwrap_or(f64::NAN),
        side,
        alpha_ucb: ucb.alpha.get(i).copied().unwrap_or(1.0),
        beta_ucb: ucb.beta.get(i).copied().unwrap_or(1.0),
        n0: ucb.n0,
        n1: ucb.n1,
        xi: config.xi,
        delta: config.delta,
    })
}

/// δ(ε) of a μ-GDP mechanism: Φ(−ε/μ + μ/2) − e^ε Φ(−ε/μ − μ/2).
pub fn delta_for_epsilon_gdp(epsilon: f64, mu: f64) -> f64 {
    if mu <= 0.0 {
        return 0.0;
    }
    if mu.is_infinite() {
        return 1.0;
    }
    let a = -epsilon / mu + mu / 2.0;
    let b = -epsilon / mu - mu / 2.0;
    // e^ε Φ(b) overflows before it matters if taken literally
    let p = std_normal_cdf(b);
    let second = if p > 0.0 {
        (epsilon + p.ln()).exp()
    } else {
        0.0
    };
    (std_normal_cdf(a) - second).max(0.0)
}

/// Smallest ε with δ(ε) ≤ `delta` for a μ-GDP mechanism.
pub fn epsilon_for_delta_gdp(mu: f64, delta: f64) -> Result<f64> {
    check_range("mu", mu, mu >= 0.0, "[0, inf]")?;
    check_range("delta", delta, delta > 0.0 && delta < 1.0, "(0, 1)")?;
    if mu.is_infinite() {
        return Ok(f64::INFINITY);
    }
    if delta_for_epsilon_gdp(0.0, mu) <= delta {
        return Ok(0.0);
    }
    let mut hi = 1.0;
    while delta_for_epsilon_gdp(hi, mu) > delta {
        hi *= 2.0;
    }
    let mut lo = 0.0;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if delta_for_epsilon_gdp(mid, mu) > delta {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-13 * hi.max(1.0) {
            break;
        }
    }
    Ok(hi)
}

/// GDP parameter of T full-batch Gaussian steps with noise multiplier σ:
/// each step has sensitivity C/n and noise σC/n, so μ = √T/σ.
pub fn gdp_mu(horizon: usize, noise_multiplier: f64) -> f64 {
    if noise_multiplier == 0.0 {
        f64::INFINITY
    } else {
        (horizon as f64).sqrt() / noise_multiplier
    }
}

/// True ε of a DP-SGD configuration at `delta`; ∞ when no noise is added.
pub fn ground_truth_epsilon(config: &SgdConfig, delta: f64) -> Result<f64> {
    config.validate()?;
    if config.clip.is_none() || config.noise_multiplier == 0.0 {
        return Ok(f64::INFINITY);
    }
    epsilon_for_delta_gdp(gdp_mu(config.horizon(), config.noise_multiplier), delta)
}

/// The noise multiplier for which T steps are exactly (ε, δ)-DP.
pub fn noise_multiplier_for_epsilon(epsilon: f64, delta: f64, horizon: usize) -> Result<f64> {
    check_range(
        "epsilon",
        epsilon,
        epsilon > 0.0 && epsilon.is_finite(),
        "(0, inf)",
    )?;
    check_range("horizon", horizon as f64, horizon >= 1, "[1, inf)")?;
    let eps_at = |sigma: f64| epsilon_for_delta_gdp(gdp_mu(horizon, sigma), delta);
    let (mut lo, mut hi) = (1e-3, 1.0);
    while eps_at(hi)? > epsilon {
        lo = hi;
        hi *= 2.0;
    }
    if eps_at(lo)? < epsilon {
        return Err(crate::Error::Unattainable(epsilon));
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if eps_at(mid)? > epsilon {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-13 * hi {
            break;
        }
    }
    Ok(hi)
}

/// The μ-GDP trade-off curve: the least type II error at type I error α.
pub fn gdp_tradeoff(alpha: f64, mu: f64) -> f64 {
    // Φ(Φ⁻¹(1 − α) − μ), evaluated as an upper tail
    if alpha <= 0.0 {
        return 1.0;
    }
    if alpha >= 1.0 {
        return 0.0;
    }
    std_normal_sf(mu + crate::stats::std_normal_quantile(alpha))
}
