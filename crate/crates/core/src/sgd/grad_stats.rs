//! Per-sample gradient statistics: closed form, estimated from reference
//! data, and the DP-noise adjustment.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::sgd::{clip_to_norm, LossModel, Sample};
use crate::stats::SpdMatrix;

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Provenance {
    Exact,
    Estimated { samples: usize, ridge: f64 },
}

/// Mean μ_g and covariance Σ_g of a single per-sample gradient.
#[derive(Clone, Debug)]
pub struct GradientStats {
    mean: DVector<f64>,
    cov: SpdMatrix,
    provenance: Provenance,
}

impl GradientStats {
    pub fn exact(mean: DVector<f64>, cov: SpdMatrix) -> Result<Self> {
        if mean.len() != cov.dim() {
            return Err(Error::DimensionMismatch {
                expected: cov.dim(),
                got: mean.len(),
            });
        }
        Ok(Self {
            mean,
            cov,
            provenance: Provenance::Exact,
        })
    }

    pub fn mean(&self) -> &DVector<f64> {
        &self.mean
    }

    pub fn cov(&self) -> &SpdMatrix {
        &self.cov
    }

    pub fn provenance(&self) -> Provenance {
        self.provenance
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    /// Folds DP noise 𝒩(0, σ²C²I/n²) on the batch gradient into the
    /// per-sample covariance, giving Σ_g + (σ²C²/n)·I.
    pub fn with_dp_noise(&self, noise_multiplier: f64, clip: f64, n: usize) -> Result<Self> {
        if noise_multiplier == 0.0 {
            return Ok(self.clone());
        }
        let extra = noise_multiplier * noise_multiplier * clip * clip / n as f64;
        let d = self.dim();
        let cov = SpdMatrix::new(self.cov.matrix() + DMatrix::identity(d, d) * extra)?;
        Ok(Self {
            mean: self.mean.clone(),
            cov,
            provenance: self.provenance,
        })
    }

    /// Squared Mahalanobis distance of a gradient from μ_g.
    pub fn mahalanobis(&self, grad: &DVector<f64>) -> f64 {
        self.cov.quad(&(grad - &self.mean))
    }
}

/// How much of the identity to add to an estimated covariance.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Ridge {
    /// 1e-6 · trace(Σ̂)/d.
    Auto,
    Fixed(f64),
}

/// Per-sample gradients of a reference set at θ, clipped when `clip` is set.
pub fn reference_gradients<M: LossModel + ?Sized>(
    model: &M,
    theta: &DVector<f64>,
    reference: &[Sample],
    clip: Option<f64>,
) -> Vec<DVector<f64>> {
    reference
        .iter()
        .map(|s| {
            let mut g = model.gradient(theta, s);
            if let Some(c) = clip {
                clip_to_norm(&mut g, c);
            }
            g
        })
        .collect()
}

/// Sample mean and unbiased sample covariance of `grads`, plus a ridge.
pub fn estimate_grad_stats(grads: &[DVector<f64>], ridge: Ridge) -> Result<GradientStats> {
    let m = grads.len();
    if m < 2 {
        return Err(Error::OutOfRange {
            name: "reference size",
            value: m as f64,
            range: "[2, inf)",
        });
    }
    let d = grads[0].len();
    let mut mean = DVector::zeros(d);
    for g in grads {
        if g.len() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                got: g.len(),
            });
        }
        mean += g;
    }
    mean /= m as f64;
    let mut cov = DMatrix::zeros(d, d);
    for g in grads {
        let c = g - &mean;
        cov.syger(1.0, &c, &c, 1.0);
    }
    cov /= (m - 1) as f64;
    cov.fill_upper_triangle_with_lower_triangle();
    let ridge = match ridge {
        Ridge::Auto => 1e-6 * cov.trace() / d as f64,
        Ridge::Fixed(r) if r >= 0.0 && r.is_finite() => r,
        Ridge::Fixed(r) => {
            return Err(Error::OutOfRange {
                name: "ridge",
                value: r,
                range: "[0, inf)",
            })
        }
    };
    for i in 0..d {
        cov[(i, i)] += ridge;
    }
    let cov = SpdMatrix::new(cov).map_err(|e| match e {
        Error::NotPositiveDefinite => Error::RidgeTooSmall { ridge },
        other => other,
    })?;
    Ok(GradientStats {
        mean,
        cov,
        provenance: Provenance::Estimated { samples: m, ridge },
    })
}

/// The candidate whose gradient lies furthest from μ_g in Mahalanobis
/// distance; ties go to the lowest index.
pub fn select_target<M: LossModel + ?Sized>(
    model: &M,
    pool: &[Sample],
    theta: &DVector<f64>,
    stats: &GradientStats,
) -> Result<(usize, f64)> {
    let mut best: Option<(usize, f64)> = None;
    for (i, s) in pool.iter().enumerate() {
        let m = stats.mahalanobis(&model.gradient(theta, s));
        if best.is_none_or(|(_, b)| m > b) {
            best = Some((i, m));
        }
    }
    best.ok_or(Error::EmptyStatistics)
}
