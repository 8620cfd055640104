//! Synthetic learning problems with Gaussian covariates.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{check_range, Error, Result};
use crate::sgd::GradientStats;
use crate::stats::{GaussianParams, RngStream, SpdMatrix};

/// One training example. Problems without labels leave `y` at zero.
#[derive(Clone, Debug, PartialEq)]
pub struct Sample {
    pub x: DVector<f64>,
    pub y: f64,
}

impl Sample {
    pub fn new(x: DVector<f64>, y: f64) -> Self {
        Self { x, y }
    }

    pub fn point(x: DVector<f64>) -> Self {
        Self { x, y: 0.0 }
    }
}

/// A data distribution together with a differentiable per-sample loss.
pub trait LossModel: Sync {
    fn dim(&self) -> usize;

    fn sample(&self, rng: &mut RngStream) -> Sample;

    fn loss(&self, theta: &DVector<f64>, s: &Sample) -> f64;

    fn gradient(&self, theta: &DVector<f64>, s: &Sample) -> DVector<f64>;

    /// Closed-form per-sample gradient mean and covariance, when known.
    fn exact_grad_stats(&self, _theta: &DVector<f64>) -> Option<Result<GradientStats>> {
        None
    }
}

/// y = θ*ᵀx + ε with x ~ 𝒩(0, Σ_x), ε ~ 𝒩(0, σ_ε²); loss ½(y − θᵀx)².
#[derive(Clone, Debug)]
pub struct LinRegProblem {
    theta_star: DVector<f64>,
    covariates: GaussianParams,
    sigma_eps2: f64,
}

impl LinRegProblem {
    pub fn new(theta_star: DVector<f64>, sigma_x: SpdMatrix, sigma_eps2: f64) -> Result<Self> {
        check_range(
            "sigma_eps2",
            sigma_eps2,
            sigma_eps2 > 0.0 && sigma_eps2.is_finite(),
            "(0, inf)",
        )?;
        let d = sigma_x.dim();
        if theta_star.len() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                got: theta_star.len(),
            });
        }
        let covariates = GaussianParams::new(DVector::zeros(d), sigma_x.matrix().clone())?;
        Ok(Self {
            theta_star,
            covariates,
            sigma_eps2,
        })
    }

    pub fn theta_star(&self) -> &DVector<f64> {
        &self.theta_star
    }

    pub fn sigma_x(&self) -> &SpdMatrix {
        self.covariates
            .cov()
            .expect("covariates have SPD covariance")
    }

    pub fn sigma_eps2(&self) -> f64 {
        self.sigma_eps2
    }

    /// The residual y − θ*ᵀx of a point.
    pub fn residual(&self, s: &Sample) -> f64 {
        s.y - self.theta_star.dot(&s.x)
    }
}

impl LossModel for LinRegProblem {
    fn dim(&self) -> usize {
        self.theta_star.len()
    }

    fn sample(&self, rng: &mut RngStream) -> Sample {
        let mut x = DVector::zeros(self.dim());
        self.covariates.draw_into(rng, x.as_mut_slice());
        let eps: f64 = StandardNormal.sample(rng);
        let y = self.theta_star.dot(&x) + self.sigma_eps2.sqrt() * eps;
        Sample { x, y }
    }

    fn loss(&self, theta: &DVector<f64>, s: &Sample) -> f64 {
        let r = s.y - theta.dot(&s.x);
        0.5 * r * r
    }

    fn gradient(&self, theta: &DVector<f64>, s: &Sample) -> DVector<f64> {
        &s.x * (theta.dot(&s.x) - s.y)
    }

    fn exact_grad_stats(&self, theta: &DVector<f64>) -> Option<Result<GradientStats>> {
        Some(linreg_grad_stats(theta, self))
    }
}

/// Per-sample gradient mean Σ_xΔ and covariance
/// (σ_ε² + ΔᵀΣ_xΔ)Σ_x + Σ_xΔΔᵀΣ_x, with Δ = θ − θ*.
pub fn linreg_grad_stats(theta: &DVector<f64>, problem: &LinRegProblem) -> Result<GradientStats> {
    let d = problem.dim();
    if theta.len() != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            got: theta.len(),
        });
    }
    let sx = problem.sigma_x().matrix();
    let delta = theta - problem.theta_star();
    let mean = sx * &delta;
    let scale = problem.sigma_eps2() + delta.dot(&mean);
    let cov: DMatrix<f64> = sx * scale + &mean * mean.transpose();
    GradientStats::exact(mean, SpdMatrix::new(symmetrize(cov))?)
}

fn symmetrize(m: DMatrix<f64>) -> DMatrix<f64> {
    (&m + m.transpose()) * 0.5
}

/// y ~ Bernoulli(sigmoid(θ*ᵀx)) with x ~ 𝒩(0, Σ_x); log-loss.
#[derive(Clone, Debug)]
pub struct LogRegProblem {
    theta_star: DVector<f64>,
    covariates: GaussianParams,
}

impl LogRegProblem {
    pub fn new(theta_star: DVector<f64>, sigma_x: SpdMatrix) -> Result<Self> {
        let d = sigma_x.dim();
        if theta_star.len() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                got: theta_star.len(),
            });
        }
        let covariates = GaussianParams::new(DVector::zeros(d), sigma_x.matrix().clone())?;
        Ok(Self {
            theta_star,
            covariates,
        })
    }

    pub fn theta_star(&self) -> &DVector<f64> {
        &self.theta_star
    }
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

fn softplus(z: f64) -> f64 {
    z.max(0.0) + (-z.abs()).exp().ln_1p()
}

impl LossModel for LogRegProblem {
    fn dim(&self) -> usize {
        self.theta_star.len()
    }

    fn sample(&self, rng: &mut RngStream) -> Sample {
        let mut x = DVector::zeros(self.dim());
        self.covariates.draw_into(rng, x.as_mut_slice());
        let p = sigmoid(self.theta_star.dot(&x));
        let y = if rng.random::<f64>() < p { 1.0 } else { 0.0 };
        Sample { x, y }
    }

    fn loss(&self, theta: &DVector<f64>, s: &Sample) -> f64 {
        let z = theta.dot(&s.x);
        softplus(z) - s.y * z
    }

    fn gradient(&self, theta: &DVector<f64>, s: &Sample) -> DVector<f64> {
        &s.x * (sigmoid(theta.dot(&s.x)) - s.y)
    }
}

/// Points x ~ 𝒩(μ, Σ) with loss ½‖θ − x‖²; SGD with η_t = 1/t is then the
/// running mean.
#[derive(Clone, Debug)]
pub struct MeanEstimationProblem {
    params: GaussianParams,
}

impl MeanEstimationProblem {
    pub fn new(params: GaussianParams) -> Result<Self> {
        params.cov()?;
        Ok(Self { params })
    }

    pub fn params(&self) -> &GaussianParams {
        &self.params
    }
}

impl LossModel for MeanEstimationProblem {
    fn dim(&self) -> usize {
        self.params.dim()
    }

    fn sample(&self, rng: &mut RngStream) -> Sample {
        let mut x = DVector::zeros(self.dim());
        self.params.draw_into(rng, x.as_mut_slice());
        Sample::point(x)
    }

    fn loss(&self, theta: &DVector<f64>, s: &Sample) -> f64 {
        0.5 * (theta - &s.x).norm_squared()
    }

    fn gradient(&self, theta: &DVector<f64>, s: &Sample) -> DVector<f64> {
        theta - &s.x
    }

    fn exact_grad_stats(&self, theta: &DVector<f64>) -> Option<Result<GradientStats>> {
        let cov = match self.params.cov() {
            Ok(c) => c.clone(),
            Err(e) => return Some(Err(e)),
        };
        Some(GradientStats::exact(theta - self.params.mean(), cov))
    }
}

/// m* of a target under the exact gradient statistics at θ.
pub fn detectability(
    theta: &DVector<f64>,
    problem: &LinRegProblem,
    target: &Sample,
) -> Result<f64> {
    let stats = linreg_grad_stats(theta, problem)?;
    let g = problem.gradient(theta, target);
    Ok(stats.cov().quad(&(g - stats.mean())))
}

/// m* at θ = θ*, as (label outlier score) × (feature leverage score).
pub fn detectability_at_optimum(problem: &LinRegProblem, target: &Sample) -> f64 {
    let eps = problem.residual(target);
    eps * eps / problem.sigma_eps2() * problem.sigma_x().quad(&target.x)
}
