//! Small dense SPD algebra and Gaussian sampling.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::stats::RngStream;

/// A symmetric positive-definite matrix together with its Cholesky factor.
#[derive(Clone, Debug)]
pub struct SpdMatrix {
    matrix: DMatrix<f64>,
    chol: Cholesky<f64, Dyn>,
    diagonal: bool,
}

impl SpdMatrix {
    pub fn new(matrix: DMatrix<f64>) -> Result<Self> {
        if !matrix.is_square() {
            return Err(Error::DimensionMismatch {
                expected: matrix.nrows(),
                got: matrix.ncols(),
            });
        }
        if matrix.iter().any(|v| !v.is_finite()) {
            return Err(Error::NotPositiveDefinite);
        }
        let scale = matrix.amax();
        let d = matrix.nrows();
        let mut diagonal = true;
        for i in 0..d {
            for j in (i + 1)..d {
                let (a, b) = (matrix[(i, j)], matrix[(j, i)]);
                if (a - b).abs() > 1e-12 * scale {
                    return Err(Error::NotSymmetric);
                }
                if a != 0.0 || b != 0.0 {
                    diagonal = false;
                }
            }
        }
        let chol = Cholesky::new(matrix.clone()).ok_or(Error::NotPositiveDefinite)?;
        Ok(Self {
            matrix,
            chol,
            diagonal,
        })
    }

    pub fn identity(d: usize) -> Self {
        Self::new(DMatrix::identity(d, d)).expect("identity is SPD")
    }

    pub fn diagonal(entries: &[f64]) -> Result<Self> {
        Self::new(DMatrix::from_diagonal(&DVector::from_column_slice(entries)))
    }

    pub fn scalar(variance: f64) -> Result<Self> {
        Self::new(DMatrix::from_element(1, 1, variance))
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    /// Lower-triangular L with LLᵀ = Σ.
    pub fn factor(&self) -> DMatrix<f64> {
        self.chol.l()
    }

    pub fn is_diagonal(&self) -> bool {
        self.diagonal
    }

    /// Σ⁻¹v via two triangular solves.
    pub fn solve(&self, v: &DVector<f64>) -> DVector<f64> {
        self.chol.solve(v)
    }

    /// uᵀΣ⁻¹v.
    pub fn bilinear(&self, u: &DVector<f64>, v: &DVector<f64>) -> f64 {
        u.dot(&self.solve(v))
    }

    /// vᵀΣ⁻¹v, computed as ‖L⁻¹v‖².
    pub fn quad(&self, v: &DVector<f64>) -> f64 {
        let l = self.chol.l_dirty();
        let w = l
            .solve_lower_triangular(v)
            .expect("Cholesky factor has a non-zero diagonal");
        w.norm_squared()
    }

    pub fn scaled(&self, factor: f64) -> Result<Self> {
        Self::new(&self.matrix * factor)
    }
}

fn check_dim(expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(Error::DimensionMismatch { expected, got })
    }
}

/// Squared Mahalanobis distance vᵀΣ⁻¹v.
pub fn mahalanobis_sq(v: &DVector<f64>, sigma: &DMatrix<f64>) -> Result<f64> {
    check_dim(sigma.nrows(), v.len())?;
    Ok(SpdMatrix::new(sigma.clone())?.quad(v))
}

/// Parameters of a Gaussian 𝒩(mean, cov). The covariance is SPD except for
/// the point-mass case, which only the sampler accepts.
#[derive(Clone, Debug)]
pub struct GaussianParams {
    mean: DVector<f64>,
    cov: Option<SpdMatrix>,
    factor: DMatrix<f64>,
}

impl GaussianParams {
    pub fn new(mean: DVector<f64>, cov: DMatrix<f64>) -> Result<Self> {
        check_dim(cov.nrows(), mean.len())?;
        let cov = SpdMatrix::new(cov)?;
        let factor = cov.factor();
        Ok(Self {
            mean,
            cov: Some(cov),
            factor,
        })
    }

    pub fn univariate(mean: f64, variance: f64) -> Result<Self> {
        Self::new(
            DVector::from_element(1, mean),
            DMatrix::from_element(1, 1, variance),
        )
    }

    /// 𝒩(mean, 0): every sample equals the mean.
    pub fn point_mass(mean: DVector<f64>) -> Self {
        let d = mean.len();
        Self {
            mean,
            cov: None,
            factor: DMatrix::zeros(d, d),
        }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn mean(&self) -> &DVector<f64> {
        &self.mean
    }

    pub fn cov(&self) -> Result<&SpdMatrix> {
        self.cov.as_ref().ok_or(Error::NotPositiveDefinite)
    }

    pub(crate) fn factor_is_diagonal(&self) -> bool {
        self.cov.as_ref().is_none_or(|c| c.is_diagonal())
    }

    /// Writes mean + L·z for a fresh standard-normal z into `out`.
    pub(crate) fn draw_into(&self, rng: &mut RngStream, out: &mut [f64]) {
        let d = self.dim();
        debug_assert_eq!(out.len(), d);
        if self.factor_is_diagonal() {
            for (i, o) in out.iter_mut().enumerate() {
                let z: f64 = StandardNormal.sample(rng);
                *o = self.mean[i] + self.factor[(i, i)] * z;
            }
        } else {
            let z: Vec<f64> = (0..d).map(|_| StandardNormal.sample(rng)).collect();
            for (i, o) in out.iter_mut().enumerate() {
                let mut acc = self.mean[i];
                for (k, zk) in z.iter().enumerate().take(i + 1) {
                    acc += self.factor[(i, k)] * zk;
                }
                *o = acc;
            }
        }
    }
}

/// `count` draws from `params`, one per row.
pub fn sample_gaussian(
    stream: &mut RngStream,
    params: &GaussianParams,
    count: usize,
) -> DMatrix<f64> {
    let d = params.dim();
    let mut out = DMatrix::zeros(count, d);
    let mut row = vec![0.0; d];
    for r in 0..count {
        params.draw_into(stream, &mut row);
        for (c, v) in row.iter().enumerate() {
            out[(r, c)] = *v;
        }
    }
    out
}
