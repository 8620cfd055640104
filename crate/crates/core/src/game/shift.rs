use rand_distr::{Distribution, StandardNormal};

use crate::attacks::Adversary;
use crate::error::{check_range, Error, Result};
use crate::game::{Draw, SemiGame};
use crate::stats::RngStream;

/// A single-release Gaussian mechanism: it outputs B·Δ + 𝒩(0, s²). This is
/// μ-GDP with μ = Δ/s, so its true ε is known in closed form.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GaussianShiftGame {
    shift: f64,
    noise_sd: f64,
}

impl GaussianShiftGame {
    pub fn new(shift: f64, noise_sd: f64) -> Result<Self> {
        check_range("shift", shift, shift > 0.0 && shift.is_finite(), "(0, inf)")?;
        check_range(
            "noise_sd",
            noise_sd,
            noise_sd > 0.0 && noise_sd.is_finite(),
            "(0, inf)",
        )?;
        Ok(Self { shift, noise_sd })
    }

    /// The GDP parameter Δ/s.
    pub fn mu(&self) -> f64 {
        self.shift / self.noise_sd
    }

    pub fn log_lr(&self, x: f64) -> f64 {
        (self.shift * x - 0.5 * self.shift * self.shift) / (self.noise_sd * self.noise_sd)
    }
}

impl SemiGame for GaussianShiftGame {
    type Trace = f64;

    fn horizon(&self) -> usize {
        1
    }

    fn batch_size(&self, _t: usize) -> usize {
        1
    }

    fn play(&self, draw: &Draw, stream: &mut RngStream) -> Result<f64> {
        let z: f64 = StandardNormal.sample(stream);
        let mean = if draw.member { self.shift } else { 0.0 };
        Ok(mean + self.noise_sd * z)
    }

    fn statistic(&self, adv: Adversary, trace: &f64, _tau: Option<usize>) -> Result<f64> {
        match adv {
            Adversary::SemiStar | Adversary::SemiUnif | Adversary::SemiMax => {
                Ok(self.log_lr(*trace))
            }
            other => Err(Error::UnsupportedAdversary(other.name())),
        }
    }
}
