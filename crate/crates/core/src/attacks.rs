//! Membership test statistics.
//!
//! Every statistic is a log likelihood ratio (or, for the loss heuristics, a
//! score on the same "larger means member" scale). The sequential tests take
//! the recovered batch mean or a parameter pair rather than the whole trace,
//! so nothing outside the tested step can influence them.

use std::fmt;
use std::str::FromStr;

use nalgebra::DVector;

use crate::error::{check_range, Error, Result};
use crate::mean_mechanism::{recover_batch_mean, DistributionSchedule, MeanTrace};
use crate::sgd::GradientStats;
use crate::stats::{log_sum_exp, SpdMatrix};

/// The adversaries the game harness can run.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Adversary {
    SemiStar,
    SemiUnif,
    SemiMax,
    FinalObservation,
    SemiSgd,
    DeltaDiff,
    DeltaRatio,
    BackFrontDiff,
    BackFrontRatio,
}

impl Adversary {
    pub const ALL: [Adversary; 9] = [
        Adversary::SemiStar,
        Adversary::SemiUnif,
        Adversary::SemiMax,
        Adversary::FinalObservation,
        Adversary::SemiSgd,
        Adversary::DeltaDiff,
        Adversary::DeltaRatio,
        Adversary::BackFrontDiff,
        Adversary::BackFrontRatio,
    ];

    pub const BASELINES: [Adversary; 4] = [
        Adversary::DeltaDiff,
        Adversary::DeltaRatio,
        Adversary::BackFrontDiff,
        Adversary::BackFrontRatio,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Adversary::SemiStar => "semi_star",
            Adversary::SemiUnif => "semi_unif",
            Adversary::SemiMax => "semi_max",
            Adversary::FinalObservation => "final_observation",
            Adversary::SemiSgd => "semi_sgd",
            Adversary::DeltaDiff => "delta_diff",
            Adversary::DeltaRatio => "delta_ratio",
            Adversary::BackFrontDiff => "back_front_diff",
            Adversary::BackFrontRatio => "back_front_ratio",
        }
    }

    /// Whether the adversary is told the insertion time.
    pub fn knows_tau(self) -> bool {
        matches!(self, Adversary::SemiStar | Adversary::SemiSgd)
    }
}

impl fmt::Display for Adversary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UnknownAdversary(pub String);

impl fmt::Display for UnknownAdversary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "unknown adversary `{}`", self.0)
    }
}

impl std::error::Error for UnknownAdversary {}

impl FromStr for Adversary {
    type Err = UnknownAdversary;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        let key = s.trim().to_ascii_lowercase().replace('-', "_");
        Adversary::ALL
            .into_iter()
            .find(|a| a.name() == key)
            .ok_or_else(|| UnknownAdversary(s.to_string()))
    }
}

/// Per-time log-LRs (where the test has them) and the value the test
/// thresholds.
#[derive(Clone, Debug, PartialEq)]
pub struct TestStatistics {
    pub kind: Adversary,
    pub per_time: Vec<f64>,
    pub aggregate: f64,
}

impl TestStatistics {
    pub fn unif(per_time: Vec<f64>) -> Result<Self> {
        let aggregate = semi_unif(&per_time)?;
        Ok(Self {
            kind: Adversary::SemiUnif,
            per_time,
            aggregate,
        })
    }

    pub fn max(per_time: Vec<f64>) -> Result<Self> {
        let aggregate = semi_max(&per_time)?;
        Ok(Self {
            kind: Adversary::SemiMax,
            per_time,
            aggregate,
        })
    }
}

fn check_batch(n: usize) -> Result<()> {
    if n < 2 {
        Err(Error::BatchTooSmall(n))
    } else {
        Ok(())
    }
}

fn log_det_ratio(d: usize, n: usize) -> f64 {
    // −(d/2)·log((n−1)/n), written with ln_1p for large n
    -0.5 * d as f64 * (-1.0 / n as f64).ln_1p()
}

/// Univariate known-τ log-LR of a batch mean.
pub fn semi_star_uni(batch_mean: f64, mu: f64, sigma2: f64, n: usize, target: f64) -> Result<f64> {
    check_batch(n)?;
    check_range(
        "sigma2",
        sigma2,
        sigma2 > 0.0 && sigma2.is_finite(),
        "(0, inf)",
    )?;
    let nf = n as f64;
    let big_n = batch_mean - mu;
    let s = target - mu;
    let k = nf - 1.0;
    Ok(
        log_det_ratio(1, n) - nf * big_n * big_n / (2.0 * k * sigma2)
            + s * nf * big_n / (k * sigma2)
            - s * s / (2.0 * k * sigma2),
    )
}

/// Known-τ log-LR for one step, with Σ⁻¹(z* − μ) and m* precomputed.
#[derive(Clone, Debug)]
pub struct SemiStar {
    mu: DVector<f64>,
    cov: SpdMatrix,
    n: usize,
    shift_solved: DVector<f64>,
    m_star: f64,
}

impl SemiStar {
    pub fn new(mu: DVector<f64>, cov: SpdMatrix, n: usize, target: &DVector<f64>) -> Result<Self> {
        check_batch(n)?;
        let d = cov.dim();
        for len in [mu.len(), target.len()] {
            if len != d {
                return Err(Error::DimensionMismatch {
                    expected: d,
                    got: len,
                });
            }
        }
        let shift = target - &mu;
        let shift_solved = cov.solve(&shift);
        let m_star = cov.quad(&shift);
        Ok(Self {
            mu,
            cov,
            n,
            shift_solved,
            m_star,
        })
    }

    pub fn m_star(&self) -> f64 {
        self.m_star
    }

    pub fn batch_size(&self) -> usize {
        self.n
    }

    pub fn log_lr(&self, batch_mean: &DVector<f64>) -> Result<f64> {
        let d = self.cov.dim();
        if batch_mean.len() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                got: batch_mean.len(),
            });
        }
        let nf = self.n as f64;
        let k = nf - 1.0;
        let big_n = batch_mean - &self.mu;
        Ok(
            log_det_ratio(d, self.n) - nf / (2.0 * k) * self.cov.quad(&big_n)
                + nf / k * big_n.dot(&self.shift_solved)
                - self.m_star / (2.0 * k),
        )
    }
}

/// Multivariate known-τ log-LR.
pub fn semi_star_mv(
    batch_mean: &DVector<f64>,
    mu: &DVector<f64>,
    sigma: &SpdMatrix,
    n: usize,
    target: &DVector<f64>,
) -> Result<f64> {
    SemiStar::new(mu.clone(), sigma.clone(), n, target)?.log_lr(batch_mean)
}

/// Average of the per-time likelihood ratios, on log scale.
pub fn semi_unif(per_time: &[f64]) -> Result<f64> {
    Ok(log_sum_exp(per_time)? - (per_time.len() as f64).ln())
}

/// Largest per-time log-LR.
pub fn semi_max(per_time: &[f64]) -> Result<f64> {
    per_time
        .iter()
        .copied()
        .reduce(f64::max)
        .ok_or(Error::EmptyStatistics)
}

/// Log-LR of the last release alone, treating it as one batch of n·T points.
pub fn final_observation(
    final_mean: &DVector<f64>,
    mu: &DVector<f64>,
    sigma: &SpdMatrix,
    n: usize,
    horizon: usize,
    target: &DVector<f64>,
) -> Result<f64> {
    semi_star_mv(final_mean, mu, sigma, n * horizon, target)
}

/// Precomputed statistics for attacking a running-mean trace.
#[derive(Clone, Debug)]
pub struct MeanAttack {
    per_step: Vec<SemiStar>,
    final_obs: Option<SemiStar>,
}

impl MeanAttack {
    /// Final Observation is available only for a stationary schedule.
    pub fn new(schedule: &DistributionSchedule, n: usize, target: &DVector<f64>) -> Result<Self> {
        let per_step = (1..=schedule.horizon())
            .map(|t| {
                let p = schedule.step(t);
                SemiStar::new(p.mean().clone(), p.cov()?.clone(), n, target)
            })
            .collect::<Result<Vec<_>>>()?;
        let final_obs = if schedule.is_stationary() {
            let p = schedule.step(1);
            Some(SemiStar::new(
                p.mean().clone(),
                p.cov()?.clone(),
                n * schedule.horizon(),
                target,
            )?)
        } else {
            None
        };
        Ok(Self {
            per_step,
            final_obs,
        })
    }

    pub fn horizon(&self) -> usize {
        self.per_step.len()
    }

    pub fn step(&self, t: usize) -> &SemiStar {
        &self.per_step[t - 1]
    }

    pub fn log_lr_at(&self, trace: &MeanTrace, t: usize) -> Result<f64> {
        self.check_trace(trace)?;
        self.per_step[t - 1].log_lr(&recover_batch_mean(trace, t)?)
    }

    pub fn per_time(&self, trace: &MeanTrace) -> Result<Vec<f64>> {
        self.check_trace(trace)?;
        (1..=trace.horizon())
            .map(|t| self.per_step[t - 1].log_lr(&recover_batch_mean(trace, t)?))
            .collect()
    }

    pub fn final_observation(&self, trace: &MeanTrace) -> Result<f64> {
        self.check_trace(trace)?;
        self.final_obs
            .as_ref()
            .ok_or(Error::UnsupportedAdversary("final_observation"))?
            .log_lr(trace.last())
    }

    /// Evaluates one adversary; `tau` must be given to those that know it.
    pub fn statistic(&self, adv: Adversary, trace: &MeanTrace, tau: Option<usize>) -> Result<f64> {
        match adv {
            Adversary::SemiStar => {
                let tau = tau.ok_or(Error::MissingInsertionTime(adv.name()))?;
                check_range(
                    "tau",
                    tau as f64,
                    (1..=self.horizon()).contains(&tau),
                    "[1, T]",
                )?;
                self.log_lr_at(trace, tau)
            }
            Adversary::SemiUnif => semi_unif(&self.per_time(trace)?),
            Adversary::SemiMax => semi_max(&self.per_time(trace)?),
            Adversary::FinalObservation => self.final_observation(trace),
            other => Err(Error::UnsupportedAdversary(other.name())),
        }
    }

    fn check_trace(&self, trace: &MeanTrace) -> Result<()> {
        if trace.horizon() != self.horizon() {
            return Err(Error::DimensionMismatch {
                expected: self.horizon(),
                got: trace.horizon(),
            });
        }
        for t in 1..=trace.horizon() {
            if trace.batch_size(t) != self.per_step[t - 1].batch_size() {
                return Err(Error::DimensionMismatch {
                    expected: self.per_step[t - 1].batch_size(),
                    got: trace.batch_size(t),
                });
            }
        }
        Ok(())
    }
}

/// Log-LR that the step θ_{τ−1} → θ_τ used a batch containing the target,
/// under the Gaussian model for the batch gradient.
pub fn semi_sgd(
    theta_prev: &DVector<f64>,
    theta_next: &DVector<f64>,
    eta: f64,
    n: usize,
    grad_stats: &GradientStats,
    target_grad: &DVector<f64>,
) -> Result<f64> {
    check_batch(n)?;
    check_range("eta", eta, eta > 0.0 && eta.is_finite(), "(0, inf)")?;
    let cov = grad_stats.cov();
    let d = cov.dim();
    for len in [theta_prev.len(), theta_next.len(), target_grad.len()] {
        if len != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                got: len,
            });
        }
    }
    let big_n = theta_next - theta_prev + grad_stats.mean() * eta;
    let delta = target_grad - grad_stats.mean();
    let nf = n as f64;
    let k = nf - 1.0;
    let m_star = cov.quad(&delta);
    Ok(log_det_ratio(d, n)
        - nf / (2.0 * k * eta * eta) * cov.quad(&big_n)
        - nf / (k * eta) * cov.bilinear(&big_n, &delta)
        - m_star / (2.0 * k))
}

/// Loss-based heuristic scores from ℓ(θ_t; z*), t = 0..T.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BaselineScores {
    pub delta_diff: f64,
    pub delta_ratio: f64,
    pub back_front_diff: f64,
    pub back_front_ratio: f64,
}

impl BaselineScores {
    pub fn get(&self, adv: Adversary) -> Result<f64> {
        match adv {
            Adversary::DeltaDiff => Ok(self.delta_diff),
            Adversary::DeltaRatio => Ok(self.delta_ratio),
            Adversary::BackFrontDiff => Ok(self.back_front_diff),
            Adversary::BackFrontRatio => Ok(self.back_front_ratio),
            other => Err(Error::UnsupportedAdversary(other.name())),
        }
    }
}

pub fn baseline_statistics(losses: &[f64]) -> Result<BaselineScores> {
    if losses.len() < 2 {
        return Err(Error::EmptyStatistics);
    }
    if let Some(bad) = losses.iter().find(|l| !l.is_finite()) {
        return Err(Error::Numerical(format!("non-finite loss {bad}")));
    }
    let mut delta_diff = f64::NEG_INFINITY;
    let mut delta_ratio = f64::NEG_INFINITY;
    for w in losses.windows(2) {
        if w[1] <= 0.0 {
            return Err(Error::RatioUndefined(w[1]));
        }
        delta_diff = delta_diff.max(w[0] - w[1]);
        delta_ratio = delta_ratio.max(w[0] / w[1]);
    }
    let first = losses[0];
    let last = losses[losses.len() - 1];
    Ok(BaselineScores {
        delta_diff,
        delta_ratio,
        back_front_diff: first - last,
        back_front_ratio: first / last,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DMatrix;
    use proptest::prelude::*;

    /// log 𝒩(x; m, C) for the density-ratio oracle, via an explicit inverse
    /// and determinant.
    fn log_normal_pdf(x: &DVector<f64>, m: &DVector<f64>, c: &DMatrix<f64>) -> f64 {
        let d = x.len() as f64;
        let r = x - m;
        let inv = c.clone().try_inverse().unwrap();
        -0.5 * (d * (2.0 * std::f64::consts::PI).ln() + c.determinant().ln())
            - 0.5 * (r.transpose() * inv * &r)[(0, 0)]
    }

    /// Batch mean under H₁: (z* + n−1 fresh points)/n; under H₀: n fresh points.
    fn density_ratio_oracle(
        xbar: &DVector<f64>,
        mu: &DVector<f64>,
        sigma: &DMatrix<f64>,
        n: usize,
        z: &DVector<f64>,
    ) -> f64 {
        let nf = n as f64;
        let m1 = (z + mu * (nf - 1.0)) / nf;
        let c1 = sigma * ((nf - 1.0) / (nf * nf));
        let c0 = sigma / nf;
        log_normal_pdf(xbar, &m1, &c1) - log_normal_pdf(xbar, mu, &c0)
    }

    fn v(xs: &[f64]) -> DVector<f64> {
        DVector::from_column_slice(xs)
    }

    #[test]
    fn uni_trivial_case() {
        let l = semi_star_uni(0.0, 0.0, 1.0, 2, 0.0).unwrap();
        assert!((l - 0.5 * 2f64.ln()).abs() < 1e-15);
        assert!((l - 0.346_573_590_279_972_6).abs() < 1e-12);
    }

    #[test]
    fn uni_matches_density_ratio() {
        let got = semi_star_uni(0.3, 0.0, 1.0, 10, 3.0).unwrap();
        let want = density_ratio_oracle(
            &v(&[0.3]),
            &v(&[0.0]),
            &DMatrix::identity(1, 1),
            10,
            &v(&[3.0]),
        );
        assert!((got - want).abs() < 1e-12, "{got} vs {want}");
        let got = semi_star_uni(-1.7, 0.4, 2.5, 3, 5.0).unwrap();
        let want = density_ratio_oracle(
            &v(&[-1.7]),
            &v(&[0.4]),
            &DMatrix::from_element(1, 1, 2.5),
            3,
            &v(&[5.0]),
        );
        assert!((got - want).abs() < 1e-12);
    }

    #[test]
    fn uni_errors() {
        assert_eq!(
            semi_star_uni(0.0, 0.0, 1.0, 1, 0.0),
            Err(Error::BatchTooSmall(1))
        );
        assert!(semi_star_uni(0.0, 0.0, 0.0, 5, 0.0).is_err());
    }

    #[test]
    fn mv_trivial_and_oracle() {
        let mu = v(&[1.0, -2.0]);
        let sigma = DMatrix::from_row_slice(2, 2, &[2.0, 0.0, 0.0, 1.0]);
        let spd = SpdMatrix::new(sigma.clone()).unwrap();
        let l = semi_star_mv(&mu, &mu, &spd, 5, &mu).unwrap();
        assert!((l + (0.8f64).ln()).abs() < 1e-14);

        let xbar = v(&[1.37, -2.61]);
        let z = v(&[3.2, 0.9]);
        let got = semi_star_mv(&xbar, &mu, &spd, 5, &z).unwrap();
        let want = density_ratio_oracle(&xbar, &mu, &sigma, 5, &z);
        assert!((got - want).abs() < 1e-11, "{got} vs {want}");

        let corr = DMatrix::from_row_slice(3, 3, &[2.0, 0.4, -0.3, 0.4, 1.0, 0.2, -0.3, 0.2, 1.5]);
        let mu3 = v(&[0.1, 0.2, 0.3]);
        let x3 = v(&[0.5, -0.1, 0.9]);
        let z3 = v(&[2.0, 1.0, -1.0]);
        let got = semi_star_mv(&x3, &mu3, &SpdMatrix::new(corr.clone()).unwrap(), 7, &z3).unwrap();
        assert!((got - density_ratio_oracle(&x3, &mu3, &corr, 7, &z3)).abs() < 1e-11);
    }

    proptest! {
        #[test]
        fn mv_reduces_to_uni(
            x in -5.0f64..5.0, mu in -2.0f64..2.0, s2 in 0.1f64..4.0,
            n in 2usize..200, z in -6.0f64..6.0,
        ) {
            let a = semi_star_uni(x, mu, s2, n, z).unwrap();
            let b = semi_star_mv(&v(&[x]), &v(&[mu]), &SpdMatrix::scalar(s2).unwrap(), n, &v(&[z])).unwrap();
            prop_assert!((a - b).abs() <= 1e-12 * a.abs().max(1.0));
        }

        #[test]
        fn sandwich(vals in prop::collection::vec(-50.0f64..50.0, 1..30)) {
            let u = semi_unif(&vals).unwrap();
            let m = semi_max(&vals).unwrap();
            prop_assert!(m - (vals.len() as f64).ln() <= u + 1e-12);
            prop_assert!(u <= m + 1e-12);
        }
    }

    #[test]
    fn unif_and_max_examples() {
        assert_eq!(semi_unif(&[1.25]).unwrap(), 1.25);
        assert!((semi_unif(&[0.7; 6]).unwrap() - 0.7).abs() < 1e-15);
        assert!((semi_unif(&[0.0, 3f64.ln()]).unwrap() - 2f64.ln()).abs() < 1e-15);
        assert_eq!(semi_max(&[-1.0, 4.0, 2.0]).unwrap(), 4.0);
        assert_eq!(semi_max(&[]), Err(Error::EmptyStatistics));
        assert_eq!(semi_unif(&[]), Err(Error::EmptyStatistics));
        let s = TestStatistics::unif(vec![0.0, 3f64.ln()]).unwrap();
        assert!((s.aggregate - log_sum_exp(&s.per_time).unwrap() + 2f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn final_observation_uses_pooled_size() {
        let spd = SpdMatrix::scalar(1.0).unwrap();
        let (mu, z) = (v(&[0.0]), v(&[3.0]));
        for t in [1, 2, 5, 10] {
            let x = v(&[0.04]);
            let got = final_observation(&x, &mu, &spd, 10, t, &z).unwrap();
            let want = density_ratio_oracle(&x, &mu, &DMatrix::identity(1, 1), 10 * t, &z);
            assert!((got - want).abs() < 1e-12);
        }
        let x = v(&[0.2]);
        assert_eq!(
            final_observation(&x, &mu, &spd, 10, 1, &z).unwrap(),
            semi_star_mv(&x, &mu, &spd, 10, &z).unwrap()
        );
    }

    #[test]
    fn baseline_examples() {
        let b = baseline_statistics(&[2.0; 5]).unwrap();
        assert_eq!(
            b,
            BaselineScores {
                delta_diff: 0.0,
                delta_ratio: 1.0,
                back_front_diff: 0.0,
                back_front_ratio: 1.0
            }
        );
        let b = baseline_statistics(&[8.0, 4.0, 2.0, 1.0]).unwrap();
        assert_eq!(b.delta_ratio, 2.0);
        assert_eq!(b.back_front_ratio, 8.0);
        assert_eq!(b.delta_diff, 4.0);
        assert_eq!(b.back_front_diff, 7.0);
        assert_eq!(
            baseline_statistics(&[1.0, 0.0]),
            Err(Error::RatioUndefined(0.0))
        );
        assert!(baseline_statistics(&[1.0]).is_err());
    }

    proptest! {
        #[test]
        fn baseline_matches_scan(l in prop::collection::vec(0.01f64..10.0, 2..20)) {
            let b = baseline_statistics(&l).unwrap();
            let mut dd = f64::MIN;
            let mut dr = f64::MIN;
            for t in 1..l.len() {
                if l[t - 1] - l[t] > dd { dd = l[t - 1] - l[t]; }
                if l[t - 1] / l[t] > dr { dr = l[t - 1] / l[t]; }
            }
            prop_assert_eq!(b.delta_diff, dd);
            prop_assert_eq!(b.delta_ratio, dr);
            prop_assert_eq!(b.back_front_diff, l[0] - l[l.len() - 1]);
        }
    }

    #[test]
    fn sgd_trivial_case() {
        let stats = GradientStats::exact(v(&[0.5, -1.0]), SpdMatrix::identity(2)).unwrap();
        let prev = v(&[1.0, 1.0]);
        let next = &prev - stats.mean() * 0.1;
        let l = semi_sgd(&prev, &next, 0.1, 4, &stats, stats.mean()).unwrap();
        assert!((l + (0.75f64).ln()).abs() < 1e-14);
        assert!(semi_sgd(&prev, &next, 0.0, 4, &stats, stats.mean()).is_err());
    }

    #[test]
    fn sgd_matches_density_ratio() {
        let sigma = DMatrix::from_row_slice(3, 3, &[1.5, 0.2, 0.1, 0.2, 0.8, -0.1, 0.1, -0.1, 1.1]);
        let stats =
            GradientStats::exact(v(&[0.3, -0.2, 0.4]), SpdMatrix::new(sigma.clone()).unwrap())
                .unwrap();
        let (eta, n) = (0.05, 5);
        let prev = v(&[0.2, 0.1, -0.3]);
        let next = v(&[0.17, 0.12, -0.35]);
        let target = v(&[2.0, -1.0, 0.7]);
        let got = semi_sgd(&prev, &next, eta, n, &stats, &target).unwrap();
        // batch gradient recovered from the step
        let g = (&prev - &next) / eta;
        let want = density_ratio_oracle(&g, stats.mean(), &sigma, n, &target);
        assert!((got - want).abs() < 1e-10, "{got} vs {want}");
    }

    #[test]
    fn sgd_equals_mean_test_for_quadratic_loss() {
        use crate::mean_mechanism::{Insertion, MeanTrace};
        use crate::sgd::{run_sgd, LossModel, MeanEstimationProblem, Sample, SgdConfig};
        use crate::stats::{GaussianParams, RngStream};

        let (mu, s2, n, horizon) = (0.4, 1.7, 7, 6);
        let p = MeanEstimationProblem::new(GaussianParams::univariate(mu, s2).unwrap()).unwrap();
        let mut cfg = SgdConfig::constant(horizon, 1.0, n, v(&[0.0]));
        cfg.learning_rates = (1..=horizon).map(|t| 1.0 / t as f64).collect();
        let z = 2.5;
        for r in 0..50 {
            let ins = Insertion::at(1 + r % horizon, 1, Sample::point(v(&[z])));
            let tr = run_sgd(&p, &cfg, &ins, &RngStream::new(3, r as u64)).unwrap();
            let mt = MeanTrace::from_values(tr.thetas[1..].to_vec(), vec![n; horizon]).unwrap();
            for tau in 1..=horizon {
                let prev = tr.theta(tau - 1);
                let stats = p.exact_grad_stats(prev).unwrap().unwrap();
                let tg = p.gradient(prev, &ins.target);
                let a = semi_sgd(prev, tr.theta(tau), 1.0 / tau as f64, n, &stats, &tg).unwrap();
                let xbar = recover_batch_mean(&mt, tau).unwrap()[0];
                let b = semi_star_uni(xbar, mu, s2, n, z).unwrap();
                assert!((a - b).abs() < 1e-10 * b.abs().max(1.0), "{a} vs {b}");
            }
        }
    }

    #[test]
    fn adversary_names_round_trip() {
        for a in Adversary::ALL {
            assert_eq!(a.name().parse::<Adversary>().unwrap(), a);
        }
        assert_eq!(
            "semi-star".parse::<Adversary>().unwrap(),
            Adversary::SemiStar
        );
        assert!("bogus".parse::<Adversary>().is_err());
    }
}
