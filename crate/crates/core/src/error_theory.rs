//! Closed-form Type I / Type II errors of the Gaussian membership tests.
//!
//! For the known-τ test on a batch of size n with target distance m*, write
//! a = √(m*·n) and b(γ) = √((n−1)(m* − log(1−1/n) − 2γ)). Then
//! α(γ) = Φ(a + b) − Φ(a − b) and
//! β(γ) = Φ(a·√((n−1)/n) − b·√(n/(n−1))) + Φ(−a·√((n−1)/n) − b·√(n/(n−1))),
//! for γ up to γ_max = ½[m* − log((n−1)/n)], beyond which the test never
//! rejects. The last-release test is the same with n replaced by n·T, and
//! the max-over-time test composes T independent per-step tests.

use std::io::Write;

use crate::error::{check_range, Error, Result};
use crate::io::fmt_f64;
use crate::stats::{noncentral_chi2_cdf, std_normal_cdf, std_normal_interval};

/// Lower end of every threshold search; α is 1 to double precision there.
pub const GAMMA_FLOOR: f64 = -50.0;

const BISECTION_TOL: f64 = 1e-10;

fn check_batch(n: usize) -> Result<()> {
    if n < 2 {
        Err(Error::BatchTooSmall(n))
    } else {
        Ok(())
    }
}

fn check_m_star(m_star: f64) -> Result<()> {
    check_range(
        "m_star",
        m_star,
        m_star >= 0.0 && m_star.is_finite(),
        "[0, inf)",
    )
}

/// log((n−1)/n).
fn log_shrink(n: usize) -> f64 {
    (-1.0 / n as f64).ln_1p()
}

/// ½[m* − log((n−1)/n)]: the largest value the known-τ log-LR can take.
pub fn gamma_max(n: usize, m_star: f64) -> f64 {
    0.5 * (m_star - log_shrink(n))
}

fn a_b(gamma: f64, n: usize, m_star: f64) -> (f64, f64) {
    let nf = n as f64;
    let a = (m_star * nf).sqrt();
    let b = ((nf - 1.0) * (m_star - log_shrink(n) - 2.0 * gamma))
        .max(0.0)
        .sqrt();
    (a, b)
}

/// Type I error of the known-τ test at threshold γ.
pub fn alpha_semi_star(gamma: f64, n: usize, m_star: f64) -> Result<f64> {
    check_batch(n)?;
    check_m_star(m_star)?;
    if gamma > gamma_max(n, m_star) {
        return Ok(0.0);
    }
    let (a, b) = a_b(gamma, n, m_star);
    Ok(std_normal_interval(a - b, a + b))
}

/// Type II error of the known-τ test; 1 above γ_max.
pub fn beta_semi_star(gamma: f64, n: usize, m_star: f64) -> Result<f64> {
    check_batch(n)?;
    check_m_star(m_star)?;
    if gamma > gamma_max(n, m_star) {
        return Ok(1.0);
    }
    let (a, b) = a_b(gamma, n, m_star);
    let nf = n as f64;
    let shrink = ((nf - 1.0) / nf).sqrt();
    let p = a * shrink;
    let q = b / shrink;
    Ok((std_normal_cdf(p - q) + std_normal_cdf(-p - q)).min(1.0))
}

fn pooled(n: usize, horizon: usize) -> Result<usize> {
    let nt = n.checked_mul(horizon).ok_or(Error::OutOfRange {
        name: "n*T",
        value: f64::INFINITY,
        range: "[2, usize::MAX]",
    })?;
    check_batch(nt)?;
    Ok(nt)
}

/// Type I error of the last-release test (batch size n·T).
pub fn alpha_fo(gamma: f64, n: usize, horizon: usize, m_star: f64) -> Result<f64> {
    alpha_semi_star(gamma, pooled(n, horizon)?, m_star)
}

/// Type II error of the last-release test (batch size n·T).
pub fn beta_fo(gamma: f64, n: usize, horizon: usize, m_star: f64) -> Result<f64> {
    beta_semi_star(gamma, pooled(n, horizon)?, m_star)
}

fn check_horizon(horizon: usize) -> Result<()> {
    check_range("T", horizon as f64, horizon >= 1, "[1, inf)")
}

/// Type I error of the max-over-time test: 1 − (1 − α₀)^T.
pub fn alpha_glr(gamma: f64, n: usize, m_star: f64, horizon: usize) -> Result<f64> {
    check_horizon(horizon)?;
    let a0 = alpha_semi_star(gamma, n, m_star)?;
    Ok(-(horizon as f64 * (-a0).ln_1p()).exp_m1())
}

/// Type II error of the max-over-time test: β₀·(1 − α₀)^{T−1}, whatever the
/// true insertion time.
pub fn beta_glr(gamma: f64, n: usize, m_star: f64, horizon: usize) -> Result<f64> {
    check_horizon(horizon)?;
    let a0 = alpha_semi_star(gamma, n, m_star)?;
    let b0 = beta_semi_star(gamma, n, m_star)?;
    if horizon == 1 {
        return Ok(b0);
    }
    if a0 >= 1.0 {
        return Ok(0.0);
    }
    Ok(b0 * ((horizon - 1) as f64 * (-a0).ln_1p()).exp())
}

/// Per-step level α₀ = 1 − (1 − α)^{1/T} that gives the max-over-time test
/// overall level α.
pub fn glr_per_step_level(alpha: f64, horizon: usize) -> f64 {
    -((-alpha).ln_1p() / horizon as f64).exp_m1()
}

/// Solves α(γ) = target for a nonincreasing α on [lo, hi] by bisection.
pub fn threshold_for_alpha<F>(alpha: F, target: f64, lo: f64, hi: f64) -> Result<f64>
where
    F: Fn(f64) -> Result<f64>,
{
    check_range("alpha", target, target > 0.0 && target < 1.0, "(0, 1)")?;
    let (mut lo, mut hi) = (lo, hi);
    let at_lo = alpha(lo)?;
    if at_lo < target {
        return Err(Error::Unattainable(target));
    }
    if alpha(hi)? > target {
        return Err(Error::Unattainable(target));
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        let v = alpha(mid)?;
        if (v - target).abs() <= BISECTION_TOL {
            return Ok(mid);
        }
        if v > target {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= f64::EPSILON * mid.abs().max(1.0) {
            return Ok(mid);
        }
    }
    Ok(0.5 * (lo + hi))
}

/// γ* with α₀(γ*) = 1 − (1 − α)^{1/T}.
pub fn glr_threshold_for_alpha(alpha: f64, n: usize, m_star: f64, horizon: usize) -> Result<f64> {
    check_horizon(horizon)?;
    check_range("alpha", alpha, alpha > 0.0 && alpha < 1.0, "(0, 1)")?;
    let per_step = glr_per_step_level(alpha, horizon);
    threshold_for_alpha(
        |g| alpha_semi_star(g, n, m_star),
        per_step,
        GAMMA_FLOOR,
        gamma_max(n, m_star),
    )
}

/// Largest value of the d-dimensional known-τ log-LR.
pub fn gamma_max_mv(n: usize, d: usize, m_star: f64) -> f64 {
    0.5 * (m_star - d as f64 * log_shrink(n))
}

/// Type I error of the d-dimensional known-τ test, with m* the squared
/// Mahalanobis distance of the target.
///
/// The test rejects when the whitened, scaled batch mean falls inside a ball
/// of squared radius n·R²(γ), R²(γ) = (2(n−1)/n)[m*/2 − γ − (d/2)log((n−1)/n)],
/// so α(γ) = F_{χ²_d(n·m*)}(n·R²(γ)). At d = 1 this equals
/// [`alpha_semi_star`].
pub fn alpha_semi_star_mv(gamma: f64, n: usize, d: usize, m_star: f64) -> Result<f64> {
    check_batch(n)?;
    check_m_star(m_star)?;
    check_range("d", d as f64, d >= 1, "[1, inf)")?;
    if gamma > gamma_max_mv(n, d, m_star) {
        return Ok(0.0);
    }
    let nf = n as f64;
    let r2 = 2.0 * (nf - 1.0) / nf * (0.5 * m_star - gamma - 0.5 * d as f64 * log_shrink(n));
    noncentral_chi2_cdf(nf * r2.max(0.0), d as u32, nf * m_star)
}

/// Which closed-form test a curve describes.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TestKind {
    SemiStar,
    FinalObservation,
    MaxOverTime,
}

impl TestKind {
    pub fn name(self) -> &'static str {
        match self {
            TestKind::SemiStar => "semi_star",
            TestKind::FinalObservation => "final_observation",
            TestKind::MaxOverTime => "semi_max",
        }
    }
}

/// A closed-form test with fixed (n, T, m*).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ErrorModel {
    pub kind: TestKind,
    pub n: usize,
    pub horizon: usize,
    pub m_star: f64,
}

impl ErrorModel {
    pub fn new(kind: TestKind, n: usize, horizon: usize, m_star: f64) -> Result<Self> {
        check_batch(n)?;
        check_horizon(horizon)?;
        check_m_star(m_star)?;
        Ok(Self {
            kind,
            n,
            horizon,
            m_star,
        })
    }

    pub fn gamma_max(&self) -> f64 {
        match self.kind {
            TestKind::FinalObservation => gamma_max(self.n * self.horizon, self.m_star),
            _ => gamma_max(self.n, self.m_star),
        }
    }

    /// A threshold below which α is 1 to double precision, where b − a ≥ 8.
    pub fn saturation_gamma(&self) -> f64 {
        let big_n = match self.kind {
            TestKind::FinalObservation => self.n * self.horizon,
            _ => self.n,
        } as f64;
        let a = (self.m_star * big_n).sqrt();
        0.5 * (self.m_star - (a + 8.0).powi(2) / (big_n - 1.0))
    }

    pub fn alpha(&self, gamma: f64) -> Result<f64> {
        match self.kind {
            TestKind::SemiStar => alpha_semi_star(gamma, self.n, self.m_star),
            TestKind::FinalObservation => alpha_fo(gamma, self.n, self.horizon, self.m_star),
            TestKind::MaxOverTime => alpha_glr(gamma, self.n, self.m_star, self.horizon),
        }
    }

    pub fn beta(&self, gamma: f64) -> Result<f64> {
        match self.kind {
            TestKind::SemiStar => beta_semi_star(gamma, self.n, self.m_star),
            TestKind::FinalObservation => beta_fo(gamma, self.n, self.horizon, self.m_star),
            TestKind::MaxOverTime => beta_glr(gamma, self.n, self.m_star, self.horizon),
        }
    }

    /// Threshold whose Type I error is `alpha`.
    pub fn threshold_for_alpha(&self, alpha: f64) -> Result<f64> {
        match self.kind {
            TestKind::MaxOverTime => {
                glr_threshold_for_alpha(alpha, self.n, self.m_star, self.horizon)
            }
            _ => threshold_for_alpha(|g| self.alpha(g), alpha, GAMMA_FLOOR, self.gamma_max()),
        }
    }

    /// 1 − β at the threshold with Type I error `alpha`.
    pub fn power_at_alpha(&self, alpha: f64) -> Result<f64> {
        Ok(1.0 - self.beta(self.threshold_for_alpha(alpha)?)?)
    }

    pub fn curve(&self, gammas: &[f64]) -> Result<ErrorCurve> {
        let mut sorted = gammas.to_vec();
        sorted.sort_by(f64::total_cmp);
        let alpha = sorted
            .iter()
            .map(|&g| self.alpha(g))
            .collect::<Result<Vec<_>>>()?;
        let beta = sorted
            .iter()
            .map(|&g| self.beta(g))
            .collect::<Result<Vec<_>>>()?;
        Ok(ErrorCurve {
            model: *self,
            gammas: sorted,
            alpha,
            beta,
        })
    }
}

/// α and β over a sorted threshold grid.
#[derive(Clone, Debug, PartialEq)]
pub struct ErrorCurve {
    pub model: ErrorModel,
    pub gammas: Vec<f64>,
    pub alpha: Vec<f64>,
    pub beta: Vec<f64>,
}

impl ErrorCurve {
    pub fn write_csv<W: Write>(&self, out: W) -> csv::Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["gamma", "alpha", "beta", "power"])?;
        for ((g, a), b) in self.gammas.iter().zip(&self.alpha).zip(&self.beta) {
            w.write_record([fmt_f64(*g), fmt_f64(*a), fmt_f64(*b), fmt_f64(1.0 - b)])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// `count` evenly spaced points on [lo, hi].
pub fn linspace(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    match count {
        0 => vec![],
        1 => vec![lo],
        _ => (0..count)
            .map(|i| lo + (hi - lo) * i as f64 / (count - 1) as f64)
            .collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::attacks::semi_star_uni;
    use crate::stats::RngStream;
    use rand_distr::{Distribution, StandardNormal};

    #[test]
    fn gamma_max_examples() {
        assert!((gamma_max(2, 0.0) - 0.5 * 2f64.ln()).abs() < 1e-15);
        assert!((gamma_max(10, 9.0) - 4.552_680_257_828_557).abs() < 1e-6);
        assert!(gamma_max(10, 9.1) > gamma_max(10, 9.0));
    }

    #[test]
    fn saturation_gamma_is_certain_rejection() {
        for kind in [
            TestKind::SemiStar,
            TestKind::FinalObservation,
            TestKind::MaxOverTime,
        ] {
            for (n, t, m) in [(10, 10, 9.0), (2, 1, 0.5), (50, 3, 36.0)] {
                let model = ErrorModel::new(kind, n, t, m).unwrap();
                let g = model.saturation_gamma();
                assert!(g < model.gamma_max());
                assert!(
                    1.0 - model.alpha(g).unwrap() < 1e-14,
                    "{kind:?} {n} {t} {m}"
                );
            }
        }
    }

    #[test]
    fn boundary_values() {
        let gm = gamma_max(10, 9.0);
        assert!(alpha_semi_star(gm, 10, 9.0).unwrap() < 1e-15);
        assert_eq!(alpha_semi_star(gm + 1e-9, 10, 9.0).unwrap(), 0.0);
        assert_eq!(beta_semi_star(gm + 1e-9, 10, 9.0).unwrap(), 1.0);
        assert!((alpha_semi_star(-1e4, 10, 9.0).unwrap() - 1.0).abs() < 1e-15);
        assert!(beta_semi_star(-1e4, 10, 9.0).unwrap() < 1e-15);
        assert!(alpha_semi_star(0.0, 1, 9.0).is_err());
    }

    #[test]
    fn final_observation_reduces_at_one_step() {
        for g in [-3.0, 0.0, 2.0] {
            assert_eq!(
                alpha_fo(g, 10, 1, 9.0).unwrap(),
                alpha_semi_star(g, 10, 9.0).unwrap()
            );
            assert_eq!(
                beta_fo(g, 10, 1, 9.0).unwrap(),
                beta_semi_star(g, 10, 9.0).unwrap()
            );
        }
        assert!(alpha_fo(0.0, 1, 1, 9.0).is_err());
    }

    #[test]
    fn final_observation_power_falls_with_t() {
        let mut prev = f64::INFINITY;
        for t in [1, 2, 5, 10, 50] {
            let p = ErrorModel::new(TestKind::FinalObservation, 10, t, 9.0)
                .unwrap()
                .power_at_alpha(0.01)
                .unwrap();
            assert!(p < prev, "T={t}: {p}");
            prev = p;
        }
    }

    #[test]
    fn glr_reductions() {
        for g in [-2.0, 0.5, 3.0] {
            assert_eq!(
                alpha_glr(g, 10, 9.0, 1).unwrap(),
                alpha_semi_star(g, 10, 9.0).unwrap()
            );
            assert_eq!(
                beta_glr(g, 10, 9.0, 1).unwrap(),
                beta_semi_star(g, 10, 9.0).unwrap()
            );
        }
        let g = gamma_max(10, 9.0) + 0.1;
        assert_eq!(alpha_glr(g, 10, 9.0, 5).unwrap(), 0.0);
        assert_eq!(
            beta_glr(g, 10, 9.0, 5).unwrap(),
            beta_semi_star(g, 10, 9.0).unwrap()
        );
    }

    #[test]
    fn glr_threshold_round_trip() {
        let g = glr_threshold_for_alpha(0.05, 10, 9.0, 1).unwrap();
        assert!((alpha_semi_star(g, 10, 9.0).unwrap() - 0.05).abs() <= 1e-10);
        for t in [2, 5, 10, 50] {
            for a in [0.001, 0.01, 0.2] {
                let g = glr_threshold_for_alpha(a, 10, 9.0, t).unwrap();
                assert!((alpha_glr(g, 10, 9.0, t).unwrap() - a).abs() < 1e-8);
            }
        }
        let per = glr_per_step_level(0.01, 10);
        assert!((per / 0.001 - 1.0).abs() < 0.05);
        assert!(glr_threshold_for_alpha(0.0, 10, 9.0, 3).is_err());
        assert!(glr_threshold_for_alpha(1.0, 10, 9.0, 3).is_err());
    }

    #[test]
    fn multivariate_matches_univariate_at_d1() {
        for n in [2, 10, 100] {
            for m in [0.0, 1.0, 9.0, 25.0] {
                for g in linspace(-6.0, gamma_max(n, m) + 0.5, 40) {
                    let a = alpha_semi_star(g, n, m).unwrap();
                    let b = alpha_semi_star_mv(g, n, 1, m).unwrap();
                    assert!((a - b).abs() < 1e-9, "n={n} m={m} g={g}: {a} vs {b}");
                }
            }
        }
        assert_eq!(
            alpha_semi_star_mv(gamma_max_mv(10, 3, 9.0) + 1e-9, 10, 3, 9.0).unwrap(),
            0.0
        );
    }

    #[test]
    fn monotone_on_grid() {
        for kind in [
            TestKind::SemiStar,
            TestKind::FinalObservation,
            TestKind::MaxOverTime,
        ] {
            for (n, m, t) in [(10, 9.0, 10), (2, 0.5, 3), (50, 1.0, 1)] {
                let model = ErrorModel::new(kind, n, t, m).unwrap();
                let c = model
                    .curve(&linspace(-20.0, model.gamma_max() + 1.0, 200))
                    .unwrap();
                for i in 1..200 {
                    assert!(c.alpha[i] <= c.alpha[i - 1]);
                    assert!(
                        c.beta[i] >= c.beta[i - 1],
                        "{kind:?} n={n} m={m} t={t} g={} {} < {}",
                        c.gammas[i],
                        c.beta[i],
                        c.beta[i - 1]
                    );
                }
                assert!(c
                    .alpha
                    .iter()
                    .chain(&c.beta)
                    .all(|v| (0.0..=1.0).contains(v)));
            }
        }
    }

    #[test]
    fn semi_star_power_constant_in_t() {
        let p1 = ErrorModel::new(TestKind::SemiStar, 10, 1, 9.0)
            .unwrap()
            .power_at_alpha(0.01)
            .unwrap();
        for t in 2..=50 {
            let p = ErrorModel::new(TestKind::SemiStar, 10, t, 9.0)
                .unwrap()
                .power_at_alpha(0.01)
                .unwrap();
            assert_eq!(p, p1);
        }
    }

    /// The batch mean is drawn directly from its two hypotheses and the
    /// log-LR thresholded; the rejection rates are compared with the formulas.
    #[test]
    fn monte_carlo_agreement() {
        let (n, m) = (10usize, 9.0f64);
        let z = m.sqrt();
        let nf = n as f64;
        let reps = 40_000;
        let mut rng = RngStream::new(31, 0);
        let mut h0 = Vec::with_capacity(reps);
        let mut h1 = Vec::with_capacity(reps);
        for _ in 0..reps {
            let e0: f64 = StandardNormal.sample(&mut rng);
            let e1: f64 = StandardNormal.sample(&mut rng);
            let x0 = e0 / nf.sqrt();
            let x1 = z / nf + e1 * (nf - 1.0).sqrt() / nf;
            h0.push(semi_star_uni(x0, 0.0, 1.0, n, z).unwrap());
            h1.push(semi_star_uni(x1, 0.0, 1.0, n, z).unwrap());
        }
        for g in [-3.0, 0.0, 1.5, 3.0] {
            let a = alpha_semi_star(g, n, m).unwrap();
            let b = beta_semi_star(g, n, m).unwrap();
            let ah = h0.iter().filter(|&&s| s > g).count() as f64 / reps as f64;
            let bh = h1.iter().filter(|&&s| s <= g).count() as f64 / reps as f64;
            let sa = (a * (1.0 - a) / reps as f64).sqrt().max(1e-4);
            let sb = (b * (1.0 - b) / reps as f64).sqrt().max(1e-4);
            assert!((ah - a).abs() < 4.0 * sa, "γ={g}: α̂ {ah} vs {a}");
            assert!((bh - b).abs() < 4.0 * sb, "γ={g}: β̂ {bh} vs {b}");
        }
    }

    #[test]
    fn curve_csv() {
        let model = ErrorModel::new(TestKind::SemiStar, 10, 1, 9.0).unwrap();
        let c = model.curve(&[100.0, -100.0]).unwrap();
        let mut buf = Vec::new();
        c.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<_> = text.lines().collect();
        assert_eq!(lines[0], "gamma,alpha,beta,power");
        assert!(lines[1].starts_with("-100.0,1.0,") && lines[1].ends_with(",1.0"));
        assert_eq!(lines[2], "100.0,0.0,1.0,0.0");
    }
}
