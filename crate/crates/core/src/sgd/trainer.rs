//! Mini-batch SGD and DP-SGD with fixed-size batches.

use std::io::Write;

use nalgebra::DVector;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{check_range, Error, Result};
use crate::io::fmt_f64;
use crate::mean_mechanism::Insertion;
use crate::sgd::{LossModel, Sample};
use crate::stats::RngStream;

/// Child-stream tags; data and DP noise never share a sequence.
pub(crate) const DATA_STREAM: u64 = 1;
pub(crate) const NOISE_STREAM: u64 = 2;

#[derive(Clone, Debug, PartialEq)]
pub struct SgdConfig {
    pub learning_rates: Vec<f64>,
    pub batch_sizes: Vec<usize>,
    /// Per-sample clipping norm; `None` disables clipping.
    pub clip: Option<f64>,
    /// σ_DP; zero means no noise.
    pub noise_multiplier: f64,
    pub theta0: DVector<f64>,
}

impl SgdConfig {
    /// Constant learning rate and batch size over `horizon` steps.
    pub fn constant(horizon: usize, eta: f64, n: usize, theta0: DVector<f64>) -> Self {
        Self {
            learning_rates: vec![eta; horizon],
            batch_sizes: vec![n; horizon],
            clip: None,
            noise_multiplier: 0.0,
            theta0,
        }
    }

    pub fn with_privacy(mut self, clip: f64, noise_multiplier: f64) -> Self {
        self.clip = Some(clip);
        self.noise_multiplier = noise_multiplier;
        self
    }

    pub fn horizon(&self) -> usize {
        self.learning_rates.len()
    }

    pub fn validate(&self) -> Result<()> {
        let t = self.learning_rates.len();
        if t == 0 {
            return Err(Error::OutOfRange {
                name: "T",
                value: 0.0,
                range: "[1, inf)",
            });
        }
        if self.batch_sizes.len() != t {
            return Err(Error::DimensionMismatch {
                expected: t,
                got: self.batch_sizes.len(),
            });
        }
        for &eta in &self.learning_rates {
            check_range("eta", eta, eta > 0.0 && eta.is_finite(), "(0, inf)")?;
        }
        for &n in &self.batch_sizes {
            if n < 2 {
                return Err(Error::BatchTooSmall(n));
            }
        }
        if let Some(c) = self.clip {
            check_range("clip", c, c > 0.0, "(0, inf]")?;
        }
        let s = self.noise_multiplier;
        check_range("noise_multiplier", s, s >= 0.0 && s.is_finite(), "[0, inf)")?;
        if s > 0.0 && self.clip.is_none_or(f64::is_infinite) {
            return Err(Error::OutOfRange {
                name: "clip",
                value: self.clip.unwrap_or(f64::INFINITY),
                range: "(0, inf) when noise_multiplier > 0",
            });
        }
        Ok(())
    }
}

/// What happened at one update.
#[derive(Clone, Debug, PartialEq)]
pub struct StepMeta {
    pub eta: f64,
    pub batch_size: usize,
    /// Per-sample gradients whose norm exceeded the clip threshold.
    pub clipped: usize,
    /// Number of standard-normal draws taken from the noise stream.
    pub noise_draws: usize,
    /// Mean of the (clipped) per-sample gradients.
    pub batch_gradient: DVector<f64>,
    /// The noise ξ_t added to it (zero without DP).
    pub noise: DVector<f64>,
}

/// θ₀..θ_T and per-step metadata.
#[derive(Clone, Debug, PartialEq)]
pub struct ParamTrace {
    pub thetas: Vec<DVector<f64>>,
    pub steps: Vec<StepMeta>,
}

impl ParamTrace {
    pub fn horizon(&self) -> usize {
        self.steps.len()
    }

    /// θ_t for t in 0..=T.
    pub fn theta(&self, t: usize) -> &DVector<f64> {
        &self.thetas[t]
    }

    /// Metadata of update t (1-based).
    pub fn step(&self, t: usize) -> &StepMeta {
        &self.steps[t - 1]
    }

    pub fn write_csv<W: Write>(&self, out: W) -> csv::Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let d = self.thetas[0].len();
        let mut header = vec!["t".to_string()];
        header.extend((0..d).map(|i| format!("theta_{i}")));
        w.write_record(&header)?;
        for (t, th) in self.thetas.iter().enumerate() {
            let mut row = vec![t.to_string()];
            row.extend(th.iter().map(|&x| fmt_f64(x)));
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Rescales `g` to norm `c` if it is longer; returns whether it was.
pub fn clip_to_norm(g: &mut DVector<f64>, c: f64) -> bool {
    let norm = g.norm();
    if norm > c {
        *g *= c / norm;
        true
    } else {
        false
    }
}

/// Plain SGD: clipping and noise settings in `config` are ignored.
pub fn run_sgd<M: LossModel + ?Sized>(
    model: &M,
    config: &SgdConfig,
    insertion: &Insertion<Sample>,
    stream: &RngStream,
) -> Result<ParamTrace> {
    let plain = SgdConfig {
        clip: None,
        noise_multiplier: 0.0,
        ..config.clone()
    };
    train(model, &plain, insertion, stream)
}

/// DP-SGD: per-sample clipping to `config.clip`, then 𝒩(0, σ²C²I/n²) noise
/// on the averaged gradient.
pub fn run_dpsgd<M: LossModel + ?Sized>(
    model: &M,
    config: &SgdConfig,
    insertion: &Insertion<Sample>,
    stream: &RngStream,
) -> Result<ParamTrace> {
    if config.clip.is_none() {
        return Err(Error::OutOfRange {
            name: "clip",
            value: f64::NAN,
            range: "(0, inf]",
        });
    }
    train(model, config, insertion, stream)
}

/// Draws the batch for step t: n fresh samples, slot J overwritten by the
/// target when inserting at t.
pub(crate) fn draw_batch<M: LossModel + ?Sized>(
    model: &M,
    n: usize,
    t: usize,
    insertion: &Insertion<Sample>,
    data: &mut RngStream,
) -> Vec<Sample> {
    let mut batch: Vec<Sample> = (0..n).map(|_| model.sample(data)).collect();
    if insertion.inserts_at(t) {
        batch[insertion.replaced_index - 1] = insertion.target.clone();
    }
    batch
}

fn train<M: LossModel + ?Sized>(
    model: &M,
    config: &SgdConfig,
    insertion: &Insertion<Sample>,
    stream: &RngStream,
) -> Result<ParamTrace> {
    config.validate()?;
    let d = model.dim();
    if config.theta0.len() != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            got: config.theta0.len(),
        });
    }
    let horizon = config.horizon();
    let max_n = *config.batch_sizes.iter().max().expect("T >= 1");
    insertion.validate(horizon, max_n)?;
    if insertion.member && insertion.replaced_index > config.batch_sizes[insertion.tau - 1] {
        return Err(Error::OutOfRange {
            name: "J",
            value: insertion.replaced_index as f64,
            range: "[1, n_tau]",
        });
    }
    if insertion.target.x.len() != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            got: insertion.target.x.len(),
        });
    }

    let mut data = stream.child(DATA_STREAM);
    let mut noise_rng = stream.child(NOISE_STREAM);
    let mut theta = config.theta0.clone();
    let mut thetas = Vec::with_capacity(horizon + 1);
    let mut steps = Vec::with_capacity(horizon);
    thetas.push(theta.clone());

    for t in 1..=horizon {
        let n = config.batch_sizes[t - 1];
        let eta = config.learning_rates[t - 1];
        let batch = draw_batch(model, n, t, insertion, &mut data);
        let mut grad = DVector::zeros(d);
        let mut clipped = 0;
        for s in &batch {
            let mut g = model.gradient(&theta, s);
            if let Some(c) = config.clip {
                clipped += usize::from(clip_to_norm(&mut g, c));
            }
            grad += g;
        }
        grad /= n as f64;

        let mut noise = DVector::zeros(d);
        let mut noise_draws = 0;
        if config.noise_multiplier > 0.0 {
            let c = config.clip.expect("validated: noise requires clipping");
            let scale = config.noise_multiplier * c / n as f64;
            for v in noise.iter_mut() {
                let z: f64 = StandardNormal.sample(&mut noise_rng);
                *v = scale * z;
            }
            noise_draws = d;
        }
        theta -= (&grad + &noise) * eta;
        if theta.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numerical(format!(
                "non-finite parameters at step {t}"
            )));
        }
        thetas.push(theta.clone());
        steps.push(StepMeta {
            eta,
            batch_size: n,
            clipped,
            noise_draws,
            batch_gradient: grad,
            noise,
        });
    }
    Ok(ParamTrace { thetas, steps })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mean_mechanism::{
        recover_batch_mean, run_mean_mechanism, DistributionSchedule, InsertionSpec,
    };
    use crate::sgd::{LinRegProblem, LogRegProblem, MeanEstimationProblem};
    use crate::stats::{GaussianParams, SpdMatrix};

    fn lin() -> LinRegProblem {
        LinRegProblem::new(
            DVector::from_vec(vec![1.0, -2.0, 0.5]),
            SpdMatrix::identity(3),
            1.0,
        )
        .unwrap()
    }

    fn absent(d: usize) -> Insertion<Sample> {
        Insertion::absent(Sample::point(DVector::zeros(d)))
    }

    #[test]
    fn zero_gradient_keeps_trace_constant() {
        // σ_ε is tiny rather than zero; at θ* the gradient is -εx.
        let p = LinRegProblem::new(
            DVector::from_vec(vec![1.0, 2.0]),
            SpdMatrix::identity(2),
            1e-300,
        )
        .unwrap();
        let cfg = SgdConfig::constant(5, 0.1, 4, p.theta_star().clone());
        let tr = run_sgd(&p, &cfg, &absent(2), &RngStream::new(1, 0)).unwrap();
        for th in &tr.thetas {
            assert!((th - p.theta_star()).amax() < 1e-140);
        }
    }

    #[test]
    fn mean_estimation_is_running_mean() {
        let params = GaussianParams::univariate(0.5, 2.0).unwrap();
        let p = MeanEstimationProblem::new(params.clone()).unwrap();
        let horizon = 8;
        let n = 6;
        let mut cfg = SgdConfig::constant(horizon, 1.0, n, DVector::from_element(1, 17.0));
        cfg.learning_rates = (1..=horizon).map(|t| 1.0 / t as f64).collect();
        let target = DVector::from_element(1, 4.0);
        let ins = Insertion::at(3, 2, Sample::point(target.clone()));
        let stream = RngStream::new(77, 5);
        let tr = run_sgd(&p, &cfg, &ins, &stream).unwrap();

        // the mean mechanism consumes the same data stream in the same order
        let sched = DistributionSchedule::stationary(params, horizon).unwrap();
        let mins: InsertionSpec = Insertion::at(3, 2, target);
        let mt = run_mean_mechanism(&sched, n, &mins, &mut stream.child(DATA_STREAM)).unwrap();
        for t in 1..=horizon {
            assert!((tr.theta(t)[0] - mt.value(t)[0]).abs() < 1e-10);
            let rec = recover_batch_mean(&mt, t).unwrap()[0];
            assert!((tr.step(t).batch_gradient[0] - (tr.theta(t - 1)[0] - rec)).abs() < 1e-10);
        }
    }

    #[test]
    fn dpsgd_degenerate_equals_sgd() {
        let p = lin();
        let cfg = SgdConfig::constant(6, 0.05, 10, DVector::zeros(3));
        let stream = RngStream::new(4, 4);
        let a = run_sgd(&p, &cfg, &absent(3), &stream).unwrap();
        let b = run_dpsgd(
            &p,
            &cfg.clone().with_privacy(f64::INFINITY, 0.0),
            &absent(3),
            &stream,
        )
        .unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn clipping_to_small_norm() {
        let p = lin();
        let cfg =
            SgdConfig::constant(1, 0.1, 20, DVector::from_element(3, 50.0)).with_privacy(1e-3, 0.0);
        let tr = run_dpsgd(&p, &cfg, &absent(3), &RngStream::new(2, 0)).unwrap();
        assert_eq!(tr.step(1).clipped, 20);
        let mut g = DVector::from_vec(vec![3.0, 4.0]);
        assert!(clip_to_norm(&mut g, 1.0));
        assert!((g.norm() - 1.0).abs() < 1e-15);
        assert!(!clip_to_norm(&mut g, 2.0));
    }

    #[test]
    fn noise_residual_has_dp_variance() {
        let p =
            LogRegProblem::new(DVector::from_vec(vec![1.0, -1.0]), SpdMatrix::identity(2)).unwrap();
        let (sigma, c, n) = (1.3, 0.7, 16);
        let cfg = SgdConfig::constant(10_000, 0.01, n, DVector::zeros(2)).with_privacy(c, sigma);
        let tr = run_dpsgd(&p, &cfg, &absent(2), &RngStream::new(8, 0)).unwrap();
        let mut sum = 0.0;
        let mut count = 0.0;
        for t in 1..=tr.horizon() {
            let step = tr.step(t);
            let resid = -(tr.theta(t) - tr.theta(t - 1)) / step.eta - &step.batch_gradient;
            assert!((&resid - &step.noise).amax() < 1e-9);
            sum += resid.norm_squared();
            count += 2.0;
        }
        let want = sigma * sigma * c * c / (n * n) as f64;
        let got = sum / count;
        assert!((got / want - 1.0).abs() < 0.03, "{got} vs {want}");
    }

    #[test]
    fn noise_replay_recovers_plain_updates() {
        // Same stream: the data batches agree, so recomputing the clipped
        // gradients along the noisy path and removing ξ_t reproduces each step.
        let p = lin();
        let base = SgdConfig::constant(5, 0.05, 8, DVector::zeros(3)).with_privacy(2.0, 0.0);
        let noisy = base.clone().with_privacy(2.0, 1.5);
        let stream = RngStream::new(12, 3);
        let tr = run_dpsgd(&p, &noisy, &absent(3), &stream).unwrap();
        let mut data = stream.child(DATA_STREAM);
        for t in 1..=5 {
            let batch = draw_batch(&p, 8, t, &absent(3), &mut data);
            let mut g = DVector::zeros(3);
            for s in &batch {
                let mut gi = p.gradient(tr.theta(t - 1), s);
                clip_to_norm(&mut gi, 2.0);
                g += gi;
            }
            g /= 8.0;
            let step = tr.theta(t) - tr.theta(t - 1);
            let want = -(g + &tr.step(t).noise) * 0.05;
            assert!((step - want).amax() < 1e-12);
        }
        let clean = run_dpsgd(&p, &base, &absent(3), &stream).unwrap();
        assert_eq!(clean.step(1).batch_gradient, tr.step(1).batch_gradient);
        assert_eq!(clean.step(1).noise, DVector::zeros(3));
    }

    #[test]
    fn inserted_target_is_in_batch() {
        let p = lin();
        let target = Sample::new(DVector::from_vec(vec![9.0, 9.0, 9.0]), -40.0);
        let ins = Insertion::at(2, 3, target.clone());
        let mut data = RngStream::new(1, 1).child(DATA_STREAM);
        let _ = draw_batch(&p, 5, 1, &ins, &mut data);
        let b = draw_batch(&p, 5, 2, &ins, &mut data);
        assert_eq!(b[2], target);
    }

    #[test]
    fn config_validation() {
        let p = lin();
        let mut cfg = SgdConfig::constant(3, 0.1, 4, DVector::zeros(3));
        cfg.learning_rates[1] = 0.0;
        assert!(run_sgd(&p, &cfg, &absent(3), &RngStream::new(0, 0)).is_err());
        let cfg = SgdConfig::constant(3, 0.1, 1, DVector::zeros(3));
        assert_eq!(
            run_sgd(&p, &cfg, &absent(3), &RngStream::new(0, 0)).unwrap_err(),
            Error::BatchTooSmall(1)
        );
        let cfg =
            SgdConfig::constant(3, 0.1, 4, DVector::zeros(3)).with_privacy(f64::INFINITY, 1.0);
        assert!(run_dpsgd(&p, &cfg, &absent(3), &RngStream::new(0, 0)).is_err());
    }

    #[test]
    fn csv_layout() {
        let tr = ParamTrace {
            thetas: vec![
                DVector::from_vec(vec![0.0, 1.0]),
                DVector::from_vec(vec![0.5, 1.5]),
            ],
            steps: vec![],
        };
        let mut buf = Vec::new();
        tr.write_csv(&mut buf).unwrap();
        assert_eq!(
            String::from_utf8(buf).unwrap(),
            "t,theta_0,theta_1\n0,0.0,1.0\n1,0.5,1.5\n"
        );
    }
}
