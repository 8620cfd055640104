//! The running empirical-mean mechanism.
//!
//! At step t a fresh batch of n points arrives and the mechanism releases the
//! cumulative mean μ̂_t of everything seen so far. Consecutive releases
//! determine each batch mean exactly: X̄_t = t·μ̂_t − (t−1)·μ̂_{t−1} (for a
//! constant batch size), which is what the sequential tests consume.

use std::io::Write;

use nalgebra::{DMatrix, DVector};
use rand::Rng;

use crate::error::{check_range, Error, Result};
use crate::io::fmt_f64;
use crate::stats::{GaussianParams, RngStream};

/// Per-step data distributions 𝒩(μ_t, Σ_t), t = 1..T.
#[derive(Clone, Debug)]
pub struct DistributionSchedule {
    steps: Vec<GaussianParams>,
    stationary: bool,
}

impl DistributionSchedule {
    pub fn stationary(params: GaussianParams, horizon: usize) -> Result<Self> {
        check_range("T", horizon as f64, horizon >= 1, "[1, inf)")?;
        Ok(Self {
            steps: vec![params; horizon],
            stationary: true,
        })
    }

    pub fn new(steps: Vec<GaussianParams>) -> Result<Self> {
        let first = steps.first().ok_or(Error::OutOfRange {
            name: "T",
            value: 0.0,
            range: "[1, inf)",
        })?;
        let d = first.dim();
        for p in &steps {
            if p.dim() != d {
                return Err(Error::DimensionMismatch {
                    expected: d,
                    got: p.dim(),
                });
            }
            p.cov()?;
        }
        Ok(Self {
            steps,
            stationary: false,
        })
    }

    pub fn horizon(&self) -> usize {
        self.steps.len()
    }

    pub fn dim(&self) -> usize {
        self.steps[0].dim()
    }

    /// Parameters of step `t` (1-based).
    pub fn step(&self, t: usize) -> &GaussianParams {
        &self.steps[t - 1]
    }

    /// True when built from a single (μ, Σ).
    pub fn is_stationary(&self) -> bool {
        self.stationary
    }
}

/// Membership bit, insertion time and target for one run of a mechanism.
///
/// `tau` and `replaced_index` are 1-based, as in the game description; both
/// are carried even when `member` is false so paired designs can reuse them.
#[derive(Clone, Debug, PartialEq)]
pub struct Insertion<Z> {
    pub member: bool,
    pub tau: usize,
    pub target: Z,
    pub replaced_index: usize,
}

pub type InsertionSpec = Insertion<DVector<f64>>;

impl<Z> Insertion<Z> {
    pub fn absent(target: Z) -> Self {
        Self {
            member: false,
            tau: 1,
            target,
            replaced_index: 1,
        }
    }

    pub fn at(tau: usize, replaced_index: usize, target: Z) -> Self {
        Self {
            member: true,
            tau,
            target,
            replaced_index,
        }
    }

    pub(crate) fn validate(&self, horizon: usize, batch: usize) -> Result<()> {
        check_range(
            "tau",
            self.tau as f64,
            (1..=horizon).contains(&self.tau),
            "[1, T]",
        )?;
        check_range(
            "J",
            self.replaced_index as f64,
            (1..=batch).contains(&self.replaced_index),
            "[1, n]",
        )
    }

    /// Whether batch `t` (1-based) carries the target.
    pub fn inserts_at(&self, t: usize) -> bool {
        self.member && t == self.tau
    }
}

/// The released sequence μ̂₁..μ̂_T.
#[derive(Clone, Debug, PartialEq)]
pub struct MeanTrace {
    values: Vec<DVector<f64>>,
    batch_sizes: Vec<usize>,
}

impl MeanTrace {
    /// Builds the cumulative-mean trace from per-batch means.
    pub fn from_batch_means(means: &[DVector<f64>], batch_sizes: &[usize]) -> Result<Self> {
        if means.is_empty() || means.len() != batch_sizes.len() {
            return Err(Error::DimensionMismatch {
                expected: means.len(),
                got: batch_sizes.len(),
            });
        }
        let d = means[0].len();
        let mut sum = DVector::zeros(d);
        let mut count = 0usize;
        let mut values = Vec::with_capacity(means.len());
        for (m, &n) in means.iter().zip(batch_sizes) {
            if m.len() != d {
                return Err(Error::DimensionMismatch {
                    expected: d,
                    got: m.len(),
                });
            }
            if n == 0 {
                return Err(Error::BatchTooSmall(0));
            }
            sum += m * n as f64;
            count += n;
            values.push(&sum / count as f64);
        }
        Ok(Self {
            values,
            batch_sizes: batch_sizes.to_vec(),
        })
    }

    /// Wraps already-released values (e.g. read back from disk).
    pub fn from_values(values: Vec<DVector<f64>>, batch_sizes: Vec<usize>) -> Result<Self> {
        if values.is_empty() || values.len() != batch_sizes.len() {
            return Err(Error::DimensionMismatch {
                expected: values.len(),
                got: batch_sizes.len(),
            });
        }
        Ok(Self {
            values,
            batch_sizes,
        })
    }

    pub fn horizon(&self) -> usize {
        self.values.len()
    }

    pub fn dim(&self) -> usize {
        self.values[0].len()
    }

    /// μ̂_t, 1-based.
    pub fn value(&self, t: usize) -> &DVector<f64> {
        &self.values[t - 1]
    }

    pub fn values(&self) -> &[DVector<f64>] {
        &self.values
    }

    pub fn batch_size(&self, t: usize) -> usize {
        self.batch_sizes[t - 1]
    }

    pub fn last(&self) -> &DVector<f64> {
        self.values.last().expect("trace is non-empty")
    }

    /// Total number of points behind μ̂_t.
    pub fn points_through(&self, t: usize) -> usize {
        self.batch_sizes[..t].iter().sum()
    }

    pub fn write_csv<W: Write>(&self, out: W) -> csv::Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["t".to_string()];
        header.extend((0..self.dim()).map(|i| format!("dim_{i}")));
        w.write_record(&header)?;
        for (t, v) in self.values.iter().enumerate() {
            let mut row = vec![(t + 1).to_string()];
            row.extend(v.iter().map(|&x| fmt_f64(x)));
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Recovers the batch mean X̄_t from (μ̂_{t−1}, μ̂_t), with μ̂₀ = 0.
pub fn recover_batch_mean(trace: &MeanTrace, t: usize) -> Result<DVector<f64>> {
    check_range("t", t as f64, (1..=trace.horizon()).contains(&t), "[1, T]")?;
    let n_t = trace.batch_size(t) as f64;
    let through = trace.points_through(t) as f64;
    let before = through - n_t;
    let current = trace.value(t) * (through / n_t);
    if t == 1 {
        return Ok(current);
    }
    Ok(current - trace.value(t - 1) * (before / n_t))
}

/// Draws the T batches (each n × d, one point per row), replacing row J of
/// batch τ by the target when the insertion is active.
///
/// All n points are drawn even for the replaced slot so both hypotheses
/// consume the stream identically.
pub fn simulate_batches(
    schedule: &DistributionSchedule,
    n: usize,
    insertion: &InsertionSpec,
    stream: &mut RngStream,
) -> Result<Vec<DMatrix<f64>>> {
    if n < 2 {
        return Err(Error::BatchTooSmall(n));
    }
    insertion.validate(schedule.horizon(), n)?;
    let d = schedule.dim();
    if insertion.target.len() != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            got: insertion.target.len(),
        });
    }
    let mut row = vec![0.0; d];
    let mut batches = Vec::with_capacity(schedule.horizon());
    for t in 1..=schedule.horizon() {
        let params = schedule.step(t);
        let mut batch = DMatrix::zeros(n, d);
        for r in 0..n {
            params.draw_into(stream, &mut row);
            for (c, v) in row.iter().enumerate() {
                batch[(r, c)] = *v;
            }
        }
        if insertion.inserts_at(t) {
            batch
                .row_mut(insertion.replaced_index - 1)
                .copy_from(&insertion.target.transpose());
        }
        batches.push(batch);
    }
    Ok(batches)
}

pub fn batch_mean(batch: &DMatrix<f64>) -> DVector<f64> {
    batch.row_mean().transpose()
}

/// Runs the mechanism and returns the released trace.
pub fn run_mean_mechanism(
    schedule: &DistributionSchedule,
    n: usize,
    insertion: &InsertionSpec,
    stream: &mut RngStream,
) -> Result<MeanTrace> {
    let batches = simulate_batches(schedule, n, insertion, stream)?;
    let means: Vec<DVector<f64>> = batches.iter().map(batch_mean).collect();
    MeanTrace::from_batch_means(&means, &vec![n; means.len()])
}

/// Uniform J in [1, n], as drawn by the crafter.
pub fn draw_replaced_index(rng: &mut RngStream, n: usize) -> usize {
    rng.random_range(1..=n)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar(x: f64) -> DVector<f64> {
        DVector::from_element(1, x)
    }

    #[test]
    fn single_step_two_points() {
        let means = [scalar((1.5 + -0.5) / 2.0)];
        let trace = MeanTrace::from_batch_means(&means, &[2]).unwrap();
        assert_eq!(trace.value(1)[0], 0.5);
        assert_eq!(recover_batch_mean(&trace, 1).unwrap()[0], 0.5);
    }

    #[test]
    fn inserted_target_sits_at_index() {
        let sched =
            DistributionSchedule::stationary(GaussianParams::univariate(0.0, 1.0).unwrap(), 3)
                .unwrap();
        let ins = Insertion::at(2, 4, scalar(7.0));
        let batches = simulate_batches(&sched, 5, &ins, &mut RngStream::new(1, 1)).unwrap();
        assert_eq!(batches[1][(3, 0)], 7.0);
        let absent = Insertion {
            member: false,
            ..ins.clone()
        };
        let other = simulate_batches(&sched, 5, &absent, &mut RngStream::new(1, 1)).unwrap();
        // identical apart from the replaced slot
        for t in 0..3 {
            for r in 0..5 {
                if t == 1 && r == 3 {
                    assert_ne!(batches[t][(r, 0)], other[t][(r, 0)]);
                } else {
                    assert_eq!(batches[t][(r, 0)], other[t][(r, 0)]);
                }
            }
        }
    }

    #[test]
    fn errors() {
        let sched =
            DistributionSchedule::stationary(GaussianParams::univariate(0.0, 1.0).unwrap(), 3)
                .unwrap();
        let mut rng = RngStream::new(0, 0);
        let ok = Insertion::absent(scalar(0.0));
        assert_eq!(
            run_mean_mechanism(&sched, 1, &ok, &mut rng),
            Err(Error::BatchTooSmall(1))
        );
        let bad_tau = Insertion::at(4, 1, scalar(0.0));
        assert!(matches!(
            run_mean_mechanism(&sched, 3, &bad_tau, &mut rng),
            Err(Error::OutOfRange { name: "tau", .. })
        ));
        let trace = run_mean_mechanism(&sched, 3, &ok, &mut rng).unwrap();
        assert!(recover_batch_mean(&trace, 0).is_err());
        assert!(recover_batch_mean(&trace, 4).is_err());
    }

    #[test]
    fn constant_trace_recovers_constant() {
        let c = scalar(2.25);
        let trace = MeanTrace::from_values(vec![c.clone(); 6], vec![4; 6]).unwrap();
        for t in 1..=6 {
            assert!((recover_batch_mean(&trace, t).unwrap()[0] - 2.25).abs() < 1e-15);
        }
    }

    #[test]
    fn round_trip_with_varying_batch_sizes() {
        let means: Vec<_> = [0.3, -1.2, 4.0, 0.01].iter().map(|&x| scalar(x)).collect();
        let sizes = [3, 10, 2, 7];
        let trace = MeanTrace::from_batch_means(&means, &sizes).unwrap();
        for (t, m) in means.iter().enumerate() {
            let r = recover_batch_mean(&trace, t + 1).unwrap();
            assert!((r[0] - m[0]).abs() < 1e-12);
        }
    }

    #[test]
    fn csv_layout() {
        let means = vec![
            DVector::from_vec(vec![1.0, 2.0]),
            DVector::from_vec(vec![3.0, 4.0]),
        ];
        let trace = MeanTrace::from_batch_means(&means, &[2, 2]).unwrap();
        let mut buf = Vec::new();
        trace.write_csv(&mut buf).unwrap();
        assert_eq!(
            String::from_utf8(buf).unwrap(),
            "t,dim_0,dim_1\n1,1.0,2.0\n2,2.0,3.0\n"
        );
    }
}
