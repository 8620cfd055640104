//! Empirical error rates and ROC curves from game records.
//!
//! A test rejects (declares "member") when its statistic is strictly above
//! the threshold γ: α̂(γ) counts non-members with T > γ, β̂(γ) counts members
//! with T ≤ γ.

use std::io::Write;

use crate::error::{check_range, Error, Result};
use crate::io::fmt_f64;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Observation {
    pub score: f64,
    pub member: bool,
}

fn split(obs: &[Observation]) -> Result<(Vec<f64>, Vec<f64>)> {
    let mut h0 = Vec::new();
    let mut h1 = Vec::new();
    for o in obs {
        if o.score.is_nan() {
            return Err(Error::Numerical("NaN statistic in records".into()));
        }
        if o.member {
            h1.push(o.score);
        } else {
            h0.push(o.score);
        }
    }
    if h0.is_empty() || h1.is_empty() {
        return Err(Error::SingleClass {
            n0: h0.len(),
            n1: h1.len(),
        });
    }
    h0.sort_by(f64::total_cmp);
    h1.sort_by(f64::total_cmp);
    Ok((h0, h1))
}

/// Number of sorted values strictly above `gamma`.
fn count_above(sorted: &[f64], gamma: f64) -> usize {
    sorted.len() - sorted.partition_point(|&v| v <= gamma)
}

#[derive(Clone, Debug, PartialEq)]
pub struct ErrorEstimates {
    pub gammas: Vec<f64>,
    pub alpha: Vec<f64>,
    pub beta: Vec<f64>,
    pub n0: usize,
    pub n1: usize,
}

/// α̂ and β̂ on the given thresholds.
pub fn estimate_errors(obs: &[Observation], gammas: &[f64]) -> Result<ErrorEstimates> {
    let (h0, h1) = split(obs)?;
    let (n0, n1) = (h0.len(), h1.len());
    let alpha = gammas
        .iter()
        .map(|&g| count_above(&h0, g) as f64 / n0 as f64)
        .collect();
    let beta = gammas
        .iter()
        .map(|&g| (n1 - count_above(&h1, g)) as f64 / n1 as f64)
        .collect();
    Ok(ErrorEstimates {
        gammas: gammas.to_vec(),
        alpha,
        beta,
        n0,
        n1,
    })
}

/// The thresholds at which the empirical errors can change: every distinct
/// observed value, plus −∞ and +∞.
pub(crate) fn threshold_grid(obs: &[Observation]) -> Vec<f64> {
    let mut g: Vec<f64> = obs.iter().map(|o| o.score).collect();
    g.push(f64::NEG_INFINITY);
    g.push(f64::INFINITY);
    g.sort_by(f64::total_cmp);
    g.dedup();
    g
}

/// (FPR, TPR) points from sweeping γ from +∞ down to −∞.
#[derive(Clone, Debug, PartialEq)]
pub struct RocCurve {
    pub fpr: Vec<f64>,
    pub tpr: Vec<f64>,
    pub auc: f64,
    pub n0: usize,
    pub n1: usize,
}

impl RocCurve {
    pub fn from_observations(obs: &[Observation]) -> Result<Self> {
        let (h0, h1) = split(obs)?;
        Ok(Self::from_sorted(&h0, &h1))
    }

    /// From non-member and member scores.
    pub fn from_scores(h0: &[f64], h1: &[f64]) -> Result<Self> {
        let obs: Vec<Observation> = h0
            .iter()
            .map(|&score| Observation {
                score,
                member: false,
            })
            .chain(h1.iter().map(|&score| Observation {
                score,
                member: true,
            }))
            .collect();
        Self::from_observations(&obs)
    }

    fn from_sorted(h0: &[f64], h1: &[f64]) -> Self {
        let (n0, n1) = (h0.len(), h1.len());
        let mut fpr = vec![0.0];
        let mut tpr = vec![0.0];
        // walk both sorted lists from the top, one distinct value at a time
        let (mut i0, mut i1) = (n0, n1);
        while i0 > 0 || i1 > 0 {
            let v = match (i0, i1) {
                (0, _) => h1[i1 - 1],
                (_, 0) => h0[i0 - 1],
                _ => h0[i0 - 1].max(h1[i1 - 1]),
            };
            while i0 > 0 && h0[i0 - 1] >= v {
                i0 -= 1;
            }
            while i1 > 0 && h1[i1 - 1] >= v {
                i1 -= 1;
            }
            fpr.push((n0 - i0) as f64 / n0 as f64);
            tpr.push((n1 - i1) as f64 / n1 as f64);
        }
        let auc = fpr
            .windows(2)
            .zip(tpr.windows(2))
            .map(|(f, t)| (f[1] - f[0]) * 0.5 * (t[1] + t[0]))
            .sum();
        Self {
            fpr,
            tpr,
            auc,
            n0,
            n1,
        }
    }

    /// Largest TPR among curve points with FPR ≤ `level` (no interpolation).
    pub fn tpr_at_fpr(&self, level: f64) -> Result<f64> {
        check_range("fpr", level, level > 0.0 && level < 1.0, "(0, 1)")?;
        Ok(self
            .fpr
            .iter()
            .zip(&self.tpr)
            .filter(|(f, _)| **f <= level)
            .map(|(_, t)| *t)
            .fold(0.0, f64::max))
    }

    pub fn auc_standard_error(&self) -> f64 {
        auc_standard_error(self.auc, self.n0, self.n1)
    }

    /// CSV with columns `fpr, tpr`.
    pub fn write_csv<W: Write>(&self, out: W) -> csv::Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["fpr", "tpr"])?;
        for (f, t) in self.fpr.iter().zip(&self.tpr) {
            w.write_record([fmt_f64(*f), fmt_f64(*t)])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// TPR at FPR ≤ `level` straight from the two score samples, using the
/// smallest observed threshold that keeps the FPR within the level.
pub fn tpr_at_fpr_scores(h0: &[f64], h1: &[f64], level: f64) -> Result<f64> {
    RocCurve::from_scores(h0, h1)?.tpr_at_fpr(level)
}

/// Hanley–McNeil standard error of an AUC estimate.
pub fn auc_standard_error(auc: f64, n0: usize, n1: usize) -> f64 {
    let a = auc;
    let q1 = a / (2.0 - a);
    let q2 = 2.0 * a * a / (1.0 + a);
    let (n0, n1) = (n0 as f64, n1 as f64);
    let var = (a * (1.0 - a) + (n1 - 1.0) * (q1 - a * a) + (n0 - 1.0) * (q2 - a * a)) / (n0 * n1);
    var.max(0.0).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stats::RngStream;
    use proptest::prelude::*;
    use rand::Rng;

    fn obs(h0: &[f64], h1: &[f64]) -> Vec<Observation> {
        h0.iter()
            .map(|&score| Observation {
                score,
                member: false,
            })
            .chain(h1.iter().map(|&score| Observation {
                score,
                member: true,
            }))
            .collect()
    }

    #[test]
    fn errors_at_extremes() {
        let o = obs(&[0.0, 1.0, 2.0], &[1.5, 3.0]);
        let e = estimate_errors(&o, &[-10.0, 10.0]).unwrap();
        assert_eq!(e.alpha, vec![1.0, 0.0]);
        assert_eq!(e.beta, vec![0.0, 1.0]);
        assert_eq!((e.n0, e.n1), (3, 2));
    }

    #[test]
    fn errors_match_direct_count() {
        let h0 = [0.3, -1.0, 2.0, 2.0, 0.7];
        let h1 = [2.0, 1.0, 4.0];
        let o = obs(&h0, &h1);
        for g in [-2.0, 0.3, 0.5, 2.0, 3.0] {
            let e = estimate_errors(&o, &[g]).unwrap();
            let a = h0.iter().filter(|&&v| v > g).count() as f64 / 5.0;
            let b = h1.iter().filter(|&&v| v <= g).count() as f64 / 3.0;
            assert_eq!(e.alpha[0], a);
            assert_eq!(e.beta[0], b);
        }
    }

    #[test]
    fn single_class_rejected() {
        assert_eq!(
            estimate_errors(&obs(&[1.0], &[]), &[0.0]).unwrap_err(),
            Error::SingleClass { n0: 1, n1: 0 }
        );
        assert!(RocCurve::from_observations(&obs(&[], &[1.0])).is_err());
    }

    #[test]
    fn perfect_separation() {
        let c = RocCurve::from_observations(&obs(&[0.0, 1.0, 2.0], &[5.0, 6.0])).unwrap();
        assert_eq!(c.auc, 1.0);
        assert_eq!(c.tpr_at_fpr(0.01).unwrap(), 1.0);
        assert_eq!(c.fpr.first(), Some(&0.0));
        assert_eq!((c.fpr.last(), c.tpr.last()), (Some(&1.0), Some(&1.0)));
        assert!(c.tpr_at_fpr(0.0).is_err());
        assert!(c.tpr_at_fpr(1.0).is_err());
    }

    #[test]
    fn ties_count_half() {
        let c = RocCurve::from_observations(&obs(&[1.0, 1.0], &[1.0, 1.0])).unwrap();
        assert_eq!(c.auc, 0.5);
    }

    proptest! {
        #[test]
        fn auc_is_mann_whitney(
            h0 in prop::collection::vec(-3i32..3, 1..30),
            h1 in prop::collection::vec(-3i32..3, 1..30),
        ) {
            let a: Vec<f64> = h0.iter().map(|&v| v as f64).collect();
            let b: Vec<f64> = h1.iter().map(|&v| v as f64).collect();
            let c = RocCurve::from_observations(&obs(&a, &b)).unwrap();
            let mut u = 0.0;
            for x in &a {
                for y in &b {
                    if y > x { u += 1.0 } else if y == x { u += 0.5 }
                }
            }
            let mw = u / (a.len() * b.len()) as f64;
            prop_assert!((c.auc - mw).abs() < 1e-12);
            prop_assert!(c.fpr.windows(2).all(|w| w[0] <= w[1]));
            prop_assert!(c.tpr.windows(2).all(|w| w[0] <= w[1]));
            // each curve point is (α̂, 1 − β̂) at some observed threshold
            let e = estimate_errors(&obs(&a, &b), &threshold_grid(&obs(&a, &b))).unwrap();
            for (f, t) in c.fpr.iter().zip(&c.tpr) {
                prop_assert!(e.alpha.iter().zip(&e.beta).any(|(x, y)| x == f && (1.0 - y - t).abs() < 1e-12));
            }
        }
    }

    #[test]
    fn uninformative_scores_auc_half() {
        let mut rng = RngStream::new(2, 0);
        let o: Vec<_> = (0..20_000)
            .map(|_| Observation {
                score: rng.random(),
                member: rng.random(),
            })
            .collect();
        let c = RocCurve::from_observations(&o).unwrap();
        assert!((c.auc - 0.5).abs() < 3.0 * c.auc_standard_error());
    }

    #[test]
    fn tpr_step_is_conservative() {
        // 100 non-members 0..99; FPR 1% allows exactly one above threshold
        let h0: Vec<f64> = (0..100).map(f64::from).collect();
        let h1 = [98.5, 50.0, 99.5];
        let t = tpr_at_fpr_scores(&h0, &h1, 0.01).unwrap();
        assert!((t - 2.0 / 3.0).abs() < 1e-15);
        let t = tpr_at_fpr_scores(&h0, &h1, 0.009).unwrap();
        assert!((t - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn hanley_mcneil_reference() {
        // A = 0.5, n0 = n1 = 100: Q1 = 1/3, Q2 = 1/3
        let want = ((0.25 + 99.0 * (1.0 / 3.0 - 0.25) * 2.0) / 1e4f64).sqrt();
        assert!((auc_standard_error(0.5, 100, 100) - want).abs() < 1e-15);
        assert_eq!(auc_standard_error(1.0, 10, 10), 0.0);
    }

    #[test]
    fn csv_layout() {
        let c = RocCurve::from_observations(&obs(&[0.0], &[1.0])).unwrap();
        let mut buf = Vec::new();
        c.write_csv(&mut buf).unwrap();
        assert_eq!(
            String::from_utf8(buf).unwrap(),
            "fpr,tpr\n0.0,0.0\n0.0,1.0\n1.0,1.0\n"
        );
    }
}
