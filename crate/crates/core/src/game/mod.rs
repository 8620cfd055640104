//! The membership game: a crafter decides membership, insertion time and
//! the replaced slot; the mechanism runs; each adversary scores the output.
//!
//! Round r draws everything from `RngStream::new(seed, r)`, so a record set
//! depends only on the master seed, never on scheduling.

mod mean;
mod roc;
mod sgd;
mod shift;

use std::io::Write;

use rand::Rng;
use rayon::prelude::*;

use crate::attacks::Adversary;
use crate::error::{check_range, Error, Result};
use crate::io::fmt_f64;
use crate::stats::RngStream;

pub use mean::MeanGame;
pub(crate) use roc::threshold_grid;
pub use roc::{
    auc_standard_error, estimate_errors, tpr_at_fpr_scores, ErrorEstimates, Observation, RocCurve,
};
pub use sgd::{SgdGame, StatsSource};
pub use shift::GaussianShiftGame;

const CRAFTER_STREAM: u64 = 11;
const MECHANISM_STREAM: u64 = 12;

/// Distribution of the insertion time over {1..T}.
#[derive(Clone, Debug, PartialEq)]
pub enum TauPrior {
    Fixed(usize),
    Uniform,
    /// Weights for τ = 1..T; must sum to 1.
    Weights(Vec<f64>),
}

impl TauPrior {
    pub fn validate(&self, horizon: usize) -> Result<()> {
        match self {
            TauPrior::Fixed(t) => {
                check_range("tau", *t as f64, (1..=horizon).contains(t), "[1, T]")
            }
            TauPrior::Uniform => Ok(()),
            TauPrior::Weights(w) => {
                if w.len() != horizon {
                    return Err(Error::DimensionMismatch {
                        expected: horizon,
                        got: w.len(),
                    });
                }
                if let Some(bad) = w.iter().find(|v| v.is_nan() || **v < 0.0) {
                    return Err(Error::OutOfRange {
                        name: "tau weight",
                        value: *bad,
                        range: "[0, 1]",
                    });
                }
                let total: f64 = w.iter().sum();
                check_range(
                    "tau weights sum",
                    total,
                    (total - 1.0).abs() <= 1e-12,
                    "1 ± 1e-12",
                )
            }
        }
    }

    pub fn sample(&self, rng: &mut RngStream, horizon: usize) -> usize {
        match self {
            TauPrior::Fixed(t) => *t,
            TauPrior::Uniform => rng.random_range(1..=horizon),
            TauPrior::Weights(w) => {
                let u: f64 = rng.random();
                let mut acc = 0.0;
                for (i, p) in w.iter().enumerate() {
                    acc += p;
                    if u < acc {
                        return i + 1;
                    }
                }
                // rounding left u above the running sum; take the last
                // positive-weight slot
                w.iter().rposition(|p| *p > 0.0).map_or(horizon, |i| i + 1)
            }
        }
    }
}

/// ν_B and ν_τ of the crafter.
#[derive(Clone, Debug, PartialEq)]
pub struct CrafterConfig {
    pub member_prob: f64,
    pub tau_prior: TauPrior,
}

impl Default for CrafterConfig {
    fn default() -> Self {
        Self {
            member_prob: 0.5,
            tau_prior: TauPrior::Uniform,
        }
    }
}

impl CrafterConfig {
    pub fn fixed_tau(tau: usize) -> Self {
        Self {
            member_prob: 0.5,
            tau_prior: TauPrior::Fixed(tau),
        }
    }

    pub fn validate(&self, horizon: usize) -> Result<()> {
        let p = self.member_prob;
        check_range("member_prob", p, (0.0..=1.0).contains(&p), "[0, 1]")?;
        self.tau_prior.validate(horizon)
    }
}

/// The crafter's draw for one round. τ and J are drawn even when B = 0.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Draw {
    pub member: bool,
    pub tau: usize,
    pub replaced_index: usize,
}

/// A mechanism that can be played in the game.
pub trait SemiGame: Sync {
    type Trace;

    fn horizon(&self) -> usize;

    /// Size of batch `t` (1-based), the range of the replaced index.
    fn batch_size(&self, t: usize) -> usize;

    /// Runs the mechanism with the target inserted according to `draw`.
    fn play(&self, draw: &Draw, stream: &mut RngStream) -> Result<Self::Trace>;

    /// Scores a trace. `tau` is `Some` exactly for adversaries that know it.
    fn statistic(&self, adv: Adversary, trace: &Self::Trace, tau: Option<usize>) -> Result<f64>;

    fn statistics(&self, advs: &[Adversary], trace: &Self::Trace, tau: usize) -> Result<Vec<f64>> {
        advs.iter()
            .map(|&a| self.statistic(a, trace, a.knows_tau().then_some(tau)))
            .collect()
    }
}

/// Draws (B, τ, J) and runs the mechanism.
pub fn crafter<G: SemiGame + ?Sized>(
    game: &G,
    config: &CrafterConfig,
    round: &RngStream,
) -> Result<(G::Trace, Draw)> {
    let mut rng = round.child(CRAFTER_STREAM);
    let member = rng.random::<f64>() < config.member_prob;
    let tau = config.tau_prior.sample(&mut rng, game.horizon());
    let replaced_index = rng.random_range(1..=game.batch_size(tau));
    let draw = Draw {
        member,
        tau,
        replaced_index,
    };
    let trace = game.play(&draw, &mut round.child(MECHANISM_STREAM))?;
    Ok((trace, draw))
}

/// One round's membership bit, insertion time and statistics.
#[derive(Clone, Debug, PartialEq)]
pub struct RoundRecord {
    pub round: u64,
    pub member: bool,
    pub tau: usize,
    /// Aligned with [`GameRecords::adversaries`].
    pub stats: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GameRecords {
    pub adversaries: Vec<Adversary>,
    pub records: Vec<RoundRecord>,
}

impl GameRecords {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn column(&self, adv: Adversary) -> Result<usize> {
        self.adversaries
            .iter()
            .position(|a| *a == adv)
            .ok_or(Error::UnsupportedAdversary(adv.name()))
    }

    pub fn observations(&self, adv: Adversary) -> Result<Vec<Observation>> {
        let c = self.column(adv)?;
        Ok(self
            .records
            .iter()
            .map(|r| Observation {
                score: r.stats[c],
                member: r.member,
            })
            .collect())
    }

    /// Member and non-member scores of one adversary.
    pub fn split_scores(&self, adv: Adversary) -> Result<(Vec<f64>, Vec<f64>)> {
        let c = self.column(adv)?;
        let mut h0 = Vec::new();
        let mut h1 = Vec::new();
        for r in &self.records {
            if r.member {
                h1.push(r.stats[c]);
            } else {
                h0.push(r.stats[c]);
            }
        }
        Ok((h0, h1))
    }

    pub fn roc(&self, adv: Adversary) -> Result<RocCurve> {
        RocCurve::from_observations(&self.observations(adv)?)
    }

    /// CSV with columns `round, B, tau, stat_<adversary>...`.
    pub fn write_csv<W: Write>(&self, out: W) -> csv::Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["round".to_string(), "B".to_string(), "tau".to_string()];
        header.extend(
            self.adversaries
                .iter()
                .map(|a| format!("stat_{}", a.name())),
        );
        w.write_record(&header)?;
        for r in &self.records {
            let mut row = vec![
                r.round.to_string(),
                u8::from(r.member).to_string(),
                r.tau.to_string(),
            ];
            row.extend(r.stats.iter().map(|&s| fmt_f64(s)));
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Plays `rounds` independent rounds (in parallel) and records every
/// adversary's statistic on each trace.
pub fn run_semi_game<G: SemiGame + ?Sized>(
    game: &G,
    adversaries: &[Adversary],
    rounds: u64,
    config: &CrafterConfig,
    seed: u64,
) -> Result<GameRecords> {
    run_semi_game_rounds(game, adversaries, 0..rounds, config, seed)
}

/// As [`run_semi_game`] over an explicit range of round indices.
pub fn run_semi_game_rounds<G: SemiGame + ?Sized>(
    game: &G,
    adversaries: &[Adversary],
    rounds: std::ops::Range<u64>,
    config: &CrafterConfig,
    seed: u64,
) -> Result<GameRecords> {
    check_range(
        "R",
        rounds.end.saturating_sub(rounds.start) as f64,
        rounds.end > rounds.start,
        "[1, inf)",
    )?;
    config.validate(game.horizon())?;
    let records = rounds
        .into_par_iter()
        .map(|r| {
            let stream = RngStream::new(seed, r);
            let (trace, draw) = crafter(game, config, &stream)?;
            let stats = game.statistics(adversaries, &trace, draw.tau)?;
            Ok(RoundRecord {
                round: r,
                member: draw.member,
                tau: draw.tau,
                stats,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(GameRecords {
        adversaries: adversaries.to_vec(),
        records,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    /// A mechanism whose trace is just its draw, for harness tests.
    struct Echo;

    impl SemiGame for Echo {
        type Trace = Draw;

        fn horizon(&self) -> usize {
            10
        }

        fn batch_size(&self, _t: usize) -> usize {
            4
        }

        fn play(&self, draw: &Draw, _stream: &mut RngStream) -> Result<Draw> {
            Ok(*draw)
        }

        fn statistic(&self, adv: Adversary, trace: &Draw, tau: Option<usize>) -> Result<f64> {
            match adv {
                Adversary::SemiStar => Ok(tau.expect("knows tau") as f64),
                _ => {
                    assert!(tau.is_none());
                    Ok(f64::from(u8::from(trace.member)))
                }
            }
        }
    }

    #[test]
    fn single_round() {
        let r = run_semi_game(
            &Echo,
            &[Adversary::SemiStar, Adversary::SemiMax],
            1,
            &CrafterConfig::default(),
            3,
        )
        .unwrap();
        assert_eq!(r.len(), 1);
        assert_eq!(r.records[0].stats.len(), 2);
        assert_eq!(r.records[0].stats[0], r.records[0].tau as f64);
    }

    #[test]
    fn degenerate_priors() {
        let cfg = CrafterConfig {
            member_prob: 0.0,
            tau_prior: TauPrior::Uniform,
        };
        let r = run_semi_game(&Echo, &[Adversary::SemiMax], 500, &cfg, 1).unwrap();
        assert!(r.records.iter().all(|x| !x.member));
        let cfg = CrafterConfig {
            member_prob: 1.0,
            tau_prior: TauPrior::Fixed(5),
        };
        let r = run_semi_game(&Echo, &[Adversary::SemiMax], 500, &cfg, 1).unwrap();
        assert!(r.records.iter().all(|x| x.member && x.tau == 5));
    }

    #[test]
    fn member_rate_is_half() {
        let rounds = 20_000;
        let r = run_semi_game(
            &Echo,
            &[Adversary::SemiMax],
            rounds,
            &CrafterConfig::default(),
            9,
        )
        .unwrap();
        let p = r.records.iter().filter(|x| x.member).count() as f64 / rounds as f64;
        assert!((p - 0.5).abs() < 3.0 * (0.25 / rounds as f64).sqrt());
    }

    #[test]
    fn uniform_tau_histogram() {
        let rounds = 100_000u64;
        let r = run_semi_game(
            &Echo,
            &[Adversary::SemiMax],
            rounds,
            &CrafterConfig::default(),
            4,
        )
        .unwrap();
        let mut counts = [0f64; 10];
        for x in &r.records {
            counts[x.tau - 1] += 1.0;
        }
        let e = rounds as f64 / 10.0;
        let chi2: f64 = counts.iter().map(|c| (c - e).powi(2) / e).sum();
        // 99.9% quantile of χ²₉
        assert!(chi2 < 27.88, "chi2 = {chi2}");
    }

    #[test]
    fn weights_prior() {
        let p = TauPrior::Weights(vec![0.0, 0.0, 1.0]);
        assert!(p.validate(3).is_ok());
        let mut rng = RngStream::new(0, 0);
        assert!((0..100).all(|_| p.sample(&mut rng, 3) == 3));
        assert!(TauPrior::Weights(vec![0.5, 0.4]).validate(2).is_err());
        assert!(TauPrior::Fixed(0).validate(3).is_err());
    }

    #[test]
    fn thread_count_does_not_matter() {
        let cfg = CrafterConfig::default();
        let advs = [Adversary::SemiStar];
        let one = rayon::ThreadPoolBuilder::new()
            .num_threads(1)
            .build()
            .unwrap();
        let three = rayon::ThreadPoolBuilder::new()
            .num_threads(3)
            .build()
            .unwrap();
        let a = one
            .install(|| run_semi_game(&Echo, &advs, 2000, &cfg, 5))
            .unwrap();
        let b = three
            .install(|| run_semi_game(&Echo, &advs, 2000, &cfg, 5))
            .unwrap();
        assert_eq!(a, b);
        assert!(a.records.windows(2).all(|w| w[0].round < w[1].round));
    }

    #[test]
    fn csv_layout() {
        let recs = GameRecords {
            adversaries: vec![Adversary::SemiStar, Adversary::DeltaDiff],
            records: vec![RoundRecord {
                round: 0,
                member: true,
                tau: 3,
                stats: vec![1.5, -2.0],
            }],
        };
        let mut buf = Vec::new();
        recs.write_csv(&mut buf).unwrap();
        assert_eq!(
            String::from_utf8(buf).unwrap(),
            "round,B,tau,stat_semi_star,stat_delta_diff\n0,1,3,1.5,-2.0\n"
        );
    }
}
