use nalgebra::DVector;

use crate::attacks::{Adversary, MeanAttack};
use crate::error::Result;
use crate::game::{Draw, SemiGame};
use crate::mean_mechanism::{run_mean_mechanism, DistributionSchedule, Insertion, MeanTrace};
use crate::stats::RngStream;

/// The running-mean mechanism with a fixed target.
#[derive(Clone, Debug)]
pub struct MeanGame {
    schedule: DistributionSchedule,
    n: usize,
    target: DVector<f64>,
    attack: MeanAttack,
}

impl MeanGame {
    pub fn new(schedule: DistributionSchedule, n: usize, target: DVector<f64>) -> Result<Self> {
        let attack = MeanAttack::new(&schedule, n, &target)?;
        Ok(Self {
            schedule,
            n,
            target,
            attack,
        })
    }

    pub fn attack(&self) -> &MeanAttack {
        &self.attack
    }

    pub fn schedule(&self) -> &DistributionSchedule {
        &self.schedule
    }
}

impl SemiGame for MeanGame {
    type Trace = MeanTrace;

    fn horizon(&self) -> usize {
        self.schedule.horizon()
    }

    fn batch_size(&self, _t: usize) -> usize {
        self.n
    }

    fn play(&self, draw: &Draw, stream: &mut RngStream) -> Result<MeanTrace> {
        let insertion = Insertion {
            member: draw.member,
            tau: draw.tau,
            target: self.target.clone(),
            replaced_index: draw.replaced_index,
        };
        run_mean_mechanism(&self.schedule, self.n, &insertion, stream)
    }

    fn statistic(&self, adv: Adversary, trace: &MeanTrace, tau: Option<usize>) -> Result<f64> {
        self.attack.statistic(adv, trace, tau)
    }

    fn statistics(&self, advs: &[Adversary], trace: &MeanTrace, tau: usize) -> Result<Vec<f64>> {
        // the per-time log-LRs are shared by the τ-agnostic tests
        let needs_all = advs
            .iter()
            .any(|a| matches!(a, Adversary::SemiUnif | Adversary::SemiMax));
        let per_time = if needs_all {
            Some(self.attack.per_time(trace)?)
        } else {
            None
        };
        advs.iter()
            .map(|&a| match (a, &per_time) {
                (Adversary::SemiUnif, Some(p)) => crate::attacks::semi_unif(p),
                (Adversary::SemiMax, Some(p)) => crate::attacks::semi_max(p),
                _ => self.statistic(a, trace, a.knows_tau().then_some(tau)),
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::game::{run_semi_game, CrafterConfig};
    use crate::stats::GaussianParams;

    fn game(horizon: usize) -> MeanGame {
        let sched = DistributionSchedule::stationary(
            GaussianParams::univariate(0.0, 1.0).unwrap(),
            horizon,
        )
        .unwrap();
        MeanGame::new(sched, 10, DVector::from_element(1, 3.0)).unwrap()
    }

    #[test]
    fn shared_per_time_matches_direct() {
        let g = game(6);
        let advs = [
            Adversary::SemiStar,
            Adversary::SemiUnif,
            Adversary::SemiMax,
            Adversary::FinalObservation,
        ];
        let recs = run_semi_game(&g, &advs, 50, &CrafterConfig::default(), 8).unwrap();
        for r in &recs.records {
            let draw =
                crate::game::crafter(&g, &CrafterConfig::default(), &RngStream::new(8, r.round))
                    .unwrap();
            for (i, &a) in advs.iter().enumerate() {
                let direct = g
                    .statistic(a, &draw.0, a.knows_tau().then_some(r.tau))
                    .unwrap();
                assert_eq!(direct, r.stats[i]);
            }
        }
    }

    #[test]
    fn agnostic_tests_ignore_tau() {
        let g = game(5);
        let cfg = CrafterConfig::default();
        let (trace, _) = crate::game::crafter(&g, &cfg, &RngStream::new(1, 2)).unwrap();
        let a = g
            .statistics(
                &[Adversary::SemiMax, Adversary::FinalObservation],
                &trace,
                1,
            )
            .unwrap();
        let b = g
            .statistics(
                &[Adversary::SemiMax, Adversary::FinalObservation],
                &trace,
                4,
            )
            .unwrap();
        assert_eq!(a, b);
        assert!(g.statistic(Adversary::SemiStar, &trace, None).is_err());
        assert!(g.statistic(Adversary::DeltaDiff, &trace, None).is_err());
    }
}
