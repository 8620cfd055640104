use nalgebra::DVector;

use crate::attacks::{baseline_statistics, semi_max, semi_sgd, semi_unif, Adversary};
use crate::error::{check_range, Error, Result};
use crate::game::{Draw, SemiGame};
use crate::mean_mechanism::Insertion;
use crate::sgd::{
    clip_to_norm, estimate_grad_stats, reference_gradients, run_dpsgd, run_sgd, GradientStats,
    LossModel, ParamTrace, Ridge, Sample, SgdConfig,
};
use crate::stats::RngStream;

/// Where the SGD adversary gets μ_g and Σ_g.
#[derive(Clone, Debug)]
pub enum StatsSource {
    /// The model's closed form.
    Exact,
    /// Estimated at each observed θ from a fixed reference set, with the
    /// same clipping the mechanism applies.
    Reference { samples: Vec<Sample>, ridge: Ridge },
}

/// SGD (or DP-SGD when the config clips) on a synthetic problem.
#[derive(Clone, Debug)]
pub struct SgdGame<M> {
    model: M,
    config: SgdConfig,
    target: Sample,
    source: StatsSource,
}

impl<M: LossModel> SgdGame<M> {
    pub fn new(model: M, config: SgdConfig, target: Sample, source: StatsSource) -> Result<Self> {
        config.validate()?;
        if target.x.len() != model.dim() || config.theta0.len() != model.dim() {
            return Err(Error::DimensionMismatch {
                expected: model.dim(),
                got: target.x.len(),
            });
        }
        match &source {
            StatsSource::Exact => {
                if model.exact_grad_stats(&config.theta0).is_none() {
                    return Err(Error::UnsupportedAdversary(
                        "semi_sgd with exact statistics",
                    ));
                }
            }
            StatsSource::Reference { samples, .. } => {
                check_range(
                    "reference size",
                    samples.len() as f64,
                    samples.len() >= 2,
                    "[2, inf)",
                )?;
            }
        }
        Ok(Self {
            model,
            config,
            target,
            source,
        })
    }

    pub fn model(&self) -> &M {
        &self.model
    }

    pub fn config(&self) -> &SgdConfig {
        &self.config
    }

    pub fn target(&self) -> &Sample {
        &self.target
    }

    /// The adversary's gradient model for update t taken from θ.
    pub fn grad_stats(&self, theta: &DVector<f64>, t: usize) -> Result<GradientStats> {
        let base = match &self.source {
            StatsSource::Exact => {
                self.model
                    .exact_grad_stats(theta)
                    .ok_or(Error::UnsupportedAdversary(
                        "semi_sgd with exact statistics",
                    ))??
            }
            StatsSource::Reference { samples, ridge } => estimate_grad_stats(
                &reference_gradients(&self.model, theta, samples, self.config.clip),
                *ridge,
            )?,
        };
        match self.config.clip {
            Some(c) if self.config.noise_multiplier > 0.0 => base.with_dp_noise(
                self.config.noise_multiplier,
                c,
                self.config.batch_sizes[t - 1],
            ),
            _ => Ok(base),
        }
    }

    /// The target's contribution to a batch gradient at θ.
    pub fn target_gradient(&self, theta: &DVector<f64>) -> DVector<f64> {
        let mut g = self.model.gradient(theta, &self.target);
        if let Some(c) = self.config.clip {
            clip_to_norm(&mut g, c);
        }
        g
    }

    pub fn log_lr_at(&self, trace: &ParamTrace, t: usize) -> Result<f64> {
        check_range(
            "tau",
            t as f64,
            (1..=trace.horizon()).contains(&t),
            "[1, T]",
        )?;
        let prev = trace.theta(t - 1);
        let stats = self.grad_stats(prev, t)?;
        semi_sgd(
            prev,
            trace.theta(t),
            self.config.learning_rates[t - 1],
            self.config.batch_sizes[t - 1],
            &stats,
            &self.target_gradient(prev),
        )
    }

    pub fn per_time(&self, trace: &ParamTrace) -> Result<Vec<f64>> {
        (1..=trace.horizon())
            .map(|t| self.log_lr_at(trace, t))
            .collect()
    }

    /// ℓ(θ_t; z*) for t = 0..T.
    pub fn target_losses(&self, trace: &ParamTrace) -> Vec<f64> {
        trace
            .thetas
            .iter()
            .map(|th| self.model.loss(th, &self.target))
            .collect()
    }
}

impl<M: LossModel> SemiGame for SgdGame<M> {
    type Trace = ParamTrace;

    fn horizon(&self) -> usize {
        self.config.horizon()
    }

    fn batch_size(&self, t: usize) -> usize {
        self.config.batch_sizes[t - 1]
    }

    fn play(&self, draw: &Draw, stream: &mut RngStream) -> Result<ParamTrace> {
        let insertion = Insertion {
            member: draw.member,
            tau: draw.tau,
            target: self.target.clone(),
            replaced_index: draw.replaced_index,
        };
        if self.config.clip.is_some() {
            run_dpsgd(&self.model, &self.config, &insertion, stream)
        } else {
            run_sgd(&self.model, &self.config, &insertion, stream)
        }
    }

    fn statistic(&self, adv: Adversary, trace: &ParamTrace, tau: Option<usize>) -> Result<f64> {
        match adv {
            Adversary::SemiSgd => {
                let tau = tau.ok_or(Error::MissingInsertionTime(adv.name()))?;
                self.log_lr_at(trace, tau)
            }
            Adversary::SemiUnif => semi_unif(&self.per_time(trace)?),
            Adversary::SemiMax => semi_max(&self.per_time(trace)?),
            a if Adversary::BASELINES.contains(&a) => {
                baseline_statistics(&self.target_losses(trace))?.get(a)
            }
            other => Err(Error::UnsupportedAdversary(other.name())),
        }
    }

    fn statistics(&self, advs: &[Adversary], trace: &ParamTrace, tau: usize) -> Result<Vec<f64>> {
        let baselines = if advs.iter().any(|a| Adversary::BASELINES.contains(a)) {
            Some(baseline_statistics(&self.target_losses(trace))?)
        } else {
            None
        };
        advs.iter()
            .map(|&a| match &baselines {
                Some(b) if Adversary::BASELINES.contains(&a) => b.get(a),
                _ => self.statistic(a, trace, a.knows_tau().then_some(tau)),
            })
            .collect()
    }
}
