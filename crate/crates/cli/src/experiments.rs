//! The experiments. Each is a pure function of the configuration: grid
//! point k plays rounds k·R..(k+1)·R of the master seed, and setup draws
//! (reference sets, target pools) come from a stream no round uses.

use std::ops::Range;

use anyhow::Result;
use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Serialize, Serializer};

use semi_core::attacks::{final_observation, Adversary};
use semi_core::audit::{
    epsilon_lower_bound, ground_truth_epsilon, noise_multiplier_for_epsilon, AuditConfig,
    AuditOutcome,
};
use semi_core::error_theory::{
    alpha_semi_star_mv, gamma_max_mv, linspace, threshold_for_alpha, ErrorModel, TestKind,
    GAMMA_FLOOR,
};
use semi_core::game::{
    crafter, run_semi_game_rounds, CrafterConfig, GameRecords, MeanGame, SgdGame, StatsSource,
    TauPrior,
};
use semi_core::io::fmt_f64;
use semi_core::mean_mechanism::DistributionSchedule;
use semi_core::sgd::{
    default_theta0, linreg_grad_stats, select_target, LinRegProblem, LogRegProblem, LossModel,
    Ridge, Sample, SgdConfig,
};
use semi_core::stats::{GaussianParams, RngStream, SpdMatrix};

use crate::config::Config;
use crate::output::{csv_table, render, Artifact};
use crate::Experiment;

const SETUP_STREAM: u64 = u64::MAX;

const CLOSED_FORM: [TestKind; 3] = [
    TestKind::SemiStar,
    TestKind::MaxOverTime,
    TestKind::FinalObservation,
];

pub fn run(exp: Experiment, cfg: &Config) -> Result<Vec<Artifact>> {
    match exp {
        Experiment::MeanPower => mean_power(cfg),
        Experiment::Roc => mean_roc(cfg, exp, TauPrior::Fixed(cfg.mean.tau)),
        Experiment::UniformTau => mean_roc(cfg, exp, TauPrior::Uniform),
        Experiment::Multivariate => multivariate(cfg),
        Experiment::SgdSim => sgd_sim(cfg),
        Experiment::TauSweep => tau_sweep(cfg),
        Experiment::DpsgdAudit => dpsgd_audit(cfg),
        Experiment::LrTrace => lr_trace(cfg),
    }
}

fn block(k: usize, rounds: u64) -> Range<u64> {
    let k = k as u64;
    k * rounds..(k + 1) * rounds
}

fn balanced(tau_prior: TauPrior) -> CrafterConfig {
    CrafterConfig {
        member_prob: 0.5,
        tau_prior,
    }
}

/// Running mean of 𝒩(0, I_d) batches; the target sits at distance √m*.
fn mean_game(
    cfg: &Config,
    d: usize,
    horizon: usize,
    m_star: f64,
) -> Result<(MeanGame, DVector<f64>)> {
    let params = GaussianParams::new(DVector::zeros(d), DMatrix::identity(d, d))?;
    let schedule = DistributionSchedule::stationary(params, horizon)?;
    let mut target = DVector::zeros(d);
    target[0] = m_star.sqrt();
    Ok((MeanGame::new(schedule, cfg.mean.n, target.clone())?, target))
}

fn binom_se(p: f64, n: usize) -> f64 {
    (p * (1.0 - p) / n as f64).sqrt()
}

/// `roc_<adv>.csv` per adversary and a `summary.csv` of AUC and TPR at α.
fn roc_outputs(recs: &GameRecords, alpha: f64) -> Result<Vec<Artifact>> {
    let mut out = Vec::new();
    let mut rows = Vec::new();
    for &adv in &recs.adversaries {
        let roc = recs.roc(adv)?;
        out.push(Artifact::new(
            format!("roc_{adv}.csv"),
            render(|b| roc.write_csv(b))?,
        ));
        rows.push(vec![
            adv.to_string(),
            fmt_f64(roc.auc),
            fmt_f64(roc.auc_standard_error()),
            fmt_f64(roc.tpr_at_fpr(alpha)?),
            roc.n0.to_string(),
            roc.n1.to_string(),
        ]);
    }
    out.push(Artifact::new(
        "summary.csv",
        csv_table(
            ["adversary", "auc", "auc_se", "tpr_at_alpha", "n0", "n1"],
            rows,
        )?,
    ));
    Ok(out)
}

/// The closed-form model of an adversary, where one exists.
fn closed_form_kind(adv: Adversary) -> Option<TestKind> {
    match adv {
        Adversary::SemiStar => Some(TestKind::SemiStar),
        Adversary::SemiMax => Some(TestKind::MaxOverTime),
        Adversary::FinalObservation => Some(TestKind::FinalObservation),
        _ => None,
    }
}

/// Fraction of scores strictly above `gamma`.
fn above(scores: &[f64], gamma: f64) -> f64 {
    scores.iter().filter(|s| **s > gamma).count() as f64 / scores.len() as f64
}

/// MC power is measured at the closed-form level-α threshold where one
/// exists, and at the empirical one otherwise.
fn mean_power(cfg: &Config) -> Result<Vec<Artifact>> {
    let m = &cfg.mean;
    let advs = cfg.adversaries(Experiment::MeanPower)?;
    let mut header: Vec<String> = CLOSED_FORM
        .iter()
        .map(|k| format!("{}_cf", k.name()))
        .collect();
    for a in &advs {
        header.push(format!("{a}_mc"));
        header.push(format!("{a}_mc_se"));
    }
    let row = |k: usize, horizon: usize, m_star: f64| -> Result<Vec<String>> {
        let mut row = Vec::new();
        let mut thresholds = Vec::new();
        for kind in CLOSED_FORM {
            let model = ErrorModel::new(kind, m.n, horizon, m_star)?;
            let gamma = model.threshold_for_alpha(m.alpha)?;
            row.push(fmt_f64(1.0 - model.beta(gamma)?));
            thresholds.push((kind, gamma));
        }
        let (game, _) = mean_game(cfg, 1, horizon, m_star)?;
        let recs = run_semi_game_rounds(
            &game,
            &advs,
            block(k, cfg.run.rounds),
            &CrafterConfig::default(),
            cfg.run.seed,
        )?;
        for &a in &advs {
            let gamma = closed_form_kind(a)
                .and_then(|kind| thresholds.iter().find(|(k, _)| *k == kind))
                .map(|(_, g)| *g);
            let (tpr, n1) = match gamma {
                Some(g) => {
                    let (_, h1) = recs.split_scores(a)?;
                    (above(&h1, g), h1.len())
                }
                None => {
                    let roc = recs.roc(a)?;
                    (roc.tpr_at_fpr(m.alpha)?, roc.n1)
                }
            };
            row.push(fmt_f64(tpr));
            row.push(fmt_f64(binom_se(tpr, n1)));
        }
        Ok(row)
    };

    let mut k = 0;
    let mut by_t = Vec::new();
    for &t in &m.horizons {
        let mut r = vec![t.to_string()];
        r.extend(row(k, t, m.m_star)?);
        by_t.push(r);
        k += 1;
    }
    let mut by_m = Vec::new();
    for &ms in &m.m_star_grid {
        let mut r = vec![fmt_f64(ms)];
        r.extend(row(k, m.horizon, ms)?);
        by_m.push(r);
        k += 1;
    }
    let with_key = |key: &str| std::iter::once(key.to_string()).chain(header.iter().cloned());
    Ok(vec![
        Artifact::new("power_vs_T.csv", csv_table(with_key("horizon"), by_t)?),
        Artifact::new("power_vs_mstar.csv", csv_table(with_key("m_star"), by_m)?),
    ])
}

fn mean_roc(cfg: &Config, exp: Experiment, prior: TauPrior) -> Result<Vec<Artifact>> {
    let m = &cfg.mean;
    let advs = cfg.adversaries(exp)?;
    let (game, _) = mean_game(cfg, 1, m.horizon, m.m_star)?;
    let recs = run_semi_game_rounds(
        &game,
        &advs,
        block(0, cfg.run.rounds),
        &balanced(prior),
        cfg.run.seed,
    )?;
    let mut out = vec![Artifact::new("records.csv", render(|b| recs.write_csv(b))?)];
    out.extend(roc_outputs(&recs, m.alpha)?);
    for kind in CLOSED_FORM {
        let model = ErrorModel::new(kind, m.n, m.horizon, m.m_star)?;
        let curve = model.curve(&linspace(model.saturation_gamma(), model.gamma_max(), 201))?;
        out.push(Artifact::new(
            format!("curve_{}.csv", kind.name()),
            render(|b| curve.write_csv(b))?,
        ));
    }
    Ok(out)
}

fn multivariate(cfg: &Config) -> Result<Vec<Artifact>> {
    let m = &cfg.mean;
    let mut rows = Vec::new();
    for (k, &d) in m.dims.iter().enumerate() {
        let gamma = threshold_for_alpha(
            |g| alpha_semi_star_mv(g, m.n, d, m.m_star),
            m.alpha,
            GAMMA_FLOOR,
            gamma_max_mv(m.n, d, m.m_star),
        )?;
        let (game, _) = mean_game(cfg, d, 1, m.m_star)?;
        let recs = run_semi_game_rounds(
            &game,
            &[Adversary::SemiStar],
            block(k, cfg.run.rounds),
            &balanced(TauPrior::Fixed(1)),
            cfg.run.seed,
        )?;
        let (h0, h1) = recs.split_scores(Adversary::SemiStar)?;
        let (alpha_mc, power_mc) = (above(&h0, gamma), above(&h1, gamma));
        rows.push(vec![
            d.to_string(),
            fmt_f64(gamma),
            fmt_f64(alpha_semi_star_mv(gamma, m.n, d, m.m_star)?),
            fmt_f64(alpha_mc),
            fmt_f64(binom_se(alpha_mc, h0.len())),
            fmt_f64(power_mc),
            fmt_f64(binom_se(power_mc, h1.len())),
        ]);
    }
    Ok(vec![Artifact::new(
        "power_vs_d.csv",
        csv_table(
            [
                "dim",
                "gamma",
                "alpha_cf",
                "alpha_mc",
                "alpha_mc_se",
                "power_mc",
                "power_mc_se",
            ],
            rows,
        )?,
    )])
}

#[derive(Serialize)]
struct TargetInfo {
    x: Vec<f64>,
    y: f64,
    /// Mahalanobis distance of its gradient at θ₀.
    grad_distance: f64,
    pool: usize,
}

/// Linear-regression SGD with exact gradient statistics and the most
/// detectable point of a fresh pool as target.
fn linreg_game(cfg: &Config) -> Result<(SgdGame<LinRegProblem>, TargetInfo)> {
    let s = &cfg.sgd;
    let theta_star = DVector::from_vec(s.theta_star.clone());
    let d = theta_star.len();
    let problem = LinRegProblem::new(theta_star.clone(), SpdMatrix::identity(d), s.noise_var)?;
    let theta0 = default_theta0(&theta_star);
    let sgd = SgdConfig::constant(s.horizon, s.eta, s.batch, theta0.clone());
    let mut rng = RngStream::new(cfg.run.seed, SETUP_STREAM);
    let pool: Vec<Sample> = (0..s.target_pool)
        .map(|_| problem.sample(&mut rng))
        .collect();
    let stats = linreg_grad_stats(&theta0, &problem)?;
    let (i, distance) = select_target(&problem, &pool, &theta0, &stats)?;
    let target = pool[i].clone();
    let info = TargetInfo {
        x: target.x.iter().copied().collect(),
        y: target.y,
        grad_distance: distance,
        pool: s.target_pool,
    };
    Ok((
        SgdGame::new(problem, sgd, target, StatsSource::Exact)?,
        info,
    ))
}

fn sgd_sim(cfg: &Config) -> Result<Vec<Artifact>> {
    let advs = cfg.adversaries(Experiment::SgdSim)?;
    let (game, info) = linreg_game(cfg)?;
    let crafter_cfg = CrafterConfig::default();
    let recs = run_semi_game_rounds(
        &game,
        &advs,
        block(0, cfg.run.rounds),
        &crafter_cfg,
        cfg.run.seed,
    )?;
    let (trace, _) = crafter(&game, &crafter_cfg, &RngStream::new(cfg.run.seed, 0))?;
    let mut target_json = serde_json::to_vec_pretty(&info)?;
    target_json.push(b'\n');
    let mut out = vec![
        Artifact::new("target.json", target_json),
        Artifact::new("records.csv", render(|b| recs.write_csv(b))?),
        Artifact::new("trace_round0.csv", render(|b| trace.write_csv(b))?),
    ];
    out.extend(roc_outputs(&recs, cfg.sgd.alpha)?);
    Ok(out)
}

fn all_taus(taus: &[usize], horizon: usize) -> Vec<usize> {
    if taus.is_empty() {
        (1..=horizon).collect()
    } else {
        taus.to_vec()
    }
}

fn tau_sweep(cfg: &Config) -> Result<Vec<Artifact>> {
    let advs = cfg.adversaries(Experiment::TauSweep)?;
    let (game, _) = linreg_game(cfg)?;
    let mut rows = Vec::new();
    for (k, &tau) in all_taus(&cfg.sgd.taus, cfg.sgd.horizon).iter().enumerate() {
        let recs = run_semi_game_rounds(
            &game,
            &advs,
            block(k, cfg.run.rounds),
            &balanced(TauPrior::Fixed(tau)),
            cfg.run.seed,
        )?;
        for &adv in &advs {
            let roc = recs.roc(adv)?;
            rows.push(vec![
                tau.to_string(),
                adv.to_string(),
                fmt_f64(roc.auc),
                fmt_f64(roc.auc_standard_error()),
                fmt_f64(roc.tpr_at_fpr(cfg.sgd.alpha)?),
            ]);
        }
    }
    Ok(vec![Artifact::new(
        "tau_sweep.csv",
        csv_table(["tau", "adversary", "auc", "auc_se", "tpr_at_alpha"], rows)?,
    )])
}

/// JSON numbers, with infinities as the strings "inf" and "-inf".
fn extended_f64<S: Serializer>(x: &f64, s: S) -> std::result::Result<S::Ok, S::Error> {
    if x.is_finite() {
        s.serialize_f64(*x)
    } else {
        s.serialize_str(&fmt_f64(*x))
    }
}

#[derive(Serialize)]
struct AuditCell {
    #[serde(serialize_with = "extended_f64")]
    epsilon_true: f64,
    #[serde(serialize_with = "extended_f64")]
    epsilon_accountant: f64,
    noise_multiplier: f64,
    tau: usize,
    #[serde(serialize_with = "adversary_name")]
    adversary: Adversary,
    #[serde(flatten)]
    outcome: AuditOutcome,
}

fn adversary_name<S: Serializer>(a: &Adversary, s: S) -> std::result::Result<S::Ok, S::Error> {
    s.serialize_str(a.name())
}

fn dpsgd_audit(cfg: &Config) -> Result<Vec<Artifact>> {
    let a = &cfg.audit;
    let advs = cfg.adversaries(Experiment::DpsgdAudit)?;
    let d = a.theta_star.len();
    let problem = LogRegProblem::new(
        DVector::from_vec(a.theta_star.clone()),
        SpdMatrix::identity(d),
    )?;
    let mut rng = RngStream::new(cfg.run.seed, SETUP_STREAM);
    let refs: Vec<Sample> = (0..a.reference).map(|_| problem.sample(&mut rng)).collect();
    let target = Sample::new(DVector::from_vec(a.canary.clone()), 1.0);
    let audit_cfg = AuditConfig::new(a.delta, a.xi)?;
    let taus = all_taus(&a.taus, a.horizon);

    let mut levels = Vec::new();
    for &eps in &a.epsilons {
        levels.push((eps, noise_multiplier_for_epsilon(eps, a.delta, a.horizon)?));
    }
    if a.nonprivate {
        levels.push((f64::INFINITY, 0.0));
    }

    let mut cells = Vec::new();
    let mut summary = Vec::new();
    let mut k = 0;
    for &(eps, sigma) in &levels {
        let sgd = SgdConfig::constant(a.horizon, a.eta, a.batch, DVector::zeros(d))
            .with_privacy(a.clip, sigma);
        let accountant = ground_truth_epsilon(&sgd, a.delta)?;
        let source = StatsSource::Reference {
            samples: refs.clone(),
            ridge: Ridge::Auto,
        };
        let game = SgdGame::new(problem.clone(), sgd, target.clone(), source)?;
        // bounds[adv][tau index]
        let mut bounds = vec![Vec::with_capacity(taus.len()); advs.len()];
        for &tau in &taus {
            let recs = run_semi_game_rounds(
                &game,
                &advs,
                block(k, cfg.run.rounds),
                &balanced(TauPrior::Fixed(tau)),
                cfg.run.seed,
            )?;
            k += 1;
            for (i, &adv) in advs.iter().enumerate() {
                let outcome = epsilon_lower_bound(&recs.observations(adv)?, &audit_cfg)?;
                bounds[i].push(outcome.epsilon_lb);
                cells.push(AuditCell {
                    epsilon_true: eps,
                    epsilon_accountant: accountant,
                    noise_multiplier: sigma,
                    tau,
                    adversary: adv,
                    outcome,
                });
            }
        }
        for (i, &adv) in advs.iter().enumerate() {
            let b = &bounds[i];
            let mean = b.iter().sum::<f64>() / b.len() as f64;
            let (best, max) = b
                .iter()
                .enumerate()
                .fold(
                    (0, f64::NEG_INFINITY),
                    |acc, (j, &v)| if v > acc.1 { (j, v) } else { acc },
                );
            summary.push(vec![
                fmt_f64(eps),
                fmt_f64(sigma),
                adv.to_string(),
                fmt_f64(mean),
                fmt_f64(max),
                taus[best].to_string(),
            ]);
        }
    }
    let mut json = serde_json::to_vec_pretty(&cells)?;
    json.push(b'\n');
    Ok(vec![
        Artifact::new("audits.json", json),
        Artifact::new(
            "summary.csv",
            csv_table(
                [
                    "epsilon_true",
                    "noise_multiplier",
                    "adversary",
                    "mean_lb",
                    "max_lb",
                    "best_tau",
                ],
                summary,
            )?,
        ),
    ])
}

/// Linear-interpolation quantile of sorted data.
fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

const QUANTILES: [f64; 5] = [0.05, 0.25, 0.5, 0.75, 0.95];

/// Known-τ log-LR (0 until the insertion time) and the log-LR of the
/// running mean treated as one pooled batch, after each update.
fn lr_trace(cfg: &Config) -> Result<Vec<Artifact>> {
    let m = &cfg.mean;
    let (game, target) = mean_game(cfg, 1, m.horizon, m.m_star)?;
    let step = game.schedule().step(1);
    let (mu, cov) = (step.mean(), step.cov()?);
    let mut rows = Vec::new();
    for (k, member) in [false, true].into_iter().enumerate() {
        let crafter_cfg = CrafterConfig {
            member_prob: if member { 1.0 } else { 0.0 },
            tau_prior: TauPrior::Fixed(m.tau),
        };
        let paths = block(k, cfg.run.rounds)
            .into_par_iter()
            .map(|r| {
                let (trace, draw) = crafter(&game, &crafter_cfg, &RngStream::new(cfg.run.seed, r))?;
                let star = game.attack().log_lr_at(&trace, draw.tau)?;
                (1..=m.horizon)
                    .map(|t| {
                        let fo = final_observation(trace.value(t), mu, cov, m.n, t, &target)?;
                        Ok([if t < draw.tau { 0.0 } else { star }, fo])
                    })
                    .collect::<semi_core::Result<Vec<_>>>()
            })
            .collect::<semi_core::Result<Vec<_>>>()?;
        for t in 1..=m.horizon {
            for (j, adv) in [Adversary::SemiStar, Adversary::FinalObservation]
                .into_iter()
                .enumerate()
            {
                let mut v: Vec<f64> = paths.iter().map(|p| p[t - 1][j]).collect();
                v.sort_by(f64::total_cmp);
                let n = v.len() as f64;
                let mean = v.iter().sum::<f64>() / n;
                let sd = (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
                let mut row = vec![
                    t.to_string(),
                    if member { "h1" } else { "h0" }.to_string(),
                    adv.to_string(),
                    fmt_f64(mean),
                    fmt_f64(sd),
                ];
                row.extend(QUANTILES.iter().map(|&q| fmt_f64(quantile(&v, q))));
                rows.push(row);
            }
        }
    }
    Ok(vec![Artifact::new(
        "lr_trace.csv",
        csv_table(
            [
                "t",
                "hypothesis",
                "adversary",
                "mean",
                "sd",
                "q05",
                "q25",
                "q50",
                "q75",
                "q95",
            ],
            rows,
        )?,
    )])
}
