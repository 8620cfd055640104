//! Browser bindings. Each export takes plain numbers and returns a JSON
//! string; the same computations are available natively for testing.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;
use wasm_bindgen::prelude::*;

use semi_core::attacks::Adversary;
use semi_core::error_theory::{linspace, ErrorModel, TestKind};
use semi_core::game::{run_semi_game, CrafterConfig, MeanGame, RocCurve};
use semi_core::mean_mechanism::DistributionSchedule;
use semi_core::stats::GaussianParams;

/// Most points sent back per ROC curve.
const ROC_POINTS: usize = 200;

/// Largest Monte-Carlo run the page may request.
pub const MAX_ROUNDS: u64 = 200_000;

const KINDS: [TestKind; 3] = [
    TestKind::SemiStar,
    TestKind::MaxOverTime,
    TestKind::FinalObservation,
];

#[derive(Debug, Serialize, PartialEq)]
pub struct PowerCurves {
    pub horizons: Vec<usize>,
    pub semi_star: Vec<f64>,
    pub semi_max: Vec<f64>,
    pub final_observation: Vec<f64>,
}

/// Closed-form power at level `alpha` for T = 1..=`max_horizon`.
pub fn power_curves(
    n: usize,
    m_star: f64,
    max_horizon: usize,
    alpha: f64,
) -> semi_core::Result<PowerCurves> {
    check_horizon(max_horizon)?;
    let horizons: Vec<usize> = (1..=max_horizon).collect();
    let mut cols = [Vec::new(), Vec::new(), Vec::new()];
    for &t in &horizons {
        for (col, kind) in cols.iter_mut().zip(KINDS) {
            col.push(ErrorModel::new(kind, n, t, m_star)?.power_at_alpha(alpha)?);
        }
    }
    let [semi_star, semi_max, final_observation] = cols;
    Ok(PowerCurves {
        horizons,
        semi_star,
        semi_max,
        final_observation,
    })
}

#[derive(Debug, Serialize, PartialEq)]
pub struct ErrorCurves {
    pub test: &'static str,
    pub gamma: Vec<f64>,
    pub alpha: Vec<f64>,
    pub beta: Vec<f64>,
}

fn kind_from_name(name: &str) -> semi_core::Result<TestKind> {
    KINDS
        .into_iter()
        .find(|k| k.name() == name)
        .ok_or_else(|| semi_core::Error::Numerical(format!("unknown test {name}")))
}

fn check_horizon(t: usize) -> semi_core::Result<()> {
    if (1..=1_000).contains(&t) {
        Ok(())
    } else {
        Err(semi_core::Error::OutOfRange {
            name: "T",
            value: t as f64,
            range: "[1, 1000]",
        })
    }
}

/// α(γ) and β(γ) of one closed-form test over `points` thresholds up to γ_max.
pub fn error_curves(
    test: &str,
    n: usize,
    horizon: usize,
    m_star: f64,
    points: usize,
) -> semi_core::Result<ErrorCurves> {
    check_horizon(horizon)?;
    let model = ErrorModel::new(kind_from_name(test)?, n, horizon, m_star)?;
    let curve = model.curve(&linspace(
        model.saturation_gamma(),
        model.gamma_max(),
        points.clamp(2, 2_000),
    ))?;
    Ok(ErrorCurves {
        test: model.kind.name(),
        gamma: curve.gammas,
        alpha: curve.alpha,
        beta: curve.beta,
    })
}

#[derive(Debug, Serialize, PartialEq)]
pub struct RocSummary {
    pub adversary: &'static str,
    pub auc: f64,
    pub auc_se: f64,
    pub fpr: Vec<f64>,
    pub tpr: Vec<f64>,
}

/// Thins a curve to at most `max` points, keeping both ends.
fn thin(roc: &RocCurve, max: usize) -> (Vec<f64>, Vec<f64>) {
    let len = roc.fpr.len();
    if len <= max {
        return (roc.fpr.clone(), roc.tpr.clone());
    }
    let idx = (0..max).map(|i| i * (len - 1) / (max - 1));
    idx.map(|i| (roc.fpr[i], roc.tpr[i])).unzip()
}

/// Plays the running-mean game on 𝒩(0, 1) data with the target at √m*
/// and returns the ROC curve of each mean-mechanism adversary.
pub fn mc_roc(
    n: usize,
    m_star: f64,
    horizon: usize,
    tau: usize,
    rounds: u64,
    seed: u64,
) -> semi_core::Result<Vec<RocSummary>> {
    check_horizon(horizon)?;
    if !(2..=MAX_ROUNDS).contains(&rounds) {
        return Err(semi_core::Error::OutOfRange {
            name: "rounds",
            value: rounds as f64,
            range: "[2, 200000]",
        });
    }
    let params = GaussianParams::new(DVector::zeros(1), DMatrix::identity(1, 1))?;
    let schedule = DistributionSchedule::stationary(params, horizon)?;
    let target = DVector::from_element(1, m_star.sqrt());
    let game = MeanGame::new(schedule, n, target)?;
    let advs = [
        Adversary::SemiStar,
        Adversary::SemiUnif,
        Adversary::SemiMax,
        Adversary::FinalObservation,
    ];
    let recs = run_semi_game(&game, &advs, rounds, &CrafterConfig::fixed_tau(tau), seed)?;
    advs.iter()
        .map(|&a| {
            let roc = recs.roc(a)?;
            let (fpr, tpr) = thin(&roc, ROC_POINTS);
            Ok(RocSummary {
                adversary: a.name(),
                auc: roc.auc,
                auc_se: roc.auc_standard_error(),
                fpr,
                tpr,
            })
        })
        .collect()
}

fn to_json<T: Serialize>(r: semi_core::Result<T>) -> Result<String, String> {
    let v = r.map_err(|e| e.to_string())?;
    serde_json::to_string(&v).map_err(|e| e.to_string())
}

#[wasm_bindgen(js_name = powerCurves)]
pub fn power_curves_js(
    n: usize,
    m_star: f64,
    max_horizon: usize,
    alpha: f64,
) -> Result<String, String> {
    to_json(power_curves(n, m_star, max_horizon, alpha))
}

#[wasm_bindgen(js_name = errorCurves)]
pub fn error_curves_js(
    test: &str,
    n: usize,
    horizon: usize,
    m_star: f64,
    points: usize,
) -> Result<String, String> {
    to_json(error_curves(test, n, horizon, m_star, points))
}

#[wasm_bindgen(js_name = mcRoc)]
pub fn mc_roc_js(
    n: usize,
    m_star: f64,
    horizon: usize,
    tau: usize,
    rounds: u32,
    seed: u32,
) -> Result<String, String> {
    to_json(mc_roc(n, m_star, horizon, tau, rounds.into(), seed.into()))
}
