//! Experiment configuration: a TOML file with one section per module.
//! Missing keys take the defaults below; unknown keys are rejected.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use semi_core::attacks::Adversary;

use crate::Experiment;

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read config file {path}: {source}")]
    Read {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("cannot parse config file: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("invalid {field} = {value}: expected {expected}")]
    Invalid {
        field: &'static str,
        value: String,
        expected: &'static str,
    },
}

fn invalid(
    field: &'static str,
    value: impl std::fmt::Debug,
    expected: &'static str,
) -> ConfigError {
    ConfigError::Invalid {
        field,
        value: format!("{value:?}"),
        expected,
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub run: RunSection,
    pub mean: MeanSection,
    pub sgd: SgdSection,
    pub audit: AuditSection,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunSection {
    pub seed: u64,
    /// Monte-Carlo rounds per grid point.
    pub rounds: u64,
    /// Output sub-directory; defaults to `seed-<seed>`.
    pub label: Option<String>,
    /// Overrides the experiment's default adversary list.
    pub adversaries: Option<Vec<String>>,
}

impl Default for RunSection {
    fn default() -> Self {
        Self {
            seed: 1,
            rounds: 10_000,
            label: None,
            adversaries: None,
        }
    }
}

/// The running-mean mechanism on 𝒩(0, I_d) data.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MeanSection {
    pub n: usize,
    pub m_star: f64,
    pub horizon: usize,
    pub tau: usize,
    /// Level at which power (TPR) is reported.
    pub alpha: f64,
    pub horizons: Vec<usize>,
    pub m_star_grid: Vec<f64>,
    pub dims: Vec<usize>,
}

impl Default for MeanSection {
    fn default() -> Self {
        Self {
            n: 10,
            m_star: 9.0,
            horizon: 10,
            tau: 5,
            alpha: 0.01,
            horizons: (1..=10).collect(),
            m_star_grid: vec![1.0, 4.0, 9.0, 16.0, 25.0, 36.0],
            dims: vec![1, 2, 10, 50],
        }
    }
}

/// Non-private SGD on synthetic linear regression.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SgdSection {
    pub theta_star: Vec<f64>,
    pub horizon: usize,
    pub batch: usize,
    pub eta: f64,
    pub noise_var: f64,
    /// The target is the highest-m* point among this many fresh samples.
    pub target_pool: usize,
    pub alpha: f64,
    /// Insertion times for `tau-sweep`; empty means 1..=T.
    pub taus: Vec<usize>,
}

impl Default for SgdSection {
    fn default() -> Self {
        Self {
            theta_star: vec![1.0, -1.0, 0.5, -0.5, 0.25],
            horizon: 10,
            batch: 50,
            eta: 0.05,
            noise_var: 1.0,
            target_pool: 1_000,
            alpha: 0.01,
            taus: Vec::new(),
        }
    }
}

/// DP-SGD on synthetic logistic regression, audited at each ε.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AuditSection {
    pub delta: f64,
    pub xi: f64,
    pub epsilons: Vec<f64>,
    /// Adds a σ_DP = 0 run, reported as ε = inf.
    pub nonprivate: bool,
    pub theta_star: Vec<f64>,
    pub horizon: usize,
    pub batch: usize,
    pub eta: f64,
    pub clip: f64,
    /// Size of the adversary's reference set for gradient statistics;
    /// 0 means none was given.
    pub reference: usize,
    /// Features of the target point (label 1).
    pub canary: Vec<f64>,
    pub taus: Vec<usize>,
}

impl Default for AuditSection {
    fn default() -> Self {
        Self {
            delta: 1e-4,
            xi: 0.05,
            epsilons: vec![0.5, 1.0, 2.0, 4.0],
            nonprivate: false,
            theta_star: vec![1.0, -1.0, 0.5, 0.0, 0.5],
            horizon: 10,
            batch: 64,
            eta: 0.5,
            clip: 1.0,
            reference: 500,
            canary: vec![0.0, 0.0, 0.0, 3.0, 0.0],
            taus: Vec::new(),
        }
    }
}

fn positive(field: &'static str, v: f64) -> Result<(), ConfigError> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(invalid(field, v, "a finite value > 0"))
    }
}

fn at_least(
    field: &'static str,
    v: usize,
    min: usize,
    expected: &'static str,
) -> Result<(), ConfigError> {
    if v >= min {
        Ok(())
    } else {
        Err(invalid(field, v, expected))
    }
}

fn level(field: &'static str, v: f64) -> Result<(), ConfigError> {
    if v > 0.0 && v < 1.0 {
        Ok(())
    } else {
        Err(invalid(field, v, "a value in (0, 1)"))
    }
}

fn finite_vector(field: &'static str, v: &[f64]) -> Result<(), ConfigError> {
    if v.is_empty() || v.len() > 1_000 || v.iter().any(|x| !x.is_finite()) {
        Err(invalid(field, v, "1 to 1000 finite entries"))
    } else {
        Ok(())
    }
}

fn taus_within(field: &'static str, taus: &[usize], horizon: usize) -> Result<(), ConfigError> {
    match taus.iter().find(|t| !(1..=horizon).contains(*t)) {
        Some(t) => Err(invalid(field, t, "insertion times in [1, horizon]")),
        None => Ok(()),
    }
}

impl Config {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read {
            path: path.to_path_buf(),
            source,
        })?;
        Ok(toml::from_str(&text)?)
    }

    pub fn label(&self) -> String {
        self.run
            .label
            .clone()
            .unwrap_or_else(|| format!("seed-{}", self.run.seed))
    }

    /// SHA-256 of the canonical JSON form of the resolved configuration.
    pub fn sha256(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("config serializes");
        hex(&Sha256::digest(&bytes))
    }

    /// The adversaries an experiment scores, validated against the mechanism.
    pub fn adversaries(&self, exp: Experiment) -> Result<Vec<Adversary>, ConfigError> {
        let allowed: &[Adversary] = match exp {
            Experiment::SgdSim | Experiment::TauSweep | Experiment::DpsgdAudit => &[
                Adversary::SemiSgd,
                Adversary::SemiUnif,
                Adversary::SemiMax,
                Adversary::DeltaDiff,
                Adversary::DeltaRatio,
                Adversary::BackFrontDiff,
                Adversary::BackFrontRatio,
            ],
            Experiment::Multivariate => &[Adversary::SemiStar],
            _ => &[
                Adversary::SemiStar,
                Adversary::SemiUnif,
                Adversary::SemiMax,
                Adversary::FinalObservation,
            ],
        };
        let Some(names) = &self.run.adversaries else {
            return Ok(match exp {
                Experiment::SgdSim | Experiment::TauSweep | Experiment::DpsgdAudit => {
                    let mut v = vec![Adversary::SemiSgd];
                    v.extend(Adversary::BASELINES);
                    v
                }
                _ => allowed.to_vec(),
            });
        };
        if names.is_empty() {
            return Err(invalid("run.adversaries", names, "at least one adversary"));
        }
        names
            .iter()
            .map(|name| {
                let adv: Adversary = name
                    .parse()
                    .map_err(|_| invalid("run.adversaries", name, "a known adversary name"))?;
                if allowed.contains(&adv) {
                    Ok(adv)
                } else {
                    Err(invalid(
                        "run.adversaries",
                        name,
                        "an adversary that applies to this experiment",
                    ))
                }
            })
            .collect()
    }

    /// Checks every field the experiment reads, before any computation.
    pub fn validate(&self, exp: Experiment) -> Result<(), ConfigError> {
        if !(2..=1_000_000_000).contains(&self.run.rounds) {
            return Err(invalid(
                "run.rounds",
                self.run.rounds,
                "a count in [2, 1e9]",
            ));
        }
        if let Some(label) = &self.run.label {
            let ok = !label.is_empty()
                && label
                    .chars()
                    .all(|c| c.is_ascii_alphanumeric() || "-_.".contains(c))
                && label != "."
                && label != "..";
            if !ok {
                return Err(invalid(
                    "run.label",
                    label,
                    "letters, digits, '-', '_' or '.'",
                ));
            }
        }
        self.adversaries(exp)?;
        let m = &self.mean;
        match exp {
            Experiment::MeanPower
            | Experiment::Roc
            | Experiment::UniformTau
            | Experiment::Multivariate
            | Experiment::LrTrace => {
                at_least("mean.n", m.n, 2, "a batch size of at least 2")?;
                positive("mean.m_star", m.m_star)?;
                level("mean.alpha", m.alpha)?;
                at_least("mean.horizon", m.horizon, 1, "at least 1")?;
                taus_within("mean.tau", &[m.tau], m.horizon)?;
            }
            _ => {}
        }
        match exp {
            Experiment::MeanPower => {
                if m.horizons.is_empty() {
                    return Err(invalid("mean.horizons", &m.horizons, "a non-empty list"));
                }
                if let Some(t) = m.horizons.iter().find(|t| **t == 0) {
                    return Err(invalid("mean.horizons", t, "horizons of at least 1"));
                }
                if m.m_star_grid.is_empty() {
                    return Err(invalid(
                        "mean.m_star_grid",
                        &m.m_star_grid,
                        "a non-empty list",
                    ));
                }
                for v in &m.m_star_grid {
                    positive("mean.m_star_grid", *v)?;
                }
            }
            Experiment::Multivariate => {
                if m.dims.is_empty() {
                    return Err(invalid("mean.dims", &m.dims, "a non-empty list"));
                }
                if let Some(d) = m.dims.iter().find(|d| **d == 0 || **d > 1_000) {
                    return Err(invalid("mean.dims", d, "dimensions in [1, 1000]"));
                }
            }
            Experiment::SgdSim | Experiment::TauSweep => {
                let s = &self.sgd;
                finite_vector("sgd.theta_star", &s.theta_star)?;
                at_least("sgd.horizon", s.horizon, 1, "at least 1")?;
                at_least("sgd.batch", s.batch, 2, "a batch size of at least 2")?;
                positive("sgd.eta", s.eta)?;
                positive("sgd.noise_var", s.noise_var)?;
                at_least("sgd.target_pool", s.target_pool, 1, "at least 1")?;
                level("sgd.alpha", s.alpha)?;
                taus_within("sgd.taus", &s.taus, s.horizon)?;
            }
            Experiment::DpsgdAudit => {
                let a = &self.audit;
                if !(a.delta > 0.0 && a.delta < 1.0) {
                    return Err(invalid("audit.delta", a.delta, "a value in (0, 1)"));
                }
                level("audit.xi", a.xi)?;
                if a.epsilons.is_empty() && !a.nonprivate {
                    return Err(invalid("audit.epsilons", &a.epsilons, "a non-empty list"));
                }
                for e in &a.epsilons {
                    positive("audit.epsilons", *e)?;
                }
                finite_vector("audit.theta_star", &a.theta_star)?;
                finite_vector("audit.canary", &a.canary)?;
                if a.canary.len() != a.theta_star.len() {
                    return Err(invalid(
                        "audit.canary",
                        &a.canary,
                        "as many entries as audit.theta_star",
                    ));
                }
                at_least("audit.horizon", a.horizon, 1, "at least 1")?;
                at_least("audit.batch", a.batch, 2, "a batch size of at least 2")?;
                positive("audit.eta", a.eta)?;
                positive("audit.clip", a.clip)?;
                if a.reference == 0 {
                    return Err(invalid(
                        "audit.reference",
                        0,
                        "a reference-set size (missing)",
                    ));
                }
                at_least(
                    "audit.reference",
                    a.reference,
                    2,
                    "a reference-set size of at least 2",
                )?;
                taus_within("audit.taus", &a.taus, a.horizon)?;
            }
            _ => {}
        }
        Ok(())
    }
}

pub fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}
