//! `semi`: runs the membership-inference experiments and writes their
//! tables under `<out>/<experiment>/<label>/`.

mod config;
mod experiments;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use config::{Config, ConfigError};

#[derive(Debug, Parser)]
#[command(
    name = "semi",
    version,
    about = "Sequential membership-inference experiments"
)]
struct Cli {
    #[command(subcommand)]
    experiment: Experiment,

    /// TOML configuration; missing keys take their defaults.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Monte-Carlo rounds per grid point.
    #[arg(long, global = true)]
    rounds: Option<u64>,

    #[arg(long, global = true, default_value = "results")]
    out: PathBuf,

    /// Worker threads; results do not depend on this.
    #[arg(long, global = true)]
    threads: Option<usize>,

    /// Output sub-directory name (default `seed-<seed>`).
    #[arg(long, global = true)]
    label: Option<String>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Subcommand)]
pub enum Experiment {
    /// Power vs T and vs m* for the running-mean tests.
    MeanPower,
    /// ROC curves at a fixed insertion time.
    Roc,
    /// ROC curves with the insertion time drawn uniformly.
    UniformTau,
    /// Level and power of the known-τ test across dimensions.
    Multivariate,
    /// SGD on linear regression: the gradient test against loss baselines.
    SgdSim,
    /// ε lower bounds for DP-SGD over an ε × τ grid.
    DpsgdAudit,
    /// Log-LR as a function of the number of observed updates.
    LrTrace,
    /// SGD attack performance per insertion time.
    TauSweep,
}

impl Experiment {
    #[cfg(test)]
    pub const ALL: [Experiment; 8] = [
        Experiment::MeanPower,
        Experiment::Roc,
        Experiment::UniformTau,
        Experiment::Multivariate,
        Experiment::SgdSim,
        Experiment::DpsgdAudit,
        Experiment::LrTrace,
        Experiment::TauSweep,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Experiment::MeanPower => "mean-power",
            Experiment::Roc => "roc",
            Experiment::UniformTau => "uniform-tau",
            Experiment::Multivariate => "multivariate",
            Experiment::SgdSim => "sgd-sim",
            Experiment::DpsgdAudit => "dpsgd-audit",
            Experiment::LrTrace => "lr-trace",
            Experiment::TauSweep => "tau-sweep",
        }
    }
}

fn resolve(cli: &Cli) -> Result<Config, ConfigError> {
    let mut cfg = match &cli.config {
        Some(path) => Config::load(path)?,
        None => Config::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.run.seed = seed;
    }
    if let Some(rounds) = cli.rounds {
        cfg.run.rounds = rounds;
    }
    if let Some(label) = &cli.label {
        cfg.run.label = Some(label.clone());
    }
    cfg.validate(cli.experiment)?;
    Ok(cfg)
}

fn run(cli: &Cli) -> anyhow::Result<PathBuf> {
    let cfg = resolve(cli)?;
    if let Some(k) = cli.threads {
        if k == 0 {
            return Err(ConfigError::Invalid {
                field: "--threads",
                value: "0".into(),
                expected: "at least 1",
            }
            .into());
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(k)
            .build_global()?;
    }
    let artifacts = experiments::run(cli.experiment, &cfg)?;
    output::write(&cli.out, cli.experiment, &cfg, &artifacts)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(dir) => {
            println!("{}", dir.display());
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.downcast_ref::<ConfigError>().is_some() {
                ExitCode::from(2)
            } else if e.downcast_ref::<semi_core::Error>().is_some() {
                ExitCode::from(3)
            } else {
                ExitCode::FAILURE
            }
        }
    }
}
