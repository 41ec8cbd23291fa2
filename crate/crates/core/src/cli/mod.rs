//! Command-line front end: `gen`, `train`, `allocate`, `report`.

mod commands;
mod config;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Parser, Subcommand, ValueEnum};

use crate::error::Error;
use crate::iidn::Variant;

pub use commands::{
    cmd_allocate, cmd_gen, cmd_report, cmd_train, evaluate, model_path, render_csv, TrainMetrics, AB_REPORT, DECISIONS,
    DUAL, GROUND_TRUTH, MANIFEST, MONOTONE_USERS, MONOTONICITY, SUMMARY, SWEEP, TRAIN_METRICS,
};
pub use config::{AllocationSection, DatasetSection, Paths, RunConfig, Seeds, SimulatorSection, TrainSection};

/// Process exit codes.
pub mod exit {
    pub const OK: i32 = 0;
    pub const OTHER: i32 = 1;
    pub const USAGE: i32 = 2;
    pub const IO: i32 = 3;
    pub const INVARIANT: i32 = 4;
    pub const NON_FINITE: i32 = 5;
}

pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Contract(_) | Error::Config(_) => exit::USAGE,
        Error::Io { .. } | Error::Parse { .. } | Error::MissingArtifacts { .. } => exit::IO,
        Error::BudgetBreach(_) => exit::INVARIANT,
        Error::NonFinite(_) => exit::NON_FINITE,
        _ => exit::OTHER,
    }
}

/// A trainable model: an IIDN variant or the logistic-regression baseline.
#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModelChoice {
    Iidn,
    SingleLstm,
    NonAttention,
    NonAuxiliary,
    LrBaseline,
    /// Every model above, in order.
    All,
}

impl ModelChoice {
    const SINGLE: [ModelChoice; 5] = [
        ModelChoice::Iidn,
        ModelChoice::SingleLstm,
        ModelChoice::NonAttention,
        ModelChoice::NonAuxiliary,
        ModelChoice::LrBaseline,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ModelChoice::LrBaseline => "lr-baseline",
            ModelChoice::All => "all",
            other => other.variant().expect("iidn variant").name(),
        }
    }

    pub fn variant(self) -> Option<Variant> {
        match self {
            ModelChoice::Iidn => Some(Variant::Iidn),
            ModelChoice::SingleLstm => Some(Variant::SingleLstm),
            ModelChoice::NonAttention => Some(Variant::NonAttention),
            ModelChoice::NonAuxiliary => Some(Variant::NonAuxiliary),
            _ => None,
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::SINGLE
            .into_iter()
            .chain([ModelChoice::All])
            .find(|c| c.name() == name)
    }

    pub fn single_names() -> Vec<&'static str> {
        Self::SINGLE.iter().map(|c| c.name()).collect()
    }

    fn order(self) -> usize {
        Self::SINGLE.iter().position(|&c| c == self).unwrap_or(usize::MAX)
    }

    fn expand(self) -> Vec<ModelChoice> {
        match self {
            ModelChoice::All => Self::SINGLE.to_vec(),
            c => vec![c],
        }
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "coupon-alloc",
    version,
    about = "Intent-aware coupon allocation under a budget"
)]
pub struct Cli {
    /// TOML run config; flags override its values.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,

    /// Reports directory.
    #[arg(long, global = true)]
    pub reports: Option<PathBuf>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a labeled dataset, its ground-truth table and a manifest.
    Gen {
        #[arg(long)]
        samples: Option<usize>,
        /// Population seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Dataset output path.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Train one model variant (or all of them) and report validation metrics.
    Train {
        #[arg(long, value_enum, default_value = "iidn")]
        variant: ModelChoice,
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long)]
        batch_size: Option<usize>,
        #[arg(long)]
        lr: Option<f64>,
        #[arg(long)]
        dataset: Option<PathBuf>,
        #[arg(long)]
        models: Option<PathBuf>,
    },
    /// Estimate the budget price, run the A/B comparison and optional sweep.
    Allocate {
        /// Per-arm budget in currency units.
        #[arg(long)]
        budget: Option<f64>,
        #[arg(long)]
        gamma: Option<f64>,
        /// Stream users across all arms.
        #[arg(long)]
        users: Option<usize>,
        /// Comma-separated sweep budgets in currency units.
        #[arg(long, value_delimiter = ',')]
        sweep: Option<Vec<f64>>,
        /// Scoring variant; the model is read from the models directory.
        #[arg(long, value_enum)]
        variant: Option<ModelChoice>,
        /// Explicit model file, overriding the variant lookup.
        #[arg(long)]
        model: Option<PathBuf>,
        #[arg(long)]
        models: Option<PathBuf>,
    },
    /// Render the tables of a finished run.
    Report {
        /// Directory with run artifacts (defaults to the reports directory).
        #[arg(long)]
        dir: Option<PathBuf>,
    },
}

fn execute(cli: Cli) -> crate::Result<String> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(r) = cli.reports {
        cfg.paths.reports = r;
    }
    match cli.command {
        Command::Gen { samples, seed, out } => {
            if let Some(n) = samples {
                cfg.dataset.samples = n;
            }
            if let Some(s) = seed {
                cfg.seeds.population = s;
            }
            if let Some(o) = out {
                cfg.paths.dataset = o;
            }
            cmd_gen(&cfg)
        }
        Command::Train {
            variant,
            epochs,
            batch_size,
            lr,
            dataset,
            models,
        } => {
            if let Some(e) = epochs {
                cfg.train.epochs = e;
            }
            if let Some(b) = batch_size {
                cfg.train.batch_size = b;
            }
            if let Some(lr) = lr {
                cfg.adam.learning_rate = lr;
            }
            if let Some(d) = dataset {
                cfg.paths.dataset = d;
            }
            if let Some(m) = models {
                cfg.paths.models = m;
            }
            cmd_train(&cfg, &variant.expand())
        }
        Command::Allocate {
            budget,
            gamma,
            users,
            sweep,
            variant,
            model,
            models,
        } => {
            if let Some(b) = budget {
                cfg.allocation.budget = b;
            }
            if let Some(g) = gamma {
                cfg.allocation.gamma = g;
            }
            if let Some(u) = users {
                cfg.allocation.users = u;
            }
            if let Some(s) = sweep {
                cfg.allocation.sweep = s;
            }
            if let Some(v) = variant {
                if v == ModelChoice::All {
                    return Err(Error::config("allocation scores with a single model, not `all`"));
                }
                cfg.allocation.variant = v.name().into();
            }
            if let Some(m) = models {
                cfg.paths.models = m;
            }
            cmd_allocate(&cfg, model.as_deref())
        }
        Command::Report { dir } => cmd_report(&dir.unwrap_or(cfg.paths.reports)),
    }
}

/// Parses `args`, runs the command and returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { exit::USAGE } else { exit::OK };
        }
    };
    match execute(cli) {
        Ok(out) => {
            print!("{out}");
            exit::OK
        }
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}
