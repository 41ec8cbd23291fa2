//! The single run config file.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::{validate_paid_menu, ExperimentConfig, PolicyKind};
use crate::iidn::IidnConfig;
use crate::money::Cents;
use crate::nn::AdamConfig;
use crate::simulator::{ExposurePolicy, PopulationSpec, SessionSpec};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    pub dataset: PathBuf,
    pub models: PathBuf,
    pub reports: PathBuf,
}

impl Default for Paths {
    fn default() -> Self {
        Paths {
            dataset: "data/train.jsonl".into(),
            models: "models".into(),
            reports: "reports".into(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Seeds {
    /// Users, sessions and outcomes.
    pub population: u64,
    /// Weight initialization.
    pub model: u64,
    /// Minibatch shuffling.
    pub train: u64,
    /// Train/validation split.
    pub split: u64,
    /// Policy-side randomness in the A/B run.
    pub policy: u64,
}

impl Default for Seeds {
    fn default() -> Self {
        Seeds {
            population: 42,
            model: 1,
            train: 17,
            split: 7,
            policy: 11,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct SimulatorSection {
    pub population: PopulationSpec,
    pub session: SessionSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DatasetSection {
    pub samples: usize,
    /// Index of the first generated user.
    pub offset: u64,
    pub valid_fraction: f64,
    pub exposure: ExposurePolicy,
}

impl Default for DatasetSection {
    fn default() -> Self {
        DatasetSection {
            samples: 50_000,
            offset: 0,
            valid_fraction: 0.2,
            exposure: ExposurePolicy::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSection {
    pub epochs: usize,
    pub batch_size: usize,
    pub final_lr_scale: f64,
}

impl Default for TrainSection {
    fn default() -> Self {
        let t = crate::iidn::TrainOptions::default();
        TrainSection {
            epochs: t.epochs,
            batch_size: t.batch_size,
            final_lr_scale: t.final_lr_scale,
        }
    }
}

/// Money here is in currency units; it is rounded to cents on use.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AllocationSection {
    pub menu: Vec<f64>,
    /// Budget per A/B arm.
    pub budget: f64,
    pub gamma: f64,
    pub alpha_min: f64,
    /// Stream users across all arms.
    pub users: usize,
    pub offset: u64,
    pub dual_sample: usize,
    pub dual_offset: u64,
    /// Held-out users for the monotonicity check.
    pub monotonicity_users: usize,
    pub monotonicity_offset: u64,
    /// Budgets for the sweep; empty means no sweep.
    pub sweep: Vec<f64>,
    /// Model variant used for scoring.
    pub variant: String,
}

impl Default for AllocationSection {
    fn default() -> Self {
        AllocationSection {
            menu: vec![1.0, 2.0, 3.0, 5.0],
            budget: 20_000.0,
            gamma: 0.8,
            alpha_min: crate::eval::DEFAULT_ALPHA_MIN,
            users: 100_000,
            offset: 2_000_000,
            dual_sample: 5_000,
            dual_offset: 3_000_000,
            monotonicity_users: 1_000,
            monotonicity_offset: 4_000_000,
            sweep: Vec::new(),
            variant: "iidn".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub paths: Paths,
    pub seeds: Seeds,
    pub simulator: SimulatorSection,
    pub dataset: DatasetSection,
    pub model: IidnConfig,
    pub adam: AdamConfig,
    pub train: TrainSection,
    pub allocation: AllocationSection,
}

pub(crate) fn cents(units: f64, what: &str) -> Result<Cents> {
    if !units.is_finite() || units < 0.0 {
        return Err(Error::config(format!(
            "{what} = {units} must be a finite non-negative amount"
        )));
    }
    Ok(Cents::from_units(units))
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        toml::from_str(&text).map_err(|e| Error::parse("config", path, e))
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn menu(&self) -> Result<Vec<Cents>> {
        let menu = self
            .allocation
            .menu
            .iter()
            .map(|&u| cents(u, "menu amount"))
            .collect::<Result<Vec<_>>>()?;
        validate_paid_menu(&menu)?;
        Ok(menu)
    }

    pub fn sweep(&self) -> Result<Vec<Cents>> {
        self.allocation
            .sweep
            .iter()
            .map(|&u| cents(u, "sweep budget"))
            .collect()
    }

    pub fn experiment(&self) -> Result<ExperimentConfig> {
        let a = &self.allocation;
        let cfg = ExperimentConfig {
            users: a.users,
            offset: a.offset,
            dual_sample: a.dual_sample,
            dual_offset: a.dual_offset,
            menu: self.menu()?,
            budget: cents(a.budget, "budget")?,
            policies: vec![
                PolicyKind::NonAllocation,
                PolicyKind::AllAllocation,
                PolicyKind::Uplift { alpha_min: a.alpha_min },
                PolicyKind::IidnMckp { gamma: a.gamma },
            ],
            seed: self.seeds.policy,
        };
        cfg.validate()?;
        Ok(cfg)
    }
}
