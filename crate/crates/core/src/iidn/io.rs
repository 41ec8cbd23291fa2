//! Model files and JSONL datasets.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::baseline::{LrConfig, LrModel};
use super::config::IidnConfig;
use super::embedding::DwellBuckets;
use super::features::{BehaviorEvent, FeatureTuple, IntentScores, LabeledSample, MenuScore};
use super::model::IidnModel;
use super::{IntentModel, Trainable};
use crate::error::{Error, Result};
use crate::money::Cents;
use crate::nn::ParamStore;

pub const MODEL_SCHEMA: &str = "coupon-alloc/model";
pub const MODEL_VERSION: u32 = 1;
pub const SAMPLE_SCHEMA: &str = "coupon-alloc/sample/v1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModelKind {
    Iidn,
    Lr,
}

/// Either of the trainable intent models, as stored on disk.
#[derive(Debug, Clone)]
pub enum TrainedModel {
    Iidn(IidnModel),
    Lr(LrModel),
}

#[derive(Serialize, Deserialize)]
struct ModelFile {
    schema: String,
    version: u32,
    kind: ModelKind,
    config: serde_json::Value,
    dwell_edges: Vec<f64>,
    params: serde_json::Value,
}

impl TrainedModel {
    pub fn kind(&self) -> ModelKind {
        match self {
            TrainedModel::Iidn(_) => ModelKind::Iidn,
            TrainedModel::Lr(_) => ModelKind::Lr,
        }
    }

    /// Human-readable variant name (`iidn`, `single-lstm`, ..., `lr`).
    pub fn name(&self) -> &'static str {
        match self {
            TrainedModel::Iidn(m) => m.config().variant.name(),
            TrainedModel::Lr(_) => "lr",
        }
    }

    pub fn to_json_string(&self) -> String {
        let (config, edges, params) = match self {
            TrainedModel::Iidn(m) => (
                serde_json::to_value(m.config()).expect("config serializes"),
                m.buckets().edges().to_vec(),
                m.params().to_json_value(),
            ),
            TrainedModel::Lr(m) => (
                serde_json::to_value(m.config()).expect("config serializes"),
                m.buckets().edges().to_vec(),
                m.params().to_json_value(),
            ),
        };
        let file = ModelFile {
            schema: MODEL_SCHEMA.into(),
            version: MODEL_VERSION,
            kind: self.kind(),
            config,
            dwell_edges: edges,
            params,
        };
        serde_json::to_string(&file).expect("model file serializes")
    }

    pub fn from_json_str(text: &str, path: &Path) -> Result<Self> {
        let file: ModelFile = serde_json::from_str(text).map_err(|e| Error::parse("model file", path, e))?;
        if file.schema != MODEL_SCHEMA {
            return Err(Error::parse(
                "model file",
                path,
                format!("unknown schema `{}`", file.schema),
            ));
        }
        if file.version != MODEL_VERSION {
            return Err(Error::parse(
                "model file",
                path,
                format!("unsupported version {}", file.version),
            ));
        }
        let buckets = DwellBuckets::from_edges(file.dwell_edges)?;
        let params = ParamStore::from_json_value(file.params).map_err(|e| Error::parse("model file", path, e))?;
        match file.kind {
            ModelKind::Iidn => {
                let cfg: IidnConfig =
                    serde_json::from_value(file.config).map_err(|e| Error::parse("model file", path, e))?;
                Ok(TrainedModel::Iidn(IidnModel::from_parts(cfg, buckets, params)?))
            }
            ModelKind::Lr => {
                let cfg: LrConfig =
                    serde_json::from_value(file.config).map_err(|e| Error::parse("model file", path, e))?;
                Ok(TrainedModel::Lr(LrModel::from_parts(cfg, buckets, params)?))
            }
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json_string()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json_str(&text, path)
    }
}

impl IntentModel for TrainedModel {
    fn score(&self, x: &FeatureTuple) -> Result<IntentScores> {
        match self {
            TrainedModel::Iidn(m) => m.score(x),
            TrainedModel::Lr(m) => m.score(x),
        }
    }

    fn score_menu(&self, s: &[BehaviorEvent], h: &[u16], menu: &[Cents]) -> Result<Vec<MenuScore>> {
        match self {
            TrainedModel::Iidn(m) => m.score_menu(s, h, menu),
            TrainedModel::Lr(m) => m.score_menu(s, h, menu),
        }
    }
}

#[derive(Serialize)]
struct SampleOut<'a> {
    schema: &'static str,
    #[serde(flatten)]
    sample: &'a LabeledSample,
}

#[derive(Deserialize)]
struct SampleIn {
    schema: String,
    #[serde(flatten)]
    sample: LabeledSample,
}

/// One JSON object per line, each tagged with a `schema` field.
pub fn write_samples<W: Write>(w: W, samples: &[LabeledSample]) -> std::io::Result<()> {
    let mut w = BufWriter::new(w);
    for sample in samples {
        serde_json::to_writer(
            &mut w,
            &SampleOut {
                schema: SAMPLE_SCHEMA,
                sample,
            },
        )?;
        w.write_all(b"\n")?;
    }
    w.flush()
}

pub fn save_samples(path: &Path, samples: &[LabeledSample]) -> Result<()> {
    let f = File::create(path).map_err(|e| Error::io(path, e))?;
    write_samples(f, samples).map_err(|e| Error::io(path, e))
}

pub fn load_samples(path: &Path) -> Result<Vec<LabeledSample>> {
    let f = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (n, line) in BufReader::new(f).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: SampleIn =
            serde_json::from_str(&line).map_err(|e| Error::parse("dataset", path, format!("line {}: {e}", n + 1)))?;
        if rec.schema != SAMPLE_SCHEMA {
            return Err(Error::parse(
                "dataset",
                path,
                format!("line {}: unknown schema `{}`", n + 1, rec.schema),
            ));
        }
        rec.sample
            .validate()
            .map_err(|e| Error::parse("dataset", path, format!("line {}: {e}", n + 1)))?;
        out.push(rec.sample);
    }
    Ok(out)
}
