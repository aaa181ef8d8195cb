//! Glue from a split plan to trained and evaluated models.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::encoders::{EncoderBundle, FeatureMask};
use crate::error::{Error, Result};
use crate::ingest::Report;
use crate::model::{
    evaluate, knowledge_dataset, nlp_dataset, train, ClassMap, Cnn, CnnConfig, Dataset, InputMode,
    Metrics, TrainConfig, TrainOutcome,
};
use crate::nlp::NlpPipeline;
use crate::split::{Assignment, Split};

/// Network shape shared by both input modes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelSettings {
    /// Calls (knowledge) or tokens (nlp) per sample.
    pub seq_len: usize,
    pub widths: Vec<usize>,
    pub channels: usize,
    pub conv_dropout: f64,
    pub hidden: Vec<usize>,
    pub head_dropout: f64,
    /// Token embedding width in nlp mode.
    pub embed_dim: usize,
}

impl Default for ModelSettings {
    fn default() -> Self {
        ModelSettings {
            seq_len: 1024,
            widths: vec![2, 3, 4, 5],
            channels: 128,
            conv_dropout: 0.3,
            hidden: vec![128, 64],
            head_dropout: 0.2,
            embed_dim: 96,
        }
    }
}

impl ModelSettings {
    pub fn cnn_config(&self, input: InputMode, classes: usize, seed: u64) -> CnnConfig {
        CnnConfig {
            input,
            seq_len: self.seq_len,
            widths: self.widths.clone(),
            channels: self.channels,
            conv_dropout: self.conv_dropout,
            hidden: self.hidden.clone(),
            head_dropout: self.head_dropout,
            classes,
            seed,
        }
    }
}

/// Kept reports of each split, in plan order.
#[derive(Debug, Clone)]
pub struct Partitions {
    pub train: Vec<Report>,
    pub val: Vec<Report>,
    pub test: Vec<Report>,
}

impl Partitions {
    pub fn get(&self, split: Split) -> &[Report] {
        match split {
            Split::Train => &self.train,
            Split::Val => &self.val,
            Split::Test => &self.test,
        }
    }
}

/// Takes the assignments of a split plan or a split manifest read back from disk.
pub fn partition(reports: &[Report], assignments: &[Assignment]) -> Result<Partitions> {
    let by_id: HashMap<&str, &Report> = reports.iter().map(|r| (r.sample_id.as_str(), r)).collect();
    let pick = |s: Split| -> Result<Vec<Report>> {
        assignments
            .iter()
            .filter(|a| a.kept && a.split == s)
            .map(|a| {
                let id = a.sample_id.as_str();
                by_id.get(id).map(|r| (*r).clone()).ok_or_else(|| {
                    Error::schema(id, "split assigns a sample the corpus does not contain")
                })
            })
            .collect()
    };
    Ok(Partitions {
        train: pick(Split::Train)?,
        val: pick(Split::Val)?,
        test: pick(Split::Test)?,
    })
}

/// Classes are all kept labels, so held-out test families get an index too.
pub fn class_map(assignments: &[Assignment]) -> ClassMap {
    ClassMap::from_labels(
        assignments
            .iter()
            .filter(|a| a.kept)
            .map(|a| a.family.as_str()),
    )
}

pub struct Encoded {
    pub train: Dataset,
    pub val: Dataset,
    pub test: Dataset,
}

pub fn encode_knowledge(
    bundle: &EncoderBundle,
    parts: &Partitions,
    mask: FeatureMask,
    seq_len: usize,
    classes: &ClassMap,
) -> Result<Encoded> {
    let d = |r: &[Report]| knowledge_dataset(bundle, r, mask, seq_len, classes);
    Ok(Encoded {
        train: d(&parts.train)?,
        val: d(&parts.val)?,
        test: d(&parts.test)?,
    })
}

pub fn encode_nlp(
    pipeline: &NlpPipeline,
    parts: &Partitions,
    classes: &ClassMap,
) -> Result<Encoded> {
    let d = |r: &[Report]| nlp_dataset(pipeline, r, classes);
    Ok(Encoded {
        train: d(&parts.train)?,
        val: d(&parts.val)?,
        test: d(&parts.test)?,
    })
}

/// Trains on `train` with best-of-`val` selection and scores on `test`.
pub fn fit_and_score(
    config: CnnConfig,
    data: &Encoded,
    train_cfg: &TrainConfig,
) -> Result<(TrainOutcome, Metrics)> {
    let outcome = train(Cnn::new(config)?, &data.train, Some(&data.val), train_cfg)?;
    let metrics = evaluate(&outcome.model, &data.test)?;
    Ok((outcome, metrics))
}
