//! Multi-head report classifier: hashed n-gram encoder, one shared ReLU
//! layer and a softmax head per finding, trained with AdamW.

mod adamw;
mod checkpoint;
mod encoder;
mod params;
mod train;

use std::path::Path;

use rayon::prelude::*;

pub use adamw::{adamw_step, AdamState, AdamWConfig};
pub use checkpoint::{Checkpoint, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use encoder::{encode, encode_text, feature_hash, fnv1a64, EncoderConfig, SparseVector, CHAR_KEY_PREFIX};
pub use params::{head_offset, Distributions, Gradient, ModelDims, ModelParams, HEAD_ROWS};
pub use train::{
    encode_dataset, fine_tune, selection_metric, train, DataSplit, EvalRecord, Fraction, Regime, TrainConfig,
    TrainOutcome, TrainingData,
};

use crate::corpus::LabeledDataset;
use crate::error::Result;
use crate::schema::{Report, ReportLabels, Source, NUM_FINDINGS};

/// Inference wrapper around a checkpoint.
#[derive(Debug, Clone)]
pub struct ModelLabeler {
    checkpoint: Checkpoint,
}

impl ModelLabeler {
    pub fn new(checkpoint: Checkpoint) -> ModelLabeler {
        ModelLabeler { checkpoint }
    }

    pub fn load(path: &Path) -> Result<ModelLabeler> {
        Checkpoint::load(path).map(ModelLabeler::new)
    }

    pub fn checkpoint(&self) -> &Checkpoint {
        &self.checkpoint
    }

    pub fn distributions(&self, text: &str) -> Result<Distributions> {
        let ck = &self.checkpoint;
        ck.params.forward(&encode_text(text, &ck.encoder, &ck.normalizer))
    }

    /// Most probable class per head, lowest class index on ties.
    pub fn predict(&self, text: &str) -> Result<ReportLabels> {
        Ok(self.distributions(text)?.labels())
    }

    /// Labels every report, returning model-sourced reports together with
    /// per-finding presence scores in dataset order.
    pub fn label_dataset(&self, data: &LabeledDataset) -> Result<(LabeledDataset, Vec<[f64; NUM_FINDINGS]>)> {
        let out = data
            .reports()
            .par_iter()
            .map(|r| {
                let d = self.distributions(&r.text)?;
                let report = Report {
                    id: r.id.clone(),
                    text: r.text.clone(),
                    labels: Some(d.labels()),
                    source: Source::Model,
                };
                Ok((report, d.presence()))
            })
            .collect::<Result<Vec<_>>>()?;
        let (reports, scores): (Vec<_>, Vec<_>) = out.into_iter().unzip();
        Ok((LabeledDataset::new(reports)?, scores))
    }
}
