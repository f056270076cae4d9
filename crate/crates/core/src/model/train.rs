use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use super::adamw::{adamw_step, AdamState, AdamWConfig};
use super::checkpoint::Checkpoint;
use super::encoder::{encode_text, EncoderConfig, SparseVector};
use super::params::{ModelDims, ModelParams};
use crate::corpus::{fraction_splits, LabeledDataset};
use crate::error::{Error, Result};
use crate::eval::evaluate_three_tasks;
use crate::schema::ReportLabels;
use crate::text::NormalizerConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub weight_decay: f64,
    pub batch_size: usize,
    pub epochs: usize,
    /// Validation runs every this many optimizer steps, plus once before
    /// the first step and once after the last.
    pub eval_interval: usize,
    pub seed: u64,
    /// Width of the shared rectified layer.
    pub hidden: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        let adam = AdamWConfig::default();
        TrainConfig {
            learning_rate: adam.learning_rate,
            beta1: adam.beta1,
            beta2: adam.beta2,
            epsilon: adam.epsilon,
            weight_decay: adam.weight_decay,
            batch_size: 8,
            epochs: 3,
            eval_interval: 200,
            seed: 0,
            hidden: 64,
        }
    }
}

impl TrainConfig {
    pub fn optimizer(&self) -> AdamWConfig {
        AdamWConfig {
            learning_rate: self.learning_rate,
            beta1: self.beta1,
            beta2: self.beta2,
            epsilon: self.epsilon,
            weight_decay: self.weight_decay,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.optimizer().validate()?;
        if self.batch_size == 0 || self.eval_interval == 0 || self.hidden == 0 {
            return Err(Error::Config("batch_size, eval_interval and hidden must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Fraction {
    Quarter,
    Half,
    ThreeQuarters,
    Full,
}

impl Fraction {
    pub const ALL: [Fraction; 4] = [Fraction::Quarter, Fraction::Half, Fraction::ThreeQuarters, Fraction::Full];

    pub fn percent(self) -> u32 {
        (self.quarters() as u32) * 25
    }

    pub fn quarters(self) -> usize {
        match self {
            Fraction::Quarter => 1,
            Fraction::Half => 2,
            Fraction::ThreeQuarters => 3,
            Fraction::Full => 4,
        }
    }

    pub fn from_percent(percent: u32) -> Result<Fraction> {
        Fraction::ALL
            .into_iter()
            .find(|f| f.percent() == percent)
            .ok_or_else(|| Error::Config(format!("fraction must be 25, 50, 75 or 100, got {percent}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Regime {
    Supervised(Fraction),
    WeaklySupervised,
    Hybrid(Fraction),
}

impl fmt::Display for Regime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Regime::Supervised(fr) => write!(f, "supervised-{}", fr.percent()),
            Regime::WeaklySupervised => f.write_str("weak"),
            Regime::Hybrid(fr) => write!(f, "hybrid-{}", fr.percent()),
        }
    }
}

impl FromStr for Regime {
    type Err = Error;

    fn from_str(s: &str) -> Result<Regime> {
        if s == "weak" {
            return Ok(Regime::WeaklySupervised);
        }
        let parse = |rest: &str| {
            rest.parse::<u32>()
                .map_err(|_| Error::Config(format!("invalid regime `{s}`")))
                .and_then(Fraction::from_percent)
        };
        if let Some(rest) = s.strip_prefix("supervised-") {
            Ok(Regime::Supervised(parse(rest)?))
        } else if let Some(rest) = s.strip_prefix("hybrid-") {
            Ok(Regime::Hybrid(parse(rest)?))
        } else {
            Err(Error::Config(format!("invalid regime `{s}`")))
        }
    }
}

impl Serialize for Regime {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Regime {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        String::deserialize(deserializer)?
            .parse()
            .map_err(serde::de::Error::custom)
    }
}

/// Train and validation reports of one label source.
#[derive(Debug, Clone, Copy)]
pub struct DataSplit<'a> {
    pub train: &'a LabeledDataset,
    pub validation: &'a LabeledDataset,
}

#[derive(Debug, Clone, Copy, Default)]
pub struct TrainingData<'a> {
    /// Rule-labeled reports.
    pub weak: Option<DataSplit<'a>>,
    /// Manually labeled reports.
    pub manual: Option<DataSplit<'a>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRecord {
    pub regime: Regime,
    pub step: u64,
    pub metric: f64,
    /// Mean batch loss since the previous record; absent before any step.
    pub train_loss: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub checkpoint: Checkpoint,
    pub history: Vec<EvalRecord>,
    pub train_size: usize,
    pub validation_size: usize,
}

pub(crate) type Example = (SparseVector, ReportLabels);

/// Encodes labeled reports in dataset order.
pub fn encode_dataset(data: &LabeledDataset, encoder: &EncoderConfig, normalizer: &NormalizerConfig) -> Result<Vec<Example>> {
    let labels = data.labels()?;
    Ok(data
        .reports()
        .par_iter()
        .zip(labels)
        .map(|(r, l)| (encode_text(&r.text, encoder, normalizer), l))
        .collect())
}

/// Mean of the three task-level mean F1 scores of `params` on `examples`.
pub fn selection_metric(params: &ModelParams, examples: &[Example]) -> Result<f64> {
    let predictions = examples
        .par_iter()
        .map(|(x, _)| params.forward(x).map(|d| d.labels()))
        .collect::<Result<Vec<_>>>()?;
    let references: Vec<ReportLabels> = examples.iter().map(|(_, y)| *y).collect();
    Ok(evaluate_three_tasks(&predictions, &references)?.overall())
}

struct Fitted {
    params: ModelParams,
    step: u64,
    metric: f64,
}

/// Runs AdamW from `init` and keeps the parameters with the best
/// validation metric (the earliest on ties).
fn fit(
    init: ModelParams,
    train: &[Example],
    validation: &[Example],
    config: &TrainConfig,
    regime: Regime,
    history: &mut Vec<EvalRecord>,
) -> Result<Fitted> {
    if train.is_empty() {
        return Err(Error::Dataset(format!("{regime}: empty training split")));
    }
    if validation.is_empty() {
        return Err(Error::Dataset(format!("{regime}: empty validation split")));
    }
    let optimizer = config.optimizer();
    let mut params = init;
    let mut grad = ModelParams::zeros(params.dims());
    let mut state = AdamState::new(params.dims().len());
    let mut step = 0u64;
    let (mut loss_sum, mut loss_n) = (0.0, 0usize);

    let mut record = |params: &ModelParams, step: u64, loss_sum: &mut f64, loss_n: &mut usize| -> Result<f64> {
        let metric = selection_metric(params, validation)?;
        history.push(EvalRecord {
            regime,
            step,
            metric,
            train_loss: (*loss_n > 0).then(|| *loss_sum / *loss_n as f64),
        });
        (*loss_sum, *loss_n) = (0.0, 0);
        Ok(metric)
    };

    let mut best = Fitted {
        metric: record(&params, 0, &mut loss_sum, &mut loss_n)?,
        params: params.clone(),
        step: 0,
    };
    let mut order: Vec<usize> = (0..train.len()).collect();
    for epoch in 0..config.epochs {
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        rng.set_stream(epoch as u64);
        order.sort_unstable();
        order.shuffle(&mut rng);
        for chunk in order.chunks(config.batch_size) {
            let batch: Vec<(&SparseVector, &ReportLabels)> = chunk.iter().map(|&i| (&train[i].0, &train[i].1)).collect();
            loss_sum += params.accumulate_grad(&batch, &mut grad)?;
            loss_n += 1;
            adamw_step(params.as_mut_slice(), grad.as_slice(), &mut state, &optimizer)?;
            ModelParams::zero_grad_rows(&mut grad, &batch);
            step += 1;
            if step.is_multiple_of(config.eval_interval as u64) {
                let metric = record(&params, step, &mut loss_sum, &mut loss_n)?;
                if metric > best.metric {
                    best = Fitted {
                        params: params.clone(),
                        step,
                        metric,
                    };
                }
            }
        }
    }
    if !step.is_multiple_of(config.eval_interval as u64) {
        let metric = record(&params, step, &mut loss_sum, &mut loss_n)?;
        if metric > best.metric {
            best = Fitted { params, step, metric };
        }
    }
    Ok(best)
}

fn require<'a>(split: Option<DataSplit<'a>>, what: &str, regime: Regime) -> Result<DataSplit<'a>> {
    split.ok_or_else(|| Error::Dataset(format!("{regime} training needs a {what} dataset")))
}

fn fraction_examples(
    split: DataSplit<'_>,
    fraction: Fraction,
    seed: u64,
    encoder: &EncoderConfig,
    normalizer: &NormalizerConfig,
) -> Result<(Vec<Example>, Vec<Example>)> {
    let splits = fraction_splits(&split.train.ids(), &split.validation.ids(), seed)?;
    let chosen = &splits[fraction.quarters() - 1];
    let train = split.train.subset(&chosen.train_ids)?;
    let validation = split.validation.subset(&chosen.validation_ids)?;
    Ok((
        encode_dataset(&train, encoder, normalizer)?,
        encode_dataset(&validation, encoder, normalizer)?,
    ))
}

fn finish(
    fitted: Fitted,
    regime: Regime,
    encoder: &EncoderConfig,
    normalizer: &NormalizerConfig,
    config: &TrainConfig,
) -> Checkpoint {
    Checkpoint {
        encoder: encoder.clone(),
        normalizer: normalizer.clone(),
        train: config.clone(),
        regime,
        step: fitted.step,
        metric: fitted.metric,
        params: fitted.params,
    }
}

fn validate_all(encoder: &EncoderConfig, normalizer: &NormalizerConfig, config: &TrainConfig) -> Result<()> {
    encoder.validate()?;
    normalizer.validate()?;
    config.validate()
}

/// Trains under `regime` and returns the best validation checkpoint.
///
/// Supervised and hybrid runs use the requested fraction of the manual
/// train and validation lists; hybrid first trains weakly supervised and
/// fine-tunes its best checkpoint.
pub fn train(
    regime: Regime,
    data: TrainingData<'_>,
    encoder: &EncoderConfig,
    normalizer: &NormalizerConfig,
    config: &TrainConfig,
) -> Result<TrainOutcome> {
    validate_all(encoder, normalizer, config)?;
    let dims = ModelDims {
        input: encoder.dim,
        hidden: config.hidden,
    };
    let init = ModelParams::init(dims, config.seed);
    let mut history = Vec::new();
    let (fitted, train_size, validation_size) = match regime {
        Regime::WeaklySupervised => {
            let weak = require(data.weak, "weak", regime)?;
            let train = encode_dataset(weak.train, encoder, normalizer)?;
            let val = encode_dataset(weak.validation, encoder, normalizer)?;
            (fit(init, &train, &val, config, regime, &mut history)?, train.len(), val.len())
        }
        Regime::Supervised(fraction) => {
            let manual = require(data.manual, "manual", regime)?;
            let (train, val) = fraction_examples(manual, fraction, config.seed, encoder, normalizer)?;
            (fit(init, &train, &val, config, regime, &mut history)?, train.len(), val.len())
        }
        Regime::Hybrid(fraction) => {
            let weak = require(data.weak, "weak", regime)?;
            let manual = require(data.manual, "manual", regime)?;
            let weak_train = encode_dataset(weak.train, encoder, normalizer)?;
            let weak_val = encode_dataset(weak.validation, encoder, normalizer)?;
            let pre = fit(init, &weak_train, &weak_val, config, Regime::WeaklySupervised, &mut history)?;
            let (train, val) = fraction_examples(manual, fraction, config.seed, encoder, normalizer)?;
            (fit(pre.params, &train, &val, config, regime, &mut history)?, train.len(), val.len())
        }
    };
    Ok(TrainOutcome {
        checkpoint: finish(fitted, regime, encoder, normalizer, config),
        history,
        train_size,
        validation_size,
    })
}

/// Fine-tunes an existing (weakly supervised) checkpoint on manual data,
/// i.e. the second phase of the hybrid regime.
pub fn fine_tune(init: &Checkpoint, manual: DataSplit<'_>, fraction: Fraction, config: &TrainConfig) -> Result<TrainOutcome> {
    validate_all(&init.encoder, &init.normalizer, config)?;
    if init.params.dims().hidden != config.hidden {
        return Err(Error::Config("fine-tuning cannot change the hidden width".into()));
    }
    let regime = Regime::Hybrid(fraction);
    let (train, val) = fraction_examples(manual, fraction, config.seed, &init.encoder, &init.normalizer)?;
    let mut history = Vec::new();
    let fitted = fit(init.params.clone(), &train, &val, config, regime, &mut history)?;
    Ok(TrainOutcome {
        checkpoint: finish(fitted, regime, &init.encoder, &init.normalizer, config),
        history,
        train_size: train.len(),
        validation_size: val.len(),
    })
}
