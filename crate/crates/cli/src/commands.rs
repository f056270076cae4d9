use std::collections::{BTreeMap, HashMap};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use labeler_core::corpus::{
    generate, read_dataset, train_validation_split, write_dataset, GeneratorConfig, LabeledDataset, TemplateBank,
};
use labeler_core::eval::{align, binarize_presence, compare, evaluate, BootstrapConfig, EvalOptions, MetricReport};
use labeler_core::model::{
    train, Checkpoint, DataSplit, EncoderConfig, EvalRecord, Fraction, ModelLabeler, Regime, TrainConfig,
    TrainingData,
};
use labeler_core::rules::{Lexicon, RuleLabeler};
use labeler_core::schema::{Finding, NUM_FINDINGS};
use labeler_core::text::NormalizerConfig;
use labeler_core::Error;
use serde::{Deserialize, Serialize};

use crate::{
    CliError, Command, CompareArgs, EvaluateArgs, GenerateArgs, LabelModelArgs, LabelRulesArgs, LabelerArg, RegimeArg,
    TrainArgs,
};

/// Version of the JSON summaries printed on stdout.
pub const OUTPUT_VERSION: u32 = 1;

type CliResult<T> = Result<T, CliError>;

pub(crate) fn execute(command: Command, stdout: &mut dyn Write, stderr: &mut dyn Write) -> CliResult<()> {
    match command {
        Command::Generate(args) => cmd_generate(args, stdout),
        Command::LabelRules(args) => cmd_label_rules(args, stdout),
        Command::LabelModel(args) => cmd_label_model(args, stdout),
        Command::Train(args) => cmd_train(args, stdout, stderr),
        Command::Evaluate(args) => cmd_evaluate(args, stdout, stderr),
        Command::Compare(args) => cmd_compare(args, stdout, stderr),
    }
}

fn emit(stdout: &mut dyn Write, value: &impl Serialize) -> CliResult<()> {
    let text = serde_json::to_string_pretty(value)?;
    writeln!(stdout, "{text}").map_err(|e| CliError::Data(Error::io(Path::new("<stdout>"), e)))
}

fn note(stderr: &mut dyn Write, text: &str) {
    let _ = stderr.write_all(text.as_bytes());
}

#[derive(Serialize)]
struct FileSummary<'a> {
    version: u32,
    command: &'a str,
    reports: usize,
    out: &'a Path,
}

fn file_summary(stdout: &mut dyn Write, command: &str, reports: usize, out: &Path) -> CliResult<()> {
    emit(
        stdout,
        &FileSummary {
            version: OUTPUT_VERSION,
            command,
            reports,
            out,
        },
    )
}

fn cmd_generate(args: GenerateArgs, stdout: &mut dyn Write) -> CliResult<()> {
    let mut config = match &args.config {
        Some(path) => GeneratorConfig::from_json_file(path)?,
        None => GeneratorConfig::default(),
    };
    if let Some(seed) = args.seed {
        config.seed = seed;
    }
    if let Some(rate) = args.mismatch_rate {
        config.mismatch_rate = rate;
    }
    let bank = match &args.templates {
        Some(path) => TemplateBank::from_json_file(path)?,
        None => TemplateBank::default_german(),
    };
    let count = usize::try_from(args.count).map_err(|_| CliError::Usage("count is too large".into()))?;
    let data = generate(&config, &bank, count)?;
    write_dataset(&data, &args.out)?;
    file_summary(stdout, "generate", data.len(), &args.out)
}

fn rule_labeler(lexicon: Option<&Path>) -> CliResult<RuleLabeler> {
    let lexicon = match lexicon {
        Some(path) => Lexicon::from_json_file(path)?,
        None => Lexicon::default_german(),
    };
    Ok(RuleLabeler::new(lexicon, NormalizerConfig::default()))
}

fn cmd_label_rules(args: LabelRulesArgs, stdout: &mut dyn Write) -> CliResult<()> {
    let labeler = rule_labeler(args.lexicon.as_deref())?;
    let input = read_dataset(&args.input)?;
    let labeled = labeler.label_dataset(&input)?;
    write_dataset(&labeled, &args.out)?;
    file_summary(stdout, "label-rules", labeled.len(), &args.out)
}

/// One line of a presence-score file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreRecord {
    pub id: String,
    pub scores: BTreeMap<Finding, f64>,
}

fn write_scores(path: &Path, data: &LabeledDataset, scores: &[[f64; NUM_FINDINGS]]) -> CliResult<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    for (report, row) in data.reports().iter().zip(scores) {
        let record = ScoreRecord {
            id: report.id.clone(),
            scores: Finding::ALL.iter().map(|&f| (f, row[f.index()])).collect(),
        };
        serde_json::to_writer(&mut out, &record)?;
        out.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    }
    out.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

/// Reads a score file and orders its rows like `references`.
fn read_scores(path: &Path, references: &LabeledDataset) -> CliResult<Vec<[f64; NUM_FINDINGS]>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut by_id = HashMap::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let parse = |message: String| Error::Parse {
            path: path.to_path_buf(),
            line: i + 1,
            message,
        };
        let record: ScoreRecord = serde_json::from_str(&line).map_err(|e| parse(e.to_string()))?;
        let mut row = [0.0; NUM_FINDINGS];
        for f in Finding::ALL {
            row[f.index()] = *record
                .scores
                .get(&f)
                .ok_or_else(|| parse(format!("missing score for {f}")))?;
        }
        by_id.insert(record.id, row);
    }
    references
        .reports()
        .iter()
        .map(|r| {
            by_id
                .get(&r.id)
                .copied()
                .ok_or_else(|| CliError::Data(Error::IdMismatch(format!("no scores for report `{}`", r.id))))
        })
        .collect()
}

fn cmd_label_model(args: LabelModelArgs, stdout: &mut dyn Write) -> CliResult<()> {
    let labeler = ModelLabeler::load(&args.checkpoint)?;
    let input = read_dataset(&args.input)?;
    let (labeled, scores) = labeler.label_dataset(&input)?;
    write_dataset(&labeled, &args.out)?;
    if let Some(path) = &args.scores {
        write_scores(path, &labeled, &scores)?;
    }
    file_summary(stdout, "label-model", labeled.len(), &args.out)
}

/// Contents of the `train --config` file. Every field is optional.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSettings {
    pub encoder: EncoderConfig,
    pub normalizer: NormalizerConfig,
    pub train: TrainConfig,
    /// Share of the manual reports held out for validation.
    pub manual_validation_fraction: f64,
    /// Share of the weak reports held out for validation.
    pub weak_validation_fraction: f64,
}

impl Default for TrainSettings {
    fn default() -> Self {
        TrainSettings {
            encoder: EncoderConfig::default(),
            normalizer: NormalizerConfig::default(),
            train: TrainConfig::default(),
            manual_validation_fraction: 0.2,
            weak_validation_fraction: 0.1,
        }
    }
}

impl TrainSettings {
    pub fn from_json_file(path: &Path) -> labeler_core::Result<TrainSettings> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainSummary {
    pub version: u32,
    pub regime: Regime,
    pub step: u64,
    pub metric: f64,
    pub train_reports: usize,
    pub validation_reports: usize,
    pub checkpoint: PathBuf,
    pub history: Vec<EvalRecord>,
}

struct Owned {
    train: LabeledDataset,
    validation: LabeledDataset,
}

impl Owned {
    fn split(&self) -> DataSplit<'_> {
        DataSplit {
            train: &self.train,
            validation: &self.validation,
        }
    }
}

fn load_split(path: &Path, validation_fraction: f64, seed: u64) -> CliResult<Owned> {
    let data = read_dataset(path)?;
    if !data.is_labeled() {
        return Err(CliError::Data(Error::Dataset(format!(
            "{} contains reports without labels",
            path.display()
        ))));
    }
    let (train_ids, validation_ids) = train_validation_split(&data.ids(), validation_fraction, seed)?;
    Ok(Owned {
        train: data.subset(&train_ids)?,
        validation: data.subset(&validation_ids)?,
    })
}

fn regime_of(args: &TrainArgs) -> CliResult<Regime> {
    let fraction = args
        .fraction
        .as_deref()
        .map(|f| Fraction::from_percent(f.parse().expect("clap restricts the values")))
        .transpose()?;
    let need = |flag: Option<&PathBuf>, name: &str| {
        flag.map(|_| ())
            .ok_or_else(|| CliError::Usage(format!("--regime {} requires --{name}", args.regime.name())))
    };
    match args.regime {
        RegimeArg::Weak => {
            need(args.weak.as_ref(), "weak")?;
            if fraction.is_some() {
                return Err(CliError::Usage("--fraction does not apply to --regime weak".into()));
            }
            Ok(Regime::WeaklySupervised)
        }
        RegimeArg::Supervised => {
            need(args.manual.as_ref(), "manual")?;
            Ok(Regime::Supervised(fraction.unwrap_or(Fraction::Full)))
        }
        RegimeArg::Hybrid => {
            need(args.weak.as_ref(), "weak")?;
            need(args.manual.as_ref(), "manual")?;
            Ok(Regime::Hybrid(fraction.unwrap_or(Fraction::Full)))
        }
    }
}

impl RegimeArg {
    fn name(self) -> &'static str {
        match self {
            RegimeArg::Supervised => "supervised",
            RegimeArg::Weak => "weak",
            RegimeArg::Hybrid => "hybrid",
        }
    }
}

fn cmd_train(args: TrainArgs, stdout: &mut dyn Write, stderr: &mut dyn Write) -> CliResult<()> {
    let regime = regime_of(&args)?;
    let mut settings = match &args.config {
        Some(path) => TrainSettings::from_json_file(path)?,
        None => TrainSettings::default(),
    };
    if let Some(seed) = args.seed {
        settings.train.seed = seed;
    }
    let seed = settings.train.seed;
    let weak = match (&args.weak, regime) {
        (Some(path), Regime::WeaklySupervised | Regime::Hybrid(_)) => {
            Some(load_split(path, settings.weak_validation_fraction, seed)?)
        }
        _ => None,
    };
    let manual = match (&args.manual, regime) {
        (Some(path), Regime::Supervised(_) | Regime::Hybrid(_)) => {
            Some(load_split(path, settings.manual_validation_fraction, seed)?)
        }
        _ => None,
    };
    let data = TrainingData {
        weak: weak.as_ref().map(Owned::split),
        manual: manual.as_ref().map(Owned::split),
    };
    let outcome = train(regime, data, &settings.encoder, &settings.normalizer, &settings.train)?;
    outcome.checkpoint.save(&args.out)?;
    for record in &outcome.history {
        let loss = record.train_loss.map_or("-".to_string(), |l| format!("{l:.4}"));
        note(
            stderr,
            &format!("{:<14} step {:>7}  metric {:.4}  loss {loss}\n", record.regime, record.step, record.metric),
        );
    }
    emit(
        stdout,
        &TrainSummary {
            version: OUTPUT_VERSION,
            regime,
            step: outcome.checkpoint.step,
            metric: outcome.checkpoint.metric,
            train_reports: outcome.train_size,
            validation_reports: outcome.validation_size,
            checkpoint: args.out,
            history: outcome.history,
        },
    )
}

fn bootstrap_config(resamples: Option<u64>, seed: u64) -> CliResult<Option<BootstrapConfig>> {
    resamples
        .map(|r| {
            Ok(BootstrapConfig {
                resamples: usize::try_from(r).map_err(|_| CliError::Usage("too many resamples".into()))?,
                seed,
                ..BootstrapConfig::default()
            })
        })
        .transpose()
}

fn require_labels(data: &LabeledDataset, path: &Path) -> CliResult<()> {
    if data.is_labeled() {
        Ok(())
    } else {
        Err(CliError::Data(Error::Dataset(format!(
            "{} contains reports without labels",
            path.display()
        ))))
    }
}

fn cmd_evaluate(args: EvaluateArgs, stdout: &mut dyn Write, stderr: &mut dyn Write) -> CliResult<()> {
    let predictions = read_dataset(&args.pred)?;
    let references = read_dataset(&args.reference)?;
    require_labels(&predictions, &args.pred)?;
    require_labels(&references, &args.reference)?;
    let (preds, refs, _) = align(&predictions, &references)?;
    let scores = args
        .scores
        .as_deref()
        .map(|path| read_scores(path, &references))
        .transpose()?;
    let options = EvalOptions {
        bootstrap: bootstrap_config(args.bootstrap, args.seed)?,
        scores: scores.as_deref(),
        roc: args.roc,
    };
    let report = evaluate(&preds, &refs, &options)?;
    note(stderr, &report.render_table());
    emit(stdout, &report)
}

fn run_labeler(
    labeler: LabelerArg,
    references: &LabeledDataset,
    rules: &RuleLabeler,
    model: Option<&ModelLabeler>,
    options: EvalOptions<'_>,
) -> CliResult<MetricReport> {
    let refs = references.labels()?;
    match labeler {
        LabelerArg::Rule => {
            let labeled = rules.label_dataset(references)?;
            let preds = labeled.labels()?;
            let scores: Vec<[f64; NUM_FINDINGS]> = preds
                .iter()
                .map(|l| std::array::from_fn(|i| f64::from(u8::from(binarize_presence(l.get(Finding::ALL[i]))))))
                .collect();
            Ok(evaluate(&preds, &refs, &EvalOptions {
                scores: Some(&scores),
                ..options
            })?)
        }
        LabelerArg::Model => {
            let model = model.ok_or_else(|| CliError::Internal("model labeler was not loaded".into()))?;
            let (labeled, scores) = model.label_dataset(references)?;
            Ok(evaluate(&labeled.labels()?, &refs, &EvalOptions {
                scores: Some(&scores),
                ..options
            })?)
        }
    }
}

fn cmd_compare(args: CompareArgs, stdout: &mut dyn Write, stderr: &mut dyn Write) -> CliResult<()> {
    let [first, second] = <[LabelerArg; 2]>::try_from(args.labelers.as_slice())
        .map_err(|_| CliError::Usage("--labelers takes exactly two names".into()))?;
    let model = if first == LabelerArg::Model || second == LabelerArg::Model {
        let path = args
            .checkpoint
            .as_deref()
            .ok_or_else(|| CliError::Usage("the model labeler requires --checkpoint".into()))?;
        if !path.exists() {
            return Err(CliError::Usage(format!("checkpoint {} does not exist", path.display())));
        }
        Some(ModelLabeler::new(Checkpoint::load(path)?))
    } else {
        None
    };
    let rules = rule_labeler(args.lexicon.as_deref())?;
    let references = read_dataset(&args.reference)?;
    require_labels(&references, &args.reference)?;
    let options = EvalOptions {
        bootstrap: bootstrap_config(args.bootstrap, args.seed)?,
        scores: None,
        roc: false,
    };
    let a = run_labeler(first, &references, &rules, model.as_ref(), options)?;
    let b = run_labeler(second, &references, &rules, model.as_ref(), options)?;
    let comparison = compare([first.name().to_string(), second.name().to_string()], [a, b]);
    note(stderr, &comparison.render_table());
    emit(stdout, &comparison)
}
