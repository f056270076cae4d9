use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;

use serde::de;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use super::auc::{auc, roc_points, RocPoint};
use super::bootstrap::{bootstrap_ci, BootstrapConfig};
use super::{binarize_presence, evaluate_three_tasks, ConfusionCounts, Task};
use crate::corpus::LabeledDataset;
use crate::error::{Error, Result};
use crate::schema::{Finding, ReportLabels, NUM_FINDINGS};

pub const METRIC_REPORT_VERSION: u32 = 1;

/// A metric cell: a value, "NA" when it cannot be computed, or "-" when
/// the metric does not apply.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Score {
    Value(f64),
    NotAvailable,
    NotApplicable,
}

impl Score {
    pub fn from_option(value: Option<f64>) -> Score {
        value.map_or(Score::NotAvailable, Score::Value)
    }

    pub fn value(self) -> Option<f64> {
        match self {
            Score::Value(v) => Some(v),
            _ => None,
        }
    }

    fn cell(self, precision: usize) -> String {
        match self {
            Score::Value(v) => format!("{v:.precision$}"),
            Score::NotAvailable => "NA".into(),
            Score::NotApplicable => "-".into(),
        }
    }
}

impl Serialize for Score {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            Score::Value(v) => serializer.serialize_f64(*v),
            Score::NotAvailable => serializer.serialize_str("NA"),
            Score::NotApplicable => serializer.serialize_str("-"),
        }
    }
}

impl<'de> Deserialize<'de> for Score {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Number(f64),
            Text(String),
        }
        match Raw::deserialize(deserializer)? {
            Raw::Number(v) => Ok(Score::Value(v)),
            Raw::Text(s) if s == "NA" => Ok(Score::NotAvailable),
            Raw::Text(s) if s == "-" => Ok(Score::NotApplicable),
            Raw::Text(s) => Err(de::Error::custom(format!("invalid score `{s}`"))),
        }
    }
}

/// Point estimate with an optional bootstrap interval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub value: Score,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lower: Option<Score>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub upper: Option<Score>,
}

impl Estimate {
    fn point(value: Score) -> Estimate {
        Estimate {
            value,
            lower: None,
            upper: None,
        }
    }

    fn cell(&self) -> String {
        match (self.lower, self.upper) {
            (Some(l), Some(u)) => format!("{} [{}, {}]", self.value.cell(2), l.cell(2), u.cell(2)),
            _ => self.value.cell(2),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FindingMetrics {
    pub finding: Finding,
    pub mention: Score,
    pub negation: Score,
    pub uncertainty: Score,
    pub counts: BTreeMap<Task, ConfusionCounts>,
    pub sensitivity: Estimate,
    pub specificity: Estimate,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub auc: Option<Estimate>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub roc: Option<Vec<RocPoint>>,
}

impl FindingMetrics {
    pub fn task(&self, task: Task) -> Score {
        match task {
            Task::Mention => self.mention,
            Task::Negation => self.negation,
            Task::Uncertainty => self.uncertainty,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TaskMeans {
    pub mention: Score,
    pub negation: Score,
    pub uncertainty: Score,
}

impl TaskMeans {
    pub fn task(&self, task: Task) -> Score {
        match task {
            Task::Mention => self.mention,
            Task::Negation => self.negation,
            Task::Uncertainty => self.uncertainty,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub version: u32,
    pub reports: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bootstrap: Option<BootstrapConfig>,
    pub findings: Vec<FindingMetrics>,
    pub means: TaskMeans,
}

#[derive(Debug, Clone, Copy, Default)]
pub struct EvalOptions<'a> {
    pub bootstrap: Option<BootstrapConfig>,
    /// Per-report presence scores in reference order, enabling AUC.
    pub scores: Option<&'a [[f64; NUM_FINDINGS]]>,
    pub roc: bool,
}

/// Pairs prediction and reference labels by id, in reference order.
/// Returns the prediction labels, the reference labels and, for each
/// reference, the index of its prediction.
pub fn align(
    predictions: &LabeledDataset,
    references: &LabeledDataset,
) -> Result<(Vec<ReportLabels>, Vec<ReportLabels>, Vec<usize>)> {
    let index: HashMap<&str, usize> = predictions
        .reports()
        .iter()
        .enumerate()
        .map(|(i, r)| (r.id.as_str(), i))
        .collect();
    if predictions.len() != references.len() {
        return Err(Error::IdMismatch(format!(
            "{} predictions for {} references",
            predictions.len(),
            references.len()
        )));
    }
    let mut order = Vec::with_capacity(references.len());
    for r in references.reports() {
        let i = index
            .get(r.id.as_str())
            .ok_or_else(|| Error::IdMismatch(format!("no prediction for report `{}`", r.id)))?;
        order.push(*i);
    }
    let pred_labels = predictions.labels()?;
    let preds = order.iter().map(|&i| pred_labels[i]).collect();
    Ok((preds, references.labels()?, order))
}

fn interval(n: usize, config: &BootstrapConfig, statistic: impl Fn(&[usize]) -> Option<f64> + Sync) -> (Option<Score>, Option<Score>) {
    match bootstrap_ci(n, statistic, config) {
        Ok(ci) => (Some(Score::Value(ci.lower)), Some(Score::Value(ci.upper))),
        Err(_) => (Some(Score::NotAvailable), Some(Score::NotAvailable)),
    }
}

fn presence_estimate(
    pairs: &[(bool, bool)],
    stat: fn(&ConfusionCounts) -> Option<f64>,
    bootstrap: Option<&BootstrapConfig>,
) -> Estimate {
    let value = Score::from_option(stat(&ConfusionCounts::from_pairs(pairs.iter().copied())));
    let mut estimate = Estimate::point(value);
    if let (Some(config), Score::Value(_)) = (bootstrap, value) {
        (estimate.lower, estimate.upper) = interval(pairs.len(), config, |idx| {
            stat(&ConfusionCounts::from_pairs(idx.iter().map(|&i| pairs[i])))
        });
    }
    estimate
}

fn auc_estimate(scores: &[f64], labels: &[bool], bootstrap: Option<&BootstrapConfig>) -> Estimate {
    let Ok(value) = auc(scores, labels) else {
        return Estimate::point(Score::NotAvailable);
    };
    let mut estimate = Estimate::point(Score::Value(value));
    if let Some(config) = bootstrap {
        (estimate.lower, estimate.upper) = interval(scores.len(), config, |idx| {
            let s: Vec<f64> = idx.iter().map(|&i| scores[i]).collect();
            let l: Vec<bool> = idx.iter().map(|&i| labels[i]).collect();
            auc(&s, &l).ok()
        });
    }
    estimate
}

/// Full evaluation of aligned predictions against references.
pub fn evaluate(predictions: &[ReportLabels], references: &[ReportLabels], options: &EvalOptions) -> Result<MetricReport> {
    let scores = evaluate_three_tasks(predictions, references)?;
    if let Some(s) = options.scores {
        if s.len() != references.len() {
            return Err(Error::Dimension {
                expected: references.len(),
                actual: s.len(),
            });
        }
    }
    let bootstrap = options.bootstrap.as_ref();
    let findings = Finding::ALL
        .iter()
        .map(|&finding| {
            let i = finding.index();
            let task_score = |t: Task| match scores.f1[i][t as usize] {
                None => Score::NotApplicable,
                Some(v) => Score::from_option(v),
            };
            let pairs: Vec<(bool, bool)> = predictions
                .iter()
                .zip(references)
                .map(|(p, r)| (binarize_presence(p.get(finding)), binarize_presence(r.get(finding))))
                .collect();
            let truth: Vec<bool> = pairs.iter().map(|p| p.1).collect();
            let finding_scores: Option<Vec<f64>> = options.scores.map(|s| s.iter().map(|row| row[i]).collect());
            FindingMetrics {
                finding,
                mention: task_score(Task::Mention),
                negation: task_score(Task::Negation),
                uncertainty: task_score(Task::Uncertainty),
                counts: Task::ALL
                    .into_iter()
                    .filter(|t| t.applies_to(finding))
                    .map(|t| (t, scores.counts[i][t as usize]))
                    .collect(),
                sensitivity: presence_estimate(&pairs, ConfusionCounts::sensitivity, bootstrap),
                specificity: presence_estimate(&pairs, ConfusionCounts::specificity, bootstrap),
                auc: finding_scores.as_ref().map(|s| auc_estimate(s, &truth, bootstrap)),
                roc: finding_scores
                    .as_ref()
                    .filter(|_| options.roc)
                    .and_then(|s| roc_points(s, &truth).ok()),
            }
        })
        .collect();
    Ok(MetricReport {
        version: METRIC_REPORT_VERSION,
        reports: references.len(),
        bootstrap: options.bootstrap,
        findings,
        means: TaskMeans {
            mention: Score::from_option(scores.means[0]),
            negation: Score::from_option(scores.means[1]),
            uncertainty: Score::from_option(scores.means[2]),
        },
    })
}

impl MetricReport {
    pub fn finding(&self, finding: Finding) -> &FindingMetrics {
        &self.findings[finding.index()]
    }

    /// Finding rows, task F1 columns, then presence metrics.
    pub fn render_table(&self) -> String {
        let has_auc = self.findings.iter().any(|f| f.auc.is_some());
        let mut out = String::new();
        let _ = write!(
            out,
            "{:<26} {:>8} {:>9} {:>12}  {:<22} {:<22}",
            "Finding", "Mention", "Negation", "Uncertainty", "Sensitivity", "Specificity"
        );
        if has_auc {
            let _ = write!(out, " {:<22}", "AUC");
        }
        out.push('\n');
        for f in &self.findings {
            let _ = write!(
                out,
                "{:<26} {:>8} {:>9} {:>12}  {:<22} {:<22}",
                f.finding.name(),
                f.mention.cell(3),
                f.negation.cell(3),
                f.uncertainty.cell(3),
                f.sensitivity.cell(),
                f.specificity.cell()
            );
            if let Some(a) = &f.auc {
                let _ = write!(out, " {:<22}", a.cell());
            }
            out.truncate(out.trim_end().len());
            out.push('\n');
        }
        let _ = writeln!(
            out,
            "{:<26} {:>8} {:>9} {:>12}",
            "Mean",
            self.means.mention.cell(3),
            self.means.negation.cell(3),
            self.means.uncertainty.cell(3)
        );
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    /// `None` for the task-mean rows.
    pub finding: Option<Finding>,
    pub metric: String,
    pub values: [Score; 2],
    /// Name of the labeler with the strictly higher value, if any.
    pub higher: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub version: u32,
    pub labelers: [String; 2],
    pub rows: Vec<ComparisonRow>,
    pub reports: [MetricReport; 2],
}

fn higher(names: &[String; 2], values: [Score; 2]) -> Option<String> {
    match (values[0].value(), values[1].value()) {
        (Some(a), Some(b)) if a > b => Some(names[0].clone()),
        (Some(a), Some(b)) if b > a => Some(names[1].clone()),
        _ => None,
    }
}

/// Pairs two reports over the same references metric by metric.
pub fn compare(names: [String; 2], reports: [MetricReport; 2]) -> Comparison {
    let mut rows = Vec::new();
    for finding in Finding::ALL {
        let [a, b] = [reports[0].finding(finding), reports[1].finding(finding)];
        let mut metrics: Vec<(&str, [Score; 2])> = Task::ALL
            .into_iter()
            .filter(|t| t.applies_to(finding))
            .map(|t| (t.name(), [a.task(t), b.task(t)]))
            .collect();
        metrics.push(("sensitivity", [a.sensitivity.value, b.sensitivity.value]));
        metrics.push(("specificity", [a.specificity.value, b.specificity.value]));
        if let (Some(x), Some(y)) = (a.auc, b.auc) {
            metrics.push(("auc", [x.value, y.value]));
        }
        for (metric, values) in metrics {
            rows.push(ComparisonRow {
                finding: Some(finding),
                metric: metric.into(),
                values,
                higher: higher(&names, values),
            });
        }
    }
    for task in Task::ALL {
        let values = [reports[0].means.task(task), reports[1].means.task(task)];
        rows.push(ComparisonRow {
            finding: None,
            metric: format!("mean_{}", task.name()),
            values,
            higher: higher(&names, values),
        });
    }
    Comparison {
        version: METRIC_REPORT_VERSION,
        labelers: names,
        rows,
        reports,
    }
}

impl Comparison {
    /// Task F1 block followed by the presence block; `*` marks the
    /// strictly higher value.
    pub fn render_table(&self) -> String {
        let tasks: Vec<String> = Task::ALL.iter().map(|t| t.name().to_string()).collect();
        let mut presence = vec!["sensitivity".to_string(), "specificity".to_string()];
        if self.rows.iter().any(|r| r.metric == "auc") {
            presence.push("auc".into());
        }
        let mut out = self.render_block(&tasks, true);
        out.push('\n');
        out.push_str(&self.render_block(&presence, false));
        out
    }

    fn render_block(&self, metrics: &[String], with_means: bool) -> String {
        let mut out = String::new();
        let _ = write!(out, "{:<26}", "Finding");
        for metric in metrics {
            for name in &self.labelers {
                let short: String = metric.chars().take(4).collect();
                let _ = write!(out, " {:>14}", format!("{short} {name}"));
            }
        }
        out.push('\n');
        let cell = |row: Option<&ComparisonRow>, k: usize| match row {
            None => "-".to_string(),
            Some(r) => {
                let mark = if r.higher.as_deref() == Some(self.labelers[k].as_str()) { "*" } else { "" };
                format!("{}{mark}", r.values[k].cell(3))
            }
        };
        let mut findings: Vec<Option<Finding>> = Finding::ALL.into_iter().map(Some).collect();
        if with_means {
            findings.push(None);
        }
        for finding in findings {
            let name = finding.map_or("Mean", |f| f.name());
            let _ = write!(out, "{name:<26}");
            for metric in metrics {
                let key = match finding {
                    Some(_) => metric.clone(),
                    None => format!("mean_{metric}"),
                };
                let row = self.rows.iter().find(|r| r.finding == finding && r.metric == key);
                for k in 0..2 {
                    let _ = write!(out, " {:>14}", cell(row, k));
                }
            }
            out.push('\n');
        }
        out
    }
}
