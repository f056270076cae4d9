//! Three-task F1, presence sensitivity/specificity, AUC and bootstrap CIs.

mod auc;
mod bootstrap;
mod report;

use serde::{Deserialize, Serialize};

pub use auc::{auc, roc_points, RocPoint};
pub use bootstrap::{bootstrap_ci, percentile, BootstrapConfig, Interval};
pub use report::{
    align, compare, evaluate, Comparison, ComparisonRow, EvalOptions, Estimate, FindingMetrics, MetricReport, Score,
    TaskMeans, METRIC_REPORT_VERSION,
};

use crate::error::{Error, Result};
use crate::schema::{Finding, LabelValue, ReportLabels, NUM_FINDINGS};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Task {
    Mention,
    Negation,
    Uncertainty,
}

impl Task {
    pub const ALL: [Task; 3] = [Task::Mention, Task::Negation, Task::Uncertainty];

    pub fn name(self) -> &'static str {
        match self {
            Task::Mention => "mention",
            Task::Negation => "negation",
            Task::Uncertainty => "uncertainty",
        }
    }

    /// NoFinding is only scored for mention extraction.
    pub fn applies_to(self, finding: Finding) -> bool {
        self == Task::Mention || !finding.is_no_finding()
    }
}

pub fn binarize_task(label: LabelValue, task: Task) -> bool {
    match task {
        Task::Mention => label != LabelValue::Blank,
        Task::Negation => label == LabelValue::Negative,
        Task::Uncertainty => label == LabelValue::Uncertain,
    }
}

/// Uncertain counts as present, Blank as absent.
pub fn binarize_presence(label: LabelValue) -> bool {
    matches!(label, LabelValue::Positive | LabelValue::Uncertain)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub tp: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
    pub tn: u64,
}

impl ConfusionCounts {
    pub fn add(&mut self, predicted: bool, reference: bool) {
        match (predicted, reference) {
            (true, true) => self.tp += 1,
            (true, false) => self.fp += 1,
            (false, true) => self.fn_ += 1,
            (false, false) => self.tn += 1,
        }
    }

    pub fn from_pairs(pairs: impl IntoIterator<Item = (bool, bool)>) -> Self {
        let mut counts = ConfusionCounts::default();
        for (p, r) in pairs {
            counts.add(p, r);
        }
        counts
    }

    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.fn_ + self.tn
    }

    pub fn sensitivity(&self) -> Option<f64> {
        ratio(self.tp, self.tp + self.fn_)
    }

    pub fn specificity(&self) -> Option<f64> {
        ratio(self.tn, self.tn + self.fp)
    }
}

fn ratio(num: u64, den: u64) -> Option<f64> {
    (den > 0).then(|| num as f64 / den as f64)
}

/// `2tp / (2tp + fp + fn)`; `None` when there is nothing to score.
pub fn f1(counts: &ConfusionCounts) -> Option<f64> {
    ratio(2 * counts.tp, 2 * counts.tp + counts.fp + counts.fn_)
}

fn check_lengths(predictions: &[ReportLabels], references: &[ReportLabels]) -> Result<()> {
    if predictions.len() != references.len() {
        return Err(Error::Dimension {
            expected: references.len(),
            actual: predictions.len(),
        });
    }
    Ok(())
}

pub fn task_counts(predictions: &[ReportLabels], references: &[ReportLabels], finding: Finding, task: Task) -> Result<ConfusionCounts> {
    check_lengths(predictions, references)?;
    Ok(ConfusionCounts::from_pairs(predictions.iter().zip(references).map(|(p, r)| {
        (binarize_task(p.get(finding), task), binarize_task(r.get(finding), task))
    })))
}

pub fn presence_counts(predictions: &[ReportLabels], references: &[ReportLabels], finding: Finding) -> Result<ConfusionCounts> {
    check_lengths(predictions, references)?;
    Ok(ConfusionCounts::from_pairs(predictions.iter().zip(references).map(|(p, r)| {
        (binarize_presence(p.get(finding)), binarize_presence(r.get(finding)))
    })))
}

/// Per-finding, per-task F1 (`None` inside means N/A; the outer `None`
/// marks a task that does not apply to the finding) and per-task means over
/// the non-N/A findings.
#[derive(Debug, Clone, PartialEq)]
pub struct TaskScores {
    pub f1: [[Option<Option<f64>>; 3]; NUM_FINDINGS],
    pub counts: [[ConfusionCounts; 3]; NUM_FINDINGS],
    pub means: [Option<f64>; 3],
}

impl TaskScores {
    pub fn get(&self, finding: Finding, task: Task) -> Option<Option<f64>> {
        self.f1[finding.index()][task as usize]
    }

    /// Mean of the defined task means; 1.0 when every task is N/A.
    pub fn overall(&self) -> f64 {
        let defined: Vec<f64> = self.means.iter().flatten().copied().collect();
        if defined.is_empty() {
            1.0
        } else {
            defined.iter().sum::<f64>() / defined.len() as f64
        }
    }
}

pub fn mean_defined(values: impl IntoIterator<Item = Option<f64>>) -> Option<f64> {
    let (sum, n) = values.into_iter().flatten().fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    (n > 0).then(|| sum / n as f64)
}

pub fn evaluate_three_tasks(predictions: &[ReportLabels], references: &[ReportLabels]) -> Result<TaskScores> {
    check_lengths(predictions, references)?;
    let mut counts = [[ConfusionCounts::default(); 3]; NUM_FINDINGS];
    for (p, r) in predictions.iter().zip(references) {
        for finding in Finding::ALL {
            for task in Task::ALL {
                counts[finding.index()][task as usize]
                    .add(binarize_task(p.get(finding), task), binarize_task(r.get(finding), task));
            }
        }
    }
    let f1s: [[Option<Option<f64>>; 3]; NUM_FINDINGS] = std::array::from_fn(|i| {
        let finding = Finding::ALL[i];
        std::array::from_fn(|t| Task::ALL[t].applies_to(finding).then(|| f1(&counts[i][t])))
    });
    let means = std::array::from_fn(|t| mean_defined(f1s.iter().filter_map(|row| row[t])));
    Ok(TaskScores {
        f1: f1s,
        counts,
        means,
    })
}

pub fn sensitivity_specificity(
    predictions: &[ReportLabels],
    references: &[ReportLabels],
    finding: Finding,
) -> Result<(Option<f64>, Option<f64>)> {
    let counts = presence_counts(predictions, references, finding)?;
    Ok((counts.sensitivity(), counts.specificity()))
}
