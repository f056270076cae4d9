use std::collections::HashSet;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::dataset::LabeledDataset;
use crate::error::{Error, Result};
use crate::schema::{Finding, LabelValue, ReportLabels, NUM_FINDINGS};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TestSelection {
    pub test_ids: Vec<String>,
    /// Everything not selected for test, in dataset order.
    pub rest_ids: Vec<String>,
    pub warnings: Vec<String>,
}

/// Greedy test-set selection.
///
/// Findings are visited from rarest to most frequent (by number of reports
/// with a non-blank label). A finding with at least `min_per_class`
/// mentions is topped up to `min_per_class` test reports; a rarer one to
/// half of its reports, rounded up. Candidates with more non-blank labels
/// go first, ties broken by id.
pub fn select_test_split(dataset: &LabeledDataset, min_per_class: usize) -> Result<TestSelection> {
    if dataset.is_empty() {
        return Err(Error::Dataset("cannot select a test split from an empty dataset".into()));
    }
    let labels = dataset.labels()?;
    let reports = dataset.reports();
    let mentions = |i: usize, f: Finding| labels[i].get(f) != LabelValue::Blank;

    let mut counts = [0usize; NUM_FINDINGS];
    for l in &labels {
        for (f, v) in l.iter() {
            if v != LabelValue::Blank {
                counts[f.index()] += 1;
            }
        }
    }
    let mut order: Vec<Finding> = Finding::ALL.to_vec();
    order.sort_by_key(|f| (counts[f.index()], f.index()));

    // Preference order shared by all findings.
    let mut preference: Vec<usize> = (0..reports.len()).collect();
    preference.sort_by(|&a, &b| {
        labels[b]
            .non_blank_count()
            .cmp(&labels[a].non_blank_count())
            .then_with(|| reports[a].id.cmp(&reports[b].id))
    });

    let mut in_test = vec![false; reports.len()];
    let mut warnings = Vec::new();
    for finding in order {
        let total = counts[finding.index()];
        if total == 0 {
            continue;
        }
        let target = if total >= min_per_class {
            min_per_class
        } else {
            warnings.push(format!(
                "{finding} has only {total} mentions; {} go to test",
                total.div_ceil(2)
            ));
            total.div_ceil(2)
        };
        let mut have = (0..reports.len()).filter(|&i| in_test[i] && mentions(i, finding)).count();
        for &i in &preference {
            if have >= target {
                break;
            }
            if !in_test[i] && mentions(i, finding) {
                in_test[i] = true;
                have += 1;
            }
        }
    }
    if labels.iter().all(|l| *l == ReportLabels::all_blank()) {
        warnings.push("every report is all-blank; the test set is empty".into());
    }

    let (mut test_ids, mut rest_ids) = (Vec::new(), Vec::new());
    for (report, selected) in reports.iter().zip(in_test) {
        if selected {
            test_ids.push(report.id.clone());
        } else {
            rest_ids.push(report.id.clone());
        }
    }
    Ok(TestSelection {
        test_ids,
        rest_ids,
        warnings,
    })
}

fn shuffled(ids: &[String], seed: u64, stream: u64) -> Vec<String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    let mut ids = ids.to_vec();
    ids.shuffle(&mut rng);
    ids
}

fn check_unique(ids: &[String]) -> Result<()> {
    let mut seen = HashSet::with_capacity(ids.len());
    for id in ids {
        if !seen.insert(id.as_str()) {
            return Err(Error::Dataset(format!("id `{id}` listed twice")));
        }
    }
    Ok(())
}

/// Seeded shuffle, then the last `round(fraction * n)` ids become
/// validation and the rest train.
pub fn train_validation_split(ids: &[String], validation_fraction: f64, seed: u64) -> Result<(Vec<String>, Vec<String>)> {
    if !(0.0..1.0).contains(&validation_fraction) {
        return Err(Error::Config("validation fraction must lie in [0, 1)".into()));
    }
    check_unique(ids)?;
    let mut ids = shuffled(ids, seed, 0);
    let n_val = (validation_fraction * ids.len() as f64).round() as usize;
    let validation = ids.split_off(ids.len() - n_val);
    Ok((ids, validation))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FractionSplit {
    pub percent: u32,
    pub train_ids: Vec<String>,
    pub validation_ids: Vec<String>,
}

pub const FRACTION_PERCENTS: [u32; 4] = [25, 50, 75, 100];

/// Size of the first `quarters` quarters of `n` items when the remainder
/// `n mod 4` is handed out one item per quarter from the first.
pub fn quarter_size(n: usize, quarters: usize) -> usize {
    quarters * (n / 4) + quarters.min(n % 4)
}

/// The four nested training-data fractions.
///
/// Each list is shuffled once and cut into prefixes. Train takes
/// [`quarter_size`] of its list; validation takes what keeps the pooled
/// train plus validation prefix at `quarter_size` of the pooled total.
/// For 810/203 this yields 203/51, 406/101, 608/152 and 810/203.
pub fn fraction_splits(train_ids: &[String], validation_ids: &[String], seed: u64) -> Result<[FractionSplit; 4]> {
    if train_ids.is_empty() || validation_ids.is_empty() {
        return Err(Error::Dataset("fraction splits need non-empty train and validation lists".into()));
    }
    let mut all = train_ids.to_vec();
    all.extend_from_slice(validation_ids);
    check_unique(&all)?;

    let train = shuffled(train_ids, seed, 1);
    let validation = shuffled(validation_ids, seed, 2);
    let (n_train, n_total) = (train.len(), all.len());
    Ok(std::array::from_fn(|k| {
        let quarters = k + 1;
        let t = quarter_size(n_train, quarters);
        let v = quarter_size(n_total, quarters) - t;
        FractionSplit {
            percent: FRACTION_PERCENTS[k],
            train_ids: train[..t].to_vec(),
            validation_ids: validation[..v].to_vec(),
        }
    }))
}
