use std::collections::{HashMap, HashSet};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::schema::{validate_labels, Finding, LabelValue, Report, ReportLabels, Source};

/// Reports with unique ids, non-empty text and valid labels.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct LabeledDataset {
    reports: Vec<Report>,
}

fn check_report(report: &Report) -> std::result::Result<(), String> {
    if report.id.is_empty() {
        return Err("report id is empty".into());
    }
    if report.text.trim().is_empty() {
        return Err(format!("report `{}` has empty text", report.id));
    }
    if let Some(labels) = &report.labels {
        validate_labels(labels).map_err(|v| format!("report `{}`: {v}", report.id))?;
    }
    Ok(())
}

impl LabeledDataset {
    pub fn new(reports: Vec<Report>) -> Result<Self> {
        let mut seen = HashSet::with_capacity(reports.len());
        for report in &reports {
            check_report(report).map_err(Error::Dataset)?;
            if !seen.insert(report.id.as_str()) {
                return Err(Error::Dataset(format!("duplicate report id `{}`", report.id)));
            }
        }
        Ok(LabeledDataset { reports })
    }

    pub fn reports(&self) -> &[Report] {
        &self.reports
    }

    pub fn into_reports(self) -> Vec<Report> {
        self.reports
    }

    pub fn len(&self) -> usize {
        self.reports.len()
    }

    pub fn is_empty(&self) -> bool {
        self.reports.is_empty()
    }

    pub fn ids(&self) -> Vec<String> {
        self.reports.iter().map(|r| r.id.clone()).collect()
    }

    /// The common source of all reports, if there is exactly one.
    pub fn provenance(&self) -> Option<Source> {
        let first = self.reports.first()?.source;
        self.reports.iter().all(|r| r.source == first).then_some(first)
    }

    pub fn is_labeled(&self) -> bool {
        self.reports.iter().all(|r| r.labels.is_some())
    }

    /// Labels of every report; errors if any report is unlabeled.
    pub fn labels(&self) -> Result<Vec<ReportLabels>> {
        self.reports
            .iter()
            .map(|r| {
                r.labels
                    .ok_or_else(|| Error::Dataset(format!("report `{}` has no labels", r.id)))
            })
            .collect()
    }

    /// Reports for `ids`, in the order given.
    pub fn subset(&self, ids: &[String]) -> Result<LabeledDataset> {
        let index: HashMap<&str, &Report> = self.reports.iter().map(|r| (r.id.as_str(), r)).collect();
        let reports = ids
            .iter()
            .map(|id| {
                index
                    .get(id.as_str())
                    .map(|r| (*r).clone())
                    .ok_or_else(|| Error::Dataset(format!("unknown report id `{id}`")))
            })
            .collect::<Result<Vec<_>>>()?;
        LabeledDataset::new(reports)
    }

    /// Appends the reports of `other`; ids must stay unique.
    pub fn concat(mut self, other: LabeledDataset) -> Result<LabeledDataset> {
        self.reports.extend(other.reports);
        LabeledDataset::new(self.reports)
    }
}

fn parse_error(path: &Path, line: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        line,
        message: message.into(),
    }
}

/// Reads a JSONL dataset. Blank lines are skipped; errors name the
/// offending line.
pub fn read_dataset(path: &Path) -> Result<LabeledDataset> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reports = Vec::new();
    let mut seen: HashMap<String, usize> = HashMap::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line_no = i + 1;
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let report: Report =
            serde_json::from_str(&line).map_err(|e| parse_error(path, line_no, e.to_string()))?;
        check_report(&report).map_err(|m| parse_error(path, line_no, m))?;
        if let Some(first) = seen.insert(report.id.clone(), line_no) {
            return Err(parse_error(
                path,
                line_no,
                format!("duplicate report id `{}` (first on line {first})", report.id),
            ));
        }
        reports.push(report);
    }
    Ok(LabeledDataset { reports })
}

pub fn write_dataset(dataset: &LabeledDataset, path: &Path) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    for report in dataset.reports() {
        serde_json::to_writer(&mut out, report)?;
        out.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    }
    out.flush().map_err(|e| Error::io(path, e))
}

/// Writes the label matrix: `id` then one column per finding in canonical
/// order; Blank is the empty cell.
pub fn write_label_csv(dataset: &LabeledDataset, path: &Path) -> Result<()> {
    let labels = dataset.labels()?;
    let mut writer = csv::Writer::from_path(path)?;
    let mut header = vec!["id"];
    header.extend(Finding::ALL.iter().map(|f| f.name()));
    writer.write_record(&header)?;
    for (report, labels) in dataset.reports().iter().zip(&labels) {
        let mut row = vec![report.id.as_str()];
        row.extend(labels.iter().map(|(_, v)| v.as_csv_cell()));
        writer.write_record(&row)?;
    }
    writer.flush().map_err(|e| Error::io(path, e))
}

pub fn read_label_csv(path: &Path) -> Result<Vec<(String, ReportLabels)>> {
    let mut reader = csv::Reader::from_path(path)?;
    let header = reader.headers()?.clone();
    let expected: Vec<&str> = std::iter::once("id").chain(Finding::ALL.iter().map(|f| f.name())).collect();
    if header.iter().collect::<Vec<_>>() != expected {
        return Err(parse_error(path, 1, "header must be `id` followed by the 14 findings in canonical order"));
    }
    let mut rows = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let line = i + 2;
        let record = record?;
        let mut labels = ReportLabels::all_blank();
        for (finding, cell) in Finding::ALL.iter().zip(record.iter().skip(1)) {
            let value = LabelValue::from_csv_cell(cell).map_err(|e| parse_error(path, line, e.to_string()))?;
            labels.set(*finding, value);
        }
        validate_labels(&labels).map_err(|v| parse_error(path, line, v.to_string()))?;
        rows.push((record[0].to_string(), labels));
    }
    Ok(rows)
}
