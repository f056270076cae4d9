//! Label vocabulary and report records.
//!
//! Every matrix or file emitted by this crate orders findings by
//! [`Finding::ALL`]. `NoFinding` is special: it only admits `Blank` or
//! `Positive`.

use std::collections::HashSet;
use std::fmt;
use std::str::FromStr;

use serde::de::{self, MapAccess, Visitor};
use serde::ser::SerializeMap;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::Error;

pub const NUM_FINDINGS: usize = 14;

/// Version of the report and label record layout.
pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Finding {
    Atelectasis,
    Cardiomegaly,
    Consolidation,
    Edema,
    EnlargedCardiomediastinum,
    Fracture,
    LungLesion,
    LungOpacity,
    NoFinding,
    PleuralEffusion,
    PleuralOther,
    Pneumonia,
    Pneumothorax,
    SupportDevices,
}

impl Finding {
    pub const ALL: [Finding; NUM_FINDINGS] = [
        Finding::Atelectasis,
        Finding::Cardiomegaly,
        Finding::Consolidation,
        Finding::Edema,
        Finding::EnlargedCardiomediastinum,
        Finding::Fracture,
        Finding::LungLesion,
        Finding::LungOpacity,
        Finding::NoFinding,
        Finding::PleuralEffusion,
        Finding::PleuralOther,
        Finding::Pneumonia,
        Finding::Pneumothorax,
        Finding::SupportDevices,
    ];

    /// Position in the canonical order.
    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(index: usize) -> Option<Finding> {
        Finding::ALL.get(index).copied()
    }

    pub fn is_no_finding(self) -> bool {
        self == Finding::NoFinding
    }

    pub fn name(self) -> &'static str {
        match self {
            Finding::Atelectasis => "Atelectasis",
            Finding::Cardiomegaly => "Cardiomegaly",
            Finding::Consolidation => "Consolidation",
            Finding::Edema => "Edema",
            Finding::EnlargedCardiomediastinum => "EnlargedCardiomediastinum",
            Finding::Fracture => "Fracture",
            Finding::LungLesion => "LungLesion",
            Finding::LungOpacity => "LungOpacity",
            Finding::NoFinding => "NoFinding",
            Finding::PleuralEffusion => "PleuralEffusion",
            Finding::PleuralOther => "PleuralOther",
            Finding::Pneumonia => "Pneumonia",
            Finding::Pneumothorax => "Pneumothorax",
            Finding::SupportDevices => "SupportDevices",
        }
    }

    /// Label values this finding's head can emit, in class-index order.
    pub fn admissible(self) -> &'static [LabelValue] {
        if self.is_no_finding() {
            &[LabelValue::Blank, LabelValue::Positive]
        } else {
            &LabelValue::ALL
        }
    }

    pub fn num_classes(self) -> usize {
        self.admissible().len()
    }
}

impl fmt::Display for Finding {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Finding {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Finding::ALL
            .iter()
            .copied()
            .find(|f| f.name() == s)
            .ok_or_else(|| Error::UnknownFinding(s.to_string()))
    }
}

impl Serialize for Finding {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(self.name())
    }
}

impl<'de> Deserialize<'de> for Finding {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(de::Error::custom)
    }
}

/// The four label classes. The discriminant is the class index used by the
/// model heads, so `Blank` is always class 0.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum LabelValue {
    #[default]
    Blank,
    Positive,
    Negative,
    Uncertain,
}

impl LabelValue {
    pub const ALL: [LabelValue; 4] = [
        LabelValue::Blank,
        LabelValue::Positive,
        LabelValue::Negative,
        LabelValue::Uncertain,
    ];

    pub fn class_index(self) -> usize {
        self as usize
    }

    pub fn as_str(self) -> &'static str {
        match self {
            LabelValue::Blank => "blank",
            LabelValue::Positive => "positive",
            LabelValue::Negative => "negative",
            LabelValue::Uncertain => "uncertain",
        }
    }

    /// CSV cell form: blank is the empty string.
    pub fn as_csv_cell(self) -> &'static str {
        match self {
            LabelValue::Blank => "",
            other => other.as_str(),
        }
    }

    pub fn from_csv_cell(cell: &str) -> Result<Self, Error> {
        if cell.is_empty() {
            Ok(LabelValue::Blank)
        } else {
            cell.parse()
        }
    }
}

impl fmt::Display for LabelValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for LabelValue {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "blank" => Ok(LabelValue::Blank),
            "positive" => Ok(LabelValue::Positive),
            "negative" => Ok(LabelValue::Negative),
            "uncertain" => Ok(LabelValue::Uncertain),
            other => Err(Error::UnknownLabel(other.to_string())),
        }
    }
}

impl Serialize for LabelValue {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(self.as_str())
    }
}

impl<'de> Deserialize<'de> for LabelValue {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(de::Error::custom)
    }
}

/// A total map from the 14 findings to a label value.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct ReportLabels([LabelValue; NUM_FINDINGS]);

impl ReportLabels {
    pub fn all_blank() -> Self {
        Self::default()
    }

    pub fn from_fn(mut f: impl FnMut(Finding) -> LabelValue) -> Self {
        let mut values = [LabelValue::Blank; NUM_FINDINGS];
        for finding in Finding::ALL {
            values[finding.index()] = f(finding);
        }
        ReportLabels(values)
    }

    pub fn get(&self, finding: Finding) -> LabelValue {
        self.0[finding.index()]
    }

    pub fn set(&mut self, finding: Finding, value: LabelValue) {
        self.0[finding.index()] = value;
    }

    pub fn with(mut self, finding: Finding, value: LabelValue) -> Self {
        self.set(finding, value);
        self
    }

    pub fn iter(&self) -> impl Iterator<Item = (Finding, LabelValue)> + '_ {
        Finding::ALL.iter().map(move |&f| (f, self.0[f.index()]))
    }

    pub fn as_array(&self) -> &[LabelValue; NUM_FINDINGS] {
        &self.0
    }

    /// Number of findings with a non-blank label.
    pub fn non_blank_count(&self) -> usize {
        self.0.iter().filter(|v| **v != LabelValue::Blank).count()
    }
}

/// Why a [`ReportLabels`] value was rejected.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LabelViolation {
    pub finding: Finding,
    pub value: LabelValue,
}

impl fmt::Display for LabelViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} cannot be {}", self.finding, self.value)
    }
}

impl From<LabelViolation> for Error {
    fn from(v: LabelViolation) -> Self {
        Error::InvalidLabel {
            finding: v.finding,
            reason: format!("{} is not admissible", v.value),
        }
    }
}

pub fn validate_labels(labels: &ReportLabels) -> Result<(), LabelViolation> {
    for (finding, value) in labels.iter() {
        if !finding.admissible().contains(&value) {
            return Err(LabelViolation { finding, value });
        }
    }
    Ok(())
}

impl Serialize for ReportLabels {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        let mut map = serializer.serialize_map(Some(NUM_FINDINGS))?;
        for (finding, value) in self.iter() {
            map.serialize_entry(finding.name(), value.as_str())?;
        }
        map.end()
    }
}

impl<'de> Deserialize<'de> for ReportLabels {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        struct LabelsVisitor;

        impl<'de> Visitor<'de> for LabelsVisitor {
            type Value = ReportLabels;

            fn expecting(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str("a map from all 14 finding names to label values")
            }

            fn visit_map<A: MapAccess<'de>>(self, mut access: A) -> Result<ReportLabels, A::Error> {
                let mut values = [None; NUM_FINDINGS];
                while let Some((key, value)) = access.next_entry::<String, String>()? {
                    let finding: Finding = key.parse().map_err(de::Error::custom)?;
                    let value: LabelValue = value.parse().map_err(de::Error::custom)?;
                    if values[finding.index()].replace(value).is_some() {
                        return Err(de::Error::custom(format!("duplicate finding `{key}`")));
                    }
                }
                let mut labels = ReportLabels::all_blank();
                for finding in Finding::ALL {
                    match values[finding.index()] {
                        Some(v) => labels.set(finding, v),
                        None => {
                            return Err(de::Error::custom(format!(
                                "missing label for finding `{finding}`"
                            )))
                        }
                    }
                }
                Ok(labels)
            }
        }

        deserializer.deserialize_map(LabelsVisitor)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Source {
    Manual,
    Rule,
    Model,
    Synthetic,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub id: String,
    pub text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub labels: Option<ReportLabels>,
    pub source: Source,
}

/// Train, validation and test ids of one dataset.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetSplit {
    pub train_ids: Vec<String>,
    pub validation_ids: Vec<String>,
    pub test_ids: Vec<String>,
}

impl DatasetSplit {
    /// Checks pairwise disjointness and, when `known` is given, that every
    /// id resolves.
    pub fn check(&self, known: Option<&HashSet<&str>>) -> Result<(), Error> {
        let mut seen = HashSet::new();
        for id in self.train_ids.iter().chain(&self.validation_ids).chain(&self.test_ids) {
            if !seen.insert(id.as_str()) {
                return Err(Error::Dataset(format!("id `{id}` appears in more than one split")));
            }
            if let Some(known) = known {
                if !known.contains(id.as_str()) {
                    return Err(Error::Dataset(format!("split id `{id}` not in dataset")));
                }
            }
        }
        Ok(())
    }
}
