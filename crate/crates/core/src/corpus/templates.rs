use std::collections::BTreeMap;
use std::path::Path;

use rand::seq::IndexedRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rules::{Polarity, RuleLabeler};
use crate::schema::{Finding, LabelValue};

const DEFAULT_TEMPLATES: &str = include_str!("../../data/default_templates.json");

/// Sentence templates of one polarity class.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PolarityTemplates {
    #[serde(default)]
    pub positive: Vec<String>,
    #[serde(default)]
    pub negative: Vec<String>,
    #[serde(default)]
    pub uncertain: Vec<String>,
}

impl PolarityTemplates {
    pub fn get(&self, polarity: Polarity) -> &[String] {
        match polarity {
            Polarity::Positive => &self.positive,
            Polarity::Negative => &self.negative,
            Polarity::Uncertain => &self.uncertain,
        }
    }
}

/// Templates for one finding. The flattened lists use lexicon vocabulary;
/// `paraphrase` holds wording the default lexicon does not resolve to the
/// declared polarity.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct FindingTemplates {
    #[serde(flatten)]
    pub in_lexicon: PolarityTemplates,
    #[serde(default)]
    pub paraphrase: PolarityTemplates,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TemplateBank {
    /// Slot name to fill-ins; templates reference slots as `{name}`.
    #[serde(default)]
    pub slots: BTreeMap<String, Vec<String>>,
    pub findings: BTreeMap<Finding, FindingTemplates>,
    #[serde(default)]
    pub filler: Vec<String>,
    pub normal: Vec<String>,
    #[serde(default)]
    pub normal_paraphrase: Vec<String>,
}

/// A template whose rendering the rule labeler does not read as declared.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Inconsistency {
    pub sentence: String,
    pub finding: Option<Finding>,
    pub expected: LabelValue,
    pub actual: LabelValue,
}

enum Piece<'a> {
    Text(&'a str),
    Slot(&'a str),
}

fn pieces(template: &str) -> Result<Vec<Piece<'_>>> {
    let mut out = Vec::new();
    let mut rest = template;
    while let Some(open) = rest.find('{') {
        let close = rest[open..]
            .find('}')
            .map(|c| open + c)
            .ok_or_else(|| Error::Config(format!("unclosed slot in template `{template}`")))?;
        if open > 0 {
            out.push(Piece::Text(&rest[..open]));
        }
        out.push(Piece::Slot(&rest[open + 1..close]));
        rest = &rest[close + 1..];
    }
    if !rest.is_empty() {
        out.push(Piece::Text(rest));
    }
    Ok(out)
}

impl TemplateBank {
    pub fn default_german() -> TemplateBank {
        serde_json::from_str(DEFAULT_TEMPLATES).expect("bundled template bank is valid JSON")
    }

    pub fn from_json_file(path: &Path) -> Result<TemplateBank> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let bank: TemplateBank = serde_json::from_str(&text)?;
        bank.validate()?;
        Ok(bank)
    }

    /// Structural checks: slots resolve, no NoFinding templates, normal
    /// statements present.
    pub fn validate(&self) -> Result<()> {
        if self.findings.contains_key(&Finding::NoFinding) {
            return Err(Error::Config(
                "NoFinding is driven by normal statements, not finding templates".into(),
            ));
        }
        if self.normal.is_empty() {
            return Err(Error::Config("template bank has no normal statements".into()));
        }
        for (name, values) in &self.slots {
            if values.is_empty() {
                return Err(Error::Config(format!("slot `{name}` has no values")));
            }
        }
        for template in self.all_templates() {
            if template.trim().is_empty() {
                return Err(Error::Config("empty template".into()));
            }
            for piece in pieces(template)? {
                if let Piece::Slot(name) = piece {
                    if !self.slots.contains_key(name) {
                        return Err(Error::Config(format!(
                            "template `{template}` uses unknown slot `{name}`"
                        )));
                    }
                }
            }
        }
        Ok(())
    }

    fn all_templates(&self) -> impl Iterator<Item = &String> {
        self.findings
            .values()
            .flat_map(|t| {
                Polarity::ALL
                    .into_iter()
                    .flat_map(move |p| t.in_lexicon.get(p).iter().chain(t.paraphrase.get(p)))
            })
            .chain(&self.filler)
            .chain(&self.normal)
            .chain(&self.normal_paraphrase)
    }

    pub fn templates(&self, finding: Finding, polarity: Polarity, paraphrase: bool) -> &[String] {
        match self.findings.get(&finding) {
            Some(t) if paraphrase => t.paraphrase.get(polarity),
            Some(t) => t.in_lexicon.get(polarity),
            None => &[],
        }
    }

    /// Fills every slot with a uniformly chosen value.
    pub fn render(&self, template: &str, rng: &mut impl Rng) -> Result<String> {
        let mut out = String::with_capacity(template.len() + 16);
        for piece in pieces(template)? {
            match piece {
                Piece::Text(t) => out.push_str(t),
                Piece::Slot(name) => {
                    let value = self
                        .slots
                        .get(name)
                        .and_then(|v| v.choose(rng))
                        .ok_or_else(|| Error::Config(format!("unknown slot `{name}`")))?;
                    out.push_str(value);
                }
            }
        }
        Ok(out)
    }

    /// Every rendering of `template` over the full slot product.
    pub fn expansions(&self, template: &str) -> Result<Vec<String>> {
        let mut out = vec![String::new()];
        for piece in pieces(template)? {
            match piece {
                Piece::Text(t) => out.iter_mut().for_each(|s| s.push_str(t)),
                Piece::Slot(name) => {
                    let values = self
                        .slots
                        .get(name)
                        .ok_or_else(|| Error::Config(format!("unknown slot `{name}`")))?;
                    out = out
                        .iter()
                        .flat_map(|s| values.iter().map(move |v| format!("{s}{v}")))
                        .collect();
                }
            }
        }
        Ok(out)
    }

    /// Labels every expansion of every template in isolation.
    ///
    /// In-lexicon templates must yield exactly their declared polarity for
    /// their finding and Blank elsewhere; paraphrases must leave other
    /// findings Blank and must not yield the declared polarity. Normal
    /// statements must set NoFinding, their paraphrases must not, and
    /// fillers must label nothing.
    pub fn check_consistency(&self, labeler: &RuleLabeler) -> Result<Vec<Inconsistency>> {
        let mut found = Vec::new();
        let mut check = |template: &str, target: Option<Finding>, expected: LabelValue, paraphrase: bool| -> Result<()> {
            for sentence in self.expansions(template)? {
                let labels = labeler.label_report(&sentence)?;
                for (finding, actual) in labels.iter() {
                    let declared = Some(finding) == target;
                    let bad = match (declared, paraphrase) {
                        (true, false) => actual != expected,
                        (true, true) => actual == expected,
                        (false, _) => actual != LabelValue::Blank,
                    };
                    if bad {
                        found.push(Inconsistency {
                            sentence: sentence.clone(),
                            finding: Some(finding),
                            expected: if declared { expected } else { LabelValue::Blank },
                            actual,
                        });
                    }
                }
            }
            Ok(())
        };
        for (&finding, templates) in &self.findings {
            for polarity in Polarity::ALL {
                for t in templates.in_lexicon.get(polarity) {
                    check(t, Some(finding), polarity.label(), false)?;
                }
                for t in templates.paraphrase.get(polarity) {
                    check(t, Some(finding), polarity.label(), true)?;
                }
            }
        }
        for t in &self.normal {
            check(t, Some(Finding::NoFinding), LabelValue::Positive, false)?;
        }
        for t in &self.normal_paraphrase {
            check(t, Some(Finding::NoFinding), LabelValue::Positive, true)?;
        }
        for t in &self.filler {
            check(t, None, LabelValue::Blank, false)?;
        }
        Ok(found)
    }
}
