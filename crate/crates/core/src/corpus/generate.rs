use std::collections::BTreeMap;
use std::path::Path;

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::dataset::LabeledDataset;
use super::templates::TemplateBank;
use crate::error::{Error, Result};
use crate::rules::{apply_no_finding_rule, fold_polarities, Polarity};
use crate::schema::{Finding, LabelValue, Report, ReportLabels, Source};

/// Number of manually annotated reports behind [`DS1_COUNTS`].
pub const DS1_REPORTS: u32 = 1091;

/// Positive, uncertain and negative report counts per finding in the
/// manually annotated reference set (train and test portions summed).
pub const DS1_COUNTS: [(Finding, [u32; 3]); 14] = [
    (Finding::Atelectasis, [232, 67, 3]),
    (Finding::Cardiomegaly, [200, 393, 291]),
    (Finding::Consolidation, [228, 51, 668]),
    (Finding::Edema, [321, 14, 555]),
    (Finding::EnlargedCardiomediastinum, [245, 314, 331]),
    (Finding::Fracture, [72, 5, 87]),
    (Finding::LungLesion, [49, 12, 13]),
    (Finding::LungOpacity, [306, 47, 600]),
    (Finding::NoFinding, [2, 0, 0]),
    (Finding::PleuralEffusion, [484, 56, 483]),
    (Finding::PleuralOther, [64, 21, 1]),
    (Finding::Pneumonia, [57, 189, 694]),
    (Finding::Pneumothorax, [88, 12, 937]),
    (Finding::SupportDevices, [633, 2, 119]),
];

/// Per-report probabilities of each stated polarity; the remainder is the
/// probability that the finding is not mentioned.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PolarityPrior {
    pub positive: f64,
    pub uncertain: f64,
    pub negative: f64,
}

impl PolarityPrior {
    fn total(&self) -> f64 {
        self.positive + self.uncertain + self.negative
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CountRange {
    pub min: usize,
    pub max: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GeneratorConfig {
    pub seed: u64,
    /// Missing findings fall back to the reference-set proportions.
    pub priors: BTreeMap<Finding, PolarityPrior>,
    /// Finding-free filler sentences per report, drawn uniformly.
    pub filler_sentences: CountRange,
    /// Probability that a finding or normal sentence uses paraphrase
    /// wording outside the rule lexicon.
    pub mismatch_rate: f64,
    /// Probability of a second sentence for a mentioned finding whose
    /// polarity does not outrank the first.
    pub repeat_rate: f64,
    /// Probability that a sentence starts on a new line.
    pub newline_rate: f64,
    pub id_prefix: String,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        GeneratorConfig {
            seed: 0,
            priors: default_priors(),
            filler_sentences: CountRange { min: 2, max: 8 },
            mismatch_rate: 0.0,
            repeat_rate: 0.15,
            newline_rate: 0.2,
            id_prefix: "syn".into(),
        }
    }
}

pub fn default_priors() -> BTreeMap<Finding, PolarityPrior> {
    let n = f64::from(DS1_REPORTS);
    DS1_COUNTS
        .iter()
        .map(|&(f, [p, u, neg])| {
            let prior = PolarityPrior {
                positive: f64::from(p) / n,
                uncertain: f64::from(u) / n,
                negative: f64::from(neg) / n,
            };
            (f, prior)
        })
        .collect()
}

impl GeneratorConfig {
    pub fn validate(&self) -> Result<()> {
        for (finding, prior) in &self.priors {
            let values = [prior.positive, prior.uncertain, prior.negative];
            if values.iter().any(|v| !v.is_finite() || *v < 0.0) {
                return Err(Error::Config(format!("priors of {finding} must be non-negative")));
            }
            if prior.total() > 1.0 + 1e-9 {
                return Err(Error::Config(format!("priors of {finding} sum above 1")));
            }
            if finding.is_no_finding() && (prior.uncertain > 0.0 || prior.negative > 0.0) {
                return Err(Error::Config("NoFinding admits only a positive prior".into()));
            }
        }
        for (name, rate) in [
            ("mismatch_rate", self.mismatch_rate),
            ("repeat_rate", self.repeat_rate),
            ("newline_rate", self.newline_rate),
        ] {
            if !(0.0..=1.0).contains(&rate) {
                return Err(Error::Config(format!("{name} must lie in [0, 1]")));
            }
        }
        if self.filler_sentences.min > self.filler_sentences.max {
            return Err(Error::Config("filler_sentences.min exceeds max".into()));
        }
        Ok(())
    }

    pub fn from_json_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let config: GeneratorConfig = serde_json::from_str(&text)?;
        config.validate()?;
        Ok(config)
    }

    pub fn prior(&self, finding: Finding) -> PolarityPrior {
        self.priors
            .get(&finding)
            .copied()
            .unwrap_or_else(|| default_priors()[&finding])
    }
}

/// Distinct irrational step per finding: fractional parts of square roots
/// of the first fourteen primes.
fn weyl_step(finding: Finding) -> f64 {
    const PRIMES: [u32; 14] = [2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43];
    f64::from(PRIMES[finding.index()]).sqrt().fract()
}

/// Stratified uniform draw for (finding, report index).
///
/// A seeded offset plus an irrational rotation: marginal frequencies stay
/// within O(1/n) of the priors while each report's draw depends only on the
/// seed and its own index.
fn state_draw(seed: u64, finding: Finding, index: usize) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(u64::MAX - finding.index() as u64);
    let offset: f64 = rng.random();
    (offset + (index as f64 + 1.0) * weyl_step(finding)).fract()
}

fn report_rng(seed: u64, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64);
    rng
}

fn pick_state(u: f64, prior: PolarityPrior) -> Option<Polarity> {
    if u < prior.positive {
        Some(Polarity::Positive)
    } else if u < prior.positive + prior.uncertain {
        Some(Polarity::Uncertain)
    } else if u < prior.total() {
        Some(Polarity::Negative)
    } else {
        None
    }
}

fn choose<'a>(templates: &'a [String], rng: &mut ChaCha8Rng, what: &str) -> Result<&'a String> {
    templates
        .choose(rng)
        .ok_or_else(|| Error::Config(format!("template bank has no templates for {what}")))
}

/// Generates one report; its labels follow from the declared polarity of
/// every sentence used.
fn generate_one(config: &GeneratorConfig, bank: &TemplateBank, index: usize) -> Result<Report> {
    let mut rng = report_rng(config.seed, index);
    let normal = state_draw(config.seed, Finding::NoFinding, index) < config.prior(Finding::NoFinding).positive;

    let mut sentences: Vec<String> = Vec::new();
    let mut declared: BTreeMap<Finding, Vec<Polarity>> = BTreeMap::new();

    for finding in Finding::ALL.into_iter().filter(|f| !f.is_no_finding()) {
        let prior = config.prior(finding);
        let u = state_draw(config.seed, finding, index);
        let state = if normal {
            (u < prior.negative).then_some(Polarity::Negative)
        } else {
            pick_state(u, prior)
        };
        let Some(polarity) = state else { continue };
        let mut polarities = vec![polarity];
        if rng.random_bool(config.repeat_rate) {
            let weaker: Vec<Polarity> = Polarity::ALL
                .into_iter()
                .filter(|p| p.precedence() <= polarity.precedence())
                .collect();
            polarities.push(*weaker.choose(&mut rng).expect("polarity is its own weaker"));
        }
        for &p in &polarities {
            let paraphrase = rng.random_bool(config.mismatch_rate)
                && !bank.templates(finding, p, true).is_empty();
            let what = format!("{finding} {p:?}");
            let template = choose(bank.templates(finding, p, paraphrase), &mut rng, &what)?;
            sentences.push(bank.render(template, &mut rng)?);
        }
        declared.insert(finding, polarities);
    }

    if normal {
        let paraphrase = rng.random_bool(config.mismatch_rate) && !bank.normal_paraphrase.is_empty();
        let pool = if paraphrase { &bank.normal_paraphrase } else { &bank.normal };
        let template = choose(pool, &mut rng, "normal statements")?;
        sentences.push(bank.render(template, &mut rng)?);
    }

    let fillers = rng.random_range(config.filler_sentences.min..=config.filler_sentences.max);
    for _ in 0..fillers {
        let template = choose(&bank.filler, &mut rng, "filler")?;
        sentences.push(bank.render(template, &mut rng)?);
    }
    sentences.shuffle(&mut rng);

    let mut text = String::new();
    for (i, sentence) in sentences.iter().enumerate() {
        if i > 0 {
            text.push(if rng.random_bool(config.newline_rate) { '\n' } else { ' ' });
        }
        text.push_str(sentence);
    }
    if text.is_empty() {
        text.push_str("Keine Voraufnahme zum Vergleich.");
    }

    let mut labels = ReportLabels::from_fn(|f| {
        declared
            .get(&f)
            .map_or(LabelValue::Blank, |ps| fold_polarities(ps.iter().copied()))
    });
    apply_no_finding_rule(&mut labels, normal);

    Ok(Report {
        id: format!("{}-{index:06}", config.id_prefix),
        text,
        labels: Some(labels),
        source: Source::Synthetic,
    })
}

/// Generates `n` labeled reports. Reports are built in parallel; each one
/// depends only on the seed and its index.
pub fn generate(config: &GeneratorConfig, bank: &TemplateBank, n: usize) -> Result<LabeledDataset> {
    if n == 0 {
        return Err(Error::Config("report count must be at least 1".into()));
    }
    config.validate()?;
    bank.validate()?;
    let reports = (0..n)
        .into_par_iter()
        .map(|i| generate_one(config, bank, i))
        .collect::<Result<Vec<_>>>()?;
    LabeledDataset::new(reports)
}
