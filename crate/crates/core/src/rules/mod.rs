//! Rule-based weak labeler.
//!
//! Pipeline: tokenize, split sentences, find finding phrases, classify each
//! mention with windowed negation/uncertainty cues, then fold mentions into
//! one label per finding.

mod lexicon;

use std::ops::Range;

pub use lexicon::{CueFile, CueLexicon, Lexicon, LexiconFile, NormalcyLexicon, Pattern, PhraseLexicon};

use rayon::prelude::*;

use crate::corpus::LabeledDataset;
use crate::error::Result;
use crate::schema::{Finding, LabelValue, Report, ReportLabels, Source, NUM_FINDINGS};
use crate::text::{Document, NormalizerConfig, Token};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Polarity {
    Positive,
    Negative,
    Uncertain,
}

impl Polarity {
    pub const ALL: [Polarity; 3] = [Polarity::Positive, Polarity::Negative, Polarity::Uncertain];

    /// Aggregation rank: Negative < Uncertain < Positive.
    pub fn precedence(self) -> u8 {
        match self {
            Polarity::Negative => 0,
            Polarity::Uncertain => 1,
            Polarity::Positive => 2,
        }
    }

    pub fn label(self) -> LabelValue {
        match self {
            Polarity::Positive => LabelValue::Positive,
            Polarity::Negative => LabelValue::Negative,
            Polarity::Uncertain => LabelValue::Uncertain,
        }
    }

    pub fn from_label(label: LabelValue) -> Option<Polarity> {
        match label {
            LabelValue::Blank => None,
            LabelValue::Positive => Some(Polarity::Positive),
            LabelValue::Negative => Some(Polarity::Negative),
            LabelValue::Uncertain => Some(Polarity::Uncertain),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Mention {
    pub finding: Finding,
    pub sentence: usize,
    /// Token indices into the document.
    pub tokens: Range<usize>,
    pub polarity: Polarity,
}

/// Finds phrase matches sentence by sentence. At each position the longest
/// matching pattern wins; findings tied at that length each get a mention.
/// Returned mentions carry a placeholder `Positive` polarity.
pub fn extract_mentions(doc: &Document, lexicon: &PhraseLexicon) -> Vec<Mention> {
    let mut mentions = Vec::new();
    for (sentence_index, sentence) in doc.sentences.iter().enumerate() {
        let tokens = &doc.tokens[..sentence.tokens.end];
        let mut pos = sentence.tokens.start;
        while pos < sentence.tokens.end {
            let mut best_len = 0usize;
            let mut best = [false; NUM_FINDINGS];
            for candidate in lexicon.candidates(&tokens[pos].matchform) {
                let (finding, pattern) = lexicon.pattern(candidate);
                if pattern.len() < best_len || !pattern.matches_at(tokens, pos) {
                    continue;
                }
                if pattern.len() > best_len {
                    best_len = pattern.len();
                    best = [false; NUM_FINDINGS];
                }
                best[finding.index()] = true;
            }
            if best_len == 0 {
                pos += 1;
                continue;
            }
            for finding in Finding::ALL.into_iter().filter(|f| best[f.index()]) {
                mentions.push(Mention {
                    finding,
                    sentence: sentence_index,
                    tokens: pos..pos + best_len,
                    polarity: Polarity::Positive,
                });
            }
            pos += best_len;
        }
    }
    mentions
}

fn any_cue_in(cues: &[Pattern], tokens: &[Token], window: Range<usize>) -> bool {
    cues.iter().any(|cue| cue.occurrences(tokens, window.clone()).next().is_some())
}

/// Uncertainty cues before or after the mention outrank negation cues.
/// Scope is limited to the configured windows, clipped to the sentence and
/// cut at any terminator between cue and mention.
pub fn classify_mention(mention: &Mention, cues: &CueLexicon, doc: &Document) -> Polarity {
    let sentence = &doc.sentences[mention.sentence];
    let tokens = &doc.tokens[..sentence.tokens.end];

    let mut pre_start = mention.tokens.start.saturating_sub(cues.pre_window).max(sentence.tokens.start);
    for terminator in &cues.terminators {
        for at in terminator.occurrences(tokens, pre_start..mention.tokens.start) {
            pre_start = pre_start.max(at + terminator.len());
        }
    }
    let pre = pre_start..mention.tokens.start;

    let mut post_end = (mention.tokens.end + cues.post_window).min(sentence.tokens.end);
    for terminator in &cues.terminators {
        if let Some(at) = terminator.occurrences(tokens, mention.tokens.end..post_end).next() {
            post_end = post_end.min(at);
        }
    }
    let post = mention.tokens.end..post_end;

    if any_cue_in(&cues.uncertainty, tokens, pre.clone())
        || any_cue_in(&cues.uncertainty, tokens, post.clone())
    {
        Polarity::Uncertain
    } else if any_cue_in(&cues.pre_negation, tokens, pre)
        || any_cue_in(&cues.post_negation, tokens, post)
    {
        Polarity::Negative
    } else {
        Polarity::Positive
    }
}

/// Whether any normalcy statement occurs inside one of the sentences.
pub fn matches_normalcy(doc: &Document, normalcy: &NormalcyLexicon) -> bool {
    doc.sentences.iter().any(|s| {
        normalcy
            .patterns
            .iter()
            .any(|p| p.occurrences(&doc.tokens, s.tokens.clone()).next().is_some())
    })
}

/// Folds polarities into one label: no mention is Blank, otherwise
/// Positive > Uncertain > Negative.
pub fn fold_polarities(polarities: impl IntoIterator<Item = Polarity>) -> LabelValue {
    polarities
        .into_iter()
        .max_by_key(|p| p.precedence())
        .map_or(LabelValue::Blank, Polarity::label)
}

/// Sets `NoFinding` to Positive exactly when the report is stated to be
/// normal and nothing else is Positive or Uncertain.
pub fn apply_no_finding_rule(labels: &mut ReportLabels, normal_statement: bool) {
    let abnormal = labels.iter().any(|(f, v)| {
        !f.is_no_finding() && matches!(v, LabelValue::Positive | LabelValue::Uncertain)
    });
    let value = if normal_statement && !abnormal {
        LabelValue::Positive
    } else {
        LabelValue::Blank
    };
    labels.set(Finding::NoFinding, value);
}

pub fn aggregate(mentions: &[Mention], normalcy: &NormalcyLexicon, doc: &Document) -> ReportLabels {
    let mut labels = ReportLabels::from_fn(|finding| {
        if finding.is_no_finding() {
            return LabelValue::Blank;
        }
        fold_polarities(mentions.iter().filter(|m| m.finding == finding).map(|m| m.polarity))
    });
    apply_no_finding_rule(&mut labels, matches_normalcy(doc, normalcy));
    labels
}

/// Lexicon plus normalizer settings; labeling is a pure function of these.
#[derive(Debug, Clone)]
pub struct RuleLabeler {
    pub lexicon: Lexicon,
    pub normalizer: NormalizerConfig,
}

impl Default for RuleLabeler {
    fn default() -> Self {
        RuleLabeler::new(Lexicon::default_german(), NormalizerConfig::default())
    }
}

impl RuleLabeler {
    pub fn new(lexicon: Lexicon, normalizer: NormalizerConfig) -> Self {
        RuleLabeler { lexicon, normalizer }
    }

    /// Mentions with their polarities filled in.
    pub fn mentions(&self, doc: &Document) -> Vec<Mention> {
        classified_mentions(doc, &self.lexicon)
    }

    pub fn label_document(&self, doc: &Document) -> ReportLabels {
        aggregate(&self.mentions(doc), &self.lexicon.normalcy, doc)
    }

    pub fn label_report(&self, text: &str) -> Result<ReportLabels> {
        let doc = Document::parse(text, &self.normalizer)?;
        Ok(self.label_document(&doc))
    }

    /// Labels every report in parallel; the result keeps dataset order and
    /// carries the rule source.
    pub fn label_dataset(&self, data: &LabeledDataset) -> Result<LabeledDataset> {
        let reports = data
            .reports()
            .par_iter()
            .map(|r| {
                Ok(Report {
                    id: r.id.clone(),
                    text: r.text.clone(),
                    labels: Some(self.label_report(&r.text)?),
                    source: Source::Rule,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        LabeledDataset::new(reports)
    }
}

fn classified_mentions(doc: &Document, lexicon: &Lexicon) -> Vec<Mention> {
    let mut mentions = extract_mentions(doc, &lexicon.phrases);
    for mention in &mut mentions {
        mention.polarity = classify_mention(mention, &lexicon.cues, doc);
    }
    mentions
}

/// Tokenize, segment, extract, classify and aggregate in one call.
pub fn label_report(text: &str, lexicon: &Lexicon, normalizer: &NormalizerConfig) -> Result<ReportLabels> {
    let doc = Document::parse(text, normalizer)?;
    Ok(aggregate(&classified_mentions(&doc, lexicon), &lexicon.normalcy, &doc))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::error::Error;

    fn labeler() -> RuleLabeler {
        RuleLabeler::default()
    }

    fn doc(text: &str) -> Document {
        Document::parse(text, &NormalizerConfig::default()).unwrap()
    }

    fn only_pneumothorax() -> PhraseLexicon {
        let mut file = LexiconFile::default_german();
        for (finding, phrases) in file.phrases.iter_mut() {
            *phrases = if *finding == Finding::Pneumothorax {
                vec!["pneumothorax".into()]
            } else {
                vec![format!("zzz{}", finding.index())]
            };
        }
        file.compile().unwrap().phrases
    }

    #[test]
    fn single_mention_span() {
        let d = doc("Kein Pneumothorax.");
        let mentions = extract_mentions(&d, &only_pneumothorax());
        assert_eq!(mentions.len(), 1);
        assert_eq!(mentions[0].finding, Finding::Pneumothorax);
        assert_eq!(mentions[0].tokens, 1..2);
        assert_eq!(mentions[0].sentence, 0);
    }

    #[test]
    fn no_lexicon_words_no_mentions() {
        let d = doc("Liegende Aufnahme im Vergleich zur Voraufnahme.");
        assert!(extract_mentions(&d, &labeler().lexicon.phrases).is_empty());
    }

    #[test]
    fn repeated_phrase_gives_two_mentions() {
        let d = doc("Pleuraerguss links, Pleuraerguss rechts.");
        let mentions = extract_mentions(&d, &labeler().lexicon.phrases);
        // hand enumeration: tokens 0 and 3 are the two phrase hits
        let found: Vec<_> = mentions.iter().map(|m| (m.finding, m.tokens.clone())).collect();
        assert_eq!(
            found,
            [(Finding::PleuralEffusion, 0..1), (Finding::PleuralEffusion, 3..4)]
        );
    }

    #[test]
    fn longest_pattern_wins() {
        // "entzündliches Infiltrat" (Pneumonia, 2 tokens) beats "*infiltrat*" (LungOpacity)
        let d = doc("Entzündliches Infiltrat rechts basal.");
        let mentions = extract_mentions(&d, &labeler().lexicon.phrases);
        assert_eq!(mentions.len(), 1);
        assert_eq!(mentions[0].finding, Finding::Pneumonia);
        assert_eq!(mentions[0].tokens, 0..2);
    }

    #[test]
    fn equal_length_ties_yield_one_mention_per_finding() {
        let mut file = LexiconFile::default_german();
        file.phrases.get_mut(&Finding::Pneumonia).unwrap().push("pneumothorax".into());
        let phrases = file.compile().unwrap().phrases;
        let mentions = extract_mentions(&doc("Pneumothorax rechts."), &phrases);
        let findings: Vec<_> = mentions.iter().map(|m| m.finding).collect();
        assert_eq!(findings, [Finding::Pneumonia, Finding::Pneumothorax]);
        assert!(mentions.iter().all(|m| m.tokens == (0..1)));
    }

    fn polarity_of(text: &str, finding: Finding) -> Polarity {
        let l = labeler();
        let d = doc(text);
        l.mentions(&d)
            .into_iter()
            .find(|m| m.finding == finding)
            .unwrap_or_else(|| panic!("no {finding} mention in {text:?}"))
            .polarity
    }

    #[test]
    fn pre_negation() {
        assert_eq!(polarity_of("Kein Pneumothorax.", Finding::Pneumothorax), Polarity::Negative);
    }

    #[test]
    fn uncertainty_abbreviation() {
        assert_eq!(polarity_of("V.a. Pneumonie.", Finding::Pneumonia), Polarity::Uncertain);
    }

    #[test]
    fn hedged_negation_is_uncertain_and_window_limited() {
        let text = "Pneumothorax nicht sicher auszuschließen, kein Erguss.";
        assert_eq!(polarity_of(text, Finding::Pneumothorax), Polarity::Uncertain);
    }

    #[test]
    fn post_negation() {
        assert_eq!(polarity_of("Pneumothorax ausgeschlossen.", Finding::Pneumothorax), Polarity::Negative);
        assert_eq!(polarity_of("Erguss nicht mehr nachweisbar.", Finding::PleuralEffusion), Polarity::Negative);
    }

    #[test]
    fn cue_outside_window_is_ignored() {
        let text = "Kein Nachweis einer frischen knöchernen Verletzung oder Pneumothorax.";
        // "kein" sits 7 tokens before the mention
        assert_eq!(polarity_of(text, Finding::Pneumothorax), Polarity::Positive);
    }

    #[test]
    fn terminator_closes_scope() {
        let text = "Keine Pneumonie, jedoch Atelektase basal.";
        assert_eq!(polarity_of(text, Finding::Pneumonia), Polarity::Negative);
        assert_eq!(polarity_of(text, Finding::Atelectasis), Polarity::Positive);
    }

    #[test]
    fn cues_do_not_cross_sentences() {
        let text = "Kein Erguss. Pneumothorax rechts.";
        assert_eq!(polarity_of(text, Finding::Pneumothorax), Polarity::Positive);
    }

    #[test]
    fn positive_beats_negative() {
        let labels = labeler()
            .label_report("Kein Pneumothorax links. Pneumothorax rechts.")
            .unwrap();
        assert_eq!(labels.get(Finding::Pneumothorax), LabelValue::Positive);
    }

    /// Precedence law against an independent rank table, over every
    /// polarity multiset of size at most 4.
    #[test]
    fn fold_matches_precedence_table_exhaustively() {
        fn oracle(ps: &[Polarity]) -> LabelValue {
            let has = |p| ps.contains(&p);
            if ps.is_empty() {
                LabelValue::Blank
            } else if has(Polarity::Positive) {
                LabelValue::Positive
            } else if has(Polarity::Uncertain) {
                LabelValue::Uncertain
            } else {
                LabelValue::Negative
            }
        }
        let mut checked = 0;
        for size in 0..=4u32 {
            for code in 0..3usize.pow(size) {
                let mut c = code;
                let ps: Vec<Polarity> = (0..size)
                    .map(|_| {
                        let p = Polarity::ALL[c % 3];
                        c /= 3;
                        p
                    })
                    .collect();
                assert_eq!(fold_polarities(ps.iter().copied()), oracle(&ps), "{ps:?}");
                checked += 1;
            }
        }
        assert_eq!(checked, 1 + 3 + 9 + 27 + 81);
    }

    #[test]
    fn nothing_mentioned_is_all_blank() {
        let labels = labeler().label_report("Liegende Aufnahme.").unwrap();
        assert_eq!(labels, ReportLabels::all_blank());
    }

    #[test]
    fn normal_statement_sets_no_finding() {
        let labels = labeler()
            .label_report("Unauffälliger Herz-Lungen-Befund.")
            .unwrap();
        assert_eq!(labels, ReportLabels::all_blank().with(Finding::NoFinding, LabelValue::Positive));
    }

    #[test]
    fn normal_statement_with_negations_keeps_no_finding() {
        let labels = labeler()
            .label_report("Kein Pneumothorax. Kein Erguss. Unauffälliger Herz-Lungen-Befund.")
            .unwrap();
        assert_eq!(labels.get(Finding::NoFinding), LabelValue::Positive);
        assert_eq!(labels.get(Finding::Pneumothorax), LabelValue::Negative);
    }

    #[test]
    fn abnormal_finding_blocks_no_finding() {
        for text in [
            "Pneumothorax rechts. Ansonsten unauffälliger Herz-Lungen-Befund.",
            "V.a. Pneumonie. Ansonsten unauffälliger Herz-Lungen-Befund.",
        ] {
            let labels = labeler().label_report(text).unwrap();
            assert_eq!(labels.get(Finding::NoFinding), LabelValue::Blank, "{text}");
        }
    }

    #[test]
    fn empty_text_propagates() {
        assert!(matches!(labeler().label_report(""), Err(Error::EmptyText)));
    }

    #[test]
    fn free_function_agrees_with_labeler() {
        let l = labeler();
        let text = "V.a. Pneumonie rechts. Kein Erguss. ZVK regelrecht.";
        assert_eq!(
            label_report(text, &l.lexicon, &l.normalizer).unwrap(),
            l.label_report(text).unwrap()
        );
    }
}
