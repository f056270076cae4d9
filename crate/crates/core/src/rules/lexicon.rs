//! Phrase, cue and normalcy lexicons.
//!
//! Patterns are written the way report text is written; they are run
//! through the same tokenizer, so "v.a." becomes `v . a .` and
//! "herz-lungen-befund" becomes `herz - lungen - befund`. A `*` glued to
//! the end of a word allows any suffix, a `*` glued to its start allows
//! any prefix.

use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::schema::{Finding, NUM_FINDINGS};
use crate::text::{tokenize, Token};

#[derive(Debug, Clone, PartialEq, Eq)]
struct Element {
    form: String,
    any_prefix: bool,
    any_suffix: bool,
}

impl Element {
    fn matches(&self, matchform: &str) -> bool {
        match (self.any_prefix, self.any_suffix) {
            (false, false) => matchform == self.form,
            (false, true) => matchform.starts_with(&self.form),
            (true, false) => matchform.ends_with(&self.form),
            (true, true) => matchform.contains(&self.form),
        }
    }

    fn is_exact(&self) -> bool {
        !self.any_prefix && !self.any_suffix
    }
}

/// A compiled token-sequence pattern.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Pattern {
    source: String,
    elements: Vec<Element>,
}

impl Pattern {
    pub fn parse(source: &str) -> Result<Pattern> {
        let tokens = tokenize(&source.to_lowercase());
        let mut elements: Vec<Element> = Vec::new();
        let mut pending_prefix = false;
        for (i, token) in tokens.iter().enumerate() {
            if token.surface == "*" {
                let glued_left = i > 0
                    && tokens[i - 1].span.end == token.span.start
                    && tokens[i - 1].surface != "*";
                let glued_right = tokens
                    .get(i + 1)
                    .is_some_and(|next| next.span.start == token.span.end && next.surface != "*");
                if glued_left {
                    elements.last_mut().expect("glued element").any_suffix = true;
                } else if glued_right {
                    pending_prefix = true;
                } else {
                    return Err(Error::Lexicon(format!(
                        "pattern `{source}`: `*` must be attached to a word"
                    )));
                }
                continue;
            }
            elements.push(Element {
                form: token.matchform.clone(),
                any_prefix: std::mem::take(&mut pending_prefix),
                any_suffix: false,
            });
        }
        if elements.is_empty() {
            return Err(Error::Lexicon(format!("pattern `{source}` is empty")));
        }
        Ok(Pattern {
            source: source.to_string(),
            elements,
        })
    }

    pub fn len(&self) -> usize {
        self.elements.len()
    }

    pub fn is_empty(&self) -> bool {
        self.elements.is_empty()
    }

    pub fn source(&self) -> &str {
        &self.source
    }

    /// Whether the pattern matches the tokens starting at `at`.
    pub fn matches_at(&self, tokens: &[Token], at: usize) -> bool {
        let end = at + self.elements.len();
        end <= tokens.len()
            && self
                .elements
                .iter()
                .zip(&tokens[at..end])
                .all(|(e, t)| e.matches(&t.matchform))
    }

    /// Start positions of every match lying entirely inside `range`.
    pub fn occurrences<'a>(
        &'a self,
        tokens: &'a [Token],
        range: std::ops::Range<usize>,
    ) -> impl Iterator<Item = usize> + 'a {
        let last = range.end.saturating_sub(self.len());
        (range.start..=last)
            .filter(move |&p| p + self.len() <= range.end && self.matches_at(tokens, p))
    }

    fn exact_head(&self) -> Option<&str> {
        let first = &self.elements[0];
        first.is_exact().then_some(first.form.as_str())
    }
}

fn compile_all(sources: &[String], what: &str) -> Result<Vec<Pattern>> {
    sources
        .iter()
        .map(|s| Pattern::parse(s).map_err(|e| Error::Lexicon(format!("{what}: {e}"))))
        .collect()
}

/// Finding phrase patterns, indexed by their first element for scanning.
#[derive(Debug, Clone)]
pub struct PhraseLexicon {
    patterns: Vec<(Finding, Pattern)>,
    by_head: HashMap<String, Vec<usize>>,
    wildcard_heads: Vec<usize>,
}

impl PhraseLexicon {
    pub fn new(patterns: Vec<(Finding, Pattern)>) -> Result<Self> {
        let mut covered = [false; NUM_FINDINGS];
        let mut by_head: HashMap<String, Vec<usize>> = HashMap::new();
        let mut wildcard_heads = Vec::new();
        for (i, (finding, pattern)) in patterns.iter().enumerate() {
            if finding.is_no_finding() {
                return Err(Error::Lexicon(
                    "NoFinding is driven by normalcy statements and takes no phrases".into(),
                ));
            }
            covered[finding.index()] = true;
            match pattern.exact_head() {
                Some(head) => by_head.entry(head.to_string()).or_default().push(i),
                None => wildcard_heads.push(i),
            }
        }
        for finding in Finding::ALL {
            if !finding.is_no_finding() && !covered[finding.index()] {
                return Err(Error::Lexicon(format!("no phrase patterns for {finding}")));
            }
        }
        Ok(PhraseLexicon {
            patterns,
            by_head,
            wildcard_heads,
        })
    }

    pub fn patterns(&self) -> &[(Finding, Pattern)] {
        &self.patterns
    }

    /// Indices of patterns that may match at a token with this matchform.
    pub(crate) fn candidates<'a>(&'a self, matchform: &str) -> impl Iterator<Item = usize> + 'a {
        self.by_head
            .get(matchform)
            .into_iter()
            .flatten()
            .chain(&self.wildcard_heads)
            .copied()
    }

    pub(crate) fn pattern(&self, index: usize) -> &(Finding, Pattern) {
        &self.patterns[index]
    }
}

#[derive(Debug, Clone)]
pub struct CueLexicon {
    pub pre_negation: Vec<Pattern>,
    pub post_negation: Vec<Pattern>,
    pub uncertainty: Vec<Pattern>,
    /// Tokens that close a cue's scope (e.g. "aber").
    pub terminators: Vec<Pattern>,
    pub pre_window: usize,
    pub post_window: usize,
}

#[derive(Debug, Clone)]
pub struct NormalcyLexicon {
    pub patterns: Vec<Pattern>,
}

/// The three lexicons the rule labeler needs.
#[derive(Debug, Clone)]
pub struct Lexicon {
    pub phrases: PhraseLexicon,
    pub cues: CueLexicon,
    pub normalcy: NormalcyLexicon,
}

fn default_window() -> usize {
    5
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CueFile {
    pub pre_negation: Vec<String>,
    pub post_negation: Vec<String>,
    pub uncertainty: Vec<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub terminators: Vec<String>,
    #[serde(default = "default_window")]
    pub pre_window: usize,
    #[serde(default = "default_window")]
    pub post_window: usize,
}

/// On-disk JSON form of a [`Lexicon`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LexiconFile {
    pub phrases: BTreeMap<Finding, Vec<String>>,
    pub cues: CueFile,
    pub normalcy: Vec<String>,
}

const DEFAULT_LEXICON: &str = include_str!("../../data/default_lexicon.json");

impl LexiconFile {
    pub fn default_german() -> LexiconFile {
        serde_json::from_str(DEFAULT_LEXICON).expect("bundled lexicon is valid JSON")
    }

    pub fn compile(&self) -> Result<Lexicon> {
        let mut patterns = Vec::new();
        for (finding, sources) in &self.phrases {
            for pattern in compile_all(sources, finding.name())? {
                patterns.push((*finding, pattern));
            }
        }
        let phrases = PhraseLexicon::new(patterns)?;

        let c = &self.cues;
        if c.pre_window == 0 || c.post_window == 0 {
            return Err(Error::Lexicon("cue windows must be at least 1".into()));
        }
        for (name, list) in [
            ("pre_negation", &c.pre_negation),
            ("post_negation", &c.post_negation),
            ("uncertainty", &c.uncertainty),
        ] {
            if list.is_empty() {
                return Err(Error::Lexicon(format!("cue list `{name}` is empty")));
            }
        }
        let cues = CueLexicon {
            pre_negation: compile_all(&c.pre_negation, "pre_negation")?,
            post_negation: compile_all(&c.post_negation, "post_negation")?,
            uncertainty: compile_all(&c.uncertainty, "uncertainty")?,
            terminators: compile_all(&c.terminators, "terminators")?,
            pre_window: c.pre_window,
            post_window: c.post_window,
        };

        if self.normalcy.is_empty() {
            return Err(Error::Lexicon("normalcy list is empty".into()));
        }
        let normalcy = NormalcyLexicon {
            patterns: compile_all(&self.normalcy, "normalcy")?,
        };
        Ok(Lexicon {
            phrases,
            cues,
            normalcy,
        })
    }
}

impl Lexicon {
    pub fn default_german() -> Lexicon {
        LexiconFile::default_german()
            .compile()
            .expect("bundled lexicon compiles")
    }

    pub fn from_json_file(path: &Path) -> Result<Lexicon> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let file: LexiconFile =
            serde_json::from_str(&text).map_err(|e| Error::Lexicon(format!("{}: {e}", path.display())))?;
        file.compile()
    }
}
