//! Tokenization, sentence segmentation and truncation for German report text.
//!
//! Offsets are counted in Unicode scalar values. A token is either a maximal
//! run of letters and digits or a single punctuation character, so hyphenated
//! compounds such as "Pleura-Erguss" become three tokens.

use std::collections::HashSet;
use std::ops::Range;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Token {
    pub surface: String,
    /// Lowercased surface. Umlauts and ß are kept as they are.
    pub matchform: String,
    /// Half-open character interval into the source text.
    pub span: Range<usize>,
    /// Byte interval of the same slice.
    pub byte_span: Range<usize>,
    /// Newlines in the whitespace between the previous token and this one.
    pub newlines_before: u32,
}

impl Token {
    pub fn is_word(&self) -> bool {
        self.surface.chars().next().is_some_and(is_word_char)
    }

    fn adjacent_to(&self, next: &Token) -> bool {
        self.span.end == next.span.start
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Sentence {
    /// Half-open range of token indices.
    pub tokens: Range<usize>,
    /// Character interval covered from the first to the last token.
    pub span: Range<usize>,
}

fn default_max_tokens() -> usize {
    512
}

fn default_abbreviations() -> Vec<String> {
    [
        "v.a.", "z.n.", "bds.", "ca.", "re.", "li.", "dd.", "bzw.", "ggf.", "evtl.", "z.b.",
        "u.a.", "d.h.", "i.s.", "i.v.", "a.p.", "p.a.", "lat.", "vs.", "mm.", "max.", "min.",
        "st.", "nr.", "sog.", "inkl.", "insb.", "vgl.", "zust.", "ehem.", "li.lat.", "re.lat.",
        "a.e.",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect()
}

fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormalizerConfig {
    #[serde(default = "default_max_tokens")]
    pub max_tokens: usize,
    /// Abbreviations (lowercase, including their trailing period) after
    /// which a period does not end a sentence.
    #[serde(default = "default_abbreviations")]
    pub abbreviations: Vec<String>,
    /// Treat a period after a one- or two-digit number as an ordinal
    /// ("7. Rippe") rather than a sentence end.
    #[serde(default = "default_true")]
    pub ordinal_periods: bool,
}

impl Default for NormalizerConfig {
    fn default() -> Self {
        NormalizerConfig {
            max_tokens: default_max_tokens(),
            abbreviations: default_abbreviations(),
            ordinal_periods: true,
        }
    }
}

impl NormalizerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_tokens == 0 {
            return Err(Error::Config("max_tokens must be at least 1".into()));
        }
        Ok(())
    }

    pub fn from_json_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let config: NormalizerConfig = serde_json::from_str(&text)?;
        config.validate()?;
        Ok(config)
    }

    pub fn with_abbreviation(mut self, abbreviation: &str) -> Self {
        self.abbreviations.push(abbreviation.to_lowercase());
        self
    }
}

fn is_word_char(c: char) -> bool {
    // Combining diacritics keep decomposed umlauts inside their word.
    c.is_alphanumeric() || ('\u{300}'..='\u{36f}').contains(&c)
}

pub fn tokenize(text: &str) -> Vec<Token> {
    let mut tokens = Vec::new();
    let mut newlines = 0u32;
    // (char start, byte start) of the word run being built
    let mut run: Option<(usize, usize)> = None;
    let mut char_pos = 0usize;

    let push = |tokens: &mut Vec<Token>, chars: Range<usize>, bytes: Range<usize>, nl: &mut u32| {
        let surface = text[bytes.clone()].to_string();
        tokens.push(Token {
            matchform: surface.to_lowercase(),
            surface,
            span: chars,
            byte_span: bytes,
            newlines_before: std::mem::take(nl),
        });
    };

    for (byte_pos, c) in text.char_indices() {
        if is_word_char(c) {
            if run.is_none() {
                run = Some((char_pos, byte_pos));
            }
        } else {
            if let Some((cs, bs)) = run.take() {
                push(&mut tokens, cs..char_pos, bs..byte_pos, &mut newlines);
            }
            if c.is_whitespace() {
                if c == '\n' {
                    newlines = newlines.saturating_add(1);
                }
            } else {
                push(
                    &mut tokens,
                    char_pos..char_pos + 1,
                    byte_pos..byte_pos + c.len_utf8(),
                    &mut newlines,
                );
            }
        }
        char_pos += 1;
    }
    if let Some((cs, bs)) = run {
        push(&mut tokens, cs..char_pos, bs..text.len(), &mut newlines);
    }
    tokens
}

fn is_terminal(token: &Token) -> bool {
    matches!(token.surface.as_str(), "." | "!" | "?")
}

struct AbbreviationSet {
    entries: HashSet<String>,
    max_chars: usize,
}

impl AbbreviationSet {
    fn new(config: &NormalizerConfig) -> Self {
        let entries: HashSet<String> =
            config.abbreviations.iter().map(|a| a.to_lowercase()).collect();
        let max_chars = entries.iter().map(|a| a.chars().count()).max().unwrap_or(0);
        AbbreviationSet { entries, max_chars }
    }

    /// Whether the period at `end` closes an abbreviation made of the
    /// adjacent tokens before it.
    fn closes_abbreviation(&self, tokens: &[Token], end: usize) -> bool {
        let mut form = tokens[end].matchform.clone();
        let mut chars = form.chars().count();
        let mut start = end;
        while start > 0 && tokens[start - 1].adjacent_to(&tokens[start]) {
            start -= 1;
            chars += tokens[start].span.len();
            if chars > self.max_chars {
                break;
            }
            form.insert_str(0, &tokens[start].matchform);
            if self.entries.contains(&form) {
                return true;
            }
        }
        false
    }
}

fn is_ordinal_period(tokens: &[Token], i: usize) -> bool {
    if i == 0 || tokens[i].surface != "." || !tokens[i - 1].adjacent_to(&tokens[i]) {
        return false;
    }
    let prev = &tokens[i - 1].surface;
    let short_number = prev.len() <= 2 && prev.chars().all(|c| c.is_ascii_digit());
    let followed_by_word = tokens
        .get(i + 1)
        .is_some_and(|t| t.newlines_before == 0 && t.is_word());
    short_number && followed_by_word
}

pub fn split_sentences(tokens: &[Token], config: &NormalizerConfig) -> Vec<Sentence> {
    let abbreviations = AbbreviationSet::new(config);
    let mut sentences = Vec::new();
    let mut start = 0usize;

    let close = |sentences: &mut Vec<Sentence>, from: usize, to: usize| {
        if from < to {
            sentences.push(Sentence {
                tokens: from..to,
                span: tokens[from].span.start..tokens[to - 1].span.end,
            });
        }
    };

    let mut i = 0usize;
    while i < tokens.len() {
        if i > start && tokens[i].newlines_before >= 2 {
            close(&mut sentences, start, i);
            start = i;
        }
        if is_terminal(&tokens[i]) {
            // "V.a" style: a period glued to the following word is internal
            let glued = tokens
                .get(i + 1)
                .is_some_and(|next| tokens[i].adjacent_to(next) && next.is_word());
            let suppressed = glued
                || (tokens[i].surface == "." && abbreviations.closes_abbreviation(tokens, i))
                || (config.ordinal_periods && is_ordinal_period(tokens, i));
            if !suppressed {
                let mut end = i + 1;
                while end < tokens.len()
                    && is_terminal(&tokens[end])
                    && tokens[end - 1].adjacent_to(&tokens[end])
                {
                    end += 1;
                }
                close(&mut sentences, start, end);
                start = end;
                i = end;
                continue;
            }
        }
        i += 1;
    }
    close(&mut sentences, start, tokens.len());
    sentences
}

/// The first `config.max_tokens` tokens.
pub fn truncate<'a>(tokens: &'a [Token], config: &NormalizerConfig) -> &'a [Token] {
    &tokens[..tokens.len().min(config.max_tokens)]
}

/// A tokenized, sentence-segmented report.
#[derive(Debug, Clone)]
pub struct Document {
    pub tokens: Vec<Token>,
    pub sentences: Vec<Sentence>,
}

impl Document {
    pub fn parse(text: &str, config: &NormalizerConfig) -> Result<Self> {
        if text.is_empty() {
            return Err(Error::EmptyText);
        }
        let tokens = tokenize(text);
        let sentences = split_sentences(&tokens, config);
        Ok(Document { tokens, sentences })
    }

    pub fn sentence_tokens(&self, index: usize) -> &[Token] {
        &self.tokens[self.sentences[index].tokens.clone()]
    }
}
