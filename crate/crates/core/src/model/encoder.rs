use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::text::{tokenize, truncate, NormalizerConfig, Token};

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

fn fnv_extend(hash: u64, bytes: &[u8]) -> u64 {
    bytes
        .iter()
        .fold(hash, |h, &b| (h ^ u64::from(b)).wrapping_mul(FNV_PRIME))
}

/// 64-bit FNV-1a.
pub fn fnv1a64(bytes: &[u8]) -> u64 {
    fnv_extend(FNV_OFFSET, bytes)
}

/// Hash of a feature key under `seed`: FNV-1a over the seed's little-endian
/// bytes followed by the key's UTF-8 bytes.
pub fn feature_hash(seed: u64, key: &str) -> u64 {
    fnv_extend(fnv1a64(&seed.to_le_bytes()), key.as_bytes())
}

/// Prefix that keeps character n-gram keys apart from word keys.
pub const CHAR_KEY_PREFIX: char = '\u{1}';

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct EncoderConfig {
    /// Number of hash buckets; a power of two.
    pub dim: usize,
    pub word_orders: Vec<usize>,
    /// Character n-gram orders within `<token>`-bracketed words.
    pub char_orders: Vec<usize>,
    pub seed: u64,
    pub normalize: bool,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        EncoderConfig {
            dim: 1 << 16,
            word_orders: vec![1, 2],
            char_orders: vec![3, 4],
            seed: 0,
            normalize: true,
        }
    }
}

impl EncoderConfig {
    pub fn validate(&self) -> Result<()> {
        if self.dim < 2 || !self.dim.is_power_of_two() || self.dim > u32::MAX as usize {
            return Err(Error::Config("encoder dim must be a power of two in [2, 2^32)".into()));
        }
        if self.word_orders.is_empty() && self.char_orders.is_empty() {
            return Err(Error::Config("encoder needs at least one n-gram order".into()));
        }
        if self.word_orders.iter().chain(&self.char_orders).any(|&n| n == 0) {
            return Err(Error::Config("n-gram orders must be at least 1".into()));
        }
        Ok(())
    }

    fn bucket(&self, key: &str) -> u32 {
        (feature_hash(self.seed, key) & (self.dim as u64 - 1)) as u32
    }
}

/// Sparse vector with strictly increasing indices.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SparseVector {
    pub indices: Vec<u32>,
    pub values: Vec<f64>,
}

impl SparseVector {
    /// Builds from unsorted (index, value) pairs, summing duplicates.
    pub fn from_pairs(mut pairs: Vec<(u32, f64)>) -> SparseVector {
        pairs.sort_by_key(|p| p.0);
        let mut out = SparseVector::default();
        for (i, v) in pairs {
            if out.indices.last() == Some(&i) {
                *out.values.last_mut().expect("parallel vectors") += v;
            } else {
                out.indices.push(i);
                out.values.push(v);
            }
        }
        out
    }

    pub fn nnz(&self) -> usize {
        self.indices.len()
    }

    pub fn is_zero(&self) -> bool {
        self.values.iter().all(|&v| v == 0.0)
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.indices.iter().map(|&i| i as usize).zip(self.values.iter().copied())
    }

    pub fn norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn to_dense(&self, dim: usize) -> Vec<f64> {
        let mut dense = vec![0.0; dim];
        for (i, v) in self.iter() {
            dense[i] = v;
        }
        dense
    }

    pub fn max_index(&self) -> Option<usize> {
        self.indices.last().map(|&i| i as usize)
    }
}

/// Hashed n-gram counts over token matchforms.
///
/// Word n-grams join matchforms with a space; character n-grams run over
/// each word token wrapped as `<token>`.
pub fn encode(tokens: &[Token], config: &EncoderConfig) -> SparseVector {
    let mut pairs: Vec<(u32, f64)> = Vec::new();
    let forms: Vec<&str> = tokens.iter().map(|t| t.matchform.as_str()).collect();
    let mut key = String::new();
    for &n in &config.word_orders {
        for window in forms.windows(n) {
            key.clear();
            for (k, form) in window.iter().enumerate() {
                if k > 0 {
                    key.push(' ');
                }
                key.push_str(form);
            }
            pairs.push((config.bucket(&key), 1.0));
        }
    }
    if !config.char_orders.is_empty() {
        for token in tokens.iter().filter(|t| t.is_word()) {
            let chars: Vec<char> = std::iter::once('<')
                .chain(token.matchform.chars())
                .chain(std::iter::once('>'))
                .collect();
            for &n in &config.char_orders {
                for gram in chars.windows(n) {
                    key.clear();
                    key.push(CHAR_KEY_PREFIX);
                    key.extend(gram);
                    pairs.push((config.bucket(&key), 1.0));
                }
            }
        }
    }
    let mut vector = SparseVector::from_pairs(pairs);
    if config.normalize {
        let norm = vector.norm();
        if norm > 0.0 {
            vector.values.iter_mut().for_each(|v| *v /= norm);
        }
    }
    vector
}

/// Tokenizes, truncates to `normalizer.max_tokens` and encodes.
pub fn encode_text(text: &str, encoder: &EncoderConfig, normalizer: &NormalizerConfig) -> SparseVector {
    let tokens = tokenize(text);
    encode(truncate(&tokens, normalizer), encoder)
}
