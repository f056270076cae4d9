use std::path::Path;

use serde::{Deserialize, Serialize};

use super::encoder::EncoderConfig;
use super::params::{ModelDims, ModelParams};
use super::train::{Regime, TrainConfig};
use crate::error::{Error, Result};
use crate::text::NormalizerConfig;

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"RLCK";
pub const CHECKPOINT_VERSION: u32 = 1;

/// A trained model with everything needed to reproduce its predictions.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub encoder: EncoderConfig,
    pub normalizer: NormalizerConfig,
    pub train: TrainConfig,
    pub regime: Regime,
    /// Optimizer step at which the parameters were taken.
    pub step: u64,
    /// Validation selection metric at that step.
    pub metric: f64,
    pub params: ModelParams,
}

#[derive(Serialize, Deserialize)]
struct Header {
    version: u32,
    encoder: EncoderConfig,
    normalizer: NormalizerConfig,
    train: TrainConfig,
    regime: Regime,
    step: u64,
    metric: f64,
    dims: ModelDims,
}

fn bad(message: impl Into<String>) -> Error {
    Error::Checkpoint(message.into())
}

impl Checkpoint {
    /// Layout: magic, version (u32 LE), header length (u64 LE), JSON
    /// header, then the parameters as little-endian f64.
    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let header = serde_json::to_vec(&Header {
            version: CHECKPOINT_VERSION,
            encoder: self.encoder.clone(),
            normalizer: self.normalizer.clone(),
            train: self.train.clone(),
            regime: self.regime,
            step: self.step,
            metric: self.metric,
            dims: self.params.dims(),
        })?;
        let params = self.params.as_slice();
        let mut out = Vec::with_capacity(16 + header.len() + params.len() * 8);
        out.extend_from_slice(CHECKPOINT_MAGIC);
        out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
        out.extend_from_slice(&(header.len() as u64).to_le_bytes());
        out.extend_from_slice(&header);
        for p in params {
            out.extend_from_slice(&p.to_le_bytes());
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Checkpoint> {
        if bytes.len() < 16 || &bytes[..4] != CHECKPOINT_MAGIC {
            return Err(bad("not a checkpoint file"));
        }
        let version = u32::from_le_bytes(bytes[4..8].try_into().expect("4 bytes"));
        if version != CHECKPOINT_VERSION {
            return Err(bad(format!("unsupported checkpoint version {version}")));
        }
        let header_len = u64::from_le_bytes(bytes[8..16].try_into().expect("8 bytes"));
        let header_end = usize::try_from(header_len)
            .ok()
            .and_then(|n| n.checked_add(16))
            .filter(|&end| end <= bytes.len())
            .ok_or_else(|| bad("truncated header"))?;
        let header: Header =
            serde_json::from_slice(&bytes[16..header_end]).map_err(|e| bad(format!("invalid header: {e}")))?;
        if header.version != version {
            return Err(bad("header version disagrees with file version"));
        }
        header.encoder.validate()?;
        if header.dims.input != header.encoder.dim {
            return Err(bad("parameter input width differs from encoder dim"));
        }
        let body = &bytes[header_end..];
        let expected = header.dims.len();
        if body.len() != expected * 8 {
            return Err(bad(format!(
                "expected {expected} parameters, found {} bytes",
                body.len()
            )));
        }
        let data = body
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect();
        Ok(Checkpoint {
            encoder: header.encoder,
            normalizer: header.normalizer,
            train: header.train,
            regime: header.regime,
            step: header.step,
            metric: header.metric,
            params: ModelParams::from_raw(header.dims, data)?,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Checkpoint> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Checkpoint::from_bytes(&bytes)
    }
}
