//! Binary checkpoint: 8-byte magic, little-endian u32 metadata length, JSON
//! metadata, then the raw little-endian f64 parameter and EMA arrays.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{BsiError, Result};
use crate::predictor::PredictorSpec;

pub const MAGIC: &[u8; 8] = b"BSICKPT1";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub spec: PredictorSpec,
    pub lambda0: f64,
    pub lambda_m: f64,
    pub alpha_r: f64,
    pub step: u64,
    pub seed: u64,
    pub params: Vec<f64>,
    pub ema: Vec<f64>,
}

#[derive(Debug, Serialize, Deserialize)]
struct Metadata {
    version: u32,
    spec: PredictorSpec,
    lambda0: f64,
    lambda_m: f64,
    alpha_r: f64,
    step: u64,
    seed: u64,
    params_len: usize,
    ema_len: usize,
}

fn format_err(offset: usize, message: impl Into<String>) -> BsiError {
    BsiError::Format {
        offset: offset as u64,
        message: message.into(),
    }
}

impl Checkpoint {
    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let meta = Metadata {
            version: FORMAT_VERSION,
            spec: self.spec.clone(),
            lambda0: self.lambda0,
            lambda_m: self.lambda_m,
            alpha_r: self.alpha_r,
            step: self.step,
            seed: self.seed,
            params_len: self.params.len(),
            ema_len: self.ema.len(),
        };
        let json = serde_json::to_vec(&meta)?;
        let json_len = u32::try_from(json.len())
            .map_err(|_| BsiError::Contract("checkpoint metadata too large".into()))?;
        let mut out =
            Vec::with_capacity(12 + json.len() + 8 * (self.params.len() + self.ema.len()));
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&json_len.to_le_bytes());
        out.extend_from_slice(&json);
        for v in self.params.iter().chain(&self.ema) {
            out.extend_from_slice(&v.to_le_bytes());
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < MAGIC.len() || &bytes[..MAGIC.len()] != MAGIC {
            return Err(format_err(0, "bad magic, not a checkpoint file"));
        }
        let len_end = MAGIC.len() + 4;
        if bytes.len() < len_end {
            return Err(format_err(
                bytes.len(),
                format!(
                    "truncated: missing {} bytes of metadata length",
                    len_end - bytes.len()
                ),
            ));
        }
        let json_len =
            u32::from_le_bytes(bytes[MAGIC.len()..len_end].try_into().expect("four bytes"))
                as usize;
        let json_end = len_end + json_len;
        if bytes.len() < json_end {
            return Err(format_err(
                bytes.len(),
                format!(
                    "truncated: missing {} bytes of metadata",
                    json_end - bytes.len()
                ),
            ));
        }
        let meta: Metadata = serde_json::from_slice(&bytes[len_end..json_end])
            .map_err(|e| format_err(len_end, format!("metadata: {e}")))?;
        if meta.version != FORMAT_VERSION {
            return Err(format_err(
                len_end,
                format!("unsupported version {}", meta.version),
            ));
        }
        let expected = meta.spec.param_count();
        if meta.params_len != expected || meta.ema_len != expected {
            return Err(format_err(
                len_end,
                format!(
                    "array lengths {}/{} do not match the {} parameters of the predictor spec",
                    meta.params_len, meta.ema_len, expected
                ),
            ));
        }
        let need = json_end + 8 * (meta.params_len + meta.ema_len);
        if bytes.len() < need {
            return Err(format_err(
                bytes.len(),
                format!(
                    "truncated: missing {} bytes of parameter data",
                    need - bytes.len()
                ),
            ));
        }
        if bytes.len() > need {
            return Err(format_err(
                need,
                format!("{} trailing bytes", bytes.len() - need),
            ));
        }
        let floats: Vec<f64> = bytes[json_end..need]
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("eight bytes")))
            .collect();
        let (params, ema) = floats.split_at(meta.params_len);
        Ok(Self {
            spec: meta.spec,
            lambda0: meta.lambda0,
            lambda_m: meta.lambda_m,
            alpha_r: meta.alpha_r,
            step: meta.step,
            seed: meta.seed,
            params: params.to_vec(),
            ema: ema.to_vec(),
        })
    }
}

pub fn save_checkpoint(path: impl AsRef<Path>, ckpt: &Checkpoint) -> Result<()> {
    std::fs::write(path, ckpt.to_bytes()?)?;
    Ok(())
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<Checkpoint> {
    Checkpoint::from_bytes(&std::fs::read(path)?)
}
