//! Binary checkpoint container.
//!
//! Layout (all integers and floats little-endian):
//!
//! ```text
//! "EBOX1"                       magic, 5 bytes
//! u32 version                   currently 1
//! u8  conditioning mode         0 = features, 1 = labels
//! u32 vocab, hidden, conditioning_dim, layers
//! f32 dropout
//! u64 training seed
//! u32 epochs completed
//! u64 adam step
//! f64 lr, beta1, beta2, epsilon
//! u32 tensor count N
//! N × (u64 length, length × f32)     parameters, in ModelParams::tensors order
//! N × (u64 length, length × f32)     Adam first moments
//! N × (u64 length, length × f32)     Adam second moments
//! u32 CRC-32 of every preceding byte
//! ```

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use thiserror::Error;

use super::adam::AdamState;
use super::params::{ModelConfig, ModelParams};

pub const MAGIC: &[u8; 5] = b"EBOX1";
pub const VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("not a checkpoint (bad magic)")]
    BadMagic,
    #[error("unsupported checkpoint version {0}")]
    VersionMismatch(u32),
    #[error("checkpoint checksum mismatch")]
    ChecksumMismatch,
    #[error("checkpoint truncated")]
    Truncated,
    #[error("checkpoint inconsistent: {0}")]
    Inconsistent(String),
    #[error("checkpoint I/O: {0}")]
    Io(#[from] std::io::Error),
}

/// What the model's conditioning input carries.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ConditioningMode {
    /// Pitch histogram, density one-hot and a zero (25 values).
    #[default]
    Features,
    /// Emotion one-hot (4 values).
    Labels,
}

impl ConditioningMode {
    pub fn dim(self) -> usize {
        match self {
            ConditioningMode::Features => crate::features::CONDITIONING_DIM,
            ConditioningMode::Labels => 4,
        }
    }

    pub fn model_config(self) -> ModelConfig {
        match self {
            ConditioningMode::Features => ModelConfig::features(),
            ConditioningMode::Labels => ModelConfig::labels(),
        }
    }
}

impl fmt::Display for ConditioningMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ConditioningMode::Features => "features",
            ConditioningMode::Labels => "labels",
        })
    }
}

impl FromStr for ConditioningMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "features" => Ok(ConditioningMode::Features),
            "labels" => Ok(ConditioningMode::Labels),
            _ => Err(format!("unknown mode {s:?} (expected features or labels)")),
        }
    }
}

/// Everything needed to resume training or generate.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub mode: ConditioningMode,
    pub params: ModelParams<f32>,
    pub adam: AdamState<f32>,
    pub seed: u64,
    pub epochs_completed: u32,
}

impl Checkpoint {
    pub fn to_bytes(&self) -> Vec<u8> {
        let c = self.params.config;
        let mut out = Vec::with_capacity(64 + 12 * self.params.parameter_count());
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.push(match self.mode {
            ConditioningMode::Features => 0,
            ConditioningMode::Labels => 1,
        });
        for d in [c.vocab, c.hidden, c.conditioning_dim, c.layers] {
            out.extend_from_slice(&(d as u32).to_le_bytes());
        }
        out.extend_from_slice(&c.dropout.to_le_bytes());
        out.extend_from_slice(&self.seed.to_le_bytes());
        out.extend_from_slice(&self.epochs_completed.to_le_bytes());
        out.extend_from_slice(&self.adam.step.to_le_bytes());
        for h in [self.adam.lr, self.adam.beta1, self.adam.beta2, self.adam.epsilon] {
            out.extend_from_slice(&h.to_le_bytes());
        }
        let tensors = self.params.tensors();
        out.extend_from_slice(&(tensors.len() as u32).to_le_bytes());
        let moments = self.adam.m.iter().chain(&self.adam.v).map(|v| v.as_slice());
        for t in tensors.into_iter().chain(moments) {
            out.extend_from_slice(&(t.len() as u64).to_le_bytes());
            for v in t {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        let crc = crc32fast::hash(&out);
        out.extend_from_slice(&crc.to_le_bytes());
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, CheckpointError> {
        if bytes.len() < MAGIC.len() || &bytes[..MAGIC.len()] != MAGIC {
            return Err(CheckpointError::BadMagic);
        }
        let mut r = Cursor { data: bytes, pos: MAGIC.len() };
        let version = r.u32()?;
        if version != VERSION {
            return Err(CheckpointError::VersionMismatch(version));
        }
        if bytes.len() < MAGIC.len() + 8 {
            return Err(CheckpointError::Truncated);
        }
        let (body, crc) = bytes.split_at(bytes.len() - 4);
        if crc32fast::hash(body) != u32::from_le_bytes(crc.try_into().unwrap()) {
            return Err(CheckpointError::ChecksumMismatch);
        }
        r.data = body;

        let mode = match r.u8()? {
            0 => ConditioningMode::Features,
            1 => ConditioningMode::Labels,
            m => return Err(CheckpointError::Inconsistent(format!("unknown mode {m}"))),
        };
        let vocab = r.u32()? as usize;
        let hidden = r.u32()? as usize;
        let conditioning_dim = r.u32()? as usize;
        let layers = r.u32()? as usize;
        let dropout = r.f32()?;
        let config = ModelConfig {
            vocab,
            hidden,
            conditioning_dim,
            layers,
            dropout,
        };
        let seed = r.u64()?;
        let epochs_completed = r.u32()?;
        let step = r.u64()?;
        let (lr, beta1, beta2, epsilon) = (r.f64()?, r.f64()?, r.f64()?, r.f64()?);
        let n = r.u32()? as usize;

        // sanity-check dimensions before allocating
        let expected = config.parameter_count();
        if vocab == 0 || hidden == 0 || layers == 0 || expected > body.len() / 4 {
            return Err(CheckpointError::Inconsistent(format!(
                "implausible dimensions {vocab}/{hidden}/{conditioning_dim}/{layers}"
            )));
        }
        let mut params = ModelParams::<f32>::zeros(config);
        if n != params.tensors().len() {
            return Err(CheckpointError::Inconsistent(format!("{n} tensors stored")));
        }
        for t in params.tensors_mut() {
            r.tensor_into(t)?;
        }
        let mut adam = AdamState::for_params(&params, lr);
        adam.step = step;
        adam.beta1 = beta1;
        adam.beta2 = beta2;
        adam.epsilon = epsilon;
        for t in adam.m.iter_mut().chain(adam.v.iter_mut()) {
            r.tensor_into(t)?;
        }
        if r.pos != body.len() {
            return Err(CheckpointError::Inconsistent("trailing bytes".into()));
        }
        Ok(Checkpoint {
            mode,
            params,
            adam,
            seed,
            epochs_completed,
        })
    }

    pub fn load(path: &Path) -> Result<Self, CheckpointError> {
        Self::from_bytes(&std::fs::read(path)?)
    }

    pub fn save(&self, path: &Path) -> Result<(), CheckpointError> {
        crate::io::write_atomic(path, &self.to_bytes())?;
        Ok(())
    }
}

struct Cursor<'a> {
    data: &'a [u8],
    pos: usize,
}

impl Cursor<'_> {
    fn take(&mut self, n: usize) -> Result<&[u8], CheckpointError> {
        if self.data.len() - self.pos < n {
            return Err(CheckpointError::Truncated);
        }
        let s = &self.data[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8, CheckpointError> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<u32, CheckpointError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64, CheckpointError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f32(&mut self) -> Result<f32, CheckpointError> {
        Ok(f32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64, CheckpointError> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn tensor_into(&mut self, dst: &mut [f32]) -> Result<(), CheckpointError> {
        let len = self.u64()? as usize;
        if len != dst.len() {
            return Err(CheckpointError::Inconsistent(format!(
                "tensor of length {len}, expected {}",
                dst.len()
            )));
        }
        let raw = self.take(len * 4)?;
        for (d, b) in dst.iter_mut().zip(raw.chunks_exact(4)) {
            *d = f32::from_le_bytes(b.try_into().unwrap());
        }
        Ok(())
    }
}
