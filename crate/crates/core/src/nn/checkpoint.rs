//! Binary checkpoint format.
//!
//! Layout (little-endian): magic `CARICKPT`, `u32` version, `u64` length +
//! architecture JSON, `u64` length + metadata JSON, `u64` parameter count +
//! `f64` parameters, then the SHA-256 of all preceding bytes.

use super::{Architecture, ModelError, PolicyModel};
use crate::reward::{RewardConfig, RewardSpace};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::path::Path;

const MAGIC: &[u8; 8] = b"CARICKPT";
pub const CHECKPOINT_VERSION: u32 = 1;

/// Training provenance stored next to the parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointMeta {
    /// Free-form name, e.g. `cari` or an archetype name.
    pub label: String,
    /// Whether the model reads the reward slot (reward-conditioned) or
    /// was trained on one fixed reward.
    pub conditioned: bool,
    pub reward_space: RewardSpace,
    /// The fixed reward of a baseline model.
    pub reward_config: Option<RewardConfig>,
    pub roster_hash: String,
    pub seed: u64,
    pub episodes: u64,
    pub env_steps: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub model: PolicyModel,
    pub meta: CheckpointMeta,
}

#[derive(Debug, thiserror::Error)]
pub enum CheckpointError {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("not a checkpoint file (bad magic)")]
    BadMagic,
    #[error("unsupported checkpoint version {0} (expected {CHECKPOINT_VERSION})")]
    Version(u32),
    #[error("checkpoint is truncated")]
    Truncated,
    #[error("checkpoint hash mismatch (file is corrupted)")]
    HashMismatch,
    #[error("bad checkpoint header: {0}")]
    Header(#[from] serde_json::Error),
    #[error(transparent)]
    Shape(#[from] ModelError),
}

struct Reader<'a> {
    buf: &'a [u8],
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], CheckpointError> {
        if self.buf.len() < n {
            return Err(CheckpointError::Truncated);
        }
        let (a, b) = self.buf.split_at(n);
        self.buf = b;
        Ok(a)
    }

    fn u64(&mut self) -> Result<u64, CheckpointError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn len(&mut self) -> Result<usize, CheckpointError> {
        usize::try_from(self.u64()?).map_err(|_| CheckpointError::Truncated)
    }
}

impl Checkpoint {
    pub fn to_bytes(&self) -> Vec<u8> {
        let arch = serde_json::to_vec(self.model.architecture()).expect("architecture serializes");
        let meta = serde_json::to_vec(&self.meta).expect("metadata serializes");
        let params = self.model.params();
        let mut out = Vec::with_capacity(64 + arch.len() + meta.len() + params.len() * 8);
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
        out.extend_from_slice(&(arch.len() as u64).to_le_bytes());
        out.extend_from_slice(&arch);
        out.extend_from_slice(&(meta.len() as u64).to_le_bytes());
        out.extend_from_slice(&meta);
        out.extend_from_slice(&(params.len() as u64).to_le_bytes());
        for p in params {
            out.extend_from_slice(&p.to_le_bytes());
        }
        let digest = Sha256::digest(&out);
        out.extend_from_slice(&digest);
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Checkpoint, CheckpointError> {
        if bytes.len() < MAGIC.len() || &bytes[..MAGIC.len()] != MAGIC {
            return Err(CheckpointError::BadMagic);
        }
        if bytes.len() < MAGIC.len() + 4 {
            return Err(CheckpointError::Truncated);
        }
        let version = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes"));
        if version != CHECKPOINT_VERSION {
            return Err(CheckpointError::Version(version));
        }
        if bytes.len() < 12 + 32 {
            return Err(CheckpointError::Truncated);
        }
        let (body, digest) = bytes.split_at(bytes.len() - 32);
        if Sha256::digest(body).as_slice() != digest {
            return Err(CheckpointError::HashMismatch);
        }
        let mut r = Reader { buf: &body[12..] };
        let n = r.len()?;
        let arch: Architecture = serde_json::from_slice(r.take(n)?)?;
        let n = r.len()?;
        let meta: CheckpointMeta = serde_json::from_slice(r.take(n)?)?;
        let n = r.len()?;
        let raw = r.take(n.checked_mul(8).ok_or(CheckpointError::Truncated)?)?;
        let params = raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect();
        let model = PolicyModel::from_params(arch, params)?;
        Ok(Checkpoint { model, meta })
    }

    pub fn save(&self, path: &Path) -> Result<(), CheckpointError> {
        if let Some(dir) = path.parent() {
            if !dir.as_os_str().is_empty() {
                std::fs::create_dir_all(dir)?;
            }
        }
        std::fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Checkpoint, CheckpointError> {
        Checkpoint::from_bytes(&std::fs::read(path)?)
    }
}
