//! Versioned binary training checkpoints.
//!
//! Layout (little-endian): magic, format version, policy config hash,
//! step, update, worker generation, success EMA, Adam step count,
//! parameter count `n`, then `n` f32 parameters and the two Adam moment
//! vectors, and finally a SHA-256 digest of everything before it.

use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use super::adam::Adam;
use super::ppo::LearnerState;
use crate::error::{Error, Result};

const MAGIC: &[u8; 8] = b"DNAVCKPT";
pub const CHECKPOINT_VERSION: u32 = 1;
const HEADER_LEN: usize = 8 + 4 + 8 * 7;

/// Everything needed to resume training exactly.
#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub config_hash: u64,
    pub step: u64,
    pub update: u64,
    /// Rollout workers are rebuilt from this generation on resume.
    pub generation: u64,
    pub success_ema: f64,
    pub state: LearnerState<f32>,
}

fn put_f32s(out: &mut Vec<u8>, v: &[f32]) {
    for x in v {
        out.extend_from_slice(&x.to_le_bytes());
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    at: usize,
}

impl Reader<'_> {
    fn take(&mut self, n: usize) -> &[u8] {
        let s = &self.buf[self.at..self.at + n];
        self.at += n;
        s
    }

    fn u64(&mut self) -> u64 {
        u64::from_le_bytes(self.take(8).try_into().expect("8 bytes"))
    }

    fn f32s(&mut self, n: usize) -> Vec<f32> {
        self.take(4 * n).chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes"))).collect()
    }
}

impl Checkpoint {
    pub fn to_bytes(&self) -> Vec<u8> {
        let n = self.state.params.len();
        let mut out = Vec::with_capacity(HEADER_LEN + 12 * n + 32);
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
        for v in [self.config_hash, self.step, self.update, self.generation, self.success_ema.to_bits(), self.state.adam.t, n as u64] {
            out.extend_from_slice(&v.to_le_bytes());
        }
        put_f32s(&mut out, &self.state.params);
        put_f32s(&mut out, &self.state.adam.m);
        put_f32s(&mut out, &self.state.adam.v);
        let digest = Sha256::digest(&out);
        out.extend_from_slice(&digest);
        out
    }

    /// Parses and verifies a checkpoint. A non-`None` `expected_hash` must
    /// match the stored policy config hash.
    pub fn from_bytes(buf: &[u8], expected_hash: Option<u64>) -> Result<Self> {
        let bad = |r: &str| Error::format("checkpoint", r);
        if buf.len() < HEADER_LEN + 32 || &buf[..8] != MAGIC {
            return Err(bad("not a checkpoint file"));
        }
        let (body, digest) = buf.split_at(buf.len() - 32);
        if Sha256::digest(body).as_slice() != digest {
            return Err(bad("checksum mismatch"));
        }
        let version = u32::from_le_bytes(buf[8..12].try_into().expect("4 bytes"));
        if version != CHECKPOINT_VERSION {
            return Err(bad(&format!("unsupported version {version}")));
        }
        let mut r = Reader { buf: body, at: 12 };
        let config_hash = r.u64();
        if let Some(expected) = expected_hash {
            if expected != config_hash {
                return Err(Error::ConfigMismatch {
                    expected,
                    found: config_hash,
                });
            }
        }
        let (step, update, generation) = (r.u64(), r.u64(), r.u64());
        let success_ema = f64::from_bits(r.u64());
        let t = r.u64();
        let n = r.u64() as usize;
        if body.len() != HEADER_LEN + 12 * n {
            return Err(bad("length does not match parameter count"));
        }
        let params = r.f32s(n);
        let m = r.f32s(n);
        let v = r.f32s(n);
        Ok(Checkpoint {
            config_hash,
            step,
            update,
            generation,
            success_ema,
            state: LearnerState {
                params,
                adam: Adam { t, m, v },
            },
        })
    }

    /// Writes atomically via a temporary file in the same directory.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let tmp = path.with_extension("tmp");
        std::fs::write(&tmp, self.to_bytes())?;
        std::fs::rename(&tmp, path)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>, expected_hash: Option<u64>) -> Result<Self> {
        let path = path.as_ref();
        if !path.exists() {
            return Err(Error::NotFound(path.to_path_buf()));
        }
        Self::from_bytes(&std::fs::read(path)?, expected_hash)
    }
}

pub fn checkpoint_file_name(step: u64) -> String {
    format!("ckpt-{step:012}.bin")
}

/// Checkpoints in `dir` sorted by step, as `(step, path)`.
pub fn list_checkpoints(dir: impl AsRef<Path>) -> Result<Vec<(u64, PathBuf)>> {
    let dir = dir.as_ref();
    if !dir.is_dir() {
        return Err(Error::NotFound(dir.to_path_buf()));
    }
    let mut out = Vec::new();
    for entry in std::fs::read_dir(dir)? {
        let path = entry?.path();
        let name = path.file_name().and_then(|n| n.to_str()).unwrap_or_default();
        if let Some(step) = name.strip_prefix("ckpt-").and_then(|s| s.strip_suffix(".bin")).and_then(|s| s.parse().ok()) {
            out.push((step, path));
        }
    }
    out.sort();
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Checkpoint {
        let mut state = LearnerState::new(vec![0.5f32, -1.25, 3.0]);
        state.adam.step(&mut state.params, &[0.1, 0.2, -0.3], &Default::default());
        Checkpoint {
            config_hash: 0xabcdef,
            step: 4096,
            update: 2,
            generation: 1,
            success_ema: 0.375,
            state,
        }
    }

    #[test]
    fn round_trip() {
        let c = sample();
        assert_eq!(Checkpoint::from_bytes(&c.to_bytes(), Some(0xabcdef)).unwrap(), c);
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join(checkpoint_file_name(c.step));
        c.save(&p).unwrap();
        assert_eq!(Checkpoint::load(&p, None).unwrap(), c);
        assert_eq!(list_checkpoints(dir.path()).unwrap(), vec![(4096, p)]);
    }

    #[test]
    fn refuses_bad_input() {
        let c = sample();
        let mut bytes = c.to_bytes();
        assert!(matches!(Checkpoint::from_bytes(&bytes, Some(1)), Err(Error::ConfigMismatch { .. })));
        bytes[HEADER_LEN + 2] ^= 0x40;
        assert!(matches!(Checkpoint::from_bytes(&bytes, None), Err(Error::Format { .. })));
        assert!(Checkpoint::from_bytes(b"garbage", None).is_err());
        assert!(matches!(Checkpoint::load("/nonexistent/ckpt.bin", None), Err(Error::NotFound(_))));
    }
}
