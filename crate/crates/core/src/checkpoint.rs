//! Binary parameter snapshots.
//!
//! Layout: `GDVAE1`, `u32` array count, then per array `u32` name length,
//! UTF-8 name, `u32` rank, `u64` dims, little-endian `f64` values; finally
//! `u32` digest length and the config digest.

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::model::GdVae;
use crate::neural::DenseMatrix;

pub const MAGIC: &[u8; 6] = b"GDVAE1";

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub arrays: Vec<(String, DenseMatrix)>,
    pub config_digest: String,
}

impl Checkpoint {
    pub fn from_model(model: &GdVae, config_digest: &str) -> Self {
        Self {
            arrays: model.params.iter().map(|p| (p.name.clone(), p.value.clone())).collect(),
            config_digest: config_digest.to_string(),
        }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&(self.arrays.len() as u32).to_le_bytes());
        for (name, m) in &self.arrays {
            out.extend_from_slice(&(name.len() as u32).to_le_bytes());
            out.extend_from_slice(name.as_bytes());
            out.extend_from_slice(&2u32.to_le_bytes());
            out.extend_from_slice(&(m.rows() as u64).to_le_bytes());
            out.extend_from_slice(&(m.cols() as u64).to_le_bytes());
            for v in m.data() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out.extend_from_slice(&(self.config_digest.len() as u32).to_le_bytes());
        out.extend_from_slice(self.config_digest.as_bytes());
        out
    }

    pub fn from_bytes(mut bytes: &[u8]) -> Result<Self> {
        let r = &mut bytes;
        let mut magic = [0u8; 6];
        read_exact(r, &mut magic)?;
        if &magic != MAGIC {
            return Err(Error::Checkpoint("bad magic bytes".into()));
        }
        let count = read_u32(r)? as usize;
        let mut arrays = Vec::with_capacity(count.min(1024));
        for _ in 0..count {
            let name = read_string(r)?;
            let rank = read_u32(r)? as usize;
            let dims = (0..rank).map(|_| read_u64(r).map(|d| d as usize)).collect::<Result<Vec<_>>>()?;
            let (rows, cols) = match dims.as_slice() {
                [n] => (1, *n),
                [r, c] => (*r, *c),
                _ => return Err(Error::Checkpoint(format!("array `{name}` has unsupported rank {rank}"))),
            };
            let len = rows
                .checked_mul(cols)
                .filter(|n| n.checked_mul(8).is_some_and(|b| b <= r.len()))
                .ok_or_else(|| Error::Checkpoint(format!("array `{name}` is truncated")))?;
            let data = (0..len).map(|_| read_f64(r)).collect::<Result<Vec<_>>>()?;
            arrays.push((name, DenseMatrix::from_vec(rows, cols, data)?));
        }
        let config_digest = read_string(r)?;
        if !r.is_empty() {
            return Err(Error::Checkpoint("trailing bytes after footer".into()));
        }
        Ok(Self { arrays, config_digest })
    }

    /// Copies values into `model`, verifying names, order and shapes.
    pub fn apply(&self, model: &mut GdVae) -> Result<()> {
        if self.arrays.len() != model.params.len() {
            return Err(Error::Checkpoint(format!(
                "checkpoint has {} arrays, model expects {}",
                self.arrays.len(),
                model.params.len()
            )));
        }
        for ((name, m), p) in self.arrays.iter().zip(model.params.iter()) {
            if *name != p.name {
                return Err(Error::Checkpoint(format!("expected array `{}`, found `{name}`", p.name)));
            }
            if m.shape() != p.value.shape() {
                return Err(Error::Checkpoint(format!(
                    "array `{name}` has shape {:?}, config implies {:?}",
                    m.shape(),
                    p.value.shape()
                )));
            }
        }
        for ((_, m), p) in self.arrays.iter().zip(model.params.params_mut()) {
            p.value = m.clone();
        }
        Ok(())
    }
}

pub fn save_checkpoint(model: &GdVae, config_digest: &str, path: &Path) -> Result<()> {
    let mut f = fs::File::create(path)?;
    f.write_all(&Checkpoint::from_model(model, config_digest).to_bytes())?;
    Ok(())
}

pub fn read_checkpoint(path: &Path) -> Result<Checkpoint> {
    let mut bytes = Vec::new();
    fs::File::open(path)?.read_to_end(&mut bytes)?;
    Checkpoint::from_bytes(&bytes)
}

/// Loads `path` into `model`; a digest mismatch is an error.
pub fn load_checkpoint(path: &Path, model: &mut GdVae, config_digest: &str) -> Result<()> {
    let ck = read_checkpoint(path)?;
    if ck.config_digest != config_digest {
        return Err(Error::Checkpoint(format!(
            "config digest {} does not match checkpoint {}",
            config_digest, ck.config_digest
        )));
    }
    ck.apply(model)
}

fn read_exact(r: &mut &[u8], buf: &mut [u8]) -> Result<()> {
    r.read_exact(buf)
        .map_err(|_| Error::Checkpoint("unexpected end of checkpoint".into()))
}

fn read_u32(r: &mut &[u8]) -> Result<u32> {
    let mut b = [0u8; 4];
    read_exact(r, &mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_u64(r: &mut &[u8]) -> Result<u64> {
    let mut b = [0u8; 8];
    read_exact(r, &mut b)?;
    Ok(u64::from_le_bytes(b))
}

fn read_f64(r: &mut &[u8]) -> Result<f64> {
    let mut b = [0u8; 8];
    read_exact(r, &mut b)?;
    Ok(f64::from_le_bytes(b))
}

fn read_string(r: &mut &[u8]) -> Result<String> {
    let len = read_u32(r)? as usize;
    if len > r.len() {
        return Err(Error::Checkpoint("unexpected end of checkpoint".into()));
    }
    let mut b = vec![0u8; len];
    read_exact(r, &mut b)?;
    String::from_utf8(b).map_err(|_| Error::Checkpoint("array name is not UTF-8".into()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{ModelConfig, ModelDims};

    fn model(seed: u64, dim: usize) -> GdVae {
        let config = ModelConfig {
            embedding_dim: dim,
            hidden_dim: dim,
            topics: 2,
            latent_dim: 3,
            rec_hidden: 4,
            residual: true,
            alpha: 0.02,
        };
        GdVae::new(
            config,
            ModelDims {
                diseases: 3,
                procedures: 2,
                labels: 2,
            },
            seed,
        )
        .unwrap()
    }

    #[test]
    fn round_trip_restores_values() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.ckpt");
        let a = model(1, 4);
        save_checkpoint(&a, "abc", &path).unwrap();
        let bytes = fs::read(&path).unwrap();
        assert_eq!(&bytes[..6], MAGIC);
        let mut b = model(2, 4);
        load_checkpoint(&path, &mut b, "abc").unwrap();
        for (p, q) in a.params.iter().zip(b.params.iter()) {
            assert_eq!(p.value, q.value);
        }
    }

    #[test]
    fn mismatches_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.ckpt");
        save_checkpoint(&model(1, 4), "abc", &path).unwrap();
        assert!(load_checkpoint(&path, &mut model(1, 4), "other").is_err());
        let err = load_checkpoint(&path, &mut model(1, 5), "abc").unwrap_err();
        assert!(err.to_string().contains("shape"), "{err}");
        let bytes = fs::read(&path).unwrap();
        assert!(Checkpoint::from_bytes(&bytes[..bytes.len() - 10]).is_err());
        assert!(Checkpoint::from_bytes(b"GDVAE2").is_err());
    }
}
