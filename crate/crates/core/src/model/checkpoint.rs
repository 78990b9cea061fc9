//! Binary checkpoint container.
//!
//! Layout (little-endian): magic `MIDLCKPT`, `u32` version, 32-byte config
//! hash, `u32` tensor count, then per tensor a `u32` name length, UTF-8
//! name, `u64` rows, `u64` cols and `rows*cols` `f64` values.

use std::io::{Read, Write};
use std::path::Path;

use sha2::{Digest, Sha256};

use super::params::ModelParams;
use crate::error::{Error, Result};
use crate::numerics::Matrix;

const MAGIC: &[u8; 8] = b"MIDLCKPT";
pub const CHECKPOINT_VERSION: u32 = 1;

/// SHA-256 of the canonical bytes of a configuration.
pub fn config_hash(config_bytes: &[u8]) -> [u8; 32] {
    Sha256::digest(config_bytes).into()
}

pub fn write_checkpoint(
    mut w: impl Write,
    params: &ModelParams,
    hash: &[u8; 32],
) -> std::io::Result<()> {
    let named = params.named();
    w.write_all(MAGIC)?;
    w.write_all(&CHECKPOINT_VERSION.to_le_bytes())?;
    w.write_all(hash)?;
    w.write_all(&(named.len() as u32).to_le_bytes())?;
    for (name, m) in named {
        w.write_all(&(name.len() as u32).to_le_bytes())?;
        w.write_all(name.as_bytes())?;
        w.write_all(&(m.rows() as u64).to_le_bytes())?;
        w.write_all(&(m.cols() as u64).to_le_bytes())?;
        for v in m.as_slice() {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    Ok(())
}

fn read_array<const K: usize>(r: &mut impl Read) -> Result<[u8; K]> {
    let mut buf = [0u8; K];
    r.read_exact(&mut buf)
        .map_err(|e| Error::Checkpoint(format!("truncated checkpoint: {e}")))?;
    Ok(buf)
}

/// Reads a checkpoint and rejects it unless its hash equals `expected_hash`.
pub fn read_checkpoint(mut r: impl Read, expected_hash: &[u8; 32]) -> Result<ModelParams> {
    if &read_array::<8>(&mut r)? != MAGIC {
        return Err(Error::Checkpoint("not a checkpoint file".into()));
    }
    let version = u32::from_le_bytes(read_array(&mut r)?);
    if version != CHECKPOINT_VERSION {
        return Err(Error::Checkpoint(format!("unsupported version {version}")));
    }
    let hash = read_array::<32>(&mut r)?;
    if &hash != expected_hash {
        return Err(Error::Checkpoint(
            "config hash mismatch (stale checkpoint)".into(),
        ));
    }
    let count = u32::from_le_bytes(read_array(&mut r)?);
    let mut tensors = Vec::with_capacity(count as usize);
    for _ in 0..count {
        let len = u32::from_le_bytes(read_array(&mut r)?) as usize;
        let mut name = vec![0u8; len];
        r.read_exact(&mut name)
            .map_err(|e| Error::Checkpoint(format!("truncated tensor name: {e}")))?;
        let name = String::from_utf8(name)
            .map_err(|_| Error::Checkpoint("tensor name is not UTF-8".into()))?;
        let rows = u64::from_le_bytes(read_array(&mut r)?) as usize;
        let cols = u64::from_le_bytes(read_array(&mut r)?) as usize;
        let n = rows
            .checked_mul(cols)
            .ok_or_else(|| Error::Checkpoint(format!("`{name}` has an absurd shape")))?;
        let mut data = Vec::with_capacity(n);
        for _ in 0..n {
            data.push(f64::from_le_bytes(read_array(&mut r)?));
        }
        tensors.push((name, Matrix::from_vec(rows, cols, data)?));
    }
    let mut tail = [0u8; 1];
    if r.read(&mut tail)
        .map_err(|e| Error::Checkpoint(e.to_string()))?
        != 0
    {
        return Err(Error::Checkpoint("trailing bytes after last tensor".into()));
    }
    ModelParams::from_named(tensors)
}

pub fn save_checkpoint(path: &Path, params: &ModelParams, hash: &[u8; 32]) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = std::io::BufWriter::new(file);
    write_checkpoint(&mut w, params, hash).map_err(|e| Error::io(path, e))?;
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: &Path, expected_hash: &[u8; 32]) -> Result<ModelParams> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_checkpoint(std::io::BufReader::new(file), expected_hash)
}
