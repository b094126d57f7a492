//! Binary checkpoints.
//!
//! ```text
//! "PAUSECKPT"                      9 bytes
//! version                          u32 LE
//! config block length, bytes       u32 LE, UTF-8 `key = value` lines
//! per tensor:
//!   name length, name bytes        u32 LE, UTF-8
//!   rank, extents                  u32 LE each
//!   values                         f32 LE, row-major
//! ```

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::model::{ModelConfig, ModelParams};
use crate::numeric::Tensor;

pub const CHECKPOINT_MAGIC: &[u8; 9] = b"PAUSECKPT";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct CheckpointHeader {
    pub model: ModelConfig,
    pub train_digest: String,
    pub vocab_hash: u32,
    pub step: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub header: CheckpointHeader,
    pub params: ModelParams<f32>,
}

pub fn encode_checkpoint(params: &ModelParams<f32>, train_digest: &str, vocab_hash: u32, step: u64) -> Vec<u8> {
    let block = format!(
        "{}checkpoint.train_digest = {train_digest}\ncheckpoint.vocab_hash = {vocab_hash}\n\
         checkpoint.step = {step}\ncheckpoint.tensors = {}\n",
        params.config().to_kv(),
        params.tensors().len()
    );
    let mut buf = Vec::with_capacity(64 + block.len() + 4 * params.num_params());
    buf.extend_from_slice(CHECKPOINT_MAGIC);
    buf.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    buf.extend_from_slice(&(block.len() as u32).to_le_bytes());
    buf.extend_from_slice(block.as_bytes());
    for (name, t) in params.names().iter().zip(params.tensors()) {
        buf.extend_from_slice(&(name.len() as u32).to_le_bytes());
        buf.extend_from_slice(name.as_bytes());
        buf.extend_from_slice(&(t.shape().len() as u32).to_le_bytes());
        for &e in t.shape() {
            buf.extend_from_slice(&(e as u32).to_le_bytes());
        }
        for v in t.data() {
            buf.extend_from_slice(&v.to_le_bytes());
        }
    }
    buf
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len()).ok_or_else(|| {
            Error::Corruption(format!("file truncated while reading {what} at byte {}", self.pos))
        })?;
        let out = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }
}

fn header_field<'a>(block: &'a str, key: &str) -> Result<&'a str> {
    block
        .lines()
        .filter_map(|l| l.split_once('='))
        .find(|(k, _)| k.trim() == key)
        .map(|(_, v)| v.trim())
        .ok_or_else(|| Error::Format(format!("checkpoint header lacks {key}")))
}

fn parse_field<V: std::str::FromStr>(block: &str, key: &str) -> Result<V> {
    let raw = header_field(block, key)?;
    raw.parse()
        .map_err(|_| Error::Format(format!("bad checkpoint header value {raw:?} for {key}")))
}

pub fn decode_checkpoint(bytes: &[u8]) -> Result<Checkpoint> {
    if bytes.len() < CHECKPOINT_MAGIC.len() || &bytes[..CHECKPOINT_MAGIC.len()] != CHECKPOINT_MAGIC {
        return Err(Error::Format("not a checkpoint: bad magic".into()));
    }
    let mut r = Reader {
        bytes,
        pos: CHECKPOINT_MAGIC.len(),
    };
    let version = r.u32("version")?;
    if version != CHECKPOINT_VERSION {
        return Err(Error::Format(format!(
            "unsupported checkpoint version {version} (expected {CHECKPOINT_VERSION})"
        )));
    }
    let block_len = r.u32("config block length")? as usize;
    let block = std::str::from_utf8(r.take(block_len, "config block")?)
        .map_err(|_| Error::Format("config block is not UTF-8".into()))?;
    let model = ModelConfig::from_kv(block)?;
    let header = CheckpointHeader {
        model: model.clone(),
        train_digest: header_field(block, "checkpoint.train_digest")?.to_string(),
        vocab_hash: parse_field(block, "checkpoint.vocab_hash")?,
        step: parse_field(block, "checkpoint.step")?,
    };
    let count: usize = parse_field(block, "checkpoint.tensors")?;
    let mut named = Vec::with_capacity(count);
    for _ in 0..count {
        let name_len = r.u32("tensor name length")? as usize;
        let name = std::str::from_utf8(r.take(name_len, "tensor name")?)
            .map_err(|_| Error::Corruption("tensor name is not UTF-8".into()))?
            .to_string();
        let rank = r.u32("tensor rank")? as usize;
        if rank == 0 || rank > 8 {
            return Err(Error::Corruption(format!("tensor {name} has rank {rank}")));
        }
        let shape = (0..rank)
            .map(|_| r.u32("tensor extent").map(|e| e as usize))
            .collect::<Result<Vec<_>>>()?;
        let n = shape
            .iter()
            .try_fold(1usize, |acc, &e| acc.checked_mul(e))
            .ok_or_else(|| Error::Corruption(format!("tensor {name} extents overflow")))?;
        let raw = r.take(n.saturating_mul(4), "tensor values")?;
        let data = raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        let t = Tensor::new(shape, data).map_err(|e| Error::Corruption(e.to_string()))?;
        named.push((name, t));
    }
    if r.pos != bytes.len() {
        return Err(Error::Corruption(format!(
            "{} trailing bytes after the last tensor",
            bytes.len() - r.pos
        )));
    }
    let params = ModelParams::from_named(&model, named)?;
    Ok(Checkpoint { header, params })
}

pub fn save_checkpoint(
    path: &Path,
    params: &ModelParams<f32>,
    train_digest: &str,
    vocab_hash: u32,
    step: u64,
) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    fs::write(path, encode_checkpoint(params, train_digest, vocab_hash, step))?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    decode_checkpoint(&fs::read(path)?)
}

/// Loads a checkpoint and insists its model config equals `expected`.
pub fn load_checkpoint_for(path: &Path, expected: &ModelConfig) -> Result<Checkpoint> {
    let ckpt = load_checkpoint(path)?;
    if &ckpt.header.model != expected {
        return Err(Error::Compatibility(format!(
            "{} was saved with\n{}but the run expects\n{}",
            path.display(),
            ckpt.header.model.to_kv(),
            expected.to_kv()
        )));
    }
    Ok(ckpt)
}

/// SHA-256 of a file's bytes, hex encoded.
pub fn file_digest(path: &Path) -> Result<String> {
    Ok(super::config::hex_digest(&fs::read(path)?))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params(d: usize) -> ModelParams<f32> {
        ModelParams::init(&ModelConfig::new(1, 2, d, 2 * d, 16, 12), 5).unwrap()
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let p = params(8);
        let bytes = encode_checkpoint(&p, "abc", 77, 12);
        let back = decode_checkpoint(&bytes).unwrap();
        assert_eq!(back.header.step, 12);
        assert_eq!(back.header.vocab_hash, 77);
        assert_eq!(back.header.train_digest, "abc");
        for (a, b) in p.tensors().iter().zip(back.params.tensors()) {
            let bits = |t: &Tensor<f32>| t.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
            assert_eq!(bits(a), bits(b));
        }
    }

    #[test]
    fn bad_magic_is_format_error() {
        let mut bytes = encode_checkpoint(&params(8), "x", 0, 0);
        bytes[0] ^= 0xff;
        assert!(matches!(decode_checkpoint(&bytes), Err(Error::Format(_))));
    }

    #[test]
    fn truncation_is_corruption() {
        let bytes = encode_checkpoint(&params(8), "x", 0, 0);
        let cut = &bytes[..bytes.len() - 3];
        assert!(matches!(decode_checkpoint(cut), Err(Error::Corruption(_))));
        let mut longer = bytes.clone();
        longer.push(0);
        assert!(matches!(decode_checkpoint(&longer), Err(Error::Corruption(_))));
    }

    #[test]
    fn width_mismatch_is_compatibility_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("small.ckpt");
        save_checkpoint(&path, &params(32), "x", 0, 0).unwrap();
        let want = ModelConfig::new(1, 2, 64, 64, 16, 12);
        assert!(matches!(
            load_checkpoint_for(&path, &want),
            Err(Error::Compatibility(_))
        ));
        assert!(load_checkpoint_for(&path, params(32).config()).is_ok());
    }
}
