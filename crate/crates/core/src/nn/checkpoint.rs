//! Versioned binary checkpoint.
//!
//! ```text
//! "SERM" | version u16 | J u32 | L u32 | r u32
//! config_len u32 | model config JSON
//! meta_len u32   | free-form metadata JSON
//! count u32
//! count x (name_len u32 | name | rank u32 | dims u64 x rank | f64 LE payload)
//! ```
//!
//! All integers are little-endian.

use std::collections::BTreeMap;
use std::io::{Read, Write};

use super::model::{AttentionCnn, ModelConfig};
use super::{NnError, NnResult, Tensor};

pub const CHECKPOINT_MAGIC: [u8; 4] = *b"SERM";
pub const CHECKPOINT_VERSION: u16 = 1;

/// A model plus whatever the caller needs to rebuild its inputs (labels,
/// feature settings).
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub model: AttentionCnn,
    pub meta: serde_json::Value,
}

fn put_u32(buf: &mut Vec<u8>, v: usize) -> NnResult<()> {
    let v = u32::try_from(v).map_err(|_| NnError::Checkpoint(format!("{v} does not fit in u32")))?;
    buf.extend_from_slice(&v.to_le_bytes());
    Ok(())
}

fn put_blob(buf: &mut Vec<u8>, bytes: &[u8]) -> NnResult<()> {
    put_u32(buf, bytes.len())?;
    buf.extend_from_slice(bytes);
    Ok(())
}

pub fn write_checkpoint<W: Write>(mut w: W, model: &AttentionCnn, meta: &serde_json::Value) -> NnResult<()> {
    let cfg = model.config();
    let mut buf = Vec::new();
    buf.extend_from_slice(&CHECKPOINT_MAGIC);
    buf.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    put_u32(&mut buf, cfg.classes)?;
    put_u32(&mut buf, cfg.input_len)?;
    put_u32(&mut buf, cfg.reduction)?;
    put_blob(&mut buf, &to_json(cfg)?)?;
    put_blob(&mut buf, &to_json(meta)?)?;
    let tensors = model.named_tensors();
    put_u32(&mut buf, tensors.len())?;
    for (name, t) in tensors {
        put_blob(&mut buf, name.as_bytes())?;
        put_u32(&mut buf, t.shape().len())?;
        for &d in t.shape() {
            buf.extend_from_slice(&(d as u64).to_le_bytes());
        }
        for v in &t.data {
            buf.extend_from_slice(&v.to_le_bytes());
        }
    }
    w.write_all(&buf)?;
    Ok(())
}

fn to_json<T: serde::Serialize>(v: &T) -> NnResult<Vec<u8>> {
    serde_json::to_vec(v).map_err(|e| NnError::Checkpoint(e.to_string()))
}

struct Reader<R> {
    inner: R,
}

impl<R: Read> Reader<R> {
    fn bytes(&mut self, n: usize) -> NnResult<Vec<u8>> {
        let mut v = Vec::new();
        (&mut self.inner).take(n as u64).read_to_end(&mut v)?;
        if v.len() != n {
            return Err(NnError::Checkpoint("truncated checkpoint".into()));
        }
        Ok(v)
    }

    fn u32(&mut self) -> NnResult<usize> {
        let b = self.bytes(4)?;
        Ok(u32::from_le_bytes(b.try_into().unwrap()) as usize)
    }

    fn u64(&mut self) -> NnResult<usize> {
        let b = self.bytes(8)?;
        usize::try_from(u64::from_le_bytes(b.try_into().unwrap()))
            .map_err(|_| NnError::Checkpoint("dimension overflows usize".into()))
    }

    fn blob(&mut self) -> NnResult<Vec<u8>> {
        let n = self.u32()?;
        self.bytes(n)
    }
}

pub fn read_checkpoint<R: Read>(r: R) -> NnResult<Checkpoint> {
    let mut r = Reader { inner: r };
    if r.bytes(4)? != CHECKPOINT_MAGIC {
        return Err(NnError::Checkpoint("not a model checkpoint (bad magic)".into()));
    }
    let version = u16::from_le_bytes(r.bytes(2)?.try_into().unwrap());
    if version != CHECKPOINT_VERSION {
        return Err(NnError::Checkpoint(format!("unsupported checkpoint version {version}")));
    }
    let (classes, input_len, reduction) = (r.u32()?, r.u32()?, r.u32()?);
    let bad_json = |e: serde_json::Error| NnError::Checkpoint(format!("malformed header JSON: {e}"));
    let config: ModelConfig = serde_json::from_slice(&r.blob()?).map_err(bad_json)?;
    let meta: serde_json::Value = serde_json::from_slice(&r.blob()?).map_err(bad_json)?;
    if (config.classes, config.input_len, config.reduction) != (classes, input_len, reduction) {
        return Err(NnError::Checkpoint("header fields disagree with model configuration".into()));
    }
    let count = r.u32()?;
    let mut stored: BTreeMap<String, Tensor> = BTreeMap::new();
    for _ in 0..count {
        let name = String::from_utf8(r.blob()?).map_err(|_| NnError::Checkpoint("tensor name is not UTF-8".into()))?;
        let rank = r.u32()?;
        let dims = (0..rank).map(|_| r.u64()).collect::<NnResult<Vec<_>>>()?;
        let n = dims.iter().try_fold(1usize, |acc, &d| acc.checked_mul(d));
        let n = n.ok_or_else(|| NnError::Checkpoint(format!("tensor {name} is too large")))?;
        let payload = r.bytes(n.checked_mul(8).ok_or_else(|| NnError::Checkpoint("tensor too large".into()))?)?;
        let data = payload.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
        if stored.insert(name.clone(), Tensor::new(&dims, data)?).is_some() {
            return Err(NnError::Checkpoint(format!("duplicate tensor {name}")));
        }
    }
    let mut model = AttentionCnn::new(config, 0)?;
    let mut expected = 0;
    for (name, slot) in model.named_tensors_mut() {
        expected += 1;
        let t = stored
            .remove(&name)
            .ok_or_else(|| NnError::Checkpoint(format!("missing tensor {name}")))?;
        if t.shape() != slot.shape() {
            return Err(NnError::Checkpoint(format!(
                "tensor {name} has shape {:?}, model expects {:?}",
                t.shape(),
                slot.shape()
            )));
        }
        *slot = t;
    }
    if let Some(extra) = stored.keys().next() {
        return Err(NnError::Checkpoint(format!("unexpected tensor {extra} ({expected} expected)")));
    }
    Ok(Checkpoint { model, meta })
}
