//! Parameter container file.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! magic      8 bytes  "SAUCKPT\0"
//! version    u32      1
//! header_len u64
//! header     header_len bytes of UTF-8 JSON (includes "dtype")
//! count      u32      number of tensors
//! per tensor:
//!   name_len u32, name bytes
//!   ndim     u32, dims as u64 x ndim
//!   values   dtype-width little-endian values, product(dims) of them
//! ```

use std::io::{Read, Write};
use std::path::Path;

use serde_json::Value;

use crate::scalar::Scalar;

use super::tensor::{ParamStore, Shape, Tensor};
use super::TensorError;

const MAGIC: &[u8; 8] = b"SAUCKPT\0";
const VERSION: u32 = 1;

/// Serialises `header` plus every tensor of `store`.
pub fn encode_checkpoint<F: Scalar>(header: &Value, store: &ParamStore<F>) -> Vec<u8> {
    let mut header = header.clone();
    if let Value::Object(map) = &mut header {
        map.insert("dtype".into(), Value::String(F::DTYPE.into()));
    }
    let header_bytes = serde_json::to_vec(&header).expect("json value serialises");
    let mut out = Vec::with_capacity(store.scalar_count() * F::BYTES + header_bytes.len() + 64);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(header_bytes.len() as u64).to_le_bytes());
    out.extend_from_slice(&header_bytes);
    out.extend_from_slice(&(store.len() as u32).to_le_bytes());
    for (_, name, t) in store.iter() {
        out.extend_from_slice(&(name.len() as u32).to_le_bytes());
        out.extend_from_slice(name.as_bytes());
        out.extend_from_slice(&2u32.to_le_bytes());
        out.extend_from_slice(&(t.shape.rows as u64).to_le_bytes());
        out.extend_from_slice(&(t.shape.cols as u64).to_le_bytes());
        for &v in &t.values {
            v.write_le(&mut out);
        }
    }
    out
}

struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], TensorError> {
        if self.pos + n > self.buf.len() {
            return Err(TensorError::Checkpoint("truncated file".into()));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32, TensorError> {
        let mut b = [0u8; 4];
        b.copy_from_slice(self.take(4)?);
        Ok(u32::from_le_bytes(b))
    }

    fn u64(&mut self) -> Result<u64, TensorError> {
        let mut b = [0u8; 8];
        b.copy_from_slice(self.take(8)?);
        Ok(u64::from_le_bytes(b))
    }
}

pub fn decode_checkpoint<F: Scalar>(bytes: &[u8]) -> Result<(Value, ParamStore<F>), TensorError> {
    let mut c = Cursor { buf: bytes, pos: 0 };
    if c.take(8)? != MAGIC {
        return Err(TensorError::Checkpoint("bad magic".into()));
    }
    let version = c.u32()?;
    if version != VERSION {
        return Err(TensorError::Checkpoint(format!("unsupported version {version}")));
    }
    let hlen = c.u64()? as usize;
    let header: Value =
        serde_json::from_slice(c.take(hlen)?).map_err(|e| TensorError::Checkpoint(format!("header: {e}")))?;
    let dtype = header.get("dtype").and_then(Value::as_str).unwrap_or("");
    if dtype != F::DTYPE {
        return Err(TensorError::Checkpoint(format!(
            "checkpoint holds {dtype} values, expected {}",
            F::DTYPE
        )));
    }
    let count = c.u32()?;
    let mut store = ParamStore::new();
    for _ in 0..count {
        let nlen = c.u32()? as usize;
        let name = std::str::from_utf8(c.take(nlen)?)
            .map_err(|_| TensorError::Checkpoint("non-UTF-8 tensor name".into()))?
            .to_string();
        let ndim = c.u32()? as usize;
        let dims: Vec<usize> = (0..ndim)
            .map(|_| c.u64().map(|d| d as usize))
            .collect::<Result<_, _>>()?;
        let shape = match dims.as_slice() {
            [n] => Shape::vector(*n),
            [r, k] => Shape::matrix(*r, *k),
            _ => return Err(TensorError::Checkpoint(format!("tensor `{name}` has {ndim} dims"))),
        };
        let raw = c.take(shape.len() * F::BYTES)?;
        let values = raw.chunks_exact(F::BYTES).map(F::read_le).collect();
        store.insert(&name, Tensor::from_vec(shape, values));
    }
    if c.pos != bytes.len() {
        return Err(TensorError::Checkpoint("trailing bytes".into()));
    }
    Ok((header, store))
}

pub fn save_checkpoint<F: Scalar>(path: &Path, header: &Value, store: &ParamStore<F>) -> Result<(), TensorError> {
    let bytes = encode_checkpoint(header, store);
    let mut f = std::fs::File::create(path)?;
    f.write_all(&bytes)?;
    Ok(())
}

pub fn load_checkpoint<F: Scalar>(path: &Path) -> Result<(Value, ParamStore<F>), TensorError> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)?.read_to_end(&mut bytes)?;
    decode_checkpoint(&bytes)
}

/// Reads only the header, whatever the value type.
pub fn read_checkpoint_header(path: &Path) -> Result<Value, TensorError> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)?.read_to_end(&mut bytes)?;
    let mut c = Cursor { buf: &bytes, pos: 0 };
    if c.take(8)? != MAGIC {
        return Err(TensorError::Checkpoint("bad magic".into()));
    }
    c.u32()?;
    let hlen = c.u64()? as usize;
    serde_json::from_slice(c.take(hlen)?).map_err(|e| TensorError::Checkpoint(format!("header: {e}")))
}
