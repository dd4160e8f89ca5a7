//! Binary checkpoint: `MAGIC`, little-endian u64 header length, a JSON
//! header, then every tensor as little-endian f64 in header order.

use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::params::ParamStore;
use super::tensor::Mat;
use crate::error::{Error, Result};

pub const MAGIC: &[u8] = b"sdm-ckpt-1\n";
pub const VERSION: &str = "sdm-ckpt-1";

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TensorEntry {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Header {
    pub version: String,
    /// Free-form metadata (model configuration, vocabulary, ...).
    pub meta: serde_json::Value,
    pub tensors: Vec<TensorEntry>,
}

pub fn write_checkpoint(path: &Path, meta: serde_json::Value, store: &ParamStore) -> Result<()> {
    let header = Header {
        version: VERSION.into(),
        meta,
        tensors: store
            .ids()
            .map(|id| {
                let (rows, cols) = store.value(id).shape();
                TensorEntry {
                    name: store.name(id).to_string(),
                    rows,
                    cols,
                }
            })
            .collect(),
    };
    let json = serde_json::to_vec(&header).map_err(|e| Error::Parse(e.to_string()))?;
    let mut buf = Vec::with_capacity(MAGIC.len() + 8 + json.len() + store.scalar_count() * 8);
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&(json.len() as u64).to_le_bytes());
    buf.extend_from_slice(&json);
    for id in store.ids() {
        for x in &store.value(id).data {
            buf.extend_from_slice(&x.to_le_bytes());
        }
    }
    let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(&buf).map_err(|e| Error::io(path, e))
}

/// Reads the header and the named tensors.
pub fn read_checkpoint(path: &Path) -> Result<(Header, Vec<(String, Mat)>)> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)
        .and_then(|mut f| f.read_to_end(&mut bytes))
        .map_err(|e| Error::io(path, e))?;
    let bad = |m: &str| Error::Parse(format!("{}: {m}", path.display()));
    if !bytes.starts_with(MAGIC) {
        return Err(bad("not an sdm-ckpt-1 checkpoint"));
    }
    let mut pos = MAGIC.len();
    let len_bytes: [u8; 8] = bytes
        .get(pos..pos + 8)
        .ok_or_else(|| bad("truncated header length"))?
        .try_into()
        .expect("eight bytes");
    let hlen = u64::from_le_bytes(len_bytes) as usize;
    pos += 8;
    let hbytes = bytes.get(pos..pos + hlen).ok_or_else(|| bad("truncated header"))?;
    let header: Header = serde_json::from_slice(hbytes).map_err(|e| bad(&e.to_string()))?;
    if header.version != VERSION {
        return Err(bad(&format!("unsupported version {}", header.version)));
    }
    pos += hlen;
    let mut tensors = Vec::with_capacity(header.tensors.len());
    for t in &header.tensors {
        let n = t.rows * t.cols;
        let raw = bytes
            .get(pos..pos + n * 8)
            .ok_or_else(|| bad("truncated tensor data"))?;
        let data = raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("eight bytes")))
            .collect();
        tensors.push((t.name.clone(), Mat::from_vec(t.rows, t.cols, data)));
        pos += n * 8;
    }
    if pos != bytes.len() {
        return Err(bad("trailing bytes after tensor data"));
    }
    Ok((header, tensors))
}

/// Copies tensors into `store`; names and shapes must match exactly.
pub fn restore_into(store: &mut ParamStore, tensors: Vec<(String, Mat)>) -> Result<()> {
    if tensors.len() != store.len() {
        return Err(Error::Shape(format!(
            "checkpoint holds {} tensors, configuration expects {}",
            tensors.len(),
            store.len()
        )));
    }
    for (name, m) in tensors {
        let id = store
            .id(&name)
            .ok_or_else(|| Error::Shape(format!("unexpected tensor {name}")))?;
        let want = store.value(id).shape();
        if m.shape() != want {
            return Err(Error::Shape(format!(
                "tensor {name}: checkpoint {:?}, configuration {:?}",
                m.shape(),
                want
            )));
        }
        *store.value_mut(id) = m;
    }
    Ok(())
}
