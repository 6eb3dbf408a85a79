//! Binary parameter checkpoints.
//!
//! Layout, all integers little-endian:
//!
//! | bytes | content |
//! |-------|---------|
//! | 8     | magic `RGATCKPT` |
//! | 4     | format version, `u32` (currently 1) |
//! | 8     | manifest length in bytes, `u64` |
//! | n     | manifest, UTF-8 JSON |
//! | 8·k   | tensor data, `f64` |
//!
//! The manifest is `{"tensors": [{"name", "shape", "trainable", "offset", "len"}]}`
//! where `offset` and `len` count `f64` values from the start of the data
//! section. Tensors appear in parameter registration order.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use super::params::ParamStore;
use super::tensor::Tensor;
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 8] = b"RGATCKPT";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TensorEntry {
    pub name: String,
    pub shape: Vec<usize>,
    pub trainable: bool,
    pub offset: usize,
    pub len: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Manifest {
    pub tensors: Vec<TensorEntry>,
}

pub fn save_params<W: Write>(mut out: W, store: &ParamStore) -> Result<()> {
    let mut offset = 0;
    let tensors = store
        .iter()
        .map(|(_, p)| {
            let e = TensorEntry {
                name: p.name.clone(),
                shape: p.value.shape().to_vec(),
                trainable: p.trainable,
                offset,
                len: p.value.len(),
            };
            offset += p.value.len();
            e
        })
        .collect();
    let manifest = serde_json::to_vec(&Manifest { tensors })?;
    out.write_all(MAGIC)?;
    out.write_all(&VERSION.to_le_bytes())?;
    out.write_all(&(manifest.len() as u64).to_le_bytes())?;
    out.write_all(&manifest)?;
    let mut buf = Vec::with_capacity(offset * 8);
    for (_, p) in store.iter() {
        for v in p.value.data() {
            buf.extend_from_slice(&v.to_le_bytes());
        }
    }
    out.write_all(&buf)?;
    Ok(())
}

pub fn load_params<R: Read>(mut input: R) -> Result<ParamStore> {
    let mut magic = [0u8; 8];
    input.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(Error::Checkpoint("bad magic".into()));
    }
    let mut word = [0u8; 4];
    input.read_exact(&mut word)?;
    let version = u32::from_le_bytes(word);
    if version != VERSION {
        return Err(Error::Checkpoint(format!("unsupported version {version}")));
    }
    let mut len = [0u8; 8];
    input.read_exact(&mut len)?;
    let mut manifest = vec![0u8; u64::from_le_bytes(len) as usize];
    input.read_exact(&mut manifest)?;
    let manifest: Manifest = serde_json::from_slice(&manifest)?;
    let mut data = Vec::new();
    input.read_to_end(&mut data)?;
    if data.len() % 8 != 0 {
        return Err(Error::Checkpoint("data section is not a whole number of f64".into()));
    }
    let values: Vec<f64> = data
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    let mut store = ParamStore::new();
    for e in manifest.tensors {
        let end = e.offset + e.len;
        if end > values.len() || e.shape.iter().product::<usize>() != e.len {
            return Err(Error::Checkpoint(format!("tensor {} out of bounds", e.name)));
        }
        if store.id(&e.name).is_some() {
            return Err(Error::Checkpoint(format!("duplicate tensor {}", e.name)));
        }
        let t = Tensor::new(e.shape, values[e.offset..end].to_vec())?;
        store.add_with(e.name, t, e.trainable);
    }
    Ok(store)
}
