//! Binary checkpoint format.
//!
//! ```text
//! "FPT1" | u32 LE header length | JSON header | f32 LE parameters | u32 LE CRC32
//! ```
//!
//! The CRC covers every byte before it. Parameters are stored in manifest
//! order; offsets in the manifest count `f32` elements from the start of the
//! parameter block.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{CheckpointError, Error, Result};
use crate::net::{FptArch, FptModel};
use crate::numeric::{ParamStore, Tensor};

pub const MAGIC: &[u8; 4] = b"FPT1";
pub const FORMAT_VERSION: u32 = 1;

/// Source augmentation order used by the training pipeline.
pub const AUGMENTATION_ORDER: [&str; 3] = ["deform", "rotate", "translate"];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParamEntry {
    pub name: String,
    pub shape: Vec<usize>,
    pub offset: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckpointHeader {
    pub version: u32,
    pub arch: FptArch,
    pub seed: u64,
    pub augmentation_order: Vec<String>,
    #[serde(default)]
    pub metadata: serde_json::Value,
    pub params: Vec<ParamEntry>,
}

#[derive(Clone, Debug)]
pub struct Checkpoint {
    pub model: FptModel<f32>,
    pub header: CheckpointHeader,
    /// CRC32 of the file, hex.
    pub id: String,
}

pub fn encode_checkpoint(model: &FptModel<f32>, metadata: serde_json::Value) -> Result<Vec<u8>> {
    let mut offset = 0;
    let params = model
        .params
        .iter()
        .map(|p| {
            let e = ParamEntry {
                name: p.name.clone(),
                shape: p.value.shape().to_vec(),
                offset,
            };
            offset += p.value.len();
            e
        })
        .collect();
    let header = CheckpointHeader {
        version: FORMAT_VERSION,
        arch: model.arch.clone(),
        seed: model.seed,
        augmentation_order: AUGMENTATION_ORDER.iter().map(|s| s.to_string()).collect(),
        metadata,
        params,
    };
    let json = serde_json::to_vec(&header)?;

    let mut out = Vec::with_capacity(12 + json.len() + 4 * offset);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(json.len() as u32).to_le_bytes());
    out.extend_from_slice(&json);
    for p in model.params.iter() {
        for v in p.value.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    let crc = crc32fast::hash(&out);
    out.extend_from_slice(&crc.to_le_bytes());
    Ok(out)
}

pub fn decode_checkpoint(bytes: &[u8]) -> Result<Checkpoint> {
    if bytes.len() < 4 || &bytes[..4] != MAGIC {
        return Err(CheckpointError::BadMagic(bytes[..bytes.len().min(4)].to_vec()).into());
    }
    if bytes.len() < 12 {
        return Err(CheckpointError::Truncated(format!("{} bytes", bytes.len())).into());
    }
    let header_len = u32::from_le_bytes(bytes[4..8].try_into().unwrap()) as usize;
    if bytes.len() < 8 + header_len + 4 {
        return Err(CheckpointError::Truncated(format!(
            "header claims {header_len} bytes but file has {}",
            bytes.len()
        ))
        .into());
    }
    let (body, tail) = bytes.split_at(bytes.len() - 4);
    let stored = u32::from_le_bytes(tail.try_into().unwrap());
    let computed = crc32fast::hash(body);
    if stored != computed {
        return Err(CheckpointError::Checksum { stored, computed }.into());
    }

    let header: CheckpointHeader = serde_json::from_slice(&body[8..8 + header_len])
        .map_err(|e| CheckpointError::Header(e.to_string()))?;
    if header.version != FORMAT_VERSION {
        return Err(CheckpointError::Version {
            found: header.version,
            expected: FORMAT_VERSION,
        }
        .into());
    }

    let payload = &body[8 + header_len..];
    if payload.len() % 4 != 0 {
        return Err(CheckpointError::Truncated("parameter block is not a whole number of f32s".into()).into());
    }
    let floats: Vec<f32> = payload
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
        .collect();

    let mut store = ParamStore::new();
    for e in &header.params {
        let len: usize = e.shape.iter().product();
        let data = floats
            .get(e.offset..e.offset + len)
            .ok_or_else(|| CheckpointError::Truncated(format!("parameter {:?} runs past the data", e.name)))?;
        store.add(e.name.clone(), Tensor::new(e.shape.clone(), data.to_vec())?)?;
    }
    let expected: usize = header.params.iter().map(|e| e.shape.iter().product::<usize>()).sum();
    if expected != floats.len() {
        return Err(CheckpointError::Header(format!(
            "manifest describes {expected} values, file holds {}",
            floats.len()
        ))
        .into());
    }
    let model = FptModel::from_params(header.arch.clone(), header.seed, store)
        .map_err(|e| Error::Checkpoint(CheckpointError::Header(e.to_string())))?;
    Ok(Checkpoint {
        model,
        header,
        id: format!("{computed:08x}"),
    })
}

pub fn save_checkpoint(model: &FptModel<f32>, path: impl AsRef<Path>) -> Result<()> {
    save_checkpoint_with(model, path, serde_json::Value::Null)
}

pub fn save_checkpoint_with(model: &FptModel<f32>, path: impl AsRef<Path>, metadata: serde_json::Value) -> Result<()> {
    let path = path.as_ref();
    let bytes = encode_checkpoint(model, metadata)?;
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn read_checkpoint(path: impl AsRef<Path>) -> Result<Checkpoint> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_checkpoint(&bytes)
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<FptModel<f32>> {
    Ok(read_checkpoint(path)?.model)
}
