//! Versioned binary model container.
//!
//! ```text
//! magic    8 bytes  "BLKYMDL\0"
//! version  u32 LE
//! header   u32 LE length + JSON {arch, recipe, param_count}
//! params   param_count x f64 LE
//! ```

use alloc::format;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::network::{ArchConfig, Network};
use super::train::TrainingRecipe;
use crate::{Error, Result};

pub const MODEL_MAGIC: &[u8; 8] = b"BLKYMDL\0";
pub const MODEL_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Header {
    arch: ArchConfig,
    recipe: TrainingRecipe,
    param_count: usize,
}

/// A decoded model file.
#[derive(Debug, Clone)]
pub struct ModelFile {
    pub network: Network,
    pub recipe: TrainingRecipe,
}

pub fn encode_model(network: &Network, recipe: &TrainingRecipe) -> Vec<u8> {
    let header = Header { arch: network.arch().clone(), recipe: recipe.clone(), param_count: network.param_count() };
    let json = serde_json::to_vec(&header).expect("header serializes");
    let mut out = Vec::with_capacity(16 + json.len() + 8 * network.param_count());
    out.extend_from_slice(MODEL_MAGIC);
    out.extend_from_slice(&MODEL_FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&(json.len() as u32).to_le_bytes());
    out.extend_from_slice(&json);
    for p in &network.params {
        out.extend_from_slice(&p.to_le_bytes());
    }
    out
}

fn take<'a>(bytes: &mut &'a [u8], n: usize) -> Result<&'a [u8]> {
    if bytes.len() < n {
        return Err(Error::Decode("truncated model file".into()));
    }
    let (head, tail) = bytes.split_at(n);
    *bytes = tail;
    Ok(head)
}

fn read_u32(bytes: &mut &[u8]) -> Result<u32> {
    let b = take(bytes, 4)?;
    Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
}

pub fn decode_model(mut bytes: &[u8]) -> Result<ModelFile> {
    if take(&mut bytes, 8)? != MODEL_MAGIC {
        return Err(Error::Decode("not a model file".into()));
    }
    let version = read_u32(&mut bytes)?;
    if version != MODEL_FORMAT_VERSION {
        return Err(Error::Decode(format!("unsupported model format version {version}")));
    }
    let len = read_u32(&mut bytes)? as usize;
    let header: Header =
        serde_json::from_slice(take(&mut bytes, len)?).map_err(|e| Error::Decode(format!("header: {e}")))?;
    if bytes.len() != 8 * header.param_count {
        return Err(Error::Decode(format!(
            "expected {} parameter bytes, found {}",
            8 * header.param_count,
            bytes.len()
        )));
    }
    let params = bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes([c[0], c[1], c[2], c[3], c[4], c[5], c[6], c[7]]))
        .collect();
    let network = Network::from_params(header.arch, params).map_err(|e| Error::Decode(format!("{e}")))?;
    Ok(ModelFile { network, recipe: header.recipe })
}
