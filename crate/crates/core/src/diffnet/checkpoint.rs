//! Binary checkpoints: magic, header length (u64 LE), UTF-8 JSON header
//! (segment names and shapes plus caller metadata), then the parameters as
//! little-endian f64 in segment order.

use std::fs;
use std::io::{Read, Write};
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::params::{Layout, ParamVector, Segment};
use crate::error::{Error, Result};

const MAGIC: &[u8; 8] = b"NFMPCPRM";
const VERSION: u32 = 1;

#[derive(Debug, Clone, Serialize, Deserialize)]
struct Header {
    version: u32,
    segments: Vec<Segment>,
    #[serde(default)]
    meta: serde_json::Value,
}

pub fn write_params<W: Write>(mut out: W, params: &ParamVector, meta: &serde_json::Value) -> Result<()> {
    let header = Header {
        version: VERSION,
        segments: params.layout().segments().to_vec(),
        meta: meta.clone(),
    };
    let json = serde_json::to_vec(&header)?;
    out.write_all(MAGIC)?;
    out.write_all(&(json.len() as u64).to_le_bytes())?;
    out.write_all(&json)?;
    let mut payload = Vec::with_capacity(params.len() * 8);
    for v in params.values() {
        payload.extend_from_slice(&v.to_le_bytes());
    }
    out.write_all(&payload)?;
    Ok(())
}

/// Reads parameters and the metadata value stored alongside them.
pub fn read_params<R: Read>(mut input: R) -> Result<(ParamVector, serde_json::Value)> {
    let mut magic = [0u8; 8];
    input.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(Error::Format("bad magic".into()));
    }
    let mut len = [0u8; 8];
    input.read_exact(&mut len)?;
    let len = u64::from_le_bytes(len) as usize;
    let mut json = vec![0u8; len];
    input.read_exact(&mut json)?;
    let header: Header = serde_json::from_slice(&json)?;
    if header.version != VERSION {
        return Err(Error::Format(format!("unsupported version {}", header.version)));
    }
    let layout = Layout::from_segments(header.segments.into_iter().map(|s| (s.name, s.shape)))?;
    let mut payload = Vec::new();
    input.read_to_end(&mut payload)?;
    if payload.len() != layout.total() * 8 {
        return Err(Error::Format(format!(
            "payload holds {} bytes, header describes {} values",
            payload.len(),
            layout.total()
        )));
    }
    let values = payload
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
        .collect();
    Ok((ParamVector::from_values(Arc::new(layout), values)?, header.meta))
}

pub fn save_params(path: &Path, params: &ParamVector, meta: &serde_json::Value) -> Result<()> {
    let mut buf = Vec::new();
    write_params(&mut buf, params, meta)?;
    fs::write(path, buf).map_err(|e| Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display()))))
}

pub fn load_params(path: &Path) -> Result<(ParamVector, serde_json::Value)> {
    let bytes = fs::read(path).map_err(|e| Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display()))))?;
    read_params(bytes.as_slice())
}
