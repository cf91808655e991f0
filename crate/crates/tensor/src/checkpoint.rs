//! Single-file checkpoint container.
//!
//! Layout: an 8-byte little-endian unsigned header length, the JSON header
//! mapping each tensor name to `{shape, dtype, offset, len}` (offsets are
//! relative to the start of the data section, lengths in bytes), then the
//! raw little-endian value buffers. Values are stored as f32 by default;
//! f64 is available for training-state files that must survive a resume
//! without rounding.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{self, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

#[derive(Debug, thiserror::Error)]
pub enum CheckpointError {
    #[error("checkpoint io: {0}")]
    Io(#[from] io::Error),
    #[error("checkpoint header: {0}")]
    Header(#[from] serde_json::Error),
    #[error("checkpoint {path}: {reason}")]
    Malformed { path: String, reason: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Dtype {
    F32,
    F64,
}

impl Dtype {
    fn as_str(self) -> &'static str {
        match self {
            Dtype::F32 => "f32",
            Dtype::F64 => "f64",
        }
    }

    fn byte_width(self) -> usize {
        match self {
            Dtype::F32 => 4,
            Dtype::F64 => 8,
        }
    }
}

#[derive(Serialize, Deserialize)]
struct HeaderEntry {
    shape: Vec<usize>,
    dtype: String,
    offset: u64,
    len: u64,
}

/// One named tensor loaded from a container, upcast to f64.
#[derive(Debug, Clone)]
pub struct LoadedTensor {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

/// Writes named buffers into a container file. Offsets follow the given
/// entry order; the header itself is sorted by name so identical inputs
/// produce byte-identical files.
pub fn save<P: AsRef<Path>>(
    path: P,
    entries: &[(String, Vec<usize>, Vec<f64>)],
    dtype: Dtype,
) -> Result<(), CheckpointError> {
    let mut header = BTreeMap::new();
    let mut offset = 0u64;
    for (name, shape, data) in entries {
        let len = (data.len() * dtype.byte_width()) as u64;
        header.insert(
            name.clone(),
            HeaderEntry {
                shape: shape.clone(),
                dtype: dtype.as_str().to_string(),
                offset,
                len,
            },
        );
        offset += len;
    }
    let header_bytes = serde_json::to_vec(&header)?;
    let mut file = File::create(path)?;
    file.write_all(&(header_bytes.len() as u64).to_le_bytes())?;
    file.write_all(&header_bytes)?;
    for (_, _, data) in entries {
        match dtype {
            Dtype::F32 => {
                for &v in data {
                    file.write_all(&(v as f32).to_le_bytes())?;
                }
            }
            Dtype::F64 => {
                for &v in data {
                    file.write_all(&v.to_le_bytes())?;
                }
            }
        }
    }
    Ok(())
}

/// Reads every tensor in the container, upcasting f32 buffers to f64.
pub fn load<P: AsRef<Path>>(path: P) -> Result<Vec<LoadedTensor>, CheckpointError> {
    let path_str = path.as_ref().display().to_string();
    let mut file = File::open(&path)?;
    let mut len_buf = [0u8; 8];
    file.read_exact(&mut len_buf)?;
    let header_len = u64::from_le_bytes(len_buf) as usize;
    let mut header_bytes = vec![0u8; header_len];
    file.read_exact(&mut header_bytes)?;
    let header: BTreeMap<String, HeaderEntry> = serde_json::from_slice(&header_bytes)?;
    let mut data = Vec::new();
    file.read_to_end(&mut data)?;

    let mut out = Vec::with_capacity(header.len());
    for (name, entry) in header {
        let start = entry.offset as usize;
        let end = start + entry.len as usize;
        if end > data.len() {
            return Err(CheckpointError::Malformed {
                path: path_str,
                reason: format!("tensor {name} extends past end of file"),
            });
        }
        let bytes = &data[start..end];
        let values: Vec<f64> = match entry.dtype.as_str() {
            "f32" => bytes
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
                .collect(),
            "f64" => bytes
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
                .collect(),
            other => {
                return Err(CheckpointError::Malformed {
                    path: path_str,
                    reason: format!("unknown dtype {other}"),
                })
            }
        };
        let expected: usize = entry.shape.iter().product();
        if values.len() != expected {
            return Err(CheckpointError::Malformed {
                path: path_str,
                reason: format!(
                    "tensor {name}: {} values for shape {:?}",
                    values.len(),
                    entry.shape
                ),
            });
        }
        out.push(LoadedTensor {
            name,
            shape: entry.shape,
            data: values,
        });
    }
    Ok(out)
}
