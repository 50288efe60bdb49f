//! Minimal reader/writer for the safetensors multi-tensor layout: an 8-byte
//! little-endian header length, a JSON header mapping names to dtype, shape
//! and byte offsets, then the raw tensor bytes.

use std::collections::BTreeMap;
use std::path::Path;

use serde_json::{json, Map, Value};

use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Archive {
    pub tensors: BTreeMap<String, Tensor>,
    pub metadata: BTreeMap<String, String>,
}

fn err(path: &Path, message: impl Into<String>) -> Error {
    Error::Archive { path: path.to_path_buf(), message: message.into() }
}

impl Archive {
    pub fn insert(&mut self, name: impl Into<String>, shape: Vec<usize>, data: Vec<f64>) {
        debug_assert_eq!(shape.iter().product::<usize>(), data.len());
        self.tensors.insert(name.into(), Tensor { shape, data });
    }

    /// Serializes every tensor as F64.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut header = Map::new();
        if !self.metadata.is_empty() {
            header.insert("__metadata__".into(), json!(self.metadata));
        }
        let mut offset = 0usize;
        for (name, t) in &self.tensors {
            let end = offset + t.data.len() * 8;
            header.insert(name.clone(), json!({ "dtype": "F64", "shape": t.shape, "data_offsets": [offset, end] }));
            offset = end;
        }
        let mut text = serde_json::to_string(&Value::Object(header)).expect("header serializes");
        while text.len() % 8 != 0 {
            text.push(' ');
        }
        let mut out = Vec::with_capacity(8 + text.len() + offset);
        out.extend_from_slice(&(text.len() as u64).to_le_bytes());
        out.extend_from_slice(text.as_bytes());
        for t in self.tensors.values() {
            for v in &t.data {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes, path)
    }

    /// Parses an archive; `path` is only used in error messages. F64, F32
    /// and BF16 tensors are widened to f64.
    pub fn from_bytes(bytes: &[u8], path: &Path) -> Result<Self> {
        if bytes.len() < 8 {
            return Err(err(path, "file shorter than the header length field"));
        }
        let n = u64::from_le_bytes(bytes[..8].try_into().unwrap()) as usize;
        let body_start = 8usize.checked_add(n).filter(|&e| e <= bytes.len()).ok_or_else(|| err(path, "header length exceeds file size"))?;
        let header: Map<String, Value> =
            serde_json::from_slice(&bytes[8..body_start]).map_err(|e| err(path, format!("invalid header: {e}")))?;
        let body = &bytes[body_start..];
        let mut archive = Archive::default();
        for (name, entry) in header {
            if name == "__metadata__" {
                let meta: BTreeMap<String, String> =
                    serde_json::from_value(entry).map_err(|e| err(path, format!("invalid metadata: {e}")))?;
                archive.metadata = meta;
                continue;
            }
            let bad = |what: &str| err(path, format!("tensor {name}: {what}"));
            let dtype = entry.get("dtype").and_then(Value::as_str).ok_or_else(|| bad("missing dtype"))?;
            let shape: Vec<usize> = entry
                .get("shape")
                .and_then(|s| serde_json::from_value(s.clone()).ok())
                .ok_or_else(|| bad("missing shape"))?;
            let offs: [usize; 2] = entry
                .get("data_offsets")
                .and_then(|s| serde_json::from_value(s.clone()).ok())
                .ok_or_else(|| bad("missing data_offsets"))?;
            if offs[0] > offs[1] || offs[1] > body.len() {
                return Err(bad("data offsets out of range"));
            }
            let raw = &body[offs[0]..offs[1]];
            let width = match dtype {
                "F64" => 8,
                "F32" => 4,
                "BF16" => 2,
                other => return Err(bad(&format!("unsupported dtype {other}"))),
            };
            let count: usize = shape.iter().product();
            if raw.len() != count * width {
                return Err(bad("byte length does not match shape"));
            }
            let data = match width {
                8 => raw.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect(),
                4 => raw.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64).collect(),
                _ => raw
                    .chunks_exact(2)
                    .map(|c| f32::from_bits((u16::from_le_bytes([c[0], c[1]]) as u32) << 16) as f64)
                    .collect(),
            };
            archive.tensors.insert(name, Tensor { shape, data });
        }
        Ok(archive)
    }
}
