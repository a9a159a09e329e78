//! Tensor dumps: a `manifest.json` plus raw little-endian IEEE-754
//! payload files.
//!
//! ```json
//! {
//!   "version": 1,
//!   "tensors": [
//!     {"key": "weights/conv1", "dtype": "f32", "shape": [64, 3, 7, 7], "file": "tensors.bin", "byte_offset": 0}
//!   ]
//! }
//! ```
//!
//! Each tensor occupies `product(shape) * dtype_size` bytes starting at
//! `byte_offset` of `file` (relative to the directory), row-major.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const MANIFEST_FILE: &str = "manifest.json";
pub const PAYLOAD_FILE: &str = "tensors.bin";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Dtype {
    F32,
    F64,
}

impl Dtype {
    pub fn size(self) -> usize {
        match self {
            Dtype::F32 => 4,
            Dtype::F64 => 8,
        }
    }
}

impl FromStr for Dtype {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "f32" => Ok(Dtype::F32),
            "f64" => Ok(Dtype::F64),
            other => Err(Error::UnknownDtype(other.to_string())),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum TensorData {
    F32(Vec<f32>),
    F64(Vec<f64>),
}

impl TensorData {
    pub fn len(&self) -> usize {
        match self {
            TensorData::F32(v) => v.len(),
            TensorData::F64(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TensorBlob {
    pub key: String,
    pub shape: Vec<usize>,
    pub data: TensorData,
}

impl TensorBlob {
    pub fn new(key: impl Into<String>, shape: Vec<usize>, data: TensorData) -> Result<Self> {
        let key = key.into();
        check_shape(&key, &shape)?;
        let expected: usize = shape.iter().product();
        if data.len() != expected {
            return Err(Error::ShapeMismatch(format!("tensor `{key}` has {} values for shape {shape:?}", data.len())));
        }
        Ok(TensorBlob { key, shape, data })
    }

    pub fn f64(key: impl Into<String>, shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        TensorBlob::new(key, shape, TensorData::F64(data))
    }

    pub fn f32(key: impl Into<String>, shape: Vec<usize>, data: Vec<f32>) -> Result<Self> {
        TensorBlob::new(key, shape, TensorData::F32(data))
    }

    pub fn dtype(&self) -> Dtype {
        match self.data {
            TensorData::F32(_) => Dtype::F32,
            TensorData::F64(_) => Dtype::F64,
        }
    }

    pub fn to_f64(&self) -> Vec<f64> {
        match &self.data {
            TensorData::F32(v) => v.iter().map(|&x| x as f64).collect(),
            TensorData::F64(v) => v.clone(),
        }
    }

    fn to_le_bytes(&self) -> Vec<u8> {
        match &self.data {
            TensorData::F32(v) => v.iter().flat_map(|x| x.to_le_bytes()).collect(),
            TensorData::F64(v) => v.iter().flat_map(|x| x.to_le_bytes()).collect(),
        }
    }
}

fn check_shape(key: &str, shape: &[usize]) -> Result<()> {
    if key.is_empty() {
        return Err(Error::Manifest("empty tensor key".into()));
    }
    if shape.is_empty() || shape.contains(&0) {
        return Err(Error::Manifest(format!("tensor `{key}` needs a nonempty shape of positive dims, got {shape:?}")));
    }
    Ok(())
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ManifestEntry {
    key: String,
    dtype: String,
    shape: Vec<usize>,
    file: String,
    byte_offset: u64,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Manifest {
    version: u32,
    tensors: Vec<ManifestEntry>,
}

/// Loads every tensor listed in `<dir>/manifest.json`.
pub fn load_tensor_dir(dir: impl AsRef<Path>) -> Result<BTreeMap<String, TensorBlob>> {
    let dir = dir.as_ref();
    let manifest_path = dir.join(MANIFEST_FILE);
    let text = fs::read_to_string(&manifest_path).map_err(|e| Error::io(&manifest_path, e))?;
    let manifest: Manifest = serde_json::from_str(&text).map_err(Error::from_json)?;
    if manifest.version != 1 {
        return Err(Error::Manifest(format!("unsupported manifest version {}", manifest.version)));
    }

    let mut files: BTreeMap<String, Vec<u8>> = BTreeMap::new();
    let mut out = BTreeMap::new();
    for entry in manifest.tensors {
        let dtype: Dtype = entry.dtype.parse()?;
        check_shape(&entry.key, &entry.shape)?;
        if entry.file.contains("..") || Path::new(&entry.file).is_absolute() {
            return Err(Error::Manifest(format!("tensor `{}` points outside the directory", entry.key)));
        }
        if !files.contains_key(&entry.file) {
            let path = dir.join(&entry.file);
            let bytes = fs::read(&path).map_err(|e| Error::io(&path, e))?;
            files.insert(entry.file.clone(), bytes);
        }
        let bytes = &files[&entry.file];
        let count: usize = entry.shape.iter().product();
        let len = (count * dtype.size()) as u64;
        let end = entry.byte_offset + len;
        if end > bytes.len() as u64 {
            return Err(Error::Truncated { key: entry.key, expected: end, actual: bytes.len() as u64 });
        }
        let raw = &bytes[entry.byte_offset as usize..end as usize];
        let data = match dtype {
            Dtype::F32 => TensorData::F32(raw.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().unwrap())).collect()),
            Dtype::F64 => TensorData::F64(raw.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect()),
        };
        if out.contains_key(&entry.key) {
            return Err(Error::Manifest(format!("duplicate tensor key `{}`", entry.key)));
        }
        out.insert(entry.key.clone(), TensorBlob { key: entry.key, shape: entry.shape, data });
    }
    Ok(out)
}

/// Writes `blobs` into `dir` as one payload file plus manifest, in key order.
pub fn write_tensor_dir<'a>(dir: impl AsRef<Path>, blobs: impl IntoIterator<Item = &'a TensorBlob>) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut sorted: Vec<&TensorBlob> = blobs.into_iter().collect();
    sorted.sort_by(|a, b| a.key.cmp(&b.key));

    let mut payload = Vec::new();
    let mut tensors = Vec::with_capacity(sorted.len());
    for blob in sorted {
        tensors.push(ManifestEntry {
            key: blob.key.clone(),
            dtype: match blob.dtype() {
                Dtype::F32 => "f32".into(),
                Dtype::F64 => "f64".into(),
            },
            shape: blob.shape.clone(),
            file: PAYLOAD_FILE.into(),
            byte_offset: payload.len() as u64,
        });
        payload.extend_from_slice(&blob.to_le_bytes());
    }
    let payload_path = dir.join(PAYLOAD_FILE);
    fs::write(&payload_path, &payload).map_err(|e| Error::io(&payload_path, e))?;
    let manifest = serde_json::to_string_pretty(&Manifest { version: 1, tensors }).expect("manifest serializes");
    let manifest_path = dir.join(MANIFEST_FILE);
    fs::write(&manifest_path, manifest + "\n").map_err(|e| Error::io(&manifest_path, e))?;
    Ok(())
}
