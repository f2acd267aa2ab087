//! `QSSC` checkpoint container.
//!
//! Layout (all integers little-endian `u32`): magic, version, length of the
//! text record followed by its UTF-8 bytes, number of arrays, then per
//! array: name length, name bytes, rank, dims, and `f32` values. The text
//! record holds the model configuration followed by any extra `key=value`
//! lines (training state).

use std::fs;
use std::path::Path;

use super::{Model, ModelConfig};
use crate::error::{Error, Result};
use crate::raster::{Param, ParamStore};

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"QSSC";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub config: ModelConfig,
    /// Extra record lines, kept in order.
    pub meta: Vec<(String, String)>,
    /// Model parameters in store order, then any extra arrays.
    pub arrays: Vec<Param>,
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| Error::Format("checkpoint truncated".into()))?;
        let out = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn string(&mut self, n: usize) -> Result<String> {
        String::from_utf8(self.take(n)?.to_vec())
            .map_err(|_| Error::Format("checkpoint string is not UTF-8".into()))
    }
}

impl Checkpoint {
    pub fn from_model(model: &Model) -> Self {
        Checkpoint {
            config: model.config.clone(),
            meta: Vec::new(),
            arrays: model.params.iter().cloned().collect(),
        }
    }

    /// Number of leading arrays that belong to the model.
    fn model_len(&self) -> usize {
        Model::<f32>::layout(&self.config).len()
    }

    pub fn model(&self) -> Result<Model> {
        let n = self.model_len();
        if self.arrays.len() < n {
            return Err(Error::Format(format!(
                "checkpoint holds {} arrays, model needs {n}",
                self.arrays.len()
            )));
        }
        let mut params = ParamStore::new();
        for p in &self.arrays[..n] {
            params.push(p.clone())?;
        }
        Model::from_params(self.config.clone(), params)
    }

    /// Arrays after the model parameters.
    pub fn extra_arrays(&self) -> &[Param] {
        let n = self.model_len().min(self.arrays.len());
        &self.arrays[n..]
    }

    pub fn meta(&self, key: &str) -> Option<&str> {
        self.meta
            .iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut record = self.config.to_record();
        for (k, v) in &self.meta {
            record.push_str(&format!("{k}={v}\n"));
        }
        let mut out = Vec::new();
        out.extend_from_slice(CHECKPOINT_MAGIC);
        out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
        out.extend_from_slice(&(record.len() as u32).to_le_bytes());
        out.extend_from_slice(record.as_bytes());
        out.extend_from_slice(&(self.arrays.len() as u32).to_le_bytes());
        for p in &self.arrays {
            out.extend_from_slice(&(p.name.len() as u32).to_le_bytes());
            out.extend_from_slice(p.name.as_bytes());
            out.extend_from_slice(&(p.dims.len() as u32).to_le_bytes());
            for d in &p.dims {
                out.extend_from_slice(&(*d as u32).to_le_bytes());
            }
            for v in &p.data {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(4)? != CHECKPOINT_MAGIC {
            return Err(Error::Format("not a QSSC checkpoint".into()));
        }
        let version = r.u32()?;
        if version != CHECKPOINT_VERSION {
            return Err(Error::Format(format!(
                "unsupported checkpoint version {version}"
            )));
        }
        let len = r.u32()? as usize;
        let record = r.string(len)?;
        let (config, meta) = ModelConfig::from_record(&record)?;
        let count = r.u32()? as usize;
        let mut arrays = Vec::with_capacity(count.min(1 << 16));
        for _ in 0..count {
            let name_len = r.u32()? as usize;
            let name = r.string(name_len)?;
            let rank = r.u32()? as usize;
            let dims = (0..rank)
                .map(|_| r.u32().map(|d| d as usize))
                .collect::<Result<Vec<_>>>()?;
            let n: usize = dims.iter().product();
            let data = r
                .take(4 * n)?
                .chunks_exact(4)
                .map(|b| f32::from_le_bytes(b.try_into().unwrap()))
                .collect();
            arrays.push(Param::new(name, dims, data)?);
        }
        if r.pos != bytes.len() {
            return Err(Error::Format(
                "trailing bytes after checkpoint arrays".into(),
            ));
        }
        Ok(Checkpoint {
            config,
            meta,
            arrays,
        })
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
        fs::write(path, self.encode()).map_err(|e| Error::io(path, e))
    }

    pub fn read(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::decode(&bytes).map_err(|e| Error::data(path, e.to_string()))
    }
}

impl Model {
    pub fn save(&self, path: &Path) -> Result<()> {
        Checkpoint::from_model(self).write(path)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Checkpoint::read(path)?.model()
    }
}
