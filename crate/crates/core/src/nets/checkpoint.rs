//! Versioned binary parameter files.
//!
//! Layout (all integers u32 little-endian):
//! magic `TRKLCKPT`, format version, metadata byte length, metadata as
//! UTF-8 `key=value` lines, tensor count, then per tensor: name length,
//! name, rank, dims, and `f32` little-endian values.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use thiserror::Error;

use super::{FlatMlpArch, FlatMlpNet, GcnArch, GcnNet, ParamSet, PolicyModel, PolicyNet, Representation, Tensor};
use crate::Real;

pub const MAGIC: &[u8; 8] = b"TRKLCKPT";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("not a checkpoint file (bad magic)")]
    BadMagic,
    #[error("checkpoint format version {found}, this build reads version {expected}")]
    Version { found: u32, expected: u32 },
    #[error("malformed checkpoint: {0}")]
    Malformed(String),
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Checkpoint {
    pub meta: BTreeMap<String, String>,
    pub tensors: Vec<Tensor<f32>>,
}

fn put_u32(w: &mut impl Write, v: u32) -> std::io::Result<()> {
    w.write_all(&v.to_le_bytes())
}

fn get_u32(r: &mut impl Read) -> std::io::Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn get_string(r: &mut impl Read, len: u32) -> Result<String, CheckpointError> {
    let mut b = vec![0u8; len as usize];
    r.read_exact(&mut b)?;
    String::from_utf8(b).map_err(|_| CheckpointError::Malformed("non UTF-8 text".into()))
}

fn list(v: &[usize]) -> String {
    v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",")
}

impl Checkpoint {
    pub fn write_to(&self, w: &mut impl Write) -> Result<(), CheckpointError> {
        w.write_all(MAGIC)?;
        put_u32(w, FORMAT_VERSION)?;
        let mut meta = String::new();
        for (k, v) in &self.meta {
            if k.contains(['=', '\n']) || v.contains('\n') {
                return Err(CheckpointError::Malformed(format!("metadata entry {k:?}")));
            }
            meta.push_str(&format!("{k}={v}\n"));
        }
        put_u32(w, meta.len() as u32)?;
        w.write_all(meta.as_bytes())?;
        put_u32(w, self.tensors.len() as u32)?;
        for t in &self.tensors {
            put_u32(w, t.name.len() as u32)?;
            w.write_all(t.name.as_bytes())?;
            put_u32(w, t.shape.len() as u32)?;
            for &d in &t.shape {
                put_u32(w, d as u32)?;
            }
            for &v in &t.data {
                w.write_all(&v.to_le_bytes())?;
            }
        }
        Ok(())
    }

    pub fn read_from(r: &mut impl Read) -> Result<Self, CheckpointError> {
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic).map_err(|_| CheckpointError::BadMagic)?;
        if &magic != MAGIC {
            return Err(CheckpointError::BadMagic);
        }
        let version = get_u32(r)?;
        if version != FORMAT_VERSION {
            return Err(CheckpointError::Version { found: version, expected: FORMAT_VERSION });
        }
        let meta_len = get_u32(r)?;
        let text = get_string(r, meta_len)?;
        let mut meta = BTreeMap::new();
        for line in text.lines() {
            let (k, v) = line.split_once('=').ok_or_else(|| CheckpointError::Malformed(format!("metadata line {line:?}")))?;
            meta.insert(k.to_string(), v.to_string());
        }
        let count = get_u32(r)?;
        let mut tensors = Vec::with_capacity(count.min(1024) as usize);
        for _ in 0..count {
            let name_len = get_u32(r)?;
            let name = get_string(r, name_len)?;
            let rank = get_u32(r)?;
            let shape = (0..rank).map(|_| get_u32(r).map(|d| d as usize)).collect::<Result<Vec<_>, _>>()?;
            let n: usize = shape.iter().product();
            let mut bytes = vec![0u8; n * 4];
            r.read_exact(&mut bytes)?;
            let data = bytes.chunks_exact(4).map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]])).collect();
            tensors.push(Tensor { name, shape, data });
        }
        Ok(Checkpoint { meta, tensors })
    }

    pub fn save(&self, path: &Path) -> Result<(), CheckpointError> {
        let mut w = BufWriter::new(File::create(path)?);
        self.write_to(&mut w)?;
        w.flush()?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, CheckpointError> {
        Checkpoint::read_from(&mut BufReader::new(File::open(path)?))
    }

    /// Pack one model per agent. Tensor names get an `agent{i}/` prefix.
    pub fn from_models<T: Real>(models: &[PolicyModel<T>]) -> Self {
        let mut meta = BTreeMap::new();
        meta.insert("n_agents".to_string(), models.len().to_string());
        if let Some(first) = models.first() {
            match first {
                PolicyModel::Gcn(n) => {
                    let a = n.arch();
                    meta.insert("representation".into(), "tracklets_gcn".into());
                    meta.insert("input_dim".into(), a.input_dim.to_string());
                    meta.insert("gcn_widths".into(), list(&a.gcn_widths));
                    meta.insert("head_hidden".into(), list(&a.head_hidden));
                    meta.insert("n_actions".into(), a.n_actions.to_string());
                }
                PolicyModel::Mlp(n) => {
                    let a = n.arch();
                    meta.insert("representation".into(), "tracklets_mlp".into());
                    meta.insert("n_nodes".into(), a.n_nodes.to_string());
                    meta.insert("node_dim".into(), a.node_dim.to_string());
                    meta.insert("hidden".into(), list(&a.hidden));
                    meta.insert("n_actions".into(), a.n_actions.to_string());
                }
            }
        }
        let mut tensors = Vec::new();
        for (i, m) in models.iter().enumerate() {
            for t in &m.params().cast::<f32>().tensors {
                tensors.push(Tensor { name: format!("agent{i}/{}", t.name), ..t.clone() });
            }
        }
        Checkpoint { meta, tensors }
    }

    pub fn representation(&self) -> Result<Representation, CheckpointError> {
        match self.meta.get("representation").map(String::as_str) {
            Some("tracklets_gcn") => Ok(Representation::TrackletsGcn),
            Some("tracklets_mlp") => Ok(Representation::TrackletsMlp),
            other => Err(CheckpointError::Malformed(format!("representation {other:?}"))),
        }
    }

    fn usize_field(&self, key: &str) -> Result<usize, CheckpointError> {
        self.meta
            .get(key)
            .and_then(|v| v.parse().ok())
            .ok_or_else(|| CheckpointError::Malformed(format!("missing or invalid {key}")))
    }

    fn list_field(&self, key: &str) -> Result<Vec<usize>, CheckpointError> {
        let v = self.meta.get(key).ok_or_else(|| CheckpointError::Malformed(format!("missing {key}")))?;
        if v.is_empty() {
            return Ok(Vec::new());
        }
        v.split(',')
            .map(|s| s.parse().map_err(|_| CheckpointError::Malformed(format!("invalid {key}"))))
            .collect()
    }

    pub fn to_models<T: Real>(&self) -> Result<Vec<PolicyModel<T>>, CheckpointError> {
        let n_agents = self.usize_field("n_agents")?;
        let repr = self.representation()?;
        let mut models = Vec::with_capacity(n_agents);
        for i in 0..n_agents {
            let prefix = format!("agent{i}/");
            let tensors = self
                .tensors
                .iter()
                .filter_map(|t| {
                    t.name.strip_prefix(&prefix).map(|n| Tensor {
                        name: n.to_string(),
                        shape: t.shape.clone(),
                        data: t.data.iter().map(|&v| T::lit(v as f64)).collect(),
                    })
                })
                .collect();
            let params = ParamSet { tensors };
            let bad = |e: super::NetError| CheckpointError::Malformed(format!("agent {i}: {e}"));
            let model = match repr {
                Representation::TrackletsGcn => {
                    let arch = GcnArch {
                        input_dim: self.usize_field("input_dim")?,
                        gcn_widths: self.list_field("gcn_widths")?,
                        head_hidden: self.list_field("head_hidden")?,
                        n_actions: self.usize_field("n_actions")?,
                    };
                    PolicyModel::Gcn(GcnNet::from_params(arch, params).map_err(bad)?)
                }
                Representation::TrackletsMlp => {
                    let arch = FlatMlpArch {
                        n_nodes: self.usize_field("n_nodes")?,
                        node_dim: self.usize_field("node_dim")?,
                        hidden: self.list_field("hidden")?,
                        n_actions: self.usize_field("n_actions")?,
                    };
                    PolicyModel::Mlp(FlatMlpNet::from_params(arch, params).map_err(bad)?)
                }
            };
            models.push(model);
        }
        Ok(models)
    }
}
