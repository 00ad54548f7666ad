//! `LGCK` checkpoints.
//!
//! ```text
//! "LGCK" | u32 version | u32 header_len | JSON header | f32 LE payloads
//! ```
//!
//! The header carries the arch, config, class table, input dimension,
//! training sample ids and a tensor directory `name → {shape, offset, len}`
//! (byte offsets relative to the payload start). Payloads follow in directory
//! (name) order. Graph architectures store their training rows as the
//! `train.features` tensor; the graph itself is rebuilt on load.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::config::{Arch, ModelConfig};
use super::network::{SageModel, TrainGraph};
use crate::bytes::{put_f32s, put_u32, to_u32, Reader};
use crate::error::{Error, Result};
use crate::nn::LayerParams;
use crate::numerics::Tensor;

pub const LGCK_MAGIC: &[u8; 4] = b"LGCK";
pub const LGCK_VERSION: u32 = 1;
const TRAIN_FEATURES: &str = "train.features";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TensorEntry {
    pub shape: Vec<usize>,
    pub offset: u64,
    pub len: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CheckpointHeader {
    pub arch: Arch,
    pub config: ModelConfig,
    pub class_table: Vec<String>,
    pub input_dim: usize,
    pub train_ids: Vec<String>,
    pub tensors: BTreeMap<String, TensorEntry>,
}

fn named_tensors(model: &SageModel) -> BTreeMap<String, &Tensor> {
    let mut out = BTreeMap::new();
    for p in model.params() {
        out.insert(format!("{}.weight", p.name), &p.weight);
        if let Some(b) = &p.bias {
            out.insert(format!("{}.bias", p.name), b);
        }
    }
    if let Some(tg) = model.train_graph() {
        out.insert(TRAIN_FEATURES.into(), &tg.features);
    }
    out
}

impl SageModel {
    pub fn to_checkpoint(&self) -> Result<Vec<u8>> {
        let tensors = named_tensors(self);
        let mut directory = BTreeMap::new();
        let mut offset = 0u64;
        for (name, t) in &tensors {
            let len = 4 * t.len() as u64;
            directory.insert(
                name.clone(),
                TensorEntry {
                    shape: t.shape().to_vec(),
                    offset,
                    len,
                },
            );
            offset += len;
        }
        let header = CheckpointHeader {
            arch: self.arch(),
            config: self.config.clone(),
            class_table: self.class_table.clone(),
            input_dim: self.input_dim,
            train_ids: self.train_graph().map(|tg| tg.ids.clone()).unwrap_or_default(),
            tensors: directory,
        };
        let json = serde_json::to_vec(&header).map_err(|e| Error::Config(format!("checkpoint header: {e}")))?;
        let mut out = Vec::with_capacity(12 + json.len() + offset as usize);
        out.extend_from_slice(LGCK_MAGIC);
        put_u32(&mut out, LGCK_VERSION);
        put_u32(&mut out, to_u32(json.len(), "header length")?);
        out.extend_from_slice(&json);
        for t in tensors.values() {
            let values: Vec<f32> = t.data().iter().map(|&v| v as f32).collect();
            put_f32s(&mut out, &values);
        }
        Ok(out)
    }

    pub fn from_checkpoint(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader::new(bytes);
        if r.take(4, "magic")? != LGCK_MAGIC {
            return Err(Error::format(0, "bad magic (expected LGCK)"));
        }
        let version = r.u32("version")?;
        if version != LGCK_VERSION {
            return Err(Error::UnsupportedVersion {
                format: "LGCK",
                found: version,
                expected: LGCK_VERSION,
            });
        }
        let header_len = r.u32("header length")? as usize;
        let header_at = r.pos();
        let header: CheckpointHeader = serde_json::from_slice(r.take(header_len, "header")?)
            .map_err(|e| Error::format(header_at, format!("invalid header: {e}")))?;
        if header.arch != header.config.arch {
            return Err(Error::format(header_at, "arch disagrees with config"));
        }
        let payload_at = r.pos();
        let payload = r.take(r.remaining(), "payload")?;

        let read = |name: &str| -> Result<Tensor> {
            let e = header
                .tensors
                .get(name)
                .ok_or_else(|| Error::format(header_at, format!("tensor {name} missing")))?;
            let count: usize = e.shape.iter().product();
            if e.len != 4 * count as u64 {
                return Err(Error::format(header_at, format!("tensor {name}: len {} for shape {:?}", e.len, e.shape)));
            }
            let start = e.offset as usize;
            let end = start.checked_add(e.len as usize).filter(|&end| end <= payload.len()).ok_or(Error::Length {
                field: "payload",
                expected: start.saturating_add(e.len as usize),
                actual: payload.len(),
            })?;
            let mut tr = Reader::new(&payload[start..end]);
            let data = tr.f32_vec(count, "tensor")?.into_iter().map(f64::from).collect();
            Tensor::new(e.shape.clone(), data)
        };

        let mut model = SageModel::build(header.config.clone(), header.input_dim, header.class_table.clone())?;
        let mut expected = 0usize;
        for p in model.params_mut() {
            load(p, &read)?;
            expected += 1 + usize::from(p.bias.is_some());
        }
        let tg = if model.arch().uses_graph() {
            let features = read(TRAIN_FEATURES)?;
            if features.shape() != [header.train_ids.len(), header.input_dim] {
                return Err(Error::format(header_at, "train.features shape disagrees with train_ids"));
            }
            expected += 1;
            Some(TrainGraph::new(
                header.train_ids.clone(),
                features,
                header.config.theta,
                header.config.min_degree,
            )?)
        } else {
            None
        };
        if header.tensors.len() != expected {
            return Err(Error::format(header_at, "unexpected tensors in directory"));
        }
        let used: u64 = header.tensors.values().map(|e| e.len).sum();
        if used != payload.len() as u64 {
            return Err(Error::format(payload_at, format!("{} payload bytes, directory covers {used}", payload.len())));
        }
        model.set_train_graph(tg)?;
        Ok(model)
    }
}

fn load(p: &mut LayerParams, read: &impl Fn(&str) -> Result<Tensor>) -> Result<()> {
    let w = read(&format!("{}.weight", p.name))?;
    if w.shape() != p.weight.shape() {
        return Err(Error::shape("checkpoint weight", w.shape(), p.weight.shape()));
    }
    p.weight = w;
    if let Some(b) = p.bias.as_mut() {
        let t = read(&format!("{}.bias", p.name))?;
        if t.shape() != b.shape() {
            return Err(Error::shape("checkpoint bias", t.shape(), b.shape()));
        }
        *b = t;
    }
    Ok(())
}
