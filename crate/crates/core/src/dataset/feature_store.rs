//! In-memory feature store and its `LGFS` byte codec.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! "LGFS" | u32 version=1 | u8 kind | u8 rank | u16 reserved=0 | u32 n
//!        | rank × u32 dims | n·∏dims × f32 payload | u64 payload byte count
//! ```

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::bytes::{put_f32s, put_u32, to_u32, Reader};
use crate::error::{Error, Result};
use crate::numerics::Tensor;

pub const LGFS_MAGIC: &[u8; 4] = b"LGFS";
pub const LGFS_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FeatureKind {
    /// One `D`-vector per sample.
    Pooled,
    /// One `H'×W'×C'` map per sample.
    Spatial,
}

impl FeatureKind {
    fn code(self) -> u8 {
        match self {
            FeatureKind::Pooled => 0,
            FeatureKind::Spatial => 1,
        }
    }
}

/// Per-sample feature tensors stored in single precision.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureStore {
    kind: FeatureKind,
    dims: Vec<usize>,
    payload: Vec<f32>,
    ids: Vec<String>,
    id_index: BTreeMap<String, usize>,
}

impl FeatureStore {
    pub fn new(kind: FeatureKind, dims: Vec<usize>, payload: Vec<f32>, ids: Vec<String>) -> Result<Self> {
        match (kind, dims.len()) {
            (FeatureKind::Pooled, 1) | (FeatureKind::Spatial, 3) => {}
            _ => {
                return Err(Error::Dataset(format!(
                    "{kind:?} store cannot have rank {}",
                    dims.len()
                )))
            }
        }
        if dims.iter().any(|&d| d == 0) {
            return Err(Error::Dataset("feature dimensions must be positive".into()));
        }
        let row: usize = dims.iter().product();
        if payload.len() != ids.len() * row {
            return Err(Error::shape(
                "FeatureStore::new",
                &[ids.len(), row],
                &[payload.len()],
            ));
        }
        let mut id_index = BTreeMap::new();
        for (i, id) in ids.iter().enumerate() {
            if id_index.insert(id.clone(), i).is_some() {
                return Err(Error::Dataset(format!("duplicate sample id '{id}' in store")));
            }
        }
        Ok(Self {
            kind,
            dims,
            payload,
            ids,
            id_index,
        })
    }

    /// Pooled store from `f64` rows, rounding to single precision.
    pub fn pooled_from_rows(rows: &[Vec<f64>], ids: Vec<String>) -> Result<Self> {
        let d = rows.first().map_or(0, Vec::len);
        let mut payload = Vec::with_capacity(rows.len() * d);
        for r in rows {
            if r.len() != d {
                return Err(Error::shape("pooled_from_rows", &[d], &[r.len()]));
            }
            payload.extend(r.iter().map(|&v| v as f32));
        }
        Self::new(FeatureKind::Pooled, vec![d], payload, ids)
    }

    pub fn kind(&self) -> FeatureKind {
        self.kind
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn n(&self) -> usize {
        self.ids.len()
    }

    pub fn row_len(&self) -> usize {
        self.dims.iter().product()
    }

    pub fn payload(&self) -> &[f32] {
        &self.payload
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn row_of(&self, sample_id: &str) -> Option<usize> {
        self.id_index.get(sample_id).copied()
    }

    pub fn row_f32(&self, i: usize) -> &[f32] {
        let d = self.row_len();
        &self.payload[i * d..(i + 1) * d]
    }

    pub fn row_f64(&self, i: usize) -> Vec<f64> {
        self.row_f32(i).iter().map(|&v| f64::from(v)).collect()
    }

    /// Sample `i` as an `H'×W'×C'` (spatial) or `D` (pooled) tensor.
    pub fn tensor(&self, i: usize) -> Tensor {
        Tensor::new(self.dims.clone(), self.row_f64(i)).expect("store invariant")
    }

    /// Per-channel global average of a spatial store; pooled stores are cloned.
    pub fn pooled_view(&self) -> FeatureStore {
        match self.kind {
            FeatureKind::Pooled => self.clone(),
            FeatureKind::Spatial => {
                let c = self.dims[2];
                let mut payload = Vec::with_capacity(self.n() * c);
                for i in 0..self.n() {
                    payload.extend(global_average_pool(self.row_f32(i), c).iter().map(|&v| v as f32));
                }
                FeatureStore::new(FeatureKind::Pooled, vec![c], payload, self.ids.clone())
                    .expect("pooled view of a valid store")
            }
        }
    }

    /// Rows (as `f64`) of the listed sample ids, in that order.
    pub fn gather(&self, sample_ids: &[&str]) -> Result<Tensor> {
        let d = self.row_len();
        let mut data = Vec::with_capacity(sample_ids.len() * d);
        for id in sample_ids {
            let r = self
                .row_of(id)
                .ok_or_else(|| Error::Dataset(format!("sample '{id}' missing from feature store")))?;
            data.extend(self.row_f32(r).iter().map(|&v| f64::from(v)));
        }
        Tensor::new(vec![sample_ids.len(), d], data)
    }

    pub fn encode(&self) -> Result<Vec<u8>> {
        let payload_bytes = self.payload.len() * 4;
        let mut out = Vec::with_capacity(20 + 4 * self.dims.len() + payload_bytes + 8);
        out.extend_from_slice(LGFS_MAGIC);
        put_u32(&mut out, LGFS_VERSION);
        out.push(self.kind.code());
        out.push(self.dims.len() as u8);
        out.extend_from_slice(&0u16.to_le_bytes());
        put_u32(&mut out, to_u32(self.n(), "sample count")?);
        for &d in &self.dims {
            put_u32(&mut out, to_u32(d, "dimension")?);
        }
        put_f32s(&mut out, &self.payload);
        out.extend_from_slice(&(payload_bytes as u64).to_le_bytes());
        Ok(out)
    }

    /// Decodes `LGFS` bytes; sample ids come from the sibling index, in row order.
    pub fn decode(bytes: &[u8], ids: Vec<String>) -> Result<Self> {
        let mut r = Reader::new(bytes);
        let magic = r.take(4, "magic")?;
        if magic != LGFS_MAGIC {
            return Err(Error::format(0, "bad magic (expected LGFS)"));
        }
        let version = r.u32("version")?;
        if version != LGFS_VERSION {
            return Err(Error::UnsupportedVersion {
                format: "LGFS",
                found: version,
                expected: LGFS_VERSION,
            });
        }
        let kind_at = r.pos();
        let kind = match r.u8("kind")? {
            0 => FeatureKind::Pooled,
            1 => FeatureKind::Spatial,
            k => return Err(Error::format(kind_at, format!("unknown kind {k}"))),
        };
        let rank_at = r.pos();
        let rank = r.u8("rank")? as usize;
        let expected_rank = if kind == FeatureKind::Pooled { 1 } else { 3 };
        if rank != expected_rank {
            return Err(Error::format(rank_at, format!("rank {rank} invalid for {kind:?}")));
        }
        let reserved_at = r.pos();
        if r.u16("reserved")? != 0 {
            return Err(Error::format(reserved_at, "reserved field must be zero"));
        }
        let n = r.u32("n")? as usize;
        let dims: Vec<usize> = r.u32_vec(rank, "dims")?.into_iter().map(|d| d as usize).collect();
        let count = dims
            .iter()
            .try_fold(n, |acc, &d| acc.checked_mul(d))
            .ok_or_else(|| Error::format(r.pos(), "payload size overflows"))?;
        let payload = r.f32_vec(count, "payload")?;
        let footer_at = r.pos();
        let footer = r.u64("footer")?;
        if footer != (count as u64) * 4 {
            return Err(Error::format(
                footer_at,
                format!("footer says {footer} payload bytes, header implies {}", count * 4),
            ));
        }
        if r.remaining() != 0 {
            return Err(Error::format(r.pos(), "trailing bytes after footer"));
        }
        if ids.len() != n {
            return Err(Error::Dataset(format!(
                "id index has {} entries for {n} rows",
                ids.len()
            )));
        }
        Self::new(kind, dims, payload, ids)
    }
}

/// Per-channel mean over the spatial grid of an `H'×W'×C'` row.
pub fn global_average_pool(map: &[f32], channels: usize) -> Vec<f64> {
    let mut acc = vec![0.0f64; channels];
    let cells = map.len() / channels;
    for cell in map.chunks_exact(channels) {
        for (a, &v) in acc.iter_mut().zip(cell) {
            *a += f64::from(v);
        }
    }
    acc.iter_mut().for_each(|a| *a /= cells as f64);
    acc
}
