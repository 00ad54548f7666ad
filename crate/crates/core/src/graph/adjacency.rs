use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
use core::cmp::Ordering;

use serde::{Deserialize, Serialize};

use super::similarity::{unit, SimilarityMatrix, UnitRows};
use crate::bytes::{put_u32, to_u32, Reader};
use crate::error::{Error, Result};
use crate::nn::SageBlock;
use crate::numerics::Tensor;

pub const LGGR_MAGIC: &[u8; 4] = b"LGGR";
pub const LGGR_VERSION: u32 = 1;
pub const DEFAULT_THETA: f64 = 0.7;
pub const DEFAULT_MIN_DEGREE: usize = 3;
pub const DEFAULT_DENSE_CAP: usize = 4096;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NormMode {
    /// `D̃^{-1/2}(A+I)D̃^{-1/2}`
    #[default]
    Sym,
    /// `D̃^{-1}(A+I)`
    Row,
    /// `A+I`
    None,
}

/// Thresholded, symmetric, self-loop-free adjacency in CSR form.
#[derive(Debug, Clone, PartialEq)]
pub struct SimilarityGraph {
    n: usize,
    theta: f64,
    offsets: Vec<u32>,
    neighbors: Vec<u32>,
    pub norm_mode: NormMode,
}

impl SimilarityGraph {
    /// Builds CSR from per-node neighbor sets, symmetrizing and sorting them.
    pub fn from_adjacency_lists(theta: f64, mut lists: Vec<Vec<usize>>) -> Result<Self> {
        let n = lists.len();
        for (v, list) in lists.clone().iter().enumerate() {
            for &u in list {
                if u >= n {
                    return Err(Error::UnknownNode(u));
                }
                if u != v {
                    lists[u].push(v);
                }
            }
        }
        let mut offsets = Vec::with_capacity(n + 1);
        let mut neighbors = Vec::new();
        offsets.push(0);
        for (v, list) in lists.iter_mut().enumerate() {
            list.retain(|&u| u != v);
            list.sort_unstable();
            list.dedup();
            for &u in list.iter() {
                neighbors.push(to_u32(u, "node id")?);
            }
            offsets.push(to_u32(neighbors.len(), "edge count")?);
        }
        Ok(Self {
            n,
            theta,
            offsets,
            neighbors,
            norm_mode: NormMode::Sym,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn theta(&self) -> f64 {
        self.theta
    }

    pub fn offsets(&self) -> &[u32] {
        &self.offsets
    }

    pub fn csr_neighbors(&self) -> &[u32] {
        &self.neighbors
    }

    /// Number of directed edge slots (twice the undirected edge count).
    pub fn edge_slots(&self) -> usize {
        self.neighbors.len()
    }

    pub fn degree(&self, v: usize) -> usize {
        (self.offsets[v + 1] - self.offsets[v]) as usize
    }

    pub fn neighbors(&self, v: usize) -> &[u32] {
        &self.neighbors[self.offsets[v] as usize..self.offsets[v + 1] as usize]
    }

    pub fn neighbor_ids(&self, v: usize) -> Vec<usize> {
        self.neighbors(v).iter().map(|&u| u as usize).collect()
    }

    pub fn max_degree(&self) -> usize {
        (0..self.n).map(|v| self.degree(v)).max().unwrap_or(0)
    }

    pub fn has_edge(&self, u: usize, v: usize) -> bool {
        self.neighbors(u).binary_search(&(v as u32)).is_ok()
    }

    /// Every node with its full neighborhood, for unsampled propagation.
    pub fn full_block(&self) -> SageBlock {
        SageBlock::new((0..self.n).map(|v| self.neighbor_ids(v)).collect())
    }

    pub fn encode(&self) -> Result<Vec<u8>> {
        let mut out = Vec::with_capacity(20 + 4 * (self.offsets.len() + self.neighbors.len()));
        out.extend_from_slice(LGGR_MAGIC);
        put_u32(&mut out, LGGR_VERSION);
        put_u32(&mut out, to_u32(self.n, "node count")?);
        out.extend_from_slice(&(self.theta as f32).to_le_bytes());
        put_u32(&mut out, to_u32(self.neighbors.len(), "edge count")?);
        for &o in &self.offsets {
            put_u32(&mut out, o);
        }
        for &u in &self.neighbors {
            put_u32(&mut out, u);
        }
        Ok(out)
    }

    pub fn decode(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader::new(bytes);
        if r.take(4, "magic")? != LGGR_MAGIC {
            return Err(Error::format(0, "bad magic (expected LGGR)"));
        }
        let version = r.u32("version")?;
        if version != LGGR_VERSION {
            return Err(Error::UnsupportedVersion {
                format: "LGGR",
                found: version,
                expected: LGGR_VERSION,
            });
        }
        let n = r.u32("n")? as usize;
        let theta = f64::from(r.f32("theta")?);
        let edges = r.u32("edge_count")? as usize;
        let offsets_at = r.pos();
        let offsets = r.u32_vec(n + 1, "offsets")?;
        let neighbors_at = r.pos();
        let neighbors = r.u32_vec(edges, "neighbors")?;
        if r.remaining() != 0 {
            return Err(Error::format(r.pos(), "trailing bytes after neighbor array"));
        }
        if offsets[0] != 0 || offsets[n] as usize != edges || offsets.windows(2).any(|w| w[0] > w[1]) {
            return Err(Error::format(offsets_at, "offsets are not a valid CSR index"));
        }
        if let Some(p) = neighbors.iter().position(|&u| u as usize >= n) {
            return Err(Error::format(neighbors_at + 4 * p, format!("neighbor id {} >= n", neighbors[p])));
        }
        let g = Self {
            n,
            theta,
            offsets,
            neighbors,
            norm_mode: NormMode::Sym,
        };
        for v in 0..n {
            let list = g.neighbors(v);
            if list.windows(2).any(|w| w[0] >= w[1]) || list.contains(&(v as u32)) {
                return Err(Error::format(neighbors_at, format!("neighbor list of {v} is not sorted and loop-free")));
            }
            if list.iter().any(|&u| !g.has_edge(u as usize, v)) {
                return Err(Error::format(neighbors_at, format!("adjacency of {v} is not symmetric")));
            }
        }
        Ok(g)
    }
}

/// Threshold edges `S_ij > θ` over pooled rows, then the degree floor.
pub fn build_adjacency(features: &Tensor, theta: f64, min_degree: usize) -> Result<SimilarityGraph> {
    if features.rows() == 0 {
        return Err(Error::Dataset("cannot build a graph over zero nodes".into()));
    }
    let sim = SimilarityMatrix::compute(&UnitRows::new(features));
    build_from_similarity(&sim, theta, min_degree)
}

/// Edge `(i, j)`, `i ≠ j`, iff `S_ij > θ` (all pairs when `θ = −1`); every node whose thresholded
/// degree is below `min_degree` is additionally joined to its `min_degree`
/// most similar other nodes (ties by lower index); the result is symmetrized.
/// Pairs involving zero vectors pass only at `θ = −1` and rank last.
pub fn build_from_similarity(sim: &SimilarityMatrix, theta: f64, min_degree: usize) -> Result<SimilarityGraph> {
    let n = sim.n();
    if n == 0 {
        return Err(Error::Dataset("cannot build a graph over zero nodes".into()));
    }
    if !(-1.0..1.0).contains(&theta) {
        return Err(Error::Range(format!("theta {theta} outside [-1, 1)")));
    }
    let mut lists: Vec<Vec<usize>> = (0..n)
        .map(|i| {
            let row = sim.row(i);
            (0..n).filter(|&j| j != i && passes(row[j], theta)).collect()
        })
        .collect();
    if min_degree > 0 {
        let thresholded: Vec<usize> = lists.iter().map(Vec::len).collect();
        for (i, &deg) in thresholded.iter().enumerate() {
            if deg < min_degree {
                let extra = top_similar(sim.row(i), Some(i), min_degree);
                lists[i].extend(extra.into_iter().map(|(j, _)| j));
            }
        }
    }
    SimilarityGraph::from_adjacency_lists(theta, lists)
}

/// Threshold rule: `S > θ`, except that `θ = −1` admits every pair.
fn passes(s: f64, theta: f64) -> bool {
    s > theta || theta == -1.0
}

/// Indices of the `k` largest similarities, excluding `skip`; NaN ranks last.
pub(crate) fn top_similar(row: &[f64], skip: Option<usize>, k: usize) -> Vec<(usize, f64)> {
    let key = |s: f64| if s.is_nan() { f64::NEG_INFINITY } else { s };
    let mut cand: Vec<(usize, f64)> = row
        .iter()
        .enumerate()
        .filter(|&(j, _)| Some(j) != skip)
        .map(|(j, &s)| (j, s))
        .collect();
    cand.sort_by(|a, b| {
        key(b.1)
            .partial_cmp(&key(a.1))
            .unwrap_or(Ordering::Equal)
            .then(a.0.cmp(&b.0))
    });
    cand.truncate(k);
    cand
}

/// Edges a new (non-training) node gets to the training rows.
#[derive(Debug, Clone, PartialEq)]
pub struct Attachment {
    /// `(training row, similarity)` sorted by row.
    pub neighbors: Vec<(usize, f64)>,
    /// First training row equal to the query at single precision, if any.
    pub exact_match: Option<usize>,
}

/// Inductive attachment under the same rules as [`build_from_similarity`],
/// computed against training rows only.
pub fn attach(train: &UnitRows, train_features: &Tensor, query: &[f64], theta: f64, min_degree: usize) -> Result<Attachment> {
    if query.len() != train_features.cols() {
        return Err(Error::shape("attach", &[train_features.cols()], &[query.len()]));
    }
    let exact_match = (0..train_features.rows()).find(|&j| {
        train_features
            .row(j)
            .iter()
            .zip(query)
            .all(|(&a, &b)| (a as f32).to_bits() == (b as f32).to_bits())
    });
    let sims: Vec<f64> = match unit(query) {
        Some(q) => (0..train.len()).map(|j| train.query(&q, j)).collect(),
        None => vec![f64::NAN; train.len()],
    };
    let mut picked: Vec<usize> = (0..sims.len()).filter(|&j| passes(sims[j], theta)).collect();
    if picked.len() < min_degree {
        picked.extend(top_similar(&sims, None, min_degree).into_iter().map(|(j, _)| j));
        picked.sort_unstable();
        picked.dedup();
    }
    Ok(Attachment {
        neighbors: picked.into_iter().map(|j| (j, sims[j])).collect(),
        exact_match,
    })
}

/// Dense normalized adjacency with self-loops, per `g.norm_mode`.
pub fn normalize_adjacency(g: &SimilarityGraph, cap: usize) -> Result<Tensor> {
    let n = g.n();
    if n > cap {
        return Err(Error::DenseCap { n, cap });
    }
    let mut a = Tensor::zeros(&[n, n]);
    for v in 0..n {
        a.set(v, v, 1.0);
        for &u in g.neighbors(v) {
            a.set(v, u as usize, 1.0);
        }
    }
    let deg: Vec<f64> = (0..n).map(|v| (g.degree(v) + 1) as f64).collect();
    match g.norm_mode {
        NormMode::None => {}
        NormMode::Row => {
            for v in 0..n {
                for x in a.row_mut(v) {
                    *x /= deg[v];
                }
            }
        }
        NormMode::Sym => {
            for v in 0..n {
                let row = a.row_mut(v);
                for (u, x) in row.iter_mut().enumerate() {
                    if *x != 0.0 {
                        *x = 1.0 / crate::math::sqrt(deg[v] * deg[u]);
                    }
                }
            }
        }
    }
    Ok(a)
}
