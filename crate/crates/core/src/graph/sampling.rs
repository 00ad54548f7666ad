use alloc::collections::BTreeMap;
use alloc::vec::Vec;

use super::adjacency::SimilarityGraph;
use crate::error::{Error, Result};
use crate::nn::SageBlock;
use crate::numerics::Rng;

/// One hop of a sampled computation graph.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SampledHop {
    /// Nodes whose neighborhoods were sampled at this hop.
    pub nodes: Vec<usize>,
    /// Sampled neighbors of `nodes[i]`, at most the hop's fan-out.
    pub neighbors: Vec<Vec<usize>>,
}

/// Fixed fan-out neighborhood sample for a batch of targets.
///
/// Hop 0 samples the targets' neighbors; hop `k` samples neighbors of every
/// node reached by hop `k−1` (the targets included, since each layer also
/// needs the node's own previous representation).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NeighborSample {
    pub targets: Vec<usize>,
    pub hops: Vec<SampledHop>,
}

impl NeighborSample {
    /// Nodes whose raw features the deepest layer consumes.
    pub fn input_nodes(&self) -> Vec<usize> {
        match self.hops.last() {
            Some(hop) => expand(&hop.nodes, &hop.neighbors),
            None => self.targets.clone(),
        }
    }

    /// Blocks ordered from the input layer towards the targets. Block `l`
    /// maps representations of node set `hops[L-l-1]`'s expansion onto
    /// `hops[L-l-1].nodes`, with neighbor indices local to the input rows.
    pub fn blocks(&self) -> Vec<SageBlock> {
        self.hops
            .iter()
            .rev()
            .map(|hop| {
                let inputs = expand(&hop.nodes, &hop.neighbors);
                let local: BTreeMap<usize, usize> = inputs.iter().enumerate().map(|(i, &v)| (v, i)).collect();
                SageBlock::new(
                    hop.neighbors
                        .iter()
                        .map(|list| list.iter().map(|u| local[u]).collect())
                        .collect(),
                )
            })
            .collect()
    }
}

/// `nodes` followed by previously unseen neighbors in first-appearance order.
fn expand(nodes: &[usize], neighbors: &[Vec<usize>]) -> Vec<usize> {
    let mut out = nodes.to_vec();
    let mut seen: BTreeMap<usize, ()> = nodes.iter().map(|&v| (v, ())).collect();
    for list in neighbors {
        for &u in list {
            if seen.insert(u, ()).is_none() {
                out.push(u);
            }
        }
    }
    out
}

/// Uniform sampling without replacement of `min(fan_out, degree)` neighbors
/// per node and hop.
pub fn sample_neighbors(
    g: &SimilarityGraph,
    targets: &[usize],
    fan_outs: &[usize],
    rng: &mut Rng,
) -> Result<NeighborSample> {
    if fan_outs.is_empty() || fan_outs.contains(&0) {
        return Err(Error::Config("fan-outs must be non-empty and each >= 1".into()));
    }
    if let Some(&bad) = targets.iter().find(|&&t| t >= g.n()) {
        return Err(Error::UnknownNode(bad));
    }
    let mut hops = Vec::with_capacity(fan_outs.len());
    let mut frontier = targets.to_vec();
    for &fan in fan_outs {
        let neighbors: Vec<Vec<usize>> = frontier
            .iter()
            .map(|&v| {
                let all = g.neighbors(v);
                let picked = if all.len() <= fan {
                    all.to_vec()
                } else {
                    rng.sample_without_replacement(all, fan)
                };
                picked.into_iter().map(|u| u as usize).collect()
            })
            .collect();
        let next = expand(&frontier, &neighbors);
        hops.push(SampledHop {
            nodes: frontier,
            neighbors,
        });
        frontier = next;
    }
    Ok(NeighborSample {
        targets: targets.to_vec(),
        hops,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn star(leaves: usize) -> SimilarityGraph {
        let mut lists = vec![(1..=leaves).collect::<Vec<_>>()];
        lists.extend((0..leaves).map(|_| Vec::new()));
        SimilarityGraph::from_adjacency_lists(0.0, lists).unwrap()
    }

    #[test]
    fn large_fan_out_returns_full_neighborhood() {
        let g = star(5);
        let s = sample_neighbors(&g, &[0, 3], &[10], &mut Rng::new(1)).unwrap();
        let mut got = s.hops[0].neighbors[0].clone();
        got.sort_unstable();
        assert_eq!(got, [1, 2, 3, 4, 5]);
        assert_eq!(s.hops[0].neighbors[1], [0]);
    }

    #[test]
    fn isolated_target_gets_empty_list() {
        let g = SimilarityGraph::from_adjacency_lists(0.0, vec![vec![], vec![2], vec![]]).unwrap();
        let s = sample_neighbors(&g, &[0], &[3, 3], &mut Rng::new(1)).unwrap();
        assert!(s.hops[0].neighbors[0].is_empty());
        assert_eq!(s.input_nodes(), [0]);
    }

    #[test]
    fn unknown_target_and_bad_fan_out() {
        let g = star(2);
        assert_eq!(sample_neighbors(&g, &[9], &[1], &mut Rng::new(0)), Err(Error::UnknownNode(9)));
        assert!(sample_neighbors(&g, &[0], &[], &mut Rng::new(0)).is_err());
        assert!(sample_neighbors(&g, &[0], &[0], &mut Rng::new(0)).is_err());
    }

    #[test]
    fn multi_hop_blocks_are_consistent() {
        // path 0-1-2-3
        let g = SimilarityGraph::from_adjacency_lists(0.0, vec![vec![1], vec![2], vec![3], vec![]]).unwrap();
        let s = sample_neighbors(&g, &[0], &[5, 5], &mut Rng::new(0)).unwrap();
        assert_eq!(s.hops[0].nodes, [0]);
        assert_eq!(s.hops[1].nodes, [0, 1]);
        assert_eq!(s.input_nodes(), [0, 1, 2]);
        let blocks = s.blocks();
        assert_eq!(blocks.len(), 2);
        // input-side block maps [0,1,2] -> [0,1]
        assert_eq!(blocks[0].neighbors(), &[vec![1], vec![0, 2]]);
        assert_eq!(blocks[1].neighbors(), &[vec![1]]);
    }

    #[test]
    fn deterministic_given_seed() {
        let g = star(8);
        let a = sample_neighbors(&g, &[0, 1], &[3, 2], &mut Rng::new(4)).unwrap();
        let b = sample_neighbors(&g, &[0, 1], &[3, 2], &mut Rng::new(4)).unwrap();
        assert_eq!(a, b);
    }
}
