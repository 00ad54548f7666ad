//! Similarity rows computed on worker threads.
//!
//! Every entry comes from the same per-pair expression as the serial path,
//! so the matrix and the thresholded graph do not depend on the thread count.

use std::num::NonZeroUsize;
use std::thread;

use leafgraph_core::graph::{build_from_similarity, SimilarityGraph, SimilarityMatrix, UnitRows};
use leafgraph_core::{Error, Tensor};

pub fn available_threads() -> usize {
    thread::available_parallelism().map_or(1, NonZeroUsize::get)
}

pub fn similarity_matrix(features: &Tensor, threads: usize) -> SimilarityMatrix {
    let rows = UnitRows::new(features);
    let n = rows.len();
    let threads = threads.clamp(1, n.max(1));
    let chunk = n.div_ceil(threads).max(1);
    let mut out: Vec<Vec<f64>> = vec![Vec::new(); n];
    thread::scope(|s| {
        for (c, slots) in out.chunks_mut(chunk).enumerate() {
            let rows = &rows;
            s.spawn(move || {
                for (k, slot) in slots.iter_mut().enumerate() {
                    *slot = rows.similarity_row(c * chunk + k);
                }
            });
        }
    });
    SimilarityMatrix::from_rows(out).expect("square by construction")
}

pub fn build_graph(features: &Tensor, theta: f64, min_degree: usize, threads: usize) -> Result<SimilarityGraph, Error> {
    if features.rows() == 0 {
        return Err(Error::Dataset("cannot build a graph over zero nodes".into()));
    }
    build_from_similarity(&similarity_matrix(features, threads), theta, min_degree)
}

#[cfg(test)]
mod tests {
    use super::*;
    use leafgraph_core::graph::build_adjacency;
    use leafgraph_core::Rng;

    fn features(n: usize, d: usize, seed: u64) -> Tensor {
        let mut rng = Rng::new(seed);
        let mut data: Vec<f64> = (0..n * d).map(|_| rng.normal()).collect();
        // one zero row exercises the NaN convention
        data[d..2 * d].fill(0.0);
        Tensor::new(vec![n, d], data).unwrap()
    }

    fn bits(m: &SimilarityMatrix) -> Vec<u64> {
        m.values().iter().map(|v| v.to_bits()).collect()
    }

    #[test]
    fn thread_count_does_not_change_the_matrix() {
        let x = features(37, 9, 1);
        let serial = SimilarityMatrix::compute(&UnitRows::new(&x));
        for t in [1, 2, 3, 4, 8, 64] {
            assert_eq!(bits(&similarity_matrix(&x, t)), bits(&serial), "{t} threads");
        }
    }

    #[test]
    fn graph_matches_serial_builder() {
        let x = features(40, 6, 2);
        let serial = build_adjacency(&x, 0.2, 3).unwrap();
        for t in [1, 3, 7] {
            let g = build_graph(&x, 0.2, 3, t).unwrap();
            assert_eq!(g.encode().unwrap(), serial.encode().unwrap());
        }
    }

    #[test]
    fn empty_input_is_rejected() {
        assert!(build_graph(&Tensor::zeros(&[0, 3]), 0.5, 1, 2).is_err());
    }
}
