//! Cosine-similarity graphs: thresholding with a degree floor, CSR storage
//! and its `LGGR` codec, normalized adjacency and neighbor sampling.

mod adjacency;
mod sampling;
mod similarity;

pub use adjacency::{
    attach, build_adjacency, build_from_similarity, normalize_adjacency, Attachment, NormMode, SimilarityGraph,
    DEFAULT_DENSE_CAP, DEFAULT_MIN_DEGREE, DEFAULT_THETA, LGGR_MAGIC, LGGR_VERSION,
};
pub use sampling::{sample_neighbors, NeighborSample, SampledHop};
pub use similarity::{cosine_similarity, SimilarityMatrix, UnitRows};
