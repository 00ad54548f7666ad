//! Dense tensors, the PRNG, power-iteration SVD and the gradient checker.

mod gradcheck;
mod rng;
mod svd;
mod tensor;

pub use gradcheck::finite_diff_check;
pub use rng::{fnv1a64, Rng};
pub use svd::{top_singular_vector, SingularTriplet, DEFAULT_MAX_ITERS, DEFAULT_TOL};
pub use tensor::{dot, matmul, matmul_at, matmul_bt, norm2, Tensor};
