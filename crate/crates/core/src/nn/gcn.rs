use super::activation::{relu, relu_backward};
use super::linear::{linear_backward, linear_forward};
use super::params::LayerParams;
use crate::error::{Error, Result};
use crate::numerics::{matmul, matmul_at, Tensor};

/// `ReLU(Â·H·Wᵀ + b)` over a dense normalized adjacency.
#[derive(Debug, Clone, PartialEq)]
pub struct GcnLayer {
    pub lin: LayerParams,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GcnCache {
    ah: Tensor,
    pre: Tensor,
}

impl GcnLayer {
    pub fn new(name: &str, in_dim: usize, out_dim: usize, use_bias: bool, seed: u64) -> Self {
        Self {
            lin: LayerParams::glorot(name, in_dim, out_dim, use_bias, seed),
        }
    }

    pub fn forward(&self, a_hat: &Tensor, h: &Tensor) -> Result<(Tensor, GcnCache)> {
        if a_hat.shape().len() != 2 || a_hat.rows() != a_hat.cols() {
            return Err(Error::shape("gcn_forward", a_hat.shape(), h.shape()));
        }
        let ah = matmul(a_hat, h)?;
        let pre = linear_forward(&self.lin, &ah)?;
        Ok((relu(&pre), GcnCache { ah, pre }))
    }

    /// Accumulates parameter gradients and returns `∂L/∂H = Âᵀ·(δ·W)`.
    pub fn backward(&mut self, a_hat: &Tensor, cache: &GcnCache, dout: &Tensor) -> Result<Tensor> {
        let dpre = relu_backward(&cache.pre, dout)?;
        let dah = linear_backward(&mut self.lin, &cache.ah, &dpre)?;
        matmul_at(a_hat, &dah)
    }
}
