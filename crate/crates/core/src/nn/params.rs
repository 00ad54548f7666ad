use alloc::string::String;

use crate::math;
use crate::numerics::{Rng, Tensor};

/// Weight `out×in`, optional bias `out`, and their gradient accumulators.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerParams {
    pub name: String,
    pub weight: Tensor,
    pub bias: Option<Tensor>,
    pub grad_weight: Tensor,
    pub grad_bias: Option<Tensor>,
}

impl LayerParams {
    /// Glorot-uniform weights `U(±√(6/(in+out)))` from the stream named after
    /// the layer, zero bias. Draws are rounded to `f32` so a freshly built
    /// model survives a checkpoint round-trip unchanged.
    pub fn glorot(name: &str, inputs: usize, outputs: usize, use_bias: bool, seed: u64) -> Self {
        let mut rng = Rng::named(seed, name);
        let limit = math::sqrt(6.0 / (inputs + outputs) as f64);
        let data = (0..inputs * outputs)
            .map(|_| f64::from(rng.uniform_range(-limit, limit) as f32))
            .collect();
        let weight = Tensor::new(alloc::vec![outputs, inputs], data).expect("glorot shape");
        Self::from_parts(name, weight, use_bias.then(|| Tensor::zeros(&[outputs])))
    }

    pub fn from_parts(name: &str, weight: Tensor, bias: Option<Tensor>) -> Self {
        let grad_weight = Tensor::zeros(weight.shape());
        let grad_bias = bias.as_ref().map(|b| Tensor::zeros(b.shape()));
        Self {
            name: name.into(),
            weight,
            bias,
            grad_weight,
            grad_bias,
        }
    }

    pub fn inputs(&self) -> usize {
        self.weight.cols()
    }

    pub fn outputs(&self) -> usize {
        self.weight.rows()
    }

    pub fn zero_grad(&mut self) {
        self.grad_weight.fill(0.0);
        if let Some(g) = &mut self.grad_bias {
            g.fill(0.0);
        }
    }

    pub fn parameter_count(&self) -> usize {
        self.weight.len() + self.bias.as_ref().map_or(0, Tensor::len)
    }

    /// Rounds every parameter to the nearest `f32`, as stored in checkpoints.
    pub fn round_to_f32(&mut self) {
        let r = |t: &mut Tensor| t.data_mut().iter_mut().for_each(|x| *x = f64::from(*x as f32));
        r(&mut self.weight);
        if let Some(b) = &mut self.bias {
            r(b);
        }
    }
}
