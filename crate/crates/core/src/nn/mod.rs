//! Layers with hand-written backward passes and the Adam optimizer.
//!
//! Every backward accumulates into the layer's gradient buffers; callers zero
//! them between optimizer steps.

mod activation;
mod adam;
mod gcn;
mod linear;
mod params;
mod sage;

pub use activation::{
    dropout, dropout_backward, relu, relu_backward, softmax, softmax_cross_entropy, DropoutMask, SoftmaxCrossEntropy,
};
pub use adam::{AdamState, DEFAULT_BETA1, DEFAULT_BETA2, DEFAULT_EPS, DEFAULT_LR};
pub use gcn::{GcnCache, GcnLayer};
pub use linear::{accumulate_linear_grads, linear_backward, linear_forward, linear_input_grad};
pub use params::LayerParams;
pub use sage::{AggCache, Aggregator, CombineCache, SageBlock, SageCache, SageLayer};
