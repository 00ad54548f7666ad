use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{DEFAULT_MIN_DEGREE, DEFAULT_THETA};
use crate::nn::{Aggregator, DEFAULT_LR};

/// The four ablation architectures.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Arch {
    /// MLP head on pooled CNN features.
    CnnOnly,
    /// SAGE stack over downsampled raw pixels.
    GnnOnly,
    /// MLP and SAGE branches over pooled features, concatenated before the head.
    Parallel,
    /// SAGE stack over pooled CNN features.
    Sequential,
}

impl Arch {
    /// Ablation table order.
    pub const ALL: [Arch; 4] = [Arch::CnnOnly, Arch::GnnOnly, Arch::Parallel, Arch::Sequential];

    pub fn as_str(self) -> &'static str {
        match self {
            Arch::CnnOnly => "cnn_only",
            Arch::GnnOnly => "gnn_only",
            Arch::Parallel => "parallel",
            Arch::Sequential => "sequential",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|a| a.as_str() == s)
            .ok_or_else(|| Error::Config(format!("unknown arch {s:?}")))
    }

    pub fn uses_graph(self) -> bool {
        self != Arch::CnnOnly
    }

    pub fn uses_mlp(self) -> bool {
        matches!(self, Arch::CnnOnly | Arch::Parallel)
    }

    /// Whether node features are raw pixels rather than pooled CNN features.
    pub fn uses_raw_pixels(self) -> bool {
        self == Arch::GnnOnly
    }
}

impl fmt::Display for Arch {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Hyperparameters of one model.
///
/// `hidden_dims` lists the SAGE layer widths (`layers` of them). The MLP
/// branch of `cnn_only` and `parallel` is a single hidden layer of width
/// `hidden_dims[0]`. `fan_outs[0]` applies to the targets' own neighborhoods,
/// i.e. to the last SAGE layer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub arch: Arch,
    pub hidden_dims: Vec<usize>,
    pub layers: usize,
    pub aggregator: Aggregator,
    pub dropout: f64,
    pub lr: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub theta: f64,
    pub min_degree: usize,
    pub fan_outs: Vec<usize>,
    pub seed: u64,
    pub use_bias: bool,
    pub l2_normalize: bool,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            arch: Arch::Sequential,
            hidden_dims: vec![64, 64],
            layers: 2,
            aggregator: Aggregator::Mean,
            dropout: 0.5,
            lr: DEFAULT_LR,
            batch_size: 32,
            epochs: 20,
            theta: DEFAULT_THETA,
            min_degree: DEFAULT_MIN_DEGREE,
            fan_outs: vec![10, 10],
            seed: 0,
            use_bias: true,
            l2_normalize: false,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.into()));
        if self.hidden_dims.is_empty() || self.hidden_dims.contains(&0) {
            return bad("hidden widths must be non-empty and positive");
        }
        if self.layers != self.hidden_dims.len() {
            return Err(Error::Config(format!(
                "layers = {} but {} hidden widths given",
                self.layers,
                self.hidden_dims.len()
            )));
        }
        if self.arch.uses_graph() && (self.fan_outs.len() != self.layers || self.fan_outs.contains(&0)) {
            return Err(Error::Config(format!(
                "need {} positive fan-outs, got {:?}",
                self.layers, self.fan_outs
            )));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return bad("dropout must lie in [0, 1)");
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return bad("learning rate must be positive");
        }
        if self.batch_size == 0 {
            return bad("batch size must be positive");
        }
        if !(-1.0..1.0).contains(&self.theta) {
            return bad("theta must lie in [-1, 1)");
        }
        Ok(())
    }

    pub fn with_arch(&self, arch: Arch) -> Self {
        Self { arch, ..self.clone() }
    }
}
