//! The four ablation architectures, their training loop, inductive
//! inference and the `LGCK` checkpoint format.

mod ablate;
mod checkpoint;
mod config;
mod network;
mod train;

pub use ablate::{ablate, evaluate, AblationRow};
pub use checkpoint::{CheckpointHeader, TensorEntry, LGCK_MAGIC, LGCK_VERSION};
pub use config::{Arch, ModelConfig};
pub(crate) use network::argmax;
pub use network::{Prediction, SageModel, TrainGraph};
pub use train::{train, EpochReport, ModelInputs, SplitData, TrainingReport};
