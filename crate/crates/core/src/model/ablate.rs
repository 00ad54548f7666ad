use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::config::{Arch, ModelConfig};
use super::train::{train, ModelInputs, SplitData, TrainingReport};
use super::network::SageModel;
use crate::dataset::{DatasetManifest, Split};
use crate::error::Result;
use crate::eval::{confusion, metrics, Averaging, ConfusionMatrix, MetricsReport};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub arch: Arch,
    pub parameters: usize,
    pub metrics: MetricsReport,
    pub training: TrainingReport,
}

/// Confusion matrix and metrics of `model` on one split.
pub fn evaluate(
    model: &SageModel,
    inputs: ModelInputs<'_>,
    manifest: &DatasetManifest,
    split: Split,
    averaging: Averaging,
) -> Result<(ConfusionMatrix, MetricsReport)> {
    let data = SplitData::gather(inputs.for_arch(model.arch())?, manifest, split)?;
    let preds: Vec<usize> = model.predict(&data.features)?.iter().map(|p| p.class).collect();
    let cm = confusion(&preds, &data.labels, model.class_table())?;
    let report = metrics(&cm, averaging)?;
    Ok((cm, report))
}

/// Trains every requested architecture with the same seed and budget and
/// evaluates it on `split`; rows come back in [`Arch::ALL`] order.
pub fn ablate(
    inputs: ModelInputs<'_>,
    manifest: &DatasetManifest,
    base: &ModelConfig,
    archs: &[Arch],
    split: Split,
    averaging: Averaging,
) -> Result<Vec<AblationRow>> {
    Arch::ALL
        .into_iter()
        .filter(|a| archs.contains(a))
        .map(|arch| {
            let (model, training) = train(&base.with_arch(arch), inputs, manifest)?;
            let (_, metrics) = evaluate(&model, inputs, manifest, split, averaging)?;
            Ok(AblationRow {
                arch,
                parameters: model.count_parameters(),
                metrics,
                training,
            })
        })
        .collect()
}
