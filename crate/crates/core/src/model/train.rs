use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::config::{Arch, ModelConfig};
use super::network::SageModel;
use crate::dataset::{one_hot_rows, DatasetManifest, FeatureStore, Split};
use crate::error::{Error, Result};
use crate::graph::sample_neighbors;
use crate::nn::{
    accumulate_linear_grads, dropout, dropout_backward, linear_backward, linear_forward, relu, relu_backward,
    softmax_cross_entropy, AdamState, SageCache,
};
use crate::numerics::{Rng, Tensor};

/// Feature stores available to the architectures.
#[derive(Debug, Clone, Copy, Default)]
pub struct ModelInputs<'a> {
    /// Pooled CNN features.
    pub pooled: Option<&'a FeatureStore>,
    /// Flattened 32×32 grayscale pixels, for `gnn_only`.
    pub raw_pixels: Option<&'a FeatureStore>,
}

impl<'a> ModelInputs<'a> {
    pub fn pooled(store: &'a FeatureStore) -> Self {
        Self {
            pooled: Some(store),
            raw_pixels: None,
        }
    }

    pub fn for_arch(&self, arch: Arch) -> Result<&'a FeatureStore> {
        let (store, what) = if arch.uses_raw_pixels() {
            (self.raw_pixels, "raw pixel features")
        } else {
            (self.pooled, "pooled features")
        };
        store.ok_or_else(|| Error::Dataset(format!("{arch} needs {what}")))
    }
}

/// Features and labels of one split.
#[derive(Debug, Clone, PartialEq)]
pub struct SplitData {
    pub ids: Vec<String>,
    pub features: Tensor,
    pub labels: Vec<usize>,
}

impl SplitData {
    pub fn gather(store: &FeatureStore, manifest: &DatasetManifest, split: Split) -> Result<Self> {
        let entries: Vec<_> = manifest
            .indices_in(split)
            .into_iter()
            .map(|i| &manifest.entries()[i])
            .collect();
        let ids: Vec<String> = entries.iter().map(|e| e.sample_id.clone()).collect();
        let refs: Vec<&str> = ids.iter().map(String::as_str).collect();
        let features = store.gather(&refs)?;
        let labels = entries
            .iter()
            .map(|e| manifest.class_index(&e.label))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { ids, features, labels })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochReport {
    pub epoch: usize,
    /// Sample-weighted mean training loss.
    pub loss: f64,
    pub val_accuracy: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainingReport {
    pub epochs: Vec<EpochReport>,
    /// Loss of epoch 1, batch 1, before any update.
    pub first_batch_loss: Option<f64>,
}

/// Builds and trains a model on the manifest's train split, reporting
/// validation accuracy per epoch when a validation split exists.
pub fn train(config: &ModelConfig, inputs: ModelInputs<'_>, manifest: &DatasetManifest) -> Result<(SageModel, TrainingReport)> {
    let store = inputs.for_arch(config.arch)?;
    let train = SplitData::gather(store, manifest, Split::Train)?;
    let val = SplitData::gather(store, manifest, Split::Val)?;
    let mut model = SageModel::build(config.clone(), store.row_len(), manifest.class_table().to_vec())?;
    let report = model.fit(&train, Some(&val))?;
    Ok((model, report))
}

struct Streams {
    shuffle: Rng,
    sample: Rng,
    dropout: Rng,
}

impl SageModel {
    /// Trains in place. Parameters end rounded to single precision, the
    /// precision checkpoints store.
    pub fn fit(&mut self, train: &SplitData, val: Option<&SplitData>) -> Result<TrainingReport> {
        if train.is_empty() {
            return Err(Error::Dataset("train split is empty".into()));
        }
        if train.features.cols() != self.input_dim {
            return Err(Error::shape("fit", train.features.shape(), &[train.len(), self.input_dim]));
        }
        let k = self.class_table.len();
        if let Some(&bad) = train.labels.iter().find(|&&c| c >= k) {
            return Err(Error::Range(format!("label {bad} outside {k} classes")));
        }
        self.set_training_rows(train.ids.clone(), train.features.clone())?;

        let seed = self.config.seed;
        let mut streams = Streams {
            shuffle: Rng::named(seed, "shuffle"),
            sample: Rng::named(seed, "sample"),
            dropout: Rng::named(seed, "dropout"),
        };
        let mut adam = AdamState::new(self.config.lr);
        let mut report = TrainingReport::default();
        let n = train.len();
        let mut order: Vec<usize> = (0..n).collect();
        for epoch in 1..=self.config.epochs {
            streams.shuffle.shuffle(&mut order);
            let mut total = 0.0;
            for (b, batch) in order.chunks(self.config.batch_size).enumerate() {
                let loss = self.train_step(train, batch, &mut streams, &mut adam)?;
                if !loss.is_finite() {
                    return Err(Error::Divergence { epoch, batch: b + 1 });
                }
                report.first_batch_loss.get_or_insert(loss);
                total += loss * batch.len() as f64;
            }
            self.refresh_embeddings()?;
            let val_accuracy = match val {
                Some(v) if !v.is_empty() => Some(self.accuracy(v)?),
                _ => None,
            };
            report.epochs.push(EpochReport {
                epoch,
                loss: total / n as f64,
                val_accuracy,
            });
        }
        for p in self.params_mut() {
            p.round_to_f32();
        }
        self.refresh_embeddings()?;
        Ok(report)
    }

    pub fn accuracy(&self, data: &SplitData) -> Result<f64> {
        let preds = self.predict(&data.features)?;
        let hits = preds.iter().zip(&data.labels).filter(|(p, &y)| p.class == y).count();
        Ok(hits as f64 / data.len().max(1) as f64)
    }

    /// One optimizer step on `batch` (indices into `train`); returns the
    /// batch loss. A non-finite loss leaves the parameters untouched.
    fn train_step(&mut self, train: &SplitData, batch: &[usize], rngs: &mut Streams, adam: &mut AdamState) -> Result<f64> {
        let k = self.class_table.len();
        let labels: Vec<usize> = batch.iter().map(|&i| train.labels[i]).collect();
        let onehot = one_hot_rows(&labels, k);

        let x = train.features.select_rows(batch);
        let mlp_pre = match &self.mlp {
            Some(mlp) => Some(linear_forward(mlp, &x)?),
            None => None,
        };

        let mut sage_trace: Vec<(Tensor, SageCache)> = Vec::new();
        let mut blocks = Vec::new();
        let mut sage_out = None;
        if let Some(tg) = &self.train_graph {
            let sample = sample_neighbors(&tg.graph, batch, &self.config.fan_outs, &mut rngs.sample)?;
            blocks = sample.blocks();
            let mut h = tg.features.select_rows(&sample.input_nodes());
            for (layer, block) in self.sage.iter().zip(&blocks) {
                let (next, cache) = layer.forward(block, &h)?;
                sage_trace.push((h, cache));
                h = next;
            }
            sage_out = Some(h);
        }

        let z = match (&mlp_pre, sage_out) {
            (Some(pre), Some(s)) => relu(pre).hcat(&s)?,
            (Some(pre), None) => relu(pre),
            (None, Some(s)) => s,
            (None, None) => return Err(Error::Config("model has no branches".into())),
        };
        let (zd, mask) = dropout(&z, self.config.dropout, true, &mut rngs.dropout)?;
        let logits = linear_forward(&self.head, &zd)?;
        let ce = softmax_cross_entropy(&logits, &onehot)?;
        if !ce.loss.is_finite() {
            return Ok(ce.loss);
        }

        let dzd = linear_backward(&mut self.head, &zd, &ce.dlogits)?;
        let dz = dropout_backward(mask.as_ref(), &dzd)?;
        let mlp_width = self.mlp.as_ref().map_or(0, |m| m.outputs());
        let (dm, mut ds) = dz.hsplit(mlp_width);
        if let (Some(mlp), Some(pre)) = (self.mlp.as_mut(), mlp_pre.as_ref()) {
            accumulate_linear_grads(mlp, &x, &relu_backward(pre, &dm)?)?;
        }
        for ((layer, block), (h_in, cache)) in self.sage.iter_mut().zip(&blocks).zip(&sage_trace).rev() {
            ds = layer.backward(block, h_in, cache, &ds)?;
        }

        let mut params = self.params_mut();
        adam.step(&mut params)?;
        for p in params {
            p.zero_grad();
        }
        Ok(ce.loss)
    }
}
