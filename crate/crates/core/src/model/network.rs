use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use super::config::{Arch, ModelConfig};
use crate::error::{Error, Result};
use crate::graph::{attach, build_adjacency, SimilarityGraph, UnitRows};
use crate::nn::{linear_forward, linear_input_grad, relu, relu_backward, softmax, CombineCache, LayerParams, SageBlock, SageLayer};
use crate::numerics::Tensor;

/// Training rows kept with the model for inductive attachment.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainGraph {
    pub ids: Vec<String>,
    pub features: Tensor,
    pub graph: SimilarityGraph,
    unit: UnitRows,
    /// Input representations of every SAGE layer over the full training graph.
    embeddings: Vec<Tensor>,
}

impl TrainGraph {
    pub(crate) fn new(ids: Vec<String>, features: Tensor, theta: f64, min_degree: usize) -> Result<Self> {
        let graph = build_adjacency(&features, theta, min_degree)?;
        Ok(Self {
            unit: UnitRows::new(&features),
            ids,
            features,
            graph,
            embeddings: Vec::new(),
        })
    }

    pub fn n(&self) -> usize {
        self.features.rows()
    }
}

/// Class probabilities of one query and the training nodes it was joined to.
#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub class: usize,
    pub probs: Vec<f64>,
    /// `(training row, cosine similarity)`; empty for `cnn_only`.
    pub neighbors: Vec<(usize, f64)>,
}

/// A configured network: optional MLP branch, SAGE stack and softmax head.
#[derive(Debug, Clone, PartialEq)]
pub struct SageModel {
    pub(crate) config: ModelConfig,
    pub(crate) class_table: Vec<String>,
    pub(crate) input_dim: usize,
    pub(crate) mlp: Option<LayerParams>,
    pub(crate) sage: Vec<SageLayer>,
    pub(crate) head: LayerParams,
    pub(crate) train_graph: Option<TrainGraph>,
}

/// Per-query forward record needed for input gradients.
struct Trace {
    neighbors: Vec<Vec<(usize, f64)>>,
    mlp_pre: Option<Tensor>,
    combine: Vec<CombineCache>,
    logits: Tensor,
}

impl SageModel {
    pub fn build(config: ModelConfig, input_dim: usize, class_table: Vec<String>) -> Result<Self> {
        config.validate()?;
        if input_dim == 0 {
            return Err(Error::Config("input dimension must be positive".into()));
        }
        if class_table.len() < 2 {
            return Err(Error::Config("a classifier needs at least two classes".into()));
        }
        let seed = config.seed;
        let arch = config.arch;
        let mlp = arch
            .uses_mlp()
            .then(|| LayerParams::glorot("mlp", input_dim, config.hidden_dims[0], config.use_bias, seed));
        let mut sage = Vec::new();
        if arch.uses_graph() {
            let mut width = input_dim;
            for (l, &h) in config.hidden_dims.iter().enumerate() {
                sage.push(SageLayer::new(
                    &format!("sage{l}"),
                    width,
                    h,
                    config.aggregator,
                    config.use_bias,
                    config.l2_normalize,
                    seed,
                ));
                width = h;
            }
        }
        let penultimate = mlp.as_ref().map_or(0, LayerParams::outputs) + sage.last().map_or(0, SageLayer::out_dim);
        let head = LayerParams::glorot("head", penultimate, class_table.len(), config.use_bias, seed);
        Ok(Self {
            config,
            class_table,
            input_dim,
            mlp,
            sage,
            head,
            train_graph: None,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn arch(&self) -> Arch {
        self.config.arch
    }

    pub fn class_table(&self) -> &[String] {
        &self.class_table
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn train_graph(&self) -> Option<&TrainGraph> {
        self.train_graph.as_ref()
    }

    /// Width of the representation entering the head.
    pub fn penultimate_width(&self) -> usize {
        self.head.inputs()
    }

    /// Parameter tensors in optimizer order: MLP, SAGE layers, head.
    pub fn params(&self) -> Vec<&LayerParams> {
        let mut out: Vec<&LayerParams> = self.mlp.iter().collect();
        for layer in &self.sage {
            out.extend(layer.params());
        }
        out.push(&self.head);
        out
    }

    pub(crate) fn params_mut(&mut self) -> Vec<&mut LayerParams> {
        let mut out: Vec<&mut LayerParams> = self.mlp.iter_mut().collect();
        for layer in &mut self.sage {
            out.extend(layer.params_mut());
        }
        out.push(&mut self.head);
        out
    }

    /// Exact number of weights and biases.
    pub fn count_parameters(&self) -> usize {
        self.params().iter().map(|p| p.parameter_count()).sum()
    }

    /// Builds the training graph over `features` (graph archs only; a no-op
    /// for `cnn_only`) so that the model can attach new samples to it.
    pub fn set_training_rows(&mut self, ids: Vec<String>, features: Tensor) -> Result<()> {
        if !self.arch().uses_graph() {
            return Ok(());
        }
        if features.shape().len() != 2 || features.cols() != self.input_dim || features.rows() != ids.len() {
            return Err(Error::shape("training rows", features.shape(), &[ids.len(), self.input_dim]));
        }
        let tg = TrainGraph::new(ids, features, self.config.theta, self.config.min_degree)?;
        self.set_train_graph(Some(tg))
    }

    pub(crate) fn set_train_graph(&mut self, tg: Option<TrainGraph>) -> Result<()> {
        self.train_graph = tg;
        self.refresh_embeddings()
    }

    pub(crate) fn refresh_embeddings(&mut self) -> Result<()> {
        let Some(tg) = self.train_graph.as_mut() else {
            return Ok(());
        };
        let block = tg.graph.full_block();
        let mut h = tg.features.clone();
        let mut embeddings = Vec::with_capacity(self.sage.len());
        for layer in &self.sage {
            let (next, _) = layer.forward(&block, &h)?;
            embeddings.push(h);
            h = next;
        }
        tg.embeddings = embeddings;
        Ok(())
    }

    /// Full-graph forward over the training rows; logits per training node.
    pub fn transductive_logits(&self) -> Result<Tensor> {
        let tg = self.train_graph.as_ref().ok_or(Error::Unsupported("model has no training graph".into()))?;
        let block = tg.graph.full_block();
        let mut h = tg.features.clone();
        for layer in &self.sage {
            h = layer.forward(&block, &h)?.0;
        }
        let z = match &self.mlp {
            Some(mlp) => relu(&linear_forward(mlp, &tg.features)?).hcat(&h)?,
            None => h,
        };
        linear_forward(&self.head, &z)
    }

    fn check_queries(&self, x: &Tensor) -> Result<()> {
        if x.shape().len() != 2 || x.cols() != self.input_dim {
            return Err(Error::shape("predict", x.shape(), &[x.rows(), self.input_dim]));
        }
        Ok(())
    }

    /// Neighbor lists of each query against the training rows.
    fn attachments(&self, x: &Tensor) -> Result<Vec<Vec<(usize, f64)>>> {
        let Some(tg) = self.train_graph.as_ref() else {
            if self.arch().uses_graph() {
                return Err(Error::Unsupported("graph model has no training graph".into()));
            }
            return Ok(vec![Vec::new(); x.rows()]);
        };
        (0..x.rows())
            .map(|i| {
                let a = attach(&tg.unit, &tg.features, x.row(i), self.config.theta, self.config.min_degree)?;
                Ok(match a.exact_match {
                    Some(j) => tg
                        .graph
                        .neighbors(j)
                        .iter()
                        .map(|&u| (u as usize, tg.unit.pair(j, u as usize)))
                        .collect(),
                    None => a.neighbors,
                })
            })
            .collect()
    }

    fn trace(&self, x: &Tensor) -> Result<Trace> {
        self.check_queries(x)?;
        let neighbors = self.attachments(x)?;
        let mut combine = Vec::with_capacity(self.sage.len());
        let mut sage_out = None;
        if let Some(tg) = &self.train_graph {
            let nq = x.rows();
            // inputs: queries first, then every training node any query touches
            let mut local: BTreeMap<usize, usize> = BTreeMap::new();
            let mut used = Vec::new();
            for list in &neighbors {
                for &(u, _) in list {
                    local.entry(u).or_insert_with(|| {
                        used.push(u);
                        nq + used.len() - 1
                    });
                }
            }
            let block = SageBlock::new(
                neighbors
                    .iter()
                    .map(|list| list.iter().map(|(u, _)| local[u]).collect())
                    .collect(),
            );
            let mut h = x.clone();
            for (l, layer) in self.sage.iter().enumerate() {
                let h_in = h.vcat(&tg.embeddings[l].select_rows(&used))?;
                let (agg, _) = layer.aggregate(&block, &h_in)?;
                let (next, cache) = layer.combine(&h, &agg)?;
                combine.push(cache);
                h = next;
            }
            sage_out = Some(h);
        }
        let mlp_pre = match &self.mlp {
            Some(mlp) => Some(linear_forward(mlp, x)?),
            None => None,
        };
        let z = match (&mlp_pre, sage_out) {
            (Some(pre), Some(s)) => relu(pre).hcat(&s)?,
            (Some(pre), None) => relu(pre),
            (None, Some(s)) => s,
            (None, None) => return Err(Error::Config("model has no branches".into())),
        };
        let logits = linear_forward(&self.head, &z)?;
        Ok(Trace {
            neighbors,
            mlp_pre,
            combine,
            logits,
        })
    }

    /// Eval-mode logits of new samples; each row is processed independently.
    pub fn logits(&self, x: &Tensor) -> Result<Tensor> {
        Ok(self.trace(x)?.logits)
    }

    /// Inductive prediction with full neighborhoods and dropout disabled.
    pub fn predict(&self, x: &Tensor) -> Result<Vec<Prediction>> {
        let trace = self.trace(x)?;
        let probs = softmax(&trace.logits);
        Ok(trace
            .neighbors
            .into_iter()
            .enumerate()
            .map(|(i, neighbors)| {
                let p = probs.row(i).to_vec();
                Prediction {
                    class: argmax(&p),
                    probs: p,
                    neighbors,
                }
            })
            .collect())
    }

    /// Logit of `class` for one sample and its gradient with respect to the
    /// sample's features, following the sample's own path only (the training
    /// embeddings it aggregates are constants).
    pub fn logit_and_input_grad(&self, features: &[f64], class: usize) -> Result<(f64, Vec<f64>)> {
        if class >= self.class_table.len() {
            return Err(Error::Range(format!(
                "class {class} outside {} classes",
                self.class_table.len()
            )));
        }
        let x = Tensor::new(vec![1, features.len()], features.to_vec())?;
        let trace = self.trace(&x)?;
        let mut dlogits = Tensor::zeros(&[1, self.class_table.len()]);
        dlogits.set(0, class, 1.0);
        let dz = linear_input_grad(&self.head, &dlogits)?;
        let mlp_width = self.mlp.as_ref().map_or(0, LayerParams::outputs);
        let (dm, mut ds) = dz.hsplit(mlp_width);
        let mut dx = Tensor::zeros(&[1, self.input_dim]);
        if !self.sage.is_empty() {
            for (layer, cache) in self.sage.iter().zip(&trace.combine).rev() {
                ds = layer.combine_input_grad(cache, &ds)?.0;
            }
            dx.add_assign(&ds)?;
        }
        if let (Some(mlp), Some(pre)) = (&self.mlp, &trace.mlp_pre) {
            dx.add_assign(&linear_input_grad(mlp, &relu_backward(pre, &dm)?)?)?;
        }
        Ok((trace.logits.get(0, class), dx.into_data()))
    }
}

pub(crate) fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = i;
        }
    }
    best
}
