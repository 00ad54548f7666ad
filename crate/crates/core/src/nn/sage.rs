use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::activation::{relu, relu_backward};
use super::linear::{accumulate_linear_grads, linear_forward, linear_input_grad};
use super::params::LayerParams;
use crate::error::{Error, Result};
use crate::math;
use crate::numerics::Tensor;

/// Neighborhood aggregation function.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Aggregator {
    #[default]
    Mean,
    MaxPool,
}

/// Bipartite slice of a computation graph for one layer.
///
/// Output row `i` is the node held in input row `i`; `neighbors[i]` indexes
/// input rows.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SageBlock {
    neighbors: Vec<Vec<usize>>,
}

impl SageBlock {
    pub fn new(neighbors: Vec<Vec<usize>>) -> Self {
        Self { neighbors }
    }

    pub fn neighbors(&self) -> &[Vec<usize>] {
        &self.neighbors
    }

    /// Number of output rows.
    pub fn len(&self) -> usize {
        self.neighbors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.neighbors.is_empty()
    }

    fn check(&self, inputs: usize) -> Result<()> {
        if self.len() > inputs {
            return Err(Error::shape("sage_block", &[self.len()], &[inputs]));
        }
        if let Some(&bad) = self.neighbors.iter().flatten().find(|&&u| u >= inputs) {
            return Err(Error::UnknownNode(bad));
        }
        Ok(())
    }
}

/// `h'_v = ReLU(W·[h_v ∥ agg_v] + b)`, optionally L2-normalized per row.
#[derive(Debug, Clone, PartialEq)]
pub struct SageLayer {
    pub lin: LayerParams,
    /// Shared `F→F` projection applied before the max in the max-pool variant.
    pub pool: Option<LayerParams>,
    pub aggregator: Aggregator,
    pub l2_normalize: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub enum AggCache {
    Mean,
    MaxPool {
        pre: Tensor,
        /// Winning input row per `(output row, feature)`, `usize::MAX` when empty.
        argmax: Vec<usize>,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct CombineCache {
    z: Tensor,
    pre: Tensor,
    /// Post-ReLU row norms when L2 normalization is on.
    norms: Option<Vec<f64>>,
    out: Tensor,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SageCache {
    pub agg: AggCache,
    pub combine: CombineCache,
}

impl SageLayer {
    pub fn new(
        name: &str,
        in_dim: usize,
        out_dim: usize,
        aggregator: Aggregator,
        use_bias: bool,
        l2_normalize: bool,
        seed: u64,
    ) -> Self {
        let pool = (aggregator == Aggregator::MaxPool)
            .then(|| LayerParams::glorot(&format!("{name}.pool"), in_dim, in_dim, use_bias, seed));
        Self {
            lin: LayerParams::glorot(name, 2 * in_dim, out_dim, use_bias, seed),
            pool,
            aggregator,
            l2_normalize,
        }
    }

    pub fn in_dim(&self) -> usize {
        self.lin.inputs() / 2
    }

    pub fn out_dim(&self) -> usize {
        self.lin.outputs()
    }

    pub fn params(&self) -> Vec<&LayerParams> {
        core::iter::once(&self.lin).chain(self.pool.as_ref()).collect()
    }

    pub fn params_mut(&mut self) -> Vec<&mut LayerParams> {
        core::iter::once(&mut self.lin).chain(self.pool.as_mut()).collect()
    }

    pub fn forward(&self, block: &SageBlock, h_in: &Tensor) -> Result<(Tensor, SageCache)> {
        let (agg, agg_cache) = self.aggregate(block, h_in)?;
        let self_rows = h_in.select_rows(&(0..block.len()).collect::<Vec<_>>());
        let (out, combine) = self.combine(&self_rows, &agg)?;
        Ok((
            out,
            SageCache {
                agg: agg_cache,
                combine,
            },
        ))
    }

    /// Accumulates parameter gradients and returns `∂L/∂h_in`.
    pub fn backward(&mut self, block: &SageBlock, h_in: &Tensor, cache: &SageCache, dout: &Tensor) -> Result<Tensor> {
        let dpre = self.combine_pre_grad(&cache.combine, dout)?;
        accumulate_linear_grads(&mut self.lin, &cache.combine.z, &dpre)?;
        let (dself, dagg) = linear_input_grad(&self.lin, &dpre)?.hsplit(self.in_dim());
        let mut dh = Tensor::zeros(h_in.shape());
        for i in 0..block.len() {
            dh.row_mut(i).copy_from_slice(dself.row(i));
        }
        self.aggregate_backward(block, h_in, &cache.agg, &dagg, &mut dh, true)?;
        Ok(dh)
    }

    /// Per-output-row neighborhood aggregate over `h_in`.
    pub fn aggregate(&self, block: &SageBlock, h_in: &Tensor) -> Result<(Tensor, AggCache)> {
        if h_in.shape().len() != 2 || h_in.cols() != self.in_dim() {
            return Err(Error::shape("sage_aggregate", h_in.shape(), &[self.in_dim()]));
        }
        block.check(h_in.rows())?;
        let f = self.in_dim();
        let mut agg = Tensor::zeros(&[block.len(), f]);
        match self.aggregator {
            Aggregator::Mean => {
                for (i, list) in block.neighbors().iter().enumerate() {
                    if list.is_empty() {
                        continue;
                    }
                    let row = agg.row_mut(i);
                    for &u in list {
                        for (a, &x) in row.iter_mut().zip(h_in.row(u)) {
                            *a += x;
                        }
                    }
                    let inv = list.len() as f64;
                    row.iter_mut().for_each(|a| *a /= inv);
                }
                Ok((agg, AggCache::Mean))
            }
            Aggregator::MaxPool => {
                let pool = self.pool.as_ref().ok_or(Error::Config("max-pool layer without projection".into()))?;
                let pre = linear_forward(pool, h_in)?;
                let act = relu(&pre);
                let mut argmax = vec![usize::MAX; block.len() * f];
                for (i, list) in block.neighbors().iter().enumerate() {
                    let Some((&first, rest)) = list.split_first() else {
                        continue;
                    };
                    let row = agg.row_mut(i);
                    row.copy_from_slice(act.row(first));
                    argmax[i * f..(i + 1) * f].fill(first);
                    for &u in rest {
                        for (c, (a, &x)) in row.iter_mut().zip(act.row(u)).enumerate() {
                            if x > *a {
                                *a = x;
                                argmax[i * f + c] = u;
                            }
                        }
                    }
                }
                Ok((agg, AggCache::MaxPool { pre, argmax }))
            }
        }
    }

    /// Adds `∂L/∂h_in` contributions of the aggregate into `dh`. Parameter
    /// gradients of the pooling projection are accumulated only when
    /// `accumulate` is set.
    pub fn aggregate_backward(
        &mut self,
        block: &SageBlock,
        h_in: &Tensor,
        cache: &AggCache,
        dagg: &Tensor,
        dh: &mut Tensor,
        accumulate: bool,
    ) -> Result<()> {
        let f = self.in_dim();
        match cache {
            AggCache::Mean => {
                for (i, list) in block.neighbors().iter().enumerate() {
                    let inv = 1.0 / list.len() as f64;
                    for &u in list {
                        for (d, &g) in dh.row_mut(u).iter_mut().zip(dagg.row(i)) {
                            *d += g * inv;
                        }
                    }
                }
            }
            AggCache::MaxPool { pre, argmax } => {
                let mut dact = Tensor::zeros(pre.shape());
                for i in 0..block.len() {
                    for c in 0..f {
                        let u = argmax[i * f + c];
                        if u != usize::MAX {
                            dact.row_mut(u)[c] += dagg.get(i, c);
                        }
                    }
                }
                let dpre = relu_backward(pre, &dact)?;
                let pool = self.pool.as_mut().ok_or(Error::Config("max-pool layer without projection".into()))?;
                if accumulate {
                    accumulate_linear_grads(pool, h_in, &dpre)?;
                }
                dh.add_assign(&linear_input_grad(pool, &dpre)?)?;
            }
        }
        Ok(())
    }

    /// `ReLU(W·[self ∥ agg] + b)` with optional row normalization.
    pub fn combine(&self, self_rows: &Tensor, agg: &Tensor) -> Result<(Tensor, CombineCache)> {
        let z = self_rows.hcat(agg)?;
        let pre = linear_forward(&self.lin, &z)?;
        let mut out = relu(&pre);
        let norms = self.l2_normalize.then(|| {
            (0..out.rows())
                .map(|i| {
                    let row = out.row_mut(i);
                    let n = math::sqrt(row.iter().map(|x| x * x).sum());
                    if n > 0.0 {
                        row.iter_mut().for_each(|x| *x /= n);
                    }
                    n
                })
                .collect()
        });
        Ok((out.clone(), CombineCache { z, pre, norms, out }))
    }

    /// `∂L/∂pre` from `∂L/∂out`.
    fn combine_pre_grad(&self, cache: &CombineCache, dout: &Tensor) -> Result<Tensor> {
        if dout.shape() != cache.out.shape() {
            return Err(Error::shape("sage_backward", dout.shape(), cache.out.shape()));
        }
        let drelu = match &cache.norms {
            None => dout.clone(),
            Some(norms) => {
                let mut d = dout.clone();
                for (i, &n) in norms.iter().enumerate() {
                    let y = cache.out.row(i);
                    let row = d.row_mut(i);
                    if n == 0.0 {
                        row.fill(0.0);
                        continue;
                    }
                    let proj: f64 = y.iter().zip(row.iter()).map(|(a, b)| a * b).sum();
                    for (r, &yy) in row.iter_mut().zip(y) {
                        *r = (*r - yy * proj) / n;
                    }
                }
                d
            }
        };
        relu_backward(&cache.pre, &drelu)
    }

    /// `(∂L/∂self, ∂L/∂agg)` without touching parameter gradients.
    pub fn combine_input_grad(&self, cache: &CombineCache, dout: &Tensor) -> Result<(Tensor, Tensor)> {
        let dpre = self.combine_pre_grad(cache, dout)?;
        Ok(linear_input_grad(&self.lin, &dpre)?.hsplit(self.in_dim()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::{finite_diff_check, Rng};

    fn random(rows: usize, cols: usize, rng: &mut Rng) -> Tensor {
        Tensor::new(vec![rows, cols], (0..rows * cols).map(|_| rng.normal()).collect()).unwrap()
    }

    fn path_block() -> SageBlock {
        SageBlock::new(vec![vec![1], vec![0, 2], vec![1]])
    }

    #[test]
    fn isolated_node_sees_zero_aggregate() {
        let layer = SageLayer::new("s", 2, 3, Aggregator::Mean, true, false, 1);
        let h = Tensor::new(vec![1, 2], vec![0.4, -1.2]).unwrap();
        let (out, _) = layer.forward(&SageBlock::new(vec![vec![]]), &h).unwrap();
        let z = Tensor::new(vec![1, 4], vec![0.4, -1.2, 0.0, 0.0]).unwrap();
        assert_eq!(out, relu(&linear_forward(&layer.lin, &z).unwrap()));
    }

    #[test]
    fn out_of_range_neighbor_rejected() {
        let layer = SageLayer::new("s", 2, 3, Aggregator::Mean, true, false, 1);
        let h = Tensor::zeros(&[2, 2]);
        assert_eq!(
            layer.forward(&SageBlock::new(vec![vec![5]]), &h).unwrap_err(),
            Error::UnknownNode(5)
        );
        assert!(layer.forward(&path_block(), &Tensor::zeros(&[3, 3])).is_err());
    }

    fn check_gradients(aggregator: Aggregator, l2: bool, seed: u64) {
        let mut rng = Rng::new(seed);
        let mut layer = SageLayer::new("s", 3, 4, aggregator, true, l2, seed);
        let block = SageBlock::new(vec![vec![1, 3], vec![0, 2, 3], vec![], vec![0]]);
        let h = random(5, 3, &mut rng);
        let w = random(4, 4, &mut rng);
        let loss = |layer: &SageLayer, h: &Tensor| -> f64 {
            let (out, _) = layer.forward(&block, h).unwrap();
            out.data().iter().zip(w.data()).map(|(a, b)| a * b).sum()
        };
        let (_, cache) = layer.forward(&block, &h).unwrap();
        let dh = layer.backward(&block, &h, &cache, &w).unwrap();
        let err = finite_diff_check(|x| loss(&layer, x), &h, &dh, 1e-6).unwrap();
        assert!(err < 1e-4, "input grad {err}");
        let base = layer.clone();
        let err = finite_diff_check(
            |wt| {
                let mut q = base.clone();
                q.lin.weight = wt.clone();
                loss(&q, &h)
            },
            &base.lin.weight,
            &base.lin.grad_weight,
            1e-6,
        )
        .unwrap();
        assert!(err < 1e-4, "weight grad {err}");
        if let Some(pool) = &base.pool {
            let err = finite_diff_check(
                |wt| {
                    let mut q = base.clone();
                    q.pool.as_mut().unwrap().weight = wt.clone();
                    loss(&q, &h)
                },
                &pool.weight,
                &pool.grad_weight,
                1e-6,
            )
            .unwrap();
            assert!(err < 1e-4, "pool grad {err}");
        }
    }

    #[test]
    fn mean_gradients() {
        for seed in 0..5 {
            check_gradients(Aggregator::Mean, false, seed);
        }
    }

    #[test]
    fn maxpool_gradients() {
        for seed in 0..5 {
            check_gradients(Aggregator::MaxPool, false, seed);
        }
    }

    #[test]
    fn l2_normalized_gradients() {
        for seed in 0..5 {
            check_gradients(Aggregator::Mean, true, seed);
        }
    }

    #[test]
    fn l2_rows_have_unit_norm() {
        let layer = SageLayer::new("s", 3, 8, Aggregator::Mean, true, true, 3);
        let h = random(3, 3, &mut Rng::new(9));
        let (out, _) = layer.forward(&path_block(), &h).unwrap();
        for i in 0..3 {
            let n: f64 = out.row(i).iter().map(|x| x * x).sum();
            assert!(n == 0.0 || (n - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn combine_input_grad_leaves_params() {
        let layer = SageLayer::new("s", 3, 4, Aggregator::Mean, true, false, 3);
        let h = random(3, 3, &mut Rng::new(1));
        let (_, cache) = layer.forward(&path_block(), &h).unwrap();
        let (ds, da) = layer.combine_input_grad(&cache.combine, &Tensor::full(&[3, 4], 1.0)).unwrap();
        assert_eq!(ds.shape(), &[3, 3]);
        assert_eq!(da.shape(), &[3, 3]);
        assert_eq!(layer.lin.grad_weight.max_abs(), 0.0);
    }
}
