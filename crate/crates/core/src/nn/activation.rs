use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::math;
use crate::numerics::{Rng, Tensor};

/// NaN passes through so that divergence stays visible downstream.
pub fn relu(x: &Tensor) -> Tensor {
    x.map(|v| if v < 0.0 { 0.0 } else { v })
}

/// Passes `dy` where the forward input was strictly positive.
pub fn relu_backward(x: &Tensor, dy: &Tensor) -> Result<Tensor> {
    x.zip_map(dy, |xv, d| if xv > 0.0 { d } else { 0.0 })
}

/// Per-element multipliers recorded by a train-mode dropout pass.
#[derive(Debug, Clone, PartialEq)]
pub struct DropoutMask {
    scale: Vec<f64>,
}

impl DropoutMask {
    pub fn from_scales(scale: Vec<f64>) -> Self {
        Self { scale }
    }

    pub fn scales(&self) -> &[f64] {
        &self.scale
    }

    pub fn apply(&self, x: &Tensor) -> Result<Tensor> {
        if x.len() != self.scale.len() {
            return Err(Error::shape("dropout", x.shape(), &[self.scale.len()]));
        }
        let mut out = x.clone();
        for (v, s) in out.data_mut().iter_mut().zip(&self.scale) {
            *v *= s;
        }
        Ok(out)
    }
}

/// Inverted dropout: in train mode each value is zeroed with probability `p`
/// and survivors are scaled by `1/(1−p)`; eval mode is the identity.
pub fn dropout(x: &Tensor, p: f64, train: bool, rng: &mut Rng) -> Result<(Tensor, Option<DropoutMask>)> {
    if !(0.0..1.0).contains(&p) {
        return Err(Error::Range(alloc::format!("dropout rate {p} outside [0, 1)")));
    }
    if !train || p == 0.0 {
        return Ok((x.clone(), None));
    }
    let keep = 1.0 / (1.0 - p);
    let scale: Vec<f64> = (0..x.len())
        .map(|_| if rng.uniform() < p { 0.0 } else { keep })
        .collect();
    let mask = DropoutMask { scale };
    Ok((mask.apply(x)?, Some(mask)))
}

pub fn dropout_backward(mask: Option<&DropoutMask>, dy: &Tensor) -> Result<Tensor> {
    match mask {
        Some(m) => m.apply(dy),
        None => Ok(dy.clone()),
    }
}

/// Row-wise softmax with the row maximum subtracted first.
pub fn softmax(logits: &Tensor) -> Tensor {
    let mut out = logits.clone();
    for i in 0..out.rows() {
        let row = out.row_mut(i);
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut sum = 0.0;
        for v in row.iter_mut() {
            *v = math::exp(*v - max);
            sum += *v;
        }
        row.iter_mut().for_each(|v| *v /= sum);
    }
    out
}

/// Mean categorical cross-entropy over the batch.
#[derive(Debug, Clone, PartialEq)]
pub struct SoftmaxCrossEntropy {
    pub loss: f64,
    pub probs: Tensor,
    /// `(probs − onehot) / B`
    pub dlogits: Tensor,
}

pub fn softmax_cross_entropy(logits: &Tensor, onehot: &Tensor) -> Result<SoftmaxCrossEntropy> {
    if logits.shape() != onehot.shape() || logits.shape().len() != 2 {
        return Err(Error::shape("softmax_cross_entropy", logits.shape(), onehot.shape()));
    }
    let (b, k) = (logits.rows(), logits.cols());
    if k < 2 {
        return Err(Error::Range("cross-entropy needs at least two classes".into()));
    }
    let probs = softmax(logits);
    let mut loss = 0.0;
    for i in 0..b {
        // log-softmax computed directly for accuracy in the saturated regime
        let row = logits.row(i);
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lse = max + math::ln(row.iter().map(|&v| math::exp(v - max)).sum::<f64>());
        for (j, &y) in onehot.row(i).iter().enumerate() {
            if y != 0.0 {
                loss -= y * (row[j] - lse);
            }
        }
    }
    let scale = 1.0 / b as f64;
    let dlogits = probs.zip_map(onehot, |p, y| (p - y) * scale)?;
    Ok(SoftmaxCrossEntropy {
        loss: loss * scale,
        probs,
        dlogits,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::finite_diff_check;
    use alloc::vec;

    #[test]
    fn relu_values_and_kink() {
        let x = Tensor::vector(vec![-1.0, 0.0, 2.0]);
        assert_eq!(relu(&x).data(), &[0.0, 0.0, 2.0]);
        let g = relu_backward(&x, &Tensor::vector(vec![5.0, 5.0, 5.0])).unwrap();
        assert_eq!(g.data(), &[0.0, 0.0, 5.0]);
    }

    #[test]
    fn dropout_eval_is_identity() {
        let x = Tensor::vector(vec![1.0, -2.0, 3.5]);
        let (y, mask) = dropout(&x, 0.5, false, &mut Rng::new(0)).unwrap();
        assert_eq!(y, x);
        assert!(mask.is_none());
    }

    #[test]
    fn inverted_dropout_is_unbiased() {
        let x = Tensor::full(&[100_000], 1.0);
        let (y, _) = dropout(&x, 0.5, true, &mut Rng::new(12)).unwrap();
        let mean = y.sum() / y.len() as f64;
        assert!((0.99..=1.01).contains(&mean), "{mean}");
    }

    #[test]
    fn dropout_backward_reuses_mask() {
        let x = Tensor::full(&[8], 2.0);
        let (y, mask) = dropout(&x, 0.5, true, &mut Rng::new(3)).unwrap();
        let g = dropout_backward(mask.as_ref(), &Tensor::full(&[8], 1.0)).unwrap();
        for (yy, gg) in y.data().iter().zip(g.data()) {
            assert_eq!(*yy, 2.0 * gg);
        }
        assert!(dropout(&x, 1.0, true, &mut Rng::new(3)).is_err());
    }

    #[test]
    fn uniform_logits() {
        let ce = softmax_cross_entropy(&Tensor::zeros(&[1, 4]), &Tensor::new(vec![1, 4], vec![0.0, 1.0, 0.0, 0.0]).unwrap())
            .unwrap();
        assert!(ce.probs.data().iter().all(|&p| (p - 0.25).abs() < 1e-15));
        assert!((ce.loss - 4f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn saturated_logits() {
        let logits = Tensor::new(vec![1, 2], vec![10.0, -10.0]).unwrap();
        let y = Tensor::new(vec![1, 2], vec![1.0, 0.0]).unwrap();
        assert!(softmax_cross_entropy(&logits, &y).unwrap().loss < 1e-8);
    }

    #[test]
    fn single_class_rejected() {
        assert!(softmax_cross_entropy(&Tensor::zeros(&[2, 1]), &Tensor::full(&[2, 1], 1.0)).is_err());
    }

    #[test]
    fn dlogits_match_finite_differences() {
        let logits = Tensor::new(vec![2, 3], vec![0.2, -1.3, 0.7, 2.0, 0.1, -0.4]).unwrap();
        let y = Tensor::new(vec![2, 3], vec![0.0, 0.0, 1.0, 1.0, 0.0, 0.0]).unwrap();
        let ce = softmax_cross_entropy(&logits, &y).unwrap();
        let err = finite_diff_check(|l| softmax_cross_entropy(l, &y).unwrap().loss, &logits, &ce.dlogits, 1e-5).unwrap();
        assert!(err < 1e-4, "{err}");
    }
}
