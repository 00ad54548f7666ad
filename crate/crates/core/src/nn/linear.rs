use super::params::LayerParams;
use crate::error::{Error, Result};
use crate::numerics::{matmul, matmul_at, matmul_bt, Tensor};

/// `y = x·Wᵀ + b`
pub fn linear_forward(p: &LayerParams, x: &Tensor) -> Result<Tensor> {
    if x.shape().len() != 2 || x.cols() != p.inputs() {
        return Err(Error::shape("linear_forward", x.shape(), p.weight.shape()));
    }
    let mut y = matmul_bt(x, &p.weight)?;
    if let Some(b) = &p.bias {
        for i in 0..y.rows() {
            for (v, &bb) in y.row_mut(i).iter_mut().zip(b.data()) {
                *v += bb;
            }
        }
    }
    Ok(y)
}

/// Accumulates `grad_weight += dyᵀ·x`, `grad_bias += Σ_rows dy`; returns `dx = dy·W`.
pub fn linear_backward(p: &mut LayerParams, x: &Tensor, dy: &Tensor) -> Result<Tensor> {
    accumulate_linear_grads(p, x, dy)?;
    linear_input_grad(p, dy)
}

/// Parameter-gradient half of [`linear_backward`].
pub fn accumulate_linear_grads(p: &mut LayerParams, x: &Tensor, dy: &Tensor) -> Result<()> {
    if dy.shape().len() != 2 || dy.cols() != p.outputs() || dy.rows() != x.rows() {
        return Err(Error::shape("linear_backward", dy.shape(), x.shape()));
    }
    p.grad_weight.add_assign(&matmul_at(dy, x)?)?;
    if let Some(gb) = &mut p.grad_bias {
        let g = gb.data_mut();
        for i in 0..dy.rows() {
            for (acc, &d) in g.iter_mut().zip(dy.row(i)) {
                *acc += d;
            }
        }
    }
    Ok(())
}

/// Input-gradient half of [`linear_backward`]; leaves `p` untouched.
pub fn linear_input_grad(p: &LayerParams, dy: &Tensor) -> Result<Tensor> {
    matmul(dy, &p.weight)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::finite_diff_check;
    use alloc::vec;

    #[test]
    fn identity_weights_pass_through() {
        let p = LayerParams::from_parts("id", Tensor::identity(3), Some(Tensor::zeros(&[3])));
        let x = Tensor::from_rows(&[vec![1.0, -2.0, 3.0], vec![0.5, 0.0, 4.0]]).unwrap();
        assert_eq!(linear_forward(&p, &x).unwrap(), x);
    }

    #[test]
    fn zero_upstream_means_zero_grads() {
        let mut p = LayerParams::glorot("l", 4, 3, true, 1);
        let x = Tensor::full(&[2, 4], 0.7);
        linear_backward(&mut p, &x, &Tensor::zeros(&[2, 3])).unwrap();
        assert_eq!(p.grad_weight.max_abs(), 0.0);
        assert_eq!(p.grad_bias.unwrap().max_abs(), 0.0);
    }

    #[test]
    fn weight_gradient_matches_finite_differences() {
        let mut p = LayerParams::glorot("l", 4, 3, true, 2);
        let x = Tensor::new(vec![2, 4], (0..8).map(|i| (i as f64 * 0.37).sin()).collect()).unwrap();
        let w = Tensor::new(vec![2, 3], vec![0.3, -1.0, 0.5, 2.0, 0.1, -0.7]).unwrap();
        let loss = |p: &LayerParams| -> f64 {
            let y = linear_forward(p, &x).unwrap();
            y.data().iter().zip(w.data()).map(|(a, b)| a * b).sum()
        };
        linear_backward(&mut p, &x, &w).unwrap();
        let g = p.grad_weight.clone();
        let base = p.clone();
        let err = finite_diff_check(
            |wt| {
                let mut q = base.clone();
                q.weight = wt.clone();
                loss(&q)
            },
            &base.weight,
            &g,
            1e-5,
        )
        .unwrap();
        assert!(err < 1e-4, "{err}");
    }

    #[test]
    fn shape_mismatch_is_reported() {
        let p = LayerParams::glorot("l", 4, 3, true, 1);
        assert!(linear_forward(&p, &Tensor::zeros(&[2, 5])).is_err());
    }
}
