use alloc::vec::Vec;

use super::params::LayerParams;
use crate::error::{Error, Result};
use crate::math;
use crate::numerics::Tensor;

pub const DEFAULT_LR: f64 = 0.001;
pub const DEFAULT_BETA1: f64 = 0.9;
pub const DEFAULT_BETA2: f64 = 0.999;
pub const DEFAULT_EPS: f64 = 1e-8;

/// Bias-corrected Adam. Moment slots follow the order of the parameter list
/// passed to [`AdamState::step`] (weight, then bias, per layer).
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    t: u64,
    m: Vec<Tensor>,
    v: Vec<Tensor>,
}

impl Default for AdamState {
    fn default() -> Self {
        Self::new(DEFAULT_LR)
    }
}

impl AdamState {
    pub fn new(lr: f64) -> Self {
        Self {
            lr,
            beta1: DEFAULT_BETA1,
            beta2: DEFAULT_BETA2,
            eps: DEFAULT_EPS,
            t: 0,
            m: Vec::new(),
            v: Vec::new(),
        }
    }

    pub fn steps(&self) -> u64 {
        self.t
    }

    pub fn step(&mut self, params: &mut [&mut LayerParams]) -> Result<()> {
        let mut slots: Vec<(&mut Tensor, &Tensor)> = Vec::new();
        for p in params.iter_mut() {
            let LayerParams {
                weight,
                bias,
                grad_weight,
                grad_bias,
                ..
            } = &mut **p;
            slots.push((weight, grad_weight));
            if let (Some(b), Some(gb)) = (bias.as_mut(), grad_bias.as_ref()) {
                slots.push((b, gb));
            }
        }
        if self.m.is_empty() {
            self.m = slots.iter().map(|(w, _)| Tensor::zeros(w.shape())).collect();
            self.v = self.m.clone();
        }
        if self.m.len() != slots.len() || slots.iter().zip(&self.m).any(|((w, _), m)| w.shape() != m.shape()) {
            return Err(Error::Config("parameter list changed between Adam steps".into()));
        }
        self.t += 1;
        let t = i32::try_from(self.t).unwrap_or(i32::MAX);
        let c1 = 1.0 - math::powi(self.beta1, t);
        let c2 = 1.0 - math::powi(self.beta2, t);
        for ((w, g), (m, v)) in slots.into_iter().zip(self.m.iter_mut().zip(self.v.iter_mut())) {
            let it = w
                .data_mut()
                .iter_mut()
                .zip(g.data())
                .zip(m.data_mut().iter_mut().zip(v.data_mut()));
            for ((w, &g), (m, v)) in it {
                *m = self.beta1 * *m + (1.0 - self.beta1) * g;
                *v = self.beta2 * *v + (1.0 - self.beta2) * g * g;
                let mhat = *m / c1;
                let vhat = *v / c2;
                *w -= self.lr * mhat / (math::sqrt(vhat) + self.eps);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn scalar(w: f64) -> LayerParams {
        LayerParams::from_parts("p", Tensor::new(vec![1, 1], vec![w]).unwrap(), None)
    }

    #[test]
    fn zero_gradient_leaves_parameters() {
        let mut p = scalar(0.5);
        let mut adam = AdamState::default();
        adam.step(&mut [&mut p]).unwrap();
        assert_eq!(p.weight.data(), &[0.5]);
        assert_eq!(adam.steps(), 1);
    }

    #[test]
    fn constant_gradient_step_approaches_lr() {
        let mut p = scalar(0.0);
        let mut adam = AdamState::default();
        let mut prev = 0.0;
        let mut last = 0.0;
        for _ in 0..100 {
            p.grad_weight.data_mut()[0] = 0.3;
            adam.step(&mut [&mut p]).unwrap();
            last = p.weight.data()[0] - prev;
            prev = p.weight.data()[0];
        }
        assert!(last < 0.0);
        assert!((0.9 * adam.lr..=adam.lr).contains(&last.abs()), "{last}");
    }

    #[test]
    fn update_is_gradient_scale_invariant() {
        let (mut a, mut b) = (scalar(0.0), scalar(0.0));
        let mut adam = AdamState::default();
        for _ in 0..500 {
            a.grad_weight.data_mut()[0] = 1.5;
            b.grad_weight.data_mut()[0] = 3.0;
            adam.step(&mut [&mut a, &mut b]).unwrap();
        }
        let (da, db) = (a.weight.data()[0], b.weight.data()[0]);
        assert!(((da - db) / da).abs() < 0.01, "{da} {db}");
    }

    #[test]
    fn changed_parameter_list_is_an_error() {
        let (mut a, mut b) = (scalar(0.0), scalar(0.0));
        let mut adam = AdamState::default();
        adam.step(&mut [&mut a]).unwrap();
        assert!(adam.step(&mut [&mut a, &mut b]).is_err());
    }
}
