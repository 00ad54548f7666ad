use super::tensor::Tensor;
use crate::error::{Error, Result};

/// Compares `analytic_grad` with central differences of `f` around `x`.
///
/// Returns `max_i |fd_i − g_i| / max(1, |fd_i|, |g_i|)`.
pub fn finite_diff_check<F>(mut f: F, x: &Tensor, analytic_grad: &Tensor, h: f64) -> Result<f64>
where
    F: FnMut(&Tensor) -> f64,
{
    if !(1e-6..=1e-2).contains(&h) {
        return Err(Error::Range(alloc::format!("step {h} outside [1e-6, 1e-2]")));
    }
    if x.shape() != analytic_grad.shape() {
        return Err(Error::shape("finite_diff_check", x.shape(), analytic_grad.shape()));
    }
    let mut probe = x.clone();
    let mut worst: f64 = 0.0;
    for i in 0..x.len() {
        let orig = probe.data()[i];
        probe.data_mut()[i] = orig + h;
        let fp = f(&probe);
        probe.data_mut()[i] = orig - h;
        let fm = f(&probe);
        probe.data_mut()[i] = orig;
        if !fp.is_finite() || !fm.is_finite() {
            return Err(Error::NonFinite { coordinate: i });
        }
        let fd = (fp - fm) / (2.0 * h);
        let g = analytic_grad.data()[i];
        let denom = 1.0f64.max(fd.abs()).max(g.abs());
        worst = worst.max((fd - g).abs() / denom);
    }
    Ok(worst)
}
