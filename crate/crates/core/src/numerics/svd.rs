use alloc::vec;
use alloc::vec::Vec;

use super::tensor::{dot, norm2, Tensor};
use crate::error::{Error, Result};

pub const DEFAULT_MAX_ITERS: usize = 200;
pub const DEFAULT_TOL: f64 = 1e-9;

/// Leading singular triplet `a·v = sigma·u`.
#[derive(Debug, Clone, PartialEq)]
pub struct SingularTriplet {
    pub u: Vec<f64>,
    pub sigma: f64,
    pub v: Vec<f64>,
    pub converged: bool,
    pub iterations: usize,
}

/// Power iteration on `aᵀa` for the top singular vector of a non-zero matrix.
///
/// Stops once the relative change of successive sigma estimates drops below
/// `tol`. On exhaustion of `max_iters` the last iterate is returned with
/// `converged == false`. `(u, v)` are flipped jointly so that `Σ u_i ≥ 0`.
pub fn top_singular_vector(a: &Tensor, max_iters: usize, tol: f64) -> Result<SingularTriplet> {
    if a.shape().len() != 2 {
        return Err(Error::shape("top_singular_vector", a.shape(), &[0, 0]));
    }
    if max_iters == 0 || !(tol > 0.0) {
        return Err(Error::Range("max_iters must be >= 1 and tol > 0".into()));
    }
    if !a.is_finite() {
        return Err(Error::Range("matrix contains non-finite entries".into()));
    }
    if a.data().iter().all(|&x| x == 0.0) {
        return Err(Error::Degenerate("zero matrix has no singular direction"));
    }
    let (m, n) = (a.rows(), a.cols());

    let mut v = start_vector(a);
    let mut av = vec![0.0; m];
    let mut sigma_prev = f64::NAN;
    let mut converged = false;
    let mut iterations = 0;
    for it in 1..=max_iters {
        iterations = it;
        apply(a, &v, &mut av);
        let sigma = norm2(&av);
        let mut w = apply_t(a, &av, n);
        let wn = norm2(&w);
        if wn == 0.0 {
            // v is in the null space; the matrix is non-zero so a basis vector escapes it
            v = escape_null_space(a);
            continue;
        }
        w.iter_mut().for_each(|x| *x /= wn);
        v = w;
        if (sigma - sigma_prev).abs() <= tol * sigma {
            converged = true;
            break;
        }
        sigma_prev = sigma;
    }

    apply(a, &v, &mut av);
    let sigma = norm2(&av);
    let mut u: Vec<f64> = if sigma > 0.0 {
        av.iter().map(|x| x / sigma).collect()
    } else {
        vec![0.0; m]
    };
    if u.iter().sum::<f64>() < 0.0 {
        u.iter_mut().for_each(|x| *x = -*x);
        v.iter_mut().for_each(|x| *x = -*x);
    }
    Ok(SingularTriplet {
        u,
        sigma,
        v,
        converged,
        iterations,
    })
}

fn apply(a: &Tensor, v: &[f64], out: &mut [f64]) {
    for (i, o) in out.iter_mut().enumerate() {
        *o = dot(a.row(i), v);
    }
}

fn apply_t(a: &Tensor, x: &[f64], n: usize) -> Vec<f64> {
    let mut out = vec![0.0; n];
    for (i, &xi) in x.iter().enumerate() {
        for (o, &aij) in out.iter_mut().zip(a.row(i)) {
            *o += xi * aij;
        }
    }
    out
}

/// `aᵀ·1` normalized: close to the leading direction for the mostly
/// non-negative activation maps this is used on, and deterministic.
fn start_vector(a: &Tensor) -> Vec<f64> {
    let ones = vec![1.0; a.rows()];
    let mut v = apply_t(a, &ones, a.cols());
    let n = norm2(&v);
    if n > 0.0 && n.is_finite() {
        v.iter_mut().for_each(|x| *x /= n);
        v
    } else {
        escape_null_space(a)
    }
}

fn escape_null_space(a: &Tensor) -> Vec<f64> {
    let n = a.cols();
    let mut best = 0;
    let mut best_norm = -1.0;
    for j in 0..n {
        let c: f64 = (0..a.rows()).map(|i| a.get(i, j) * a.get(i, j)).sum();
        if c > best_norm {
            best_norm = c;
            best = j;
        }
    }
    let mut v = vec![0.0; n];
    v[best] = 1.0;
    v
}
