use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::numerics::{dot, norm2, Tensor};

/// `(a·b) / (‖a‖‖b‖)` clamped to `[-1, 1]`.
pub fn cosine_similarity(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::shape("cosine_similarity", &[a.len()], &[b.len()]));
    }
    let (na, nb) = (norm2(a), norm2(b));
    if na == 0.0 || nb == 0.0 {
        return Err(Error::Degenerate("cosine similarity of a zero vector"));
    }
    Ok((dot(a, b) / (na * nb)).clamp(-1.0, 1.0))
}

/// Rows scaled to unit L2 norm; zero rows stay `None`.
#[derive(Debug, Clone, PartialEq)]
pub struct UnitRows {
    rows: Vec<Option<Vec<f64>>>,
}

impl UnitRows {
    pub fn new(features: &Tensor) -> Self {
        let rows = (0..features.rows())
            .map(|i| unit(features.row(i)))
            .collect();
        Self { rows }
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn get(&self, i: usize) -> Option<&[f64]> {
        self.rows[i].as_deref()
    }

    /// Similarity of row `i` to every row; `NaN` where either side is zero.
    ///
    /// Entry `(i, j)` and `(j, i)` are computed by the same expression, so
    /// the full matrix is exactly symmetric regardless of how rows are
    /// distributed across workers.
    pub fn similarity_row(&self, i: usize) -> Vec<f64> {
        (0..self.rows.len()).map(|j| self.pair(i, j)).collect()
    }

    pub fn pair(&self, i: usize, j: usize) -> f64 {
        match (&self.rows[i], &self.rows[j]) {
            (Some(a), Some(b)) => unit_dot(a, b),
            _ => f64::NAN,
        }
    }

    /// Similarity of an external query (already unit-normalized) to row `j`.
    pub fn query(&self, q: &[f64], j: usize) -> f64 {
        match &self.rows[j] {
            Some(b) => unit_dot(q, b),
            None => f64::NAN,
        }
    }
}

pub(crate) fn unit(v: &[f64]) -> Option<Vec<f64>> {
    let n = norm2(v);
    if n == 0.0 || !n.is_finite() {
        None
    } else {
        Some(v.iter().map(|x| x / n).collect())
    }
}

/// Dot of unit vectors with the product order fixed so `(a, b)` and `(b, a)`
/// round identically.
fn unit_dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>().clamp(-1.0, 1.0)
}

/// Dense `n×n` cosine similarity matrix (NaN for pairs involving zero rows,
/// diagonal included).
#[derive(Debug, Clone, PartialEq)]
pub struct SimilarityMatrix {
    n: usize,
    values: Vec<f64>,
}

impl SimilarityMatrix {
    pub fn compute(rows: &UnitRows) -> Self {
        let n = rows.len();
        let mut values = Vec::with_capacity(n * n);
        for i in 0..n {
            values.extend(rows.similarity_row(i));
        }
        Self { n, values }
    }

    /// Assembles a matrix from rows computed elsewhere (e.g. by worker threads).
    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Self> {
        let n = rows.len();
        let mut values = Vec::with_capacity(n * n);
        for r in rows {
            if r.len() != n {
                return Err(Error::shape("SimilarityMatrix::from_rows", &[n], &[r.len()]));
            }
            values.extend(r);
        }
        Ok(Self { n, values })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.n + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.n..(i + 1) * self.n]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn self_similarity_is_one() {
        let v = [0.3, -1.2, 4.0];
        assert!((cosine_similarity(&v, &v).unwrap() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn orthogonal_is_zero() {
        assert_eq!(cosine_similarity(&[1.0, 0.0], &[0.0, 1.0]).unwrap(), 0.0);
    }

    #[test]
    fn hand_computed_eight_ninths() {
        let c = cosine_similarity(&[1.0, 2.0, 2.0], &[2.0, 1.0, 2.0]).unwrap();
        assert!((c - 8.0 / 9.0).abs() < 1e-15);
    }

    #[test]
    fn zero_vector_is_degenerate() {
        assert!(matches!(cosine_similarity(&[0.0, 0.0], &[1.0, 0.0]), Err(Error::Degenerate(_))));
    }

    #[test]
    fn matrix_is_exactly_symmetric() {
        let t = Tensor::from_rows(&[
            vec![0.1, 0.7, -0.3],
            vec![1.3, -0.2, 0.9],
            vec![0.0, 0.0, 0.0],
            vec![-2.0, 0.5, 0.25],
        ])
        .unwrap();
        let s = SimilarityMatrix::compute(&UnitRows::new(&t));
        for i in 0..4 {
            for j in 0..4 {
                let (a, b) = (s.get(i, j), s.get(j, i));
                assert!(a.to_bits() == b.to_bits() || (a.is_nan() && b.is_nan()));
            }
        }
        assert!(s.get(2, 0).is_nan());
    }
}
