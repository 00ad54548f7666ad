use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::manifest::{DatasetManifest, Split};
use crate::error::{Error, Result};
use crate::math;
use crate::numerics::Rng;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitFractions {
    pub train: f64,
    pub val: f64,
    pub test: f64,
}

impl Default for SplitFractions {
    fn default() -> Self {
        Self {
            train: 0.8,
            val: 0.1,
            test: 0.1,
        }
    }
}

impl SplitFractions {
    pub fn new(train: f64, val: f64, test: f64) -> Result<Self> {
        let f = Self { train, val, test };
        f.validate()?;
        Ok(f)
    }

    pub fn validate(&self) -> Result<()> {
        let all = [self.train, self.val, self.test];
        if all.iter().any(|&x| !(x >= 0.0) || !x.is_finite()) || self.train <= 0.0 {
            return Err(Error::Range(format!("invalid split fractions {all:?}")));
        }
        if (all.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(Error::Range(format!("split fractions {all:?} do not sum to 1")));
        }
        Ok(())
    }

    /// Per-class counts: train and val take `floor(n·f)`, test takes the rest;
    /// a non-empty class always keeps at least one training sample.
    pub fn counts(&self, n: usize) -> (usize, usize, usize) {
        let cut = |f: f64| math::floor(n as f64 * f + 1e-9) as usize;
        let mut train = cut(self.train).min(n);
        let val = cut(self.val).min(n - train);
        if train == 0 && n > 0 {
            train = 1;
        }
        let val = val.min(n - train);
        (train, val, n - train - val)
    }
}

/// Stratified split: within each class (in class-table order) the entries are
/// shuffled with `rng` and cut by `fractions`.
pub fn split(manifest: &DatasetManifest, fractions: SplitFractions, rng: &mut Rng) -> Result<DatasetManifest> {
    if manifest.is_empty() {
        return Err(Error::Dataset("cannot split an empty manifest".into()));
    }
    fractions.validate()?;
    let labels = manifest.label_indices()?;
    let mut assignment = vec![Split::Train; manifest.len()];
    for class in 0..manifest.class_table().len() {
        let mut members: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == class).collect();
        rng.shuffle(&mut members);
        let (train, val, _) = fractions.counts(members.len());
        for (rank, &i) in members.iter().enumerate() {
            assignment[i] = if rank < train {
                Split::Train
            } else if rank < train + val {
                Split::Val
            } else {
                Split::Test
            };
        }
    }
    manifest.clone().with_splits(&assignment)
}
