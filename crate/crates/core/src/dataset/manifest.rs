use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "val" => Ok(Split::Val),
            "test" => Ok(Split::Test),
            other => Err(Error::Dataset(format!("unknown split '{other}'"))),
        }
    }
}

impl core::fmt::Display for Split {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub sample_id: String,
    pub label: String,
    /// `None` until [`split`](super::split) assigns one.
    pub split: Option<Split>,
}

/// Sample ids, labels and split assignments.
///
/// `class_table` is the sorted set of labels; one-hot columns and model
/// outputs follow its order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetManifest {
    entries: Vec<ManifestEntry>,
    class_table: Vec<String>,
}

impl DatasetManifest {
    /// Builds a manifest, deriving the class table from the labels.
    pub fn new(entries: Vec<ManifestEntry>) -> Result<Self> {
        let mut classes: Vec<String> = entries.iter().map(|e| e.label.clone()).collect();
        classes.sort();
        classes.dedup();
        Self::with_class_table(entries, classes)
    }

    pub fn with_class_table(entries: Vec<ManifestEntry>, class_table: Vec<String>) -> Result<Self> {
        let mut seen = BTreeMap::new();
        for (i, e) in entries.iter().enumerate() {
            if e.sample_id.is_empty() {
                return Err(Error::Dataset(format!("entry {i} has an empty sample id")));
            }
            if seen.insert(e.sample_id.as_str(), i).is_some() {
                return Err(Error::Dataset(format!("duplicate sample id '{}'", e.sample_id)));
            }
        }
        let mut sorted = class_table.clone();
        sorted.sort();
        sorted.dedup();
        if sorted.len() != class_table.len() {
            return Err(Error::Dataset("class table contains duplicates".into()));
        }
        for e in &entries {
            if !class_table.contains(&e.label) {
                return Err(Error::Dataset(format!(
                    "label '{}' of '{}' missing from class table",
                    e.label, e.sample_id
                )));
            }
        }
        Ok(Self {
            entries,
            class_table,
        })
    }

    pub fn entries(&self) -> &[ManifestEntry] {
        &self.entries
    }

    pub fn class_table(&self) -> &[String] {
        &self.class_table
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn class_index(&self, label: &str) -> Result<usize> {
        self.class_table
            .iter()
            .position(|c| c == label)
            .ok_or_else(|| Error::Dataset(format!("label '{label}' missing from class table")))
    }

    /// Class index of every entry, in entry order.
    pub fn label_indices(&self) -> Result<Vec<usize>> {
        self.entries.iter().map(|e| self.class_index(&e.label)).collect()
    }

    /// Indices of the entries assigned to `split`.
    pub fn indices_in(&self, split: Split) -> Vec<usize> {
        self.entries
            .iter()
            .enumerate()
            .filter(|(_, e)| e.split == Some(split))
            .map(|(i, _)| i)
            .collect()
    }

    pub fn with_splits(mut self, splits: &[Split]) -> Result<Self> {
        if splits.len() != self.entries.len() {
            return Err(Error::Dataset("split assignment length mismatch".into()));
        }
        for (e, s) in self.entries.iter_mut().zip(splits) {
            e.split = Some(*s);
        }
        Ok(self)
    }
}

/// One row per entry, a single 1 in the column of its class.
#[derive(Debug, Clone, PartialEq)]
pub struct OneHot {
    pub matrix: Tensor,
}

pub fn one_hot(manifest: &DatasetManifest) -> Result<OneHot> {
    let k = manifest.class_table().len();
    if k == 0 {
        return Err(Error::Dataset("class table is empty".into()));
    }
    let labels = manifest.label_indices()?;
    Ok(OneHot {
        matrix: one_hot_rows(&labels, k),
    })
}

pub(crate) fn one_hot_rows(labels: &[usize], k: usize) -> Tensor {
    let mut m = Tensor::zeros(&[labels.len(), k]);
    for (i, &c) in labels.iter().enumerate() {
        m.set(i, c, 1.0);
    }
    m
}
