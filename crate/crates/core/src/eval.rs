//! Confusion matrices and accuracy / precision / recall / F1.
//!
//! Weighted averages are computed as `Σ_k (support_k / den_k)·num_k / N` so
//! that weighted recall reduces to `trace / N` without rounding drift.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Averaging {
    #[default]
    Weighted,
    Macro,
}

impl Averaging {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "weighted" => Ok(Self::Weighted),
            "macro" => Ok(Self::Macro),
            other => Err(Error::Config(format!("unknown averaging {other:?}"))),
        }
    }
}

/// `counts[t][p]`: samples of true class `t` predicted as `p`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    counts: Vec<Vec<u64>>,
    class_table: Vec<String>,
}

impl ConfusionMatrix {
    pub fn from_counts(counts: Vec<Vec<u64>>, class_table: Vec<String>) -> Result<Self> {
        let k = class_table.len();
        if counts.len() != k || counts.iter().any(|r| r.len() != k) {
            return Err(Error::Length {
                field: "confusion counts",
                expected: k,
                actual: counts.len(),
            });
        }
        Ok(Self { counts, class_table })
    }

    pub fn counts(&self) -> &[Vec<u64>] {
        &self.counts
    }

    pub fn class_table(&self) -> &[String] {
        &self.class_table
    }

    pub fn k(&self) -> usize {
        self.counts.len()
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn trace(&self) -> u64 {
        (0..self.k()).map(|i| self.counts[i][i]).sum()
    }

    fn support(&self, c: usize) -> u64 {
        self.counts[c].iter().sum()
    }

    fn predicted(&self, c: usize) -> u64 {
        self.counts.iter().map(|r| r[c]).sum()
    }
}

pub fn confusion(preds: &[usize], truth: &[usize], class_table: &[String]) -> Result<ConfusionMatrix> {
    if preds.len() != truth.len() {
        return Err(Error::Length {
            field: "predictions",
            expected: truth.len(),
            actual: preds.len(),
        });
    }
    let k = class_table.len();
    let mut counts = vec![vec![0u64; k]; k];
    for (&p, &t) in preds.iter().zip(truth) {
        if p >= k || t >= k {
            return Err(Error::Range(format!("class index {} outside {k} classes", p.max(t))));
        }
        counts[t][p] += 1;
    }
    Ok(ConfusionMatrix {
        counts,
        class_table: class_table.to_vec(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub label: String,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub averaging: Averaging,
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: u64,
    pub per_class: Vec<ClassMetrics>,
}

/// `num/den`, or 0 when `den == 0`.
fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

pub fn metrics(cm: &ConfusionMatrix, averaging: Averaging) -> Result<MetricsReport> {
    let n = cm.total();
    if n == 0 {
        return Err(Error::Degenerate("metrics of an empty confusion matrix"));
    }
    let k = cm.k();
    let mut per_class = Vec::with_capacity(k);
    // (numerator, denominator) per class for each metric
    let mut parts: Vec<[(u64, u64); 3]> = Vec::with_capacity(k);
    for c in 0..k {
        let tp = cm.counts[c][c];
        let support = cm.support(c);
        let predicted = cm.predicted(c);
        let fp = predicted - tp;
        let fn_ = support - tp;
        let p = (tp, predicted);
        let r = (tp, support);
        let f = (2 * tp, 2 * tp + fp + fn_);
        per_class.push(ClassMetrics {
            label: cm.class_table[c].clone(),
            precision: ratio(p.0, p.1),
            recall: ratio(r.0, r.1),
            f1: ratio(f.0, f.1),
            support,
        });
        parts.push([p, r, f]);
    }
    let average = |m: usize| -> f64 {
        match averaging {
            Averaging::Macro => parts.iter().map(|p| ratio(p[m].0, p[m].1)).sum::<f64>() / k as f64,
            Averaging::Weighted => {
                let mut acc = 0.0;
                for (c, p) in parts.iter().enumerate() {
                    let (num, den) = p[m];
                    if den > 0 {
                        acc += (cm.support(c) as f64 / den as f64) * num as f64;
                    }
                }
                acc / n as f64
            }
        }
    };
    Ok(MetricsReport {
        averaging,
        accuracy: cm.trace() as f64 / n as f64,
        precision: average(0),
        recall: average(1),
        f1: average(2),
        support: n,
        per_class,
    })
}

impl MetricsReport {
    /// Aligned plain-text table.
    pub fn to_text(&self) -> String {
        let width = self.per_class.iter().map(|c| c.label.len()).max().unwrap_or(0).max(8);
        let mut s = String::new();
        let _ = writeln!(s, "{:<width$}  {:>9}  {:>9}  {:>9}  {:>7}", "class", "precision", "recall", "f1", "support");
        for c in &self.per_class {
            let _ = writeln!(
                s,
                "{:<width$}  {:>9.4}  {:>9.4}  {:>9.4}  {:>7}",
                c.label, c.precision, c.recall, c.f1, c.support
            );
        }
        let avg = match self.averaging {
            Averaging::Weighted => "weighted",
            Averaging::Macro => "macro",
        };
        let _ = writeln!(
            s,
            "{:<width$}  {:>9.4}  {:>9.4}  {:>9.4}  {:>7}",
            avg, self.precision, self.recall, self.f1, self.support
        );
        let _ = writeln!(s, "{:<width$}  {:>9.4}", "accuracy", self.accuracy);
        s
    }
}
