use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::morphology::binary_closure;
use super::predict;
use crate::complex::binarize;
use crate::data::Sample;
use crate::model::TinyNet;
use crate::oracle::{betti0_bruteforce, betti1_bruteforce, BinaryMask};
use crate::topograd::TopologyPrior;
use crate::{Error, Result};

/// Optional clean-up applied to the thresholded prediction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Postprocess {
    #[default]
    None,
    /// Morphological closing with a disk of this radius.
    Closure(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalRecord {
    pub index: usize,
    pub dice: f64,
    pub beta0: usize,
    pub beta1: usize,
    pub topology_correct: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub mean_dice: f64,
    pub topology_correct_fraction: f64,
    pub records: Vec<EvalRecord>,
}

impl EvalReport {
    /// Scores binary predictions against labels.
    pub fn from_masks(
        predictions: &[BinaryMask],
        labels: &[&BinaryMask],
        prior: &TopologyPrior,
    ) -> Result<Self> {
        if predictions.len() != labels.len() {
            return Err(Error::ShapeMismatch {
                expected: labels.len(),
                actual: predictions.len(),
            });
        }
        let records = predictions
            .iter()
            .zip(labels)
            .enumerate()
            .map(|(index, (pred, label))| {
                let beta0 = betti0_bruteforce(pred);
                let beta1 = betti1_bruteforce(pred);
                let topology_correct = prior.dims().all(|(d, n)| match d {
                    0 => beta0 == n,
                    _ => beta1 == n,
                });
                Ok(EvalRecord {
                    index,
                    dice: dice_score(pred, label)?,
                    beta0,
                    beta1,
                    topology_correct,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let n = records.len().max(1) as f64;
        Ok(Self {
            mean_dice: records.iter().map(|r| r.dice).sum::<f64>() / n,
            topology_correct_fraction: records.iter().filter(|r| r.topology_correct).count()
                as f64
                / n,
            records,
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("index,dice,beta0,beta1,topology_correct\n");
        for r in &self.records {
            let _ = writeln!(
                out,
                "{},{},{},{},{}",
                r.index, r.dice, r.beta0, r.beta1, r.topology_correct
            );
        }
        out
    }

    /// Writes `<stem>.json` and `<stem>.csv`.
    pub fn write(&self, dir: &Path, stem: &str) -> Result<()> {
        for (ext, body) in [("json", self.to_json()), ("csv", self.to_csv())] {
            let path = dir.join(format!("{stem}.{ext}"));
            std::fs::write(&path, body).map_err(|e| Error::io(&path, e))?;
        }
        Ok(())
    }
}

/// Hard Dice `2|A and B| / (|A| + |B|)`, defined as 1 when both are empty.
pub fn dice_score(a: &BinaryMask, b: &BinaryMask) -> Result<f64> {
    if a.shape() != b.shape() {
        return Err(Error::ShapeMismatch {
            expected: b.bits().len(),
            actual: a.bits().len(),
        });
    }
    let inter = a.bits().iter().zip(b.bits()).filter(|(x, y)| **x && **y).count();
    let total = a.count() + b.count();
    Ok(if total == 0 {
        1.0
    } else {
        2.0 * inter as f64 / total as f64
    })
}

/// Thresholds predictions at 0.5 and scores them against the labels.
/// Topology is judged by the brute-force oracle.
pub fn evaluate(net: &TinyNet, test: &[&Sample], prior: &TopologyPrior) -> Result<EvalReport> {
    evaluate_with(net, test, prior, Postprocess::None, 1)
}

pub fn evaluate_with(
    net: &TinyNet,
    test: &[&Sample],
    prior: &TopologyPrior,
    postprocess: Postprocess,
    jobs: usize,
) -> Result<EvalReport> {
    let images: Vec<_> = test.iter().map(|s| &s.image).collect();
    let masks: Vec<BinaryMask> = predict(net, &images, jobs)?
        .iter()
        .map(|s| {
            let m = binarize(s, 0.5);
            match postprocess {
                Postprocess::None => m,
                Postprocess::Closure(r) => binary_closure(&m, r),
            }
        })
        .collect();
    let labels: Vec<&BinaryMask> = test.iter().map(|s| &s.label).collect();
    EvalReport::from_masks(&masks, &labels, prior)
}
