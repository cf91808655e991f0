//! Detection scoring with fake as the positive class.

use serde::{Deserialize, Serialize};

use crate::MetricsError;

/// Gold label of an image or question.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Label {
    Real,
    Fake,
}

/// Verdict extracted from a generated answer. `Undetermined` never counts
/// as correct: it is scored as the opposite of the gold label.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Prediction {
    Real,
    Fake,
    Undetermined,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    #[serde(rename = "fn")]
    pub fneg: usize,
}

impl ConfusionCounts {
    pub fn total(&self) -> usize {
        self.tp + self.fp + self.tn + self.fneg
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct DetectionMetrics {
    pub acc: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub counts: ConfusionCounts,
}

pub fn detection_metrics(pairs: &[(Prediction, Label)]) -> Result<DetectionMetrics, MetricsError> {
    if pairs.is_empty() {
        return Err(MetricsError::EmptySet);
    }
    let mut counts = ConfusionCounts::default();
    for &(pred, gold) in pairs {
        // Undetermined is resolved to the wrong class for this gold label.
        let effective_fake = match pred {
            Prediction::Fake => true,
            Prediction::Real => false,
            Prediction::Undetermined => gold == Label::Real,
        };
        match (gold, effective_fake) {
            (Label::Fake, true) => counts.tp += 1,
            (Label::Fake, false) => counts.fneg += 1,
            (Label::Real, true) => counts.fp += 1,
            (Label::Real, false) => counts.tn += 1,
        }
    }
    let total = counts.total() as f64;
    let acc = (counts.tp + counts.tn) as f64 / total;
    let precision = ratio(counts.tp, counts.tp + counts.fp);
    let recall = ratio(counts.tp, counts.tp + counts.fneg);
    let f1 = if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    };
    Ok(DetectionMetrics {
        acc,
        precision,
        recall,
        f1,
        counts,
    })
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}
