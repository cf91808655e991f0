//! Corpus-level evaluation report: detection metrics over extracted
//! verdicts, NLG metrics over the generated answers, and a per-question-type
//! detection breakdown (general plus each facial component).

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::{
    bleu4, cider, detection_metrics, meteor_lite, rouge_l, ConfusionCounts, DetectionMetrics,
    Label, MetricsError, Prediction, ScoredPair,
};

/// One generated answer ready for scoring.
#[derive(Debug, Clone)]
pub struct EvalItem {
    pub pair: ScoredPair,
    pub predicted: Prediction,
    pub gold: Label,
    /// "general" or the facial component the question asks about.
    pub question_type: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvalReport {
    pub acc: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub bleu4: f64,
    pub rouge_l: f64,
    pub meteor_lite: f64,
    pub cider: f64,
    pub counts: ConfusionCounts,
    pub evaluated_pairs: usize,
    pub per_question: BTreeMap<String, DetectionMetrics>,
}

/// Scores a full corpus. Sentence-level metrics are averaged over pairs;
/// CIDEr computes IDF over the whole reference corpus first.
pub fn evaluate_corpus(items: &[EvalItem]) -> Result<EvalReport, MetricsError> {
    if items.is_empty() {
        return Err(MetricsError::EmptySet);
    }
    for item in items {
        if item.pair.references.is_empty() {
            return Err(MetricsError::NoReferences);
        }
    }

    let verdicts: Vec<(Prediction, Label)> =
        items.iter().map(|i| (i.predicted, i.gold)).collect();
    let detection = detection_metrics(&verdicts)?;

    let mut bleu_sum = 0.0;
    let mut rouge_sum = 0.0;
    let mut meteor_sum = 0.0;
    for item in items {
        bleu_sum += bleu4(&item.pair.candidate, &item.pair.references);
        rouge_sum += rouge_l(&item.pair.candidate, &item.pair.references);
        meteor_sum += meteor_lite(&item.pair.candidate, &item.pair.references);
    }
    let n = items.len() as f64;

    let pairs: Vec<ScoredPair> = items.iter().map(|i| i.pair.clone()).collect();
    let cider_mean = if pairs.len() >= 2 {
        cider(&pairs)?.1
    } else {
        0.0
    };

    let mut per_question = BTreeMap::new();
    let mut by_type: BTreeMap<&str, Vec<(Prediction, Label)>> = BTreeMap::new();
    for item in items {
        by_type
            .entry(item.question_type.as_str())
            .or_default()
            .push((item.predicted, item.gold));
    }
    for (question_type, verdicts) in by_type {
        per_question.insert(question_type.to_string(), detection_metrics(&verdicts)?);
    }

    Ok(EvalReport {
        acc: detection.acc,
        precision: detection.precision,
        recall: detection.recall,
        f1: detection.f1,
        bleu4: bleu_sum / n,
        rouge_l: rouge_sum / n,
        meteor_lite: meteor_sum / n,
        cider: cider_mean,
        counts: detection.counts,
        evaluated_pairs: items.len(),
        per_question,
    })
}
