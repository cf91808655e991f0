//! Scoring for generated answers: detection accuracy/precision/recall/F1
//! with fake as the positive class, the caption-style NLG metrics BLEU-4,
//! ROUGE-L, CIDEr and METEOR-lite, and AUC/EER for score-based detectors.
//!
//! METEOR is implemented without stemming or synonym tables (exact unigram
//! matches only) and is reported as `meteor_lite` everywhere.

mod bleu;
mod cider;
mod detection;
mod meteor;
mod ranking;
mod report;
mod rouge;

pub use bleu::bleu4;
pub use cider::cider;
pub use detection::{detection_metrics, ConfusionCounts, DetectionMetrics, Label, Prediction};
pub use meteor::meteor_lite;
pub use ranking::auc_eer;
pub use report::{evaluate_corpus, EvalItem, EvalReport};
pub use rouge::rouge_l;

#[derive(Debug, thiserror::Error)]
pub enum MetricsError {
    #[error("cannot score an empty evaluation set")]
    EmptySet,
    #[error("CIDEr needs at least two pairs to define IDF, got {0}")]
    DegenerateIdf(usize),
    #[error("AUC/EER need both classes present")]
    SingleClass,
    #[error("scored pair must have at least one reference")]
    NoReferences,
}

/// A generated answer with its gold references.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct ScoredPair {
    pub candidate: String,
    pub references: Vec<String>,
    pub image_id: String,
    pub question: String,
}

pub(crate) fn tokenize(text: &str) -> Vec<String> {
    ddvqa_text::normalize_tokens(text)
}
