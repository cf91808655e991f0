//! QA corpus construction: majority-vote aggregation over per-annotator
//! labels, the three quality filters, answer templating, question synthesis,
//! general-answer augmentation, split assignment and corpus statistics.

pub mod mining;
pub mod synth;

use std::collections::BTreeMap;
use std::fmt;
use std::io::{BufRead, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::rng::fnv1a64;

#[derive(Debug, thiserror::Error)]
pub enum DatasetError {
    #[error("no annotations for this question")]
    EmptyAnnotations,
    #[error("a fake answer needs at least one reason")]
    EmptyReasons,
    #[error("line {line}: {reason}")]
    MalformedLine { line: usize, reason: String },
    #[error("annotation invariant violated: {0}")]
    InvalidAnnotation(String),
    #[error("dataset io {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
}

// ── domain enums ────────────────────────────────────────────────────

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize, Hash)]
#[serde(rename_all = "snake_case")]
pub enum Component {
    WholeFace,
    Eyebrows,
    Skin,
    Eyes,
    Nose,
    Mouth,
}

impl Component {
    pub const FINE_GRAINED: [Component; 5] = [
        Component::Eyebrows,
        Component::Skin,
        Component::Eyes,
        Component::Nose,
        Component::Mouth,
    ];

    /// Subject noun in the answer template; the whole face renders as
    /// "image".
    pub fn noun(self) -> &'static str {
        match self {
            Component::WholeFace => "image",
            Component::Eyebrows => "eyebrows",
            Component::Skin => "skin",
            Component::Eyes => "eyes",
            Component::Nose => "nose",
            Component::Mouth => "mouth",
        }
    }

    /// Plural nouns agree with "look", the rest with "looks".
    pub fn verb(self) -> &'static str {
        match self {
            Component::Eyebrows | Component::Eyes => "look",
            _ => "looks",
        }
    }
}

impl fmt::Display for Component {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            Component::WholeFace => "whole_face",
            other => other.noun(),
        };
        write!(f, "{name}")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize, Hash)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Real,
    Fake,
}

impl Verdict {
    pub fn opposite(self) -> Verdict {
        match self {
            Verdict::Real => Verdict::Fake,
            Verdict::Fake => Verdict::Real,
        }
    }

    pub fn word(self) -> &'static str {
        match self {
            Verdict::Real => "real",
            Verdict::Fake => "fake",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize, Hash)]
pub enum Manipulation {
    #[serde(rename = "real")]
    Real,
    Deepfakes,
    Face2Face,
    FaceSwap,
    NeuralTextures,
}

impl Manipulation {
    pub const FAKE_KINDS: [Manipulation; 4] = [
        Manipulation::Deepfakes,
        Manipulation::Face2Face,
        Manipulation::FaceSwap,
        Manipulation::NeuralTextures,
    ];
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

/// Optional fakeness-strength adjective from the 0-5 rating scale.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Strength {
    ABit,
    Very,
}

impl Strength {
    /// Ratings 2-3 map to "a bit fake", 4-5 to "very fake".
    pub fn from_rating(rating: u8) -> Option<Strength> {
        match rating {
            2 | 3 => Some(Strength::ABit),
            4 | 5 => Some(Strength::Very),
            _ => None,
        }
    }
}

// ── raw annotations ─────────────────────────────────────────────────

/// One annotator's response to one question. `verdict: None` records an
/// explicit skip, which is how an image with no answered questions at all
/// shows up in the raw file.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RawAnnotation {
    pub image_id: String,
    pub component: Component,
    pub annotator_id: String,
    pub verdict: Option<Verdict>,
    pub fakeness_rating: u8,
    pub reasons: Vec<String>,
    pub gt_label: Verdict,
    pub manipulation: Manipulation,
}

impl RawAnnotation {
    /// Rating 0-1 must pair with real, 2-5 with fake; a real manipulation
    /// type must pair with a real ground truth.
    pub fn validate(&self) -> Result<(), DatasetError> {
        if let Some(verdict) = self.verdict {
            let rating_verdict = if self.fakeness_rating <= 1 {
                Verdict::Real
            } else if self.fakeness_rating <= 5 {
                Verdict::Fake
            } else {
                return Err(DatasetError::InvalidAnnotation(format!(
                    "rating {} out of 0-5",
                    self.fakeness_rating
                )));
            };
            if rating_verdict != verdict {
                return Err(DatasetError::InvalidAnnotation(format!(
                    "rating {} contradicts verdict {}",
                    self.fakeness_rating,
                    verdict.word()
                )));
            }
        }
        let manip_real = self.manipulation == Manipulation::Real;
        let gt_real = self.gt_label == Verdict::Real;
        if manip_real != gt_real {
            return Err(DatasetError::InvalidAnnotation(format!(
                "manipulation {:?} contradicts gt_label {}",
                self.manipulation,
                self.gt_label.word()
            )));
        }
        Ok(())
    }
}

// ── QA records ──────────────────────────────────────────────────────

/// One question about one image with its aggregated answers.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct QARecord {
    pub image_id: String,
    pub question: String,
    pub component: Component,
    pub answers: Vec<String>,
    pub verdict: Verdict,
    pub split: Split,
    pub manipulation: Manipulation,
}

/// The regular grammar every rendered answer matches ("look" for the
/// plural components, "looks" otherwise).
pub const ANSWER_PATTERN: &str = r"^The .+ looks? (real|fake)( because .+)?\.$";

pub fn matches_template(answer: &str) -> bool {
    // Hand-rolled so the corpus check does not need a regex dependency.
    let Some(rest) = answer.strip_prefix("The ") else {
        return false;
    };
    let Some(body) = rest.strip_suffix('.') else {
        return false;
    };
    let clause = match body.split_once(" because ") {
        Some((head, reasons)) => {
            if reasons.is_empty() {
                return false;
            }
            head
        }
        None => body,
    };
    let words: Vec<&str> = clause.split(' ').collect();
    if words.len() < 3 {
        return false;
    }
    let verdict_pos = words.len() - 1;
    let verb_like = |w: &str| w == "look" || w == "looks";
    let verdict_word = |w: &str| w == "real" || w == "fake";
    // Optional strength adjectives sit between the verb and the verdict.
    verdict_word(words[verdict_pos])
        && words[..verdict_pos].iter().any(|w| verb_like(w))
}

// ── aggregation and filtering ───────────────────────────────────────

/// Outcome of the majority vote over one question's annotations.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum MajorityOutcome {
    /// At least two annotators agree; all agreeing annotators' reason sets
    /// are kept, in input order.
    Agreed {
        verdict: Verdict,
        reasons_per_annotator: Vec<Vec<String>>,
    },
    /// No pair of annotators agrees (or every annotator skipped).
    Rejected,
}

pub fn aggregate_majority(annos: &[RawAnnotation]) -> Result<MajorityOutcome, DatasetError> {
    if annos.is_empty() {
        return Err(DatasetError::EmptyAnnotations);
    }
    let answered: Vec<&RawAnnotation> = annos.iter().filter(|a| a.verdict.is_some()).collect();
    let fake = answered
        .iter()
        .filter(|a| a.verdict == Some(Verdict::Fake))
        .count();
    let real = answered.len() - fake;
    let verdict = if fake >= 2 {
        Verdict::Fake
    } else if real >= 2 {
        Verdict::Real
    } else {
        return Ok(MajorityOutcome::Rejected);
    };
    let reasons_per_annotator = answered
        .iter()
        .filter(|a| a.verdict == Some(verdict))
        .map(|a| a.reasons.clone())
        .collect();
    Ok(MajorityOutcome::Agreed {
        verdict,
        reasons_per_annotator,
    })
}

/// A question after aggregation, ready for the quality filters.
#[derive(Debug, Clone)]
pub struct AggregatedQuestion {
    pub image_id: String,
    pub component: Component,
    pub verdict: Verdict,
    pub gt_label: Verdict,
    pub manipulation: Manipulation,
    pub reasons_per_annotator: Vec<Vec<String>>,
    /// Some annotator gave both verdicts to this question.
    pub annotator_conflict: bool,
    /// How many of the image's questions received at least one answer.
    pub image_answered_questions: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum DropReason {
    /// All questions for the image are unanswered.
    NoAnswers,
    /// An annotator selected both real and fake for one question.
    AnnotatorConflict,
    /// Majority verdict differs from the ground-truth detection label.
    GtMismatch,
    /// No two annotators agree.
    NoMajority,
    /// Agreement reached but no answer could be rendered.
    NoRenderableAnswer,
}

impl DropReason {
    pub fn as_str(self) -> &'static str {
        match self {
            DropReason::NoAnswers => "no_answers",
            DropReason::AnnotatorConflict => "annotator_conflict",
            DropReason::GtMismatch => "gt_mismatch",
            DropReason::NoMajority => "no_majority",
            DropReason::NoRenderableAnswer => "no_renderable_answer",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FilterDecision {
    Keep,
    Drop(DropReason),
}

/// The three quality criteria, in order: unanswered image, conflicting
/// annotator, ground-truth mismatch.
pub fn quality_filter(record: &AggregatedQuestion) -> FilterDecision {
    if record.image_answered_questions == 0 {
        return FilterDecision::Drop(DropReason::NoAnswers);
    }
    if record.annotator_conflict {
        return FilterDecision::Drop(DropReason::AnnotatorConflict);
    }
    if record.verdict != record.gt_label {
        return FilterDecision::Drop(DropReason::GtMismatch);
    }
    FilterDecision::Keep
}

// ── templates and questions ─────────────────────────────────────────

/// "The X looks real/fake because X looks Y." Multiple reasons join with
/// commas. Real answers may omit reasons; fake answers must carry one.
pub fn render_answer(
    component: Component,
    verdict: Verdict,
    reasons: &[String],
) -> Result<String, DatasetError> {
    render_answer_with_strength(component, verdict, reasons, None)
}

/// Same template with the optional rating-derived adjective ("a bit fake",
/// "very fake"); the canonical corpus leaves it off.
pub fn render_answer_with_strength(
    component: Component,
    verdict: Verdict,
    reasons: &[String],
    strength: Option<Strength>,
) -> Result<String, DatasetError> {
    if verdict == Verdict::Fake && reasons.is_empty() {
        return Err(DatasetError::EmptyReasons);
    }
    let noun = component.noun();
    let verb = component.verb();
    let adjective = match (verdict, strength) {
        (Verdict::Fake, Some(Strength::ABit)) => "a bit ",
        (Verdict::Fake, Some(Strength::Very)) => "very ",
        _ => "",
    };
    let mut answer = format!("The {noun} {verb} {adjective}{}", verdict.word());
    if !reasons.is_empty() {
        answer.push_str(&format!(" because {noun} {verb} {}", reasons.join(", ")));
    }
    answer.push('.');
    Ok(answer)
}

pub const GENERAL_QUESTION: &str = "Does the person in the image look fake?";

pub fn fine_grained_question(component: Component) -> String {
    format!("Do the person's {} look real/fake?", component.noun())
}

/// One general question plus one fine-grained question per annotated
/// component, in canonical component order.
pub fn make_questions(components_present: &[Component]) -> Vec<(String, Component)> {
    let mut questions = vec![(GENERAL_QUESTION.to_string(), Component::WholeFace)];
    for component in Component::FINE_GRAINED {
        if components_present.contains(&component) {
            questions.push((fine_grained_question(component), component));
        }
    }
    questions
}

/// Renders the general answer with up to two reasons sampled from the
/// image's fine-grained answers appended to the provided reasons.
pub fn augment_general_answer(
    verdict: Verdict,
    general_reasons: &[String],
    fine_grained_reasons: &[String],
    rng: &mut ChaCha8Rng,
) -> Result<String, DatasetError> {
    let mut reasons = general_reasons.to_vec();
    let take = fine_grained_reasons.len().min(2);
    let mut sampled: Vec<String> = fine_grained_reasons
        .choose_multiple(rng, take)
        .cloned()
        .collect();
    reasons.append(&mut sampled);
    render_answer(Component::WholeFace, verdict, &reasons)
}

// ── pipeline ────────────────────────────────────────────────────────

#[derive(Debug, Clone, Serialize)]
pub struct DroppedRecord {
    pub image_id: String,
    pub component: Option<Component>,
    pub reason: DropReason,
}

#[derive(Debug, Default)]
pub struct DropLog {
    pub dropped: Vec<DroppedRecord>,
}

/// Assigns the split from the image id alone, so no image leaks across
/// train/test: roughly 90/10.
pub fn split_for(image_id: &str) -> Split {
    if fnv1a64(image_id.as_bytes()) % 10 == 9 {
        Split::Test
    } else {
        Split::Train
    }
}

/// Full post-processing pipeline over raw annotations: group by image and
/// question, majority-vote, filter, template, synthesize questions, augment
/// general answers, assign splits.
pub fn build_corpus(
    raw: &[RawAnnotation],
    rng: &mut ChaCha8Rng,
) -> Result<(Vec<QARecord>, DropLog), DatasetError> {
    for (i, row) in raw.iter().enumerate() {
        row.validate()
            .map_err(|e| DatasetError::MalformedLine {
                line: i + 1,
                reason: e.to_string(),
            })?;
    }

    let mut by_image: BTreeMap<&str, Vec<&RawAnnotation>> = BTreeMap::new();
    for row in raw {
        by_image.entry(row.image_id.as_str()).or_default().push(row);
    }

    let mut log = DropLog::default();
    let mut records = Vec::new();

    for (image_id, rows) in by_image {
        let mut by_component: BTreeMap<Component, Vec<&RawAnnotation>> = BTreeMap::new();
        for row in &rows {
            by_component.entry(row.component).or_default().push(row);
        }
        let answered_questions = by_component
            .values()
            .filter(|group| group.iter().any(|a| a.verdict.is_some()))
            .count();
        if answered_questions == 0 {
            log.dropped.push(DroppedRecord {
                image_id: image_id.to_string(),
                component: None,
                reason: DropReason::NoAnswers,
            });
            continue;
        }

        let gt_label = rows[0].gt_label;
        let manipulation = rows[0].manipulation;
        let split = split_for(image_id);

        // Fine-grained records first; the general record samples from them.
        let mut kept: BTreeMap<Component, (Verdict, Vec<Vec<String>>)> = BTreeMap::new();
        for (&component, group) in &by_component {
            let annos: Vec<RawAnnotation> = group.iter().map(|a| (*a).clone()).collect();
            let conflict = annotator_conflict(&annos);
            let outcome = aggregate_majority(&annos)?;
            let (verdict, reasons) = match outcome {
                MajorityOutcome::Agreed {
                    verdict,
                    reasons_per_annotator,
                } => (verdict, reasons_per_annotator),
                MajorityOutcome::Rejected => {
                    log.dropped.push(DroppedRecord {
                        image_id: image_id.to_string(),
                        component: Some(component),
                        reason: DropReason::NoMajority,
                    });
                    continue;
                }
            };
            let aggregated = AggregatedQuestion {
                image_id: image_id.to_string(),
                component,
                verdict,
                gt_label,
                manipulation,
                reasons_per_annotator: reasons.clone(),
                annotator_conflict: conflict,
                image_answered_questions: answered_questions,
            };
            match quality_filter(&aggregated) {
                FilterDecision::Keep => {
                    kept.insert(component, (verdict, reasons));
                }
                FilterDecision::Drop(reason) => {
                    log.dropped.push(DroppedRecord {
                        image_id: image_id.to_string(),
                        component: Some(component),
                        reason,
                    });
                }
            }
        }

        // Pool of component-qualified reasons for general-answer augmentation.
        let fine_pool = |verdict: Verdict| -> Vec<String> {
            let mut pool: Vec<String> = kept
                .iter()
                .filter(|(c, (v, _))| **c != Component::WholeFace && *v == verdict)
                .flat_map(|(c, (_, reason_sets))| {
                    reason_sets
                        .iter()
                        .flatten()
                        .map(|r| format!("{} {}", canonical_phrase(r), c.noun()))
                })
                .collect();
            pool.sort();
            pool.dedup();
            pool
        };

        for (component, (verdict, reason_sets)) in &kept {
            let question = if *component == Component::WholeFace {
                GENERAL_QUESTION.to_string()
            } else {
                fine_grained_question(*component)
            };
            let mut answers = Vec::new();
            for reasons in reason_sets.iter().take(3) {
                let rendered = if *component == Component::WholeFace {
                    augment_general_answer(*verdict, reasons, &fine_pool(*verdict), rng)
                } else {
                    render_answer(*component, *verdict, reasons)
                };
                match rendered {
                    Ok(answer) => answers.push(answer),
                    Err(DatasetError::EmptyReasons) => {} // blank fake explanation
                    Err(e) => return Err(e),
                }
            }
            if answers.is_empty() {
                log.dropped.push(DroppedRecord {
                    image_id: image_id.to_string(),
                    component: Some(*component),
                    reason: DropReason::NoRenderableAnswer,
                });
                continue;
            }
            records.push(QARecord {
                image_id: image_id.to_string(),
                question,
                component: *component,
                answers,
                verdict: *verdict,
                split,
                manipulation,
            });
        }
    }
    Ok((records, log))
}

fn annotator_conflict(annos: &[RawAnnotation]) -> bool {
    let mut seen: BTreeMap<&str, Verdict> = BTreeMap::new();
    for a in annos {
        let Some(v) = a.verdict else { continue };
        if let Some(&prev) = seen.get(a.annotator_id.as_str()) {
            if prev != v {
                return true;
            }
        } else {
            seen.insert(&a.annotator_id, v);
        }
    }
    false
}

/// Lowercased, trimmed phrase used for image-triplet matching.
pub fn canonical_phrase(reason: &str) -> String {
    reason.trim().to_lowercase()
}

// ── statistics ──────────────────────────────────────────────────────

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CorpusStats {
    pub total_qa_pairs: usize,
    pub total_images: usize,
    pub train_pairs: usize,
    pub test_pairs: usize,
    pub by_manipulation: BTreeMap<String, usize>,
    pub by_component: BTreeMap<String, usize>,
}

pub fn corpus_stats(records: &[QARecord]) -> CorpusStats {
    let mut by_manipulation = BTreeMap::new();
    let mut by_component = BTreeMap::new();
    let mut images = std::collections::BTreeSet::new();
    let mut train_pairs = 0;
    for record in records {
        *by_manipulation
            .entry(format!("{:?}", record.manipulation))
            .or_insert(0) += 1;
        *by_component
            .entry(record.component.to_string())
            .or_insert(0) += 1;
        images.insert(record.image_id.clone());
        if record.split == Split::Train {
            train_pairs += 1;
        }
    }
    CorpusStats {
        total_qa_pairs: records.len(),
        total_images: images.len(),
        train_pairs,
        test_pairs: records.len() - train_pairs,
        by_manipulation,
        by_component,
    }
}

// ── file io ─────────────────────────────────────────────────────────

pub fn write_jsonl<T: Serialize, P: AsRef<Path>>(path: P, items: &[T]) -> Result<(), DatasetError> {
    let path_str = path.as_ref().display().to_string();
    let to_io = |source| DatasetError::Io {
        path: path_str.clone(),
        source,
    };
    let mut file = std::fs::File::create(&path).map_err(to_io)?;
    let to_io = |source| DatasetError::Io {
        path: path_str.clone(),
        source,
    };
    for item in items {
        let line = serde_json::to_string(item).expect("serializable record");
        writeln!(file, "{line}").map_err(to_io)?;
    }
    Ok(())
}

pub fn read_jsonl<T: for<'de> Deserialize<'de>, P: AsRef<Path>>(
    path: P,
) -> Result<Vec<T>, DatasetError> {
    let path_str = path.as_ref().display().to_string();
    let file = std::fs::File::open(&path).map_err(|source| DatasetError::Io {
        path: path_str.clone(),
        source,
    })?;
    let mut items = Vec::new();
    for (i, line) in std::io::BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|source| DatasetError::Io {
            path: path_str.clone(),
            source,
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let item = serde_json::from_str(&line).map_err(|e| DatasetError::MalformedLine {
            line: i + 1,
            reason: e.to_string(),
        })?;
        items.push(item);
    }
    Ok(items)
}
