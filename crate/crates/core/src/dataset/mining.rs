//! Contrastive triplet mining over the answer text: for text triplets the
//! negative is an answer on the same facial component with the opposite
//! verdict; for image triplets the positive is a different image sharing a
//! reason phrase on the same component and the negative an image whose
//! same-component answer has the opposite verdict.
//!
//! Candidate-set functions are exposed separately from the samplers so the
//! indexed miner can be checked against an exhaustive scan.

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::{canonical_phrase, Component, QARecord, Verdict};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum TripletModality {
    Text,
    Image,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct TripletRef {
    pub record_idx: usize,
    pub image_id: String,
    pub component: Component,
    pub answer_idx: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ContrastiveTriplet {
    pub modality: TripletModality,
    pub anchor: TripletRef,
    pub positive: TripletRef,
    pub negative: TripletRef,
}

/// Reason phrases of a rendered answer, canonicalized. Parses the template
/// back: everything after "because <noun> look(s) " split on commas.
pub fn reason_phrases(answer: &str) -> Vec<String> {
    let Some((_, clause)) = answer.split_once(" because ") else {
        return Vec::new();
    };
    let clause = clause.trim_end_matches('.');
    let mut words = clause.splitn(3, ' ');
    let _noun = words.next();
    let _verb = words.next();
    let Some(reasons) = words.next() else {
        return Vec::new();
    };
    reasons
        .split(',')
        .map(canonical_phrase)
        .filter(|p| !p.is_empty())
        .collect()
}

/// All reason phrases across a record's answers, deduplicated, sorted.
pub fn record_phrases(record: &QARecord) -> Vec<String> {
    let mut phrases: BTreeSet<String> = BTreeSet::new();
    for answer in &record.answers {
        phrases.extend(reason_phrases(answer));
    }
    phrases.into_iter().collect()
}

/// Inverted indexes over a corpus for triplet mining.
pub struct TripletIndex {
    /// (component, verdict) -> (record_idx, answer_idx) pairs.
    by_component_verdict: BTreeMap<(Component, Verdict), Vec<(usize, usize)>>,
    /// (component, phrase) -> record indexes containing the phrase.
    by_phrase: BTreeMap<(Component, String), Vec<usize>>,
}

impl TripletIndex {
    pub fn build(records: &[QARecord]) -> TripletIndex {
        let mut by_component_verdict: BTreeMap<(Component, Verdict), Vec<(usize, usize)>> =
            BTreeMap::new();
        let mut by_phrase: BTreeMap<(Component, String), Vec<usize>> = BTreeMap::new();
        for (idx, record) in records.iter().enumerate() {
            for answer_idx in 0..record.answers.len() {
                by_component_verdict
                    .entry((record.component, record.verdict))
                    .or_default()
                    .push((idx, answer_idx));
            }
            for phrase in record_phrases(record) {
                by_phrase
                    .entry((record.component, phrase))
                    .or_default()
                    .push(idx);
            }
        }
        TripletIndex {
            by_component_verdict,
            by_phrase,
        }
    }

    /// Text negatives: any answer on the anchor's component with the
    /// opposite verdict.
    pub fn text_negative_candidates(&self, anchor: &QARecord) -> Vec<(usize, usize)> {
        self.by_component_verdict
            .get(&(anchor.component, anchor.verdict.opposite()))
            .cloned()
            .unwrap_or_default()
    }

    /// Image positives: different images sharing at least one reason phrase
    /// on the same component.
    pub fn image_positive_candidates(&self, anchor_idx: usize, records: &[QARecord]) -> Vec<usize> {
        let anchor = &records[anchor_idx];
        let mut out = BTreeSet::new();
        for phrase in record_phrases(anchor) {
            if let Some(hits) = self.by_phrase.get(&(anchor.component, phrase)) {
                for &idx in hits {
                    if records[idx].image_id != anchor.image_id {
                        out.insert(idx);
                    }
                }
            }
        }
        out.into_iter().collect()
    }

    /// Image negatives: records on the same component with the opposite
    /// verdict (necessarily different images after quality filtering).
    pub fn image_negative_candidates(&self, anchor: &QARecord) -> Vec<usize> {
        let mut out: Vec<usize> = self
            .by_component_verdict
            .get(&(anchor.component, anchor.verdict.opposite()))
            .map(|v| v.iter().map(|(idx, _)| *idx).collect())
            .unwrap_or_default();
        out.dedup();
        out
    }
}

fn make_ref(records: &[QARecord], idx: usize, answer_idx: usize) -> TripletRef {
    TripletRef {
        record_idx: idx,
        image_id: records[idx].image_id.clone(),
        component: records[idx].component,
        answer_idx,
    }
}

/// Anchor is the record's first answer; the positive is drawn uniformly
/// from the record's own candidate answers, the negative uniformly from the
/// opposite-verdict answers on the same component. None when no negative
/// exists.
pub fn mine_text_triplet(
    anchor_idx: usize,
    records: &[QARecord],
    index: &TripletIndex,
    rng: &mut ChaCha8Rng,
) -> Option<ContrastiveTriplet> {
    let anchor = &records[anchor_idx];
    let negatives = index.text_negative_candidates(anchor);
    if negatives.is_empty() {
        return None;
    }
    let positive_idx = rng.gen_range(0..anchor.answers.len());
    let &(neg_record, neg_answer) = negatives.choose(rng).expect("non-empty");
    Some(ContrastiveTriplet {
        modality: TripletModality::Text,
        anchor: make_ref(records, anchor_idx, 0),
        positive: make_ref(records, anchor_idx, positive_idx),
        negative: make_ref(records, neg_record, neg_answer),
    })
}

/// None when either the shared-phrase positive or the opposite-verdict
/// negative is missing.
pub fn mine_image_triplet(
    anchor_idx: usize,
    records: &[QARecord],
    index: &TripletIndex,
    rng: &mut ChaCha8Rng,
) -> Option<ContrastiveTriplet> {
    let anchor = &records[anchor_idx];
    let positives = index.image_positive_candidates(anchor_idx, records);
    let negatives = index.image_negative_candidates(anchor);
    if positives.is_empty() || negatives.is_empty() {
        return None;
    }
    let &pos = positives.choose(rng).expect("non-empty");
    let &neg = negatives.choose(rng).expect("non-empty");
    Some(ContrastiveTriplet {
        modality: TripletModality::Image,
        anchor: make_ref(records, anchor_idx, 0),
        positive: make_ref(records, pos, 0),
        negative: make_ref(records, neg, 0),
    })
}

/// Brute-force candidate sets, computed without any index. The acceptance
/// suite requires these to match the indexed miner exactly on corpora of up
/// to 50 records.
pub mod exhaustive {
    use super::*;

    pub fn text_negative_candidates(
        anchor_idx: usize,
        records: &[QARecord],
    ) -> Vec<(usize, usize)> {
        let anchor = &records[anchor_idx];
        let mut out = Vec::new();
        for (idx, record) in records.iter().enumerate() {
            if record.component == anchor.component && record.verdict != anchor.verdict {
                for answer_idx in 0..record.answers.len() {
                    out.push((idx, answer_idx));
                }
            }
        }
        out
    }

    pub fn image_positive_candidates(anchor_idx: usize, records: &[QARecord]) -> Vec<usize> {
        let anchor = &records[anchor_idx];
        let anchor_phrases = record_phrases(anchor);
        let mut out = Vec::new();
        for (idx, record) in records.iter().enumerate() {
            if record.image_id == anchor.image_id || record.component != anchor.component {
                continue;
            }
            let phrases = record_phrases(record);
            if anchor_phrases.iter().any(|p| phrases.contains(p)) {
                out.push(idx);
            }
        }
        out
    }

    pub fn image_negative_candidates(anchor_idx: usize, records: &[QARecord]) -> Vec<usize> {
        let anchor = &records[anchor_idx];
        records
            .iter()
            .enumerate()
            .filter(|(_, r)| r.component == anchor.component && r.verdict != anchor.verdict)
            .map(|(idx, _)| idx)
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{render_answer, Manipulation, Split};
    use crate::rng::derive;

    fn record(
        image: &str,
        component: Component,
        verdict: Verdict,
        reasons: &[&str],
    ) -> QARecord {
        let reason_strings: Vec<String> = reasons.iter().map(|r| r.to_string()).collect();
        QARecord {
            image_id: image.to_string(),
            question: String::new(),
            component,
            answers: vec![render_answer(component, verdict, &reason_strings).unwrap()],
            verdict,
            split: Split::Train,
            manipulation: Manipulation::Deepfakes,
        }
    }

    #[test]
    fn phrases_parse_back_from_the_template() {
        let answer = render_answer(
            Component::Skin,
            Verdict::Fake,
            &["blurry".into(), "inconsistent color".into()],
        )
        .unwrap();
        assert_eq!(reason_phrases(&answer), vec!["blurry", "inconsistent color"]);
        assert!(reason_phrases("The nose looks real.").is_empty());
    }

    #[test]
    fn text_triplet_uses_opposite_verdict_same_component() {
        let records = vec![
            record("i0", Component::Eyebrows, Verdict::Fake, &["overlapped"]),
            record("i1", Component::Eyebrows, Verdict::Real, &["arched"]),
            record("i2", Component::Skin, Verdict::Real, &["smooth"]),
        ];
        let index = TripletIndex::build(&records);
        let mut rng = derive(1, "mine");
        let triplet = mine_text_triplet(0, &records, &index, &mut rng).unwrap();
        assert_eq!(triplet.negative.record_idx, 1);
        assert_eq!(triplet.positive.record_idx, 0);
        assert_eq!(triplet.anchor.record_idx, 0);
    }

    #[test]
    fn single_answer_record_positive_is_the_anchor_answer() {
        let records = vec![
            record("i0", Component::Nose, Verdict::Fake, &["unnaturally curved"]),
            record("i1", Component::Nose, Verdict::Real, &["straight"]),
        ];
        let index = TripletIndex::build(&records);
        let mut rng = derive(2, "mine");
        let triplet = mine_text_triplet(0, &records, &index, &mut rng).unwrap();
        assert_eq!(triplet.positive.record_idx, 0);
        assert_eq!(triplet.positive.answer_idx, 0);
    }

    #[test]
    fn missing_negative_yields_none() {
        let records = vec![
            record("i0", Component::Nose, Verdict::Fake, &["unnaturally curved"]),
            record("i1", Component::Skin, Verdict::Real, &["smooth"]),
        ];
        let index = TripletIndex::build(&records);
        let mut rng = derive(3, "mine");
        assert!(mine_text_triplet(0, &records, &index, &mut rng).is_none());
    }

    #[test]
    fn image_triplet_shares_phrase_and_opposes_verdict() {
        let records = vec![
            record("i0", Component::Eyebrows, Verdict::Fake, &["overlapped"]),
            record("i1", Component::Eyebrows, Verdict::Fake, &["overlapped"]),
            record("i2", Component::Eyebrows, Verdict::Real, &["arched"]),
        ];
        let index = TripletIndex::build(&records);
        let mut rng = derive(4, "mine");
        let triplet = mine_image_triplet(0, &records, &index, &mut rng).unwrap();
        assert_eq!(triplet.positive.record_idx, 1);
        assert_eq!(triplet.negative.record_idx, 2);
    }

    #[test]
    fn unique_phrase_yields_no_image_triplet() {
        let records = vec![
            record("i0", Component::Eyebrows, Verdict::Fake, &["broken"]),
            record("i1", Component::Eyebrows, Verdict::Fake, &["overlapped"]),
            record("i2", Component::Eyebrows, Verdict::Real, &["arched"]),
        ];
        let index = TripletIndex::build(&records);
        let mut rng = derive(5, "mine");
        assert!(mine_image_triplet(0, &records, &index, &mut rng).is_none());
    }

    #[test]
    fn indexed_candidates_match_exhaustive_scan() {
        // A 20-record corpus across components, verdicts and shared phrases.
        let mut records = Vec::new();
        let phrases: [&[&str]; 4] = [
            &["overlapped"],
            &["overlapped", "blurry"],
            &["broken"],
            &["blurry"],
        ];
        for i in 0..20 {
            let component = [Component::Eyebrows, Component::Skin, Component::Eyes]
                [i % 3];
            let verdict = if i % 4 == 0 { Verdict::Real } else { Verdict::Fake };
            let reasons: &[&str] = if verdict == Verdict::Real {
                &["arched"]
            } else {
                phrases[i % 4]
            };
            records.push(record(&format!("img{i}"), component, verdict, reasons));
        }
        let index = TripletIndex::build(&records);
        for anchor in 0..records.len() {
            assert_eq!(
                index.text_negative_candidates(&records[anchor]),
                exhaustive::text_negative_candidates(anchor, &records),
                "text negatives for {anchor}"
            );
            assert_eq!(
                index.image_positive_candidates(anchor, &records),
                exhaustive::image_positive_candidates(anchor, &records),
                "image positives for {anchor}"
            );
            assert_eq!(
                index.image_negative_candidates(&records[anchor]),
                exhaustive::image_negative_candidates(anchor, &records),
                "image negatives for {anchor}"
            );
        }
    }
}
