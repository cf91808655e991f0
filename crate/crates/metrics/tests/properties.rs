//! Range and symmetry invariants over fuzzed inputs.

use ddvqa_metrics::{auc_eer, bleu4, cider, meteor_lite, rouge_l, ScoredPair};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const WORDS: [&str; 12] = [
    "the", "skin", "eyebrows", "looks", "look", "real", "fake", "because", "blurry",
    "overlapped", "smooth", ",",
];

fn sentence_strategy() -> impl Strategy<Value = String> {
    prop::collection::vec(prop::sample::select(WORDS.to_vec()), 1..12)
        .prop_map(|words| words.join(" "))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn sentence_metrics_stay_in_unit_range(
        candidate in sentence_strategy(),
        refs in prop::collection::vec(sentence_strategy(), 1..4),
    ) {
        for metric in [bleu4(&candidate, &refs), rouge_l(&candidate, &refs), meteor_lite(&candidate, &refs)] {
            prop_assert!((0.0..=1.0).contains(&metric), "out of range: {metric}");
        }
    }

    #[test]
    fn metrics_ignore_reference_order(
        candidate in sentence_strategy(),
        mut refs in prop::collection::vec(sentence_strategy(), 2..4),
    ) {
        let forward = (
            bleu4(&candidate, &refs),
            rouge_l(&candidate, &refs),
            meteor_lite(&candidate, &refs),
        );
        refs.reverse();
        let backward = (
            bleu4(&candidate, &refs),
            rouge_l(&candidate, &refs),
            meteor_lite(&candidate, &refs),
        );
        prop_assert!((forward.0 - backward.0).abs() < 1e-12);
        prop_assert!((forward.1 - backward.1).abs() < 1e-12);
        prop_assert!((forward.2 - backward.2).abs() < 1e-12);
    }

    #[test]
    fn candidate_equal_to_reference_maxes_out(reference in sentence_strategy()) {
        let refs = vec![reference.clone()];
        prop_assert!((bleu4(&reference, &refs) - 1.0).abs() < 1e-12);
        prop_assert!((rouge_l(&reference, &refs) - 1.0).abs() < 1e-12);
        let m = ddvqa_text::normalize_tokens(&reference).len() as f64;
        let meteor_max = 1.0 - 0.5 * (1.0 / m).powi(3);
        prop_assert!((meteor_lite(&reference, &refs) - meteor_max).abs() < 1e-12);
    }

    #[test]
    fn auc_of_negated_scores_complements(
        raw in prop::collection::vec((0u32..1000, any::<bool>()), 8..40)
    ) {
        let scores: Vec<(f64, bool)> = raw.iter().map(|(s, l)| (*s as f64 / 1000.0, *l)).collect();
        let n_pos = scores.iter().filter(|(_, l)| *l).count();
        prop_assume!(n_pos > 0 && n_pos < scores.len());
        // Negation flips every pairwise comparison; ties keep their half
        // credit, so the two AUCs always sum to exactly 1.
        let negated: Vec<(f64, bool)> = scores.iter().map(|(s, l)| (-s, *l)).collect();
        let (auc, _) = auc_eer(&scores).unwrap();
        let (neg_auc, _) = auc_eer(&negated).unwrap();
        prop_assert!((auc + neg_auc - 1.0).abs() < 1e-12);
    }
}

#[test]
fn cider_is_nonnegative_on_fuzzed_corpora() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for _ in 0..20 {
        let pairs: Vec<ScoredPair> = (0..5)
            .map(|i| {
                let sample = |rng: &mut ChaCha8Rng| {
                    let len = rng.gen_range(1..10);
                    (0..len)
                        .map(|_| WORDS[rng.gen_range(0..WORDS.len())])
                        .collect::<Vec<_>>()
                        .join(" ")
                };
                ScoredPair {
                    candidate: sample(&mut rng),
                    references: vec![sample(&mut rng)],
                    image_id: format!("i{i}"),
                    question: String::new(),
                }
            })
            .collect();
        let (scores, mean) = cider(&pairs).unwrap();
        assert!(scores.iter().all(|&s| s >= 0.0));
        assert!(mean >= 0.0);
    }
}

#[test]
fn random_scores_give_half_auc_and_eer() {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let scores: Vec<(f64, bool)> = (0..10_000)
        .map(|_| (rng.gen::<f64>(), rng.gen::<bool>()))
        .collect();
    let (auc, eer) = auc_eer(&scores).unwrap();
    assert!((auc - 0.5).abs() < 0.02, "auc {auc}");
    assert!((eer - 0.5).abs() < 0.02, "eer {eer}");
}
