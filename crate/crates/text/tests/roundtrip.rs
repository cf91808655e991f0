//! decode(encode(t)) must reproduce the normalized text for in-vocab input.

use ddvqa_text::{normalize_tokens, SequenceKind, Vocabulary, PAD};
use proptest::prelude::*;
use rand::{seq::SliceRandom, Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const WORDS: [&str; 18] = [
    "the", "skin", "eyebrows", "eyes", "nose", "mouth", "looks", "look", "real", "fake",
    "because", "blurry", "overlapped", "smooth", "arched", "color", "inconsistent", ",",
];

#[test]
fn hundred_random_in_vocab_sentences_round_trip() {
    let corpus: Vec<String> = WORDS.iter().map(|w| w.to_string()).collect();
    let vocab = Vocabulary::build(&corpus, 1).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    for _ in 0..100 {
        let len = rng.gen_range(1..=12);
        let sentence: Vec<&str> = (0..len)
            .map(|_| *WORDS.choose(&mut rng).unwrap())
            .collect();
        let text = sentence.join(" ");
        let normalized = normalize_tokens(&text).join(" ");
        let seq = vocab.encode(&text, SequenceKind::Answer);
        assert_eq!(vocab.decode(&seq.ids).unwrap(), normalized);
    }
}

proptest! {
    #[test]
    fn encoded_sequences_never_contain_pad(
        words in prop::collection::vec(prop::sample::select(WORDS.to_vec()), 0..20)
    ) {
        let corpus: Vec<String> = WORDS.iter().map(|w| w.to_string()).collect();
        let vocab = Vocabulary::build(&corpus, 1).unwrap();
        let seq = vocab.encode(&words.join(" "), SequenceKind::Answer);
        prop_assert!(seq.ids.iter().all(|&id| id != PAD));
    }
}
