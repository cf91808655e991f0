//! Tokenizer for the question/answer corpus.
//!
//! The answer language is template-generated and closed-vocabulary, so this
//! is a lowercasing whitespace tokenizer that splits punctuation into its own
//! tokens and induces the vocabulary from the corpus. Five special ids are
//! fixed up front; corpus induction never produces them.

use std::collections::HashMap;
use std::fmt;
use std::io::{BufRead, Write};
use std::path::Path;

pub const PAD: usize = 0;
pub const CLS: usize = 1;
pub const SEP: usize = 2;
pub const UNK: usize = 3;
pub const BOS: usize = 4;

const SPECIALS: [&str; 5] = ["[PAD]", "[CLS]", "[SEP]", "[UNK]", "[BOS]"];

/// Questions are capped at 32 tokens, answers at the 50-token generation cap.
pub const MAX_QUESTION_LEN: usize = 32;
pub const MAX_ANSWER_LEN: usize = 50;

#[derive(Debug, thiserror::Error)]
pub enum TokenizerError {
    #[error("cannot build a vocabulary from an empty corpus")]
    EmptyCorpus,
    #[error("id {id} out of range for vocabulary of size {size}")]
    IdOutOfRange { id: usize, size: usize },
    #[error("vocabulary io: {0}")]
    Io(#[from] std::io::Error),
    #[error("vocabulary file: {0}")]
    Malformed(String),
}

/// Whether a sequence frames a question or an answer; decides the length cap.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SequenceKind {
    Question,
    Answer,
}

impl SequenceKind {
    pub fn max_len(self) -> usize {
        match self {
            SequenceKind::Question => MAX_QUESTION_LEN,
            SequenceKind::Answer => MAX_ANSWER_LEN,
        }
    }
}

/// A framed token-id sequence: `[CLS] t1 .. tk [SEP]`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TokenSequence {
    pub ids: Vec<usize>,
    pub kind: SequenceKind,
}

#[derive(Debug, Clone)]
pub struct Vocabulary {
    token_to_id: HashMap<String, usize>,
    id_to_token: Vec<String>,
}

impl fmt::Display for Vocabulary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Vocabulary({} tokens)", self.id_to_token.len())
    }
}

/// Lowercases and splits text into word and punctuation tokens.
pub fn normalize_tokens(text: &str) -> Vec<String> {
    let mut tokens = Vec::new();
    let mut current = String::new();
    for ch in text.chars() {
        let ch = ch.to_lowercase().next().unwrap_or(ch);
        if ch.is_whitespace() {
            if !current.is_empty() {
                tokens.push(std::mem::take(&mut current));
            }
        } else if ch.is_alphanumeric() {
            current.push(ch);
        } else {
            // Punctuation becomes its own token.
            if !current.is_empty() {
                tokens.push(std::mem::take(&mut current));
            }
            tokens.push(ch.to_string());
        }
    }
    if !current.is_empty() {
        tokens.push(current);
    }
    tokens
}

impl Vocabulary {
    /// Induces a vocabulary from the corpus. Tokens with count >= `min_count`
    /// get ids ordered by descending frequency, ties broken lexicographically,
    /// after the five fixed specials.
    pub fn build(corpus: &[String], min_count: usize) -> Result<Vocabulary, TokenizerError> {
        if corpus.is_empty() {
            return Err(TokenizerError::EmptyCorpus);
        }
        let mut counts: HashMap<String, usize> = HashMap::new();
        for doc in corpus {
            for token in normalize_tokens(doc) {
                *counts.entry(token).or_insert(0) += 1;
            }
        }
        let mut ranked: Vec<(String, usize)> = counts
            .into_iter()
            .filter(|(token, count)| *count >= min_count && !SPECIALS.contains(&token.as_str()))
            .collect();
        ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));

        let mut id_to_token: Vec<String> = SPECIALS.iter().map(|s| s.to_string()).collect();
        id_to_token.extend(ranked.into_iter().map(|(token, _)| token));
        let token_to_id = id_to_token
            .iter()
            .enumerate()
            .map(|(id, token)| (token.clone(), id))
            .collect();
        Ok(Vocabulary {
            token_to_id,
            id_to_token,
        })
    }

    pub fn len(&self) -> usize {
        self.id_to_token.len()
    }

    pub fn is_empty(&self) -> bool {
        false // the specials are always present
    }

    pub fn id_of(&self, token: &str) -> usize {
        self.token_to_id.get(token).copied().unwrap_or(UNK)
    }

    pub fn token_of(&self, id: usize) -> Option<&str> {
        self.id_to_token.get(id).map(String::as_str)
    }

    /// Frames `text` as `[CLS] .. [SEP]`, truncating while keeping the
    /// terminal `[SEP]`.
    pub fn encode(&self, text: &str, kind: SequenceKind) -> TokenSequence {
        let max = kind.max_len();
        let mut ids = vec![CLS];
        ids.extend(normalize_tokens(text).iter().map(|t| self.id_of(t)));
        ids.push(SEP);
        if ids.len() > max {
            ids.truncate(max - 1);
            ids.push(SEP);
        }
        TokenSequence { ids, kind }
    }

    /// Inverse of `encode`: drops specials and joins with single spaces.
    pub fn decode(&self, ids: &[usize]) -> Result<String, TokenizerError> {
        let mut words = Vec::new();
        for &id in ids {
            if id >= self.len() {
                return Err(TokenizerError::IdOutOfRange {
                    id,
                    size: self.len(),
                });
            }
            if id == PAD || id == CLS || id == SEP || id == BOS {
                continue;
            }
            words.push(self.id_to_token[id].clone());
        }
        Ok(words.join(" "))
    }

    /// One token per line, line number = id, specials first.
    pub fn save<P: AsRef<Path>>(&self, path: P) -> Result<(), TokenizerError> {
        let mut file = std::fs::File::create(path)?;
        for token in &self.id_to_token {
            writeln!(file, "{token}")?;
        }
        Ok(())
    }

    pub fn load<P: AsRef<Path>>(path: P) -> Result<Vocabulary, TokenizerError> {
        let file = std::fs::File::open(path)?;
        let mut id_to_token = Vec::new();
        for line in std::io::BufReader::new(file).lines() {
            id_to_token.push(line?);
        }
        for (i, special) in SPECIALS.iter().enumerate() {
            if id_to_token.get(i).map(String::as_str) != Some(*special) {
                return Err(TokenizerError::Malformed(format!(
                    "expected special {special} at line {i}"
                )));
            }
        }
        let token_to_id = id_to_token
            .iter()
            .enumerate()
            .map(|(id, token)| (token.clone(), id))
            .collect();
        Ok(Vocabulary {
            token_to_id,
            id_to_token,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn corpus(docs: &[&str]) -> Vec<String> {
        docs.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn build_includes_words_and_punctuation() {
        let vocab = Vocabulary::build(&corpus(&["the skin looks fake."]), 1).unwrap();
        for token in ["the", "skin", "looks", "fake", "."] {
            assert_ne!(vocab.id_of(token), UNK, "missing {token}");
        }
    }

    #[test]
    fn duplicate_documents_do_not_change_the_vocabulary() {
        let once = Vocabulary::build(&corpus(&["the skin looks fake."]), 1).unwrap();
        let twice =
            Vocabulary::build(&corpus(&["the skin looks fake.", "the skin looks fake."]), 1)
                .unwrap();
        assert_eq!(once.id_to_token, twice.id_to_token);
    }

    #[test]
    fn min_count_threshold_drops_rare_tokens() {
        let vocab =
            Vocabulary::build(&corpus(&["common common rare", "common words words"]), 2).unwrap();
        assert_eq!(vocab.id_of("rare"), UNK);
        assert_ne!(vocab.id_of("common"), UNK);
        let seq = vocab.encode("rare", SequenceKind::Question);
        assert_eq!(seq.ids, vec![CLS, UNK, SEP]);
    }

    #[test]
    fn empty_corpus_is_an_error() {
        assert!(matches!(
            Vocabulary::build(&[], 1),
            Err(TokenizerError::EmptyCorpus)
        ));
    }

    #[test]
    fn encode_frames_with_cls_and_sep() {
        // Frequencies force the table {the:5, skin:6, looks:7, fake:8}.
        let vocab = Vocabulary::build(
            &corpus(&["the the the the skin skin skin looks looks fake"]),
            1,
        )
        .unwrap();
        assert_eq!(vocab.id_of("the"), 5);
        assert_eq!(vocab.id_of("skin"), 6);
        assert_eq!(vocab.id_of("looks"), 7);
        assert_eq!(vocab.id_of("fake"), 8);
        let ids = vocab.encode("the skin looks fake", SequenceKind::Question).ids;
        assert_eq!(ids, vec![1, 5, 6, 7, 8, 2]);
    }

    #[test]
    fn encode_empty_text() {
        let vocab = Vocabulary::build(&corpus(&["anything"]), 1).unwrap();
        assert_eq!(vocab.encode("", SequenceKind::Answer).ids, vec![CLS, SEP]);
    }

    #[test]
    fn unknown_words_map_to_unk() {
        let vocab = Vocabulary::build(&corpus(&["the skin"]), 1).unwrap();
        let ids = vocab.encode("the zzz", SequenceKind::Question).ids;
        assert_eq!(ids, vec![CLS, vocab.id_of("the"), UNK, SEP]);
    }

    #[test]
    fn truncation_preserves_terminal_sep() {
        let words = vec!["w"; 80].join(" ");
        let vocab = Vocabulary::build(&corpus(&[&words]), 1).unwrap();
        let seq = vocab.encode(&words, SequenceKind::Question);
        assert_eq!(seq.ids.len(), MAX_QUESTION_LEN);
        assert_eq!(*seq.ids.last().unwrap(), SEP);
        assert_eq!(seq.ids[0], CLS);
    }

    #[test]
    fn decode_drops_specials_and_joins() {
        let vocab = Vocabulary::build(&corpus(&["the skin"]), 1).unwrap();
        let the = vocab.id_of("the");
        let skin = vocab.id_of("skin");
        assert_eq!(vocab.decode(&[CLS, the, skin, SEP]).unwrap(), "the skin");
        assert_eq!(vocab.decode(&[]).unwrap(), "");
    }

    #[test]
    fn decode_rejects_out_of_range_ids() {
        let vocab = Vocabulary::build(&corpus(&["word"]), 1).unwrap();
        assert!(matches!(
            vocab.decode(&[vocab.len()]),
            Err(TokenizerError::IdOutOfRange { .. })
        ));
    }

    #[test]
    fn vocabulary_construction_is_deterministic() {
        let docs = corpus(&[
            "the skin looks fake because skin looks blurry.",
            "the eyebrows look real because eyebrows look arched.",
        ]);
        let a = Vocabulary::build(&docs, 1).unwrap();
        let b = Vocabulary::build(&docs, 1).unwrap();
        assert_eq!(a.id_to_token, b.id_to_token);
    }

    #[test]
    fn save_load_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("vocab.txt");
        let vocab = Vocabulary::build(&corpus(&["the skin looks fake."]), 1).unwrap();
        vocab.save(&path).unwrap();
        let loaded = Vocabulary::load(&path).unwrap();
        assert_eq!(vocab.id_to_token, loaded.id_to_token);
    }
}
