//! CIDEr: tf-idf weighted n-gram cosine similarity between candidate and
//! references, length-penalized, averaged over n = 1..4 and scaled by 10.
//! IDF comes from the reference corpus; a document is one pair's reference
//! set, so at least two pairs are required for IDF to be meaningful.

use std::collections::HashMap;

use crate::{tokenize, MetricsError, ScoredPair};

const SIGMA: f64 = 6.0;

type Grams = HashMap<Vec<String>, f64>;

fn ngram_tf(tokens: &[String], n: usize) -> Grams {
    let mut counts = Grams::new();
    if tokens.len() >= n {
        for window in tokens.windows(n) {
            *counts.entry(window.to_vec()).or_insert(0.0) += 1.0;
        }
    }
    counts
}

fn weighted(tf: &Grams, doc_freq: &Grams, log_corpus: f64) -> (Grams, f64) {
    let mut vec = Grams::new();
    let mut norm = 0.0;
    for (gram, &count) in tf {
        let df = doc_freq.get(gram).copied().unwrap_or(0.0).max(1.0);
        let w = count * (log_corpus - df.ln());
        norm += w * w;
        vec.insert(gram.clone(), w);
    }
    (vec, norm.sqrt())
}

fn cosine(a: &(Grams, f64), b: &(Grams, f64)) -> f64 {
    if a.1 == 0.0 || b.1 == 0.0 {
        return 0.0;
    }
    let mut dot = 0.0;
    for (gram, &w) in &a.0 {
        if let Some(&v) = b.0.get(gram) {
            dot += w * v;
        }
    }
    dot / (a.1 * b.1)
}

/// Per-pair CIDEr scores and their mean.
pub fn cider(pairs: &[ScoredPair]) -> Result<(Vec<f64>, f64), MetricsError> {
    if pairs.len() < 2 {
        return Err(MetricsError::DegenerateIdf(pairs.len()));
    }
    for pair in pairs {
        if pair.references.is_empty() {
            return Err(MetricsError::NoReferences);
        }
    }
    let log_corpus = (pairs.len() as f64).ln();

    // Document frequency per n: how many pairs contain the n-gram in any
    // reference.
    let mut doc_freq: Vec<Grams> = vec![Grams::new(); 4];
    for pair in pairs {
        for n in 1..=4 {
            let mut seen = std::collections::HashSet::new();
            for reference in &pair.references {
                let toks = tokenize(reference);
                if toks.len() >= n {
                    for window in toks.windows(n) {
                        seen.insert(window.to_vec());
                    }
                }
            }
            for gram in seen {
                *doc_freq[n - 1].entry(gram).or_insert(0.0) += 1.0;
            }
        }
    }

    let mut scores = Vec::with_capacity(pairs.len());
    for pair in pairs {
        let cand_tokens = tokenize(&pair.candidate);
        let mut total = 0.0;
        for n in 1..=4 {
            let cand_vec = weighted(&ngram_tf(&cand_tokens, n), &doc_freq[n - 1], log_corpus);
            let mut per_ref = 0.0;
            for reference in &pair.references {
                let ref_tokens = tokenize(reference);
                let ref_vec = weighted(&ngram_tf(&ref_tokens, n), &doc_freq[n - 1], log_corpus);
                let delta = cand_tokens.len() as f64 - ref_tokens.len() as f64;
                let penalty = (-(delta * delta) / (2.0 * SIGMA * SIGMA)).exp();
                per_ref += penalty * cosine(&cand_vec, &ref_vec);
            }
            total += per_ref / pair.references.len() as f64;
        }
        scores.push(10.0 * total / 4.0);
    }
    let mean = scores.iter().sum::<f64>() / scores.len() as f64;
    Ok((scores, mean))
}
