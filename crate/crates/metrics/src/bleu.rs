//! BLEU-4: geometric mean of clipped n-gram precisions with a brevity
//! penalty. Multi-reference clipping takes the maximum reference count per
//! n-gram. Zero counts at n >= 2 are add-one smoothed so the short
//! template answers do not collapse to zero; a zero unigram precision still
//! yields a zero score.

use std::collections::HashMap;

use crate::tokenize;

fn ngram_counts(tokens: &[String], n: usize) -> HashMap<&[String], usize> {
    let mut counts = HashMap::new();
    if tokens.len() >= n {
        for window in tokens.windows(n) {
            *counts.entry(window).or_insert(0) += 1;
        }
    }
    counts
}

pub fn bleu4(candidate: &str, references: &[String]) -> f64 {
    let cand = tokenize(candidate);
    if cand.is_empty() || references.is_empty() {
        return 0.0;
    }
    let refs: Vec<Vec<String>> = references.iter().map(|r| tokenize(r)).collect();

    let mut log_sum = 0.0;
    for n in 1..=4 {
        let cand_counts = ngram_counts(&cand, n);
        let total: usize = cand_counts.values().sum();
        let mut clipped = 0usize;
        for (gram, &count) in &cand_counts {
            let max_ref = refs
                .iter()
                .map(|r| ngram_counts(r, n).get(gram).copied().unwrap_or(0))
                .max()
                .unwrap_or(0);
            clipped += count.min(max_ref);
        }
        let precision = if n == 1 {
            if total == 0 {
                return 0.0;
            }
            clipped as f64 / total as f64
        } else if clipped == 0 {
            (clipped + 1) as f64 / (total + 1) as f64
        } else {
            clipped as f64 / total as f64
        };
        if precision == 0.0 {
            return 0.0;
        }
        log_sum += precision.ln();
    }

    let c_len = cand.len() as f64;
    // Effective reference length: closest to the candidate, shorter on ties.
    let r_len = refs
        .iter()
        .map(|r| r.len())
        .min_by(|&a, &b| {
            let da = (a as f64 - c_len).abs();
            let db = (b as f64 - c_len).abs();
            da.partial_cmp(&db).unwrap().then(a.cmp(&b))
        })
        .unwrap_or(0) as f64;
    let brevity = if c_len >= r_len {
        1.0
    } else {
        (1.0 - r_len / c_len).exp()
    };
    brevity * (log_sum / 4.0).exp()
}
