//! ROUGE-L: longest-common-subsequence F-measure with beta = 1.2, taking
//! the maximum over references.

use crate::tokenize;

const BETA: f64 = 1.2;

fn lcs_len(a: &[String], b: &[String]) -> usize {
    let mut prev = vec![0usize; b.len() + 1];
    let mut curr = vec![0usize; b.len() + 1];
    for x in a {
        for (j, y) in b.iter().enumerate() {
            curr[j + 1] = if x == y {
                prev[j] + 1
            } else {
                prev[j + 1].max(curr[j])
            };
        }
        std::mem::swap(&mut prev, &mut curr);
    }
    prev[b.len()]
}

pub fn rouge_l(candidate: &str, references: &[String]) -> f64 {
    let cand = tokenize(candidate);
    if cand.is_empty() {
        return 0.0;
    }
    references
        .iter()
        .map(|reference| {
            let r = tokenize(reference);
            if r.is_empty() {
                return 0.0;
            }
            let lcs = lcs_len(&cand, &r) as f64;
            let precision = lcs / cand.len() as f64;
            let recall = lcs / r.len() as f64;
            if precision == 0.0 || recall == 0.0 {
                0.0
            } else {
                (1.0 + BETA * BETA) * precision * recall / (recall + BETA * BETA * precision)
            }
        })
        .fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identical_strings_score_one() {
        let refs = vec!["the skin looks fake".to_string()];
        assert!((rouge_l("the skin looks fake", &refs) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn hand_computed_lcs_value() {
        // LCS("the skin fake", "the skin looks fake") = 3; P = 1, R = 0.75.
        let refs = vec!["the skin looks fake".to_string()];
        let got = rouge_l("the skin fake", &refs);
        let (p, r) = (1.0, 0.75);
        let want = (1.0 + 1.44) * p * r / (r + 1.44 * p);
        assert!((got - want).abs() < 1e-12);
    }

    #[test]
    fn disjoint_tokens_score_zero() {
        let refs = vec!["completely different words".to_string()];
        assert_eq!(rouge_l("the skin looks fake", &refs), 0.0);
    }

    #[test]
    fn multi_reference_takes_the_maximum() {
        let refs = vec![
            "unrelated text".to_string(),
            "the skin looks fake".to_string(),
        ];
        assert!((rouge_l("the skin looks fake", &refs) - 1.0).abs() < 1e-12);
    }
}
