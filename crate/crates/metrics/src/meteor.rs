//! METEOR-lite: exact-unigram alignment only, no stemming or synonymy.
//! Candidate tokens match the leftmost unused reference occurrence;
//! F_mean = 10PR / (R + 9P), fragmentation penalty 0.5 * (chunks/matches)^3.

use crate::tokenize;

fn score_against(cand: &[String], reference: &[String]) -> f64 {
    // Leftmost-match alignment: candidate order, earliest free ref slot.
    let mut used = vec![false; reference.len()];
    let mut matched: Vec<(usize, usize)> = Vec::new();
    for (ci, token) in cand.iter().enumerate() {
        if let Some(ri) = reference
            .iter()
            .enumerate()
            .position(|(ri, r)| !used[ri] && r == token)
        {
            used[ri] = true;
            matched.push((ci, ri));
        }
    }
    let m = matched.len() as f64;
    if matched.is_empty() {
        return 0.0;
    }
    let precision = m / cand.len() as f64;
    let recall = m / reference.len() as f64;
    let f_mean = 10.0 * precision * recall / (recall + 9.0 * precision);

    let mut chunks = 1usize;
    for window in matched.windows(2) {
        let (c0, r0) = window[0];
        let (c1, r1) = window[1];
        if c1 != c0 + 1 || r1 != r0 + 1 {
            chunks += 1;
        }
    }
    let penalty = 0.5 * (chunks as f64 / m).powi(3);
    f_mean * (1.0 - penalty)
}

pub fn meteor_lite(candidate: &str, references: &[String]) -> f64 {
    let cand = tokenize(candidate);
    if cand.is_empty() {
        return 0.0;
    }
    references
        .iter()
        .map(|r| {
            let reference = tokenize(r);
            if reference.is_empty() {
                0.0
            } else {
                score_against(&cand, &reference)
            }
        })
        .fold(0.0, f64::max)
}
