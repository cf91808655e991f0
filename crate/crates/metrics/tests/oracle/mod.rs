//! Brute-force reference implementations, written straight from the metric
//! definitions and independent of the library code paths. Shared with the
//! acceptance suite through the frozen expected-value file.

use std::collections::HashMap;

use ddvqa_metrics::ScoredPair;

fn toks(text: &str) -> Vec<String> {
    // Same normalization contract as the tokenizer crate, restated here so
    // the oracle does not share code with what it checks.
    let mut out = Vec::new();
    let mut word = String::new();
    for ch in text.to_lowercase().chars() {
        if ch.is_alphanumeric() {
            word.push(ch);
        } else {
            if !word.is_empty() {
                out.push(word.clone());
                word.clear();
            }
            if !ch.is_whitespace() {
                out.push(ch.to_string());
            }
        }
    }
    if !word.is_empty() {
        out.push(word);
    }
    out
}

fn grams_joined(tokens: &[String], n: usize) -> Vec<String> {
    if tokens.len() < n {
        return Vec::new();
    }
    (0..=tokens.len() - n)
        .map(|i| tokens[i..i + n].join("\u{1f}"))
        .collect()
}

pub fn bleu4(candidate: &str, references: &[String]) -> f64 {
    let c = toks(candidate);
    if c.is_empty() {
        return 0.0;
    }
    let refs: Vec<Vec<String>> = references.iter().map(|r| toks(r)).collect();
    let mut product = 1.0f64;
    for n in 1..=4 {
        let cand_grams = grams_joined(&c, n);
        let total = cand_grams.len();
        let mut cand_counts: HashMap<String, usize> = HashMap::new();
        for g in &cand_grams {
            *cand_counts.entry(g.clone()).or_insert(0) += 1;
        }
        let mut clipped = 0usize;
        for (gram, count) in &cand_counts {
            let mut best = 0usize;
            for r in &refs {
                let hits = grams_joined(r, n).iter().filter(|g| *g == gram).count();
                best = best.max(hits);
            }
            clipped += (*count).min(best);
        }
        let p = if n == 1 {
            clipped as f64 / total as f64
        } else if clipped == 0 {
            1.0 / (total as f64 + 1.0)
        } else {
            clipped as f64 / total as f64
        };
        if p == 0.0 {
            return 0.0;
        }
        product *= p;
    }
    let c_len = c.len() as f64;
    let mut best_ref = f64::INFINITY;
    let mut best_dist = f64::INFINITY;
    for r in &refs {
        let rl = r.len() as f64;
        let dist = (rl - c_len).abs();
        if dist < best_dist || (dist == best_dist && rl < best_ref) {
            best_dist = dist;
            best_ref = rl;
        }
    }
    let bp = if c_len >= best_ref {
        1.0
    } else {
        (1.0 - best_ref / c_len).exp()
    };
    bp * product.powf(0.25)
}

fn lcs_recursive(a: &[String], b: &[String], i: usize, j: usize, memo: &mut HashMap<(usize, usize), usize>) -> usize {
    if i == 0 || j == 0 {
        return 0;
    }
    if let Some(&v) = memo.get(&(i, j)) {
        return v;
    }
    let v = if a[i - 1] == b[j - 1] {
        lcs_recursive(a, b, i - 1, j - 1, memo) + 1
    } else {
        lcs_recursive(a, b, i - 1, j, memo).max(lcs_recursive(a, b, i, j - 1, memo))
    };
    memo.insert((i, j), v);
    v
}

pub fn rouge_l(candidate: &str, references: &[String]) -> f64 {
    let c = toks(candidate);
    if c.is_empty() {
        return 0.0;
    }
    let beta2 = 1.2f64 * 1.2;
    let mut best = 0.0f64;
    for reference in references {
        let r = toks(reference);
        if r.is_empty() {
            continue;
        }
        let mut memo = HashMap::new();
        let lcs = lcs_recursive(&c, &r, c.len(), r.len(), &mut memo) as f64;
        let p = lcs / c.len() as f64;
        let rec = lcs / r.len() as f64;
        let f = if p == 0.0 || rec == 0.0 {
            0.0
        } else {
            (1.0 + beta2) * p * rec / (rec + beta2 * p)
        };
        best = best.max(f);
    }
    best
}

pub fn meteor_lite(candidate: &str, references: &[String]) -> f64 {
    let c = toks(candidate);
    if c.is_empty() {
        return 0.0;
    }
    let mut best = 0.0f64;
    for reference in references {
        let r = toks(reference);
        if r.is_empty() {
            continue;
        }
        // Leftmost alignment.
        let mut taken = vec![false; r.len()];
        let mut alignment = Vec::new();
        for (ci, token) in c.iter().enumerate() {
            for ri in 0..r.len() {
                if !taken[ri] && &r[ri] == token {
                    taken[ri] = true;
                    alignment.push((ci, ri));
                    break;
                }
            }
        }
        if alignment.is_empty() {
            continue;
        }
        let m = alignment.len() as f64;
        let p = m / c.len() as f64;
        let rec = m / r.len() as f64;
        let f_mean = 10.0 * p * rec / (rec + 9.0 * p);
        let mut chunks = 1.0;
        for k in 1..alignment.len() {
            let (pc, pr) = alignment[k - 1];
            let (cc, cr) = alignment[k];
            if cc != pc + 1 || cr != pr + 1 {
                chunks += 1.0;
            }
        }
        best = best.max(f_mean * (1.0 - 0.5 * (chunks / m).powi(3)));
    }
    best
}

pub fn cider(pairs: &[ScoredPair]) -> Vec<f64> {
    let n_docs = pairs.len() as f64;
    let sigma = 6.0f64;
    let mut scores = Vec::new();
    for pair in pairs {
        let c = toks(&pair.candidate);
        let mut per_n_sum = 0.0;
        for n in 1..=4 {
            // Document frequency of each n-gram across pair reference sets.
            let df = |gram: &str| -> f64 {
                let mut count = 0.0;
                for other in pairs {
                    let mut found = false;
                    for r in &other.references {
                        if grams_joined(&toks(r), n).iter().any(|g| g == gram) {
                            found = true;
                        }
                    }
                    if found {
                        count += 1.0;
                    }
                }
                count
            };
            let tfidf = |tokens: &[String]| -> HashMap<String, f64> {
                let mut tf: HashMap<String, f64> = HashMap::new();
                for g in grams_joined(tokens, n) {
                    *tf.entry(g).or_insert(0.0) += 1.0;
                }
                tf.into_iter()
                    .map(|(g, count)| {
                        let idf = n_docs.ln() - df(&g).max(1.0).ln();
                        (g, count * idf)
                    })
                    .collect()
            };
            let vc = tfidf(&c);
            let norm_c: f64 = vc.values().map(|w| w * w).sum::<f64>().sqrt();
            let mut over_refs = 0.0;
            for reference in &pair.references {
                let r = toks(reference);
                let vr = tfidf(&r);
                let norm_r: f64 = vr.values().map(|w| w * w).sum::<f64>().sqrt();
                let mut dot = 0.0;
                for (g, w) in &vc {
                    dot += w * vr.get(g).copied().unwrap_or(0.0);
                }
                let cos = if norm_c == 0.0 || norm_r == 0.0 {
                    0.0
                } else {
                    dot / (norm_c * norm_r)
                };
                let delta = c.len() as f64 - r.len() as f64;
                over_refs += (-(delta * delta) / (2.0 * sigma * sigma)).exp() * cos;
            }
            per_n_sum += over_refs / pair.references.len() as f64;
        }
        scores.push(10.0 * per_n_sum / 4.0);
    }
    scores
}

/// Pairwise-count AUC: every (positive, negative) pair contributes 1 when
/// ranked correctly and 0.5 on a tie.
pub fn auc(scores: &[(f64, bool)]) -> f64 {
    let positives: Vec<f64> = scores.iter().filter(|(_, l)| *l).map(|(s, _)| *s).collect();
    let negatives: Vec<f64> = scores.iter().filter(|(_, l)| !*l).map(|(s, _)| *s).collect();
    let mut credit = 0.0;
    for &p in &positives {
        for &n in &negatives {
            if p > n {
                credit += 1.0;
            } else if p == n {
                credit += 0.5;
            }
        }
    }
    credit / (positives.len() as f64 * negatives.len() as f64)
}

/// EER by solving fpr(t) = fnr(t) on each ROC segment independently.
pub fn eer(scores: &[(f64, bool)]) -> f64 {
    let n_pos = scores.iter().filter(|(_, l)| *l).count() as f64;
    let n_neg = scores.len() as f64 - n_pos;
    let mut thresholds: Vec<f64> = scores.iter().map(|(s, _)| *s).collect();
    thresholds.sort_by(|a, b| b.partial_cmp(a).unwrap());
    thresholds.dedup();

    let mut points = vec![(0.0f64, 1.0f64)]; // (fpr, fnr)
    for &t in &thresholds {
        let tp = scores.iter().filter(|(s, l)| *l && *s >= t).count() as f64;
        let fp = scores.iter().filter(|(s, l)| !*l && *s >= t).count() as f64;
        points.push((fp / n_neg, 1.0 - tp / n_pos));
    }
    for w in points.windows(2) {
        let (f0, m0) = w[0];
        let (f1, m1) = w[1];
        let (d0, d1) = (f0 - m0, f1 - m1);
        if d0 == 0.0 {
            return f0;
        }
        if d0 < 0.0 && d1 >= 0.0 {
            let t = if (d1 - d0) == 0.0 { 0.0 } else { -d0 / (d1 - d0) };
            return f0 + t * (f1 - f0);
        }
    }
    let (f, m) = *points.last().unwrap();
    f.min(m)
}
