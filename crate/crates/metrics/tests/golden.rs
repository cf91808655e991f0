//! The 10-pair golden corpus. Every metric is recomputed here by a
//! brute-force oracle written straight from its formula, compared against
//! the library implementation, and pinned to the committed values in
//! `fixtures/golden_expected.json`.

mod oracle;

use ddvqa_metrics::{auc_eer, bleu4, cider, meteor_lite, rouge_l, ScoredPair};
use serde::Deserialize;

#[derive(Deserialize)]
struct GoldenRow {
    image_id: String,
    question: String,
    candidate: String,
    references: Vec<String>,
    score: f64,
    label: bool,
}

#[derive(Deserialize)]
struct Expected {
    bleu4: Vec<f64>,
    rouge_l: Vec<f64>,
    meteor_lite: Vec<f64>,
    cider: Vec<f64>,
    cider_mean: f64,
    auc: f64,
    eer: f64,
}

fn load_golden() -> (Vec<ScoredPair>, Vec<(f64, bool)>) {
    let raw = include_str!("fixtures/golden.jsonl");
    let mut pairs = Vec::new();
    let mut scores = Vec::new();
    for line in raw.lines().filter(|l| !l.trim().is_empty()) {
        let row: GoldenRow = serde_json::from_str(line).expect("malformed golden row");
        pairs.push(ScoredPair {
            candidate: row.candidate,
            references: row.references,
            image_id: row.image_id,
            question: row.question,
        });
        scores.push((row.score, row.label));
    }
    assert_eq!(pairs.len(), 10);
    (pairs, scores)
}

fn load_expected() -> Expected {
    serde_json::from_str(include_str!("fixtures/golden_expected.json")).unwrap()
}

#[test]
fn implementations_match_oracles_and_frozen_values() {
    let (pairs, scores) = load_golden();
    let expected = load_expected();

    let (cider_scores, cider_mean) = cider(&pairs).unwrap();
    let oracle_cider = oracle::cider(&pairs);

    for (i, pair) in pairs.iter().enumerate() {
        let impl_bleu = bleu4(&pair.candidate, &pair.references);
        let impl_rouge = rouge_l(&pair.candidate, &pair.references);
        let impl_meteor = meteor_lite(&pair.candidate, &pair.references);

        let orc_bleu = oracle::bleu4(&pair.candidate, &pair.references);
        let orc_rouge = oracle::rouge_l(&pair.candidate, &pair.references);
        let orc_meteor = oracle::meteor_lite(&pair.candidate, &pair.references);

        assert!((impl_bleu - orc_bleu).abs() < 1e-12, "bleu4 row {i}");
        assert!((impl_rouge - orc_rouge).abs() < 1e-12, "rouge_l row {i}");
        assert!((impl_meteor - orc_meteor).abs() < 1e-12, "meteor row {i}");
        assert!((cider_scores[i] - oracle_cider[i]).abs() < 1e-12, "cider row {i}");

        assert!(
            (impl_bleu - expected.bleu4[i]).abs() < 1e-9,
            "bleu4 row {i}: {impl_bleu} vs frozen {}",
            expected.bleu4[i]
        );
        assert!((impl_rouge - expected.rouge_l[i]).abs() < 1e-9, "rouge_l row {i}");
        assert!(
            (impl_meteor - expected.meteor_lite[i]).abs() < 1e-9,
            "meteor row {i}"
        );
        assert!((cider_scores[i] - expected.cider[i]).abs() < 1e-9, "cider row {i}");
    }
    assert!((cider_mean - expected.cider_mean).abs() < 1e-9);

    let (auc, eer) = auc_eer(&scores).unwrap();
    let orc_auc = oracle::auc(&scores);
    let orc_eer = oracle::eer(&scores);
    assert!((auc - orc_auc).abs() < 1e-12, "auc {auc} vs oracle {orc_auc}");
    assert!((eer - orc_eer).abs() < 1e-12, "eer {eer} vs oracle {orc_eer}");
    assert!((auc - expected.auc).abs() < 1e-9);
    assert!((eer - expected.eer).abs() < 1e-9);
}

// Prints the oracle values; used once to freeze golden_expected.json.
#[test]
#[ignore]
fn print_oracle_values() {
    let (pairs, scores) = load_golden();
    let bleu: Vec<f64> = pairs
        .iter()
        .map(|p| oracle::bleu4(&p.candidate, &p.references))
        .collect();
    let rouge: Vec<f64> = pairs
        .iter()
        .map(|p| oracle::rouge_l(&p.candidate, &p.references))
        .collect();
    let meteor: Vec<f64> = pairs
        .iter()
        .map(|p| oracle::meteor_lite(&p.candidate, &p.references))
        .collect();
    let cider_scores = oracle::cider(&pairs);
    let mean = cider_scores.iter().sum::<f64>() / cider_scores.len() as f64;
    println!("{{");
    println!("  \"bleu4\": {:?},", bleu);
    println!("  \"rouge_l\": {:?},", rouge);
    println!("  \"meteor_lite\": {:?},", meteor);
    println!("  \"cider\": {:?},", cider_scores);
    println!("  \"cider_mean\": {:?},", mean);
    println!("  \"auc\": {:?},", oracle::auc(&scores));
    println!("  \"eer\": {:?}", oracle::eer(&scores));
    println!("}}");
}
