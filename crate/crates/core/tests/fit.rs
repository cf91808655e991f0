//! End-to-end training-loop contracts: seed determinism, exact resume, and
//! the ablation equivalence between "lm only" and "contrastive enabled but
//! no mineable triplets".

use std::collections::BTreeMap;

use ddvqa_core::dataset::synth::{generate_synthetic_corpus, SynthConfig};
use ddvqa_core::dataset::{Component, QARecord, Split, Verdict};
use ddvqa_core::model::{DdvqaModel, ModelConfig};
use ddvqa_core::rng::derive;
use ddvqa_core::training::{fit, Ablation, Corpus, FitOptions, TrainConfig};

fn small_corpus(seed: u64) -> Corpus {
    let config = SynthConfig {
        n_images: 10,
        image_size: 16,
        ..SynthConfig::default()
    };
    let (records, synth) = generate_synthetic_corpus(&config, seed).unwrap();
    let images: BTreeMap<_, _> = synth
        .into_iter()
        .map(|s| (s.image_id.clone(), s.image))
        .collect();
    Corpus::new(records, images).unwrap()
}

fn train_config(epochs: usize, ablation: Ablation) -> TrainConfig {
    TrainConfig {
        lr: 1e-3,
        epochs,
        batch_size: 4,
        seed: 5,
        ablation,
        ..TrainConfig::default()
    }
}

fn fresh_model(corpus: &Corpus) -> DdvqaModel {
    let mut rng = derive(5, "init");
    DdvqaModel::new(ModelConfig::tiny(corpus.vocab.len()), &mut rng).unwrap()
}

#[test]
fn same_seed_gives_identical_curves_and_checkpoints() {
    let corpus = small_corpus(3);
    let config = train_config(2, Ablation::full());
    let run = |dir: &std::path::Path| {
        let mut model = fresh_model(&corpus);
        fit(&mut model, &corpus, &config, dir, &FitOptions::default()).unwrap()
    };
    let dir_a = tempfile::tempdir().unwrap();
    let dir_b = tempfile::tempdir().unwrap();
    run(dir_a.path());
    run(dir_b.path());

    let csv_a = std::fs::read(dir_a.path().join("loss.csv")).unwrap();
    let csv_b = std::fs::read(dir_b.path().join("loss.csv")).unwrap();
    assert_eq!(csv_a, csv_b);
    let ckpt_a = std::fs::read(dir_a.path().join("model.ckpt")).unwrap();
    let ckpt_b = std::fs::read(dir_b.path().join("model.ckpt")).unwrap();
    assert_eq!(ckpt_a, ckpt_b);
}

#[test]
fn resume_replays_the_uninterrupted_run_exactly() {
    let corpus = small_corpus(4);

    // Uninterrupted: 4 epochs.
    let full_dir = tempfile::tempdir().unwrap();
    let mut model = fresh_model(&corpus);
    let full = fit(
        &mut model,
        &corpus,
        &train_config(4, Ablation::full()),
        full_dir.path(),
        &FitOptions::default(),
    )
    .unwrap();

    // Interrupted at epoch 2, then resumed to 4 in the same directory.
    let resume_dir = tempfile::tempdir().unwrap();
    let mut model = fresh_model(&corpus);
    fit(
        &mut model,
        &corpus,
        &train_config(2, Ablation::full()),
        resume_dir.path(),
        &FitOptions::default(),
    )
    .unwrap();
    let mut model = fresh_model(&corpus); // replaced entirely by the resume state
    let resumed = fit(
        &mut model,
        &corpus,
        &train_config(4, Ablation::full()),
        resume_dir.path(),
        &FitOptions { resume: true },
    )
    .unwrap();

    assert_eq!(full.curve.len(), resumed.curve.len());
    for (a, b) in full.curve.iter().zip(&resumed.curve) {
        assert!((a.lm - b.lm).abs() < 1e-9, "epoch {}", a.epoch);
        assert!((a.total - b.total).abs() < 1e-9);
        match (a.val_lm, b.val_lm) {
            (Some(x), Some(y)) => assert!((x - y).abs() < 1e-9),
            (None, None) => {}
            other => panic!("val mismatch {other:?}"),
        }
    }
    // Checkpoints agree bit for bit (f64 state, deterministic epochs).
    let ckpt_a = std::fs::read(full_dir.path().join("model.ckpt")).unwrap();
    let ckpt_b = std::fs::read(resume_dir.path().join("model.ckpt")).unwrap();
    assert_eq!(ckpt_a, ckpt_b);
}

/// A corpus where every component carries a single verdict, so no
/// opposite-verdict negative exists and both miners come up empty.
fn tripletless_corpus() -> Corpus {
    let (records, synth) = generate_synthetic_corpus(
        &SynthConfig {
            n_images: 8,
            image_size: 16,
            p_fake: 0.0, // everything real: no opposite verdicts anywhere
            ..SynthConfig::default()
        },
        9,
    )
    .unwrap();
    for r in &records {
        assert_eq!(r.verdict, Verdict::Real);
    }
    let images: BTreeMap<_, _> = synth
        .into_iter()
        .map(|s| (s.image_id.clone(), s.image))
        .collect();
    Corpus::new(records, images).unwrap()
}

#[test]
fn contrastive_path_contributes_exactly_zero_without_triplets() {
    let corpus = tripletless_corpus();
    let run = |ablation: Ablation| {
        let dir = tempfile::tempdir().unwrap();
        let mut model = fresh_model(&corpus);
        let report = fit(
            &mut model,
            &corpus,
            &train_config(2, ablation),
            dir.path(),
            &FitOptions::default(),
        )
        .unwrap();
        let bytes = std::fs::read(dir.path().join("model.ckpt")).unwrap();
        (report, bytes)
    };
    let (lm_report, lm_bytes) = run(Ablation::lm_only());
    let (full_report, full_bytes) = run(Ablation::full());
    assert_eq!(lm_bytes, full_bytes, "checkpoints must be byte-identical");
    for (a, b) in lm_report.curve.iter().zip(&full_report.curve) {
        assert_eq!(a.lm.to_bits(), b.lm.to_bits());
        assert_eq!(b.text_cl, 0.0);
        assert_eq!(b.image_cl, 0.0);
    }
}

#[test]
fn ablation_lm_only_zeroes_contrastive_columns_even_with_triplets() {
    let corpus = small_corpus(6);
    let dir = tempfile::tempdir().unwrap();
    let mut model = fresh_model(&corpus);
    let report = fit(
        &mut model,
        &corpus,
        &train_config(2, Ablation::lm_only()),
        dir.path(),
        &FitOptions::default(),
    )
    .unwrap();
    for row in &report.curve {
        assert_eq!(row.text_cl, 0.0);
        assert_eq!(row.image_cl, 0.0);
    }
    let csv = std::fs::read_to_string(dir.path().join("loss.csv")).unwrap();
    assert!(csv.starts_with("epoch,lm,text_cl,image_cl,total,val_lm"));
}

#[test]
fn epoch_zero_training_keeps_initial_weights() {
    let corpus = small_corpus(7);
    let dir = tempfile::tempdir().unwrap();
    let mut model = fresh_model(&corpus);
    let before: Vec<Vec<f64>> = model
        .named_parameters()
        .iter()
        .map(|(_, t)| t.data().to_vec())
        .collect();
    fit(
        &mut model,
        &corpus,
        &train_config(0, Ablation::full()),
        dir.path(),
        &FitOptions::default(),
    )
    .unwrap();
    let after: Vec<Vec<f64>> = model
        .named_parameters()
        .iter()
        .map(|(_, t)| t.data().to_vec())
        .collect();
    assert_eq!(before, after);
    assert!(dir.path().join("model.ckpt").exists());
}

#[test]
fn corpus_record_indexing_is_consistent() {
    let corpus = small_corpus(8);
    let train = corpus.indices_of(Split::Train);
    let test = corpus.indices_of(Split::Test);
    assert_eq!(train.len() + test.len(), corpus.records.len());
    for &idx in &train {
        assert_eq!(corpus.records[idx].split, Split::Train);
    }
    let general: Vec<&QARecord> = corpus
        .records
        .iter()
        .filter(|r| r.component == Component::WholeFace)
        .collect();
    assert!(!general.is_empty());
}
