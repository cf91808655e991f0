//! Command implementations. Every run directory receives the fully
//! resolved configuration; timestamps go only to `run.log` so all primary
//! outputs are byte-reproducible from the same seed.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};

use ddvqa_core::dataset::synth::{
    generate_synthetic_corpus, overfit_corpus, placeholder_face, ArtifactKind, SynthConfig,
};
use ddvqa_core::dataset::{
    build_corpus, corpus_stats, read_jsonl, write_jsonl, Manipulation, QARecord, RawAnnotation,
    Split,
};
use ddvqa_core::fusion::{
    aggregate, benchmark, write_benchmark_csv, BenchmarkConfig, DetectorCorpus, LabelledImage,
};
use ddvqa_core::image::FaceImage;
use ddvqa_core::inference::{
    export_attention, generate as generate_answer, write_attention_export,
    write_generation_jsonl, GenerationRow,
};
use ddvqa_core::model::{load_model, vocab_fingerprint, DdvqaModel, ModelConfig};
use ddvqa_core::rng::derive;
use ddvqa_core::training::{fit, Ablation, Corpus, FitOptions, TrainConfig};
use ddvqa_metrics::{evaluate_corpus, EvalItem, Label, Prediction, ScoredPair};
use ddvqa_text::Vocabulary;

use crate::CommonArgs;

fn resolve_out(common: &CommonArgs, default_name: &str) -> Result<PathBuf> {
    if let Some(out) = &common.out {
        return Ok(out.clone());
    }
    let root = std::env::var("DDVQA_OUT_ROOT")
        .map_err(|_| anyhow!("--out not given and DDVQA_OUT_ROOT is unset"))?;
    Ok(PathBuf::from(root).join(default_name))
}

fn append_run_log(dir: &Path, message: &str) -> Result<()> {
    let mut file = std::fs::OpenOptions::new()
        .create(true)
        .append(true)
        .open(dir.join("run.log"))?;
    let now = std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0);
    writeln!(file, "{now} {message}")?;
    Ok(())
}

// ── build-dataset ───────────────────────────────────────────────────

pub fn build_dataset(
    common: CommonArgs,
    synthetic: bool,
    raw: Option<PathBuf>,
    n: usize,
    image_size: usize,
    artifacts: &str,
    p_fake: f64,
) -> Result<()> {
    let out = resolve_out(&common, "dataset")?;
    std::fs::create_dir_all(&out)?;
    append_run_log(&out, "build-dataset start")?;

    let (records, images): (Vec<QARecord>, BTreeMap<String, FaceImage>) = if synthetic {
        let kinds = match artifacts {
            "all" => ArtifactKind::ALL.to_vec(),
            "base" => ArtifactKind::base_set(),
            "held-out" => ArtifactKind::held_out_set(),
            other => bail!("unknown artifact pool {other:?}; expected all, base or held-out"),
        };
        let config = SynthConfig {
            n_images: n,
            p_fake,
            image_size,
            artifact_kinds: kinds,
            id_prefix: format!("synth{}", common.seed),
        };
        let (records, synth_images) = generate_synthetic_corpus(&config, common.seed)?;
        let images = synth_images
            .into_iter()
            .map(|s| (s.image_id.clone(), s.image))
            .collect();
        (records, images)
    } else {
        let raw_path = raw.ok_or_else(|| anyhow!("either --synthetic or --raw FILE required"))?;
        let rows: Vec<RawAnnotation> =
            read_jsonl(&raw_path).with_context(|| format!("reading {}", raw_path.display()))?;
        let mut rng = derive(common.seed, "build-dataset");
        let (records, drop_log) = build_corpus(&rows, &mut rng)?;
        write_jsonl(out.join("drop_log.jsonl"), &drop_log.dropped)?;
        // Raw mode has no pixels; synthesize a stable placeholder face per
        // image id so the downstream pipeline has images to read.
        let mut images = BTreeMap::new();
        for record in &records {
            if !images.contains_key(&record.image_id) {
                images.insert(
                    record.image_id.clone(),
                    placeholder_face(&record.image_id, image_size),
                );
            }
        }
        (records, images)
    };

    write_jsonl(out.join("dataset.jsonl"), &records)?;
    let image_dir = out.join("images");
    std::fs::create_dir_all(&image_dir)?;
    for (image_id, image) in &images {
        image.save(image_dir.join(format!("{image_id}.img")))?;
    }
    let stats = corpus_stats(&records);
    std::fs::write(out.join("stats.json"), serde_json::to_string_pretty(&stats)?)?;
    append_run_log(&out, "build-dataset done")?;
    println!(
        "dataset: {} qa pairs over {} images ({} train / {} test) -> {}",
        stats.total_qa_pairs,
        stats.total_images,
        stats.train_pairs,
        stats.test_pairs,
        out.display()
    );
    Ok(())
}

// ── dataset loading ─────────────────────────────────────────────────

fn load_dataset(dir: &Path) -> Result<(Vec<QARecord>, BTreeMap<String, FaceImage>)> {
    let records: Vec<QARecord> = read_jsonl(dir.join("dataset.jsonl"))
        .with_context(|| format!("reading {}", dir.join("dataset.jsonl").display()))?;
    let mut images = BTreeMap::new();
    for record in &records {
        if !images.contains_key(&record.image_id) {
            let path = dir.join("images").join(format!("{}.img", record.image_id));
            let image = FaceImage::load(&path)
                .with_context(|| format!("loading image {}", path.display()))?;
            images.insert(record.image_id.clone(), image);
        }
    }
    Ok((records, images))
}

// ── train ───────────────────────────────────────────────────────────

#[allow(clippy::too_many_arguments)]
pub fn train(
    common: CommonArgs,
    dataset: Option<PathBuf>,
    config_path: Option<PathBuf>,
    epochs: Option<usize>,
    ablation: Option<String>,
    d_model: Option<usize>,
    overfit: bool,
    resume: bool,
) -> Result<()> {
    let out = resolve_out(&common, "train-run")?;
    std::fs::create_dir_all(&out)?;
    append_run_log(&out, "train start")?;

    let mut train_config = match &config_path {
        Some(path) => TrainConfig::from_kv_file(path)
            .with_context(|| format!("config {}", path.display()))?,
        None => TrainConfig::default(),
    };
    // Flags override the file.
    train_config.seed = common.seed;
    if let Some(e) = epochs {
        train_config.epochs = e;
    }
    if let Some(a) = &ablation {
        train_config.ablation = Ablation::parse(a)?;
    }

    let (records, images) = if overfit {
        let (records, synth_images) = overfit_corpus();
        let images = synth_images
            .into_iter()
            .map(|s| (s.image_id.clone(), s.image))
            .collect();
        // The committed overfit recipe.
        train_config.epochs = epochs.unwrap_or(200);
        train_config.batch_size = 2;
        train_config.lr = 3e-3;
        train_config.ablation = ablation
            .as_deref()
            .map(Ablation::parse)
            .transpose()?
            .unwrap_or(Ablation::lm_only());
        (records, images)
    } else {
        let dataset = dataset.expect("clap enforces --dataset unless --overfit");
        load_dataset(&dataset)?
    };

    let corpus = Corpus::new(records, images)?;
    let mut model_config = if overfit {
        let mut cfg = ModelConfig::desk(corpus.vocab.len());
        cfg.d_model = 64;
        cfg.image_height = 32;
        cfg.image_width = 32;
        cfg
    } else {
        let sample = corpus
            .images
            .values()
            .next()
            .ok_or_else(|| anyhow!("dataset has no images"))?;
        let mut cfg = ModelConfig::desk(corpus.vocab.len());
        cfg.image_height = sample.height;
        cfg.image_width = sample.width;
        cfg
    };
    if let Some(d) = d_model {
        model_config.d_model = d;
    }

    // Echo the resolved run configuration.
    std::fs::write(out.join("resolved_config.txt"), train_config.to_kv_string())?;
    std::fs::write(
        out.join("model_config.json"),
        serde_json::to_string_pretty(&model_config)?,
    )?;
    corpus.vocab.save(out.join("vocab.txt"))?;

    let mut model = {
        let mut rng = derive(train_config.seed, "model-init");
        DdvqaModel::new(model_config, &mut rng)?
    };
    let report = fit(
        &mut model,
        &corpus,
        &train_config,
        &out,
        &FitOptions { resume },
    )?;
    append_run_log(&out, "train done")?;
    let last = report.curve.last();
    println!(
        "trained {} epochs; final lm {:.4}; checkpoint {}",
        report.curve.len(),
        last.map(|r| r.lm).unwrap_or(f64::NAN),
        report.checkpoint.display()
    );
    Ok(())
}

// ── generate ────────────────────────────────────────────────────────

pub fn generate(
    common: CommonArgs,
    checkpoint: PathBuf,
    dataset: PathBuf,
    split: &str,
    attention_for: Option<String>,
) -> Result<()> {
    let out = resolve_out(&common, "generations")?;
    std::fs::create_dir_all(&out)?;
    let (model, meta) = load_model(&checkpoint)?;
    let vocab_path = checkpoint
        .parent()
        .unwrap_or(Path::new("."))
        .join("vocab.txt");
    let vocab = Vocabulary::load(&vocab_path)
        .with_context(|| format!("vocabulary {}", vocab_path.display()))?;
    let vocab_hash = vocab_fingerprint(&vocab);
    if vocab_hash != meta.vocab_sha256 {
        bail!(
            "checkpoint/vocab mismatch: checkpoint expects {} but {} hashes to {}",
            meta.vocab_sha256,
            vocab_path.display(),
            vocab_hash
        );
    }

    let want_split = match split {
        "train" => Split::Train,
        "test" => Split::Test,
        other => bail!("unknown split {other:?}"),
    };
    let (records, images) = load_dataset(&dataset)?;
    let mut rows = Vec::new();
    for record in records.iter().filter(|r| r.split == want_split) {
        let image = &images[&record.image_id];
        let answer = generate_answer(&model, &vocab, image, &record.question, 50)?;
        rows.push(GenerationRow {
            image_id: record.image_id.clone(),
            question: record.question.clone(),
            generated: answer.text,
            verdict: prediction_name(answer.verdict).to_string(),
            gold_verdict: record.verdict.word().to_string(),
            gold_answers: record.answers.clone(),
        });
    }
    let path = out.join("generations.jsonl");
    write_generation_jsonl(&path, &rows)?;
    println!("wrote {} generations -> {}", rows.len(), path.display());

    if let Some(image_id) = attention_for {
        let record = records
            .iter()
            .find(|r| r.image_id == image_id)
            .ok_or_else(|| anyhow!("no record for image {image_id}"))?;
        let export = export_attention(&model, &vocab, &images[&image_id], &record.question)?;
        let manifest = write_attention_export(&out.join("attention"), &export)?;
        println!("attention maps -> {}", manifest.display());
    }
    Ok(())
}

fn prediction_name(p: Prediction) -> &'static str {
    match p {
        Prediction::Real => "real",
        Prediction::Fake => "fake",
        Prediction::Undetermined => "undetermined",
    }
}

fn parse_prediction(name: &str) -> Result<Prediction> {
    Ok(match name {
        "real" => Prediction::Real,
        "fake" => Prediction::Fake,
        "undetermined" => Prediction::Undetermined,
        other => bail!("bad verdict {other:?} in generations file"),
    })
}

/// "general" or the component noun the question asks about.
fn question_type(question: &str) -> String {
    if let Some(rest) = question.strip_prefix("Do the person's ") {
        if let Some(noun) = rest.split_whitespace().next() {
            return noun.to_string();
        }
    }
    "general".to_string()
}

// ── eval ────────────────────────────────────────────────────────────

pub fn eval(common: CommonArgs, generations: PathBuf) -> Result<()> {
    let out = resolve_out(&common, "eval")?;
    std::fs::create_dir_all(&out)?;
    let rows: Vec<GenerationRow> = read_jsonl(&generations)
        .with_context(|| format!("reading {}", generations.display()))?;
    if rows.is_empty() {
        bail!("no generation rows to evaluate in {}", generations.display());
    }
    let items: Vec<EvalItem> = rows
        .iter()
        .map(|row| {
            Ok(EvalItem {
                pair: ScoredPair {
                    candidate: row.generated.clone(),
                    references: row.gold_answers.clone(),
                    image_id: row.image_id.clone(),
                    question: row.question.clone(),
                },
                predicted: parse_prediction(&row.verdict)?,
                gold: match row.gold_verdict.as_str() {
                    "fake" => Label::Fake,
                    "real" => Label::Real,
                    other => bail!("bad gold verdict {other:?}"),
                },
                question_type: question_type(&row.question),
            })
        })
        .collect::<Result<_>>()?;
    let report = evaluate_corpus(&items)?;
    let path = out.join("eval.json");
    std::fs::write(&path, serde_json::to_string_pretty(&report)?)?;
    println!(
        "eval: acc {:.4} f1 {:.4} bleu4 {:.4} rouge_l {:.4} meteor_lite {:.4} cider {:.4} -> {}",
        report.acc,
        report.f1,
        report.bleu4,
        report.rouge_l,
        report.meteor_lite,
        report.cider,
        path.display()
    );
    Ok(())
}

// ── fuse ────────────────────────────────────────────────────────────

fn detector_corpus(name: &str, dir: &Path, split: Option<Split>) -> Result<DetectorCorpus> {
    let (records, mut images) = load_dataset(dir)?;
    let mut labels: BTreeMap<String, bool> = BTreeMap::new();
    for record in &records {
        if split.is_some_and(|s| record.split != s) {
            continue;
        }
        labels
            .entry(record.image_id.clone())
            .or_insert(record.manipulation != Manipulation::Real);
    }
    let items = labels
        .into_iter()
        .map(|(image_id, is_fake)| {
            let image = images
                .remove(&image_id)
                .ok_or_else(|| anyhow!("missing image {image_id}"))?;
            Ok(LabelledImage {
                image_id,
                image,
                is_fake,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    if items.is_empty() {
        bail!("corpus {name} has no images for the requested split");
    }
    Ok(DetectorCorpus {
        name: name.to_string(),
        items,
    })
}

pub fn fuse(
    common: CommonArgs,
    checkpoint: PathBuf,
    train_data: PathBuf,
    cross_data: PathBuf,
    seeds: &str,
    epochs: usize,
    freeze_projection_zero: bool,
) -> Result<()> {
    let out = resolve_out(&common, "fusion")?;
    std::fs::create_dir_all(&out)?;
    append_run_log(&out, "fuse start")?;
    let (model, _) = load_model(&checkpoint)?;

    let seeds: Vec<u64> = seeds
        .split(',')
        .map(|s| s.trim().parse::<u64>().map_err(|_| anyhow!("bad seed {s:?}")))
        .collect::<Result<_>>()?;
    let train = detector_corpus("train", &train_data, Some(Split::Train))?;
    let intra = detector_corpus("intra", &train_data, Some(Split::Test))?;
    let cross = detector_corpus("cross", &cross_data, None)?;

    let config = BenchmarkConfig {
        seeds,
        epochs,
        freeze_projection_zero,
        ..BenchmarkConfig::default()
    };
    let rows = benchmark(&model, &train, &[&intra, &cross], &config)?;
    write_benchmark_csv(&out.join("fusion.csv"), &rows)?;
    let summary = aggregate(&rows);
    std::fs::write(out.join("summary.json"), serde_json::to_string_pretty(&summary)?)?;
    append_run_log(&out, "fuse done")?;
    for entry in &summary {
        println!(
            "{:<9} {:<6} acc {:.4}±{:.4} auc {:.4}±{:.4} eer {:.4}±{:.4} ({} seeds)",
            entry.variant,
            entry.corpus,
            entry.mean_acc,
            entry.sd_acc,
            entry.mean_auc,
            entry.sd_auc,
            entry.mean_eer,
            entry.sd_eer,
            entry.seeds
        );
    }
    Ok(())
}

// ── report ──────────────────────────────────────────────────────────

pub fn report(run: PathBuf) -> Result<()> {
    if !run.is_dir() {
        bail!("{} is not a directory", run.display());
    }
    let mut printed = false;
    let loss = run.join("loss.csv");
    if loss.exists() {
        let text = std::fs::read_to_string(&loss)?;
        if let Some(last) = text.lines().filter(|l| !l.trim().is_empty()).last() {
            println!("training:  last epoch row: {last}");
            printed = true;
        }
    }
    let eval = run.join("eval.json");
    if eval.exists() {
        let report: ddvqa_metrics::EvalReport =
            serde_json::from_str(&std::fs::read_to_string(&eval)?)?;
        println!(
            "eval:      acc {:.4} precision {:.4} recall {:.4} f1 {:.4}",
            report.acc, report.precision, report.recall, report.f1
        );
        println!(
            "           bleu4 {:.4} rouge_l {:.4} meteor_lite {:.4} cider {:.4}",
            report.bleu4, report.rouge_l, report.meteor_lite, report.cider
        );
        for (question_type, metrics) in &report.per_question {
            println!(
                "           [{question_type}] acc {:.4} f1 {:.4}",
                metrics.acc, metrics.f1
            );
        }
        printed = true;
    }
    let fusion = run.join("fusion.csv");
    if fusion.exists() {
        println!("fusion:");
        for line in std::fs::read_to_string(&fusion)?.lines() {
            println!("           {line}");
        }
        printed = true;
    }
    let stats = run.join("stats.json");
    if stats.exists() {
        println!("dataset:   {}", std::fs::read_to_string(&stats)?.replace('\n', " "));
        printed = true;
    }
    if !printed {
        bail!("nothing to report in {}", run.display());
    }
    Ok(())
}
