//! The epoch loop. All randomness comes from per-epoch streams derived
//! from the master seed, so a resumed run replays the exact schedule of an
//! uninterrupted one.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use ddvqa_tensor::checkpoint::{self, Dtype};
use ddvqa_text::{SequenceKind, Vocabulary};

use super::{batch_losses, train_step, AdamW, StepSample, TrainConfig, TrainingError};
use crate::dataset::mining::{mine_image_triplet, mine_text_triplet, TripletIndex};
use crate::dataset::{QARecord, Split};
use crate::image::FaceImage;
use crate::model::{save_model, vocab_fingerprint, DdvqaModel};
use crate::rng::derive_indexed;

/// Records, their images, and the corpus-induced vocabulary.
pub struct Corpus {
    pub records: Vec<QARecord>,
    pub images: BTreeMap<String, FaceImage>,
    pub vocab: Vocabulary,
}

impl Corpus {
    /// Builds the vocabulary from the training split's questions and
    /// answers (min_count 1; the template language is closed).
    pub fn new(
        records: Vec<QARecord>,
        images: BTreeMap<String, FaceImage>,
    ) -> Result<Corpus, TrainingError> {
        let mut texts: Vec<String> = Vec::new();
        for record in records.iter().filter(|r| r.split == Split::Train) {
            texts.push(record.question.clone());
            texts.extend(record.answers.iter().cloned());
        }
        if texts.is_empty() {
            // Degenerate corpora (all test) still need a vocabulary.
            for record in &records {
                texts.push(record.question.clone());
                texts.extend(record.answers.iter().cloned());
            }
        }
        let vocab = Vocabulary::build(&texts, 1)?;
        Ok(Corpus {
            records,
            images,
            vocab,
        })
    }

    pub fn indices_of(&self, split: Split) -> Vec<usize> {
        self.records
            .iter()
            .enumerate()
            .filter(|(_, r)| r.split == split)
            .map(|(i, _)| i)
            .collect()
    }

    pub fn image_of(&self, record: &QARecord) -> &FaceImage {
        self.images
            .get(&record.image_id)
            .unwrap_or_else(|| panic!("missing image {}", record.image_id))
    }

    pub fn encode_question(&self, record: &QARecord) -> Vec<usize> {
        self.vocab
            .encode(&record.question, SequenceKind::Question)
            .ids
    }

    pub fn encode_answers(&self, record: &QARecord) -> Vec<Vec<usize>> {
        record
            .answers
            .iter()
            .map(|a| self.vocab.encode(a, SequenceKind::Answer).ids)
            .collect()
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CurveRow {
    pub epoch: usize,
    pub lm: f64,
    pub text_cl: f64,
    pub image_cl: f64,
    pub total: f64,
    pub val_lm: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct FitReport {
    pub curve: Vec<CurveRow>,
    pub best_val_lm: Option<f64>,
    pub checkpoint: PathBuf,
    pub best_checkpoint: Option<PathBuf>,
    pub loss_curve_csv: PathBuf,
}

#[derive(Debug, Default)]
pub struct FitOptions {
    /// Resume from `train_state.bin` + `train_state.json` in the run dir.
    pub resume: bool,
}

#[derive(Serialize, Deserialize)]
struct TrainStateMeta {
    next_epoch: usize,
    step_count: u64,
    best_val: Option<f64>,
    curve: Vec<CurveRow>,
}

/// Trains for `config.epochs`, writing `loss.csv`, `model.ckpt` (final),
/// `best.ckpt` (lowest validation LM loss) and the exact-resume state into
/// `out_dir`.
pub fn fit(
    model: &mut DdvqaModel,
    corpus: &Corpus,
    config: &TrainConfig,
    out_dir: &Path,
    options: &FitOptions,
) -> Result<FitReport, TrainingError> {
    config.validate()?;
    std::fs::create_dir_all(out_dir).map_err(|source| TrainingError::Io {
        path: out_dir.display().to_string(),
        source,
    })?;
    let vocab_hash = vocab_fingerprint(&corpus.vocab);
    let mut optimizer = AdamW::new(config.lr, config.weight_decay);

    let mut start_epoch = 0;
    let mut best_val: Option<f64> = None;
    let mut curve: Vec<CurveRow> = Vec::new();
    if options.resume {
        let (meta, params) = load_train_state(out_dir)?;
        model.for_each_param_mut(&mut |name, tensor| {
            if let Some(data) = params.get(&format!("param.{name}")) {
                *tensor = ddvqa_tensor::Tensor::param(tensor.shape().to_vec(), data.clone())
                    .expect("state shape");
            }
        });
        let moments: Vec<(String, Vec<f64>)> = params
            .iter()
            .filter(|(name, _)| name.starts_with("adam."))
            .map(|(name, data)| (name.clone(), data.clone()))
            .collect();
        optimizer.restore_state(meta.step_count, &moments);
        start_epoch = meta.next_epoch;
        best_val = meta.best_val;
        curve = meta.curve;
    }

    let train_indices_base = corpus.indices_of(Split::Train);
    let test_indices = corpus.indices_of(Split::Test);
    let mine_triplets =
        config.ablation.text_contrastive || config.ablation.image_contrastive;
    let train_records: Vec<&QARecord> = train_indices_base
        .iter()
        .map(|&i| &corpus.records[i])
        .collect();
    let train_record_vec: Vec<QARecord> =
        train_records.iter().map(|r| (*r).clone()).collect();
    let index = mine_triplets.then(|| TripletIndex::build(&train_record_vec));

    for epoch in start_epoch..config.epochs {
        let mut shuffle_rng = derive_indexed(config.seed, "shuffle", epoch as u64);
        let mut order: Vec<usize> = (0..train_record_vec.len()).collect();
        order.shuffle(&mut shuffle_rng);

        // One triplet per anchor per epoch, resampled each epoch.
        let mut text_triplets: BTreeMap<usize, (Vec<usize>, Vec<usize>, Vec<usize>)> =
            BTreeMap::new();
        let mut image_triplets: BTreeMap<usize, (String, String)> = BTreeMap::new();
        if let Some(index) = &index {
            let mut mine_rng = derive_indexed(config.seed, "mining", epoch as u64);
            for anchor in 0..train_record_vec.len() {
                if config.ablation.text_contrastive {
                    if let Some(triplet) =
                        mine_text_triplet(anchor, &train_record_vec, index, &mut mine_rng)
                    {
                        let rec = &train_record_vec[anchor];
                        let neg = &train_record_vec[triplet.negative.record_idx];
                        text_triplets.insert(
                            anchor,
                            (
                                frame_of(corpus, rec, triplet.anchor.answer_idx),
                                frame_of(corpus, rec, triplet.positive.answer_idx),
                                frame_of(corpus, neg, triplet.negative.answer_idx),
                            ),
                        );
                    }
                }
                if config.ablation.image_contrastive {
                    if let Some(triplet) =
                        mine_image_triplet(anchor, &train_record_vec, index, &mut mine_rng)
                    {
                        image_triplets.insert(
                            anchor,
                            (
                                triplet.positive.image_id.clone(),
                                triplet.negative.image_id.clone(),
                            ),
                        );
                    }
                }
            }
        }

        let mut sums = (0.0f64, 0.0f64, 0.0f64, 0.0f64);
        let mut steps = 0usize;
        for chunk in order.chunks(config.batch_size) {
            let batch: Vec<StepSample<'_>> = chunk
                .iter()
                .map(|&local_idx| {
                    let record = &train_record_vec[local_idx];
                    StepSample {
                        image: corpus.image_of(record),
                        question_ids: corpus.encode_question(record),
                        answer_frames: corpus.encode_answers(record),
                        text_triplet: text_triplets.get(&local_idx).cloned(),
                        image_triplet: image_triplets.get(&local_idx).map(|(p, n)| {
                            (
                                &corpus.images[p.as_str()],
                                &corpus.images[n.as_str()],
                            )
                        }),
                    }
                })
                .collect();
            let values = train_step(model, &mut optimizer, &batch, config)?;
            sums.0 += values.lm;
            sums.1 += values.text_contrastive;
            sums.2 += values.image_contrastive;
            sums.3 += values.total;
            steps += 1;
        }
        let denom = steps.max(1) as f64;

        let val_lm = if test_indices.is_empty() {
            None
        } else {
            let mut total = 0.0;
            for &idx in &test_indices {
                let record = &corpus.records[idx];
                let sample = StepSample {
                    image: corpus.image_of(record),
                    question_ids: corpus.encode_question(record),
                    answer_frames: corpus.encode_answers(record),
                    text_triplet: None,
                    image_triplet: None,
                };
                let lm_only = TrainConfig {
                    ablation: super::Ablation::lm_only(),
                    ..config.clone()
                };
                let (_, values) = batch_losses(model, &[sample], &lm_only)?;
                total += values.lm;
            }
            Some(total / test_indices.len() as f64)
        };

        curve.push(CurveRow {
            epoch,
            lm: sums.0 / denom,
            text_cl: sums.1 / denom,
            image_cl: sums.2 / denom,
            total: sums.3 / denom,
            val_lm,
        });
        write_curve_csv(&out_dir.join("loss.csv"), &curve)?;

        let improved = match (val_lm, best_val) {
            (Some(v), Some(b)) => v < b,
            (Some(_), None) => true,
            (None, _) => false,
        };
        if improved {
            best_val = val_lm;
            save_model(&out_dir.join("best.ckpt"), model, &vocab_hash)?;
        }
        if config.checkpoint_every > 0 && (epoch + 1) % config.checkpoint_every == 0 {
            save_model(&out_dir.join(format!("epoch{epoch}.ckpt")), model, &vocab_hash)?;
        }
        save_train_state(out_dir, model, &optimizer, epoch + 1, best_val, &curve)?;
    }

    let final_path = out_dir.join("model.ckpt");
    save_model(&final_path, model, &vocab_hash)?;
    let best_path = out_dir.join("best.ckpt");
    Ok(FitReport {
        curve,
        best_val_lm: best_val,
        checkpoint: final_path,
        best_checkpoint: best_path.exists().then_some(best_path),
        loss_curve_csv: out_dir.join("loss.csv"),
    })
}

fn frame_of(corpus: &Corpus, record: &QARecord, answer_idx: usize) -> Vec<usize> {
    corpus
        .vocab
        .encode(&record.answers[answer_idx], SequenceKind::Answer)
        .ids
}

fn write_curve_csv(path: &Path, curve: &[CurveRow]) -> Result<(), TrainingError> {
    let to_io = |source| TrainingError::Io {
        path: path.display().to_string(),
        source,
    };
    let mut file = std::fs::File::create(path).map_err(to_io)?;
    let mut text = String::from("epoch,lm,text_cl,image_cl,total,val_lm\n");
    for row in curve {
        let val = row.val_lm.map(|v| v.to_string()).unwrap_or_default();
        text.push_str(&format!(
            "{},{},{},{},{},{}\n",
            row.epoch, row.lm, row.text_cl, row.image_cl, row.total, val
        ));
    }
    file.write_all(text.as_bytes()).map_err(to_io)
}

fn save_train_state(
    out_dir: &Path,
    model: &mut DdvqaModel,
    optimizer: &AdamW,
    next_epoch: usize,
    best_val: Option<f64>,
    curve: &[CurveRow],
) -> Result<(), TrainingError> {
    let mut entries: Vec<(String, Vec<usize>, Vec<f64>)> = model
        .named_parameters()
        .into_iter()
        .map(|(name, t)| (format!("param.{name}"), t.shape().to_vec(), t.data().to_vec()))
        .collect();
    entries.extend(optimizer.state_tensors());
    checkpoint::save(out_dir.join("train_state.bin"), &entries, Dtype::F64)?;
    let meta = TrainStateMeta {
        next_epoch,
        step_count: optimizer.step_count(),
        best_val,
        curve: curve.to_vec(),
    };
    let path = out_dir.join("train_state.json");
    std::fs::write(&path, serde_json::to_string(&meta).expect("state meta")).map_err(
        |source| TrainingError::Io {
            path: path.display().to_string(),
            source,
        },
    )
}

fn load_train_state(
    out_dir: &Path,
) -> Result<(TrainStateMeta, BTreeMap<String, Vec<f64>>), TrainingError> {
    let meta_path = out_dir.join("train_state.json");
    let meta_raw = std::fs::read_to_string(&meta_path).map_err(|source| TrainingError::Io {
        path: meta_path.display().to_string(),
        source,
    })?;
    let meta: TrainStateMeta = serde_json::from_str(&meta_raw)
        .map_err(|e| TrainingError::BadConfig(format!("train_state.json: {e}")))?;
    let tensors = checkpoint::load(out_dir.join("train_state.bin"))?;
    let params = tensors
        .into_iter()
        .map(|t| (t.name, t.data))
        .collect();
    Ok((meta, params))
}
