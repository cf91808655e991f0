//! The three training objectives (teacher-forced language modeling, text
//! InfoNCE, image InfoNCE), their 1:1:1 sum, the decoupled-weight-decay
//! adaptive optimizer, and the epoch loop with per-epoch triplet re-mining,
//! checkpointing and exact resume.

mod config;
mod fit;
mod optimizer;

pub use config::{Ablation, TrainConfig};
pub use fit::{fit, Corpus, CurveRow, FitOptions, FitReport};
pub use optimizer::{AdamW, ParameterSet};

use ddvqa_tensor::Tensor;
use ddvqa_text::{BOS, CLS, PAD, SEP};

use crate::image::FaceImage;
use crate::model::{DdvqaModel, ModelError};

#[derive(Debug, thiserror::Error)]
pub enum TrainingError {
    #[error("model: {0}")]
    Model(#[from] ModelError),
    #[error("tensor: {0}")]
    Tensor(#[from] ddvqa_tensor::TensorError),
    #[error("a sample needs at least one answer")]
    NoAnswers,
    #[error("temperature must be positive, got {0}")]
    BadTemperature(f64),
    #[error("non-finite loss (lm={lm}, text={text_cl}, image={image_cl})")]
    NonFinite {
        lm: f64,
        text_cl: f64,
        image_cl: f64,
    },
    #[error("bad config: {0}")]
    BadConfig(String),
    #[error("dataset: {0}")]
    Dataset(#[from] crate::dataset::DatasetError),
    #[error("tokenizer: {0}")]
    Tokenizer(#[from] ddvqa_text::TokenizerError),
    #[error("image: {0}")]
    Image(#[from] crate::image::ImageError),
    #[error("training io {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("checkpoint container: {0}")]
    Container(#[from] ddvqa_tensor::checkpoint::CheckpointError),
}

/// Per-step loss values. `total` is always the plain sum of the three
/// terms; disabled or triplet-less terms contribute exactly zero.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossBreakdown {
    pub lm: f64,
    pub text_contrastive: f64,
    pub image_contrastive: f64,
    pub total: f64,
    pub n_text_triplets: usize,
    pub n_image_triplets: usize,
}

/// Teacher-forcing frames for one answer: the decoder input starts with
/// `[CLS] [BOS]` and the target row for [CLS] is ignored via [PAD].
pub fn lm_frames(answer_frame: &[usize]) -> (Vec<usize>, Vec<usize>) {
    // answer_frame is [CLS] a1..ak [SEP].
    let tokens = &answer_frame[1..answer_frame.len() - 1];
    let mut input = Vec::with_capacity(tokens.len() + 2);
    input.push(CLS);
    input.push(BOS);
    input.extend_from_slice(tokens);
    let mut targets = Vec::with_capacity(tokens.len() + 2);
    targets.push(PAD);
    targets.extend_from_slice(tokens);
    targets.push(SEP);
    (input, targets)
}

/// Mean per-token cross entropy of every candidate answer, conditioned on
/// the grounded question.
pub fn lm_loss_from_grounded(
    model: &DdvqaModel,
    grounded: &Tensor,
    answers: &[Vec<usize>],
) -> Result<Tensor, TrainingError> {
    if answers.is_empty() {
        return Err(TrainingError::NoAnswers);
    }
    let mut sum: Option<Tensor> = None;
    for frame in answers {
        let (input, targets) = lm_frames(frame);
        let logits = model.decode_step(&input, grounded)?;
        let loss = logits.cross_entropy(&targets, Some(PAD))?;
        sum = Some(match sum {
            Some(acc) => acc.add(&loss)?,
            None => loss,
        });
    }
    Ok(sum.expect("non-empty").scale(1.0 / answers.len() as f64))
}

/// Language-modeling loss from raw inputs.
pub fn lm_loss(
    model: &DdvqaModel,
    image: &FaceImage,
    question_ids: &[usize],
    answers: &[Vec<usize>],
) -> Result<Tensor, TrainingError> {
    let grounded = model.ground_from_inputs(image, question_ids, None)?;
    lm_loss_from_grounded(model, &grounded, answers)
}

/// Two-candidate InfoNCE over L2-normalized similarities with the
/// temperature inside the exponent.
pub fn info_nce(
    anchor: &Tensor,
    positive: &Tensor,
    negative: &Tensor,
    temperature: f64,
) -> Result<Tensor, TrainingError> {
    if temperature <= 0.0 {
        return Err(TrainingError::BadTemperature(temperature));
    }
    let a = anchor.l2_normalize()?;
    let s_ap = a.dot(&positive.l2_normalize()?)?;
    let s_an = a.dot(&negative.l2_normalize()?)?;
    let logits = Tensor::concat0(&[s_ap, s_an])?
        .reshape(vec![1, 2])?
        .scale(1.0 / temperature);
    Ok(logits.cross_entropy(&[0], None)?)
}

/// One text triplet ready for encoding: token frames of the three answers
/// plus the anchor's grounded question (shared by all three encodings).
pub struct TextTripletItem<'a> {
    pub grounded: &'a Tensor,
    pub anchor: &'a [usize],
    pub positive: &'a [usize],
    pub negative: &'a [usize],
}

/// Mean InfoNCE over decoder [CLS] representations; zero scalar (with zero
/// gradient) when the batch is empty.
pub fn text_contrastive_loss(
    model: &DdvqaModel,
    items: &[TextTripletItem<'_>],
    temperature: f64,
) -> Result<Tensor, TrainingError> {
    if items.is_empty() {
        return Ok(Tensor::scalar(0.0));
    }
    let mut sum: Option<Tensor> = None;
    for item in items {
        let anchor = model.text_cls_representation(item.anchor, item.grounded)?;
        let positive = model.text_cls_representation(item.positive, item.grounded)?;
        let negative = model.text_cls_representation(item.negative, item.grounded)?;
        let loss = info_nce(&anchor, &positive, &negative, temperature)?;
        sum = Some(match sum {
            Some(acc) => acc.add(&loss)?,
            None => loss,
        });
    }
    Ok(sum.expect("non-empty").scale(1.0 / items.len() as f64))
}

/// One image triplet: anchor, shared-phrase positive, opposite-verdict
/// negative.
pub struct ImageTripletItem<'a> {
    pub anchor: &'a FaceImage,
    pub positive: &'a FaceImage,
    pub negative: &'a FaceImage,
}

/// Mean InfoNCE over image [CLS] representations; zero scalar when empty.
pub fn image_contrastive_loss(
    model: &DdvqaModel,
    items: &[ImageTripletItem<'_>],
    temperature: f64,
) -> Result<Tensor, TrainingError> {
    if items.is_empty() {
        return Ok(Tensor::scalar(0.0));
    }
    let mut sum: Option<Tensor> = None;
    for item in items {
        let anchor = model.image_cls_representation(item.anchor)?;
        let positive = model.image_cls_representation(item.positive)?;
        let negative = model.image_cls_representation(item.negative)?;
        let loss = info_nce(&anchor, &positive, &negative, temperature)?;
        sum = Some(match sum {
            Some(acc) => acc.add(&loss)?,
            None => loss,
        });
    }
    Ok(sum.expect("non-empty").scale(1.0 / items.len() as f64))
}

/// One record's inputs within a step batch.
pub struct StepSample<'a> {
    pub image: &'a FaceImage,
    pub question_ids: Vec<usize>,
    pub answer_frames: Vec<Vec<usize>>,
    /// (anchor, positive, negative) answer frames mined for this record.
    pub text_triplet: Option<(Vec<usize>, Vec<usize>, Vec<usize>)>,
    /// (positive, negative) images; the anchor is the sample's own image.
    pub image_triplet: Option<(&'a FaceImage, &'a FaceImage)>,
}

/// Forward + backward + clipped optimizer step over one batch. The total
/// is the 1:1:1 sum of the enabled losses.
pub fn train_step(
    model: &mut DdvqaModel,
    optimizer: &mut AdamW,
    batch: &[StepSample<'_>],
    config: &TrainConfig,
) -> Result<LossBreakdown, TrainingError> {
    let breakdown = batch_losses(model, batch, config)?;
    let (loss, values) = breakdown;
    if !values.total.is_finite() {
        return Err(TrainingError::NonFinite {
            lm: values.lm,
            text_cl: values.text_contrastive,
            image_cl: values.image_contrastive,
        });
    }
    loss.backward()?;
    optimizer.step(model, config.grad_clip);
    Ok(values)
}

/// Builds the batch loss graph without stepping; used by both `train_step`
/// and validation.
pub fn batch_losses(
    model: &DdvqaModel,
    batch: &[StepSample<'_>],
    config: &TrainConfig,
) -> Result<(Tensor, LossBreakdown), TrainingError> {
    assert!(!batch.is_empty(), "empty step batch");
    let mut lm_sum: Option<Tensor> = None;
    let mut groundeds = Vec::with_capacity(batch.len());
    for sample in batch {
        let grounded = model.ground_from_inputs(sample.image, &sample.question_ids, None)?;
        let lm = lm_loss_from_grounded(model, &grounded, &sample.answer_frames)?;
        lm_sum = Some(match lm_sum {
            Some(acc) => acc.add(&lm)?,
            None => lm,
        });
        groundeds.push(grounded);
    }
    let lm = lm_sum.expect("non-empty").scale(1.0 / batch.len() as f64);

    let mut total = lm.clone();
    let mut text_value = 0.0;
    let mut n_text = 0;
    if config.ablation.text_contrastive {
        let items: Vec<TextTripletItem<'_>> = batch
            .iter()
            .zip(&groundeds)
            .filter_map(|(sample, grounded)| {
                sample.text_triplet.as_ref().map(|(a, p, n)| TextTripletItem {
                    grounded,
                    anchor: a,
                    positive: p,
                    negative: n,
                })
            })
            .collect();
        n_text = items.len();
        if !items.is_empty() {
            let loss = text_contrastive_loss(model, &items, config.temperature)?;
            text_value = loss.item();
            total = total.add(&loss)?;
        }
    }

    let mut image_value = 0.0;
    let mut n_image = 0;
    if config.ablation.image_contrastive {
        let items: Vec<ImageTripletItem<'_>> = batch
            .iter()
            .filter_map(|sample| {
                sample.image_triplet.map(|(p, n)| ImageTripletItem {
                    anchor: sample.image,
                    positive: p,
                    negative: n,
                })
            })
            .collect();
        n_image = items.len();
        if !items.is_empty() {
            let loss = image_contrastive_loss(model, &items, config.temperature)?;
            image_value = loss.item();
            total = total.add(&loss)?;
        }
    }

    let values = LossBreakdown {
        lm: lm.item(),
        text_contrastive: text_value,
        image_contrastive: image_value,
        total: total.item(),
        n_text_triplets: n_text,
        n_image_triplets: n_image,
    };
    Ok((total, values))
}
