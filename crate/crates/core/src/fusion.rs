//! Detector enhancement: add a shape-transformed frozen feature map from
//! the multimodal model onto a small convolutional detector's feature map
//! (F_en = F' + theta(F)), then benchmark baseline vs enhanced under
//! identical seeds on intra- and cross-testing corpora.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use rand::seq::SliceRandom;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use ddvqa_metrics::auc_eer;
use ddvqa_tensor::Tensor;

use crate::image::FaceImage;
use crate::model::{DdvqaModel, ModelError};
use crate::rng::{derive, derive_indexed};
use crate::training::{AdamW, ParameterSet};

#[derive(Debug, thiserror::Error)]
pub enum FusionError {
    #[error("model: {0}")]
    Model(#[from] ModelError),
    #[error("tensor: {0}")]
    Tensor(#[from] ddvqa_tensor::TensorError),
    #[error("fused shapes differ: {lhs:?} vs {rhs:?}")]
    ShapeMismatch { lhs: Vec<usize>, rhs: Vec<usize> },
    #[error("metrics: {0}")]
    Metrics(#[from] ddvqa_metrics::MetricsError),
    #[error("fusion io {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
}

// ── frozen feature extraction ───────────────────────────────────────

/// Patch-token features of the frozen multimodal model, detached from its
/// graph so no gradient can reach it: `[grid_h * grid_w, d_model]`.
pub fn extract_ddvqa_features(
    model: &DdvqaModel,
    image: &FaceImage,
) -> Result<(Tensor, usize, usize), FusionError> {
    let features = model.patch_features(image)?;
    let (gh, gw) = model.config().grid();
    Ok((features.detach(), gh, gw))
}

// ── shape transform ─────────────────────────────────────────────────

/// Nearest-neighbor spatial resample followed by a learnable 1x1 channel
/// projection. Only the projection trains.
pub struct FusionTransform {
    pub out_h: usize,
    pub out_w: usize,
    proj: Tensor,
}

impl FusionTransform {
    /// Zero-initialized projection: the transform contributes nothing until
    /// training moves it.
    pub fn zeros(in_channels: usize, out_h: usize, out_w: usize, out_c: usize) -> FusionTransform {
        FusionTransform {
            out_h,
            out_w,
            proj: Tensor::param(vec![in_channels, out_c], vec![0.0; in_channels * out_c])
                .expect("shape"),
        }
    }

    pub fn output_channels(&self) -> usize {
        self.proj.shape()[1]
    }

    /// `features` is `[in_h * in_w, C]`; output `[out_h * out_w, C']`.
    pub fn apply(
        &self,
        features: &Tensor,
        in_h: usize,
        in_w: usize,
    ) -> Result<Tensor, FusionError> {
        let resized = nearest_resize_rows(features, in_h, in_w, self.out_h, self.out_w)?;
        Ok(resized.matmul(&self.proj)?)
    }
}

/// Row gather implementing nearest-neighbor grid resize over `[h*w, c]`.
fn nearest_resize_rows(
    features: &Tensor,
    in_h: usize,
    in_w: usize,
    out_h: usize,
    out_w: usize,
) -> Result<Tensor, FusionError> {
    let c = features.shape()[1];
    let mut indices = Vec::with_capacity(out_h * out_w * c);
    for oy in 0..out_h {
        let sy = (oy * in_h) / out_h;
        for ox in 0..out_w {
            let sx = (ox * in_w) / out_w;
            let row = sy * in_w + sx;
            for ch in 0..c {
                indices.push(row * c + ch);
            }
        }
    }
    Ok(features.gather(&indices, vec![out_h * out_w, c])?)
}

/// Elementwise sum with an exact shape check.
pub fn fuse(transformed: &Tensor, detector_features: &Tensor) -> Result<Tensor, FusionError> {
    if transformed.shape() != detector_features.shape() {
        return Err(FusionError::ShapeMismatch {
            lhs: transformed.shape().to_vec(),
            rhs: detector_features.shape().to_vec(),
        });
    }
    Ok(detector_features.add(transformed)?)
}

// ── toy detector ────────────────────────────────────────────────────

struct ConvLayer {
    w: Tensor,
    b: Tensor,
    in_c: usize,
    kernel: usize,
    stride: usize,
}

impl ConvLayer {
    fn new(in_c: usize, out_c: usize, rng: &mut ChaCha8Rng) -> ConvLayer {
        use rand::Rng;
        let kernel = 3;
        let fan_in = kernel * kernel * in_c;
        let scale = (2.0 / fan_in as f64).sqrt();
        let data = (0..fan_in * out_c)
            .map(|_| {
                // Box-Muller, matching the model's init style.
                let u1: f64 = rng.gen::<f64>().max(1e-300);
                let u2: f64 = rng.gen();
                scale * (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
            })
            .collect();
        ConvLayer {
            w: Tensor::param(vec![fan_in, out_c], data).expect("shape"),
            b: Tensor::param(vec![out_c], vec![0.0; out_c]).expect("shape"),
            in_c,
            kernel,
            stride: 2,
        }
    }

    fn out_dim(&self, dim: usize) -> usize {
        (dim - self.kernel) / self.stride + 1
    }

    /// `x` is `[h*w, in_c]`; im2col gather then matmul.
    fn forward(&self, x: &Tensor, h: usize, w: usize) -> Result<(Tensor, usize, usize), FusionError> {
        let (oh, ow) = (self.out_dim(h), self.out_dim(w));
        let window = self.kernel * self.kernel * self.in_c;
        let mut indices = Vec::with_capacity(oh * ow * window);
        for oy in 0..oh {
            for ox in 0..ow {
                for ky in 0..self.kernel {
                    for kx in 0..self.kernel {
                        let row = (oy * self.stride + ky) * w + ox * self.stride + kx;
                        for c in 0..self.in_c {
                            indices.push(row * self.in_c + c);
                        }
                    }
                }
            }
        }
        let patches = x.gather(&indices, vec![oh * ow, window])?;
        let out = patches.matmul(&self.w)?.add_bias(&self.b)?.gelu();
        Ok((out, oh, ow))
    }
}

/// Three strided conv layers and a two-logit head over mean-pooled
/// features. The fake probability is the softmax of the positive logit, so
/// it always lies strictly inside (0, 1).
pub struct ToyDetector {
    conv1: ConvLayer,
    conv2: ConvLayer,
    conv3: ConvLayer,
    head_w: Tensor,
    head_b: Tensor,
    input_h: usize,
    input_w: usize,
}

pub const DETECTOR_CHANNELS: usize = 16;

impl ToyDetector {
    pub fn new(input_h: usize, input_w: usize, rng: &mut ChaCha8Rng) -> ToyDetector {
        use rand::Rng;
        let conv1 = ConvLayer::new(3, 8, rng);
        let conv2 = ConvLayer::new(8, 12, rng);
        let conv3 = ConvLayer::new(12, DETECTOR_CHANNELS, rng);
        let head_data = (0..DETECTOR_CHANNELS * 2)
            .map(|_| {
                let u1: f64 = rng.gen::<f64>().max(1e-300);
                let u2: f64 = rng.gen();
                0.1 * (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
            })
            .collect();
        ToyDetector {
            conv1,
            conv2,
            conv3,
            head_w: Tensor::param(vec![DETECTOR_CHANNELS, 2], head_data).expect("shape"),
            head_b: Tensor::param(vec![2], vec![0.0; 2]).expect("shape"),
            input_h,
            input_w,
        }
    }

    /// Spatial dimensions of F'.
    pub fn feature_grid(&self) -> (usize, usize) {
        let h = self
            .conv3
            .out_dim(self.conv2.out_dim(self.conv1.out_dim(self.input_h)));
        let w = self
            .conv3
            .out_dim(self.conv2.out_dim(self.conv1.out_dim(self.input_w)));
        (h, w)
    }

    /// F' from raw pixels: `[h3*w3, 16]`.
    pub fn feature_map(&self, image: &FaceImage) -> Result<Tensor, FusionError> {
        let x = Tensor::from_vec(
            vec![image.height * image.width, image.channels],
            image.pixels.clone(),
        )
        .expect("hwc layout");
        let (x, h, w) = self.conv1.forward(&x, image.height, image.width)?;
        let (x, h, w) = self.conv2.forward(&x, h, w)?;
        let (x, _, _) = self.conv3.forward(&x, h, w)?;
        Ok(x)
    }

    /// Two-class logits from a (possibly fused) feature map.
    pub fn logits(&self, features: &Tensor) -> Result<Tensor, FusionError> {
        let rows = features.shape()[0];
        let pool = Tensor::from_vec(vec![1, rows], vec![1.0 / rows as f64; rows])
            .expect("pool weights");
        let pooled = pool.matmul(features)?;
        Ok(pooled.matmul(&self.head_w)?.add_bias(&self.head_b)?)
    }

    pub fn fake_probability(logits: &Tensor) -> f64 {
        let p = logits.softmax_last();
        p.data()[1]
    }
}

impl ParameterSet for ToyDetector {
    fn for_each_param_mut(&mut self, f: &mut dyn FnMut(&str, &mut Tensor)) {
        f("conv1.w", &mut self.conv1.w);
        f("conv1.b", &mut self.conv1.b);
        f("conv2.w", &mut self.conv2.w);
        f("conv2.b", &mut self.conv2.b);
        f("conv3.w", &mut self.conv3.w);
        f("conv3.b", &mut self.conv3.b);
        f("head.w", &mut self.head_w);
        f("head.b", &mut self.head_b);
    }
}

/// Detector plus an optional live fusion projection, trained together.
struct EnhancedDetector {
    detector: ToyDetector,
    transform: Option<FusionTransform>,
}

impl ParameterSet for EnhancedDetector {
    fn for_each_param_mut(&mut self, f: &mut dyn FnMut(&str, &mut Tensor)) {
        self.detector.for_each_param_mut(f);
        if let Some(t) = self.transform.as_mut() {
            f("fusion.proj", &mut t.proj);
        }
    }
}

// ── benchmark ───────────────────────────────────────────────────────

/// One labelled image for detector training/eval.
#[derive(Debug, Clone)]
pub struct LabelledImage {
    pub image_id: String,
    pub image: FaceImage,
    pub is_fake: bool,
}

pub struct DetectorCorpus {
    pub name: String,
    pub items: Vec<LabelledImage>,
}

#[derive(Debug, Clone)]
pub struct BenchmarkConfig {
    pub seeds: Vec<u64>,
    pub epochs: usize,
    pub lr: f64,
    pub weight_decay: f64,
    /// Keep the projection at zero and out of the optimizer: the enhanced
    /// variant must then reproduce the baseline bitwise.
    pub freeze_projection_zero: bool,
}

impl Default for BenchmarkConfig {
    fn default() -> Self {
        BenchmarkConfig {
            seeds: vec![1, 2, 3],
            epochs: 6,
            lr: 3e-3,
            weight_decay: 0.01,
            freeze_projection_zero: false,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct BenchRow {
    pub variant: String,
    pub corpus: String,
    pub seed: u64,
    pub acc: f64,
    pub auc: f64,
    pub eer: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct BenchAggregate {
    pub variant: String,
    pub corpus: String,
    pub mean_acc: f64,
    pub sd_acc: f64,
    pub mean_auc: f64,
    pub sd_auc: f64,
    pub mean_eer: f64,
    pub sd_eer: f64,
    pub seeds: usize,
}

/// Per-image fake probabilities of a trained (possibly enhanced) detector.
fn scores_for(
    trained: &EnhancedDetector,
    corpus: &DetectorCorpus,
    features: &BTreeMap<String, (Tensor, usize, usize)>,
) -> Result<Vec<(f64, bool)>, FusionError> {
    let mut scores = Vec::with_capacity(corpus.items.len());
    for item in &corpus.items {
        let f_prime = trained.detector.feature_map(&item.image)?;
        let fused = match &trained.transform {
            Some(transform) => {
                let (f, gh, gw) = &features[&item.image_id];
                fuse(&transform.apply(f, *gh, *gw)?, &f_prime)?
            }
            None => f_prime,
        };
        let logits = trained.detector.logits(&fused)?;
        scores.push((ToyDetector::fake_probability(&logits), item.is_fake));
    }
    Ok(scores)
}

fn eval_rows(
    trained: &EnhancedDetector,
    variant: &str,
    seed: u64,
    corpora: &[&DetectorCorpus],
    features: &BTreeMap<String, (Tensor, usize, usize)>,
) -> Result<Vec<BenchRow>, FusionError> {
    let mut rows = Vec::new();
    for corpus in corpora {
        let scores = scores_for(trained, corpus, features)?;
        let correct = scores
            .iter()
            .filter(|(p, label)| (*p >= 0.5) == *label)
            .count();
        let (auc, eer) = auc_eer(&scores)?;
        rows.push(BenchRow {
            variant: variant.to_string(),
            corpus: corpus.name.clone(),
            seed,
            acc: correct as f64 / scores.len() as f64,
            auc,
            eer,
        });
    }
    Ok(rows)
}

fn train_variant(
    variant: &str,
    ddvqa: &DdvqaModel,
    train: &DetectorCorpus,
    features: &BTreeMap<String, (Tensor, usize, usize)>,
    config: &BenchmarkConfig,
    seed: u64,
) -> Result<EnhancedDetector, FusionError> {
    let (h, w) = (train.items[0].image.height, train.items[0].image.width);
    let mut detector_rng = derive(seed, "detector-init");
    let detector = ToyDetector::new(h, w, &mut detector_rng);
    let (grid_h, grid_w) = detector.feature_grid();
    let transform = match variant {
        "baseline" => None,
        _ => Some(FusionTransform::zeros(
            ddvqa.config().d_model,
            grid_h,
            grid_w,
            DETECTOR_CHANNELS,
        )),
    };
    let train_projection = variant == "enhanced" && !config.freeze_projection_zero;

    let mut trained = EnhancedDetector {
        detector,
        transform,
    };
    let mut optimizer = AdamW::new(config.lr, config.weight_decay);
    for epoch in 0..config.epochs {
        let mut order: Vec<usize> = (0..train.items.len()).collect();
        order.shuffle(&mut derive_indexed(seed, "detector-order", epoch as u64));
        for &idx in &order {
            let item = &train.items[idx];
            let f_prime = trained.detector.feature_map(&item.image)?;
            let fused = match &trained.transform {
                Some(transform) if train_projection => {
                    let (f, gh, gw) = &features[&item.image_id];
                    fuse(&transform.apply(f, *gh, *gw)?, &f_prime)?
                }
                Some(transform) => {
                    // Frozen-at-zero projection still runs the fusion graph
                    // so the data path is identical, but its parameter is
                    // excluded from the update below.
                    let (f, gh, gw) = &features[&item.image_id];
                    fuse(&transform.apply(f, *gh, *gw)?, &f_prime)?
                }
                None => f_prime,
            };
            let logits = trained.detector.logits(&fused)?;
            let target = if item.is_fake { 1 } else { 0 };
            let loss = logits.cross_entropy(&[target], None)?;
            loss.backward()?;
            if train_projection {
                optimizer.step(&mut trained, 1.0);
            } else {
                optimizer.step(&mut trained.detector, 1.0);
                if let Some(t) = &trained.transform {
                    t.proj.zero_grad();
                }
            }
        }
    }
    Ok(trained)
}

/// Trains baseline and enhanced variants under identical seeds and scores
/// them on every corpus.
pub fn benchmark(
    ddvqa: &DdvqaModel,
    train: &DetectorCorpus,
    test_corpora: &[&DetectorCorpus],
    config: &BenchmarkConfig,
) -> Result<Vec<BenchRow>, FusionError> {
    // Frozen features, computed once per image across all corpora.
    let mut features: BTreeMap<String, (Tensor, usize, usize)> = BTreeMap::new();
    for corpus in std::iter::once(&train).chain(test_corpora.iter()) {
        for item in &corpus.items {
            if !features.contains_key(&item.image_id) {
                features.insert(item.image_id.clone(), extract_ddvqa_features(ddvqa, &item.image)?);
            }
        }
    }

    let mut rows = Vec::new();
    for &seed in &config.seeds {
        for variant in ["baseline", "enhanced"] {
            let trained = train_variant(variant, ddvqa, train, &features, config, seed)?;
            rows.extend(eval_rows(&trained, variant, seed, test_corpora, &features)?);
        }
    }
    Ok(rows)
}

pub fn aggregate(rows: &[BenchRow]) -> Vec<BenchAggregate> {
    let mut groups: BTreeMap<(String, String), Vec<&BenchRow>> = BTreeMap::new();
    for row in rows {
        groups
            .entry((row.variant.clone(), row.corpus.clone()))
            .or_default()
            .push(row);
    }
    let stat = |values: &[f64]| -> (f64, f64) {
        let mean = values.iter().sum::<f64>() / values.len() as f64;
        let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>()
            / values.len() as f64;
        (mean, var.sqrt())
    };
    groups
        .into_iter()
        .map(|((variant, corpus), rows)| {
            let accs: Vec<f64> = rows.iter().map(|r| r.acc).collect();
            let aucs: Vec<f64> = rows.iter().map(|r| r.auc).collect();
            let eers: Vec<f64> = rows.iter().map(|r| r.eer).collect();
            let (mean_acc, sd_acc) = stat(&accs);
            let (mean_auc, sd_auc) = stat(&aucs);
            let (mean_eer, sd_eer) = stat(&eers);
            BenchAggregate {
                variant,
                corpus,
                mean_acc,
                sd_acc,
                mean_auc,
                sd_auc,
                mean_eer,
                sd_eer,
                seeds: rows.len(),
            }
        })
        .collect()
}

pub fn write_benchmark_csv(path: &Path, rows: &[BenchRow]) -> Result<(), FusionError> {
    let to_io = |source| FusionError::Io {
        path: path.display().to_string(),
        source,
    };
    let mut file = std::fs::File::create(path).map_err(to_io)?;
    let mut text = String::from("variant,corpus,seed,acc,auc,eer\n");
    for row in rows {
        text.push_str(&format!(
            "{},{},{},{},{},{}\n",
            row.variant, row.corpus, row.seed, row.acc, row.auc, row.eer
        ));
    }
    file.write_all(text.as_bytes()).map_err(to_io)
}

#[cfg(test)]
mod tests;
