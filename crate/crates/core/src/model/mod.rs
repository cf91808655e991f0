//! The four-block multimodal transformer: ViT-style image encoder,
//! bidirectional question encoder, image-grounded question encoder
//! (cross-attention from question tokens onto image tokens), and a causal
//! answer decoder that cross-attends onto the grounded question, topped by
//! an MLP token head.
//!
//! Pre-layer-norm residual blocks throughout. Text positions are sinusoidal,
//! patch positions learned. All parameters are named with dotted paths that
//! double as checkpoint keys.

mod attention;
mod io;

pub use attention::{
    attention, causal_mask, padding_mask, sinusoidal_positions, AttentionWeights, ProjectionSet,
};
pub use io::{load_model, save_model, vocab_fingerprint, CheckpointMeta};

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use ddvqa_tensor::Tensor;

use crate::image::FaceImage;

pub const LN_EPS: f64 = 1e-5;

#[derive(Debug, thiserror::Error)]
pub enum ModelError {
    #[error("tensor op failed: {0}")]
    Tensor(#[from] ddvqa_tensor::TensorError),
    #[error("bad model config: {0}")]
    Config(String),
    #[error("image is {got_h}x{got_w}x{got_c}, model expects {want_h}x{want_w}x{want_c}")]
    ImageSize {
        got_h: usize,
        got_w: usize,
        got_c: usize,
        want_h: usize,
        want_w: usize,
        want_c: usize,
    },
    #[error("sequence of {got} tokens exceeds limit {limit}")]
    SequenceTooLong { got: usize, limit: usize },
    #[error("checkpoint mismatch: {0}")]
    Checkpoint(String),
    #[error("checkpoint container: {0}")]
    Container(#[from] ddvqa_tensor::checkpoint::CheckpointError),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub d_model: usize,
    pub n_heads: usize,
    pub n_layers_text: usize,
    pub n_layers_image: usize,
    pub n_layers_decoder: usize,
    pub patch_size: usize,
    pub image_height: usize,
    pub image_width: usize,
    pub channels: usize,
    pub vocab_size: usize,
    pub max_q_len: usize,
    pub max_a_len: usize,
}

impl ModelConfig {
    /// Desk-scale defaults: d=128, 4 heads, 2 layers per stack, 8x8 patches
    /// on 64x64 images.
    pub fn desk(vocab_size: usize) -> ModelConfig {
        ModelConfig {
            d_model: 128,
            n_heads: 4,
            n_layers_text: 2,
            n_layers_image: 2,
            n_layers_decoder: 2,
            patch_size: 8,
            image_height: 64,
            image_width: 64,
            channels: 3,
            vocab_size,
            max_q_len: ddvqa_text::MAX_QUESTION_LEN,
            max_a_len: ddvqa_text::MAX_ANSWER_LEN,
        }
    }

    /// Smallest config that still exercises every block; used by the
    /// gradient-check suites.
    pub fn tiny(vocab_size: usize) -> ModelConfig {
        ModelConfig {
            d_model: 16,
            n_heads: 2,
            n_layers_text: 2,
            n_layers_image: 2,
            n_layers_decoder: 2,
            patch_size: 8,
            image_height: 16,
            image_width: 16,
            channels: 3,
            vocab_size,
            max_q_len: ddvqa_text::MAX_QUESTION_LEN,
            max_a_len: ddvqa_text::MAX_ANSWER_LEN,
        }
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        if self.d_model % self.n_heads != 0 {
            return Err(ModelError::Config(format!(
                "d_model {} not divisible by {} heads",
                self.d_model, self.n_heads
            )));
        }
        if self.image_height % self.patch_size != 0 || self.image_width % self.patch_size != 0 {
            return Err(ModelError::Config(format!(
                "image {}x{} not divisible by patch {}",
                self.image_height, self.image_width, self.patch_size
            )));
        }
        if self.vocab_size == 0 {
            return Err(ModelError::Config("empty vocabulary".into()));
        }
        Ok(())
    }

    pub fn grid(&self) -> (usize, usize) {
        (
            self.image_height / self.patch_size,
            self.image_width / self.patch_size,
        )
    }

    pub fn n_patches(&self) -> usize {
        let (gh, gw) = self.grid();
        gh * gw
    }

    fn ffn_dim(&self) -> usize {
        4 * self.d_model
    }

    fn max_decoder_len(&self) -> usize {
        // [CLS] [BOS] tokens [SEP]
        self.max_a_len + 3
    }
}

// ── parameter containers ────────────────────────────────────────────

struct Linear {
    w: Tensor,
    b: Tensor,
}

struct Norm {
    gain: Tensor,
    bias: Tensor,
}

struct AttnParams {
    wq: Linear,
    wk: Linear,
    wv: Linear,
    wo: Linear,
}

impl AttnParams {
    fn proj(&self) -> attention::ProjectionSet<'_> {
        attention::ProjectionSet {
            wq: &self.wq.w,
            bq: &self.wq.b,
            wk: &self.wk.w,
            bk: &self.wk.b,
            wv: &self.wv.w,
            bv: &self.wv.b,
            wo: &self.wo.w,
            bo: &self.wo.b,
        }
    }
}

struct Block {
    ln1: Norm,
    attn: AttnParams,
    /// Decoder blocks carry a second, cross-modal attention.
    cross: Option<(Norm, AttnParams)>,
    ln2: Norm,
    ffn1: Linear,
    ffn2: Linear,
}

pub struct DdvqaModel {
    config: ModelConfig,
    token_embed: Tensor,
    image_cls: Tensor,
    patch_proj: Linear,
    image_pos: Tensor,
    image_blocks: Vec<Block>,
    image_ln: Norm,
    question_blocks: Vec<Block>,
    question_ln: Norm,
    ground_blocks: Vec<Block>,
    ground_ln: Norm,
    decoder_blocks: Vec<Block>,
    decoder_ln: Norm,
    head1: Linear,
    head2: Linear,
}

fn randn(rng: &mut ChaCha8Rng) -> f64 {
    // Box-Muller; one sample per call keeps the stream layout obvious.
    let u1: f64 = rng.gen::<f64>().max(1e-300);
    let u2: f64 = rng.gen();
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}

fn init_matrix(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Tensor {
    let data = (0..rows * cols).map(|_| 0.02 * randn(rng)).collect();
    Tensor::param(vec![rows, cols], data).expect("shape matches data")
}

fn init_linear(in_dim: usize, out_dim: usize, rng: &mut ChaCha8Rng) -> Linear {
    Linear {
        w: init_matrix(in_dim, out_dim, rng),
        b: Tensor::param(vec![out_dim], vec![0.0; out_dim]).unwrap(),
    }
}

fn init_norm(d: usize) -> Norm {
    Norm {
        gain: Tensor::param(vec![d], vec![1.0; d]).unwrap(),
        bias: Tensor::param(vec![d], vec![0.0; d]).unwrap(),
    }
}

fn init_attn(d: usize, rng: &mut ChaCha8Rng) -> AttnParams {
    AttnParams {
        wq: init_linear(d, d, rng),
        wk: init_linear(d, d, rng),
        wv: init_linear(d, d, rng),
        wo: init_linear(d, d, rng),
    }
}

fn init_block(d: usize, ffn: usize, cross: bool, rng: &mut ChaCha8Rng) -> Block {
    Block {
        ln1: init_norm(d),
        attn: init_attn(d, rng),
        cross: cross.then(|| (init_norm(d), init_attn(d, rng))),
        ln2: init_norm(d),
        ffn1: init_linear(d, ffn, rng),
        ffn2: init_linear(ffn, d, rng),
    }
}

impl DdvqaModel {
    pub fn new(config: ModelConfig, rng: &mut ChaCha8Rng) -> Result<DdvqaModel, ModelError> {
        config.validate()?;
        let d = config.d_model;
        let ffn = config.ffn_dim();
        let patch_dim = config.patch_size * config.patch_size * config.channels;
        let model = DdvqaModel {
            token_embed: init_matrix(config.vocab_size, d, rng),
            image_cls: init_matrix(1, d, rng),
            patch_proj: init_linear(patch_dim, d, rng),
            image_pos: init_matrix(config.n_patches() + 1, d, rng),
            image_blocks: (0..config.n_layers_image)
                .map(|_| init_block(d, ffn, false, rng))
                .collect(),
            image_ln: init_norm(d),
            question_blocks: (0..config.n_layers_text)
                .map(|_| init_block(d, ffn, false, rng))
                .collect(),
            question_ln: init_norm(d),
            ground_blocks: (0..config.n_layers_text)
                .map(|_| init_block(d, ffn, false, rng))
                .collect(),
            ground_ln: init_norm(d),
            decoder_blocks: (0..config.n_layers_decoder)
                .map(|_| init_block(d, ffn, true, rng))
                .collect(),
            decoder_ln: init_norm(d),
            head1: init_linear(d, d, rng),
            head2: init_linear(d, config.vocab_size, rng),
            config,
        };
        Ok(model)
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    // ── forward passes ──────────────────────────────────────────────

    /// Patchify, embed, prepend [CLS], add positions, run the image stack.
    /// Row 0 of the output is the global image representation.
    pub fn encode_image(&self, image: &FaceImage) -> Result<Tensor, ModelError> {
        let cfg = &self.config;
        if image.height != cfg.image_height
            || image.width != cfg.image_width
            || image.channels != cfg.channels
        {
            return Err(ModelError::ImageSize {
                got_h: image.height,
                got_w: image.width,
                got_c: image.channels,
                want_h: cfg.image_height,
                want_w: cfg.image_width,
                want_c: cfg.channels,
            });
        }
        let patches = patchify(image, cfg.patch_size);
        let projected = patches
            .matmul(&self.patch_proj.w)?
            .add_bias(&self.patch_proj.b)?;
        let mut x = Tensor::concat0(&[self.image_cls.clone(), projected])?.add(&self.image_pos)?;
        for block in &self.image_blocks {
            x = self.self_block(&x, block, None)?;
        }
        Ok(x.layer_norm(&self.image_ln.gain, &self.image_ln.bias, LN_EPS)?)
    }

    /// Bidirectional self-attention over the framed question; [PAD] keys
    /// carry no attention mass.
    pub fn encode_question(&self, ids: &[usize]) -> Result<Tensor, ModelError> {
        if ids.len() > self.config.max_q_len {
            return Err(ModelError::SequenceTooLong {
                got: ids.len(),
                limit: self.config.max_q_len,
            });
        }
        let mut x = self.embed_tokens(ids)?;
        let pad = padding_mask(ids.len(), &pad_flags(ids));
        for block in &self.question_blocks {
            x = self.self_block(&x, block, pad.as_ref())?;
        }
        Ok(x.layer_norm(&self.question_ln.gain, &self.question_ln.bias, LN_EPS)?)
    }

    /// Cross-attention stack injecting image tokens into the question
    /// representation; output has the question's sequence length.
    pub fn ground_question(
        &self,
        question: &Tensor,
        image_reps: &Tensor,
        mut trace: Option<&mut Vec<AttentionWeights>>,
    ) -> Result<Tensor, ModelError> {
        if question.shape().last() != image_reps.shape().last() {
            return Err(ModelError::Config(format!(
                "d_model mismatch: question {:?} vs image {:?}",
                question.shape(),
                image_reps.shape()
            )));
        }
        let mut x = question.clone();
        for block in &self.ground_blocks {
            let normed = x.layer_norm(&block.ln1.gain, &block.ln1.bias, LN_EPS)?;
            let (attended, weights) = attention(
                &normed,
                image_reps,
                block.attn.proj(),
                self.config.n_heads,
                None,
                trace.is_some(),
            )?;
            if let Some(t) = trace.as_deref_mut() {
                t.push(weights.expect("weights recorded when requested"));
            }
            x = x.add(&attended)?;
            x = self.ffn_sublayer(&x, block)?;
        }
        Ok(x.layer_norm(&self.ground_ln.gain, &self.ground_ln.bias, LN_EPS)?)
    }

    /// Convenience: encode both inputs and ground the question.
    pub fn ground_from_inputs(
        &self,
        image: &FaceImage,
        question_ids: &[usize],
        trace: Option<&mut Vec<AttentionWeights>>,
    ) -> Result<Tensor, ModelError> {
        let image_reps = self.encode_image(image)?;
        let question = self.encode_question(question_ids)?;
        self.ground_question(&question, &image_reps, trace)
    }

    /// Causal decoder over an answer prefix. Returns next-token logits per
    /// position.
    pub fn decode_step(&self, prefix_ids: &[usize], grounded: &Tensor) -> Result<Tensor, ModelError> {
        let hidden = self.decoder_hidden(prefix_ids, grounded, true)?;
        self.token_head(&hidden)
    }

    /// [CLS]-position row of the final decoder layer over a full answer,
    /// run with bidirectional self-attention (the representation mode of
    /// the same weights; generation stays causal).
    pub fn text_cls_representation(
        &self,
        answer_ids: &[usize],
        grounded: &Tensor,
    ) -> Result<Tensor, ModelError> {
        let hidden = self.decoder_hidden(answer_ids, grounded, false)?;
        let d = self.config.d_model;
        Ok(hidden.slice_rows(0, 1)?.reshape(vec![d])?)
    }

    /// Row 0 of the image encoder output.
    pub fn image_cls_representation(&self, image: &FaceImage) -> Result<Tensor, ModelError> {
        let reps = self.encode_image(image)?;
        let d = self.config.d_model;
        Ok(reps.slice_rows(0, 1)?.reshape(vec![d])?)
    }

    /// Patch-token outputs (rows 1..=m) for detector fusion, in row-major
    /// grid order.
    pub fn patch_features(&self, image: &FaceImage) -> Result<Tensor, ModelError> {
        let reps = self.encode_image(image)?;
        let m = self.config.n_patches();
        Ok(reps.slice_rows(1, m + 1)?)
    }

    fn decoder_hidden(
        &self,
        ids: &[usize],
        grounded: &Tensor,
        causal: bool,
    ) -> Result<Tensor, ModelError> {
        if ids.len() > self.config.max_decoder_len() {
            return Err(ModelError::SequenceTooLong {
                got: ids.len(),
                limit: self.config.max_decoder_len(),
            });
        }
        let mut x = self.embed_tokens(ids)?;
        let mask = causal.then(|| causal_mask(ids.len()));
        for block in &self.decoder_blocks {
            x = self.self_block(&x, block, mask.as_ref())?;
            let (ln_cross, cross) = block.cross.as_ref().expect("decoder block has cross");
            let normed = x.layer_norm(&ln_cross.gain, &ln_cross.bias, LN_EPS)?;
            let (attended, _) = attention(
                &normed,
                grounded,
                cross.proj(),
                self.config.n_heads,
                None,
                false,
            )?;
            x = x.add(&attended)?;
            x = self.ffn_sublayer(&x, block)?;
        }
        Ok(x.layer_norm(&self.decoder_ln.gain, &self.decoder_ln.bias, LN_EPS)?)
    }

    fn token_head(&self, hidden: &Tensor) -> Result<Tensor, ModelError> {
        Ok(hidden
            .matmul(&self.head1.w)?
            .add_bias(&self.head1.b)?
            .gelu()
            .matmul(&self.head2.w)?
            .add_bias(&self.head2.b)?)
    }

    fn embed_tokens(&self, ids: &[usize]) -> Result<Tensor, ModelError> {
        let embedded = self.token_embed.lookup(ids)?;
        let pos = sinusoidal_positions(ids.len(), self.config.d_model);
        Ok(embedded.add(&pos)?)
    }

    /// Pre-norm self-attention plus FFN sublayers, except that the FFN half
    /// lives in `ffn_sublayer` so cross-attention blocks can interleave.
    fn self_block(
        &self,
        x: &Tensor,
        block: &Block,
        mask: Option<&Tensor>,
    ) -> Result<Tensor, ModelError> {
        let normed = x.layer_norm(&block.ln1.gain, &block.ln1.bias, LN_EPS)?;
        let (attended, _) = attention(
            &normed,
            &normed,
            block.attn.proj(),
            self.config.n_heads,
            mask,
            false,
        )?;
        let x = x.add(&attended)?;
        if block.cross.is_some() {
            // Decoder blocks run their FFN after the cross sublayer.
            return Ok(x);
        }
        self.ffn_sublayer(&x, block)
    }

    fn ffn_sublayer(&self, x: &Tensor, block: &Block) -> Result<Tensor, ModelError> {
        let normed = x.layer_norm(&block.ln2.gain, &block.ln2.bias, LN_EPS)?;
        let hidden = normed
            .matmul(&block.ffn1.w)?
            .add_bias(&block.ffn1.b)?
            .gelu()
            .matmul(&block.ffn2.w)?
            .add_bias(&block.ffn2.b)?;
        Ok(x.add(&hidden)?)
    }

    // ── parameter access ────────────────────────────────────────────

    /// Visits every trainable tensor in a fixed order with its dotted name.
    pub fn for_each_param_mut(&mut self, f: &mut dyn FnMut(&str, &mut Tensor)) {
        f("token_embed", &mut self.token_embed);
        f("image.cls", &mut self.image_cls);
        visit_linear("image.patch_proj", &mut self.patch_proj, f);
        f("image.pos", &mut self.image_pos);
        visit_blocks("image", &mut self.image_blocks, f);
        visit_norm("image.final_ln", &mut self.image_ln, f);
        visit_blocks("question", &mut self.question_blocks, f);
        visit_norm("question.final_ln", &mut self.question_ln, f);
        visit_blocks("ground", &mut self.ground_blocks, f);
        visit_norm("ground.final_ln", &mut self.ground_ln, f);
        visit_blocks("decoder", &mut self.decoder_blocks, f);
        visit_norm("decoder.final_ln", &mut self.decoder_ln, f);
        visit_linear("head.fc1", &mut self.head1, f);
        visit_linear("head.fc2", &mut self.head2, f);
    }

    /// Cheap snapshot of (name, tensor handle) pairs in visit order.
    pub fn named_parameters(&mut self) -> Vec<(String, Tensor)> {
        let mut out = Vec::new();
        self.for_each_param_mut(&mut |name, tensor| {
            out.push((name.to_string(), tensor.clone()));
        });
        out
    }

    pub fn zero_grads(&mut self) {
        self.for_each_param_mut(&mut |_, tensor| tensor.zero_grad());
    }
}

fn visit_linear(prefix: &str, linear: &mut Linear, f: &mut dyn FnMut(&str, &mut Tensor)) {
    f(&format!("{prefix}.w"), &mut linear.w);
    f(&format!("{prefix}.b"), &mut linear.b);
}

fn visit_norm(prefix: &str, norm: &mut Norm, f: &mut dyn FnMut(&str, &mut Tensor)) {
    f(&format!("{prefix}.gain"), &mut norm.gain);
    f(&format!("{prefix}.bias"), &mut norm.bias);
}

fn visit_attn(prefix: &str, attn: &mut AttnParams, f: &mut dyn FnMut(&str, &mut Tensor)) {
    visit_linear(&format!("{prefix}.wq"), &mut attn.wq, f);
    visit_linear(&format!("{prefix}.wk"), &mut attn.wk, f);
    visit_linear(&format!("{prefix}.wv"), &mut attn.wv, f);
    visit_linear(&format!("{prefix}.wo"), &mut attn.wo, f);
}

fn visit_blocks(stack: &str, blocks: &mut [Block], f: &mut dyn FnMut(&str, &mut Tensor)) {
    for (i, block) in blocks.iter_mut().enumerate() {
        let p = format!("{stack}.block{i}");
        visit_norm(&format!("{p}.ln1"), &mut block.ln1, f);
        visit_attn(&format!("{p}.attn"), &mut block.attn, f);
        if let Some((ln_cross, cross)) = block.cross.as_mut() {
            visit_norm(&format!("{p}.ln_cross"), ln_cross, f);
            visit_attn(&format!("{p}.cross"), cross, f);
        }
        visit_norm(&format!("{p}.ln2"), &mut block.ln2, f);
        visit_linear(&format!("{p}.ffn1"), &mut block.ffn1, f);
        visit_linear(&format!("{p}.ffn2"), &mut block.ffn2, f);
    }
}

fn pad_flags(ids: &[usize]) -> Vec<bool> {
    ids.iter().map(|&id| id == ddvqa_text::PAD).collect()
}

/// Row-major patch matrix `[m, patch*patch*channels]` from an HWC image.
fn patchify(image: &FaceImage, patch: usize) -> Tensor {
    let grid_h = image.height / patch;
    let grid_w = image.width / patch;
    let c = image.channels;
    let mut data = Vec::with_capacity(grid_h * grid_w * patch * patch * c);
    for gy in 0..grid_h {
        for gx in 0..grid_w {
            for py in 0..patch {
                for px in 0..patch {
                    for ch in 0..c {
                        data.push(image.at(gy * patch + py, gx * patch + px, ch));
                    }
                }
            }
        }
    }
    Tensor::from_vec(vec![grid_h * grid_w, patch * patch * c], data).expect("patch layout")
}
