//! Greedy answer generation, verdict extraction from the first sentence,
//! and attention-map export from the grounding stack.

use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use ddvqa_metrics::Prediction;
use ddvqa_text::{SequenceKind, Vocabulary, BOS, CLS, PAD, SEP};

use crate::image::FaceImage;
use crate::model::{AttentionWeights, DdvqaModel, ModelError};

#[derive(Debug, thiserror::Error)]
pub enum InferenceError {
    #[error("model: {0}")]
    Model(#[from] ModelError),
    #[error("tokenizer: {0}")]
    Tokenizer(#[from] ddvqa_text::TokenizerError),
    #[error("attention recording produced no maps")]
    RecordingDisabled,
    #[error("inference io {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    Eos,
    MaxLen,
}

#[derive(Debug, Clone)]
pub struct GeneratedAnswer {
    pub text: String,
    pub token_ids: Vec<usize>,
    pub verdict: Prediction,
    pub stop_reason: StopReason,
}

/// Greedy argmax decoding from `[CLS] [BOS]`, stopping at `[SEP]` or after
/// `max_tokens` generated tokens. [PAD], [CLS] and [BOS] are never emitted.
pub fn generate(
    model: &DdvqaModel,
    vocab: &Vocabulary,
    image: &FaceImage,
    question: &str,
    max_tokens: usize,
) -> Result<GeneratedAnswer, InferenceError> {
    let question_ids = vocab.encode(question, SequenceKind::Question).ids;
    let grounded = model.ground_from_inputs(image, &question_ids, None)?;

    let mut prefix = vec![CLS, BOS];
    let mut generated = Vec::new();
    let mut stop_reason = StopReason::MaxLen;
    for _ in 0..max_tokens {
        let logits = model.decode_step(&prefix, &grounded)?;
        let width = logits.shape()[1];
        let last = &logits.data()[(prefix.len() - 1) * width..prefix.len() * width];
        let next = argmax_excluding(last, &[PAD, CLS, BOS]);
        if next == SEP {
            stop_reason = StopReason::Eos;
            break;
        }
        generated.push(next);
        prefix.push(next);
    }
    let text = vocab.decode(&generated)?;
    Ok(GeneratedAnswer {
        verdict: extract_verdict(&text),
        text,
        token_ids: generated,
        stop_reason,
    })
}

fn argmax_excluding(row: &[f64], excluded: &[usize]) -> usize {
    let mut best = usize::MAX;
    let mut best_value = f64::NEG_INFINITY;
    for (id, &value) in row.iter().enumerate() {
        if excluded.contains(&id) {
            continue;
        }
        if value > best_value {
            best_value = value;
            best = id;
        }
    }
    best
}

/// Scans the first sentence for "real"/"fake" tokens. Both or neither make
/// the verdict undetermined, which scores as a wrong prediction.
pub fn extract_verdict(text: &str) -> Prediction {
    let first_sentence = text
        .split(['.', '!', '?'])
        .next()
        .unwrap_or("");
    let tokens = ddvqa_text::normalize_tokens(first_sentence);
    let has_fake = tokens.iter().any(|t| t == "fake");
    let has_real = tokens.iter().any(|t| t == "real");
    match (has_fake, has_real) {
        (true, false) => Prediction::Fake,
        (false, true) => Prediction::Real,
        _ => Prediction::Undetermined,
    }
}

// ── generation output file ──────────────────────────────────────────

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GenerationRow {
    pub image_id: String,
    pub question: String,
    pub generated: String,
    pub verdict: String,
    pub gold_verdict: String,
    pub gold_answers: Vec<String>,
}

pub fn write_generation_jsonl(
    path: &Path,
    rows: &[GenerationRow],
) -> Result<(), InferenceError> {
    let to_io = |source| InferenceError::Io {
        path: path.display().to_string(),
        source,
    };
    let mut file = std::fs::File::create(path).map_err(to_io)?;
    for row in rows {
        let line = serde_json::to_string(row).expect("row serializes");
        writeln!(file, "{line}").map_err(to_io)?;
    }
    Ok(())
}

// ── attention export ────────────────────────────────────────────────

/// One head's post-softmax grounding attention: query tokens x image keys.
#[derive(Debug, Clone)]
pub struct AttentionMap {
    pub layer: usize,
    pub head: usize,
    /// Row-major query_len x key_len.
    pub weights: Vec<f64>,
    pub query_len: usize,
    pub key_len: usize,
    pub query_tokens: Vec<String>,
}

#[derive(Debug, Clone)]
pub struct AttentionExport {
    pub maps: Vec<AttentionMap>,
    /// Head- and query-averaged weight per patch, row-major on the grid.
    pub averaged_grid: Vec<f64>,
    /// The [CLS] key column of the averaged map, reported separately.
    pub cls_weight: f64,
    pub grid_height: usize,
    pub grid_width: usize,
}

/// Per-head maps of the last grounding layer plus the head-averaged patch
/// grid.
pub fn export_attention(
    model: &DdvqaModel,
    vocab: &Vocabulary,
    image: &FaceImage,
    question: &str,
) -> Result<AttentionExport, InferenceError> {
    let question_ids = vocab.encode(question, SequenceKind::Question).ids;
    let mut trace: Vec<AttentionWeights> = Vec::new();
    model.ground_from_inputs(image, &question_ids, Some(&mut trace))?;
    let Some(last) = trace.last() else {
        return Err(InferenceError::RecordingDisabled);
    };
    let layer = trace.len() - 1;
    let query_tokens: Vec<String> = question_ids
        .iter()
        .map(|&id| vocab.token_of(id).unwrap_or("?").to_string())
        .collect();

    let maps: Vec<AttentionMap> = last
        .heads
        .iter()
        .enumerate()
        .map(|(head, weights)| AttentionMap {
            layer,
            head,
            weights: weights.clone(),
            query_len: last.q_len,
            key_len: last.k_len,
            query_tokens: query_tokens.clone(),
        })
        .collect();

    // Average over heads and query rows; key 0 is [CLS].
    let mut averaged = vec![0.0; last.k_len];
    for head in &last.heads {
        for row in head.chunks(last.k_len) {
            for (acc, w) in averaged.iter_mut().zip(row) {
                *acc += w;
            }
        }
    }
    let denom = (last.heads.len() * last.q_len) as f64;
    for w in &mut averaged {
        *w /= denom;
    }
    let (grid_height, grid_width) = model.config().grid();
    Ok(AttentionExport {
        maps,
        cls_weight: averaged[0],
        averaged_grid: averaged[1..].to_vec(),
        grid_height,
        grid_width,
    })
}

#[derive(Serialize)]
struct AttentionManifest {
    layer: usize,
    heads: usize,
    query_len: usize,
    key_len: usize,
    grid_height: usize,
    grid_width: usize,
    cls_weight: f64,
    query_tokens: Vec<String>,
    files: Vec<String>,
}

/// Writes one CSV grid per head plus the averaged patch grid and a JSON
/// manifest into `dir`.
pub fn write_attention_export(
    dir: &Path,
    export: &AttentionExport,
) -> Result<PathBuf, InferenceError> {
    let to_io = |path: &Path| {
        let path = path.display().to_string();
        move |source| InferenceError::Io {
            path: path.clone(),
            source,
        }
    };
    std::fs::create_dir_all(dir).map_err(to_io(dir))?;
    let mut files = Vec::new();
    for map in &export.maps {
        let name = format!("attn_layer{}_head{}.csv", map.layer, map.head);
        let path = dir.join(&name);
        let mut text = String::new();
        for row in map.weights.chunks(map.key_len) {
            let cells: Vec<String> = row.iter().map(|w| w.to_string()).collect();
            text.push_str(&cells.join(","));
            text.push('\n');
        }
        std::fs::write(&path, text).map_err(to_io(&path))?;
        files.push(name);
    }
    let grid_path = dir.join("attn_grid.csv");
    let mut text = String::new();
    for row in export.averaged_grid.chunks(export.grid_width) {
        let cells: Vec<String> = row.iter().map(|w| w.to_string()).collect();
        text.push_str(&cells.join(","));
        text.push('\n');
    }
    std::fs::write(&grid_path, text).map_err(to_io(&grid_path))?;
    files.push("attn_grid.csv".to_string());

    let first = export.maps.first().ok_or(InferenceError::RecordingDisabled)?;
    let manifest = AttentionManifest {
        layer: first.layer,
        heads: export.maps.len(),
        query_len: first.query_len,
        key_len: first.key_len,
        grid_height: export.grid_height,
        grid_width: export.grid_width,
        cls_weight: export.cls_weight,
        query_tokens: first.query_tokens.clone(),
        files,
    };
    let manifest_path = dir.join("attention_manifest.json");
    std::fs::write(
        &manifest_path,
        serde_json::to_string_pretty(&manifest).expect("manifest serializes"),
    )
    .map_err(to_io(&manifest_path))?;
    Ok(manifest_path)
}
