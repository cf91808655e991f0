//! Procedural desk-scale corpus: face-like layouts (ellipse face, brow
//! bars, eye disks, nose wedge, mouth bar) with planted perturbations on
//! fake images, paired with QA records that state exactly the planted
//! phrases.

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::{
    augment_general_answer, fine_grained_question, render_answer, split_for, Component,
    DatasetError, Manipulation, QARecord, Verdict, GENERAL_QUESTION,
};
use crate::image::FaceImage;
use crate::rng::derive_indexed;

/// One plantable perturbation: which component it belongs to, the phrase
/// annotated for it, and the pixel effect.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ArtifactKind {
    OverlappedEyebrows,
    BrokenEyebrows,
    BlurryEyebrows,
    InconsistentColorSkin,
    BoundariesSkin,
    BlurryEyes,
    OverlyLargeEyes,
    UnnaturallyCurvedNose,
    BlurryMouth,
    UnnaturalColorMouth,
}

impl ArtifactKind {
    pub const ALL: [ArtifactKind; 10] = [
        ArtifactKind::OverlappedEyebrows,
        ArtifactKind::BrokenEyebrows,
        ArtifactKind::BlurryEyebrows,
        ArtifactKind::InconsistentColorSkin,
        ArtifactKind::BoundariesSkin,
        ArtifactKind::BlurryEyes,
        ArtifactKind::OverlyLargeEyes,
        ArtifactKind::UnnaturallyCurvedNose,
        ArtifactKind::BlurryMouth,
        ArtifactKind::UnnaturalColorMouth,
    ];

    /// Artifact kinds used by detector-training corpora; the rest stay
    /// held out for cross-testing.
    pub fn base_set() -> Vec<ArtifactKind> {
        vec![
            ArtifactKind::OverlappedEyebrows,
            ArtifactKind::InconsistentColorSkin,
            ArtifactKind::OverlyLargeEyes,
            ArtifactKind::UnnaturalColorMouth,
        ]
    }

    /// Artifact kinds reserved for the cross-testing corpus.
    pub fn held_out_set() -> Vec<ArtifactKind> {
        vec![
            ArtifactKind::BrokenEyebrows,
            ArtifactKind::BlurryEyebrows,
            ArtifactKind::BoundariesSkin,
            ArtifactKind::BlurryEyes,
            ArtifactKind::UnnaturallyCurvedNose,
            ArtifactKind::BlurryMouth,
        ]
    }

    pub fn component(self) -> Component {
        match self {
            ArtifactKind::OverlappedEyebrows
            | ArtifactKind::BrokenEyebrows
            | ArtifactKind::BlurryEyebrows => Component::Eyebrows,
            ArtifactKind::InconsistentColorSkin | ArtifactKind::BoundariesSkin => Component::Skin,
            ArtifactKind::BlurryEyes | ArtifactKind::OverlyLargeEyes => Component::Eyes,
            ArtifactKind::UnnaturallyCurvedNose => Component::Nose,
            ArtifactKind::BlurryMouth | ArtifactKind::UnnaturalColorMouth => Component::Mouth,
        }
    }

    pub fn phrase(self) -> &'static str {
        match self {
            ArtifactKind::OverlappedEyebrows => "overlapped",
            ArtifactKind::BrokenEyebrows => "broken",
            ArtifactKind::BlurryEyebrows => "blurry",
            ArtifactKind::InconsistentColorSkin => "inconsistent color",
            ArtifactKind::BoundariesSkin => "boundaries",
            ArtifactKind::BlurryEyes => "blurry",
            ArtifactKind::OverlyLargeEyes => "overly large",
            ArtifactKind::UnnaturallyCurvedNose => "unnaturally curved",
            ArtifactKind::BlurryMouth => "blurry",
            ArtifactKind::UnnaturalColorMouth => "unnatural color",
        }
    }
}

fn real_phrase(component: Component) -> &'static str {
    match component {
        Component::WholeFace => "complete face features",
        Component::Eyebrows => "arched",
        Component::Skin => "smooth",
        Component::Eyes => "round",
        Component::Nose => "straight",
        Component::Mouth => "full",
    }
}

const GENERAL_FAKE_PHRASE: &str = "obvious manipulated region";

#[derive(Debug, Clone)]
pub struct SynthConfig {
    pub n_images: usize,
    pub p_fake: f64,
    pub image_size: usize,
    pub artifact_kinds: Vec<ArtifactKind>,
    /// Prefix for generated image ids.
    pub id_prefix: String,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            n_images: 300,
            p_fake: 0.5,
            image_size: 64,
            artifact_kinds: ArtifactKind::ALL.to_vec(),
            id_prefix: "synth".to_string(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct SyntheticImage {
    pub image_id: String,
    pub image: FaceImage,
    pub planted_artifacts: Vec<(Component, String)>,
    pub verdict: Verdict,
}

// ── face rendering ──────────────────────────────────────────────────

struct Layout {
    cx: f64,
    cy: f64,
    brow_y: f64,
    eye_y: f64,
    eye_r: f64,
    mouth_y: f64,
}

fn base_layout(rng: &mut ChaCha8Rng) -> Layout {
    Layout {
        cx: 0.5 + rng.gen_range(-0.03..0.03),
        cy: 0.54 + rng.gen_range(-0.02..0.02),
        brow_y: 0.36 + rng.gen_range(-0.02..0.02),
        eye_y: 0.46 + rng.gen_range(-0.015..0.015),
        eye_r: 0.045 + rng.gen_range(-0.008..0.008),
        mouth_y: 0.74 + rng.gen_range(-0.02..0.02),
    }
}

fn fill_rect(img: &mut FaceImage, y0: f64, y1: f64, x0: f64, x1: f64, color: [f64; 3]) {
    let (h, w) = (img.height as f64, img.width as f64);
    // Thin features still rasterize to at least one row/column.
    let ys = ((y0 * h).max(0.0) as usize).min(img.height.saturating_sub(1));
    let ye = (((y1 * h) as usize).max(ys + 1)).min(img.height);
    let xs = ((x0 * w).max(0.0) as usize).min(img.width.saturating_sub(1));
    let xe = (((x1 * w) as usize).max(xs + 1)).min(img.width);
    for y in ys..ye {
        for x in xs..xe {
            for (c, &v) in color.iter().enumerate() {
                img.set(y, x, c, v);
            }
        }
    }
}

fn fill_ellipse(img: &mut FaceImage, cy: f64, cx: f64, ry: f64, rx: f64, color: [f64; 3]) {
    for y in 0..img.height {
        for x in 0..img.width {
            let dy = (y as f64 / img.height as f64 - cy) / ry;
            let dx = (x as f64 / img.width as f64 - cx) / rx;
            if dy * dy + dx * dx <= 1.0 {
                for (c, &v) in color.iter().enumerate() {
                    img.set(y, x, c, v);
                }
            }
        }
    }
}

fn box_blur_region(img: &mut FaceImage, y0: f64, y1: f64, x0: f64, x1: f64, radius: usize) {
    let (h, w) = (img.height, img.width);
    let ys = ((y0 * h as f64) as usize).min(h);
    let ye = ((y1 * h as f64) as usize).min(h);
    let xs = ((x0 * w as f64) as usize).min(w);
    let xe = ((x1 * w as f64) as usize).min(w);
    let source = img.pixels.clone();
    let channels = img.channels;
    let at = move |y: usize, x: usize, c: usize| source[(y * w + x) * channels + c];
    for y in ys..ye {
        for x in xs..xe {
            for c in 0..img.channels {
                let mut sum = 0.0;
                let mut count = 0.0;
                for dy in y.saturating_sub(radius)..=(y + radius).min(h - 1) {
                    for dx in x.saturating_sub(radius)..=(x + radius).min(w - 1) {
                        sum += at(dy, dx, c);
                        count += 1.0;
                    }
                }
                img.set(y, x, c, sum / count);
            }
        }
    }
}

const SKIN: [f64; 3] = [0.85, 0.72, 0.60];
const DARK: [f64; 3] = [0.18, 0.12, 0.08];
const MOUTH: [f64; 3] = [0.72, 0.30, 0.28];

fn draw_brows(img: &mut FaceImage, l: &Layout, lift: f64) {
    for side in [-1.0, 1.0f64] {
        let x = l.cx + side * 0.16;
        fill_rect(img, l.brow_y - 0.015 - lift, l.brow_y + 0.015 - lift, x - 0.09, x + 0.09, DARK);
    }
}

fn draw_eyes(img: &mut FaceImage, l: &Layout, scale: f64) {
    for side in [-1.0, 1.0f64] {
        let x = l.cx + side * 0.16;
        fill_ellipse(img, l.eye_y, x, l.eye_r * scale, l.eye_r * scale, [0.95, 0.95, 0.95]);
        fill_ellipse(img, l.eye_y, x, l.eye_r * scale * 0.5, l.eye_r * scale * 0.5, DARK);
    }
}

fn draw_nose(img: &mut FaceImage, l: &Layout, skew: f64) {
    let (h, w) = (img.height as f64, img.width as f64);
    let top = (0.50 * h) as usize;
    let bottom = (0.64 * h) as usize;
    for y in top..bottom.min(img.height) {
        let t = (y - top) as f64 / (bottom - top).max(1) as f64;
        let half_width = 0.012 + 0.03 * t;
        let center = l.cx + skew * t;
        let x0 = (((center - half_width) * w) as usize).min(img.width.saturating_sub(1));
        let x1 = ((((center + half_width) * w) as usize).max(x0 + 1)).min(img.width);
        for x in x0..x1 {
            for (c, &v) in [0.62, 0.48, 0.38].iter().enumerate() {
                img.set(y, x, c, v);
            }
        }
    }
}

fn draw_mouth(img: &mut FaceImage, l: &Layout, color: [f64; 3]) {
    fill_rect(img, l.mouth_y - 0.02, l.mouth_y + 0.02, l.cx - 0.11, l.cx + 0.11, color);
}

fn render_face(
    size: usize,
    artifacts: &[ArtifactKind],
    rng: &mut ChaCha8Rng,
) -> FaceImage {
    let mut img = FaceImage::blank(size, size, 3);
    // Background gradient.
    for y in 0..size {
        let shade = 0.25 + 0.1 * (y as f64 / size as f64);
        for x in 0..size {
            img.set(y, x, 0, shade);
            img.set(y, x, 1, shade + 0.05);
            img.set(y, x, 2, shade + 0.1);
        }
    }
    let l = base_layout(rng);
    fill_ellipse(&mut img, l.cy, l.cx, 0.42, 0.33, SKIN);

    let has = |k: ArtifactKind| artifacts.contains(&k);

    draw_brows(&mut img, &l, 0.0);
    if has(ArtifactKind::OverlappedEyebrows) {
        draw_brows(&mut img, &l, 0.045);
    }
    if has(ArtifactKind::BrokenEyebrows) {
        for side in [-1.0, 1.0f64] {
            let x = l.cx + side * 0.16;
            fill_rect(&mut img, l.brow_y - 0.02, l.brow_y + 0.02, x - 0.03, x + 0.03, SKIN);
        }
    }

    let eye_scale = if has(ArtifactKind::OverlyLargeEyes) { 1.9 } else { 1.0 };
    draw_eyes(&mut img, &l, eye_scale);

    let nose_skew = if has(ArtifactKind::UnnaturallyCurvedNose) { 0.07 } else { 0.0 };
    draw_nose(&mut img, &l, nose_skew);

    let mouth_color = if has(ArtifactKind::UnnaturalColorMouth) {
        [0.85, 0.9, 0.95]
    } else {
        MOUTH
    };
    draw_mouth(&mut img, &l, mouth_color);

    if has(ArtifactKind::InconsistentColorSkin) {
        fill_rect(&mut img, l.cy, l.cy + 0.14, l.cx + 0.05, l.cx + 0.22, [0.62, 0.85, 0.55]);
    }
    if has(ArtifactKind::BoundariesSkin) {
        fill_rect(&mut img, l.cy - 0.25, l.cy + 0.3, l.cx - 0.015, l.cx + 0.015, [0.45, 0.35, 0.3]);
    }
    if has(ArtifactKind::BlurryEyebrows) {
        box_blur_region(&mut img, l.brow_y - 0.07, l.brow_y + 0.05, l.cx - 0.3, l.cx + 0.3, 2);
    }
    if has(ArtifactKind::BlurryEyes) {
        box_blur_region(&mut img, l.eye_y - 0.07, l.eye_y + 0.07, l.cx - 0.3, l.cx + 0.3, 2);
    }
    if has(ArtifactKind::BlurryMouth) {
        box_blur_region(&mut img, l.mouth_y - 0.06, l.mouth_y + 0.06, l.cx - 0.2, l.cx + 0.2, 2);
    }
    img
}

// ── corpus generation ───────────────────────────────────────────────

/// Deterministic synthetic corpus: fake images get 1-3 planted artifacts on
/// distinct components, every annotated component yields one fine-grained
/// record, every image gets a general record, and splits follow the image
/// hash.
pub fn generate_synthetic_corpus(
    config: &SynthConfig,
    seed: u64,
) -> Result<(Vec<QARecord>, Vec<SyntheticImage>), DatasetError> {
    let mut records = Vec::new();
    let mut images = Vec::new();

    for idx in 0..config.n_images {
        let mut rng = derive_indexed(seed, "synth-image", idx as u64);
        let image_id = format!("{}-{idx:04}", config.id_prefix);
        let is_fake = rng.gen_bool(config.p_fake);

        let mut planted: Vec<ArtifactKind> = Vec::new();
        if is_fake {
            let count = rng.gen_range(1..=3usize.min(config.artifact_kinds.len()));
            let mut pool = config.artifact_kinds.clone();
            pool.shuffle(&mut rng);
            for kind in pool {
                if planted.len() >= count {
                    break;
                }
                if planted.iter().all(|p| p.component() != kind.component()) {
                    planted.push(kind);
                }
            }
            planted.sort();
        }

        let image = render_face(config.image_size, &planted, &mut rng);
        let verdict = if is_fake { Verdict::Fake } else { Verdict::Real };
        let manipulation = if is_fake {
            *Manipulation::FAKE_KINDS.as_slice().choose(&mut rng).unwrap()
        } else {
            Manipulation::Real
        };
        let split = split_for(&image_id);

        // Fine-grained records: fake components state the planted phrases,
        // plus one or two clean components annotated as real.
        let mut fine_reasons_pool: Vec<String> = Vec::new();
        let mut component_records: Vec<(Component, Verdict, Vec<String>)> = Vec::new();
        let fake_components: Vec<Component> = planted.iter().map(|k| k.component()).collect();
        for component in Component::FINE_GRAINED {
            let phrases: Vec<String> = planted
                .iter()
                .filter(|k| k.component() == component)
                .map(|k| k.phrase().to_string())
                .collect();
            if !phrases.is_empty() {
                for phrase in &phrases {
                    fine_reasons_pool.push(format!("{phrase} {}", component.noun()));
                }
                component_records.push((component, Verdict::Fake, phrases));
            } else if !fake_components.contains(&component) && rng.gen_bool(0.5) {
                component_records.push((
                    component,
                    Verdict::Real,
                    vec![real_phrase(component).to_string()],
                ));
            }
        }

        for (component, comp_verdict, reasons) in &component_records {
            let mut answers = vec![render_answer(*component, *comp_verdict, reasons)?];
            // A second annotator phrasing when several reasons exist.
            if reasons.len() >= 2 && rng.gen_bool(0.5) {
                answers.push(render_answer(*component, *comp_verdict, &reasons[..1])?);
            }
            records.push(QARecord {
                image_id: image_id.clone(),
                question: fine_grained_question(*component),
                component: *component,
                answers,
                verdict: *comp_verdict,
                split,
                manipulation,
            });
        }

        // General record, augmented with up to two fine-grained reasons.
        let general_reasons = if is_fake {
            vec![GENERAL_FAKE_PHRASE.to_string()]
        } else {
            vec![real_phrase(Component::WholeFace).to_string()]
        };
        let pool: Vec<String> = if is_fake {
            fine_reasons_pool
        } else {
            component_records
                .iter()
                .filter(|(_, v, _)| *v == Verdict::Real)
                .map(|(c, _, r)| format!("{} {}", r[0], c.noun()))
                .collect()
        };
        let general_answer = augment_general_answer(verdict, &general_reasons, &pool, &mut rng)?;
        records.push(QARecord {
            image_id: image_id.clone(),
            question: GENERAL_QUESTION.to_string(),
            component: Component::WholeFace,
            answers: vec![general_answer],
            verdict,
            split,
            manipulation,
        });

        images.push(SyntheticImage {
            image_id,
            image,
            planted_artifacts: planted
                .iter()
                .map(|k| (k.component(), k.phrase().to_string()))
                .collect(),
            verdict,
        });
    }
    Ok((records, images))
}

/// Clean procedural face keyed by the image id; stands in for real pixels
/// when a corpus is built from raw annotations alone.
pub fn placeholder_face(image_id: &str, size: usize) -> FaceImage {
    let seed = crate::rng::fnv1a64(image_id.as_bytes());
    let mut rng = derive_indexed(seed, "placeholder-face", 0);
    render_face(size, &[], &mut rng)
}

/// The fixed eight-pair suite used by the overfit recipe: eight 32x32
/// images, one single-answer record each, four fake and four real, all in
/// the training split.
pub fn overfit_corpus() -> (Vec<QARecord>, Vec<SyntheticImage>) {
    let specs: [(usize, Option<ArtifactKind>, Component); 8] = [
        (0, Some(ArtifactKind::OverlappedEyebrows), Component::Eyebrows),
        (1, Some(ArtifactKind::InconsistentColorSkin), Component::Skin),
        (2, Some(ArtifactKind::OverlyLargeEyes), Component::Eyes),
        (3, Some(ArtifactKind::UnnaturalColorMouth), Component::WholeFace),
        (4, None, Component::Eyebrows),
        (5, None, Component::Skin),
        (6, None, Component::Nose),
        (7, None, Component::WholeFace),
    ];
    let mut records = Vec::new();
    let mut images = Vec::new();
    for (idx, artifact, component) in specs {
        let mut rng = derive_indexed(1717, "overfit-image", idx as u64);
        let planted: Vec<ArtifactKind> = artifact.into_iter().collect();
        let image = render_face(32, &planted, &mut rng);
        let image_id = format!("overfit-{idx}");
        let verdict = if artifact.is_some() {
            Verdict::Fake
        } else {
            Verdict::Real
        };
        let (question, answer) = match (artifact, component) {
            (Some(kind), Component::WholeFace) => (
                GENERAL_QUESTION.to_string(),
                render_answer(
                    Component::WholeFace,
                    Verdict::Fake,
                    &[
                        GENERAL_FAKE_PHRASE.to_string(),
                        format!("{} {}", kind.phrase(), kind.component().noun()),
                    ],
                )
                .expect("fake answer has reasons"),
            ),
            (Some(kind), component) => (
                fine_grained_question(component),
                render_answer(component, Verdict::Fake, &[kind.phrase().to_string()])
                    .expect("fake answer has reasons"),
            ),
            (None, Component::WholeFace) => (
                GENERAL_QUESTION.to_string(),
                render_answer(
                    Component::WholeFace,
                    Verdict::Real,
                    &[real_phrase(Component::WholeFace).to_string()],
                )
                .expect("real answer renders"),
            ),
            (None, component) => (
                fine_grained_question(component),
                render_answer(component, Verdict::Real, &[real_phrase(component).to_string()])
                    .expect("real answer renders"),
            ),
        };
        records.push(QARecord {
            image_id: image_id.clone(),
            question,
            component,
            answers: vec![answer],
            verdict,
            split: super::Split::Train,
            manipulation: if verdict == Verdict::Fake {
                Manipulation::Face2Face
            } else {
                Manipulation::Real
            },
        });
        images.push(SyntheticImage {
            image_id,
            image,
            planted_artifacts: planted
                .iter()
                .map(|k| (k.component(), k.phrase().to_string()))
                .collect(),
            verdict,
        });
    }
    (records, images)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::mining::record_phrases;

    #[test]
    fn same_seed_gives_bit_identical_corpora() {
        let config = SynthConfig {
            n_images: 12,
            image_size: 32,
            ..SynthConfig::default()
        };
        let (r1, i1) = generate_synthetic_corpus(&config, 7).unwrap();
        let (r2, i2) = generate_synthetic_corpus(&config, 7).unwrap();
        assert_eq!(r1.len(), r2.len());
        for (a, b) in r1.iter().zip(&r2) {
            assert_eq!(a.answers, b.answers);
            assert_eq!(a.image_id, b.image_id);
        }
        for (a, b) in i1.iter().zip(&i2) {
            assert_eq!(a.image.pixels, b.image.pixels);
        }
        let (r3, _) = generate_synthetic_corpus(&config, 8).unwrap();
        assert_ne!(
            r1.iter().map(|r| r.answers.clone()).collect::<Vec<_>>(),
            r3.iter().map(|r| r.answers.clone()).collect::<Vec<_>>()
        );
    }

    #[test]
    fn verdict_counts_within_binomial_bounds() {
        let config = SynthConfig {
            n_images: 100,
            image_size: 16,
            ..SynthConfig::default()
        };
        let (_, images) = generate_synthetic_corpus(&config, 11).unwrap();
        let fakes = images.iter().filter(|i| i.verdict == Verdict::Fake).count();
        // Binomial(100, 0.5): 99% bounds are mean +/- 2.58 * 5.
        assert!((38..=62).contains(&fakes), "fakes = {fakes}");
    }

    #[test]
    fn fake_record_reasons_are_planted_artifacts() {
        let config = SynthConfig {
            n_images: 30,
            image_size: 32,
            ..SynthConfig::default()
        };
        let (records, images) = generate_synthetic_corpus(&config, 3).unwrap();
        let by_id: std::collections::BTreeMap<&str, &SyntheticImage> =
            images.iter().map(|i| (i.image_id.as_str(), i)).collect();
        for record in records
            .iter()
            .filter(|r| r.verdict == Verdict::Fake && r.component != Component::WholeFace)
        {
            let planted = &by_id[record.image_id.as_str()].planted_artifacts;
            for phrase in record_phrases(record) {
                assert!(
                    planted
                        .iter()
                        .any(|(c, p)| *c == record.component && *p == phrase),
                    "phrase {phrase} not planted for {}",
                    record.image_id
                );
            }
        }
    }

    #[test]
    fn planted_artifacts_change_pixels() {
        let mut rng_a = derive_indexed(5, "synth-image", 0);
        let mut rng_b = derive_indexed(5, "synth-image", 0);
        let clean = render_face(32, &[], &mut rng_a);
        let forged = render_face(32, &[ArtifactKind::OverlappedEyebrows], &mut rng_b);
        assert_ne!(clean.pixels, forged.pixels);
    }

    #[test]
    fn split_is_roughly_ninety_ten_by_image() {
        let config = SynthConfig {
            n_images: 200,
            image_size: 16,
            ..SynthConfig::default()
        };
        let (records, _) = generate_synthetic_corpus(&config, 2).unwrap();
        let mut train_images = std::collections::BTreeSet::new();
        let mut test_images = std::collections::BTreeSet::new();
        for r in &records {
            match r.split {
                super::super::Split::Train => train_images.insert(r.image_id.clone()),
                super::super::Split::Test => test_images.insert(r.image_id.clone()),
            };
        }
        assert!(train_images.is_disjoint(&test_images));
        let test_fraction = test_images.len() as f64 / 200.0;
        assert!((0.03..0.25).contains(&test_fraction), "{test_fraction}");
    }
}
