use super::*;
use crate::model::{DdvqaModel, ModelConfig};
use crate::rng::derive;

fn frozen_model() -> DdvqaModel {
    let mut rng = derive(31, "fusion-test");
    DdvqaModel::new(ModelConfig::tiny(24), &mut rng).unwrap()
}

fn ramp_image(h: usize, w: usize) -> FaceImage {
    let pixels = (0..h * w * 3).map(|i| (i % 83) as f64 / 83.0).collect();
    FaceImage {
        height: h,
        width: w,
        channels: 3,
        pixels,
    }
}

#[test]
fn feature_grid_shape_follows_config() {
    let model = frozen_model();
    let (features, gh, gw) = extract_ddvqa_features(&model, &ramp_image(16, 16)).unwrap();
    // 16x16 at patch 8: 2x2 grid of d=16 features.
    assert_eq!((gh, gw), (2, 2));
    assert_eq!(features.shape(), &[4, 16]);
    assert!(!features.requires_grad());
}

#[test]
fn identical_images_give_identical_features() {
    let model = frozen_model();
    let (a, _, _) = extract_ddvqa_features(&model, &ramp_image(16, 16)).unwrap();
    let (b, _, _) = extract_ddvqa_features(&model, &ramp_image(16, 16)).unwrap();
    assert_eq!(a.data(), b.data());
}

#[test]
fn features_match_encode_image_rows() {
    let model = frozen_model();
    let image = ramp_image(16, 16);
    let (features, _, _) = extract_ddvqa_features(&model, &image).unwrap();
    let full = model.encode_image(&image).unwrap();
    assert_eq!(features.data(), &full.data()[16..]);
}

#[test]
fn zero_projection_fusion_is_the_identity() {
    let model = frozen_model();
    let image = ramp_image(16, 16);
    let (features, gh, gw) = extract_ddvqa_features(&model, &image).unwrap();
    let mut rng = derive(5, "detector");
    let detector = ToyDetector::new(16, 16, &mut rng);
    let f_prime = detector.feature_map(&image).unwrap();
    let (fh, fw) = detector.feature_grid();
    let transform = FusionTransform::zeros(16, fh, fw, DETECTOR_CHANNELS);
    let fused = fuse(&transform.apply(&features, gh, gw).unwrap(), &f_prime).unwrap();
    assert_eq!(fused.data(), f_prime.data());
    // And the logits, bit for bit.
    let a = detector.logits(&fused).unwrap();
    let b = detector.logits(&f_prime).unwrap();
    let bits_a: Vec<u64> = a.data().iter().map(|v| v.to_bits()).collect();
    let bits_b: Vec<u64> = b.data().iter().map(|v| v.to_bits()).collect();
    assert_eq!(bits_a, bits_b);
}

#[test]
fn constructed_negative_transform_cancels_the_detector_features() {
    // theta(F) == -F' by construction: fusing gives exactly zero.
    let mut rng = derive(6, "detector");
    let detector = ToyDetector::new(16, 16, &mut rng);
    let image = ramp_image(16, 16);
    let f_prime = detector.feature_map(&image).unwrap();
    let negated = f_prime.neg();
    let fused = fuse(&negated, &f_prime).unwrap();
    assert!(fused.data().iter().all(|v| *v == 0.0));
}

#[test]
fn shape_mismatch_after_transform_is_an_error() {
    let model = frozen_model();
    let image = ramp_image(16, 16);
    let (features, gh, gw) = extract_ddvqa_features(&model, &image).unwrap();
    let transform = FusionTransform::zeros(16, 3, 3, 5);
    let mut rng = derive(7, "detector");
    let detector = ToyDetector::new(16, 16, &mut rng);
    let f_prime = detector.feature_map(&image).unwrap();
    let transformed = transform.apply(&features, gh, gw).unwrap();
    assert!(matches!(
        fuse(&transformed, &f_prime),
        Err(FusionError::ShapeMismatch { .. })
    ));
}

#[test]
fn gradients_never_reach_the_frozen_model() {
    let mut model = frozen_model();
    let image = ramp_image(16, 16);
    let (features, gh, gw) = extract_ddvqa_features(&model, &image).unwrap();
    let mut rng = derive(8, "detector");
    let detector = ToyDetector::new(16, 16, &mut rng);
    let (fh, fw) = detector.feature_grid();
    let mut transform = FusionTransform::zeros(16, fh, fw, DETECTOR_CHANNELS);
    // A live projection so the fusion path carries gradient.
    transform.proj =
        ddvqa_tensor::Tensor::param(vec![16, DETECTOR_CHANNELS], vec![0.01; 16 * DETECTOR_CHANNELS])
            .unwrap();

    let f_prime = detector.feature_map(&image).unwrap();
    let fused = fuse(&transform.apply(&features, gh, gw).unwrap(), &f_prime).unwrap();
    let logits = detector.logits(&fused).unwrap();
    let loss = logits.cross_entropy(&[1], None).unwrap();
    loss.backward().unwrap();

    // The projection learns, the frozen model does not.
    assert!(transform.proj.grad().is_some());
    let mut any_model_grad = false;
    model.for_each_param_mut(&mut |_, t| any_model_grad |= t.grad().is_some());
    assert!(!any_model_grad);
}

#[test]
fn detector_probability_is_strictly_inside_unit_interval() {
    let mut rng = derive(9, "detector");
    let detector = ToyDetector::new(16, 16, &mut rng);
    let image = ramp_image(16, 16);
    let f_prime = detector.feature_map(&image).unwrap();
    let logits = detector.logits(&f_prime).unwrap();
    let p = ToyDetector::fake_probability(&logits);
    assert!(p > 0.0 && p < 1.0);
}

#[test]
fn nearest_resize_keeps_channel_content() {
    let features = ddvqa_tensor::Tensor::from_vec(
        vec![4, 2],
        vec![1.0, 10.0, 2.0, 20.0, 3.0, 30.0, 4.0, 40.0],
    )
    .unwrap();
    // 2x2 -> 3x3: every output row must be one of the input rows.
    let resized = nearest_resize_rows(&features, 2, 2, 3, 3).unwrap();
    assert_eq!(resized.shape(), &[9, 2]);
    for row in resized.data().chunks(2) {
        let ratio = row[1] / row[0];
        assert!((ratio - 10.0).abs() < 1e-12);
    }
    // Corners map to corners under nearest-neighbor.
    assert_eq!(&resized.data()[0..2], &[1.0, 10.0]);
    assert_eq!(&resized.data()[16..18], &[4.0, 40.0]);
}
