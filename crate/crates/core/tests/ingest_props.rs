mod common;

use claimcheck_core::ingest::{align_face, load_manifest, load_samples, sample_from_pixels, AlignedFace, FivePointLandmarks, Point};
use claimcheck_core::synth::{render, write_case, Capture, SetOptions, SetSpec, SyntheticIdentity};
use image::RgbImage;
use proptest::prelude::*;

use common::oracles;

fn captured(identity_seed: u64, capture_seed: u64) -> (RgbImage, FivePointLandmarks) {
    render(&SyntheticIdentity::from_seed(identity_seed), &Capture::random(capture_seed))
}

fn mean_abs_luma_diff(a: &AlignedFace, b: &AlignedFace) -> f64 {
    a.luma().iter().zip(b.luma()).map(|(x, y)| (x - y).abs()).sum::<f64>() / a.luma().len() as f64
}

/// Quarter turn clockwise: output (x, y) reads input (y, H − 1 − x).
fn rotate_cw(img: &RgbImage) -> RgbImage {
    let (w, h) = img.dimensions();
    RgbImage::from_fn(h, w, |x, y| *img.get_pixel(y, h - 1 - x))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn alignment_is_idempotent(id in 0u64..1000, cap in 0u64..1000) {
        let (img, lm) = captured(id, cap);
        let first = align_face(&sample_from_pixels("x".into(), img, "a", Some(lm)).unwrap()).unwrap();
        let second = align_face(&first.to_sample()).unwrap();
        prop_assert!(mean_abs_luma_diff(&first, &second) <= 0.02);
    }

    #[test]
    fn quarter_turn_aligns_to_the_same_crop(id in 0u64..1000, cap in 0u64..1000) {
        let (img, lm) = captured(id, cap);
        let h = f64::from(img.height());
        let upright = align_face(&sample_from_pixels("u".into(), img.clone(), "a", Some(lm)).unwrap()).unwrap();
        let turned_lm = lm.map(|p| Point::new(h - 1.0 - p.y, p.x));
        let turned = align_face(&sample_from_pixels("t".into(), rotate_cw(&img), "a", Some(turned_lm)).unwrap()).unwrap();
        prop_assert!(mean_abs_luma_diff(&upright, &turned) <= 0.02);
    }

    #[test]
    fn stored_luma_matches_the_formula(seed in any::<u64>()) {
        let face = claimcheck_core::synth::random_aligned_face(seed);
        let oracle = oracles::luma_plane(&face);
        for (a, b) in face.luma().iter().zip(&oracle) {
            prop_assert!((a - b).abs() <= 1e-9);
        }
    }
}

#[test]
fn every_sample_keeps_its_manifest_label() {
    let dir = tempfile::tempdir().unwrap();
    let set = |label: &str, seed| SetSpec {
        label: label.into(),
        identity_seed: seed,
        count: 3,
        options: SetOptions::default(),
    };
    let path = write_case(dir.path(), "labels", [&set("real", 1), &set("double", 2)], None, 5).unwrap();
    let manifest = load_manifest(&path).unwrap();
    let samples = load_samples(&manifest);
    assert_eq!(samples.len(), manifest.entries.len());
    let mut ids = std::collections::BTreeSet::new();
    for ((id, sample), entry) in samples.iter().zip(&manifest.entries) {
        let sample = sample.as_ref().unwrap();
        assert!(ids.insert(id.clone()), "duplicate id {id}");
        assert_eq!(&sample.id, id);
        assert_eq!(sample.label, entry.label);
        let face = align_face(sample).unwrap();
        assert_eq!(face.source_id, *id);
        assert_eq!(face.label, entry.label);
    }
}
