//! Crop transforms used by the property tests.

#![allow(dead_code)]

use claimcheck_core::ingest::AlignedFace;
use claimcheck_core::quality::gaussian_blur;
use image::{Rgb, RgbImage};

fn rebuild(face: &AlignedFace, pixels: RgbImage) -> AlignedFace {
    AlignedFace::new(pixels, face.canonical_landmarks, face.source_id.clone(), face.label.clone())
}

pub fn mirrored(face: &AlignedFace) -> AlignedFace {
    rebuild(face, image::imageops::flip_horizontal(face.pixels()))
}

/// Every channel multiplied by `alpha`, rounded back to 8 bits.
pub fn scaled(face: &AlignedFace, alpha: f64) -> AlignedFace {
    let mut px = face.pixels().clone();
    for p in px.pixels_mut() {
        p.0 = p.0.map(|c| (f64::from(c) * alpha).round().clamp(0.0, 255.0) as u8);
    }
    rebuild(face, px)
}

/// Every channel shifted by `delta`; the caller keeps it clear of clipping.
pub fn shifted(face: &AlignedFace, delta: i16) -> AlignedFace {
    let mut px = face.pixels().clone();
    for p in px.pixels_mut() {
        p.0 = p.0.map(|c| (i16::from(c) + delta).clamp(0, 255) as u8);
    }
    rebuild(face, px)
}

/// Per-channel Gaussian blur (radius 3σ, replicate edges), rounded to 8 bits.
pub fn blurred(face: &AlignedFace, sigma: f64) -> AlignedFace {
    let (w, h) = face.pixels().dimensions();
    let (wu, hu) = (w as usize, h as usize);
    let radius = (3.0 * sigma).ceil() as usize;
    let planes: Vec<Vec<f64>> = (0..3)
        .map(|k| {
            let plane: Vec<f64> = face.pixels().pixels().map(|p| f64::from(p.0[k])).collect();
            gaussian_blur(&plane, wu, hu, sigma, radius)
        })
        .collect();
    let px = RgbImage::from_fn(w, h, |x, y| {
        let i = y as usize * wu + x as usize;
        Rgb([0, 1, 2].map(|k| planes[k][i].round().clamp(0.0, 255.0) as u8))
    });
    rebuild(face, px)
}

pub fn uniform(level: u8) -> AlignedFace {
    AlignedFace::new(
        RgbImage::from_pixel(112, 112, Rgb([level; 3])),
        claimcheck_core::ingest::FivePointLandmarks::template(),
        "uniform",
        "u",
    )
}
