//! Acquisition and subject quality metrics for aligned faces.
//!
//! Every metric is oriented so that 1 is the best quality for recognition and
//! 0 the worst. Subject metrics that need a neural classifier degrade to a
//! heuristic (sunglasses) or to `None` (femininity) when no model is configured.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;
use std::sync::Mutex;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ingest::{AlignedFace, FivePointLandmarks, Point, ALIGNED_SIZE};

#[derive(Error, Debug)]
pub enum QualityError {
    #[error("triangle {0} of the face-luminance mesh covers no pixel centers")]
    EmptyRegion(usize),
    #[error("degenerate landmarks: {0}")]
    DegenerateLandmarks(String),
    #[error("classifier {name}: {reason}")]
    ClassifierIo { name: String, reason: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    Brightness,
    FaceLuminance,
    Exposure,
    Contrast,
    Sharpness,
    SunglassesAbsence,
    Femininity,
    PoseFrontality,
}

impl Metric {
    pub const ALL: [Metric; 8] = [
        Metric::Brightness,
        Metric::FaceLuminance,
        Metric::Exposure,
        Metric::Contrast,
        Metric::Sharpness,
        Metric::SunglassesAbsence,
        Metric::Femininity,
        Metric::PoseFrontality,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Metric::Brightness => "brightness",
            Metric::FaceLuminance => "face_luminance",
            Metric::Exposure => "exposure",
            Metric::Contrast => "contrast",
            Metric::Sharpness => "sharpness",
            Metric::SunglassesAbsence => "sunglasses_absence",
            Metric::Femininity => "femininity",
            Metric::PoseFrontality => "pose_frontality",
        }
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Metric {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Metric::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| format!("unknown quality metric '{s}'"))
    }
}

/// Tunable constants for every metric.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct QualityConfig {
    /// Mid-tone band counted as well exposed.
    pub exposure_band: [f64; 2],
    /// Largest attainable standard deviation of values in [0, 1].
    pub contrast_max_std: f64,
    pub sharpness_sigma: f64,
    /// Kernel radius in multiples of sigma (rounded up).
    pub sharpness_radius_sigmas: f64,
    /// Mean absolute unsharp residual that maps to a score of 1.
    pub sharpness_normalizer: f64,
    /// Eye patch size in pixels, width × height.
    pub eye_patch: [u32; 2],
    /// Luma at or below this counts as occluded.
    pub occluder_luma: f64,
}

impl Default for QualityConfig {
    fn default() -> Self {
        Self {
            exposure_band: [0.10, 0.90],
            contrast_max_std: 0.5,
            sharpness_sigma: 2.0,
            sharpness_radius_sigmas: 3.0,
            sharpness_normalizer: 0.05,
            eye_patch: [24, 16],
            occluder_luma: 0.25,
        }
    }
}

impl QualityConfig {
    pub fn sharpness_radius(&self) -> usize {
        (self.sharpness_radius_sigmas * self.sharpness_sigma).ceil() as usize
    }
}

/// Per-image scores; always holds all eight metric keys.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QualityScores {
    pub source_id: String,
    pub label: String,
    pub scores: BTreeMap<Metric, Option<f64>>,
}

impl QualityScores {
    pub fn get(&self, metric: Metric) -> Option<f64> {
        self.scores.get(&metric).copied().flatten()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PoseAngles {
    pub yaw: f64,
    pub pitch: f64,
    pub roll: f64,
}

/// Something that maps a face to a class-probability vector.
pub trait ProbabilityModel: Send {
    fn predict(&mut self, face: &AlignedFace) -> Result<Vec<f64>, String>;
}

/// An optional subject-metric classifier. Calls are serialized per handle.
pub struct AuxClassifier {
    name: String,
    model: Mutex<Box<dyn ProbabilityModel>>,
    positive_class: usize,
}

impl fmt::Debug for AuxClassifier {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("AuxClassifier")
            .field("name", &self.name)
            .field("positive_class", &self.positive_class)
            .finish()
    }
}

impl AuxClassifier {
    /// `positive_class` is the output index whose probability is the score
    /// (non-sunglasses, or female).
    pub fn new(name: impl Into<String>, model: Box<dyn ProbabilityModel>, positive_class: usize) -> Self {
        Self {
            name: name.into(),
            model: Mutex::new(model),
            positive_class,
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn probability(&self, face: &AlignedFace) -> Result<f64, QualityError> {
        let io_err = |reason: String| QualityError::ClassifierIo {
            name: self.name.clone(),
            reason,
        };
        let probs = {
            let mut model = self.model.lock().unwrap_or_else(|e| e.into_inner());
            model.predict(face).map_err(io_err)?
        };
        if probs.iter().any(|p| !p.is_finite() || *p < 0.0 || *p > 1.0) {
            return Err(io_err(format!("output {probs:?} is not a probability vector")));
        }
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > 1e-5 {
            return Err(io_err(format!("output probabilities sum to {total}, expected 1")));
        }
        probs
            .get(self.positive_class)
            .copied()
            .ok_or_else(|| io_err(format!("class index {} out of range for {} outputs", self.positive_class, probs.len())))
    }
}

#[derive(Debug, Default)]
pub struct Classifiers {
    pub sunglasses: Option<AuxClassifier>,
    pub femininity: Option<AuxClassifier>,
}

pub fn brightness(face: &AlignedFace) -> f64 {
    mean(face.luma())
}

/// Mean luma over four landmark triangles, averaged.
pub fn face_luminance(face: &AlignedFace) -> Result<f64, QualityError> {
    let mut total = 0.0;
    for (k, tri) in luminance_triangles(&face.canonical_landmarks).iter().enumerate() {
        let (sum, count) = triangle_luma_sum(face, tri);
        if count == 0 {
            return Err(QualityError::EmptyRegion(k));
        }
        total += sum / count as f64;
    }
    Ok(total / 4.0)
}

/// The four triangles: eyes+nose, left cheek, right cheek, mouth+nose.
pub fn luminance_triangles(lm: &FivePointLandmarks) -> [[Point; 3]; 4] {
    [
        [lm.left_eye, lm.right_eye, lm.nose_tip],
        [lm.left_eye, lm.nose_tip, lm.left_mouth],
        [lm.right_eye, lm.nose_tip, lm.right_mouth],
        [lm.left_mouth, lm.right_mouth, lm.nose_tip],
    ]
}

fn edge(a: Point, b: Point, p: Point) -> f64 {
    (b.x - a.x) * (p.y - a.y) - (b.y - a.y) * (p.x - a.x)
}

/// Non-strict containment: points on an edge are inside.
pub fn point_in_triangle(p: Point, tri: &[Point; 3]) -> bool {
    let d0 = edge(tri[0], tri[1], p);
    let d1 = edge(tri[1], tri[2], p);
    let d2 = edge(tri[2], tri[0], p);
    let has_neg = d0 < 0.0 || d1 < 0.0 || d2 < 0.0;
    let has_pos = d0 > 0.0 || d1 > 0.0 || d2 > 0.0;
    !(has_neg && has_pos)
}

fn triangle_luma_sum(face: &AlignedFace, tri: &[Point; 3]) -> (f64, usize) {
    let last = f64::from(ALIGNED_SIZE - 1);
    let lo = |v: f64| v.ceil().clamp(0.0, last) as u32;
    let hi = |v: f64| v.floor().clamp(0.0, last) as u32;
    let xs = tri.iter().map(|p| p.x);
    let ys = tri.iter().map(|p| p.y);
    let (x0, x1) = (lo(xs.clone().fold(f64::INFINITY, f64::min)), hi(xs.fold(f64::NEG_INFINITY, f64::max)));
    let (y0, y1) = (lo(ys.clone().fold(f64::INFINITY, f64::min)), hi(ys.fold(f64::NEG_INFINITY, f64::max)));
    let mut sum = 0.0;
    let mut count = 0;
    for y in y0..=y1 {
        for x in x0..=x1 {
            if point_in_triangle(Point::new(f64::from(x), f64::from(y)), tri) {
                sum += face.luma_at(x, y);
                count += 1;
            }
        }
    }
    (sum, count)
}

/// Fraction of luma values inside the mid-tone band (inclusive).
pub fn exposure(face: &AlignedFace, config: &QualityConfig) -> f64 {
    let [lo, hi] = config.exposure_band;
    let luma = face.luma();
    luma.iter().filter(|&&v| v >= lo && v <= hi).count() as f64 / luma.len() as f64
}

/// RMS contrast normalized by the largest attainable standard deviation.
pub fn contrast(face: &AlignedFace, config: &QualityConfig) -> f64 {
    let luma = face.luma();
    // Shifted by the first value so a uniform crop is exactly zero.
    let pivot = luma[0];
    let n = luma.len() as f64;
    let shifted_mean = luma.iter().map(|v| v - pivot).sum::<f64>() / n;
    let var = luma.iter().map(|v| (v - pivot - shifted_mean).powi(2)).sum::<f64>() / n;
    (var.sqrt() / config.contrast_max_std).clamp(0.0, 1.0)
}

/// Mean absolute unsharp-mask residual, normalized and capped at 1.
pub fn sharpness(face: &AlignedFace, config: &QualityConfig) -> f64 {
    let size = ALIGNED_SIZE as usize;
    let blurred = gaussian_blur(
        face.luma(),
        size,
        size,
        config.sharpness_sigma,
        config.sharpness_radius(),
    );
    let residual = face
        .luma()
        .iter()
        .zip(&blurred)
        .map(|(a, b)| (a - b).abs())
        .sum::<f64>()
        / blurred.len() as f64;
    (residual / config.sharpness_normalizer).min(1.0)
}

/// Normalized 1-D Gaussian kernel of `2·radius + 1` taps.
pub fn gaussian_kernel(sigma: f64, radius: usize) -> Vec<f64> {
    let r = radius as i64;
    let raw: Vec<f64> = (-r..=r)
        .map(|k| (-((k * k) as f64) / (2.0 * sigma * sigma)).exp())
        .collect();
    let total: f64 = raw.iter().sum();
    raw.into_iter().map(|v| v / total).collect()
}

/// Separable Gaussian blur of a row-major plane with edge-replicate padding.
pub fn gaussian_blur(plane: &[f64], width: usize, height: usize, sigma: f64, radius: usize) -> Vec<f64> {
    assert_eq!(plane.len(), width * height);
    let kernel = gaussian_kernel(sigma, radius);
    let r = radius as i64;
    let clamp = |v: i64, n: usize| v.clamp(0, n as i64 - 1) as usize;

    let mut horizontal = vec![0.0; plane.len()];
    for y in 0..height {
        let row = &plane[y * width..(y + 1) * width];
        for x in 0..width {
            horizontal[y * width + x] = kernel
                .iter()
                .enumerate()
                .map(|(k, w)| w * row[clamp(x as i64 + k as i64 - r, width)])
                .sum();
        }
    }
    let mut out = vec![0.0; plane.len()];
    for y in 0..height {
        for x in 0..width {
            out[y * width + x] = kernel
                .iter()
                .enumerate()
                .map(|(k, w)| w * horizontal[clamp(y as i64 + k as i64 - r, height) * width + x])
                .sum();
        }
    }
    out
}

/// Pixel coordinates of an eye patch, clipped to the crop.
pub fn eye_patch(center: Point, config: &QualityConfig) -> impl Iterator<Item = (u32, u32)> {
    let [w, h] = config.eye_patch;
    let x0 = (center.x - f64::from(w) / 2.0).round() as i64;
    let y0 = (center.y - f64::from(h) / 2.0).round() as i64;
    let size = i64::from(ALIGNED_SIZE);
    (y0..y0 + i64::from(h))
        .flat_map(move |y| (x0..x0 + i64::from(w)).map(move |x| (x, y)))
        .filter(move |&(x, y)| x >= 0 && y >= 0 && x < size && y < size)
        .map(|(x, y)| (x as u32, y as u32))
}

/// Heuristic: fraction of eye-patch pixels brighter than the occluder threshold.
pub fn sunglasses_heuristic(face: &AlignedFace, config: &QualityConfig) -> f64 {
    let lm = &face.canonical_landmarks;
    let (mut bright, mut total) = (0usize, 0usize);
    for center in [lm.left_eye, lm.right_eye] {
        for (x, y) in eye_patch(center, config) {
            total += 1;
            if face.luma_at(x, y) > config.occluder_luma {
                bright += 1;
            }
        }
    }
    if total == 0 {
        return 0.0;
    }
    bright as f64 / total as f64
}

pub fn sunglasses_absence(
    face: &AlignedFace,
    classifier: Option<&AuxClassifier>,
    config: &QualityConfig,
) -> Result<f64, QualityError> {
    match classifier {
        Some(c) => c.probability(face),
        None => Ok(sunglasses_heuristic(face, config)),
    }
}

/// Probability of the female class, or `None` with no classifier configured.
pub fn femininity(face: &AlignedFace, classifier: Option<&AuxClassifier>) -> Result<Option<f64>, QualityError> {
    classifier.map(|c| c.probability(face)).transpose()
}

/// Landmark-geometric head pose.
///
/// * roll: angle of the eye line, `atan2(Δy, Δx)` from left to right eye.
/// * After de-rolling about the eye midpoint:
///   * yaw: `asin(2·dx/iod − r₀)` where `dx` is the nose offset from the eye
///     midpoint and `iod` the inter-ocular distance; negative when the nose
///     moves toward the left eye.
///   * pitch: `asin(2·(t − t₀))` where `t` is the nose's fractional position
///     between the eye line and the mouth line; positive for head down.
///
/// `r₀` and `t₀` are the template's own values, so the template reads as frontal.
pub fn head_pose(lm: &FivePointLandmarks) -> Result<PoseAngles, QualityError> {
    let template = pose_ratios(&FivePointLandmarks::template()).expect("template is well formed");
    let (roll, yaw_ratio, pitch_ratio) = pose_ratios(lm)?;
    Ok(PoseAngles {
        yaw: (yaw_ratio - template.1).clamp(-1.0, 1.0).asin().to_degrees(),
        pitch: (2.0 * (pitch_ratio - template.2)).clamp(-1.0, 1.0).asin().to_degrees(),
        roll: roll.to_degrees() - template.0.to_degrees(),
    })
}

fn pose_ratios(lm: &FivePointLandmarks) -> Result<(f64, f64, f64), QualityError> {
    let dx = lm.right_eye.x - lm.left_eye.x;
    let dy = lm.right_eye.y - lm.left_eye.y;
    let iod = dx.hypot(dy);
    if !(iod > 1e-9) {
        return Err(QualityError::DegenerateLandmarks("eyes coincide".into()));
    }
    let roll = dy.atan2(dx);
    let eye_mid = Point::new((lm.left_eye.x + lm.right_eye.x) / 2.0, (lm.left_eye.y + lm.right_eye.y) / 2.0);
    let (c, s) = (roll.cos(), roll.sin());
    // Rotate by −roll around the eye midpoint.
    let derolled = |p: Point| {
        let (x, y) = (p.x - eye_mid.x, p.y - eye_mid.y);
        Point::new(c * x + s * y, -s * x + c * y)
    };
    let nose = derolled(lm.nose_tip);
    let mouth_l = derolled(lm.left_mouth);
    let mouth_r = derolled(lm.right_mouth);
    let mouth_y = (mouth_l.y + mouth_r.y) / 2.0;
    if !(mouth_y.abs() > 1e-9) {
        return Err(QualityError::DegenerateLandmarks("mouth lies on the eye line".into()));
    }
    Ok((roll, 2.0 * nose.x / iod, nose.y / mouth_y))
}

/// `max(0, cos(yaw)·cos(pitch))`; roll is ignored.
pub fn pose_frontality(angles: &PoseAngles) -> f64 {
    (angles.yaw.to_radians().cos() * angles.pitch.to_radians().cos()).max(0.0)
}

/// Evaluate all eight metrics. Missing prerequisites and classifier failures
/// yield `None` rather than an error.
pub fn score_all(face: &AlignedFace, classifiers: &Classifiers, config: &QualityConfig) -> QualityScores {
    let warn = |metric: Metric, e: &QualityError| {
        log::warn!("{}: {metric} unavailable: {e}", face.source_id);
    };
    let keep = |metric: Metric, r: Result<f64, QualityError>| match r {
        Ok(v) => Some(v),
        Err(e) => {
            warn(metric, &e);
            None
        }
    };

    let mut scores = BTreeMap::new();
    scores.insert(Metric::Brightness, Some(brightness(face)));
    scores.insert(Metric::FaceLuminance, keep(Metric::FaceLuminance, face_luminance(face)));
    scores.insert(Metric::Exposure, Some(exposure(face, config)));
    scores.insert(Metric::Contrast, Some(contrast(face, config)));
    scores.insert(Metric::Sharpness, Some(sharpness(face, config)));
    scores.insert(
        Metric::SunglassesAbsence,
        keep(
            Metric::SunglassesAbsence,
            sunglasses_absence(face, classifiers.sunglasses.as_ref(), config),
        ),
    );
    let fem = match femininity(face, classifiers.femininity.as_ref()) {
        Ok(v) => v,
        Err(e) => {
            warn(Metric::Femininity, &e);
            None
        }
    };
    scores.insert(Metric::Femininity, fem);
    scores.insert(
        Metric::PoseFrontality,
        keep(
            Metric::PoseFrontality,
            head_pose(&face.canonical_landmarks).map(|a| pose_frontality(&a)),
        ),
    );
    QualityScores {
        source_id: face.source_id.clone(),
        label: face.label.clone(),
        scores,
    }
}

fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}
