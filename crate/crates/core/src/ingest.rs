//! Case manifests, image decoding and five-point face alignment.
//!
//! Coordinates follow the pixel-center convention: the center of the pixel in
//! column `j`, row `i` sits at `(j as f64, i as f64)`. "Left" and "right" are
//! image-left and image-right, so a frontal face has `right_eye.x > left_eye.x`.

use std::collections::{BTreeSet, HashSet};
use std::fs;
use std::path::{Path, PathBuf};

use image::{ImageDecoder, ImageReader, RgbImage};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Side length of an aligned crop.
pub const ALIGNED_SIZE: u32 = 112;

/// Smallest accepted source image side.
pub const MIN_IMAGE_SIDE: u32 = 16;

/// Five-point template for a 112×112 crop (eyes, nose tip, mouth corners).
pub const CANONICAL_TEMPLATE: [[f64; 2]; 5] = [
    [38.2946, 51.6963],
    [73.5318, 51.5014],
    [56.0252, 71.7366],
    [41.5493, 92.3655],
    [70.7299, 92.2041],
];

#[derive(Error, Debug)]
pub enum IngestError {
    #[error("parse error in manifest {path}: {reason}")]
    Parse { path: PathBuf, reason: String },
    #[error("invalid manifest {path}: {reason}")]
    Validation { path: PathBuf, reason: String },
    #[error("cannot decode image {path}: {reason}")]
    Decode { path: PathBuf, reason: String },
    #[error("image {path} is {width}x{height}; both sides must be at least {MIN_IMAGE_SIDE}")]
    TooSmall { path: PathBuf, width: u32, height: u32 },
    #[error("degenerate landmarks for {id}: {reason}")]
    DegenerateLandmarks { id: String, reason: String },
    #[error("sample {0} has no landmarks; supply them in the manifest or use assume-aligned mode")]
    MissingLandmarks(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FivePointLandmarks {
    pub left_eye: Point,
    pub right_eye: Point,
    pub nose_tip: Point,
    pub left_mouth: Point,
    pub right_mouth: Point,
}

impl FivePointLandmarks {
    pub fn from_array(points: [[f64; 2]; 5]) -> Self {
        let p = |i: usize| Point::new(points[i][0], points[i][1]);
        Self {
            left_eye: p(0),
            right_eye: p(1),
            nose_tip: p(2),
            left_mouth: p(3),
            right_mouth: p(4),
        }
    }

    pub fn to_array(&self) -> [[f64; 2]; 5] {
        self.points().map(|p| [p.x, p.y])
    }

    /// Points in template order: left eye, right eye, nose, left mouth, right mouth.
    pub fn points(&self) -> [Point; 5] {
        [
            self.left_eye,
            self.right_eye,
            self.nose_tip,
            self.left_mouth,
            self.right_mouth,
        ]
    }

    pub fn template() -> Self {
        Self::from_array(CANONICAL_TEMPLATE)
    }

    pub fn map(&self, mut f: impl FnMut(Point) -> Point) -> Self {
        Self {
            left_eye: f(self.left_eye),
            right_eye: f(self.right_eye),
            nose_tip: f(self.nose_tip),
            left_mouth: f(self.left_mouth),
            right_mouth: f(self.right_mouth),
        }
    }

    /// True when every point lies in `[0, width) × [0, height)`.
    pub fn within(&self, width: u32, height: u32) -> bool {
        self.points().iter().all(|p| {
            p.x.is_finite()
                && p.y.is_finite()
                && p.x >= 0.0
                && p.y >= 0.0
                && p.x < f64::from(width)
                && p.y < f64::from(height)
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub path: PathBuf,
    pub label: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub landmarks: Option<[[f64; 2]; 5]>,
}

/// A validated manifest. Entry and reference paths are resolved against the
/// manifest's directory at load time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub case_name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reference: Option<PathBuf>,
    pub entries: Vec<ManifestEntry>,
    #[serde(skip)]
    pub base_dir: PathBuf,
}

impl Manifest {
    /// Distinct labels in order of first appearance.
    pub fn tags(&self) -> Vec<String> {
        let mut seen = HashSet::new();
        self.entries
            .iter()
            .filter(|e| seen.insert(e.label.as_str()))
            .map(|e| e.label.clone())
            .collect()
    }

    /// Stable sample id for an entry: its path relative to the manifest directory.
    pub fn entry_id(&self, entry: &ManifestEntry) -> String {
        let rel = entry.path.strip_prefix(&self.base_dir).unwrap_or(&entry.path);
        rel.to_string_lossy().replace('\\', "/")
    }
}

/// Load a case manifest: at most two identity tags.
pub fn load_manifest(path: &Path) -> Result<Manifest, IngestError> {
    load_with_tag_limit(path, Some(2))
}

/// Load a reference-population manifest: any number of identity tags.
pub fn load_reference_manifest(path: &Path) -> Result<Manifest, IngestError> {
    load_with_tag_limit(path, None)
}

fn load_with_tag_limit(path: &Path, max_tags: Option<usize>) -> Result<Manifest, IngestError> {
    let text = fs::read_to_string(path).map_err(|e| IngestError::Parse {
        path: path.to_path_buf(),
        reason: e.to_string(),
    })?;
    let mut manifest: Manifest = serde_json::from_str(&text).map_err(|e| IngestError::Parse {
        path: path.to_path_buf(),
        reason: e.to_string(),
    })?;
    let base = path.parent().unwrap_or(Path::new("")).to_path_buf();
    for entry in &mut manifest.entries {
        if entry.path.is_relative() {
            entry.path = base.join(&entry.path);
        }
    }
    if let Some(r) = manifest.reference.as_mut() {
        if r.is_relative() {
            *r = base.join(&*r);
        }
    }
    manifest.base_dir = base;
    validate(&manifest, max_tags).map_err(|reason| IngestError::Validation {
        path: path.to_path_buf(),
        reason,
    })?;
    Ok(manifest)
}

fn validate(manifest: &Manifest, max_tags: Option<usize>) -> Result<(), String> {
    if manifest.entries.is_empty() {
        return Err("entries list is empty".into());
    }
    let mut paths = HashSet::new();
    for entry in &manifest.entries {
        if !paths.insert(entry.path.as_path()) {
            return Err(format!("image {} is listed more than once", entry.path.display()));
        }
        if entry.label.trim().is_empty() {
            return Err(format!("image {} has an empty label", entry.path.display()));
        }
        if let Some(points) = entry.landmarks {
            check_manifest_landmarks(&entry.path, &FivePointLandmarks::from_array(points))?;
        }
    }
    let tags: BTreeSet<&str> = manifest.entries.iter().map(|e| e.label.as_str()).collect();
    if let Some(max) = max_tags {
        if tags.len() > max {
            return Err(format!(
                "case manifests carry at most {max} identity tags, found {}: {:?}",
                tags.len(),
                tags
            ));
        }
    }
    Ok(())
}

fn check_manifest_landmarks(path: &Path, lm: &FivePointLandmarks) -> Result<(), String> {
    if lm.right_eye.x <= lm.left_eye.x {
        return Err(format!(
            "landmarks for {}: right_eye.x must exceed left_eye.x (image-left/right convention)",
            path.display()
        ));
    }
    // Bounds need the image size; an unreadable header is reported when the image is decoded.
    let (width, height) = match image::image_dimensions(path) {
        Ok(dims) => dims,
        Err(_) => (u32::MAX, u32::MAX),
    };
    if !lm.within(width, height) {
        return Err(format!("landmarks for {} fall outside the image", path.display()));
    }
    Ok(())
}

/// A decoded RGB image with its identity tag.
#[derive(Debug, Clone)]
pub struct ImageSample {
    pub id: String,
    pub pixels: RgbImage,
    pub label: String,
    pub landmarks: Option<FivePointLandmarks>,
}

impl ImageSample {
    pub fn width(&self) -> u32 {
        self.pixels.width()
    }

    pub fn height(&self) -> u32 {
        self.pixels.height()
    }
}

/// Decode a PNG or JPEG to 8-bit RGB, honoring the EXIF orientation tag.
/// Landmarks are in the oriented (display) frame.
pub fn decode_image(
    path: &Path,
    label: &str,
    landmarks: Option<FivePointLandmarks>,
) -> Result<ImageSample, IngestError> {
    let decode_err = |reason: String| IngestError::Decode {
        path: path.to_path_buf(),
        reason,
    };
    let reader = ImageReader::open(path)
        .map_err(|e| decode_err(e.to_string()))?
        .with_guessed_format()
        .map_err(|e| decode_err(e.to_string()))?;
    let mut decoder = reader.into_decoder().map_err(|e| decode_err(e.to_string()))?;
    let orientation = decoder.orientation().map_err(|e| decode_err(e.to_string()))?;
    let mut img = image::DynamicImage::from_decoder(decoder).map_err(|e| decode_err(e.to_string()))?;
    img.apply_orientation(orientation);
    let pixels = img.to_rgb8();
    sample_from_pixels(path.to_string_lossy().into_owned(), pixels, label, landmarks).map_err(|e| match e {
        IngestError::TooSmall { width, height, .. } => IngestError::TooSmall {
            path: path.to_path_buf(),
            width,
            height,
        },
        other => other,
    })
}

/// Wrap already-decoded pixels, enforcing the size and landmark-bounds invariants.
pub fn sample_from_pixels(
    id: String,
    pixels: RgbImage,
    label: &str,
    landmarks: Option<FivePointLandmarks>,
) -> Result<ImageSample, IngestError> {
    let (width, height) = pixels.dimensions();
    if width < MIN_IMAGE_SIDE || height < MIN_IMAGE_SIDE {
        return Err(IngestError::TooSmall {
            path: PathBuf::from(&id),
            width,
            height,
        });
    }
    if let Some(lm) = &landmarks {
        if !lm.within(width, height) {
            return Err(IngestError::Validation {
                path: PathBuf::from(&id),
                reason: "landmarks fall outside the image".into(),
            });
        }
    }
    Ok(ImageSample {
        id,
        pixels,
        label: label.to_string(),
        landmarks,
    })
}

/// Decode every manifest entry. Failures are returned per entry, not aborted on.
pub fn load_samples(manifest: &Manifest) -> Vec<(String, Result<ImageSample, IngestError>)> {
    manifest
        .entries
        .iter()
        .map(|entry| {
            let id = manifest.entry_id(entry);
            let lm = entry.landmarks.map(FivePointLandmarks::from_array);
            let sample = decode_image(&entry.path, &entry.label, lm).map(|mut s| {
                s.id = id.clone();
                s
            });
            (id, sample)
        })
        .collect()
}

/// 2×3 affine map `(x, y) -> (a·x + b·y + c, d·x + e·y + f)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Affine2 {
    pub m: [f64; 6],
}

impl Affine2 {
    pub const IDENTITY: Affine2 = Affine2 {
        m: [1.0, 0.0, 0.0, 0.0, 1.0, 0.0],
    };

    pub fn apply(&self, p: Point) -> Point {
        let [a, b, c, d, e, f] = self.m;
        Point::new(a * p.x + b * p.y + c, d * p.x + e * p.y + f)
    }

    pub fn inverse(&self) -> Option<Affine2> {
        let [a, b, c, d, e, f] = self.m;
        let det = a * e - b * d;
        if det.abs() < 1e-12 {
            return None;
        }
        let (ia, ib, id, ie) = (e / det, -b / det, -d / det, a / det);
        Some(Affine2 {
            m: [ia, ib, -(ia * c + ib * f), id, ie, -(id * c + ie * f)],
        })
    }
}

/// Least-squares similarity transform (rotation, uniform scale, translation)
/// taking `src` onto `dst`.
pub fn estimate_similarity(src: &[Point; 5], dst: &[Point; 5]) -> Result<Affine2, String> {
    let centroid = |pts: &[Point; 5]| {
        let (sx, sy) = pts.iter().fold((0.0, 0.0), |(x, y), p| (x + p.x, y + p.y));
        Point::new(sx / 5.0, sy / 5.0)
    };
    let sc = centroid(src);
    let dc = centroid(dst);

    let (mut sxx, mut syy, mut sxy) = (0.0, 0.0, 0.0);
    let (mut num_a, mut num_b) = (0.0, 0.0);
    for (s, d) in src.iter().zip(dst) {
        let (x, y) = (s.x - sc.x, s.y - sc.y);
        let (u, v) = (d.x - dc.x, d.y - dc.y);
        sxx += x * x;
        syy += y * y;
        sxy += x * y;
        num_a += x * u + y * v;
        num_b += x * v - y * u;
    }
    let spread = sxx + syy;
    if !spread.is_finite() || spread < 1e-9 {
        return Err("landmarks are coincident".into());
    }
    // Smallest eigenvalue of the 2×2 scatter matrix vanishes for collinear points.
    let half_trace = spread / 2.0;
    let disc = ((sxx - syy) / 2.0).powi(2) + sxy * sxy;
    let lambda_min = half_trace - disc.sqrt();
    if lambda_min <= 1e-9 * spread {
        return Err("landmarks are collinear".into());
    }
    let a = num_a / spread;
    let b = num_b / spread;
    let tx = dc.x - (a * sc.x - b * sc.y);
    let ty = dc.y - (b * sc.x + a * sc.y);
    Ok(Affine2 {
        m: [a, -b, tx, b, a, ty],
    })
}

/// Resample `src` through `forward` (source → output coordinates) with bilinear
/// interpolation. Samples falling outside the source read as black.
pub fn warp_affine(src: &RgbImage, forward: &Affine2, out_w: u32, out_h: u32) -> Option<RgbImage> {
    let inv = forward.inverse()?;
    let (w, h) = (src.width() as i64, src.height() as i64);
    let texel = |x: i64, y: i64, c: usize| -> f64 {
        if x < 0 || y < 0 || x >= w || y >= h {
            0.0
        } else {
            f64::from(src.get_pixel(x as u32, y as u32).0[c])
        }
    };
    let mut out = RgbImage::new(out_w, out_h);
    for oy in 0..out_h {
        for ox in 0..out_w {
            let s = inv.apply(Point::new(f64::from(ox), f64::from(oy)));
            let x0 = s.x.floor();
            let y0 = s.y.floor();
            let fx = s.x - x0;
            let fy = s.y - y0;
            let (x0, y0) = (x0 as i64, y0 as i64);
            let mut rgb = [0u8; 3];
            for (c, slot) in rgb.iter_mut().enumerate() {
                let v = texel(x0, y0, c) * (1.0 - fx) * (1.0 - fy)
                    + texel(x0 + 1, y0, c) * fx * (1.0 - fy)
                    + texel(x0, y0 + 1, c) * (1.0 - fx) * fy
                    + texel(x0 + 1, y0 + 1, c) * fx * fy;
                *slot = v.round().clamp(0.0, 255.0) as u8;
            }
            out.put_pixel(ox, oy, image::Rgb(rgb));
        }
    }
    Some(out)
}

/// BT.601 luma of one 8-bit RGB pixel, in [0, 1].
#[inline]
pub fn luma_of(rgb: [u8; 3]) -> f64 {
    (0.299 * f64::from(rgb[0]) + 0.587 * f64::from(rgb[1]) + 0.114 * f64::from(rgb[2])) / 255.0
}

/// A canonical 112×112 face crop.
#[derive(Debug, Clone)]
pub struct AlignedFace {
    pixels: RgbImage,
    luma: Vec<f64>,
    pub canonical_landmarks: FivePointLandmarks,
    pub source_id: String,
    pub label: String,
}

impl AlignedFace {
    /// Build from a 112×112 crop; luma is derived from the pixels.
    pub fn new(
        pixels: RgbImage,
        canonical_landmarks: FivePointLandmarks,
        source_id: impl Into<String>,
        label: impl Into<String>,
    ) -> Self {
        assert_eq!(
            pixels.dimensions(),
            (ALIGNED_SIZE, ALIGNED_SIZE),
            "aligned crops are 112x112"
        );
        let luma = pixels.pixels().map(|p| luma_of(p.0)).collect();
        Self {
            pixels,
            luma,
            canonical_landmarks,
            source_id: source_id.into(),
            label: label.into(),
        }
    }

    pub fn pixels(&self) -> &RgbImage {
        &self.pixels
    }

    /// Row-major luma, `ALIGNED_SIZE²` values.
    pub fn luma(&self) -> &[f64] {
        &self.luma
    }

    #[inline]
    pub fn luma_at(&self, x: u32, y: u32) -> f64 {
        self.luma[(y * ALIGNED_SIZE + x) as usize]
    }

    /// View the crop as a sample whose landmarks are the canonical ones.
    pub fn to_sample(&self) -> ImageSample {
        ImageSample {
            id: self.source_id.clone(),
            pixels: self.pixels.clone(),
            label: self.label.clone(),
            landmarks: Some(self.canonical_landmarks),
        }
    }
}

/// Warp a sample onto the canonical template using its landmarks.
pub fn align_face(sample: &ImageSample) -> Result<AlignedFace, IngestError> {
    let landmarks = sample
        .landmarks
        .ok_or_else(|| IngestError::MissingLandmarks(sample.id.clone()))?;
    let degenerate = |reason: String| IngestError::DegenerateLandmarks {
        id: sample.id.clone(),
        reason,
    };
    let transform = estimate_similarity(&landmarks.points(), &FivePointLandmarks::template().points())
        .map_err(degenerate)?;
    let pixels = warp_affine(&sample.pixels, &transform, ALIGNED_SIZE, ALIGNED_SIZE)
        .ok_or_else(|| degenerate("transform is singular".into()))?;
    let mapped = landmarks.map(|p| transform.apply(p));
    Ok(AlignedFace::new(pixels, mapped, sample.id.clone(), sample.label.clone()))
}

/// Treat the whole image as a tight face crop: rescale it to 112×112 and
/// assign the template landmarks.
pub fn assume_aligned(sample: &ImageSample) -> AlignedFace {
    let sx = f64::from(ALIGNED_SIZE) / f64::from(sample.width());
    let sy = f64::from(ALIGNED_SIZE) / f64::from(sample.height());
    // Maps pixel-area edges onto each other: x' = (x + 0.5)·sx − 0.5.
    let transform = Affine2 {
        m: [sx, 0.0, 0.5 * sx - 0.5, 0.0, sy, 0.5 * sy - 0.5],
    };
    let pixels = warp_affine(&sample.pixels, &transform, ALIGNED_SIZE, ALIGNED_SIZE)
        .expect("positive scale factors are invertible");
    AlignedFace::new(
        pixels,
        FivePointLandmarks::template(),
        sample.id.clone(),
        sample.label.clone(),
    )
}

/// Align with landmarks when present; otherwise fall back to assume-aligned
/// mode if it is enabled.
pub fn prepare_face(sample: &ImageSample, assume_aligned_mode: bool) -> Result<AlignedFace, IngestError> {
    match (sample.landmarks.is_some(), assume_aligned_mode) {
        (true, _) => align_face(sample),
        (false, true) => Ok(assume_aligned(sample)),
        (false, false) => Err(IngestError::MissingLandmarks(sample.id.clone())),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn gradient_image(w: u32, h: u32) -> RgbImage {
        RgbImage::from_fn(w, h, |x, y| {
            image::Rgb([
                ((x * 7 + y * 3) % 256) as u8,
                ((x * 2 + y * 5) % 256) as u8,
                ((x * y) % 256) as u8,
            ])
        })
    }

    fn write_manifest(dir: &Path, body: &str) -> PathBuf {
        let p = dir.join("case.json");
        fs::File::create(&p).unwrap().write_all(body.as_bytes()).unwrap();
        p
    }

    #[test]
    fn manifest_with_two_sets_loads() {
        let dir = tempfile::tempdir().unwrap();
        let entries: Vec<String> = (0..16)
            .map(|i| format!(r#"{{"path": "real/{i}.png", "label": "real"}}"#))
            .chain((0..14).map(|i| format!(r#"{{"path": "double/{i}.png", "label": "double"}}"#)))
            .collect();
        let body = format!(r#"{{"case_name": "c", "entries": [{}]}}"#, entries.join(","));
        let m = load_manifest(&write_manifest(dir.path(), &body)).unwrap();
        assert_eq!(m.entries.len(), 30);
        assert_eq!(m.tags(), vec!["real".to_string(), "double".to_string()]);
        assert_eq!(m.entry_id(&m.entries[0]), "real/0.png");
    }

    #[test]
    fn empty_manifest_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let p = write_manifest(dir.path(), r#"{"case_name": "c", "entries": []}"#);
        assert!(matches!(load_manifest(&p), Err(IngestError::Validation { .. })));
    }

    #[test]
    fn duplicate_path_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let p = write_manifest(
            dir.path(),
            r#"{"case_name": "c", "entries": [{"path": "a.png", "label": "x"}, {"path": "a.png", "label": "y"}]}"#,
        );
        assert!(matches!(load_manifest(&p), Err(IngestError::Validation { .. })));
    }

    #[test]
    fn three_tags_rejected_for_case_but_not_reference() {
        let dir = tempfile::tempdir().unwrap();
        let p = write_manifest(
            dir.path(),
            r#"{"case_name": "c", "entries": [{"path": "a.png", "label": "x"}, {"path": "b.png", "label": "y"}, {"path": "c.png", "label": "z"}]}"#,
        );
        assert!(matches!(load_manifest(&p), Err(IngestError::Validation { .. })));
        assert_eq!(load_reference_manifest(&p).unwrap().tags().len(), 3);
    }

    #[test]
    fn malformed_manifest_is_parse_error() {
        let dir = tempfile::tempdir().unwrap();
        let p = write_manifest(dir.path(), "{ not json");
        assert!(matches!(load_manifest(&p), Err(IngestError::Parse { .. })));
        assert!(matches!(
            load_manifest(&dir.path().join("missing.json")),
            Err(IngestError::Parse { .. })
        ));
    }

    #[test]
    fn out_of_bounds_landmarks_rejected() {
        let dir = tempfile::tempdir().unwrap();
        gradient_image(40, 40).save(dir.path().join("a.png")).unwrap();
        let p = write_manifest(
            dir.path(),
            r#"{"case_name": "c", "entries": [{"path": "a.png", "label": "x",
               "landmarks": [[10,10],[30,10],[20,20],[12,30],[60,30]]}]}"#,
        );
        assert!(matches!(load_manifest(&p), Err(IngestError::Validation { .. })));
    }

    #[test]
    fn decode_reports_size_and_corruption() {
        let dir = tempfile::tempdir().unwrap();
        let big = dir.path().join("big.jpg");
        gradient_image(400, 300).save(&big).unwrap();
        let s = decode_image(&big, "real", None).unwrap();
        assert_eq!((s.width(), s.height()), (400, 300));

        let small = dir.path().join("small.png");
        gradient_image(8, 8).save(&small).unwrap();
        assert!(matches!(
            decode_image(&small, "real", None),
            Err(IngestError::TooSmall { width: 8, height: 8, .. })
        ));

        let bad = dir.path().join("bad.png");
        fs::write(&bad, b"\x89PNG\r\n\x1a\n garbage").unwrap();
        assert!(matches!(decode_image(&bad, "real", None), Err(IngestError::Decode { .. })));
    }

    #[test]
    fn grayscale_expands_to_three_channels() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("g.png");
        image::GrayImage::from_fn(20, 20, |x, _| image::Luma([(x * 10) as u8]))
            .save(&p)
            .unwrap();
        let s = decode_image(&p, "a", None).unwrap();
        let px = s.pixels.get_pixel(3, 5).0;
        assert_eq!(px, [30, 30, 30]);
    }

    #[test]
    fn identity_alignment_preserves_pixels() {
        let img = gradient_image(112, 112);
        let sample = sample_from_pixels("id".into(), img.clone(), "a", Some(FivePointLandmarks::template())).unwrap();
        let face = align_face(&sample).unwrap();
        let max_dev = img
            .pixels()
            .zip(face.pixels().pixels())
            .flat_map(|(a, b)| (0..3).map(move |c| (i16::from(a.0[c]) - i16::from(b.0[c])).abs()))
            .max()
            .unwrap();
        assert!(max_dev <= 1, "max deviation {max_dev}");
    }

    #[test]
    fn coincident_and_collinear_landmarks_are_degenerate() {
        let img = gradient_image(64, 64);
        let same = FivePointLandmarks::from_array([[20.0, 20.0]; 5]);
        let s = sample_from_pixels("a".into(), img.clone(), "a", Some(same)).unwrap();
        assert!(matches!(align_face(&s), Err(IngestError::DegenerateLandmarks { .. })));

        let line = FivePointLandmarks::from_array([[10.0, 10.0], [20.0, 20.0], [30.0, 30.0], [40.0, 40.0], [50.0, 50.0]]);
        let s = sample_from_pixels("b".into(), img, "a", Some(line)).unwrap();
        assert!(matches!(align_face(&s), Err(IngestError::DegenerateLandmarks { .. })));
    }

    #[test]
    fn similarity_recovers_known_transform() {
        let (theta, scale, tx, ty) = (0.3_f64, 1.7, 12.0, -4.0);
        let t = Affine2 {
            m: [
                scale * theta.cos(),
                -scale * theta.sin(),
                tx,
                scale * theta.sin(),
                scale * theta.cos(),
                ty,
            ],
        };
        let src = FivePointLandmarks::template().points();
        let dst = src.map(|p| t.apply(p));
        let est = estimate_similarity(&src, &dst).unwrap();
        for (a, b) in est.m.iter().zip(t.m.iter()) {
            assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn luma_matches_formula() {
        let face = AlignedFace::new(gradient_image(112, 112), FivePointLandmarks::template(), "x", "a");
        for (p, l) in face.pixels().pixels().zip(face.luma()) {
            let expect = (0.299 * p.0[0] as f64 + 0.587 * p.0[1] as f64 + 0.114 * p.0[2] as f64) / 255.0;
            assert!((expect - l).abs() <= 1e-9);
        }
    }

    #[test]
    fn assume_aligned_uses_template() {
        let s = sample_from_pixels("x".into(), gradient_image(200, 150), "a", None).unwrap();
        assert!(matches!(prepare_face(&s, false), Err(IngestError::MissingLandmarks(_))));
        let f = prepare_face(&s, true).unwrap();
        assert_eq!(f.pixels().dimensions(), (112, 112));
        assert_eq!(f.canonical_landmarks, FivePointLandmarks::template());
        assert_eq!(f.label, "a");
    }
}
