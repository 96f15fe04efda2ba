//! Parametric synthetic faces for fixtures and self-contained test runs.
//!
//! An identity fixes face geometry, skin tone and a smooth skin texture in the
//! canonical 112×112 frame. A capture places that face in a larger canvas
//! through a random similarity transform and applies illumination gain, a
//! lighting gradient, optional sunglasses, blur and sensor noise. Sensor noise
//! is added after the illumination gain, so darker captures have lower SNR.

use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use image::{Rgb, RgbImage};
use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::ingest::{Affine2, AlignedFace, FivePointLandmarks, ManifestEntry, Point, ALIGNED_SIZE};
use crate::quality::{gaussian_blur, gaussian_kernel};

const TEXTURE_GRID: usize = 16;

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticIdentity {
    pub landmarks: FivePointLandmarks,
    pub face_center: Point,
    pub face_radii: (f64, f64),
    pub skin: [f64; 3],
    pub hair: [f64; 3],
    pub hairline: f64,
    pub eye_size: (f64, f64),
    pub mouth_height: f64,
    texture: Vec<f64>,
    texture_amplitude: f64,
}

impl SyntheticIdentity {
    pub fn from_seed(seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x1d_e471_7e);
        let mut jitter = |p: [f64; 2], amount: f64| {
            [
                p[0] + rng.random_range(-amount..amount),
                p[1] + rng.random_range(-amount..amount),
            ]
        };
        let t = crate::ingest::CANONICAL_TEMPLATE;
        let landmarks = FivePointLandmarks::from_array([
            jitter(t[0], 0.5),
            jitter(t[1], 0.5),
            jitter(t[2], 0.5),
            jitter(t[3], 0.5),
            jitter(t[4], 0.5),
        ]);
        let tone = rng.random_range(0.64..0.66);
        let skin = [
            tone,
            tone * rng.random_range(0.78..0.80),
            tone * rng.random_range(0.65..0.67),
        ];
        let hair_tone = rng.random_range(0.24..0.26);
        let hair = [hair_tone, hair_tone * 0.85, hair_tone * 0.7];
        let raw: Vec<f64> = (0..TEXTURE_GRID * TEXTURE_GRID)
            .map(|_| rng.random_range(-1.0..1.0))
            .collect();
        let texture = high_pass_unit_rms(&raw);
        Self {
            landmarks,
            face_center: Point::new(56.0 + rng.random_range(-1.0..1.0), 66.0 + rng.random_range(-1.0..1.0)),
            face_radii: (rng.random_range(41.5..42.5), rng.random_range(55.0..56.0)),
            skin,
            hair,
            hairline: rng.random_range(25.5..26.5),
            eye_size: (rng.random_range(6.0..7.0), rng.random_range(3.0..3.5)),
            mouth_height: rng.random_range(3.0..4.0),
            texture,
            texture_amplitude: 0.2,
        }
    }

    fn texture_at(&self, u: f64, v: f64) -> f64 {
        // Bilinear lookup on a grid spanning the crop.
        let g = (TEXTURE_GRID - 1) as f64;
        let x = (u / f64::from(ALIGNED_SIZE - 1) * g).clamp(0.0, g);
        let y = (v / f64::from(ALIGNED_SIZE - 1) * g).clamp(0.0, g);
        let (x0, y0) = (x.floor() as usize, y.floor() as usize);
        let (x1, y1) = ((x0 + 1).min(TEXTURE_GRID - 1), (y0 + 1).min(TEXTURE_GRID - 1));
        let (fx, fy) = (x - x0 as f64, y - y0 as f64);
        let t = |xx: usize, yy: usize| self.texture[yy * TEXTURE_GRID + xx];
        t(x0, y0) * (1.0 - fx) * (1.0 - fy) + t(x1, y0) * fx * (1.0 - fy) + t(x0, y1) * (1.0 - fx) * fy + t(x1, y1) * fx * fy
    }

    /// Linear RGB in [0, 1] at canonical-frame point `(u, v)`.
    fn paint(&self, u: f64, v: f64, sunglasses: bool) -> [f64; 3] {
        let background = [0.42, 0.44, 0.47];
        let (cx, cy) = (self.face_center.x, self.face_center.y);
        let (rx, ry) = self.face_radii;
        let r2 = ((u - cx) / rx).powi(2) + ((v - cy) / ry).powi(2);
        if r2 > 1.0 {
            return background;
        }
        if v < self.hairline || r2 > 0.86 && v < cy {
            return self.hair;
        }
        let lm = &self.landmarks;
        let shade = 1.0 + self.texture_amplitude * self.texture_at(u, v) - 0.12 * r2;
        let mut c = self.skin.map(|s| s * shade);

        let in_ellipse = |p: Point, a: f64, b: f64| ((u - p.x) / a).powi(2) + ((v - p.y) / b).powi(2) <= 1.0;
        for eye in [lm.left_eye, lm.right_eye] {
            let brow = Point::new(eye.x, eye.y - 7.5);
            if in_ellipse(brow, self.eye_size.0 + 2.0, 1.4) {
                c = self.hair;
            }
            if in_ellipse(eye, self.eye_size.0, self.eye_size.1) {
                c = [0.93, 0.93, 0.92];
                if in_ellipse(eye, self.eye_size.1, self.eye_size.1) {
                    c = [0.12, 0.09, 0.07];
                }
            }
            if sunglasses && (u - eye.x).abs() <= 11.0 && (v - eye.y).abs() <= 7.0 {
                c = [0.03, 0.03, 0.04];
            }
        }
        let nose = lm.nose_tip;
        if in_ellipse(Point::new(nose.x, nose.y + 1.0), 4.5, 2.2) {
            c = c.map(|x| x * 0.7);
        }
        let mouth_mid = Point::new((lm.left_mouth.x + lm.right_mouth.x) / 2.0, (lm.left_mouth.y + lm.right_mouth.y) / 2.0);
        let half_width = (lm.right_mouth.x - lm.left_mouth.x).abs() / 2.0;
        if in_ellipse(mouth_mid, half_width, self.mouth_height) {
            c = [0.62, 0.22, 0.24];
        }
        c
    }
}

/// Subtract the 3×3 local mean (edge-clamped) and scale to unit RMS, so the
/// texture carries little energy at the scale of the shared face layout.
fn high_pass_unit_rms(raw: &[f64]) -> Vec<f64> {
    let g = TEXTURE_GRID as isize;
    let at = |x: isize, y: isize| raw[(y.clamp(0, g - 1) * g + x.clamp(0, g - 1)) as usize];
    let hp: Vec<f64> = (0..g * g)
        .map(|i| {
            let (x, y) = (i % g, i / g);
            let mut sum = 0.0;
            for dy in -1..=1 {
                for dx in -1..=1 {
                    sum += at(x + dx, y + dy);
                }
            }
            at(x, y) - sum / 9.0
        })
        .collect();
    let rms = (hp.iter().map(|v| v * v).sum::<f64>() / hp.len() as f64).sqrt();
    hp.into_iter().map(|v| v / rms).collect()
}

/// One photograph of an identity.
#[derive(Debug, Clone, PartialEq)]
pub struct Capture {
    pub canvas: (u32, u32),
    pub rotation_deg: f64,
    /// Canvas pixels per canonical-frame unit.
    pub scale: f64,
    /// Canvas position of the canonical crop center.
    pub center: Point,
    pub gain: f64,
    /// Peak-to-peak strength of a linear lighting ramp.
    pub gradient: f64,
    pub gradient_angle_deg: f64,
    pub sunglasses: bool,
    pub blur_sigma: f64,
    pub noise_sigma: f64,
    /// Standard deviation of spatially correlated luminance noise.
    pub blotch_sigma: f64,
    /// Correlation length of that noise, in canvas pixels.
    pub blotch_scale: f64,
    /// Standard deviation of the reported landmark positions, in canvas pixels.
    pub landmark_noise: f64,
    pub seed: u64,
}

impl Capture {
    /// A well-lit capture with mild random pose, lighting, blur and noise.
    pub fn random(seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xca97_0e);
        let scale = rng.random_range(1.2..1.7);
        // Keep the whole rotated face on the canvas.
        let extent = (f64::from(ALIGNED_SIZE) * scale * 1.25).ceil() as u32;
        let w = extent + rng.random_range(16..48);
        let h = extent + rng.random_range(24..64);
        Self {
            canvas: (w, h),
            rotation_deg: rng.random_range(-12.0..12.0),
            scale,
            center: Point::new(
                f64::from(w) / 2.0 + rng.random_range(-8.0..8.0),
                f64::from(h) / 2.0 + rng.random_range(-8.0..8.0),
            ),
            gain: rng.random_range(0.9..1.1),
            gradient: rng.random_range(0.0..0.45),
            gradient_angle_deg: rng.random_range(0.0..360.0),
            sunglasses: false,
            blur_sigma: rng.random_range(0.0..0.8),
            noise_sigma: 0.03,
            blotch_sigma: 0.025,
            blotch_scale: 4.0,
            landmark_noise: 0.6,
            seed,
        }
    }

    /// Canonical frame → canvas.
    pub fn transform(&self) -> Affine2 {
        let theta = self.rotation_deg.to_radians();
        let (a, b) = (self.scale * theta.cos(), self.scale * theta.sin());
        let c = f64::from(ALIGNED_SIZE - 1) / 2.0;
        Affine2 {
            m: [a, -b, self.center.x - (a * c - b * c), b, a, self.center.y - (b * c + a * c)],
        }
    }
}

/// Render a capture. Returns the image and the (noisy) reported landmarks.
pub fn render(identity: &SyntheticIdentity, capture: &Capture) -> (RgbImage, FivePointLandmarks) {
    let forward = capture.transform();
    let inverse = forward.inverse().expect("capture scale is positive");
    let (w, h) = capture.canvas;
    let (wu, hu) = (w as usize, h as usize);

    let theta = capture.gradient_angle_deg.to_radians();
    let (gx, gy) = (theta.cos(), theta.sin());
    let diag = f64::from(w).hypot(f64::from(h));

    let mut planes = vec![vec![0.0; wu * hu]; 3];
    const OFFSETS: [f64; 2] = [-0.25, 0.25];
    for y in 0..hu {
        for x in 0..wu {
            let mut acc = [0.0; 3];
            for dy in OFFSETS {
                for dx in OFFSETS {
                    let q = inverse.apply(Point::new(x as f64 + dx, y as f64 + dy));
                    let c = identity.paint(q.x, q.y, capture.sunglasses);
                    for k in 0..3 {
                        acc[k] += c[k] / 4.0;
                    }
                }
            }
            let ramp = 1.0 + capture.gradient * (((x as f64 - wu as f64 / 2.0) * gx + (y as f64 - hu as f64 / 2.0) * gy) / diag);
            for k in 0..3 {
                planes[k][y * wu + x] = acc[k] * capture.gain * ramp;
            }
        }
    }
    if capture.blur_sigma > 0.05 {
        let radius = (3.0 * capture.blur_sigma).ceil() as usize;
        for plane in &mut planes {
            *plane = gaussian_blur(plane, wu, hu, capture.blur_sigma, radius);
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(capture.seed ^ 0x5e_2503);
    let noise = Normal::new(0.0, capture.noise_sigma.max(0.0)).expect("finite sigma");
    let blotches = blotch_field(&mut rng, wu, hu, capture.blotch_sigma, capture.blotch_scale);
    let img = RgbImage::from_fn(w, h, |x, y| {
        let i = y as usize * wu + x as usize;
        Rgb([0, 1, 2].map(|k| {
            let v = planes[k][i] + blotches[i] + noise.sample(&mut rng);
            (v * 255.0).round().clamp(0.0, 255.0) as u8
        }))
    });

    let lm_noise = Normal::new(0.0, capture.landmark_noise.max(0.0)).expect("finite sigma");
    let (maxx, maxy) = (f64::from(w) - 1.0, f64::from(h) - 1.0);
    let landmarks = identity.landmarks.map(|p| {
        let q = forward.apply(p);
        Point::new(
            (q.x + lm_noise.sample(&mut rng)).clamp(0.0, maxx),
            (q.y + lm_noise.sample(&mut rng)).clamp(0.0, maxy),
        )
    });
    (img, landmarks)
}

/// White noise blurred to correlation length `scale`, rescaled to std `sigma`.
fn blotch_field(rng: &mut ChaCha8Rng, w: usize, h: usize, sigma: f64, scale: f64) -> Vec<f64> {
    if sigma <= 0.0 || scale <= 0.0 {
        return vec![0.0; w * h];
    }
    let unit = Normal::new(0.0, 1.0).expect("unit normal");
    let white: Vec<f64> = (0..w * h).map(|_| unit.sample(rng)).collect();
    let radius = (3.0 * scale).ceil() as usize;
    let gain: f64 = gaussian_kernel(scale, radius).iter().map(|k| k * k).sum();
    gaussian_blur(&white, w, h, scale, radius)
        .into_iter()
        .map(|v| v * sigma / gain)
        .collect()
}

/// A random 112×112 crop with template landmarks: a synthetic face under a
/// random capture, or a random texture, for fuzzing the quality metrics.
pub fn random_aligned_face(seed: u64) -> AlignedFace {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let kind = rng.random_range(0..4u32);
    let img = match kind {
        0 => {
            // Uniform noise with random range.
            let lo = rng.random_range(0..200u32);
            let hi = rng.random_range(lo + 1..256);
            RgbImage::from_fn(ALIGNED_SIZE, ALIGNED_SIZE, |_, _| {
                Rgb([0, 1, 2].map(|_| rng.random_range(lo..hi) as u8))
            })
        }
        1 => {
            // Blocky pattern.
            let block = rng.random_range(1..16u32);
            let levels: Vec<u8> = (0..256).map(|_| rng.random_range(0..=255u32) as u8).collect();
            RgbImage::from_fn(ALIGNED_SIZE, ALIGNED_SIZE, |x, y| {
                let v = levels[((x / block) * 31 + (y / block) * 17) as usize % 256];
                Rgb([v, v.wrapping_add(20), v / 2])
            })
        }
        _ => {
            let identity = SyntheticIdentity::from_seed(rng.random());
            let mut capture = Capture::random(rng.random());
            capture.canvas = (ALIGNED_SIZE, ALIGNED_SIZE);
            capture.rotation_deg = 0.0;
            capture.scale = 1.0;
            capture.center = Point::new(55.5, 55.5);
            capture.gain = rng.random_range(0.2..1.4);
            capture.sunglasses = rng.random_bool(0.3);
            capture.blur_sigma = rng.random_range(0.0..2.0);
            capture.noise_sigma = rng.random_range(0.0..0.1);
            render(&identity, &capture).0
        }
    };
    AlignedFace::new(img, FivePointLandmarks::template(), format!("random-{seed}"), "random")
}

/// How a generated set is captured.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SetOptions {
    /// Multiplies every capture's illumination gain.
    pub gain_factor: f64,
    /// Fraction of images (from the end of the set) wearing sunglasses.
    pub sunglasses_fraction: f64,
}

impl Default for SetOptions {
    fn default() -> Self {
        Self {
            gain_factor: 1.0,
            sunglasses_fraction: 0.0,
        }
    }
}

/// One labeled set of a case: `count` captures of `identity_seed`.
#[derive(Debug, Clone, PartialEq)]
pub struct SetSpec {
    pub label: String,
    pub identity_seed: u64,
    pub count: usize,
    pub options: SetOptions,
}

fn write_set(dir: &Path, set: &SetSpec, capture_seed: u64) -> io::Result<Vec<ManifestEntry>> {
    let sub = dir.join(&set.label);
    fs::create_dir_all(&sub)?;
    let identity = SyntheticIdentity::from_seed(set.identity_seed);
    let glasses_from = set.count - (set.sunglasses_fraction_count());
    (0..set.count)
        .map(|k| {
            let mut capture = Capture::random(capture_seed.wrapping_mul(1_000_003).wrapping_add(k as u64));
            capture.gain *= set.options.gain_factor;
            capture.sunglasses = k >= glasses_from;
            let (img, lm) = render(&identity, &capture);
            let name = format!("{:03}.png", k);
            img.save(sub.join(&name)).map_err(io::Error::other)?;
            Ok(ManifestEntry {
                path: PathBuf::from(&set.label).join(name),
                label: set.label.clone(),
                landmarks: Some(lm.to_array()),
            })
        })
        .collect()
}

impl SetSpec {
    fn sunglasses_fraction_count(&self) -> usize {
        (self.options.sunglasses_fraction * self.count as f64).round() as usize
    }
}

fn write_manifest_json(
    path: &Path,
    case_name: &str,
    reference: Option<&str>,
    entries: &[ManifestEntry],
) -> io::Result<()> {
    let mut doc = serde_json::json!({
        "case_name": case_name,
        "entries": entries,
    });
    if let Some(r) = reference {
        doc["reference"] = serde_json::Value::String(r.to_string());
    }
    let text = serde_json::to_string_pretty(&doc).map_err(io::Error::other)?;
    fs::write(path, text + "\n")
}

/// Write a two-set case (images plus `manifest.json`) into `dir`.
pub fn write_case(
    dir: &Path,
    case_name: &str,
    sets: [&SetSpec; 2],
    reference: Option<&str>,
    seed: u64,
) -> io::Result<PathBuf> {
    fs::create_dir_all(dir)?;
    let mut entries = write_set(dir, sets[0], seed.wrapping_mul(2))?;
    entries.extend(write_set(dir, sets[1], seed.wrapping_mul(2).wrapping_add(1))?);
    let path = dir.join("manifest.json");
    write_manifest_json(&path, case_name, reference, &entries)?;
    Ok(path)
}

/// Write a reference population of `identities × per_identity` captures.
/// Identity seeds are `seed_base + k`.
pub fn write_reference(dir: &Path, identities: usize, per_identity: usize, seed_base: u64) -> io::Result<PathBuf> {
    fs::create_dir_all(dir)?;
    let mut entries = Vec::new();
    for k in 0..identities {
        let set = SetSpec {
            label: format!("id{k:03}"),
            identity_seed: seed_base + k as u64,
            count: per_identity,
            options: SetOptions::default(),
        };
        entries.extend(write_set(dir, &set, seed_base.wrapping_add(7919 * k as u64 + 1))?);
    }
    let path = dir.join("manifest.json");
    write_manifest_json(&path, "reference", None, &entries)?;
    Ok(path)
}
