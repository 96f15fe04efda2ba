//! Face descriptors: a model-free baseline and ONNX-backed neural models.

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ingest::{warp_affine, AlignedFace, Affine2, ALIGNED_SIZE};
use crate::onnx::OnnxModel;

#[derive(Error, Debug)]
pub enum DescriptorError {
    #[error("cannot load model {path}: {reason}")]
    ModelLoad { path: PathBuf, reason: String },
    #[error("descriptor {name} declares {declared}-d embeddings but produces {actual}")]
    ShapeMismatch {
        name: String,
        declared: usize,
        actual: usize,
    },
    #[error("inference failed for {source_id}: {reason}")]
    Inference { source_id: String, reason: String },
    #[error("descriptor of {0} is the zero vector (uniform image?)")]
    ZeroVector(String),
    #[error("cannot compare embeddings from {left} ({left_dim}-d) and {right} ({right_dim}-d)")]
    DescriptorMismatch {
        left: String,
        left_dim: usize,
        right: String,
        right_dim: usize,
    },
    #[error("invalid descriptor preset {name}: {reason}")]
    Preset { name: String, reason: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DescriptorKind {
    NeuralModel,
    Baseline,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum TensorLayout {
    #[default]
    Nchw,
    Nhwc,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum ChannelOrder {
    #[default]
    Rgb,
    Bgr,
    /// Single BT.601 luma channel on the 0–255 scale.
    Gray,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum ResizeMode {
    /// Scale the whole crop to the input size.
    #[default]
    Stretch,
    /// Take the largest centered window with the input's aspect ratio, then scale.
    CenterCrop,
}

/// How an aligned crop becomes a model input tensor.
///
/// Each channel value `v` (0–255) is fed as `(v − mean[c]) · scale[c]`.
/// Crops are bilinearly resized when `width`/`height` differ from 112.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct InputSpec {
    pub width: u32,
    pub height: u32,
    pub channels: ChannelOrder,
    pub layout: TensorLayout,
    pub mean: Vec<f64>,
    pub scale: Vec<f64>,
    pub resize: ResizeMode,
}

impl Default for InputSpec {
    fn default() -> Self {
        Self {
            width: ALIGNED_SIZE,
            height: ALIGNED_SIZE,
            channels: ChannelOrder::Rgb,
            layout: TensorLayout::Nchw,
            mean: vec![127.5; 3],
            scale: vec![1.0 / 127.5; 3],
            resize: ResizeMode::Stretch,
        }
    }
}

impl InputSpec {
    pub fn channel_count(&self) -> usize {
        match self.channels {
            ChannelOrder::Gray => 1,
            _ => 3,
        }
    }

    pub fn shape(&self) -> [usize; 4] {
        let (c, h, w) = (self.channel_count(), self.height as usize, self.width as usize);
        match self.layout {
            TensorLayout::Nchw => [1, c, h, w],
            TensorLayout::Nhwc => [1, h, w, c],
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        let c = self.channel_count();
        if self.width == 0 || self.height == 0 {
            return Err("input width and height must be positive".into());
        }
        if self.mean.len() != c || self.scale.len() != c {
            return Err(format!("mean and scale need {c} entries each"));
        }
        Ok(())
    }

    /// Normalized input tensor, flattened in `shape()` order.
    pub fn tensor(&self, face: &AlignedFace) -> Vec<f32> {
        let resized;
        let img = if (self.width, self.height) == (ALIGNED_SIZE, ALIGNED_SIZE) {
            face.pixels()
        } else {
            let side = f64::from(ALIGNED_SIZE);
            let (w, h) = (f64::from(self.width), f64::from(self.height));
            let (cw, ch) = match self.resize {
                ResizeMode::Stretch => (side, side),
                ResizeMode::CenterCrop if w < h => ((side * w / h).round(), side),
                ResizeMode::CenterCrop => (side, (side * h / w).round()),
            };
            let (x0, y0) = ((side - cw) / 2.0, (side - ch) / 2.0);
            let (sx, sy) = (w / cw, h / ch);
            let t = Affine2 {
                m: [sx, 0.0, 0.5 * sx - 0.5 - x0 * sx, 0.0, sy, 0.5 * sy - 0.5 - y0 * sy],
            };
            resized = warp_affine(face.pixels(), &t, self.width, self.height).expect("positive scale");
            &resized
        };
        let c = self.channel_count();
        let (h, w) = (self.height as usize, self.width as usize);
        let mut out = vec![0f32; c * h * w];
        for (x, y, px) in img.enumerate_pixels() {
            let [r, g, b] = px.0.map(f64::from);
            let values: [f64; 3] = match self.channels {
                ChannelOrder::Rgb => [r, g, b],
                ChannelOrder::Bgr => [b, g, r],
                ChannelOrder::Gray => [0.299 * r + 0.587 * g + 0.114 * b, 0.0, 0.0],
            };
            let (x, y) = (x as usize, y as usize);
            for ch in 0..c {
                let v = ((values[ch] - self.mean[ch]) * self.scale[ch]) as f32;
                let idx = match self.layout {
                    TensorLayout::Nchw => ch * h * w + y * w + x,
                    TensorLayout::Nhwc => (y * w + x) * c + ch,
                };
                out[idx] = v;
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DescriptorSpec {
    pub name: String,
    pub kind: DescriptorKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model_path: Option<PathBuf>,
    pub embedding_dim: usize,
    #[serde(default)]
    pub input: InputSpec,
    /// Provenance of the normalization constants and similar remarks.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub notes: Option<String>,
    /// Reference output for `smoke_input`, recorded when the model was exported.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub smoke: Option<SmokeCheck>,
}

/// Maximum per-value deviation tolerated by the smoke check.
pub const SMOKE_TOLERANCE: f64 = 1e-4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SmokeCheck {
    /// Leading raw output values (before normalization).
    pub output_head: Vec<f64>,
    pub output_sum: f64,
}

/// Deterministic probe tensor: element `k` is `((37k + 11) mod 256) / 127.5 − 1`.
pub fn smoke_input(len: usize) -> Vec<f32> {
    (0..len).map(|k| ((37 * k + 11) % 256) as f32 / 127.5 - 1.0).collect()
}

/// Largest deviation of `output` from the recorded check, or an error if the
/// output is shorter than the recorded head.
pub fn smoke_deviation(check: &SmokeCheck, output: &[f32]) -> Result<f64, String> {
    if output.len() < check.output_head.len() {
        return Err(format!(
            "smoke output has {} values, check records {}",
            output.len(),
            check.output_head.len()
        ));
    }
    let head = check
        .output_head
        .iter()
        .zip(output)
        .map(|(want, got)| (want - f64::from(*got)).abs())
        .fold(0.0, f64::max);
    let sum: f64 = output.iter().map(|v| f64::from(*v)).sum();
    // The sum accumulates rounding from every element.
    let sum_dev = (sum - check.output_sum).abs() / (output.len() as f64).sqrt();
    Ok(head.max(sum_dev))
}

impl DescriptorSpec {
    /// The 256-d block-average baseline.
    pub fn baseline() -> Self {
        Self {
            name: "baseline".into(),
            kind: DescriptorKind::Baseline,
            model_path: None,
            embedding_dim: 256,
            input: InputSpec::default(),
            notes: None,
            smoke: None,
        }
    }

    /// Resolve a relative `model_path` against `model_dir`.
    pub fn with_model_dir(mut self, model_dir: Option<&Path>) -> Self {
        if let (Some(dir), Some(path)) = (model_dir, &self.model_path) {
            if path.is_relative() {
                self.model_path = Some(dir.join(path));
            }
        }
        self
    }

    /// Read `<dir>/<name>.json`; the name `baseline` resolves without a file.
    pub fn preset(name: &str, dir: &Path) -> Result<Self, DescriptorError> {
        let path = dir.join(format!("{name}.json"));
        if name == "baseline" && !path.exists() {
            return Ok(Self::baseline());
        }
        let preset_err = |reason: String| DescriptorError::Preset {
            name: name.to_string(),
            reason,
        };
        let text = fs::read_to_string(&path).map_err(|e| preset_err(format!("{}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| preset_err(format!("{}: {e}", path.display())))
    }
}

/// A unit-norm embedding.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingVector {
    pub descriptor_name: String,
    pub values: Vec<f64>,
    pub source_id: String,
}

impl EmbeddingVector {
    /// L2-normalize `raw`; the zero vector is an error.
    pub fn normalized(descriptor_name: &str, source_id: &str, raw: Vec<f64>) -> Result<Self, DescriptorError> {
        let norm = raw.iter().map(|v| v * v).sum::<f64>().sqrt();
        if !(norm > 1e-12) || !norm.is_finite() {
            return Err(DescriptorError::ZeroVector(source_id.to_string()));
        }
        Ok(Self {
            descriptor_name: descriptor_name.to_string(),
            values: raw.into_iter().map(|v| v / norm).collect(),
            source_id: source_id.to_string(),
        })
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }
}

/// Dot product of two unit embeddings from the same descriptor.
pub fn cosine(a: &EmbeddingVector, b: &EmbeddingVector) -> Result<f64, DescriptorError> {
    if a.descriptor_name != b.descriptor_name || a.dim() != b.dim() {
        return Err(DescriptorError::DescriptorMismatch {
            left: a.descriptor_name.clone(),
            left_dim: a.dim(),
            right: b.descriptor_name.clone(),
            right_dim: b.dim(),
        });
    }
    Ok(a.values.iter().zip(&b.values).map(|(x, y)| x * y).sum())
}

/// A loaded descriptor. Neural handles run one inference at a time.
#[derive(Debug)]
pub enum Descriptor {
    Baseline { name: String, grid: usize },
    Neural {
        spec: DescriptorSpec,
        model: Mutex<OnnxModel>,
    },
}

pub fn load_descriptor(spec: &DescriptorSpec) -> Result<Descriptor, DescriptorError> {
    let preset_err = |reason: String| DescriptorError::Preset {
        name: spec.name.clone(),
        reason,
    };
    if spec.embedding_dim == 0 {
        return Err(preset_err("embedding_dim must be positive".into()));
    }
    match spec.kind {
        DescriptorKind::Baseline => {
            let grid = (spec.embedding_dim as f64).sqrt().round() as usize;
            if grid * grid != spec.embedding_dim || grid > ALIGNED_SIZE as usize {
                return Err(DescriptorError::ShapeMismatch {
                    name: spec.name.clone(),
                    declared: spec.embedding_dim,
                    actual: grid * grid,
                });
            }
            Ok(Descriptor::Baseline {
                name: spec.name.clone(),
                grid,
            })
        }
        DescriptorKind::NeuralModel => {
            let path = spec
                .model_path
                .as_ref()
                .ok_or_else(|| preset_err("neural-model descriptors need a model_path".into()))?;
            spec.input.validate().map_err(preset_err)?;
            let model_err = |reason: String| DescriptorError::ModelLoad {
                path: path.clone(),
                reason,
            };
            let mut model = OnnxModel::load(path, spec.input.shape()).map_err(model_err)?;
            if model.output_len() != spec.embedding_dim {
                return Err(DescriptorError::ShapeMismatch {
                    name: spec.name.clone(),
                    declared: spec.embedding_dim,
                    actual: model.output_len(),
                });
            }
            if let Some(check) = &spec.smoke {
                let len = spec.input.shape().iter().product();
                let output = model.run(smoke_input(len)).map_err(model_err)?;
                let dev = smoke_deviation(check, &output).map_err(model_err)?;
                if dev > SMOKE_TOLERANCE {
                    return Err(model_err(format!("smoke check failed: max deviation {dev:.3e}")));
                }
            }
            Ok(Descriptor::Neural {
                spec: spec.clone(),
                model: Mutex::new(model),
            })
        }
    }
}

impl Descriptor {
    pub fn name(&self) -> &str {
        match self {
            Descriptor::Baseline { name, .. } => name,
            Descriptor::Neural { spec, .. } => &spec.name,
        }
    }

    pub fn embedding_dim(&self) -> usize {
        match self {
            Descriptor::Baseline { grid, .. } => grid * grid,
            Descriptor::Neural { spec, .. } => spec.embedding_dim,
        }
    }

    pub fn embed(&self, face: &AlignedFace) -> Result<EmbeddingVector, DescriptorError> {
        match self {
            Descriptor::Baseline { name, grid } => {
                EmbeddingVector::normalized(name, &face.source_id, baseline_features(face, *grid))
            }
            Descriptor::Neural { spec, model } => {
                let input = spec.input.tensor(face);
                let output = {
                    let mut model = model.lock().unwrap_or_else(|e| e.into_inner());
                    model.run(input)
                }
                .map_err(|reason| DescriptorError::Inference {
                    source_id: face.source_id.clone(),
                    reason,
                })?;
                if output.len() != spec.embedding_dim {
                    return Err(DescriptorError::ShapeMismatch {
                        name: spec.name.clone(),
                        declared: spec.embedding_dim,
                        actual: output.len(),
                    });
                }
                EmbeddingVector::normalized(
                    &spec.name,
                    &face.source_id,
                    output.into_iter().map(f64::from).collect(),
                )
            }
        }
    }
}

/// Block-average luma onto a `grid × grid` lattice and subtract the mean.
/// Block edges sit at `floor(k·112 / grid)`.
pub fn baseline_features(face: &AlignedFace, grid: usize) -> Vec<f64> {
    let size = ALIGNED_SIZE as usize;
    let edges: Vec<usize> = (0..=grid).map(|k| k * size / grid).collect();
    let luma = face.luma();
    let mut cells = Vec::with_capacity(grid * grid);
    for gy in 0..grid {
        for gx in 0..grid {
            let (y0, y1) = (edges[gy], edges[gy + 1]);
            let (x0, x1) = (edges[gx], edges[gx + 1]);
            let mut sum = 0.0;
            for y in y0..y1 {
                sum += luma[y * size + x0..y * size + x1].iter().sum::<f64>();
            }
            cells.push(sum / ((y1 - y0) * (x1 - x0)) as f64);
        }
    }
    let mean = cells.iter().sum::<f64>() / cells.len() as f64;
    cells.into_iter().map(|v| v - mean).collect()
}
