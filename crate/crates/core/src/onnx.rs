//! ONNX inference through tract, shared by neural descriptors and auxiliary
//! classifiers.

use std::fmt;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use tract_onnx::prelude::*;

use crate::descriptors::InputSpec;
use crate::ingest::AlignedFace;
use crate::quality::{AuxClassifier, ProbabilityModel};

type Plan = Arc<TypedRunnableModel>;

/// A single-input, single-output model with a fixed input shape.
pub struct OnnxModel {
    path: PathBuf,
    plan: Plan,
    input_shape: [usize; 4],
    output_len: usize,
}

impl fmt::Debug for OnnxModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("OnnxModel")
            .field("path", &self.path)
            .field("input_shape", &self.input_shape)
            .field("output_len", &self.output_len)
            .finish()
    }
}

impl OnnxModel {
    pub fn load(path: &Path, input_shape: [usize; 4]) -> Result<Self, String> {
        if !path.is_file() {
            return Err("model file not found".into());
        }
        let typed = tract_onnx::onnx()
            .model_for_path(path)
            .and_then(|m| m.with_input_fact(0, f32::fact(input_shape).into()))
            .and_then(|m| m.into_optimized())
            .map_err(|e| format!("{e:#}"))?;
        let outlets = |r: TractResult<&[OutletId]>| r.map(|o| o.len()).unwrap_or(0);
        if outlets(typed.input_outlets()) != 1 || outlets(typed.output_outlets()) != 1 {
            return Err("expected exactly one input and one output tensor".into());
        }
        let output_len = typed
            .output_fact(0)
            .ok()
            .and_then(|f| f.shape.as_concrete().map(|dims| dims.iter().product::<usize>()))
            .ok_or("output shape is not fully determined by the input shape")?;
        let plan = typed.into_runnable().map_err(|e| format!("{e:#}"))?;
        Ok(Self {
            path: path.to_path_buf(),
            plan,
            input_shape,
            output_len,
        })
    }

    pub fn output_len(&self) -> usize {
        self.output_len
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn run(&mut self, input: Vec<f32>) -> Result<Vec<f32>, String> {
        let tensor = Tensor::from_shape(&self.input_shape, &input).map_err(|e| format!("{e:#}"))?;
        let outputs = self.plan.run(tvec!(tensor.into())).map_err(|e| format!("{e:#}"))?;
        let view = outputs[0].to_plain_array_view::<f32>().map_err(|e| format!("{e:#}"))?;
        Ok(view.iter().copied().collect())
    }
}

/// Configuration for a sunglasses or gender classifier.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuxClassifierSpec {
    pub name: String,
    pub model_path: PathBuf,
    #[serde(default)]
    pub input: InputSpec,
    /// Output index of the class whose probability is the quality score.
    pub positive_class: usize,
}

impl AuxClassifierSpec {
    pub fn load(&self) -> Result<AuxClassifier, String> {
        self.input.validate()?;
        let model = OnnxModel::load(&self.model_path, self.input.shape())
            .map_err(|e| format!("{}: {e}", self.model_path.display()))?;
        if self.positive_class >= model.output_len() {
            return Err(format!(
                "{}: positive_class {} but the model has {} outputs",
                self.model_path.display(),
                self.positive_class,
                model.output_len()
            ));
        }
        Ok(AuxClassifier::new(
            self.name.clone(),
            Box::new(OnnxProbabilityModel {
                model,
                input: self.input.clone(),
            }),
            self.positive_class,
        ))
    }
}

struct OnnxProbabilityModel {
    model: OnnxModel,
    input: InputSpec,
}

impl ProbabilityModel for OnnxProbabilityModel {
    fn predict(&mut self, face: &AlignedFace) -> Result<Vec<f64>, String> {
        let out = self.model.run(self.input.tensor(face))?;
        Ok(out.into_iter().map(f64::from).collect())
    }
}
