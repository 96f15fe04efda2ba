//! Run configuration, read from JSON. Relative paths are resolved against the
//! directory containing the configuration file.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use claimcheck_core::analysis::Thresholds;
use claimcheck_core::onnx::AuxClassifierSpec;
use claimcheck_core::quality::QualityConfig;
use claimcheck_core::render::HeatmapStyle;
use serde::{Deserialize, Serialize};

use crate::error::CliError;

/// Default model directory for presets with relative model paths.
pub const MODEL_DIR_ENV: &str = "CLAIMCHECK_MODEL_DIR";
pub const DEFAULT_PRESET_DIR: &str = "config/descriptors";
pub const DEFAULT_BINS: usize = 50;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClassifierPaths {
    #[serde(default)]
    pub sunglasses: Option<AuxClassifierSpec>,
    #[serde(default)]
    pub femininity: Option<AuxClassifierSpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub case_manifest: PathBuf,
    /// Overrides the reference named in the case manifest.
    #[serde(default)]
    pub reference_manifest: Option<PathBuf>,
    /// Descriptor name → previously computed calibration file.
    #[serde(default)]
    pub calibration_cache: BTreeMap<String, PathBuf>,
    #[serde(default = "default_descriptors")]
    pub descriptors: Vec<String>,
    #[serde(default)]
    pub preset_dir: Option<PathBuf>,
    #[serde(default)]
    pub model_dir: Option<PathBuf>,
    #[serde(default)]
    pub classifiers: ClassifierPaths,
    #[serde(default)]
    pub quality: QualityConfig,
    #[serde(default)]
    pub thresholds: Thresholds,
    pub output_dir: PathBuf,
    /// Worker threads; 0 or absent uses one per core.
    #[serde(default)]
    pub workers: usize,
    #[serde(default)]
    pub assume_aligned: bool,
    #[serde(default = "default_bins")]
    pub bins: usize,
    #[serde(default)]
    pub heatmap: HeatmapStyle,
}

fn default_descriptors() -> Vec<String> {
    vec!["baseline".into()]
}

fn default_bins() -> usize {
    DEFAULT_BINS
}

fn resolve(base: &Path, p: &mut PathBuf) {
    if p.is_relative() {
        *p = base.join(&*p);
    }
}

impl RunConfig {
    /// A configuration with defaults for everything but the two required paths.
    pub fn new(case_manifest: impl Into<PathBuf>, output_dir: impl Into<PathBuf>) -> Self {
        Self {
            case_manifest: case_manifest.into(),
            reference_manifest: None,
            calibration_cache: BTreeMap::new(),
            descriptors: default_descriptors(),
            preset_dir: None,
            model_dir: None,
            classifiers: ClassifierPaths::default(),
            quality: QualityConfig::default(),
            thresholds: Thresholds::default(),
            output_dir: output_dir.into(),
            workers: 0,
            assume_aligned: false,
            bins: DEFAULT_BINS,
            heatmap: HeatmapStyle::default(),
        }
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text =
            fs::read_to_string(path).map_err(|e| CliError::Config(format!("cannot read config {}: {e}", path.display())))?;
        let mut cfg: RunConfig =
            serde_json::from_str(&text).map_err(|e| CliError::Config(format!("parse error in config {}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        resolve(base, &mut cfg.case_manifest);
        resolve(base, &mut cfg.output_dir);
        for p in [&mut cfg.reference_manifest, &mut cfg.preset_dir, &mut cfg.model_dir]
            .into_iter()
            .flatten()
        {
            resolve(base, p);
        }
        for p in cfg.calibration_cache.values_mut() {
            resolve(base, p);
        }
        for spec in [&mut cfg.classifiers.sunglasses, &mut cfg.classifiers.femininity]
            .into_iter()
            .flatten()
        {
            resolve(base, &mut spec.model_path);
        }
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        if self.descriptors.is_empty() {
            return Err(CliError::Config("at least one descriptor must be selected".into()));
        }
        let mut seen = std::collections::BTreeSet::new();
        for d in &self.descriptors {
            if !seen.insert(d) {
                return Err(CliError::Config(format!("descriptor {d} is selected twice")));
            }
        }
        if self.bins == 0 {
            return Err(CliError::Config("bins must be positive".into()));
        }
        self.thresholds.validate().map_err(CliError::Config)?;
        Ok(())
    }

    /// Config value, then the environment variable.
    pub fn effective_model_dir(&self) -> Option<PathBuf> {
        self.model_dir
            .clone()
            .or_else(|| std::env::var_os(MODEL_DIR_ENV).map(PathBuf::from))
    }

    pub fn effective_preset_dir(&self) -> PathBuf {
        self.preset_dir.clone().unwrap_or_else(|| PathBuf::from(DEFAULT_PRESET_DIR))
    }
}
