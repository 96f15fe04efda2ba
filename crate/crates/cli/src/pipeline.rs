//! Per-stage helpers shared by the subcommands. Per-image failures become
//! exclusions with a logged warning; nothing is dropped silently.

use std::path::{Path, PathBuf};

use claimcheck_core::analysis::{calibration_distributions, ScoreDistributions};
use claimcheck_core::descriptors::{load_descriptor, Descriptor, DescriptorError, DescriptorSpec, EmbeddingVector};
use claimcheck_core::ingest::{decode_image, prepare_face, AlignedFace, FivePointLandmarks, Manifest};
use claimcheck_core::quality::{score_all, Classifiers, QualityConfig, QualityScores};
use claimcheck_core::render::Exclusion;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::ClassifierPaths;
use crate::error::CliError;

pub const CALIBRATION_SCHEMA_VERSION: u32 = 1;

fn exclude(id: &str, reason: String) -> Exclusion {
    log::warn!("excluding {id}: {reason}");
    Exclusion {
        id: id.to_string(),
        reason,
    }
}

/// Aligned faces in manifest order, plus the entries that could not be used.
#[derive(Debug)]
pub struct PreparedSet {
    pub faces: Vec<AlignedFace>,
    pub excluded: Vec<Exclusion>,
}

pub fn prepare_set(manifest: &Manifest, assume_aligned: bool) -> PreparedSet {
    let results: Vec<(String, Result<AlignedFace, String>)> = manifest
        .entries
        .par_iter()
        .map(|entry| {
            let id = manifest.entry_id(entry);
            let lm = entry.landmarks.map(FivePointLandmarks::from_array);
            let face = decode_image(&entry.path, &entry.label, lm)
                .and_then(|mut s| {
                    s.id = id.clone();
                    prepare_face(&s, assume_aligned)
                })
                .map_err(|e| e.to_string());
            (id, face)
        })
        .collect();
    let mut set = PreparedSet {
        faces: Vec::new(),
        excluded: Vec::new(),
    };
    for (id, r) in results {
        match r {
            Ok(f) => set.faces.push(f),
            Err(reason) => set.excluded.push(exclude(&id, reason)),
        }
    }
    set
}

pub fn load_spec(name: &str, preset_dir: &Path, model_dir: Option<&Path>) -> Result<DescriptorSpec, CliError> {
    Ok(DescriptorSpec::preset(name, preset_dir)?.with_model_dir(model_dir))
}

pub fn load(spec: &DescriptorSpec) -> Result<Descriptor, CliError> {
    Ok(load_descriptor(spec)?)
}

/// Embeddings for the faces that produced a usable vector, with the indices of
/// those faces. Degenerate inputs are excluded; model failures abort.
pub fn embed_set(
    descriptor: &Descriptor,
    faces: &[AlignedFace],
) -> Result<(Vec<EmbeddingVector>, Vec<usize>, Vec<Exclusion>), CliError> {
    let results: Vec<Result<EmbeddingVector, DescriptorError>> = faces.par_iter().map(|f| descriptor.embed(f)).collect();
    let (mut embeddings, mut kept, mut excluded) = (Vec::new(), Vec::new(), Vec::new());
    for (k, r) in results.into_iter().enumerate() {
        match r {
            Ok(e) => {
                embeddings.push(e);
                kept.push(k);
            }
            Err(e @ (DescriptorError::ZeroVector(_) | DescriptorError::Inference { .. })) => {
                excluded.push(exclude(&faces[k].source_id, format!("{}: {e}", descriptor.name())));
            }
            Err(e) => return Err(e.into()),
        }
    }
    Ok((embeddings, kept, excluded))
}

pub fn load_classifiers(paths: &ClassifierPaths) -> Result<Classifiers, CliError> {
    let load = |spec: &Option<claimcheck_core::onnx::AuxClassifierSpec>| {
        spec.as_ref()
            .map(|s| s.load().map_err(|e| CliError::Model(format!("classifier {}: {e}", s.name))))
            .transpose()
    };
    Ok(Classifiers {
        sunglasses: load(&paths.sunglasses)?,
        femininity: load(&paths.femininity)?,
    })
}

pub fn score_set(faces: &[AlignedFace], classifiers: &Classifiers, config: &QualityConfig) -> Vec<QualityScores> {
    faces.par_iter().map(|f| score_all(f, classifiers, config)).collect()
}

/// Reference-population scores for one descriptor, reusable across cases.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationCache {
    pub schema_version: u32,
    pub descriptor: String,
    pub reference: String,
    pub identities: usize,
    pub images: usize,
    pub excluded: Vec<Exclusion>,
    pub distributions: ScoreDistributions,
}

pub fn compute_calibration(
    manifest: &Manifest,
    descriptor: &Descriptor,
    assume_aligned: bool,
    bins: usize,
) -> Result<CalibrationCache, CliError> {
    let prepared = prepare_set(manifest, assume_aligned);
    let (embeddings, kept, mut excluded) = embed_set(descriptor, &prepared.faces)?;
    let labels: Vec<String> = kept.iter().map(|&k| prepared.faces[k].label.clone()).collect();
    let distributions = calibration_distributions(&embeddings, &labels, bins)?;
    let mut all_excluded = prepared.excluded;
    all_excluded.append(&mut excluded);
    let mut identities = labels.clone();
    identities.sort();
    identities.dedup();
    Ok(CalibrationCache {
        schema_version: CALIBRATION_SCHEMA_VERSION,
        descriptor: descriptor.name().to_string(),
        reference: manifest.case_name.clone(),
        identities: identities.len(),
        images: labels.len(),
        excluded: all_excluded,
        distributions,
    })
}

pub fn read_calibration(path: &Path, descriptor: &str) -> Result<CalibrationCache, CliError> {
    let cache: CalibrationCache = claimcheck_core::render::read_json(path).map_err(|e| CliError::Data(e.to_string()))?;
    if cache.schema_version != CALIBRATION_SCHEMA_VERSION {
        return Err(CliError::Data(format!(
            "{}: calibration schema version {} is not supported",
            path.display(),
            cache.schema_version
        )));
    }
    if cache.descriptor != descriptor {
        return Err(CliError::Config(format!(
            "{} holds calibration for {}, not {descriptor}",
            path.display(),
            cache.descriptor
        )));
    }
    Ok(cache)
}

/// `path` relative to `base` when it lies inside it.
pub fn relative_to(path: &Path, base: &Path) -> PathBuf {
    path.strip_prefix(base).map(Path::to_path_buf).unwrap_or_else(|_| path.to_path_buf())
}
