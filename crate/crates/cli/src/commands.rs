//! The three subcommands.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use claimcheck_core::analysis::{
    all_vs_all, partition_scores, quality_confound, sort_by_quality, verdict, AffinityMatrix, ScoreDistributions, Verdict,
};
use claimcheck_core::ingest::{load_manifest, load_reference_manifest, Manifest};
use claimcheck_core::quality::{Metric, QualityScores};
use claimcheck_core::render::{
    render_distributions, render_heatmap, write_json, write_report, Exclusion, ReportDocument, StatisticsFile,
};
use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::error::CliError;
use crate::pipeline::{
    compute_calibration, embed_set, load, load_classifiers, load_spec, prepare_set, read_calibration, relative_to, score_set,
    CalibrationCache,
};

pub const INDEX_SCHEMA_VERSION: u32 = 1;

fn create_dir(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(|e| CliError::Config(format!("cannot create output directory {}: {e}", dir.display())))
}

fn csv_err(path: &Path, e: impl std::fmt::Display) -> CliError {
    CliError::Config(format!("cannot write {}: {e}", path.display()))
}

/// Shortest representation that parses back to the same value.
fn fmt_float(v: f64) -> String {
    format!("{v}")
}

pub fn write_quality_csv(scores: &[QualityScores], path: &Path) -> Result<(), CliError> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_err(path, e))?;
    let mut header = vec!["id".to_string(), "label".to_string()];
    header.extend(Metric::ALL.iter().map(|m| m.name().to_string()));
    w.write_record(&header).map_err(|e| csv_err(path, e))?;
    for q in scores {
        let mut row = vec![q.source_id.clone(), q.label.clone()];
        row.extend(Metric::ALL.iter().map(|&m| q.get(m).map(fmt_float).unwrap_or_default()));
        w.write_record(&row).map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(|e| csv_err(path, e))
}

/// Every unordered pair once, in construction order.
pub fn write_scores_csv(matrix: &AffinityMatrix, path: &Path) -> Result<(), CliError> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_err(path, e))?;
    w.write_record(["source_id_a", "source_id_b", "label_a", "label_b", "similarity"])
        .map_err(|e| csv_err(path, e))?;
    for i in 0..matrix.n {
        for j in i + 1..matrix.n {
            w.write_record([
                matrix.ids[i].as_str(),
                matrix.ids[j].as_str(),
                matrix.labels[i].as_str(),
                matrix.labels[j].as_str(),
                fmt_float(matrix.get(i, j)).as_str(),
            ])
            .map_err(|e| csv_err(path, e))?;
        }
    }
    w.flush().map_err(|e| csv_err(path, e))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndexEntry {
    pub descriptor: String,
    pub verdict: Verdict,
    pub overlap_case_impostor_vs_calibration_genuine: Option<f64>,
    pub overlap_case_impostor_vs_calibration_impostor: Option<f64>,
    pub d_prime_case: Option<f64>,
    pub report: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunIndex {
    pub schema_version: u32,
    pub case_name: String,
    pub images: usize,
    pub excluded: Vec<Exclusion>,
    pub quality_scores: String,
    pub descriptors: Vec<IndexEntry>,
}

fn index_markdown(index: &RunIndex) -> String {
    let opt = |v: Option<f64>| v.map_or_else(|| "n/a".to_string(), |v| format!("{v:.4}"));
    let mut md = format!("# {}\n\n{} images analysed", index.case_name, index.images);
    if !index.excluded.is_empty() {
        md.push_str(&format!(", {} excluded", index.excluded.len()));
    }
    md.push_str(&format!(". Quality scores: [{0}]({0}).\n\n", index.quality_scores));
    md.push_str("| descriptor | verdict | overlap vs genuine | overlap vs impostor | d' | report |\n|---|---|---|---|---|---|\n");
    for e in &index.descriptors {
        md.push_str(&format!(
            "| {} | {} | {} | {} | {} | [{report}]({report}) |\n",
            e.descriptor,
            e.verdict,
            opt(e.overlap_case_impostor_vs_calibration_genuine),
            opt(e.overlap_case_impostor_vs_calibration_impostor),
            opt(e.d_prime_case),
            report = e.report,
        ));
    }
    md
}

fn load_case(path: &Path) -> Result<Manifest, CliError> {
    let manifest = load_manifest(path)?;
    let tags = manifest.tags();
    if tags.len() != 2 {
        return Err(CliError::Data(format!(
            "case manifest {} needs exactly two identity tags, found {}",
            path.display(),
            tags.len()
        )));
    }
    Ok(manifest)
}

/// Full pipeline for every selected descriptor. Returns the run index.
pub fn cmd_analyze(cfg: &RunConfig) -> Result<RunIndex, CliError> {
    cfg.validate()?;
    let manifest = load_case(&cfg.case_manifest)?;
    let reference_path = cfg.reference_manifest.clone().or_else(|| manifest.reference.clone());
    let preset_dir = cfg.effective_preset_dir();
    let model_dir = cfg.effective_model_dir();

    // Fail on configuration and model problems before any image work.
    let mut descriptors = Vec::new();
    for name in &cfg.descriptors {
        let spec = load_spec(name, &preset_dir, model_dir.as_deref())?;
        descriptors.push(load(&spec)?);
    }
    let classifiers = load_classifiers(&cfg.classifiers)?;
    let reference = reference_path.as_deref().map(load_reference_manifest).transpose()?;
    create_dir(&cfg.output_dir)?;

    let prepared = prepare_set(&manifest, cfg.assume_aligned);
    let quality = score_set(&prepared.faces, &classifiers, &cfg.quality);
    let quality_path = cfg.output_dir.join("quality.csv");
    write_quality_csv(&quality, &quality_path)?;

    let mut entries = Vec::new();
    for descriptor in &descriptors {
        let name = descriptor.name().to_string();
        let dir = cfg.output_dir.join(&name);
        create_dir(&dir)?;
        let (embeddings, kept, embed_excluded) = embed_set(descriptor, &prepared.faces)?;
        let labels: Vec<String> = kept.iter().map(|&k| prepared.faces[k].label.clone()).collect();
        for tag in manifest.tags() {
            let count = labels.iter().filter(|l| **l == tag).count();
            if count < 2 {
                return Err(CliError::Data(format!(
                    "{name}: set '{tag}' has {count} usable image(s) after exclusions, at least 2 required"
                )));
            }
        }
        let mut matrix = all_vs_all(&embeddings, &labels)?;
        // Keep the label-strip colors tied to manifest order.
        matrix.tags = manifest.tags();
        let case = partition_scores(&matrix, cfg.bins)?;

        let mut notes = Vec::new();
        let calibration: Option<CalibrationCache> = match (cfg.calibration_cache.get(&name), &reference) {
            (Some(path), _) => Some(read_calibration(path, &name)?),
            (None, Some(reference)) => {
                let cache = compute_calibration(reference, descriptor, cfg.assume_aligned, cfg.bins)?;
                write_json(&cache, &dir.join("calibration.json"))?;
                Some(cache)
            }
            (None, None) => {
                notes.push("no reference population configured; overlaps against calibration are unavailable".into());
                None
            }
        };
        let calib_dist = calibration
            .as_ref()
            .map(|c| c.distributions.clone())
            .unwrap_or_else(|| ScoreDistributions::new(Vec::new(), Vec::new(), cfg.bins));
        if let Some(c) = &calibration {
            if c.distributions.bins != cfg.bins {
                notes.push(format!(
                    "calibration cache uses {} bins, run uses {}",
                    c.distributions.bins, cfg.bins
                ));
            }
        }

        let mut confounds = BTreeMap::new();
        let mut figures = BTreeMap::new();
        figures.insert("heatmap".to_string(), "heatmap.png".to_string());
        render_heatmap(&matrix, &cfg.heatmap, &dir.join("heatmap.png"))?;
        for metric in Metric::ALL {
            match quality_confound(&matrix, &quality, metric) {
                Ok(v) => {
                    confounds.insert(metric, Some(v));
                }
                Err(e) => {
                    notes.push(format!("quality confound for {metric}: {e}"));
                    confounds.insert(metric, None);
                }
            }
            match sort_by_quality(&matrix, &quality, metric) {
                Ok(sorted) => {
                    let file = format!("heatmap_sorted_{metric}.png");
                    render_heatmap(&sorted, &cfg.heatmap, &dir.join(&file))?;
                    figures.insert(format!("heatmap_sorted_{metric}"), file);
                }
                Err(e) => notes.push(format!("sorted heatmap for {metric} skipped: {e}")),
            }
        }
        render_distributions(&case, calibration.as_ref().map(|c| &c.distributions), &dir.join("distributions.png"))?;
        figures.insert("distributions".to_string(), "distributions.png".to_string());

        write_scores_csv(&matrix, &dir.join("scores.csv"))?;
        write_json(
            &StatisticsFile {
                descriptor: name.clone(),
                case: case.clone(),
                calibration: calibration.as_ref().map(|c| c.distributions.clone()),
            },
            &dir.join("statistics.json"),
        )?;

        let mut report = verdict(&case, &calib_dist, confounds, cfg.thresholds);
        notes.append(&mut report.notes);
        report.notes = notes;
        let mut excluded = prepared.excluded.clone();
        excluded.extend(embed_excluded);
        let doc = ReportDocument::new(&manifest.case_name, &name, &report, figures, excluded);
        write_report(&doc, &dir)?;
        log::info!("{name}: {}", doc.verdict);
        entries.push(IndexEntry {
            descriptor: name.clone(),
            verdict: doc.verdict,
            overlap_case_impostor_vs_calibration_genuine: doc.overlap_case_impostor_vs_calibration_genuine,
            overlap_case_impostor_vs_calibration_impostor: doc.overlap_case_impostor_vs_calibration_impostor,
            d_prime_case: doc.d_prime_case,
            report: relative_to(&dir.join("report.json"), &cfg.output_dir).display().to_string(),
        });
    }

    let index = RunIndex {
        schema_version: INDEX_SCHEMA_VERSION,
        case_name: manifest.case_name.clone(),
        images: prepared.faces.len(),
        excluded: prepared.excluded,
        quality_scores: "quality.csv".into(),
        descriptors: entries,
    };
    write_json(&index, &cfg.output_dir.join("index.json"))?;
    let md_path = cfg.output_dir.join("index.md");
    fs::write(&md_path, index_markdown(&index)).map_err(|e| csv_err(&md_path, e))?;
    Ok(index)
}

/// Per-image quality scores as CSV. Returns the number of rows written.
pub fn cmd_quality(manifest_path: &Path, out: &Path, cfg: &RunConfig) -> Result<usize, CliError> {
    let manifest = load_reference_manifest(manifest_path)?;
    let classifiers = load_classifiers(&cfg.classifiers)?;
    let prepared = prepare_set(&manifest, cfg.assume_aligned);
    if prepared.faces.is_empty() {
        return Err(CliError::Data(format!("no usable images in {}", manifest_path.display())));
    }
    let scores = score_set(&prepared.faces, &classifiers, &cfg.quality);
    if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
        create_dir(dir)?;
    }
    write_quality_csv(&scores, out)?;
    Ok(scores.len())
}

/// Compute and cache reference-population scores for one descriptor.
pub fn cmd_calibrate(manifest_path: &Path, out: &Path, descriptor: &str, cfg: &RunConfig) -> Result<CalibrationCache, CliError> {
    let manifest = load_reference_manifest(manifest_path)?;
    let spec = load_spec(descriptor, &cfg.effective_preset_dir(), cfg.effective_model_dir().as_deref())?;
    let descriptor = load(&spec)?;
    let cache = compute_calibration(&manifest, &descriptor, cfg.assume_aligned, cfg.bins)?;
    write_json(&cache, out)?;
    Ok(cache)
}

/// Output paths written by `cmd_analyze` for one descriptor, relative to the
/// output directory.
pub fn expected_outputs(descriptor: &str, metrics: &[Metric]) -> Vec<PathBuf> {
    let dir = PathBuf::from(descriptor);
    let mut v = vec![
        dir.join("heatmap.png"),
        dir.join("distributions.png"),
        dir.join("scores.csv"),
        dir.join("statistics.json"),
        dir.join("report.json"),
        dir.join("report.md"),
    ];
    v.extend(metrics.iter().map(|m| dir.join(format!("heatmap_sorted_{m}.png"))));
    v
}
