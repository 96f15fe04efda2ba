//! All-vs-all similarity, genuine/impostor partitioning, calibration against a
//! reference population, quality-sorted affinity matrices and the verdict.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::descriptors::{cosine, DescriptorError, EmbeddingVector};
use crate::quality::{Metric, QualityScores};

pub const DEFAULT_BINS: usize = 50;

#[derive(Error, Debug)]
pub enum AnalysisError {
    #[error(transparent)]
    Descriptor(#[from] DescriptorError),
    #[error("too few samples: {0}")]
    TooFewSamples(String),
    #[error("expected exactly 2 identity tags, found {0}")]
    LabelCount(usize),
    #[error("score sample is empty")]
    EmptySample,
    #[error("degenerate variance: {0}")]
    DegenerateVariance(String),
    #[error("metric {metric} is unavailable for: {}", .ids.join(", "))]
    UnavailableMetric { metric: Metric, ids: Vec<String> },
    #[error("invalid input: {0}")]
    Invalid(String),
}

/// Pairwise cosine similarities with their ids and labels.
///
/// `values`, `ids` and `labels` are stored in display order; `order[i]` is the
/// index in the original (construction) order of the item shown at position `i`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AffinityMatrix {
    pub n: usize,
    pub values: Vec<f64>,
    pub ids: Vec<String>,
    pub labels: Vec<String>,
    pub order: Vec<usize>,
    pub sort_key: Option<Metric>,
    /// Distinct labels in first-appearance order of the original input.
    pub tags: Vec<String>,
}

impl AffinityMatrix {
    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.n + j]
    }

    /// Build from a precomputed row-major similarity table.
    pub fn from_values(values: Vec<f64>, ids: Vec<String>, labels: Vec<String>) -> Result<Self, AnalysisError> {
        let n = ids.len();
        if labels.len() != n || values.len() != n * n {
            return Err(AnalysisError::Invalid(format!(
                "{n} ids, {} labels and {} values do not form a square matrix",
                labels.len(),
                values.len()
            )));
        }
        Ok(Self {
            n,
            values,
            tags: first_appearance(&labels),
            ids,
            labels,
            order: (0..n).collect(),
            sort_key: None,
        })
    }

    /// Off-diagonal mean similarity per displayed row.
    pub fn mean_similarity(&self) -> Vec<f64> {
        (0..self.n)
            .map(|i| {
                let sum: f64 = (0..self.n).filter(|&j| j != i).map(|j| self.get(i, j)).sum();
                sum / (self.n - 1) as f64
            })
            .collect()
    }

    /// Reorder by `perm`, where `perm[i]` indexes the current display order.
    fn permuted(&self, perm: &[usize]) -> Self {
        let n = self.n;
        let mut values = Vec::with_capacity(n * n);
        for &pi in perm {
            for &pj in perm {
                values.push(self.get(pi, pj));
            }
        }
        Self {
            n,
            values,
            ids: perm.iter().map(|&p| self.ids[p].clone()).collect(),
            labels: perm.iter().map(|&p| self.labels[p].clone()).collect(),
            order: perm.iter().map(|&p| self.order[p]).collect(),
            sort_key: self.sort_key,
            tags: self.tags.clone(),
        }
    }
}

fn first_appearance(labels: &[String]) -> Vec<String> {
    let mut seen = HashSet::new();
    labels.iter().filter(|l| seen.insert(l.as_str())).cloned().collect()
}

/// Cosine similarity of every pair, computed in parallel over rows.
pub fn all_vs_all(embeddings: &[EmbeddingVector], labels: &[String]) -> Result<AffinityMatrix, AnalysisError> {
    let n = embeddings.len();
    if n < 2 {
        return Err(AnalysisError::TooFewSamples(format!("all-vs-all needs at least 2 embeddings, got {n}")));
    }
    if labels.len() != n {
        return Err(AnalysisError::Invalid(format!("{n} embeddings but {} labels", labels.len())));
    }
    let upper: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|i| (i..n).map(|j| cosine(&embeddings[i], &embeddings[j])).collect::<Result<Vec<_>, _>>())
        .collect::<Result<_, _>>()?;
    let mut values = vec![0.0; n * n];
    for (i, row) in upper.iter().enumerate() {
        for (k, &v) in row.iter().enumerate() {
            let j = i + k;
            values[i * n + j] = v;
            values[j * n + i] = v;
        }
    }
    AffinityMatrix::from_values(
        values,
        embeddings.iter().map(|e| e.source_id.clone()).collect(),
        labels.to_vec(),
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SampleStats {
    pub count: usize,
    pub mean: f64,
    /// Population standard deviation.
    pub std: f64,
}

impl SampleStats {
    pub fn of(sample: &[f64]) -> Self {
        let count = sample.len();
        if count == 0 {
            return Self {
                count,
                mean: 0.0,
                std: 0.0,
            };
        }
        let mean = sample.iter().sum::<f64>() / count as f64;
        let var = sample.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / count as f64;
        Self {
            count,
            mean,
            std: var.sqrt(),
        }
    }
}

/// Histogram bin of a similarity over `bins` equal bins spanning [−1, 1].
/// Values outside the range land in the end bins.
pub fn bin_index(score: f64, bins: usize) -> usize {
    let pos = ((score + 1.0) / 2.0 * bins as f64).floor();
    if pos.is_nan() || pos < 0.0 {
        0
    } else {
        (pos as usize).min(bins - 1)
    }
}

/// Normalized histogram masses (sum to 1 for a non-empty sample).
pub fn histogram(sample: &[f64], bins: usize) -> Vec<f64> {
    let mut counts = vec![0usize; bins];
    for &s in sample {
        counts[bin_index(s, bins)] += 1;
    }
    if sample.is_empty() {
        return vec![0.0; bins];
    }
    counts.into_iter().map(|c| c as f64 / sample.len() as f64).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreDistributions {
    pub genuine: Vec<f64>,
    pub impostor: Vec<f64>,
    pub genuine_stats: SampleStats,
    pub impostor_stats: SampleStats,
    pub bins: usize,
    pub genuine_hist: Vec<f64>,
    pub impostor_hist: Vec<f64>,
}

impl ScoreDistributions {
    pub fn new(genuine: Vec<f64>, impostor: Vec<f64>, bins: usize) -> Self {
        Self {
            genuine_stats: SampleStats::of(&genuine),
            impostor_stats: SampleStats::of(&impostor),
            genuine_hist: histogram(&genuine, bins),
            impostor_hist: histogram(&impostor, bins),
            genuine,
            impostor,
            bins,
        }
    }
}

/// Same-label unordered pairs are genuine, cross-label pairs impostor.
fn split_pairs(matrix: &AffinityMatrix) -> (Vec<f64>, Vec<f64>) {
    let mut genuine = Vec::new();
    let mut impostor = Vec::new();
    for i in 0..matrix.n {
        for j in i + 1..matrix.n {
            if matrix.labels[i] == matrix.labels[j] {
                genuine.push(matrix.get(i, j));
            } else {
                impostor.push(matrix.get(i, j));
            }
        }
    }
    (genuine, impostor)
}

/// Partition a two-identity case matrix into genuine and impostor scores.
pub fn partition_scores(matrix: &AffinityMatrix, bins: usize) -> Result<ScoreDistributions, AnalysisError> {
    let tags: HashSet<&str> = matrix.labels.iter().map(String::as_str).collect();
    if tags.len() != 2 {
        return Err(AnalysisError::LabelCount(tags.len()));
    }
    let (genuine, impostor) = split_pairs(matrix);
    Ok(ScoreDistributions::new(genuine, impostor, bins))
}

/// Genuine and impostor scores of a reference population with many identities.
pub fn calibration_distributions(
    embeddings: &[EmbeddingVector],
    labels: &[String],
    bins: usize,
) -> Result<ScoreDistributions, AnalysisError> {
    let mut per_identity: BTreeMap<&str, usize> = BTreeMap::new();
    for l in labels {
        *per_identity.entry(l.as_str()).or_default() += 1;
    }
    if per_identity.len() < 2 {
        return Err(AnalysisError::TooFewSamples(format!(
            "reference population needs at least 2 identities, found {}",
            per_identity.len()
        )));
    }
    if let Some((id, count)) = per_identity.iter().find(|(_, &c)| c < 2) {
        return Err(AnalysisError::TooFewSamples(format!(
            "reference identity '{id}' has {count} image(s), at least 2 required"
        )));
    }
    let matrix = all_vs_all(embeddings, labels)?;
    let (genuine, impostor) = split_pairs(&matrix);
    Ok(ScoreDistributions::new(genuine, impostor, bins))
}

/// Shared mass of the two samples' binned histograms.
pub fn overlap_coefficient(a: &[f64], b: &[f64], bins: usize) -> Result<f64, AnalysisError> {
    if a.is_empty() || b.is_empty() {
        return Err(AnalysisError::EmptySample);
    }
    let (ha, hb) = (histogram(a, bins), histogram(b, bins));
    Ok(ha.iter().zip(&hb).map(|(x, y)| x.min(*y)).sum())
}

/// `|μ₁ − μ₂| / sqrt((σ₁² + σ₂²) / 2)` with population deviations.
pub fn d_prime(a: &[f64], b: &[f64]) -> Result<f64, AnalysisError> {
    if a.len() < 2 || b.len() < 2 {
        return Err(AnalysisError::TooFewSamples("d' needs at least 2 scores per side".into()));
    }
    let (sa, sb) = (SampleStats::of(a), SampleStats::of(b));
    let pooled = ((sa.std * sa.std + sb.std * sb.std) / 2.0).sqrt();
    if !(pooled > 0.0) {
        return Err(AnalysisError::DegenerateVariance("both score samples are constant".into()));
    }
    Ok((sa.mean - sb.mean).abs() / pooled)
}

fn quality_vector(
    matrix: &AffinityMatrix,
    quality: &[QualityScores],
    metric: Metric,
) -> Result<Vec<f64>, AnalysisError> {
    let by_id: HashMap<&str, &QualityScores> = quality.iter().map(|q| (q.source_id.as_str(), q)).collect();
    let mut missing = Vec::new();
    let mut values = Vec::with_capacity(matrix.n);
    for id in &matrix.ids {
        match by_id.get(id.as_str()).and_then(|q| q.get(metric)) {
            Some(v) => values.push(v),
            None => missing.push(id.clone()),
        }
    }
    if !missing.is_empty() {
        return Err(AnalysisError::UnavailableMetric { metric, ids: missing });
    }
    Ok(values)
}

/// Reorder by ascending quality; ties break on source id.
pub fn sort_by_quality(
    matrix: &AffinityMatrix,
    quality: &[QualityScores],
    metric: Metric,
) -> Result<AffinityMatrix, AnalysisError> {
    let scores = quality_vector(matrix, quality, metric)?;
    let mut perm: Vec<usize> = (0..matrix.n).collect();
    perm.sort_by(|&a, &b| {
        scores[a]
            .total_cmp(&scores[b])
            .then_with(|| matrix.ids[a].cmp(&matrix.ids[b]))
    });
    let mut sorted = matrix.permuted(&perm);
    sorted.sort_key = Some(metric);
    Ok(sorted)
}

/// 1-based ranks; tied values share the average of their positions.
pub fn average_ranks(values: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..values.len()).collect();
    idx.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut start = 0;
    while start < idx.len() {
        let mut end = start + 1;
        while end < idx.len() && values[idx[end]] == values[idx[start]] {
            end += 1;
        }
        let rank = (start + end + 1) as f64 / 2.0;
        for &i in &idx[start..end] {
            ranks[i] = rank;
        }
        start = end;
    }
    ranks
}

/// Spearman correlation: Pearson correlation of average ranks.
pub fn spearman(x: &[f64], y: &[f64]) -> Result<f64, AnalysisError> {
    if x.len() != y.len() {
        return Err(AnalysisError::Invalid("samples differ in length".into()));
    }
    if x.len() < 3 {
        return Err(AnalysisError::TooFewSamples("rank correlation needs at least 3 items".into()));
    }
    let (rx, ry) = (average_ranks(x), average_ranks(y));
    let n = rx.len() as f64;
    let (mx, my) = (rx.iter().sum::<f64>() / n, ry.iter().sum::<f64>() / n);
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in rx.iter().zip(&ry) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(AnalysisError::DegenerateVariance("all ranks are tied".into()));
    }
    Ok((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

/// Rank correlation between each image's quality and its mean similarity to the others.
pub fn quality_confound(
    matrix: &AffinityMatrix,
    quality: &[QualityScores],
    metric: Metric,
) -> Result<f64, AnalysisError> {
    if matrix.n < 3 {
        return Err(AnalysisError::TooFewSamples(format!("confound needs at least 3 images, got {}", matrix.n)));
    }
    let scores = quality_vector(matrix, quality, metric)?;
    spearman(&scores, &matrix.mean_similarity())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Thresholds {
    pub tau_same: f64,
    pub tau_diff: f64,
}

impl Default for Thresholds {
    fn default() -> Self {
        Self {
            tau_same: 0.50,
            tau_diff: 0.20,
        }
    }
}

impl Thresholds {
    pub fn validate(&self) -> Result<(), String> {
        let in_unit = |v: f64| (0.0..=1.0).contains(&v);
        if !in_unit(self.tau_same) || !in_unit(self.tau_diff) || self.tau_diff >= self.tau_same {
            return Err(format!(
                "thresholds need 0 <= tau_diff < tau_same <= 1, got tau_same={} tau_diff={}",
                self.tau_same, self.tau_diff
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Verdict {
    SamePerson,
    DistinctPerson,
    Inconclusive,
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Verdict::SamePerson => "same-person",
            Verdict::DistinctPerson => "distinct-person",
            Verdict::Inconclusive => "inconclusive",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerdictReport {
    pub case: ScoreDistributions,
    pub calibration: ScoreDistributions,
    /// Overlap of case-impostor with calibration-genuine scores.
    pub overlap_with_genuine: Option<f64>,
    /// Overlap of case-impostor with calibration-impostor scores.
    pub overlap_with_impostor: Option<f64>,
    /// Separation of case genuine vs case impostor scores.
    pub d_prime: Option<f64>,
    pub quality_confound: BTreeMap<Metric, Option<f64>>,
    pub verdict: Verdict,
    pub thresholds: Thresholds,
    /// Why statistics are missing or the verdict is inconclusive.
    pub notes: Vec<String>,
}

/// Decide from the two overlaps:
/// same-person when overlap with calibration genuine ≥ τ_same and with
/// calibration impostor ≤ τ_diff; distinct-person when reversed; otherwise
/// inconclusive.
pub fn verdict(
    case: &ScoreDistributions,
    calibration: &ScoreDistributions,
    confounds: BTreeMap<Metric, Option<f64>>,
    thresholds: Thresholds,
) -> VerdictReport {
    let mut notes = Vec::new();
    let bins = case.bins;
    if calibration.bins != bins {
        notes.push(format!("case uses {bins} bins, calibration {}; overlaps use {bins}", calibration.bins));
    }
    let mut overlap = |what: &str, other: &[f64]| match overlap_coefficient(&case.impostor, other, bins) {
        Ok(v) => Some(v),
        Err(e) => {
            notes.push(format!("overlap with {what}: {e}"));
            None
        }
    };
    let with_genuine = overlap("calibration genuine", &calibration.genuine);
    let with_impostor = overlap("calibration impostor", &calibration.impostor);
    let dp = match d_prime(&case.genuine, &case.impostor) {
        Ok(v) => Some(v),
        Err(e) => {
            notes.push(format!("d': {e}"));
            None
        }
    };
    let decision = match (with_genuine, with_impostor) {
        (Some(g), Some(i)) if g >= thresholds.tau_same && i <= thresholds.tau_diff => Verdict::SamePerson,
        (Some(g), Some(i)) if i >= thresholds.tau_same && g <= thresholds.tau_diff => Verdict::DistinctPerson,
        (Some(_), Some(_)) => {
            notes.push("neither decision rule fires at the configured thresholds".into());
            Verdict::Inconclusive
        }
        _ => Verdict::Inconclusive,
    };
    VerdictReport {
        case: case.clone(),
        calibration: calibration.clone(),
        overlap_with_genuine: with_genuine,
        overlap_with_impostor: with_impostor,
        d_prime: dp,
        quality_confound: confounds,
        verdict: decision,
        thresholds,
        notes,
    }
}
