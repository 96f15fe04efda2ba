//! Heatmaps, score-distribution plots and verdict reports.
//!
//! Output bytes depend only on the inputs: PNGs carry no metadata chunks and
//! text uses fixed decimal formatting.

use std::collections::BTreeMap;
use std::fs;
use std::io::Cursor;
use std::path::{Path, PathBuf};

use image::codecs::png::PngEncoder;
use image::{ImageEncoder, Rgb, RgbImage};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::analysis::{AffinityMatrix, SampleStats, ScoreDistributions, Thresholds, Verdict, VerdictReport};
use crate::quality::Metric;

pub const REPORT_SCHEMA_VERSION: u32 = 1;

#[derive(Error, Debug)]
pub enum RenderError {
    #[error("cannot write {path}: {reason}")]
    Io { path: PathBuf, reason: String },
    #[error("nothing to render: {0}")]
    Empty(String),
}

fn io_err(path: &Path, e: impl ToString) -> RenderError {
    RenderError::Io {
        path: path.to_path_buf(),
        reason: e.to_string(),
    }
}

pub const BLUE: [u8; 3] = [0x20, 0x40, 0xC0];
pub const GREEN: [u8; 3] = [0x30, 0xA0, 0x30];
pub const RED: [u8; 3] = [0xC0, 0x30, 0x30];
pub const YELLOW: [u8; 3] = [0xC0, 0xB0, 0x30];
const WHITE: [u8; 3] = [255, 255, 255];
const BLACK: [u8; 3] = [0, 0, 0];
const GRAY: [u8; 3] = [0x90, 0x90, 0x90];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HeatmapStyle {
    /// Ramp color at similarity 0.
    pub low: [u8; 3],
    /// Ramp color at similarity 1.
    pub high: [u8; 3],
    pub cell: u32,
    /// Label strip colors, by tag order; tags past the end use `other_tag`.
    pub tag_colors: Vec<[u8; 3]>,
    pub other_tag: [u8; 3],
}

impl Default for HeatmapStyle {
    fn default() -> Self {
        Self {
            low: BLUE,
            high: GREEN,
            cell: 12,
            tag_colors: vec![GREEN, RED],
            other_tag: GRAY,
        }
    }
}

impl HeatmapStyle {
    /// Linear blend from `low` to `high`; the input is clamped to [0, 1].
    pub fn ramp(&self, similarity: f64) -> [u8; 3] {
        let t = if similarity.is_nan() { 0.0 } else { similarity.clamp(0.0, 1.0) };
        let mix = |a: u8, b: u8| (f64::from(a) + (f64::from(b) - f64::from(a)) * t).round() as u8;
        [
            mix(self.low[0], self.high[0]),
            mix(self.low[1], self.high[1]),
            mix(self.low[2], self.high[2]),
        ]
    }

    fn tag_color(&self, tags: &[String], label: &str) -> [u8; 3] {
        tags.iter()
            .position(|t| t == label)
            .and_then(|k| self.tag_colors.get(k).copied())
            .unwrap_or(self.other_tag)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct HeatmapMeta {
    pub width: u32,
    pub height: u32,
    /// Cells whose similarity fell outside [0, 1] and were clamped.
    pub clamped_cells: usize,
}

fn fill_rect(img: &mut RgbImage, x0: u32, y0: u32, w: u32, h: u32, color: [u8; 3]) {
    for y in y0..(y0 + h).min(img.height()) {
        for x in x0..(x0 + w).min(img.width()) {
            img.put_pixel(x, y, Rgb(color));
        }
    }
}

/// `(n + 1)·cell` square: the matrix in display order, with one-cell label
/// strips along the top and left.
pub fn heatmap_image(matrix: &AffinityMatrix, style: &HeatmapStyle) -> Result<(RgbImage, HeatmapMeta), RenderError> {
    if matrix.n < 2 {
        return Err(RenderError::Empty(format!("heatmap needs n >= 2, got {}", matrix.n)));
    }
    let cell = style.cell.max(1);
    let side = (matrix.n as u32 + 1) * cell;
    let mut img = RgbImage::from_pixel(side, side, Rgb(WHITE));
    for (k, label) in matrix.labels.iter().enumerate() {
        let color = style.tag_color(&matrix.tags, label);
        let offset = (k as u32 + 1) * cell;
        fill_rect(&mut img, offset, 0, cell, cell, color);
        fill_rect(&mut img, 0, offset, cell, cell, color);
    }
    let mut clamped = 0;
    for i in 0..matrix.n {
        for j in 0..matrix.n {
            let v = matrix.get(i, j);
            if !(0.0..=1.0).contains(&v) {
                clamped += 1;
            }
            fill_rect(
                &mut img,
                (j as u32 + 1) * cell,
                (i as u32 + 1) * cell,
                cell,
                cell,
                style.ramp(v),
            );
        }
    }
    Ok((
        img,
        HeatmapMeta {
            width: side,
            height: side,
            clamped_cells: clamped,
        },
    ))
}

pub fn encode_png(img: &RgbImage) -> Vec<u8> {
    let mut buf = Cursor::new(Vec::new());
    PngEncoder::new(&mut buf)
        .write_image(img.as_raw(), img.width(), img.height(), image::ExtendedColorType::Rgb8)
        .expect("encoding an in-memory RGB buffer");
    buf.into_inner()
}

fn write_png(img: &RgbImage, path: &Path) -> Result<(), RenderError> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    }
    fs::write(path, encode_png(img)).map_err(|e| io_err(path, e))
}

pub fn render_heatmap(matrix: &AffinityMatrix, style: &HeatmapStyle, path: &Path) -> Result<HeatmapMeta, RenderError> {
    let (img, meta) = heatmap_image(matrix, style)?;
    write_png(&img, path)?;
    Ok(meta)
}

const GLYPH_W: u32 = 5;
const GLYPH_H: u32 = 7;

fn glyph(c: char) -> [&'static str; 7] {
    match c.to_ascii_uppercase() {
        'A' => [".###.", "#...#", "#...#", "#####", "#...#", "#...#", "#...#"],
        'B' => ["####.", "#...#", "#...#", "####.", "#...#", "#...#", "####."],
        'C' => [".###.", "#...#", "#....", "#....", "#....", "#...#", ".###."],
        'D' => ["####.", "#...#", "#...#", "#...#", "#...#", "#...#", "####."],
        'E' => ["#####", "#....", "#....", "####.", "#....", "#....", "#####"],
        'F' => ["#####", "#....", "#....", "####.", "#....", "#....", "#...."],
        'G' => [".###.", "#...#", "#....", "#.###", "#...#", "#...#", ".####"],
        'H' => ["#...#", "#...#", "#...#", "#####", "#...#", "#...#", "#...#"],
        'I' => [".###.", "..#..", "..#..", "..#..", "..#..", "..#..", ".###."],
        'J' => ["..###", "...#.", "...#.", "...#.", "...#.", "#..#.", ".##.."],
        'K' => ["#...#", "#..#.", "#.#..", "##...", "#.#..", "#..#.", "#...#"],
        'L' => ["#....", "#....", "#....", "#....", "#....", "#....", "#####"],
        'M' => ["#...#", "##.##", "#.#.#", "#.#.#", "#...#", "#...#", "#...#"],
        'N' => ["#...#", "#...#", "##..#", "#.#.#", "#..##", "#...#", "#...#"],
        'O' => [".###.", "#...#", "#...#", "#...#", "#...#", "#...#", ".###."],
        'P' => ["####.", "#...#", "#...#", "####.", "#....", "#....", "#...."],
        'Q' => [".###.", "#...#", "#...#", "#...#", "#.#.#", "#..#.", ".##.#"],
        'R' => ["####.", "#...#", "#...#", "####.", "#.#..", "#..#.", "#...#"],
        'S' => [".####", "#....", "#....", ".###.", "....#", "....#", "####."],
        'T' => ["#####", "..#..", "..#..", "..#..", "..#..", "..#..", "..#.."],
        'U' => ["#...#", "#...#", "#...#", "#...#", "#...#", "#...#", ".###."],
        'V' => ["#...#", "#...#", "#...#", "#...#", "#...#", ".#.#.", "..#.."],
        'W' => ["#...#", "#...#", "#...#", "#.#.#", "#.#.#", "#.#.#", ".#.#."],
        'X' => ["#...#", "#...#", ".#.#.", "..#..", ".#.#.", "#...#", "#...#"],
        'Y' => ["#...#", "#...#", ".#.#.", "..#..", "..#..", "..#..", "..#.."],
        'Z' => ["#####", "....#", "...#.", "..#..", ".#...", "#....", "#####"],
        '0' => [".###.", "#...#", "#..##", "#.#.#", "##..#", "#...#", ".###."],
        '1' => ["..#..", ".##..", "..#..", "..#..", "..#..", "..#..", ".###."],
        '2' => [".###.", "#...#", "....#", "...#.", "..#..", ".#...", "#####"],
        '3' => ["#####", "...#.", "..#..", "...#.", "....#", "#...#", ".###."],
        '4' => ["...#.", "..##.", ".#.#.", "#..#.", "#####", "...#.", "...#."],
        '5' => ["#####", "#....", "####.", "....#", "....#", "#...#", ".###."],
        '6' => ["..##.", ".#...", "#....", "####.", "#...#", "#...#", ".###."],
        '7' => ["#####", "....#", "...#.", "..#..", ".#...", ".#...", ".#..."],
        '8' => [".###.", "#...#", "#...#", ".###.", "#...#", "#...#", ".###."],
        '9' => [".###.", "#...#", "#...#", ".####", "....#", "...#.", ".##.."],
        '.' => [".....", ".....", ".....", ".....", ".....", ".##..", ".##.."],
        '-' => [".....", ".....", ".....", "#####", ".....", ".....", "....."],
        '(' => ["...#.", "..#..", ".#...", ".#...", ".#...", "..#..", "...#."],
        ')' => [".#...", "..#..", "...#.", "...#.", "...#.", "..#..", ".#..."],
        ':' => [".....", ".##..", ".##..", ".....", ".##..", ".##..", "....."],
        '/' => ["....#", "....#", "...#.", "..#..", ".#...", "#....", "#...."],
        '=' => [".....", ".....", "#####", ".....", "#####", ".....", "....."],
        _ => [".....", ".....", ".....", ".....", ".....", ".....", "....."],
    }
}

fn text_width(text: &str) -> u32 {
    text.chars().count() as u32 * (GLYPH_W + 1)
}

fn draw_text(img: &mut RgbImage, x: u32, y: u32, text: &str, color: [u8; 3]) {
    for (k, c) in text.chars().enumerate() {
        let gx = x + k as u32 * (GLYPH_W + 1);
        for (row, bits) in glyph(c).iter().enumerate() {
            for (col, b) in bits.bytes().enumerate() {
                let (px, py) = (gx + col as u32, y + row as u32);
                if b == b'#' && px < img.width() && py < img.height() {
                    img.put_pixel(px, py, Rgb(color));
                }
            }
        }
    }
}

fn blend(img: &mut RgbImage, x: u32, y: u32, color: [u8; 3], alpha: u16) {
    let px = img.get_pixel_mut(x, y);
    for k in 0..3 {
        let (dst, src) = (u16::from(px.0[k]), u16::from(color[k]));
        px.0[k] = ((dst * (255 - alpha) + src * alpha + 127) / 255) as u8;
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DistributionPlotMeta {
    pub width: u32,
    pub height: u32,
    pub curves: usize,
}

const PLOT_W: u32 = 640;
const PLOT_H: u32 = 420;
const MARGIN_L: u32 = 60;
const MARGIN_R: u32 = 20;
const MARGIN_T: u32 = 24;
const MARGIN_B: u32 = 50;
const FILL_ALPHA: u16 = 90;

/// Filled step histograms of up to four score samples over [−1, 1]:
/// case genuine (green), case impostor (red), calibration genuine (blue),
/// calibration impostor (yellow). Empty samples are skipped.
pub fn distributions_image(
    case: &ScoreDistributions,
    calibration: Option<&ScoreDistributions>,
) -> Result<(RgbImage, DistributionPlotMeta), RenderError> {
    if case.genuine.is_empty() && case.impostor.is_empty() {
        return Err(RenderError::Empty("case distributions are empty".into()));
    }
    let mut series: Vec<(&str, &[f64], [u8; 3])> = Vec::new();
    if let Some(cal) = calibration {
        series.push(("genuine (calibration)", &cal.genuine_hist, BLUE));
        series.push(("impostor (calibration)", &cal.impostor_hist, YELLOW));
    }
    series.push(("genuine (case)", &case.genuine_hist, GREEN));
    series.push(("impostor (case)", &case.impostor_hist, RED));
    series.retain(|(_, hist, _)| hist.iter().sum::<f64>() > 0.0);

    let mut img = RgbImage::from_pixel(PLOT_W, PLOT_H, Rgb(WHITE));
    let (x0, x1) = (MARGIN_L, PLOT_W - MARGIN_R);
    let (y_top, y_base) = (MARGIN_T, PLOT_H - MARGIN_B);
    let peak = series
        .iter()
        .flat_map(|(_, h, _)| h.iter().copied())
        .fold(0.0f64, f64::max);
    // Round the axis top up to a multiple of 0.05.
    let y_max = ((peak / 0.05).ceil() * 0.05).max(0.05);
    let span = f64::from(y_base - y_top);
    let height_of = |mass: f64| ((mass / y_max) * span).round() as u32;

    for (_, hist, color) in &series {
        let bins = hist.len() as u32;
        let bin_x = |b: u32| x0 + ((x1 - x0) * b) / bins;
        let mut prev_top: Option<u32> = None;
        for (b, &mass) in hist.iter().enumerate() {
            let (bx0, bx1) = (bin_x(b as u32), bin_x(b as u32 + 1));
            let top = y_base - height_of(mass);
            for x in bx0..bx1 {
                for y in top..y_base {
                    blend(&mut img, x, y, *color, FILL_ALPHA);
                }
                if mass > 0.0 {
                    img.put_pixel(x, top, Rgb(*color));
                }
            }
            if let Some(p) = prev_top {
                let (a, z) = (p.min(top), p.max(top));
                for y in a..=z.min(y_base - 1) {
                    img.put_pixel(bx0, y, Rgb(*color));
                }
            }
            prev_top = Some(top);
        }
    }

    for x in x0..=x1 {
        img.put_pixel(x, y_base, Rgb(BLACK));
    }
    for y in y_top..=y_base {
        img.put_pixel(x0, y, Rgb(BLACK));
    }
    for k in 0..=4u32 {
        let x = x0 + (x1 - x0) * k / 4;
        for y in y_base..y_base + 5 {
            img.put_pixel(x, y, Rgb(BLACK));
        }
        let label = format!("{:.1}", -1.0 + 0.5 * f64::from(k));
        draw_text(&mut img, x - text_width(&label) / 2, y_base + 8, &label, BLACK);
    }
    let x_title = "similarity";
    draw_text(&mut img, (x0 + x1) / 2 - text_width(x_title) / 2, y_base + 26, x_title, BLACK);
    for (y, value) in [(y_base, 0.0), (y_top, y_max)] {
        for x in x0 - 5..x0 {
            img.put_pixel(x, y, Rgb(BLACK));
        }
        let label = format!("{value:.2}");
        draw_text(&mut img, x0 - 8 - text_width(&label), y - GLYPH_H / 2, &label, BLACK);
    }
    draw_text(&mut img, 4, 6, "mass per bin", BLACK);

    for (k, (name, _, color)) in series.iter().enumerate() {
        let y = y_top + 8 + k as u32 * 14;
        fill_rect(&mut img, x0 + 10, y, 10, 8, *color);
        draw_text(&mut img, x0 + 26, y, name, BLACK);
    }

    Ok((
        img,
        DistributionPlotMeta {
            width: PLOT_W,
            height: PLOT_H,
            curves: series.len(),
        },
    ))
}

pub fn render_distributions(
    case: &ScoreDistributions,
    calibration: Option<&ScoreDistributions>,
    path: &Path,
) -> Result<DistributionPlotMeta, RenderError> {
    let (img, meta) = distributions_image(case, calibration)?;
    write_png(&img, path)?;
    Ok(meta)
}

/// Score distributions handed from analysis to rendering.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatisticsFile {
    pub descriptor: String,
    pub case: ScoreDistributions,
    pub calibration: Option<ScoreDistributions>,
}

pub fn write_json<T: Serialize>(value: &T, path: &Path) -> Result<(), RenderError> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    }
    let text = serde_json::to_string_pretty(value).map_err(|e| io_err(path, e))?;
    fs::write(path, text + "\n").map_err(|e| io_err(path, e))
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T, RenderError> {
    let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    serde_json::from_str(&text).map_err(|e| io_err(path, e))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistributionSummary {
    pub genuine: SampleStats,
    pub impostor: SampleStats,
    pub bins: usize,
    pub genuine_hist: Vec<f64>,
    pub impostor_hist: Vec<f64>,
}

impl From<&ScoreDistributions> for DistributionSummary {
    fn from(d: &ScoreDistributions) -> Self {
        Self {
            genuine: d.genuine_stats,
            impostor: d.impostor_stats,
            bins: d.bins,
            genuine_hist: d.genuine_hist.clone(),
            impostor_hist: d.impostor_hist.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Exclusion {
    pub id: String,
    pub reason: String,
}

/// Fixed method descriptions recorded in every report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Methods {
    pub pairs: String,
    pub density: String,
    pub similarity_summary: String,
    pub rank_correlation: String,
}

impl Default for Methods {
    fn default() -> Self {
        Self {
            pairs: "unordered pairs, diagonal excluded".into(),
            density: "normalized step histogram over [-1, 1]".into(),
            similarity_summary: "mean off-diagonal similarity per image".into(),
            rank_correlation: "spearman, average ranks for ties".into(),
        }
    }
}

/// The machine-readable report; see `schemas/report.schema.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportDocument {
    pub schema_version: u32,
    pub case_name: String,
    pub descriptor: String,
    pub verdict: Verdict,
    pub thresholds: Thresholds,
    pub overlap_case_impostor_vs_calibration_genuine: Option<f64>,
    pub overlap_case_impostor_vs_calibration_impostor: Option<f64>,
    pub d_prime_case: Option<f64>,
    pub case: DistributionSummary,
    pub calibration: DistributionSummary,
    pub quality_confound: BTreeMap<Metric, Option<f64>>,
    pub notes: Vec<String>,
    pub excluded: Vec<Exclusion>,
    /// Figure name → path relative to the report directory.
    pub figures: BTreeMap<String, String>,
    pub methods: Methods,
}

impl ReportDocument {
    pub fn new(
        case_name: &str,
        descriptor: &str,
        report: &VerdictReport,
        figures: BTreeMap<String, String>,
        excluded: Vec<Exclusion>,
    ) -> Self {
        Self {
            schema_version: REPORT_SCHEMA_VERSION,
            case_name: case_name.to_string(),
            descriptor: descriptor.to_string(),
            verdict: report.verdict,
            thresholds: report.thresholds,
            overlap_case_impostor_vs_calibration_genuine: report.overlap_with_genuine,
            overlap_case_impostor_vs_calibration_impostor: report.overlap_with_impostor,
            d_prime_case: report.d_prime,
            case: (&report.case).into(),
            calibration: (&report.calibration).into(),
            quality_confound: report.quality_confound.clone(),
            notes: report.notes.clone(),
            excluded,
            figures,
            methods: Methods::default(),
        }
    }
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "n/a".to_string(), |v| format!("{v:.4}"))
}

pub fn markdown_summary(doc: &ReportDocument) -> String {
    let mut md = String::new();
    md.push_str(&format!("# {} ({})\n\n", doc.case_name, doc.descriptor));
    md.push_str(&format!("**Verdict: {}**\n\n", doc.verdict));
    md.push_str("| statistic | value |\n|---|---|\n");
    md.push_str(&format!(
        "| overlap(case impostor, calibration genuine) | {} |\n",
        fmt_opt(doc.overlap_case_impostor_vs_calibration_genuine)
    ));
    md.push_str(&format!(
        "| overlap(case impostor, calibration impostor) | {} |\n",
        fmt_opt(doc.overlap_case_impostor_vs_calibration_impostor)
    ));
    md.push_str(&format!("| d' (case genuine vs impostor) | {} |\n", fmt_opt(doc.d_prime_case)));
    md.push_str(&format!("| tau_same | {:.4} |\n", doc.thresholds.tau_same));
    md.push_str(&format!("| tau_diff | {:.4} |\n\n", doc.thresholds.tau_diff));

    md.push_str("| scores | count | mean | std |\n|---|---|---|---|\n");
    for (name, s) in [
        ("case genuine", &doc.case.genuine),
        ("case impostor", &doc.case.impostor),
        ("calibration genuine", &doc.calibration.genuine),
        ("calibration impostor", &doc.calibration.impostor),
    ] {
        md.push_str(&format!("| {name} | {} | {:.4} | {:.4} |\n", s.count, s.mean, s.std));
    }

    md.push_str("\n## Quality confound\n\nSpearman correlation between each image's quality and its mean similarity to the others.\n\n");
    md.push_str("| metric | rank correlation |\n|---|---|\n");
    for (metric, value) in &doc.quality_confound {
        md.push_str(&format!("| {metric} | {} |\n", fmt_opt(*value)));
    }

    if !doc.figures.is_empty() {
        md.push_str("\n## Figures\n\n");
        for (name, path) in &doc.figures {
            md.push_str(&format!("![{name}]({path})\n"));
        }
    }
    if !doc.excluded.is_empty() {
        md.push_str("\n## Excluded images\n\n");
        for e in &doc.excluded {
            md.push_str(&format!("- `{}`: {}\n", e.id, e.reason));
        }
    }
    if !doc.notes.is_empty() {
        md.push_str("\n## Notes\n\n");
        for n in &doc.notes {
            md.push_str(&format!("- {n}\n"));
        }
    }
    md
}

/// Write `report.json` and `report.md` into `dir`.
pub fn write_report(doc: &ReportDocument, dir: &Path) -> Result<(PathBuf, PathBuf), RenderError> {
    let json = dir.join("report.json");
    let md = dir.join("report.md");
    write_json(doc, &json)?;
    fs::write(&md, markdown_summary(doc)).map_err(|e| io_err(&md, e))?;
    Ok((json, md))
}
