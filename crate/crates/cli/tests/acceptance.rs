//! Acceptance gate: one PASS/FAIL line per criterion, nonzero exit on any failure.

#[path = "../../core/tests/common/faces.rs"]
mod faces;
#[path = "../../core/tests/common/oracles.rs"]
mod oracles;

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::{Duration, Instant};

use claimcheck::{cmd_analyze, RunConfig};
use claimcheck_core::analysis::{
    d_prime, overlap_coefficient, partition_scores, quality_confound, sort_by_quality, AffinityMatrix, Verdict,
    DEFAULT_BINS,
};
use claimcheck_core::quality::{
    brightness, contrast, exposure, face_luminance, score_all, sharpness, Classifiers, Metric, QualityConfig,
    QualityScores,
};
use claimcheck_core::render::{read_json, ReportDocument};
use claimcheck_core::synth::{random_aligned_face, write_case, write_reference, SetOptions, SetSpec};
use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;

fn ensure(ok: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg())
    }
}

fn within_time(start: Instant, limit: Duration) -> Result<Duration, String> {
    let took = start.elapsed();
    ensure(took < limit, || format!("took {took:.1?}, limit {limit:?}"))?;
    Ok(took)
}

fn quality_oracles() -> Outcome {
    let start = Instant::now();
    let cfg = QualityConfig::default();
    let mut worst = 0.0f64;
    for seed in 0..200u64 {
        let face = random_aligned_face(0xACC0_0000 + seed);
        let fl = face_luminance(&face).map_err(|e| format!("crop {seed}: {e}"))?;
        let fl_oracle = oracles::face_luminance(&face).ok_or_else(|| format!("crop {seed}: oracle found an empty triangle"))?;
        let pairs = [
            ("brightness", brightness(&face), oracles::brightness(&face)),
            ("face_luminance", fl, fl_oracle),
            ("exposure", exposure(&face, &cfg), oracles::exposure(&face, 0.10, 0.90)),
            ("contrast", contrast(&face, &cfg), oracles::contrast(&face, 0.5)),
            ("sharpness", sharpness(&face, &cfg), oracles::sharpness(&face, 2.0, 6, 0.05)),
        ];
        for (name, got, want) in pairs {
            let diff = (got - want).abs();
            worst = worst.max(diff);
            ensure(diff <= 1e-6, || format!("crop {seed}: {name} {got} vs oracle {want}"))?;
        }
    }
    let took = within_time(start, Duration::from_secs(30))?;
    Ok(format!("200 crops, max deviation {worst:.1e}, {took:.1?}"))
}

fn range_and_monotonicity() -> Outcome {
    let cfg = QualityConfig::default();
    let classifiers = Classifiers::default();
    let mut rng = ChaCha8Rng::seed_from_u64(0xF022);
    for trial in 0..1000u64 {
        let face = random_aligned_face(rng.random());
        let scores = score_all(&face, &classifiers, &cfg);
        ensure(scores.scores.len() == 8, || format!("trial {trial}: {} keys", scores.scores.len()))?;
        for m in Metric::ALL {
            if let Some(v) = scores.get(m) {
                ensure((0.0..=1.0).contains(&v), || format!("trial {trial}: {m} = {v}"))?;
            }
        }
        let blurred = sharpness(&faces::blurred(&face, 1.0), &cfg);
        let sharp = sharpness(&face, &cfg);
        ensure(blurred <= sharp, || format!("trial {trial}: blur raised sharpness {sharp} -> {blurred}"))?;
        let alpha = rng.random_range(0.01..0.99);
        let dark = brightness(&faces::scaled(&face, alpha));
        let bright = brightness(&face);
        ensure(dark <= bright, || format!("trial {trial}: scaling by {alpha} raised brightness {bright} -> {dark}"))?;
    }
    Ok("1000 crops, ranges and both monotonicity checks hold".into())
}

fn two_set_matrix(a: usize, b: usize, rng: &mut ChaCha8Rng) -> AffinityMatrix {
    let n = a + b;
    let mut values = vec![1.0; n * n];
    for i in 0..n {
        for j in i + 1..n {
            let v = rng.random_range(-1.0..1.0);
            values[i * n + j] = v;
            values[j * n + i] = v;
        }
    }
    let labels = (0..n).map(|i| if i < a { "real" } else { "double" }.to_string()).collect();
    let ids = (0..n).map(|i| format!("img{i:03}")).collect();
    AffinityMatrix::from_values(values, ids, labels).expect("square matrix")
}

fn protocol_combinatorics() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(0xC0B1);
    let mut cases = 0;
    for a in 2..=10 {
        for b in 2..=10 {
            let d = partition_scores(&two_set_matrix(a, b, &mut rng), DEFAULT_BINS).map_err(|e| e.to_string())?;
            let genuine = a * (a - 1) / 2 + b * (b - 1) / 2;
            ensure(d.genuine.len() == genuine && d.impostor.len() == a * b, || {
                format!("({a},{b}): {} genuine, {} impostor", d.genuine.len(), d.impostor.len())
            })?;
            cases += 1;
        }
    }
    Ok(format!("{cases} set-size pairs"))
}

fn quality_records(ids: &[String], metric: Metric, values: &[f64]) -> Vec<QualityScores> {
    ids.iter()
        .zip(values)
        .map(|(id, v)| QualityScores {
            source_id: id.clone(),
            label: String::new(),
            scores: Metric::ALL.iter().map(|&m| (m, (m == metric).then_some(*v))).collect(),
        })
        .collect()
}

fn statistics_oracles() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(0x57A7);
    let mut worst = 0.0f64;
    for k in 0..100 {
        let la = rng.random_range(2..200);
        let lb = rng.random_range(2..200);
        let shift = rng.random_range(-0.5..0.5);
        let a: Vec<f64> = (0..la).map(|_| rng.random_range(-1.0..1.0f64).clamp(-1.0, 1.0)).collect();
        let b: Vec<f64> = (0..lb).map(|_| (rng.random_range(-1.0..1.0) + shift as f64).clamp(-1.0, 1.0)).collect();

        let ov = overlap_coefficient(&a, &b, DEFAULT_BINS).map_err(|e| e.to_string())?;
        let ov_diff = (ov - oracles::overlap(&a, &b, DEFAULT_BINS)).abs();
        let dp = d_prime(&a, &b).map_err(|e| e.to_string())?;
        let dp_diff = (dp - oracles::d_prime(&a, &b)).abs();

        let n = rng.random_range(3..25);
        let m = two_set_matrix(n - n / 2, n / 2, &mut rng);
        let q: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..1.0)).collect();
        let rows: Vec<Vec<f64>> = (0..n).map(|i| (0..n).map(|j| m.get(i, j)).collect()).collect();
        let c = quality_confound(&m, &quality_records(&m.ids, Metric::Brightness, &q), Metric::Brightness)
            .map_err(|e| e.to_string())?;
        let c_diff = (c - oracles::confound(&rows, &q)).abs();

        for (name, diff) in [("overlap", ov_diff), ("d'", dp_diff), ("confound", c_diff)] {
            worst = worst.max(diff);
            ensure(diff <= 1e-9, || format!("sample {k}: {name} deviates by {diff:e}"))?;
        }
    }
    let genuine: Vec<f64> = (0..100).map(|i| if i % 2 == 0 { 0.6 } else { 0.8 }).collect();
    let impostor: Vec<f64> = (0..100).map(|i| if i % 2 == 0 { 0.2 } else { 0.4 }).collect();
    let dp = d_prime(&genuine, &impostor).map_err(|e| e.to_string())?;
    ensure((dp - 4.0).abs() <= 1e-6, || format!("gap 0.4, sigma 0.1 gives d' = {dp}"))?;
    Ok(format!("100 samples, max deviation {worst:.1e}; d' check {dp:.9}"))
}

fn off_diagonal(m: &AffinityMatrix) -> Vec<f64> {
    let mut v: Vec<f64> = (0..m.n)
        .flat_map(|i| (0..m.n).filter(move |&j| j != i).map(move |j| (i, j)))
        .map(|(i, j)| m.get(i, j))
        .collect();
    v.sort_by(f64::total_cmp);
    v
}

fn sort_correctness() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(0x5027);
    for trial in 0..100 {
        let n = rng.random_range(2..40);
        let m = two_set_matrix(n - n / 2, n / 2, &mut rng);
        let q: Vec<f64> = (0..n).map(|_| (rng.random_range(0..10) as f64) / 10.0).collect();
        let sorted = sort_by_quality(&m, &quality_records(&m.ids, Metric::Contrast, &q), Metric::Contrast)
            .map_err(|e| e.to_string())?;
        let p = &sorted.order;
        for i in 0..n {
            for j in 0..n {
                ensure(sorted.get(i, j) == m.get(p[i], p[j]), || format!("trial {trial}: cell ({i},{j})"))?;
            }
            ensure(sorted.labels[i] == m.labels[p[i]], || format!("trial {trial}: label {i}"))?;
        }
        ensure(p.windows(2).all(|w| q[w[0]] <= q[w[1]]), || format!("trial {trial}: order is not ascending"))?;
        ensure(off_diagonal(&sorted) == off_diagonal(&m), || format!("trial {trial}: multiset changed"))?;
    }
    Ok("100 matrices".into())
}

struct Scenario {
    root: tempfile::TempDir,
}

impl Scenario {
    fn new() -> std::io::Result<Self> {
        let root = tempfile::tempdir()?;
        write_reference(&root.path().join("reference"), 6, 4, 1000)?;
        Ok(Self { root })
    }

    fn case(&self, name: &str, ids: [u64; 2], double: SetOptions) -> std::io::Result<PathBuf> {
        let set = |label: &str, identity_seed, options| SetSpec {
            label: label.into(),
            identity_seed,
            count: 8,
            options,
        };
        write_case(
            &self.root.path().join(name),
            name,
            [&set("real", ids[0], SetOptions::default()), &set("double", ids[1], double)],
            Some("../reference/manifest.json"),
            1,
        )
    }

    fn analyze(&self, manifest: &Path, out: &str) -> Result<(ReportDocument, PathBuf), String> {
        let out = self.root.path().join(out);
        let cfg = RunConfig::new(manifest, &out);
        cmd_analyze(&cfg).map_err(|e| e.to_string())?;
        let report: ReportDocument = read_json(&out.join("baseline/report.json")).map_err(|e| e.to_string())?;
        Ok((report, out))
    }
}

fn tree(root: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for entry in fs::read_dir(dir).into_iter().flatten().flatten() {
            let path = entry.path();
            if path.is_dir() {
                stack.push(path);
            } else if let Ok(bytes) = fs::read(&path) {
                out.insert(path.strip_prefix(root).unwrap_or(&path).to_path_buf(), bytes);
            }
        }
    }
    out
}

fn end_to_end(scenario: &Scenario) -> Outcome {
    let start = Instant::now();
    let io = |e: std::io::Error| e.to_string();
    let same = scenario.case("same", [7, 7], SetOptions::default()).map_err(io)?;
    let distinct = scenario.case("distinct", [7, 8], SetOptions::default()).map_err(io)?;
    let mut summary = Vec::new();
    for (manifest, expected) in [(&same, Verdict::SamePerson), (&distinct, Verdict::DistinctPerson)] {
        let name = manifest.parent().and_then(Path::file_name).unwrap_or_default().to_string_lossy().into_owned();
        let (first, out1) = scenario.analyze(manifest, &format!("out-{name}-1"))?;
        let (_, out2) = scenario.analyze(manifest, &format!("out-{name}-2"))?;
        ensure(first.verdict == expected, || format!("{name}: verdict {} (expected {expected})", first.verdict))?;
        let (t1, t2) = (tree(&out1), tree(&out2));
        ensure(!t1.is_empty() && t1 == t2, || format!("{name}: output trees differ between runs"))?;
        summary.push(format!(
            "{name} -> {} (overlaps {:.3}/{:.3})",
            first.verdict,
            first.overlap_case_impostor_vs_calibration_genuine.unwrap_or(f64::NAN),
            first.overlap_case_impostor_vs_calibration_impostor.unwrap_or(f64::NAN)
        ));
    }
    let took = within_time(start, Duration::from_secs(60))?;
    Ok(format!("{}; byte-identical reruns; {took:.1?}", summary.join(", ")))
}

fn darkening_confound(scenario: &Scenario) -> Outcome {
    let io = |e: std::io::Error| e.to_string();
    let plain = scenario.case("plain", [7, 7], SetOptions::default()).map_err(io)?;
    let dark = scenario
        .case("dark", [7, 7], SetOptions { gain_factor: 0.4, ..SetOptions::default() })
        .map_err(io)?;
    let (before, _) = scenario.analyze(&plain, "out-plain")?;
    let (after, _) = scenario.analyze(&dark, "out-dark")?;
    let (mb, ma) = (before.case.impostor.mean, after.case.impostor.mean);
    ensure(ma < mb, || format!("impostor mean {mb:.4} -> {ma:.4} did not decrease"))?;
    let rho = after
        .quality_confound
        .get(&Metric::Brightness)
        .copied()
        .flatten()
        .ok_or("brightness confound unavailable")?;
    ensure(rho >= 0.5, || format!("brightness confound {rho:.3} < 0.5"))?;
    Ok(format!("impostor mean {mb:.4} -> {ma:.4}, brightness confound {rho:.3}"))
}

fn main() -> ExitCode {
    let scenario = Scenario::new();
    let with_scenario = |f: fn(&Scenario) -> Outcome| -> Outcome {
        match &scenario {
            Ok(s) => f(s),
            Err(e) => Err(format!("cannot write the reference population: {e}")),
        }
    };
    let criteria: Vec<(&str, Box<dyn Fn() -> Outcome + '_>)> = vec![
        ("quality-metric oracle suite", Box::new(quality_oracles)),
        ("range and monotonicity fuzz", Box::new(range_and_monotonicity)),
        ("protocol combinatorics", Box::new(protocol_combinatorics)),
        ("statistics oracles", Box::new(statistics_oracles)),
        ("sort correctness", Box::new(sort_correctness)),
        ("end-to-end synthetic discrimination", Box::new(|| with_scenario(end_to_end))),
        ("quality-confound reproduction", Box::new(|| with_scenario(darkening_confound))),
    ];
    let mut failed = 0;
    for (name, check) in &criteria {
        match check() {
            Ok(detail) => println!("PASS  {name}: {detail}"),
            Err(why) => {
                failed += 1;
                println!("FAIL  {name}: {why}");
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
