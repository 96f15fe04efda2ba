//! Brute-force reference implementations, written independently of the
//! library code they check.

#![allow(dead_code)]

use claimcheck_core::ingest::AlignedFace;

pub const SIDE: usize = 112;

/// BT.601 luma in [0, 1], straight from the RGB pixels.
pub fn luma_plane(face: &AlignedFace) -> Vec<f64> {
    let mut out = Vec::with_capacity(SIDE * SIDE);
    for y in 0..SIDE as u32 {
        for x in 0..SIDE as u32 {
            let p = face.pixels().get_pixel(x, y).0;
            out.push((0.299 * f64::from(p[0]) + 0.587 * f64::from(p[1]) + 0.114 * f64::from(p[2])) / 255.0);
        }
    }
    out
}

pub fn brightness(face: &AlignedFace) -> f64 {
    let l = luma_plane(face);
    l.iter().sum::<f64>() / l.len() as f64
}

fn cross(o: (f64, f64), a: (f64, f64), b: (f64, f64)) -> f64 {
    (a.0 - o.0) * (b.1 - o.1) - (a.1 - o.1) * (b.0 - o.0)
}

/// Closed triangle test: orient counter-clockwise, then require every edge
/// cross product to be non-negative.
fn inside(p: (f64, f64), mut t: [(f64, f64); 3]) -> bool {
    if cross(t[0], t[1], t[2]) < 0.0 {
        t.swap(1, 2);
    }
    (0..3).all(|k| cross(t[k], t[(k + 1) % 3], p) >= 0.0)
}

pub fn face_luminance(face: &AlignedFace) -> Option<f64> {
    let lm = face.canonical_landmarks.to_array().map(|p| (p[0], p[1]));
    let [le, re, nose, lmth, rmth] = lm;
    let tris = [[le, re, nose], [le, nose, lmth], [re, nose, rmth], [lmth, rmth, nose]];
    let l = luma_plane(face);
    let mut total = 0.0;
    for t in tris {
        let (mut sum, mut n) = (0.0, 0usize);
        for y in 0..SIDE {
            for x in 0..SIDE {
                if inside((x as f64, y as f64), t) {
                    sum += l[y * SIDE + x];
                    n += 1;
                }
            }
        }
        if n == 0 {
            return None;
        }
        total += sum / n as f64;
    }
    Some(total / 4.0)
}

pub fn exposure(face: &AlignedFace, lo: f64, hi: f64) -> f64 {
    let l = luma_plane(face);
    l.iter().filter(|v| lo <= **v && **v <= hi).count() as f64 / l.len() as f64
}

pub fn contrast(face: &AlignedFace, max_std: f64) -> f64 {
    let l = luma_plane(face);
    let n = l.len() as f64;
    let mean = l.iter().sum::<f64>() / n;
    let var = l.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    (var.sqrt() / max_std).min(1.0)
}

/// Full 2-D Gaussian window with edge replication, no separability.
pub fn blur2d(plane: &[f64], w: usize, h: usize, sigma: f64, radius: usize) -> Vec<f64> {
    let r = radius as i64;
    let mut weights = Vec::new();
    for dy in -r..=r {
        for dx in -r..=r {
            weights.push(((-(dx * dx + dy * dy) as f64) / (2.0 * sigma * sigma)).exp());
        }
    }
    let total: f64 = weights.iter().sum();
    let mut out = vec![0.0; w * h];
    for y in 0..h as i64 {
        for x in 0..w as i64 {
            let mut acc = 0.0;
            let mut k = 0;
            for dy in -r..=r {
                for dx in -r..=r {
                    let sx = (x + dx).clamp(0, w as i64 - 1) as usize;
                    let sy = (y + dy).clamp(0, h as i64 - 1) as usize;
                    acc += weights[k] * plane[sy * w + sx];
                    k += 1;
                }
            }
            out[y as usize * w + x as usize] = acc / total;
        }
    }
    out
}

pub fn sharpness(face: &AlignedFace, sigma: f64, radius: usize, normalizer: f64) -> f64 {
    let l = luma_plane(face);
    let b = blur2d(&l, SIDE, SIDE, sigma, radius);
    let residual = l.iter().zip(&b).map(|(a, c)| (a - c).abs()).sum::<f64>() / l.len() as f64;
    (residual / normalizer).min(1.0)
}

/// Bin by scanning explicit edges `−1 + 2k/bins`; out-of-range values go to the end bins.
pub fn bin_of(s: f64, bins: usize) -> usize {
    for k in 0..bins {
        let upper = -1.0 + 2.0 * (k + 1) as f64 / bins as f64;
        if s < upper {
            return k;
        }
    }
    bins - 1
}

pub fn overlap(a: &[f64], b: &[f64], bins: usize) -> f64 {
    let mut total = 0.0;
    for k in 0..bins {
        let pa = a.iter().filter(|s| bin_of(**s, bins) == k).count() as f64 / a.len() as f64;
        let pb = b.iter().filter(|s| bin_of(**s, bins) == k).count() as f64 / b.len() as f64;
        total += pa.min(pb);
    }
    total
}

fn mean_std(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    (m, (v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / n).sqrt())
}

pub fn d_prime(a: &[f64], b: &[f64]) -> f64 {
    let ((ma, sa), (mb, sb)) = (mean_std(a), mean_std(b));
    (ma - mb).abs() / ((sa * sa + sb * sb) / 2.0).sqrt()
}

/// rank = 1 + (#smaller) + (#equal − 1)/2, by pairwise counting.
pub fn ranks(v: &[f64]) -> Vec<f64> {
    v.iter()
        .map(|x| {
            let less = v.iter().filter(|y| *y < x).count() as f64;
            let equal = v.iter().filter(|y| *y == x).count() as f64;
            1.0 + less + (equal - 1.0) / 2.0
        })
        .collect()
}

pub fn pearson(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let cov: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let vx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    let vy: f64 = y.iter().map(|b| (b - my) * (b - my)).sum();
    cov / (vx * vy).sqrt()
}

/// Spearman correlation of `quality` against each row's off-diagonal mean.
pub fn confound(matrix: &[Vec<f64>], quality: &[f64]) -> f64 {
    let n = matrix.len();
    let means: Vec<f64> = (0..n)
        .map(|i| (0..n).filter(|&j| j != i).map(|j| matrix[i][j]).sum::<f64>() / (n - 1) as f64)
        .collect();
    pearson(&ranks(quality), &ranks(&means))
}
