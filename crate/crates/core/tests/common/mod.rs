//! Independent reference implementations shared by the integration tests.
//! Everything here is deliberately naive.

#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use secam::{BBox, Mask, RgbImage};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn data_dir() -> std::path::PathBuf {
    std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/data")
}

/// Noise over a few smooth colour blobs, so both flat and busy regions occur.
pub fn random_image(rng: &mut ChaCha8Rng, w: usize, h: usize) -> RgbImage {
    let blobs: Vec<(f64, f64, f64, [f64; 3])> = (0..rng.gen_range(2..6))
        .map(|_| {
            (
                rng.gen_range(0.0..w as f64),
                rng.gen_range(0.0..h as f64),
                rng.gen_range(4.0..w as f64 / 2.0),
                [rng.gen_range(0.0..255.0), rng.gen_range(0.0..255.0), rng.gen_range(0.0..255.0)],
            )
        })
        .collect();
    let noise = rng.gen_range(0.0..60.0);
    let mut px = Vec::with_capacity(w * h * 3);
    for y in 0..h {
        for x in 0..w {
            let mut c = [128.0; 3];
            for &(bx, by, r, col) in &blobs {
                let d2 = (x as f64 - bx).powi(2) + (y as f64 - by).powi(2);
                let wgt = (-d2 / (r * r)).exp();
                for i in 0..3 {
                    c[i] = c[i] * (1.0 - wgt) + col[i] * wgt;
                }
            }
            for v in c {
                let n: f64 = rng.gen_range(-noise..=noise);
                px.push((v + n).round().clamp(0.0, 255.0) as u8);
            }
        }
    }
    RgbImage::new(w, h, px).unwrap()
}

/// 4-connected components by explicit flood fill: (label, pixel count) per component.
pub fn flood_fill_components(labels: &[u32], w: usize, h: usize) -> Vec<(u32, usize)> {
    let mut seen = vec![false; w * h];
    let mut out = Vec::new();
    for start in 0..w * h {
        if seen[start] {
            continue;
        }
        let l = labels[start];
        let mut stack = vec![start];
        seen[start] = true;
        let mut size = 0;
        while let Some(p) = stack.pop() {
            size += 1;
            let (x, y) = (p % w, p / w);
            let mut nbrs = Vec::with_capacity(4);
            if x > 0 {
                nbrs.push(p - 1);
            }
            if x + 1 < w {
                nbrs.push(p + 1);
            }
            if y > 0 {
                nbrs.push(p - w);
            }
            if y + 1 < h {
                nbrs.push(p + w);
            }
            for q in nbrs {
                if !seen[q] && labels[q] == l {
                    seen[q] = true;
                    stack.push(q);
                }
            }
        }
        out.push((l, size));
    }
    out
}

/// Checks that `labels` is a gap-free partition whose regions are each one
/// 4-connected component. Returns a description of the first violation.
pub fn check_partition(labels: &[u32], w: usize, h: usize, region_count: usize) -> Result<(), String> {
    if labels.len() != w * h {
        return Err(format!("{} labels for {} pixels", labels.len(), w * h));
    }
    let mut sizes = vec![0usize; region_count];
    for &l in labels {
        match sizes.get_mut(l as usize) {
            Some(s) => *s += 1,
            None => return Err(format!("label {l} outside 0..{region_count}")),
        }
    }
    if let Some(id) = sizes.iter().position(|&s| s == 0) {
        return Err(format!("region {id} is empty"));
    }
    if sizes.iter().sum::<usize>() != w * h {
        return Err("region sizes do not sum to the pixel count".into());
    }
    let comps = flood_fill_components(labels, w, h);
    if comps.len() != region_count {
        return Err(format!("{} components for {region_count} regions", comps.len()));
    }
    Ok(())
}

/// Class score of a GAP + FC head: the FC layer applied to mean-pooled
/// features (no bias), scaled by h*w because the map sums where GAP averages.
pub fn gap_fc_score(features: &[f32], weights: &[f32], h: usize, w: usize) -> f64 {
    let plane = h * w;
    weights
        .iter()
        .enumerate()
        .map(|(k, &wk)| {
            let pooled: f64 = features[k * plane..(k + 1) * plane].iter().map(|&f| f as f64).sum::<f64>() / plane as f64;
            pooled * wk as f64
        })
        .sum::<f64>()
        * plane as f64
}

/// CAM by the textbook triple loop, pixel-major.
pub fn naive_cam(features: &[f32], weights: &[f32], k: usize, h: usize, w: usize) -> Vec<f64> {
    let mut out = vec![0.0; h * w];
    for y in 0..h {
        for x in 0..w {
            let mut acc = 0.0;
            for c in 0..k {
                acc += weights[c] as f64 * features[c * h * w + y * w + x] as f64;
            }
            out[y * w + x] = acc;
        }
    }
    out
}

/// (pixels of the mask inside any box, pixels of the mask) by a double loop.
pub fn naive_ebpg_counts(mask: &Mask, boxes: &[BBox]) -> (usize, usize) {
    let (mut inside, mut total) = (0, 0);
    for y in 0..mask.height() {
        for x in 0..mask.width() {
            if mask.get(x, y) {
                total += 1;
                if boxes
                    .iter()
                    .any(|b| x >= b.x_min && x < b.x_max && y >= b.y_min && y < b.y_max)
                {
                    inside += 1;
                }
            }
        }
    }
    (inside, total)
}

/// (intersection, union) pixel counts of two boxes by rasterising both.
pub fn naive_box_overlap(a: &BBox, b: &BBox, w: usize, h: usize) -> (usize, usize) {
    let (mut inter, mut union) = (0, 0);
    for y in 0..h {
        for x in 0..w {
            let ia = x >= a.x_min && x < a.x_max && y >= a.y_min && y < a.y_max;
            let ib = x >= b.x_min && x < b.x_max && y >= b.y_min && y < b.y_max;
            inter += usize::from(ia && ib);
            union += usize::from(ia || ib);
        }
    }
    (inter, union)
}

/// Plain Lloyd iterations in (L, a, b, x, y) with the SLIC distance
/// `|lab| + (m / s) |xy|`, every center considered for every pixel, ties to
/// the lower index. Runs until the labelling stops changing.
pub fn kmeans_5d(lab: &[[f64; 3]], w: usize, h: usize, seeds: &[(f64, f64)], m: f64, s: f64) -> Vec<u32> {
    let mut centers: Vec<[f64; 5]> = seeds
        .iter()
        .map(|&(x, y)| {
            let p = lab[y as usize * w + x as usize];
            [p[0], p[1], p[2], x, y]
        })
        .collect();
    let mut labels = vec![u32::MAX; w * h];
    for _ in 0..1000 {
        let mut changed = false;
        for y in 0..h {
            for x in 0..w {
                let p = lab[y * w + x];
                let mut best = (f64::INFINITY, 0u32);
                for (i, c) in centers.iter().enumerate() {
                    let dlab = ((p[0] - c[0]).powi(2) + (p[1] - c[1]).powi(2) + (p[2] - c[2]).powi(2)).sqrt();
                    let dxy = ((x as f64 - c[3]).powi(2) + (y as f64 - c[4]).powi(2)).sqrt();
                    let d = dlab + m / s * dxy;
                    if d < best.0 {
                        best = (d, i as u32);
                    }
                }
                if labels[y * w + x] != best.1 {
                    labels[y * w + x] = best.1;
                    changed = true;
                }
            }
        }
        if !changed {
            break;
        }
        // Means of the deviations from the current center, so exact ties in a
        // flat image are not broken by rounding noise.
        let mut sums = vec![[0.0f64; 6]; centers.len()];
        for y in 0..h {
            for x in 0..w {
                let p = lab[y * w + x];
                let l = labels[y * w + x] as usize;
                let c = centers[l];
                let s = &mut sums[l];
                s[0] += p[0] - c[0];
                s[1] += p[1] - c[1];
                s[2] += p[2] - c[2];
                s[3] += x as f64;
                s[4] += y as f64;
                s[5] += 1.0;
            }
        }
        for (c, s) in centers.iter_mut().zip(&sums) {
            if s[5] > 0.0 {
                *c = [c[0] + s[0] / s[5], c[1] + s[1] / s[5], c[2] + s[2] / s[5], s[3] / s[5], s[4] / s[5]];
            }
        }
    }
    labels
}

pub fn rel_err(a: f64, b: f64) -> f64 {
    let scale = a.abs().max(b.abs());
    if scale == 0.0 {
        0.0
    } else {
        (a - b).abs() / scale
    }
}
