//! SLIC superpixels.
//!
//! Clustering runs in the 5-D `(L, a, b, x, y)` space with the distance
//! `D = d_lab + (m / S) * d_xy`, where `S = sqrt(N / K)` is the grid interval.
//! Centers start on a regular grid, are nudged to the lowest-gradient pixel
//! of their 3x3 neighbourhood, and then alternate between label assignment
//! and mean updates until the summed center movement drops below `eps`.
//! A final pass makes every region 4-connected.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imaging::{srgb_to_lab, LabImage, RgbImage};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SearchMode {
    /// Only centers within `S` of the pixel along both axes compete (a 2S x 2S window).
    #[default]
    Windowed,
    /// Every center competes for every pixel.
    Full,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SlicParams {
    pub k: usize,
    /// Compactness; larger values favour spatially regular superpixels.
    pub m: f64,
    pub max_iters: usize,
    /// Stop once the summed L2 movement of all centers in labxy space is below this.
    pub eps: f64,
    pub search_mode: SearchMode,
}

pub const MIN_COMPACTNESS: f64 = 1.0;
pub const MAX_COMPACTNESS: f64 = 20.0;

impl Default for SlicParams {
    fn default() -> Self {
        SlicParams {
            k: 49,
            m: 10.0,
            max_iters: 10,
            eps: 1.0,
            search_mode: SearchMode::Windowed,
        }
    }
}

impl SlicParams {
    pub fn new(k: usize, m: f64) -> Self {
        SlicParams {
            k,
            m,
            ..Default::default()
        }
    }

    pub fn with_search(mut self, mode: SearchMode) -> Self {
        self.search_mode = mode;
        self
    }

    pub fn validate(&self, pixel_count: usize) -> Result<()> {
        if self.k == 0 {
            return Err(Error::Argument("k must be at least 1".into()));
        }
        if self.k > pixel_count {
            return Err(Error::Argument(format!(
                "k = {} exceeds the pixel count {pixel_count}",
                self.k
            )));
        }
        if !(MIN_COMPACTNESS..=MAX_COMPACTNESS).contains(&self.m) {
            return Err(Error::Argument(format!(
                "m must be in [{MIN_COMPACTNESS}, {MAX_COMPACTNESS}], got {}",
                self.m
            )));
        }
        if self.max_iters == 0 {
            return Err(Error::Argument("max_iters must be positive".into()));
        }
        if self.eps.is_nan() || self.eps < 0.0 {
            return Err(Error::Argument(format!("eps must be non-negative, got {}", self.eps)));
        }
        Ok(())
    }
}

/// Grid interval `S = sqrt(N / K)`.
pub fn grid_interval(pixel_count: usize, k: usize) -> f64 {
    (pixel_count as f64 / k as f64).sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClusterCenter {
    pub l: f64,
    pub a: f64,
    pub b: f64,
    pub x: f64,
    pub y: f64,
}

impl ClusterCenter {
    pub fn at_pixel(lab: &LabImage, x: usize, y: usize) -> Self {
        let [l, a, b] = lab.get(x, y);
        ClusterCenter {
            l,
            a,
            b,
            x: x as f64,
            y: y as f64,
        }
    }

    /// Euclidean distance between two centers in labxy space.
    pub fn distance(&self, other: &ClusterCenter) -> f64 {
        let d = [
            self.l - other.l,
            self.a - other.a,
            self.b - other.b,
            self.x - other.x,
            self.y - other.y,
        ];
        d.iter().map(|v| v * v).sum::<f64>().sqrt()
    }
}

/// Per-pixel region ids.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SegmentLabels {
    width: usize,
    height: usize,
    labels: Vec<u32>,
    region_count: usize,
}

impl SegmentLabels {
    /// Builds a label map whose ids are exactly `0..region_count` with no gaps.
    pub fn new(width: usize, height: usize, labels: Vec<u32>) -> Result<Self> {
        if width == 0 || height == 0 || labels.len() != width * height {
            return Err(Error::Shape(format!(
                "{width}x{height} label map cannot hold {} labels",
                labels.len()
            )));
        }
        let count = labels.iter().max().map_or(0, |&m| m as usize + 1);
        let mut seen = vec![false; count];
        for &l in &labels {
            seen[l as usize] = true;
        }
        if let Some(gap) = seen.iter().position(|s| !s) {
            return Err(Error::Argument(format!("label ids skip {gap}")));
        }
        Ok(SegmentLabels {
            width,
            height,
            labels,
            region_count: count,
        })
    }

    /// Label map whose ids are `< region_count` but may leave some ids unused.
    pub fn provisional(width: usize, height: usize, labels: Vec<u32>, region_count: usize) -> Result<Self> {
        if width == 0 || height == 0 || labels.len() != width * height {
            return Err(Error::Shape(format!(
                "{width}x{height} label map cannot hold {} labels",
                labels.len()
            )));
        }
        if let Some(&bad) = labels.iter().find(|&&l| l as usize >= region_count) {
            return Err(Error::Argument(format!(
                "label {bad} out of range for {region_count} regions"
            )));
        }
        Ok(SegmentLabels {
            width,
            height,
            labels,
            region_count,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn labels(&self) -> &[u32] {
        &self.labels
    }

    pub fn region_count(&self) -> usize {
        self.region_count
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> u32 {
        self.labels[y * self.width + x]
    }

    pub fn region_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.region_count];
        for &l in &self.labels {
            sizes[l as usize] += 1;
        }
        sizes
    }

    /// True if every id in `0..region_count` labels at least one pixel.
    pub fn is_compact(&self) -> bool {
        self.region_sizes().iter().all(|&s| s > 0)
    }

    /// True if every region forms a single 4-connected component.
    pub fn regions_connected(&self) -> bool {
        let (components, _) = connected_components(self);
        let mut owner = vec![usize::MAX; self.region_count];
        for (comp, &label) in components.label.iter().enumerate() {
            let slot = &mut owner[label as usize];
            if *slot != usize::MAX {
                return false;
            }
            *slot = comp;
        }
        true
    }
}

/// Squared-norm image gradient at an interior pixel:
/// `|I(x+1,y) - I(x-1,y)|^2 + |I(x,y+1) - I(x,y-1)|^2` over the Lab vector.
pub fn image_gradient(lab: &LabImage, x: usize, y: usize) -> Result<f64> {
    let (w, h) = (lab.width(), lab.height());
    if x < 1 || y < 1 || x + 2 > w || y + 2 > h {
        return Err(Error::Argument(format!(
            "gradient undefined at ({x}, {y}) in a {w}x{h} image"
        )));
    }
    Ok(gradient_unchecked(lab, x, y))
}

#[inline]
fn gradient_unchecked(lab: &LabImage, x: usize, y: usize) -> f64 {
    let sq = |p: [f64; 3], q: [f64; 3]| {
        (p[0] - q[0]).powi(2) + (p[1] - q[1]).powi(2) + (p[2] - q[2]).powi(2)
    };
    sq(lab.get(x + 1, y), lab.get(x - 1, y)) + sq(lab.get(x, y + 1), lab.get(x, y - 1))
}

// Number of grid cells along each axis. Picks floor/ceil of extent / S per
// axis so the product lands as close to k as the grid allows.
fn grid_shape(width: usize, height: usize, k: usize) -> (usize, usize) {
    let s = grid_interval(width * height, k);
    let options = |extent: usize| {
        let r = extent as f64 / s;
        let lo = (r.floor() as usize).clamp(1, extent);
        let hi = (r.ceil() as usize).clamp(1, extent);
        [lo, hi]
    };
    // When one axis clamps (very thin images) the other must absorb k.
    let complement = |other: usize, extent: usize| {
        [k / other, k.div_ceil(other)].map(|n| n.clamp(1, extent))
    };
    let mut cands = Vec::new();
    for nx in options(width) {
        for ny in options(height).into_iter().chain(complement(nx, height)) {
            cands.push((nx, ny));
        }
    }
    for ny in options(height) {
        for nx in complement(ny, width) {
            cands.push((nx, ny));
        }
    }
    let mut best = (1, 1);
    let mut best_key = (usize::MAX, f64::INFINITY);
    for (nx, ny) in cands {
        let count_err = (nx * ny).abs_diff(k);
        let spacing_err =
            (width as f64 / nx as f64 - s).abs() + (height as f64 / ny as f64 - s).abs();
        if count_err < best_key.0 || (count_err == best_key.0 && spacing_err < best_key.1) {
            best = (nx, ny);
            best_key = (count_err, spacing_err);
        }
    }
    best
}

/// Unperturbed seed positions: cell centers of a near-square grid with
/// spacing close to `S`, in row-major order.
pub fn grid_positions(width: usize, height: usize, k: usize) -> Vec<(usize, usize)> {
    let (nx, ny) = grid_shape(width, height, k);
    let xs: Vec<usize> = (0..nx)
        .map(|i| ((2 * i + 1) * width / (2 * nx)).min(width - 1))
        .collect();
    let ys: Vec<usize> = (0..ny)
        .map(|j| ((2 * j + 1) * height / (2 * ny)).min(height - 1))
        .collect();
    ys.iter()
        .flat_map(|&y| xs.iter().map(move |&x| (x, y)))
        .collect()
}

/// Moves `(x, y)` to the lowest-gradient pixel of its 3x3 neighbourhood.
/// The original position wins ties; otherwise the first minimum in row-major order.
fn perturb(lab: &LabImage, x: usize, y: usize) -> (usize, usize) {
    let (w, h) = (lab.width(), lab.height());
    let interior = |px: usize, py: usize| px >= 1 && py >= 1 && px + 2 <= w && py + 2 <= h;
    let mut best = (x, y);
    let mut best_g = if interior(x, y) {
        gradient_unchecked(lab, x, y)
    } else {
        f64::INFINITY
    };
    for dy in -1i64..=1 {
        for dx in -1i64..=1 {
            let (px, py) = (x as i64 + dx, y as i64 + dy);
            if px < 0 || py < 0 {
                continue;
            }
            let (px, py) = (px as usize, py as usize);
            if !interior(px, py) {
                continue;
            }
            let g = gradient_unchecked(lab, px, py);
            if g < best_g {
                best_g = g;
                best = (px, py);
            }
        }
    }
    best
}

pub fn init_centers(lab: &LabImage, params: &SlicParams) -> Result<Vec<ClusterCenter>> {
    let n = lab.width() * lab.height();
    params.validate(n)?;
    Ok(grid_positions(lab.width(), lab.height(), params.k)
        .into_iter()
        .map(|(x, y)| {
            let (px, py) = perturb(lab, x, y);
            ClusterCenter::at_pixel(lab, px, py)
        })
        .collect())
}

/// `D = d_lab + (m / S) * d_xy` between a pixel and a center.
#[inline]
pub fn slic_distance(pixel: [f64; 3], x: f64, y: f64, center: &ClusterCenter, spatial_weight: f64) -> f64 {
    let d_lab = ((pixel[0] - center.l).powi(2)
        + (pixel[1] - center.a).powi(2)
        + (pixel[2] - center.b).powi(2))
    .sqrt();
    let d_xy = ((x - center.x).powi(2) + (y - center.y).powi(2)).sqrt();
    d_lab + spatial_weight * d_xy
}

/// Labels each pixel with the index of the center minimizing `D`.
///
/// Lower center indices win ties. In windowed mode a pixel that no window
/// reaches falls back to its spatially nearest center.
pub fn assign_labels(lab: &LabImage, centers: &[ClusterCenter], params: &SlicParams) -> Result<SegmentLabels> {
    if centers.is_empty() {
        return Err(Error::Argument("no cluster centers".into()));
    }
    let (w, h) = (lab.width(), lab.height());
    let s = grid_interval(w * h, params.k);
    let spatial_weight = params.m / s;
    let mut labels = vec![u32::MAX; w * h];
    let mut best = vec![f64::INFINITY; w * h];

    match params.search_mode {
        SearchMode::Full => {
            for y in 0..h {
                for x in 0..w {
                    let i = y * w + x;
                    let px = lab.pixels()[i];
                    for (ci, c) in centers.iter().enumerate() {
                        let d = slic_distance(px, x as f64, y as f64, c, spatial_weight);
                        if d < best[i] {
                            best[i] = d;
                            labels[i] = ci as u32;
                        }
                    }
                }
            }
        }
        SearchMode::Windowed => {
            for (ci, c) in centers.iter().enumerate() {
                let x0 = (c.x - s).ceil().max(0.0) as usize;
                let y0 = (c.y - s).ceil().max(0.0) as usize;
                let x1 = ((c.x + s).floor() as usize).min(w - 1);
                let y1 = ((c.y + s).floor() as usize).min(h - 1);
                for y in y0..=y1 {
                    for x in x0..=x1 {
                        let i = y * w + x;
                        let d = slic_distance(lab.pixels()[i], x as f64, y as f64, c, spatial_weight);
                        if d < best[i] {
                            best[i] = d;
                            labels[i] = ci as u32;
                        }
                    }
                }
            }
            for (i, label) in labels.iter_mut().enumerate() {
                if *label == u32::MAX {
                    *label = nearest_center_xy(centers, (i % w) as f64, (i / w) as f64);
                }
            }
        }
    }
    SegmentLabels::provisional(w, h, labels, centers.len())
}

fn nearest_center_xy(centers: &[ClusterCenter], x: f64, y: f64) -> u32 {
    let mut best = (0u32, f64::INFINITY);
    for (ci, c) in centers.iter().enumerate() {
        let d = (x - c.x).powi(2) + (y - c.y).powi(2);
        if d < best.1 {
            best = (ci as u32, d);
        }
    }
    best.0
}

/// New centers plus the indices of clusters that received no pixels.
#[derive(Debug, Clone, PartialEq)]
pub struct CenterUpdate {
    pub centers: Vec<ClusterCenter>,
    pub empty: Vec<usize>,
}

/// Recomputes each center as the mean labxy vector of its pixels. Empty
/// clusters keep their previous center and are reported in `empty`.
pub fn update_centers(lab: &LabImage, labels: &SegmentLabels, previous: &[ClusterCenter]) -> Result<CenterUpdate> {
    if labels.width() != lab.width() || labels.height() != lab.height() {
        return Err(Error::Shape("labels and image differ in size".into()));
    }
    if labels.region_count() != previous.len() {
        return Err(Error::Shape(format!(
            "{} regions but {} previous centers",
            labels.region_count(),
            previous.len()
        )));
    }
    let w = lab.width();
    // Colour sums are taken relative to each cluster's first pixel, so a
    // flat cluster averages to its colour exactly and d_lab stays 0.
    let mut origin: Vec<Option<[f64; 3]>> = vec![None; previous.len()];
    let mut sums = vec![[0.0f64; 5]; previous.len()];
    let mut counts = vec![0usize; previous.len()];
    for (i, (&label, px)) in labels.labels().iter().zip(lab.pixels()).enumerate() {
        let o = *origin[label as usize].get_or_insert(*px);
        let acc = &mut sums[label as usize];
        acc[0] += px[0] - o[0];
        acc[1] += px[1] - o[1];
        acc[2] += px[2] - o[2];
        acc[3] += (i % w) as f64;
        acc[4] += (i / w) as f64;
        counts[label as usize] += 1;
    }
    let mut empty = Vec::new();
    let centers = previous
        .iter()
        .enumerate()
        .map(|(ci, prev)| {
            let n = counts[ci];
            if n == 0 {
                empty.push(ci);
                return *prev;
            }
            let s = sums[ci];
            let o = origin[ci].expect("non-empty cluster has an origin");
            let n = n as f64;
            ClusterCenter {
                l: o[0] + s[0] / n,
                a: o[1] + s[1] / n,
                b: o[2] + s[2] / n,
                x: s[3] / n,
                y: s[4] / n,
            }
        })
        .collect();
    Ok(CenterUpdate { centers, empty })
}

/// Total assignment cost: the sum over pixels of `D` to their own center.
pub fn assignment_cost(lab: &LabImage, labels: &SegmentLabels, centers: &[ClusterCenter], params: &SlicParams) -> f64 {
    let w = lab.width();
    let spatial_weight = params.m / grid_interval(w * lab.height(), params.k);
    labels
        .labels()
        .iter()
        .zip(lab.pixels())
        .enumerate()
        .map(|(i, (&l, &px))| {
            slic_distance(px, (i % w) as f64, (i / w) as f64, &centers[l as usize], spatial_weight)
        })
        .sum()
}

struct Components {
    /// Provisional label of each component.
    label: Vec<u32>,
    size: Vec<usize>,
    /// First pixel of each component in row-major order.
    first: Vec<usize>,
}

// 4-connected components in row-major discovery order.
fn connected_components(labels: &SegmentLabels) -> (Components, Vec<usize>) {
    let (w, h) = (labels.width(), labels.height());
    let raw = labels.labels();
    let mut comp_of = vec![usize::MAX; w * h];
    let mut comps = Components {
        label: Vec::new(),
        size: Vec::new(),
        first: Vec::new(),
    };
    let mut queue = VecDeque::new();
    for start in 0..w * h {
        if comp_of[start] != usize::MAX {
            continue;
        }
        let id = comps.label.len();
        let label = raw[start];
        comp_of[start] = id;
        queue.push_back(start);
        let mut size = 0;
        while let Some(p) = queue.pop_front() {
            size += 1;
            let (x, y) = (p % w, p / w);
            let mut visit = |q: usize| {
                if comp_of[q] == usize::MAX && raw[q] == label {
                    comp_of[q] = id;
                    queue.push_back(q);
                }
            };
            if x > 0 {
                visit(p - 1);
            }
            if x + 1 < w {
                visit(p + 1);
            }
            if y > 0 {
                visit(p - w);
            }
            if y + 1 < h {
                visit(p + w);
            }
        }
        comps.label.push(label);
        comps.size.push(size);
        comps.first.push(start);
    }
    (comps, comp_of)
}

fn find(parent: &mut [usize], mut i: usize) -> usize {
    while parent[i] != i {
        parent[i] = parent[parent[i]];
        i = parent[i];
    }
    i
}

/// Splits every label into its 4-connected pieces, merges pieces smaller
/// than `min_size` pixels into their largest 4-adjacent neighbour, and
/// renumbers the result to `0..region_count`.
///
/// Surviving regions are numbered by their original label, then by the
/// row-major position of their first pixel, so an already-connected map
/// only has its ids compacted.
pub fn enforce_connectivity(labels: &SegmentLabels, min_size: usize) -> SegmentLabels {
    let (w, h) = (labels.width(), labels.height());
    let (comps, comp_of) = connected_components(labels);
    let n = comps.label.len();

    let mut adjacency: Vec<Vec<usize>> = vec![Vec::new(); n];
    for y in 0..h {
        for x in 0..w {
            let a = comp_of[y * w + x];
            for q in [(x + 1 < w).then(|| y * w + x + 1), (y + 1 < h).then(|| (y + 1) * w + x)]
                .into_iter()
                .flatten()
            {
                let b = comp_of[q];
                if a != b {
                    adjacency[a].push(b);
                    adjacency[b].push(a);
                }
            }
        }
    }
    for adj in &mut adjacency {
        adj.sort_unstable();
        adj.dedup();
    }

    let mut parent: Vec<usize> = (0..n).collect();
    let mut size = comps.size.clone();
    let mut members: Vec<Vec<usize>> = (0..n).map(|i| vec![i]).collect();

    let mut order: Vec<usize> = (0..n).filter(|&c| comps.size[c] < min_size).collect();
    order.sort_by_key(|&c| (comps.size[c], c));
    for c in order {
        let root = find(&mut parent, c);
        if size[root] >= min_size {
            continue;
        }
        let mut target: Option<usize> = None;
        for &m in &members[root] {
            for &nb in &adjacency[m] {
                let r = find(&mut parent, nb);
                if r == root {
                    continue;
                }
                target = match target {
                    Some(t) if size[t] > size[r] || (size[t] == size[r] && t <= r) => Some(t),
                    _ => Some(r),
                };
            }
        }
        let Some(t) = target else { continue };
        parent[root] = t;
        size[t] += size[root];
        let moved = std::mem::take(&mut members[root]);
        members[t].extend(moved);
    }

    let mut roots: Vec<usize> = (0..n).filter(|&c| find(&mut parent, c) == c).collect();
    roots.sort_by_key(|&r| (comps.label[r], comps.first[r]));
    let mut new_id = vec![u32::MAX; n];
    for (i, &r) in roots.iter().enumerate() {
        new_id[r] = i as u32;
    }
    let out: Vec<u32> = comp_of
        .iter()
        .map(|&c| new_id[find(&mut parent, c)])
        .collect();
    SegmentLabels {
        width: w,
        height: h,
        labels: out,
        region_count: roots.len(),
    }
}

/// Iteration record from [`segment_traced`].
#[derive(Debug, Clone)]
pub struct SegmentTrace {
    pub labels: SegmentLabels,
    pub centers: Vec<ClusterCenter>,
    /// Assignment cost after each assignment step, measured against the
    /// centers that produced it.
    pub costs: Vec<f64>,
    /// Summed center movement after each update step.
    pub movements: Vec<f64>,
    pub iterations: usize,
}

pub fn segment(image: &RgbImage, params: &SlicParams) -> Result<SegmentLabels> {
    segment_traced(image, params, false).map(|t| t.labels)
}

/// Runs the full pipeline. When `record_costs` is set, the assignment cost of
/// every iteration is recorded (an extra pass over the image per iteration).
pub fn segment_traced(image: &RgbImage, params: &SlicParams, record_costs: bool) -> Result<SegmentTrace> {
    let lab = srgb_to_lab(image);
    segment_lab(&lab, params, record_costs)
}

pub fn segment_lab(lab: &LabImage, params: &SlicParams, record_costs: bool) -> Result<SegmentTrace> {
    let n = lab.width() * lab.height();
    let mut centers = init_centers(lab, params)?;
    let mut costs = Vec::new();
    let mut movements = Vec::new();
    let mut labels = assign_labels(lab, &centers, params)?;
    let mut iterations = 0;
    loop {
        if record_costs {
            costs.push(assignment_cost(lab, &labels, &centers, params));
        }
        iterations += 1;
        let update = update_centers(lab, &labels, &centers)?;
        let movement: f64 = centers
            .iter()
            .zip(&update.centers)
            .map(|(a, b)| a.distance(b))
            .sum();
        movements.push(movement);
        centers = update.centers;
        if movement < params.eps || iterations >= params.max_iters {
            break;
        }
        labels = assign_labels(lab, &centers, params)?;
    }
    let s = grid_interval(n, params.k);
    let min_size = (s * s / 4.0).ceil() as usize;
    Ok(SegmentTrace {
        labels: enforce_connectivity(&labels, min_size),
        centers,
        costs,
        movements,
        iterations,
    })
}
