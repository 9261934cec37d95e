//! Drawing segmentations and explanations onto images.
//!
//! Every function returns a fresh image; inputs are never modified.

mod colormap;

use serde::{Deserialize, Serialize};

use crate::cam::CamMap;
use crate::error::{Error, Result};
use crate::explain::SecamExplanation;
use crate::imaging::RgbImage;
use crate::slic::SegmentLabels;

pub use colormap::JET;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RenderMode {
    Boundaries,
    Heatmap,
    #[default]
    Masked,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RenderStyle {
    pub mode: RenderMode,
    /// Heatmap opacity.
    pub alpha: f64,
    /// Brightness multiplier for unselected regions.
    pub dim_factor: f64,
    pub boundary_color: [u8; 3],
}

impl Default for RenderStyle {
    fn default() -> Self {
        RenderStyle {
            mode: RenderMode::Masked,
            alpha: 0.5,
            dim_factor: 0.0,
            boundary_color: [255, 255, 0],
        }
    }
}

impl RenderStyle {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(Error::Argument(format!("alpha must be in [0, 1], got {}", self.alpha)));
        }
        if !(0.0..=1.0).contains(&self.dim_factor) {
            return Err(Error::Argument(format!(
                "dim factor must be in [0, 1], got {}",
                self.dim_factor
            )));
        }
        Ok(())
    }
}

fn check_dims(image: &RgbImage, width: usize, height: usize, what: &str) -> Result<()> {
    if image.width() != width || image.height() != height {
        return Err(Error::Shape(format!(
            "image is {}x{} but {what} is {width}x{height}",
            image.width(),
            image.height()
        )));
    }
    Ok(())
}

/// Recolours pixels that have a 4-neighbour with a different label.
pub fn draw_boundaries(image: &RgbImage, labels: &SegmentLabels, color: [u8; 3]) -> Result<RgbImage> {
    let (w, h) = (labels.width(), labels.height());
    check_dims(image, w, h, "the label map")?;
    let mut out = image.clone();
    for y in 0..h {
        for x in 0..w {
            let l = labels.get(x, y);
            let edge = (x > 0 && labels.get(x - 1, y) != l)
                || (x + 1 < w && labels.get(x + 1, y) != l)
                || (y > 0 && labels.get(x, y - 1) != l)
                || (y + 1 < h && labels.get(x, y + 1) != l);
            if edge {
                out.put(x, y, color);
            }
        }
    }
    Ok(out)
}

/// Colormap index per pixel after min-max normalization. A constant map
/// maps entirely to index 0.
pub fn colormap_indices(cam: &CamMap) -> Vec<u8> {
    let (lo, hi) = cam.grid().range();
    let span = hi - lo;
    cam.values()
        .iter()
        .map(|&v| {
            if span > 0.0 {
                ((v - lo) / span * 255.0).round().clamp(0.0, 255.0) as u8
            } else {
                0
            }
        })
        .collect()
}

/// Blends `alpha * jet(cam) + (1 - alpha) * image`.
pub fn overlay_heatmap(image: &RgbImage, cam: &CamMap, alpha: f64) -> Result<RgbImage> {
    check_dims(image, cam.width(), cam.height(), "the activation map")?;
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::Argument(format!("alpha must be in [0, 1], got {alpha}")));
    }
    let mut out = image.clone();
    for (px, idx) in out.pixels_mut().chunks_exact_mut(3).zip(colormap_indices(cam)) {
        let color = JET[idx as usize];
        for (c, &m) in px.iter_mut().zip(&color) {
            *c = (alpha * m as f64 + (1.0 - alpha) * *c as f64).round() as u8;
        }
    }
    Ok(out)
}

/// Keeps selected regions as they are and scales every other pixel by `dim_factor`.
pub fn render_masked(image: &RgbImage, explanation: &SecamExplanation, dim_factor: f64) -> Result<RgbImage> {
    let mask = &explanation.mask;
    check_dims(image, mask.width(), mask.height(), "the explanation mask")?;
    if !(0.0..=1.0).contains(&dim_factor) {
        return Err(Error::Argument(format!(
            "dim factor must be in [0, 1], got {dim_factor}"
        )));
    }
    let mut out = image.clone();
    for (px, &keep) in out.pixels_mut().chunks_exact_mut(3).zip(mask.bits()) {
        if !keep {
            for c in px {
                *c = (*c as f64 * dim_factor).round() as u8;
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cam::Resolution;
    use crate::explain::SelectionRule;
    use crate::imaging::{Grid, Mask};

    fn gradient_image(w: usize, h: usize) -> RgbImage {
        RgbImage::new(w, h, (0..w * h * 3).map(|i| (i * 7 % 256) as u8).collect()).unwrap()
    }

    fn explanation(labels: &SegmentLabels, selected: Vec<usize>) -> SecamExplanation {
        let bits = labels.labels().iter().map(|l| selected.contains(&(*l as usize))).collect();
        SecamExplanation {
            class_id: 0,
            class_name: String::new(),
            rule: SelectionRule::TopN { n: selected.len().max(1) },
            region_values: vec![0.0; labels.region_count()],
            selected,
            mask: Mask::new(labels.width(), labels.height(), bits).unwrap(),
        }
    }

    #[test]
    fn colormap_endpoints() {
        assert_eq!(JET[0], [0, 0, 128]);
        assert_eq!(JET[255], [128, 0, 0]);
    }

    #[test]
    fn single_region_has_no_boundary() {
        let img = gradient_image(5, 4);
        let labels = SegmentLabels::new(5, 4, vec![0; 20]).unwrap();
        assert_eq!(draw_boundaries(&img, &labels, [255, 0, 0]).unwrap(), img);
    }

    #[test]
    fn half_planes_mark_frontier_columns() {
        let img = RgbImage::filled(4, 3, [10, 10, 10]).unwrap();
        let labels = SegmentLabels::new(4, 3, (0..12).map(|i| u32::from(i % 4 >= 2)).collect()).unwrap();
        let out = draw_boundaries(&img, &labels, [255, 0, 0]).unwrap();
        for y in 0..3 {
            for x in 0..4 {
                let expect = if x == 1 || x == 2 { [255, 0, 0] } else { [10, 10, 10] };
                assert_eq!(out.get(x, y), expect);
            }
        }
    }

    #[test]
    fn all_pixels_distinct_means_all_boundary() {
        let img = gradient_image(3, 3);
        let labels = SegmentLabels::new(3, 3, (0..9).collect()).unwrap();
        let out = draw_boundaries(&img, &labels, [1, 2, 3]).unwrap();
        assert!(out.pixels().chunks(3).all(|p| p == [1, 2, 3]));
    }

    #[test]
    fn heatmap_alpha_extremes() {
        let img = gradient_image(4, 2);
        let cam = CamMap::new(
            Grid::new(4, 2, vec![0.0, 1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0]).unwrap(),
            0,
            Resolution::Image,
        )
        .unwrap();
        assert_eq!(overlay_heatmap(&img, &cam, 0.0).unwrap(), img);
        let pure = overlay_heatmap(&img, &cam, 1.0).unwrap();
        let idx = colormap_indices(&cam);
        assert_eq!(idx[0], 0);
        assert_eq!(idx[7], 255);
        for (i, px) in pure.pixels().chunks(3).enumerate() {
            assert_eq!(px, JET[idx[i] as usize]);
        }
    }

    #[test]
    fn constant_heatmap_uses_lowest_color() {
        let img = gradient_image(3, 3);
        let cam = CamMap::new(Grid::filled(3, 3, 4.2).unwrap(), 0, Resolution::Image).unwrap();
        let out = overlay_heatmap(&img, &cam, 1.0).unwrap();
        assert!(out.pixels().chunks(3).all(|p| p == JET[0]));
    }

    #[test]
    fn masked_rendering() {
        let img = gradient_image(4, 1);
        let labels = SegmentLabels::new(4, 1, vec![0, 0, 1, 2]).unwrap();
        assert_eq!(render_masked(&img, &explanation(&labels, vec![0, 1, 2]), 0.0).unwrap(), img);
        assert_eq!(render_masked(&img, &explanation(&labels, vec![1]), 1.0).unwrap(), img);
        let out = render_masked(&img, &explanation(&labels, vec![1]), 0.0).unwrap();
        assert_eq!(out.get(0, 0), [0, 0, 0]);
        assert_eq!(out.get(2, 0), img.get(2, 0));
        assert_eq!(out.get(3, 0), [0, 0, 0]);
    }

    #[test]
    fn dimension_mismatch() {
        let img = gradient_image(4, 4);
        let labels = SegmentLabels::new(2, 2, vec![0, 1, 1, 0]).unwrap();
        assert!(matches!(draw_boundaries(&img, &labels, [0; 3]), Err(Error::Shape(_))));
        assert!(matches!(
            render_masked(&img, &explanation(&labels, vec![0]), 0.5),
            Err(Error::Shape(_))
        ));
    }
}
