//! Superpixel-level explanations.
//!
//! The image-resolution activation map is averaged over every region of a
//! segmentation, and the regions with the highest mean activation form the
//! explanation. Any [`SegmentLabels`] works here, not just SLIC output.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::cam::{compute_cam, relu_inplace, upsample_to_image, CamMap, Resolution};
use crate::error::{Error, Result};
use crate::imaging::Mask;
use crate::slic::SegmentLabels;
use crate::tensor_io::{ExplanationInputs, WeightMode};

/// How regions are picked from their averaged values.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SelectionRule {
    /// The `n` highest-valued regions.
    TopN { n: usize },
    /// Every region whose value reaches fraction `t` of the maximum.
    Threshold { t: f64 },
}

impl Default for SelectionRule {
    fn default() -> Self {
        SelectionRule::TopN { n: 3 }
    }
}

impl SelectionRule {
    pub fn validate(&self) -> Result<()> {
        match *self {
            SelectionRule::TopN { n: 0 } => {
                Err(Error::Argument("top-n selection needs n >= 1".into()))
            }
            SelectionRule::Threshold { t } if !(t > 0.0 && t <= 1.0) => Err(Error::Argument(
                format!("threshold must lie in (0, 1], got {t}"),
            )),
            _ => Ok(()),
        }
    }

    /// Short tag used in output file names, e.g. `top3` or `thr0.5`.
    pub fn tag(&self) -> String {
        match *self {
            SelectionRule::TopN { n } => format!("top{n}"),
            SelectionRule::Threshold { t } => format!("thr{t}"),
        }
    }
}

/// Result of explaining one class on one image.
#[derive(Debug, Clone, PartialEq)]
pub struct SecamExplanation {
    pub class_id: usize,
    pub class_name: String,
    pub rule: SelectionRule,
    /// Mean activation of each region, indexed by region id.
    pub region_values: Vec<f64>,
    /// Selected region ids in ascending order.
    pub selected: Vec<usize>,
    pub mask: Mask,
}

impl SecamExplanation {
    pub fn is_selected(&self, region: usize) -> bool {
        self.selected.binary_search(&region).is_ok()
    }
}

/// Mean of the map over each region's pixels.
pub fn region_average(cam: &CamMap, labels: &SegmentLabels) -> Result<Vec<f64>> {
    if cam.width() != labels.width() || cam.height() != labels.height() {
        return Err(Error::Shape(format!(
            "map is {}x{} but labels are {}x{}",
            cam.width(),
            cam.height(),
            labels.width(),
            labels.height()
        )));
    }
    let mut sums = vec![0.0f64; labels.region_count()];
    let mut counts = vec![0usize; labels.region_count()];
    for (&l, &v) in labels.labels().iter().zip(cam.values()) {
        sums[l as usize] += v;
        counts[l as usize] += 1;
    }
    sums.iter()
        .zip(&counts)
        .enumerate()
        .map(|(id, (&s, &c))| {
            if c == 0 {
                Err(Error::Argument(format!("region {id} has no pixels")))
            } else {
                Ok(s / c as f64)
            }
        })
        .collect()
}

/// Picks regions from their averaged values; the result is sorted by id.
///
/// Top-n breaks ties towards lower ids. The threshold rule keeps values
/// `>= max - (1 - t) * |max|`, which is `t * max` whenever the maximum is
/// non-negative and still keeps the argmax when every value is negative.
pub fn select_regions(values: &[f64], rule: &SelectionRule) -> Result<Vec<usize>> {
    rule.validate()?;
    if values.is_empty() {
        return Err(Error::Argument("no regions to select from".into()));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::Argument("region values must be finite".into()));
    }
    let mut picked = match *rule {
        SelectionRule::TopN { n } => {
            let mut order: Vec<usize> = (0..values.len()).collect();
            order.sort_by(|&a, &b| {
                values[b]
                    .partial_cmp(&values[a])
                    .unwrap_or(Ordering::Equal)
                    .then(a.cmp(&b))
            });
            order.truncate(n);
            order
        }
        SelectionRule::Threshold { t } => {
            let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let cutoff = if max >= 0.0 { t * max } else { max - (1.0 - t) * max.abs() };
            (0..values.len()).filter(|&i| values[i] >= cutoff).collect()
        }
    };
    picked.sort_unstable();
    Ok(picked)
}

/// Activation map for the inputs' class at image resolution.
///
/// Negative evidence is clamped only for spatial (gradient) weights.
pub fn image_cam(inputs: &ExplanationInputs, height: usize, width: usize) -> Result<CamMap> {
    let mut cam = compute_cam(inputs)?;
    if inputs.weights().mode == WeightMode::Spatial {
        relu_inplace(&mut cam);
    }
    upsample_to_image(&cam, height, width)
}

/// Builds an explanation from an image-resolution map and a segmentation.
pub fn explain_cam(cam: &CamMap, labels: &SegmentLabels, rule: SelectionRule) -> Result<SecamExplanation> {
    if cam.resolution != Resolution::Image {
        return Err(Error::Argument("explanations need an image-resolution map".into()));
    }
    let region_values = region_average(cam, labels)?;
    let selected = select_regions(&region_values, &rule)?;
    let mut chosen = vec![false; labels.region_count()];
    for &s in &selected {
        chosen[s] = true;
    }
    let bits = labels.labels().iter().map(|&l| chosen[l as usize]).collect();
    Ok(SecamExplanation {
        class_id: cam.class_id,
        class_name: String::new(),
        rule,
        region_values,
        selected,
        mask: Mask::new(labels.width(), labels.height(), bits)?,
    })
}

pub fn explain(inputs: &ExplanationInputs, labels: &SegmentLabels, rule: SelectionRule) -> Result<SecamExplanation> {
    rule.validate()?;
    let cam = image_cam(inputs, labels.height(), labels.width())?;
    let mut out = explain_cam(&cam, labels, rule)?;
    out.class_name = inputs.class_name.clone();
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::imaging::Grid;

    fn image_map(w: usize, h: usize, v: Vec<f64>) -> CamMap {
        CamMap::new(Grid::new(w, h, v).unwrap(), 0, Resolution::Image).unwrap()
    }

    #[test]
    fn constant_map_averages_to_constant() {
        let labels = SegmentLabels::new(3, 2, vec![0, 1, 1, 2, 2, 2]).unwrap();
        let vals = region_average(&image_map(3, 2, vec![0.7; 6]), &labels).unwrap();
        assert!(vals.iter().all(|v| (v - 0.7).abs() < 1e-15));
    }

    #[test]
    fn two_region_average() {
        let labels = SegmentLabels::new(4, 1, vec![0, 0, 1, 1]).unwrap();
        let vals = region_average(&image_map(4, 1, vec![1.0, 1.0, 3.0, 3.0]), &labels).unwrap();
        assert_eq!(vals, vec![1.0, 3.0]);
    }

    #[test]
    fn average_rejects_size_mismatch() {
        let labels = SegmentLabels::new(4, 1, vec![0, 0, 1, 1]).unwrap();
        assert!(matches!(
            region_average(&image_map(2, 2, vec![0.0; 4]), &labels),
            Err(Error::Shape(_))
        ));
    }

    #[test]
    fn top_n_and_threshold() {
        let v = [0.2, 0.9, 0.5];
        assert_eq!(select_regions(&v, &SelectionRule::TopN { n: 1 }).unwrap(), vec![1]);
        assert_eq!(select_regions(&v, &SelectionRule::Threshold { t: 0.5 }).unwrap(), vec![1, 2]);
        assert_eq!(select_regions(&v, &SelectionRule::TopN { n: 10 }).unwrap(), vec![0, 1, 2]);
        assert_eq!(select_regions(&v, &SelectionRule::Threshold { t: 1.0 }).unwrap(), vec![1]);
    }

    #[test]
    fn ties_prefer_lower_ids() {
        let v = [0.4; 5];
        assert_eq!(select_regions(&v, &SelectionRule::TopN { n: 2 }).unwrap(), vec![0, 1]);
    }

    #[test]
    fn invalid_rules() {
        let v = [1.0];
        assert!(select_regions(&v, &SelectionRule::TopN { n: 0 }).is_err());
        assert!(select_regions(&v, &SelectionRule::Threshold { t: 0.0 }).is_err());
        assert!(select_regions(&v, &SelectionRule::Threshold { t: 1.5 }).is_err());
        assert!(select_regions(&[], &SelectionRule::TopN { n: 1 }).is_err());
    }

    #[test]
    fn negative_values_rank_as_is() {
        let v = [-3.0, -1.0, -2.0];
        assert_eq!(select_regions(&v, &SelectionRule::TopN { n: 2 }).unwrap(), vec![1, 2]);
        assert_eq!(select_regions(&v, &SelectionRule::Threshold { t: 1.0 }).unwrap(), vec![1]);
        // cutoff -1 - 0.5 * 1 = -1.5
        assert_eq!(select_regions(&v, &SelectionRule::Threshold { t: 0.5 }).unwrap(), vec![1]);
    }

    #[test]
    fn rule_json_shape() {
        let s = serde_json::to_string(&SelectionRule::TopN { n: 3 }).unwrap();
        assert_eq!(s, r#"{"kind":"top_n","n":3}"#);
        let t: SelectionRule = serde_json::from_str(r#"{"kind":"threshold","t":0.5}"#).unwrap();
        assert_eq!(t, SelectionRule::Threshold { t: 0.5 });
    }

    #[test]
    fn mask_follows_selection() {
        let labels = SegmentLabels::new(3, 1, vec![0, 1, 2]).unwrap();
        let e = explain_cam(&image_map(3, 1, vec![0.1, 0.9, 0.5]), &labels, SelectionRule::TopN { n: 2 }).unwrap();
        assert_eq!(e.selected, vec![1, 2]);
        assert_eq!(e.mask.bits(), &[false, true, true]);
        assert!(e.is_selected(2) && !e.is_selected(0));
    }
}
