//! Class activation maps.
//!
//! `M_c(x, y) = sum_k w_k(x, y) * f_k(x, y)` over the K feature maps of the
//! last convolutional layer. Channel weights (GAP + FC heads) are broadcast
//! over space; spatial weights (gradients) are used per location. All sums
//! run in f64.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imaging::{bilinear_resize, Grid};
use crate::tensor_io::{ExplanationInputs, WeightMode};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Resolution {
    Feature,
    Image,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CamMap {
    values: Grid,
    pub class_id: usize,
    pub resolution: Resolution,
}

impl CamMap {
    pub fn new(values: Grid, class_id: usize, resolution: Resolution) -> Result<Self> {
        if values.values().iter().any(|v| !v.is_finite()) {
            return Err(Error::Argument("class activation map has non-finite values".into()));
        }
        Ok(CamMap {
            values,
            class_id,
            resolution,
        })
    }

    pub fn grid(&self) -> &Grid {
        &self.values
    }

    pub fn values(&self) -> &[f64] {
        self.values.values()
    }

    pub fn width(&self) -> usize {
        self.values.width()
    }

    pub fn height(&self) -> usize {
        self.values.height()
    }
}

pub fn compute_cam(inputs: &ExplanationInputs) -> Result<CamMap> {
    let (k, h, w) = inputs.feature_dims();
    let plane = h * w;
    let features = inputs.features();
    let weights = inputs.weights();
    let mut acc = vec![0.0f64; plane];
    match weights.mode {
        WeightMode::Channel => {
            if weights.values.len() != k {
                return Err(Error::Shape(format!(
                    "{} channel weights for {k} feature maps",
                    weights.values.len()
                )));
            }
            for ch in 0..k {
                let wk = weights.values.get_f64(ch);
                let base = ch * plane;
                for (i, a) in acc.iter_mut().enumerate() {
                    *a += wk * features.get_f64(base + i);
                }
            }
        }
        WeightMode::Spatial => {
            if weights.values.shape() != features.shape() {
                return Err(Error::Shape(format!(
                    "spatial weights {:?} do not match features {:?}",
                    weights.values.shape(),
                    features.shape()
                )));
            }
            for ch in 0..k {
                let base = ch * plane;
                for (i, a) in acc.iter_mut().enumerate() {
                    *a += weights.values.get_f64(base + i) * features.get_f64(base + i);
                }
            }
        }
    }
    CamMap::new(Grid::new(w, h, acc)?, inputs.class_id, Resolution::Feature)
}

/// Class score `S_c = sum_{x,y} M_c(x, y)`.
///
/// Only meaningful before upsampling; image-resolution maps are rejected.
pub fn class_score(cam: &CamMap) -> Result<f64> {
    if cam.resolution != Resolution::Feature {
        return Err(Error::Argument(
            "class score is defined on the feature-resolution map".into(),
        ));
    }
    Ok(cam.values().iter().sum())
}

/// Numerically stable softmax.
pub fn softmax(scores: &[f64]) -> Result<Vec<f64>> {
    if scores.is_empty() {
        return Err(Error::Argument("softmax of an empty vector".into()));
    }
    if scores.iter().any(|s| !s.is_finite()) {
        return Err(Error::Argument("softmax input must be finite".into()));
    }
    let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = scores.iter().map(|s| (s - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    Ok(exps.into_iter().map(|e| e / total).collect())
}

/// Clamps negative activations to zero.
pub fn relu_inplace(cam: &mut CamMap) {
    for v in cam.values.values_mut() {
        if *v < 0.0 {
            *v = 0.0;
        }
    }
}

pub fn upsample_to_image(cam: &CamMap, height: usize, width: usize) -> Result<CamMap> {
    if cam.resolution != Resolution::Feature {
        return Err(Error::Argument("map is already at image resolution".into()));
    }
    let values = bilinear_resize(&cam.values, height, width)?;
    Ok(CamMap {
        values,
        class_id: cam.class_id,
        resolution: Resolution::Image,
    })
}
