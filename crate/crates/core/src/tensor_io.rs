//! Tensors and explanation bundles.
//!
//! A bundle is a directory holding a `manifest.json` plus the NPY tensors it
//! names. Paths in the manifest are resolved against the manifest's own
//! directory, so a bundle can be copied around as a folder.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::npy::{self, NpyData};

/// Element storage of a [`Tensor`].
#[derive(Debug, Clone, PartialEq)]
pub enum TensorData {
    F32(Vec<f32>),
    F64(Vec<f64>),
    U8(Vec<u8>),
}

impl TensorData {
    pub fn len(&self) -> usize {
        match self {
            TensorData::F32(v) => v.len(),
            TensorData::F64(v) => v.len(),
            TensorData::U8(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn dtype(&self) -> &'static str {
        match self {
            TensorData::F32(_) => "float32",
            TensorData::F64(_) => "float64",
            TensorData::U8(_) => "uint8",
        }
    }
}

/// Dense row-major array with a non-empty shape of positive dimensions.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: TensorData,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: TensorData) -> Result<Self> {
        if shape.is_empty() {
            return Err(Error::Shape("tensor shape must have at least one dimension".into()));
        }
        if shape.contains(&0) {
            return Err(Error::Shape(format!("tensor shape {shape:?} has a zero dimension")));
        }
        let count: usize = shape.iter().product();
        if count != data.len() {
            return Err(Error::Shape(format!(
                "shape {shape:?} holds {count} elements but data has {}",
                data.len()
            )));
        }
        Ok(Tensor { shape, data })
    }

    pub fn from_f32(shape: Vec<usize>, data: Vec<f32>) -> Result<Self> {
        Tensor::new(shape, TensorData::F32(data))
    }

    pub fn from_f64(shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        Tensor::new(shape, TensorData::F64(data))
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn ndim(&self) -> usize {
        self.shape.len()
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &TensorData {
        &self.data
    }

    /// Element at flat index `i`, widened to f64.
    #[inline]
    pub fn get_f64(&self, i: usize) -> f64 {
        match &self.data {
            TensorData::F32(v) => v[i] as f64,
            TensorData::F64(v) => v[i],
            TensorData::U8(v) => v[i] as f64,
        }
    }

    pub fn to_f64_vec(&self) -> Vec<f64> {
        match &self.data {
            TensorData::F32(v) => v.iter().map(|&x| x as f64).collect(),
            TensorData::F64(v) => v.clone(),
            TensorData::U8(v) => v.iter().map(|&x| x as f64).collect(),
        }
    }
}

/// Reads an NPY v1.0 file into a [`Tensor`].
pub fn read_tensor(path: impl AsRef<Path>) -> Result<Tensor> {
    let (shape, data) = npy::read(path.as_ref())?;
    let data = match data {
        NpyData::F32(v) => TensorData::F32(v),
        NpyData::F64(v) => TensorData::F64(v),
        NpyData::U8(v) => TensorData::U8(v),
        NpyData::I32(_) => {
            return Err(Error::Unsupported(
                "int32 tensors (only float32, float64 and uint8 are accepted)".into(),
            ))
        }
    };
    Tensor::new(shape, data)
}

pub fn write_tensor(tensor: &Tensor, path: impl AsRef<Path>) -> Result<()> {
    let data = match &tensor.data {
        TensorData::F32(v) => NpyData::F32(v.clone()),
        TensorData::F64(v) => NpyData::F64(v.clone()),
        TensorData::U8(v) => NpyData::U8(v.clone()),
    };
    npy::write(path.as_ref(), &tensor.shape, &data)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WeightMode {
    /// One scalar per channel, broadcast over space (GAP + FC models).
    Channel,
    /// A full per-location weight map, e.g. gradients of the class logit.
    Spatial,
}

/// Class weights, validated against the feature shape when a bundle is built.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightSpec {
    pub mode: WeightMode,
    pub values: Tensor,
}

/// Everything needed to explain one (image, model, class) triple.
#[derive(Debug, Clone, PartialEq)]
pub struct ExplanationInputs {
    features: Tensor,
    weights: WeightSpec,
    pub class_id: usize,
    pub class_name: String,
    logits: Option<Tensor>,
    pub image_path: PathBuf,
    pub metadata: BTreeMap<String, String>,
}

impl ExplanationInputs {
    pub fn new(
        features: Tensor,
        weights: WeightSpec,
        class_id: usize,
        logits: Option<Tensor>,
    ) -> Result<Self> {
        if features.ndim() != 3 {
            return Err(Error::Shape(format!(
                "features must be K x h x w, got shape {:?}",
                features.shape()
            )));
        }
        let k = features.shape()[0];
        match weights.mode {
            WeightMode::Channel => {
                if weights.values.shape() != [k] {
                    return Err(Error::Shape(format!(
                        "channel weights must have shape [{k}], got {:?}",
                        weights.values.shape()
                    )));
                }
            }
            WeightMode::Spatial => {
                if weights.values.shape() != features.shape() {
                    return Err(Error::Shape(format!(
                        "spatial weights must match features {:?}, got {:?}",
                        features.shape(),
                        weights.values.shape()
                    )));
                }
            }
        }
        if let Some(l) = &logits {
            if l.ndim() != 1 {
                return Err(Error::Shape(format!("logits must be 1-D, got {:?}", l.shape())));
            }
            if class_id >= l.len() {
                return Err(Error::Shape(format!(
                    "class_id {class_id} out of range for {} logits",
                    l.len()
                )));
            }
        }
        Ok(ExplanationInputs {
            features,
            weights,
            class_id,
            class_name: String::new(),
            logits,
            image_path: PathBuf::new(),
            metadata: BTreeMap::new(),
        })
    }

    pub fn features(&self) -> &Tensor {
        &self.features
    }

    pub fn weights(&self) -> &WeightSpec {
        &self.weights
    }

    pub fn logits(&self) -> Option<&Tensor> {
        self.logits.as_ref()
    }

    /// `(K, h, w)` of the feature maps.
    pub fn feature_dims(&self) -> (usize, usize, usize) {
        let s = self.features.shape();
        (s[0], s[1], s[2])
    }
}

/// On-disk manifest layout.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Manifest {
    pub features: String,
    pub weights: String,
    pub weight_mode: WeightMode,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub logits: Option<String>,
    pub class_id: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub class_name: Option<String>,
    pub image: String,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub metadata: BTreeMap<String, String>,
}

const REQUIRED_KEYS: [&str; 5] = ["features", "weights", "weight_mode", "class_id", "image"];

pub fn read_bundle(manifest_path: impl AsRef<Path>) -> Result<ExplanationInputs> {
    let manifest_path = manifest_path.as_ref();
    let text = fs::read_to_string(manifest_path).map_err(|e| Error::io(manifest_path, e))?;
    let raw: serde_json::Value = serde_json::from_str(&text)
        .map_err(|e| Error::Manifest(format!("{}: {e}", manifest_path.display())))?;
    let obj = raw
        .as_object()
        .ok_or_else(|| Error::Manifest("manifest must be a JSON object".into()))?;
    for key in REQUIRED_KEYS {
        if !obj.contains_key(key) {
            return Err(Error::Manifest(format!("missing key {key:?}")));
        }
    }
    let manifest: Manifest =
        serde_json::from_value(raw).map_err(|e| Error::Manifest(e.to_string()))?;

    let base = manifest_path.parent().unwrap_or_else(|| Path::new("."));
    let features = read_tensor(base.join(&manifest.features))?;
    let weights = WeightSpec {
        mode: manifest.weight_mode,
        values: read_tensor(base.join(&manifest.weights))?,
    };
    let logits = manifest
        .logits
        .as_ref()
        .map(|p| read_tensor(base.join(p)))
        .transpose()?;

    let mut inputs = ExplanationInputs::new(features, weights, manifest.class_id, logits)?;
    inputs.class_name = manifest.class_name.unwrap_or_default();
    inputs.image_path = base.join(&manifest.image);
    inputs.metadata = manifest.metadata;
    Ok(inputs)
}

/// Writes `inputs` as a bundle in `dir`, returning the manifest path.
///
/// `image` is stored verbatim in the manifest (relative to `dir` if relative).
pub fn write_bundle(inputs: &ExplanationInputs, dir: impl AsRef<Path>, image: &str) -> Result<PathBuf> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    write_tensor(&inputs.features, dir.join("features.npy"))?;
    write_tensor(&inputs.weights.values, dir.join("weights.npy"))?;
    if let Some(l) = &inputs.logits {
        write_tensor(l, dir.join("logits.npy"))?;
    }
    let manifest = Manifest {
        features: "features.npy".into(),
        weights: "weights.npy".into(),
        weight_mode: inputs.weights.mode,
        logits: inputs.logits.as_ref().map(|_| "logits.npy".into()),
        class_id: inputs.class_id,
        class_name: (!inputs.class_name.is_empty()).then(|| inputs.class_name.clone()),
        image: image.to_string(),
        metadata: inputs.metadata.clone(),
    };
    let path = dir.join("manifest.json");
    let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
    Ok(path)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t32(shape: Vec<usize>) -> Tensor {
        let n = shape.iter().product();
        Tensor::from_f32(shape, (0..n).map(|i| i as f32).collect()).unwrap()
    }

    #[test]
    fn empty_and_zero_shapes_rejected() {
        assert!(matches!(Tensor::from_f32(vec![], vec![]), Err(Error::Shape(_))));
        assert!(matches!(Tensor::from_f32(vec![0, 3], vec![]), Err(Error::Shape(_))));
        assert!(matches!(Tensor::from_f32(vec![2], vec![1.0]), Err(Error::Shape(_))));
    }

    #[test]
    fn inputs_validate_weight_shapes() {
        let ch = WeightSpec {
            mode: WeightMode::Channel,
            values: t32(vec![5]),
        };
        assert!(matches!(
            ExplanationInputs::new(t32(vec![4, 7, 7]), ch, 0, None),
            Err(Error::Shape(_))
        ));
        let sp = WeightSpec {
            mode: WeightMode::Spatial,
            values: t32(vec![4, 7, 6]),
        };
        assert!(matches!(
            ExplanationInputs::new(t32(vec![4, 7, 7]), sp, 0, None),
            Err(Error::Shape(_))
        ));
        let ok = WeightSpec {
            mode: WeightMode::Spatial,
            values: t32(vec![4, 7, 7]),
        };
        assert!(ExplanationInputs::new(t32(vec![4, 7, 7]), ok, 0, None).is_ok());
    }

    #[test]
    fn features_must_be_3d() {
        let w = WeightSpec {
            mode: WeightMode::Channel,
            values: t32(vec![4]),
        };
        assert!(matches!(
            ExplanationInputs::new(t32(vec![4, 49]), w, 0, None),
            Err(Error::Shape(_))
        ));
    }

    #[test]
    fn class_id_checked_against_logits() {
        let w = WeightSpec {
            mode: WeightMode::Channel,
            values: t32(vec![2]),
        };
        let r = ExplanationInputs::new(t32(vec![2, 1, 1]), w, 3, Some(t32(vec![3])));
        assert!(matches!(r, Err(Error::Shape(_))));
    }
}
