//! Python bindings for `secam`.
//!
//! Images, label maps and masks cross the boundary as flat row-major lists
//! (or `bytes` for RGB pixels) so the module has no numpy dependency.

use std::path::PathBuf;

use pyo3::exceptions::{PyOSError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyBytes;

use secam::cli::run_pipeline;
use secam::explain::image_cam;
use secam::{BBox, Error, SearchMode, SelectionRule, SlicParams};

fn py_err(e: Error) -> PyErr {
    match e {
        Error::Io { .. } => PyOSError::new_err(e.to_string()),
        other => PyValueError::new_err(other.to_string()),
    }
}

fn to_bbox(b: (usize, usize, usize, usize)) -> PyResult<BBox> {
    BBox::new(b.0, b.1, b.2, b.3).map_err(py_err)
}

fn from_bbox(b: BBox) -> (usize, usize, usize, usize) {
    (b.x_min, b.y_min, b.x_max, b.y_max)
}

fn parse_rule(rule: &str, n: usize, t: f64) -> PyResult<SelectionRule> {
    let rule = match rule {
        "top_n" | "topn" => SelectionRule::TopN { n },
        "threshold" => SelectionRule::Threshold { t },
        other => return Err(PyValueError::new_err(format!("unknown rule {other:?}"))),
    };
    rule.validate().map_err(py_err)?;
    Ok(rule)
}

fn slic_params(k: usize, m: f64, max_iters: usize, eps: f64, search: &str) -> PyResult<SlicParams> {
    let mode = match search {
        "windowed" => SearchMode::Windowed,
        "full" => SearchMode::Full,
        other => return Err(PyValueError::new_err(format!("unknown search mode {other:?}"))),
    };
    Ok(SlicParams {
        k,
        m,
        max_iters,
        eps,
        search_mode: mode,
    })
}

/// An 8-bit RGB image.
#[pyclass(frozen, module = "secam_py")]
struct Image(secam::RgbImage);

#[pymethods]
impl Image {
    #[new]
    fn new(width: usize, height: usize, pixels: Vec<u8>) -> PyResult<Self> {
        secam::RgbImage::new(width, height, pixels).map(Image).map_err(py_err)
    }

    #[getter]
    fn width(&self) -> usize {
        self.0.width()
    }

    #[getter]
    fn height(&self) -> usize {
        self.0.height()
    }

    /// Interleaved RGB bytes, row-major.
    fn pixels<'py>(&self, py: Python<'py>) -> Bound<'py, PyBytes> {
        PyBytes::new(py, self.0.pixels())
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        secam::save_png(&self.0, path).map_err(py_err)
    }

    fn __repr__(&self) -> String {
        format!("Image({}x{})", self.0.width(), self.0.height())
    }
}

/// A superpixel label map.
#[pyclass(frozen, module = "secam_py")]
struct Segmentation(secam::SegmentLabels);

#[pymethods]
impl Segmentation {
    #[getter]
    fn width(&self) -> usize {
        self.0.width()
    }

    #[getter]
    fn height(&self) -> usize {
        self.0.height()
    }

    #[getter]
    fn region_count(&self) -> usize {
        self.0.region_count()
    }

    /// Region id of every pixel, row-major.
    fn labels(&self) -> Vec<u32> {
        self.0.labels().to_vec()
    }

    fn region_sizes(&self) -> Vec<usize> {
        self.0.region_sizes()
    }

    fn __repr__(&self) -> String {
        format!(
            "Segmentation({}x{}, {} regions)",
            self.0.width(),
            self.0.height(),
            self.0.region_count()
        )
    }
}

/// Exported features, weights and metadata for one image and class.
#[pyclass(frozen, module = "secam_py")]
struct Bundle(secam::ExplanationInputs);

#[pymethods]
impl Bundle {
    #[getter]
    fn class_id(&self) -> usize {
        self.0.class_id
    }

    #[getter]
    fn class_name(&self) -> &str {
        &self.0.class_name
    }

    #[getter]
    fn image_path(&self) -> PathBuf {
        self.0.image_path.clone()
    }

    /// `(channels, height, width)` of the feature tensor.
    #[getter]
    fn feature_shape(&self) -> (usize, usize, usize) {
        self.0.feature_dims()
    }

    #[getter]
    fn weight_mode(&self) -> &'static str {
        match self.0.weights().mode {
            secam::WeightMode::Channel => "channel",
            secam::WeightMode::Spatial => "spatial",
        }
    }

    fn logits(&self) -> Option<Vec<f64>> {
        self.0.logits().map(|l| l.to_f64_vec())
    }

    fn __repr__(&self) -> String {
        let (k, h, w) = self.0.feature_dims();
        format!("Bundle(class_id={}, features={k}x{h}x{w})", self.0.class_id)
    }
}

/// A class activation map at feature or image resolution.
#[pyclass(frozen, module = "secam_py")]
struct CamMap(secam::CamMap);

#[pymethods]
impl CamMap {
    #[getter]
    fn width(&self) -> usize {
        self.0.width()
    }

    #[getter]
    fn height(&self) -> usize {
        self.0.height()
    }

    #[getter]
    fn class_id(&self) -> usize {
        self.0.class_id
    }

    #[getter]
    fn resolution(&self) -> &'static str {
        match self.0.resolution {
            secam::Resolution::Feature => "feature",
            secam::Resolution::Image => "image",
        }
    }

    fn values(&self) -> Vec<f64> {
        self.0.values().to_vec()
    }

    /// Bilinear (align-corners) upsampling of a feature-resolution map.
    fn upsample(&self, height: usize, width: usize) -> PyResult<CamMap> {
        secam::upsample_to_image(&self.0, height, width).map(CamMap).map_err(py_err)
    }
}

/// Selected superpixels for one class.
#[pyclass(frozen, module = "secam_py")]
struct Explanation(secam::SecamExplanation);

#[pymethods]
impl Explanation {
    #[getter]
    fn class_id(&self) -> usize {
        self.0.class_id
    }

    #[getter]
    fn class_name(&self) -> &str {
        &self.0.class_name
    }

    #[getter]
    fn selected(&self) -> Vec<usize> {
        self.0.selected.clone()
    }

    #[getter]
    fn region_values(&self) -> Vec<f64> {
        self.0.region_values.clone()
    }

    #[getter]
    fn width(&self) -> usize {
        self.0.mask.width()
    }

    #[getter]
    fn height(&self) -> usize {
        self.0.mask.height()
    }

    /// Per-pixel membership in the selected regions, row-major.
    fn mask(&self) -> Vec<bool> {
        self.0.mask.bits().to_vec()
    }

    fn mask_count(&self) -> usize {
        self.0.mask.count()
    }

    fn __repr__(&self) -> String {
        format!("Explanation(class_id={}, selected={:?})", self.0.class_id, self.0.selected)
    }
}

#[pyfunction]
fn load_png(path: PathBuf) -> PyResult<Image> {
    secam::load_png(path).map(Image).map_err(py_err)
}

#[pyfunction]
#[pyo3(signature = (image, k = 49, m = 10.0, max_iters = 10, eps = 1.0, search = "windowed"))]
fn segment(image: &Image, k: usize, m: f64, max_iters: usize, eps: f64, search: &str) -> PyResult<Segmentation> {
    let params = slic_params(k, m, max_iters, eps, search)?;
    params.validate(image.0.width() * image.0.height()).map_err(py_err)?;
    secam::segment(&image.0, &params).map(Segmentation).map_err(py_err)
}

#[pyfunction]
fn read_bundle(path: PathBuf) -> PyResult<Bundle> {
    secam::read_bundle(path).map(Bundle).map_err(py_err)
}

/// Feature-resolution map `sum_k w_k * f_k`.
#[pyfunction]
fn compute_cam(bundle: &Bundle) -> PyResult<CamMap> {
    secam::compute_cam(&bundle.0).map(CamMap).map_err(py_err)
}

/// Image-resolution map as used for explanations (ReLU for spatial weights).
#[pyfunction]
fn image_cam_map(bundle: &Bundle, height: usize, width: usize) -> PyResult<CamMap> {
    image_cam(&bundle.0, height, width).map(CamMap).map_err(py_err)
}

#[pyfunction]
fn class_score(cam: &CamMap) -> PyResult<f64> {
    secam::class_score(&cam.0).map_err(py_err)
}

#[pyfunction]
fn softmax(scores: Vec<f64>) -> PyResult<Vec<f64>> {
    secam::softmax(&scores).map_err(py_err)
}

#[pyfunction]
fn region_average(cam: &CamMap, segmentation: &Segmentation) -> PyResult<Vec<f64>> {
    secam::region_average(&cam.0, &segmentation.0).map_err(py_err)
}

#[pyfunction]
#[pyo3(signature = (values, rule = "top_n", n = 3, t = 0.5))]
fn select_regions(values: Vec<f64>, rule: &str, n: usize, t: f64) -> PyResult<Vec<usize>> {
    secam::select_regions(&values, &parse_rule(rule, n, t)?).map_err(py_err)
}

#[pyfunction]
#[pyo3(signature = (bundle, segmentation, rule = "top_n", n = 3, t = 0.5))]
fn explain(bundle: &Bundle, segmentation: &Segmentation, rule: &str, n: usize, t: f64) -> PyResult<Explanation> {
    secam::explain(&bundle.0, &segmentation.0, parse_rule(rule, n, t)?)
        .map(Explanation)
        .map_err(py_err)
}

/// Segments the bundle's image and explains it in one call.
#[pyfunction]
#[pyo3(signature = (bundle, image = None, k = 49, m = 10.0, rule = "top_n", n = 3, t = 0.5))]
#[allow(clippy::too_many_arguments)]
fn explain_image(
    py: Python<'_>,
    bundle: &Bundle,
    image: Option<&Image>,
    k: usize,
    m: f64,
    rule: &str,
    n: usize,
    t: f64,
) -> PyResult<(Explanation, Segmentation)> {
    let img = match image {
        Some(i) => i.0.clone(),
        None => secam::load_png(&bundle.0.image_path).map_err(py_err)?,
    };
    let params = SlicParams::new(k, m);
    params.validate(img.width() * img.height()).map_err(py_err)?;
    let rule = parse_rule(rule, n, t)?;
    let inputs = &bundle.0;
    let run = py
        .detach(|| run_pipeline(inputs, &img, &params, rule))
        .map_err(py_err)?;
    Ok((Explanation(run.explanation), Segmentation(run.labels)))
}

#[pyfunction]
fn iou(a: (usize, usize, usize, usize), b: (usize, usize, usize, usize)) -> PyResult<f64> {
    Ok(secam::iou(&to_bbox(a)?, &to_bbox(b)?))
}

/// Fraction of the explanation's pixels inside `bbox`.
#[pyfunction]
fn ebpg(explanation: &Explanation, bbox: (usize, usize, usize, usize)) -> PyResult<f64> {
    secam::ebpg(&explanation.0.mask, &to_bbox(bbox)?).map_err(py_err)
}

/// Tightest `(x_min, y_min, x_max, y_max)` box around the explanation mask.
#[pyfunction]
fn bbox_of_mask(explanation: &Explanation) -> PyResult<(usize, usize, usize, usize)> {
    secam::bbox_of_mask(&explanation.0.mask).map(from_bbox).map_err(py_err)
}

#[pymodule]
pub fn secam_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<Image>()?;
    m.add_class::<Segmentation>()?;
    m.add_class::<Bundle>()?;
    m.add_class::<CamMap>()?;
    m.add_class::<Explanation>()?;
    m.add_function(wrap_pyfunction!(load_png, m)?)?;
    m.add_function(wrap_pyfunction!(segment, m)?)?;
    m.add_function(wrap_pyfunction!(read_bundle, m)?)?;
    m.add_function(wrap_pyfunction!(compute_cam, m)?)?;
    m.add_function(wrap_pyfunction!(image_cam_map, m)?)?;
    m.add_function(wrap_pyfunction!(class_score, m)?)?;
    m.add_function(wrap_pyfunction!(softmax, m)?)?;
    m.add_function(wrap_pyfunction!(region_average, m)?)?;
    m.add_function(wrap_pyfunction!(select_regions, m)?)?;
    m.add_function(wrap_pyfunction!(explain, m)?)?;
    m.add_function(wrap_pyfunction!(explain_image, m)?)?;
    m.add_function(wrap_pyfunction!(iou, m)?)?;
    m.add_function(wrap_pyfunction!(ebpg, m)?)?;
    m.add_function(wrap_pyfunction!(bbox_of_mask, m)?)?;
    Ok(())
}
