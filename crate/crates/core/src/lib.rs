//! Region-level explanations for image classifiers.
//!
//! The pipeline combines three independent pieces:
//!
//! * a class activation map computed from exported last-layer feature maps
//!   and class weights (or gradients), see [`cam`];
//! * a SLIC superpixel partition of the input image, see [`slic`];
//! * per-superpixel averaging of the upsampled map and selection of the most
//!   influential regions, see [`explain`].
//!
//! [`metrics`] scores explanations against ground-truth boxes and [`render`]
//! draws them. Feature maps and weights arrive as NPY tensors described by a
//! small JSON manifest ([`tensor_io`]), so no deep-learning framework is
//! needed at runtime.

pub mod cam;
pub mod cli;
pub mod error;
pub mod explain;
pub mod imaging;
pub mod metrics;
pub mod npy;
pub mod render;
pub mod slic;
pub mod tensor_io;

pub use cam::{class_score, compute_cam, relu_inplace, softmax, upsample_to_image, CamMap, Resolution};
pub use error::{Error, Result};
pub use explain::{explain, region_average, select_regions, SecamExplanation, SelectionRule};
pub use imaging::{bilinear_resize, load_png, rgb_to_lab, save_png, srgb_to_lab, BBox, Grid, LabImage, Mask, RgbImage};
pub use metrics::{bbox_of_mask, ebpg, evaluate, evaluate_mask, iou, GroundTruth, MetricReport};
pub use slic::{segment, ClusterCenter, SearchMode, SegmentLabels, SlicParams};
pub use tensor_io::{read_bundle, read_tensor, write_tensor, ExplanationInputs, Tensor, TensorData, WeightMode, WeightSpec};
