//! NPY and bundle I/O checked against files written by numpy.

mod common;

use std::fs;

use common::data_dir;
use secam::npy::{self, NpyData};
use secam::tensor_io::write_bundle;
use secam::{read_bundle, read_tensor, write_tensor, Error, Tensor, TensorData, WeightMode};

fn fixture(name: &str) -> Vec<u8> {
    fs::read(data_dir().join(name)).unwrap()
}

#[test]
fn encoder_matches_numpy_bytes() {
    let cases = [
        ("f32_2x2.npy", vec![2, 2], NpyData::F32(vec![1.0, 2.0, 3.0, 4.0])),
        ("f64_3.npy", vec![3], NpyData::F64(vec![0.5, -1.25, 1e300])),
        ("u8_2x3.npy", vec![2, 3], NpyData::U8((0..6).collect())),
    ];
    for (name, shape, data) in cases {
        assert_eq!(npy::encode(&shape, &data).unwrap(), fixture(name), "{name}");
    }
}

#[test]
fn reads_numpy_files() {
    let t = read_tensor(data_dir().join("f32_2x2.npy")).unwrap();
    assert_eq!(t.shape(), &[2, 2]);
    assert_eq!(t.data(), &TensorData::F32(vec![1.0, 2.0, 3.0, 4.0]));

    let t = read_tensor(data_dir().join("f64_3.npy")).unwrap();
    assert_eq!(t.data(), &TensorData::F64(vec![0.5, -1.25, 1e300]));

    let t = read_tensor(data_dir().join("u8_2x3.npy")).unwrap();
    assert_eq!(t.shape(), &[2, 3]);
    assert_eq!(t.data(), &TensorData::U8(vec![0, 1, 2, 3, 4, 5]));
}

#[test]
fn fortran_order_and_int64_are_unsupported() {
    assert!(matches!(
        read_tensor(data_dir().join("fortran_2x3.npy")),
        Err(Error::Unsupported(_))
    ));
    assert!(matches!(read_tensor(data_dir().join("i64_2.npy")), Err(Error::Unsupported(_))));
}

#[test]
fn resnet_scale_features_have_expected_size() {
    let path = data_dir().join("gap_2048/features.npy");
    let bytes = fs::metadata(&path).unwrap().len() as usize;
    let header = npy::Header::parse(&fixture("gap_2048/features.npy")).unwrap().1;
    assert_eq!(bytes, header + 2048 * 7 * 7 * 4);
    let t = read_tensor(&path).unwrap();
    assert_eq!(t.shape(), &[2048, 7, 7]);
}

#[test]
fn write_then_read_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("t.npy");
    let t = Tensor::from_f32(vec![3, 7, 7], (0..147).map(|i| (i as f32).sin()).collect()).unwrap();
    write_tensor(&t, &path).unwrap();
    assert_eq!(read_tensor(&path).unwrap(), t);
    let one = Tensor::from_f64(vec![1], vec![0.0]).unwrap();
    write_tensor(&one, &path).unwrap();
    assert_eq!(read_tensor(&path).unwrap(), one);
}

#[test]
fn empty_shapes_are_rejected() {
    assert!(matches!(Tensor::from_f32(vec![], vec![]), Err(Error::Shape(_))));
    assert!(matches!(Tensor::from_f32(vec![0, 3], vec![]), Err(Error::Shape(_))));
    assert!(matches!(Tensor::from_f32(vec![2], vec![1.0]), Err(Error::Shape(_))));
}

#[test]
fn truncated_file_is_a_format_error() {
    let bytes = fixture("f32_2x2.npy");
    assert!(matches!(npy::decode(&bytes[..bytes.len() - 1]), Err(Error::Format(_))));
    assert!(matches!(npy::decode(&bytes[..5]), Err(Error::Format(_))));
}

#[test]
fn committed_bundles_load() {
    let gap = read_bundle(data_dir().join("gap_2048/manifest.json")).unwrap();
    assert_eq!(gap.feature_dims(), (2048, 7, 7));
    assert_eq!(gap.class_name, "tabby");
    assert_eq!(gap.logits().unwrap().len(), 10);
    assert!(gap.image_path.ends_with("chelsea_224.png"));
    assert_eq!(gap.metadata.get("model").map(String::as_str), Some("synthetic-gap"));

    let spatial = read_bundle(data_dir().join("spatial_8/manifest.json")).unwrap();
    assert_eq!(spatial.weights().mode, WeightMode::Spatial);
    assert_eq!(spatial.feature_dims(), (8, 14, 14));
}

fn small_bundle(dir: &std::path::Path, k: usize, weights: usize) -> std::path::PathBuf {
    let features = Tensor::from_f32(vec![k, 7, 7], vec![0.5; k * 49]).unwrap();
    npy::write(&dir.join("f.npy"), features.shape(), &NpyData::F32(vec![0.5; k * 49])).unwrap();
    npy::write(&dir.join("w.npy"), &[weights], &NpyData::F32(vec![1.0; weights])).unwrap();
    let manifest = dir.join("manifest.json");
    fs::write(
        &manifest,
        r#"{"features": "f.npy", "weights": "w.npy", "weight_mode": "channel", "class_id": 0, "image": "x.png"}"#,
    )
    .unwrap();
    manifest
}

#[test]
fn channel_weights_must_match_feature_count() {
    let dir = tempfile::tempdir().unwrap();
    let ok = read_bundle(small_bundle(dir.path(), 4, 4)).unwrap();
    assert_eq!(ok.feature_dims(), (4, 7, 7));
    assert!(matches!(read_bundle(small_bundle(dir.path(), 4, 5)), Err(Error::Shape(_))));
}

#[test]
fn missing_or_malformed_manifest_keys() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = small_bundle(dir.path(), 4, 4);
    let text = fs::read_to_string(&manifest).unwrap();
    let mut v: serde_json::Value = serde_json::from_str(&text).unwrap();
    v.as_object_mut().unwrap().remove("features");
    fs::write(&manifest, v.to_string()).unwrap();
    assert!(matches!(read_bundle(&manifest), Err(Error::Manifest(_))));

    fs::write(&manifest, "[1, 2]").unwrap();
    assert!(matches!(read_bundle(&manifest), Err(Error::Manifest(_))));
    fs::write(
        &manifest,
        r#"{"features": "f.npy", "weights": "w.npy", "weight_mode": "diagonal", "class_id": 0, "image": "x.png"}"#,
    )
    .unwrap();
    assert!(matches!(read_bundle(&manifest), Err(Error::Manifest(_))));
}

#[test]
fn class_id_must_index_logits() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = small_bundle(dir.path(), 2, 2);
    npy::write(&dir.path().join("l.npy"), &[3], &NpyData::F32(vec![0.0; 3])).unwrap();
    let mut v: serde_json::Value = serde_json::from_str(&fs::read_to_string(&manifest).unwrap()).unwrap();
    v["logits"] = "l.npy".into();
    v["class_id"] = 3.into();
    fs::write(&manifest, v.to_string()).unwrap();
    assert!(read_bundle(&manifest).is_err());
    v["class_id"] = 2.into();
    fs::write(&manifest, v.to_string()).unwrap();
    assert_eq!(read_bundle(&manifest).unwrap().class_id, 2);
}

#[test]
fn bundle_round_trip_through_writer() {
    let src = read_bundle(data_dir().join("synthetic_k4/manifest.json")).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let manifest = write_bundle(&src, dir.path().join("copy"), "img.png").unwrap();
    let back = read_bundle(manifest).unwrap();
    assert_eq!(back.features(), src.features());
    assert_eq!(back.weights(), src.weights());
    assert_eq!(back.class_id, 2);
    assert_eq!(back.class_name, "synthetic");
    assert_eq!(back.metadata, src.metadata);
}
