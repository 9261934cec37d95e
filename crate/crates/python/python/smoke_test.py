"""Smoke test for the secam_py extension module.

Build the extension first, e.g. with maturin (`maturin develop` in
crates/python) or by copying target/release/libsecam_py.so to secam_py.so
somewhere on PYTHONPATH, then run:

    python crates/python/python/smoke_test.py
"""
import math
import os
import sys

import numpy as np

import secam_py as sp

HERE = os.path.dirname(os.path.abspath(__file__))
DATA = os.path.join(HERE, "..", "..", "core", "tests", "data")


def check(cond, msg):
    if not cond:
        print(f"FAIL: {msg}")
        sys.exit(1)
    print(f"ok   {msg}")


def main():
    image = sp.load_png(os.path.join(DATA, "chelsea_224.png"))
    check((image.width, image.height) == (224, 224), "load_png reads the 224x224 fixture")
    check(len(image.pixels()) == 224 * 224 * 3, "pixels() returns interleaved RGB bytes")

    seg = sp.segment(image, k=49, m=10.0)
    labels = np.array(seg.labels()).reshape(224, 224)
    check(40 <= seg.region_count <= 60, f"segment gives {seg.region_count} regions for k=49")
    check(sum(seg.region_sizes()) == 224 * 224, "regions partition the image")
    check(labels.max() + 1 == seg.region_count, "labels are compact")

    bundle = sp.read_bundle(os.path.join(DATA, "gap_2048", "manifest.json"))
    check(bundle.feature_shape == (2048, 7, 7), "read_bundle exposes the feature shape")
    check(bundle.weight_mode == "channel", "GAP bundle uses channel weights")

    feats = np.load(os.path.join(DATA, "gap_2048", "features.npy")).astype(np.float64)
    weights = np.load(os.path.join(DATA, "gap_2048", "weights.npy")).astype(np.float64)
    expected = np.einsum("k,kyx->yx", weights, feats)
    cam = sp.compute_cam(bundle)
    got = np.array(cam.values()).reshape(cam.height, cam.width)
    check(cam.resolution == "feature", "compute_cam returns a feature-resolution map")
    check(np.allclose(got, expected, rtol=1e-9, atol=1e-9), "CAM matches numpy einsum")

    score = sp.class_score(cam)
    logits = np.array(bundle.logits())
    check(math.isclose(score / 49.0, logits[bundle.class_id], rel_tol=1e-5), "class score is 49x the GAP logit")
    probs = sp.softmax(list(logits))
    ref = np.exp(logits - logits.max())
    check(np.allclose(probs, ref / ref.sum()), "softmax matches numpy")

    up = cam.upsample(224, 224)
    check((up.width, up.height, up.resolution) == (224, 224, "image"), "upsample to image resolution")
    averages = sp.region_average(up, seg)
    flat = np.array(up.values())
    sizes = np.array(seg.region_sizes())
    check(math.isclose(float(np.dot(averages, sizes)), float(flat.sum()), rel_tol=1e-9), "weighted-mean identity")

    expl = sp.explain(bundle, seg, rule="top_n", n=3)
    check(len(expl.selected) == 3, "top-3 selects three regions")
    check(expl.selected == sorted(np.argsort(-np.array(averages), kind="stable")[:3].tolist()), "selection matches argsort")
    mask = np.array(expl.mask()).reshape(224, 224)
    check(mask.sum() == expl.mask_count() == sizes[expl.selected].sum(), "mask covers exactly the selected regions")

    ys, xs = np.nonzero(mask)
    box = sp.bbox_of_mask(expl)
    check(box == (xs.min(), ys.min(), xs.max() + 1, ys.max() + 1), "bbox_of_mask matches numpy")
    truth = (40, 20, 190, 190)
    inside = mask[truth[1]:truth[3], truth[0]:truth[2]].sum()
    check(math.isclose(sp.ebpg(expl, truth), inside / mask.sum()), "ebpg matches numpy count")
    check(sp.iou((0, 0, 10, 10), (5, 0, 15, 10)) == 1 / 3, "iou of the one-third overlap case")

    again, seg2 = sp.explain_image(bundle)
    check(again.selected == expl.selected and seg2.labels() == seg.labels(), "explain_image is consistent")

    for bad, exc in [
        (lambda: sp.segment(image, m=25.0), ValueError),
        (lambda: sp.read_bundle("/nonexistent/manifest.json"), OSError),
        (lambda: sp.explain(bundle, seg, rule="threshold", t=0.0), ValueError),
        (lambda: sp.iou((5, 5, 5, 9), (0, 0, 1, 1)), ValueError),
    ]:
        try:
            bad()
        except exc:
            pass
        else:
            check(False, f"expected {exc.__name__}")
    check(True, "invalid inputs raise ValueError / OSError")
    print("all smoke checks passed")


if __name__ == "__main__":
    main()
