//! Scoring explanations against human-annotated boxes.
//!
//! IOU compares the tight box around the explanation mask with the best
//! matching ground-truth box. EBPG (energy-based pointing game) works on the
//! raw mask: the fraction of explanation pixels that fall inside the ground
//! truth (the union of all class boxes).

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::explain::SecamExplanation;
use crate::imaging::{BBox, Mask};

/// Ground-truth boxes for one image.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub image_id: String,
    pub class_id: usize,
    pub boxes: Vec<BBox>,
}

impl GroundTruth {
    pub fn new(image_id: impl Into<String>, class_id: usize, boxes: Vec<BBox>) -> Result<Self> {
        if boxes.is_empty() {
            return Err(Error::Argument("ground truth needs at least one box".into()));
        }
        Ok(GroundTruth {
            image_id: image_id.into(),
            class_id,
            boxes,
        })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let gt: GroundTruth = serde_json::from_str(&text)
            .map_err(|e| Error::Format(format!("{}: {e}", path.display())))?;
        GroundTruth::new(gt.image_id, gt.class_id, gt.boxes)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let text = serde_json::to_string_pretty(self).expect("ground truth serializes");
        fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    /// Reads a PASCAL-VOC style annotation. VOC coordinates are 1-based and
    /// inclusive; they are converted to 0-based half-open boxes. When
    /// `object_name` is given only objects with that `<name>` are kept.
    pub fn from_voc_xml(xml: &str, class_id: usize, object_name: Option<&str>) -> Result<Self> {
        let doc = roxmltree::Document::parse(xml).map_err(|e| Error::Format(format!("VOC XML: {e}")))?;
        let root = doc.root_element();
        let child_text = |node: roxmltree::Node, tag: &str| {
            node.children()
                .find(|c| c.has_tag_name(tag))
                .and_then(|c| c.text())
                .map(str::trim)
                .map(str::to_string)
        };
        let image_id = child_text(root, "filename")
            .map(|f| {
                Path::new(&f)
                    .file_stem()
                    .map(|s| s.to_string_lossy().into_owned())
                    .unwrap_or(f)
            })
            .ok_or_else(|| Error::Format("VOC XML lacks <filename>".into()))?;

        let mut boxes = Vec::new();
        for obj in root.children().filter(|c| c.has_tag_name("object")) {
            if let Some(want) = object_name {
                if child_text(obj, "name").as_deref() != Some(want) {
                    continue;
                }
            }
            let bnd = obj
                .children()
                .find(|c| c.has_tag_name("bndbox"))
                .ok_or_else(|| Error::Format("object without <bndbox>".into()))?;
            let coord = |tag: &str| -> Result<usize> {
                let text = child_text(bnd, tag)
                    .ok_or_else(|| Error::Format(format!("<bndbox> lacks <{tag}>")))?;
                let v: f64 = text
                    .parse()
                    .map_err(|_| Error::Format(format!("<{tag}> is not a number: {text:?}")))?;
                if v < 0.0 {
                    return Err(Error::Format(format!("<{tag}> is negative")));
                }
                Ok(v.round() as usize)
            };
            boxes.push(BBox::new(
                coord("xmin")?.saturating_sub(1),
                coord("ymin")?.saturating_sub(1),
                coord("xmax")?,
                coord("ymax")?,
            )?);
        }
        GroundTruth::new(image_id, class_id, boxes)
    }
}

/// Tightest box around the set pixels of `mask`.
pub fn bbox_of_mask(mask: &Mask) -> Result<BBox> {
    let (w, h) = (mask.width(), mask.height());
    let (mut x0, mut y0, mut x1, mut y1) = (usize::MAX, usize::MAX, 0, 0);
    for y in 0..h {
        for x in 0..w {
            if mask.get(x, y) {
                x0 = x0.min(x);
                y0 = y0.min(y);
                x1 = x1.max(x + 1);
                y1 = y1.max(y + 1);
            }
        }
    }
    if x0 == usize::MAX {
        return Err(Error::EmptyMask);
    }
    BBox::new(x0, y0, x1, y1)
}

pub fn intersection_area(a: &BBox, b: &BBox) -> usize {
    let w = a.x_max.min(b.x_max).saturating_sub(a.x_min.max(b.x_min));
    let h = a.y_max.min(b.y_max).saturating_sub(a.y_min.max(b.y_min));
    w * h
}

/// Intersection over union of two boxes.
pub fn iou(a: &BBox, b: &BBox) -> f64 {
    let inter = intersection_area(a, b);
    let union = a.area() + b.area() - inter;
    inter as f64 / union as f64
}

/// Pixel counts behind an EBPG score.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EbpgCounts {
    pub inside: usize,
    pub total: usize,
}

impl EbpgCounts {
    pub fn score(&self) -> f64 {
        self.inside as f64 / self.total as f64
    }
}

/// Counts explanation pixels, and those lying in at least one of `truth`.
pub fn ebpg_counts(explanation: &Mask, truth: &[BBox]) -> Result<EbpgCounts> {
    let w = explanation.width();
    let mut inside = 0;
    let mut total = 0;
    for (i, _) in explanation.bits().iter().enumerate().filter(|(_, &b)| b) {
        total += 1;
        let (x, y) = (i % w, i / w);
        if truth.iter().any(|g| g.contains(x, y)) {
            inside += 1;
        }
    }
    if total == 0 {
        return Err(Error::EmptyMask);
    }
    Ok(EbpgCounts { inside, total })
}

/// Energy-based pointing game: share of explanation pixels inside `truth`.
pub fn ebpg(explanation: &Mask, truth: &BBox) -> Result<f64> {
    ebpg_counts(explanation, std::slice::from_ref(truth)).map(|c| c.score())
}

/// EBPG for an explanation given as a box rather than a mask.
pub fn ebpg_box(explanation: &BBox, truth: &BBox) -> f64 {
    intersection_area(explanation, truth) as f64 / explanation.area() as f64
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub image_id: String,
    pub method: String,
    pub iou: f64,
    pub ebpg: f64,
    pub explanation_box: BBox,
    pub matched_box: BBox,
    pub selected_regions: usize,
    pub selected_pixels: usize,
    pub runtime_ms: f64,
}

/// Column order of the CSV report.
pub const CSV_HEADER: [&str; 5] = ["image_id", "method", "iou", "ebpg", "runtime_ms"];

impl MetricReport {
    pub fn csv_row(&self) -> [String; 5] {
        [
            self.image_id.clone(),
            self.method.clone(),
            self.iou.to_string(),
            self.ebpg.to_string(),
            format!("{:.3}", self.runtime_ms),
        ]
    }
}

/// Writes reports as CSV with the fixed [`CSV_HEADER`] columns.
pub fn write_csv<W: std::io::Write>(out: W, reports: &[MetricReport]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let to_err = |e: csv::Error| Error::Format(format!("csv: {e}"));
    w.write_record(CSV_HEADER).map_err(to_err)?;
    for r in reports {
        w.write_record(r.csv_row()).map_err(to_err)?;
    }
    w.flush().map_err(|e| Error::Format(format!("csv: {e}")))
}

/// Scores an explanation: IOU against the best-overlapping truth box, EBPG
/// against the union of all truth boxes.
pub fn evaluate(explanation: &SecamExplanation, truth: &GroundTruth) -> Result<MetricReport> {
    evaluate_mask(
        &explanation.mask,
        truth,
        &format!("secam_{}", explanation.rule.tag()),
        explanation.selected.len(),
    )
}

/// [`evaluate`] for a bare mask, e.g. one read back from disk.
pub fn evaluate_mask(mask: &Mask, truth: &GroundTruth, method: &str, selected_regions: usize) -> Result<MetricReport> {
    if let Some(b) = truth
        .boxes
        .iter()
        .find(|b| !b.fits_within(mask.width(), mask.height()))
    {
        return Err(Error::Shape(format!(
            "truth box {b:?} exceeds the {}x{} image",
            mask.width(),
            mask.height()
        )));
    }
    let s = bbox_of_mask(mask)?;
    let (matched, best) = truth
        .boxes
        .iter()
        .map(|g| (*g, iou(&s, g)))
        .fold(None, |acc: Option<(BBox, f64)>, (g, v)| match acc {
            Some((_, bv)) if bv >= v => acc,
            _ => Some((g, v)),
        })
        .expect("ground truth has at least one box");
    let counts = ebpg_counts(mask, &truth.boxes)?;
    Ok(MetricReport {
        image_id: truth.image_id.clone(),
        method: method.to_string(),
        iou: best,
        ebpg: counts.score(),
        explanation_box: s,
        matched_box: matched,
        selected_regions,
        selected_pixels: counts.total,
        runtime_ms: 0.0,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::explain::SelectionRule;

    fn bb(a: usize, b: usize, c: usize, d: usize) -> BBox {
        BBox::new(a, b, c, d).unwrap()
    }

    fn mask_with(w: usize, h: usize, on: &[(usize, usize)]) -> Mask {
        let mut bits = vec![false; w * h];
        for &(x, y) in on {
            bits[y * w + x] = true;
        }
        Mask::new(w, h, bits).unwrap()
    }

    #[test]
    fn bbox_of_mask_cases() {
        assert_eq!(bbox_of_mask(&mask_with(10, 10, &[(3, 5)])).unwrap(), bb(3, 5, 4, 6));
        assert_eq!(
            bbox_of_mask(&Mask::new(10, 10, vec![true; 100]).unwrap()).unwrap(),
            bb(0, 0, 10, 10)
        );
        assert_eq!(bbox_of_mask(&mask_with(10, 10, &[(0, 0), (9, 9)])).unwrap(), bb(0, 0, 10, 10));
        assert!(matches!(bbox_of_mask(&mask_with(4, 4, &[])), Err(Error::EmptyMask)));
    }

    #[test]
    fn iou_cases() {
        let a = bb(0, 0, 10, 10);
        assert_eq!(iou(&a, &a), 1.0);
        assert_eq!(iou(&a, &bb(20, 20, 30, 30)), 0.0);
        assert_eq!(iou(&a, &bb(10, 0, 20, 10)), 0.0);
        assert_eq!(iou(&a, &bb(5, 0, 15, 10)), 1.0 / 3.0);
    }

    #[test]
    fn ebpg_cases() {
        let g = bb(2, 2, 8, 8);
        assert_eq!(ebpg(&mask_with(10, 10, &[(3, 3), (4, 4)]), &g).unwrap(), 1.0);
        assert_eq!(ebpg(&mask_with(10, 10, &[(0, 0), (9, 9)]), &g).unwrap(), 0.0);
        assert!(matches!(ebpg(&mask_with(10, 10, &[]), &g), Err(Error::EmptyMask)));

        // 100 explanation pixels (a 20x5 strip), 75 of them inside G.
        let strip = Mask::from_bbox(30, 10, &bb(0, 0, 20, 5)).unwrap();
        let c = ebpg_counts(&strip, &[bb(0, 0, 15, 8)]).unwrap();
        assert_eq!((c.inside, c.total), (75, 100));
        assert_eq!(c.score(), 0.75);
    }

    #[test]
    fn ebpg_on_boxes() {
        assert_eq!(ebpg_box(&bb(2, 2, 4, 4), &bb(0, 0, 10, 10)), 1.0);
        assert_eq!(ebpg_box(&bb(0, 0, 4, 4), &bb(2, 0, 10, 10)), 0.5);
    }

    fn explanation_for(mask: Mask) -> SecamExplanation {
        SecamExplanation {
            class_id: 0,
            class_name: String::new(),
            rule: SelectionRule::TopN { n: 1 },
            region_values: vec![1.0],
            selected: vec![0],
            mask,
        }
    }

    #[test]
    fn evaluate_exact_and_half() {
        let g = bb(2, 4, 12, 14);
        let truth = GroundTruth::new("img", 0, vec![g]).unwrap();
        let exact = evaluate(&explanation_for(Mask::from_bbox(20, 20, &g).unwrap()), &truth).unwrap();
        assert_eq!((exact.iou, exact.ebpg), (1.0, 1.0));
        let half = evaluate(&explanation_for(Mask::from_bbox(20, 20, &bb(2, 4, 12, 9)).unwrap()), &truth).unwrap();
        assert_eq!((half.iou, half.ebpg), (0.5, 1.0));
        assert_eq!(half.method, "secam_top1");
    }

    #[test]
    fn evaluate_picks_best_box_and_union() {
        let truth = GroundTruth::new("img", 0, vec![bb(0, 0, 2, 2), bb(5, 5, 10, 10)]).unwrap();
        let mask = Mask::from_bbox(10, 10, &bb(5, 5, 10, 10)).unwrap();
        let r = evaluate(&explanation_for(mask), &truth).unwrap();
        assert_eq!(r.iou, 1.0);
        assert_eq!(r.matched_box, bb(5, 5, 10, 10));
        let too_big = GroundTruth::new("img", 0, vec![bb(0, 0, 11, 2)]).unwrap();
        let mask = Mask::from_bbox(10, 10, &bb(5, 5, 10, 10)).unwrap();
        assert!(matches!(evaluate(&explanation_for(mask), &too_big), Err(Error::Shape(_))));
    }

    #[test]
    fn voc_conversion() {
        let xml = r#"<annotation>
            <filename>n01833805_1411.JPEG</filename>
            <object><name>n01833805</name>
              <bndbox><xmin>11</xmin><ymin>21</ymin><xmax>100</xmax><ymax>150</ymax></bndbox>
            </object>
            <object><name>other</name>
              <bndbox><xmin>1</xmin><ymin>1</ymin><xmax>5</xmax><ymax>5</ymax></bndbox>
            </object>
        </annotation>"#;
        let gt = GroundTruth::from_voc_xml(xml, 94, Some("n01833805")).unwrap();
        assert_eq!(gt.image_id, "n01833805_1411");
        assert_eq!(gt.boxes, vec![bb(10, 20, 100, 150)]);
        let all = GroundTruth::from_voc_xml(xml, 94, None).unwrap();
        assert_eq!(all.boxes.len(), 2);
        assert!(GroundTruth::from_voc_xml(xml, 94, Some("absent")).is_err());
        assert!(GroundTruth::from_voc_xml("<annotation>", 0, None).is_err());
    }

    #[test]
    fn truth_json_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("t.json");
        let gt = GroundTruth::new("a", 3, vec![bb(1, 2, 3, 4)]).unwrap();
        gt.save(&p).unwrap();
        assert_eq!(GroundTruth::load(&p).unwrap(), gt);
        std::fs::write(&p, r#"{"image_id":"a","class_id":1,"boxes":[]}"#).unwrap();
        assert!(GroundTruth::load(&p).is_err());
    }

    #[test]
    fn csv_columns() {
        let mut buf = Vec::new();
        write_csv(&mut buf, &[]).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "image_id,method,iou,ebpg,runtime_ms\n");
    }
}
