//! Command-line front end.
//!
//! Exit codes: 0 success, 1 internal failure, 2 bad usage or bad inputs,
//! 3 nothing to evaluate.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use crate::cam::{class_score, compute_cam, softmax};
use crate::error::Error;
use crate::explain::{explain_cam, image_cam, SelectionRule};
use crate::imaging::{load_mask_png, load_png, save_gray16_png, save_mask_png, save_png, RgbImage};
use crate::metrics::{evaluate_mask, write_csv, GroundTruth, MetricReport};
use crate::npy::{self, NpyData};
use crate::render::{draw_boundaries, overlay_heatmap, render_masked};
use crate::slic::{segment, SearchMode, SegmentLabels, SlicParams, MAX_COMPACTNESS, MIN_COMPACTNESS};
use crate::tensor_io::{read_bundle, ExplanationInputs};

pub const EXIT_OK: i32 = 0;
pub const EXIT_INTERNAL: i32 = 1;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_NO_DATA: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "secam", version, about = "Superpixel-level class activation explanations")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Segment an image into SLIC superpixels.
    Segment(SegmentArgs),
    /// Compute the class activation map of a bundle.
    Cam(CamArgs),
    /// Run the full pipeline and write the explanation.
    Explain(ExplainArgs),
    /// Render a segmentation, heatmap or masked explanation.
    Render(RenderArgs),
    /// Score saved explanations against ground-truth boxes.
    Eval(EvalArgs),
    /// Convert a PASCAL-VOC XML annotation to the ground-truth JSON format.
    Voc2json(VocArgs),
    /// Time the explain pipeline over repeated runs.
    Bench(BenchArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SearchArg {
    Windowed,
    Full,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum RuleArg {
    Topn,
    Threshold,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum StyleArg {
    Boundaries,
    Heatmap,
    Masked,
}

fn parse_compactness(s: &str) -> Result<f64, String> {
    let m: f64 = s.parse().map_err(|_| format!("{s:?} is not a number"))?;
    if (MIN_COMPACTNESS..=MAX_COMPACTNESS).contains(&m) {
        Ok(m)
    } else {
        Err(format!("m must be in [{MIN_COMPACTNESS}, {MAX_COMPACTNESS}]"))
    }
}

fn parse_unit_fraction(s: &str) -> Result<f64, String> {
    let v: f64 = s.parse().map_err(|_| format!("{s:?} is not a number"))?;
    if (0.0..=1.0).contains(&v) {
        Ok(v)
    } else {
        Err("value must be in [0, 1]".into())
    }
}

fn parse_threshold(s: &str) -> Result<f64, String> {
    let v: f64 = s.parse().map_err(|_| format!("{s:?} is not a number"))?;
    if v > 0.0 && v <= 1.0 {
        Ok(v)
    } else {
        Err("threshold must be in (0, 1]".into())
    }
}

#[derive(Debug, Clone, Args)]
pub struct SlicArgs {
    /// Requested number of superpixels.
    #[arg(long, default_value_t = 49, value_parser = clap::value_parser!(u64).range(1..))]
    pub k: u64,
    /// Compactness in [1, 20].
    #[arg(long, default_value_t = 10.0, value_parser = parse_compactness)]
    pub m: f64,
    #[arg(long = "max-iters", default_value_t = 10, value_parser = clap::value_parser!(u64).range(1..))]
    pub max_iters: u64,
    #[arg(long, default_value_t = 1.0)]
    pub eps: f64,
    #[arg(long, value_enum, default_value_t = SearchArg::Windowed)]
    pub search: SearchArg,
}

impl SlicArgs {
    pub fn params(&self) -> SlicParams {
        SlicParams {
            k: self.k as usize,
            m: self.m,
            max_iters: self.max_iters as usize,
            eps: self.eps,
            search_mode: match self.search {
                SearchArg::Windowed => SearchMode::Windowed,
                SearchArg::Full => SearchMode::Full,
            },
        }
    }

    fn tag(&self) -> String {
        format!("k{}_m{}", self.k, self.m)
    }
}

#[derive(Debug, Clone, Args)]
pub struct RuleArgs {
    #[arg(long, value_enum, default_value_t = RuleArg::Topn)]
    pub rule: RuleArg,
    /// Number of regions for `--rule topn`.
    #[arg(long, default_value_t = 3, value_parser = clap::value_parser!(u64).range(1..))]
    pub n: u64,
    /// Fraction of the maximum region value for `--rule threshold`.
    #[arg(long, default_value_t = 0.5, value_parser = parse_threshold)]
    pub t: f64,
}

impl RuleArgs {
    pub fn rule(&self) -> SelectionRule {
        match self.rule {
            RuleArg::Topn => SelectionRule::TopN { n: self.n as usize },
            RuleArg::Threshold => SelectionRule::Threshold { t: self.t },
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct SegmentArgs {
    #[arg(long)]
    pub image: PathBuf,
    #[command(flatten)]
    pub slic: SlicArgs,
    #[arg(long = "out-dir", default_value = ".")]
    pub out_dir: PathBuf,
    #[arg(long)]
    pub timing: bool,
}

#[derive(Debug, Clone, Args)]
pub struct CamArgs {
    #[arg(long)]
    pub bundle: PathBuf,
    /// Overrides the image named in the bundle manifest.
    #[arg(long)]
    pub image: Option<PathBuf>,
    #[arg(long, default_value_t = 0.5, value_parser = parse_unit_fraction)]
    pub alpha: f64,
    #[arg(long = "out-dir", default_value = ".")]
    pub out_dir: PathBuf,
    #[arg(long)]
    pub timing: bool,
}

#[derive(Debug, Clone, Args)]
pub struct ExplainArgs {
    #[arg(long)]
    pub bundle: PathBuf,
    #[arg(long)]
    pub image: Option<PathBuf>,
    #[command(flatten)]
    pub slic: SlicArgs,
    #[command(flatten)]
    pub rule: RuleArgs,
    /// Brightness kept for unselected regions in the masked render.
    #[arg(long, default_value_t = 0.0, value_parser = parse_unit_fraction)]
    pub dim: f64,
    /// Ground truth JSON; when given, metrics are added to the output.
    #[arg(long)]
    pub truth: Option<PathBuf>,
    #[arg(long = "out-dir", default_value = ".")]
    pub out_dir: PathBuf,
    #[arg(long)]
    pub timing: bool,
}

#[derive(Debug, Clone, Args)]
pub struct RenderArgs {
    #[arg(long)]
    pub image: Option<PathBuf>,
    /// Required for the heatmap and masked styles.
    #[arg(long)]
    pub bundle: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = StyleArg::Masked)]
    pub style: StyleArg,
    #[command(flatten)]
    pub slic: SlicArgs,
    #[command(flatten)]
    pub rule: RuleArgs,
    #[arg(long, default_value_t = 0.5, value_parser = parse_unit_fraction)]
    pub alpha: f64,
    #[arg(long, default_value_t = 0.0, value_parser = parse_unit_fraction)]
    pub dim: f64,
    #[arg(long = "out-dir", default_value = ".")]
    pub out_dir: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct EvalArgs {
    /// Directory of explanation JSON files written by `explain`.
    #[arg(long)]
    pub explanations: PathBuf,
    /// Ground-truth JSON file, or a directory of them.
    #[arg(long)]
    pub truth: PathBuf,
    #[arg(long = "out-dir", default_value = ".")]
    pub out_dir: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct VocArgs {
    #[arg(long)]
    pub xml: PathBuf,
    #[arg(long = "class-id")]
    pub class_id: usize,
    /// Keep only objects with this `<name>`.
    #[arg(long)]
    pub name: Option<String>,
    #[arg(long = "out-dir", default_value = ".")]
    pub out_dir: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct BenchArgs {
    #[arg(long)]
    pub bundle: PathBuf,
    #[arg(long)]
    pub image: Option<PathBuf>,
    #[command(flatten)]
    pub slic: SlicArgs,
    #[command(flatten)]
    pub rule: RuleArgs,
    #[arg(long, default_value_t = 5, value_parser = clap::value_parser!(u64).range(1..))]
    pub repeat: u64,
    #[arg(long = "out-dir", default_value = ".")]
    pub out_dir: PathBuf,
}

/// A failure carrying the process exit code.
#[derive(Debug)]
pub struct CliError {
    pub code: i32,
    pub message: String,
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.message)
    }
}

type CliResult<T> = Result<T, CliError>;

trait Classify<T> {
    /// Errors reading or validating user inputs: exit 2.
    fn input(self) -> CliResult<T>;
    /// Everything else: exit 1 unless the error itself is an input error.
    fn internal(self) -> CliResult<T>;
}

impl<T> Classify<T> for crate::Result<T> {
    fn input(self) -> CliResult<T> {
        self.map_err(|e| CliError {
            code: EXIT_USAGE,
            message: e.to_string(),
        })
    }

    fn internal(self) -> CliResult<T> {
        self.map_err(|e| CliError {
            code: if matches!(e, Error::Io { .. }) {
                EXIT_INTERNAL
            } else if e.is_input_error() {
                EXIT_USAGE
            } else {
                EXIT_INTERNAL
            },
            message: e.to_string(),
        })
    }
}

fn internal_msg(message: impl Into<String>) -> CliError {
    CliError {
        code: EXIT_INTERNAL,
        message: message.into(),
    }
}

/// Parses `args` (including the program name) and runs the command.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    match execute(&cli.command) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {}", e.message);
            e.code
        }
    }
}

pub fn execute(command: &Command) -> CliResult<()> {
    match command {
        Command::Segment(a) => cmd_segment(a).map(|_| ()),
        Command::Cam(a) => cmd_cam(a),
        Command::Explain(a) => cmd_explain(a).map(|_| ()),
        Command::Render(a) => cmd_render(a),
        Command::Eval(a) => cmd_eval(a).map(|_| ()),
        Command::Voc2json(a) => cmd_voc2json(a),
        Command::Bench(a) => cmd_bench(a),
    }
}

fn image_stem(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "image".into())
}

fn ensure_dir(dir: &Path) -> CliResult<()> {
    fs::create_dir_all(dir).map_err(|e| internal_msg(format!("cannot create {}: {e}", dir.display())))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> CliResult<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| internal_msg(e.to_string()))?;
    text.push('\n');
    fs::write(path, text).map_err(|e| internal_msg(format!("cannot write {}: {e}", path.display())))
}

fn elapsed_ms(start: Instant) -> f64 {
    start.elapsed().as_secs_f64() * 1e3
}

/// Writes a label map as a 16-bit PNG and an int32 NPY tensor.
pub fn save_labels(labels: &SegmentLabels, png_path: &Path, npy_path: &Path) -> crate::Result<()> {
    if labels.region_count() > u16::MAX as usize + 1 {
        return Err(Error::Unsupported(format!(
            "{} regions do not fit a 16-bit label image",
            labels.region_count()
        )));
    }
    let as_u16: Vec<u16> = labels.labels().iter().map(|&l| l as u16).collect();
    save_gray16_png(labels.width(), labels.height(), &as_u16, png_path)?;
    let as_i32 = labels.labels().iter().map(|&l| l as i32).collect();
    npy::write(npy_path, &[labels.height(), labels.width()], &NpyData::I32(as_i32))
}

/// Files written by `segment`.
#[derive(Debug, Clone)]
pub struct SegmentOutputs {
    pub labels_png: PathBuf,
    pub labels_npy: PathBuf,
    pub boundaries_png: PathBuf,
    pub region_count: usize,
}

pub fn cmd_segment(a: &SegmentArgs) -> CliResult<SegmentOutputs> {
    let image = load_png(&a.image).input()?;
    let params = a.slic.params();
    params.validate(image.width() * image.height()).input()?;
    let start = Instant::now();
    let labels = segment(&image, &params).internal()?;
    let seg_ms = elapsed_ms(start);

    ensure_dir(&a.out_dir)?;
    let base = format!("{}_slic_{}", image_stem(&a.image), a.slic.tag());
    let out = SegmentOutputs {
        labels_png: a.out_dir.join(format!("{base}_labels.png")),
        labels_npy: a.out_dir.join(format!("{base}_labels.npy")),
        boundaries_png: a.out_dir.join(format!("{base}_boundaries.png")),
        region_count: labels.region_count(),
    };
    save_labels(&labels, &out.labels_png, &out.labels_npy).internal()?;
    let drawn = draw_boundaries(&image, &labels, [255, 255, 0]).internal()?;
    save_png(&drawn, &out.boundaries_png).internal()?;
    if a.timing {
        eprintln!("segment: {} regions in {seg_ms:.1} ms", labels.region_count());
    }
    Ok(out)
}

fn load_inputs(bundle: &Path, image: Option<&Path>) -> CliResult<(ExplanationInputs, PathBuf, RgbImage)> {
    let inputs = read_bundle(bundle).input()?;
    let image_path = image.map(Path::to_path_buf).unwrap_or_else(|| inputs.image_path.clone());
    let img = load_png(&image_path).input()?;
    Ok((inputs, image_path, img))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CamSummary {
    pub class_id: usize,
    pub class_name: String,
    pub class_score: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub probability: Option<f64>,
    pub feature_size: [usize; 2],
    pub image_size: [usize; 2],
}

fn cmd_cam(a: &CamArgs) -> CliResult<()> {
    let (inputs, image_path, image) = load_inputs(&a.bundle, a.image.as_deref())?;
    let start = Instant::now();
    let cam = compute_cam(&inputs).internal()?;
    let score = class_score(&cam).internal()?;
    let up = image_cam(&inputs, image.height(), image.width()).internal()?;
    let cam_ms = elapsed_ms(start);
    let probability = match inputs.logits() {
        Some(l) => Some(softmax(&l.to_f64_vec()).internal()?[inputs.class_id]),
        None => None,
    };

    ensure_dir(&a.out_dir)?;
    let base = format!("{}_cam_c{}", image_stem(&image_path), inputs.class_id);
    let as_f32 = |v: &[f64]| NpyData::F32(v.iter().map(|&x| x as f32).collect());
    npy::write(
        &a.out_dir.join(format!("{base}_feature.npy")),
        &[cam.height(), cam.width()],
        &as_f32(cam.values()),
    )
    .internal()?;
    npy::write(
        &a.out_dir.join(format!("{base}_image.npy")),
        &[up.height(), up.width()],
        &as_f32(up.values()),
    )
    .internal()?;
    let overlay = overlay_heatmap(&image, &up, a.alpha).internal()?;
    save_png(&overlay, a.out_dir.join(format!("{base}_heatmap.png"))).internal()?;
    write_json(
        &a.out_dir.join(format!("{base}.json")),
        &CamSummary {
            class_id: inputs.class_id,
            class_name: inputs.class_name.clone(),
            class_score: score,
            probability,
            feature_size: [cam.height(), cam.width()],
            image_size: [up.height(), up.width()],
        },
    )?;
    if a.timing {
        eprintln!("cam: {cam_ms:.3} ms");
    }
    Ok(())
}

/// Wall-clock milliseconds per pipeline stage.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct StageTiming {
    pub segment: f64,
    pub cam: f64,
    pub select: f64,
    pub total: f64,
}

/// The explanation JSON written by `explain` and read back by `eval`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExplanationRecord {
    pub image_id: String,
    pub method: String,
    pub class_id: usize,
    pub class_name: String,
    pub rule: SelectionRule,
    pub slic: SlicParams,
    pub class_score: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub probability: Option<f64>,
    /// Mean activation per region; the index is the region id.
    pub region_values: Vec<f64>,
    pub selected: Vec<usize>,
    /// Relative to the directory holding this record.
    pub mask_path: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub metrics: Option<MetricReport>,
    pub timing_ms: StageTiming,
}

/// In-memory result of one pipeline run.
#[derive(Debug, Clone)]
pub struct PipelineRun {
    pub labels: SegmentLabels,
    pub explanation: crate::explain::SecamExplanation,
    pub class_score: f64,
    pub probability: Option<f64>,
    pub timing: StageTiming,
}

/// Segmentation and activation mapping run on separate threads; neither
/// depends on the other until the averaging step.
pub fn run_pipeline(
    inputs: &ExplanationInputs,
    image: &RgbImage,
    params: &SlicParams,
    rule: SelectionRule,
) -> crate::Result<PipelineRun> {
    let start = Instant::now();
    let (seg, cam) = std::thread::scope(|s| {
        let seg = s.spawn(|| {
            let t = Instant::now();
            segment(image, params).map(|l| (l, elapsed_ms(t)))
        });
        let t = Instant::now();
        let cam = compute_cam(inputs).and_then(|fm| {
            let score = class_score(&fm)?;
            let up = image_cam(inputs, image.height(), image.width())?;
            Ok((score, up, elapsed_ms(t)))
        });
        (seg.join().expect("segmentation thread panicked"), cam)
    });
    let (labels, segment_ms) = seg?;
    let (score, up, cam_ms) = cam?;

    let t = Instant::now();
    let mut explanation = explain_cam(&up, &labels, rule)?;
    explanation.class_name = inputs.class_name.clone();
    let select_ms = elapsed_ms(t);

    let probability = match inputs.logits() {
        Some(l) => Some(softmax(&l.to_f64_vec())?[inputs.class_id]),
        None => None,
    };
    Ok(PipelineRun {
        labels,
        explanation,
        class_score: score,
        probability,
        timing: StageTiming {
            segment: segment_ms,
            cam: cam_ms,
            select: select_ms,
            total: elapsed_ms(start),
        },
    })
}

/// Files and record written by `explain`.
#[derive(Debug, Clone)]
pub struct ExplainOutputs {
    pub record_path: PathBuf,
    pub mask_path: PathBuf,
    pub masked_path: PathBuf,
    pub record: ExplanationRecord,
}

pub fn cmd_explain(a: &ExplainArgs) -> CliResult<ExplainOutputs> {
    let (inputs, image_path, image) = load_inputs(&a.bundle, a.image.as_deref())?;
    let params = a.slic.params();
    params.validate(image.width() * image.height()).input()?;
    let rule = a.rule.rule();
    let truth = a.truth.as_ref().map(GroundTruth::load).transpose().input()?;

    let run = run_pipeline(&inputs, &image, &params, rule).internal()?;

    ensure_dir(&a.out_dir)?;
    let image_id = image_stem(&image_path);
    let method = format!("secam_{}", rule.tag());
    let base = format!("{image_id}_secam_{}_{}", a.slic.tag(), rule.tag());
    let mask_name = format!("{base}_mask.png");
    let out = ExplainOutputs {
        record_path: a.out_dir.join(format!("{base}.json")),
        mask_path: a.out_dir.join(&mask_name),
        masked_path: a.out_dir.join(format!("{base}_masked.png")),
        record: ExplanationRecord {
            image_id,
            method: method.clone(),
            class_id: inputs.class_id,
            class_name: inputs.class_name.clone(),
            rule,
            slic: params,
            class_score: run.class_score,
            probability: run.probability,
            region_values: run.explanation.region_values.clone(),
            selected: run.explanation.selected.clone(),
            mask_path: mask_name,
            metrics: None,
            timing_ms: run.timing,
        },
    };
    let mut record = out.record.clone();
    if let Some(truth) = &truth {
        let mut report = evaluate_mask(&run.explanation.mask, truth, &method, run.explanation.selected.len()).input()?;
        report.runtime_ms = run.timing.total;
        record.metrics = Some(report);
    }

    save_mask_png(&run.explanation.mask, &out.mask_path).internal()?;
    let masked = render_masked(&image, &run.explanation, a.dim).internal()?;
    save_png(&masked, &out.masked_path).internal()?;
    write_json(&out.record_path, &record)?;
    if a.timing {
        let t = run.timing;
        eprintln!(
            "timing: segment {:.1} ms, cam {:.3} ms, average+select {:.3} ms, total {:.1} ms",
            t.segment, t.cam, t.select, t.total
        );
    }
    Ok(ExplainOutputs { record, ..out })
}

fn cmd_render(a: &RenderArgs) -> CliResult<()> {
    let inputs = a.bundle.as_ref().map(read_bundle).transpose().input()?;
    let image_path = match (&a.image, &inputs) {
        (Some(p), _) => p.clone(),
        (None, Some(i)) => i.image_path.clone(),
        (None, None) => {
            return Err(CliError {
                code: EXIT_USAGE,
                message: "render needs --image or --bundle".into(),
            })
        }
    };
    let image = load_png(&image_path).input()?;
    let params = a.slic.params();
    let stem = image_stem(&image_path);
    let need_bundle = || {
        inputs.as_ref().ok_or_else(|| CliError {
            code: EXIT_USAGE,
            message: "this style needs --bundle".into(),
        })
    };
    let (rendered, name) = match a.style {
        StyleArg::Boundaries => {
            params.validate(image.width() * image.height()).input()?;
            let labels = segment(&image, &params).internal()?;
            (
                draw_boundaries(&image, &labels, [255, 255, 0]).internal()?,
                format!("{stem}_slic_{}_boundaries.png", a.slic.tag()),
            )
        }
        StyleArg::Heatmap => {
            let inputs = need_bundle()?;
            let up = image_cam(inputs, image.height(), image.width()).internal()?;
            (
                overlay_heatmap(&image, &up, a.alpha).internal()?,
                format!("{stem}_cam_c{}_alpha{}.png", inputs.class_id, a.alpha),
            )
        }
        StyleArg::Masked => {
            let inputs = need_bundle()?;
            params.validate(image.width() * image.height()).input()?;
            let rule = a.rule.rule();
            let run = run_pipeline(inputs, &image, &params, rule).internal()?;
            (
                render_masked(&image, &run.explanation, a.dim).internal()?,
                format!("{stem}_secam_{}_{}_dim{}.png", a.slic.tag(), rule.tag(), a.dim),
            )
        }
    };
    ensure_dir(&a.out_dir)?;
    save_png(&rendered, a.out_dir.join(name)).internal()
}

fn load_truths(path: &Path) -> CliResult<BTreeMap<String, GroundTruth>> {
    let mut files = Vec::new();
    if path.is_dir() {
        let entries = fs::read_dir(path).map_err(|e| CliError {
            code: EXIT_USAGE,
            message: format!("cannot read {}: {e}", path.display()),
        })?;
        for entry in entries.flatten() {
            let p = entry.path();
            if p.extension().is_some_and(|e| e == "json") {
                files.push(p);
            }
        }
        files.sort();
    } else {
        files.push(path.to_path_buf());
    }
    let mut out = BTreeMap::new();
    for f in files {
        let gt = GroundTruth::load(&f).input()?;
        out.insert(gt.image_id.clone(), gt);
    }
    Ok(out)
}

pub fn cmd_eval(a: &EvalArgs) -> CliResult<Vec<MetricReport>> {
    let truths = load_truths(&a.truth)?;
    let entries = fs::read_dir(&a.explanations).map_err(|e| CliError {
        code: EXIT_USAGE,
        message: format!("cannot read {}: {e}", a.explanations.display()),
    })?;
    let mut paths: Vec<PathBuf> = entries
        .flatten()
        .map(|e| e.path())
        .filter(|p| p.extension().is_some_and(|e| e == "json"))
        .collect();
    paths.sort();

    let mut reports = Vec::new();
    let mut unmatched = Vec::new();
    for p in paths {
        let Ok(text) = fs::read_to_string(&p) else { continue };
        let Ok(record) = serde_json::from_str::<ExplanationRecord>(&text) else {
            continue;
        };
        let Some(truth) = truths.get(&record.image_id) else {
            unmatched.push(record.image_id);
            continue;
        };
        let mask_path = p.parent().unwrap_or(Path::new(".")).join(&record.mask_path);
        let mask = load_mask_png(&mask_path).input()?;
        let mut report = evaluate_mask(&mask, truth, &record.method, record.selected.len()).input()?;
        report.runtime_ms = record.timing_ms.total;
        reports.push(report);
    }
    for id in &unmatched {
        eprintln!("no ground truth for explanation {id:?}");
    }
    if reports.is_empty() {
        return Err(CliError {
            code: EXIT_NO_DATA,
            message: "no explanation matched any ground truth".into(),
        });
    }
    ensure_dir(&a.out_dir)?;
    let csv_path = a.out_dir.join("report.csv");
    let file = fs::File::create(&csv_path)
        .map_err(|e| internal_msg(format!("cannot write {}: {e}", csv_path.display())))?;
    write_csv(file, &reports).internal()?;
    write_json(&a.out_dir.join("report.json"), &reports)?;
    Ok(reports)
}

fn cmd_voc2json(a: &VocArgs) -> CliResult<()> {
    let xml = fs::read_to_string(&a.xml).map_err(|e| CliError {
        code: EXIT_USAGE,
        message: format!("cannot read {}: {e}", a.xml.display()),
    })?;
    let gt = GroundTruth::from_voc_xml(&xml, a.class_id, a.name.as_deref()).input()?;
    ensure_dir(&a.out_dir)?;
    gt.save(a.out_dir.join(format!("{}.json", gt.image_id))).internal()
}

#[derive(Debug, Clone, Serialize)]
struct BenchSummary {
    runs: usize,
    region_count: usize,
    mean_ms: StageTiming,
    max_total_ms: f64,
}

fn cmd_bench(a: &BenchArgs) -> CliResult<()> {
    let (inputs, image_path, image) = load_inputs(&a.bundle, a.image.as_deref())?;
    let params = a.slic.params();
    params.validate(image.width() * image.height()).input()?;
    let rule = a.rule.rule();
    let mut sum = StageTiming::default();
    let mut max_total: f64 = 0.0;
    let mut regions = 0;
    for _ in 0..a.repeat {
        let run = run_pipeline(&inputs, &image, &params, rule).internal()?;
        sum.segment += run.timing.segment;
        sum.cam += run.timing.cam;
        sum.select += run.timing.select;
        sum.total += run.timing.total;
        max_total = max_total.max(run.timing.total);
        regions = run.labels.region_count();
    }
    let n = a.repeat as f64;
    let summary = BenchSummary {
        runs: a.repeat as usize,
        region_count: regions,
        mean_ms: StageTiming {
            segment: sum.segment / n,
            cam: sum.cam / n,
            select: sum.select / n,
            total: sum.total / n,
        },
        max_total_ms: max_total,
    };
    ensure_dir(&a.out_dir)?;
    write_json(&a.out_dir.join(format!("{}_bench.json", image_stem(&image_path))), &summary)?;
    println!(
        "{} runs: segment {:.1} ms, cam {:.3} ms, average+select {:.3} ms, total {:.1} ms (max {:.1} ms)",
        summary.runs,
        summary.mean_ms.segment,
        summary.mean_ms.cam,
        summary.mean_ms.select,
        summary.mean_ms.total,
        max_total
    );
    Ok(())
}
