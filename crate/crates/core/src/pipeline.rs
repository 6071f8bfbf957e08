//! End-to-end experiment: load, project, degrade, interpolate, reconstruct
//! and score, with per-stage timing and optional PGM/PLY artifacts.

use std::fmt;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::baseline::{upscale_baseline_with, BaselineMethod, UpscaleSpec};
use crate::error::{Error, Result};
use crate::exec::{self, Exec};
use crate::gradient::{upscale_gradient_with, DepthOrder, InterpPolicy};
use crate::kdtree::KdTree;
use crate::lossy::{downsample_ri, lossy_roundtrip, QuantizerSpec};
use crate::metrics::{chamfer_trees, noise_ratio_in, ssim_with, DEFAULT_DELTA};
use crate::pc_io::{filter_by_range, read_kitti_bin, write_ply, PointCloud};
use crate::projection::{
    cloud_to_ri, occupancy, ri_to_cloud, ri_to_cloud_indexed, write_pgm, RangeImage, RiGeometry,
};
use crate::synth::synth_scene;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Method {
    None,
    Baseline(BaselineMethod),
    Gradient,
}

impl Method {
    pub const ALL: [Method; 5] = [
        Method::None,
        Method::Baseline(BaselineMethod::Bilinear),
        Method::Baseline(BaselineMethod::Bicubic),
        Method::Baseline(BaselineMethod::Lanczos3),
        Method::Gradient,
    ];
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Method::None => f.write_str("none"),
            Method::Baseline(b) => write!(f, "{b}"),
            Method::Gradient => f.write_str("gradient"),
        }
    }
}

impl FromStr for Method {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "none" => Ok(Method::None),
            "gradient" | "ours" => Ok(Method::Gradient),
            other => other.parse().map(Method::Baseline),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum InputSource {
    File(PathBuf),
    Synth(u64),
}

impl InputSource {
    fn stem(&self) -> String {
        match self {
            InputSource::File(p) => p
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_else(|| "scan".into()),
            InputSource::Synth(seed) => format!("synth{seed}"),
        }
    }

    pub fn load(&self) -> Result<PointCloud> {
        match self {
            InputSource::File(p) => read_kitti_bin(p),
            InputSource::Synth(seed) => Ok(synth_scene(*seed)),
        }
    }
}

impl fmt::Display for InputSource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            InputSource::File(p) => write!(f, "{}", p.display()),
            InputSource::Synth(seed) => write!(f, "synth:{seed}"),
        }
    }
}

impl FromStr for InputSource {
    type Err = Error;
    /// `synth:<seed>` selects a synthetic scene, anything else is a path.
    fn from_str(s: &str) -> Result<Self> {
        match s.strip_prefix("synth:") {
            Some(seed) => seed
                .parse()
                .map(InputSource::Synth)
                .map_err(|_| Error::invalid(format!("bad synthetic seed in '{s}'"))),
            None => Ok(InputSource::File(PathBuf::from(s))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ReportFormat {
    #[default]
    Json,
    Csv,
}

impl FromStr for ReportFormat {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "json" => Ok(ReportFormat::Json),
            "csv" => Ok(ReportFormat::Csv),
            other => Err(Error::invalid(format!("unknown report format '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub inputs: Vec<InputSource>,
    pub geometry: RiGeometry,
    pub range_min: f32,
    pub range_max: f32,
    pub factor_x: usize,
    pub factor_y: usize,
    pub bits: u32,
    pub method: Method,
    pub order: DepthOrder,
    pub max_fills: Option<usize>,
    pub grad_threshold: f32,
    pub window_w: usize,
    pub window_h: usize,
    pub delta: f64,
    pub output_dir: Option<PathBuf>,
    pub report_format: ReportFormat,
    pub artifacts: bool,
    pub exec: Exec,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            inputs: Vec::new(),
            geometry: RiGeometry::kitti(),
            range_min: 2.0,
            range_max: 120.0,
            factor_x: 2,
            factor_y: 1,
            bits: 12,
            method: Method::Gradient,
            order: DepthOrder::Ascending,
            max_fills: None,
            grad_threshold: InterpPolicy::DEFAULT_THRESHOLD,
            window_w: 32,
            window_h: 4,
            delta: DEFAULT_DELTA,
            output_dir: None,
            report_format: ReportFormat::Json,
            artifacts: true,
            exec: Exec::default(),
        }
    }
}

impl PipelineConfig {
    pub fn quantizer(&self) -> Result<QuantizerSpec> {
        QuantizerSpec::new(self.bits, self.geometry.min_depth(), self.geometry.max_depth())
    }

    pub fn policy(&self) -> Result<InterpPolicy> {
        InterpPolicy::new(self.order, self.max_fills, self.grad_threshold)
    }

    /// Check every component invariant before any scan runs.
    pub fn validate(&self) -> Result<()> {
        let g = &self.geometry;
        if !(self.range_min >= 0.0 && self.range_min < self.range_max) {
            return Err(Error::invalid(format!(
                "range filter needs 0 <= min < max, got [{}, {}]",
                self.range_min, self.range_max
            )));
        }
        if self.factor_x == 0 || self.factor_y == 0 {
            return Err(Error::invalid("degradation factors must be >= 1"));
        }
        if !g.width().is_multiple_of(self.factor_x) || !g.height().is_multiple_of(self.factor_y) {
            return Err(Error::invalid(format!(
                "factors {}x{} do not divide {}x{}",
                self.factor_x,
                self.factor_y,
                g.width(),
                g.height()
            )));
        }
        self.quantizer()?;
        self.policy()?;
        if self.delta.is_nan() || self.delta <= 0.0 {
            return Err(Error::invalid(format!(
                "delta must be positive, got {}",
                self.delta
            )));
        }
        if self.method == Method::Gradient {
            if (self.factor_x, self.factor_y) != (2, 1) {
                return Err(Error::invalid(
                    "gradient interpolation upscales 2x horizontally; use factors 2x1",
                ));
            }
            let (w, h) = (g.width() / 2, g.height());
            if self.window_w < 2 || w % self.window_w != 0 || self.window_h == 0 || h % self.window_h != 0 {
                return Err(Error::invalid(format!(
                    "window {}x{} does not tile the {w}x{h} degraded image",
                    self.window_w, self.window_h
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Load,
    Project,
    Degrade,
    Interpolate,
    Reconstruct,
    Score,
    Write,
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Stage::Load => "load",
            Stage::Project => "project",
            Stage::Degrade => "degrade",
            Stage::Interpolate => "interpolate",
            Stage::Reconstruct => "reconstruct",
            Stage::Score => "score",
            Stage::Write => "write",
        })
    }
}

#[derive(Debug, thiserror::Error)]
#[error("{input}: {stage} stage failed: {source}")]
pub struct ScanError {
    pub input: String,
    pub stage: Stage,
    #[source]
    pub source: Error,
}

/// One flat report row: full configuration echo, scores and timings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScanReport {
    pub input: String,
    pub method: String,
    pub width: usize,
    pub height: usize,
    pub pitch_max: f64,
    pub pitch_min: f64,
    pub min_depth: f32,
    pub max_depth: f32,
    pub range_min: f32,
    pub range_max: f32,
    pub factor_x: usize,
    pub factor_y: usize,
    pub bits: u32,
    pub window_w: usize,
    pub window_h: usize,
    pub order: String,
    pub max_fills: Option<usize>,
    pub grad_threshold: f32,
    pub delta: f64,
    pub input_points: usize,
    pub reference_occupancy: f64,
    pub degraded_occupancy: f64,
    pub output_occupancy: f64,
    pub reconstructed_points: usize,
    pub ssim: f64,
    pub noise_ratio: f64,
    pub chamfer: f64,
    pub densify_count: usize,
    pub noisy_count: usize,
    pub interpolated_count: usize,
    pub t_load_ms: f64,
    pub t_project_ms: f64,
    pub t_degrade_ms: f64,
    pub t_interpolate_ms: f64,
    pub t_reconstruct_ms: f64,
    pub t_score_ms: f64,
    pub t_total_ms: f64,
    pub error: Option<String>,
}

impl ScanReport {
    fn echo(config: &PipelineConfig, input: &str) -> Self {
        let g = &config.geometry;
        Self {
            input: input.to_string(),
            method: config.method.to_string(),
            width: g.width(),
            height: g.height(),
            pitch_max: g.pitch_max(),
            pitch_min: g.pitch_min(),
            min_depth: g.min_depth(),
            max_depth: g.max_depth(),
            range_min: config.range_min,
            range_max: config.range_max,
            factor_x: config.factor_x,
            factor_y: config.factor_y,
            bits: config.bits,
            window_w: config.window_w,
            window_h: config.window_h,
            order: config.order.to_string(),
            max_fills: config.max_fills,
            grad_threshold: config.grad_threshold,
            delta: config.delta,
            input_points: 0,
            reference_occupancy: f64::NAN,
            degraded_occupancy: f64::NAN,
            output_occupancy: f64::NAN,
            reconstructed_points: 0,
            ssim: f64::NAN,
            noise_ratio: f64::NAN,
            chamfer: f64::NAN,
            densify_count: 0,
            noisy_count: 0,
            interpolated_count: 0,
            t_load_ms: 0.0,
            t_project_ms: 0.0,
            t_degrade_ms: 0.0,
            t_interpolate_ms: 0.0,
            t_reconstruct_ms: 0.0,
            t_score_ms: 0.0,
            t_total_ms: 0.0,
            error: None,
        }
    }

    /// Row for a failed scan: config echo plus the diagnostic.
    pub fn failed(config: &PipelineConfig, err: &ScanError) -> Self {
        let mut r = Self::echo(config, &err.input);
        r.error = Some(err.to_string());
        r
    }

    /// The report with all timing fields zeroed, for determinism checks.
    pub fn without_timings(&self) -> Self {
        Self {
            t_load_ms: 0.0,
            t_project_ms: 0.0,
            t_degrade_ms: 0.0,
            t_interpolate_ms: 0.0,
            t_reconstruct_ms: 0.0,
            t_score_ms: 0.0,
            t_total_ms: 0.0,
            ..self.clone()
        }
    }

    pub fn timing_total_excluding_load(&self) -> f64 {
        self.t_project_ms
            + self.t_degrade_ms
            + self.t_interpolate_ms
            + self.t_reconstruct_ms
            + self.t_score_ms
    }
}

/// Everything one scan produced, for callers that want more than the report.
#[derive(Debug, Clone)]
pub struct ScanRun {
    pub report: ScanReport,
    pub reference: RangeImage,
    pub degraded: RangeImage,
    pub output: RangeImage,
    pub reference_cloud: PointCloud,
    pub reconstructed: PointCloud,
    /// Parallel to `reconstructed`: true for points from interpolated pixels.
    pub interpolated: Vec<bool>,
}

/// Reconstruct an upscaled image and tag points whose pixel is not on the
/// source grid (column not a multiple of `factor_x` or row not a multiple
/// of `factor_y`).
pub fn reconstruct_tagged(ri: &RangeImage, factor_x: usize, factor_y: usize) -> (PointCloud, Vec<bool>) {
    let (points, origin) = ri_to_cloud_indexed(ri);
    let tags = origin
        .iter()
        .map(|&(v, u)| u % factor_x != 0 || v % factor_y != 0)
        .collect();
    (
        PointCloud::new(points).expect("pixel-center rays are finite"),
        tags,
    )
}

struct Clock(Instant);

impl Clock {
    fn start() -> Self {
        Clock(Instant::now())
    }
    fn lap(&mut self) -> f64 {
        let now = Instant::now();
        let ms = (now - self.0).as_secs_f64() * 1e3;
        self.0 = now;
        ms
    }
}

/// Run every stage after loading on an in-memory cloud.
pub fn process_cloud(
    config: &PipelineConfig,
    input: &str,
    cloud: &PointCloud,
) -> std::result::Result<ScanRun, ScanError> {
    let fail = |stage| {
        move |source| ScanError {
            input: input.to_string(),
            stage,
            source,
        }
    };
    let exec = config.exec;
    let mut report = ScanReport::echo(config, input);
    report.input_points = cloud.len();
    let mut clock = Clock::start();

    let filtered =
        filter_by_range(cloud, config.range_min, config.range_max).map_err(fail(Stage::Project))?;
    let reference = cloud_to_ri(&filtered, &config.geometry);
    report.t_project_ms = clock.lap();

    let q = config.quantizer().map_err(fail(Stage::Degrade))?;
    let degraded =
        lossy_roundtrip(&reference, config.factor_x, config.factor_y, &q).map_err(fail(Stage::Degrade))?;
    report.t_degrade_ms = clock.lap();

    let output = match config.method {
        Method::None => Ok(degraded.clone()),
        Method::Baseline(m) => UpscaleSpec::new(config.factor_x, config.factor_y, m)
            .and_then(|spec| upscale_baseline_with(&degraded, &spec, exec)),
        Method::Gradient => config
            .policy()
            .and_then(|p| upscale_gradient_with(&degraded, config.window_w, config.window_h, &p, exec)),
    }
    .map_err(fail(Stage::Interpolate))?;
    report.t_interpolate_ms = clock.lap();

    let (reconstructed, interpolated) = match config.method {
        Method::None => {
            let c = ri_to_cloud(&output);
            let n = c.len();
            (c, vec![false; n])
        }
        _ => reconstruct_tagged(&output, config.factor_x, config.factor_y),
    };
    report.t_reconstruct_ms = clock.lap();

    // without upscaling, compare against the reference on the degraded grid
    report.ssim = match config.method {
        Method::None => downsample_ri(&reference, config.factor_x, config.factor_y)
            .and_then(|r| ssim_with(&output, &r, exec)),
        _ => ssim_with(&output, &reference, exec),
    }
    .map_err(fail(Stage::Score))?;
    let reference_cloud = ri_to_cloud(&reference);
    let ref_tree = KdTree::build(&reference_cloud).map_err(fail(Stage::Score))?;
    let interp_points: Vec<[f32; 3]> = reconstructed
        .points()
        .iter()
        .zip(&interpolated)
        .filter_map(|(p, &t)| t.then_some(*p))
        .collect();
    let noise = noise_ratio_in(&ref_tree, &interp_points, config.delta, exec).map_err(fail(Stage::Score))?;
    let out_tree = KdTree::build(&reconstructed).map_err(fail(Stage::Score))?;
    report.chamfer = chamfer_trees(&out_tree, &ref_tree, exec);
    report.noise_ratio = noise.ratio;
    report.noisy_count = noise.noisy_count;
    report.densify_count = noise.densify_count;
    report.interpolated_count = interp_points.len();
    report.reference_occupancy = occupancy(&reference);
    report.degraded_occupancy = occupancy(&degraded);
    report.output_occupancy = occupancy(&output);
    report.reconstructed_points = reconstructed.len();
    report.t_score_ms = clock.lap();
    report.t_total_ms = report.timing_total_excluding_load();

    Ok(ScanRun {
        report,
        reference,
        degraded,
        output,
        reference_cloud,
        reconstructed,
        interpolated,
    })
}

/// Load one input and run it through the pipeline, writing artifacts when
/// configured.
pub fn process_scan(config: &PipelineConfig, input: &InputSource) -> std::result::Result<ScanRun, ScanError> {
    let label = input.to_string();
    let t0 = Instant::now();
    let cloud = input.load().map_err(|source| ScanError {
        input: label.clone(),
        stage: Stage::Load,
        source,
    })?;
    let load_ms = t0.elapsed().as_secs_f64() * 1e3;
    let mut run = process_cloud(config, &label, &cloud)?;
    run.report.t_load_ms = load_ms;
    run.report.t_total_ms += load_ms;
    if config.artifacts {
        if let Some(dir) = &config.output_dir {
            write_artifacts(config, dir, &input.stem(), &run).map_err(|source| ScanError {
                input: label.clone(),
                stage: Stage::Write,
                source,
            })?;
        }
    }
    Ok(run)
}

const SOURCE_COLOR: [u8; 3] = [180, 180, 180];
const INTERP_COLOR: [u8; 3] = [230, 40, 40];

fn write_artifacts(config: &PipelineConfig, dir: &Path, stem: &str, run: &ScanRun) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let method = config.method.to_string();
    write_pgm(&run.reference, dir.join(format!("{stem}_reference.pgm")))?;
    write_pgm(&run.degraded, dir.join(format!("{stem}_degraded.pgm")))?;
    write_pgm(&run.output, dir.join(format!("{stem}_{method}.pgm")))?;
    write_ply(
        &run.reference_cloud,
        dir.join(format!("{stem}_reference.ply")),
        None,
    )?;
    let colors: Vec<[u8; 3]> = run
        .interpolated
        .iter()
        .map(|&t| if t { INTERP_COLOR } else { SOURCE_COLOR })
        .collect();
    write_ply(
        &run.reconstructed,
        dir.join(format!("{stem}_{method}.ply")),
        Some(&colors),
    )
}

/// Run every input; failures are reported per scan and do not stop others.
/// Results come back in input order.
pub fn run_pipeline(config: &PipelineConfig) -> Result<Vec<std::result::Result<ScanReport, ScanError>>> {
    config.validate()?;
    Ok(exec::map_slice(config.exec, &config.inputs, |input| {
        process_scan(config, input).map(|run| run.report)
    }))
}

/// Parameter grid for [`sweep`]. Gradient policy axes only multiply rows of
/// the gradient method; every other method yields one cell.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepGrid {
    pub methods: Vec<Method>,
    pub thresholds: Vec<f32>,
    pub orders: Vec<DepthOrder>,
    pub windows: Vec<(usize, usize)>,
    pub max_fills: Vec<Option<usize>>,
}

impl SweepGrid {
    /// A grid that varies nothing relative to `base`.
    pub fn single(base: &PipelineConfig) -> Self {
        Self {
            methods: vec![base.method],
            thresholds: vec![base.grad_threshold],
            orders: vec![base.order],
            windows: vec![(base.window_w, base.window_h)],
            max_fills: vec![base.max_fills],
        }
    }

    pub fn cells(&self, base: &PipelineConfig) -> Vec<PipelineConfig> {
        let mut out = Vec::new();
        for &method in &self.methods {
            if method != Method::Gradient {
                out.push(PipelineConfig {
                    method,
                    ..base.clone()
                });
                continue;
            }
            for &grad_threshold in &self.thresholds {
                for &order in &self.orders {
                    for &(window_w, window_h) in &self.windows {
                        for &max_fills in &self.max_fills {
                            out.push(PipelineConfig {
                                method,
                                grad_threshold,
                                order,
                                window_w,
                                window_h,
                                max_fills,
                                ..base.clone()
                            });
                        }
                    }
                }
            }
        }
        out
    }
}

/// One row per (input, cell), sorted by input label then cell order. Cells
/// that fail carry the diagnostic in `error`.
pub fn sweep(base: &PipelineConfig, grid: &SweepGrid) -> Vec<ScanReport> {
    let cells = grid.cells(base);
    let mut inputs: Vec<&InputSource> = base.inputs.iter().collect();
    inputs.sort_by_key(|i| i.to_string());
    let mut rows = Vec::new();
    for input in inputs {
        let label = input.to_string();
        let loaded = input.load();
        let cell_rows = exec::map_slice(base.exec, &cells, |cell| {
            let result = match &loaded {
                Err(e) => Err(ScanError {
                    input: label.clone(),
                    stage: Stage::Load,
                    source: Error::InvalidArgument(e.to_string()),
                }),
                Ok(cloud) => cell
                    .validate()
                    .map_err(|source| ScanError {
                        input: label.clone(),
                        stage: Stage::Load,
                        source,
                    })
                    .and_then(|_| process_cloud(cell, &label, cloud)),
            };
            match result {
                Ok(run) => run.report,
                Err(e) => ScanReport::failed(cell, &e),
            }
        });
        rows.extend(cell_rows);
    }
    rows
}

pub fn write_json_reports(reports: &[ScanReport], w: impl Write) -> Result<()> {
    serde_json::to_writer_pretty(w, reports)
        .map_err(|e| Error::Malformed(format!("JSON encoding failed: {e}")))
}

/// CSV with a header row; appendable by writing further rows without one.
pub fn write_csv_reports(reports: &[ScanReport], w: impl Write, header: bool) -> Result<()> {
    let mut wtr = csv::WriterBuilder::new().has_headers(header).from_writer(w);
    for r in reports {
        wtr.serialize(r)
            .map_err(|e| Error::Malformed(format!("CSV encoding failed: {e}")))?;
    }
    wtr.flush().map_err(|e| Error::io("<csv output>", e))
}

/// Write reports to `path` in the given format. CSV appends when the file
/// already exists.
pub fn save_reports(reports: &[ScanReport], path: &Path, format: ReportFormat) -> Result<()> {
    match format {
        ReportFormat::Json => {
            let f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
            write_json_reports(reports, std::io::BufWriter::new(f))
        }
        ReportFormat::Csv => {
            let exists = path.exists() && std::fs::metadata(path).map(|m| m.len() > 0).unwrap_or(false);
            let f = std::fs::OpenOptions::new()
                .create(true)
                .append(true)
                .open(path)
                .map_err(|e| Error::io(path, e))?;
            write_csv_reports(reports, f, !exists)
        }
    }
}
