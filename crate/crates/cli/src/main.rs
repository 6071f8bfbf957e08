//! `lidar-ri` command-line front end.
//!
//! Every subcommand accepts `--config FILE`, a plain `key = value` file whose
//! keys are flag names (`grad_threshold = 1.5`, `no_artifacts = true`).
//! Flags given on the command line win over the file.

use std::collections::HashSet;
use std::fs::File;
use std::io::{BufReader, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use lidar_ri::{
    build_kdtree, chamfer_with, cloud_to_ri, filter_by_range, lossy_roundtrip, noise_ratio_in,
    read_kitti_bin, read_pgm, reconstruct_tagged, ri_to_cloud, run_pipeline, save_reports, ssim_with, sweep,
    synth_scene, upscale_baseline_with, upscale_gradient_with, write_csv_reports, write_json_reports,
    write_kitti_bin, write_pgm, write_ply, DepthOrder, Exec, InputSource, InterpPolicy, Method,
    PipelineConfig, PointCloud, QualityReport, QuantizerSpec, RangeImage, ReportFormat, RiGeometry,
    ScanReport, SweepGrid, UpscaleSpec,
};
use ply_rs::parser::Parser as PlyParser;
use ply_rs::ply::{DefaultElement, Property};

#[derive(Parser, Debug)]
#[command(
    name = "lidar-ri",
    version,
    about = "LiDAR range-image degradation, interpolation and scoring"
)]
#[command(args_override_self = true)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Convert between KITTI .bin, PLY and range-image PGM (chosen by extension).
    Convert(ConvertArgs),
    /// Project a scan and apply decimation plus quantization; writes a PGM.
    Degrade(DegradeArgs),
    /// Upscale a degraded range-image PGM.
    Interp(InterpArgs),
    /// Turn a range-image PGM back into a PLY cloud.
    Reconstruct(ReconstructArgs),
    /// Score a candidate range image against a reference; prints JSON.
    Score(ScoreArgs),
    /// Run the full experiment on one or more scans.
    Pipeline(PipelineArgs),
    /// Run a parameter grid and write one CSV row per scan and cell.
    Sweep(SweepArgs),
    /// Write a deterministic synthetic scan as KITTI .bin.
    Synth(SynthArgs),
}

#[derive(Args, Debug, Clone)]
struct GeometryArgs {
    #[arg(long, default_value_t = 2048)]
    width: usize,
    #[arg(long, default_value_t = 64)]
    height: usize,
    /// Top of the vertical field of view, degrees.
    #[arg(long, default_value_t = 2.0, allow_hyphen_values = true)]
    pitch_max: f64,
    /// Bottom of the vertical field of view, degrees.
    #[arg(long, default_value_t = -24.8, allow_hyphen_values = true)]
    pitch_min: f64,
    #[arg(long, default_value_t = 2.0)]
    min_depth: f32,
    #[arg(long, default_value_t = 120.0)]
    max_depth: f32,
}

impl GeometryArgs {
    fn geometry(&self) -> Result<RiGeometry> {
        Ok(RiGeometry::new(
            self.width,
            self.height,
            self.pitch_max,
            self.pitch_min,
            self.min_depth,
            self.max_depth,
        )?)
    }
}

#[derive(Args, Debug, Clone)]
struct LossyArgs {
    #[arg(long, default_value_t = 2.0)]
    range_min: f32,
    #[arg(long, default_value_t = 120.0)]
    range_max: f32,
    #[arg(long, default_value_t = 2)]
    factor_x: usize,
    #[arg(long, default_value_t = 1)]
    factor_y: usize,
    #[arg(long, default_value_t = 12)]
    bits: u32,
}

#[derive(Args, Debug, Clone)]
struct PolicyArgs {
    /// Fill order of candidate sites: asc or desc neighbor depth.
    #[arg(long, default_value = "asc")]
    order: DepthOrder,
    /// Per-window fill budget; unlimited when omitted.
    #[arg(long)]
    max_fills: Option<usize>,
    #[arg(long, default_value_t = InterpPolicy::DEFAULT_THRESHOLD)]
    grad_threshold: f32,
    #[arg(long, default_value_t = 32)]
    window_w: usize,
    #[arg(long, default_value_t = 4)]
    window_h: usize,
}

impl PolicyArgs {
    fn policy(&self) -> Result<InterpPolicy> {
        Ok(InterpPolicy::new(
            self.order,
            self.max_fills,
            self.grad_threshold,
        )?)
    }
}

#[derive(Args, Debug, Clone)]
struct ExecArgs {
    /// sequential or parallel.
    #[arg(long, default_value = "parallel", value_parser = parse_exec)]
    exec: Exec,
}

fn parse_exec(s: &str) -> std::result::Result<Exec, String> {
    match s {
        "sequential" | "seq" => Ok(Exec::Sequential),
        "parallel" | "par" => Ok(Exec::Parallel),
        other => Err(format!("unknown exec mode '{other}' (sequential|parallel)")),
    }
}

#[derive(Args, Debug)]
struct ConvertArgs {
    #[arg(long, short)]
    input: PathBuf,
    #[arg(long, short)]
    output: PathBuf,
    #[command(flatten)]
    geometry: GeometryArgs,
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct DegradeArgs {
    /// KITTI .bin path or `synth:<seed>`.
    #[arg(long, short)]
    input: String,
    #[arg(long, short)]
    output: PathBuf,
    #[command(flatten)]
    geometry: GeometryArgs,
    #[command(flatten)]
    lossy: LossyArgs,
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct InterpArgs {
    #[arg(long, short)]
    input: PathBuf,
    #[arg(long, short)]
    output: PathBuf,
    #[arg(long, default_value = "gradient")]
    method: Method,
    /// Upscale factors for the baseline kernels; gradient is always 2x1.
    #[arg(long, default_value_t = 2)]
    factor_x: usize,
    #[arg(long, default_value_t = 1)]
    factor_y: usize,
    #[command(flatten)]
    policy: PolicyArgs,
    #[command(flatten)]
    geometry: GeometryArgs,
    #[command(flatten)]
    exec: ExecArgs,
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct ReconstructArgs {
    #[arg(long, short)]
    input: PathBuf,
    #[arg(long, short)]
    output: PathBuf,
    /// Color points off the source grid of this upscale (e.g. `--tag-factor-x 2`).
    #[arg(long)]
    tag_factor_x: Option<usize>,
    #[arg(long, default_value_t = 1)]
    tag_factor_y: usize,
    #[command(flatten)]
    geometry: GeometryArgs,
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct ScoreArgs {
    #[arg(long)]
    candidate: PathBuf,
    #[arg(long)]
    reference: PathBuf,
    /// Factors the candidate was upscaled by; decides which pixels count as interpolated.
    #[arg(long, default_value_t = 2)]
    factor_x: usize,
    #[arg(long, default_value_t = 1)]
    factor_y: usize,
    #[arg(long, default_value_t = lidar_ri::metrics::DEFAULT_DELTA)]
    delta: f64,
    #[command(flatten)]
    geometry: GeometryArgs,
    #[command(flatten)]
    exec: ExecArgs,
    #[arg(long, short)]
    output: Option<PathBuf>,
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct PipelineArgs {
    /// KITTI .bin paths or `synth:<seed>`; repeatable.
    #[arg(long = "input", short, required = true, num_args = 1..)]
    inputs: Vec<String>,
    #[arg(long, default_value = "gradient")]
    method: Method,
    #[command(flatten)]
    geometry: GeometryArgs,
    #[command(flatten)]
    lossy: LossyArgs,
    #[command(flatten)]
    policy: PolicyArgs,
    #[arg(long, default_value_t = lidar_ri::metrics::DEFAULT_DELTA)]
    delta: f64,
    /// Directory for PGM/PLY artifacts and the report.
    #[arg(long)]
    output_dir: Option<PathBuf>,
    #[arg(long, default_value = "json")]
    report_format: ReportFormat,
    /// Report file; defaults to `report.<format>` in the output directory, else stdout.
    #[arg(long)]
    report: Option<PathBuf>,
    #[arg(long)]
    no_artifacts: bool,
    #[command(flatten)]
    exec: ExecArgs,
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct SweepArgs {
    #[arg(long = "input", short, required = true, num_args = 1..)]
    inputs: Vec<String>,
    /// Comma-separated methods.
    #[arg(long, value_delimiter = ',', default_value = "bilinear,gradient")]
    methods: Vec<Method>,
    #[arg(long, value_delimiter = ',', default_value = "2.5")]
    thresholds: Vec<f32>,
    #[arg(long, value_delimiter = ',', default_value = "asc")]
    orders: Vec<DepthOrder>,
    /// Comma-separated `WxH` window sizes.
    #[arg(long, value_delimiter = ',', default_value = "32x4", value_parser = parse_window)]
    windows: Vec<(usize, usize)>,
    /// Comma-separated budgets; `none` for unlimited.
    #[arg(long, value_delimiter = ',', default_value = "none", value_parser = parse_budget)]
    max_fills: Vec<Option<usize>>,
    #[command(flatten)]
    geometry: GeometryArgs,
    #[command(flatten)]
    lossy: LossyArgs,
    #[arg(long, default_value_t = lidar_ri::metrics::DEFAULT_DELTA)]
    delta: f64,
    /// CSV file to append to; stdout when omitted.
    #[arg(long)]
    report: Option<PathBuf>,
    #[command(flatten)]
    exec: ExecArgs,
    #[arg(long)]
    config: Option<PathBuf>,
}

fn parse_window(s: &str) -> std::result::Result<(usize, usize), String> {
    let (w, h) = s
        .split_once(['x', 'X'])
        .ok_or_else(|| format!("window '{s}' is not WxH"))?;
    let n = |t: &str| {
        t.trim()
            .parse::<usize>()
            .map_err(|_| format!("window '{s}' is not WxH"))
    };
    Ok((n(w)?, n(h)?))
}

fn parse_budget(s: &str) -> std::result::Result<Option<usize>, String> {
    match s.trim() {
        "none" | "inf" | "" => Ok(None),
        t => t.parse().map(Some).map_err(|_| format!("bad budget '{s}'")),
    }
}

#[derive(Args, Debug)]
struct SynthArgs {
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, short)]
    output: PathBuf,
    #[arg(long)]
    config: Option<PathBuf>,
}

/// Splice `--key=value` pairs from a `--config` file in front of the
/// command-line flags, skipping keys the command line already sets.
fn expand_config(args: Vec<String>) -> Result<Vec<String>> {
    let pos = args
        .iter()
        .position(|a| a == "--config" || a.starts_with("--config="));
    let Some(pos) = pos else {
        return Ok(args);
    };
    let path = match args[pos].strip_prefix("--config=") {
        Some(p) => p.to_string(),
        None => args.get(pos + 1).cloned().context("--config needs a file path")?,
    };
    let text = std::fs::read_to_string(&path).with_context(|| format!("reading config {path}"))?;
    let given: HashSet<&str> = args
        .iter()
        .filter_map(|a| a.strip_prefix("--"))
        .map(|a| a.split('=').next().unwrap_or(a))
        .collect();

    let mut injected = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .with_context(|| format!("{path}:{}: expected key = value", n + 1))?;
        let key = key.trim().replace('_', "-");
        let value = value.trim();
        if key == "config" || given.contains(key.as_str()) {
            continue;
        }
        match value {
            "true" => injected.push(format!("--{key}")),
            "false" => {}
            _ => {
                for v in value.split_whitespace() {
                    injected.push(format!("--{key}={v}"));
                }
            }
        }
    }
    // after the program name and subcommand
    let mut out = args;
    let at = 2.min(out.len());
    out.splice(at..at, injected);
    Ok(out)
}

fn main() -> ExitCode {
    let args = match expand_config(std::env::args().collect()) {
        Ok(a) => a,
        Err(e) => {
            eprintln!("error: {e:#}");
            return ExitCode::from(2);
        }
    };
    let cli = Cli::parse_from(args);
    match dispatch(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {}", describe(&e));
            ExitCode::FAILURE
        }
    }
}

/// The error chain joined by `: `, skipping causes already spelled out by
/// an outer message.
fn describe(e: &anyhow::Error) -> String {
    let mut msg = String::new();
    for cause in e.chain() {
        let text = cause.to_string();
        if !msg.contains(&text) {
            if !msg.is_empty() {
                msg.push_str(": ");
            }
            msg.push_str(&text);
        }
    }
    msg
}

fn dispatch(command: Command) -> Result<ExitCode> {
    match command {
        Command::Convert(a) => convert(a),
        Command::Degrade(a) => degrade(a),
        Command::Interp(a) => interp(a),
        Command::Reconstruct(a) => reconstruct(a),
        Command::Score(a) => score(a),
        Command::Pipeline(a) => pipeline(a),
        Command::Sweep(a) => run_sweep(a),
        Command::Synth(a) => {
            write_kitti_bin(&synth_scene(a.seed), &a.output)?;
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn extension(p: &Path) -> String {
    p.extension()
        .map(|e| e.to_string_lossy().to_ascii_lowercase())
        .unwrap_or_default()
}

fn read_ply_cloud(path: &Path) -> Result<PointCloud> {
    let f = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    let ply = PlyParser::<DefaultElement>::new()
        .read_ply(&mut BufReader::new(f))
        .with_context(|| format!("parsing PLY {}", path.display()))?;
    let vertices = ply.payload.get("vertex").map(Vec::as_slice).unwrap_or_default();
    let scalar = |v: &DefaultElement, k: &str| -> Result<f32> {
        match v.get(k) {
            Some(Property::Float(x)) => Ok(*x),
            Some(Property::Double(x)) => Ok(*x as f32),
            _ => bail!("{}: vertex property '{k}' missing or not float", path.display()),
        }
    };
    let mut points = Vec::with_capacity(vertices.len());
    let mut intensity = Vec::new();
    for v in vertices {
        points.push([scalar(v, "x")?, scalar(v, "y")?, scalar(v, "z")?]);
        if let Ok(i) = scalar(v, "intensity") {
            intensity.push(i);
        }
    }
    let intensity = (intensity.len() == points.len() && !points.is_empty()).then_some(intensity);
    Ok(PointCloud::with_intensity(points, intensity)?)
}

fn convert(a: ConvertArgs) -> Result<ExitCode> {
    let (from, to) = (extension(&a.input), extension(&a.output));
    match (from.as_str(), to.as_str()) {
        ("bin", "ply") => write_ply(&read_kitti_bin(&a.input)?, &a.output, None)?,
        ("ply", "bin") => write_kitti_bin(&read_ply_cloud(&a.input)?, &a.output)?,
        ("bin", "pgm") => write_pgm(
            &cloud_to_ri(&read_kitti_bin(&a.input)?, &a.geometry.geometry()?),
            &a.output,
        )?,
        _ => bail!("unsupported conversion .{from} -> .{to} (bin->ply, ply->bin, bin->pgm)"),
    }
    Ok(ExitCode::SUCCESS)
}

fn load(input: &str) -> Result<PointCloud> {
    Ok(input.parse::<InputSource>()?.load()?)
}

fn degrade(a: DegradeArgs) -> Result<ExitCode> {
    let g = a.geometry.geometry()?;
    let cloud = filter_by_range(&load(&a.input)?, a.lossy.range_min, a.lossy.range_max)?;
    let q = QuantizerSpec::new(a.lossy.bits, g.min_depth(), g.max_depth())?;
    let degraded = lossy_roundtrip(&cloud_to_ri(&cloud, &g), a.lossy.factor_x, a.lossy.factor_y, &q)?;
    write_pgm(&degraded, &a.output)?;
    Ok(ExitCode::SUCCESS)
}

fn upscale(ri: &RangeImage, a: &InterpArgs) -> Result<RangeImage> {
    let exec = a.exec.exec;
    Ok(match a.method {
        Method::None => ri.clone(),
        Method::Baseline(m) => {
            upscale_baseline_with(ri, &UpscaleSpec::new(a.factor_x, a.factor_y, m)?, exec)?
        }
        Method::Gradient => upscale_gradient_with(
            ri,
            a.policy.window_w,
            a.policy.window_h,
            &a.policy.policy()?,
            exec,
        )?,
    })
}

fn interp(a: InterpArgs) -> Result<ExitCode> {
    let ri = read_pgm(&a.input, &a.geometry.geometry()?)?;
    write_pgm(&upscale(&ri, &a)?, &a.output)?;
    Ok(ExitCode::SUCCESS)
}

const SOURCE_COLOR: [u8; 3] = [180, 180, 180];
const INTERP_COLOR: [u8; 3] = [230, 40, 40];

fn reconstruct(a: ReconstructArgs) -> Result<ExitCode> {
    let ri = read_pgm(&a.input, &a.geometry.geometry()?)?;
    match a.tag_factor_x {
        None => write_ply(&ri_to_cloud(&ri), &a.output, None)?,
        Some(fx) => {
            let (cloud, tags) = reconstruct_tagged(&ri, fx.max(1), a.tag_factor_y.max(1));
            let colors: Vec<[u8; 3]> = tags
                .iter()
                .map(|&t| if t { INTERP_COLOR } else { SOURCE_COLOR })
                .collect();
            write_ply(&cloud, &a.output, Some(&colors))?;
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn score(a: ScoreArgs) -> Result<ExitCode> {
    let g = a.geometry.geometry()?;
    let exec = a.exec.exec;
    let candidate = read_pgm(&a.candidate, &g)?;
    let reference = read_pgm(&a.reference, &g)?;
    let (cloud, tags) = reconstruct_tagged(&candidate, a.factor_x.max(1), a.factor_y.max(1));
    let reference_cloud = ri_to_cloud(&reference);
    let tree = build_kdtree(&reference_cloud)?;
    let interp: Vec<[f32; 3]> = cloud
        .points()
        .iter()
        .zip(&tags)
        .filter_map(|(p, &t)| t.then_some(*p))
        .collect();
    let noise = noise_ratio_in(&tree, &interp, a.delta, exec)?;
    let report = QualityReport {
        ssim: ssim_with(&candidate, &reference, exec)?,
        noise_ratio: noise.ratio,
        chamfer: chamfer_with(&cloud, &reference_cloud, exec)?,
        densify_count: noise.densify_count,
        noisy_count: noise.noisy_count,
        interpolated_count: interp.len(),
    };
    let json = serde_json::to_string_pretty(&report)?;
    match a.output {
        Some(p) => std::fs::write(&p, json + "\n").with_context(|| format!("writing {}", p.display()))?,
        None => println!("{json}"),
    }
    Ok(ExitCode::SUCCESS)
}

fn inputs(raw: &[String]) -> Result<Vec<InputSource>> {
    raw.iter().map(|s| Ok(s.parse()?)).collect()
}

fn base_config(
    raw_inputs: &[String],
    geometry: &GeometryArgs,
    lossy: &LossyArgs,
    delta: f64,
    exec: Exec,
) -> Result<PipelineConfig> {
    Ok(PipelineConfig {
        inputs: inputs(raw_inputs)?,
        geometry: geometry.geometry()?,
        range_min: lossy.range_min,
        range_max: lossy.range_max,
        factor_x: lossy.factor_x,
        factor_y: lossy.factor_y,
        bits: lossy.bits,
        delta,
        exec,
        ..PipelineConfig::default()
    })
}

fn write_reports(reports: &[ScanReport], path: Option<&Path>, format: ReportFormat) -> Result<()> {
    match path {
        Some(p) => save_reports(reports, p, format)?,
        None => {
            let out = std::io::stdout().lock();
            match format {
                ReportFormat::Json => write_json_reports(reports, out)?,
                ReportFormat::Csv => write_csv_reports(reports, out, true)?,
            }
            println!();
        }
    }
    Ok(())
}

fn pipeline(a: PipelineArgs) -> Result<ExitCode> {
    let mut config = base_config(&a.inputs, &a.geometry, &a.lossy, a.delta, a.exec.exec)?;
    config.method = a.method;
    config.order = a.policy.order;
    config.max_fills = a.policy.max_fills;
    config.grad_threshold = a.policy.grad_threshold;
    config.window_w = a.policy.window_w;
    config.window_h = a.policy.window_h;
    config.output_dir = a.output_dir.clone();
    config.report_format = a.report_format;
    config.artifacts = !a.no_artifacts;

    let mut reports = Vec::new();
    let mut failed = false;
    for result in run_pipeline(&config)? {
        match result {
            Ok(r) => reports.push(r),
            Err(e) => {
                eprintln!("error: {e}");
                reports.push(ScanReport::failed(&config, &e));
                failed = true;
            }
        }
    }
    reports.sort_by(|x, y| x.input.cmp(&y.input));

    let ext = match a.report_format {
        ReportFormat::Json => "json",
        ReportFormat::Csv => "csv",
    };
    let path = a
        .report
        .clone()
        .or_else(|| a.output_dir.as_ref().map(|d| d.join(format!("report.{ext}"))));
    if let Some(dir) = &a.output_dir {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    write_reports(&reports, path.as_deref(), a.report_format)?;
    if let Some(p) = &path {
        let mut err = std::io::stderr().lock();
        writeln!(err, "wrote {} report(s) to {}", reports.len(), p.display())?;
    }
    Ok(if failed {
        ExitCode::FAILURE
    } else {
        ExitCode::SUCCESS
    })
}

fn run_sweep(a: SweepArgs) -> Result<ExitCode> {
    let config = base_config(&a.inputs, &a.geometry, &a.lossy, a.delta, a.exec.exec)?;
    let grid = SweepGrid {
        methods: a.methods.clone(),
        thresholds: a.thresholds.clone(),
        orders: a.orders.clone(),
        windows: a.windows.clone(),
        max_fills: a.max_fills.clone(),
    };
    let rows = sweep(
        &PipelineConfig {
            artifacts: false,
            ..config
        },
        &grid,
    );
    let failures = rows.iter().filter(|r| r.error.is_some()).count();
    for r in rows.iter().filter(|r| r.error.is_some()) {
        eprintln!("error: {}", r.error.as_deref().unwrap_or_default());
    }
    write_reports(&rows, a.report.as_deref(), ReportFormat::Csv)?;
    Ok(if failures == rows.len() && !rows.is_empty() {
        ExitCode::FAILURE
    } else {
        ExitCode::SUCCESS
    })
}
