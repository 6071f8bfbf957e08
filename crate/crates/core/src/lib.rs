//! LiDAR range-image toolkit.
//!
//! Point clouds are projected into range images, degraded the way a lossy
//! range-image codec would degrade them, upscaled back either with standard
//! image kernels or with a gradient-aware interpolator that refuses to
//! blend across object boundaries, and finally scored in 2D (SSIM) and in
//! 3D (noise ratio, chamfer distance) against the undegraded reference.
//!
//! The heavy inner loops (kernel passes, window exploration, SSIM windows,
//! nearest-neighbor queries, per-scan batches) run on rayon when the
//! `parallel` feature is on; see [`Exec`].

pub mod baseline;
pub mod error;
pub mod exec;
pub mod gradient;
pub mod kdtree;
pub mod lossy;
pub mod metrics;
pub mod pc_io;
pub mod pipeline;
pub mod projection;
pub mod synth;

pub use baseline::{kernel_weights, upscale_baseline, upscale_baseline_with, BaselineMethod, UpscaleSpec};
pub use error::{Error, Result};
pub use exec::Exec;
pub use gradient::{
    explore_windows, explore_windows_with, interpolate, interpolate_with, upscale_gradient,
    upscale_gradient_with, CandidateSite, DepthOrder, InterpPolicy, InterpolationPlan, WindowPlan,
};
pub use kdtree::KdTree;
pub use lossy::{downsample_ri, lossy_roundtrip, quantize, QuantizerSpec};
pub use metrics::{
    build_kdtree, chamfer, chamfer_with, noise_ratio, noise_ratio_in, ssim, ssim_with, NoiseStats,
    QualityReport,
};
pub use pc_io::{filter_by_range, range_of, read_kitti_bin, write_kitti_bin, write_ply, PointCloud};
pub use pipeline::{
    process_cloud, process_scan, reconstruct_tagged, run_pipeline, save_reports, sweep, write_csv_reports,
    write_json_reports, InputSource, Method, PipelineConfig, ReportFormat, ScanError, ScanReport, ScanRun,
    Stage, SweepGrid,
};
pub use projection::{
    cloud_to_ri, occupancy, read_pgm, ri_to_cloud, write_pgm, RangeImage, RiGeometry, EMPTY,
};
pub use synth::synth_scene;
