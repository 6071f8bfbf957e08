//! Range-image-aware 2x horizontal upscaling.
//!
//! The image is tiled into fixed windows. Exploration walks every
//! horizontally adjacent pixel pair inside each window, computes the depth
//! gradient between them and proposes the midpoint as a fill value. A pair
//! is rejected when either side is EMPTY or when the gradient exceeds the
//! policy threshold, i.e. when the two pixels most likely belong to
//! different surfaces. Interpolation then copies every source pixel to the
//! even output column and fills the odd column between two pixels only for
//! accepted pairs, in policy order and up to the per-window budget.
//!
//! Interpolated pixels therefore never bridge an object/empty boundary or a
//! depth discontinuity larger than the threshold, which is what keeps the
//! reconstructed points on real surfaces.

use std::cmp::Ordering;
use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::exec::{self, Exec};
use crate::projection::{RangeImage, EMPTY};

/// Which candidate sites are filled first when the budget is limited.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum DepthOrder {
    /// Nearest surfaces first.
    #[default]
    Ascending,
    /// Farthest surfaces first.
    Descending,
}

impl fmt::Display for DepthOrder {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            DepthOrder::Ascending => "asc",
            DepthOrder::Descending => "desc",
        })
    }
}

impl FromStr for DepthOrder {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "asc" | "ascending" | "ascending_depth" => Ok(DepthOrder::Ascending),
            "desc" | "descending" | "descending_depth" => Ok(DepthOrder::Descending),
            other => Err(Error::invalid(format!("unknown policy order '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InterpPolicy {
    order: DepthOrder,
    max_fills_per_window: Option<usize>,
    gradient_threshold: f32,
}

impl InterpPolicy {
    pub const DEFAULT_THRESHOLD: f32 = 2.5;

    pub fn new(
        order: DepthOrder,
        max_fills_per_window: Option<usize>,
        gradient_threshold: f32,
    ) -> Result<Self> {
        if !(gradient_threshold > 0.0 && gradient_threshold.is_finite()) {
            return Err(Error::invalid(format!(
                "gradient threshold must be positive, got {gradient_threshold}"
            )));
        }
        Ok(Self {
            order,
            max_fills_per_window,
            gradient_threshold,
        })
    }

    pub fn order(&self) -> DepthOrder {
        self.order
    }
    pub fn max_fills_per_window(&self) -> Option<usize> {
        self.max_fills_per_window
    }
    pub fn gradient_threshold(&self) -> f32 {
        self.gradient_threshold
    }

    /// Policy order between two sites: depth key first, then (row, column).
    fn compare(&self, a: &CandidateSite, b: &CandidateSite) -> Ordering {
        let by_depth = a.neighbor_depth.total_cmp(&b.neighbor_depth);
        let by_depth = match self.order {
            DepthOrder::Ascending => by_depth,
            DepthOrder::Descending => by_depth.reverse(),
        };
        by_depth.then((a.row, a.col).cmp(&(b.row, b.col)))
    }
}

impl Default for InterpPolicy {
    fn default() -> Self {
        Self {
            order: DepthOrder::Ascending,
            max_fills_per_window: None,
            gradient_threshold: Self::DEFAULT_THRESHOLD,
        }
    }
}

/// A gap between source pixels `(row, col)` and `(row, col + 1)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CandidateSite {
    pub window_id: usize,
    pub row: usize,
    pub col: usize,
    /// Midpoint depth; EMPTY for invalid sites.
    pub fill_value: f32,
    /// `min(left, right)`, the ordering key.
    pub neighbor_depth: f32,
    pub valid: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct WindowPlan {
    pub window_id: usize,
    /// All sites of the window in policy order.
    pub sites: Vec<CandidateSite>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct InterpolationPlan {
    width: usize,
    height: usize,
    window_w: usize,
    window_h: usize,
    policy: InterpPolicy,
    windows: Vec<WindowPlan>,
}

impl InterpolationPlan {
    pub fn window_size(&self) -> (usize, usize) {
        (self.window_w, self.window_h)
    }
    pub fn source_size(&self) -> (usize, usize) {
        (self.width, self.height)
    }
    pub fn policy(&self) -> &InterpPolicy {
        &self.policy
    }
    pub fn windows(&self) -> &[WindowPlan] {
        &self.windows
    }

    /// Sites that will be filled, per window, in policy order.
    pub fn selected(&self) -> impl Iterator<Item = &CandidateSite> + '_ {
        let budget = self.policy.max_fills_per_window.unwrap_or(usize::MAX);
        self.windows
            .iter()
            .flat_map(move |w| w.sites.iter().filter(|s| s.valid).take(budget))
    }
}

fn check_tiling(width: usize, height: usize, window_w: usize, window_h: usize) -> Result<()> {
    if window_w < 2 || window_h == 0 {
        return Err(Error::invalid(format!(
            "window must be at least 2x1, got {window_w}x{window_h}"
        )));
    }
    if !width.is_multiple_of(window_w) || !height.is_multiple_of(window_h) {
        return Err(Error::invalid(format!(
            "window {window_w}x{window_h} does not tile a {width}x{height} image"
        )));
    }
    Ok(())
}

pub fn explore_windows(
    ri: &RangeImage,
    window_w: usize,
    window_h: usize,
    policy: &InterpPolicy,
) -> Result<InterpolationPlan> {
    explore_windows_with(ri, window_w, window_h, policy, Exec::default())
}

pub fn explore_windows_with(
    ri: &RangeImage,
    window_w: usize,
    window_h: usize,
    policy: &InterpPolicy,
    exec: Exec,
) -> Result<InterpolationPlan> {
    let (width, height) = (ri.width(), ri.height());
    check_tiling(width, height, window_w, window_h)?;
    let per_row = width / window_w;
    let count = per_row * (height / window_h);
    let threshold = policy.gradient_threshold as f64;

    let windows = exec::map_range(exec, count, |window_id| {
        let x0 = (window_id % per_row) * window_w;
        let y0 = (window_id / per_row) * window_h;
        let mut sites = Vec::with_capacity(window_h * (window_w - 1));
        for row in y0..y0 + window_h {
            let px = ri.row(row);
            for col in x0..x0 + window_w - 1 {
                let (left, right) = (px[col], px[col + 1]);
                let gradient = right as f64 - left as f64;
                let valid = left != EMPTY && right != EMPTY && gradient.abs() <= threshold;
                let fill_value = if valid {
                    (left as f64 + gradient / 2.0) as f32
                } else {
                    EMPTY
                };
                sites.push(CandidateSite {
                    window_id,
                    row,
                    col,
                    fill_value,
                    neighbor_depth: left.min(right),
                    valid,
                });
            }
        }
        sites.sort_by(|a, b| policy.compare(a, b));
        WindowPlan { window_id, sites }
    });

    Ok(InterpolationPlan {
        width,
        height,
        window_w,
        window_h,
        policy: *policy,
        windows,
    })
}

/// Double the width: source `(v, u)` goes to `(v, 2u)`, selected sites fill
/// `(v, 2u + 1)`, everything else stays EMPTY.
pub fn interpolate(ri: &RangeImage, plan: &InterpolationPlan) -> Result<RangeImage> {
    interpolate_with(ri, plan, Exec::default())
}

pub fn interpolate_with(ri: &RangeImage, plan: &InterpolationPlan, exec: Exec) -> Result<RangeImage> {
    if (ri.width(), ri.height()) != (plan.width, plan.height) {
        return Err(Error::invalid(format!(
            "plan was built for {}x{}, image is {}x{}",
            plan.width,
            plan.height,
            ri.width(),
            ri.height()
        )));
    }
    check_tiling(plan.width, plan.height, plan.window_w, plan.window_h)?;
    let expected = (plan.width / plan.window_w) * (plan.height / plan.window_h);
    if plan.windows.len() != expected {
        return Err(Error::invalid(format!(
            "plan has {} windows, expected {expected}",
            plan.windows.len()
        )));
    }

    let (w, h) = (ri.width(), ri.height());
    let out_w = 2 * w;
    let geom = ri.geometry().with_size(out_w, h)?;
    let mut depth = vec![EMPTY; out_w * h];
    exec::for_each_chunk_mut(exec, &mut depth, out_w, |v, out| {
        for (u, &d) in ri.row(v).iter().enumerate() {
            out[2 * u] = d;
        }
    });

    let budget = plan.policy.max_fills_per_window.unwrap_or(usize::MAX);
    let fills: Vec<Vec<(usize, usize, f32)>> = exec::map_slice(exec, &plan.windows, |win| {
        win.sites
            .iter()
            .filter(|s| s.valid)
            .take(budget)
            .map(|s| (s.row, s.col, s.fill_value))
            .collect()
    });
    for (row, col, value) in fills.into_iter().flatten() {
        if row >= h || col + 1 >= w {
            return Err(Error::invalid(format!(
                "plan site ({row}, {col}) outside the image"
            )));
        }
        depth[row * out_w + 2 * col + 1] = value;
    }
    RangeImage::from_depth(geom, depth)
}

/// Explore then interpolate.
pub fn upscale_gradient(
    ri: &RangeImage,
    window_w: usize,
    window_h: usize,
    policy: &InterpPolicy,
) -> Result<RangeImage> {
    upscale_gradient_with(ri, window_w, window_h, policy, Exec::default())
}

pub fn upscale_gradient_with(
    ri: &RangeImage,
    window_w: usize,
    window_h: usize,
    policy: &InterpPolicy,
    exec: Exec,
) -> Result<RangeImage> {
    let plan = explore_windows_with(ri, window_w, window_h, policy, exec)?;
    interpolate_with(ri, &plan, exec)
}
