//! Rays, sample grids and the optical properties sampled on them.
//!
//! A grid with `N` interior samples `s_1 < ... < s_N` always carries the two
//! boundary points `s_0 = near` and `s_{N+1} = far`, so it has `N + 2` points
//! and `N + 1` intervals `I_j = [s_j, s_{j+1}]`. Opacity traces hold one value
//! per point, color traces one color per interval.

use rand::distributions::Open01;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

/// Floor applied to interior opacities at ingestion.
pub const OPACITY_FLOOR: f64 = 1e-6;

/// Opacity assigned to the far plane under [`FarPlane::Opaque`].
pub const OPAQUE: f64 = 1e10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RaySegment {
    near: f64,
    far: f64,
}

impl RaySegment {
    pub fn new(near: f64, far: f64) -> Result<Self> {
        if !near.is_finite() || !far.is_finite() {
            return Err(invalid(format!("segment bounds must be finite, got [{near}, {far}]")));
        }
        if near < 0.0 {
            return Err(invalid(format!("near bound must be >= 0, got {near}")));
        }
        if near >= far {
            return Err(invalid(format!("segment requires near < far, got [{near}, {far}]")));
        }
        Ok(Self { near, far })
    }

    pub fn near(&self) -> f64 {
        self.near
    }

    pub fn far(&self) -> f64 {
        self.far
    }

    pub fn length(&self) -> f64 {
        self.far - self.near
    }

    pub fn contains(&self, s: f64) -> bool {
        s >= self.near && s <= self.far
    }
}

/// Strictly increasing sample distances inside a [`RaySegment`].
#[derive(Debug, Clone, PartialEq)]
pub struct SampleGrid {
    segment: RaySegment,
    /// `near, s_1, ..., s_N, far`
    points: Vec<f64>,
}

impl SampleGrid {
    pub fn new(segment: RaySegment, interior: Vec<f64>) -> Result<Self> {
        if interior.is_empty() {
            return Err(invalid("a sample grid needs at least one interior sample"));
        }
        let mut points = Vec::with_capacity(interior.len() + 2);
        points.push(segment.near());
        points.extend(interior);
        points.push(segment.far());
        for (k, w) in points.windows(2).enumerate() {
            if !(w[0] < w[1]) {
                return Err(invalid(format!(
                    "grid points must be strictly increasing: s_{k} = {} vs s_{} = {}",
                    w[0],
                    k + 1,
                    w[1]
                )));
            }
        }
        Ok(Self { segment, points })
    }

    pub fn segment(&self) -> RaySegment {
        self.segment
    }

    /// All points including both boundaries.
    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn interior(&self) -> &[f64] {
        &self.points[1..self.points.len() - 1]
    }

    /// Number of interior samples `N`.
    pub fn len(&self) -> usize {
        self.points.len() - 2
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Number of intervals, `N + 1`.
    pub fn interval_count(&self) -> usize {
        self.points.len() - 1
    }

    pub fn interval(&self, j: usize) -> (f64, f64) {
        (self.points[j], self.points[j + 1])
    }

    pub fn widths(&self) -> Vec<f64> {
        self.points.windows(2).map(|w| w[1] - w[0]).collect()
    }

    pub fn min_gap(&self) -> f64 {
        self.points
            .windows(2)
            .map(|w| w[1] - w[0])
            .fold(f64::INFINITY, f64::min)
    }
}

/// `n` interior samples equally spaced on `(near, far)`.
pub fn make_uniform_grid(segment: RaySegment, n: usize) -> Result<SampleGrid> {
    if n == 0 {
        return Err(invalid("uniform grid needs n >= 1"));
    }
    let step = segment.length() / (n as f64 + 1.0);
    let interior = (1..=n).map(|k| segment.near() + k as f64 * step).collect();
    SampleGrid::new(segment, interior)
}

/// One sample drawn uniformly inside each of `n` equal-width strata.
pub fn make_stratified_grid(segment: RaySegment, n: usize, rng_seed: u64) -> Result<SampleGrid> {
    if n == 0 {
        return Err(invalid("stratified grid needs n >= 1"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let width = segment.length() / n as f64;
    let interior = (0..n)
        .map(|k| {
            let u: f64 = rng.sample(Open01);
            segment.near() + (k as f64 + u) * width
        })
        .collect();
    SampleGrid::new(segment, interior)
}

/// Treatment of the far bound.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FarPlane {
    /// `tau_0 = 0` at near and `tau_{N+1} = OPAQUE` at far; all light that
    /// reaches the last interval terminates there, so interval probabilities
    /// sum to one.
    Opaque,
    /// Boundary values are kept as sampled and nothing is absorbed at the far
    /// bound. Used when comparing against the raw integral.
    Open,
}

/// Opacity values `tau_0, ..., tau_{N+1}` at every grid point.
#[derive(Debug, Clone, PartialEq)]
pub struct OpacityTrace {
    values: Vec<f64>,
    far_plane: FarPlane,
}

impl OpacityTrace {
    /// Wraps raw values, applying the boundary convention of `far_plane`.
    pub fn new(mut values: Vec<f64>, far_plane: FarPlane) -> Result<Self> {
        if values.len() < 3 {
            return Err(invalid(format!(
                "opacity trace needs at least 3 values (near, one sample, far), got {}",
                values.len()
            )));
        }
        if let Some(v) = values.iter().find(|v| !v.is_finite()) {
            return Err(invalid(format!("opacity values must be finite, got {v}")));
        }
        if far_plane == FarPlane::Opaque {
            let last = values.len() - 1;
            values[0] = 0.0;
            values[last] = OPAQUE;
        }
        Ok(Self { values, far_plane })
    }

    /// [`OpacityTrace::new`] followed by [`floor_opacity`] with [`OPACITY_FLOOR`].
    pub fn ingest(values: Vec<f64>, far_plane: FarPlane) -> Result<Self> {
        floor_opacity(&Self::new(values, far_plane)?, OPACITY_FLOOR)
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn interior(&self) -> &[f64] {
        &self.values[1..self.values.len() - 1]
    }

    pub fn far_plane(&self) -> FarPlane {
        self.far_plane
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub(crate) fn check_grid(&self, grid: &SampleGrid) -> Result<()> {
        if self.values.len() != grid.points().len() {
            return Err(invalid(format!(
                "opacity trace has {} values but the grid has {} points",
                self.values.len(),
                grid.points().len()
            )));
        }
        Ok(())
    }

    pub(crate) fn check_nonnegative(&self) -> Result<()> {
        match self.values.iter().position(|&v| v < 0.0) {
            Some(k) => Err(invalid(format!(
                "opacity must be nonnegative, tau_{k} = {}",
                self.values[k]
            ))),
            None => Ok(()),
        }
    }
}

/// Replaces every interior value by `max(value, eps)`. Boundaries are untouched.
pub fn floor_opacity(trace: &OpacityTrace, eps: f64) -> Result<OpacityTrace> {
    if !(eps > 0.0) || !eps.is_finite() {
        return Err(invalid(format!("opacity floor must be positive, got {eps}")));
    }
    let last = trace.values.len() - 1;
    let values = trace
        .values
        .iter()
        .enumerate()
        .map(|(k, &v)| if k == 0 || k == last { v } else { v.max(eps) })
        .collect();
    Ok(OpacityTrace { values, far_plane: trace.far_plane })
}

/// One color per interval, each with the same number of channels.
#[derive(Debug, Clone, PartialEq)]
pub struct ColorTrace {
    channels: usize,
    data: Vec<f64>,
}

impl ColorTrace {
    pub fn new(colors: Vec<Vec<f64>>) -> Result<Self> {
        let channels = colors.first().map(Vec::len).unwrap_or(0);
        if channels == 0 {
            return Err(invalid("color trace needs at least one interval and one channel"));
        }
        let mut data = Vec::with_capacity(colors.len() * channels);
        for (j, c) in colors.iter().enumerate() {
            if c.len() != channels {
                return Err(invalid(format!(
                    "color c_{j} has {} channels, expected {channels}",
                    c.len()
                )));
            }
            if let Some(v) = c.iter().find(|v| !(0.0..=1.0).contains(*v)) {
                return Err(invalid(format!("color channels must lie in [0, 1], got {v}")));
            }
            data.extend_from_slice(c);
        }
        Ok(Self { channels, data })
    }

    /// Single-channel trace.
    pub fn scalar(values: &[f64]) -> Result<Self> {
        Self::new(values.iter().map(|&v| vec![v]).collect())
    }

    /// Every interval gets the same color.
    pub fn uniform(intervals: usize, color: &[f64]) -> Result<Self> {
        Self::new(vec![color.to_vec(); intervals])
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    /// Number of intervals.
    pub fn len(&self) -> usize {
        self.data.len() / self.channels
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn color(&self, j: usize) -> &[f64] {
        &self.data[j * self.channels..(j + 1) * self.channels]
    }

    pub fn channel(&self, ch: usize) -> Vec<f64> {
        self.data.iter().skip(ch).step_by(self.channels).copied().collect()
    }
}

/// Opacity interpolation model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Constant,
    Linear,
    /// Pairs of intervals share one parabola, so the interior count must be odd.
    Quadratic,
}

impl ModelKind {
    pub fn name(self) -> &'static str {
        match self {
            ModelKind::Constant => "constant",
            ModelKind::Linear => "linear",
            ModelKind::Quadratic => "quadratic",
        }
    }

    /// Checks that a grid with `interior` samples can carry this model.
    pub fn check_interior_count(self, interior: usize) -> Result<()> {
        if interior == 0 {
            return Err(invalid("grid needs at least one interior sample"));
        }
        if self == ModelKind::Quadratic && interior.is_multiple_of(2) {
            return Err(invalid(format!(
                "quadratic model needs an odd interior sample count, got {interior}"
            )));
        }
        Ok(())
    }
}

impl std::str::FromStr for ModelKind {
    type Err = crate::Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "constant" | "const" => Ok(ModelKind::Constant),
            "linear" => Ok(ModelKind::Linear),
            "quadratic" => Ok(ModelKind::Quadratic),
            other => Err(invalid(format!("unknown model '{other}'"))),
        }
    }
}
