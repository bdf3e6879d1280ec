//! Closed-form 1D opacity and color profiles along a ray, ray rigs that
//! generate families of such profiles, and the TOML scene file format.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::ray::{ColorTrace, FarPlane, OpacityTrace, RaySegment, SampleGrid};

/// Opacity profile along the ray.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FieldKind {
    /// `tau` on the closed interval `[start, end]`, zero elsewhere.
    ConstantSlab { tau: f64, start: f64, end: f64 },
    /// Linear from `tau_start` at `start` to `tau_end` at `end`, zero elsewhere.
    LinearRamp { start: f64, end: f64, tau_start: f64, tau_end: f64 },
    /// `amplitude * exp(-(s - center)^2 / (2 width^2))`.
    GaussianBump { amplitude: f64, center: f64, width: f64 },
    /// `amplitude / (1 + exp(-steepness (s - center)))`.
    LogisticStep { amplitude: f64, steepness: f64, center: f64 },
    /// Values at knots, interpolated linearly or held from the left knot.
    /// Zero outside `[knots[0], knots[last]]`.
    Tabulated { knots: Vec<f64>, values: Vec<f64>, interpolation: Interpolation },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Interpolation {
    Linear,
    Step,
}

/// Color profile along the ray. Every color is a vector with one entry per
/// channel, each in `[0, 1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ColorProfile {
    Uniform { value: Vec<f64> },
    /// `values[i]` holds on `[breaks[i-1], breaks[i])`; one more value than
    /// breaks.
    Piecewise { breaks: Vec<f64>, values: Vec<Vec<f64>> },
    /// Linear blend from `from` at `start` to `to` at `end`, clamped outside.
    Gradient { start: f64, end: f64, from: Vec<f64>, to: Vec<f64> },
}

/// An opacity profile paired with a color profile.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalyticField {
    pub field: FieldKind,
    pub color: ColorProfile,
}

fn all_finite(xs: &[f64]) -> bool {
    xs.iter().all(|x| x.is_finite())
}

fn check_color(c: &[f64], channels: usize) -> Result<()> {
    if c.len() != channels || c.is_empty() {
        return Err(invalid("color vectors must share one non-zero channel count"));
    }
    if c.iter().any(|v| !(0.0..=1.0).contains(v)) {
        return Err(invalid(format!("color components must lie in [0, 1], got {c:?}")));
    }
    Ok(())
}

fn strictly_increasing(xs: &[f64]) -> bool {
    xs.windows(2).all(|w| w[0] < w[1])
}

fn logistic(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `ln(1 + e^x)` without overflow.
fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

impl FieldKind {
    pub fn validate(&self) -> Result<()> {
        match self {
            FieldKind::ConstantSlab { tau, start, end } => {
                if !all_finite(&[*tau, *start, *end]) || *tau < 0.0 || !(start < end) {
                    return Err(invalid("constant slab needs tau >= 0 and start < end"));
                }
            }
            FieldKind::LinearRamp { start, end, tau_start, tau_end } => {
                if !all_finite(&[*start, *end, *tau_start, *tau_end])
                    || *tau_start < 0.0
                    || *tau_end < 0.0
                    || !(start < end)
                {
                    return Err(invalid("linear ramp needs non-negative end values and start < end"));
                }
            }
            FieldKind::GaussianBump { amplitude, center, width } => {
                if !all_finite(&[*amplitude, *center, *width]) || *amplitude < 0.0 || !(*width > 0.0) {
                    return Err(invalid("gaussian bump needs amplitude >= 0 and width > 0"));
                }
            }
            FieldKind::LogisticStep { amplitude, steepness, center } => {
                if !all_finite(&[*amplitude, *steepness, *center]) || *amplitude < 0.0 || !(*steepness > 0.0) {
                    return Err(invalid("logistic step needs amplitude >= 0 and steepness > 0"));
                }
            }
            FieldKind::Tabulated { knots, values, .. } => {
                if knots.len() < 2 || knots.len() != values.len() {
                    return Err(invalid("tabulated field needs at least two knots and one value per knot"));
                }
                if !all_finite(knots) || !all_finite(values) || values.iter().any(|v| *v < 0.0) {
                    return Err(invalid("tabulated values must be finite and non-negative"));
                }
                if !strictly_increasing(knots) {
                    return Err(invalid("tabulated knots must be strictly increasing"));
                }
            }
        }
        Ok(())
    }

    pub fn tau(&self, s: f64) -> f64 {
        match self {
            FieldKind::ConstantSlab { tau, start, end } => {
                if s >= *start && s <= *end {
                    *tau
                } else {
                    0.0
                }
            }
            FieldKind::LinearRamp { start, end, tau_start, tau_end } => {
                if s < *start || s > *end {
                    0.0
                } else {
                    let w = (s - start) / (end - start);
                    tau_start + w * (tau_end - tau_start)
                }
            }
            FieldKind::GaussianBump { amplitude, center, width } => {
                let z = (s - center) / width;
                amplitude * (-0.5 * z * z).exp()
            }
            FieldKind::LogisticStep { amplitude, steepness, center } => amplitude * logistic(steepness * (s - center)),
            FieldKind::Tabulated { knots, values, interpolation } => {
                let last = knots.len() - 1;
                if s < knots[0] || s > knots[last] {
                    return 0.0;
                }
                let i = (knots.partition_point(|&k| k <= s).max(1) - 1).min(last - 1);
                match interpolation {
                    Interpolation::Step => values[i],
                    Interpolation::Linear => {
                        let w = (s - knots[i]) / (knots[i + 1] - knots[i]);
                        values[i] + w * (values[i + 1] - values[i])
                    }
                }
            }
        }
    }

    /// Locations where the profile or its derivative is discontinuous.
    pub fn breakpoints(&self) -> Vec<f64> {
        match self {
            FieldKind::ConstantSlab { start, end, .. } | FieldKind::LinearRamp { start, end, .. } => {
                vec![*start, *end]
            }
            FieldKind::GaussianBump { .. } | FieldKind::LogisticStep { .. } => Vec::new(),
            FieldKind::Tabulated { knots, .. } => knots.clone(),
        }
    }

    /// `int_a^b tau` where a closed form is known. The oracle never calls
    /// this; it exists to test the oracle.
    pub fn closed_form_optical_depth(&self, a: f64, b: f64) -> Option<f64> {
        match self {
            FieldKind::ConstantSlab { tau, start, end } => Some(tau * (b.min(*end) - a.max(*start)).max(0.0)),
            FieldKind::LinearRamp { start, end, .. } => {
                let (lo, hi) = (a.max(*start), b.min(*end));
                (hi > lo).then(|| 0.5 * (self.tau(lo) + self.tau(hi)) * (hi - lo)).or(Some(0.0))
            }
            FieldKind::LogisticStep { amplitude, steepness, center } => Some(
                amplitude / steepness * (softplus(steepness * (b - center)) - softplus(steepness * (a - center))),
            ),
            FieldKind::GaussianBump { .. } => None,
            FieldKind::Tabulated { knots, interpolation, values } => {
                let mut total = 0.0;
                for i in 0..knots.len() - 1 {
                    let (lo, hi) = (a.max(knots[i]), b.min(knots[i + 1]));
                    if hi > lo {
                        total += match interpolation {
                            Interpolation::Step => values[i] * (hi - lo),
                            Interpolation::Linear => 0.5 * (self.tau(lo) + self.tau(hi)) * (hi - lo),
                        };
                    }
                }
                Some(total)
            }
        }
    }

    /// The same profile translated by `delta` along the ray.
    pub fn translated(&self, delta: f64) -> FieldKind {
        let mut out = self.clone();
        match &mut out {
            FieldKind::ConstantSlab { start, end, .. } | FieldKind::LinearRamp { start, end, .. } => {
                *start += delta;
                *end += delta;
            }
            FieldKind::GaussianBump { center, .. } | FieldKind::LogisticStep { center, .. } => *center += delta,
            FieldKind::Tabulated { knots, .. } => knots.iter_mut().for_each(|k| *k += delta),
        }
        out
    }

    /// Representative location of the profile (slab midpoint, step center).
    pub fn anchor(&self) -> f64 {
        match self {
            FieldKind::ConstantSlab { start, end, .. } | FieldKind::LinearRamp { start, end, .. } => {
                0.5 * (start + end)
            }
            FieldKind::GaussianBump { center, .. } | FieldKind::LogisticStep { center, .. } => *center,
            FieldKind::Tabulated { knots, .. } => 0.5 * (knots[0] + knots[knots.len() - 1]),
        }
    }
}

impl ColorProfile {
    pub fn channels(&self) -> usize {
        match self {
            ColorProfile::Uniform { value } => value.len(),
            ColorProfile::Piecewise { values, .. } => values.first().map_or(0, Vec::len),
            ColorProfile::Gradient { from, .. } => from.len(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ch = self.channels();
        match self {
            ColorProfile::Uniform { value } => check_color(value, ch),
            ColorProfile::Piecewise { breaks, values } => {
                if values.len() != breaks.len() + 1 {
                    return Err(invalid("piecewise color needs one more value than breaks"));
                }
                if !all_finite(breaks) || !strictly_increasing(breaks) {
                    return Err(invalid("color breaks must be finite and strictly increasing"));
                }
                values.iter().try_for_each(|v| check_color(v, ch))
            }
            ColorProfile::Gradient { start, end, from, to } => {
                if !all_finite(&[*start, *end]) || !(start < end) {
                    return Err(invalid("color gradient needs start < end"));
                }
                check_color(from, ch)?;
                check_color(to, ch)
            }
        }
    }

    pub fn color(&self, s: f64) -> Vec<f64> {
        match self {
            ColorProfile::Uniform { value } => value.clone(),
            ColorProfile::Piecewise { breaks, values } => values[breaks.partition_point(|&b| b <= s)].clone(),
            ColorProfile::Gradient { start, end, from, to } => {
                let w = ((s - start) / (end - start)).clamp(0.0, 1.0);
                from.iter().zip(to).map(|(a, b)| a + w * (b - a)).collect()
            }
        }
    }

    pub fn breakpoints(&self) -> Vec<f64> {
        match self {
            ColorProfile::Uniform { .. } => Vec::new(),
            ColorProfile::Piecewise { breaks, .. } => breaks.clone(),
            ColorProfile::Gradient { start, end, .. } => vec![*start, *end],
        }
    }

    pub fn translated(&self, delta: f64) -> ColorProfile {
        let mut out = self.clone();
        match &mut out {
            ColorProfile::Uniform { .. } => {}
            ColorProfile::Piecewise { breaks, .. } => breaks.iter_mut().for_each(|b| *b += delta),
            ColorProfile::Gradient { start, end, .. } => {
                *start += delta;
                *end += delta;
            }
        }
        out
    }
}

impl AnalyticField {
    pub fn new(field: FieldKind, color: ColorProfile) -> Result<Self> {
        field.validate()?;
        color.validate()?;
        Ok(Self { field, color })
    }

    /// Scalar white color, for when only opacity matters.
    pub fn with_unit_color(field: FieldKind) -> Result<Self> {
        Self::new(field, ColorProfile::Uniform { value: vec![1.0] })
    }

    pub fn tau(&self, s: f64) -> f64 {
        self.field.tau(s)
    }

    pub fn color(&self, s: f64) -> Vec<f64> {
        self.color.color(s)
    }

    pub fn channels(&self) -> usize {
        self.color.channels()
    }

    /// Sorted, deduplicated breakpoints of both profiles.
    pub fn breakpoints(&self) -> Vec<f64> {
        let mut b = self.field.breakpoints();
        b.extend(self.color.breakpoints());
        b.sort_by(f64::total_cmp);
        b.dedup();
        b
    }

    pub fn closed_form_optical_depth(&self, a: f64, b: f64) -> Option<f64> {
        self.field.closed_form_optical_depth(a, b)
    }

    pub fn translated(&self, delta: f64) -> AnalyticField {
        AnalyticField { field: self.field.translated(delta), color: self.color.translated(delta) }
    }
}

/// Which point of an interval supplies its color.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ColorIndexing {
    /// The left sample, matching the usual per-sample color of a radiance field.
    #[default]
    Left,
    Midpoint,
}

/// Samples opacity at every grid point (boundaries included, before the
/// far-plane convention is applied) and one color per interval.
pub fn sample_field(
    field: &AnalyticField,
    grid: &SampleGrid,
    far_plane: FarPlane,
    indexing: ColorIndexing,
) -> Result<(OpacityTrace, ColorTrace)> {
    let s = grid.points();
    let tau = OpacityTrace::ingest(s.iter().map(|&x| field.tau(x)).collect(), far_plane)?;
    let colors: Vec<Vec<f64>> = s
        .windows(2)
        .map(|w| match indexing {
            ColorIndexing::Left => field.color(w[0]),
            ColorIndexing::Midpoint => field.color(0.5 * (w[0] + w[1])),
        })
        .collect();
    Ok((tau, ColorTrace::new(colors)?))
}

/// Every interior sample moved by `offset`, with `0 <= offset < min gap` so
/// the order and the segment are preserved.
pub fn shifted_grid(grid: &SampleGrid, offset: f64) -> Result<SampleGrid> {
    if !(offset >= 0.0 && offset < grid.min_gap()) {
        return Err(invalid(format!(
            "offset {offset} must lie in [0, {}) for this grid",
            grid.min_gap()
        )));
    }
    let moved = grid.interior().iter().map(|s| s + offset).collect();
    SampleGrid::new(grid.segment(), moved)
}

/// One ray produced by a rig.
#[derive(Debug, Clone, PartialEq)]
pub struct RigRay {
    /// Angle to the surface for grazing rigs, distance scale for
    /// multi-distance rigs.
    pub parameter: f64,
    pub field: AnalyticField,
    pub segment: RaySegment,
}

/// Families of rays seeing the same underlying surface differently.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum RayRig {
    /// Rays hitting a planar logistic wall at angles `angles` (radians, in
    /// `(0, pi/2]`). The wall's density along its normal is
    /// `amplitude * sigmoid(steepness * w)` for penetration depth `w`, and it
    /// lies `surface_offset` away from the ray origin along the normal. Along
    /// a ray at angle `theta` this is a logistic step of steepness
    /// `steepness sin(theta)` centred at `surface_offset / sin(theta)`. Each
    /// segment spans `window` either side of the crossing.
    Grazing { amplitude: f64, steepness: f64, surface_offset: f64, angles: Vec<f64>, window: f64 },
    /// The base scene moved toward the origin: the segment bounds and the
    /// field's anchor are multiplied by each scale in `(0, 1]`, while the
    /// field keeps its shape.
    MultiDistance { scales: Vec<f64> },
}

impl RayRig {
    pub fn validate(&self) -> Result<()> {
        match self {
            RayRig::Grazing { amplitude, steepness, surface_offset, angles, window } => {
                if angles.is_empty() {
                    return Err(invalid("grazing rig needs at least one angle"));
                }
                if angles.iter().any(|a| !(*a > 0.0 && *a <= std::f64::consts::FRAC_PI_2)) {
                    return Err(invalid("grazing angles must lie in (0, pi/2]"));
                }
                if !(*amplitude >= 0.0 && *steepness > 0.0 && *surface_offset > 0.0 && *window > 0.0) {
                    return Err(invalid("grazing rig needs amplitude >= 0 and positive steepness, offset and window"));
                }
            }
            RayRig::MultiDistance { scales } => {
                if scales.is_empty() {
                    return Err(invalid("multi-distance rig needs at least one scale"));
                }
                if scales.iter().any(|s| !(*s > 0.0 && *s <= 1.0)) {
                    return Err(invalid("distance scales must lie in (0, 1]"));
                }
            }
        }
        Ok(())
    }

    /// Generates the rig's rays. `base` supplies the color profile for
    /// grazing rigs and the whole scene for multi-distance rigs.
    pub fn rays(&self, base: &AnalyticField, base_segment: RaySegment) -> Result<Vec<RigRay>> {
        self.validate()?;
        match self {
            RayRig::Grazing { amplitude, steepness, surface_offset, angles, window } => angles
                .iter()
                .map(|&theta| {
                    let field = grazing_profile(*amplitude, *steepness, *surface_offset, theta);
                    let center = surface_offset / theta.sin();
                    let segment = RaySegment::new((center - window).max(0.0), center + window)?;
                    let field = AnalyticField::new(field, base.color.translated(center - base.field.anchor()))?;
                    Ok(RigRay { parameter: theta, field, segment })
                })
                .collect(),
            RayRig::MultiDistance { scales } => scales
                .iter()
                .map(|&lambda| {
                    let delta = (lambda - 1.0) * base.field.anchor();
                    let segment = RaySegment::new(base_segment.near() * lambda, base_segment.far() * lambda)?;
                    Ok(RigRay { parameter: lambda, field: base.translated(delta), segment })
                })
                .collect(),
        }
    }
}

/// Density seen along a ray crossing the logistic wall at angle `theta`.
pub fn grazing_profile(amplitude: f64, steepness: f64, surface_offset: f64, theta: f64) -> FieldKind {
    let sin = theta.sin();
    FieldKind::LogisticStep { amplitude, steepness: steepness * sin, center: surface_offset / sin }
}

/// Wall density as a function of penetration depth along the normal.
pub fn wall_density(amplitude: f64, steepness: f64, depth: f64) -> f64 {
    amplitude * logistic(steepness * depth)
}

/// `n` distance scales drawn from `U(0.5, 1)`.
pub fn random_distance_scales(n: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    // gen_range excludes the upper end; flipping keeps 1 attainable and 0.5 not
    (0..n).map(|_| 1.5 - rng.gen_range(0.5..1.0)).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SegmentSpec {
    pub near: f64,
    pub far: f64,
}

/// Contents of a scene file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneSpec {
    #[serde(default = "default_far_plane")]
    pub far_plane: FarPlane,
    pub segment: SegmentSpec,
    pub field: FieldKind,
    pub color: ColorProfile,
    #[serde(default)]
    pub rig: Option<RayRig>,
}

fn default_far_plane() -> FarPlane {
    FarPlane::Opaque
}

impl SceneSpec {
    pub fn from_toml(text: &str) -> Result<Self> {
        let spec: SceneSpec = toml::from_str(text).map_err(|e| invalid(format!("bad scene file: {e}")))?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| invalid(format!("cannot serialize scene: {e}")))
    }

    pub fn validate(&self) -> Result<()> {
        self.segment()?;
        self.field()?;
        if let Some(rig) = &self.rig {
            rig.validate()?;
        }
        Ok(())
    }

    pub fn segment(&self) -> Result<RaySegment> {
        RaySegment::new(self.segment.near, self.segment.far)
    }

    pub fn field(&self) -> Result<AnalyticField> {
        AnalyticField::new(self.field.clone(), self.color.clone())
    }
}
