//! Piecewise-quadratic opacity, kept as a cautionary comparison model.
//!
//! Each patch interpolates three consecutive samples with a parabola, and the
//! optical depth of its two subintervals has a closed rational form in the
//! sample gaps `alpha = s_{j+1} - s_j`, `beta = s_{j+2} - s_{j+1}` and
//! `gamma = s_{j+2} - s_j`. The interpolant is free to dip below zero, so a
//! subinterval integral can be negative and the resulting "transmittance"
//! can exceed one. That pathology is preserved on purpose and the rational
//! expressions are evaluated exactly as derived, without simplification.
//!
//! Importance sampling is deliberately absent. Inverting the CDF of a
//! degree-`n` opacity means solving a degree-`n + 1` polynomial in the
//! sample offset; for the quadratic case that is a cubic with poor
//! conditioning, and from degree four upward the root is not expressible in
//! radicals at all.

use crate::error::{invalid, Result};
use crate::quadrature::RayDistribution;
use crate::ray::{FarPlane, ModelKind, OpacityTrace, SampleGrid};

/// Lagrange parabola through three samples.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadraticPatch {
    knots: [f64; 3],
    tau: [f64; 3],
}

impl QuadraticPatch {
    pub fn new(knots: [f64; 3], tau: [f64; 3]) -> Result<Self> {
        if knots.iter().chain(&tau).any(|v| !v.is_finite()) {
            return Err(invalid("patch knots and opacities must be finite"));
        }
        if !(knots[0] < knots[1] && knots[1] < knots[2]) {
            return Err(invalid(format!("patch knots must be strictly increasing, got {knots:?}")));
        }
        Ok(Self { knots, tau })
    }

    pub fn knots(&self) -> [f64; 3] {
        self.knots
    }

    pub fn tau(&self) -> [f64; 3] {
        self.tau
    }

    pub fn alpha(&self) -> f64 {
        self.knots[1] - self.knots[0]
    }

    pub fn beta(&self) -> f64 {
        self.knots[2] - self.knots[1]
    }

    pub fn gamma(&self) -> f64 {
        self.knots[2] - self.knots[0]
    }
}

/// Lagrange-form value of the patch at `s`.
pub fn quad_eval(patch: &QuadraticPatch, s: f64) -> Result<f64> {
    let [s0, s1, s2] = patch.knots;
    if !(s >= s0 && s <= s2) {
        return Err(invalid(format!("s = {s} outside the patch [{s0}, {s2}]")));
    }
    let [t0, t1, t2] = patch.tau;
    let (a, b, g) = (patch.alpha(), patch.beta(), patch.gamma());
    Ok(t0 * (s - s1) * (s - s2) / (a * g) - t1 * (s - s0) * (s - s2) / (a * b)
        + t2 * (s - s0) * (s - s1) / (g * b))
}

/// Optical depth of the patch over `[s_j, s_{j+1}]`.
pub fn quad_integral_left(patch: &QuadraticPatch) -> f64 {
    let [t0, t1, t2] = patch.tau;
    let (a, b, g) = (patch.alpha(), patch.beta(), patch.gamma());
    t0 / g * (a * a / 3.0 + a * b / 2.0) - t1 / b * (a * a / 3.0 - a * g / 2.0)
        + t2 / (b * g) * (-a * a * a / 6.0)
}

/// Optical depth of the patch over `[s_{j+1}, s_{j+2}]`.
pub fn quad_integral_right(patch: &QuadraticPatch) -> f64 {
    let [t0, t1, t2] = patch.tau;
    let (a, b, g) = (patch.alpha(), patch.beta(), patch.gamma());
    t0 / (a * g) * (-b * b * b / 6.0) - t1 / a * (b * b / 3.0 - b * g / 2.0)
        + t2 / g * (b * b / 3.0 + b * a / 2.0)
}

/// Slope of the interpolant at `s_{j+1}` beyond which the left integral turns
/// negative as `beta -> 0`: `(2 tau_j + 4 tau_{j+1}) / alpha`.
pub fn instability_threshold(tau_j: f64, tau_j1: f64, alpha: f64) -> Result<f64> {
    if !(alpha > 0.0) || !alpha.is_finite() {
        return Err(invalid(format!("alpha must be positive, got {alpha}")));
    }
    Ok((2.0 * tau_j + 4.0 * tau_j1) / alpha)
}

/// Limit of the left integral as `beta -> 0` with the slope `h'` at the
/// middle knot held fixed: `tau_j alpha / 3 + 2 tau_{j+1} alpha / 3 - alpha^2 h' / 6`.
pub fn left_integral_limit(tau_j: f64, tau_j1: f64, alpha: f64, slope: f64) -> f64 {
    tau_j * alpha / 3.0 + 2.0 * tau_j1 * alpha / 3.0 - alpha * alpha * slope / 6.0
}

/// Regression fixture with a negative left integral: knots `(0, 1, 1.01)`,
/// opacities `(1, 1, 2)`. The interpolant's slope at the middle knot is
/// about 100, far above the threshold of 6.
pub fn pathology_fixture() -> QuadraticPatch {
    QuadraticPatch::new([0.0, 1.0, 1.01], [1.0, 1.0, 2.0]).expect("fixture is valid")
}

fn check_quadratic_inputs(grid: &SampleGrid, tau: &OpacityTrace) -> Result<()> {
    ModelKind::Quadratic.check_interior_count(grid.len())?;
    tau.check_grid(grid)?;
    tau.check_nonnegative()?;
    if tau.far_plane() == FarPlane::Opaque {
        // The opaque sentinel would be interpolated into the last parabola.
        return Err(invalid("the quadratic model needs an open far plane"));
    }
    Ok(())
}

/// Patches starting at even indices `0, 2, 4, ...`; one per pair of
/// intervals, which is why the interior count must be odd.
pub fn quadratic_patches(grid: &SampleGrid, tau: &OpacityTrace) -> Result<Vec<QuadraticPatch>> {
    check_quadratic_inputs(grid, tau)?;
    let s = grid.points();
    let t = tau.values();
    (0..s.len() - 1)
        .step_by(2)
        .map(|j| QuadraticPatch::new([s[j], s[j + 1], s[j + 2]], [t[j], t[j + 1], t[j + 2]]))
        .collect()
}

/// Per-interval optical depth under the quadratic model. Entries may be
/// negative.
pub fn quadratic_depths(grid: &SampleGrid, tau: &OpacityTrace) -> Result<Vec<f64>> {
    let patches = quadratic_patches(grid, tau)?;
    Ok(patches
        .iter()
        .flat_map(|p| [quad_integral_left(p), quad_integral_right(p)])
        .collect())
}

/// `T_0, ..., T_{N+1}` under the quadratic model. Values above one are
/// returned as computed.
pub fn transmittance_quadratic(grid: &SampleGrid, tau: &OpacityTrace) -> Result<Vec<f64>> {
    Ok(quadratic_pmf(grid, tau)?.transmittance().to_vec())
}

/// Interval "probabilities" of the quadratic model, `T_j - T_{j+1}`; a
/// negative subinterval integral produces a negative entry.
pub fn quadratic_pmf(grid: &SampleGrid, tau: &OpacityTrace) -> Result<RayDistribution> {
    let depths = quadratic_depths(grid, tau)?;
    RayDistribution::from_depths(ModelKind::Quadratic, &depths)
}
