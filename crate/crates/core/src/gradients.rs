//! Hand-derived first derivatives of rendered values and sampled distances,
//! with a finite-difference checker to keep the derivations honest.
//!
//! Everything flows through the per-interval optical depths `d_m`. For
//! `y = sum_j P_j c_j` with `P_j = T_j - T_{j+1}`,
//!
//! `dy/dd_m = T_{m+1} c_m - sum_{j>m} P_j c_j`,
//!
//! and each model contributes its own `dd_m/dtau_k` and `dd_m/ds_k`.

use crate::error::{invalid, Error, Result};
use crate::quadrature::{interval_depths, interval_pmf};
use crate::ray::{ColorTrace, FarPlane, ModelKind, OpacityTrace, SampleGrid};
use crate::sampling::{precise_sample, ContinuousRayCdf};

fn check_model(model: ModelKind) -> Result<()> {
    match model {
        ModelKind::Constant | ModelKind::Linear => Ok(()),
        ModelKind::Quadratic => Err(invalid("gradients are implemented for the constant and linear models")),
    }
}

/// `dy/dd_m` for every interval, for color channel `channel`.
fn depth_sensitivities(
    model: ModelKind,
    grid: &SampleGrid,
    tau: &OpacityTrace,
    colors: &ColorTrace,
    channel: usize,
) -> Result<(Vec<f64>, Vec<f64>)> {
    check_model(model)?;
    if colors.len() != grid.interval_count() {
        return Err(invalid(format!(
            "grid has {} intervals but {} colors were given",
            grid.interval_count(),
            colors.len()
        )));
    }
    if channel >= colors.channels() {
        return Err(invalid(format!("channel {channel} out of range")));
    }
    let dist = interval_pmf(model, grid, tau)?;
    let depths = interval_depths(model, grid, tau)?;
    let c = colors.channel(channel);
    let p = dist.pmf();
    let t = dist.transmittance();
    let n = p.len();
    let mut sens = vec![0.0; n];
    let mut tail = 0.0;
    for m in (0..n).rev() {
        // An infinite depth has already absorbed everything it can.
        sens[m] = if depths[m].is_infinite() { 0.0 } else { t[m + 1] * c[m] - tail };
        tail += p[m] * c[m];
    }
    Ok((sens, depths))
}

/// `dy/dtau_k` for all `N + 2` opacity values.
///
/// Under an opaque far plane the boundary values are fixed by convention,
/// so their partials are reported as zero.
pub fn grad_render_wrt_tau(
    model: ModelKind,
    grid: &SampleGrid,
    tau: &OpacityTrace,
    colors: &ColorTrace,
    channel: usize,
) -> Result<Vec<f64>> {
    let (sens, depths) = depth_sensitivities(model, grid, tau, colors, channel)?;
    let widths = grid.widths();
    let n = sens.len();
    let mut grad = vec![0.0; n + 1];
    for m in 0..n {
        if depths[m].is_infinite() {
            continue;
        }
        match model {
            ModelKind::Constant => grad[m] += sens[m] * widths[m],
            _ => {
                grad[m] += 0.5 * sens[m] * widths[m];
                grad[m + 1] += 0.5 * sens[m] * widths[m];
            }
        }
    }
    if tau.far_plane() == FarPlane::Opaque {
        grad[0] = 0.0;
        grad[n] = 0.0;
    }
    Ok(grad)
}

/// `dy/ds_k` for the `N` interior samples, holding the opacity values and
/// colors attached to each sample fixed.
pub fn grad_render_wrt_positions(
    model: ModelKind,
    grid: &SampleGrid,
    tau: &OpacityTrace,
    colors: &ColorTrace,
    channel: usize,
) -> Result<Vec<f64>> {
    let (sens, depths) = depth_sensitivities(model, grid, tau, colors, channel)?;
    let t = tau.values();
    // rate of change of d_m with its right end (+) and left end (-)
    let rate = |m: usize| -> f64 {
        if depths[m].is_infinite() {
            return 0.0;
        }
        match model {
            ModelKind::Constant => t[m],
            _ => 0.5 * (t[m] + t[m + 1]),
        }
    };
    Ok((1..=grid.len())
        .map(|k| sens[k - 1] * rate(k - 1) - sens[k] * rate(k))
        .collect())
}

/// Whether the sample position is treated as a function of the earlier
/// opacities through `T(s_k)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SampleGradMode {
    /// Only the two opacities bounding the bin, with `q` held fixed.
    StopGradient,
    /// Also the dependence of `q = ln T(s_k) - ln(1 - u)` on every earlier
    /// opacity.
    FullChain,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SampleGradient {
    pub distance: f64,
    pub bin: usize,
    /// `dt/dtau_m` for all `N + 2` opacity values.
    pub partials: Vec<f64>,
}

/// Partials of the precise sample at `u` with respect to the opacities.
///
/// Inside bin `k` the offset `t` solves
/// `G = a t^2 / (2 width) + tau_k t - q = 0` with `a = tau_{k+1} - tau_k`;
/// `dG/dt` is the opacity at the sample, so
/// `dt/dtau_{k+1} = -(t^2 / (2 width)) / tau(x)`,
/// `dt/dtau_k = -(t - t^2 / (2 width)) / tau(x)` and `dt/dq = 1 / tau(x)`.
pub fn grad_sample_wrt_tau(cdf: &ContinuousRayCdf, u: f64, mode: SampleGradMode) -> Result<SampleGradient> {
    let sample = precise_sample(cdf, u)?;
    if sample.clamped {
        return Err(Error::EdgeCase(format!("u = {u} is past the total mass; the sample sits on the far bound")));
    }
    let k = sample.bin;
    let s = cdf.points();
    let tau = cdf.tau();
    let width = s[k + 1] - s[k];
    let t = sample.distance - s[k];
    if u == cdf.cumulative()[k] || t <= 0.0 || t >= width {
        return Err(Error::EdgeCase(format!("u = {u} sits on an edge of bin {k}")));
    }
    let density = tau[k] + (tau[k + 1] - tau[k]) * t / width;
    if !(density > 0.0) {
        return Err(Error::EdgeCase(format!("zero opacity at the sample in bin {k}")));
    }
    let half_sq = t * t / (2.0 * width);
    let mut partials = vec![0.0; tau.len()];
    partials[k + 1] = -half_sq / density;
    partials[k] = -(t - half_sq) / density;
    if mode == SampleGradMode::FullChain {
        // q = -ln(1 - u) - sum_{j<k} (tau_j + tau_{j+1}) width_j / 2
        for j in 0..k {
            let w = 0.5 * (s[j + 1] - s[j]) / density;
            partials[j] -= w;
            partials[j + 1] -= w;
        }
    }
    Ok(SampleGradient { distance: sample.distance, bin: k, partials })
}

/// Comparison of analytic partials against central differences.
#[derive(Debug, Clone, PartialEq)]
pub struct GradReport {
    pub analytic: Vec<f64>,
    pub numeric: Vec<f64>,
    pub relative_errors: Vec<f64>,
    pub max_rel_err: f64,
}

/// `|a - n| / max(|a|, |n|, 1e-12)`.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-12)
}

/// Central differences `(f(x + h_k e_k) - f(x - h_k e_k)) / (2 h_k)` with
/// `h_k = h max(1, |x_k|)`, compared against `analytic`.
pub fn finite_diff_check<F: Fn(&[f64]) -> Result<f64>>(f: F, x: &[f64], h: f64, analytic: &[f64]) -> Result<GradReport> {
    if !(h > 0.0) || !h.is_finite() {
        return Err(invalid(format!("step must be positive, got {h}")));
    }
    if analytic.len() != x.len() {
        return Err(invalid("need one analytic partial per coordinate"));
    }
    let mut numeric = Vec::with_capacity(x.len());
    let mut probe = x.to_vec();
    for k in 0..x.len() {
        let step = h * x[k].abs().max(1.0);
        probe[k] = x[k] + step;
        let plus = f(&probe)?;
        probe[k] = x[k] - step;
        let minus = f(&probe)?;
        probe[k] = x[k];
        if !(plus.is_finite() && minus.is_finite()) {
            return Err(invalid(format!("function is not finite around coordinate {k}")));
        }
        numeric.push((plus - minus) / (2.0 * step));
    }
    let relative_errors: Vec<f64> = analytic.iter().zip(&numeric).map(|(&a, &n)| relative_error(a, n)).collect();
    let max_rel_err = relative_errors.iter().copied().fold(0.0, f64::max);
    Ok(GradReport { analytic: analytic.to_vec(), numeric, relative_errors, max_rel_err })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quadrature::render;
    use crate::ray::{make_uniform_grid, RaySegment};
    use crate::sampling::{cdf_eval, solve_in_bin};

    fn render_for<'a>(model: ModelKind, grid: &SampleGrid, far: FarPlane, colors: &'a ColorTrace) -> impl Fn(&[f64]) -> Result<f64> + 'a {
        let grid = grid.clone();
        move |t: &[f64]| {
            let tau = OpacityTrace::new(t.to_vec(), far)?;
            Ok(render(&interval_pmf(model, &grid, &tau)?, colors)?[0])
        }
    }

    fn instance() -> (SampleGrid, OpacityTrace, ColorTrace) {
        let grid = SampleGrid::new(RaySegment::new(0.5, 3.0).unwrap(), vec![0.7, 1.1, 1.6, 2.2, 2.3]).unwrap();
        let tau = OpacityTrace::new(vec![0.4, 1.2, 0.3, 2.5, 0.9, 1.7, 0.6], FarPlane::Open).unwrap();
        let colors = ColorTrace::scalar(&[0.1, 0.9, 0.4, 0.7, 0.2, 0.5]).unwrap();
        (grid, tau, colors)
    }

    #[test]
    fn uniform_color_under_opaque_far_has_zero_gradient() {
        let grid = make_uniform_grid(RaySegment::new(0.0, 2.0).unwrap(), 6).unwrap();
        let tau = OpacityTrace::ingest(vec![0.3, 1.0, 2.0, 0.1, 0.5, 3.0, 1.0, 0.2], FarPlane::Opaque).unwrap();
        let colors = ColorTrace::uniform(7, &[0.6]).unwrap();
        for model in [ModelKind::Constant, ModelKind::Linear] {
            let g = grad_render_wrt_tau(model, &grid, &tau, &colors, 0).unwrap();
            assert!(g.iter().all(|v| v.abs() < 1e-12), "{model:?} {g:?}");
        }
    }

    #[test]
    fn single_interval_linear_hand_derivative() {
        let delta = 0.8;
        // grids need an interior sample, so the second interval is black
        let grid = SampleGrid::new(RaySegment::new(0.0, 2.0 * delta).unwrap(), vec![delta]).unwrap();
        let (t0, t1) = (0.7, 1.9);
        let tau = OpacityTrace::new(vec![t0, t1, 0.0], FarPlane::Open).unwrap();
        let colors = ColorTrace::scalar(&[1.0, 0.0]).unwrap();
        let g = grad_render_wrt_tau(ModelKind::Linear, &grid, &tau, &colors, 0).unwrap();
        let expected = 0.5 * delta * (-(t0 + t1) * delta / 2.0).exp();
        // tau_1 also feeds the black second interval, which does not change y
        assert!((g[0] - expected).abs() < 1e-15);
        assert!((g[1] - expected).abs() < 1e-15);
    }

    #[test]
    fn render_gradients_match_finite_differences() {
        let (grid, tau, colors) = instance();
        for model in [ModelKind::Constant, ModelKind::Linear] {
            let g = grad_render_wrt_tau(model, &grid, &tau, &colors, 0).unwrap();
            let f = render_for(model, &grid, FarPlane::Open, &colors);
            let report = finite_diff_check(f, tau.values(), 1e-6, &g).unwrap();
            assert!(report.max_rel_err < 1e-5, "{model:?} {report:?}");
        }
    }

    #[test]
    fn position_gradients_match_finite_differences() {
        let (grid, tau, colors) = instance();
        for model in [ModelKind::Constant, ModelKind::Linear] {
            let g = grad_render_wrt_positions(model, &grid, &tau, &colors, 0).unwrap();
            let seg = grid.segment();
            let f = |s: &[f64]| -> Result<f64> {
                let grid = SampleGrid::new(seg, s.to_vec())?;
                Ok(render(&interval_pmf(model, &grid, &tau)?, &colors)?[0])
            };
            let report = finite_diff_check(f, grid.interior(), 1e-6, &g).unwrap();
            assert!(report.max_rel_err < 1e-5, "{model:?} {report:?}");
        }
    }

    #[test]
    fn mismatched_colors_rejected() {
        let (grid, tau, _) = instance();
        let colors = ColorTrace::scalar(&[0.5; 3]).unwrap();
        assert!(grad_render_wrt_tau(ModelKind::Linear, &grid, &tau, &colors, 0).is_err());
        let (_, _, colors) = instance();
        assert!(grad_render_wrt_tau(ModelKind::Linear, &grid, &tau, &colors, 1).is_err());
        assert!(grad_render_wrt_tau(ModelKind::Quadratic, &grid, &tau, &colors, 0).is_err());
    }

    #[test]
    fn constant_bin_sample_gradient() {
        let tau_v = 1.3;
        let grid = SampleGrid::new(RaySegment::new(0.0, 2.0).unwrap(), vec![1.0]).unwrap();
        let tau = OpacityTrace::new(vec![tau_v, tau_v, 0.5], FarPlane::Open).unwrap();
        let cdf = ContinuousRayCdf::new(&grid, &tau).unwrap();
        let u = 0.4;
        let g = grad_sample_wrt_tau(&cdf, u, SampleGradMode::StopGradient).unwrap();
        let q = -(1.0f64 - u).ln();
        let together = g.partials[0] + g.partials[1];
        assert!((together - (-q / (tau_v * tau_v))).abs() < 1e-14);
    }

    #[test]
    fn sample_gradient_vanishes_at_bin_start() {
        let (grid, tau, _) = instance();
        let cdf = ContinuousRayCdf::new(&grid, &tau).unwrap();
        let k = 2;
        let u = cdf.cumulative()[k] + 1e-12;
        let g = grad_sample_wrt_tau(&cdf, u, SampleGradMode::StopGradient).unwrap();
        assert_eq!(g.bin, k);
        assert!(g.partials[k + 1].abs() < 1e-10);
        assert!(matches!(
            grad_sample_wrt_tau(&cdf, cdf.cumulative()[k], SampleGradMode::StopGradient),
            Err(Error::EdgeCase(_))
        ));
    }

    #[test]
    fn sample_gradient_matches_finite_differences() {
        let (grid, tau, _) = instance();
        let cdf = ContinuousRayCdf::new(&grid, &tau).unwrap();
        for u in [0.05, 0.3, 0.55, 0.8] {
            let full = grad_sample_wrt_tau(&cdf, u, SampleGradMode::FullChain).unwrap();
            let grid = grid.clone();
            let f = move |t: &[f64]| -> Result<f64> {
                let tau = OpacityTrace::new(t.to_vec(), FarPlane::Open)?;
                Ok(precise_sample(&ContinuousRayCdf::new(&grid, &tau)?, u)?.distance)
            };
            let report = finite_diff_check(f, tau.values(), 1e-6, &full.partials).unwrap();
            assert!(report.max_rel_err < 1e-5, "u {u}: {report:?}");

            // stop-gradient: hold q fixed and vary the bin's two opacities
            let stop = grad_sample_wrt_tau(&cdf, u, SampleGradMode::StopGradient).unwrap();
            let k = stop.bin;
            let s = cdf.points();
            let width = s[k + 1] - s[k];
            let q = cdf.in_bin_depth(k, stop.distance - s[k]);
            let g = |p: &[f64]| Ok(solve_in_bin(p[0], p[1], width, q));
            let x = [cdf.tau()[k], cdf.tau()[k + 1]];
            let report = finite_diff_check(g, &x, 1e-6, &stop.partials[k..k + 2]).unwrap();
            assert!(report.max_rel_err < 1e-5, "u {u}: {report:?}");
            assert!(stop.partials.iter().enumerate().all(|(m, v)| m == k || m == k + 1 || *v == 0.0));
            let _ = cdf_eval(&cdf, stop.distance).unwrap();
        }
    }

    #[test]
    fn checker_basics() {
        let r = finite_diff_check(|x: &[f64]| Ok(x[0] * x[0]), &[3.0], 1e-5, &[6.0]).unwrap();
        assert!((r.numeric[0] - 6.0).abs() < 1e-9);
        let lin = finite_diff_check(|x: &[f64]| Ok(2.0 * x[0] - 0.5 * x[1]), &[1.0, 4.0], 1e-3, &[2.0, -0.5]).unwrap();
        assert!(lin.max_rel_err < 1e-10);
        let bad = finite_diff_check(|x: &[f64]| Ok(x[0] * x[0]), &[3.0], 1e-5, &[6.6]).unwrap();
        assert!(bad.max_rel_err > 1e-2);
        assert!(finite_diff_check(|_: &[f64]| Ok(f64::NAN), &[1.0], 1e-5, &[0.0]).is_err());
        assert!(finite_diff_check(|x: &[f64]| Ok(x[0]), &[1.0], 0.0, &[1.0]).is_err());
    }

    #[test]
    fn relative_error_floor() {
        assert_eq!(relative_error(0.0, 0.0), 0.0);
        assert!((relative_error(1e-13, 0.0) - 0.1).abs() < 1e-15);
        assert!((relative_error(2.0, 1.0) - 0.5).abs() < 1e-15);
    }
}
