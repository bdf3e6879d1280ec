//! The experiments behind each subcommand and acceptance check. Each returns
//! plain rows plus the verdict of its thresholds; writing files is left to
//! the callers.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use volquad::gradients::{finite_diff_check, grad_render_wrt_tau, grad_sample_wrt_tau, relative_error, SampleGradMode};
use volquad::oracle::{
    convergence_slope, integrate_adaptive, ks_critical, ks_statistic, true_interval_masses, true_render,
    true_render_opaque, true_termination_mean, true_transmittance,
};
use volquad::polynomial::{
    instability_threshold, left_integral_limit, pathology_fixture, quad_eval, quad_integral_left,
    quad_integral_right, quadratic_pmf, QuadraticPatch,
};
use volquad::quadrature::{expected_depth, interval_depths, DepthEstimator};
use volquad::sampling::{
    cdf_eval, draw_uniforms, hierarchical_samples, precise_sample, surrogate_sample, ContinuousRayCdf, DiscreteRayCdf,
    SamplerKind, UDraws,
};
use volquad::scenes::{sample_field, shifted_grid, AnalyticField, ColorIndexing, RigRay};
use volquad::{
    interval_pmf, render, ColorTrace, FarPlane, ModelKind, OpacityTrace, RayDistribution, RaySegment, Result,
    SampleGrid,
};

use crate::instances::{model_field, random_ray, RandomRay, RayShape};

/// `|a - b| / max(|a|, |b|)`, zero when both vanish.
pub fn relative_gap(a: f64, b: f64) -> f64 {
    let scale = a.abs().max(b.abs());
    if scale == 0.0 {
        0.0
    } else {
        (a - b).abs() / scale
    }
}

/// Ray-termination distribution of any model, quadratic included.
pub fn distribution(model: ModelKind, grid: &SampleGrid, tau: &OpacityTrace) -> Result<RayDistribution> {
    match model {
        ModelKind::Quadratic => quadratic_pmf(grid, tau),
        _ => interval_pmf(model, grid, tau),
    }
}

/// Samples `field` on `grid` and renders it with `model`.
pub fn render_field(
    model: ModelKind,
    field: &AnalyticField,
    grid: &SampleGrid,
    far_plane: FarPlane,
    indexing: ColorIndexing,
) -> Result<Vec<f64>> {
    let (tau, colors) = sample_field(field, grid, far_plane, indexing)?;
    render(&distribution(model, grid, &tau)?, &colors)
}

fn oracle_render(field: &AnalyticField, segment: RaySegment, far_plane: FarPlane, tol: f64) -> Result<Vec<f64>> {
    match far_plane {
        FarPlane::Open => true_render(field, segment, tol),
        FarPlane::Opaque => true_render_opaque(field, segment, tol),
    }
}

/// Interior count used for `model` when `n` is requested; the quadratic
/// model pairs intervals and needs an odd count.
pub fn interior_count(model: ModelKind, n: usize) -> usize {
    if model == ModelKind::Quadratic && n.is_multiple_of(2) {
        n + 1
    } else {
        n
    }
}

// ---------------------------------------------------------------------------
// Model exactness, telescoping, inversion

#[derive(Debug, Clone)]
pub struct ExactnessRow {
    pub model: ModelKind,
    pub instance: usize,
    pub intervals: usize,
    pub max_pmf_rel_err: f64,
    pub render_rel_err: f64,
}

/// Random rays rendered by each model and by the oracle integrating the
/// continuous field that the model represents exactly.
pub fn model_exactness(instances: usize, seed: u64, tol: f64) -> Result<Vec<ExactnessRow>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rows = Vec::with_capacity(2 * instances);
    for instance in 0..instances {
        let ray = random_ray(&mut rng, RayShape::default());
        for model in [ModelKind::Constant, ModelKind::Linear] {
            let field = model_field(&ray, model);
            let dist = interval_pmf(model, &ray.grid, &ray.tau)?;
            let masses = true_interval_masses(&field, &ray.grid, tol)?;
            let max_pmf_rel_err = dist.pmf().iter().zip(&masses).map(|(&p, &m)| relative_gap(p, m)).fold(0.0, f64::max);
            let y = render(&dist, &ray.colors)?[0];
            let y_true = true_render(&field, ray.grid.segment(), tol)?[0];
            rows.push(ExactnessRow {
                model,
                instance,
                intervals: ray.grid.interval_count(),
                max_pmf_rel_err,
                render_rel_err: relative_gap(y, y_true),
            });
        }
    }
    Ok(rows)
}

/// Largest `|C_k + T_k - 1|` over random rays, both models and both far
/// plane conventions.
pub fn telescoping(instances: usize, seed: u64) -> Result<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    for i in 0..instances {
        let far_plane = if i % 2 == 0 { FarPlane::Open } else { FarPlane::Opaque };
        let ray = random_ray(&mut rng, RayShape { far_plane, ..RayShape::default() });
        for model in [ModelKind::Constant, ModelKind::Linear] {
            let d = interval_pmf(model, &ray.grid, &ray.tau)?;
            for (c, t) in d.cumulative().iter().zip(d.transmittance()) {
                worst = worst.max((c + t - 1.0).abs());
            }
        }
    }
    Ok(worst)
}

#[derive(Debug, Clone, Copy)]
pub struct InversionSummary {
    pub pairs: usize,
    pub degenerate_pairs: usize,
    pub max_error: f64,
}

/// `|F(precise_sample(u)) - u|` over random `(ray, u)` pairs. A share of the
/// bins copy their left opacity up to `1e-10`, which exercises the root
/// formula as the in-bin slope vanishes.
pub fn sampling_inversion(pairs: usize, seed: u64) -> Result<InversionSummary> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut summary = InversionSummary { pairs: 0, degenerate_pairs: 0, max_error: 0.0 };
    let per_ray = 10;
    while summary.pairs < pairs {
        let far_plane = if rng.gen_bool(0.5) { FarPlane::Open } else { FarPlane::Opaque };
        let shape = RayShape { far_plane, degenerate_bins: 0.3, ..RayShape::default() };
        let ray = random_ray(&mut rng, shape);
        let cdf = ContinuousRayCdf::new(&ray.grid, &ray.tau)?;
        let mass = cdf.total_mass();
        for _ in 0..per_ray.min(pairs - summary.pairs) {
            let u = rng.gen_range(0.0..1.0) * mass;
            let s = precise_sample(&cdf, u)?;
            summary.pairs += 1;
            if s.clamped {
                // only reachable within rounding of the total mass
                summary.max_error = summary.max_error.max((mass - u).abs());
                continue;
            }
            let k = s.bin;
            if (cdf.tau()[k + 1] - cdf.tau()[k]).abs() < 1e-9 {
                summary.degenerate_pairs += 1;
            }
            summary.max_error = summary.max_error.max((cdf_eval(&cdf, s.distance)? - u).abs());
        }
    }
    Ok(summary)
}

// ---------------------------------------------------------------------------
// Distributional checks

#[derive(Debug, Clone)]
pub struct KsRow {
    pub instance: String,
    pub sampler: SamplerKind,
    pub n: usize,
    pub statistic: f64,
    pub critical: f64,
}

impl KsRow {
    pub fn passes(&self) -> bool {
        self.statistic < self.critical
    }
}

/// KS test of `n` samples from `sampler` against the continuous linear-model
/// CDF of the ray, conditioned on terminating inside the segment.
pub fn ks_test(label: &str, grid: &SampleGrid, tau: &OpacityTrace, sampler: SamplerKind, n: usize, seed: u64) -> Result<KsRow> {
    let dist = interval_pmf(ModelKind::Linear, grid, tau)?;
    let cdf = ContinuousRayCdf::from_distribution(grid, tau, &dist)?;
    let discrete = DiscreteRayCdf::new(grid, &dist)?;
    let mass = dist.total_mass();
    let mut samples = Vec::with_capacity(n);
    for v in draw_uniforms(n, UDraws::Uniform, seed) {
        let u = v * mass;
        samples.push(match sampler {
            SamplerKind::Precise => precise_sample(&cdf, u)?.distance,
            SamplerKind::Surrogate => surrogate_sample(&discrete, u)?,
        });
    }
    samples.sort_by(f64::total_cmp);
    let statistic = ks_statistic(&samples, |t| cdf_eval(&cdf, t).map(|f| f / mass).unwrap_or(f64::NAN))?;
    Ok(KsRow { instance: label.to_string(), sampler, n, statistic, critical: ks_critical(n, 0.05)? })
}

/// Precise-sampler KS tests on random rays.
pub fn ks_random(instances: usize, n: usize, seed: u64) -> Result<Vec<KsRow>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rows = Vec::with_capacity(instances);
    for i in 0..instances {
        let shape = RayShape { max_interior: 32, tau_min: 0.01, tau_max: 10.0, ..RayShape::default() };
        let RandomRay { grid, tau, .. } = random_ray(&mut rng, shape);
        rows.push(ks_test(&format!("random_{i}"), &grid, &tau, SamplerKind::Precise, n, seed.wrapping_add(1 + i as u64))?);
    }
    Ok(rows)
}

// ---------------------------------------------------------------------------
// Convergence

#[derive(Debug, Clone)]
pub struct ConvergenceRow {
    pub model: ModelKind,
    pub n: usize,
    pub error: f64,
}

#[derive(Debug, Clone)]
pub struct ConvergenceReport {
    pub rows: Vec<ConvergenceRow>,
    pub slopes: Vec<(ModelKind, f64)>,
}

impl ConvergenceReport {
    pub fn slope(&self, model: ModelKind) -> Option<f64> {
        self.slopes.iter().find(|(m, _)| *m == model).map(|&(_, s)| s)
    }
}

/// Error against the oracle: the larger of the rendered-value error and the
/// worst transmittance error over the grid points.
pub fn convergence(
    field: &AnalyticField,
    segment: RaySegment,
    far_plane: FarPlane,
    models: &[ModelKind],
    ns: &[usize],
    indexing: ColorIndexing,
    tol: f64,
) -> Result<ConvergenceReport> {
    let y_true = oracle_render(field, segment, far_plane, tol)?;
    let mut rows = Vec::new();
    let mut slopes = Vec::new();
    for &model in models {
        let mut points = Vec::with_capacity(ns.len());
        for &n in ns {
            let n = interior_count(model, n);
            let grid = volquad::ray::make_uniform_grid(segment, n)?;
            let (tau, colors) = sample_field(field, &grid, far_plane, indexing)?;
            let dist = distribution(model, &grid, &tau)?;
            let y = render(&dist, &colors)?;
            // the opaque convention forces T = 0 at the far bound
            let checked = match far_plane {
                FarPlane::Open => grid.points().len(),
                FarPlane::Opaque => grid.points().len() - 1,
            };
            let t_true = true_transmittance(field, segment, &grid.points()[..checked], tol)?;
            let t_err = dist.transmittance()[..checked]
                .iter()
                .zip(&t_true)
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max);
            let y_err = y.iter().zip(&y_true).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            let error = t_err.max(y_err);
            rows.push(ConvergenceRow { model, n, error });
            points.push((n as f64, error));
        }
        slopes.push((model, convergence_slope(&points)?));
    }
    Ok(ConvergenceReport { rows, slopes })
}

// ---------------------------------------------------------------------------
// Shift sensitivity

#[derive(Debug, Clone)]
pub struct ShiftRow {
    pub model: ModelKind,
    pub index: usize,
    pub offset: f64,
    pub value: f64,
}

#[derive(Debug, Clone)]
pub struct ShiftReport {
    pub n: usize,
    pub rows: Vec<ShiftRow>,
    /// `max - min` of the rendered value over the offsets, per model.
    pub spreads: Vec<(ModelKind, f64)>,
    /// Whether the zero-offset render equals the unshifted render exactly.
    pub zero_offset_exact: bool,
}

impl ShiftReport {
    pub fn spread(&self, model: ModelKind) -> Option<f64> {
        self.spreads.iter().find(|(m, _)| *m == model).map(|&(_, s)| s)
    }

    /// `spread(constant) / spread(linear)`.
    pub fn ratio(&self) -> Option<f64> {
        Some(self.spread(ModelKind::Constant)? / self.spread(ModelKind::Linear)?)
    }
}

/// Renders `field` on a uniform grid translated by `offsets` equally spaced
/// offsets in `[0, h)`.
pub fn shift_sensitivity(
    field: &AnalyticField,
    segment: RaySegment,
    far_plane: FarPlane,
    models: &[ModelKind],
    n: usize,
    offsets: usize,
    indexing: ColorIndexing,
) -> Result<ShiftReport> {
    let mut rows = Vec::new();
    let mut spreads = Vec::new();
    let mut zero_offset_exact = true;
    for &model in models {
        let n = interior_count(model, n);
        let base = volquad::ray::make_uniform_grid(segment, n)?;
        let h = base.min_gap();
        let unshifted = render_field(model, field, &base, far_plane, indexing)?[0];
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        for index in 0..offsets {
            let offset = h * index as f64 / offsets as f64;
            let grid = shifted_grid(&base, offset)?;
            let value = render_field(model, field, &grid, far_plane, indexing)?[0];
            if index == 0 && value != unshifted {
                zero_offset_exact = false;
            }
            lo = lo.min(value);
            hi = hi.max(value);
            rows.push(ShiftRow { model, index, offset, value });
        }
        spreads.push((model, hi - lo));
    }
    Ok(ShiftReport { n, rows, spreads, zero_offset_exact })
}

#[derive(Debug, Clone)]
pub struct RefinementReport {
    pub rows: Vec<(ModelKind, usize, f64)>,
    /// Log-log slope of spread against `N`, per model.
    pub slopes: Vec<(ModelKind, f64)>,
}

pub fn shift_refinement(
    field: &AnalyticField,
    segment: RaySegment,
    far_plane: FarPlane,
    models: &[ModelKind],
    ns: &[usize],
    offsets: usize,
    indexing: ColorIndexing,
) -> Result<RefinementReport> {
    let mut rows = Vec::new();
    let mut slopes = Vec::new();
    for &model in models {
        let mut points = Vec::new();
        for &n in ns {
            let report = shift_sensitivity(field, segment, far_plane, &[model], n, offsets, indexing)?;
            let spread = report.spread(model).unwrap_or(0.0);
            rows.push((model, interior_count(model, n), spread));
            points.push((n as f64, spread.max(f64::MIN_POSITIVE)));
        }
        slopes.push((model, convergence_slope(&points)?));
    }
    Ok(RefinementReport { rows, slopes })
}

// ---------------------------------------------------------------------------
// Gradient checks

#[derive(Debug, Clone)]
pub struct GradRow {
    pub target: &'static str,
    pub instance: usize,
    pub max_rel_err: f64,
}

#[derive(Debug, Clone)]
pub struct GradCheckReport {
    pub rows: Vec<GradRow>,
    /// Largest change of any surrogate sample under C-preserving
    /// perturbations (zero when bitwise unchanged).
    pub surrogate_change: f64,
    /// Smallest largest-change of the precise samples under the same
    /// perturbations; positive means they always moved.
    pub precise_min_change: f64,
}

impl GradCheckReport {
    pub const THRESHOLD: f64 = 1e-5;

    pub fn max_rel_err(&self) -> f64 {
        self.rows.iter().map(|r| r.max_rel_err).fold(0.0, f64::max)
    }

    pub fn passes(&self) -> bool {
        self.max_rel_err() < Self::THRESHOLD && self.surrogate_change == 0.0 && self.precise_min_change > 0.0
    }
}

fn grad_shape(rng: &mut ChaCha8Rng) -> RayShape {
    let far_plane = if rng.gen_bool(0.5) { FarPlane::Open } else { FarPlane::Opaque };
    RayShape { max_interior: 16, tau_min: 0.05, tau_max: 5.0, far_plane, degenerate_bins: 0.0 }
}

/// Analytic partials of rendered values and precise samples against central
/// differences with step `h`, plus the surrogate invariance check.
pub fn grad_check(instances: usize, seed: u64, h: f64) -> Result<GradCheckReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rows = Vec::new();
    for instance in 0..instances {
        let shape = grad_shape(&mut rng);
        let ray = random_ray(&mut rng, shape);
        for (model, target) in [(ModelKind::Constant, "render_tau_constant"), (ModelKind::Linear, "render_tau_linear")] {
            let analytic = grad_render_wrt_tau(model, &ray.grid, &ray.tau, &ray.colors, 0)?;
            let numeric = render_central_differences(model, &ray.grid, &ray.tau, &ray.colors, h)?;
            let max_rel_err = analytic.iter().zip(&numeric).map(|(&a, &n)| relative_error(a, n)).fold(0.0, f64::max);
            rows.push(GradRow { target, instance, max_rel_err });
        }

        // Sampler partials need an open far plane to perturb every opacity
        // and a draw safely inside a bin. Opaque boundary values are replaced
        // by their neighbours so that every entry is a genuine opacity.
        let mut values = ray.tau.values().to_vec();
        if shape.far_plane == FarPlane::Opaque {
            let last = values.len() - 1;
            values[0] = values[1];
            values[last] = values[last - 1];
        }
        let tau = OpacityTrace::new(values, FarPlane::Open)?;
        let cdf = ContinuousRayCdf::new(&ray.grid, &tau)?;
        let u = interior_draw(&mut rng, &cdf);
        let full = grad_sample_wrt_tau(&cdf, u, SampleGradMode::FullChain)?;
        let grid = ray.grid.clone();
        let f = move |t: &[f64]| -> Result<f64> {
            let tau = OpacityTrace::new(t.to_vec(), FarPlane::Open)?;
            Ok(precise_sample(&ContinuousRayCdf::new(&grid, &tau)?, u)?.distance)
        };
        let report = finite_diff_check(f, tau.values(), h, &full.partials)?;
        rows.push(GradRow { target: "sample_tau_full_chain", instance, max_rel_err: report.max_rel_err });

        let stop = grad_sample_wrt_tau(&cdf, u, SampleGradMode::StopGradient)?;
        let k = stop.bin;
        let s = cdf.points();
        let width = s[k + 1] - s[k];
        let offset = stop.distance - s[k];
        let slope = cdf.tau()[k + 1] - cdf.tau()[k];
        let q = slope * offset * offset / (2.0 * width) + cdf.tau()[k] * offset;
        let g = |p: &[f64]| Ok(volquad::sampling::solve_in_bin(p[0], p[1], width, q));
        let report = finite_diff_check(g, &[cdf.tau()[k], cdf.tau()[k + 1]], h, &stop.partials[k..k + 2])?;
        rows.push(GradRow { target: "sample_tau_stop_gradient", instance, max_rel_err: report.max_rel_err });
    }
    let (surrogate_change, precise_min_change) = surrogate_invariance(instances.min(20), seed ^ 0x5eed)?;
    Ok(GradCheckReport { rows, surrogate_change, precise_min_change })
}

/// Central differences of the first render channel over every opacity,
/// with steps `h max(1, |tau_k|)`. Opaque boundary values are fixed by
/// convention and get zero.
///
/// Subtracting two renders in floating point leaves an absolute error near
/// `1e-16 / h`, larger than many partials deep along a ray. The difference
/// `y(tau+) - y(tau-)` is instead expanded term by term: with mean depth
/// `Lbar_j` and half gap `g_j` of the two cumulative depths,
/// `T+_j - T-_j = -2 exp(-Lbar_j) sinh(g_j)`, and neighbouring terms are
/// differenced through `expm1` and `sinh` of per-interval quantities only.
pub fn render_central_differences(
    model: ModelKind,
    grid: &SampleGrid,
    tau: &OpacityTrace,
    colors: &ColorTrace,
    h: f64,
) -> Result<Vec<f64>> {
    let values = tau.values();
    let opaque = tau.far_plane() == FarPlane::Opaque;
    let mut numeric = Vec::with_capacity(values.len());
    for k in 0..values.len() {
        if opaque && (k == 0 || k + 1 == values.len()) {
            numeric.push(0.0);
            continue;
        }
        let step = h * values[k].abs().max(1.0);
        let (mut plus, mut minus) = (values.to_vec(), values.to_vec());
        plus[k] += step;
        minus[k] -= step;
        let width = plus[k] - minus[k];
        let plus = OpacityTrace::new(plus, tau.far_plane())?;
        let minus = OpacityTrace::new(minus, tau.far_plane())?;
        numeric.push(render_gap(model, grid, &plus, &minus, colors)? / width);
    }
    Ok(numeric)
}

/// `render(plus) - render(minus)` for the first channel, without cancellation.
fn render_gap(model: ModelKind, grid: &SampleGrid, plus: &OpacityTrace, minus: &OpacityTrace, colors: &ColorTrace) -> Result<f64> {
    let dp = interval_depths(model, grid, plus)?;
    let dm = interval_depths(model, grid, minus)?;
    let (mut lbar, mut g) = (0.0f64, 0.0f64);
    let mut total = 0.0;
    for j in 0..dp.len() {
        let e = (-lbar).exp();
        let sinh_g = f64::sinh(g);
        let dbar = 0.5 * (dp[j] + dm[j]);
        let dg = 0.5 * (dp[j] - dm[j]);
        let term = if !dbar.is_finite() || (-(lbar + dbar)).exp() == 0.0 {
            // Nothing survives this interval under either trace.
            -2.0 * e * sinh_g
        } else {
            let e_next = (-(lbar + dbar)).exp();
            let mass = -e * (-dbar).exp_m1();
            let sinh_step = -2.0 * (g + 0.5 * dg).cosh() * (0.5 * dg).sinh();
            -2.0 * (sinh_g * mass + e_next * sinh_step)
        };
        total += colors.color(j)[0] * term;
        lbar += dbar;
        g += dg;
    }
    Ok(total)
}

/// A draw whose sample lands well inside its bin.
fn interior_draw(rng: &mut ChaCha8Rng, cdf: &ContinuousRayCdf) -> f64 {
    let c = cdf.cumulative();
    loop {
        let k = rng.gen_range(0..c.len() - 1);
        let (lo, hi) = (c[k], c[k + 1]);
        if hi - lo > 1e-6 {
            return lo + (hi - lo) * rng.gen_range(0.1..0.9);
        }
    }
}

/// Perturbs a linear-model ray by `+eps, -eps, +eps, ...`, which leaves every
/// `tau_j + tau_{j+1}` and hence every `C_k` unchanged. Opacities are dyadic
/// so the sums are bitwise identical. Returns the largest surrogate-sample
/// change and the smallest per-ray largest precise-sample change.
pub fn surrogate_invariance(instances: usize, seed: u64) -> Result<(f64, f64)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let eps = 2f64.powi(-6);
    let mut surrogate_change: f64 = 0.0;
    let mut precise_min_change = f64::INFINITY;
    for _ in 0..instances {
        let n = rng.gen_range(2..=24);
        let grid = crate::instances::random_grid(&mut rng, n);
        let base: Vec<f64> = (0..n + 2).map(|_| rng.gen_range(16..=256) as f64 / 64.0).collect();
        let bumped: Vec<f64> = base.iter().enumerate().map(|(j, t)| if j % 2 == 0 { t + eps } else { t - eps }).collect();
        let a = OpacityTrace::new(base, FarPlane::Open)?;
        let b = OpacityTrace::new(bumped, FarPlane::Open)?;
        let (da, db) = (interval_pmf(ModelKind::Linear, &grid, &a)?, interval_pmf(ModelKind::Linear, &grid, &b)?);
        if da.cumulative() != db.cumulative() {
            return Err(volquad::Error::Internal("perturbation changed the cumulative values".into()));
        }
        let (sa, sb) = (DiscreteRayCdf::new(&grid, &da)?, DiscreteRayCdf::new(&grid, &db)?);
        let (pa, pb) = (ContinuousRayCdf::from_distribution(&grid, &a, &da)?, ContinuousRayCdf::from_distribution(&grid, &b, &db)?);
        let mut moved: f64 = 0.0;
        for u in draw_uniforms(200, UDraws::Stratified, rng.gen()) {
            let u = u * da.total_mass();
            surrogate_change = surrogate_change.max((surrogate_sample(&sa, u)? - surrogate_sample(&sb, u)?).abs());
            moved = moved.max((precise_sample(&pa, u)?.distance - precise_sample(&pb, u)?.distance).abs());
        }
        precise_min_change = precise_min_change.min(moved);
    }
    Ok((surrogate_change, precise_min_change))
}

// ---------------------------------------------------------------------------
// Quadratic pathology

#[derive(Debug, Clone)]
pub struct QuadraticProbe {
    pub fixture: QuadraticPatch,
    pub left: f64,
    pub right: f64,
    pub left_numeric: f64,
    pub factor: f64,
    /// `(tau_j, tau_{j+1}, alpha, threshold)` rows.
    pub thresholds: Vec<(f64, f64, f64, f64)>,
    /// Slope of the fixture's interpolant at its middle knot.
    pub fixture_slope: f64,
    pub fixture_limit: f64,
    pub random_patches: usize,
    pub max_random_rel_err: f64,
}

impl QuadraticProbe {
    pub fn threshold_unit(&self) -> f64 {
        self.thresholds[0].3
    }

    pub fn passes(&self) -> bool {
        self.left < 0.0 && self.factor > 1.0 && self.threshold_unit() == 6.0 && self.max_random_rel_err <= 1e-10
    }
}

pub fn quadratic_probe(random_patches: usize, seed: u64) -> Result<QuadraticProbe> {
    let fixture = pathology_fixture();
    let left = quad_integral_left(&fixture);
    let right = quad_integral_right(&fixture);
    let [s0, s1, _] = fixture.knots();
    let left_numeric = integrate_adaptive(|s| quad_eval(&fixture, s).unwrap_or(f64::NAN), s0, s1, 1e-13)?.value;
    let [t0, t1, t2] = fixture.tau();
    let (a, b, g) = (fixture.alpha(), fixture.beta(), fixture.gamma());
    let fixture_slope = -t0 * b / (a * g) - t1 * (b - a) / (a * b) + t2 * a / (g * b);
    let mut thresholds = Vec::new();
    for (tj, tj1, alpha) in [(1.0, 1.0, 1.0), (2.0, 2.0, 1.0), (1.0, 1.0, 0.5), (0.5, 2.0, 1.0), (t0, t1, a)] {
        thresholds.push((tj, tj1, alpha, instability_threshold(tj, tj1, alpha)?));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut max_random_rel_err: f64 = 0.0;
    for _ in 0..random_patches {
        let s0 = rng.gen_range(-5.0..5.0);
        let a = rng.gen_range(0.1..3.0);
        let b = rng.gen_range(0.1..3.0);
        let tau = [rng.gen_range(0.0..10.0), rng.gen_range(0.0..10.0), rng.gen_range(0.0..10.0)];
        let p = QuadraticPatch::new([s0, s0 + a, s0 + a + b], tau)?;
        let closed = quad_integral_left(&p) + quad_integral_right(&p);
        let numeric = integrate_adaptive(|s| quad_eval(&p, s).unwrap_or(f64::NAN), s0, s0 + a + b, 1e-13)?.value;
        max_random_rel_err = max_random_rel_err.max(relative_gap(closed, numeric));
    }
    Ok(QuadraticProbe {
        fixture,
        left,
        right,
        left_numeric,
        factor: (-left).exp(),
        thresholds,
        fixture_slope,
        fixture_limit: left_integral_limit(t0, t1, a, fixture_slope),
        random_patches,
        max_random_rel_err,
    })
}

// ---------------------------------------------------------------------------
// Depth

#[derive(Debug, Clone)]
pub struct DepthRow {
    pub model: ModelKind,
    pub index: usize,
    pub offset: f64,
    pub estimate: f64,
    pub oracle: f64,
}

#[derive(Debug, Clone)]
pub struct DepthReport {
    pub rows: Vec<DepthRow>,
    pub rmse: Vec<(ModelKind, f64)>,
}

impl DepthReport {
    pub fn rmse(&self, model: ModelKind) -> Option<f64> {
        self.rmse.iter().find(|(m, _)| *m == model).map(|&(_, r)| r)
    }
}

/// Expected depth over an offset sweep against the oracle mean termination
/// distance.
#[allow(clippy::too_many_arguments)]
pub fn depth(
    field: &AnalyticField,
    segment: RaySegment,
    far_plane: FarPlane,
    models: &[ModelKind],
    n: usize,
    offsets: usize,
    estimator: DepthEstimator,
    tol: f64,
) -> Result<DepthReport> {
    let oracle = true_termination_mean(field, segment, tol)?;
    let mut rows = Vec::new();
    let mut rmse = Vec::new();
    for &model in models {
        let base = volquad::ray::make_uniform_grid(segment, n)?;
        let h = base.min_gap();
        let mut sq = 0.0;
        for index in 0..offsets {
            let offset = h * index as f64 / offsets as f64;
            let grid = shifted_grid(&base, offset)?;
            let (tau, _) = sample_field(field, &grid, far_plane, ColorIndexing::Left)?;
            let dist = interval_pmf(model, &grid, &tau)?;
            let estimate = expected_depth(&dist, &grid, &tau, estimator)?;
            sq += (estimate - oracle).powi(2);
            rows.push(DepthRow { model, index, offset, estimate, oracle });
        }
        rmse.push((model, (sq / offsets as f64).sqrt()));
    }
    Ok(DepthReport { rows, rmse })
}

// ---------------------------------------------------------------------------
// Rendering over a rig

#[derive(Debug, Clone)]
pub struct PixelRow {
    pub model: ModelKind,
    pub ray: usize,
    pub parameter: f64,
    pub column: usize,
    pub offset_fraction: f64,
    pub samples: usize,
    pub value: f64,
    pub oracle: f64,
}

/// Renders every rig ray at `columns` sub-interval offsets, each through a
/// coarse pass of `n_coarse` samples refined with `n_fine` importance
/// samples (surrogate for the constant model, precise for the linear one).
/// Pixel rows run over rays, columns over offsets.
#[allow(clippy::too_many_arguments)]
pub fn render_rig(
    rays: &[RigRay],
    far_plane: FarPlane,
    models: &[ModelKind],
    n_coarse: usize,
    n_fine: usize,
    columns: usize,
    indexing: ColorIndexing,
    seed: u64,
    tol: f64,
) -> Result<Vec<PixelRow>> {
    let mut rows = Vec::new();
    for (ray_index, ray) in rays.iter().enumerate() {
        let oracle = oracle_render(&ray.field, ray.segment, far_plane, tol)?[0];
        let base = volquad::ray::make_uniform_grid(ray.segment, n_coarse)?;
        let h = base.min_gap();
        for &model in models {
            for column in 0..columns {
                let frac = column as f64 / columns as f64;
                let coarse = shifted_grid(&base, h * frac)?;
                let pixel_seed = seed ^ ((ray_index as u64) << 32) ^ column as u64;
                let grid = refine_grid(model, &ray.field, &coarse, far_plane, n_fine, pixel_seed)?;
                let value = render_field(model, &ray.field, &grid, far_plane, indexing)?[0];
                rows.push(PixelRow {
                    model,
                    ray: ray_index,
                    parameter: ray.parameter,
                    column,
                    offset_fraction: frac,
                    samples: grid.len(),
                    value,
                    oracle,
                });
            }
        }
    }
    Ok(rows)
}

/// The coarse grid merged with `n_fine` importance samples drawn from the
/// model's own coarse distribution.
pub fn refine_grid(
    model: ModelKind,
    field: &AnalyticField,
    coarse: &SampleGrid,
    far_plane: FarPlane,
    n_fine: usize,
    seed: u64,
) -> Result<SampleGrid> {
    if n_fine == 0 || model == ModelKind::Quadratic {
        return Ok(coarse.clone());
    }
    let (tau, _) = sample_field(field, coarse, far_plane, ColorIndexing::Left)?;
    let dist = interval_pmf(model, coarse, &tau)?;
    let sampler = if model == ModelKind::Linear { SamplerKind::Precise } else { SamplerKind::Surrogate };
    hierarchical_samples(&dist, coarse, &tau, n_fine, sampler, UDraws::Stratified, seed)
}

/// One-color trace helper used by the commands.
pub fn scalar_colors(values: &[f64]) -> Result<ColorTrace> {
    ColorTrace::scalar(values)
}
