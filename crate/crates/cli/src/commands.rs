//! Subcommands: run an experiment, write its tables and report the verdict
//! of each threshold.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use volquad::quadrature::DepthEstimator;
use volquad::ray::make_uniform_grid;
use volquad::sampling::SamplerKind;
use volquad::scenes::{sample_field, ColorIndexing, SceneSpec};
use volquad::ModelKind;

use crate::defaults::{self, Scene};
use crate::experiments::{self, GradCheckReport};
use crate::output::{float, GrayImage, Table};

/// Settings shared by every subcommand. `None` means the subcommand's own
/// default.
#[derive(Debug, Clone)]
pub struct Options {
    pub scene: Option<PathBuf>,
    pub models: Vec<ModelKind>,
    pub n_coarse: Option<usize>,
    pub n_fine: usize,
    pub offsets: usize,
    pub seed: u64,
    pub out: PathBuf,
    pub tol: f64,
    pub color_at: ColorIndexing,
    pub instances: Option<usize>,
    pub samples: Option<usize>,
}

impl Default for Options {
    fn default() -> Self {
        Self {
            scene: None,
            models: vec![ModelKind::Constant, ModelKind::Linear],
            n_coarse: None,
            n_fine: 64,
            offsets: 32,
            seed: 0,
            out: PathBuf::from("."),
            tol: 1e-10,
            color_at: ColorIndexing::Left,
            instances: None,
            samples: None,
        }
    }
}

impl Options {
    fn validate(&self) -> Result<()> {
        if self.models.is_empty() {
            bail!("at least one model is required");
        }
        if self.offsets == 0 || self.n_coarse == Some(0) || self.instances == Some(0) || self.samples == Some(0) {
            bail!("counts must be at least 1");
        }
        if !(self.tol > 0.0 && self.tol.is_finite()) {
            bail!("tolerance must be positive, got {}", self.tol);
        }
        if let Some(path) = &self.scene {
            if !path.is_file() {
                bail!("scene file {} does not exist", path.display());
            }
        }
        Ok(())
    }

    fn scene_or(&self, fallback: fn() -> Scene) -> Result<Scene> {
        match &self.scene {
            None => Ok(fallback()),
            Some(path) => load_scene(path),
        }
    }

    fn output(&self, name: &str) -> PathBuf {
        self.out.join(name)
    }

    fn has(&self, model: ModelKind) -> bool {
        self.models.contains(&model)
    }
}

pub fn load_scene(path: &Path) -> Result<Scene> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let spec = SceneSpec::from_toml(&text)?;
    Ok(Scene::from_spec(&spec)?)
}

/// One threshold and its outcome.
#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub requirement: String,
    pub pass: bool,
}

impl Check {
    fn new(name: impl Into<String>, value: f64, requirement: impl Into<String>, pass: bool) -> Self {
        Self { name: name.into(), value, requirement: requirement.into(), pass }
    }
}

#[derive(Debug, Clone, Default)]
pub struct Outcome {
    pub checks: Vec<Check>,
    pub files: Vec<PathBuf>,
}

impl Outcome {
    pub fn passes(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }

    fn table(&mut self, opts: &Options, name: &str, table: &Table) -> Result<()> {
        let path = opts.output(name);
        table.write(&path)?;
        self.files.push(path);
        Ok(())
    }

    fn image(&mut self, opts: &Options, name: &str, image: &GrayImage) -> Result<()> {
        let path = opts.output(name);
        image.write_pgm(&path)?;
        self.files.push(path);
        Ok(())
    }

    /// Writes the checks as `{command}_summary.csv`.
    fn summary(&mut self, opts: &Options, command: &str) -> Result<()> {
        let mut t = Table::new(&["check", "value", "requirement", "pass"]);
        for c in &self.checks {
            t.push(vec![c.name.clone(), float(c.value), c.requirement.clone(), c.pass.to_string()]);
        }
        self.table(opts, &format!("{command}_summary.csv"), &t)
    }
}

pub const COMMANDS: [&str; 7] =
    ["convergence", "shift-sensitivity", "sampler-test", "grad-check", "quadratic-probe", "render", "depth"];

pub fn run(command: &str, opts: &Options) -> Result<Outcome> {
    opts.validate()?;
    std::fs::create_dir_all(&opts.out).with_context(|| format!("creating {}", opts.out.display()))?;
    let mut outcome = match command {
        "convergence" => convergence(opts)?,
        "shift-sensitivity" => shift_sensitivity(opts)?,
        "sampler-test" => sampler_test(opts)?,
        "grad-check" => grad_check(opts)?,
        "quadratic-probe" => quadratic_probe(opts)?,
        "render" => render(opts)?,
        "depth" => depth(opts)?,
        other => bail!("unknown command '{other}'"),
    };
    outcome.summary(opts, command)?;
    Ok(outcome)
}

/// Render error against N for doubling N up to `--n-coarse` (256).
pub fn convergence(opts: &Options) -> Result<Outcome> {
    let scene = opts.scene_or(defaults::gaussian_bump)?;
    let max_n = opts.n_coarse.unwrap_or(256);
    let ns: Vec<usize> = std::iter::successors(Some(8usize), |n| Some(n * 2)).take_while(|&n| n <= max_n).collect();
    if ns.len() < 4 {
        bail!("convergence needs --n-coarse of at least 64 to fit a slope");
    }
    let report =
        experiments::convergence(&scene.field, scene.segment, scene.far_plane, &opts.models, &ns, opts.color_at, opts.tol)?;
    let mut t = Table::new(&["model", "n", "max_abs_error"]);
    for r in &report.rows {
        t.push(vec![r.model.name().into(), r.n.to_string(), float(r.error)]);
    }
    let mut out = Outcome::default();
    out.table(opts, "convergence.csv", &t)?;
    for &(model, slope) in &report.slopes {
        let check = match model {
            ModelKind::Linear => Check::new("slope_linear", slope, "<= -1.7", slope <= -1.7),
            ModelKind::Constant => {
                Check::new("slope_constant", slope, "in [-1.3, -0.7]", (-1.3..=-0.7).contains(&slope))
            }
            ModelKind::Quadratic => Check::new("slope_quadratic", slope, "reported", true),
        };
        out.checks.push(check);
    }
    Ok(out)
}

pub const SHIFT_RATIO: f64 = 3.0;

/// Rendered value over an offset sweep of a uniform grid, plus the spread
/// against N.
pub fn shift_sensitivity(opts: &Options) -> Result<Outcome> {
    let scene = opts.scene_or(defaults::logistic_wall)?;
    let n = opts.n_coarse.unwrap_or(32);
    let report =
        experiments::shift_sensitivity(&scene.field, scene.segment, scene.far_plane, &opts.models, n, opts.offsets, opts.color_at)?;
    let mut t = Table::new(&["model", "index", "offset", "value"]);
    for r in &report.rows {
        t.push(vec![r.model.name().into(), r.index.to_string(), float(r.offset), float(r.value)]);
    }
    let mut out = Outcome::default();
    out.table(opts, "shift-sensitivity.csv", &t)?;

    let ns: Vec<usize> = (0..4).map(|i| n << i).collect();
    let refinement =
        experiments::shift_refinement(&scene.field, scene.segment, scene.far_plane, &opts.models, &ns, opts.offsets, opts.color_at)?;
    let mut t = Table::new(&["model", "n", "spread"]);
    for (model, n, spread) in &refinement.rows {
        t.push(vec![model.name().into(), n.to_string(), float(*spread)]);
    }
    out.table(opts, "shift-sensitivity_refinement.csv", &t)?;

    for &(model, spread) in &report.spreads {
        out.checks.push(Check::new(format!("spread_{}", model.name()), spread, "reported", true));
    }
    if let Some(ratio) = report.ratio() {
        out.checks.push(Check::new("spread_ratio_constant_over_linear", ratio, ">= 3", ratio >= SHIFT_RATIO));
    }
    for &(model, slope) in &refinement.slopes {
        out.checks.push(Check::new(format!("spread_slope_{}", model.name()), slope, "< 0", slope < 0.0));
    }
    let exact = if report.zero_offset_exact { 1.0 } else { 0.0 };
    out.checks.push(Check::new("zero_offset_matches_unshifted", exact, "== 1", report.zero_offset_exact));
    Ok(out)
}

fn sampler_name(s: SamplerKind) -> &'static str {
    match s {
        SamplerKind::Surrogate => "surrogate",
        SamplerKind::Precise => "precise",
    }
}

/// KS statistics of both samplers on the scene, on a near-transparent slab
/// and of the precise sampler on random rays.
pub fn sampler_test(opts: &Options) -> Result<Outcome> {
    let scene = opts.scene_or(defaults::steep_sampler_fixture)?;
    let n = opts.samples.unwrap_or(100_000);
    let instances = opts.instances.unwrap_or(10);
    let mut rows = Vec::new();
    let grid = make_uniform_grid(scene.segment, opts.n_coarse.unwrap_or(16))?;
    let (tau, _) = sample_field(&scene.field, &grid, scene.far_plane, ColorIndexing::Left)?;
    for sampler in [SamplerKind::Precise, SamplerKind::Surrogate] {
        rows.push(experiments::ks_test("scene", &grid, &tau, sampler, n, opts.seed)?);
    }
    let thin = defaults::thin_uniform_fixture();
    let thin_grid = make_uniform_grid(thin.segment, 1)?;
    let (thin_tau, _) = sample_field(&thin.field, &thin_grid, thin.far_plane, ColorIndexing::Left)?;
    for sampler in [SamplerKind::Precise, SamplerKind::Surrogate] {
        rows.push(experiments::ks_test("thin_uniform", &thin_grid, &thin_tau, sampler, n, opts.seed)?);
    }
    rows.extend(experiments::ks_random(instances, n, opts.seed)?);

    let mut t = Table::new(&["instance", "sampler", "n", "statistic", "critical", "pass"]);
    for r in &rows {
        t.push(vec![
            r.instance.clone(),
            sampler_name(r.sampler).into(),
            r.n.to_string(),
            float(r.statistic),
            float(r.critical),
            r.passes().to_string(),
        ]);
    }
    let mut out = Outcome::default();
    out.table(opts, "sampler-test.csv", &t)?;
    for r in &rows {
        let name = format!("ks_{}_{}", r.instance, sampler_name(r.sampler));
        let check = if r.instance == "scene" && r.sampler == SamplerKind::Surrogate {
            Check::new(name, r.statistic, "> critical", !r.passes())
        } else {
            Check::new(name, r.statistic, "< critical", r.passes())
        };
        out.checks.push(check);
    }
    Ok(out)
}

/// Analytic partials against central differences on random rays.
pub fn grad_check(opts: &Options) -> Result<Outcome> {
    let report = experiments::grad_check(opts.instances.unwrap_or(100), opts.seed, 1e-6)?;
    let mut t = Table::new(&["target", "instance", "max_rel_err"]);
    let mut rows = report.rows.clone();
    rows.sort_by(|a, b| a.target.cmp(b.target).then(a.instance.cmp(&b.instance)));
    for r in &rows {
        t.push(vec![r.target.into(), r.instance.to_string(), float(r.max_rel_err)]);
    }
    let mut out = Outcome::default();
    out.table(opts, "grad-check.csv", &t)?;
    let mut targets: Vec<&str> = rows.iter().map(|r| r.target).collect();
    targets.dedup();
    for target in targets {
        let worst = rows.iter().filter(|r| r.target == target).map(|r| r.max_rel_err).fold(0.0, f64::max);
        out.checks.push(Check::new(format!("max_rel_err_{target}"), worst, "< 1e-5", worst < GradCheckReport::THRESHOLD));
    }
    out.checks.push(Check::new("surrogate_sample_change", report.surrogate_change, "== 0", report.surrogate_change == 0.0));
    out.checks.push(Check::new("precise_sample_change", report.precise_min_change, "> 0", report.precise_min_change > 0.0));
    Ok(out)
}

/// The quadratic pathology fixture, the threshold table and the closed-form
/// integrals on random patches.
pub fn quadratic_probe(opts: &Options) -> Result<Outcome> {
    let probe = experiments::quadratic_probe(opts.instances.unwrap_or(200), opts.seed)?;
    let mut t = Table::new(&["tau_j", "tau_j1", "alpha", "threshold"]);
    for &(a, b, alpha, th) in &probe.thresholds {
        t.push(vec![float(a), float(b), float(alpha), float(th)]);
    }
    let mut out = Outcome::default();
    out.table(opts, "quadratic-probe.csv", &t)?;
    out.checks.push(Check::new("fixture_left_integral", probe.left, "< 0", probe.left < 0.0));
    out.checks.push(Check::new("fixture_right_integral", probe.right, "reported", true));
    out.checks.push(Check::new(
        "fixture_left_vs_numeric",
        experiments::relative_gap(probe.left, probe.left_numeric),
        "<= 1e-10",
        experiments::relative_gap(probe.left, probe.left_numeric) <= 1e-10,
    ));
    out.checks.push(Check::new("fixture_transmittance_factor", probe.factor, "> 1", probe.factor > 1.0));
    out.checks.push(Check::new("fixture_middle_slope", probe.fixture_slope, "reported", true));
    out.checks.push(Check::new("fixture_slope_limit", probe.fixture_limit, "reported", true));
    out.checks.push(Check::new("threshold_unit_patch", probe.threshold_unit(), "== 6", probe.threshold_unit() == 6.0));
    out.checks.push(Check::new(
        "random_patch_max_rel_err",
        probe.max_random_rel_err,
        "<= 1e-10",
        probe.max_random_rel_err <= 1e-10,
    ));
    Ok(out)
}

/// Renders a ray rig per model, writing one graymap per model, one for the
/// oracle and one absolute difference map per model.
pub fn render(opts: &Options) -> Result<Outcome> {
    let scene = opts.scene_or(defaults::grazing_wall)?;
    let Some(rig) = &scene.rig else { bail!("the render command needs a scene with a rig") };
    let rays = rig.rays(&scene.field, scene.segment)?;
    let n_coarse = opts.n_coarse.unwrap_or(128);
    let columns = opts.offsets;
    let rows = experiments::render_rig(
        &rays,
        scene.far_plane,
        &opts.models,
        n_coarse,
        opts.n_fine,
        columns,
        opts.color_at,
        opts.seed,
        opts.tol,
    )?;
    let mut t = Table::new(&["model", "ray", "parameter", "column", "offset_fraction", "samples", "value", "oracle", "abs_diff"]);
    for r in &rows {
        t.push(vec![
            r.model.name().into(),
            r.ray.to_string(),
            float(r.parameter),
            r.column.to_string(),
            float(r.offset_fraction),
            r.samples.to_string(),
            float(r.value),
            float(r.oracle),
            float((r.value - r.oracle).abs()),
        ]);
    }
    let mut out = Outcome::default();
    out.table(opts, "render.csv", &t)?;

    let mut oracle = GrayImage::new(columns, rays.len());
    for r in &rows {
        oracle.set(r.column, r.ray, r.oracle);
    }
    out.image(opts, "render_oracle.pgm", &oracle)?;
    for &model in &opts.models {
        let mine: Vec<_> = rows.iter().filter(|r| r.model == model).collect();
        let mut image = GrayImage::new(columns, rays.len());
        let mut diff = GrayImage::new(columns, rays.len());
        let max_diff = mine.iter().map(|r| (r.value - r.oracle).abs()).fold(0.0, f64::max);
        let mean_diff = mine.iter().map(|r| (r.value - r.oracle).abs()).sum::<f64>() / mine.len().max(1) as f64;
        for r in &mine {
            image.set(r.column, r.ray, r.value);
            // Differences are normalized by the model's own maximum.
            let d = if max_diff > 0.0 { (r.value - r.oracle).abs() / max_diff } else { 0.0 };
            diff.set(r.column, r.ray, d);
        }
        out.image(opts, &format!("render_{}.pgm", model.name()), &image)?;
        out.image(opts, &format!("render_diff_{}.pgm", model.name()), &diff)?;
        out.checks.push(Check::new(format!("max_abs_diff_{}", model.name()), max_diff, "reported", true));
        out.checks.push(Check::new(format!("mean_abs_diff_{}", model.name()), mean_diff, "reported", true));
    }
    Ok(out)
}

/// Expected depth against the oracle mean termination distance over an
/// offset sweep, with both estimators.
pub fn depth(opts: &Options) -> Result<Outcome> {
    let scene = opts.scene_or(defaults::logistic_wall)?;
    let n = opts.n_coarse.unwrap_or(32);
    let estimators = [
        ("midpoint", DepthEstimator::Midpoint),
        ("monte_carlo", DepthEstimator::MonteCarlo { samples: opts.samples.unwrap_or(4096), seed: opts.seed }),
    ];
    let mut t = Table::new(&["estimator", "model", "index", "offset", "estimate", "oracle"]);
    let mut out = Outcome::default();
    let mut reports = Vec::new();
    for (name, estimator) in estimators {
        let report =
            experiments::depth(&scene.field, scene.segment, scene.far_plane, &opts.models, n, opts.offsets, estimator, opts.tol)?;
        for r in &report.rows {
            t.push(vec![
                name.into(),
                r.model.name().into(),
                r.index.to_string(),
                float(r.offset),
                float(r.estimate),
                float(r.oracle),
            ]);
        }
        reports.push((name, report));
    }
    out.table(opts, "depth.csv", &t)?;
    for (name, report) in &reports {
        for &(model, rmse) in &report.rmse {
            out.checks.push(Check::new(format!("rmse_{name}_{}", model.name()), rmse, "reported", true));
        }
        if opts.has(ModelKind::Constant) && opts.has(ModelKind::Linear) {
            let (c, l) = (report.rmse(ModelKind::Constant).unwrap(), report.rmse(ModelKind::Linear).unwrap());
            out.checks.push(Check::new(format!("rmse_{name}_linear_minus_constant"), l - c, "<= 0", l <= c));
        }
    }
    Ok(out)
}
