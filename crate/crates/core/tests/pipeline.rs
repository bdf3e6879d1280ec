use volquad::gradients::grad_render_wrt_positions;
use volquad::oracle::{true_render, true_termination_mean};
use volquad::quadrature::{expected_depth, DepthEstimator};
use volquad::ray::make_uniform_grid;
use volquad::sampling::{hierarchical_samples, SamplerKind, UDraws};
use volquad::scenes::{sample_field, AnalyticField, ColorIndexing, FieldKind, SceneSpec};
use volquad::{interval_pmf, render, ColorTrace, FarPlane, ModelKind, RaySegment, SampleGrid};

const SCENE: &str = r#"
far_plane = "open"

[segment]
near = 0.0
far = 3.0

[field]
kind = "constant_slab"
tau = 0.7
start = 0.0
end = 3.0

[color]
kind = "uniform"
value = [0.25, 0.5, 1.0]
"#;

#[test]
fn slab_scene_file_renders_its_closed_form() {
    let spec = SceneSpec::from_toml(SCENE).unwrap();
    let field = spec.field().unwrap();
    let segment = spec.segment().unwrap();
    let alpha = 1.0 - (-0.7f64 * 3.0).exp();
    let oracle = true_render(&field, segment, 1e-12).unwrap();
    for (ch, c) in [0.25, 0.5, 1.0].iter().enumerate() {
        assert!((oracle[ch] - c * alpha).abs() < 1e-11);
    }
    let grid = make_uniform_grid(segment, 9).unwrap();
    let (tau, colors) = sample_field(&field, &grid, spec.far_plane, ColorIndexing::Left).unwrap();
    for model in [ModelKind::Constant, ModelKind::Linear] {
        let y = render(&interval_pmf(model, &grid, &tau).unwrap(), &colors).unwrap();
        for (a, b) in y.iter().zip(&oracle) {
            assert!((a - b).abs() < 1e-12, "{model:?}: {a} vs {b}");
        }
    }
}

/// Optical-depth rate `dL/ds_k` recovered from the render gradient of a
/// unit-color ray with an open far plane, where `y = 1 - exp(-L)`.
fn depth_rate(model: ModelKind, field: &AnalyticField, grid: &SampleGrid, k: usize) -> f64 {
    let (tau, _) = sample_field(field, grid, FarPlane::Open, ColorIndexing::Left).unwrap();
    let colors = ColorTrace::uniform(grid.interval_count(), &[1.0]).unwrap();
    let dist = interval_pmf(model, grid, &tau).unwrap();
    let y = render(&dist, &colors).unwrap()[0];
    grad_render_wrt_positions(model, grid, &tau, &colors, 0).unwrap()[k] / (1.0 - y)
}

#[test]
fn constant_position_gradient_jumps_at_slab_edge() {
    let tau0 = 2.0;
    let field = AnalyticField::with_unit_color(FieldKind::ConstantSlab { tau: tau0, start: 1.0, end: 3.0 }).unwrap();
    let segment = RaySegment::new(0.0, 4.0).unwrap();
    let around = |s: f64| {
        SampleGrid::new(segment, vec![0.5, s, 1.5, 2.0, 2.5, 3.5]).unwrap()
    };
    let (before, after) = (around(1.0 - 1e-7), around(1.0 + 1e-7));
    let jump = |model| depth_rate(model, &field, &after, 1) - depth_rate(model, &field, &before, 1);
    // The crossing sample now owns a full interval of slab opacity.
    assert!((jump(ModelKind::Constant) + tau0).abs() < 1e-5, "{}", jump(ModelKind::Constant));
    // Under the linear model the rate depends only on the neighbours.
    assert!(jump(ModelKind::Linear).abs() < 1e-12, "{}", jump(ModelKind::Linear));
}

#[test]
fn hierarchical_grid_keeps_coarse_samples() {
    let field = AnalyticField::with_unit_color(FieldKind::LogisticStep { amplitude: 10.0, steepness: 40.0, center: 1.0 })
        .unwrap();
    let segment = RaySegment::new(0.0, 2.0).unwrap();
    let coarse = make_uniform_grid(segment, 31).unwrap();
    let (tau, _) = sample_field(&field, &coarse, FarPlane::Opaque, ColorIndexing::Left).unwrap();
    for (model, sampler) in [(ModelKind::Constant, SamplerKind::Surrogate), (ModelKind::Linear, SamplerKind::Precise)] {
        let dist = interval_pmf(model, &coarse, &tau).unwrap();
        let fine = hierarchical_samples(&dist, &coarse, &tau, 64, sampler, UDraws::Stratified, 3).unwrap();
        assert!(fine.len() <= 31 + 64 && fine.len() > 31);
        assert!(coarse.interior().iter().all(|s| fine.interior().contains(s)));
        // Fine samples concentrate behind the wall.
        let added: Vec<f64> = fine.interior().iter().copied().filter(|s| !coarse.interior().contains(s)).collect();
        let near_wall = added.iter().filter(|&&s| (0.9..1.3).contains(&s)).count();
        assert!(near_wall * 2 > added.len(), "{model:?}: {near_wall} of {}", added.len());
    }
}

#[test]
fn linear_depth_tracks_oracle_on_wall() {
    let field = AnalyticField::with_unit_color(FieldKind::LogisticStep { amplitude: 10.0, steepness: 40.0, center: 1.0 })
        .unwrap();
    let segment = RaySegment::new(0.0, 2.0).unwrap();
    let oracle = true_termination_mean(&field, segment, 1e-10).unwrap();
    let grid = make_uniform_grid(segment, 255).unwrap();
    let (tau, _) = sample_field(&field, &grid, FarPlane::Opaque, ColorIndexing::Left).unwrap();
    let dist = interval_pmf(ModelKind::Linear, &grid, &tau).unwrap();
    let d = expected_depth(&dist, &grid, &tau, DepthEstimator::Midpoint).unwrap();
    assert!((d - oracle).abs() < 1e-3, "{d} vs {oracle}");
}
