//! Random rays for the randomized checks.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use volquad::scenes::{AnalyticField, ColorProfile, FieldKind, Interpolation};
use volquad::{ColorTrace, FarPlane, ModelKind, OpacityTrace, RaySegment, SampleGrid};

/// A sampled ray together with the continuous field it came from.
#[derive(Debug, Clone)]
pub struct RandomRay {
    pub grid: SampleGrid,
    pub tau: OpacityTrace,
    pub colors: ColorTrace,
}

#[derive(Debug, Clone, Copy)]
pub struct RayShape {
    pub max_interior: usize,
    pub tau_min: f64,
    pub tau_max: f64,
    pub far_plane: FarPlane,
    /// Probability that a bin gets a near-copy of its left opacity.
    pub degenerate_bins: f64,
}

impl Default for RayShape {
    fn default() -> Self {
        Self { max_interior: 64, tau_min: 1e-6, tau_max: 10.0, far_plane: FarPlane::Open, degenerate_bins: 0.0 }
    }
}

/// Irregular grid with `n` interior samples, no two closer than a small
/// fraction of the mean gap.
pub fn random_grid(rng: &mut ChaCha8Rng, n: usize) -> SampleGrid {
    let near = rng.gen_range(0.0..2.0);
    let far = near + rng.gen_range(0.5..5.0);
    let segment = RaySegment::new(near, far).expect("valid segment");
    loop {
        let mut interior: Vec<f64> = (0..n).map(|_| rng.gen_range(near..far)).collect();
        interior.sort_by(f64::total_cmp);
        let min_gap = (far - near) / (n as f64 + 1.0) * 1e-3;
        let mut pts = vec![near];
        pts.extend(&interior);
        pts.push(far);
        if pts.windows(2).all(|w| w[1] - w[0] > min_gap) {
            return SampleGrid::new(segment, interior).expect("strictly increasing");
        }
    }
}

/// Log-uniform opacity in `[lo, hi]`.
pub fn log_uniform(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> f64 {
    (rng.gen_range(lo.ln()..=hi.ln())).exp().clamp(lo, hi)
}

pub fn random_ray(rng: &mut ChaCha8Rng, shape: RayShape) -> RandomRay {
    let n = rng.gen_range(1..=shape.max_interior);
    let grid = random_grid(rng, n);
    let mut values: Vec<f64> = Vec::with_capacity(n + 2);
    for k in 0..n + 2 {
        let fresh = log_uniform(rng, shape.tau_min, shape.tau_max);
        let v = if k > 0 && rng.gen_bool(shape.degenerate_bins) {
            let prev: f64 = values[k - 1];
            (prev + rng.gen_range(-1e-10..1e-10)).clamp(shape.tau_min, shape.tau_max)
        } else {
            fresh
        };
        values.push(v);
    }
    let tau = OpacityTrace::ingest(values, shape.far_plane).expect("finite opacities");
    let colors: Vec<f64> = (0..n + 1).map(|_| rng.gen_range(0.0..=1.0)).collect();
    let colors = ColorTrace::scalar(&colors).expect("colors in range");
    RandomRay { grid, tau, colors }
}

/// The continuous field of which `ray` is an exact sample under `model`:
/// opacity interpolated between samples (linear) or held from the left
/// sample (constant), and color held per interval.
pub fn model_field(ray: &RandomRay, model: ModelKind) -> AnalyticField {
    let interpolation = match model {
        ModelKind::Constant => Interpolation::Step,
        _ => Interpolation::Linear,
    };
    let field = FieldKind::Tabulated {
        knots: ray.grid.points().to_vec(),
        values: ray.tau.values().to_vec(),
        interpolation,
    };
    let color = ColorProfile::Piecewise {
        breaks: ray.grid.interior().to_vec(),
        values: (0..ray.colors.len()).map(|j| ray.colors.color(j).to_vec()).collect(),
    };
    AnalyticField::new(field, color).expect("sampled ray is a valid field")
}
