//! Closed-form transmittance, interval probabilities, rendered color and
//! expected depth under the constant and linear opacity models.
//!
//! Both models reduce to a per-interval optical depth `d_j`:
//!
//! * constant: `d_j = tau_j (s_{j+1} - s_j)` (left sample owns the interval)
//! * linear:   `d_j = (tau_j + tau_{j+1}) (s_{j+1} - s_j) / 2`
//!
//! Transmittance is `T_k = exp(-sum_{j<k} d_j)`, accumulated in log space and
//! exponentiated once per entry, and `P_j = T_j (1 - exp(-d_j))`.

use crate::error::{invalid, Error, Result};
use crate::ray::{ColorTrace, FarPlane, ModelKind, OpacityTrace, SampleGrid};
use crate::sampling::{self, ContinuousRayCdf, DiscreteRayCdf};

/// Tolerance of the internal `P_j == T_j - T_{j+1}` cross-check.
const PMF_CROSS_CHECK: f64 = 1e-12;

/// Discrete ray-termination distribution over the intervals of one grid.
#[derive(Debug, Clone, PartialEq)]
pub struct RayDistribution {
    model: ModelKind,
    optical_depth: Vec<f64>,
    transmittance: Vec<f64>,
    pmf: Vec<f64>,
    cumulative: Vec<f64>,
}

impl RayDistribution {
    pub fn model(&self) -> ModelKind {
        self.model
    }

    /// `T_0, ..., T_{N+1}`.
    pub fn transmittance(&self) -> &[f64] {
        &self.transmittance
    }

    /// `P_0, ..., P_N`.
    pub fn pmf(&self) -> &[f64] {
        &self.pmf
    }

    /// `C_0 = 0, ..., C_{N+1}` with `C_k = sum_{j<k} P_j`.
    pub fn cumulative(&self) -> &[f64] {
        &self.cumulative
    }

    /// Cumulative optical depth `-ln T_k`, which stays finite where `T_k`
    /// underflows.
    pub fn optical_depth(&self) -> &[f64] {
        &self.optical_depth
    }

    pub fn total_mass(&self) -> f64 {
        *self.cumulative.last().expect("distribution is never empty")
    }
}

fn check_inputs(grid: &SampleGrid, tau: &OpacityTrace) -> Result<()> {
    tau.check_grid(grid)?;
    tau.check_nonnegative()
}

/// Optical depth of every interval under `model`.
pub fn interval_depths(model: ModelKind, grid: &SampleGrid, tau: &OpacityTrace) -> Result<Vec<f64>> {
    check_inputs(grid, tau)?;
    let s = grid.points();
    let t = tau.values();
    let n = grid.interval_count();
    let mut depths: Vec<f64> = match model {
        ModelKind::Constant => (0..n).map(|j| t[j] * (s[j + 1] - s[j])).collect(),
        ModelKind::Linear => (0..n)
            .map(|j| 0.5 * (t[j] + t[j + 1]) * (s[j + 1] - s[j]))
            .collect(),
        ModelKind::Quadratic => {
            return Err(invalid(
                "quadratic opacity lives in the polynomial module, not in the closed-form quadrature",
            ))
        }
    };
    // The far sample owns no interval under the constant model, so an opaque
    // far plane is expressed by letting the last interval absorb everything.
    if model == ModelKind::Constant && tau.far_plane() == FarPlane::Opaque {
        depths[n - 1] = f64::INFINITY;
    }
    Ok(depths)
}

fn cumulative_depth(depths: &[f64]) -> Vec<f64> {
    let mut acc = 0.0;
    let mut out = Vec::with_capacity(depths.len() + 1);
    out.push(0.0);
    for d in depths {
        acc += d;
        out.push(acc);
    }
    out
}

/// `T_k = prod_{j<=k} exp(-tau_{j-1} (s_j - s_{j-1}))`.
pub fn transmittance_constant(grid: &SampleGrid, tau: &OpacityTrace) -> Result<Vec<f64>> {
    let depths = interval_depths(ModelKind::Constant, grid, tau)?;
    Ok(cumulative_depth(&depths).iter().map(|l| (-l).exp()).collect())
}

/// `T_k = prod_{j<=k} exp(-(tau_j + tau_{j-1}) (s_j - s_{j-1}) / 2)`.
pub fn transmittance_linear(grid: &SampleGrid, tau: &OpacityTrace) -> Result<Vec<f64>> {
    let depths = interval_depths(ModelKind::Linear, grid, tau)?;
    Ok(cumulative_depth(&depths).iter().map(|l| (-l).exp()).collect())
}

/// Interval probabilities, transmittance and cumulative values for the
/// constant or linear model.
pub fn interval_pmf(model: ModelKind, grid: &SampleGrid, tau: &OpacityTrace) -> Result<RayDistribution> {
    let depths = interval_depths(model, grid, tau)?;
    RayDistribution::from_depths(model, &depths)
}

impl RayDistribution {
    /// Builds the distribution from per-interval optical depths. Depths may
    /// be negative (the quadratic model produces them) but not NaN.
    pub(crate) fn from_depths(model: ModelKind, depths: &[f64]) -> Result<Self> {
        if depths.iter().any(|d| d.is_nan()) {
            return Err(Error::Internal("NaN optical depth".into()));
        }
        let optical_depth = cumulative_depth(depths);
        let transmittance: Vec<f64> = optical_depth.iter().map(|l| (-l).exp()).collect();

        let pmf: Vec<f64> = depths
            .iter()
            .zip(&transmittance)
            .map(|(&d, &t)| -t * (-d).exp_m1())
            .collect();

        for (j, &p) in pmf.iter().enumerate() {
            let telescoped = transmittance[j] - transmittance[j + 1];
            let scale = transmittance[j].max(1.0);
            if (p - telescoped).abs() > PMF_CROSS_CHECK * scale {
                return Err(Error::Internal(format!(
                    "P_{j} = {p} disagrees with T_{j} - T_{} = {telescoped}",
                    j + 1
                )));
            }
        }

        let mut cumulative = Vec::with_capacity(pmf.len() + 1);
        let mut acc = 0.0;
        cumulative.push(acc);
        for p in &pmf {
            acc += p;
            cumulative.push(acc);
        }

        Ok(Self { model, optical_depth, transmittance, pmf, cumulative })
    }
}

/// `y = sum_j P_j c_j`, per channel.
pub fn render(dist: &RayDistribution, colors: &ColorTrace) -> Result<Vec<f64>> {
    if colors.len() != dist.pmf.len() {
        return Err(invalid(format!(
            "distribution has {} intervals but {} colors were given",
            dist.pmf.len(),
            colors.len()
        )));
    }
    let mut out = vec![0.0; colors.channels()];
    for (j, &p) in dist.pmf.iter().enumerate() {
        for (acc, c) in out.iter_mut().zip(colors.color(j)) {
            *acc += p * c;
        }
    }
    Ok(out)
}

/// The inputs needed to render one ray.
#[derive(Debug, Clone)]
pub struct RaySamples {
    pub grid: SampleGrid,
    pub tau: OpacityTrace,
    pub colors: ColorTrace,
}

/// Renders each ray independently.
pub fn render_batch(model: ModelKind, rays: &[RaySamples]) -> Vec<Result<Vec<f64>>> {
    rays.iter()
        .map(|r| interval_pmf(model, &r.grid, &r.tau).and_then(|d| render(&d, &r.colors)))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DepthEstimator {
    /// `sum_j P_j (s_j + s_{j+1}) / 2`.
    Midpoint,
    /// Mean of `samples` inverse-CDF draws. Linear distributions use
    /// [`sampling::precise_sample`], constant ones the surrogate sampler.
    /// Draws beyond the distribution's total mass terminate at the far bound.
    MonteCarlo { samples: usize, seed: u64 },
}

/// Expected ray-termination distance.
pub fn expected_depth(
    dist: &RayDistribution,
    grid: &SampleGrid,
    tau: &OpacityTrace,
    estimator: DepthEstimator,
) -> Result<f64> {
    if dist.pmf.len() != grid.interval_count() {
        return Err(invalid("distribution and grid disagree on the interval count"));
    }
    match estimator {
        DepthEstimator::Midpoint => {
            let s = grid.points();
            Ok(dist
                .pmf
                .iter()
                .enumerate()
                .map(|(j, p)| p * 0.5 * (s[j] + s[j + 1]))
                .sum())
        }
        DepthEstimator::MonteCarlo { samples, seed } => {
            if samples == 0 {
                return Err(invalid("Monte Carlo depth needs at least one sample"));
            }
            let us = sampling::draw_uniforms(samples, sampling::UDraws::Uniform, seed);
            let total: f64 = match dist.model {
                ModelKind::Linear => {
                    let cdf = ContinuousRayCdf::from_distribution(grid, tau, dist)?;
                    let mut acc = 0.0;
                    for u in us {
                        acc += sampling::precise_sample(&cdf, u)?.distance;
                    }
                    acc
                }
                ModelKind::Constant => {
                    let cdf = DiscreteRayCdf::new(grid, dist)?;
                    let mut acc = 0.0;
                    for u in us {
                        acc += sampling::surrogate_sample(&cdf, u)?;
                    }
                    acc
                }
                ModelKind::Quadratic => return Err(invalid("no sampler for the quadratic model")),
            };
            Ok(total / samples as f64)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ray::{make_uniform_grid, RaySegment};

    fn unit_grid() -> SampleGrid {
        // near 0, samples 1 and 2, far 3
        make_uniform_grid(RaySegment::new(0.0, 3.0).unwrap(), 2).unwrap()
    }

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn constant_transmittance_hand_values() {
        let tau = OpacityTrace::new(vec![0.0, 1.0, 2.0, 0.0], FarPlane::Open).unwrap();
        let t = transmittance_constant(&unit_grid(), &tau).unwrap();
        assert_eq!(t[0], 1.0);
        assert_eq!(t[1], 1.0);
        assert!(close(t[2], 0.367_879_441_171_442_3, 1e-15));
        assert!(close(t[3], 0.049_787_068_367_863_94, 1e-15));
    }

    #[test]
    fn vanishing_opacity_keeps_light() {
        let g = make_uniform_grid(RaySegment::new(0.0, 1e-3).unwrap(), 5).unwrap();
        let tau = OpacityTrace::new(vec![1e-6; 7], FarPlane::Open).unwrap();
        for t in transmittance_constant(&g, &tau).unwrap() {
            assert!(close(t, 1.0, 1e-5));
        }
    }

    #[test]
    fn single_factor_product() {
        let g = SampleGrid::new(RaySegment::new(0.0, 2.0).unwrap(), vec![0.5]).unwrap();
        let tau = OpacityTrace::new(vec![1.7, 0.3, 0.0], FarPlane::Open).unwrap();
        let t = transmittance_constant(&g, &tau).unwrap();
        assert_eq!(t[1], (-1.7f64 * 0.5).exp());
    }

    #[test]
    fn linear_transmittance_trapezoid() {
        let g = SampleGrid::new(RaySegment::new(0.0, 2.0).unwrap(), vec![1.0]).unwrap();
        let tau = OpacityTrace::new(vec![1.0, 3.0, 0.0], FarPlane::Open).unwrap();
        let t = transmittance_linear(&g, &tau).unwrap();
        assert!(close(t[1], 0.135_335_283_236_612_7, 1e-15));
        // tau = 0 at both ends of an interval leaves the light untouched
        let tau = OpacityTrace::new(vec![0.0, 0.0, 1.0], FarPlane::Open).unwrap();
        assert_eq!(transmittance_linear(&g, &tau).unwrap()[1], 1.0);
    }

    #[test]
    fn uniform_tau_makes_models_agree() {
        let g = make_uniform_grid(RaySegment::new(0.5, 3.0).unwrap(), 9).unwrap();
        let tau = OpacityTrace::new(vec![0.8; 11], FarPlane::Open).unwrap();
        let a = transmittance_constant(&g, &tau).unwrap();
        let b = transmittance_linear(&g, &tau).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert!(close(*x, *y, 1e-15));
        }
    }

    #[test]
    fn constant_pmf_hand_values() {
        let tau = OpacityTrace::new(vec![0.0, 1.0, 2.0, 0.0], FarPlane::Open).unwrap();
        let d = interval_pmf(ModelKind::Constant, &unit_grid(), &tau).unwrap();
        assert_eq!(d.pmf()[0], 0.0);
        assert!(close(d.pmf()[1], 0.632_120_558_828_557_7, 1e-15));
        assert!(close(d.pmf()[2], 0.318_092_372_803_578_3, 1e-15));
    }

    #[test]
    fn linear_pmf_hand_value() {
        let g = SampleGrid::new(RaySegment::new(0.0, 2.0).unwrap(), vec![1.0]).unwrap();
        let tau = OpacityTrace::new(vec![1.0, 3.0, 0.0], FarPlane::Open).unwrap();
        let d = interval_pmf(ModelKind::Linear, &g, &tau).unwrap();
        assert!(close(d.pmf()[0], 0.864_664_716_763_387_3, 1e-15));
    }

    #[test]
    fn opaque_far_plane_normalizes() {
        let g = make_uniform_grid(RaySegment::new(2.0, 6.0).unwrap(), 31).unwrap();
        let raw: Vec<f64> = (0..33).map(|k| 0.05 * (k % 5) as f64).collect();
        let tau = OpacityTrace::ingest(raw, FarPlane::Opaque).unwrap();
        for model in [ModelKind::Constant, ModelKind::Linear] {
            let d = interval_pmf(model, &g, &tau).unwrap();
            let sum: f64 = d.pmf().iter().sum();
            assert!(close(sum, 1.0, 1e-12), "{model:?}: {sum}");
            assert!(close(d.total_mass(), 1.0, 1e-12));
        }
    }

    #[test]
    fn quadratic_rejected() {
        let tau = OpacityTrace::new(vec![0.0, 1.0, 2.0, 0.0], FarPlane::Open).unwrap();
        assert!(interval_pmf(ModelKind::Quadratic, &unit_grid(), &tau).is_err());
    }

    #[test]
    fn length_mismatch_rejected() {
        let tau = OpacityTrace::new(vec![0.0, 1.0, 0.0], FarPlane::Open).unwrap();
        assert!(matches!(
            transmittance_linear(&unit_grid(), &tau),
            Err(Error::InvalidArgument(_))
        ));
    }

    #[test]
    fn render_dot_product() {
        let tau = OpacityTrace::new(vec![0.0, 1.0, 2.0, 0.0], FarPlane::Open).unwrap();
        let d = interval_pmf(ModelKind::Constant, &unit_grid(), &tau).unwrap();
        let y = render(&d, &ColorTrace::scalar(&[0.0, 1.0, 0.0]).unwrap()).unwrap();
        assert!(close(y[0], 0.632_120_558_828_557_7, 1e-15));

        let c = ColorTrace::uniform(3, &[0.25, 0.5]).unwrap();
        let y = render(&d, &c).unwrap();
        let mass: f64 = d.pmf().iter().sum();
        assert!(close(y[0], 0.25 * mass, 1e-15));
        assert!(close(y[1], 0.5 * mass, 1e-15));

        assert!(render(&d, &ColorTrace::scalar(&[1.0, 1.0]).unwrap()).is_err());
    }

    #[test]
    fn render_of_empty_distribution_is_zero() {
        let g = unit_grid();
        let tau = OpacityTrace::new(vec![0.0; 4], FarPlane::Open).unwrap();
        let d = interval_pmf(ModelKind::Linear, &g, &tau).unwrap();
        let y = render(&d, &ColorTrace::uniform(3, &[1.0]).unwrap()).unwrap();
        assert_eq!(y, vec![0.0]);
    }

    #[test]
    fn midpoint_depth_of_concentrated_mass() {
        // all mass lands in [2, 3]
        let g = SampleGrid::new(RaySegment::new(0.0, 4.0).unwrap(), vec![1.0, 2.0, 3.0]).unwrap();
        let tau = OpacityTrace::new(vec![0.0, 0.0, 2000.0, 0.0, 0.0], FarPlane::Open).unwrap();
        let d = interval_pmf(ModelKind::Constant, &g, &tau).unwrap();
        let depth = expected_depth(&d, &g, &tau, DepthEstimator::Midpoint).unwrap();
        assert!(close(depth, 2.5, 1e-12));
    }

    #[test]
    fn midpoint_depth_of_symmetric_pmf() {
        let g = make_uniform_grid(RaySegment::new(1.0, 5.0).unwrap(), 7).unwrap();
        let d = RayDistribution {
            model: ModelKind::Constant,
            optical_depth: vec![0.0; 9],
            transmittance: vec![1.0; 9],
            pmf: vec![0.05, 0.1, 0.15, 0.2, 0.2, 0.15, 0.1, 0.05],
            cumulative: vec![0.0; 9],
        };
        let tau = OpacityTrace::new(vec![0.0; 9], FarPlane::Open).unwrap();
        let depth = expected_depth(&d, &g, &tau, DepthEstimator::Midpoint).unwrap();
        assert!(close(depth, 3.0, 1e-12));
    }

    #[test]
    fn monte_carlo_needs_samples() {
        let g = unit_grid();
        let tau = OpacityTrace::new(vec![0.0, 1.0, 2.0, 0.0], FarPlane::Open).unwrap();
        let d = interval_pmf(ModelKind::Linear, &g, &tau).unwrap();
        assert!(expected_depth(&d, &g, &tau, DepthEstimator::MonteCarlo { samples: 0, seed: 1 }).is_err());
    }

    #[test]
    fn batch_matches_single_rays() {
        let g = unit_grid();
        let rays: Vec<RaySamples> = (0..4)
            .map(|i| RaySamples {
                grid: g.clone(),
                tau: OpacityTrace::new(vec![0.0, i as f64, 1.0, 0.5], FarPlane::Open).unwrap(),
                colors: ColorTrace::scalar(&[0.2, 0.4, 0.9]).unwrap(),
            })
            .collect();
        let out = render_batch(ModelKind::Linear, &rays);
        for (r, y) in rays.iter().zip(out) {
            let d = interval_pmf(ModelKind::Linear, &r.grid, &r.tau).unwrap();
            assert_eq!(y.unwrap(), render(&d, &r.colors).unwrap());
        }
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn instance() -> impl Strategy<Value = (SampleGrid, OpacityTrace)> {
            (1usize..40, 0.1f64..5.0, any::<bool>())
                .prop_flat_map(|(n, len, opaque)| {
                    (
                        proptest::collection::vec(0.01f64..1.0, n + 1),
                        proptest::collection::vec(0.0f64..10.0, n + 2),
                        Just(len),
                        Just(opaque),
                    )
                })
                .prop_map(|(gaps, taus, len, opaque)| {
                    let total: f64 = gaps.iter().sum();
                    let mut s = 0.0;
                    let mut interior = Vec::new();
                    for g in &gaps[..gaps.len() - 1] {
                        s += g / total * len;
                        interior.push(s);
                    }
                    let grid = SampleGrid::new(RaySegment::new(0.0, len).unwrap(), interior).unwrap();
                    let far = if opaque { FarPlane::Opaque } else { FarPlane::Open };
                    (grid, OpacityTrace::ingest(taus, far).unwrap())
                })
        }

        proptest! {
            #[test]
            fn telescoping_identity((grid, tau) in instance()) {
                for model in [ModelKind::Constant, ModelKind::Linear] {
                    let d = interval_pmf(model, &grid, &tau).unwrap();
                    prop_assert_eq!(d.transmittance()[0], 1.0);
                    for (c, t) in d.cumulative().iter().zip(d.transmittance()) {
                        prop_assert!((c + t - 1.0).abs() <= 1e-12);
                    }
                    for w in d.transmittance().windows(2) {
                        prop_assert!(w[1] <= w[0]);
                    }
                    for (j, p) in d.pmf().iter().enumerate() {
                        prop_assert!(*p >= 0.0);
                        let tel = d.transmittance()[j] - d.transmittance()[j + 1];
                        prop_assert!((p - tel).abs() <= 1e-12);
                    }
                }
            }

            #[test]
            fn raising_one_opacity_lowers_downstream_light((grid, tau) in instance(), pick in 0usize..1000, bump in 0.01f64..3.0) {
                let n = grid.len();
                let k = 1 + pick % n;
                let mut raised = tau.values().to_vec();
                raised[k] += bump;
                let raised = OpacityTrace::new(raised, FarPlane::Open).unwrap();
                let base = OpacityTrace::new(tau.values().to_vec(), FarPlane::Open).unwrap();
                for model in [ModelKind::Constant, ModelKind::Linear] {
                    let a = interval_pmf(model, &grid, &base).unwrap();
                    let b = interval_pmf(model, &grid, &raised).unwrap();
                    for m in k..a.transmittance().len() {
                        prop_assert!(b.transmittance()[m] <= a.transmittance()[m]);
                    }
                }
            }

            #[test]
            fn linear_equals_constant_for_uniform_tau((grid, _tau) in instance(), level in 0.0f64..8.0) {
                let tau = OpacityTrace::new(vec![level; grid.points().len()], FarPlane::Open).unwrap();
                let a = interval_pmf(ModelKind::Constant, &grid, &tau).unwrap();
                let b = interval_pmf(ModelKind::Linear, &grid, &tau).unwrap();
                for (x, y) in a.transmittance().iter().zip(b.transmittance()) {
                    prop_assert!((x - y).abs() <= 1e-12);
                }
                for (x, y) in a.pmf().iter().zip(b.pmf()) {
                    prop_assert!((x - y).abs() <= 1e-12);
                }
                for (x, y) in a.cumulative().iter().zip(b.cumulative()) {
                    prop_assert!((x - y).abs() <= 1e-12);
                }
            }
        }
    }
}
