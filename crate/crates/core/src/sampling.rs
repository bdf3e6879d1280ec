//! Inverse-transform sampling of the ray-termination distribution.
//!
//! The constant model only yields a step CDF, so it is sampled through the
//! usual surrogate: linear interpolation of the cumulative values between bin
//! edges. The linear model's CDF is continuous and strictly increasing and is
//! inverted exactly by solving the in-bin quadratic.

use rand::distributions::Open01;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{invalid, Error, Result};
use crate::quadrature::{interval_pmf, RayDistribution};
use crate::ray::{ModelKind, OpacityTrace, SampleGrid};

/// Draws at or above `1 - U_EPS` are clamped to the far bound.
pub const U_EPS: f64 = 1e-12;

/// Fine samples closer than this to an existing sample are merged.
pub const MERGE_TOL: f64 = 1e-12;

/// Step CDF of a discrete ray distribution, with bin edges at the grid points.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteRayCdf {
    edges: Vec<f64>,
    cumulative: Vec<f64>,
}

impl DiscreteRayCdf {
    pub fn new(grid: &SampleGrid, dist: &RayDistribution) -> Result<Self> {
        Self::from_parts(grid.points().to_vec(), dist.cumulative().to_vec())
    }

    pub fn from_parts(edges: Vec<f64>, cumulative: Vec<f64>) -> Result<Self> {
        if edges.len() != cumulative.len() || edges.len() < 2 {
            return Err(invalid("need one cumulative value per bin edge"));
        }
        if cumulative[0] != 0.0 {
            return Err(invalid("cumulative values must start at 0"));
        }
        if cumulative.windows(2).any(|w| w[1] < w[0]) {
            return Err(invalid("cumulative values must be non-decreasing"));
        }
        if edges.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(invalid("bin edges must be strictly increasing"));
        }
        Ok(Self { edges, cumulative })
    }

    pub fn edges(&self) -> &[f64] {
        &self.edges
    }

    pub fn cumulative(&self) -> &[f64] {
        &self.cumulative
    }

    pub fn total_mass(&self) -> f64 {
        *self.cumulative.last().unwrap()
    }
}

/// Smallest `k` with `C_{k+1} > u`, or `None` when `u` is at or beyond the
/// total mass. Ties go to the lower index and empty bins are never returned.
fn locate_bin(cumulative: &[f64], u: f64) -> Option<usize> {
    let k = cumulative[1..].partition_point(|&c| c <= u);
    (k + 1 < cumulative.len()).then_some(k)
}

fn check_unit(u: f64) -> Result<()> {
    if u.is_finite() && (0.0..1.0).contains(&u) {
        Ok(())
    } else {
        Err(invalid(format!("u must lie in [0, 1), got {u}")))
    }
}

/// Surrogate inverse of the step CDF: linear interpolation inside the bin
/// that contains `u`. Draws beyond the total mass return the far bound.
pub fn surrogate_sample(cdf: &DiscreteRayCdf, u: f64) -> Result<f64> {
    check_unit(u)?;
    let Some(k) = locate_bin(&cdf.cumulative, u) else {
        return Ok(*cdf.edges.last().unwrap());
    };
    let (c0, c1) = (cdf.cumulative[k], cdf.cumulative[k + 1]);
    let (s0, s1) = (cdf.edges[k], cdf.edges[k + 1]);
    let frac = ((u - c0) / (c1 - c0)).clamp(0.0, 1.0);
    Ok(s0 + frac * (s1 - s0))
}

/// Continuous CDF of the piecewise-linear opacity model.
#[derive(Debug, Clone, PartialEq)]
pub struct ContinuousRayCdf {
    points: Vec<f64>,
    tau: Vec<f64>,
    optical_depth: Vec<f64>,
    transmittance: Vec<f64>,
    cumulative: Vec<f64>,
}

impl ContinuousRayCdf {
    pub fn new(grid: &SampleGrid, tau: &OpacityTrace) -> Result<Self> {
        let dist = interval_pmf(ModelKind::Linear, grid, tau)?;
        Self::from_distribution(grid, tau, &dist)
    }

    /// Reuses an already computed linear-model distribution.
    pub fn from_distribution(grid: &SampleGrid, tau: &OpacityTrace, dist: &RayDistribution) -> Result<Self> {
        if dist.model() != ModelKind::Linear {
            return Err(invalid("the continuous CDF requires a linear-model distribution"));
        }
        tau.check_grid(grid)?;
        if dist.transmittance().len() != grid.points().len() {
            return Err(invalid("distribution does not belong to this grid"));
        }
        Ok(Self {
            points: grid.points().to_vec(),
            tau: tau.values().to_vec(),
            optical_depth: dist.optical_depth().to_vec(),
            transmittance: dist.transmittance().to_vec(),
            cumulative: dist.cumulative().to_vec(),
        })
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn tau(&self) -> &[f64] {
        &self.tau
    }

    pub fn transmittance(&self) -> &[f64] {
        &self.transmittance
    }

    pub fn cumulative(&self) -> &[f64] {
        &self.cumulative
    }

    pub fn total_mass(&self) -> f64 {
        *self.cumulative.last().unwrap()
    }

    pub fn near(&self) -> f64 {
        self.points[0]
    }

    pub fn far(&self) -> f64 {
        *self.points.last().unwrap()
    }

    /// Bin `k` with `C_k <= u < C_{k+1}`.
    pub fn locate(&self, u: f64) -> Option<usize> {
        locate_bin(&self.cumulative, u)
    }

    /// `int_{s_k}^{s_k + t} tau = a t^2 / (2 width) + tau_k t`.
    pub(crate) fn in_bin_depth(&self, k: usize, t: f64) -> f64 {
        let width = self.points[k + 1] - self.points[k];
        let slope = self.tau[k + 1] - self.tau[k];
        slope * t * t / (2.0 * width) + self.tau[k] * t
    }
}

/// `F(t) = C_k + T(s_k) (1 - exp(-int_{s_k}^t tau))` for `t` in bin `k`.
pub fn cdf_eval(cdf: &ContinuousRayCdf, t: f64) -> Result<f64> {
    if !(t >= cdf.near() && t <= cdf.far()) {
        return Err(invalid(format!(
            "t = {t} outside the segment [{}, {}]",
            cdf.near(),
            cdf.far()
        )));
    }
    let last_bin = cdf.points.len() - 2;
    let k = (cdf.points.partition_point(|&s| s <= t) - 1).min(last_bin);
    let offset = t - cdf.points[k];
    if offset == 0.0 {
        return Ok(cdf.cumulative[k]);
    }
    let depth = cdf.in_bin_depth(k, offset);
    Ok(cdf.cumulative[k] - cdf.transmittance[k] * (-depth).exp_m1())
}

/// Result of one exact inverse-transform draw.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PreciseSample {
    pub distance: f64,
    /// Bin the draw fell into, or the last bin when clamped.
    pub bin: usize,
    /// The draw was at or beyond the total mass (or `1 - U_EPS`) and was
    /// placed at the far bound.
    pub clamped: bool,
}

/// Exact inverse of the linear-model CDF.
///
/// Inside bin `k` the offset `t = x - s_k` solves
/// `a t^2 / (2 width) + tau_k t = q` with `a = tau_{k+1} - tau_k` and
/// `q = -ln((1 - u) / T(s_k))`; the identity `T(s_k) - (u - C_k) = 1 - u`
/// removes one cancellation-prone subtraction. The root is taken in its
/// conjugate form `2q / (tau_k + sqrt(tau_k^2 + 2 a q / width))`, which stays
/// accurate as `a -> 0` and lies in `[0, width]`.
pub fn precise_sample(cdf: &ContinuousRayCdf, u: f64) -> Result<PreciseSample> {
    if !u.is_finite() || !(0.0..=1.0).contains(&u) {
        return Err(invalid(format!("u must lie in [0, 1], got {u}")));
    }
    let last_bin = cdf.points.len() - 2;
    let clamped = PreciseSample { distance: cdf.far(), bin: last_bin, clamped: true };
    if u >= 1.0 - U_EPS {
        return Ok(clamped);
    }
    let Some(k) = cdf.locate(u) else {
        return Ok(clamped);
    };

    let (s0, s1) = (cdf.points[k], cdf.points[k + 1]);
    let width = s1 - s0;

    // q = ln T(s_k) - ln(1 - u); rounding in C_k + T_k = 1 can push it a hair
    // outside [0, bin depth].
    let bin_depth = cdf.optical_depth[k + 1] - cdf.optical_depth[k];
    let q = (-(-u).ln_1p() - cdf.optical_depth[k]).clamp(0.0, bin_depth);
    if !q.is_finite() {
        return Err(Error::Internal(format!("non-finite q at u = {u} in bin {k}")));
    }

    let t = solve_in_bin(cdf.tau[k], cdf.tau[k + 1], width, q);
    if !t.is_finite() {
        return Err(Error::Internal(format!("non-finite root at u = {u} in bin {k}")));
    }
    let distance = (s0 + t.clamp(0.0, width)).min(s1);
    Ok(PreciseSample { distance, bin: k, clamped: false })
}

/// Offset `t` into a bin of width `width` whose opacity runs linearly from
/// `tau_k` to `tau_k1`, such that the in-bin optical depth up to `t` is `q`.
pub fn solve_in_bin(tau_k: f64, tau_k1: f64, width: f64, q: f64) -> f64 {
    if q == 0.0 {
        return 0.0;
    }
    let slope = tau_k1 - tau_k;
    let disc = (tau_k * tau_k + 2.0 * slope * q / width).max(0.0);
    2.0 * q / (tau_k + disc.sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SamplerKind {
    /// Linear interpolation of the step CDF.
    Surrogate,
    /// Exact inverse of the linear-model CDF.
    Precise,
}

/// How the `u` values feeding a sampler are drawn.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UDraws {
    /// One draw per equal-width stratum of `[0, 1)`.
    Stratified,
    /// Independent draws, as needed for goodness-of-fit tests.
    Uniform,
}

/// `n` values in `(0, 1)`, deterministic for a fixed seed.
pub fn draw_uniforms(n: usize, draws: UDraws, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    match draws {
        UDraws::Uniform => (0..n).map(|_| rng.sample(Open01)).collect(),
        UDraws::Stratified => (0..n)
            .map(|i| {
                let jitter: f64 = rng.sample(Open01);
                (i as f64 + jitter) / n as f64
            })
            .collect(),
    }
}

/// Coarse-to-fine resampling: `n_fine` draws through the chosen sampler,
/// merged with the coarse interior samples.
///
/// Fine samples that coincide with an existing sample (within
/// [`MERGE_TOL`]) or with a segment bound are dropped, so the result may hold
/// fewer than `N + n_fine` samples.
pub fn hierarchical_samples(
    coarse: &RayDistribution,
    grid: &SampleGrid,
    tau: &OpacityTrace,
    n_fine: usize,
    sampler: SamplerKind,
    draws: UDraws,
    seed: u64,
) -> Result<SampleGrid> {
    if n_fine == 0 {
        return Err(invalid("hierarchical sampling needs n_fine >= 1"));
    }
    let us = draw_uniforms(n_fine, draws, seed);
    let mut fine = Vec::with_capacity(n_fine);
    match sampler {
        SamplerKind::Surrogate => {
            let cdf = DiscreteRayCdf::new(grid, coarse)?;
            for u in us {
                fine.push(surrogate_sample(&cdf, u)?);
            }
        }
        SamplerKind::Precise => {
            let cdf = ContinuousRayCdf::from_distribution(grid, tau, coarse)?;
            for u in us {
                fine.push(precise_sample(&cdf, u)?.distance);
            }
        }
    }

    let segment = grid.segment();
    let mut merged: Vec<f64> = grid.interior().to_vec();
    merged.extend(
        fine.into_iter()
            .filter(|&s| s - segment.near() > MERGE_TOL && segment.far() - s > MERGE_TOL),
    );
    merged.sort_by(f64::total_cmp);
    merged.dedup_by(|b, a| *b - *a <= MERGE_TOL);
    SampleGrid::new(segment, merged)
}
