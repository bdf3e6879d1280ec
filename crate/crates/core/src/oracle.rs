//! Independent ground truth for the quadrature routines.
//!
//! Everything here is built on one generic adaptive Simpson integrator and
//! the analytic field's point evaluations; nothing is shared with the
//! closed-form quadrature. Cumulative optical depth `L(s) = int_near^s tau`
//! is tabulated once per ray and interpolated with cubic Hermite splines
//! whose slopes are the exact opacities, then the outer integrals of
//! `tau(s) exp(-L(s)) g(s)` are integrated adaptively.
//!
//! Error budget: with tolerance `tol`, the table is refined until its
//! interpolation error is below `tol` and each outer integral is computed to
//! relative tolerance `tol`, so rendered values (at most one in magnitude)
//! are within `10 tol` of the continuous model.

use crate::error::{invalid, Error, Result};
use crate::ray::{RaySegment, SampleGrid};
use crate::scenes::AnalyticField;

/// Recursion limit for adaptive Simpson.
pub const MAX_DEPTH: u32 = 50;

/// Initial and maximal number of table cells per piece.
const TABLE_START_CELLS: usize = 64;
const TABLE_MAX_CELLS: usize = 1 << 16;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IntegrationResult {
    pub value: f64,
    pub error_estimate: f64,
    pub evaluations: usize,
}

struct Simpson<'a, F> {
    f: &'a F,
    evaluations: usize,
    error: f64,
    hit_limit: bool,
}

impl<F: Fn(f64) -> f64> Simpson<'_, F> {
    fn eval(&mut self, x: f64) -> f64 {
        self.evaluations += 1;
        (self.f)(x)
    }

    #[allow(clippy::too_many_arguments)]
    fn refine(&mut self, a: f64, fa: f64, m: f64, fm: f64, b: f64, fb: f64, whole: f64, tol: f64, depth: u32) -> f64 {
        let lm = 0.5 * (a + m);
        let rm = 0.5 * (m + b);
        let flm = self.eval(lm);
        let frm = self.eval(rm);
        let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
        let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
        let delta = left + right - whole;
        // Below this the difference is rounding, not truncation.
        let noise = 64.0 * f64::EPSILON * (left.abs() + right.abs());
        let unsplittable = !(a < lm && lm < m && m < rm && rm < b);
        if delta.abs() <= 15.0 * tol || delta.abs() <= noise || unsplittable || depth >= MAX_DEPTH {
            if depth >= MAX_DEPTH && delta.abs() > 15.0 * tol && delta.abs() > noise {
                self.hit_limit = true;
            }
            self.error += delta.abs() / 15.0;
            return left + right + delta / 15.0;
        }
        self.refine(a, fa, lm, flm, m, fm, left, 0.5 * tol, depth + 1)
            + self.refine(m, fm, rm, frm, b, fb, right, 0.5 * tol, depth + 1)
    }
}

/// Adaptive Simpson on `[a, b]` to absolute tolerance `tol`.
///
/// Hitting the recursion limit is reported as [`Error::NoConvergence`]
/// carrying the best available estimate.
pub fn integrate_adaptive<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, tol: f64) -> Result<IntegrationResult> {
    if !(a.is_finite() && b.is_finite()) || a > b {
        return Err(invalid(format!("integration bounds must satisfy a <= b, got [{a}, {b}]")));
    }
    if !(tol > 0.0) {
        return Err(invalid(format!("tolerance must be positive, got {tol}")));
    }
    let mut s = Simpson { f: &f, evaluations: 0, error: 0.0, hit_limit: false };
    let m = 0.5 * (a + b);
    let (fa, fm, fb) = (s.eval(a), s.eval(m), s.eval(b));
    if !(fa.is_finite() && fm.is_finite() && fb.is_finite()) {
        return Err(invalid("integrand is not finite"));
    }
    let value = if a == b {
        0.0
    } else {
        let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
        s.refine(a, fa, m, fm, b, fb, whole, tol, 0)
    };
    let result = IntegrationResult { value, error_estimate: s.error, evaluations: s.evaluations };
    if !value.is_finite() {
        return Err(invalid("integrand is not finite"));
    }
    if s.hit_limit {
        return Err(Error::NoConvergence { partial: result });
    }
    Ok(result)
}

/// Adaptive Simpson to relative tolerance `rel`, for non-negative
/// integrands whose magnitude is unknown in advance.
pub fn integrate_relative<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, rel: f64) -> Result<IntegrationResult> {
    if !(a.is_finite() && b.is_finite()) || a > b {
        return Err(invalid(format!("integration bounds must satisfy a <= b, got [{a}, {b}]")));
    }
    let panels = 16;
    let h = (b - a) / panels as f64;
    let rough: f64 = (0..panels)
        .map(|i| {
            let x0 = a + i as f64 * h;
            h / 6.0 * (f(x0).abs() + 4.0 * f(x0 + 0.5 * h).abs() + f(x0 + h).abs())
        })
        .sum();
    let tol = (rel * rough).max(f64::MIN_POSITIVE);
    let mut r = integrate_adaptive(&f, a, b, tol)?;
    r.evaluations += 3 * panels;
    Ok(r)
}

/// Evaluates `f` strictly inside `[lo, hi]` so that a discontinuity at an
/// endpoint is seen from the piece's own side.
fn one_sided<F: Fn(f64) -> f64>(f: F, lo: f64, hi: f64) -> impl Fn(f64) -> f64 {
    let (inner_lo, inner_hi) = (lo.next_up(), hi.next_down());
    move |x| {
        if inner_lo <= inner_hi {
            f(x.clamp(inner_lo, inner_hi))
        } else {
            f(0.5 * (lo + hi))
        }
    }
}

/// Splits `[a, b]` at the given breakpoints, dropping ones outside.
fn pieces(a: f64, b: f64, breaks: &[f64]) -> Vec<(f64, f64)> {
    let mut cuts: Vec<f64> = breaks.iter().copied().filter(|&x| x > a && x < b).collect();
    cuts.sort_by(f64::total_cmp);
    cuts.dedup();
    let mut out = Vec::with_capacity(cuts.len() + 1);
    let mut lo = a;
    for c in cuts {
        out.push((lo, c));
        lo = c;
    }
    out.push((lo, b));
    out
}

/// Integrates a piecewise-smooth `f` over `[a, b]`, splitting at `breaks`
/// and evaluating one-sided at every piece boundary.
pub fn integrate_piecewise<F: Fn(f64) -> f64>(f: F, breaks: &[f64], a: f64, b: f64, tol: f64) -> Result<IntegrationResult> {
    let parts = pieces(a, b, breaks);
    let span = b - a;
    let mut total = IntegrationResult { value: 0.0, error_estimate: 0.0, evaluations: 0 };
    for (lo, hi) in parts {
        let share = if span > 0.0 { tol * (hi - lo) / span } else { tol };
        let r = integrate_adaptive(one_sided(&f, lo, hi), lo, hi, share.max(f64::MIN_POSITIVE))?;
        total.value += r.value;
        total.error_estimate += r.error_estimate;
        total.evaluations += r.evaluations;
    }
    Ok(total)
}

#[derive(Debug, Clone)]
struct Piece {
    lo: f64,
    hi: f64,
    /// `L(lo)`.
    base: f64,
    nodes: Vec<f64>,
    /// `L(node) - L(lo)`.
    local: Vec<f64>,
    /// `tau(node)`, one-sided at the piece ends.
    slope: Vec<f64>,
}

impl Piece {
    fn build(field: &AnalyticField, lo: f64, hi: f64, cells: usize, cell_tol: f64) -> Result<Piece> {
        let tau = one_sided(|s| field.tau(s), lo, hi);
        let h = (hi - lo) / cells as f64;
        let nodes: Vec<f64> = (0..=cells).map(|i| if i == cells { hi } else { lo + i as f64 * h }).collect();
        let mut local = Vec::with_capacity(nodes.len());
        local.push(0.0);
        for w in nodes.windows(2) {
            let r = integrate_adaptive(&tau, w[0], w[1], cell_tol)?;
            local.push(local.last().unwrap() + r.value);
        }
        let slope = nodes.iter().map(|&x| tau(x)).collect();
        Ok(Piece { lo, hi, base: 0.0, nodes, local, slope })
    }

    /// Cubic Hermite interpolant of `L - L(lo)`.
    fn local_depth(&self, s: f64) -> f64 {
        let s = s.clamp(self.lo, self.hi);
        let cells = self.nodes.len() - 1;
        let i = (self.nodes.partition_point(|&x| x <= s).max(1) - 1).min(cells - 1);
        let (x0, x1) = (self.nodes[i], self.nodes[i + 1]);
        let h = x1 - x0;
        let t = (s - x0) / h;
        let (t2, t3) = (t * t, t * t * t);
        let h00 = 2.0 * t3 - 3.0 * t2 + 1.0;
        let h10 = t3 - 2.0 * t2 + t;
        let h01 = -2.0 * t3 + 3.0 * t2;
        let h11 = t3 - t2;
        h00 * self.local[i] + h10 * h * self.slope[i] + h01 * self.local[i + 1] + h11 * h * self.slope[i + 1]
    }

    fn total(&self) -> f64 {
        *self.local.last().unwrap()
    }
}

/// Tabulated cumulative optical depth over one segment.
#[derive(Debug, Clone)]
pub struct OpticalDepthTable {
    pieces: Vec<Piece>,
}

impl OpticalDepthTable {
    /// Tabulates `L` on `segment`, splitting at the field's breakpoints and
    /// at `extra_breaks`, doubling the per-piece resolution until the
    /// interpolant moves by at most `tol`.
    pub fn build(field: &AnalyticField, segment: RaySegment, extra_breaks: &[f64], tol: f64) -> Result<Self> {
        if !(tol > 0.0) {
            return Err(invalid(format!("tolerance must be positive, got {tol}")));
        }
        let mut breaks = field.breakpoints();
        breaks.extend_from_slice(extra_breaks);
        let parts = pieces(segment.near(), segment.far(), &breaks);
        let span = segment.length();
        let mut built = Vec::with_capacity(parts.len());
        for (lo, hi) in parts {
            built.push(Self::refine_piece(field, lo, hi, tol * (hi - lo) / span)?);
        }
        let mut base = 0.0;
        for p in &mut built {
            p.base = base;
            base += p.total();
        }
        Ok(Self { pieces: built })
    }

    fn refine_piece(field: &AnalyticField, lo: f64, hi: f64, tol: f64) -> Result<Piece> {
        let mut cells = TABLE_START_CELLS;
        let cell_tol = |cells: usize| (0.1 * tol / cells as f64).max(f64::MIN_POSITIVE);
        let mut coarse = Piece::build(field, lo, hi, cells, cell_tol(cells))?;
        loop {
            let fine = Piece::build(field, lo, hi, 2 * cells, cell_tol(2 * cells))?;
            // Odd fine nodes are coarse midpoints, where interpolation error peaks.
            let change = fine
                .nodes
                .iter()
                .zip(&fine.local)
                .skip(1)
                .step_by(2)
                .map(|(&x, &l)| (coarse.local_depth(x) - l).abs())
                .fold(0.0, f64::max);
            if change <= tol {
                return Ok(fine);
            }
            cells *= 2;
            if cells >= TABLE_MAX_CELLS {
                return Err(Error::NoConvergence {
                    partial: IntegrationResult { value: fine.total(), error_estimate: change, evaluations: 0 },
                });
            }
            coarse = fine;
        }
    }

    fn piece_of(&self, s: f64) -> &Piece {
        let i = self.pieces.partition_point(|p| p.lo <= s).max(1) - 1;
        &self.pieces[i]
    }

    /// `L(s)`.
    pub fn optical_depth(&self, s: f64) -> f64 {
        let p = self.piece_of(s);
        p.base + p.local_depth(s)
    }

    pub fn transmittance(&self, s: f64) -> f64 {
        (-self.optical_depth(s)).exp()
    }

    /// `sum_pieces exp(-L(lo)) int_piece tau exp(-(L - L(lo))) g`, restricted
    /// to pieces inside `[a, b]`, each to relative tolerance `rel`.
    fn weighted_integral<G: Fn(f64) -> f64>(&self, field: &AnalyticField, g: G, a: f64, b: f64, rel: f64) -> Result<f64> {
        let mut total = 0.0;
        for p in self.pieces.iter().filter(|p| p.lo >= a && p.hi <= b) {
            let f = one_sided(|s| field.tau(s) * (-p.local_depth(s)).exp() * g(s), p.lo, p.hi);
            let r = integrate_relative(f, p.lo, p.hi, rel)?;
            total += (-p.base).exp() * r.value;
        }
        Ok(total)
    }
}

/// `int tau T c` over the segment with no background, per channel.
pub fn true_render(field: &AnalyticField, segment: RaySegment, tol: f64) -> Result<Vec<f64>> {
    let table = OpticalDepthTable::build(field, segment, &[], tol)?;
    (0..field.channels())
        .map(|ch| table.weighted_integral(field, |s| field.color(s)[ch], segment.near(), segment.far(), tol))
        .collect()
}

/// [`true_render`] plus the light that survives to the far bound, which is
/// stopped there and takes the color at the far bound.
pub fn true_render_opaque(field: &AnalyticField, segment: RaySegment, tol: f64) -> Result<Vec<f64>> {
    let table = OpticalDepthTable::build(field, segment, &[], tol)?;
    let rest = table.transmittance(segment.far());
    let far_color = field.color(segment.far().next_down());
    (0..field.channels())
        .map(|ch| {
            let v = table.weighted_integral(field, |s| field.color(s)[ch], segment.near(), segment.far(), tol)?;
            Ok(v + rest * far_color[ch])
        })
        .collect()
}

/// `T(s)` at each of `points`.
pub fn true_transmittance(field: &AnalyticField, segment: RaySegment, points: &[f64], tol: f64) -> Result<Vec<f64>> {
    if points.iter().any(|&s| !segment.contains(s)) {
        return Err(invalid("transmittance requested outside the segment"));
    }
    let table = OpticalDepthTable::build(field, segment, &[], tol)?;
    Ok(points.iter().map(|&s| table.transmittance(s)).collect())
}

/// Probability of terminating in each interval of `grid`, computed to
/// relative tolerance `tol` so that tiny masses are still resolved.
pub fn true_interval_masses(field: &AnalyticField, grid: &SampleGrid, tol: f64) -> Result<Vec<f64>> {
    let table = OpticalDepthTable::build(field, grid.segment(), grid.points(), tol)?;
    grid.points()
        .windows(2)
        .map(|w| table.weighted_integral(field, |_| 1.0, w[0], w[1], tol))
        .collect()
}

/// Mean termination distance when the far bound stops all surviving light:
/// `int s tau T ds + far T(far)`.
pub fn true_termination_mean(field: &AnalyticField, segment: RaySegment, tol: f64) -> Result<f64> {
    let table = OpticalDepthTable::build(field, segment, &[], tol)?;
    let inside = table.weighted_integral(field, |s| s, segment.near(), segment.far(), tol)?;
    Ok(inside + segment.far() * table.transmittance(segment.far()))
}

/// One-sample Kolmogorov-Smirnov statistic of sorted `samples` against
/// `cdf`.
pub fn ks_statistic<F: Fn(f64) -> f64>(samples: &[f64], cdf: F) -> Result<f64> {
    if samples.is_empty() {
        return Err(invalid("KS statistic needs at least one sample"));
    }
    if samples.iter().any(|x| x.is_nan()) || samples.windows(2).any(|w| w[1] < w[0]) {
        return Err(invalid("KS samples must be sorted"));
    }
    let n = samples.len() as f64;
    let mut d: f64 = 0.0;
    for (i, &x) in samples.iter().enumerate() {
        let f = cdf(x);
        let above = ((i + 1) as f64 / n - f).abs();
        let below = (f - i as f64 / n).abs();
        d = d.max(above).max(below);
    }
    Ok(d)
}

/// Asymptotic critical value `c(alpha) / sqrt(n)` of the KS statistic.
/// Supported levels are 0.10, 0.05 and 0.01; the asymptotic form is only
/// trusted for `n >= 8`.
pub fn ks_critical(n: usize, alpha: f64) -> Result<f64> {
    if n < 8 {
        return Err(invalid(format!("asymptotic KS critical value needs n >= 8, got {n}")));
    }
    let c = [(0.10, 1.22), (0.05, 1.36), (0.01, 1.63)]
        .iter()
        .find(|(a, _)| (a - alpha).abs() < 1e-12)
        .map(|&(_, c)| c)
        .ok_or_else(|| invalid(format!("unsupported KS level {alpha}")))?;
    Ok(c / (n as f64).sqrt())
}

/// Least-squares slope of `ln(error)` against `ln(N)`.
pub fn convergence_slope(points: &[(f64, f64)]) -> Result<f64> {
    if points.len() < 4 {
        return Err(invalid("convergence slope needs at least four points"));
    }
    if points.iter().any(|&(n, e)| !(n > 0.0) || !(e > 0.0) || !e.is_finite()) {
        return Err(invalid("convergence data needs positive N and positive errors"));
    }
    let xs: Vec<f64> = points.iter().map(|p| p.0.ln()).collect();
    let ys: Vec<f64> = points.iter().map(|p| p.1.ln()).collect();
    let m = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / m;
    let my = ys.iter().sum::<f64>() / m;
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    if sxx == 0.0 {
        return Err(invalid("convergence data needs at least two distinct N"));
    }
    Ok(sxy / sxx)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenes::{ColorProfile, FieldKind, Interpolation};

    fn unit(field: FieldKind) -> AnalyticField {
        AnalyticField::with_unit_color(field).unwrap()
    }

    #[test]
    fn simpson_exact_on_cubics() {
        let r = integrate_adaptive(|s| s * s, 0.0, 1.0, 1e-12).unwrap();
        assert!((r.value - 1.0 / 3.0).abs() < 1e-12);
        assert!(r.evaluations >= 3 && r.error_estimate >= 0.0);
    }

    #[test]
    fn simpson_sine() {
        let r = integrate_adaptive(f64::sin, 0.0, std::f64::consts::PI, 1e-11).unwrap();
        assert!((r.value - 2.0).abs() < 1e-10);
    }

    #[test]
    fn empty_interval() {
        let r = integrate_adaptive(f64::exp, 1.5, 1.5, 1e-12).unwrap();
        assert_eq!(r.value, 0.0);
        assert!(r.evaluations >= 3);
    }

    #[test]
    fn bad_arguments() {
        assert!(integrate_adaptive(f64::exp, 1.0, 0.0, 1e-12).is_err());
        assert!(integrate_adaptive(f64::exp, 0.0, 1.0, 0.0).is_err());
        assert!(integrate_adaptive(|x| 1.0 / x, 0.0, 1.0, 1e-12).is_err());
    }

    #[test]
    fn depth_limit_reports_partial() {
        // 1/sqrt(x) shifted off the singularity just enough to stay finite
        match integrate_adaptive(|x: f64| (x.abs() + 1e-300).powf(-0.9), -1.0, 1.0, 1e-15) {
            Err(Error::NoConvergence { partial }) => assert!(partial.value > 0.0 && partial.value.is_finite()),
            other => panic!("expected no convergence, got {other:?}"),
        }
    }

    #[test]
    fn piecewise_integration_of_step() {
        let step = |x: f64| if x < 0.3 { 1.0 } else { 2.0 };
        let r = integrate_piecewise(step, &[0.3], 0.0, 1.0, 1e-13).unwrap();
        assert!((r.value - (0.3 + 1.4)).abs() < 1e-14);
    }

    #[test]
    fn depth_table_matches_closed_forms() {
        let fields = [
            FieldKind::ConstantSlab { tau: 2.0, start: 0.5, end: 1.3 },
            FieldKind::LinearRamp { start: 0.2, end: 1.7, tau_start: 0.5, tau_end: 4.0 },
            FieldKind::LogisticStep { amplitude: 10.0, steepness: 40.0, center: 1.0 },
        ];
        let seg = RaySegment::new(0.0, 2.0).unwrap();
        for kind in fields {
            let f = unit(kind.clone());
            let table = OpticalDepthTable::build(&f, seg, &[], 1e-12).unwrap();
            for s in [0.1, 0.5, 0.77, 1.0, 1.3, 1.99, 2.0] {
                let exact = kind.closed_form_optical_depth(0.0, s).unwrap();
                assert!((table.optical_depth(s) - exact).abs() < 1e-10, "{kind:?} at {s}");
            }
        }
    }

    #[test]
    fn slab_render() {
        let (tau0, a, b, c) = (1.7, 0.4, 1.1, 0.6);
        let f = AnalyticField::new(
            FieldKind::ConstantSlab { tau: tau0, start: a, end: b },
            ColorProfile::Uniform { value: vec![c] },
        )
        .unwrap();
        let y = true_render(&f, RaySegment::new(0.0, 2.0).unwrap(), 1e-11).unwrap();
        assert!((y[0] - c * (1.0 - (-tau0 * (b - a)).exp())).abs() < 1e-10);
    }

    #[test]
    fn zero_field_renders_black() {
        let f = unit(FieldKind::ConstantSlab { tau: 0.0, start: 0.0, end: 1.0 });
        let y = true_render(&f, RaySegment::new(0.0, 1.0).unwrap(), 1e-10).unwrap();
        assert_eq!(y, vec![0.0]);
    }

    #[test]
    fn ramp_render() {
        let f = unit(FieldKind::LinearRamp { start: 0.0, end: 1.0, tau_start: 1.0, tau_end: 3.0 });
        let y = true_render(&f, RaySegment::new(0.0, 1.0).unwrap(), 1e-11).unwrap();
        assert!((y[0] - (1.0 - (-2f64).exp())).abs() < 1e-10);
    }

    #[test]
    fn opaque_render_adds_background() {
        let f = unit(FieldKind::ConstantSlab { tau: 0.3, start: 0.0, end: 1.0 });
        let y = true_render_opaque(&f, RaySegment::new(0.0, 1.0).unwrap(), 1e-11).unwrap();
        assert!((y[0] - 1.0).abs() < 1e-10);
    }

    #[test]
    fn interval_masses_resolve_tiny_values() {
        let knots = vec![0.0, 0.5, 1.5, 2.0];
        let values = vec![1e-6, 2e-6, 5.0, 1e-6];
        let f = unit(FieldKind::Tabulated { knots: knots.clone(), values: values.clone(), interpolation: Interpolation::Linear });
        let grid = SampleGrid::new(RaySegment::new(0.0, 2.0).unwrap(), vec![0.5, 1.5]).unwrap();
        let masses = true_interval_masses(&f, &grid, 1e-12).unwrap();
        let mut depth = 0.0f64;
        for j in 0..3 {
            let d = 0.5 * (values[j] + values[j + 1]) * (knots[j + 1] - knots[j]);
            let exact = -(-depth).exp() * (-d).exp_m1();
            assert!((masses[j] - exact).abs() <= 1e-10 * exact, "{j}: {} vs {exact}", masses[j]);
            depth += d;
        }
    }

    #[test]
    fn termination_mean_of_uniform_slab() {
        // exponential with rate 2 truncated at 1, remainder at 1
        let f = unit(FieldKind::ConstantSlab { tau: 2.0, start: 0.0, end: 1.0 });
        let mean = true_termination_mean(&f, RaySegment::new(0.0, 1.0).unwrap(), 1e-12).unwrap();
        let rate: f64 = 2.0;
        let exact = (1.0 - (-rate).exp()) / rate;
        assert!((mean - exact).abs() < 1e-10);
    }

    #[test]
    fn transmittance_values() {
        let f = unit(FieldKind::ConstantSlab { tau: 1.0, start: 0.0, end: 5.0 });
        let t = true_transmittance(&f, RaySegment::new(0.0, 3.0).unwrap(), &[0.0, 1.0, 3.0], 1e-12).unwrap();
        assert!((t[1] - (-1f64).exp()).abs() < 1e-12 && (t[2] - (-3f64).exp()).abs() < 1e-12);
        assert_eq!(t[0], 1.0);
        assert!(true_transmittance(&f, RaySegment::new(0.0, 3.0).unwrap(), &[4.0], 1e-12).is_err());
    }

    #[test]
    fn ks_single_sample_at_median() {
        assert_eq!(ks_statistic(&[0.5], |x| x).unwrap(), 0.5);
        assert!(ks_statistic(&[0.6, 0.5], |x| x).is_err());
        assert!(ks_statistic(&[], |x| x).is_err());
    }

    #[test]
    fn ks_critical_values() {
        assert!((ks_critical(100, 0.05).unwrap() - 0.136).abs() < 1e-12);
        assert!(ks_critical(7, 0.05).is_err());
        assert!(ks_critical(100, 0.2).is_err());
    }

    #[test]
    fn ks_detects_mismatch() {
        let n = 1000;
        let uniform: Vec<f64> = (0..n).map(|i| (i as f64 + 0.5) / n as f64).collect();
        let d = ks_statistic(&uniform, |x| x.powf(0.1)).unwrap();
        assert!(d > 10.0 * ks_critical(n, 0.05).unwrap());
        let d_self = ks_statistic(&uniform, |x| x).unwrap();
        assert!(d_self < ks_critical(n, 0.05).unwrap());
    }

    #[test]
    fn slopes_of_power_laws() {
        let ns = [8.0, 16.0, 32.0, 64.0, 128.0, 256.0];
        let first: Vec<(f64, f64)> = ns.iter().map(|&n| (n, 3.0 / n)).collect();
        let second: Vec<(f64, f64)> = ns.iter().map(|&n| (n, 0.2 / (n * n))).collect();
        let flat: Vec<(f64, f64)> = ns.iter().map(|&n| (n, 0.1)).collect();
        assert!((convergence_slope(&first).unwrap() + 1.0).abs() < 1e-6);
        assert!((convergence_slope(&second).unwrap() + 2.0).abs() < 1e-6);
        assert!(convergence_slope(&flat).unwrap().abs() < 1e-12);
        assert!(convergence_slope(&first[..3]).is_err());
        assert!(convergence_slope(&[(1.0, 1.0), (2.0, 0.0), (3.0, 1.0), (4.0, 1.0)]).is_err());
    }
}
