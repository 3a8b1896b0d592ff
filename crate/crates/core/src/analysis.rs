//! Gaussian fitting of scans, the separability verdict, error bars and the
//! coherence sweep.
//!
//! Fits run on count *rates*. Each point carries counts `N` and a dwell time
//! `T`; the rate `N/T` has Poisson variance `max(N,1)/T²`, which sets the
//! least-squares weight. The model may include a finite-slit window: when
//! both slits of width `a` move along a rotated axis, a narrow feature is
//! seen through a triangle of half-width `a/√2` in the scan coordinate, and
//! the fit then returns the width of the underlying profile directly.

use std::f64::consts::{PI, SQRT_2};

use nalgebra::{Matrix4, Vector4};

use crate::numerics::Domain;
use crate::spdc::{sections_rotated, JointDistribution};
use crate::{Error, Result, SEPARABILITY_BOUND};

const MIN_POINTS: usize = 5;

/// One scan sample in the fit input: scan coordinate, counts, dwell time.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScanPoint {
    pub coord: f64,
    pub counts: f64,
    pub dwell: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitOptions {
    /// Half-width of the triangular instrument window in the scan
    /// coordinate; zero means point sampling.
    pub window_half_width: f64,
    pub max_iterations: usize,
    pub tolerance: f64,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            window_half_width: 0.0,
            max_iterations: 200,
            tolerance: 1e-8,
        }
    }
}

impl FitOptions {
    /// Window produced by two slits of `slit_width` (in scan-coordinate
    /// units per arm) moving together along a rotated axis.
    pub fn for_slit_pair(slit_width: f64) -> Self {
        Self {
            window_half_width: slit_width / SQRT_2,
            ..Self::default()
        }
    }
}

/// `A·exp(-(u-μ)²/(2σ²)) + b`, optionally seen through a triangular window.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianFit {
    pub amplitude: f64,
    pub center: f64,
    pub sigma: f64,
    pub baseline: f64,
    /// Covariance of `(amplitude, center, sigma, baseline)`.
    pub covariance: [[f64; 4]; 4],
    pub reduced_chi_square: f64,
    pub converged: bool,
    pub iterations: usize,
    pub window_half_width: f64,
}

impl GaussianFit {
    pub fn variance(&self) -> f64 {
        self.sigma * self.sigma
    }

    pub fn sigma_error(&self) -> f64 {
        self.covariance[2][2].max(0.0).sqrt()
    }

    /// First-order error of `σ²`.
    pub fn variance_error(&self) -> f64 {
        2.0 * self.sigma * self.sigma_error()
    }

    /// Model value at `u`, including the instrument window.
    pub fn eval(&self, u: f64) -> f64 {
        model(&self.params(), self.window_half_width, u)
    }

    fn params(&self) -> [f64; 4] {
        [self.amplitude, self.center, self.sigma, self.baseline]
    }
}

/// `∫ exp(-t²/(2σ²)) dt` over `[α, β]`.
fn gauss_integral(alpha: f64, beta: f64, sigma: f64) -> f64 {
    let s = sigma * SQRT_2;
    sigma * (PI / 2.0).sqrt() * (libm::erf(beta / s) - libm::erf(alpha / s))
}

/// `∫ t·exp(-t²/(2σ²)) dt` over `[α, β]`.
fn gauss_first_moment(alpha: f64, beta: f64, sigma: f64) -> f64 {
    let g = |t: f64| (-t * t / (2.0 * sigma * sigma)).exp();
    sigma * sigma * (g(alpha) - g(beta))
}

/// Unit-peak Gaussian convolved with a unit-area triangle of half-width `a`.
fn windowed_gaussian(v: f64, sigma: f64, a: f64) -> f64 {
    if a < 1e-4 * sigma {
        return (-v * v / (2.0 * sigma * sigma)).exp();
    }
    let left = (a - v) * gauss_integral(v - a, v, sigma) + gauss_first_moment(v - a, v, sigma);
    let right = (a + v) * gauss_integral(v, v + a, sigma) - gauss_first_moment(v, v + a, sigma);
    (left + right) / (a * a)
}

fn model(p: &[f64; 4], a: f64, u: f64) -> f64 {
    p[0] * windowed_gaussian(u - p[1], p[2].abs(), a) + p[3]
}

struct Problem<'a> {
    coords: &'a [f64],
    values: Vec<f64>,
    weights: Vec<f64>,
    window: f64,
}

impl Problem<'_> {
    fn chi2(&self, p: &[f64; 4]) -> f64 {
        self.coords
            .iter()
            .zip(&self.values)
            .zip(&self.weights)
            .map(|((&u, &y), &w)| {
                let r = y - model(p, self.window, u);
                w * r * r
            })
            .sum()
    }

    /// Columns: analytic for the linear parameters, central differences for
    /// centre and width.
    fn jacobian_row(&self, p: &[f64; 4], u: f64) -> [f64; 4] {
        let shape = windowed_gaussian(u - p[1], p[2].abs(), self.window);
        let mut row = [shape, 0.0, 0.0, 1.0];
        for j in [1, 2] {
            let h = 1e-6 * p[2].abs();
            let (mut hi, mut lo) = (*p, *p);
            hi[j] += h;
            lo[j] -= h;
            row[j] = (model(&hi, self.window, u) - model(&lo, self.window, u)) / (2.0 * h);
        }
        row
    }

    fn normal_equations(&self, p: &[f64; 4]) -> (Matrix4<f64>, Vector4<f64>) {
        let mut jtj = Matrix4::zeros();
        let mut jtr = Vector4::zeros();
        for ((&u, &y), &w) in self.coords.iter().zip(&self.values).zip(&self.weights) {
            let j = Vector4::from(self.jacobian_row(p, u));
            let r = y - model(p, self.window, u);
            jtj += w * j * j.transpose();
            jtr += w * r * j;
        }
        (jtj, jtr)
    }
}

fn moment_guess(coords: &[f64], values: &[f64]) -> Result<[f64; 4]> {
    let lo = values.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if hi - lo <= 1e-12 * hi.abs().max(lo.abs()) || !(hi - lo).is_finite() {
        return Err(Error::NoPeak);
    }
    let lifted: Vec<f64> = values.iter().map(|v| v - lo).collect();
    let mass: f64 = lifted.iter().sum();
    let mean = coords.iter().zip(&lifted).map(|(u, w)| u * w).sum::<f64>() / mass;
    let var = coords
        .iter()
        .zip(&lifted)
        .map(|(u, w)| w * (u - mean) * (u - mean))
        .sum::<f64>()
        / mass;
    let min_spacing = {
        let mut sorted = coords.to_vec();
        sorted.sort_by(f64::total_cmp);
        sorted
            .windows(2)
            .map(|w| w[1] - w[0])
            .filter(|d| *d > 0.0)
            .fold(f64::INFINITY, f64::min)
    };
    let sigma = var.sqrt().max(0.5 * min_spacing);
    Ok([hi - lo, mean, sigma, lo])
}

fn run_fit(problem: Problem<'_>, opts: &FitOptions, scale_covariance: bool) -> Result<GaussianFit> {
    let n = problem.coords.len();
    let mut distinct = problem.coords.to_vec();
    distinct.sort_by(f64::total_cmp);
    distinct.dedup();
    if distinct.len() < MIN_POINTS {
        return Err(Error::NotEnoughData(format!(
            "a Gaussian fit needs at least {MIN_POINTS} distinct coordinates, got {}",
            distinct.len()
        )));
    }
    if problem
        .coords
        .iter()
        .chain(&problem.values)
        .any(|v| !v.is_finite())
    {
        return Err(Error::NonFinite("fit input"));
    }
    if !(opts.window_half_width >= 0.0 && opts.window_half_width.is_finite()) {
        return Err(Error::param("window half-width must be finite and >= 0"));
    }

    let mut p = moment_guess(problem.coords, &problem.values)?;
    if opts.window_half_width > 0.0 {
        // The moment width already contains the window's variance a²/6.
        let a2 = opts.window_half_width * opts.window_half_width / 6.0;
        p[2] = (p[2] * p[2] - a2).max(p[2] * p[2] * 0.04).sqrt();
    }
    let mut chi2 = problem.chi2(&p);
    let mut lambda = 1e-3;
    let mut converged = false;
    let mut iterations = 0;
    while iterations < opts.max_iterations {
        iterations += 1;
        let (jtj, jtr) = problem.normal_equations(&p);
        let mut damped = jtj;
        for k in 0..4 {
            damped[(k, k)] += lambda * jtj[(k, k)].max(1e-300);
        }
        let Some(step) = damped.lu().solve(&jtr) else {
            lambda *= 10.0;
            continue;
        };
        let mut trial = p;
        for k in 0..4 {
            trial[k] += step[k];
        }
        trial[2] = trial[2].abs();
        let trial_chi2 = problem.chi2(&trial);
        let scales = [p[0].abs(), p[2], p[2], p[0].abs()];
        let small = (0..4).all(|k| step[k].abs() <= opts.tolerance * (p[k].abs() + scales[k]));
        if trial_chi2.is_finite() && trial_chi2 <= chi2 {
            p = trial;
            chi2 = trial_chi2;
            lambda = (lambda * 0.3).max(1e-12);
            if small {
                converged = true;
                break;
            }
        } else {
            if small || lambda > 1e15 {
                converged = true;
                break;
            }
            lambda *= 10.0;
        }
    }
    if p[2].is_nan() || p[2] <= 0.0 {
        return Err(Error::NoPeak);
    }

    let (jtj, _) = problem.normal_equations(&p);
    let dof = n.saturating_sub(4).max(1) as f64;
    let reduced = chi2 / dof;
    let mut cov = jtj
        .try_inverse()
        .unwrap_or_else(|| Matrix4::from_element(f64::NAN));
    if scale_covariance {
        cov *= reduced;
    }
    let mut covariance = [[0.0; 4]; 4];
    for (r, row) in covariance.iter_mut().enumerate() {
        for (c, v) in row.iter_mut().enumerate() {
            *v = 0.5 * (cov[(r, c)] + cov[(c, r)]);
        }
    }
    if !converged {
        log::warn!(
            "Gaussian fit did not converge within {} iterations",
            opts.max_iterations
        );
    }
    Ok(GaussianFit {
        amplitude: p[0],
        center: p[1],
        sigma: p[2],
        baseline: p[3],
        covariance,
        reduced_chi_square: reduced,
        converged,
        iterations,
        window_half_width: opts.window_half_width,
    })
}

/// Poisson-weighted fit of count rates with point sampling.
pub fn fit_gaussian(points: &[ScanPoint]) -> Result<GaussianFit> {
    fit_gaussian_with(points, &FitOptions::default())
}

pub fn fit_gaussian_with(points: &[ScanPoint], opts: &FitOptions) -> Result<GaussianFit> {
    if points
        .iter()
        .any(|p| p.dwell.is_nan() || p.dwell <= 0.0 || p.counts < 0.0)
    {
        return Err(Error::param("scan points need dwell > 0 and counts >= 0"));
    }
    if points.iter().map(|p| p.counts).sum::<f64>() <= 0.0 {
        return Err(Error::NoPeak);
    }
    let coords: Vec<f64> = points.iter().map(|p| p.coord).collect();
    let problem = Problem {
        coords: &coords,
        values: points.iter().map(|p| p.counts / p.dwell).collect(),
        weights: points
            .iter()
            .map(|p| p.dwell * p.dwell / p.counts.max(1.0))
            .collect(),
        window: opts.window_half_width,
    };
    run_fit(problem, opts, false)
}

/// Unweighted fit of a sampled profile (no counting noise); the covariance
/// is scaled by the residual variance.
pub fn fit_profile(coords: &[f64], values: &[f64], window_half_width: f64) -> Result<GaussianFit> {
    if coords.len() != values.len() {
        return Err(Error::param("coordinate and value lengths differ"));
    }
    let opts = FitOptions {
        window_half_width,
        ..FitOptions::default()
    };
    let problem = Problem {
        coords,
        values: values.to_vec(),
        weights: vec![1.0; coords.len()],
        window: window_half_width,
    };
    run_fit(problem, &opts, true)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    /// The product violates the separability bound.
    Entangled,
    NotDemonstrated,
}

impl Verdict {
    pub fn as_str(self) -> &'static str {
        match self {
            Verdict::Entangled => "entangled",
            Verdict::NotDemonstrated => "not_demonstrated",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EntanglementReport {
    pub var_x_minus: f64,
    pub var_x_minus_error: Option<f64>,
    pub var_p_plus: f64,
    pub var_p_plus_error: Option<f64>,
    pub product: f64,
    pub product_error: Option<f64>,
    pub bound: f64,
    pub significance: f64,
    pub verdict: Verdict,
}

impl EntanglementReport {
    /// Builds a report from variances and optional one-sigma errors. The
    /// product error is propagated to first order when both errors exist.
    pub fn from_variances(
        var_x_minus: (f64, Option<f64>),
        var_p_plus: (f64, Option<f64>),
        significance: f64,
    ) -> Result<Self> {
        let (vx, ex) = var_x_minus;
        let (vp, ep) = var_p_plus;
        if !(vx > 0.0 && vp > 0.0) || !vx.is_finite() || !vp.is_finite() {
            return Err(Error::param("variances must be positive and finite"));
        }
        if significance.is_nan() || significance < 0.0 {
            return Err(Error::param("significance multiplier must be >= 0"));
        }
        let product = vx * vp;
        let product_error = match (ex, ep) {
            (Some(ex), Some(ep)) => Some(((vp * ex).powi(2) + (vx * ep).powi(2)).sqrt()),
            _ => None,
        };
        Ok(Self::with_product(
            vx,
            ex,
            vp,
            ep,
            product,
            product_error,
            significance,
        ))
    }

    /// Report whose product (and its error) were estimated directly, for
    /// example as a mean over repeated runs.
    pub fn with_product(
        var_x_minus: f64,
        var_x_minus_error: Option<f64>,
        var_p_plus: f64,
        var_p_plus_error: Option<f64>,
        product: f64,
        product_error: Option<f64>,
        significance: f64,
    ) -> Self {
        let margin = significance * product_error.unwrap_or(0.0);
        let verdict = if product + margin < SEPARABILITY_BOUND {
            Verdict::Entangled
        } else {
            Verdict::NotDemonstrated
        };
        Self {
            var_x_minus,
            var_x_minus_error,
            var_p_plus,
            var_p_plus_error,
            product,
            product_error,
            bound: SEPARABILITY_BOUND,
            significance,
            verdict,
        }
    }
}

/// Separability test from an `x₋` fit [m] and a `p₊` fit [rad/m]; the
/// verdict uses the central value (no significance margin).
pub fn epr_product(
    fit_x_minus: &GaussianFit,
    fit_p_plus: &GaussianFit,
) -> Result<EntanglementReport> {
    epr_product_with(fit_x_minus, fit_p_plus, 0.0)
}

pub fn epr_product_with(
    fit_x_minus: &GaussianFit,
    fit_p_plus: &GaussianFit,
    significance: f64,
) -> Result<EntanglementReport> {
    if !fit_x_minus.converged || !fit_p_plus.converged {
        return Err(Error::NotConverged);
    }
    let err = |f: &GaussianFit| Some(f.variance_error()).filter(|e| e.is_finite());
    EntanglementReport::from_variances(
        (fit_x_minus.variance(), err(fit_x_minus)),
        (fit_p_plus.variance(), err(fit_p_plus)),
        significance,
    )
}

/// Ratio of fitted rotated widths: `Δx₋/Δx₊` for a position distribution,
/// `Δp₊/Δp₋` for a momentum distribution.
pub fn aspect_ratio(dist: &JointDistribution) -> Result<f64> {
    let sec = sections_rotated(dist)?;
    let plus = fit_profile(&sec.plus_axis, &sec.plus, 0.0)?.sigma;
    let minus = fit_profile(&sec.minus_axis, &sec.minus, 0.0)?.sigma;
    Ok(match dist.domain {
        Domain::Position => minus / plus,
        Domain::Frequency => plus / minus,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BootstrapError {
    pub mean: f64,
    /// Sample standard deviation across runs.
    pub std: f64,
    /// Standard error of the mean, `std/√m`.
    pub sem: f64,
    pub runs: usize,
}

/// Spread of a derived quantity over `m ≥ 2` independent runs.
pub fn bootstrap_error(values: &[f64]) -> Result<BootstrapError> {
    let m = values.len();
    if m < 2 {
        return Err(Error::NotEnoughData(format!(
            "error bars need at least 2 runs, got {m}"
        )));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("bootstrap input"));
    }
    let mean = values.iter().sum::<f64>() / m as f64;
    let ss = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>();
    let std = (ss / (m - 1) as f64).sqrt();
    Ok(BootstrapError {
        mean,
        std,
        sem: std / (m as f64).sqrt(),
        runs: m,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub phi_0: f64,
    pub w_over_lc: f64,
    pub var_x_minus: f64,
    pub err_var_x_minus: f64,
    pub var_p_plus: f64,
    pub err_var_p_plus: f64,
    pub product: f64,
    pub err_product: f64,
    /// Second moment of the noiseless `q₊` section, kept as a diagnostic.
    pub moment_var_p_plus: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepResult {
    /// Successful rows sorted by `w/l_c`.
    pub rows: Vec<SweepRow>,
    /// `(phi_0, message)` of rows whose pipeline failed.
    pub failures: Vec<(f64, String)>,
    /// `var_p_plus ≈ intercept + slope·(w/l_c)²`.
    pub slope: f64,
    pub slope_error: f64,
    pub intercept: f64,
    pub intercept_error: f64,
    /// `w/l_c` where the product crosses the bound, with its error.
    pub crossing: Option<(f64, f64)>,
}

/// Weighted straight-line fit `y = a + c·x`; returns `(a, c, σ_a, σ_c)`.
fn weighted_line(x: &[f64], y: &[f64], sigma: &[f64]) -> Result<(f64, f64, f64, f64)> {
    let usable = sigma.iter().all(|s| *s > 0.0 && s.is_finite());
    let w: Vec<f64> = sigma
        .iter()
        .map(|s| if usable { 1.0 / (s * s) } else { 1.0 })
        .collect();
    let s0: f64 = w.iter().sum();
    let sx: f64 = w.iter().zip(x).map(|(w, x)| w * x).sum();
    let sy: f64 = w.iter().zip(y).map(|(w, y)| w * y).sum();
    let sxx: f64 = w.iter().zip(x).map(|(w, x)| w * x * x).sum();
    let sxy: f64 = w.iter().zip(x).zip(y).map(|((w, x), y)| w * x * y).sum();
    let det = s0 * sxx - sx * sx;
    if x.len() < 2 || det.abs() <= 1e-300 {
        return Err(Error::NotEnoughData(
            "line fit needs two distinct abscissae".into(),
        ));
    }
    let c = (s0 * sxy - sx * sy) / det;
    let a = (sxx * sy - sx * sxy) / det;
    let mut var_a = sxx / det;
    let mut var_c = s0 / det;
    if !usable {
        let dof = (x.len() as f64 - 2.0).max(1.0);
        let rss: f64 = x.iter().zip(y).map(|(x, y)| (y - a - c * x).powi(2)).sum();
        var_a *= rss / dof;
        var_c *= rss / dof;
    }
    Ok((a, c, var_a.sqrt(), var_c.sqrt()))
}

/// First abscissa where `y` reaches `level`, by linear interpolation
/// between neighbouring samples.
fn first_crossing(x: &[f64], y: &[f64], level: f64) -> Option<f64> {
    if y.first().is_some_and(|&y0| y0 >= level) {
        return Some(x[0]);
    }
    (1..x.len()).find(|&k| y[k] >= level).map(|k| {
        let t = (level - y[k - 1]) / (y[k] - y[k - 1]);
        x[k - 1] + t * (x[k] - x[k - 1])
    })
}

/// Collects per-`φ_0` results into a sweep: sorts rows, fits the momentum
/// variance against `(w/l_c)²` and locates where the product crosses the
/// separability bound. The row producer runs the full pipeline.
pub fn coherence_sweep<F>(phi_0: &[f64], mut run_row: F) -> Result<SweepResult>
where
    F: FnMut(f64) -> Result<SweepRow>,
{
    if phi_0.is_empty() {
        return Err(Error::param("sweep needs at least one phi_0"));
    }
    if let Some(bad) = phi_0.iter().find(|p| !(**p >= 0.0 && p.is_finite())) {
        return Err(Error::param(format!(
            "phi_0 values must be >= 0, got {bad}"
        )));
    }
    let mut rows = Vec::new();
    let mut failures = Vec::new();
    for &p in phi_0 {
        match run_row(p) {
            Ok(row) => rows.push(row),
            Err(e) => {
                log::warn!("sweep row phi_0 = {p} failed: {e}");
                failures.push((p, e.to_string()));
            }
        }
    }
    if 2 * failures.len() > phi_0.len() {
        return Err(Error::NotEnoughData(format!(
            "{} of {} sweep rows failed",
            failures.len(),
            phi_0.len()
        )));
    }
    rows.sort_by(|a, b| a.w_over_lc.total_cmp(&b.w_over_lc));

    let x2: Vec<f64> = rows.iter().map(|r| r.w_over_lc * r.w_over_lc).collect();
    let vp: Vec<f64> = rows.iter().map(|r| r.var_p_plus).collect();
    let ep: Vec<f64> = rows.iter().map(|r| r.err_var_p_plus).collect();
    let (intercept, slope, intercept_error, slope_error) = weighted_line(&x2, &vp, &ep)?;

    let x: Vec<f64> = rows.iter().map(|r| r.w_over_lc).collect();
    let prod: Vec<f64> = rows.iter().map(|r| r.product).collect();
    let crossing = first_crossing(&x, &prod, SEPARABILITY_BOUND).map(|c| {
        let hi: Vec<f64> = rows.iter().map(|r| r.product + r.err_product).collect();
        let lo: Vec<f64> = rows.iter().map(|r| r.product - r.err_product).collect();
        let early = first_crossing(&x, &hi, SEPARABILITY_BOUND).unwrap_or(c);
        let late = first_crossing(&x, &lo, SEPARABILITY_BOUND).unwrap_or(c);
        (c, 0.5 * (late - early).abs())
    });
    Ok(SweepResult {
        rows,
        failures,
        slope,
        slope_error,
        intercept,
        intercept_error,
        crossing,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::Grid1D;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Poisson};

    fn gaussian(u: f64, a: f64, mu: f64, s: f64, b: f64) -> f64 {
        a * (-(u - mu) * (u - mu) / (2.0 * s * s)).exp() + b
    }

    #[test]
    fn noiseless_fit_recovers_sigma() {
        let s = 40e-6;
        let coords: Vec<f64> = (0..21).map(|k| (k as f64 - 10.0) * 12e-6).collect();
        let points: Vec<ScanPoint> = coords
            .iter()
            .map(|&u| ScanPoint {
                coord: u,
                counts: gaussian(u, 300.0, 3e-6, s, 2.0) * 60.0,
                dwell: 60.0,
            })
            .collect();
        let fit = fit_gaussian(&points).unwrap();
        assert!(fit.converged);
        assert!((fit.sigma / s - 1.0).abs() < 1e-6, "{}", fit.sigma);
        assert!((fit.center - 3e-6).abs() < 1e-12);
    }

    fn noisy_scan(seed: u64, peak: f64, s: f64) -> Vec<ScanPoint> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..25)
            .map(|k| {
                let u = (k as f64 - 12.0) * s / 4.0;
                let lam = gaussian(u, peak, 0.0, s, 1.0);
                ScanPoint {
                    coord: u,
                    counts: Poisson::new(lam).unwrap().sample(&mut rng),
                    dwell: 1.0,
                }
            })
            .collect()
    }

    #[test]
    fn poisson_fit_accuracy_and_covariance() {
        let s = 40e-6;
        let fits: Vec<GaussianFit> = (0..100)
            .map(|k| fit_gaussian(&noisy_scan(k, 300.0, s)).unwrap())
            .collect();
        // Per-fit scatter is about 2.5%, so a few of 100 fits may land
        // outside 5%; the bulk and the mean must not.
        let within = fits
            .iter()
            .filter(|f| (f.sigma / s - 1.0).abs() < 0.05)
            .count();
        assert!(within >= 95, "{within}");
        let sig: Vec<f64> = fits.iter().map(|f| f.sigma).collect();
        let mean = sig.iter().sum::<f64>() / sig.len() as f64;
        assert!((mean / s - 1.0).abs() < 0.01, "{mean}");
        let spread = bootstrap_error(&sig).unwrap().std;
        let reported = fits.iter().map(|f| f.sigma_error()).sum::<f64>() / fits.len() as f64;
        let ratio = spread / reported;
        assert!((1.0 / 1.5..1.5).contains(&ratio), "{ratio}");
    }

    #[test]
    fn flat_data_has_no_peak() {
        let points: Vec<ScanPoint> = (0..9)
            .map(|k| ScanPoint {
                coord: k as f64,
                counts: 7.0,
                dwell: 1.0,
            })
            .collect();
        assert!(matches!(fit_gaussian(&points), Err(Error::NoPeak)));
        let zeros: Vec<ScanPoint> = points
            .iter()
            .map(|p| ScanPoint { counts: 0.0, ..*p })
            .collect();
        assert!(matches!(fit_gaussian(&zeros), Err(Error::NoPeak)));
    }

    #[test]
    fn too_few_coordinates_rejected() {
        let points: Vec<ScanPoint> = (0..8)
            .map(|k| ScanPoint {
                coord: (k % 4) as f64,
                counts: 1.0 + k as f64,
                dwell: 1.0,
            })
            .collect();
        assert!(matches!(
            fit_gaussian(&points),
            Err(Error::NotEnoughData(_))
        ));
    }

    #[test]
    fn windowed_model_matches_numerical_convolution() {
        let (s, a) = (1.3, 2.1);
        for v in [-4.0, -1.0, 0.0, 0.4, 2.5, 6.0] {
            let m = 20_000;
            let h = 2.0 * a / m as f64;
            let num: f64 = (0..m)
                .map(|k| {
                    let t = -a + (k as f64 + 0.5) * h;
                    let tri = (a - t.abs()) / (a * a);
                    tri * (-(v - t) * (v - t) / (2.0 * s * s)).exp() * h
                })
                .sum();
            assert!((windowed_gaussian(v, s, a) - num).abs() < 1e-8, "{v}");
        }
        assert_eq!(windowed_gaussian(0.7, 1.0, 0.0), (-0.245f64).exp());
    }

    #[test]
    fn windowed_fit_removes_triangle_broadening() {
        let (s, a) = (8e-6, 23e-6);
        let coords: Vec<f64> = (0..41).map(|k| (k as f64 - 20.0) * 2e-6).collect();
        let values: Vec<f64> = coords
            .iter()
            .map(|&u| 5.0 * windowed_gaussian(u, s, a))
            .collect();
        let fit = fit_profile(&coords, &values, a).unwrap();
        assert!((fit.sigma / s - 1.0).abs() < 1e-6, "{}", fit.sigma);
        let plain = fit_profile(&coords, &values, 0.0).unwrap();
        assert!(plain.sigma > 1.2 * s);
    }

    #[test]
    fn verdict_examples() {
        let rep = |p: f64| EntanglementReport::from_variances((p, None), (1.0, None), 0.0).unwrap();
        assert_eq!(rep(0.0112).verdict, Verdict::Entangled);
        assert_eq!(rep(4.62).verdict, Verdict::NotDemonstrated);
        assert_eq!(rep(0.25).verdict, Verdict::NotDemonstrated);
        let cautious =
            EntanglementReport::from_variances((0.2, Some(0.05)), (1.0, Some(0.0)), 1.0).unwrap();
        assert_eq!(cautious.verdict, Verdict::NotDemonstrated);
    }

    fn fake_fit(sigma: f64, sigma_err: f64) -> GaussianFit {
        let mut covariance = [[0.0; 4]; 4];
        covariance[2][2] = sigma_err * sigma_err;
        GaussianFit {
            amplitude: 1.0,
            center: 0.0,
            sigma,
            baseline: 0.0,
            covariance,
            reduced_chi_square: 1.0,
            converged: true,
            iterations: 1,
            window_half_width: 0.0,
        }
    }

    #[test]
    fn epr_product_propagates_errors() {
        let (x, p) = (fake_fit(8e-6, 0.2e-6), fake_fit(3.3e3, 100.0));
        let r = epr_product(&x, &p).unwrap();
        let expected = 8e-6f64.powi(2) * 3.3e3f64.powi(2);
        assert!((r.product / expected - 1.0).abs() < 1e-12);
        let rel = ((2.0 * 0.2 / 8.0f64).powi(2) + (2.0 * 100.0 / 3.3e3f64).powi(2)).sqrt();
        assert!((r.product_error.unwrap() / (expected * rel) - 1.0).abs() < 1e-12);
        let mut bad = x.clone();
        bad.converged = false;
        assert!(matches!(epr_product(&bad, &p), Err(Error::NotConverged)));
    }

    proptest! {
        #[test]
        fn verdict_monotone_in_momentum_variance(vx in 1e-12f64..1e-9, vp in 1e6f64..1e11, f in 1.0f64..10.0) {
            let a = EntanglementReport::from_variances((vx, None), (vp, None), 0.0).unwrap();
            let b = EntanglementReport::from_variances((vx, None), (vp * f, None), 0.0).unwrap();
            prop_assert!(!(a.verdict == Verdict::NotDemonstrated && b.verdict == Verdict::Entangled));
        }

        #[test]
        fn fit_invariant_under_dwell_rescaling(scale in 1.0f64..20.0, seed in 0u64..50) {
            // Counts of at least one keep the Poisson weight floor inactive.
            let pts: Vec<ScanPoint> = noisy_scan(seed, 200.0, 1.0)
                .into_iter()
                .map(|p| ScanPoint { counts: p.counts.max(1.0), ..p })
                .collect();
            let scaled: Vec<ScanPoint> = pts.iter().map(|p| ScanPoint { dwell: p.dwell * scale, counts: p.counts * scale, ..*p }).collect();
            let a = fit_gaussian(&pts).unwrap();
            let b = fit_gaussian(&scaled).unwrap();
            prop_assert!((a.sigma / b.sigma - 1.0).abs() < 1e-4);
        }
    }

    #[test]
    fn aspect_ratio_of_isotropic_gaussian() {
        let g = Grid1D::new(128, 1.0).unwrap();
        let xs = g.xs();
        let mut values = Vec::new();
        for &a in &xs {
            for &b in &xs {
                values.push((-(a * a + b * b) / 200.0).exp());
            }
        }
        for domain in [Domain::Position, Domain::Frequency] {
            let d = JointDistribution::new(g, domain, values.clone()).unwrap();
            assert!((aspect_ratio(&d).unwrap() - 1.0).abs() < 1e-6);
        }
    }

    #[test]
    fn bootstrap_properties() {
        assert_eq!(bootstrap_error(&[2.5, 2.5, 2.5]).unwrap().std, 0.0);
        assert!(bootstrap_error(&[1.0]).is_err());
        let b = bootstrap_error(&[1.0, 2.0, 3.0, 4.0]).unwrap();
        assert!((b.std - (5.0f64 / 3.0).sqrt()).abs() < 1e-12);
        assert!((b.sem - b.std / 2.0).abs() < 1e-15);
    }

    #[test]
    fn bootstrap_error_tracks_covariance_and_scales_with_runs() {
        let s = 40e-6;
        let var_of = |seed: u64| fit_gaussian(&noisy_scan(seed, 300.0, s)).unwrap();
        let five: Vec<GaussianFit> = (0..5).map(var_of).collect();
        let sd5 = bootstrap_error(&five.iter().map(|f| f.variance()).collect::<Vec<_>>()).unwrap();
        let propagated = five[0].variance_error();
        let ratio = sd5.std / propagated;
        assert!((0.5..2.0).contains(&ratio), "{ratio}");

        // Averaged over many independent groups, the SEM ratio between 5 and
        // 20 runs approaches 2.
        let mut r5 = 0.0;
        let mut r20 = 0.0;
        for g in 0..20u64 {
            let v: Vec<f64> = (0..20)
                .map(|k| var_of(1000 + g * 20 + k).variance())
                .collect();
            r5 += bootstrap_error(&v[..5]).unwrap().sem;
            r20 += bootstrap_error(&v).unwrap().sem;
        }
        let scaling = r5 / r20;
        assert!((2.0 / 1.5..2.0 * 1.5).contains(&scaling), "{scaling}");
    }

    fn row(phi_0: f64, x: f64, vp: f64, product: f64, err: f64) -> SweepRow {
        SweepRow {
            phi_0,
            w_over_lc: x,
            var_x_minus: 1.0,
            err_var_x_minus: 0.01,
            var_p_plus: vp,
            err_var_p_plus: 0.01 * vp,
            product,
            err_product: err,
            moment_var_p_plus: vp,
        }
    }

    #[test]
    fn sweep_fit_and_crossing() {
        let w = 110e-6;
        let b = 1.0 / (8.0 * w * w);
        let c = 1.0 / (2.0 * w * w);
        let res = coherence_sweep(&[3.0, 0.0, 1.0, 2.0], |p| {
            let vp = b + c * p * p;
            Ok(row(p, p, vp, 0.1 + 0.1 * p, 0.05))
        })
        .unwrap();
        assert_eq!(
            res.rows.iter().map(|r| r.phi_0).collect::<Vec<_>>(),
            vec![0.0, 1.0, 2.0, 3.0]
        );
        assert!((res.slope / c - 1.0).abs() < 1e-9);
        assert!((res.intercept / b - 1.0).abs() < 1e-9);
        let (x, e) = res.crossing.unwrap();
        assert!((x - 1.5).abs() < 1e-12);
        assert!((e - 0.5).abs() < 1e-12);
    }

    #[test]
    fn sweep_tolerates_minority_failures() {
        let ok = coherence_sweep(&[0.0, 1.0, 2.0], |p| {
            if p == 1.0 {
                Err(Error::NoPeak)
            } else {
                Ok(row(p, p, 1.0 + p, p, 0.1))
            }
        })
        .unwrap();
        assert_eq!(ok.failures.len(), 1);
        let bad = coherence_sweep(&[0.0, 1.0, 2.0], |p| {
            if p > 0.0 {
                Err(Error::NoPeak)
            } else {
                Ok(row(p, p, 1.0, 0.1, 0.1))
            }
        });
        assert!(bad.is_err());
        assert!(coherence_sweep(&[-1.0], |_| Err(Error::NoPeak)).is_err());
    }
}
