//! The biphoton kernel: phase matching and joint two-photon distributions.
//!
//! The joint momentum amplitude is `Φ̃(q_s,q_i) = Ẽ(q_s+q_i)·χ(q₋)` where
//! `Ẽ` is the pump angular amplitude and `χ(q₋) = sinc(Δκ L/2)` with the
//! paraxial mismatch `Δκ = q₋²/(2k)`, `q± = (q_s ± q_i)/√2`. Signal and idler
//! share the pump grid, so `q_s + q_i` always falls on a pump frequency
//! sample (index `k_s + k_i - n/2`).

use std::f64::consts::{PI, SQRT_2};

use num_complex::Complex64;
use rayon::prelude::*;

use crate::numerics::{Domain, Field1D, Field2D, FourierPlan, Grid1D};
use crate::pump::{analytic_csd, EnsembleSampler, PumpModel, PumpSpec};
use crate::{Error, Result};

/// Pump angular intensity at the grid edge may not exceed this fraction of
/// its peak.
pub const EDGE_TOLERANCE: f64 = 1e-3;

/// Realisations evaluated together before folding into the running sum.
/// Fixed so that the reduction order never depends on the thread count.
const BATCH: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhaseMatching {
    /// Crystal length [m].
    pub length: f64,
    pub k_s: f64,
    pub k_i: f64,
    pub k_p: f64,
}

impl PhaseMatching {
    pub fn new(length: f64, k_s: f64, k_i: f64, k_p: f64) -> Result<Self> {
        for (name, v) in [("length", length), ("k_s", k_s), ("k_i", k_i), ("k_p", k_p)] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::param(format!(
                    "phase matching {name} must be positive, got {v}"
                )));
            }
        }
        Ok(Self {
            length,
            k_s,
            k_i,
            k_p,
        })
    }

    /// In-medium wavenumbers from vacuum wavelengths and refractive indices.
    pub fn from_wavelengths(
        length: f64,
        (lambda_p, n_p): (f64, f64),
        (lambda_s, n_s): (f64, f64),
        (lambda_i, n_i): (f64, f64),
    ) -> Result<Self> {
        let k = |lambda: f64, n: f64| 2.0 * PI * n / lambda;
        Self::new(length, k(lambda_s, n_s), k(lambda_i, n_i), k(lambda_p, n_p))
    }

    /// Mean signal/idler wavenumber used by the degenerate paraxial form.
    pub fn k_degenerate(&self) -> f64 {
        0.5 * (self.k_s + self.k_i)
    }

    /// Half-width of the central sinc lobe in `q₋`: `√(4πk/L)`.
    pub fn first_zero(&self) -> f64 {
        (4.0 * PI * self.k_degenerate() / self.length).sqrt()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MismatchMode {
    Exact,
    Paraxial,
}

/// `κ - k = -q²/(κ + k)` without cancellation.
fn longitudinal_shift(q: f64, k: f64) -> Result<f64> {
    if q.abs() >= k {
        return Err(Error::Evanescent { q, k });
    }
    let kappa = ((k - q) * (k + q)).sqrt();
    Ok(-q * q / (kappa + k))
}

/// Longitudinal mismatch `Δκ = κ_p - κ_s - κ_i` with the collinear residual
/// removed (quasi-phase matching makes `Δκ(0,0) = 0`).
pub fn phase_mismatch(q_s: f64, q_i: f64, pm: &PhaseMatching, mode: MismatchMode) -> Result<f64> {
    match mode {
        MismatchMode::Exact => Ok(longitudinal_shift(q_s + q_i, pm.k_p)?
            - longitudinal_shift(q_s, pm.k_s)?
            - longitudinal_shift(q_i, pm.k_i)?),
        MismatchMode::Paraxial => Ok(q_s * q_s / (2.0 * pm.k_s) + q_i * q_i / (2.0 * pm.k_i)
            - (q_s + q_i) * (q_s + q_i) / (2.0 * pm.k_p)),
    }
}

/// `sin(u)/u`, with a series branch near zero.
pub fn sinc(u: f64) -> f64 {
    if u.abs() < 1e-4 {
        1.0 - u * u / 6.0
    } else {
        u.sin() / u
    }
}

/// `χ(q₋) = sinc(L q₋²/(4k))`, the degenerate paraxial phase-matching
/// amplitude.
pub fn phase_matching_amplitude(q_minus: f64, pm: &PhaseMatching) -> f64 {
    sinc(pm.length * q_minus * q_minus / (4.0 * pm.k_degenerate()))
}

/// Nonnegative distribution over `(signal, idler)` coordinates, row-major
/// with the signal index first.
#[derive(Debug, Clone)]
pub struct JointDistribution {
    pub grid: Grid1D,
    pub domain: Domain,
    pub values: Vec<f64>,
}

impl JointDistribution {
    pub fn new(grid: Grid1D, domain: Domain, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.n() * grid.n() {
            return Err(Error::GridMismatch);
        }
        if values.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::param(
                "joint distribution must be finite and nonnegative",
            ));
        }
        let d = Self {
            grid,
            domain,
            values,
        };
        if d.total_mass() <= 0.0 {
            return Err(Error::EmptyDistribution);
        }
        Ok(d)
    }

    pub fn n(&self) -> usize {
        self.grid.n()
    }

    pub fn get(&self, s: usize, i: usize) -> f64 {
        self.values[s * self.n() + i]
    }

    pub fn axis(&self) -> Vec<f64> {
        self.grid.axis(self.domain)
    }

    pub fn step(&self) -> f64 {
        self.grid.step(self.domain)
    }

    /// Total mass under the transform measure (`dx²` or `(dq/2π)²`), so
    /// that position and momentum masses agree by Parseval.
    pub fn total_mass(&self) -> f64 {
        let m = self.grid.measure(self.domain);
        self.values.iter().sum::<f64>() * m * m
    }

    pub fn peak(&self) -> (usize, usize, f64) {
        let (idx, v) = self
            .values
            .iter()
            .enumerate()
            .fold(
                (0, f64::MIN),
                |acc, (i, &v)| if v > acc.1 { (i, v) } else { acc },
            );
        (idx / self.n(), idx % self.n(), v)
    }

    /// Copy scaled to unit mass.
    pub fn normalized(&self) -> JointDistribution {
        let mass = self.total_mass();
        JointDistribution {
            grid: self.grid,
            domain: self.domain,
            values: self.values.iter().map(|v| v / mass).collect(),
        }
    }

    /// Signal marginal density (idler integrated out).
    pub fn marginal_signal(&self) -> Vec<f64> {
        let h = self.step();
        self.values
            .chunks_exact(self.n())
            .map(|row| row.iter().sum::<f64>() * h)
            .collect()
    }

    pub fn marginal_idler(&self) -> Vec<f64> {
        let n = self.n();
        let h = self.step();
        let mut out = vec![0.0; n];
        for row in self.values.chunks_exact(n) {
            for (o, v) in out.iter_mut().zip(row) {
                *o += v;
            }
        }
        out.iter().map(|v| v * h).collect()
    }

    /// Pearson correlation of `a₊` and `a₋` under the distribution.
    pub fn rotated_correlation(&self) -> f64 {
        let axis = self.axis();
        let (mut m0, mut mu, mut mv, mut muu, mut mvv, mut muv) = (0.0, 0.0, 0.0, 0.0, 0.0, 0.0);
        for (s, row) in self.values.chunks_exact(self.n()).enumerate() {
            for (i, &p) in row.iter().enumerate() {
                let u = (axis[s] + axis[i]) / SQRT_2;
                let v = (axis[s] - axis[i]) / SQRT_2;
                m0 += p;
                mu += p * u;
                mv += p * v;
                muu += p * u * u;
                mvv += p * v * v;
                muv += p * u * v;
            }
        }
        let (mu, mv) = (mu / m0, mv / m0);
        let cov = muv / m0 - mu * mv;
        let var_u = muu / m0 - mu * mu;
        let var_v = mvv / m0 - mv * mv;
        cov / (var_u * var_v).sqrt()
    }
}

/// Marginals along the rotated axes `a± = (a_s ± a_i)/√2`.
#[derive(Debug, Clone)]
pub struct RotatedSections {
    pub plus_axis: Vec<f64>,
    pub plus: Vec<f64>,
    pub minus_axis: Vec<f64>,
    pub minus: Vec<f64>,
}

/// Rotated marginals of a square distribution.
///
/// Grid points with equal `k_s + k_i` lie on one line of constant `a₊`
/// (spacing `h/√2` between lines), so each marginal sample is an exact sum
/// along a lattice diagonal, scaled to a density in the rotated coordinate.
pub fn sections_rotated(dist: &JointDistribution) -> Result<RotatedSections> {
    let n = dist.n();
    if dist.values.len() != n * n {
        return Err(Error::GridMismatch);
    }
    let h = dist.step();
    let lines = 2 * n - 1;
    let mut plus = vec![0.0; lines];
    let mut minus = vec![0.0; lines];
    for (s, row) in dist.values.chunks_exact(n).enumerate() {
        for (i, &p) in row.iter().enumerate() {
            plus[s + i] += p;
            minus[s + n - 1 - i] += p;
        }
    }
    let scale = SQRT_2 * h;
    plus.iter_mut().for_each(|v| *v *= scale);
    minus.iter_mut().for_each(|v| *v *= scale);
    // In the grid's own axis units the a₊ of (s, i) is (s+i-n)·h/√2.
    let offset = match dist.domain {
        Domain::Position | Domain::Frequency => n as f64,
    };
    let plus_axis = (0..lines)
        .map(|m| (m as f64 - offset) * h / SQRT_2)
        .collect();
    let minus_axis = (0..lines)
        .map(|d| (d as f64 - (n - 1) as f64) * h / SQRT_2)
        .collect();
    Ok(RotatedSections {
        plus_axis,
        plus,
        minus_axis,
        minus,
    })
}

/// Precomputed phase-matching factors and transform plan for one grid.
#[derive(Debug, Clone)]
pub struct BiphotonKernel {
    grid: Grid1D,
    plan: FourierPlan,
    /// `χ` indexed by `k_s - k_i + n - 1`.
    chi: Vec<f64>,
}

impl BiphotonKernel {
    pub fn new(grid: &Grid1D, pm: &PhaseMatching) -> Self {
        let n = grid.n();
        let dq = grid.dq();
        let chi = (0..2 * n - 1)
            .map(|d| {
                let q_minus = (d as f64 - (n - 1) as f64) * dq / SQRT_2;
                phase_matching_amplitude(q_minus, pm)
            })
            .collect();
        let q_max = PI / grid.dx();
        if q_max > 0.3 * pm.k_degenerate() {
            log::warn!(
                "grid reaches |q| = {q_max:.3e} rad/m, beyond the paraxial regime (k = {:.3e} rad/m)",
                pm.k_degenerate()
            );
        }
        Self {
            grid: *grid,
            plan: FourierPlan::new(n),
            chi,
        }
    }

    pub fn grid(&self) -> &Grid1D {
        &self.grid
    }

    /// Pump angular amplitude `Ẽ(q)`.
    pub fn angular_amplitude(&self, field: &Field1D) -> Result<Vec<Complex64>> {
        if field.grid != self.grid || field.domain != Domain::Position {
            return Err(Error::GridMismatch);
        }
        let mut values = field.values.clone();
        self.plan.forward_rows(&mut values, self.grid.dx());
        Ok(values)
    }

    fn pump_index(&self, s: usize, i: usize) -> Option<usize> {
        let n = self.grid.n();
        (s + i).checked_sub(n / 2).filter(|&m| m < n)
    }

    /// `Φ̃(q_s,q_i) = Ẽ(q_s+q_i) χ(q₋)` as a frequency-domain field.
    pub fn amplitude_from_spectrum(&self, spectrum: &[Complex64]) -> Vec<Complex64> {
        let n = self.grid.n();
        let zero = Complex64::new(0.0, 0.0);
        let mut out = vec![zero; n * n];
        for (s, row) in out.chunks_exact_mut(n).enumerate() {
            for (i, v) in row.iter_mut().enumerate() {
                if let Some(m) = self.pump_index(s, i) {
                    *v = spectrum[m] * self.chi[s + n - 1 - i];
                }
            }
        }
        out
    }

    /// `S(q_s+q_i)·χ²(q₋)` for a pump angular intensity `S`.
    pub fn intensity_from_angular(&self, angular: &[f64]) -> Vec<f64> {
        let n = self.grid.n();
        let mut out = vec![0.0; n * n];
        for (s, row) in out.chunks_exact_mut(n).enumerate() {
            for (i, v) in row.iter_mut().enumerate() {
                if let Some(m) = self.pump_index(s, i) {
                    let c = self.chi[s + n - 1 - i];
                    *v = angular[m] * c * c;
                }
            }
        }
        out
    }

    /// Position-space intensity `|Φ(x_s,x_i)|²` of one pump realisation.
    pub fn position_intensity(&self, field: &Field1D) -> Result<Vec<f64>> {
        let spectrum = self.angular_amplitude(field)?;
        check_edges(&spectrum.iter().map(|c| c.norm_sqr()).collect::<Vec<_>>())?;
        let mut amp = self.amplitude_from_spectrum(&spectrum);
        let m = self.grid.measure(Domain::Frequency);
        self.plan.inverse_2d(&mut amp, m * m);
        Ok(amp.iter().map(|c| c.norm_sqr()).collect())
    }
}

fn check_edges(angular: &[f64]) -> Result<()> {
    let peak = angular.iter().cloned().fold(0.0, f64::max);
    let edge = angular[0].max(angular[angular.len() - 1]);
    if peak <= 0.0 {
        return Err(Error::EmptyDistribution);
    }
    if edge > EDGE_TOLERANCE * peak {
        return Err(Error::GridExtent(format!(
            "pump angular spectrum at the grid edge is {:.2e} of its peak (limit {EDGE_TOLERANCE:e}); decrease dx",
            edge / peak
        )));
    }
    Ok(())
}

/// Joint momentum amplitude for one coherent pump field.
pub fn joint_momentum_amplitude(pump_field: &Field1D, pm: &PhaseMatching) -> Result<Field2D> {
    let kernel = BiphotonKernel::new(&pump_field.grid, pm);
    let spectrum = kernel.angular_amplitude(pump_field)?;
    check_edges(&spectrum.iter().map(|c| c.norm_sqr()).collect::<Vec<_>>())?;
    Field2D::new(
        pump_field.grid,
        Domain::Frequency,
        kernel.amplitude_from_spectrum(&spectrum),
    )
}

/// Sums `f(index)` over `0..count` in fixed batches with a fixed pairwise
/// fold, so the floating-point result does not depend on scheduling.
fn deterministic_sum<F>(count: usize, len: usize, f: F) -> Result<Vec<f64>>
where
    F: Fn(u64) -> Result<Vec<f64>> + Sync,
{
    let mut acc = vec![0.0; len];
    let indices: Vec<u64> = (0..count as u64).collect();
    for batch in indices.chunks(BATCH) {
        let mut parts: Vec<Vec<f64>> = batch.par_iter().map(|&i| f(i)).collect::<Result<_>>()?;
        while parts.len() > 1 {
            let mut next = Vec::with_capacity(parts.len().div_ceil(2));
            let mut it = parts.into_iter();
            while let Some(mut a) = it.next() {
                if let Some(b) = it.next() {
                    a.iter_mut().zip(&b).for_each(|(x, y)| *x += y);
                }
                next.push(a);
            }
            parts = next;
        }
        if let Some(part) = parts.pop() {
            acc.iter_mut().zip(&part).for_each(|(x, y)| *x += y);
        }
    }
    Ok(acc)
}

/// Pump angular intensity `S(q)` for any pump model: `|Ẽ|²` for a coherent
/// beam, the double transform of the analytic CSD for a GSM beam, and the
/// ensemble mean of `|Ẽ_n|²` for phase screens.
pub fn pump_angular_intensity(spec: &PumpSpec, grid: &Grid1D) -> Result<Vec<f64>> {
    let spec = spec.canonical();
    spec.validate()?;
    spec.check_grid(grid)?;
    let plan = FourierPlan::new(grid.n());
    let angular: Vec<f64> = match spec.model {
        PumpModel::GaussianSchell { .. } => analytic_csd(grid, &spec)?
            .angular_intensity()
            .into_iter()
            .map(|v| v.max(0.0))
            .collect(),
        PumpModel::CoherentGaussian | PumpModel::PhaseScreenEnsemble { .. } => {
            let sampler = EnsembleSampler::new(grid, &spec)?;
            let count = sampler.len();
            let sum = deterministic_sum(count, grid.n(), |i| {
                let mut v = sampler.field(i).values;
                plan.forward_rows(&mut v, grid.dx());
                Ok(v.iter().map(|c| c.norm_sqr()).collect())
            })?;
            sum.into_iter().map(|v| v / count as f64).collect()
        }
    };
    check_edges(&angular)?;
    Ok(angular)
}

/// Joint momentum distribution `P(q_s,q_i) = S(q_s+q_i)·χ²(q₋)`.
///
/// For an ensemble this is the mean of `|Φ̃_n|²`; since every realisation
/// shares the same `χ`, the average is taken over the 1D pump spectra.
pub fn joint_momentum_distribution(
    spec: &PumpSpec,
    pm: &PhaseMatching,
    grid: &Grid1D,
) -> Result<JointDistribution> {
    let angular = pump_angular_intensity(spec, grid)?;
    let kernel = BiphotonKernel::new(grid, pm);
    JointDistribution::new(
        *grid,
        Domain::Frequency,
        kernel.intensity_from_angular(&angular),
    )
}

/// Joint position distribution `𝒫(x_s,x_i)`: per pump realisation the 2D
/// inverse transform of `Φ̃`, squared, then averaged. GSM beams are realised
/// through their equivalent phase-screen ensemble.
pub fn joint_position_distribution(
    spec: &PumpSpec,
    pm: &PhaseMatching,
    grid: &Grid1D,
) -> Result<JointDistribution> {
    let spec = spec.canonical();
    spec.validate()?;
    spec.check_grid(grid)?;
    let kernel = BiphotonKernel::new(grid, pm);
    let sampler = EnsembleSampler::new(grid, &spec)?;
    let count = sampler.len();
    let n = grid.n();
    let sum = deterministic_sum(count, n * n, |i| {
        kernel.position_intensity(&sampler.field(i))
    })?;
    let inv = 1.0 / count as f64;
    JointDistribution::new(
        *grid,
        Domain::Position,
        sum.into_iter().map(|v| v * inv).collect(),
    )
}
