//! Pump-beam models and their two-point correlations.
//!
//! Three models share a Gaussian intensity profile `e^{-x²/(2w²)}` (so `w` is
//! the standard deviation of the intensity, not a 1/e² radius):
//!
//! * a coherent Gaussian with optional wavefront curvature,
//! * the analytic Gaussian Schell-model (GSM) with coherence length `l_c`,
//! * a pseudo-thermal ensemble: the coherent beam times `e^{iφ_n(x)}` for
//!   Gaussian-correlated random phase screens `φ_n`.
//!
//! The GSM cross-spectral density is
//! `W(x₁,x₂) = e^{-(x₁²+x₂²)/(4w²)} e^{-(x₁-x₂)²/(2l_c²)} e^{-ik_p(x₁²-x₂²)/(2R)}`,
//! and the coherent field is chosen as `E(x) = e^{-x²/(4w²)} e^{-ik_p x²/(2R)}`
//! so that `W = E(x₁)E*(x₂)` in the coherent limit.

use std::f64::consts::PI;

use num_complex::Complex64;
use rand_distr::{Distribution, StandardNormal};

use crate::numerics::{Domain, Field1D, FourierPlan, Grid1D};
use crate::rng::{stream, DOMAIN_SCREEN};
use crate::{Error, Result};

/// Minimum number of grid points per coherence length or screen width.
pub const MIN_POINTS_PER_LENGTH: f64 = 4.0;

#[derive(Debug, Clone, PartialEq)]
pub enum PumpModel {
    CoherentGaussian,
    /// Analytic GSM beam. The screen parameters are only used where the
    /// beam has to be realised field by field (position-space
    /// distributions); there the equivalent ensemble has
    /// `φ_0 = delta_phi / coherence_length`.
    GaussianSchell {
        coherence_length: f64,
        delta_phi: f64,
        n_realizations: usize,
        seed: u64,
    },
    PhaseScreenEnsemble {
        delta_phi: f64,
        phi_0: f64,
        n_realizations: usize,
        seed: u64,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct PumpSpec {
    /// Standard deviation of the intensity profile [m].
    pub w: f64,
    /// Wavefront radius of curvature [m]; `f64::INFINITY` for a flat front.
    pub radius: f64,
    /// Pump wavenumber in the medium [rad/m].
    pub k_p: f64,
    pub model: PumpModel,
}

/// Parameters of a phase-screen ensemble.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScreenParams {
    pub delta_phi: f64,
    pub phi_0: f64,
    pub n_realizations: usize,
    pub seed: u64,
}

fn positive_or_inf(v: f64) -> bool {
    v > 0.0 && !v.is_nan()
}

impl PumpSpec {
    pub fn coherent(w: f64, radius: f64, k_p: f64) -> Self {
        Self {
            w,
            radius,
            k_p,
            model: PumpModel::CoherentGaussian,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.w.is_finite() && self.w > 0.0) {
            return Err(Error::param(format!(
                "pump waist must be positive, got {}",
                self.w
            )));
        }
        if !positive_or_inf(self.radius) {
            return Err(Error::param(format!(
                "radius of curvature must be positive or infinite, got {}",
                self.radius
            )));
        }
        if !(self.k_p.is_finite() && self.k_p > 0.0) {
            return Err(Error::param(format!(
                "pump wavenumber must be positive, got {}",
                self.k_p
            )));
        }
        match self.model {
            PumpModel::CoherentGaussian => {}
            PumpModel::GaussianSchell {
                coherence_length,
                delta_phi,
                n_realizations,
                ..
            } => {
                if !positive_or_inf(coherence_length) {
                    return Err(Error::param(
                        "coherence length must be positive or infinite",
                    ));
                }
                check_screen(delta_phi, 0.0, n_realizations)?;
            }
            PumpModel::PhaseScreenEnsemble {
                delta_phi,
                phi_0,
                n_realizations,
                ..
            } => check_screen(delta_phi, phi_0, n_realizations)?,
        }
        Ok(())
    }

    /// Transverse coherence length; infinite for a coherent beam.
    pub fn coherence_length(&self) -> f64 {
        match self.model {
            PumpModel::CoherentGaussian => f64::INFINITY,
            PumpModel::GaussianSchell {
                coherence_length, ..
            } => coherence_length,
            PumpModel::PhaseScreenEnsemble {
                delta_phi, phi_0, ..
            } => coherence_length_of(delta_phi, phi_0).unwrap_or(f64::NAN),
        }
    }

    /// Reduces models that are exactly coherent (`φ_0 = 0`, `l_c = ∞`) to
    /// [`PumpModel::CoherentGaussian`]; every realisation of such an
    /// ensemble is the same field.
    pub fn canonical(&self) -> PumpSpec {
        let coherent = match self.model {
            PumpModel::CoherentGaussian => true,
            PumpModel::GaussianSchell {
                coherence_length, ..
            } => coherence_length.is_infinite(),
            PumpModel::PhaseScreenEnsemble { phi_0, .. } => phi_0 == 0.0,
        };
        if coherent {
            PumpSpec::coherent(self.w, self.radius, self.k_p)
        } else {
            self.clone()
        }
    }

    /// Phase-screen ensemble that realises this beam field by field, if it
    /// is not coherent.
    pub fn screens(&self) -> Option<ScreenParams> {
        match self.canonical().model {
            PumpModel::CoherentGaussian => None,
            PumpModel::GaussianSchell {
                coherence_length,
                delta_phi,
                n_realizations,
                seed,
            } => Some(ScreenParams {
                delta_phi,
                phi_0: delta_phi / coherence_length,
                n_realizations,
                seed,
            }),
            PumpModel::PhaseScreenEnsemble {
                delta_phi,
                phi_0,
                n_realizations,
                seed,
            } => Some(ScreenParams {
                delta_phi,
                phi_0,
                n_realizations,
                seed,
            }),
        }
    }

    /// Checks that `grid` resolves the beam and its coherence structure.
    pub fn check_grid(&self, grid: &Grid1D) -> Result<()> {
        let dx = grid.dx();
        if self.w / dx < MIN_POINTS_PER_LENGTH {
            return Err(Error::UnderResolved {
                what: "pump waist",
                detail: format!("w = {:e} m with dx = {:e} m", self.w, dx),
            });
        }
        let l_c = self.coherence_length();
        if l_c.is_finite() && l_c / dx < MIN_POINTS_PER_LENGTH {
            return Err(Error::UnderResolved {
                what: "coherence length",
                detail: format!(
                    "l_c = {l_c:e} m needs dx <= {:e} m, grid has dx = {dx:e} m (increase n or decrease dx)",
                    l_c / MIN_POINTS_PER_LENGTH
                ),
            });
        }
        if let Some(s) = self.screens() {
            check_screen_resolution(grid, s.delta_phi)?;
        }
        Ok(())
    }
}

fn check_screen(delta_phi: f64, phi_0: f64, n_realizations: usize) -> Result<()> {
    if !(delta_phi.is_finite() && delta_phi > 0.0) {
        return Err(Error::param(format!(
            "screen width must be positive, got {delta_phi}"
        )));
    }
    if !(phi_0.is_finite() && phi_0 >= 0.0) {
        return Err(Error::param(format!(
            "modulation strength must be >= 0, got {phi_0}"
        )));
    }
    if n_realizations == 0 {
        return Err(Error::param("ensemble needs at least one realization"));
    }
    Ok(())
}

fn check_screen_resolution(grid: &Grid1D, delta_phi: f64) -> Result<()> {
    if delta_phi / grid.dx() < MIN_POINTS_PER_LENGTH {
        return Err(Error::UnderResolved {
            what: "phase screen",
            detail: format!("delta_phi = {delta_phi:e} m with dx = {:e} m", grid.dx()),
        });
    }
    Ok(())
}

/// `l_c = δ_φ / φ_0`; infinite for zero modulation.
pub fn coherence_length_of(delta_phi: f64, phi_0: f64) -> Result<f64> {
    if delta_phi.is_nan() || delta_phi <= 0.0 || phi_0.is_nan() || phi_0 < 0.0 {
        return Err(Error::param(format!(
            "need delta_phi > 0 and phi_0 >= 0, got ({delta_phi}, {phi_0})"
        )));
    }
    if phi_0 == 0.0 {
        Ok(f64::INFINITY)
    } else {
        Ok(delta_phi / phi_0)
    }
}

/// Angular variance of a GSM pump in units of `ħ²·m⁻²`:
/// `1/(8w²) + w²k_p²/(2R²) + 1/(2l_c²)`. Infinite `R` or `l_c` drop their
/// terms.
pub fn gsm_delta_p_plus_sq(w: f64, radius: f64, l_c: f64, k_p: f64) -> Result<f64> {
    if !(w.is_finite() && w > 0.0)
        || !positive_or_inf(radius)
        || !positive_or_inf(l_c)
        || !(k_p.is_finite() && k_p > 0.0)
    {
        return Err(Error::param(format!(
            "invalid GSM parameters w={w}, R={radius}, l_c={l_c}, k_p={k_p}"
        )));
    }
    let waist = 1.0 / (8.0 * w * w);
    let curvature = if radius.is_infinite() {
        0.0
    } else {
        w * w * k_p * k_p / (2.0 * radius * radius)
    };
    let coherence = if l_c.is_infinite() {
        0.0
    } else {
        1.0 / (2.0 * l_c * l_c)
    };
    Ok(waist + curvature + coherence)
}

/// Hermitian two-point correlation `W(x₁,x₂)`, row index `x₁`.
#[derive(Debug, Clone)]
pub struct CrossSpectralDensity {
    pub grid: Grid1D,
    pub values: Vec<Complex64>,
}

impl CrossSpectralDensity {
    pub fn get(&self, j1: usize, j2: usize) -> Complex64 {
        self.values[j1 * self.grid.n() + j2]
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.grid.n()).map(|j| self.get(j, j).re).collect()
    }

    /// `max |W(x₁,x₂) - W*(x₂,x₁)|` relative to `max |W|`.
    pub fn hermitian_defect(&self) -> f64 {
        let n = self.grid.n();
        let peak = self.values.iter().map(|v| v.norm()).fold(0.0, f64::max);
        let mut worst = 0.0f64;
        for a in 0..n {
            for b in a..n {
                worst = worst.max((self.get(a, b) - self.get(b, a).conj()).norm());
            }
        }
        worst / peak
    }

    /// Largest normalised degree of coherence over pairs whose intensities
    /// both exceed `floor` times the peak intensity.
    pub fn max_degree_of_coherence(&self, floor: f64) -> f64 {
        let diag = self.diagonal();
        let peak = diag.iter().cloned().fold(0.0, f64::max);
        let live: Vec<usize> = (0..diag.len())
            .filter(|&j| diag[j] > floor * peak)
            .collect();
        let mut worst = 0.0f64;
        for &a in &live {
            for &b in &live {
                worst = worst.max(self.get(a, b).norm() / (diag[a] * diag[b]).sqrt());
            }
        }
        worst
    }

    /// Angular intensity `S(q) = ∬ W(x₁,x₂) e^{-iq(x₁-x₂)} dx₁dx₂` on the
    /// conjugate grid; equals `|Ẽ(q)|²` for a coherent field.
    pub fn angular_intensity(&self) -> Vec<f64> {
        let n = self.grid.n();
        let dx = self.grid.dx();
        // Inner transform over x₂ with e^{+iqx₂}: the inverse kernel.
        let mut rows = self.values.clone();
        FourierPlan::new(n).inverse_rows(&mut rows, dx);
        // Outer transform with e^{-iqx₁}, diagonal only.
        let roots: Vec<Complex64> = (0..n)
            .map(|m| Complex64::from_polar(1.0, -2.0 * PI * m as f64 / n as f64))
            .collect();
        let half = (n / 2) as i64;
        (0..n)
            .map(|k| {
                let kk = k as i64 - half;
                let mut acc = Complex64::new(0.0, 0.0);
                for j in 0..n {
                    let m = (kk * (j as i64 - half)).rem_euclid(n as i64) as usize;
                    acc += roots[m] * rows[j * n + k];
                }
                (acc * dx).re
            })
            .collect()
    }
}

/// Analytic GSM cross-spectral density on `grid`.
pub fn analytic_csd(grid: &Grid1D, spec: &PumpSpec) -> Result<CrossSpectralDensity> {
    spec.validate()?;
    let l_c = match spec.model {
        PumpModel::CoherentGaussian => f64::INFINITY,
        PumpModel::GaussianSchell {
            coherence_length, ..
        } => coherence_length,
        PumpModel::PhaseScreenEnsemble { .. } => {
            return Err(Error::param(
                "analytic CSD needs a Gaussian Schell-model pump",
            ))
        }
    };
    let dx = grid.dx();
    if l_c.is_finite() && l_c / dx < MIN_POINTS_PER_LENGTH {
        return Err(Error::UnderResolved {
            what: "coherence length",
            detail: format!(
                "l_c = {l_c:e} m needs dx <= {:e} m, grid has dx = {dx:e} m (use a finer grid)",
                l_c / MIN_POINTS_PER_LENGTH
            ),
        });
    }
    let n = grid.n();
    let xs = grid.xs();
    let w2 = spec.w * spec.w;
    let inv_lc2 = if l_c.is_infinite() {
        0.0
    } else {
        1.0 / (l_c * l_c)
    };
    let chirp = if spec.radius.is_infinite() {
        0.0
    } else {
        spec.k_p / (2.0 * spec.radius)
    };
    let mut values = Vec::with_capacity(n * n);
    for &x1 in &xs {
        for &x2 in &xs {
            let d = x1 - x2;
            let amp = (-(x1 * x1 + x2 * x2) / (4.0 * w2) - 0.5 * d * d * inv_lc2).exp();
            values.push(Complex64::from_polar(amp, -chirp * (x1 * x1 - x2 * x2)));
        }
    }
    Ok(CrossSpectralDensity {
        grid: *grid,
        values,
    })
}

/// Gaussian-correlated phase screens synthesised by spectral filtering of
/// complex white noise.
///
/// The filter is the square root of the DFT of the sampled target
/// correlation `e^{-Δ²/(2δ_φ²)}` (minimum-image lags), so the periodic
/// process has exactly that covariance at every sampled lag.
#[derive(Debug, Clone)]
pub struct PhaseScreenGenerator {
    grid: Grid1D,
    phi_0: f64,
    seed: u64,
    filter: Vec<f64>,
    plan: FourierPlan,
}

impl PhaseScreenGenerator {
    pub fn new(grid: &Grid1D, delta_phi: f64, phi_0: f64, seed: u64) -> Result<Self> {
        check_screen(delta_phi, phi_0, 1)?;
        check_screen_resolution(grid, delta_phi)?;
        let n = grid.n();
        let plan = FourierPlan::new(n);
        let mut kernel: Vec<Complex64> = (0..n)
            .map(|j| {
                let lag = j.min(n - j) as f64 * grid.dx();
                Complex64::new((-lag * lag / (2.0 * delta_phi * delta_phi)).exp(), 0.0)
            })
            .collect();
        plan.forward_raw(&mut kernel);
        let scale = 1.0 / (n as f64).sqrt();
        let filter = kernel
            .iter()
            .map(|c| c.re.max(0.0).sqrt() * scale)
            .collect();
        Ok(Self {
            grid: *grid,
            phi_0,
            seed,
            filter,
            plan,
        })
    }

    /// Screen number `index`, in radians. Deterministic in `(seed, index)`.
    pub fn screen(&self, index: u64) -> Vec<f64> {
        let n = self.grid.n();
        if self.phi_0 == 0.0 {
            return vec![0.0; n];
        }
        let mut rng = stream(self.seed, DOMAIN_SCREEN, index);
        let mut spectrum: Vec<Complex64> = self
            .filter
            .iter()
            .map(|&h| {
                let re: f64 = StandardNormal.sample(&mut rng);
                let im: f64 = StandardNormal.sample(&mut rng);
                Complex64::new(re, im) * h
            })
            .collect();
        self.plan.inverse_raw(&mut spectrum);
        spectrum.iter().map(|c| self.phi_0 * c.re).collect()
    }
}

/// Zero-mean Gaussian phase screen `φ_0·g(x)` with
/// `⟨g(x₁)g(x₂)⟩ = e^{-(x₁-x₂)²/(2δ_φ²)}`.
pub fn make_phase_screen(
    grid: &Grid1D,
    delta_phi: f64,
    phi_0: f64,
    seed: u64,
    index: u64,
) -> Result<Vec<f64>> {
    Ok(PhaseScreenGenerator::new(grid, delta_phi, phi_0, seed)?.screen(index))
}

/// The unmodulated pump field `e^{-x²/(4w²)} e^{-ik_p x²/(2R)}`.
pub fn coherent_field(grid: &Grid1D, spec: &PumpSpec) -> Result<Field1D> {
    spec.validate()?;
    let w2 = spec.w * spec.w;
    let chirp = if spec.radius.is_infinite() {
        0.0
    } else {
        spec.k_p / (2.0 * spec.radius)
    };
    Field1D::from_fn(*grid, Domain::Position, |x| {
        Complex64::from_polar((-x * x / (4.0 * w2)).exp(), -chirp * x * x)
    })
}

/// Builds ensemble members for a pump spec without recomputing the screen
/// filter for every realisation.
#[derive(Debug, Clone)]
pub struct EnsembleSampler {
    base: Field1D,
    screens: Option<PhaseScreenGenerator>,
    n_realizations: usize,
}

impl EnsembleSampler {
    pub fn new(grid: &Grid1D, spec: &PumpSpec) -> Result<Self> {
        let base = coherent_field(grid, spec)?;
        let (screens, n_realizations) = match spec.screens() {
            None => (None, 1),
            Some(s) => (
                Some(PhaseScreenGenerator::new(
                    grid,
                    s.delta_phi,
                    s.phi_0,
                    s.seed,
                )?),
                s.n_realizations,
            ),
        };
        Ok(Self {
            base,
            screens,
            n_realizations,
        })
    }

    /// Number of distinct realisations (1 for a coherent pump).
    pub fn len(&self) -> usize {
        self.n_realizations
    }

    pub fn is_empty(&self) -> bool {
        self.n_realizations == 0
    }

    pub fn field(&self, index: u64) -> Field1D {
        let mut field = self.base.clone();
        if let Some(gen) = &self.screens {
            for (v, phi) in field.values.iter_mut().zip(gen.screen(index)) {
                *v *= Complex64::from_polar(1.0, phi);
            }
        }
        field
    }
}

/// Realisation `index` of a phase-screen ensemble pump:
/// `E_n(x) = e^{-x²/(4w²)} e^{-ik_p x²/(2R)} e^{iφ_n(x)}`.
pub fn ensemble_field(grid: &Grid1D, spec: &PumpSpec, index: u64) -> Result<Field1D> {
    if !matches!(spec.model, PumpModel::PhaseScreenEnsemble { .. }) {
        return Err(Error::param(
            "ensemble_field needs a phase-screen ensemble pump",
        ));
    }
    spec.validate()?;
    Ok(EnsembleSampler::new(grid, spec)?.field(index))
}

/// Empirical `W(x₁,x₂) = (1/N) Σ_n E_n(x₁) E_n*(x₂)`.
pub fn csd_from_ensemble(fields: &[Field1D]) -> Result<CrossSpectralDensity> {
    if fields.len() < 2 {
        return Err(Error::NotEnoughData("need at least two fields".into()));
    }
    let grid = fields[0].grid;
    if fields
        .iter()
        .any(|f| f.grid != grid || f.domain != Domain::Position)
    {
        return Err(Error::GridMismatch);
    }
    let n = grid.n();
    let mut values = vec![Complex64::new(0.0, 0.0); n * n];
    for f in fields {
        for (a, ea) in f.values.iter().enumerate() {
            let row = &mut values[a * n..(a + 1) * n];
            for (w, eb) in row.iter_mut().zip(&f.values) {
                *w += ea * eb.conj();
            }
        }
    }
    let inv = 1.0 / fields.len() as f64;
    // Symmetrise so the estimator is Hermitian to the last bit.
    for a in 0..n {
        values[a * n + a] = Complex64::new(values[a * n + a].re * inv, 0.0);
        for b in (a + 1)..n {
            let v = values[a * n + b] * inv;
            values[a * n + b] = v;
            values[b * n + a] = v.conj();
        }
    }
    Ok(CrossSpectralDensity { grid, values })
}

/// Degree of coherence `|μ(Δ)|` versus lag, averaged over pairs centred on
/// the beam axis and restricted to where the intensity exceeds `floor`
/// times its peak.
pub fn coherence_vs_lag(csd: &CrossSpectralDensity, floor: f64) -> (Vec<f64>, Vec<f64>) {
    let n = csd.grid.n();
    let diag = csd.diagonal();
    let peak = diag.iter().cloned().fold(0.0, f64::max);
    let c = n / 2;
    let mut lags = Vec::new();
    let mut mu = Vec::new();
    for s in 0..c {
        let (a, b) = (c + s / 2, c - (s - s / 2));
        if b >= n || diag[a] <= floor * peak || diag[b] <= floor * peak {
            break;
        }
        let v = csd.get(a, b).norm() / (diag[a] * diag[b]).sqrt();
        lags.push(s as f64 * csd.grid.dx());
        mu.push(v);
    }
    (lags, mu)
}
