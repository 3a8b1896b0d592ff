//! The virtual slit-scan experiment.
//!
//! Slit offsets `d` in the detection plane are mapped back to crystal-plane
//! coordinates: `x = d/M` behind a 4f relay of magnification `M = f2/f1`,
//! and `q = d·k/f3` behind a Fourier lens, with `k = 2π/λ` the free-space
//! wavenumber at the detector. A slit of width `a` then selects a window of
//! width `a/M` or `a·k/f3` around the mapped coordinate. Any image inversion
//! of the relay is absorbed into the sign of `M`, which is taken positive.

use std::f64::consts::{PI, SQRT_2};

use rand_distr::{Distribution, Poisson};
use rayon::prelude::*;

use crate::numerics::Domain;
use crate::rng::{stream, DOMAIN_SCAN};
use crate::spdc::JointDistribution;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum OpticalSystem {
    /// Near-field relay imaging the crystal exit face.
    Imaging4f { f1: f64, f2: f64 },
    /// Far-field lens; wavelengths are the detected vacuum wavelengths.
    FourierLens {
        f3: f64,
        lambda_s: f64,
        lambda_i: f64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Arm {
    Signal,
    Idler,
}

impl OpticalSystem {
    pub fn validate(&self) -> Result<()> {
        let values: &[f64] = match self {
            OpticalSystem::Imaging4f { f1, f2 } => &[*f1, *f2],
            OpticalSystem::FourierLens {
                f3,
                lambda_s,
                lambda_i,
            } => &[*f3, *lambda_s, *lambda_i],
        };
        if values.iter().all(|v| v.is_finite() && *v > 0.0) {
            Ok(())
        } else {
            Err(Error::param(format!(
                "optical system parameters must be positive: {self:?}"
            )))
        }
    }

    /// Domain of the crystal-plane coordinate the slits sample.
    pub fn domain(&self) -> Domain {
        match self {
            OpticalSystem::Imaging4f { .. } => Domain::Position,
            OpticalSystem::FourierLens { .. } => Domain::Frequency,
        }
    }

    /// Crystal-plane coordinate per unit slit offset for one arm.
    pub fn scale(&self, arm: Arm) -> f64 {
        match *self {
            OpticalSystem::Imaging4f { f1, f2 } => f1 / f2,
            OpticalSystem::FourierLens {
                f3,
                lambda_s,
                lambda_i,
            } => {
                let lambda = if arm == Arm::Signal {
                    lambda_s
                } else {
                    lambda_i
                };
                2.0 * PI / lambda / f3
            }
        }
    }

    pub fn map(&self, d: f64, arm: Arm) -> f64 {
        d * self.scale(arm)
    }

    pub fn unmap(&self, coord: f64, arm: Arm) -> f64 {
        coord / self.scale(arm)
    }
}

/// `q = d·(2π/λ)/f3` [rad/m].
pub fn map_slit_to_momentum(d: f64, lambda_detected: f64, f3: f64) -> f64 {
    d * 2.0 * PI / lambda_detected / f3
}

/// `x = d·f1/f2`; only meaningful for an imaging system.
pub fn map_slit_to_position(d: f64, system: &OpticalSystem) -> Result<f64> {
    system.validate()?;
    match system {
        OpticalSystem::Imaging4f { .. } => Ok(system.map(d, Arm::Signal)),
        OpticalSystem::FourierLens { .. } => {
            Err(Error::param("position mapping needs an imaging system"))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScanMode {
    /// `d_i = -d_s`; samples `x₋` in the near field.
    AntiDiagonal,
    /// `d_i = d_s`; samples `p₊` in the far field.
    Diagonal,
    Raster,
}

impl ScanMode {
    pub fn as_str(self) -> &'static str {
        match self {
            ScanMode::AntiDiagonal => "anti_diagonal",
            ScanMode::Diagonal => "diagonal",
            ScanMode::Raster => "raster",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "anti_diagonal" => Some(ScanMode::AntiDiagonal),
            "diagonal" => Some(ScanMode::Diagonal),
            "raster" => Some(ScanMode::Raster),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SlitScanConfig {
    /// Slit width in the detection plane [m].
    pub slit_width: f64,
    pub positions: Vec<(f64, f64)>,
    /// Acquisition time per setting [s].
    pub dwell_time: f64,
    /// Expected coincidences per second with both slits on the peak of the
    /// distribution.
    pub rate_constant: f64,
    /// Expected singles per second with a slit on the peak of its marginal.
    pub singles_rate: f64,
    pub mode: ScanMode,
    pub seed: u64,
}

impl SlitScanConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.slit_width > 0.0 && self.slit_width.is_finite()) {
            return Err(Error::param("slit width must be positive"));
        }
        if !(self.dwell_time > 0.0 && self.dwell_time.is_finite()) {
            return Err(Error::param("dwell time must be positive"));
        }
        if !(self.rate_constant >= 0.0 && self.singles_rate >= 0.0)
            || !self.rate_constant.is_finite()
            || !self.singles_rate.is_finite()
        {
            return Err(Error::param("rate constants must be finite and >= 0"));
        }
        if self.positions.is_empty() {
            return Err(Error::param("scan has no positions"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CoincidenceRecord {
    pub mode: ScanMode,
    pub d_s: f64,
    pub d_i: f64,
    /// Crystal-plane coordinates (`x` [m] or `q` [rad/m]).
    pub coord_s: f64,
    pub coord_i: f64,
    pub coincidences: u64,
    pub singles_s: u64,
    pub singles_i: u64,
    pub dwell_time: f64,
    pub seed: u64,
}

impl CoincidenceRecord {
    /// Rotated coordinate the scan moves along: `(c_s - c_i)/√2` for an
    /// anti-diagonal scan, `(c_s + c_i)/√2` otherwise.
    pub fn scan_coordinate(&self) -> f64 {
        match self.mode {
            ScanMode::AntiDiagonal => (self.coord_s - self.coord_i) / SQRT_2,
            ScanMode::Diagonal | ScanMode::Raster => (self.coord_s + self.coord_i) / SQRT_2,
        }
    }
}

/// Antiderivative from 0 of the cubic convolution kernel (`a = -1/2`).
/// The kernel interpolates the samples and reproduces quadratics, so
/// integrating it over a window adds no spurious variance to what the
/// window sees; a piecewise-constant reading of the samples would add the
/// cell variance `h²/12`.
fn cubic_kernel_integral(s: f64) -> f64 {
    let t = s.abs().min(2.0);
    let v = if t <= 1.0 {
        0.375 * t.powi(4) - 2.5 / 3.0 * t.powi(3) + t
    } else {
        let g = |t: f64| -0.125 * t.powi(4) + 2.5 / 3.0 * t.powi(3) - 2.0 * t * t + 2.0 * t;
        0.375 - 2.5 / 3.0 + 1.0 + g(t) - g(1.0)
    };
    v.copysign(s)
}

/// Quadrature weights (in units of the grid step) of the samples for the
/// integral over `[lo, hi]`, as `(first index, weights)`.
fn cell_weights(axis: &[f64], h: f64, lo: f64, hi: f64) -> Result<(usize, Vec<f64>)> {
    let n = axis.len();
    let (start, end) = (axis[0] - h / 2.0, axis[n - 1] + h / 2.0);
    if lo < start - 1e-9 * h || hi > end + 1e-9 * h {
        return Err(Error::GridExtent(format!(
            "slit window [{lo:.4e}, {hi:.4e}] leaves the grid [{start:.4e}, {end:.4e}]"
        )));
    }
    let first = ((lo - axis[0]) / h).floor() as i64 - 2;
    let last = ((hi - axis[0]) / h).ceil() as i64 + 2;
    let first = first.max(0) as usize;
    let last = (last.max(0) as usize).min(n - 1);
    let weights = (first..=last)
        .map(|j| {
            cubic_kernel_integral((hi - axis[j]) / h) - cubic_kernel_integral((lo - axis[j]) / h)
        })
        .collect();
    Ok((first, weights))
}

fn window(
    dist: &JointDistribution,
    system: &OpticalSystem,
    d: f64,
    slit_width: f64,
    arm: Arm,
) -> Result<(usize, Vec<f64>)> {
    let c = system.map(d, arm);
    let half = 0.5 * system.map(slit_width, arm);
    let axis = dist.axis();
    cell_weights(&axis, dist.step(), c - half, c + half)
}

fn check_pair(dist: &JointDistribution, system: &OpticalSystem, slit_width: f64) -> Result<()> {
    system.validate()?;
    if system.domain() != dist.domain {
        return Err(Error::param(format!(
            "optical system samples the {:?} domain but the distribution is in {:?}",
            system.domain(),
            dist.domain
        )));
    }
    if slit_width.is_nan() || slit_width <= 0.0 {
        return Err(Error::param("slit width must be positive"));
    }
    Ok(())
}

/// Probability that a pair lands in both slit windows, for the distribution
/// normalised to unit mass.
pub fn window_probability(
    dist: &JointDistribution,
    system: &OpticalSystem,
    d_s: f64,
    d_i: f64,
    slit_width: f64,
) -> Result<f64> {
    check_pair(dist, system, slit_width)?;
    let (s0, ws) = window(dist, system, d_s, slit_width, Arm::Signal)?;
    let (i0, wi) = window(dist, system, d_i, slit_width, Arm::Idler)?;
    let n = dist.n();
    let mut sum = 0.0;
    for (ds, a) in ws.iter().enumerate() {
        let row = &dist.values[(s0 + ds) * n..(s0 + ds + 1) * n];
        let inner: f64 = wi.iter().enumerate().map(|(di, b)| b * row[i0 + di]).sum();
        sum += a * inner;
    }
    let m = dist.grid.measure(dist.domain);
    // Interpolation ringing can leave a tiny negative value next to sharp
    // features; a probability cannot be negative.
    Ok((sum * m * m / dist.total_mass()).max(0.0))
}

/// `pair_rate × P(both windows)`: expected coincidences per second when
/// pairs reach the detection planes at `pair_rate`.
pub fn expected_rate(
    dist: &JointDistribution,
    system: &OpticalSystem,
    d_s: f64,
    d_i: f64,
    slit_width: f64,
    pair_rate: f64,
) -> Result<f64> {
    Ok(pair_rate * window_probability(dist, system, d_s, d_i, slit_width)?)
}

/// Marginal probabilities of one arm's slit windows, evaluated lazily.
struct SinglesModel {
    marginal: Vec<f64>,
    axis: Vec<f64>,
    h: f64,
    measure: f64,
    mass: f64,
}

impl SinglesModel {
    fn new(dist: &JointDistribution, arm: Arm) -> Self {
        let raw = match arm {
            Arm::Signal => dist.marginal_signal(),
            Arm::Idler => dist.marginal_idler(),
        };
        let h = dist.step();
        Self {
            marginal: raw.iter().map(|v| v / h).collect(),
            axis: dist.axis(),
            h,
            measure: dist.grid.measure(dist.domain),
            mass: dist.total_mass(),
        }
    }

    fn probability(
        &self,
        system: &OpticalSystem,
        d: f64,
        slit_width: f64,
        arm: Arm,
    ) -> Result<f64> {
        let c = system.map(d, arm);
        let half = 0.5 * system.map(slit_width, arm);
        let (first, w) = cell_weights(&self.axis, self.h, c - half, c + half)?;
        let sum: f64 = w
            .iter()
            .enumerate()
            .map(|(k, w)| w * self.marginal[first + k])
            .sum();
        Ok((sum * self.measure * self.measure / self.mass).max(0.0))
    }

    fn peak_probability(&self, system: &OpticalSystem, slit_width: f64, arm: Arm) -> Result<f64> {
        let k = self
            .marginal
            .iter()
            .enumerate()
            .fold((0, f64::MIN), |a, (k, &v)| if v > a.1 { (k, v) } else { a })
            .0;
        self.probability(system, system.unmap(self.axis[k], arm), slit_width, arm)
    }
}

/// Window probability with both slits centred on the distribution peak.
pub fn peak_window_probability(
    dist: &JointDistribution,
    system: &OpticalSystem,
    slit_width: f64,
) -> Result<f64> {
    let (s, i, _) = dist.peak();
    let axis = dist.axis();
    window_probability(
        dist,
        system,
        system.unmap(axis[s], Arm::Signal),
        system.unmap(axis[i], Arm::Idler),
        slit_width,
    )
}

fn poisson(lambda: f64, rng: &mut impl rand::Rng) -> u64 {
    if lambda > 0.0 && lambda.is_finite() {
        Poisson::new(lambda)
            .map(|p| p.sample(rng) as u64)
            .unwrap_or(0)
    } else {
        0
    }
}

/// Expected coincidences and singles per second at each scan setting.
pub fn expected_scan(
    dist: &JointDistribution,
    system: &OpticalSystem,
    config: &SlitScanConfig,
) -> Result<Vec<(f64, f64, f64)>> {
    config.validate()?;
    check_pair(dist, system, config.slit_width)?;
    let peak = peak_window_probability(dist, system, config.slit_width)?;
    let pair_rate = if peak > 0.0 {
        config.rate_constant / peak
    } else {
        0.0
    };
    let singles = [Arm::Signal, Arm::Idler].map(|arm| SinglesModel::new(dist, arm));
    let singles_rate = [Arm::Signal, Arm::Idler]
        .iter()
        .zip(&singles)
        .map(|(&arm, model)| {
            let p = model.peak_probability(system, config.slit_width, arm)?;
            Ok(if p > 0.0 {
                config.singles_rate / p
            } else {
                0.0
            })
        })
        .collect::<Result<Vec<f64>>>()?;
    config
        .positions
        .par_iter()
        .map(|&(d_s, d_i)| {
            let rate = expected_rate(dist, system, d_s, d_i, config.slit_width, pair_rate)?;
            let rs = singles_rate[0]
                * singles[0].probability(system, d_s, config.slit_width, Arm::Signal)?;
            let ri = singles_rate[1]
                * singles[1].probability(system, d_i, config.slit_width, Arm::Idler)?;
            Ok((rate, rs, ri))
        })
        .collect()
}

/// Poisson-sampled scan. Record `k` draws from its own stream derived from
/// `(seed, k)`, so results do not depend on evaluation order.
pub fn simulate_scan(
    dist: &JointDistribution,
    system: &OpticalSystem,
    config: &SlitScanConfig,
) -> Result<Vec<CoincidenceRecord>> {
    let expected = expected_scan(dist, system, config)?;
    let t = config.dwell_time;
    Ok(config
        .positions
        .par_iter()
        .zip(expected.par_iter())
        .enumerate()
        .map(|(k, (&(d_s, d_i), &(rate, rs, ri)))| {
            let mut rng = stream(config.seed, DOMAIN_SCAN, k as u64);
            CoincidenceRecord {
                mode: config.mode,
                d_s,
                d_i,
                coord_s: system.map(d_s, Arm::Signal),
                coord_i: system.map(d_i, Arm::Idler),
                coincidences: poisson(rate * t, &mut rng),
                singles_s: poisson(rs * t, &mut rng),
                singles_i: poisson(ri * t, &mut rng),
                dwell_time: t,
                seed: config.seed,
            }
        })
        .collect())
}

fn offsets(range: (f64, f64), step: f64) -> Result<Vec<f64>> {
    let (lo, hi) = range;
    if !(step > 0.0 && step.is_finite()) {
        return Err(Error::param(format!(
            "scan step must be positive, got {step}"
        )));
    }
    if !(lo.is_finite() && hi.is_finite()) || hi < lo {
        return Err(Error::param(format!("invalid scan range [{lo}, {hi}]")));
    }
    let count = ((hi - lo) / step + 1e-9).floor() as usize + 1;
    Ok((0..count).map(|k| lo + k as f64 * step).collect())
}

/// Slit settings for a 1D scan or an unmasked raster.
pub fn scan_schedule(mode: ScanMode, range: (f64, f64), step: f64) -> Result<Vec<(f64, f64)>> {
    raster_or_line(mode, range, step, |_, _| true)
}

/// Raster over `range × range`, keeping only settings where `keep` holds.
pub fn raster_schedule(
    range: (f64, f64),
    step: f64,
    keep: impl Fn(f64, f64) -> bool,
) -> Result<Vec<(f64, f64)>> {
    raster_or_line(ScanMode::Raster, range, step, keep)
}

fn raster_or_line(
    mode: ScanMode,
    range: (f64, f64),
    step: f64,
    keep: impl Fn(f64, f64) -> bool,
) -> Result<Vec<(f64, f64)>> {
    let d = offsets(range, step)?;
    let out: Vec<(f64, f64)> = match mode {
        ScanMode::AntiDiagonal => d.iter().map(|&v| (v, -v)).collect(),
        ScanMode::Diagonal => d.iter().map(|&v| (v, v)).collect(),
        ScanMode::Raster => d
            .iter()
            .flat_map(|&s| d.iter().map(move |&i| (s, i)))
            .filter(|&(s, i)| keep(s, i))
            .collect(),
    };
    if out.is_empty() {
        return Err(Error::param("scan schedule is empty"));
    }
    Ok(out)
}
