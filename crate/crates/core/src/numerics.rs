//! Transverse grids, continuous-measure Fourier transforms and moments.
//!
//! Conventions: a grid of `n` points (a power of two, `n >= 8`) with spacing
//! `dx` has origin-centred coordinates `x_j = (j - n/2)·dx` and a conjugate
//! axis `q_k = (k - n/2)·dq` with `dq = 2π/(n·dx)`. The forward transform is
//!
//! ```text
//! F(q_k) = Σ_j f(x_j) e^{-i q_k x_j} dx
//! ```
//!
//! and the inverse uses `e^{+i q x}` with measure `dq/2π`, so analytic
//! Gaussian pairs come out exact and Parseval reads
//! `Σ|f|² dx = Σ|F|² dq/2π`.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::{Error, Result};

#[derive(Clone, Copy, PartialEq)]
pub struct Grid1D {
    n: usize,
    dx: f64,
}

impl fmt::Debug for Grid1D {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Grid1D(n={}, dx={:e} m)", self.n, self.dx)
    }
}

impl Grid1D {
    pub fn new(n: usize, dx: f64) -> Result<Self> {
        if n < 8 || !n.is_power_of_two() {
            return Err(Error::InvalidGrid(format!(
                "point count must be a power of two >= 8, got {n}"
            )));
        }
        if !(dx.is_finite() && dx > 0.0) {
            return Err(Error::InvalidGrid(format!(
                "spacing must be positive, got {dx}"
            )));
        }
        Ok(Self { n, dx })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn dx(&self) -> f64 {
        self.dx
    }

    pub fn dq(&self) -> f64 {
        2.0 * PI / (self.n as f64 * self.dx)
    }

    /// Full position extent `n·dx`.
    pub fn extent(&self) -> f64 {
        self.n as f64 * self.dx
    }

    pub fn x(&self, j: usize) -> f64 {
        (j as f64 - (self.n / 2) as f64) * self.dx
    }

    pub fn q(&self, k: usize) -> f64 {
        (k as f64 - (self.n / 2) as f64) * self.dq()
    }

    pub fn xs(&self) -> Vec<f64> {
        (0..self.n).map(|j| self.x(j)).collect()
    }

    pub fn qs(&self) -> Vec<f64> {
        (0..self.n).map(|k| self.q(k)).collect()
    }

    /// Spacing of the axis belonging to `domain`.
    pub fn step(&self, domain: Domain) -> f64 {
        match domain {
            Domain::Position => self.dx,
            Domain::Frequency => self.dq(),
        }
    }

    pub fn coord(&self, domain: Domain, j: usize) -> f64 {
        match domain {
            Domain::Position => self.x(j),
            Domain::Frequency => self.q(j),
        }
    }

    pub fn axis(&self, domain: Domain) -> Vec<f64> {
        match domain {
            Domain::Position => self.xs(),
            Domain::Frequency => self.qs(),
        }
    }

    /// Measure attached to one sample: `dx` in position space, `dq/2π` in
    /// frequency space.
    pub fn measure(&self, domain: Domain) -> f64 {
        match domain {
            Domain::Position => self.dx,
            Domain::Frequency => self.dq() / (2.0 * PI),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Domain {
    Position,
    Frequency,
}

impl Domain {
    pub fn conjugate(self) -> Self {
        match self {
            Domain::Position => Domain::Frequency,
            Domain::Frequency => Domain::Position,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Field1D {
    pub grid: Grid1D,
    pub domain: Domain,
    pub values: Vec<Complex64>,
}

impl Field1D {
    pub fn new(grid: Grid1D, domain: Domain, values: Vec<Complex64>) -> Result<Self> {
        if values.len() != grid.n() {
            return Err(Error::GridMismatch);
        }
        if values
            .iter()
            .any(|v| !(v.re.is_finite() && v.im.is_finite()))
        {
            return Err(Error::NonFinite("field"));
        }
        Ok(Self {
            grid,
            domain,
            values,
        })
    }

    pub fn from_fn(grid: Grid1D, domain: Domain, f: impl Fn(f64) -> Complex64) -> Result<Self> {
        let values = grid.axis(domain).into_iter().map(f).collect();
        Self::new(grid, domain, values)
    }

    pub fn intensity(&self) -> Vec<f64> {
        self.values.iter().map(|v| v.norm_sqr()).collect()
    }

    /// `Σ|f|²` times the sample measure of the field's domain.
    pub fn power(&self) -> f64 {
        self.values.iter().map(|v| v.norm_sqr()).sum::<f64>() * self.grid.measure(self.domain)
    }
}

/// Square two-dimensional field, row-major with the first index the signal
/// coordinate and the second the idler coordinate.
#[derive(Debug, Clone)]
pub struct Field2D {
    pub grid: Grid1D,
    pub domain: Domain,
    pub values: Vec<Complex64>,
}

impl Field2D {
    pub fn new(grid: Grid1D, domain: Domain, values: Vec<Complex64>) -> Result<Self> {
        if values.len() != grid.n() * grid.n() {
            return Err(Error::GridMismatch);
        }
        if values
            .iter()
            .any(|v| !(v.re.is_finite() && v.im.is_finite()))
        {
            return Err(Error::NonFinite("field"));
        }
        Ok(Self {
            grid,
            domain,
            values,
        })
    }

    pub fn power(&self) -> f64 {
        let m = self.grid.measure(self.domain);
        self.values.iter().map(|v| v.norm_sqr()).sum::<f64>() * m * m
    }
}

/// Cached FFT plans for one transform length.
///
/// Centring is done with the checkerboard identity: for `n/2` even,
/// `e^{-i 2π (k-n/2)(j-n/2)/n} = (-1)^{j+k} e^{-i 2π jk/n}`, so a centred
/// transform is a plain FFT bracketed by sign flips.
#[derive(Clone)]
pub struct FourierPlan {
    n: usize,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

impl fmt::Debug for FourierPlan {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "FourierPlan(n={})", self.n)
    }
}

fn checkerboard(data: &mut [Complex64]) {
    for v in data.iter_mut().skip(1).step_by(2) {
        *v = -*v;
    }
}

impl FourierPlan {
    pub fn new(n: usize) -> Self {
        let mut planner = FftPlanner::new();
        Self {
            n,
            forward: planner.plan_fft_forward(n),
            inverse: planner.plan_fft_inverse(n),
        }
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    /// Centred forward transform of one or more consecutive rows of length
    /// `n`, each multiplied by `scale`.
    pub fn forward_rows(&self, data: &mut [Complex64], scale: f64) {
        self.centered(data, scale, true);
    }

    pub fn inverse_rows(&self, data: &mut [Complex64], scale: f64) {
        self.centered(data, scale, false);
    }

    fn centered(&self, data: &mut [Complex64], scale: f64, forward: bool) {
        debug_assert_eq!(data.len() % self.n, 0);
        for row in data.chunks_exact_mut(self.n) {
            checkerboard(row);
        }
        if forward {
            self.forward.process(data);
        } else {
            self.inverse.process(data);
        }
        for row in data.chunks_exact_mut(self.n) {
            checkerboard(row);
            for v in row.iter_mut() {
                *v *= scale;
            }
        }
    }

    /// Uncentred, unscaled inverse FFT (natural index order).
    pub(crate) fn inverse_raw(&self, data: &mut [Complex64]) {
        self.inverse.process(data);
    }

    pub(crate) fn forward_raw(&self, data: &mut [Complex64]) {
        self.forward.process(data);
    }

    /// Centred 2D transform of an `n×n` row-major array.
    pub fn forward_2d(&self, data: &mut [Complex64], scale: f64) {
        self.transform_2d(data, scale, true);
    }

    pub fn inverse_2d(&self, data: &mut [Complex64], scale: f64) {
        self.transform_2d(data, scale, false);
    }

    fn transform_2d(&self, data: &mut [Complex64], scale: f64, forward: bool) {
        let n = self.n;
        assert_eq!(data.len(), n * n, "2D transform needs an n×n array");
        self.centered(data, 1.0, forward);
        transpose_square(data, n);
        self.centered(data, scale, forward);
        transpose_square(data, n);
    }
}

fn transpose_square(data: &mut [Complex64], n: usize) {
    const BLOCK: usize = 32;
    for bi in (0..n).step_by(BLOCK) {
        for bj in (bi..n).step_by(BLOCK) {
            for i in bi..(bi + BLOCK).min(n) {
                let start = if bi == bj { i + 1 } else { bj };
                for j in start..(bj + BLOCK).min(n) {
                    data.swap(i * n + j, j * n + i);
                }
            }
        }
    }
}

fn check_finite(values: &[Complex64]) -> Result<()> {
    if values.iter().all(|v| v.re.is_finite() && v.im.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite("transform input"))
    }
}

/// `F(q) = Σ_j f(x_j) e^{-i q x_j} dx` on the conjugate grid.
pub fn fft_physical(f: &Field1D) -> Result<Field1D> {
    if f.domain != Domain::Position {
        return Err(Error::param(
            "forward transform expects a position-domain field",
        ));
    }
    check_finite(&f.values)?;
    let mut values = f.values.clone();
    FourierPlan::new(f.grid.n()).forward_rows(&mut values, f.grid.dx());
    Ok(Field1D {
        grid: f.grid,
        domain: Domain::Frequency,
        values,
    })
}

/// `f(x) = Σ_k F(q_k) e^{+i q_k x} dq/2π`.
pub fn ifft_physical(f: &Field1D) -> Result<Field1D> {
    if f.domain != Domain::Frequency {
        return Err(Error::param(
            "inverse transform expects a frequency-domain field",
        ));
    }
    check_finite(&f.values)?;
    let mut values = f.values.clone();
    FourierPlan::new(f.grid.n()).inverse_rows(&mut values, f.grid.measure(Domain::Frequency));
    Ok(Field1D {
        grid: f.grid,
        domain: Domain::Position,
        values,
    })
}

pub fn fft2_physical(f: &Field2D) -> Result<Field2D> {
    if f.domain != Domain::Position {
        return Err(Error::param(
            "forward transform expects a position-domain field",
        ));
    }
    check_finite(&f.values)?;
    let mut values = f.values.clone();
    let dx = f.grid.dx();
    FourierPlan::new(f.grid.n()).forward_2d(&mut values, dx * dx);
    Ok(Field2D {
        grid: f.grid,
        domain: Domain::Frequency,
        values,
    })
}

pub fn ifft2_physical(f: &Field2D) -> Result<Field2D> {
    if f.domain != Domain::Frequency {
        return Err(Error::param(
            "inverse transform expects a frequency-domain field",
        ));
    }
    check_finite(&f.values)?;
    let mut values = f.values.clone();
    let m = f.grid.measure(Domain::Frequency);
    FourierPlan::new(f.grid.n()).inverse_2d(&mut values, m * m);
    Ok(Field2D {
        grid: f.grid,
        domain: Domain::Position,
        values,
    })
}

/// First moment of nonnegative weights over `coords`.
pub fn mean_of(weights: &[f64], coords: &[f64]) -> Result<f64> {
    let total = total_weight(weights, coords)?;
    Ok(weights.iter().zip(coords).map(|(w, x)| w * x).sum::<f64>() / total)
}

/// Second central moment `Σ w (x-μ)² / Σ w`.
pub fn variance_of(weights: &[f64], coords: &[f64]) -> Result<f64> {
    let mu = mean_of(weights, coords)?;
    let total: f64 = weights.iter().sum();
    Ok(weights
        .iter()
        .zip(coords)
        .map(|(w, x)| w * (x - mu) * (x - mu))
        .sum::<f64>()
        / total)
}

fn total_weight(weights: &[f64], coords: &[f64]) -> Result<f64> {
    if weights.len() != coords.len() {
        return Err(Error::GridMismatch);
    }
    if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
        return Err(Error::param("weights must be finite and nonnegative"));
    }
    let total: f64 = weights.iter().sum();
    if total <= 0.0 {
        return Err(Error::EmptyDistribution);
    }
    Ok(total)
}
