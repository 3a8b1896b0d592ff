//! Simulation of photon-pair generation in spontaneous parametric
//! down-conversion (SPDC) driven by pump beams of tunable transverse
//! coherence.
//!
//! The crate is organised bottom-up:
//!
//! * [`numerics`]: uniform transverse grids, physically scaled Fourier
//!   transforms and moment utilities.
//! * [`pump`]: coherent, Gaussian Schell-model and phase-screen pump models
//!   with their cross-spectral densities.
//! * [`spdc`]: phase matching and joint two-photon distributions in momentum
//!   and position space.
//! * [`lab`]: the virtual slit-scan experiment (optics mapping, finite slits,
//!   Poisson counting).
//! * [`analysis`]: Gaussian fits, the separability criterion, error bars and
//!   the coherence sweep.
//! * [`experiment`] and [`config`]: end-to-end pipeline and its run
//!   configuration.
//!
//! Momenta are carried internally as transverse wavenumbers `q = p/ħ`
//! [rad/m], so every momentum variance is expressed in units of `ħ²·m⁻²` and
//! every uncertainty product in units of `ħ²`.

pub mod analysis;
pub mod config;
mod error;
pub mod experiment;
pub mod lab;
pub mod numerics;
pub mod pump;
mod rng;
pub mod spdc;

pub use analysis::{
    aspect_ratio, bootstrap_error, coherence_sweep, epr_product, fit_gaussian, fit_gaussian_with,
    fit_profile, BootstrapError, EntanglementReport, FitOptions, GaussianFit, ScanPoint,
    SweepResult, SweepRow, Verdict,
};
pub use config::RunConfig;
pub use error::{Error, Result};
pub use experiment::Experiment;
pub use lab::{CoincidenceRecord, OpticalSystem, ScanMode, SlitScanConfig};
pub use numerics::{Domain, Field1D, Field2D, FourierPlan, Grid1D};
pub use pump::{CrossSpectralDensity, PumpModel, PumpSpec};
pub use spdc::{JointDistribution, MismatchMode, PhaseMatching, RotatedSections};

/// Separability bound on `Δx₋²·Δp₊²`, in units of `ħ²`.
pub const SEPARABILITY_BOUND: f64 = 0.25;
