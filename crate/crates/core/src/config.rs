//! Run configuration: a strict TOML schema with physical defaults.
//!
//! Every block and every key is optional; missing values take the defaults
//! below. Unknown keys are rejected and reported with their dotted path.
//!
//! ```toml
//! [pump]
//! model = "ensemble"      # "coherent" | "gsm" | "ensemble"
//! w = 110e-6
//! phi_0 = 2.0
//!
//! [grid]
//! n = 1024
//! dx = 2e-6
//! ```

use std::f64::consts::PI;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::lab::{OpticalSystem, SlitScanConfig};
use crate::numerics::Grid1D;
use crate::pump::{PumpModel, PumpSpec};
use crate::spdc::PhaseMatching;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Coherent,
    Gsm,
    Ensemble,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PumpConfig {
    pub model: ModelKind,
    /// Intensity standard deviation [m].
    pub w: f64,
    /// Wavefront radius [m]; `inf` for a flat front.
    pub radius: f64,
    /// GSM coherence length [m].
    pub coherence_length: f64,
    /// Phase-screen correlation width [m].
    pub delta_phi: f64,
    /// Phase-screen modulation strength [rad].
    pub phi_0: f64,
    pub n_realizations: usize,
    pub seed: u64,
    pub lambda_p: f64,
    pub n_p: f64,
}

impl Default for PumpConfig {
    fn default() -> Self {
        Self {
            model: ModelKind::Coherent,
            w: 110e-6,
            radius: f64::INFINITY,
            coherence_length: f64::INFINITY,
            delta_phi: 110e-6,
            phi_0: 0.0,
            n_realizations: 300,
            seed: 1,
            lambda_p: 405e-9,
            n_p: 1.8,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CrystalConfig {
    pub length: f64,
    pub lambda_s: f64,
    pub lambda_i: f64,
    pub n_s: f64,
    pub n_i: f64,
}

impl Default for CrystalConfig {
    fn default() -> Self {
        Self {
            length: 5e-3,
            lambda_s: 810e-9,
            lambda_i: 810e-9,
            n_s: 1.8,
            n_i: 1.8,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridConfig {
    pub n: usize,
    pub dx: f64,
}

impl Default for GridConfig {
    fn default() -> Self {
        Self { n: 1024, dx: 2e-6 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OpticsConfig {
    pub f1: f64,
    pub f2: f64,
    pub f3: f64,
}

impl Default for OpticsConfig {
    fn default() -> Self {
        Self {
            f1: 0.05,
            f2: 0.15,
            f3: 0.1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScanBlock {
    pub slit_width: f64,
    /// Settings per 1D scan when the range is chosen automatically.
    pub points: usize,
    /// Half-range of slit offsets for the near-field scan [m]; automatic
    /// (±4 widths of the expected profile) when absent.
    pub range_near: Option<f64>,
    pub step_near: Option<f64>,
    pub range_far: Option<f64>,
    pub step_far: Option<f64>,
    /// Dwell time per setting [s].
    pub dwell: f64,
    /// Coincidences per second at the distribution peak.
    pub rate_constant: f64,
    /// Singles per second at the marginal peak.
    pub singles_rate: f64,
    pub repeats: usize,
    /// Settings per axis of a 2D raster.
    pub raster_points: usize,
    /// Raster cells below this fraction of the peak rate are skipped.
    pub mask_threshold: f64,
}

impl Default for ScanBlock {
    fn default() -> Self {
        Self {
            slit_width: 100e-6,
            points: 41,
            range_near: None,
            step_near: None,
            range_far: None,
            step_far: None,
            dwell: 60.0,
            rate_constant: 5.0,
            singles_rate: 50.0,
            repeats: 5,
            raster_points: 41,
            mask_threshold: 1e-3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnalysisConfig {
    /// Multiplier `k` in `product + k·error < bound`.
    pub significance: f64,
}

impl Default for AnalysisConfig {
    fn default() -> Self {
        Self { significance: 0.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepConfig {
    pub phi_0: Vec<f64>,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            phi_0: vec![0.0, 1.0, 2.0, 3.0, 4.0, 6.0, 8.0, 10.0, 12.0],
        }
    }
}

/// Overrides applied for the incoherent-limit (LED-like) runs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IncoherentConfig {
    /// `l_c / w` of the GSM pump.
    pub lc_over_w: f64,
    pub n: usize,
    pub dx: f64,
    pub f3: f64,
    pub dwell: f64,
    pub rate_constant: f64,
}

impl Default for IncoherentConfig {
    fn default() -> Self {
        Self {
            lc_over_w: 0.05,
            n: 1024,
            dx: 1e-6,
            f3: 0.05,
            dwell: 900.0,
            rate_constant: 20.0 / 60.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    pub dir: PathBuf,
    pub svg: bool,
    /// Write the 2D joint distributions alongside the sections.
    pub joint: bool,
    /// Keep every `joint_stride`-th grid point per axis in joint files.
    pub joint_stride: usize,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self {
            dir: PathBuf::from("out"),
            svg: true,
            joint: true,
            joint_stride: 4,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub pump: PumpConfig,
    pub crystal: CrystalConfig,
    pub grid: GridConfig,
    pub optics: OpticsConfig,
    pub scan: ScanBlock,
    pub analysis: AnalysisConfig,
    pub sweep: SweepConfig,
    pub incoherent: IncoherentConfig,
    pub output: OutputConfig,
}

fn positive(path: &str, v: f64) -> Result<()> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(Error::config(
            path,
            format!("must be positive and finite, got {v}"),
        ))
    }
}

fn positive_or_inf(path: &str, v: f64) -> Result<()> {
    if v > 0.0 && !v.is_nan() {
        Ok(())
    } else {
        Err(Error::config(
            path,
            format!("must be positive (or inf), got {v}"),
        ))
    }
}

fn optional_positive(path: &str, v: Option<f64>) -> Result<()> {
    v.map_or(Ok(()), |v| positive(path, v))
}

impl RunConfig {
    /// Parses TOML text; structural errors carry the offending key path.
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let de = toml::Deserializer::parse(text)
            .map_err(|e| Error::config("<document>", e.to_string()))?;
        let cfg: RunConfig = serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            Error::config(path, e.into_inner().message().to_string())
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::config(path.display().to_string(), e.to_string()))?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("configuration serialises")
    }

    /// Value checks beyond the schema, including grid resolution.
    pub fn validate(&self) -> Result<()> {
        let p = &self.pump;
        positive("pump.w", p.w)?;
        positive_or_inf("pump.radius", p.radius)?;
        positive_or_inf("pump.coherence_length", p.coherence_length)?;
        positive("pump.delta_phi", p.delta_phi)?;
        if !(p.phi_0.is_finite() && p.phi_0 >= 0.0) {
            return Err(Error::config(
                "pump.phi_0",
                format!("must be >= 0, got {}", p.phi_0),
            ));
        }
        if p.n_realizations == 0 {
            return Err(Error::config("pump.n_realizations", "must be at least 1"));
        }
        positive("pump.lambda_p", p.lambda_p)?;
        positive("pump.n_p", p.n_p)?;
        let c = &self.crystal;
        for (k, v) in [
            ("crystal.length", c.length),
            ("crystal.lambda_s", c.lambda_s),
            ("crystal.lambda_i", c.lambda_i),
            ("crystal.n_s", c.n_s),
            ("crystal.n_i", c.n_i),
        ] {
            positive(k, v)?;
        }
        for (k, v) in [
            ("optics.f1", self.optics.f1),
            ("optics.f2", self.optics.f2),
            ("optics.f3", self.optics.f3),
        ] {
            positive(k, v)?;
        }
        let s = &self.scan;
        positive("scan.slit_width", s.slit_width)?;
        positive("scan.dwell", s.dwell)?;
        if !(s.rate_constant.is_finite() && s.rate_constant >= 0.0) {
            return Err(Error::config("scan.rate_constant", "must be >= 0"));
        }
        if !(s.singles_rate.is_finite() && s.singles_rate >= 0.0) {
            return Err(Error::config("scan.singles_rate", "must be >= 0"));
        }
        if s.points < 5 {
            return Err(Error::config(
                "scan.points",
                "at least 5 settings are needed for a fit",
            ));
        }
        if s.raster_points < 2 {
            return Err(Error::config("scan.raster_points", "must be at least 2"));
        }
        if s.repeats == 0 {
            return Err(Error::config("scan.repeats", "must be at least 1"));
        }
        if !(s.mask_threshold >= 0.0 && s.mask_threshold < 1.0) {
            return Err(Error::config("scan.mask_threshold", "must lie in [0, 1)"));
        }
        optional_positive("scan.range_near", s.range_near)?;
        optional_positive("scan.step_near", s.step_near)?;
        optional_positive("scan.range_far", s.range_far)?;
        optional_positive("scan.step_far", s.step_far)?;
        if !(self.analysis.significance >= 0.0 && self.analysis.significance.is_finite()) {
            return Err(Error::config("analysis.significance", "must be >= 0"));
        }
        if let Some(bad) = self
            .sweep
            .phi_0
            .iter()
            .find(|v| !(v.is_finite() && **v >= 0.0))
        {
            return Err(Error::config(
                "sweep.phi_0",
                format!("values must be >= 0, got {bad}"),
            ));
        }
        let inc = &self.incoherent;
        positive("incoherent.lc_over_w", inc.lc_over_w)?;
        positive("incoherent.dx", inc.dx)?;
        positive("incoherent.f3", inc.f3)?;
        positive("incoherent.dwell", inc.dwell)?;
        positive("incoherent.rate_constant", inc.rate_constant)?;
        Grid1D::new(inc.n, inc.dx).map_err(|e| Error::config("incoherent.n", e.to_string()))?;
        if self.output.joint_stride == 0 {
            return Err(Error::config("output.joint_stride", "must be at least 1"));
        }

        let grid = Grid1D::new(self.grid.n, self.grid.dx)
            .map_err(|e| Error::config("grid.n", e.to_string()))?;
        self.check_resolution(&grid, &self.pump_spec()?)
    }

    /// Grid adequacy for the configured pump and crystal: the coherence
    /// structure needs several samples per length, the window must hold the
    /// beam and the two-photon correlation width, and the step must resolve
    /// that width.
    pub fn check_resolution(&self, grid: &Grid1D, spec: &PumpSpec) -> Result<()> {
        spec.check_grid(grid)?;
        let pm = self.phase_matching()?;
        let corr = (pm.length / (4.0 * pm.k_degenerate())).sqrt();
        if grid.dx() > corr / 2.0 {
            return Err(Error::UnderResolved {
                what: "two-photon correlation width",
                detail: format!(
                    "dx = {:e} m exceeds {:e} m (half the width sqrt(L/4k))",
                    grid.dx(),
                    corr / 2.0
                ),
            });
        }
        let needed = 8.0 * spec.w.max(corr);
        if grid.extent() < needed {
            return Err(Error::config(
                "grid.n",
                format!(
                    "grid extent {:e} m is below 8 widths ({needed:e} m); increase n",
                    grid.extent()
                ),
            ));
        }
        Ok(())
    }

    pub fn phase_matching(&self) -> Result<PhaseMatching> {
        let c = &self.crystal;
        PhaseMatching::from_wavelengths(
            c.length,
            (self.pump.lambda_p, self.pump.n_p),
            (c.lambda_s, c.n_s),
            (c.lambda_i, c.n_i),
        )
    }

    pub fn k_p(&self) -> f64 {
        2.0 * PI * self.pump.n_p / self.pump.lambda_p
    }

    pub fn pump_spec(&self) -> Result<PumpSpec> {
        let p = &self.pump;
        let model = match p.model {
            ModelKind::Coherent => PumpModel::CoherentGaussian,
            ModelKind::Gsm => PumpModel::GaussianSchell {
                coherence_length: p.coherence_length,
                delta_phi: p.delta_phi,
                n_realizations: p.n_realizations,
                seed: p.seed,
            },
            ModelKind::Ensemble => PumpModel::PhaseScreenEnsemble {
                delta_phi: p.delta_phi,
                phi_0: p.phi_0,
                n_realizations: p.n_realizations,
                seed: p.seed,
            },
        };
        let spec = PumpSpec {
            w: p.w,
            radius: p.radius,
            k_p: self.k_p(),
            model,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn grid(&self) -> Result<Grid1D> {
        Grid1D::new(self.grid.n, self.grid.dx)
    }

    pub fn near_field(&self) -> OpticalSystem {
        OpticalSystem::Imaging4f {
            f1: self.optics.f1,
            f2: self.optics.f2,
        }
    }

    pub fn far_field(&self) -> OpticalSystem {
        OpticalSystem::FourierLens {
            f3: self.optics.f3,
            lambda_s: self.crystal.lambda_s,
            lambda_i: self.crystal.lambda_i,
        }
    }

    /// Scan configuration skeleton; positions are filled in per scan.
    pub fn slit_scan(&self, mode: crate::lab::ScanMode, seed: u64) -> SlitScanConfig {
        SlitScanConfig {
            slit_width: self.scan.slit_width,
            positions: Vec::new(),
            dwell_time: self.scan.dwell,
            rate_constant: self.scan.rate_constant,
            singles_rate: self.scan.singles_rate,
            mode,
            seed,
        }
    }

    /// Copy with the pump replaced by a phase-screen ensemble of strength
    /// `phi_0` (coherent for `phi_0 = 0`).
    pub fn with_phi_0(&self, phi_0: f64) -> RunConfig {
        let mut cfg = self.clone();
        cfg.pump.model = ModelKind::Ensemble;
        cfg.pump.phi_0 = phi_0;
        cfg
    }

    /// Copy describing the incoherent-limit run: a GSM pump with
    /// `l_c = lc_over_w · w` on the finer grid, with the far-field lens and
    /// acquisition settings of that run.
    pub fn incoherent_limit(&self) -> RunConfig {
        let mut cfg = self.clone();
        let inc = &self.incoherent;
        cfg.pump.model = ModelKind::Gsm;
        cfg.pump.coherence_length = inc.lc_over_w * self.pump.w;
        cfg.pump.delta_phi = cfg.pump.delta_phi.min(self.pump.w);
        cfg.grid = GridConfig {
            n: inc.n,
            dx: inc.dx,
        };
        cfg.optics.f3 = inc.f3;
        cfg.scan.dwell = inc.dwell;
        cfg.scan.rate_constant = inc.rate_constant;
        cfg
    }
}
