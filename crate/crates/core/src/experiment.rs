//! End-to-end pipeline: pump model → joint distributions → slit scans →
//! Gaussian fits → separability report, and the coherence sweep built on it.

use std::f64::consts::SQRT_2;

use rand::RngCore;

use crate::analysis::{
    bootstrap_error, coherence_sweep, fit_gaussian_with, fit_profile, EntanglementReport,
    FitOptions, GaussianFit, ScanPoint, SweepResult, SweepRow,
};
use crate::config::RunConfig;
use crate::lab::{
    expected_scan, peak_window_probability, raster_schedule, scan_schedule, simulate_scan, Arm,
    CoincidenceRecord, OpticalSystem, ScanMode, SlitScanConfig,
};
use crate::numerics::{variance_of, Grid1D};
use crate::pump::PumpSpec;
use crate::rng::{stream, DOMAIN_REPEAT};
use crate::spdc::{
    joint_momentum_distribution, joint_position_distribution, sections_rotated, JointDistribution,
    PhaseMatching,
};
use crate::{Error, Result};

#[derive(Debug, Clone)]
pub struct Experiment {
    config: RunConfig,
    grid: Grid1D,
    spec: PumpSpec,
    pm: PhaseMatching,
}

/// One Poisson-sampled scan and its fit.
#[derive(Debug, Clone)]
pub struct ScanFit {
    pub records: Vec<CoincidenceRecord>,
    pub fit: GaussianFit,
}

#[derive(Debug, Clone)]
pub struct Measurement {
    /// One entry per repeat.
    pub x_minus: Vec<ScanFit>,
    pub p_plus: Vec<ScanFit>,
    pub report: EntanglementReport,
}

impl Experiment {
    pub fn new(config: RunConfig) -> Result<Self> {
        config.validate()?;
        Ok(Self {
            grid: config.grid()?,
            spec: config.pump_spec()?,
            pm: config.phase_matching()?,
            config,
        })
    }

    pub fn config(&self) -> &RunConfig {
        &self.config
    }

    pub fn grid(&self) -> Grid1D {
        self.grid
    }

    pub fn pump(&self) -> &PumpSpec {
        &self.spec
    }

    pub fn phase_matching(&self) -> PhaseMatching {
        self.pm
    }

    /// `w / l_c` of the configured pump (0 when coherent).
    pub fn w_over_lc(&self) -> f64 {
        self.spec.w / self.spec.canonical().coherence_length()
    }

    pub fn momentum_distribution(&self) -> Result<JointDistribution> {
        joint_momentum_distribution(&self.spec, &self.pm, &self.grid)
    }

    pub fn position_distribution(&self) -> Result<JointDistribution> {
        joint_position_distribution(&self.spec, &self.pm, &self.grid)
    }

    fn system(&self, mode: ScanMode) -> OpticalSystem {
        match mode {
            ScanMode::AntiDiagonal => self.config.near_field(),
            ScanMode::Diagonal | ScanMode::Raster => self.config.far_field(),
        }
    }

    /// Seed of repeat `r`, derived from the pump seed.
    pub fn repeat_seed(&self, repeat: usize) -> u64 {
        stream(self.config.pump.seed, DOMAIN_REPEAT, repeat as u64).next_u64()
    }

    /// Fit window for a slit pair moving along a rotated axis.
    pub fn fit_options(&self, system: &OpticalSystem) -> FitOptions {
        FitOptions::for_slit_pair(system.map(self.config.scan.slit_width, Arm::Signal))
    }

    /// Slit settings of the 1D scan on `dist`: anti-diagonal in the near
    /// field or diagonal in the far field. Without a configured range the
    /// scan spans ±4 widths of the slit-broadened rotated section.
    pub fn schedule(&self, dist: &JointDistribution, mode: ScanMode) -> Result<Vec<(f64, f64)>> {
        let sys = self.system(mode);
        let scan = &self.config.scan;
        let (range, step) = match mode {
            ScanMode::AntiDiagonal => (scan.range_near, scan.step_near),
            ScanMode::Diagonal => (scan.range_far, scan.step_far),
            ScanMode::Raster => return Err(Error::param("use raster() for 2D scans")),
        };
        let half = match range {
            Some(r) => r,
            None => {
                let sec = sections_rotated(dist)?;
                let (axis, values) = match mode {
                    ScanMode::AntiDiagonal => (&sec.minus_axis, &sec.minus),
                    _ => (&sec.plus_axis, &sec.plus),
                };
                let sigma = fit_profile(axis, values, 0.0)?.sigma;
                let a = self.fit_options(&sys).window_half_width;
                let width_u = (sigma * sigma + a * a / 6.0).sqrt();
                // u = √2·c along either diagonal.
                4.0 * width_u / SQRT_2 / sys.scale(Arm::Signal)
            }
        };
        let step = step.unwrap_or(2.0 * half / (scan.points - 1) as f64);
        scan_schedule(mode, (-half, half + 1e-9 * step), step)
    }

    fn scan_config(&self, mode: ScanMode, positions: Vec<(f64, f64)>, seed: u64) -> SlitScanConfig {
        SlitScanConfig {
            positions,
            ..self.config.slit_scan(mode, seed)
        }
    }

    pub fn scan(
        &self,
        dist: &JointDistribution,
        mode: ScanMode,
        repeat: usize,
    ) -> Result<Vec<CoincidenceRecord>> {
        let positions = self.schedule(dist, mode)?;
        let cfg = self.scan_config(mode, positions, self.repeat_seed(repeat));
        simulate_scan(dist, &self.system(mode), &cfg)
    }

    pub fn fit_records(&self, records: &[CoincidenceRecord]) -> Result<GaussianFit> {
        let mode = records
            .first()
            .ok_or(Error::NotEnoughData("empty scan".into()))?
            .mode;
        let points: Vec<ScanPoint> = records
            .iter()
            .map(|r| ScanPoint {
                coord: r.scan_coordinate(),
                counts: r.coincidences as f64,
                dwell: r.dwell_time,
            })
            .collect();
        fit_gaussian_with(&points, &self.fit_options(&self.system(mode)))
    }

    /// Fit of the noiseless expected rates along the scan; isolates the
    /// estimator from counting noise.
    pub fn noiseless_fit(&self, dist: &JointDistribution, mode: ScanMode) -> Result<GaussianFit> {
        let sys = self.system(mode);
        let positions = self.schedule(dist, mode)?;
        let cfg = self.scan_config(mode, positions, 0);
        let rates = expected_scan(dist, &sys, &cfg)?;
        let points: Vec<ScanPoint> = cfg
            .positions
            .iter()
            .zip(&rates)
            .map(|(&(s, i), r)| {
                let (cs, ci) = (sys.map(s, Arm::Signal), sys.map(i, Arm::Idler));
                let u = match mode {
                    ScanMode::AntiDiagonal => (cs - ci) / SQRT_2,
                    _ => (cs + ci) / SQRT_2,
                };
                ScanPoint {
                    coord: u,
                    counts: r.0 * cfg.dwell_time,
                    dwell: cfg.dwell_time,
                }
            })
            .collect();
        fit_gaussian_with(&points, &self.fit_options(&sys))
    }

    /// Runs `repeats` independent scans of both distributions and fits
    /// them. Repeats share the distributions and differ only in their
    /// counting noise; error bars are standard errors over repeats.
    pub fn measure(
        &self,
        position: &JointDistribution,
        momentum: &JointDistribution,
    ) -> Result<Measurement> {
        let repeats = self.config.scan.repeats;
        let mut x_minus = Vec::with_capacity(repeats);
        let mut p_plus = Vec::with_capacity(repeats);
        for r in 0..repeats {
            for (dist, mode, out) in [
                (position, ScanMode::AntiDiagonal, &mut x_minus),
                (momentum, ScanMode::Diagonal, &mut p_plus),
            ] {
                let records = self.scan(dist, mode, r)?;
                let fit = self.fit_records(&records)?;
                if !fit.converged {
                    return Err(Error::NotConverged);
                }
                out.push(ScanFit { records, fit });
            }
        }
        let vx: Vec<f64> = x_minus.iter().map(|s| s.fit.variance()).collect();
        let vp: Vec<f64> = p_plus.iter().map(|s| s.fit.variance()).collect();
        let products: Vec<f64> = vx.iter().zip(&vp).map(|(a, b)| a * b).collect();
        let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
        let sem = |v: &[f64]| bootstrap_error(v).ok().map(|b| b.sem);
        let report = EntanglementReport::with_product(
            mean(&vx),
            sem(&vx),
            mean(&vp),
            sem(&vp),
            mean(&products),
            sem(&products),
            self.config.analysis.significance,
        );
        Ok(Measurement {
            x_minus,
            p_plus,
            report,
        })
    }

    /// Full pipeline for the configured pump.
    pub fn run(&self) -> Result<Measurement> {
        let position = self.position_distribution()?;
        let momentum = self.momentum_distribution()?;
        self.measure(&position, &momentum)
    }

    /// Poisson-sampled 2D raster of `dist` through `system`, skipping
    /// settings whose expected rate is below the mask threshold.
    pub fn raster(
        &self,
        dist: &JointDistribution,
        system: &OpticalSystem,
    ) -> Result<Vec<CoincidenceRecord>> {
        let scan = &self.config.scan;
        let sec = sections_rotated(dist)?;
        let extent = |axis: &[f64], v: &[f64]| -> Result<f64> { Ok(variance_of(v, axis)?.sqrt()) };
        // Cover ±3 widths of the broader rotated direction, capped by the grid.
        let spread = extent(&sec.plus_axis, &sec.plus)?.max(extent(&sec.minus_axis, &sec.minus)?);
        let slit = system.map(scan.slit_width, Arm::Signal);
        let grid_half = 0.5 * (dist.n() - 1) as f64 * dist.step() - slit;
        let half_c = (3.0 * spread / SQRT_2 + slit).min(grid_half);
        let half = system.unmap(half_c, Arm::Signal);
        let step = 2.0 * half / (scan.raster_points - 1) as f64;
        let peak = peak_window_probability(dist, system, scan.slit_width)?;
        let threshold = scan.mask_threshold * peak;
        let keep = |s: f64, i: f64| {
            crate::lab::window_probability(dist, system, s, i, scan.slit_width)
                .map(|p| p >= threshold)
                .unwrap_or(false)
        };
        let positions = raster_schedule((-half, half + 1e-9 * step), step, keep)?;
        let cfg = self.scan_config(ScanMode::Raster, positions, self.repeat_seed(0));
        simulate_scan(dist, system, &cfg)
    }

    /// One sweep row for a phase-screen ensemble of strength `phi_0`.
    pub fn sweep_row(&self, phi_0: f64) -> Result<SweepRow> {
        let exp = Experiment::new(self.config.with_phi_0(phi_0))?;
        let position = exp.position_distribution()?;
        let momentum = exp.momentum_distribution()?;
        let m = exp.measure(&position, &momentum)?;
        let sec = sections_rotated(&momentum)?;
        let r = &m.report;
        Ok(SweepRow {
            phi_0,
            w_over_lc: exp.w_over_lc(),
            var_x_minus: r.var_x_minus,
            err_var_x_minus: r.var_x_minus_error.unwrap_or(0.0),
            var_p_plus: r.var_p_plus,
            err_var_p_plus: r.var_p_plus_error.unwrap_or(0.0),
            product: r.product,
            err_product: r.product_error.unwrap_or(0.0),
            moment_var_p_plus: variance_of(&sec.plus, &sec.plus_axis)?,
        })
    }

    /// Coherence sweep over the configured `phi_0` list.
    pub fn sweep(&self) -> Result<SweepResult> {
        self.sweep_over(&self.config.sweep.phi_0.clone())
    }

    pub fn sweep_over(&self, phi_0: &[f64]) -> Result<SweepResult> {
        coherence_sweep(phi_0, |p| {
            log::info!("sweep row phi_0 = {p}");
            self.sweep_row(p)
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analysis::Verdict;

    fn small() -> RunConfig {
        let mut cfg = RunConfig::default();
        cfg.grid.n = 512;
        cfg.pump.n_realizations = 16;
        cfg.scan.repeats = 3;
        cfg
    }

    #[test]
    fn coherent_pipeline_is_entangled() {
        let exp = Experiment::new(small()).unwrap();
        let m = exp.run().unwrap();
        assert_eq!(m.x_minus.len(), 3);
        assert!(m.report.product < 0.25, "{}", m.report.product);
        assert_eq!(m.report.verdict, Verdict::Entangled);
        assert!(m.report.product_error.unwrap() > 0.0);
    }

    #[test]
    fn single_repeat_has_no_error_bars() {
        let mut cfg = small();
        cfg.scan.repeats = 1;
        let m = Experiment::new(cfg).unwrap().run().unwrap();
        assert!(m.report.product_error.is_none());
    }

    #[test]
    fn noiseless_scan_fit_tracks_section_fit() {
        let exp = Experiment::new(small()).unwrap();
        let pos = exp.position_distribution().unwrap();
        let sec = sections_rotated(&pos).unwrap();
        let truth = fit_profile(&sec.minus_axis, &sec.minus, 0.0).unwrap().sigma;
        let fit = exp.noiseless_fit(&pos, ScanMode::AntiDiagonal).unwrap();
        assert!(
            (fit.sigma / truth - 1.0).abs() < 0.03,
            "{} vs {truth}",
            fit.sigma
        );
    }

    #[test]
    fn repeats_are_deterministic_and_distinct() {
        let exp = Experiment::new(small()).unwrap();
        let mom = exp.momentum_distribution().unwrap();
        let a = exp.scan(&mom, ScanMode::Diagonal, 0).unwrap();
        assert_eq!(a, exp.scan(&mom, ScanMode::Diagonal, 0).unwrap());
        assert_ne!(a, exp.scan(&mom, ScanMode::Diagonal, 1).unwrap());
        assert_eq!(a.len(), 41);
    }

    #[test]
    fn raster_masks_low_rate_settings() {
        let mut cfg = small();
        cfg.scan.raster_points = 21;
        let exp = Experiment::new(cfg).unwrap();
        let mom = exp.momentum_distribution().unwrap();
        let recs = exp.raster(&mom, &exp.config().far_field()).unwrap();
        assert!(!recs.is_empty() && recs.len() < 21 * 21);
    }
}
