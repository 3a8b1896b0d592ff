use std::path::{Path, PathBuf};

use spdc_core::experiment::Measurement;
use spdc_core::lab::ScanMode;
use spdc_core::spdc::sections_rotated;
use spdc_core::{
    fit_profile, CoincidenceRecord, Experiment, GaussianFit, JointDistribution, RunConfig,
    SweepResult, SEPARABILITY_BOUND,
};

use crate::io;
use crate::plot::{heatmap_figure, line_figure, Heatmap, Panel, Series};
use crate::{Failure, Which};

/// Collects everything a command writes; all file output goes through here.
struct Outputs<'a> {
    dir: &'a Path,
    svg: bool,
    written: Vec<PathBuf>,
}

impl<'a> Outputs<'a> {
    fn new(cfg: &'a RunConfig) -> Self {
        Self {
            dir: &cfg.output.dir,
            svg: cfg.output.svg,
            written: Vec::new(),
        }
    }

    fn path(&mut self, name: &str) -> PathBuf {
        let p = self.dir.join(name);
        self.written.push(p.clone());
        p
    }

    fn scan(&mut self, name: &str, records: &[CoincidenceRecord]) -> Result<(), Failure> {
        let p = self.path(name);
        io::write_scan(&p, records)
    }

    fn text(&mut self, name: &str, lines: &[(String, String)]) -> Result<(), Failure> {
        let p = self.path(name);
        io::write_text(&p, lines)
    }

    fn svg(&mut self, name: &str, body: impl FnOnce() -> String) -> Result<(), Failure> {
        if !self.svg {
            return Ok(());
        }
        let p = self.path(name);
        io::write_string(&p, &body())
    }

    fn finish(self) -> Vec<PathBuf> {
        for p in &self.written {
            log::info!("wrote {}", p.display());
        }
        self.written
    }
}

fn kv(k: &str, v: impl ToString) -> (String, String) {
    (k.to_string(), v.to_string())
}

fn optional(v: Option<f64>) -> String {
    v.map_or_else(|| "unavailable".to_string(), |e| e.to_string())
}

fn log_setup(label: &str, exp: &Experiment) {
    let g = exp.grid();
    let cfg = exp.config();
    log::info!(
        "{label}: n = {}, dx = {:e} m, extent = {:e} m, dq = {:e} rad/m, q extent = {:e} rad/m",
        g.n(),
        g.dx(),
        g.extent(),
        g.dq(),
        g.dq() * g.n() as f64
    );
    log::info!(
        "{label}: model = {:?}, w/l_c = {:.4}, realizations = {}, seed = {}",
        cfg.pump.model,
        exp.w_over_lc(),
        cfg.pump.n_realizations,
        cfg.pump.seed
    );
}

pub fn simulate(cfg: &RunConfig) -> Result<Vec<PathBuf>, Failure> {
    let exp = Experiment::new(cfg.clone())?;
    log_setup("simulate", &exp);
    let pos = exp.position_distribution()?;
    let mom = exp.momentum_distribution()?;
    let ps = sections_rotated(&pos)?;
    let ms = sections_rotated(&mom)?;

    let mut out = Outputs::new(cfg);
    let p = out.path("sections_position.csv");
    io::write_sections(&p, &ps, true)?;
    let p = out.path("sections_momentum.csv");
    io::write_sections(&p, &ms, false)?;
    if cfg.output.joint {
        let p = out.path("joint_position.csv");
        io::write_joint(&p, &pos, cfg.output.joint_stride)?;
        let p = out.path("joint_momentum.csv");
        io::write_joint(&p, &mom, cfg.output.joint_stride)?;
    }
    let g = exp.grid();
    let moment = |axis: &[f64], v: &[f64]| spdc_core::numerics::variance_of(v, axis);
    out.text(
        "simulate_summary.txt",
        &[
            kv("n", g.n()),
            kv("dx[m]", g.dx()),
            kv("dq[rad/m]", g.dq()),
            kv("w_over_lc", exp.w_over_lc()),
            kv("seed", cfg.pump.seed),
            kv("mass_position", pos.total_mass()),
            kv("mass_momentum", mom.total_mass()),
            kv("moment_var_x_plus[m^2]", moment(&ps.plus_axis, &ps.plus)?),
            kv(
                "moment_var_x_minus[m^2]",
                moment(&ps.minus_axis, &ps.minus)?,
            ),
            kv(
                "moment_var_p_plus[hbar^2 m^-2]",
                moment(&ms.plus_axis, &ms.plus)?,
            ),
            kv(
                "moment_var_p_minus[hbar^2 m^-2]",
                moment(&ms.minus_axis, &ms.minus)?,
            ),
            kv("pearson_position", pos.rotated_correlation()),
            kv("pearson_momentum", mom.rotated_correlation()),
        ],
    )?;
    out.svg("sections.svg", || {
        let panel = |title: &str, unit: &str, axis: &[f64], v: &[f64]| Panel {
            title: title.into(),
            xlabel: unit.into(),
            ylabel: "density".into(),
            series: vec![Series::Line {
                xy: axis.iter().copied().zip(v.iter().copied()).collect(),
                color: "black",
                dashed: false,
            }],
            hline: None,
        };
        line_figure(
            &[
                panel("x+ section", "x+ [m]", &ps.plus_axis, &ps.plus),
                panel("x- section", "x- [m]", &ps.minus_axis, &ps.minus),
                panel("p+ section", "p+ [hbar rad/m]", &ms.plus_axis, &ms.plus),
                panel("p- section", "p- [hbar rad/m]", &ms.minus_axis, &ms.minus),
            ],
            2,
        )
    })?;
    Ok(out.finish())
}

pub fn figure(cfg: &RunConfig, which: Which) -> Result<Vec<PathBuf>, Failure> {
    match which {
        Which::Fig2 => fig2(cfg),
        Which::Fig3 => fig3(cfg),
        Which::Fig4 => fig4(cfg),
    }
}

/// The coherent and incoherent-limit experiments behind figures 2 and 3.
fn pair(cfg: &RunConfig) -> Result<[(&'static str, Experiment); 2], Failure> {
    let coherent = Experiment::new(cfg.with_phi_0(0.0))?;
    let incoherent = Experiment::new(cfg.incoherent_limit())?;
    log_setup("coherent", &coherent);
    log_setup("incoherent", &incoherent);
    Ok([("coherent", coherent), ("incoherent", incoherent)])
}

struct Fig2Panel {
    name: String,
    records: Vec<CoincidenceRecord>,
    fit: GaussianFit,
    singles_sigma: f64,
}

/// Width of the signal-arm singles along a rotated scan coordinate. The
/// signal slit sits at `u/√2`, so the marginal width is stretched by √2.
fn singles_sigma(dist: &JointDistribution) -> Result<f64, Failure> {
    let fit = fit_profile(&dist.axis(), &dist.marginal_signal(), 0.0)?;
    Ok(std::f64::consts::SQRT_2 * fit.sigma)
}

fn fig2(cfg: &RunConfig) -> Result<Vec<PathBuf>, Failure> {
    let mut panels = Vec::new();
    for (label, exp) in pair(cfg)? {
        let pos = exp.position_distribution()?;
        let mom = exp.momentum_distribution()?;
        for (dist, mode, var) in [
            (&pos, ScanMode::AntiDiagonal, "x_minus"),
            (&mom, ScanMode::Diagonal, "p_plus"),
        ] {
            let records = exp.scan(dist, mode, 0)?;
            let fit = exp.fit_records(&records)?;
            panels.push(Fig2Panel {
                name: format!("{label}_{var}"),
                records,
                fit,
                singles_sigma: singles_sigma(dist)?,
            });
        }
    }
    let mut out = Outputs::new(cfg);
    let mut summary = Vec::new();
    for p in &panels {
        out.scan(&format!("fig2_{}.csv", p.name), &p.records)?;
        summary.push(kv(&format!("{}.sigma", p.name), p.fit.sigma));
        summary.push(kv(&format!("{}.sigma_error", p.name), p.fit.sigma_error()));
        summary.push(kv(&format!("{}.singles_sigma", p.name), p.singles_sigma));
        summary.push(kv(
            &format!("{}.width_ratio", p.name),
            p.fit.sigma / p.singles_sigma,
        ));
    }
    out.text("fig2_summary.txt", &summary)?;
    out.svg("fig2.svg", || {
        let plots: Vec<Panel> = panels.iter().map(fig2_panel).collect();
        line_figure(&plots, 2)
    })?;
    Ok(out.finish())
}

fn fig2_panel(p: &Fig2Panel) -> Panel {
    let rate = |r: &CoincidenceRecord| r.coincidences as f64 / r.dwell_time;
    let data: Vec<(f64, f64)> = p
        .records
        .iter()
        .map(|r| (r.scan_coordinate(), rate(r)))
        .collect();
    let err: Vec<f64> = p
        .records
        .iter()
        .map(|r| (r.coincidences as f64).sqrt() / r.dwell_time)
        .collect();
    let (lo, hi) = data
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), d| {
            (l.min(d.0), h.max(d.0))
        });
    let curve: Vec<(f64, f64)> = (0..=200)
        .map(|k| {
            let u = lo + (hi - lo) * k as f64 / 200.0;
            (u, p.fit.eval(u))
        })
        .collect();
    let peak = data.iter().map(|d| d.1).fold(0.0, f64::max);
    let singles_peak = p
        .records
        .iter()
        .map(|r| r.singles_s as f64)
        .fold(0.0, f64::max)
        .max(1.0);
    let singles: Vec<(f64, f64)> = p
        .records
        .iter()
        .map(|r| {
            (
                r.scan_coordinate(),
                r.singles_s as f64 / singles_peak * peak,
            )
        })
        .collect();
    let axis = if p.name.ends_with("x_minus") {
        "x- [m]"
    } else {
        "p+ [hbar rad/m]"
    };
    Panel {
        title: p.name.replace('_', " "),
        xlabel: axis.into(),
        ylabel: "coincidences / s".into(),
        series: vec![
            Series::Line {
                xy: singles,
                color: "gray",
                dashed: true,
            },
            Series::Line {
                xy: curve,
                color: "steelblue",
                dashed: false,
            },
            Series::Points {
                xy: data,
                err: Some(err),
                color: "black",
            },
        ],
        hline: None,
    }
}

fn fig3(cfg: &RunConfig) -> Result<Vec<PathBuf>, Failure> {
    let mut rasters = Vec::new();
    for (label, exp) in pair(cfg)? {
        let pos = exp.position_distribution()?;
        let mom = exp.momentum_distribution()?;
        let near = exp.config().near_field();
        let far = exp.config().far_field();
        rasters.push((format!("{label}_position"), exp.raster(&pos, &near)?));
        rasters.push((format!("{label}_momentum"), exp.raster(&mom, &far)?));
    }
    let mut out = Outputs::new(cfg);
    for (name, records) in &rasters {
        out.scan(&format!("fig3_{name}.csv"), records)?;
    }
    out.svg("fig3.svg", || {
        let maps: Vec<Heatmap> = rasters
            .iter()
            .map(|(name, recs)| {
                let unit = if name.ends_with("position") {
                    "[m]"
                } else {
                    "[hbar rad/m]"
                };
                let var = if name.ends_with("position") { "x" } else { "p" };
                Heatmap {
                    title: name.replace('_', " "),
                    xlabel: format!("{var}_s {unit}"),
                    ylabel: format!("{var}_i {unit}"),
                    cells: recs
                        .iter()
                        .map(|r| (r.coord_s, r.coord_i, r.coincidences as f64 / r.dwell_time))
                        .collect(),
                }
            })
            .collect();
        heatmap_figure(&maps, 2)
    })?;
    Ok(out.finish())
}

fn run_sweep(cfg: &RunConfig) -> Result<SweepResult, Failure> {
    let exp = Experiment::new(cfg.clone())?;
    log_setup("sweep", &exp);
    let result = exp.sweep()?;
    for (phi_0, msg) in &result.failures {
        log::warn!("sweep row phi_0 = {phi_0} failed: {msg}");
    }
    Ok(result)
}

fn write_sweep(out: &mut Outputs, result: &SweepResult) -> Result<(), Failure> {
    let p = out.path("sweep.csv");
    io::write_sweep(&p, &result.rows)?;
    let mut lines = vec![
        kv("slope[hbar^2 m^-2]", result.slope),
        kv("slope_error[hbar^2 m^-2]", result.slope_error),
        kv("intercept[hbar^2 m^-2]", result.intercept),
        kv("intercept_error[hbar^2 m^-2]", result.intercept_error),
    ];
    match result.crossing {
        Some((c, e)) => {
            lines.push(kv("crossing_w_over_lc", c));
            lines.push(kv("crossing_error", e));
        }
        None => lines.push(kv("crossing_w_over_lc", "none")),
    }
    for r in &result.rows {
        let tag = format!("row.phi_0={}", r.phi_0);
        lines.push(kv(
            &format!("{tag}.err_var_x_minus[m^2]"),
            r.err_var_x_minus,
        ));
        lines.push(kv(
            &format!("{tag}.err_var_p_plus[hbar^2 m^-2]"),
            r.err_var_p_plus,
        ));
        lines.push(kv(
            &format!("{tag}.moment_var_p_plus[hbar^2 m^-2]"),
            r.moment_var_p_plus,
        ));
    }
    for (phi_0, msg) in &result.failures {
        lines.push(kv(&format!("failed.phi_0={phi_0}"), msg));
    }
    out.text("sweep_summary.txt", &lines)
}

pub fn sweep(cfg: &RunConfig) -> Result<Vec<PathBuf>, Failure> {
    let result = run_sweep(cfg)?;
    let mut out = Outputs::new(cfg);
    write_sweep(&mut out, &result)?;
    Ok(out.finish())
}

fn fig4(cfg: &RunConfig) -> Result<Vec<PathBuf>, Failure> {
    let result = run_sweep(cfg)?;
    let mut out = Outputs::new(cfg);
    write_sweep(&mut out, &result)?;
    out.svg("fig4.svg", || {
        let rows = &result.rows;
        let points = |f: fn(&spdc_core::SweepRow) -> (f64, f64)| {
            let (xy, err): (Vec<(f64, f64)>, Vec<f64>) = rows
                .iter()
                .map(|r| {
                    let (v, e) = f(r);
                    ((r.w_over_lc, v), e)
                })
                .unzip();
            Series::Points {
                xy,
                err: Some(err),
                color: "black",
            }
        };
        let xmax = rows.iter().map(|r| r.w_over_lc).fold(0.0, f64::max);
        let trend: Vec<(f64, f64)> = (0..=50)
            .map(|k| {
                let x = xmax * k as f64 / 50.0;
                (x, result.intercept + result.slope * x * x)
            })
            .collect();
        line_figure(
            &[
                Panel {
                    title: "position correlation".into(),
                    xlabel: "w / l_c".into(),
                    ylabel: "var x- [m^2]".into(),
                    series: vec![points(|r| (r.var_x_minus, r.err_var_x_minus))],
                    hline: None,
                },
                Panel {
                    title: "momentum anti-correlation".into(),
                    xlabel: "w / l_c".into(),
                    ylabel: "var p+ [hbar^2 m^-2]".into(),
                    series: vec![
                        Series::Line {
                            xy: trend,
                            color: "steelblue",
                            dashed: false,
                        },
                        points(|r| (r.var_p_plus, r.err_var_p_plus)),
                    ],
                    hline: None,
                },
                Panel {
                    title: "uncertainty product".into(),
                    xlabel: "w / l_c".into(),
                    ylabel: "product [hbar^2]".into(),
                    series: vec![points(|r| (r.product, r.err_product))],
                    hline: Some(SEPARABILITY_BOUND),
                },
            ],
            3,
        )
    })?;
    Ok(out.finish())
}

fn report_lines(cfg: &RunConfig, exp: &Experiment, m: &Measurement) -> Vec<(String, String)> {
    let r = &m.report;
    let mut lines = vec![
        kv("model", format!("{:?}", cfg.pump.model).to_lowercase()),
        kv("w_over_lc", exp.w_over_lc()),
        kv("seed", cfg.pump.seed),
        kv("repeats", cfg.scan.repeats),
        kv("var_x_minus[m^2]", r.var_x_minus),
        kv("err_var_x_minus[m^2]", optional(r.var_x_minus_error)),
        kv("var_p_plus[hbar^2 m^-2]", r.var_p_plus),
        kv("err_var_p_plus[hbar^2 m^-2]", optional(r.var_p_plus_error)),
        kv("product[hbar^2]", r.product),
        kv("err_product[hbar^2]", optional(r.product_error)),
        kv("bound[hbar^2]", r.bound),
        kv("significance", r.significance),
        kv("verdict", r.verdict.as_str()),
    ];
    for (k, (x, p)) in m.x_minus.iter().zip(&m.p_plus).enumerate() {
        lines.push(kv(&format!("repeat{k}.seed"), x.records[0].seed));
        lines.push(kv(&format!("repeat{k}.var_x_minus[m^2]"), x.fit.variance()));
        lines.push(kv(
            &format!("repeat{k}.var_p_plus[hbar^2 m^-2]"),
            p.fit.variance(),
        ));
        lines.push(kv(
            &format!("repeat{k}.chi2_x_minus"),
            x.fit.reduced_chi_square,
        ));
        lines.push(kv(
            &format!("repeat{k}.chi2_p_plus"),
            p.fit.reduced_chi_square,
        ));
    }
    lines
}

pub fn report(cfg: &RunConfig) -> Result<Vec<PathBuf>, Failure> {
    let exp = Experiment::new(cfg.clone())?;
    log_setup("report", &exp);
    let pos: JointDistribution = exp.position_distribution()?;
    let mom = exp.momentum_distribution()?;
    let m = exp.measure(&pos, &mom)?;
    log::info!(
        "product = {} hbar^2 ({}), verdict = {}",
        m.report.product,
        optional(m.report.product_error),
        m.report.verdict.as_str()
    );
    let mut out = Outputs::new(cfg);
    let flat = |scans: &[spdc_core::experiment::ScanFit]| -> Vec<CoincidenceRecord> {
        scans
            .iter()
            .flat_map(|s| s.records.iter().cloned())
            .collect()
    };
    out.scan("report_x_minus.csv", &flat(&m.x_minus))?;
    out.scan("report_p_plus.csv", &flat(&m.p_plus))?;
    out.text("report.txt", &report_lines(cfg, &exp, &m))?;
    Ok(out.finish())
}
