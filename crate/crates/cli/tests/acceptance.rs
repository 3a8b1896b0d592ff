//! Acceptance gate. Runs every criterion in order, prints one PASS/FAIL line
//! per criterion and exits non-zero when any of them fails.
//!
//! Built with `harness = false`; run with `cargo test -p spdc-cli --test
//! acceptance`, optionally followed by `-- 2 5` to run selected criteria.

use std::f64::consts::{PI, SQRT_2};
use std::path::Path;
use std::process::Command;
use std::time::Instant;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};
use rustfft::FftPlanner;

use spdc_core::numerics::{fft_physical, ifft_physical, variance_of};
use spdc_core::pump::{analytic_csd, gsm_delta_p_plus_sq, PumpModel};
use spdc_core::spdc::{
    joint_momentum_distribution, joint_position_distribution, phase_mismatch, sections_rotated,
};
use spdc_core::{
    aspect_ratio, bootstrap_error, fit_gaussian, fit_profile, Domain, Experiment, Field1D, Grid1D,
    MismatchMode, PumpSpec, RunConfig, ScanPoint, SEPARABILITY_BOUND,
};

struct Outcome {
    pass: bool,
    detail: String,
}

type Check = Result<Outcome, String>;
type Criterion = (&'static str, fn() -> Check);

fn outcome(pass: bool, detail: String) -> Check {
    Ok(Outcome { pass, detail })
}

fn err(e: impl std::fmt::Display) -> String {
    e.to_string()
}

fn k_p() -> f64 {
    RunConfig::default().k_p()
}

fn gsm(w: f64, radius: f64, l_c: f64) -> PumpSpec {
    PumpSpec {
        w,
        radius,
        k_p: k_p(),
        model: PumpModel::GaussianSchell {
            coherence_length: l_c,
            delta_phi: w,
            n_realizations: 300,
            seed: 1,
        },
    }
}

fn ensemble(phi_0: f64) -> PumpSpec {
    PumpSpec {
        w: 110e-6,
        radius: f64::INFINITY,
        k_p: k_p(),
        model: PumpModel::PhaseScreenEnsemble {
            delta_phi: 110e-6,
            phi_0,
            n_realizations: 300,
            seed: 1,
        },
    }
}

/// Angular intensity `S(q) = ΣΣ W(x₁,x₂) e^{-iq(x₁-x₂)}` by a forward DFT
/// over `x₁` followed by the conjugate-sign sum over `x₂`, evaluated on the
/// grid frequencies. Returns `(q, S)` in ascending `q`.
fn oracle_angular_intensity(n: usize, dx: f64, w: &[Complex64]) -> (Vec<f64>, Vec<f64>) {
    let fft = FftPlanner::<f64>::new().plan_fft_forward(n);
    // Column-major copy so each FFT runs over x₁ for fixed x₂.
    let mut cols = vec![Complex64::new(0.0, 0.0); n * n];
    for j1 in 0..n {
        for j2 in 0..n {
            cols[j2 * n + j1] = w[j1 * n + j2];
        }
    }
    for col in cols.chunks_mut(n) {
        fft.process(col);
    }
    let mut pairs: Vec<(f64, f64)> = (0..n)
        .map(|k| {
            let s: Complex64 = (0..n)
                .map(|j2| {
                    let phase = 2.0 * PI * ((k * j2) % n) as f64 / n as f64;
                    cols[j2 * n + k] * Complex64::from_polar(1.0, phase)
                })
                .sum();
            let kk = if k < n / 2 {
                k as f64
            } else {
                k as f64 - n as f64
            };
            (2.0 * PI * kk / (n as f64 * dx), s.re)
        })
        .collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    pairs.into_iter().unzip()
}

fn criterion_1() -> Check {
    let start = Instant::now();
    let (n, dx) = (1024, 4e-6);
    let grid = Grid1D::new(n, dx).map_err(err)?;
    let mut worst: (f64, String) = (0.0, String::new());
    let mut cells = 0;
    for w in [55e-6, 110e-6, 220e-6] {
        for l_c in [f64::INFINITY, 220e-6, 110e-6, 55e-6, 27.5e-6] {
            for radius in [f64::INFINITY, 1.0] {
                let spec = gsm(w, radius, l_c);
                let csd = analytic_csd(&grid, &spec).map_err(err)?;
                let (q, s) = oracle_angular_intensity(n, dx, &csd.values);
                let angular = variance_of(&s.iter().map(|v| v.max(0.0)).collect::<Vec<_>>(), &q)
                    .map_err(err)?;
                // q₊ = (q_s + q_i)/√2 carries half of the pump's angular variance.
                let oracle = angular / 2.0;
                let closed = gsm_delta_p_plus_sq(w, radius, l_c, spec.k_p).map_err(err)?;
                let rel = (closed / oracle - 1.0).abs();
                if rel >= worst.0 {
                    worst = (rel, format!("w={w:e} l_c={l_c:e} R={radius:e}"));
                }
                cells += 1;
            }
        }
    }
    let secs = start.elapsed().as_secs_f64();
    outcome(
        worst.0 < 5e-3 && secs < 60.0,
        format!(
            "{cells} cells, worst relative deviation {:.2e} at {} (tol 5e-3), {secs:.1} s (limit 60 s)",
            worst.0, worst.1
        ),
    )
}

fn criterion_2() -> Check {
    let start = Instant::now();
    let cfg = RunConfig::default();
    let grid = Grid1D::new(1024, cfg.grid.dx).map_err(err)?;
    let pm = cfg.phase_matching().map_err(err)?;
    let mut pass = true;
    let mut parts = Vec::new();
    for phi_0 in [1.0, 2.0, 3.0, 4.0] {
        let spec = ensemble(phi_0);
        let dist = joint_momentum_distribution(&spec, &pm, &grid).map_err(err)?;
        let sec = sections_rotated(&dist).map_err(err)?;
        let fitted = fit_profile(&sec.plus_axis, &sec.plus, 0.0)
            .map_err(err)?
            .variance();
        let moment = variance_of(&sec.plus, &sec.plus_axis).map_err(err)?;
        let eq = gsm_delta_p_plus_sq(spec.w, spec.radius, spec.coherence_length(), spec.k_p)
            .map_err(err)?;
        let ratio = fitted / eq;
        pass &= (ratio - 1.0).abs() < 0.05;
        parts.push(format!(
            "phi_0={phi_0}: fit/closed={ratio:.3} (moment/closed={:.3})",
            moment / eq
        ));
    }
    let secs = start.elapsed().as_secs_f64();
    pass &= secs < 300.0;
    outcome(
        pass,
        format!("{} (tol 5%), {secs:.1} s (limit 300 s)", parts.join("; ")),
    )
}

fn criterion_3() -> Check {
    let cfg = RunConfig::default();
    let grid = Grid1D::new(1024, cfg.grid.dx).map_err(err)?;
    let pm = cfg.phase_matching().map_err(err)?;
    let mut values = Vec::new();
    for phi_0 in [0.0, 1.0, 2.0, 3.0, 4.0] {
        let dist = joint_position_distribution(&ensemble(phi_0), &pm, &grid).map_err(err)?;
        let sec = sections_rotated(&dist).map_err(err)?;
        values.push((
            phi_0,
            fit_profile(&sec.minus_axis, &sec.minus, 0.0)
                .map_err(err)?
                .variance(),
        ));
    }
    let base = values[0].1;
    let worst = values
        .iter()
        .map(|v| (v.1 / base - 1.0).abs())
        .fold(0.0, f64::max);
    outcome(
        worst < 0.05,
        format!("var x- at phi_0=0 is {base:.4e} m^2, worst deviation over phi_0<=4 is {:.2e} (tol 5e-2)", worst),
    )
}

fn criterion_4() -> Check {
    let start = Instant::now();
    let exp = Experiment::new(RunConfig::default()).map_err(err)?;
    let sweep = exp.sweep().map_err(err)?;
    let rows = &sweep.rows;
    if !sweep.failures.is_empty() {
        return outcome(false, format!("failed rows: {:?}", sweep.failures));
    }
    let monotone = rows
        .windows(2)
        .all(|p| p[1].product + p[0].err_product.max(p[1].err_product) >= p[0].product);
    let first = &rows[0];
    let last = rows.last().ok_or("empty sweep")?;
    let starts_below = first.w_over_lc == 0.0 && first.product < SEPARABILITY_BOUND;
    let ends_above = last.w_over_lc >= 4.0 && last.product > SEPARABILITY_BOUND;
    let crossing = sweep
        .crossing
        .filter(|c| c.0.is_finite() && c.1.is_finite() && c.1 > 0.0);
    let products: Vec<String> = rows.iter().map(|r| format!("{:.3e}", r.product)).collect();
    let w = RunConfig::default().pump.w;
    let slope_ratio = sweep.slope * 2.0 * w * w;
    outcome(
        monotone && starts_below && ends_above && crossing.is_some(),
        format!(
            "products [{}], monotone={monotone}, start<0.25={starts_below}, end>0.25 at w/l_c={}: {ends_above}, crossing={}, slope/(1/2w^2)={slope_ratio:.4}, {:.0} s",
            products.join(", "),
            last.w_over_lc,
            crossing.map_or("none".into(), |c| format!("{:.3} +/- {:.3}", c.0, c.1)),
            start.elapsed().as_secs_f64()
        ),
    )
}

fn criterion_5() -> Check {
    let coherent = Experiment::new(RunConfig::default())
        .map_err(err)?
        .run()
        .map_err(err)?;
    let inc_exp = Experiment::new(RunConfig::default().incoherent_limit()).map_err(err)?;
    let momentum = inc_exp.momentum_distribution().map_err(err)?;
    let position = inc_exp.position_distribution().map_err(err)?;
    let incoherent = inc_exp.measure(&position, &momentum).map_err(err)?;
    let ratio = aspect_ratio(&momentum).map_err(err)?;
    let (pc, pi) = (coherent.report.product, incoherent.report.product);
    let ok_c = pc < SEPARABILITY_BOUND;
    let ok_i = pi > SEPARABILITY_BOUND;
    let ok_a = (ratio - 1.0).abs() <= 0.1;
    outcome(
        ok_c && ok_i && ok_a,
        format!(
            "coherent product {pc:.3e} ({}), incoherent product {pi:.3e} ({}), momentum aspect ratio {ratio:.3} (need 1.0 +/- 0.1: {})",
            coherent.report.verdict.as_str(),
            incoherent.report.verdict.as_str(),
            if ok_a { "ok" } else { "out of band" }
        ),
    )
}

fn criterion_6() -> Check {
    let cfg = RunConfig::default();
    let grid = cfg.grid().map_err(err)?;
    let pm = cfg.phase_matching().map_err(err)?;
    let mut worst = 0.0f64;
    let mut parts = Vec::new();
    for (label, spec) in [
        ("coherent", PumpSpec::coherent(110e-6, f64::INFINITY, k_p())),
        ("gsm", gsm(110e-6, f64::INFINITY, 55e-6)),
        ("ensemble", ensemble(2.0)),
    ] {
        let mom = joint_momentum_distribution(&spec, &pm, &grid)
            .map_err(err)?
            .rotated_correlation();
        let pos = joint_position_distribution(&spec, &pm, &grid)
            .map_err(err)?
            .rotated_correlation();
        worst = worst.max(mom.abs()).max(pos.abs());
        parts.push(format!("{label}: q {mom:.1e}, x {pos:.1e}"));
    }
    outcome(worst < 0.02, format!("{} (tol 2e-2)", parts.join("; ")))
}

fn criterion_7() -> Check {
    let grid = Grid1D::new(1024, 2e-6).map_err(err)?;
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let values: Vec<Complex64> = (0..1024)
        .map(|_| Complex64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5))
        .collect();
    let field = Field1D::new(grid, Domain::Position, values).map_err(err)?;
    let spectrum = fft_physical(&field).map_err(err)?;
    let back = ifft_physical(&spectrum).map_err(err)?;
    let scale = field.values.iter().map(|v| v.norm()).fold(0.0, f64::max);
    let round_trip = field
        .values
        .iter()
        .zip(&back.values)
        .map(|(a, b)| (a - b).norm())
        .fold(0.0, f64::max)
        / scale;
    let parseval = (spectrum.power() / field.power() - 1.0).abs();

    let s = 40e-6;
    let gauss = Field1D::from_fn(grid, Domain::Position, |x| {
        Complex64::new((-x * x / (4.0 * s * s)).exp(), 0.0)
    })
    .map_err(err)?;
    let g = fft_physical(&gauss).map_err(err)?;
    let sigma_q = variance_of(&g.intensity(), &grid.qs()).map_err(err)?.sqrt();
    let width = (sigma_q * 2.0 * s - 1.0).abs();

    // Gate: the central lobe of χ(q₋) at q₊ = 0. The paraxial degenerate
    // mismatch depends on q₋ only; the exact one picks up a (q₊/k)² term,
    // reported for the q₊ support of the coherent and incoherent-limit pumps.
    let cfg = RunConfig::default();
    let pm = cfg.phase_matching().map_err(err)?;
    let edge = 2.0 * PI / pm.length;
    let minus_max = 2.0 * (2.0 * pm.k_degenerate() * edge).sqrt();
    let lobe_gap = |plus_max: f64| -> Result<f64, String> {
        let mut worst = 0.0f64;
        let (ma, mb) = if plus_max > 0.0 {
            (101, 401)
        } else {
            (1, 4001)
        };
        for a in 0..ma {
            let qp = if ma > 1 {
                plus_max * (2.0 * a as f64 / (ma - 1) as f64 - 1.0)
            } else {
                0.0
            };
            for b in 0..mb {
                let qm = minus_max * (2.0 * b as f64 / (mb - 1) as f64 - 1.0);
                let (qs, qi) = ((qp + qm) / SQRT_2, (qp - qm) / SQRT_2);
                let par = phase_mismatch(qs, qi, &pm, MismatchMode::Paraxial).map_err(err)?;
                if par.abs() > edge || par.abs() < 1e-2 * edge {
                    continue;
                }
                let exact = phase_mismatch(qs, qi, &pm, MismatchMode::Exact).map_err(err)?;
                worst = worst.max((exact / par - 1.0).abs());
            }
        }
        Ok(worst)
    };
    let support = |c: &RunConfig| {
        gsm_delta_p_plus_sq(c.pump.w, c.pump.radius, c.pump.coherence_length, c.k_p())
            .map(|v| 4.0 * v.sqrt())
    };
    let mismatch = lobe_gap(0.0)?;
    let coherent_gap = lobe_gap(support(&cfg).map_err(err)?)?;
    let incoherent_gap = lobe_gap(support(&cfg.incoherent_limit()).map_err(err)?)?;
    outcome(
        round_trip <= 1e-10 && parseval <= 1e-9 && width <= 1e-3 && mismatch <= 1e-3,
        format!(
            "round trip {round_trip:.1e} (tol 1e-10), Parseval {parseval:.1e} (tol 1e-9), Fourier width {width:.1e} (tol 1e-3), exact vs paraxial over the q- lobe {mismatch:.1e} (tol 1e-3; with q+ over 4 sigma of the coherent pump {coherent_gap:.1e}, of the incoherent-limit pump {incoherent_gap:.1e})"
        ),
    )
}

/// Poisson-sampled Gaussian scan with a peak of `peak` counts.
fn synthetic_scan(sigma: f64, peak: f64, seed: u64) -> Vec<ScanPoint> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dwell = 60.0;
    (0..41)
        .map(|k| {
            let u = (k as f64 - 20.0) / 5.0 * sigma;
            let mean = peak * (-u * u / (2.0 * sigma * sigma)).exp();
            let counts = Poisson::new(mean.max(1e-12))
                .map(|p| p.sample(&mut rng))
                .unwrap_or(0.0);
            ScanPoint {
                coord: u,
                counts,
                dwell,
            }
        })
        .collect()
}

fn byte_identical_reruns() -> Result<(bool, String), String> {
    let tmp = std::env::temp_dir().join(format!("spdc-acceptance-{}", std::process::id()));
    let run = |dir: &Path, args: &[&str]| -> Result<(), String> {
        let status = Command::new(env!("CARGO_BIN_EXE_spdc-sim"))
            .args(args)
            .args(["--out", dir.to_str().unwrap(), "--quiet"])
            .status()
            .map_err(err)?;
        status
            .success()
            .then_some(())
            .ok_or(format!("{args:?} failed"))
    };
    let (a, b) = (tmp.join("a"), tmp.join("b"));
    for dir in [&a, &b] {
        run(dir, &["report", "--seed", "11"])?;
        run(dir, &["figure", "--which", "fig2", "--seed", "11"])?;
    }
    let mut names: Vec<_> = std::fs::read_dir(&a)
        .map_err(err)?
        .map(|e| e.map(|e| e.file_name()))
        .collect::<Result<_, _>>()
        .map_err(err)?;
    names.sort();
    let identical = names
        .iter()
        .all(|n| std::fs::read(a.join(n)).ok() == std::fs::read(b.join(n)).ok());
    let _ = std::fs::remove_dir_all(&tmp);
    Ok((
        identical && !names.is_empty(),
        format!("{} files identical={identical}", names.len()),
    ))
}

fn criterion_8() -> Check {
    let sigma = 3.2e3;
    let trials = 100usize;
    let rel: Vec<f64> = (0..trials)
        .map(|seed| {
            let fit = fit_gaussian(&synthetic_scan(sigma, 300.0, seed as u64)).map_err(err)?;
            Ok(fit.sigma / sigma - 1.0)
        })
        .collect::<Result<_, String>>()?;
    let within = rel.iter().filter(|r| r.abs() < 0.05).count();
    let mean_bias = rel.iter().sum::<f64>() / trials as f64;
    let fit_ok = within * 100 >= 95 * trials && mean_bias.abs() < 0.01;

    // Standard errors from groups of m fitted variances.
    let mut seed = 1000;
    let mut mean_sem = |m: usize, groups: usize| -> Result<f64, String> {
        let mut total = 0.0;
        for _ in 0..groups {
            let vars: Vec<f64> = (0..m)
                .map(|_| {
                    seed += 1;
                    fit_gaussian(&synthetic_scan(sigma, 300.0, seed))
                        .map(|f| f.variance())
                        .map_err(err)
                })
                .collect::<Result<_, _>>()?;
            total += bootstrap_error(&vars).map_err(err)?.sem;
        }
        Ok(total / groups as f64)
    };
    let ratio = mean_sem(5, 60)? / mean_sem(20, 60)?;
    let expected = 2.0;
    let scaling_ok = ratio > expected / 1.5 && ratio < expected * 1.5;

    let (rerun_ok, rerun) = byte_identical_reruns()?;
    outcome(
        fit_ok && scaling_ok && rerun_ok,
        format!(
            "sigma within 5% in {within}/{trials} fits at peak 300 (need >= 95), mean bias {mean_bias:+.2e}; sem(m=5)/sem(m=20) = {ratio:.2} (expect 2 within x1.5); reruns: {rerun}"
        ),
    )
}

fn main() {
    let criteria: [Criterion; 8] = [
        (
            "1 closed-form angular variance vs double-transform oracle",
            criterion_1,
        ),
        ("2 Monte-Carlo q+ variance vs closed form", criterion_2),
        ("3 x- variance independent of coherence", criterion_3),
        ("4 entanglement transition in the sweep", criterion_4),
        ("5 coherent and incoherent verdicts", criterion_5),
        ("6 rotated coordinates factorize", criterion_6),
        ("7 numerics suite", criterion_7),
        ("8 estimator suite", criterion_8),
    ];
    // Optional criterion numbers on the command line restrict the run.
    let only: Vec<String> = std::env::args()
        .skip(1)
        .filter(|a| !a.starts_with('-'))
        .collect();
    let mut failures = 0;
    let mut ran = 0;
    for (name, check) in criteria {
        if !only.is_empty()
            && !only
                .iter()
                .any(|o| name.split(' ').next() == Some(o.as_str()))
        {
            continue;
        }
        ran += 1;
        let start = Instant::now();
        let (pass, detail) = match check() {
            Ok(o) => (o.pass, o.detail),
            Err(e) => (false, format!("error: {e}")),
        };
        if !pass {
            failures += 1;
        }
        println!(
            "{} criterion {name} [{:.1} s]: {detail}",
            if pass { "PASS" } else { "FAIL" },
            start.elapsed().as_secs_f64()
        );
    }
    println!("acceptance: {} of {ran} criteria passed", ran - failures);
    if failures > 0 {
        std::process::exit(1);
    }
}
