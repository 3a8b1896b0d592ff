use proptest::prelude::*;
use spdc_core::config::ModelKind;
use spdc_core::pump::{gsm_delta_p_plus_sq, PumpModel};
use spdc_core::spdc::{joint_momentum_distribution, joint_position_distribution, sections_rotated};
use spdc_core::{fit_profile, Error, Experiment, Grid1D, PumpSpec, RunConfig, ScanMode, Verdict};

fn gsm(l_c: f64, n_realizations: usize) -> PumpSpec {
    PumpSpec {
        w: 110e-6,
        radius: f64::INFINITY,
        k_p: RunConfig::default().k_p(),
        model: PumpModel::GaussianSchell {
            coherence_length: l_c,
            delta_phi: 110e-6,
            n_realizations,
            seed: 4,
        },
    }
}

#[test]
fn gsm_momentum_section_matches_closed_form_variance() {
    let cfg = RunConfig::default();
    let grid = cfg.grid().unwrap();
    let pm = cfg.phase_matching().unwrap();
    for l_c in [220e-6, 55e-6, 27.5e-6] {
        let spec = gsm(l_c, 1);
        let sec =
            sections_rotated(&joint_momentum_distribution(&spec, &pm, &grid).unwrap()).unwrap();
        let fitted = fit_profile(&sec.plus_axis, &sec.plus, 0.0)
            .unwrap()
            .variance();
        let closed = gsm_delta_p_plus_sq(spec.w, spec.radius, l_c, spec.k_p).unwrap();
        assert!(
            (fitted / closed - 1.0).abs() < 1e-3,
            "l_c={l_c}: {fitted} vs {closed}"
        );
    }
}

#[test]
fn position_and_momentum_masses_agree_for_a_partially_coherent_pump() {
    let cfg = RunConfig::default();
    let grid = Grid1D::new(512, 2e-6).unwrap();
    let pm = cfg.phase_matching().unwrap();
    let spec = gsm(55e-6, 12);
    let pos = joint_position_distribution(&spec, &pm, &grid).unwrap();
    let mom = joint_momentum_distribution(&spec, &pm, &grid).unwrap();
    // The momentum side uses the analytic beam, the position side a finite
    // ensemble, so masses agree only to the ensemble's power scatter.
    assert!((pos.total_mass() / mom.total_mass() - 1.0).abs() < 0.05);
}

#[test]
fn end_to_end_verdicts_bracket_the_bound() {
    let mut cfg = RunConfig::default();
    cfg.grid.n = 512;
    cfg.pump.n_realizations = 16;
    cfg.scan.repeats = 2;
    let coherent = Experiment::new(cfg.clone()).unwrap().run().unwrap();
    assert_eq!(coherent.report.verdict, Verdict::Entangled);

    cfg.pump.model = ModelKind::Ensemble;
    cfg.pump.phi_0 = 12.0;
    let broad = Experiment::new(cfg).unwrap().run().unwrap();
    assert!(broad.report.product > coherent.report.product * 100.0);
    assert_eq!(broad.report.verdict, Verdict::NotDemonstrated);
}

#[test]
fn scan_records_follow_the_schedule() {
    let mut cfg = RunConfig::default();
    cfg.grid.n = 512;
    cfg.scan.points = 21;
    let exp = Experiment::new(cfg).unwrap();
    let pos = exp.position_distribution().unwrap();
    let recs = exp.scan(&pos, ScanMode::AntiDiagonal, 0).unwrap();
    assert_eq!(recs.len(), 21);
    assert!(recs
        .iter()
        .all(|r| r.d_s == -r.d_i && r.mode == ScanMode::AntiDiagonal));
    let coords: Vec<f64> = recs.iter().map(|r| r.scan_coordinate()).collect();
    assert!(coords.windows(2).all(|w| w[1] > w[0]));
}

#[test]
fn config_errors_name_the_offending_key() {
    let e = RunConfig::from_toml_str("[crystal]\nlength = 0.0\n").unwrap_err();
    assert!(
        matches!(&e, Error::Config { path, .. } if path == "crystal.length"),
        "{e}"
    );
    let e = RunConfig::from_toml_str("[pump]\nmodel = \"laser\"\n").unwrap_err();
    assert!(
        matches!(&e, Error::Config { path, .. } if path == "pump.model"),
        "{e}"
    );
    let e = RunConfig::from_toml_str("[grid]\nn = 1024\nspacing = 1e-6\n").unwrap_err();
    assert!(e.is_config_error());
    assert!(e.to_string().contains("spacing"), "{e}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn config_round_trips_through_toml(
        w in 60e-6..200e-6f64,
        phi_0 in 0.0..6.0f64,
        seed in any::<u64>(),
        slit in 20e-6..200e-6f64,
        repeats in 1usize..9,
        model in prop_oneof![Just(ModelKind::Coherent), Just(ModelKind::Ensemble)],
    ) {
        let mut cfg = RunConfig::default();
        cfg.pump.w = w;
        cfg.pump.phi_0 = phi_0;
        cfg.pump.seed = seed;
        cfg.pump.model = model;
        cfg.scan.slit_width = slit;
        cfg.scan.repeats = repeats;
        let back = RunConfig::from_toml_str(&cfg.to_toml_string()).unwrap();
        prop_assert_eq!(back, cfg);
    }

    #[test]
    fn momentum_distribution_is_symmetric_under_exchange(l_c in 30e-6..400e-6f64) {
        let cfg = RunConfig::default();
        let grid = Grid1D::new(256, 4e-6).unwrap();
        let pm = cfg.phase_matching().unwrap();
        let d = joint_momentum_distribution(&gsm(l_c, 1), &pm, &grid).unwrap();
        let peak = d.peak().2;
        for s in (0..256).step_by(17) {
            for i in (0..256).step_by(13) {
                prop_assert!((d.get(s, i) - d.get(i, s)).abs() <= 1e-12 * peak);
            }
        }
    }
}

#[test]
fn sweep_slope_tracks_the_beam_width() {
    let mut cfg = RunConfig::default();
    cfg.grid.n = 512;
    cfg.pump.n_realizations = 120;
    cfg.scan.repeats = 3;
    let sweep = Experiment::new(cfg.clone())
        .unwrap()
        .sweep_over(&[0.0, 4.0, 8.0])
        .unwrap();
    let expected = 1.0 / (2.0 * cfg.pump.w * cfg.pump.w);
    assert!(
        (sweep.slope / expected - 1.0).abs() < 0.1,
        "slope {} vs {expected}",
        sweep.slope
    );
}
