use darkstate_core::scans::{linear_grid, log_grid};
use darkstate_core::units::mhz_to_rad;
use darkstate_core::{
    FitOptions, FitParam, FourLevelParams, FreeMask, Model, Solver, SpectrumModel, SpectrumParams,
    detuning_scan, fit_spectrum, model_spectrum, power_scan, synthesize_spectrum,
};

#[test]
fn detuning_scan_matches_single_point_solves() {
    let model = SpectrumModel::default();
    let p = model
        .eight_level(&SpectrumParams::calibration(33.0, &model), 0.0)
        .unwrap();
    let grid: Vec<f64> = [-30.0, -14.7, -5.0, 3.0, 20.0].map(mhz_to_rad).to_vec();
    let scan = detuning_scan(&p, &grid).unwrap();
    for (d, v) in grid.iter().zip(&scan.values) {
        let single = Model::EightLevel(darkstate_core::EightLevelParams {
            detuning_ir: *d,
            ..p
        })
        .fluorescence(Solver::Numerical)
        .unwrap();
        assert!((single.value - v).abs() <= 1e-12 * v.abs().max(1e-3), "{} vs {v}", single.value);
    }
}

#[test]
fn spectrum_is_scaled_scan() {
    let model = SpectrumModel::default();
    let params = SpectrumParams {
        scale: 2e4,
        background: 15.0,
        ..SpectrumParams::calibration(23.0, &model)
    };
    let det = linear_grid(-40.0, 20.0, 13).unwrap();
    let spectrum = model_spectrum(&model, &params, &det).unwrap();
    let p = model.eight_level(&params, 0.0).unwrap();
    let scan = detuning_scan(&p, &det.iter().map(|&d| mhz_to_rad(d)).collect::<Vec<_>>()).unwrap();
    for (s, v) in spectrum.iter().zip(&scan.values) {
        assert!((s - (2e4 * v + 15.0)).abs() < 1e-8 * s);
    }
}

#[test]
fn closed_form_and_numerical_power_scans_agree() {
    let gt = mhz_to_rad(23.1);
    let p = FourLevelParams::equal_branching(gt, 0.3 * gt, 0.05 * gt, 0.065 * gt, 0.935 * gt);
    let grid = log_grid(1e-4 * gt * gt, 10.0 * gt * gt, 61).unwrap();
    let a = power_scan(&Model::FourLevel(p), &grid, Solver::Auto).unwrap();
    let n = power_scan(&Model::FourLevel(p), &grid, Solver::Numerical).unwrap();
    for (x, y) in a.values.iter().zip(&n.values) {
        assert!((x - y).abs() <= 1e-8 * x);
    }
    assert_eq!(a.argmax_index, n.argmax_index);
}

#[test]
fn coarse_spectrum_round_trip() {
    let model = SpectrumModel::default();
    let truth = SpectrumParams {
        scale: 5e4,
        ..SpectrumParams::calibration(23.0, &model)
    };
    let det = linear_grid(-50.0, 30.0, 61).unwrap();
    let data = synthesize_spectrum(&model, &truth, &det, 0.01, 17).unwrap();
    let start = SpectrumParams {
        b_mg: 27.0,
        scale: 4.2e4,
        ..truth
    };
    let free = FreeMask::of(&[FitParam::BField, FitParam::RabiIr, FitParam::Scale]);
    let r = fit_spectrum(&data, &model, &start, free, &FitOptions::default()).unwrap();
    assert!(r.converged);
    assert!((r.params.b_mg / 23.0 - 1.0).abs() < 0.05, "{}", r.params.b_mg);
    let sigma = r.uncertainty(FitParam::BField).unwrap();
    assert!(sigma > 0.0 && sigma < 5.0);
}
