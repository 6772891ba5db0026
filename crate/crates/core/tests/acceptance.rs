//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits with a
//! non-zero status when any criterion fails.

use std::f64::consts::TAU;
use std::time::{Duration, Instant};

use darkstate_core::atom::{
    linear_perp_polarization, larmor_splitting, EightLevelParams, FourLevelParams, LandeFactors,
    MagneticField, CALCIUM_BRANCHING_TO_S, CALCIUM_GAMMA_TOTAL_MHZ,
};
use darkstate_core::fit::{
    fit_spectrum, synthesize_spectrum, FitOptions, FitParam, FreeMask, SpectrumModel,
    SpectrumParams,
};
use darkstate_core::master::{default_step, eight_level_liouvillian, evolve, four_level_liouvillian};
use darkstate_core::quantum::{ket_bra, min_eigenvalue, projector, trace_distance, DensityMatrix};
use darkstate_core::scans::{
    detuning_scan, linear_fit, linear_grid, log_grid, log_grid_per_decade, power_scan,
    threshold_slope, Model, Solver,
};
use darkstate_core::steady::{omega2_max, pe_analytic, steady_state};
use darkstate_core::units::{mhz_to_rad, rad_to_mhz};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn within(elapsed: Duration, limit_s: f64) -> bool {
    elapsed.as_secs_f64() < limit_s
}

fn gamma_t() -> f64 {
    mhz_to_rad(CALCIUM_GAMMA_TOTAL_MHZ)
}

/// Four-level parameters in units of Γ_T.
fn four(omega: f64, det: f64, delta: f64, gamma_s: f64) -> FourLevelParams {
    FourLevelParams::equal_branching(omega, det, delta, 1.0 - gamma_s, gamma_s)
}

fn criterion_1() -> Outcome {
    let start = Instant::now();
    let mut worst: f64 = 0.0;
    let mut count = 0;
    for gs in [0.0, 0.935] {
        for omega in [0.1, 0.5, 1.0, 2.0, 5.0] {
            for delta in [0.01, 0.05, 0.1, 0.5, 1.0] {
                for det in [0.0, 0.5, -0.5, 2.0, -2.0] {
                    let p = four(omega, det, delta, gs);
                    let l = four_level_liouvillian(&p).unwrap();
                    let num = steady_state(&l, &ket_bra(4, 3, 3)).unwrap().p_e;
                    let ana = pe_analytic(&p).unwrap().value;
                    worst = worst.max(((num - ana) / ana).abs());
                    count += 1;
                }
            }
        }
    }
    let elapsed = start.elapsed();
    outcome(
        worst < 1e-8 && within(elapsed, 10.0),
        format!("{count} points, worst relative deviation {worst:.2e} (limit 1e-8), {elapsed:.2?} (limit 10 s)"),
    )
}

fn criterion_2() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut worst_steps: f64 = 0.0;
    for _ in 0..10 {
        let delta = rng.random_range(0.005..1.0) * if rng.random_bool(0.5) { 1.0 } else { -1.0 };
        let det = rng.random_range(-2.0..2.0);
        let p = four(1.0, det, delta, CALCIUM_BRANCHING_TO_S);
        let target = omega2_max(delta, det, 1.0);
        let grid = log_grid_per_decade(target * 1e-2, target * 1e2, 200).unwrap();
        let step = (grid[1] / grid[0]).ln();
        let scan = power_scan(&Model::FourLevel(p), &grid, Solver::Numerical).unwrap();
        let found = grid[scan.argmax_index];
        worst_steps = worst_steps.max((found / target).ln().abs() / step);
    }
    let elapsed = start.elapsed();
    outcome(
        worst_steps <= 1.0 && within(elapsed, 30.0),
        format!(
            "10 random (δ, Δ), worst grid argmax offset {worst_steps:.2} steps at 200/decade (limit 1), {elapsed:.2?} (limit 30 s)"
        ),
    )
}

fn criterion_3() -> Outcome {
    let gt = gamma_t();
    let p = FourLevelParams::equal_branching(1.0, 0.0, 0.0, gt * (1.0 - CALCIUM_BRANCHING_TO_S), gt * CALCIUM_BRANCHING_TO_S);
    let larmor = linear_grid(5e3, 50e3, 10).unwrap();
    let lo = (2.0f64 / 3.0).sqrt() * TAU * 5e3 * gt / 30.0;
    let hi = (2.0f64 / 3.0).sqrt() * TAU * 50e3 * gt * 30.0;
    let grid = log_grid_per_decade(lo, hi, 200).unwrap();
    let s = threshold_slope(&Model::FourLevel(p), &larmor, &grid, Solver::Numerical).unwrap();
    let expect = (2.0f64 / 3.0).sqrt() * CALCIUM_GAMMA_TOTAL_MHZ;
    let rel = (s.slope_mhz - expect) / expect;
    outcome(
        rel.abs() < 0.02,
        format!(
            "slope {:.3} MHz vs √(2/3)·Γ_T/2π = {expect:.3} MHz ({:+.2}%, limit ±2%), R² {:.6}",
            s.slope_mhz,
            rel * 100.0,
            s.r_squared
        ),
    )
}

fn criterion_4() -> Outcome {
    let start = Instant::now();
    let base = EightLevelParams::calibration(MagneticField::from_milligauss(30.0).unwrap());
    let fields_mg = linear_grid(10.0, 45.0, 8).unwrap();
    let g_d = LandeFactors::default().d;
    let larmor: Vec<f64> = fields_mg
        .iter()
        .map(|&b| larmor_splitting(MagneticField::from_milligauss(b).unwrap(), g_d) / TAU)
        .collect();
    let grid = log_grid(TAU * TAU * 1e10, TAU * TAU * 1e14, 150).unwrap();
    let s = threshold_slope(&Model::EightLevel(base), &larmor, &grid, Solver::Numerical).unwrap();
    let elapsed = start.elapsed();
    let rel = (s.slope_mhz - 17.9) / 17.9;
    let pass = s.r_squared > 0.99 && rel.abs() < 0.10 && !s.peak_at_edge && within(elapsed, 300.0);
    outcome(
        pass,
        format!(
            "slope {:.2} MHz vs 17.9 MHz ({:+.1}%, limit ±10%), R² {:.5} (limit 0.99), Γ_SP/2π = {:.4} MHz, Γ_DP/2π = {:.4} MHz, 8 fields × 150 powers in {elapsed:.2?} (limit 300 s)",
            s.slope_mhz,
            rel * 100.0,
            s.r_squared,
            rad_to_mhz(base.gamma_sp),
            rad_to_mhz(base.gamma_dp),
        ),
    )
}

fn criterion_5() -> Outcome {
    let gt = gamma_t();
    let g_d = LandeFactors::default().d;
    let fields = [20.0, 27.0, 33.0, 40.0];
    let deltas: Vec<f64> = fields
        .iter()
        .map(|&b| larmor_splitting(MagneticField::from_milligauss(b).unwrap(), g_d))
        .collect();
    let lo = omega2_max(deltas[0], 0.0, gt) * 1e-3;
    let hi = omega2_max(deltas[3], 0.0, gt) * 1e2;
    let grid = log_grid_per_decade(lo, hi, 200).unwrap();
    let decade: Vec<usize> = (0..grid.len()).filter(|&k| grid[k] <= 10.0 * grid[0]).collect();
    let mut peaks = Vec::new();
    let mut ok = true;
    let mut worst_r2: f64 = 1.0;
    for &delta in &deltas {
        let p = FourLevelParams::equal_branching(
            1.0,
            0.0,
            delta,
            gt * (1.0 - CALCIUM_BRANCHING_TO_S),
            gt * CALCIUM_BRANCHING_TO_S,
        );
        let scan = power_scan(&Model::FourLevel(p), &grid, Solver::Numerical).unwrap();
        let xs: Vec<f64> = decade.iter().map(|&k| grid[k]).collect();
        let ys: Vec<f64> = decade.iter().map(|&k| scan.values[k]).collect();
        let r2 = linear_fit(&xs, &ys).unwrap().r_squared;
        worst_r2 = worst_r2.min(r2);
        let k = scan.argmax_index;
        let decreasing = scan.values[k..].windows(2).all(|w| w[1] < w[0]);
        ok &= r2 > 0.999 && !scan.peak_at_edge && decreasing;
        peaks.push(scan.argmax_axis);
    }
    let ordered = peaks.windows(2).all(|w| w[1] > w[0]);
    let peaks_mhz2: Vec<String> = peaks.iter().map(|p| format!("{:.3}", p / (TAU * TAU) * 1e-12)).collect();
    outcome(
        ok && ordered,
        format!(
            "four-level curves at {fields:?} mG: lowest-decade R² ≥ {worst_r2:.6} (limit 0.999), peaks Ω²/4π² = [{}] MHz², increasing with B: {ordered}",
            peaks_mhz2.join(", ")
        ),
    )
}

fn criterion_6() -> Outcome {
    let model = SpectrumModel::default();
    let grid_mhz = linear_grid(-60.0, 40.0, 401).unwrap();
    let grid: Vec<f64> = grid_mhz.iter().map(|&d| mhz_to_rad(d)).collect();
    let mut ok = true;
    let mut notes = Vec::new();
    for b in [39.0, 33.0, 23.0, 20.0] {
        let p = model
            .eight_level(&SpectrumParams::calibration(b, &model), 0.0)
            .unwrap();
        let scan = detuning_scan(&p, &grid).unwrap();
        let minima = scan.local_minima();
        let single = minima.len() == 1 && (grid_mhz[minima[0]] + 14.7).abs() < 2.0;
        let depth = minima
            .first()
            .map(|&k| 1.0 - scan.values[k] / scan.max_value)
            .unwrap_or(0.0);
        ok &= single && depth > 0.2;
        notes.push(format!(
            "{b} mG: {} minimum at {:?} MHz, depth {:.0}%",
            minima.len(),
            minima.iter().map(|&k| grid_mhz[k]).collect::<Vec<_>>(),
            depth * 100.0
        ));
    }
    let p = model
        .eight_level(&SpectrumParams::calibration(390.0, &model), 0.0)
        .unwrap();
    let high = detuning_scan(&p, &grid).unwrap().local_minima().len();
    ok &= high >= 2;
    notes.push(format!("390 mG: {high} minima (need ≥ 2)"));
    outcome(ok, notes.join("; "))
}

fn criterion_7() -> (Outcome, Outcome) {
    let start = Instant::now();
    let model = SpectrumModel::default();
    let grid = linear_grid(-50.0, 30.0, 201).unwrap();
    let free = FreeMask::of(&[
        FitParam::BField,
        FitParam::RabiIr,
        FitParam::Scale,
        FitParam::Background,
    ]);
    let fields = [(39.0, 1.0), (33.0, 1.0), (23.0, 1.0), (20.0, 2.0)];
    let trials_per_field = 25;
    let mut within_5 = 0;
    let mut omega_within_10 = 0;
    let mut total = 0;
    let mut rms_notes = Vec::new();
    let mut rms_ok = true;
    for (fi, &(b, quoted)) in fields.iter().enumerate() {
        let mut sq = 0.0;
        for k in 0..trials_per_field {
            let seed = (1000 * fi + k) as u64;
            let truth = SpectrumParams {
                scale: 5e4,
                ..SpectrumParams::calibration(b, &model)
            };
            let data = synthesize_spectrum(&model, &truth, &grid, 0.01, seed).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
            let mut initial = truth;
            for p in free.free() {
                initial.set(p, truth.get(p) * (1.0 + rng.random_range(-0.2..=0.2)));
            }
            let r = fit_spectrum(&data, &model, &initial, free, &FitOptions::default()).unwrap();
            let err = r.params.b_mg - b;
            sq += err * err;
            total += 1;
            if (err / b).abs() <= 0.05 {
                within_5 += 1;
            }
            if (r.params.rabi_ir_mhz / truth.rabi_ir_mhz - 1.0).abs() <= 0.10 {
                omega_within_10 += 1;
            }
        }
        let rms = (sq / trials_per_field as f64).sqrt();
        rms_ok &= rms <= quoted;
        rms_notes.push(format!("{b} mG: {rms:.2} (quoted {quoted})"));
    }
    let elapsed = start.elapsed();
    let main = outcome(
        within_5 * 100 >= 95 * total && within(elapsed, 600.0),
        format!(
            "B within 5% in {within_5}/{total} fits (limit ≥ 95%), Ω_DP within 10% in {omega_within_10}/{total}, {elapsed:.2?} (limit 600 s)"
        ),
    );
    let quoted = outcome(rms_ok, format!("RMS field error per generating field {}", rms_notes.join(", ")));
    (main, quoted)
}

fn random_eight(rng: &mut impl Rng) -> EightLevelParams {
    let gamma_sp = mhz_to_rad(CALCIUM_GAMMA_TOTAL_MHZ * CALCIUM_BRANCHING_TO_S);
    let gamma_dp = mhz_to_rad(CALCIUM_GAMMA_TOTAL_MHZ * (1.0 - CALCIUM_BRANCHING_TO_S));
    EightLevelParams {
        rabi_uv: gamma_sp * rng.random_range(0.3..2.0),
        rabi_ir: gamma_dp * rng.random_range(0.5..3.0),
        detuning_uv: mhz_to_rad(rng.random_range(-30.0..0.0)),
        detuning_ir: mhz_to_rad(rng.random_range(-30.0..30.0)),
        b_field: MagneticField::from_milligauss(rng.random_range(5.0..100.0)).unwrap(),
        gamma_sp,
        gamma_dp,
        polarization_uv: linear_perp_polarization(),
        polarization_ir: linear_perp_polarization(),
        g_factors: LandeFactors::default(),
    }
}

fn criterion_8() -> (Outcome, Outcome) {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let chunks = 10;
    let mut worst_drift_rate: f64 = 0.0;
    let mut worst_negativity: f64 = 0.0;
    let mut matched = 0;
    let mut worst_distance: f64 = 0.0;
    for set in 0..50 {
        let (l, projector_e, gt) = if set % 2 == 0 {
            let p = FourLevelParams {
                omega: rng.random_range(0.1..3.0),
                delta_laser: rng.random_range(-2.0..2.0),
                delta_zeeman: rng.random_range(0.05..1.0),
                gamma_m: [
                    rng.random_range(0.05..0.5),
                    rng.random_range(0.05..0.5),
                    rng.random_range(0.05..0.5),
                ],
                gamma_s: rng.random_range(0.0..1.0),
            };
            (four_level_liouvillian(&p).unwrap(), ket_bra(4, 3, 3), p.gamma_total())
        } else {
            let p = random_eight(&mut rng);
            (eight_level_liouvillian(&p).unwrap(), projector(8, &[2, 3]), p.gamma_total())
        };
        let n = l.hilbert_dim();
        let t_final = 50.0 / gt;
        let mut rho = DensityMatrix::maximally_mixed(n);
        let mut drift = 0.0;
        for _ in 0..chunks {
            let out = evolve(&rho, &l, t_final / chunks as f64, default_step(gt)).unwrap();
            drift += out.diagnostics.total_trace_drift;
            rho = out.rho;
            worst_negativity = worst_negativity.min(min_eigenvalue(rho.matrix()).unwrap());
        }
        worst_drift_rate = worst_drift_rate.max(drift / 50.0);
        let ss = steady_state(&l, &projector_e).unwrap();
        let d = trace_distance(&rho, &ss.rho).unwrap();
        worst_distance = worst_distance.max(d);
        if d <= 1e-6 {
            matched += 1;
        }
    }
    let invariants = outcome(
        worst_drift_rate <= 1e-9 && worst_negativity >= -1e-7,
        format!(
            "50 sets: trace drift {worst_drift_rate:.1e} per Γ_T⁻¹ (limit 1e-9), smallest eigenvalue {worst_negativity:.1e} (limit −1e-7)"
        ),
    );
    let relaxation = outcome(
        matched == 50,
        format!(
            "ρ(50/Γ_T) within 1e-6 trace distance of the steady state for {matched}/50 sets, worst {worst_distance:.2e}"
        ),
    );
    (invariants, relaxation)
}

fn criterion_9() -> Outcome {
    let mut worst: (f64, f64) = (f64::INFINITY, f64::NEG_INFINITY);
    for (omega, delta, gs) in [(1.0, 0.1, 0.0), (0.3, 0.01, 0.935), (2.0, 0.5, 0.5), (5.0, 1.0, 0.2)] {
        let det = (1e3 * (1.0 + 3.0 * f64::powi(omega, 4) / (delta * delta)) / 4.0f64).sqrt();
        let r = pe_analytic(&four(omega, 2.0 * det, delta, gs)).unwrap().value
            / pe_analytic(&four(omega, det, delta, gs)).unwrap().value;
        worst = (worst.0.min(r), worst.1.max(r));
    }
    outcome(
        worst.0 >= 0.2475 && worst.1 <= 0.2525,
        format!("ratio range [{:.5}, {:.5}] (limit [0.2475, 0.2525])", worst.0, worst.1),
    )
}

fn main() {
    // Criterion numbers on the command line restrict the run; anything else
    // the test runner passes is ignored.
    let only: Vec<String> = std::env::args()
        .skip(1)
        .filter(|a| a.parse::<u32>().is_ok())
        .collect();
    let wanted = |n: &str| only.is_empty() || only.iter().any(|a| a == n);
    let mut results: Vec<(&str, Outcome)> = Vec::new();
    let singles: [(&str, fn() -> Outcome); 6] = [
        ("1", criterion_1),
        ("2", criterion_2),
        ("3", criterion_3),
        ("4", criterion_4),
        ("5", criterion_5),
        ("6", criterion_6),
    ];
    for (name, run) in singles {
        if wanted(name) {
            results.push((name, run()));
        }
    }
    if wanted("7") {
        let (c7, c7b) = criterion_7();
        results.push(("7", c7));
        results.push(("7 (quoted field uncertainties)", c7b));
    }
    if wanted("8") {
        let (c8a, c8b) = criterion_8();
        results.push(("8 (trace, positivity)", c8a));
        results.push(("8 (steady-state agreement)", c8b));
    }
    if wanted("9") {
        results.push(("9", criterion_9()));
    }

    let mut failed = 0;
    for (name, o) in &results {
        println!("criterion {name}: {} | {}", if o.pass { "PASS" } else { "FAIL" }, o.detail);
        if !o.pass {
            failed += 1;
        }
    }
    println!("acceptance: {} passed, {failed} failed", results.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
