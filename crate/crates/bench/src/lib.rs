//! Benchmark fixtures shared by the criterion targets.

use darkstate_core::{EightLevelParams, FourLevelParams, SpectrumModel, SpectrumParams};

/// Four-level point at `Ω = Γ_T`, `δ = 0.1 Γ_T`, on resonance.
pub fn four_level_point() -> FourLevelParams {
    let gamma_t = 2.0 * std::f64::consts::PI * 23.1e6;
    FourLevelParams::equal_branching(gamma_t, 0.0, 0.1 * gamma_t, 0.065 * gamma_t, 0.935 * gamma_t)
}

/// Eight-level calibration point at 39 mG, 10 MHz below the IR resonance.
pub fn eight_level_point() -> EightLevelParams {
    let model = SpectrumModel::default();
    let p = SpectrumParams::calibration(39.0, &model);
    model.eight_level(&p, -10.0).expect("calibration parameters are valid")
}
