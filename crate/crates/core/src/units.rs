//! Unit conversions used at the I/O boundary.
//!
//! Everything inside the crate works in angular frequency (rad/s). Users
//! think in MHz, kHz and milligauss, so these helpers are the only place the
//! factor of 2π appears.

use std::f64::consts::TAU;

/// Bohr magneton over Planck's constant, in MHz per gauss (CODATA).
pub const BOHR_MHZ_PER_GAUSS: f64 = 1.399_624_604;

pub fn mhz_to_rad(f_mhz: f64) -> f64 {
    TAU * f_mhz * 1e6
}

pub fn rad_to_mhz(w: f64) -> f64 {
    w / (TAU * 1e6)
}

pub fn khz_to_rad(f_khz: f64) -> f64 {
    TAU * f_khz * 1e3
}

pub fn rad_to_khz(w: f64) -> f64 {
    w / (TAU * 1e3)
}

/// Converts a squared angular frequency (rad²/s²) into (ordinary MHz)².
pub fn rad2_to_mhz2(w2: f64) -> f64 {
    w2 / (TAU * 1e6).powi(2)
}

pub fn mhz2_to_rad2(f2: f64) -> f64 {
    f2 * (TAU * 1e6).powi(2)
}

pub fn milligauss_to_gauss(b_mg: f64) -> f64 {
    b_mg * 1e-3
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn conversions_invert() {
        for f in [-14.7, 0.0, 1.5, 23.1] {
            assert!((rad_to_mhz(mhz_to_rad(f)) - f).abs() < 1e-12);
            assert!((rad_to_khz(khz_to_rad(f)) - f).abs() < 1e-12);
        }
        assert!((rad2_to_mhz2(mhz2_to_rad2(3.5)) - 3.5).abs() < 1e-12);
        assert_eq!(mhz_to_rad(1.0), khz_to_rad(1000.0));
    }
}
