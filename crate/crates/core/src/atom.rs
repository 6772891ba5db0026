//! Level schemes, angular-momentum coupling and Hamiltonians.
//!
//! Frequencies are angular (rad/s). Every Hamiltonian is written in the frame
//! rotating with the lasers, with the excited manifold as the energy reference:
//! a lower manifold driven with detuning `Δ` (laser minus transition frequency)
//! sits at `+Δ`, exactly as in the four-level matrix
//!
//! ```text
//! | Δ-δ   0    0   Ω/2 |
//! |  0    Δ    0   Ω/2 |
//! |  0    0   Δ+δ  Ω/2 |
//! | Ω/2  Ω/2  Ω/2   0  |
//! ```

use std::f64::consts::{FRAC_1_SQRT_2, TAU};
use std::fmt;

use crate::error::{Error, Result};
use crate::quantum::{c, CMatrix, C64};
use crate::units;

/// Total decay rate of the calcium P1/2 manifold, ordinary MHz.
pub const CALCIUM_GAMMA_TOTAL_MHZ: f64 = 23.1;
/// Fraction of P1/2 decays that end in S1/2.
pub const CALCIUM_BRANCHING_TO_S: f64 = 0.935;

/// A half-integer quantum number stored as twice its value.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct HalfInt(i32);

impl HalfInt {
    pub const ZERO: HalfInt = HalfInt(0);

    pub const fn from_twice(twice: i32) -> Self {
        Self(twice)
    }

    pub fn new(value: f64) -> Result<Self> {
        let twice = 2.0 * value;
        if (twice - twice.round()).abs() > 1e-9 || twice.abs() > 1e6 {
            return Err(Error::InvalidAngularMomentum(format!(
                "{value} is not a multiple of 1/2"
            )));
        }
        Ok(Self(twice.round() as i32))
    }

    pub const fn twice(self) -> i32 {
        self.0
    }

    pub fn value(self) -> f64 {
        f64::from(self.0) / 2.0
    }
}

impl fmt::Display for HalfInt {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.0 % 2 == 0 {
            write!(f, "{}", self.0 / 2)
        } else {
            write!(f, "{}/2", self.0)
        }
    }
}

fn factorial(n: i32) -> f64 {
    (1..=n).fold(1.0, |acc, k| acc * f64::from(k))
}

fn check_projection(j: HalfInt, m: HalfInt) -> Result<()> {
    if j.0 < 0 {
        return Err(Error::InvalidAngularMomentum(format!("j = {j} is negative")));
    }
    if m.0.abs() > j.0 || (j.0 - m.0) % 2 != 0 {
        return Err(Error::InvalidAngularMomentum(format!(
            "m = {m} is not a projection of j = {j}"
        )));
    }
    Ok(())
}

/// Clebsch–Gordan coefficient `⟨j1 m1; j2 m2 | J M⟩` (Condon–Shortley phases).
///
/// Evaluated with Racah's closed-form sum. Returns 0 for couplings forbidden by
/// `M ≠ m1 + m2` or by the triangle rule.
pub fn clebsch_gordan(
    j1: HalfInt,
    m1: HalfInt,
    j2: HalfInt,
    m2: HalfInt,
    j: HalfInt,
    m: HalfInt,
) -> Result<f64> {
    check_projection(j1, m1)?;
    check_projection(j2, m2)?;
    check_projection(j, m)?;
    if m.0 != m1.0 + m2.0 {
        return Ok(0.0);
    }
    if j.0 > j1.0 + j2.0 || j.0 < (j1.0 - j2.0).abs() || (j1.0 + j2.0 - j.0) % 2 != 0 {
        return Ok(0.0);
    }
    // All combinations below are integers once the checks above pass.
    let h = |twice: i32| twice / 2;
    let a = h(j1.0 + j2.0 - j.0);
    let b = h(j1.0 - m1.0);
    let cc = h(j2.0 + m2.0);
    let d = h(j.0 - j2.0 + m1.0);
    let e = h(j.0 - j1.0 - m2.0);

    let prefactor = (f64::from(j.0 + 1)
        * factorial(h(j.0 + j1.0 - j2.0))
        * factorial(h(j.0 - j1.0 + j2.0))
        * factorial(a)
        / factorial(h(j1.0 + j2.0 + j.0) + 1))
    .sqrt()
        * (factorial(h(j.0 + m.0))
            * factorial(h(j.0 - m.0))
            * factorial(h(j1.0 - m1.0))
            * factorial(h(j1.0 + m1.0))
            * factorial(h(j2.0 - m2.0))
            * factorial(h(j2.0 + m2.0)))
        .sqrt();

    let k_min = 0.max(-d).max(-e);
    let k_max = a.min(b).min(cc);
    let mut sum = 0.0;
    for k in k_min..=k_max {
        let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
        sum += sign
            / (factorial(k)
                * factorial(a - k)
                * factorial(b - k)
                * factorial(cc - k)
                * factorial(d + k)
                * factorial(e + k));
    }
    Ok(prefactor * sum)
}

/// A fine-structure manifold with its Zeeman sublevels.
#[derive(Debug, Clone, PartialEq)]
pub struct Manifold {
    pub label: String,
    pub j: HalfInt,
    pub g_lande: f64,
}

impl Manifold {
    pub fn new(label: impl Into<String>, j: HalfInt, g_lande: f64) -> Result<Self> {
        if j.0 < 0 {
            return Err(Error::InvalidAngularMomentum(format!("j = {j} is negative")));
        }
        Ok(Self {
            label: label.into(),
            j,
            g_lande,
        })
    }

    pub fn dim(&self) -> usize {
        (self.j.0 + 1) as usize
    }

    /// Projections `-J, -J+1, …, +J`.
    pub fn sublevels(&self) -> Vec<HalfInt> {
        (0..=self.j.0).map(|k| HalfInt(2 * k - self.j.0)).collect()
    }
}

/// Landé factors of the S1/2, P1/2 and D3/2 manifolds.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LandeFactors {
    pub s: f64,
    pub p: f64,
    pub d: f64,
}

impl Default for LandeFactors {
    fn default() -> Self {
        Self {
            s: 2.0,
            p: 2.0 / 3.0,
            d: 4.0 / 5.0,
        }
    }
}

/// Manifolds in basis order; sublevel `k` of manifold `i` has index
/// `offset(i) + k`.
#[derive(Debug, Clone, PartialEq)]
pub struct LevelScheme {
    manifolds: Vec<Manifold>,
}

impl LevelScheme {
    pub const S: usize = 0;
    pub const P: usize = 1;
    pub const D: usize = 2;

    pub fn new(manifolds: Vec<Manifold>) -> Self {
        Self { manifolds }
    }

    /// S1/2, P1/2, D3/2 of a singly charged calcium ion, in that order.
    pub fn calcium(g: LandeFactors) -> Self {
        Self::new(vec![
            Manifold {
                label: "S1/2".into(),
                j: HalfInt(1),
                g_lande: g.s,
            },
            Manifold {
                label: "P1/2".into(),
                j: HalfInt(1),
                g_lande: g.p,
            },
            Manifold {
                label: "D3/2".into(),
                j: HalfInt(3),
                g_lande: g.d,
            },
        ])
    }

    pub fn manifolds(&self) -> &[Manifold] {
        &self.manifolds
    }

    pub fn manifold(&self, i: usize) -> &Manifold {
        &self.manifolds[i]
    }

    pub fn offset(&self, i: usize) -> usize {
        self.manifolds[..i].iter().map(Manifold::dim).sum()
    }

    pub fn dim(&self) -> usize {
        self.manifolds.iter().map(Manifold::dim).sum()
    }

    pub fn index(&self, manifold: usize, m: HalfInt) -> Option<usize> {
        let man = self.manifolds.get(manifold)?;
        man.sublevels()
            .iter()
            .position(|&s| s == m)
            .map(|k| self.offset(manifold) + k)
    }

    /// Basis indices belonging to one manifold.
    pub fn indices(&self, manifold: usize) -> std::ops::Range<usize> {
        let start = self.offset(manifold);
        start..start + self.manifolds[manifold].dim()
    }
}

/// Magnetic field along the quantization axis.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MagneticField {
    magnitude_mg: f64,
}

impl MagneticField {
    pub fn from_milligauss(magnitude_mg: f64) -> Result<Self> {
        if !(magnitude_mg >= 0.0) || !magnitude_mg.is_finite() {
            return Err(Error::InvalidParameter {
                name: "b_field_mg",
                value: magnitude_mg,
                reason: "must be finite and non-negative",
            });
        }
        Ok(Self { magnitude_mg })
    }

    pub fn milligauss(&self) -> f64 {
        self.magnitude_mg
    }

    /// Field that produces a Larmor frequency `larmor_hz` for Landé factor `g`.
    pub fn for_larmor(larmor_hz: f64, g_lande: f64) -> Result<Self> {
        let gauss = larmor_hz.abs() / (g_lande * units::BOHR_MHZ_PER_GAUSS * 1e6);
        Self::from_milligauss(gauss * 1e3)
    }
}

/// Zeeman splitting between adjacent sublevels, `2π · g · (μB/h) · B`, in rad/s.
pub fn larmor_splitting(b: MagneticField, g_lande: f64) -> f64 {
    TAU * g_lande * units::BOHR_MHZ_PER_GAUSS * 1e6 * units::milligauss_to_gauss(b.magnitude_mg)
}

/// Field amplitudes `(a₋₁, a₀, a₊₁)` in the spherical basis.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Polarization {
    amplitudes: [C64; 3],
}

impl Polarization {
    pub const NORM_TOL: f64 = 1e-12;

    pub fn new(minus: C64, pi: C64, plus: C64) -> Result<Self> {
        let pol = Self {
            amplitudes: [minus, pi, plus],
        };
        let norm = pol.norm_sqr();
        if (norm - 1.0).abs() > Self::NORM_TOL {
            return Err(Error::InvalidPolarization { norm });
        }
        Ok(pol)
    }

    /// Linear along the quantization axis.
    pub fn pi() -> Self {
        Self {
            amplitudes: [c(0.0), c(1.0), c(0.0)],
        }
    }

    pub fn sigma_plus() -> Self {
        Self {
            amplitudes: [c(0.0), c(0.0), c(1.0)],
        }
    }

    pub fn sigma_minus() -> Self {
        Self {
            amplitudes: [c(1.0), c(0.0), c(0.0)],
        }
    }

    /// Amplitude of spherical component `q ∈ {-1, 0, 1}`.
    pub fn amplitude(&self, q: i32) -> C64 {
        self.amplitudes[(q + 1) as usize]
    }

    pub fn amplitudes(&self) -> [C64; 3] {
        self.amplitudes
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amplitudes.iter().map(C64::norm_sqr).sum()
    }
}

/// Linear polarization along x, perpendicular to a field along z:
/// `x̂ = (ê₋₁ − ê₊₁)/√2`.
pub fn linear_perp_polarization() -> Polarization {
    Polarization {
        amplitudes: [c(FRAC_1_SQRT_2), c(0.0), c(-FRAC_1_SQRT_2)],
    }
}

/// One laser driving a dipole transition between two manifolds of a scheme.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LaserDrive {
    pub lower: usize,
    pub upper: usize,
    /// Rabi frequency Ω, rad/s.
    pub rabi: f64,
    /// Laser minus transition frequency, rad/s.
    pub detuning: f64,
    pub polarization: Polarization,
}

/// Parameters of the three-ground-sublevel, one-excited-state model.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FourLevelParams {
    pub omega: f64,
    pub delta_laser: f64,
    pub delta_zeeman: f64,
    /// Decay rates into the ground sublevels m = -1, 0, +1.
    pub gamma_m: [f64; 3],
    /// Decay out of the manifold followed by instantaneous repumping.
    pub gamma_s: f64,
}

impl FourLevelParams {
    /// Equal branching `Γ_m = Γ_D / 3`.
    pub fn equal_branching(
        omega: f64,
        delta_laser: f64,
        delta_zeeman: f64,
        gamma_d: f64,
        gamma_s: f64,
    ) -> Self {
        Self {
            omega,
            delta_laser,
            delta_zeeman,
            gamma_m: [gamma_d / 3.0; 3],
            gamma_s,
        }
    }

    pub fn gamma_d(&self) -> f64 {
        self.gamma_m.iter().sum()
    }

    /// `Γ_T = Γ_S + Σ Γ_m`.
    pub fn gamma_total(&self) -> f64 {
        self.gamma_s + self.gamma_d()
    }

    pub fn validate_rates(&self) -> Result<()> {
        for &g in self.gamma_m.iter().chain(std::iter::once(&self.gamma_s)) {
            if !(g >= 0.0) || !g.is_finite() {
                return Err(Error::InvalidParameter {
                    name: "gamma",
                    value: g,
                    reason: "decay rates must be finite and non-negative",
                });
            }
        }
        Ok(())
    }

    pub const EXCITED: usize = 3;
}

/// Parameters of the S1/2–P1/2–D3/2 calcium model.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EightLevelParams {
    pub rabi_uv: f64,
    pub rabi_ir: f64,
    pub detuning_uv: f64,
    pub detuning_ir: f64,
    pub b_field: MagneticField,
    /// P→S decay rate.
    pub gamma_sp: f64,
    /// P→D decay rate.
    pub gamma_dp: f64,
    pub polarization_uv: Polarization,
    pub polarization_ir: Polarization,
    pub g_factors: LandeFactors,
}

impl EightLevelParams {
    /// Calibration operating point: `(Ω_DP/Γ_DP)² = 2.27`,
    /// `(Ω_SP/Γ_SP)² = 1.19`, `Δ_UV/2π = −14.7 MHz`, IR on resonance, both
    /// lasers linearly polarized perpendicular to the field.
    pub fn calibration(b_field: MagneticField) -> Self {
        let gamma_sp = units::mhz_to_rad(CALCIUM_GAMMA_TOTAL_MHZ * CALCIUM_BRANCHING_TO_S);
        let gamma_dp =
            units::mhz_to_rad(CALCIUM_GAMMA_TOTAL_MHZ * (1.0 - CALCIUM_BRANCHING_TO_S));
        Self {
            rabi_uv: 1.19f64.sqrt() * gamma_sp,
            rabi_ir: 2.27f64.sqrt() * gamma_dp,
            detuning_uv: units::mhz_to_rad(-14.7),
            detuning_ir: 0.0,
            b_field,
            gamma_sp,
            gamma_dp,
            polarization_uv: linear_perp_polarization(),
            polarization_ir: linear_perp_polarization(),
            g_factors: LandeFactors::default(),
        }
    }

    pub fn gamma_total(&self) -> f64 {
        self.gamma_sp + self.gamma_dp
    }

    pub fn scheme(&self) -> LevelScheme {
        LevelScheme::calcium(self.g_factors)
    }

    pub fn drives(&self) -> [LaserDrive; 2] {
        [
            LaserDrive {
                lower: LevelScheme::S,
                upper: LevelScheme::P,
                rabi: self.rabi_uv,
                detuning: self.detuning_uv,
                polarization: self.polarization_uv,
            },
            LaserDrive {
                lower: LevelScheme::D,
                upper: LevelScheme::P,
                rabi: self.rabi_ir,
                detuning: self.detuning_ir,
                polarization: self.polarization_ir,
            },
        ]
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("gamma_sp", self.gamma_sp), ("gamma_dp", self.gamma_dp)] {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::InvalidParameter {
                    name,
                    value: v,
                    reason: "decay rates must be positive",
                });
            }
        }
        for (name, v) in [("rabi_uv", self.rabi_uv), ("rabi_ir", self.rabi_ir)] {
            if !(v >= 0.0) || !v.is_finite() {
                return Err(Error::InvalidParameter {
                    name,
                    value: v,
                    reason: "Rabi frequencies must be non-negative",
                });
            }
        }
        for pol in [self.polarization_uv, self.polarization_ir] {
            let norm = pol.norm_sqr();
            if (norm - 1.0).abs() > Polarization::NORM_TOL {
                return Err(Error::InvalidPolarization { norm });
            }
        }
        Ok(())
    }
}

/// Clebsch–Gordan amplitudes `⟨J_l m; 1 q | J_u m+q⟩` for every allowed pair,
/// returned as `(lower basis index, upper basis index, q, coefficient)`.
pub fn dipole_coefficients(
    scheme: &LevelScheme,
    lower: usize,
    upper: usize,
) -> Vec<(usize, usize, i32, f64)> {
    let one = HalfInt(2);
    let lo = scheme.manifold(lower);
    let up = scheme.manifold(upper);
    let mut out = Vec::new();
    for (a, &ml) in lo.sublevels().iter().enumerate() {
        for (b, &mu) in up.sublevels().iter().enumerate() {
            let q2 = mu.0 - ml.0;
            if q2.abs() > 2 {
                continue;
            }
            let q = HalfInt(q2);
            // Arguments are valid projections by construction.
            let cg = clebsch_gordan(lo.j, ml, one, q, up.j, mu).unwrap_or(0.0);
            if cg != 0.0 {
                out.push((
                    scheme.offset(lower) + a,
                    scheme.offset(upper) + b,
                    q2 / 2,
                    cg,
                ));
            }
        }
    }
    out
}

/// Laser couplings `(Ω/2) Σ_q a_q c(m, q)` between lower and upper sublevels,
/// with coefficients rescaled so the strongest transition of the channel has
/// coefficient 1. Returned as `(lower index, upper index, matrix element)`.
pub fn drive_couplings(scheme: &LevelScheme, drive: &LaserDrive) -> Vec<(usize, usize, C64)> {
    let coeffs = dipole_coefficients(scheme, drive.lower, drive.upper);
    let strongest = coeffs.iter().map(|t| t.3.abs()).fold(0.0, f64::max);
    if strongest == 0.0 {
        return Vec::new();
    }
    coeffs
        .into_iter()
        .filter_map(|(l, u, q, cg)| {
            let amp = drive.polarization.amplitude(q) * (0.5 * drive.rabi * cg / strongest);
            (amp.norm() != 0.0).then_some((l, u, amp))
        })
        .collect()
}

/// Diagonal Zeeman energies `m · g · larmor_unit` for every basis state.
///
/// `larmor_unit` is `2π (μB/h) B` in rad/s and may carry a sign.
pub fn zeeman_shifts(scheme: &LevelScheme, larmor_unit: f64) -> Vec<f64> {
    scheme
        .manifolds()
        .iter()
        .flat_map(|man| {
            man.sublevels()
                .into_iter()
                .map(move |m| m.value() * man.g_lande * larmor_unit)
        })
        .collect()
}

/// Four-level Hamiltonian in rad/s, basis `m = -1, 0, +1, e`.
pub fn build_h4(p: &FourLevelParams) -> CMatrix {
    let mut h = CMatrix::zeros(4, 4);
    let d = p.delta_laser;
    h[(0, 0)] = c(d - p.delta_zeeman);
    h[(1, 1)] = c(d);
    h[(2, 2)] = c(d + p.delta_zeeman);
    for g in 0..3 {
        h[(g, 3)] = c(p.omega / 2.0);
        h[(3, g)] = c(p.omega / 2.0);
    }
    h
}

/// Eight-level Hamiltonian in rad/s, basis
/// `S(-1/2, +1/2), P(-1/2, +1/2), D(-3/2 … +3/2)`.
pub fn build_h8(p: &EightLevelParams) -> Result<CMatrix> {
    p.validate()?;
    let scheme = p.scheme();
    let n = scheme.dim();
    let unit = larmor_splitting(p.b_field, 1.0);
    let mut h = CMatrix::zeros(n, n);
    for (k, shift) in zeeman_shifts(&scheme, unit).into_iter().enumerate() {
        h[(k, k)] = c(shift);
    }
    for drive in p.drives() {
        for k in scheme.indices(drive.lower) {
            h[(k, k)] += c(drive.detuning);
        }
        for (l, u, amp) in drive_couplings(&scheme, &drive) {
            h[(l, u)] += amp;
            h[(u, l)] += amp.conj();
        }
    }
    Ok(h)
}
