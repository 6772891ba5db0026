//! Dissipators, Liouvillian assembly and time evolution.

use crate::atom::{
    build_h4, build_h8, dipole_coefficients, EightLevelParams, FourLevelParams, LevelScheme,
};
use crate::error::{Error, Result};
use crate::quantum::{
    add_sandwich_superop, c, devectorize, identity, hermitian_part, hermiticity_error, ket_bra, left_mult_superop,
    right_mult_superop, trace, vectorize, CMatrix, DensityMatrix, Liouvillian, C64,
};

/// A Lindblad jump operator `C = √rate · matrix`.
#[derive(Debug, Clone, PartialEq)]
pub struct JumpOperator {
    pub matrix: CMatrix,
    pub rate: f64,
}

impl JumpOperator {
    pub fn new(matrix: CMatrix, rate: f64) -> Result<Self> {
        if !(rate >= 0.0) || !rate.is_finite() {
            return Err(Error::InvalidParameter {
                name: "rate",
                value: rate,
                reason: "jump rates must be finite and non-negative",
            });
        }
        if matrix.nrows() != matrix.ncols() {
            return Err(Error::NotSquare {
                rows: matrix.nrows(),
                cols: matrix.ncols(),
            });
        }
        Ok(Self { matrix, rate })
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    /// The operator with its rate folded in.
    pub fn scaled(&self) -> CMatrix {
        &self.matrix * c(self.rate.sqrt())
    }
}

/// Superoperator of `ρ ↦ −i[H, ρ]`.
pub fn hamiltonian_superop(h: &CMatrix) -> Result<Liouvillian> {
    let n = h.nrows();
    let mut m = CMatrix::zeros(n * n, n * n);
    add_commutator(&mut m, h)?;
    Liouvillian::from_matrix(m)
}

fn add_commutator(m: &mut CMatrix, h: &CMatrix) -> Result<()> {
    let id = identity(h.nrows());
    add_sandwich_superop(m, h, &id, C64::new(0.0, -1.0))?;
    add_sandwich_superop(m, &id, h, C64::new(0.0, 1.0))
}

/// `Σ_k (C_k ρ C_k† − ½{C_k†C_k, ρ})` as a superoperator.
pub fn lindblad_dissipator(jumps: &[JumpOperator], n: usize) -> Result<Liouvillian> {
    let id = identity(n);
    let mut m = CMatrix::zeros(n * n, n * n);
    for jump in jumps {
        if jump.dim() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                found: jump.dim(),
            });
        }
        if jump.rate == 0.0 {
            continue;
        }
        let op = jump.scaled();
        let op_dag = op.adjoint();
        let cdc = &op_dag * &op;
        add_sandwich_superop(&mut m, &op, &op_dag, c(1.0))?;
        add_sandwich_superop(&mut m, &cdc, &id, c(-0.5))?;
        add_sandwich_superop(&mut m, &id, &cdc, c(-0.5))?;
    }
    Liouvillian::from_matrix(m)
}

/// Decay term of the four-level model:
///
/// `−(Γ_T/2){|e⟩⟨e|, ρ} + Σ_m Γ_m |m⟩⟨e|ρ|e⟩⟨m| + Γ_S |e⟩⟨e|ρ|e⟩⟨e|`.
pub fn dissipator_4level(p: &FourLevelParams) -> Result<Liouvillian> {
    p.validate_rates()?;
    let e = FourLevelParams::EXCITED;
    let pe = ket_bra(4, e, e);
    let left_pe = left_mult_superop(&pe)?;
    let right_pe = right_mult_superop(&pe)?;
    let mut m = (&left_pe + &right_pe) * c(-p.gamma_total() / 2.0);
    for (g, &rate) in p.gamma_m.iter().enumerate() {
        let down = ket_bra(4, g, e);
        m += left_mult_superop(&down)? * right_mult_superop(&down.adjoint())? * c(rate);
    }
    m += &left_pe * &right_pe * c(p.gamma_s);
    Liouvillian::from_matrix(m)
}

/// Jump operators equivalent to [`dissipator_4level`]: `√Γ_m |m⟩⟨e|` and the
/// dephasing jump `√Γ_S |e⟩⟨e|`.
pub fn jump_operators_4level(p: &FourLevelParams) -> Result<Vec<JumpOperator>> {
    p.validate_rates()?;
    let e = FourLevelParams::EXCITED;
    let mut jumps = Vec::with_capacity(4);
    for (g, &rate) in p.gamma_m.iter().enumerate() {
        jumps.push(JumpOperator::new(ket_bra(4, g, e), rate)?);
    }
    jumps.push(JumpOperator::new(ket_bra(4, e, e), p.gamma_s)?);
    Ok(jumps)
}

/// Spontaneous decay of the P manifold into S and D, one operator per
/// polarization component and channel.
///
/// `C_{ch,q} = √Γ_ch Σ_m ⟨J_g m; 1 q | 1/2 m+q⟩ |g m⟩⟨P m+q|`; the squared
/// coefficients out of each P sublevel sum to one per channel.
pub fn jump_operators_8level(p: &EightLevelParams) -> Result<Vec<JumpOperator>> {
    for (name, v) in [("gamma_sp", p.gamma_sp), ("gamma_dp", p.gamma_dp)] {
        if !(v > 0.0) || !v.is_finite() {
            return Err(Error::InvalidParameter {
                name,
                value: v,
                reason: "decay rates must be positive",
            });
        }
    }
    let scheme = p.scheme();
    let n = scheme.dim();
    let mut jumps = Vec::with_capacity(6);
    for (lower, rate) in [(LevelScheme::S, p.gamma_sp), (LevelScheme::D, p.gamma_dp)] {
        let coeffs = dipole_coefficients(&scheme, lower, LevelScheme::P);
        for q in -1..=1 {
            let mut m = CMatrix::zeros(n, n);
            for &(g, e, qq, cg) in &coeffs {
                if qq == q {
                    m[(g, e)] = c(cg);
                }
            }
            jumps.push(JumpOperator::new(m, rate)?);
        }
    }
    Ok(jumps)
}

/// `L = −i[H, ·] + Σ_k D[C_k]`.
pub fn assemble_liouvillian(h: &CMatrix, jumps: &[JumpOperator]) -> Result<Liouvillian> {
    let n = h.nrows();
    if h.ncols() != n {
        return Err(Error::NotSquare {
            rows: n,
            cols: h.ncols(),
        });
    }
    assemble_with_dissipator(h, &lindblad_dissipator(jumps, n)?)
}

/// `L = −i[H, ·] + dissipator`.
pub fn assemble_with_dissipator(h: &CMatrix, dissipator: &Liouvillian) -> Result<Liouvillian> {
    if h.nrows() != dissipator.hilbert_dim() || h.ncols() != h.nrows() {
        return Err(Error::DimensionMismatch {
            expected: dissipator.hilbert_dim(),
            found: h.nrows(),
        });
    }
    let mut m = dissipator.matrix().clone();
    add_commutator(&mut m, h)?;
    Liouvillian::from_matrix(m)
}

pub fn four_level_liouvillian(p: &FourLevelParams) -> Result<Liouvillian> {
    assemble_with_dissipator(&build_h4(p), &dissipator_4level(p)?)
}

pub fn eight_level_liouvillian(p: &EightLevelParams) -> Result<Liouvillian> {
    assemble_liouvillian(&build_h8(p)?, &jump_operators_8level(p)?)
}

/// Dissipator of the eight-level model. It depends only on the decay rates,
/// so sweeps over laser parameters can build it once.
pub fn dissipator_8level(p: &EightLevelParams) -> Result<Liouvillian> {
    lindblad_dissipator(&jump_operators_8level(p)?, p.scheme().dim())
}

/// Corrections applied while integrating.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct EvolveDiagnostics {
    pub steps: usize,
    pub step_size: f64,
    /// Largest `|tr ρ − 1|` produced by a raw integration step.
    pub max_trace_drift: f64,
    /// Sum of the per-step trace drifts.
    pub total_trace_drift: f64,
    /// Largest `max |ρ_ij − conj(ρ_ji)|` removed by re-Hermitization.
    pub max_hermiticity_correction: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Evolution {
    pub rho: DensityMatrix,
    pub diagnostics: EvolveDiagnostics,
}

const DIVERGENCE_DRIFT: f64 = 1e-3;

/// Integrates `d vec(ρ)/dt = L vec(ρ)` with classical fourth-order Runge–Kutta.
///
/// The step is `dt` shrunk so an integer number of steps lands on `t_final`.
/// After each step the state is re-Hermitized and its trace reset to one; the
/// size of those corrections is reported in the diagnostics.
pub fn evolve(rho0: &DensityMatrix, l: &Liouvillian, t_final: f64, dt: f64) -> Result<Evolution> {
    let n = l.hilbert_dim();
    if rho0.dim() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            found: rho0.dim(),
        });
    }
    if !(dt > 0.0) || !dt.is_finite() {
        return Err(Error::InvalidParameter {
            name: "dt",
            value: dt,
            reason: "time step must be positive",
        });
    }
    if !(t_final >= 0.0) || !t_final.is_finite() {
        return Err(Error::InvalidParameter {
            name: "t_final",
            value: t_final,
            reason: "final time must be non-negative",
        });
    }
    let steps = (t_final / dt).ceil() as usize;
    let mut diagnostics = EvolveDiagnostics {
        steps,
        step_size: if steps == 0 { 0.0 } else { t_final / steps as f64 },
        ..Default::default()
    };
    let h = c(diagnostics.step_size);
    let gen = l.matrix();
    let mut v = vectorize(rho0.matrix());
    for _ in 0..steps {
        let k1 = gen * &v;
        let k2 = gen * (&v + &k1 * (h * 0.5));
        let k3 = gen * (&v + &k2 * (h * 0.5));
        let k4 = gen * (&v + &k3 * h);
        v += (k1 + (k2 + k3) * c(2.0) + k4) * (h / 6.0);

        let raw = devectorize(&v, n)?;
        let drift = (trace(&raw).re - 1.0).abs();
        if !drift.is_finite() || drift > DIVERGENCE_DRIFT {
            return Err(Error::UnstableIntegration { trace_drift: drift });
        }
        diagnostics.max_trace_drift = diagnostics.max_trace_drift.max(drift);
        diagnostics.total_trace_drift += drift;
        diagnostics.max_hermiticity_correction = diagnostics
            .max_hermiticity_correction
            .max(hermiticity_error(&raw) / 2.0);
        let mut fixed = hermitian_part(&raw);
        fixed /= c(trace(&fixed).re);
        v = vectorize(&fixed);
    }
    Ok(Evolution {
        rho: DensityMatrix::from_trusted(devectorize(&v, n)?),
        diagnostics,
    })
}

/// Default step `0.01 / Γ_T`.
pub fn default_step(gamma_total: f64) -> f64 {
    0.01 / gamma_total
}
