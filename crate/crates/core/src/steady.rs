//! Stationary states of a Liouvillian and the closed-form four-level results.

use nalgebra::{DMatrix, DVector};

use crate::atom::FourLevelParams;
use crate::dense::Lu;
use crate::error::{Error, Result};
use crate::quantum::{
    hermitian_part, min_eigenvalue, vectorize, CMatrix, DensityMatrix, HermitianBasis,
    Liouvillian,
};

/// Singular values below this fraction of the largest count as zero.
pub const RANK_CUTOFF: f64 = 1e-10;
/// Residual gate relative to the Frobenius norm of the generator.
pub const RESIDUAL_GATE: f64 = 1e-8;
/// Most negative eigenvalue tolerated in a returned state.
pub const NEGATIVITY_LIMIT: f64 = -1e-7;
/// Factor by which the condition estimate may undershoot `‖A⁻¹‖₁` before the
/// rank test could be fooled.
const ESTIMATE_MARGIN: f64 = 10.0;

#[derive(Debug, Clone, PartialEq)]
pub struct SteadyStateResult {
    pub rho: DensityMatrix,
    /// Population of the projector passed to [`steady_state`].
    pub p_e: f64,
    /// `‖L vec(ρ)‖`.
    pub residual: f64,
    pub nullspace_dim: usize,
    /// Set when more than one independent stationary state exists.
    pub degenerate: bool,
}

/// Solves `L vec(ρ) = 0` with `tr ρ = 1`.
///
/// The generator is first rewritten in a Hermitian operator basis, where it is
/// a real matrix. One population equation (the one with the largest diagonal
/// magnitude; these rows are linearly dependent because the trace is
/// conserved) is replaced by the trace condition and the resulting
/// inhomogeneous system is solved by LU.
///
/// The stationary subspace is one-dimensional unless more than one singular
/// value of the generator falls below `1e-10 σ_max`. The second-smallest
/// singular value is at least `σ_min(A) ≥ 1/(√n ‖A⁻¹‖₁)` for the replaced
/// system `A`. `‖A⁻¹‖₁` is estimated from the LU factors, and the singular
/// value decomposition is only computed when the bound, with a tenfold margin
/// on the estimate, does not already settle the question. A degenerate
/// generator returns the minimum-norm stationary state and sets `degenerate`.
pub fn steady_state(l: &Liouvillian, excited_projector: &CMatrix) -> Result<SteadyStateResult> {
    let n = l.hilbert_dim();
    if excited_projector.nrows() != n || excited_projector.ncols() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            found: excited_projector.nrows(),
        });
    }
    let real = l.real_representation();
    let basis = HermitianBasis::new(n);
    // Frobenius norm bounds σ_max from above.
    let sigma_bound = real.norm();
    if sigma_bound == 0.0 {
        return Err(Error::ZeroGenerator);
    }
    let (a, rhs) = trace_row_system(&real, &basis)?;
    let lu = Lu::factor(&a);
    let size = a.nrows() as f64;
    let certified = lu
        .as_ref()
        .and_then(inverse_norm1_estimate)
        .is_some_and(|est| 1.0 / (ESTIMATE_MARGIN * size.sqrt() * est) >= RANK_CUTOFF * sigma_bound);

    let nullspace_dim = if certified {
        1
    } else {
        svd_nullity(&real)
    };
    let degenerate = nullspace_dim > 1;

    let x = match &lu {
        Some(lu) if !degenerate => {
            let mut x = DVector::from_vec(lu.solve(rhs.as_slice()));
            // One round of iterative refinement.
            let r = &rhs - &a * &x;
            x += DVector::from_vec(lu.solve(r.as_slice()));
            x
        }
        _ => min_norm_stationary(&real, &basis, nullspace_dim)?,
    };

    let rho = hermitian_part(&basis.assemble(&x));
    let residual = (l.matrix() * vectorize(&rho)).norm();
    let bound = RESIDUAL_GATE * l.norm();
    if !degenerate && residual > bound {
        return Err(Error::Residual { residual, bound });
    }
    let min_population = min_eigenvalue(&rho)?;
    if min_population < NEGATIVITY_LIMIT {
        return Err(Error::NonPhysical { min_population });
    }
    let rho = DensityMatrix::from_trusted(rho);
    let p_e = rho.expectation(excited_projector).clamp(0.0, 1.0);
    Ok(SteadyStateResult {
        rho,
        p_e,
        residual,
        nullspace_dim,
        degenerate,
    })
}

/// Lower estimate of `‖A⁻¹‖₁` from the LU factors of `A` (Hager's method
/// with Higham's extra test vector). `None` if `A` is singular.
fn inverse_norm1_estimate(lu: &Lu) -> Option<f64> {
    let n = lu.dim();
    let norm1 = |v: &[f64]| v.iter().map(|x| x.abs()).sum::<f64>();
    let mut x = vec![1.0 / n as f64; n];
    let mut est = 0.0;
    let mut last_j = usize::MAX;
    for iter in 0..5 {
        let y = lu.solve(&x);
        let norm = norm1(&y);
        if !norm.is_finite() {
            return None;
        }
        if iter > 0 && norm <= est {
            break;
        }
        est = norm;
        let sign: Vec<f64> = y.iter().map(|&v| if v >= 0.0 { 1.0 } else { -1.0 }).collect();
        let z = lu.solve_transpose(&sign);
        let j = (0..n).max_by(|&a, &b| z[a].abs().total_cmp(&z[b].abs()))?;
        let zx: f64 = z.iter().zip(&x).map(|(a, b)| a * b).sum();
        if iter > 0 && (j == last_j || z[j].abs() <= zx) {
            break;
        }
        last_j = j;
        x = vec![0.0; n];
        x[j] = 1.0;
    }
    let alt: Vec<f64> = (0..n)
        .map(|i| {
            let s = if i % 2 == 0 { 1.0 } else { -1.0 };
            s * (1.0 + i as f64 / (n.max(2) - 1) as f64)
        })
        .collect();
    let alt_est = 2.0 * norm1(&lu.solve(&alt)) / (3.0 * n as f64);
    let est = est.max(alt_est);
    est.is_finite().then_some(est)
}

/// Number of singular values below `1e-10 σ_max`, at least one.
fn svd_nullity(real: &DMatrix<f64>) -> usize {
    let singular = real.clone().singular_values();
    let sigma_max = singular.max();
    singular
        .iter()
        .filter(|&&s| s < RANK_CUTOFF * sigma_max)
        .count()
        .max(1)
}

/// Dimension of the stationary subspace of `l` from its full singular value
/// spectrum.
pub fn stationary_dimension(l: &Liouvillian) -> usize {
    svd_nullity(&l.real_representation())
}

/// Generator with its largest population row replaced by a multiple of the
/// trace functional, and the matching right-hand side.
fn trace_row_system(
    real: &DMatrix<f64>,
    basis: &HermitianBasis,
) -> Result<(DMatrix<f64>, DVector<f64>)> {
    let row = basis
        .diagonal_indices()
        .max_by(|&a, &b| real[(a, a)].abs().total_cmp(&real[(b, b)].abs()))
        .ok_or(Error::SingularSystem)?;
    // Scaled to the replaced row so that A stays balanced; the singular
    // value bound holds for any scale.
    let weight = match real[(row, row)].abs() {
        w if w > 0.0 => w,
        _ => 1.0,
    };
    let mut a = real.clone();
    a.row_mut(row).fill(0.0);
    for k in basis.diagonal_indices() {
        a[(row, k)] = weight;
    }
    let mut rhs = DVector::zeros(real.nrows());
    rhs[row] = weight;
    Ok((a, rhs))
}

fn min_norm_stationary(
    real: &DMatrix<f64>,
    basis: &HermitianBasis,
    nullspace_dim: usize,
) -> Result<DVector<f64>> {
    let size = real.nrows();
    let svd = real.clone().svd(false, true);
    let v_t = svd.v_t.ok_or(Error::SingularSystem)?;
    let mut order: Vec<usize> = (0..size).collect();
    order.sort_by(|&a, &b| svd.singular_values[a].total_cmp(&svd.singular_values[b]));
    let null: Vec<DVector<f64>> = order[..nullspace_dim]
        .iter()
        .map(|&k| v_t.row(k).transpose())
        .collect();
    // Minimize ‖Σ c_k v_k‖ = ‖c‖ subject to Σ c_k tr(v_k) = 1.
    let traces: Vec<f64> = null
        .iter()
        .map(|v| basis.diagonal_indices().map(|k| v[k]).sum())
        .collect();
    let norm2: f64 = traces.iter().map(|t| t * t).sum();
    if norm2 < 1e-24 {
        return Err(Error::SingularSystem);
    }
    let mut x = DVector::zeros(size);
    for (v, t) in null.iter().zip(&traces) {
        x += v * (t / norm2);
    }
    Ok(x)
}

/// Closed-form excited population of the four-level model.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AnalyticPopulation {
    pub value: f64,
    /// True when `Ω = 0` or `δ = 0` and the value is the limit 0.
    pub limit: bool,
}

/// Excited-state population for equal branching `Γ_m = Γ_D/3`:
///
/// `p_e = { (Γ_D/Γ_T) [ (Γ_T² + 4Δ² + 8δ²/3)/Ω² + 3Ω²/(2δ²) ] + 4Γ_S/Γ_T }⁻¹`
pub fn pe_analytic(p: &FourLevelParams) -> Result<AnalyticPopulation> {
    p.validate_rates()?;
    let gamma_d = p.gamma_d();
    let spread = p
        .gamma_m
        .iter()
        .map(|g| (g - gamma_d / 3.0).abs())
        .fold(0.0, f64::max);
    if spread > 1e-12 * gamma_d.max(f64::MIN_POSITIVE) {
        return Err(Error::InvalidParameter {
            name: "gamma_m",
            value: spread,
            reason: "closed form requires equal branching into the ground sublevels",
        });
    }
    let gamma_t = p.gamma_total();
    if !(gamma_t > 0.0) {
        return Err(Error::InvalidParameter {
            name: "gamma_total",
            value: gamma_t,
            reason: "total decay rate must be positive",
        });
    }
    let (omega2, delta2, det2) = (
        p.omega * p.omega,
        p.delta_zeeman * p.delta_zeeman,
        p.delta_laser * p.delta_laser,
    );
    if omega2 == 0.0 || delta2 == 0.0 {
        return Ok(AnalyticPopulation {
            value: 0.0,
            limit: true,
        });
    }
    let bracket = (gamma_t * gamma_t + 4.0 * det2 + 8.0 * delta2 / 3.0) / omega2
        + 3.0 * omega2 / (2.0 * delta2);
    let inverse = gamma_d / gamma_t * bracket + 4.0 * p.gamma_s / gamma_t;
    Ok(AnalyticPopulation {
        value: 1.0 / inverse,
        limit: false,
    })
}

/// Squared Rabi frequency of maximum fluorescence,
/// `√(2/3) |δ| √(Γ_T² + 4Δ² + 8δ²/3)`, in rad²/s².
pub fn omega2_max(delta_zeeman: f64, detuning: f64, gamma_t: f64) -> f64 {
    (2.0f64 / 3.0).sqrt()
        * delta_zeeman.abs()
        * (gamma_t * gamma_t + 4.0 * detuning * detuning + 8.0 * delta_zeeman * delta_zeeman / 3.0)
            .sqrt()
}

/// Low-field form `√(2/3) |δ| √(Γ_T² + 4Δ²)`, valid for `|δ| ≪ Γ_T`.
pub fn omega2_max_low_field(delta_zeeman: f64, detuning: f64, gamma_t: f64) -> f64 {
    (2.0f64 / 3.0).sqrt() * delta_zeeman.abs() * (gamma_t * gamma_t + 4.0 * detuning * detuning).sqrt()
}
