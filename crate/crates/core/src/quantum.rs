//! Dense complex linear algebra shared by the rest of the crate.
//!
//! Vectorization is column stacking: entry `(i, j)` of an `N x N` matrix maps
//! to index `j * N + i`. With this convention
//! `vec(A X B) = (Bᵀ ⊗ A) vec(X)`, so left multiplication by `A` is `I ⊗ A` and
//! right multiplication by `B` is `Bᵀ ⊗ I`.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64;

use crate::error::{Error, Result};

pub type C64 = Complex64;
pub type CMatrix = DMatrix<C64>;
pub type CVector = DVector<C64>;

pub const HERMITIAN_TOL: f64 = 1e-10;
pub const TRACE_TOL: f64 = 1e-10;
pub const POSITIVITY_TOL: f64 = 1e-9;

/// Tolerance accepted by [`eig_hermitian`] on its input.
pub const EIG_HERMITIAN_TOL: f64 = 1e-8;

pub(crate) fn c(re: f64) -> C64 {
    C64::new(re, 0.0)
}

pub fn zeros(n: usize) -> CMatrix {
    CMatrix::zeros(n, n)
}

pub fn identity(n: usize) -> CMatrix {
    CMatrix::identity(n, n)
}

/// `|i⟩⟨j|` in an `n`-dimensional space.
pub fn ket_bra(n: usize, i: usize, j: usize) -> CMatrix {
    let mut m = zeros(n);
    m[(i, j)] = c(1.0);
    m
}

/// Projector onto the span of the given basis states.
pub fn projector(n: usize, states: &[usize]) -> CMatrix {
    let mut m = zeros(n);
    for &k in states {
        m[(k, k)] = c(1.0);
    }
    m
}

pub fn commutator(a: &CMatrix, b: &CMatrix) -> CMatrix {
    a * b - b * a
}

pub fn anticommutator(a: &CMatrix, b: &CMatrix) -> CMatrix {
    a * b + b * a
}

pub fn trace(m: &CMatrix) -> C64 {
    m.diagonal().sum()
}

/// Largest `|M_ij - conj(M_ji)|`.
pub fn hermiticity_error(m: &CMatrix) -> f64 {
    let n = m.nrows();
    let mut worst = 0.0f64;
    for j in 0..n {
        for i in 0..=j {
            worst = worst.max((m[(i, j)] - m[(j, i)].conj()).norm());
        }
    }
    worst
}

pub fn hermitian_part(m: &CMatrix) -> CMatrix {
    (m + m.adjoint()) * c(0.5)
}

fn ensure_square(m: &CMatrix) -> Result<usize> {
    if m.nrows() != m.ncols() {
        return Err(Error::NotSquare {
            rows: m.nrows(),
            cols: m.ncols(),
        });
    }
    Ok(m.nrows())
}

/// Stacks the columns of `m` into a single vector.
pub fn vectorize(m: &CMatrix) -> CVector {
    CVector::from_column_slice(m.as_slice())
}

/// Inverse of [`vectorize`] for an `n x n` matrix.
pub fn devectorize(v: &CVector, n: usize) -> Result<CMatrix> {
    if v.len() != n * n {
        return Err(Error::DimensionMismatch {
            expected: n * n,
            found: v.len(),
        });
    }
    Ok(CMatrix::from_column_slice(n, n, v.as_slice()))
}

/// Superoperator of `X -> A X`.
pub fn left_mult_superop(a: &CMatrix) -> Result<CMatrix> {
    let n = ensure_square(a)?;
    Ok(identity(n).kronecker(a))
}

/// Superoperator of `X -> X A`.
pub fn right_mult_superop(a: &CMatrix) -> Result<CMatrix> {
    let n = ensure_square(a)?;
    Ok(a.transpose().kronecker(&identity(n)))
}

/// Adds `coef · (Bᵀ ⊗ A)`, the superoperator of `X -> A X B`, to `m`.
/// Zero entries of `A` and `B` are skipped, so sparse operators are cheap.
pub fn add_sandwich_superop(m: &mut CMatrix, a: &CMatrix, b: &CMatrix, coef: C64) -> Result<()> {
    let n = ensure_square(a)?;
    if b.nrows() != n || b.ncols() != n || m.nrows() != n * n || m.ncols() != n * n {
        return Err(Error::DimensionMismatch {
            expected: n,
            found: b.nrows(),
        });
    }
    let nonzero = |x: &CMatrix| -> Vec<(usize, usize, C64)> {
        let mut out = Vec::new();
        for col in 0..n {
            for row in 0..n {
                let v = x[(row, col)];
                if v != C64::new(0.0, 0.0) {
                    out.push((row, col, v));
                }
            }
        }
        out
    };
    let a_nz = nonzero(a);
    for (l, j, bv) in nonzero(b) {
        // (Bᵀ)[j, l] multiplies the (j, l) block.
        let w = bv * coef;
        for &(i, k, av) in &a_nz {
            m[(j * n + i, l * n + k)] += w * av;
        }
    }
    Ok(())
}

/// Row vector `t` with `t · vec(X) = tr X`.
pub fn trace_functional(n: usize) -> CVector {
    let mut t = CVector::zeros(n * n);
    for i in 0..n {
        t[i * n + i] = c(1.0);
    }
    t
}

/// Eigen-decomposition of a Hermitian matrix.
///
/// Eigenvalues come back in ascending order; column `k` of the returned
/// matrix is the normalized eigenvector for eigenvalue `k`.
pub fn eig_hermitian(m: &CMatrix) -> Result<(Vec<f64>, CMatrix)> {
    let n = ensure_square(m)?;
    let scale = m.norm().max(1.0);
    let deviation = hermiticity_error(m);
    if deviation > EIG_HERMITIAN_TOL * scale {
        return Err(Error::NotHermitian { deviation });
    }
    let eig = SymmetricEigen::new(hermitian_part(m));
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let values = order.iter().map(|&k| eig.eigenvalues[k]).collect();
    let mut vectors = zeros(n);
    for (dst, &src) in order.iter().enumerate() {
        vectors.set_column(dst, &eig.eigenvectors.column(src));
    }
    Ok((values, vectors))
}

pub fn min_eigenvalue(m: &CMatrix) -> Result<f64> {
    let (values, _) = eig_hermitian(m)?;
    Ok(values.first().copied().unwrap_or(0.0))
}

/// Trace distance `½ ‖a − b‖₁` between two Hermitian matrices.
pub fn trace_distance(a: &DensityMatrix, b: &DensityMatrix) -> Result<f64> {
    if a.dim() != b.dim() {
        return Err(Error::DimensionMismatch {
            expected: a.dim(),
            found: b.dim(),
        });
    }
    let (values, _) = eig_hermitian(&(a.matrix() - b.matrix()))?;
    Ok(0.5 * values.iter().map(|v| v.abs()).sum::<f64>())
}

/// A Hermitian, unit-trace, positive semidefinite matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityMatrix {
    m: CMatrix,
}

impl DensityMatrix {
    pub fn new(m: CMatrix) -> Result<Self> {
        ensure_square(&m)?;
        let deviation = hermiticity_error(&m);
        if deviation > HERMITIAN_TOL {
            return Err(Error::NotHermitian { deviation });
        }
        let tr = trace(&m).re;
        if (tr - 1.0).abs() > TRACE_TOL {
            return Err(Error::TraceNotUnit { trace: tr });
        }
        let min_eigenvalue = min_eigenvalue(&m)?;
        if min_eigenvalue < -POSITIVITY_TOL {
            return Err(Error::NotPositive { min_eigenvalue });
        }
        Ok(Self { m })
    }

    /// Wraps a matrix the caller has already validated.
    pub(crate) fn from_trusted(m: CMatrix) -> Self {
        Self { m }
    }

    /// `|k⟩⟨k|`.
    pub fn basis_state(n: usize, k: usize) -> Self {
        Self { m: ket_bra(n, k, k) }
    }

    pub fn maximally_mixed(n: usize) -> Self {
        Self {
            m: identity(n) * c(1.0 / n as f64),
        }
    }

    /// Normalizes `psi` and returns `|ψ⟩⟨ψ|`.
    pub fn pure(psi: &CVector) -> Result<Self> {
        let norm = psi.norm();
        if norm == 0.0 {
            return Err(Error::TraceNotUnit { trace: 0.0 });
        }
        let psi = psi / c(norm);
        Ok(Self {
            m: &psi * psi.adjoint(),
        })
    }

    pub fn dim(&self) -> usize {
        self.m.nrows()
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.m
    }

    pub fn into_matrix(self) -> CMatrix {
        self.m
    }

    pub fn population(&self, k: usize) -> f64 {
        self.m[(k, k)].re
    }

    pub fn populations(&self) -> Vec<f64> {
        (0..self.dim()).map(|k| self.population(k)).collect()
    }

    /// `Re tr(op ρ)`.
    pub fn expectation(&self, op: &CMatrix) -> f64 {
        trace(&(op * &self.m)).re
    }
}

/// Generator of the master equation acting on column-stacked density matrices.
#[derive(Debug, Clone, PartialEq)]
pub struct Liouvillian {
    m: CMatrix,
    dim: usize,
}

impl Liouvillian {
    pub fn zeros(n: usize) -> Self {
        Self {
            m: CMatrix::zeros(n * n, n * n),
            dim: n,
        }
    }

    /// Wraps an `N² x N²` matrix.
    pub fn from_matrix(m: CMatrix) -> Result<Self> {
        let size = ensure_square(&m)?;
        let dim = (size as f64).sqrt().round() as usize;
        if dim * dim != size {
            return Err(Error::DimensionMismatch {
                expected: dim * dim,
                found: size,
            });
        }
        Ok(Self { m, dim })
    }

    /// Hilbert-space dimension `N`.
    pub fn hilbert_dim(&self) -> usize {
        self.dim
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.m
    }

    /// Frobenius norm of the generator matrix.
    pub fn norm(&self) -> f64 {
        self.m.norm()
    }

    pub fn apply(&self, x: &CMatrix) -> Result<CMatrix> {
        if x.nrows() != self.dim || x.ncols() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                found: x.nrows(),
            });
        }
        devectorize(&(&self.m * vectorize(x)), self.dim)
    }

    pub fn add(&self, other: &Liouvillian) -> Result<Liouvillian> {
        if self.dim != other.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                found: other.dim,
            });
        }
        Ok(Self {
            m: &self.m + &other.m,
            dim: self.dim,
        })
    }

    /// Matrix of the generator in the orthonormal Hermitian operator basis.
    ///
    /// The basis is `E_ii`, `(E_ij + E_ji)/√2` and `i(E_ij − E_ji)/√2` for
    /// `i < j`, placed at the column-stacking positions `(i, i)`, `(i, j)` and
    /// `(j, i)` respectively. A Hermiticity-preserving generator is real in this
    /// basis, and its singular values coincide with those of the complex matrix.
    pub fn real_representation(&self) -> DMatrix<f64> {
        let n = self.dim;
        let size = n * n;
        let basis = HermitianBasis::new(n);
        let src = self.m.as_slice();
        let mut out = DMatrix::zeros(size, size);
        for b in 0..size {
            let cb = basis.column(b);
            for a in 0..size {
                let mut sum = 0.0;
                for &(k, wa) in basis.column(a) {
                    for &(l, wb) in cb {
                        sum += (wa.conj() * src[l * size + k] * wb).re;
                    }
                }
                out[(a, b)] = sum;
            }
        }
        out
    }
}

/// Sparse description of the Hermitian operator basis used by
/// [`Liouvillian::real_representation`].
pub(crate) struct HermitianBasis {
    n: usize,
    /// At most two nonzero entries per element; the count is kept alongside.
    cols: Vec<([(usize, C64); 2], usize)>,
}

impl HermitianBasis {
    pub(crate) fn new(n: usize) -> Self {
        let r = std::f64::consts::FRAC_1_SQRT_2;
        let mut cols = vec![([(0, c(0.0)); 2], 0); n * n];
        for j in 0..n {
            for i in 0..n {
                let pos = j * n + i;
                let ij = j * n + i;
                let ji = i * n + j;
                cols[pos] = match i.cmp(&j) {
                    std::cmp::Ordering::Equal => ([(ij, c(1.0)), (ij, c(0.0))], 1),
                    std::cmp::Ordering::Less => ([(ij, c(r)), (ji, c(r))], 2),
                    // (i, j) with i > j holds i(E_ji − E_ij)/√2 for the pair j < i.
                    std::cmp::Ordering::Greater => {
                        ([(ji, C64::new(0.0, r)), (ij, C64::new(0.0, -r))], 2)
                    }
                };
            }
        }
        Self { n, cols }
    }

    pub(crate) fn column(&self, b: usize) -> &[(usize, C64)] {
        let (entries, len) = &self.cols[b];
        &entries[..*len]
    }

    /// Rebuilds the matrix whose real coordinates are `x`.
    pub(crate) fn assemble(&self, x: &DVector<f64>) -> CMatrix {
        let mut v = CVector::zeros(self.n * self.n);
        for b in 0..self.cols.len() {
            for &(k, w) in self.column(b) {
                v[k] += w * x[b];
            }
        }
        CMatrix::from_column_slice(self.n, self.n, v.as_slice())
    }

    /// Indices whose basis element is a diagonal projector `E_ii`.
    pub(crate) fn diagonal_indices(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.n).map(move |i| i * self.n + i)
    }
}
