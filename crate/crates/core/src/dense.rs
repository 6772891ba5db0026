//! Row-major LU factorization with partial pivoting.
//!
//! Unlike the nalgebra decomposition it solves with the transpose directly
//! from the packed factors, which the condition estimate needs.

use nalgebra::DMatrix;

pub(crate) struct Lu {
    n: usize,
    /// Unit lower factor below the diagonal, upper factor on and above it.
    packed: Vec<f64>,
    /// Row `k` of `L U` is row `perm[k]` of the original matrix.
    perm: Vec<usize>,
}

impl Lu {
    /// `None` when an exactly zero pivot appears.
    pub(crate) fn factor(a: &DMatrix<f64>) -> Option<Self> {
        let n = a.nrows();
        let mut packed = vec![0.0; n * n];
        for (j, col) in a.column_iter().enumerate() {
            for (i, &v) in col.iter().enumerate() {
                packed[i * n + j] = v;
            }
        }
        let mut perm: Vec<usize> = (0..n).collect();
        for k in 0..n {
            let p = (k..n)
                .max_by(|&x, &y| packed[x * n + k].abs().total_cmp(&packed[y * n + k].abs()))?;
            if packed[p * n + k] == 0.0 {
                return None;
            }
            if p != k {
                for j in 0..n {
                    packed.swap(k * n + j, p * n + j);
                }
                perm.swap(k, p);
            }
            let (top, rest) = packed.split_at_mut((k + 1) * n);
            let pivot_row = &top[k * n..];
            let pivot = pivot_row[k];
            for row in rest.chunks_exact_mut(n) {
                let f = row[k] / pivot;
                row[k] = f;
                if f != 0.0 {
                    for (r, &u) in row[k + 1..].iter_mut().zip(&pivot_row[k + 1..]) {
                        *r -= f * u;
                    }
                }
            }
        }
        Some(Self { n, packed, perm })
    }

    pub(crate) fn dim(&self) -> usize {
        self.n
    }

    /// Solves `A x = b`.
    pub(crate) fn solve(&self, b: &[f64]) -> Vec<f64> {
        let n = self.n;
        let mut x: Vec<f64> = self.perm.iter().map(|&p| b[p]).collect();
        for i in 0..n {
            let row = &self.packed[i * n..i * n + i];
            let s: f64 = row.iter().zip(&x[..i]).map(|(l, y)| l * y).sum();
            x[i] -= s;
        }
        for i in (0..n).rev() {
            let row = &self.packed[i * n..(i + 1) * n];
            let s: f64 = row[i + 1..].iter().zip(&x[i + 1..]).map(|(u, y)| u * y).sum();
            x[i] = (x[i] - s) / row[i];
        }
        x
    }

    /// Solves `Aᵀ x = b`.
    pub(crate) fn solve_transpose(&self, b: &[f64]) -> Vec<f64> {
        let n = self.n;
        // Aᵀ = Uᵀ Lᵀ P, so solve Uᵀ w = b, then Lᵀ z = w, then undo P.
        let mut w = b.to_vec();
        for i in 0..n {
            let row = &self.packed[i * n..(i + 1) * n];
            w[i] /= row[i];
            let wi = w[i];
            for (t, &u) in w[i + 1..].iter_mut().zip(&row[i + 1..]) {
                *t -= u * wi;
            }
        }
        for i in (0..n).rev() {
            let row = &self.packed[i * n..i * n + i];
            let zi = w[i];
            for (t, &l) in w[..i].iter_mut().zip(row) {
                *t -= l * zi;
            }
        }
        let mut x = vec![0.0; n];
        for (k, &p) in self.perm.iter().enumerate() {
            x[p] = w[k];
        }
        x
    }
}
