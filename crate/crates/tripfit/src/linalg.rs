//! Dense LU factorization with partial pivoting.
//!
//! The value-function systems solved here are small (one state per arc of a
//! simplified network) but each factorization is reused many times: once for
//! every destination's forward solve and once per observation for the
//! transpose solves that back gradients. Both solve directions therefore run
//! off the same factors; nothing is ever factorized twice.

use crate::{Error, Result};

/// Relative pivot threshold below which the matrix is reported singular.
const PIVOT_TOL: f64 = 1e-13;

/// LU factors of a square matrix, `P A = L U`, stored packed in column-major
/// order with the row-swap sequence applied during elimination.
#[derive(Debug, Clone)]
pub struct LuFactors {
    n: usize,
    /// Combined factors: strictly lower part of L (unit diagonal implied)
    /// and full upper part of U, column-major.
    lu: Vec<f64>,
    /// Row swapped with row `k` at elimination step `k`.
    ipiv: Vec<usize>,
}

impl LuFactors {
    /// Factorizes a column-major `n x n` matrix.
    pub fn factorize(n: usize, mut a: Vec<f64>) -> Result<Self> {
        assert_eq!(a.len(), n * n, "matrix buffer must hold n*n entries");
        let mut ipiv = vec![0usize; n];
        let scale = a.iter().fold(0.0f64, |m, &v| m.max(v.abs())).max(1.0);
        for k in 0..n {
            let mut p = k;
            let mut best = a[k + k * n].abs();
            for i in (k + 1)..n {
                let v = a[i + k * n].abs();
                if v > best {
                    best = v;
                    p = i;
                }
            }
            if best <= PIVOT_TOL * scale {
                return Err(Error::Singular {
                    step: k,
                    pivot: a[p + k * n],
                });
            }
            ipiv[k] = p;
            if p != k {
                for j in 0..n {
                    a.swap(k + j * n, p + j * n);
                }
            }
            let pivot = a[k + k * n];
            for i in (k + 1)..n {
                a[i + k * n] /= pivot;
            }
            for j in (k + 1)..n {
                let ukj = a[k + j * n];
                if ukj == 0.0 {
                    continue;
                }
                let (col_k, col_j) = {
                    let (lo, hi) = a.split_at_mut(j * n);
                    (&lo[k * n..k * n + n], &mut hi[..n])
                };
                for i in (k + 1)..n {
                    col_j[i] -= col_k[i] * ukj;
                }
            }
        }
        Ok(Self { n, lu: a, ipiv })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Solves `A x = b` in place.
    pub fn solve_in_place(&self, b: &mut [f64]) {
        let n = self.n;
        assert_eq!(b.len(), n);
        for k in 0..n {
            b.swap(k, self.ipiv[k]);
        }
        // L y = P b, unit lower triangle.
        for j in 0..n {
            let bj = b[j];
            if bj == 0.0 {
                continue;
            }
            for i in (j + 1)..n {
                b[i] -= self.lu[i + j * n] * bj;
            }
        }
        // U x = y.
        for j in (0..n).rev() {
            b[j] /= self.lu[j + j * n];
            let bj = b[j];
            if bj == 0.0 {
                continue;
            }
            for i in 0..j {
                b[i] -= self.lu[i + j * n] * bj;
            }
        }
    }

    /// Solves `A^T x = c` in place, reusing the same factors.
    ///
    /// With `P A = L U` we have `A^T = U^T L^T P`, so the sweep order is a
    /// forward solve with `U^T`, a backward solve with `L^T`, then the row
    /// swaps undone in reverse.
    pub fn solve_transpose_in_place(&self, c: &mut [f64]) {
        let n = self.n;
        assert_eq!(c.len(), n);
        // U^T w = c: U^T is lower triangular with U's diagonal.
        for j in 0..n {
            let mut s = c[j];
            for i in 0..j {
                s -= self.lu[i + j * n] * c[i];
            }
            c[j] = s / self.lu[j + j * n];
        }
        // L^T y = w: L^T is unit upper triangular.
        for j in (0..n).rev() {
            let mut s = c[j];
            for i in (j + 1)..n {
                s -= self.lu[i + j * n] * c[i];
            }
            c[j] = s;
        }
        for k in (0..n).rev() {
            c.swap(k, self.ipiv[k]);
        }
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let mut x = b.to_vec();
        self.solve_in_place(&mut x);
        x
    }

    pub fn solve_transpose(&self, c: &[f64]) -> Vec<f64> {
        let mut x = c.to_vec();
        self.solve_transpose_in_place(&mut x);
        x
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha12Rng;

    fn mat_vec(n: usize, a: &[f64], x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; n];
        for j in 0..n {
            for i in 0..n {
                y[i] += a[i + j * n] * x[j];
            }
        }
        y
    }

    fn mat_t_vec(n: usize, a: &[f64], x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; n];
        for j in 0..n {
            for i in 0..n {
                y[j] += a[i + j * n] * x[i];
            }
        }
        y
    }

    #[test]
    fn solves_random_systems_both_directions() {
        let mut rng = ChaCha12Rng::seed_from_u64(7);
        for n in [1usize, 2, 5, 24, 60] {
            let mut a = vec![0.0; n * n];
            for v in a.iter_mut() {
                *v = rng.gen_range(-1.0..1.0);
            }
            // Push mass onto the diagonal so the system is well conditioned.
            for i in 0..n {
                a[i + i * n] += n as f64;
            }
            let x_true: Vec<f64> = (0..n).map(|i| (i as f64 * 0.37).sin() + 0.5).collect();
            let b = mat_vec(n, &a, &x_true);
            let c = mat_t_vec(n, &a, &x_true);
            let lu = LuFactors::factorize(n, a).unwrap();
            let x = lu.solve(&b);
            let xt = lu.solve_transpose(&c);
            for i in 0..n {
                assert!((x[i] - x_true[i]).abs() < 1e-10, "forward n={n} i={i}");
                assert!((xt[i] - x_true[i]).abs() < 1e-10, "transpose n={n} i={i}");
            }
        }
    }

    #[test]
    fn pivoting_handles_zero_leading_entry() {
        // [[0, 1], [1, 0]] requires a swap immediately.
        let a = vec![0.0, 1.0, 1.0, 0.0];
        let lu = LuFactors::factorize(2, a).unwrap();
        let x = lu.solve(&[2.0, 3.0]);
        assert!((x[0] - 3.0).abs() < 1e-14);
        assert!((x[1] - 2.0).abs() < 1e-14);
    }

    #[test]
    fn reports_singular_matrix() {
        let a = vec![1.0, 2.0, 2.0, 4.0]; // rank 1
        match LuFactors::factorize(2, a) {
            Err(Error::Singular { .. }) => {}
            other => panic!("expected singular error, got {other:?}"),
        }
    }
}
