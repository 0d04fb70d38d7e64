//! Dense linear algebra: just enough for the exact oracles.
//!
//! Systems here are small (a few thousand unknowns at most), so a dense
//! row-major matrix plus LU with partial pivoting covers every need: Bellman
//! solves, visitation solves, normal equations for affine projections.

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Dense row-major matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseMatrix<F> {
    pub n_rows: usize,
    pub n_cols: usize,
    pub data: Vec<F>,
}

impl<F: Scalar> DenseMatrix<F> {
    pub fn zeros(n_rows: usize, n_cols: usize) -> Self {
        Self { n_rows, n_cols, data: vec![F::zero(); n_rows * n_cols] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = F::one();
        }
        m
    }

    pub fn from_rows(rows: &[Vec<F>]) -> Self {
        let n_rows = rows.len();
        let n_cols = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(n_rows * n_cols);
        for row in rows {
            assert_eq!(row.len(), n_cols, "ragged rows");
            data.extend_from_slice(row);
        }
        Self { n_rows, n_cols, data }
    }

    /// `y = A x`.
    pub fn matvec(&self, x: &[F]) -> Vec<F> {
        assert_eq!(x.len(), self.n_cols);
        let mut y = vec![F::zero(); self.n_rows];
        for (i, yi) in y.iter_mut().enumerate() {
            let row = &self.data[i * self.n_cols..(i + 1) * self.n_cols];
            *yi = crate::scalar::dot(row, x);
        }
        y
    }

    /// `y = Aᵀ x` without materializing the transpose.
    pub fn matvec_transpose(&self, x: &[F]) -> Vec<F> {
        assert_eq!(x.len(), self.n_rows);
        let mut y = vec![F::zero(); self.n_cols];
        for (i, xi) in x.iter().enumerate() {
            if *xi == F::zero() {
                continue;
            }
            let row = &self.data[i * self.n_cols..(i + 1) * self.n_cols];
            for (yj, aij) in y.iter_mut().zip(row) {
                *yj += *aij * *xi;
            }
        }
        y
    }

    /// `A Bᵀ` for `A: m×n`, `B: k×n` (used for Gram matrices `A Aᵀ`).
    pub fn mul_transpose(&self, other: &DenseMatrix<F>) -> DenseMatrix<F> {
        assert_eq!(self.n_cols, other.n_cols);
        let mut out = DenseMatrix::zeros(self.n_rows, other.n_rows);
        for i in 0..self.n_rows {
            let a = &self.data[i * self.n_cols..(i + 1) * self.n_cols];
            for j in 0..other.n_rows {
                let b = &other.data[j * other.n_cols..(j + 1) * other.n_cols];
                out[(i, j)] = crate::scalar::dot(a, b);
            }
        }
        out
    }
}

impl<F> std::ops::Index<(usize, usize)> for DenseMatrix<F> {
    type Output = F;
    #[inline]
    fn index(&self, (i, j): (usize, usize)) -> &F {
        &self.data[i * self.n_cols + j]
    }
}

impl<F> std::ops::IndexMut<(usize, usize)> for DenseMatrix<F> {
    #[inline]
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut F {
        &mut self.data[i * self.n_cols + j]
    }
}

/// LU factorization with partial pivoting, stored packed (L below the
/// diagonal with implicit unit diagonal, U on and above it).
pub struct LuFactors<F> {
    lu: DenseMatrix<F>,
    /// Row permutation: `perm[i]` is the original row now in position `i`.
    perm: Vec<usize>,
}

impl<F: Scalar> LuFactors<F> {
    /// Factorizes a square matrix. Fails with [`Error::SingularSystem`] when a
    /// pivot column has no entry above `~1e2 · eps` of the matrix scale.
    pub fn factorize(mut a: DenseMatrix<F>) -> Result<Self> {
        assert_eq!(a.n_rows, a.n_cols, "LU needs a square matrix");
        let n = a.n_rows;
        let scale = a.data.iter().fold(F::zero(), |m, v| m.max(v.abs()));
        let tiny = F::cast(1e-300).max(scale * F::epsilon() * F::cast(1e2));
        let mut perm: Vec<usize> = (0..n).collect();

        for col in 0..n {
            // Partial pivoting: bring the largest remaining entry in this column up.
            let mut pivot_row = col;
            let mut pivot_mag = a[(col, col)].abs();
            for r in col + 1..n {
                let mag = a[(r, col)].abs();
                if mag > pivot_mag {
                    pivot_mag = mag;
                    pivot_row = r;
                }
            }
            if pivot_mag <= tiny {
                return Err(Error::SingularSystem {
                    column: col,
                    pivot: pivot_mag.to_f64().unwrap_or(0.0),
                });
            }
            if pivot_row != col {
                perm.swap(col, pivot_row);
                for j in 0..n {
                    let tmp = a[(col, j)];
                    a[(col, j)] = a[(pivot_row, j)];
                    a[(pivot_row, j)] = tmp;
                }
            }
            let pivot = a[(col, col)];
            for r in col + 1..n {
                let factor = a[(r, col)] / pivot;
                a[(r, col)] = factor;
                if factor != F::zero() {
                    for j in col + 1..n {
                        let u = a[(col, j)];
                        a[(r, j)] -= factor * u;
                    }
                }
            }
        }
        Ok(Self { lu: a, perm })
    }

    /// Solves `A x = b` using the stored factors.
    pub fn solve(&self, b: &[F]) -> Vec<F> {
        let n = self.lu.n_rows;
        assert_eq!(b.len(), n);
        // Forward substitution on the permuted right-hand side.
        let mut x: Vec<F> = self.perm.iter().map(|&i| b[i]).collect();
        for i in 1..n {
            let mut sum = x[i];
            for j in 0..i {
                sum -= self.lu[(i, j)] * x[j];
            }
            x[i] = sum;
        }
        // Back substitution.
        for i in (0..n).rev() {
            let mut sum = x[i];
            for j in i + 1..n {
                sum -= self.lu[(i, j)] * x[j];
            }
            x[i] = sum / self.lu[(i, i)];
        }
        x
    }
}

/// One-shot solve of `A x = b` by LU with partial pivoting.
pub fn lu_solve<F: Scalar>(a: DenseMatrix<F>, b: &[F]) -> Result<Vec<F>> {
    Ok(LuFactors::factorize(a)?.solve(b))
}

/// Projector onto the affine set `{x : A x = b}` for a full-row-rank `A`,
/// using the normal equations `x ← x − Aᵀ (A Aᵀ)⁻¹ (A x − b)`.
pub struct AffineProjector<F> {
    a: DenseMatrix<F>,
    b: Vec<F>,
    gram: LuFactors<F>,
}

impl<F: Scalar> AffineProjector<F> {
    pub fn new(a: DenseMatrix<F>, b: Vec<F>) -> Result<Self> {
        assert_eq!(a.n_rows, b.len());
        let gram = LuFactors::factorize(a.mul_transpose(&a))?;
        Ok(Self { a, b, gram })
    }

    /// Least-squares projection of `x` onto the affine set, in place.
    pub fn project(&self, x: &mut [F]) {
        let mut residual = self.a.matvec(x);
        for (r, b) in residual.iter_mut().zip(&self.b) {
            *r -= *b;
        }
        let lambda = self.gram.solve(&residual);
        let correction = self.a.matvec_transpose(&lambda);
        for (xi, c) in x.iter_mut().zip(&correction) {
            *xi -= *c;
        }
    }

    /// Sup norm of `A x − b`.
    pub fn infeasibility(&self, x: &[F]) -> F {
        let ax = self.a.matvec(x);
        crate::scalar::sup_distance(&ax, &self.b)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lu_solves_a_known_system() {
        // 2x + y = 5, x + 3y = 10 → x = 1, y = 3.
        let a = DenseMatrix::from_rows(&[vec![2.0f64, 1.0], vec![1.0, 3.0]]);
        let x = lu_solve(a, &[5.0, 10.0]).unwrap();
        assert!((x[0] - 1.0).abs() < 1e-12);
        assert!((x[1] - 3.0).abs() < 1e-12);
    }

    #[test]
    fn lu_pivots_on_zero_diagonal() {
        let a = DenseMatrix::from_rows(&[vec![0.0, 1.0], vec![1.0, 0.0]]);
        let x = lu_solve(a, &[2.0, 3.0]).unwrap();
        assert_eq!(x, vec![3.0, 2.0]);
    }

    #[test]
    fn lu_rejects_singular() {
        let a = DenseMatrix::from_rows(&[vec![1.0, 2.0], vec![2.0, 4.0]]);
        assert!(matches!(lu_solve(a, &[1.0, 2.0]), Err(Error::SingularSystem { .. })));
    }

    #[test]
    fn lu_residual_is_tiny_on_random_system() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        let n = 40;
        let mut a = DenseMatrix::zeros(n, n);
        for v in a.data.iter_mut() {
            *v = rng.gen::<f64>() - 0.5;
        }
        for i in 0..n {
            a[(i, i)] += 2.0; // keep it comfortably nonsingular
        }
        let b: Vec<f64> = (0..n).map(|_| rng.gen::<f64>()).collect();
        let x = lu_solve(a.clone(), &b).unwrap();
        let r = a.matvec(&x);
        assert!(crate::scalar::sup_distance(&r, &b) < 1e-10);
    }

    #[test]
    fn affine_projection_lands_on_the_set_and_is_idempotent() {
        // Constraint: x0 + x1 + x2 = 1 and x0 − x2 = 0.
        let a = DenseMatrix::from_rows(&[vec![1.0, 1.0, 1.0], vec![1.0, 0.0, -1.0]]);
        let proj = AffineProjector::new(a, vec![1.0, 0.0]).unwrap();
        let mut x = vec![3.0, -2.0, 0.5];
        proj.project(&mut x);
        assert!(proj.infeasibility(&x) < 1e-12);
        let y = x.clone();
        proj.project(&mut x);
        assert!(crate::scalar::sup_distance(&x, &y) < 1e-12);
    }
}
