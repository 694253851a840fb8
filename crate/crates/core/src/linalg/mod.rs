//! Sparse matrices and direct solves, real and complex.

mod complex;
mod lu;
pub mod ordering;
mod sparse;

use alloc::vec::Vec;

pub use complex::{Complex, Scalar};
pub use lu::LuFactors;
pub use sparse::{SparseMatrix, TripletBuilder};

use crate::{Error, Result};

/// Relative residual bound every direct solve must meet:
/// `‖A x − b‖∞ ≤ RESIDUAL_TOL · (1 + ‖b‖∞)`.
pub const RESIDUAL_TOL: f64 = 1e-10;

const MAX_REFINEMENT_STEPS: usize = 3;

#[derive(Debug, Clone)]
pub struct LinearSolution<T> {
    pub x: Vec<T>,
    /// `‖A x − b‖∞` measured after the solve.
    pub residual_norm: f64,
    /// Factors of `A`, reusable for further right-hand sides.
    pub factors: LuFactors<T>,
}

/// Factorizes `A` and solves `A x = b`, with iterative refinement if the
/// first residual misses [`RESIDUAL_TOL`].
pub fn solve<T: Scalar>(a: &SparseMatrix<T>, b: &[T]) -> Result<LinearSolution<T>> {
    check_rhs(a, b)?;
    let factors = LuFactors::factorize(a)?;
    let (x, residual_norm) = solve_refined(a, &factors, b)?;
    Ok(LinearSolution {
        x,
        residual_norm,
        factors,
    })
}

/// Solves `A^T λ = c` (plain transpose).
pub fn solve_transposed<T: Scalar>(a: &SparseMatrix<T>, c: &[T]) -> Result<Vec<T>> {
    check_rhs(a, c)?;
    let factors = LuFactors::factorize(a)?;
    solve_transposed_refined(a, &factors, c).map(|(x, _)| x)
}

/// Solve against existing factors, refining until the residual contract holds.
pub fn solve_refined<T: Scalar>(
    a: &SparseMatrix<T>,
    factors: &LuFactors<T>,
    b: &[T],
) -> Result<(Vec<T>, f64)> {
    refine(b, |rhs| factors.solve(rhs), |x| a.mul_vec(x))
}

pub fn solve_transposed_refined<T: Scalar>(
    a: &SparseMatrix<T>,
    factors: &LuFactors<T>,
    c: &[T],
) -> Result<(Vec<T>, f64)> {
    refine(
        c,
        |rhs| factors.solve_transposed(rhs),
        |x| a.mul_vec_transposed(x),
    )
}

fn refine<T: Scalar>(
    b: &[T],
    inverse: impl Fn(&[T]) -> Vec<T>,
    apply: impl Fn(&[T]) -> Vec<T>,
) -> Result<(Vec<T>, f64)> {
    let b_norm = b.iter().map(|v| v.modulus()).fold(0.0, f64::max);
    let tol = RESIDUAL_TOL * (1.0 + b_norm);
    let mut x = inverse(b);
    let mut step = 0;
    loop {
        let ax = apply(&x);
        let r: Vec<T> = b.iter().zip(&ax).map(|(&bi, &ai)| bi - ai).collect();
        let res = r.iter().map(|v| v.modulus()).fold(0.0, f64::max);
        if !res.is_finite() || x.iter().any(|v| !v.is_finite_value()) {
            return Err(Error::NonFinite("linear solve".into()));
        }
        if res <= tol {
            return Ok((x, res));
        }
        if step == MAX_REFINEMENT_STEPS {
            return Err(Error::Residual {
                residual: res,
                tolerance: tol,
            });
        }
        let dx = inverse(&r);
        for (xi, d) in x.iter_mut().zip(dx) {
            *xi += d;
        }
        step += 1;
    }
}

fn check_rhs<T: Scalar>(a: &SparseMatrix<T>, b: &[T]) -> Result<()> {
    if b.len() != a.dim() {
        return Err(Error::Shape(alloc::format!(
            "right-hand side has length {}, matrix is {}x{}",
            b.len(),
            a.dim(),
            a.dim()
        )));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    // Dense Gaussian elimination with partial pivoting; test oracle only.
    fn dense_solve<T: Scalar>(mut m: Vec<Vec<T>>, mut b: Vec<T>) -> Vec<T> {
        let n = b.len();
        for k in 0..n {
            let p = (k..n)
                .max_by(|&i, &j| m[i][k].modulus().partial_cmp(&m[j][k].modulus()).unwrap())
                .unwrap();
            m.swap(k, p);
            b.swap(k, p);
            for i in k + 1..n {
                let f = m[i][k] / m[k][k];
                for j in k..n {
                    let t = m[k][j];
                    m[i][j] -= f * t;
                }
                let t = b[k];
                b[i] -= f * t;
            }
        }
        let mut x = vec![T::ZERO; n];
        for i in (0..n).rev() {
            let mut s = b[i];
            for j in i + 1..n {
                s -= m[i][j] * x[j];
            }
            x[i] = s / m[i][i];
        }
        x
    }

    fn to_dense<T: Scalar>(a: &SparseMatrix<T>) -> Vec<Vec<T>> {
        let n = a.dim();
        let mut d = vec![vec![T::ZERO; n]; n];
        for (r, row) in d.iter_mut().enumerate() {
            for (c, v) in a.row(r) {
                row[c] = v;
            }
        }
        d
    }

    fn random_sparse(n: usize, density: f64, dominant: bool, rng: &mut ChaCha8Rng) -> SparseMatrix<f64> {
        let mut b = TripletBuilder::new(n);
        for r in 0..n {
            let mut off = 0.0;
            for c in 0..n {
                if c != r && rng.gen::<f64>() < density {
                    let v: f64 = rng.gen_range(-1.0..1.0);
                    off += v.abs();
                    b.add(r, c, v);
                }
            }
            let d = if dominant { off + 1.0 } else { rng.gen_range(0.5..2.0) };
            b.add(r, r, d);
        }
        b.build()
    }

    #[test]
    fn identity_returns_rhs() {
        let a = SparseMatrix::<f64>::identity(5);
        let b = vec![1.0, -2.0, 3.5, 0.0, 7.0];
        assert_eq!(solve(&a, &b).unwrap().x, b);
        assert_eq!(solve_transposed(&a, &b).unwrap(), b);
    }

    #[test]
    fn diagonal_two_by_two() {
        let mut t = TripletBuilder::new(2);
        t.add(0, 0, 2.0);
        t.add(1, 1, 4.0);
        let sol = solve(&t.build(), &[2.0, 8.0]).unwrap();
        assert_eq!(sol.x, vec![1.0, 2.0]);
        assert_eq!(sol.residual_norm, 0.0);
    }

    #[test]
    fn diagonally_dominant_matches_dense_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let a = random_sparse(50, 0.1, true, &mut rng);
        let b: Vec<f64> = (0..50).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let sol = solve(&a, &b).unwrap();
        let bnorm = b.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        assert!(sol.residual_norm <= RESIDUAL_TOL * (1.0 + bnorm));
        let oracle = dense_solve(to_dense(&a), b);
        for (x, o) in sol.x.iter().zip(&oracle) {
            assert!((x - o).abs() < 1e-8);
        }
    }

    #[test]
    fn nonsymmetric_transpose_matches_dense_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let a = random_sparse(20, 0.3, false, &mut rng);
        let c: Vec<f64> = (0..20).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let lambda = solve_transposed(&a, &c).unwrap();
        let oracle = dense_solve(to_dense(&a.transpose()), c.clone());
        for (x, o) in lambda.iter().zip(&oracle) {
            assert!((x - o).abs() < 1e-8, "{x} vs {o}");
        }
        assert!(a.residual_transposed_inf(&lambda, &c) <= 1e-10 * 2.0);
    }

    #[test]
    fn complex_transpose_is_not_conjugated() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let n = 15;
        let mut t = TripletBuilder::new(n);
        for r in 0..n {
            for c in 0..n {
                if r == c || rng.gen::<f64>() < 0.3 {
                    let v = Complex::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
                    let v = if r == c { v + Complex::new(4.0, 1.0) } else { v };
                    t.add(r, c, v);
                }
            }
        }
        let a = t.build();
        let c: Vec<Complex> = (0..n).map(|i| Complex::new(i as f64, 1.0)).collect();
        let x = solve_transposed(&a, &c).unwrap();
        let oracle = dense_solve(to_dense(&a.transpose()), c);
        for (x, o) in x.iter().zip(&oracle) {
            assert!((*x - *o).abs() < 1e-10);
        }
    }

    #[test]
    fn symmetric_transposed_solve_equals_solve() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let base = random_sparse(30, 0.1, true, &mut rng);
        let mut t = TripletBuilder::new(30);
        for r in 0..30 {
            for (c, v) in base.row(r) {
                t.add(r, c, 0.5 * v);
                t.add(c, r, 0.5 * v);
            }
        }
        let a = t.build();
        assert!(a.is_symmetric());
        let c: Vec<f64> = (0..30).map(|i| (i as f64).sin()).collect();
        let x = solve(&a, &c).unwrap().x;
        let y = solve_transposed(&a, &c).unwrap();
        for (p, q) in x.iter().zip(&y) {
            assert!((p - q).abs() < 1e-12);
        }
    }

    #[test]
    fn factor_reuse_is_bitwise_identical() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let a = random_sparse(40, 0.1, true, &mut rng);
        let rhs: Vec<Vec<f64>> = (0..4)
            .map(|_| (0..40).map(|_| rng.gen_range(-1.0..1.0)).collect())
            .collect();
        let shared = LuFactors::factorize(&a).unwrap();
        for b in &rhs {
            let reused = solve_refined(&a, &shared, b).unwrap().0;
            let fresh = solve(&a, b).unwrap().x;
            assert_eq!(reused, fresh);
        }
    }

    #[test]
    fn singular_matrix_is_reported() {
        let mut t = TripletBuilder::new(3);
        t.add(0, 0, 1.0);
        t.add(1, 1, 1.0);
        t.add(2, 0, 1.0);
        let err = solve(&t.build(), &[1.0, 1.0, 1.0]).unwrap_err();
        assert!(matches!(err, Error::Singular { .. }));
    }

    #[test]
    fn pivoting_handles_zero_diagonal() {
        // [[0, 1], [1, 0]] needs a row swap.
        let mut t = TripletBuilder::new(2);
        t.add(0, 1, 1.0);
        t.add(1, 0, 1.0);
        let a = t.build();
        assert_eq!(solve(&a, &[3.0, 4.0]).unwrap().x, vec![4.0, 3.0]);
        assert_eq!(solve_transposed(&a, &[3.0, 4.0]).unwrap(), vec![4.0, 3.0]);
    }

    #[test]
    fn rhs_length_is_checked() {
        let a = SparseMatrix::<f64>::identity(3);
        assert!(matches!(solve(&a, &[1.0]), Err(Error::Shape(_))));
    }
}
