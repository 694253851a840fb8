//! Banded LU with partial pivoting on a bandwidth-reducing ordering.
//!
//! The PDE operators assembled in this crate live on structured grids, so
//! after a Cuthill–McKee style relabelling their fill is confined to a band.
//! Factorization follows the LAPACK `gbtf2`/`gbtrs` scheme: column-major band
//! storage with `kl` extra superdiagonals to absorb pivoting fill.

use alloc::vec;
use alloc::vec::Vec;

use super::ordering::{bandwidth, invert, reverse_cuthill_mckee};
use super::{Scalar, SparseMatrix};
use crate::{Error, Result};

/// Immutable LU factors; any number of right-hand sides can be solved against
/// them, concurrently if needed.
#[derive(Debug, Clone)]
pub struct LuFactors<T> {
    n: usize,
    kl: usize,
    ku: usize,
    ldab: usize,
    ab: Vec<T>,
    ipiv: Vec<usize>,
    perm: Vec<usize>,
}

impl<T: Scalar> LuFactors<T> {
    pub fn factorize(a: &SparseMatrix<T>) -> Result<Self> {
        let n = a.dim();
        let natural: Vec<usize> = (0..n).collect();
        let (nkl, nku) = bandwidth(a, &natural);
        let rcm = reverse_cuthill_mckee(a);
        let (rkl, rku) = bandwidth(a, &rcm);
        let (perm, kl, ku) = if rkl + rku < nkl + nku {
            (rcm, rkl, rku)
        } else {
            (natural, nkl, nku)
        };
        let inv = invert(&perm);
        let kv = kl + ku;
        let ldab = 2 * kl + ku + 1;
        let mut ab = vec![T::ZERO; ldab * n];
        for r in 0..n {
            let nr = inv[r];
            for (c, v) in a.row(r) {
                let nc = inv[c];
                ab[nc * ldab + kv + nr - nc] = v;
            }
        }
        let mut ipiv = vec![0usize; n];

        let mut ju = 0usize;
        for j in 0..n {
            let km = kl.min(n - 1 - j);
            let base = j * ldab + kv;
            let mut jp = 0;
            let mut best = ab[base].pivot_magnitude();
            for i in 1..=km {
                let m = ab[base + i].pivot_magnitude();
                if m > best {
                    best = m;
                    jp = i;
                }
            }
            ipiv[j] = j + jp;
            if best == 0.0 || !best.is_finite() {
                return Err(Error::Singular { pivot: perm[j] });
            }
            ju = ju.max((j + ku + jp).min(n - 1));
            if jp != 0 {
                for c in j..=ju {
                    let top = c * ldab + kv + j - c;
                    ab.swap(top, top + jp);
                }
            }
            if km > 0 {
                let inv_piv = T::ONE / ab[base];
                for v in &mut ab[base + 1..=base + km] {
                    *v = *v * inv_piv;
                }
                let (left, right) = ab.split_at_mut((j + 1) * ldab);
                let multipliers = &left[base + 1..=base + km];
                for c in j + 1..=ju {
                    let col = &mut right[(c - j - 1) * ldab..(c - j) * ldab];
                    let off = kv + j - c;
                    let f = col[off];
                    if f != T::ZERO {
                        for (dst, &l) in col[off + 1..=off + km].iter_mut().zip(multipliers) {
                            *dst -= l * f;
                        }
                    }
                }
            }
        }
        Ok(LuFactors {
            n,
            kl,
            ku,
            ldab,
            ab,
            ipiv,
            perm,
        })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    /// `(kl, ku)` of the ordered matrix.
    pub fn bandwidth(&self) -> (usize, usize) {
        (self.kl, self.ku)
    }

    /// Solves `A x = b`.
    pub fn solve(&self, b: &[T]) -> Vec<T> {
        assert_eq!(b.len(), self.n);
        let (n, kl, ldab) = (self.n, self.kl, self.ldab);
        let kv = self.kl + self.ku;
        let mut y: Vec<T> = self.perm.iter().map(|&old| b[old]).collect();
        for j in 0..n {
            let l = self.ipiv[j];
            if l != j {
                y.swap(l, j);
            }
            let km = kl.min(n - 1 - j);
            let yj = y[j];
            if km > 0 && yj != T::ZERO {
                let col = &self.ab[j * ldab + kv + 1..=j * ldab + kv + km];
                for (dst, &l) in y[j + 1..=j + km].iter_mut().zip(col) {
                    *dst -= l * yj;
                }
            }
        }
        for j in (0..n).rev() {
            let col = &self.ab[j * ldab..(j + 1) * ldab];
            y[j] = y[j] / col[kv];
            let yj = y[j];
            let top = j.saturating_sub(kv);
            if yj != T::ZERO {
                for r in top..j {
                    y[r] -= col[kv + r - j] * yj;
                }
            }
        }
        let mut x = vec![T::ZERO; n];
        for (k, &old) in self.perm.iter().enumerate() {
            x[old] = y[k];
        }
        x
    }

    /// Solves `A^T x = c` with the plain transpose. For complex matrices this
    /// is deliberately not the conjugate transpose: adjoints of holomorphic
    /// outputs such as a complex transmission need `A^T`.
    pub fn solve_transposed(&self, c: &[T]) -> Vec<T> {
        assert_eq!(c.len(), self.n);
        let (n, kl, ldab) = (self.n, self.kl, self.ldab);
        let kv = self.kl + self.ku;
        let mut y: Vec<T> = self.perm.iter().map(|&old| c[old]).collect();
        for j in 0..n {
            let col = &self.ab[j * ldab..(j + 1) * ldab];
            let top = j.saturating_sub(kv);
            let mut s = y[j];
            for r in top..j {
                s -= col[kv + r - j] * y[r];
            }
            y[j] = s / col[kv];
        }
        for j in (0..n.saturating_sub(1)).rev() {
            let km = kl.min(n - 1 - j);
            let col = &self.ab[j * ldab + kv + 1..=j * ldab + kv + km];
            let mut s = y[j];
            for (&l, &yi) in col.iter().zip(&y[j + 1..=j + km]) {
                s -= l * yi;
            }
            y[j] = s;
            let l = self.ipiv[j];
            if l != j {
                y.swap(l, j);
            }
        }
        let mut x = vec![T::ZERO; n];
        for (k, &old) in self.perm.iter().enumerate() {
            x[old] = y[k];
        }
        x
    }
}
