//! Sparse LDLᵀ factorization of symmetric quasi-definite matrices.
//!
//! Up-looking factorization driven by the elimination tree. No pivoting is
//! done, so the matrix must be quasi-definite (or positive definite) under
//! the chosen ordering; a zero pivot is reported as an error.

use crate::csc::{permute_upper, CscMatrix};
use crate::ordering::{invert, minimum_degree};
use crate::problem::QpError;

const NONE: usize = usize::MAX;

/// Symbolic analysis: ordering, elimination tree and the column pattern of L.
#[derive(Clone, Debug)]
struct Symbolic {
    n: usize,
    perm: Vec<usize>,
    iperm: Vec<usize>,
    etree: Vec<usize>,
    lp: Vec<usize>,
}

/// Numeric factor `P A Pᵀ = L D Lᵀ` with unit lower-triangular `L`.
#[derive(Clone, Debug)]
pub struct LdlFactor {
    sym: Symbolic,
    li: Vec<usize>,
    lx: Vec<f64>,
    d: Vec<f64>,
    dinv: Vec<f64>,
    // Scratch reused by `refactor`.
    work: Vec<f64>,
    /// Expected pivot signs (permuted order) with threshold and replacement
    /// magnitude for dynamic regularization.
    dynamic: Option<(Vec<f64>, f64, f64)>,
    regularized: usize,
}

impl LdlFactor {
    /// Orders and factors the symmetric matrix given by its upper triangle.
    /// Every diagonal entry must be present in the pattern.
    pub fn new(upper: &CscMatrix) -> Result<Self, QpError> {
        let perm = minimum_degree(upper);
        Self::with_ordering(upper, perm)
    }

    pub fn with_ordering(upper: &CscMatrix, perm: Vec<usize>) -> Result<Self, QpError> {
        let n = upper.ncols;
        let iperm = invert(&perm);
        let pa = permute_upper(upper, &iperm);
        let (etree, lnz) = etree(&pa)?;
        let mut lp = vec![0usize; n + 1];
        for i in 0..n {
            lp[i + 1] = lp[i] + lnz[i];
        }
        let total = lp[n];
        let mut f = Self {
            sym: Symbolic {
                n,
                perm,
                iperm,
                etree,
                lp,
            },
            li: vec![0; total],
            lx: vec![0.0; total],
            d: vec![0.0; n],
            dinv: vec![0.0; n],
            work: vec![0.0; n],
            dynamic: None,
            regularized: 0,
        };
        f.factor_permuted(&pa)?;
        Ok(f)
    }

    /// Orders and factors a quasi-definite matrix whose pivot signs are
    /// known (`signs[i]` is +1 or −1 in the original ordering). Pivots whose
    /// signed value falls below `eps` are replaced by `±delta`; the caller is
    /// expected to compensate with iterative refinement.
    pub fn with_signs(upper: &CscMatrix, signs: &[f64], eps: f64, delta: f64) -> Result<Self, QpError> {
        let perm = minimum_degree(upper);
        let n = upper.ncols;
        let iperm = invert(&perm);
        let pa = permute_upper(upper, &iperm);
        let (etree, lnz) = etree(&pa)?;
        let mut lp = vec![0usize; n + 1];
        for i in 0..n {
            lp[i + 1] = lp[i] + lnz[i];
        }
        let total = lp[n];
        let permuted_signs = perm.iter().map(|&old| signs[old]).collect();
        let mut f = Self {
            sym: Symbolic {
                n,
                perm,
                iperm,
                etree,
                lp,
            },
            li: vec![0; total],
            lx: vec![0.0; total],
            d: vec![0.0; n],
            dinv: vec![0.0; n],
            work: vec![0.0; n],
            dynamic: Some((permuted_signs, eps, delta)),
            regularized: 0,
        };
        f.factor_permuted(&pa)?;
        Ok(f)
    }

    /// Pivots replaced by dynamic regularization in the last factorization.
    pub fn regularized_pivots(&self) -> usize {
        self.regularized
    }

    /// Numeric refactorization for a matrix with the same pattern as the one
    /// passed to [`LdlFactor::new`].
    pub fn refactor(&mut self, upper: &CscMatrix) -> Result<(), QpError> {
        let pa = permute_upper(upper, &self.sym.iperm);
        self.factor_permuted(&pa)
    }

    pub fn nnz_l(&self) -> usize {
        self.li.len()
    }

    /// Number of negative pivots (the inertia's negative count).
    pub fn negative_pivots(&self) -> usize {
        self.d.iter().filter(|&&v| v < 0.0).count()
    }

    fn factor_permuted(&mut self, a: &CscMatrix) -> Result<(), QpError> {
        let n = self.sym.n;
        let lp = &self.sym.lp;
        let etree = &self.sym.etree;
        let y = &mut self.work;
        let mut marked = vec![false; n];
        let mut next_space: Vec<usize> = lp[..n].to_vec();
        let mut y_idx: Vec<usize> = Vec::with_capacity(n);
        let mut stack: Vec<usize> = Vec::with_capacity(n);
        y.iter_mut().for_each(|v| *v = 0.0);
        self.regularized = 0;

        for k in 0..n {
            y_idx.clear();
            self.d[k] = 0.0;
            for p in a.colptr[k]..a.colptr[k + 1] {
                let i = a.rowind[p];
                if i == k {
                    self.d[k] = a.values[p];
                    continue;
                }
                y[i] = a.values[p];
                if marked[i] {
                    continue;
                }
                // Walk up the elimination tree to collect the row pattern.
                stack.clear();
                let mut j = i;
                while j != NONE && j < k && !marked[j] {
                    marked[j] = true;
                    stack.push(j);
                    j = etree[j];
                }
                while let Some(s) = stack.pop() {
                    y_idx.push(s);
                }
            }
            for &c in y_idx.iter().rev() {
                let yc = y[c];
                let end = next_space[c];
                for p in lp[c]..end {
                    y[self.li[p]] -= self.lx[p] * yc;
                }
                let l = yc * self.dinv[c];
                self.li[end] = k;
                self.lx[end] = l;
                self.d[k] -= yc * l;
                next_space[c] += 1;
                y[c] = 0.0;
                marked[c] = false;
            }
            if let Some((signs, eps, delta)) = &self.dynamic {
                if self.d[k] * signs[k] <= *eps {
                    self.d[k] = signs[k] * delta;
                    self.regularized += 1;
                }
            }
            if self.d[k] == 0.0 || !self.d[k].is_finite() {
                return Err(QpError::Factorization(format!("zero or non-finite pivot at {k}")));
            }
            self.dinv[k] = 1.0 / self.d[k];
        }
        Ok(())
    }

    /// Solves `A x = b` in place.
    pub fn solve(&self, b: &mut [f64]) {
        let n = self.sym.n;
        let x = &mut vec![0.0; n];
        for (old, &new) in self.sym.iperm.iter().enumerate() {
            x[new] = b[old];
        }
        let lp = &self.sym.lp;
        for i in 0..n {
            let xi = x[i];
            if xi != 0.0 {
                for p in lp[i]..lp[i + 1] {
                    x[self.li[p]] -= self.lx[p] * xi;
                }
            }
        }
        for i in 0..n {
            x[i] *= self.dinv[i];
        }
        for i in (0..n).rev() {
            let mut s = x[i];
            for p in lp[i]..lp[i + 1] {
                s -= self.lx[p] * x[self.li[p]];
            }
            x[i] = s;
        }
        for (new, &old) in self.sym.perm.iter().enumerate() {
            b[old] = x[new];
        }
    }
}

/// Elimination tree and column counts of L (excluding the diagonal).
fn etree(a: &CscMatrix) -> Result<(Vec<usize>, Vec<usize>), QpError> {
    let n = a.ncols;
    let mut parent = vec![NONE; n];
    let mut lnz = vec![0usize; n];
    let mut flag = vec![NONE; n];
    for j in 0..n {
        flag[j] = j;
        let mut has_diag = false;
        for p in a.colptr[j]..a.colptr[j + 1] {
            let mut i = a.rowind[p];
            if i > j {
                return Err(QpError::Factorization("matrix is not upper triangular".into()));
            }
            if i == j {
                has_diag = true;
                continue;
            }
            while flag[i] != j {
                if parent[i] == NONE {
                    parent[i] = j;
                }
                lnz[i] += 1;
                flag[i] = j;
                i = parent[i];
            }
        }
        if !has_diag {
            return Err(QpError::Factorization(format!("missing diagonal entry in column {j}")));
        }
    }
    Ok((parent, lnz))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn dense_mul(a: &[Vec<f64>], x: &[f64]) -> Vec<f64> {
        a.iter().map(|r| r.iter().zip(x).map(|(p, q)| p * q).sum()).collect()
    }

    #[test]
    fn solves_random_quasidefinite_systems() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for trial in 0..20 {
            let n1 = 3 + trial % 5;
            let n2 = 2 + trial % 4;
            let n = n1 + n2;
            let mut r = vec![];
            let mut c = vec![];
            let mut v = vec![];
            for i in 0..n {
                r.push(i);
                c.push(i);
                v.push(if i < n1 { 2.0 + rng.random::<f64>() } else { -1.0 - rng.random::<f64>() });
            }
            for _ in 0..n {
                let i = rng.random_range(0..n);
                let j = rng.random_range(0..n);
                if i < j && (i < n1) != (j < n1) {
                    r.push(i);
                    c.push(j);
                    v.push(rng.random::<f64>() - 0.5);
                }
            }
            let upper = CscMatrix::from_triplets(n, n, &r, &c, &v);
            let mut full = upper.to_dense();
            for i in 0..n {
                for j in 0..i {
                    full[i][j] = full[j][i];
                }
            }
            let f = LdlFactor::new(&upper).unwrap();
            assert_eq!(f.negative_pivots(), n2);
            let x_true: Vec<f64> = (0..n).map(|i| i as f64 - 1.5).collect();
            let mut b = dense_mul(&full, &x_true);
            f.solve(&mut b);
            for (a, e) in b.iter().zip(&x_true) {
                assert!((a - e).abs() < 1e-10, "{a} vs {e}");
            }
        }
    }

    #[test]
    fn missing_diagonal_is_an_error() {
        let a = CscMatrix::from_triplets(2, 2, &[0], &[1], &[1.0]);
        assert!(LdlFactor::new(&a).is_err());
    }
}
