//! Compressed sparse column matrices.

/// Sparse matrix in compressed sparse column layout. Row indices within a
/// column are strictly increasing.
#[derive(Clone, Debug, PartialEq)]
pub struct CscMatrix {
    pub nrows: usize,
    pub ncols: usize,
    pub colptr: Vec<usize>,
    pub rowind: Vec<usize>,
    pub values: Vec<f64>,
}

impl CscMatrix {
    pub fn zeros(nrows: usize, ncols: usize) -> Self {
        Self {
            nrows,
            ncols,
            colptr: vec![0; ncols + 1],
            rowind: Vec::new(),
            values: Vec::new(),
        }
    }

    pub fn identity(n: usize) -> Self {
        Self {
            nrows: n,
            ncols: n,
            colptr: (0..=n).collect(),
            rowind: (0..n).collect(),
            values: vec![1.0; n],
        }
    }

    /// Builds a matrix from coordinate triplets. Duplicate entries are summed;
    /// explicit zeros are kept so the pattern is exactly the triplet pattern.
    ///
    /// # Panics
    /// If the slices differ in length or an index is out of range.
    pub fn from_triplets(
        nrows: usize,
        ncols: usize,
        rows: &[usize],
        cols: &[usize],
        vals: &[f64],
    ) -> Self {
        assert_eq!(rows.len(), cols.len());
        assert_eq!(rows.len(), vals.len());
        let mut count = vec![0usize; ncols + 1];
        for (&r, &c) in rows.iter().zip(cols) {
            assert!(r < nrows && c < ncols, "triplet ({r}, {c}) out of range");
            count[c + 1] += 1;
        }
        for j in 0..ncols {
            count[j + 1] += count[j];
        }
        let mut next = count.clone();
        let mut ri = vec![0usize; rows.len()];
        let mut vv = vec![0.0; rows.len()];
        for ((&r, &c), &v) in rows.iter().zip(cols).zip(vals) {
            ri[next[c]] = r;
            vv[next[c]] = v;
            next[c] += 1;
        }
        let mut colptr = Vec::with_capacity(ncols + 1);
        let mut rowind = Vec::with_capacity(rows.len());
        let mut values = Vec::with_capacity(rows.len());
        colptr.push(0);
        let mut scratch: Vec<(usize, f64)> = Vec::new();
        for j in 0..ncols {
            scratch.clear();
            scratch.extend((count[j]..count[j + 1]).map(|p| (ri[p], vv[p])));
            // Stable sort keeps the summation order of duplicates fixed.
            scratch.sort_by_key(|e| e.0);
            for &(r, v) in &scratch {
                if rowind.len() > colptr[j] && *rowind.last().unwrap() == r {
                    *values.last_mut().unwrap() += v;
                } else {
                    rowind.push(r);
                    values.push(v);
                }
            }
            colptr.push(rowind.len());
        }
        Self {
            nrows,
            ncols,
            colptr,
            rowind,
            values,
        }
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    /// Iterates over `(row, col, value)` in column-major order.
    pub fn triplets(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.ncols).flat_map(move |j| {
            (self.colptr[j]..self.colptr[j + 1]).map(move |p| (self.rowind[p], j, self.values[p]))
        })
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        let range = self.colptr[col]..self.colptr[col + 1];
        match self.rowind[range.clone()].binary_search(&row) {
            Ok(k) => self.values[range.start + k],
            Err(_) => 0.0,
        }
    }

    /// `y = A x`
    pub fn mul_vec(&self, x: &[f64], y: &mut [f64]) {
        assert_eq!(x.len(), self.ncols);
        assert_eq!(y.len(), self.nrows);
        y.iter_mut().for_each(|v| *v = 0.0);
        for j in 0..self.ncols {
            let xj = x[j];
            if xj == 0.0 {
                continue;
            }
            for p in self.colptr[j]..self.colptr[j + 1] {
                y[self.rowind[p]] += self.values[p] * xj;
            }
        }
    }

    /// `y = Aᵀ x`
    pub fn tmul_vec(&self, x: &[f64], y: &mut [f64]) {
        assert_eq!(x.len(), self.nrows);
        assert_eq!(y.len(), self.ncols);
        for j in 0..self.ncols {
            let mut s = 0.0;
            for p in self.colptr[j]..self.colptr[j + 1] {
                s += self.values[p] * x[self.rowind[p]];
            }
            y[j] = s;
        }
    }

    pub fn mul(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.nrows];
        self.mul_vec(x, &mut y);
        y
    }

    pub fn tmul(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.ncols];
        self.tmul_vec(x, &mut y);
        y
    }

    pub fn transpose(&self) -> Self {
        let mut count = vec![0usize; self.nrows + 1];
        for &r in &self.rowind {
            count[r + 1] += 1;
        }
        for i in 0..self.nrows {
            count[i + 1] += count[i];
        }
        let mut next = count.clone();
        let mut rowind = vec![0usize; self.nnz()];
        let mut values = vec![0.0; self.nnz()];
        for j in 0..self.ncols {
            for p in self.colptr[j]..self.colptr[j + 1] {
                let r = self.rowind[p];
                rowind[next[r]] = j;
                values[next[r]] = self.values[p];
                next[r] += 1;
            }
        }
        Self {
            nrows: self.ncols,
            ncols: self.nrows,
            colptr: count,
            rowind,
            values,
        }
    }

    /// Entries with `row <= col`.
    pub fn upper_triangle(&self) -> Self {
        let mut colptr = vec![0usize];
        let mut rowind = Vec::new();
        let mut values = Vec::new();
        for j in 0..self.ncols {
            for p in self.colptr[j]..self.colptr[j + 1] {
                if self.rowind[p] <= j {
                    rowind.push(self.rowind[p]);
                    values.push(self.values[p]);
                }
            }
            colptr.push(rowind.len());
        }
        Self {
            nrows: self.nrows,
            ncols: self.ncols,
            colptr,
            rowind,
            values,
        }
    }

    /// Stacks matrices with equal column counts on top of each other.
    pub fn vstack(blocks: &[&CscMatrix]) -> Self {
        let ncols = blocks.first().map_or(0, |b| b.ncols);
        assert!(blocks.iter().all(|b| b.ncols == ncols));
        let nrows = blocks.iter().map(|b| b.nrows).sum();
        let mut colptr = vec![0usize];
        let mut rowind = Vec::new();
        let mut values = Vec::new();
        for j in 0..ncols {
            let mut offset = 0;
            for b in blocks {
                for p in b.colptr[j]..b.colptr[j + 1] {
                    rowind.push(b.rowind[p] + offset);
                    values.push(b.values[p]);
                }
                offset += b.nrows;
            }
            colptr.push(rowind.len());
        }
        Self {
            nrows,
            ncols,
            colptr,
            rowind,
            values,
        }
    }

    /// Keeps the listed rows, in the given order.
    pub fn select_rows(&self, rows: &[usize]) -> Self {
        let mut map = vec![usize::MAX; self.nrows];
        for (new, &old) in rows.iter().enumerate() {
            map[old] = new;
        }
        let mut r = Vec::new();
        let mut c = Vec::new();
        let mut v = Vec::new();
        for (i, j, x) in self.triplets() {
            if map[i] != usize::MAX {
                r.push(map[i]);
                c.push(j);
                v.push(x);
            }
        }
        Self::from_triplets(rows.len(), self.ncols, &r, &c, &v)
    }

    /// `A ← diag(left) · A · diag(right)`
    pub fn scale(&mut self, left: &[f64], right: &[f64]) {
        assert_eq!(left.len(), self.nrows);
        assert_eq!(right.len(), self.ncols);
        for j in 0..self.ncols {
            for p in self.colptr[j]..self.colptr[j + 1] {
                self.values[p] *= left[self.rowind[p]] * right[j];
            }
        }
    }

    pub fn col_inf_norms(&self) -> Vec<f64> {
        (0..self.ncols)
            .map(|j| {
                self.values[self.colptr[j]..self.colptr[j + 1]]
                    .iter()
                    .fold(0.0f64, |m, v| m.max(v.abs()))
            })
            .collect()
    }

    pub fn row_inf_norms(&self) -> Vec<f64> {
        let mut out = vec![0.0f64; self.nrows];
        for (i, _, v) in self.triplets() {
            out[i] = out[i].max(v.abs());
        }
        out
    }

    pub fn is_symmetric(&self, tol: f64) -> bool {
        if self.nrows != self.ncols {
            return false;
        }
        let t = self.transpose();
        self.triplets()
            .all(|(i, j, v)| (t.get(i, j) - v).abs() <= tol * (1.0 + v.abs()))
            && t.triplets()
                .all(|(i, j, v)| (self.get(i, j) - v).abs() <= tol * (1.0 + v.abs()))
    }

    /// Row-major dense copy.
    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let mut d = vec![vec![0.0; self.ncols]; self.nrows];
        for (i, j, v) in self.triplets() {
            d[i][j] += v;
        }
        d
    }
}

/// Symmetric permutation of an upper-triangular matrix: returns the upper
/// triangle of `P A Pᵀ`, where `iperm[old] = new`.
pub fn permute_upper(a: &CscMatrix, iperm: &[usize]) -> CscMatrix {
    let n = a.ncols;
    let mut r = Vec::with_capacity(a.nnz());
    let mut c = Vec::with_capacity(a.nnz());
    let mut v = Vec::with_capacity(a.nnz());
    for (i, j, x) in a.triplets() {
        let (pi, pj) = (iperm[i], iperm[j]);
        r.push(pi.min(pj));
        c.push(pi.max(pj));
        v.push(x);
    }
    CscMatrix::from_triplets(n, n, &r, &c, &v)
}

pub fn inf_norm(x: &[f64]) -> f64 {
    x.iter().fold(0.0f64, |m, v| m.max(v.abs()))
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> CscMatrix {
        // [1 0 2]
        // [0 3 0]
        CscMatrix::from_triplets(2, 3, &[0, 1, 0, 0], &[0, 1, 2, 0], &[0.5, 3.0, 2.0, 0.5])
    }

    #[test]
    fn duplicates_are_summed() {
        let a = sample();
        assert_eq!(a.nnz(), 3);
        assert_eq!(a.get(0, 0), 1.0);
        assert_eq!(a.get(1, 0), 0.0);
    }

    #[test]
    fn products_match_dense() {
        let a = sample();
        assert_eq!(a.mul(&[1.0, 2.0, 3.0]), vec![7.0, 6.0]);
        assert_eq!(a.tmul(&[1.0, 2.0]), vec![1.0, 6.0, 2.0]);
        assert_eq!(a.transpose().to_dense(), vec![vec![1.0, 0.0], vec![0.0, 3.0], vec![2.0, 0.0]]);
    }

    #[test]
    fn vstack_and_select() {
        let a = sample();
        let i = CscMatrix::identity(3);
        let s = CscMatrix::vstack(&[&a, &i]);
        assert_eq!(s.nrows, 5);
        assert_eq!(s.get(4, 2), 1.0);
        let picked = s.select_rows(&[4, 0]);
        assert_eq!(picked.to_dense(), vec![vec![0.0, 0.0, 1.0], vec![1.0, 0.0, 2.0]]);
    }

    #[test]
    fn permute_keeps_upper() {
        let a = CscMatrix::from_triplets(3, 3, &[0, 0, 1, 2], &[0, 2, 1, 2], &[4.0, 1.0, 5.0, 6.0]);
        let p = permute_upper(&a, &[2, 0, 1]);
        assert!(p.triplets().all(|(i, j, _)| i <= j));
        assert_eq!(p.get(1, 2), 1.0);
        assert_eq!(p.get(2, 2), 4.0);
    }
}
