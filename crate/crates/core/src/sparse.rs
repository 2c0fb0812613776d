//! Compressed-row sparse matrices and a banded LU factorization with
//! partial pivoting, used for the steady-state linear solves.

use std::io::{self, Write};

use num_complex::Complex64;

/// Complex CSR matrix. Column indices within a row are strictly increasing.
#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix {
    n_rows: usize,
    n_cols: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<Complex64>,
}

impl CsrMatrix {
    /// Build from per-row entry lists. Duplicate columns are summed and
    /// exact zeros dropped.
    pub fn from_rows(n_cols: usize, rows: Vec<Vec<(usize, Complex64)>>) -> Self {
        let n_rows = rows.len();
        let mut row_ptr = Vec::with_capacity(n_rows + 1);
        let mut col_idx = Vec::new();
        let mut values = Vec::new();
        row_ptr.push(0);
        for mut row in rows {
            row.sort_by_key(|&(c, _)| c);
            let mut iter = row.into_iter().peekable();
            while let Some((c, mut v)) = iter.next() {
                assert!(c < n_cols, "column {c} out of range {n_cols}");
                while let Some(&(c2, v2)) = iter.peek() {
                    if c2 != c {
                        break;
                    }
                    v += v2;
                    iter.next();
                }
                if v != Complex64::new(0.0, 0.0) {
                    col_idx.push(c);
                    values.push(v);
                }
            }
            row_ptr.push(col_idx.len());
        }
        CsrMatrix {
            n_rows,
            n_cols,
            row_ptr,
            col_idx,
            values,
        }
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row(&self, r: usize) -> impl Iterator<Item = (usize, Complex64)> + '_ {
        let span = self.row_ptr[r]..self.row_ptr[r + 1];
        self.col_idx[span.clone()]
            .iter()
            .copied()
            .zip(self.values[span].iter().copied())
    }

    pub fn matvec(&self, x: &[Complex64]) -> Vec<Complex64> {
        assert_eq!(x.len(), self.n_cols);
        (0..self.n_rows)
            .map(|r| self.row(r).map(|(c, v)| v * x[c]).sum())
            .collect()
    }

    /// Maximum absolute row sum.
    pub fn norm_inf(&self) -> f64 {
        (0..self.n_rows)
            .map(|r| self.row(r).map(|(_, v)| v.norm()).sum::<f64>())
            .fold(0.0, f64::max)
    }

    /// Lower and upper bandwidths `(kl, ku)`.
    pub fn bandwidths(&self) -> (usize, usize) {
        let mut kl = 0;
        let mut ku = 0;
        for r in 0..self.n_rows {
            for (c, _) in self.row(r) {
                if c < r {
                    kl = kl.max(r - c);
                } else {
                    ku = ku.max(c - r);
                }
            }
        }
        (kl, ku)
    }

    /// Dense copy, for tests and small problems.
    pub fn to_dense(&self) -> nalgebra::DMatrix<Complex64> {
        let mut m = nalgebra::DMatrix::zeros(self.n_rows, self.n_cols);
        for r in 0..self.n_rows {
            for (c, v) in self.row(r) {
                m[(r, c)] = v;
            }
        }
        m
    }

    /// Coordinate-format dump: one `row col re im` line per stored entry,
    /// 17 significant digits, rows then columns ascending.
    pub fn write_coordinate<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(out, "# {} {} {}", self.n_rows, self.n_cols, self.nnz())?;
        for r in 0..self.n_rows {
            for (c, v) in self.row(r) {
                writeln!(out, "{} {} {:.16e} {:.16e}", r, c, v.re, v.im)?;
            }
        }
        Ok(())
    }
}

/// LU factors of a banded matrix, `P A = L U`, stored row-wise with each
/// row covering columns `[i - kl, i + ku + kl]` to make room for pivoting
/// fill-in.
#[derive(Debug, Clone)]
pub struct BandedLu {
    n: usize,
    kl: usize,
    ku: usize,
    width: usize,
    band: Vec<Complex64>,
    pivots: Vec<usize>,
    min_pivot: f64,
    max_pivot: f64,
}

impl BandedLu {
    /// Factor a square CSR matrix.
    pub fn factor(a: &CsrMatrix) -> Self {
        assert_eq!(a.n_rows(), a.n_cols(), "banded LU needs a square matrix");
        let n = a.n_rows();
        let (kl, ku) = a.bandwidths();
        let width = 2 * kl + ku + 1;
        let mut lu = BandedLu {
            n,
            kl,
            ku,
            width,
            band: vec![Complex64::new(0.0, 0.0); n * width],
            pivots: Vec::with_capacity(n),
            min_pivot: f64::INFINITY,
            max_pivot: 0.0,
        };
        for r in 0..n {
            for (c, v) in a.row(r) {
                *lu.at_mut(r, c) = v;
            }
        }
        lu.eliminate();
        lu
    }

    #[inline]
    fn offset(&self, r: usize, c: usize) -> usize {
        debug_assert!(c + self.kl >= r && c <= r + self.ku + self.kl);
        r * self.width + (c + self.kl - r)
    }

    #[inline]
    fn at(&self, r: usize, c: usize) -> Complex64 {
        self.band[self.offset(r, c)]
    }

    #[inline]
    fn at_mut(&mut self, r: usize, c: usize) -> &mut Complex64 {
        let o = self.offset(r, c);
        &mut self.band[o]
    }

    fn eliminate(&mut self) {
        let n = self.n;
        let zero = Complex64::new(0.0, 0.0);
        for k in 0..n {
            let last_row = (k + self.kl).min(n - 1);
            let last_col = (k + self.ku + self.kl).min(n - 1);
            let mut p = k;
            let mut best = self.at(k, k).norm();
            for r in k + 1..=last_row {
                let v = self.at(r, k).norm();
                if v > best {
                    best = v;
                    p = r;
                }
            }
            self.pivots.push(p);
            if p != k {
                for c in k..=last_col {
                    let (ok, op) = (self.offset(k, c), self.offset(p, c));
                    self.band.swap(ok, op);
                }
            }
            self.min_pivot = self.min_pivot.min(best);
            self.max_pivot = self.max_pivot.max(best);
            let pivot = self.at(k, k);
            if pivot == zero {
                continue;
            }
            let inv = pivot.inv();
            for r in k + 1..=last_row {
                let l = self.at(r, k) * inv;
                *self.at_mut(r, k) = l;
                if l == zero {
                    continue;
                }
                let src = self.offset(k, k);
                let dst = self.offset(r, k);
                for j in 1..=(last_col - k) {
                    let u = self.band[src + j];
                    self.band[dst + j] -= l * u;
                }
            }
        }
    }

    /// Smallest pivot magnitude relative to the largest.
    pub fn pivot_ratio(&self) -> f64 {
        if self.max_pivot == 0.0 {
            0.0
        } else {
            self.min_pivot / self.max_pivot
        }
    }

    pub fn is_singular(&self) -> bool {
        self.min_pivot == 0.0
    }

    /// Solve `A x = b`. Zero pivots are treated as unit pivots, which picks
    /// one member of the solution family of a singular system.
    pub fn solve(&self, b: &[Complex64]) -> Vec<Complex64> {
        assert_eq!(b.len(), self.n);
        let n = self.n;
        let mut x = b.to_vec();
        for k in 0..n {
            let p = self.pivots[k];
            if p != k {
                x.swap(k, p);
            }
            let xk = x[k];
            for r in k + 1..=(k + self.kl).min(n - 1) {
                x[r] -= self.at(r, k) * xk;
            }
        }
        for k in (0..n).rev() {
            let last_col = (k + self.ku + self.kl).min(n - 1);
            let mut acc = x[k];
            for c in k + 1..=last_col {
                acc -= self.at(k, c) * x[c];
            }
            let d = self.at(k, k);
            x[k] = if d == Complex64::new(0.0, 0.0) { acc } else { acc / d };
        }
        x
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn bandwidths(&self) -> (usize, usize) {
        (self.kl, self.ku)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn random_banded(n: usize, kl: usize, ku: usize, seed: u64) -> CsrMatrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let rows = (0..n)
            .map(|r| {
                let lo = r.saturating_sub(kl);
                let hi = (r + ku).min(n - 1);
                (lo..=hi)
                    .map(|col| (col, c(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))))
                    .collect()
            })
            .collect();
        CsrMatrix::from_rows(n, rows)
    }

    #[test]
    fn csr_merges_duplicates_and_sorts() {
        let m = CsrMatrix::from_rows(3, vec![vec![(2, c(1.0, 0.0)), (0, c(2.0, 0.0)), (2, c(1.0, 1.0))], vec![], vec![(1, c(0.0, 0.0))]]);
        assert_eq!(m.nnz(), 2);
        let row0: Vec<_> = m.row(0).collect();
        assert_eq!(row0, vec![(0, c(2.0, 0.0)), (2, c(2.0, 1.0))]);
        assert_eq!(m.bandwidths(), (0, 2));
    }

    #[test]
    fn banded_solve_matches_dense() {
        for (n, kl, ku, seed) in [(1, 0, 0, 1), (7, 2, 1, 2), (40, 5, 9, 3), (60, 13, 3, 4)] {
            let a = random_banded(n, kl, ku, seed);
            let mut rng = ChaCha8Rng::seed_from_u64(seed + 100);
            let b: Vec<Complex64> = (0..n).map(|_| c(rng.random_range(-1.0..1.0), 0.3)).collect();
            let x = BandedLu::factor(&a).solve(&b);
            let r = a.matvec(&x);
            let err: f64 = r.iter().zip(&b).map(|(u, v)| (u - v).norm()).fold(0.0, f64::max);
            assert!(err < 1e-10, "n={n} residual {err}");
            let dense = a.to_dense().lu().solve(&nalgebra::DVector::from_vec(b.clone())).unwrap();
            let diff: f64 = x.iter().zip(dense.iter()).map(|(u, v)| (u - v).norm()).fold(0.0, f64::max);
            assert!(diff < 1e-9);
        }
    }

    #[test]
    fn pivoting_handles_zero_diagonal() {
        // [[0, 1], [1, 0]] needs a row swap.
        let a = CsrMatrix::from_rows(2, vec![vec![(1, c(1.0, 0.0))], vec![(0, c(1.0, 0.0))]]);
        let lu = BandedLu::factor(&a);
        assert!(!lu.is_singular());
        let x = lu.solve(&[c(3.0, 0.0), c(5.0, 0.0)]);
        assert_eq!(x, vec![c(5.0, 0.0), c(3.0, 0.0)]);
    }

    #[test]
    fn singular_matrix_is_reported() {
        let a = CsrMatrix::from_rows(2, vec![vec![(0, c(1.0, 0.0))], vec![(0, c(2.0, 0.0))]]);
        let lu = BandedLu::factor(&a);
        assert!(lu.is_singular());
    }

    #[test]
    fn coordinate_dump_format() {
        let a = CsrMatrix::from_rows(2, vec![vec![(1, c(0.1, -2.0))], vec![]]);
        let mut buf = Vec::new();
        a.write_coordinate(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text, "# 2 2 1\n0 1 1.0000000000000001e-1 -2.0000000000000000e0\n");
    }
}
