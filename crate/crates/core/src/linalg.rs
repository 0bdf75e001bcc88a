//! Dense and banded Cholesky factorizations with the diagonal-jitter policy.

use faer::dyn_stack::{MemBuffer, MemStack};
use faer::linalg::cholesky::llt::factor::{cholesky_in_place, cholesky_in_place_scratch};
use faer::{Mat, MatRef, Par};

use crate::error::{Error, Result};

/// Relative size of the one-shot diagonal jitter, as a fraction of the mean
/// diagonal entry.
pub const JITTER_FRACTION: f64 = 1e-10;

/// Lower Cholesky factor `L` of a symmetric positive-definite matrix.
#[derive(Debug, Clone)]
pub struct Cholesky {
    l: Mat<f64>,
    jitter: f64,
}

fn llt_in_place(mut a: Mat<f64>) -> std::result::Result<Mat<f64>, (Mat<f64>, usize)> {
    let n = a.nrows();
    let mut mem = MemBuffer::new(cholesky_in_place_scratch::<f64>(n, Par::Seq, Default::default()));
    let stack = MemStack::new(&mut mem);
    match cholesky_in_place(a.as_mut(), Default::default(), Par::Seq, stack, Default::default()) {
        Ok(_) => Ok(a),
        Err(faer::linalg::cholesky::llt::factor::LltError::NonPositivePivot { index }) => {
            Err((a, index))
        }
    }
}

impl Cholesky {
    /// Factors `a`, reading only its lower triangle. On failure the diagonal is
    /// raised once by `JITTER_FRACTION * mean(diag)` and the factorization is
    /// retried; a second failure is reported as not positive definite.
    pub fn factor(a: Mat<f64>) -> Result<Self> {
        let n = a.nrows();
        assert_eq!(n, a.ncols(), "Cholesky::factor needs a square matrix");
        if n == 0 {
            return Ok(Cholesky { l: a, jitter: 0.0 });
        }
        if (0..n).any(|i| !a[(i, i)].is_finite()) {
            return Err(Error::PositiveDefiniteness { pivot: 0, dim: n });
        }
        let diag: Vec<f64> = (0..n).map(|i| a[(i, i)]).collect();
        // cholesky_in_place overwrites the lower triangle, so keep a copy for the retry
        let backup = a.clone();
        match llt_in_place(a) {
            Ok(l) => Ok(Cholesky::finish(l, 0.0)),
            Err(_) => {
                let jitter = JITTER_FRACTION * diag.iter().sum::<f64>() / n as f64;
                let mut b = backup;
                for i in 0..n {
                    b[(i, i)] += jitter;
                }
                match llt_in_place(b) {
                    Ok(l) => Ok(Cholesky::finish(l, jitter)),
                    Err((_, pivot)) => Err(Error::PositiveDefiniteness { pivot, dim: n }),
                }
            }
        }
    }

    fn finish(mut l: Mat<f64>, jitter: f64) -> Self {
        let n = l.nrows();
        for j in 1..n {
            for i in 0..j {
                l[(i, j)] = 0.0;
            }
        }
        Cholesky { l, jitter }
    }

    pub fn dim(&self) -> usize {
        self.l.nrows()
    }

    /// Diagonal jitter that had to be added, zero if none.
    pub fn jitter(&self) -> f64 {
        self.jitter
    }

    pub fn l(&self) -> MatRef<'_, f64> {
        self.l.as_ref()
    }

    pub fn log_det(&self) -> f64 {
        2.0 * (0..self.dim()).map(|i| self.l[(i, i)].ln()).sum::<f64>()
    }

    fn col(&self, j: usize) -> &[f64] {
        self.l
            .col(j)
            .try_as_col_major()
            .expect("owned matrix columns are contiguous")
            .as_slice()
    }

    /// Overwrites `v` with `L^{-1} v`.
    pub fn forward_solve(&self, v: &mut [f64]) {
        let n = self.dim();
        assert_eq!(v.len(), n);
        for j in 0..n {
            let col = self.col(j);
            v[j] /= col[j];
            let vj = v[j];
            if vj != 0.0 {
                for (vi, lij) in v[j + 1..].iter_mut().zip(&col[j + 1..]) {
                    *vi -= lij * vj;
                }
            }
        }
    }

    /// Overwrites `v` with `L^{-T} v`.
    pub fn backward_solve(&self, v: &mut [f64]) {
        let n = self.dim();
        assert_eq!(v.len(), n);
        for j in (0..n).rev() {
            let col = self.col(j);
            let dot: f64 = v[j + 1..].iter().zip(&col[j + 1..]).map(|(a, b)| a * b).sum();
            v[j] = (v[j] - dot) / col[j];
        }
    }

    /// Solves `A x = b`.
    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let mut x = b.to_vec();
        self.forward_solve(&mut x);
        self.backward_solve(&mut x);
        x
    }

    /// Returns `L w`.
    pub fn lower_mul(&self, w: &[f64]) -> Vec<f64> {
        let n = self.dim();
        assert_eq!(w.len(), n);
        let mut out = vec![0.0; n];
        for (j, &wj) in w.iter().enumerate() {
            if wj == 0.0 {
                continue;
            }
            let col = self.col(j);
            for (o, lij) in out[j..].iter_mut().zip(&col[j..]) {
                *o += lij * wj;
            }
        }
        out
    }

    /// Dense inverse `A^{-1}`.
    pub fn inverse(&self) -> Mat<f64> {
        let n = self.dim();
        let mut inv = Mat::<f64>::zeros(n, n);
        let mut e = vec![0.0; n];
        for j in 0..n {
            e.iter_mut().for_each(|x| *x = 0.0);
            e[j] = 1.0;
            let x = self.solve(&e);
            for i in 0..n {
                inv[(i, j)] = x[i];
            }
        }
        inv
    }
}

/// Cholesky factor of a symmetric banded matrix, stored by rows: row `i`
/// holds `L[i, i-bw..=i]`.
#[derive(Debug, Clone)]
pub struct BandCholesky {
    n: usize,
    bw: usize,
    rows: Vec<f64>,
}

impl BandCholesky {
    /// Factors the `n x n` matrix whose entries `a(i, j)` vanish for
    /// `|i - j| > bw`. `a` is queried for `j <= i` only.
    pub fn factor(n: usize, bw: usize, a: impl Fn(usize, usize) -> f64) -> Result<Self> {
        let width = bw + 1;
        let mut rows = vec![0.0; n * width];
        // slot k of row i is column i - bw + k
        for i in 0..n {
            let lo = i.saturating_sub(bw);
            for j in lo..=i {
                rows[i * width + (j + bw - i)] = a(i, j);
            }
        }
        let mean_diag = (0..n).map(|i| rows[i * width + bw]).sum::<f64>() / n.max(1) as f64;
        let original = rows.clone();
        match Self::factor_rows(n, bw, &mut rows) {
            Ok(()) => Ok(BandCholesky { n, bw, rows }),
            Err(_) => {
                let mut rows = original;
                let jitter = JITTER_FRACTION * mean_diag;
                for i in 0..n {
                    rows[i * width + bw] += jitter;
                }
                Self::factor_rows(n, bw, &mut rows)
                    .map_err(|pivot| Error::PositiveDefiniteness { pivot, dim: n })?;
                Ok(BandCholesky { n, bw, rows })
            }
        }
    }

    fn factor_rows(n: usize, bw: usize, rows: &mut [f64]) -> std::result::Result<(), usize> {
        let width = bw + 1;
        for i in 0..n {
            let lo_i = i.saturating_sub(bw);
            for j in lo_i..=i {
                let lo = lo_i.max(j.saturating_sub(bw));
                let mut s = rows[i * width + (j + bw - i)];
                for k in lo..j {
                    s -= rows[i * width + (k + bw - i)] * rows[j * width + (k + bw - j)];
                }
                if j == i {
                    if !(s > 0.0) {
                        return Err(i);
                    }
                    rows[i * width + bw] = s.sqrt();
                } else {
                    rows[i * width + (j + bw - i)] = s / rows[j * width + bw];
                }
            }
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn bandwidth(&self) -> usize {
        self.bw
    }

    /// Returns `L w`.
    pub fn lower_mul(&self, w: &[f64]) -> Vec<f64> {
        assert_eq!(w.len(), self.n);
        let width = self.bw + 1;
        (0..self.n)
            .map(|i| {
                let lo = i.saturating_sub(self.bw);
                (lo..=i)
                    .map(|k| self.rows[i * width + (k + self.bw - i)] * w[k])
                    .sum()
            })
            .collect()
    }
}
