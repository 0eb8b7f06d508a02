use std::collections::BTreeMap;

use num_complex::Complex64;

/// Compressed sparse rows over one coordinate plane.
#[derive(Clone, Debug, Default)]
pub struct Csr {
    pub(crate) rowptr: Vec<usize>,
    pub(crate) cols: Vec<u32>,
    pub(crate) vals: Vec<Complex64>,
}

impl Csr {
    pub fn from_rows(rows: Vec<BTreeMap<usize, Complex64>>) -> Self {
        let mut rowptr = Vec::with_capacity(rows.len() + 1);
        let mut cols = Vec::new();
        let mut vals = Vec::new();
        rowptr.push(0);
        for row in rows {
            for (c, v) in row {
                if v.re != 0.0 || v.im != 0.0 {
                    cols.push(c as u32);
                    vals.push(v);
                }
            }
            rowptr.push(cols.len());
        }
        Self { rowptr, cols, vals }
    }

    pub fn nrows(&self) -> usize {
        self.rowptr.len().saturating_sub(1)
    }

    pub fn nnz(&self) -> usize {
        self.vals.len()
    }

    pub fn row(&self, r: usize) -> impl Iterator<Item = (usize, Complex64)> + '_ {
        let (a, b) = (self.rowptr[r], self.rowptr[r + 1]);
        self.cols[a..b]
            .iter()
            .zip(&self.vals[a..b])
            .map(|(&c, &v)| (c as usize, v))
    }

    pub fn entries(&self) -> impl Iterator<Item = (usize, usize, Complex64)> + '_ {
        (0..self.nrows()).flat_map(move |r| self.row(r).map(move |(c, v)| (r, c, v)))
    }

    pub fn max_abs(&self) -> f64 {
        self.vals.iter().map(|v| v.norm()).fold(0.0, f64::max)
    }

    /// `D^{-1} A^H D` for a positive diagonal `D`: the adjoint of `self` in
    /// the inner product weighted by `d`.
    pub fn weighted_adjoint(&self, d: &[f64]) -> Self {
        let mut rows: Vec<BTreeMap<usize, Complex64>> = vec![BTreeMap::new(); self.nrows()];
        for (r, c, v) in self.entries() {
            *rows[c].entry(r).or_default() += v.conj() * (d[r] / d[c]);
        }
        Self::from_rows(rows)
    }

    /// Dense product for small matrices, used only by tests.
    pub fn to_dense(&self) -> Vec<Vec<Complex64>> {
        let n = self.nrows();
        let mut out = vec![vec![Complex64::new(0.0, 0.0); n]; n];
        for (r, c, v) in self.entries() {
            out[r][c] += v;
        }
        out
    }
}
