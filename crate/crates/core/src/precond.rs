//! Preconditioner for the normal operator `dbar theta` on (q+1)-forms.
//!
//! On a product grid the unconstrained Hodge Laplacian acts on each component
//! `H` as a Kronecker sum of plane operators: `d d^*` on planes whose label is
//! in `H`, `d^* d` on the others. After the similarity `W^{1/2}` every plane
//! operator is Hermitian. The small planes are diagonalised densely; the
//! largest plane is solved with sparse Cholesky factors of `S + mu I`, one per
//! band of shifts `mu`. Banding keeps every block Hermitian positive
//! definite, so the result is a valid preconditioner for conjugate gradients
//! even though it is not the exact inverse.

use std::collections::{BTreeMap, HashMap};

use faer::linalg::matmul::matmul;
use faer::sparse::linalg::LltError;
use faer::sparse::{SparseColMat, Triplet};
use faer::{Accum, Mat, MatMut, MatRef, Par, Side};
use faer::linalg::solvers::Solve;
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::form::{FormField, MultiIndex};
use crate::grid::{Grid, Plane};

/// Planes larger than this are never diagonalised densely.
pub const MAX_DENSE_PLANE: usize = 1600;
/// Ratio between consecutive shift bands.
const BAND_RATIO: f64 = 1.5;

type Sparse = SparseColMat<usize, Complex64>;

/// `W^{1/2} d W^{-1/2}` as (row, col, value) triplets.
fn balanced_d(plane: &Plane) -> Vec<(usize, usize, Complex64)> {
    let w = plane.weights();
    plane
        .dzbar_op()
        .entries()
        .map(|(i, k, v)| (i, k, v * (w[i] / w[k]).sqrt()))
        .collect()
}

/// `B B^H` (plus = true) or `B^H B` as row maps.
fn gram(plane: &Plane, plus: bool) -> Vec<BTreeMap<usize, Complex64>> {
    let m = plane.len();
    let b = balanced_d(plane);
    // group by the summed index
    let mut groups: Vec<Vec<(usize, Complex64)>> = vec![Vec::new(); m];
    for (i, k, v) in b {
        if plus {
            groups[k].push((i, v));
        } else {
            groups[i].push((k, v.conj()));
        }
    }
    let mut rows: Vec<BTreeMap<usize, Complex64>> = vec![BTreeMap::new(); m];
    for g in &groups {
        for &(i, a) in g {
            for &(j, c) in g {
                *rows[i].entry(j).or_default() += a * c.conj();
            }
        }
    }
    rows
}

struct DenseModes {
    /// Eigenvectors as columns.
    vecs: Mat<Complex64>,
    vecs_h: Mat<Complex64>,
    vals: Vec<f64>,
}

fn dense_modes(plane: &Plane, plus: bool) -> Result<DenseModes> {
    let m = plane.len();
    let rows = gram(plane, plus);
    let a = Mat::from_fn(m, m, |i, j| rows[i].get(&j).copied().unwrap_or_default());
    let evd = a
        .self_adjoint_eigen(Side::Lower)
        .map_err(|e| Error::Solver(format!("plane eigendecomposition failed: {e:?}")))?;
    let vals = (0..m).map(|k| evd.S()[k].re.max(0.0)).collect();
    Ok(DenseModes {
        vecs: evd.U().to_owned(),
        vecs_h: evd.U().adjoint().to_owned(),
        vals,
    })
}

/// Applies `q` along axis `p` of a row-major tensor, in place.
fn transform_axis(data: &mut [Complex64], sizes: &[usize], p: usize, q: MatRef<'_, Complex64>, scratch: &mut Vec<Complex64>) {
    let m = sizes[p];
    let inner: usize = sizes[p + 1..].iter().product();
    let outer = data.len() / (m * inner);
    scratch.resize(data.len(), Complex64::default());
    if inner == 1 {
        // the tensor is an (m x outer) column-major matrix
        let x = MatRef::from_column_major_slice(&*data, m, outer);
        let y = MatMut::from_column_major_slice_mut(&mut scratch[..], m, outer);
        matmul(y, Accum::Replace, q, x, Complex64::new(1.0, 0.0), Par::Seq);
    } else {
        // each outer block is an (inner x m) column-major matrix X^T; Y^T = X^T Q^T
        for o in 0..outer {
            let r = o * m * inner..(o + 1) * m * inner;
            let x = MatRef::from_column_major_slice(&data[r.clone()], inner, m);
            let y = MatMut::from_column_major_slice_mut(&mut scratch[r], inner, m);
            matmul(y, Accum::Replace, x, q.transpose(), Complex64::new(1.0, 0.0), Par::Seq);
        }
    }
    data.copy_from_slice(scratch);
}

fn band_of(mu: f64, floor: f64) -> i32 {
    if mu < floor {
        0
    } else {
        1 + ((mu / floor).ln() / BAND_RATIO.ln()).floor() as i32
    }
}

fn band_shift(band: i32, floor: f64) -> f64 {
    if band == 0 {
        floor
    } else {
        floor * BAND_RATIO.powf(band as f64 - 0.5)
    }
}

pub struct KroneckerPreconditioner {
    degree: usize,
    sizes: Vec<usize>,
    strides: Vec<usize>,
    big: usize,
    /// `sqrt` of the tensor weights.
    root_w: Vec<f64>,
    /// Modes of the small planes, keyed by (position, plus).
    modes: HashMap<(usize, bool), DenseModes>,
    /// Sparse factors of the big plane, keyed by (plus, band).
    factors: HashMap<(bool, i32), faer::sparse::linalg::solvers::Llt<usize, Complex64>>,
    floor: f64,
}

impl KroneckerPreconditioner {
    /// Builds the preconditioner for `(q+1)`-forms, i.e. the range of
    /// `dbar_q`. Returns `None` when a small plane is too large to
    /// diagonalise densely.
    pub fn new(grid: &Grid, target_degree: usize) -> Result<Option<Self>> {
        let n = grid.n();
        if target_degree == 0 || target_degree > n {
            return Err(Error::DegreeOutOfRange { q: target_degree, n });
        }
        let sizes = grid.sizes().to_vec();
        let big = (0..n).max_by_key(|&p| (sizes[p], std::cmp::Reverse(p))).unwrap();
        if (0..n).any(|p| p != big && sizes[p] > MAX_DENSE_PLANE) {
            return Ok(None);
        }
        let planes = grid.planes();
        let r = planes[big].radius();
        let floor = 0.05 / (r * r);

        let keys = MultiIndex::combinations(grid.labels(), target_degree);
        let signs: Vec<Vec<bool>> = keys
            .iter()
            .map(|h| planes.iter().map(|pl| h.contains(pl.label())).collect())
            .collect();

        let mut modes = HashMap::new();
        for s in &signs {
            for p in (0..n).filter(|&p| p != big) {
                if let std::collections::hash_map::Entry::Vacant(e) = modes.entry((p, s[p])) {
                    e.insert(dense_modes(&planes[p], s[p])?);
                }
            }
        }

        // shift bands needed by each sign pattern of the big plane
        let mut bands: BTreeMap<bool, std::collections::BTreeSet<i32>> = BTreeMap::new();
        for s in &signs {
            let set = bands.entry(s[big]).or_default();
            for_each_mode(&sizes, big, |idx| {
                let mu: f64 = idx.iter().map(|&(p, k)| modes[&(p, s[p])].vals[k]).sum();
                set.insert(band_of(mu, floor));
            });
        }

        let mut factors = HashMap::new();
        for (plus, set) in bands {
            let rows = gram(&planes[big], plus);
            for band in set {
                let shift = band_shift(band, floor);
                let mut trip = Vec::new();
                for (i, row) in rows.iter().enumerate() {
                    for (&j, &v) in row {
                        if j <= i {
                            let v = if i == j { v + shift } else { v };
                            trip.push(Triplet::new(i, j, v));
                        }
                    }
                }
                let m = rows.len();
                let a = Sparse::try_new_from_triplets(m, m, &trip)
                    .map_err(|e| Error::Solver(format!("sparse assembly failed: {e:?}")))?;
                let llt = a.sp_cholesky(Side::Lower).map_err(|e: LltError| {
                    Error::Solver(format!("sparse Cholesky failed: {e:?}"))
                })?;
                factors.insert((plus, band), llt);
            }
        }

        Ok(Some(Self {
            degree: target_degree,
            sizes,
            strides: grid.strides().to_vec(),
            big,
            root_w: grid.weights().iter().map(|w| w.sqrt()).collect(),
            modes,
            factors,
            floor,
        }))
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    /// Approximate inverse of the Hodge Laplacian applied to `r`.
    pub fn apply(&self, r: &FormField) -> Result<FormField> {
        if r.degree() != self.degree {
            return Err(Error::DegreeMismatch {
                left: r.degree(),
                right: self.degree,
            });
        }
        let grid = r.grid().clone();
        let planes = grid.planes();
        let n = self.sizes.len();
        let mut out = FormField::zeros(grid.clone(), self.degree)?;
        let mut scratch = Vec::new();
        for (h, v) in r.iter() {
            let s: Vec<bool> = planes.iter().map(|pl| h.contains(pl.label())).collect();
            let mut x: Vec<Complex64> = v.iter().zip(&self.root_w).map(|(a, w)| a * w).collect();
            for p in (0..n).filter(|&p| p != self.big) {
                let md = &self.modes[&(p, s[p])];
                transform_axis(&mut x, &self.sizes, p, md.vecs_h.as_ref(), &mut scratch);
            }
            self.solve_big(&mut x, &s)?;
            for p in (0..n).filter(|&p| p != self.big) {
                let md = &self.modes[&(p, s[p])];
                transform_axis(&mut x, &self.sizes, p, md.vecs.as_ref(), &mut scratch);
            }
            for (a, w) in x.iter_mut().zip(&self.root_w) {
                *a /= w;
            }
            out.set_component(h.clone(), x)?;
        }
        Ok(out)
    }

    fn solve_big(&self, x: &mut [Complex64], s: &[bool]) -> Result<()> {
        let b = self.big;
        let m = self.sizes[b];
        let stride = self.strides[b];
        let mut groups: BTreeMap<i32, Vec<usize>> = BTreeMap::new();
        for_each_mode(&self.sizes, b, |idx| {
            let mu: f64 = idx.iter().map(|&(p, k)| self.modes[&(p, s[p])].vals[k]).sum();
            let base: usize = idx.iter().map(|&(p, k)| k * self.strides[p]).sum();
            groups.entry(band_of(mu, self.floor)).or_default().push(base);
        });
        for (band, bases) in groups {
            let llt = self
                .factors
                .get(&(s[b], band))
                .ok_or_else(|| Error::Solver(format!("no factor for shift band {band}")))?;
            let mut rhs = Mat::from_fn(m, bases.len(), |j, c| x[bases[c] + j * stride]);
            llt.solve_in_place(rhs.as_mut());
            for (c, &base) in bases.iter().enumerate() {
                for j in 0..m {
                    x[base + j * stride] = rhs[(j, c)];
                }
            }
        }
        Ok(())
    }
}

/// Calls `f` with `(position, mode)` pairs for every combination of modes on
/// the planes other than `skip`.
fn for_each_mode(sizes: &[usize], skip: usize, mut f: impl FnMut(&[(usize, usize)])) {
    let axes: Vec<usize> = (0..sizes.len()).filter(|&p| p != skip).collect();
    let mut idx: Vec<(usize, usize)> = axes.iter().map(|&p| (p, 0)).collect();
    loop {
        f(&idx);
        let mut a = axes.len();
        loop {
            if a == 0 {
                return;
            }
            a -= 1;
            idx[a].1 += 1;
            if idx[a].1 < sizes[axes[a]] {
                break;
            }
            idx[a].1 = 0;
        }
    }
}
