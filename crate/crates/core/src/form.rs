//! Multi-index bookkeeping and component-wise arithmetic for (0,q)-form fields.
//!
//! A (0,q)-form on a grid is stored as a sparse map from strictly increasing
//! multi-indices to one complex value per domain node. Missing components
//! read back as zero.

use std::borrow::Cow;
use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::sum::{pairwise_sum, pairwise_sum_c};

/// Strictly increasing tuple of 1-based coordinate labels.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "Vec<usize>", into = "Vec<usize>")]
pub struct MultiIndex(Vec<usize>);

impl MultiIndex {
    pub fn new(indices: Vec<usize>) -> Result<Self> {
        if indices.iter().any(|&i| i == 0) {
            return Err(Error::InvalidIndex(format!(
                "{indices:?}: coordinate labels start at 1"
            )));
        }
        if indices.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidIndex(format!(
                "{indices:?}: not strictly increasing"
            )));
        }
        Ok(Self(indices))
    }

    pub fn empty() -> Self {
        Self(Vec::new())
    }

    pub fn degree(&self) -> usize {
        self.0.len()
    }

    pub fn indices(&self) -> &[usize] {
        &self.0
    }

    pub fn contains(&self, i: usize) -> bool {
        self.0.binary_search(&i).is_ok()
    }

    /// Tangential components are the ones that survive pullback to `z_1 = 0`.
    pub fn is_tangential(&self) -> bool {
        !self.contains(1)
    }

    pub fn within(&self, n: usize) -> bool {
        self.0.iter().all(|&i| (1..=n).contains(&i))
    }

    /// All increasing multi-indices of length `q` drawn from `labels`, in
    /// lexicographic order.
    pub fn combinations(labels: &[usize], q: usize) -> Vec<MultiIndex> {
        fn rec(labels: &[usize], q: usize, start: usize, cur: &mut Vec<usize>, out: &mut Vec<MultiIndex>) {
            if cur.len() == q {
                out.push(MultiIndex(cur.clone()));
                return;
            }
            for k in start..labels.len() {
                cur.push(labels[k]);
                rec(labels, q, k + 1, cur, out);
                cur.pop();
            }
        }
        let mut out = Vec::new();
        if q <= labels.len() {
            rec(labels, q, 0, &mut Vec::with_capacity(q), &mut out);
        }
        out
    }

    /// All multi-indices of length `q` over `1..=n`.
    pub fn all(n: usize, q: usize) -> Vec<MultiIndex> {
        let labels: Vec<usize> = (1..=n).collect();
        Self::combinations(&labels, q)
    }
}

impl TryFrom<Vec<usize>> for MultiIndex {
    type Error = Error;
    fn try_from(v: Vec<usize>) -> Result<Self> {
        Self::new(v)
    }
}

impl From<MultiIndex> for Vec<usize> {
    fn from(m: MultiIndex) -> Self {
        m.0
    }
}

impl fmt::Display for MultiIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(")?;
        for (k, i) in self.0.iter().enumerate() {
            if k > 0 {
                write!(f, ",")?;
            }
            write!(f, "{i}")?;
        }
        write!(f, ")")
    }
}

/// Insert `i` into `k` at its sorted position `p`; the sign is `(-1)^p`.
pub fn insert_index(i: usize, k: &MultiIndex) -> Result<(i8, MultiIndex)> {
    match k.0.binary_search(&i) {
        Ok(_) => Err(Error::DuplicateIndex {
            index: i,
            multi: k.clone(),
        }),
        Err(p) => {
            let mut h = k.0.clone();
            h.insert(p, i);
            Ok((parity_sign(p), MultiIndex(h)))
        }
    }
}

/// Inverse of [`insert_index`]: `insert_index(i, K) == (sign, H)`.
pub fn remove_index(i: usize, h: &MultiIndex) -> Result<(i8, MultiIndex)> {
    match h.0.binary_search(&i) {
        Err(_) => Err(Error::MissingIndex {
            index: i,
            multi: h.clone(),
        }),
        Ok(p) => {
            let mut k = h.0.clone();
            k.remove(p);
            Ok((parity_sign(p), MultiIndex(k)))
        }
    }
}

fn parity_sign(p: usize) -> i8 {
    if p % 2 == 0 {
        1
    } else {
        -1
    }
}

/// A (0,q)-form sampled on the domain nodes of a [`Grid`].
#[derive(Clone, Debug)]
pub struct FormField {
    grid: Arc<Grid>,
    degree: usize,
    components: BTreeMap<MultiIndex, Vec<Complex64>>,
}

impl FormField {
    pub fn zeros(grid: Arc<Grid>, degree: usize) -> Result<Self> {
        if degree > grid.n() {
            return Err(Error::DegreeOutOfRange {
                q: degree,
                n: grid.n(),
            });
        }
        Ok(Self {
            grid,
            degree,
            components: BTreeMap::new(),
        })
    }

    /// Build from explicit components; every key must be a valid degree-`q`
    /// index over the grid's coordinate labels.
    pub fn from_components(
        grid: Arc<Grid>,
        degree: usize,
        components: impl IntoIterator<Item = (MultiIndex, Vec<Complex64>)>,
    ) -> Result<Self> {
        let mut out = Self::zeros(grid, degree)?;
        for (j, v) in components {
            out.set_component(j, v)?;
        }
        Ok(out)
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn len(&self) -> usize {
        self.grid.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grid.len() == 0
    }

    /// The full family of component keys for this degree.
    pub fn keys(&self) -> Vec<MultiIndex> {
        MultiIndex::combinations(self.grid.labels(), self.degree)
    }

    pub fn component(&self, j: &MultiIndex) -> Option<&[Complex64]> {
        self.components.get(j).map(|v| v.as_slice())
    }

    /// Component values, materializing zeros for absent keys.
    pub fn component_or_zeros(&self, j: &MultiIndex) -> Cow<'_, [Complex64]> {
        match self.components.get(j) {
            Some(v) => Cow::Borrowed(v.as_slice()),
            None => Cow::Owned(vec![Complex64::new(0.0, 0.0); self.len()]),
        }
    }

    pub fn set_component(&mut self, j: MultiIndex, values: Vec<Complex64>) -> Result<()> {
        self.check_key(&j)?;
        if values.len() != self.len() {
            return Err(Error::ShapeMismatch {
                expected: self.len(),
                got: values.len(),
            });
        }
        self.components.insert(j, values);
        Ok(())
    }

    /// Mutable access, inserting a zero array if the component is absent.
    pub fn component_mut(&mut self, j: &MultiIndex) -> Result<&mut Vec<Complex64>> {
        self.check_key(j)?;
        let len = self.len();
        Ok(self
            .components
            .entry(j.clone())
            .or_insert_with(|| vec![Complex64::new(0.0, 0.0); len]))
    }

    pub fn remove_component(&mut self, j: &MultiIndex) -> Option<Vec<Complex64>> {
        self.components.remove(j)
    }

    /// Stored (possibly nonzero) components.
    pub fn iter(&self) -> impl Iterator<Item = (&MultiIndex, &Vec<Complex64>)> {
        self.components.iter()
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&MultiIndex, &mut Vec<Complex64>)> {
        self.components.iter_mut()
    }

    fn check_key(&self, j: &MultiIndex) -> Result<()> {
        if j.degree() != self.degree {
            return Err(Error::DegreeMismatch {
                left: j.degree(),
                right: self.degree,
            });
        }
        if !j.indices().iter().all(|i| self.grid.labels().contains(i)) {
            return Err(Error::InvalidIndex(format!(
                "{j} uses labels outside {:?}",
                self.grid.labels()
            )));
        }
        Ok(())
    }

    pub fn check_compatible(&self, other: &FormField) -> Result<()> {
        if self.degree != other.degree {
            return Err(Error::DegreeMismatch {
                left: self.degree,
                right: other.degree,
            });
        }
        if !self.grid.same_as(&other.grid) {
            return Err(Error::GridMismatch);
        }
        Ok(())
    }

    pub fn scale(&mut self, a: Complex64) {
        for v in self.components.values_mut() {
            v.iter_mut().for_each(|x| *x *= a);
        }
    }

    /// Multiply every component pointwise by a real scalar array.
    pub fn mul_scalar_field(&mut self, s: &[f64]) -> Result<()> {
        if s.len() != self.len() {
            return Err(Error::ShapeMismatch {
                expected: self.len(),
                got: s.len(),
            });
        }
        for v in self.components.values_mut() {
            v.iter_mut().zip(s).for_each(|(x, &c)| *x *= c);
        }
        Ok(())
    }

    /// `self += a * x`, in place.
    pub fn axpy_in_place(&mut self, a: Complex64, x: &FormField) -> Result<()> {
        self.check_compatible(x)?;
        for (j, xv) in &x.components {
            let y = self.component_mut(j)?;
            y.iter_mut().zip(xv).for_each(|(y, &x)| *y += a * x);
        }
        Ok(())
    }

    /// Weighted L2 norm `sqrt(l2_inner(x, x))` with unit weight.
    pub fn norm(&self) -> f64 {
        self.norm_weighted(None)
    }

    pub fn norm_weighted(&self, weight: Option<&[f64]>) -> f64 {
        let w = self.grid.weights();
        let sq = pairwise_sum(
            &self
                .components
                .values()
                .map(|v| {
                    let terms: Vec<f64> = match weight {
                        Some(g) => v
                            .iter()
                            .zip(w)
                            .zip(g)
                            .map(|((x, &wi), &gi)| x.norm_sqr() * wi * gi)
                            .collect(),
                        None => v.iter().zip(w).map(|(x, &wi)| x.norm_sqr() * wi).collect(),
                    };
                    pairwise_sum(&terms)
                })
                .collect::<Vec<_>>(),
        );
        sq.max(0.0).sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.components
            .values()
            .flat_map(|v| v.iter().map(|x| x.norm()))
            .fold(0.0, f64::max)
    }

    /// Drop components that are identically zero.
    pub fn prune(&mut self) {
        self.components
            .retain(|_, v| v.iter().any(|x| x.re != 0.0 || x.im != 0.0));
    }
}

/// Componentwise `a * x + y`.
pub fn field_axpy(a: Complex64, x: &FormField, y: &FormField) -> Result<FormField> {
    let mut out = y.clone();
    out.axpy_in_place(a, x)?;
    Ok(out)
}

/// Quadrature inner product `sum_J sum_nodes x_J conj(y_J) weight dV`.
///
/// Conjugate-linear in the second argument.
pub fn l2_inner(x: &FormField, y: &FormField, weight: Option<&[f64]>) -> Result<Complex64> {
    x.check_compatible(y)?;
    if let Some(g) = weight {
        if g.len() != x.len() {
            return Err(Error::ShapeMismatch {
                expected: x.len(),
                got: g.len(),
            });
        }
    }
    let w = x.grid.weights();
    let mut parts = Vec::new();
    for (j, xv) in &x.components {
        let Some(yv) = y.components.get(j) else {
            continue;
        };
        let terms: Vec<Complex64> = match weight {
            Some(g) => xv
                .iter()
                .zip(yv)
                .zip(w.iter().zip(g))
                .map(|((a, b), (&wi, &gi))| a * b.conj() * (wi * gi))
                .collect(),
            None => xv
                .iter()
                .zip(yv)
                .zip(w)
                .map(|((a, b), &wi)| a * b.conj() * wi)
                .collect(),
        };
        parts.push(pairwise_sum_c(&terms));
    }
    Ok(pairwise_sum_c(&parts))
}

/// `u = h / z_1 + g`, with `h` given on the slice and `g` on the whole grid.
///
/// Only used to manufacture inputs with a prescribed `1/z_1` singularity.
#[derive(Clone, Debug)]
pub struct SingularDecomposition {
    pub h: FormField,
    pub g: FormField,
}

impl SingularDecomposition {
    pub fn new(h: FormField, g: FormField) -> Result<Self> {
        if h.degree() != g.degree() {
            return Err(Error::DegreeMismatch {
                left: h.degree(),
                right: g.degree(),
            });
        }
        Ok(Self { h, g })
    }

    /// Sample the singular field. Nodes with `|z_1| < h_1 / 2` (the slice
    /// plane itself) are left at the bounded part `g` only.
    pub fn compose(&self) -> Result<FormField> {
        let grid = self.g.grid().clone();
        let slice = grid.slice_grid()?;
        if !slice.same_as(self.h.grid()) {
            return Err(Error::GridMismatch);
        }
        let cutoff = 0.5 * grid.plane(1).spacing();
        let mut out = self.g.clone();
        for (j, hv) in self.h.iter() {
            let target = out.component_mut(j)?;
            for (node, t) in target.iter_mut().enumerate() {
                let z1 = grid.coord(node, 1);
                if z1.norm() >= cutoff {
                    *t += hv[grid.slice_index(node)] / z1;
                }
            }
        }
        Ok(out)
    }
}
