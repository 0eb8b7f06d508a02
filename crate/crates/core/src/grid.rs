//! Polydisc geometry: one square node lattice per coordinate plane, masked to
//! the disc, with cut-cell quadrature weights and Wirtinger difference
//! stencils. The full grid is the tensor product of the planes.

use std::collections::BTreeMap;
use std::sync::Arc;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sparse::Csr;
use crate::sum::pairwise_map;

/// Default ceiling on the estimated working set of a grid, in bytes.
pub const DEFAULT_MEMORY_BUDGET: usize = 2 << 30;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DomainSpec {
    pub n: usize,
    pub polyradii: Vec<f64>,
    #[serde(default)]
    pub scale_to_unit_diameter: bool,
}

impl DomainSpec {
    pub fn unit_polydisc(n: usize) -> Self {
        Self {
            n,
            polyradii: vec![1.0; n],
            scale_to_unit_diameter: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n < 2 {
            return Err(Error::InvalidDomain(format!("n = {} but need n >= 2", self.n)));
        }
        if self.polyradii.len() != self.n {
            return Err(Error::InvalidDomain(format!(
                "{} radii given for n = {}",
                self.polyradii.len(),
                self.n
            )));
        }
        if self.polyradii.iter().any(|r| !(r.is_finite() && *r > 0.0)) {
            return Err(Error::InvalidDomain("radii must be positive".into()));
        }
        Ok(())
    }

    /// Diameter of the polydisc before any rescaling.
    pub fn diameter(&self) -> f64 {
        2.0 * self.polyradii.iter().map(|r| r * r).sum::<f64>().sqrt()
    }

    /// Radii actually used for the grid.
    pub fn effective_radii(&self) -> Vec<f64> {
        if self.scale_to_unit_diameter {
            let d = self.diameter();
            self.polyradii.iter().map(|r| r / d).collect()
        } else {
            self.polyradii.clone()
        }
    }
}

/// One coordinate plane: lattice nodes inside a closed disc.
#[derive(Clone, Debug)]
pub struct Plane {
    label: usize,
    radius: f64,
    resolution: usize,
    spacing: f64,
    nodes: Vec<(usize, usize)>,
    lookup: Vec<Option<usize>>,
    coords: Vec<Complex64>,
    weights: Vec<f64>,
    center: usize,
    dzbar: Csr,
    dzbar_adj: Csr,
    dz: Csr,
}

impl Plane {
    pub fn new(label: usize, radius: f64, resolution: usize) -> Result<Self> {
        if resolution < 9 || resolution % 2 == 0 {
            return Err(Error::Resolution {
                resolution,
                reason: "need an odd node count of at least 9 per real axis".into(),
            });
        }
        let n = resolution;
        let h = 2.0 * radius / (n - 1) as f64;
        let c = (n - 1) / 2;
        let x_of = |a: usize| (a as f64 - c as f64) * h;
        let inside = |a: usize, b: usize| {
            let (x, y) = (x_of(a), x_of(b));
            x * x + y * y <= radius * radius * (1.0 + 1e-12)
        };

        let mut lookup = vec![None; n * n];
        let mut nodes = Vec::new();
        for a in 0..n {
            for b in 0..n {
                if inside(a, b) {
                    lookup[a * n + b] = Some(nodes.len());
                    nodes.push((a, b));
                }
            }
        }
        let coords: Vec<Complex64> = nodes
            .iter()
            .map(|&(a, b)| Complex64::new(x_of(a), x_of(b)))
            .collect();
        let center = lookup[c * n + c].expect("origin is always inside");

        // cut-cell areas; cells of outside nodes hand their sliver to the
        // nearest inside node so the total is the exact disc area
        let mut weights = vec![0.0; nodes.len()];
        for a in 0..n {
            for b in 0..n {
                let (x, y) = (x_of(a), x_of(b));
                let area = rect_disc_area(x - 0.5 * h, x + 0.5 * h, y - 0.5 * h, y + 0.5 * h, radius);
                if area <= 0.0 {
                    continue;
                }
                match lookup[a * n + b] {
                    Some(k) => weights[k] += area,
                    None => {
                        let near = nearest_inside(&lookup, n, a, b);
                        if near.is_empty() {
                            return Err(Error::Geometry(format!("no inside node near cell ({a},{b})")));
                        }
                        let share = area / near.len() as f64;
                        for k in near {
                            weights[k] += share;
                        }
                    }
                }
            }
        }

        let get = |a: isize, b: isize| -> Option<usize> {
            if a < 0 || b < 0 || a >= n as isize || b >= n as isize {
                None
            } else {
                lookup[a as usize * n + b as usize]
            }
        };
        let mut dx = Vec::with_capacity(nodes.len());
        let mut dy = Vec::with_capacity(nodes.len());
        for &(a, b) in &nodes {
            let (a, b) = (a as isize, b as isize);
            dx.push(axis_stencil(&get, a, b, 0, h)?);
            dy.push(axis_stencil(&get, a, b, 1, h)?);
        }
        let combine = |sy: f64| -> Csr {
            let rows = dx
                .iter()
                .zip(&dy)
                .map(|(rx, ry)| {
                    let mut row: BTreeMap<usize, Complex64> = BTreeMap::new();
                    for &(col, v) in rx {
                        *row.entry(col).or_default() += Complex64::new(0.5 * v, 0.0);
                    }
                    for &(col, v) in ry {
                        *row.entry(col).or_default() += Complex64::new(0.0, 0.5 * sy * v);
                    }
                    row
                })
                .collect();
            Csr::from_rows(rows)
        };
        let dzbar = combine(1.0);
        let dz = combine(-1.0);
        let dzbar_adj = dzbar.weighted_adjoint(&weights);

        Ok(Self {
            label,
            radius,
            resolution,
            spacing: h,
            nodes,
            lookup,
            coords,
            weights,
            center,
            dzbar,
            dzbar_adj,
            dz,
        })
    }

    pub fn label(&self) -> usize {
        self.label
    }
    pub fn radius(&self) -> f64 {
        self.radius
    }
    pub fn resolution(&self) -> usize {
        self.resolution
    }
    pub fn spacing(&self) -> f64 {
        self.spacing
    }
    pub fn len(&self) -> usize {
        self.nodes.len()
    }
    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }
    pub fn coords(&self) -> &[Complex64] {
        &self.coords
    }
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }
    /// Index of the node at the origin of this plane.
    pub fn center(&self) -> usize {
        self.center
    }
    /// Lattice position `(a, b)` of a plane node.
    pub fn lattice(&self, k: usize) -> (usize, usize) {
        self.nodes[k]
    }
    pub fn node_at(&self, a: usize, b: usize) -> Option<usize> {
        if a >= self.resolution || b >= self.resolution {
            None
        } else {
            self.lookup[a * self.resolution + b]
        }
    }
    pub fn dzbar_op(&self) -> &Csr {
        &self.dzbar
    }
    pub fn dzbar_adj_op(&self) -> &Csr {
        &self.dzbar_adj
    }
    pub fn dz_op(&self) -> &Csr {
        &self.dz
    }

    fn same_geometry(&self, other: &Plane) -> bool {
        self.label == other.label
            && self.resolution == other.resolution
            && self.radius == other.radius
    }
}

/// Area of `[x0,x1] x [y0,y1]` intersected with the disc of radius `r`
/// centred at the origin.
pub fn rect_disc_area(x0: f64, x1: f64, y0: f64, y1: f64, r: f64) -> f64 {
    let lo = x0.max(-r);
    let hi = x1.min(r);
    if lo >= hi || y0 >= y1 {
        return 0.0;
    }
    let mut cuts = vec![lo, hi];
    for y in [y0, y1] {
        if y.abs() < r {
            let x = (r * r - y * y).sqrt();
            for c in [x, -x] {
                if c > lo && c < hi {
                    cuts.push(c);
                }
            }
        }
    }
    cuts.sort_by(f64::total_cmp);
    let s = |x: f64| (r * r - x * x).max(0.0).sqrt();
    // antiderivative of s
    let big_s = |x: f64| 0.5 * (x * s(x) + r * r * (x / r).clamp(-1.0, 1.0).asin());
    let mut area = 0.0;
    for w in cuts.windows(2) {
        let (l, u) = (w[0], w[1]);
        if u <= l {
            continue;
        }
        let m = 0.5 * (l + u);
        let sm = s(m);
        if y1.min(sm) <= y0.max(-sm) {
            continue;
        }
        let top = if y1 < sm { y1 * (u - l) } else { big_s(u) - big_s(l) };
        let bot = if y0 > -sm { y0 * (u - l) } else { -(big_s(u) - big_s(l)) };
        area += top - bot;
    }
    area
}

/// All inside nodes at the minimal lattice distance from `(a, b)`; ties are
/// kept so the redistribution respects the lattice symmetries.
fn nearest_inside(lookup: &[Option<usize>], n: usize, a: usize, b: usize) -> Vec<usize> {
    let mut best = isize::MAX;
    let mut out = Vec::new();
    for da in -3isize..=3 {
        for db in -3isize..=3 {
            let (aa, bb) = (a as isize + da, b as isize + db);
            if aa < 0 || bb < 0 || aa >= n as isize || bb >= n as isize {
                continue;
            }
            if let Some(k) = lookup[aa as usize * n + bb as usize] {
                let d2 = da * da + db * db;
                if d2 < best {
                    best = d2;
                    out.clear();
                }
                if d2 == best {
                    out.push(k);
                }
            }
        }
    }
    out
}

/// Real first-derivative stencil along one lattice axis at `(a, b)`.
///
/// Centred if both neighbours exist, second-order one-sided if two
/// consecutive neighbours exist on one side, and otherwise the derivative of
/// a least-squares polynomial fit on the surrounding 5x5 block. Every branch
/// differentiates quadratics exactly.
fn axis_stencil(
    get: &dyn Fn(isize, isize) -> Option<usize>,
    a: isize,
    b: isize,
    axis: usize,
    h: f64,
) -> Result<Vec<(usize, f64)>> {
    let nb = |t: isize| if axis == 0 { get(a + t, b) } else { get(a, b + t) };
    let me = nb(0).expect("stencil centre is a node");
    if let (Some(p), Some(m)) = (nb(1), nb(-1)) {
        return Ok(vec![(p, 0.5 / h), (m, -0.5 / h)]);
    }
    if let (Some(p1), Some(p2)) = (nb(1), nb(2)) {
        return Ok(vec![(me, -1.5 / h), (p1, 2.0 / h), (p2, -0.5 / h)]);
    }
    if let (Some(m1), Some(m2)) = (nb(-1), nb(-2)) {
        return Ok(vec![(me, 1.5 / h), (m1, -2.0 / h), (m2, 0.5 / h)]);
    }
    let mut pts = Vec::new();
    for da in -2isize..=2 {
        for db in -2isize..=2 {
            if let Some(k) = get(a + da, b + db) {
                pts.push((k, da as f64, db as f64));
            }
        }
    }
    let quad = |x: f64, y: f64| vec![1.0, x, y, x * x, x * y, y * y];
    let lin = |x: f64, y: f64| vec![1.0, x, y];
    let attempts: Vec<&dyn Fn(f64, f64) -> Vec<f64>> = if pts.len() >= 8 {
        vec![&quad, &lin]
    } else {
        vec![&lin]
    };
    for basis in attempts {
        let rows: Vec<Vec<f64>> = pts.iter().map(|&(_, x, y)| basis(x, y)).collect();
        let m = rows[0].len();
        let mut normal = vec![vec![0.0; m]; m];
        for r in &rows {
            for i in 0..m {
                for j in 0..m {
                    normal[i][j] += r[i] * r[j];
                }
            }
        }
        let mut rhs = vec![0.0; m];
        rhs[1 + axis] = 1.0;
        if let Some(y) = solve_dense(normal, rhs) {
            let st: Vec<(usize, f64)> = rows
                .iter()
                .zip(&pts)
                .map(|(r, &(k, _, _))| (k, r.iter().zip(&y).map(|(p, q)| p * q).sum::<f64>() / h))
                .filter(|&(_, v)| v.abs() > 1e-14 / h)
                .collect();
            return Ok(st);
        }
    }
    Err(Error::Geometry(format!(
        "cannot build a derivative stencil at lattice node ({a},{b})"
    )))
}

/// Gaussian elimination with partial pivoting; `None` if numerically singular.
fn solve_dense(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Option<Vec<f64>> {
    let n = b.len();
    let scale = a.iter().flatten().fold(0.0f64, |m, v| m.max(v.abs()));
    for col in 0..n {
        let piv = (col..n).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))?;
        if a[piv][col].abs() <= 1e-10 * scale {
            return None;
        }
        a.swap(col, piv);
        b.swap(col, piv);
        for r in col + 1..n {
            let f = a[r][col] / a[col][col];
            for c in col..n {
                a[r][c] -= f * a[col][c];
            }
            b[r] -= f * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for r in (0..n).rev() {
        let s: f64 = (r + 1..n).map(|c| a[r][c] * x[c]).sum();
        x[r] = (b[r] - s) / a[r][r];
    }
    Some(x)
}

/// Tensor-product grid over the polydisc (or over any subset of its planes).
#[derive(Clone, Debug)]
pub struct Grid {
    planes: Vec<Arc<Plane>>,
    labels: Vec<usize>,
    sizes: Vec<usize>,
    strides: Vec<usize>,
    len: usize,
    weights: Vec<f64>,
}

/// Rough working-set estimate: weights plus a dozen form-sized vectors.
pub fn estimate_bytes(plane_sizes: &[usize]) -> usize {
    let len: usize = plane_sizes.iter().product();
    let n = plane_sizes.len();
    len.saturating_mul(8 + 16 * 12 * n)
}

fn approx_plane_nodes(resolution: usize) -> usize {
    let c = (resolution - 1) as f64 / 2.0;
    (std::f64::consts::PI * c * c).ceil() as usize + 4 * resolution
}

/// Build with the same node count on every real axis.
pub fn build_grid(spec: &DomainSpec, resolution: usize) -> Result<Grid> {
    build_grid_with(spec, &vec![resolution; spec.n], DEFAULT_MEMORY_BUDGET)
}

/// Build with a per-coordinate node count and an explicit memory budget.
pub fn build_grid_with(spec: &DomainSpec, resolutions: &[usize], budget: usize) -> Result<Grid> {
    spec.validate()?;
    if resolutions.len() != spec.n {
        return Err(Error::InvalidDomain(format!(
            "{} resolutions given for n = {}",
            resolutions.len(),
            spec.n
        )));
    }
    for &r in resolutions {
        if r < 9 || r % 2 == 0 {
            return Err(Error::Resolution {
                resolution: r,
                reason: "need an odd node count of at least 9 per real axis".into(),
            });
        }
    }
    let sizes: Vec<usize> = resolutions.iter().map(|&r| approx_plane_nodes(r)).collect();
    let needed = estimate_bytes(&sizes);
    if needed > budget {
        return Err(Error::MemoryBudget { needed, budget });
    }
    let radii = spec.effective_radii();
    let planes = radii
        .iter()
        .zip(resolutions)
        .enumerate()
        .map(|(j, (&r, &res))| Plane::new(j + 1, r, res).map(Arc::new))
        .collect::<Result<Vec<_>>>()?;
    Grid::from_planes(planes)
}

impl Grid {
    pub fn from_planes(planes: Vec<Arc<Plane>>) -> Result<Self> {
        if planes.is_empty() {
            return Err(Error::InvalidDomain("grid needs at least one plane".into()));
        }
        let labels: Vec<usize> = planes.iter().map(|p| p.label()).collect();
        if labels.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidDomain("plane labels must increase".into()));
        }
        let sizes: Vec<usize> = planes.iter().map(|p| p.len()).collect();
        let mut strides = vec![1; planes.len()];
        for k in (0..planes.len() - 1).rev() {
            strides[k] = strides[k + 1] * sizes[k + 1];
        }
        let len = strides[0] * sizes[0];
        let mut weights = vec![1.0; len];
        for (p, plane) in planes.iter().enumerate() {
            for (node, w) in weights.iter_mut().enumerate() {
                *w *= plane.weights()[(node / strides[p]) % sizes[p]];
            }
        }
        Ok(Self {
            planes,
            labels,
            sizes,
            strides,
            len,
            weights,
        })
    }

    /// Number of complex coordinates covered by this grid.
    pub fn n(&self) -> usize {
        self.planes.len()
    }
    pub fn labels(&self) -> &[usize] {
        &self.labels
    }
    pub fn len(&self) -> usize {
        self.len
    }
    pub fn is_empty(&self) -> bool {
        self.len == 0
    }
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }
    /// Node count of each plane, in plane order.
    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }
    /// Row-major strides; the last plane varies fastest.
    pub fn strides(&self) -> &[usize] {
        &self.strides
    }
    pub fn planes(&self) -> &[Arc<Plane>] {
        &self.planes
    }
    pub fn position(&self, label: usize) -> Option<usize> {
        self.labels.iter().position(|&l| l == label)
    }

    /// Plane with the given coordinate label. Panics if absent.
    pub fn plane(&self, label: usize) -> &Plane {
        let p = self
            .position(label)
            .unwrap_or_else(|| panic!("coordinate {label} not on this grid"));
        &self.planes[p]
    }

    pub fn volume(&self) -> f64 {
        self.planes.iter().map(|p| p.weights().iter().sum::<f64>()).product()
    }

    pub fn max_spacing(&self) -> f64 {
        self.planes.iter().map(|p| p.spacing()).fold(0.0, f64::max)
    }

    pub fn same_as(&self, other: &Grid) -> bool {
        self.planes.len() == other.planes.len()
            && self
                .planes
                .iter()
                .zip(&other.planes)
                .all(|(a, b)| Arc::ptr_eq(a, b) || a.same_geometry(b))
    }

    /// Index of `node` within the plane at position `p`.
    #[inline]
    pub fn plane_node(&self, node: usize, p: usize) -> usize {
        (node / self.strides[p]) % self.sizes[p]
    }

    pub fn coord(&self, node: usize, label: usize) -> Complex64 {
        let p = self.position(label).expect("label on grid");
        self.planes[p].coords()[self.plane_node(node, p)]
    }

    pub fn node_coords(&self, node: usize) -> Vec<Complex64> {
        (0..self.n())
            .map(|p| self.planes[p].coords()[self.plane_node(node, p)])
            .collect()
    }

    pub fn sample(&self, f: impl Fn(&[Complex64]) -> Complex64) -> Vec<Complex64> {
        let mut z = vec![Complex64::new(0.0, 0.0); self.n()];
        (0..self.len)
            .map(|node| {
                for (p, zp) in z.iter_mut().enumerate() {
                    *zp = self.planes[p].coords()[self.plane_node(node, p)];
                }
                f(&z)
            })
            .collect()
    }

    pub fn sample_real(&self, f: impl Fn(&[Complex64]) -> f64) -> Vec<f64> {
        self.sample(|z| Complex64::new(f(z), 0.0))
            .into_iter()
            .map(|v| v.re)
            .collect()
    }

    /// The hyperplane grid `z_1 = 0`: planes `2..n`, keeping their labels.
    pub fn slice_grid(&self) -> Result<Grid> {
        self.require_slice()?;
        Grid::from_planes(self.planes[1..].to_vec())
    }

    fn require_slice(&self) -> Result<()> {
        if self.labels[0] != 1 || self.planes.len() < 2 {
            return Err(Error::Geometry("grid has no z_1 = 0 slice plane".into()));
        }
        Ok(())
    }

    /// Slice-grid index of the node obtained by projecting out `z_1`.
    #[inline]
    pub fn slice_index(&self, node: usize) -> usize {
        node % self.strides[0]
    }

    /// Full-grid nodes lying on `z_1 = 0`, ordered like the slice grid.
    pub fn slice_nodes(&self) -> Result<Vec<usize>> {
        self.require_slice()?;
        let base = self.planes[0].center() * self.strides[0];
        Ok((0..self.strides[0]).map(|s| base + s).collect())
    }

    pub fn on_slice(&self, node: usize) -> bool {
        self.labels[0] == 1 && self.plane_node(node, 0) == self.planes[0].center()
    }

    /// Nodes whose every coordinate sits at least `margin` plane spacings
    /// inside its disc.
    pub fn interior_mask(&self, margin: f64) -> Vec<bool> {
        let per_plane: Vec<Vec<bool>> = self
            .planes
            .iter()
            .map(|p| {
                p.coords()
                    .iter()
                    .map(|z| z.norm() <= p.radius() - margin * p.spacing() + 1e-12)
                    .collect()
            })
            .collect();
        (0..self.len)
            .map(|node| (0..self.n()).all(|p| per_plane[p][self.plane_node(node, p)]))
            .collect()
    }

    /// `output += coeff * (op acting on plane position p) input`.
    pub fn apply_plane_add(
        &self,
        p: usize,
        op: &Csr,
        coeff: f64,
        input: &[Complex64],
        output: &mut [Complex64],
    ) {
        debug_assert_eq!(input.len(), self.len);
        debug_assert_eq!(output.len(), self.len);
        let m = self.sizes[p];
        let inner = self.strides[p];
        let outer = self.len / (m * inner);
        if inner == 1 {
            let vals: Vec<Complex64> = op.vals.iter().map(|v| v * coeff).collect();
            for (src, out) in input.chunks_exact(m).zip(output.chunks_exact_mut(m)) {
                for (r, y) in out.iter_mut().enumerate() {
                    let (a, b) = (op.rowptr[r], op.rowptr[r + 1]);
                    let mut acc = Complex64::new(0.0, 0.0);
                    for (c, v) in op.cols[a..b].iter().zip(&vals[a..b]) {
                        acc += v * src[*c as usize];
                    }
                    *y += acc;
                }
            }
            return;
        }
        for o in 0..outer {
            let base = o * m * inner;
            for r in 0..m {
                let out = &mut output[base + r * inner..base + (r + 1) * inner];
                for (c, v) in op.row(r) {
                    let v = v * coeff;
                    let src = &input[base + c * inner..base + (c + 1) * inner];
                    for (y, x) in out.iter_mut().zip(src) {
                        *y += v * x;
                    }
                }
            }
        }
    }

    fn apply_label(&self, label: usize, pick: fn(&Plane) -> &Csr, u: &[Complex64]) -> Result<Vec<Complex64>> {
        let p = self.position(label).ok_or_else(|| {
            Error::InvalidIndex(format!("coordinate {label} not on grid {:?}", self.labels))
        })?;
        if u.len() != self.len {
            return Err(Error::ShapeMismatch {
                expected: self.len,
                got: u.len(),
            });
        }
        let mut out = vec![Complex64::new(0.0, 0.0); self.len];
        self.apply_plane_add(p, pick(&self.planes[p]), 1.0, u, &mut out);
        Ok(out)
    }

    /// `d/dzbar_j = (d/dx_j + i d/dy_j) / 2`.
    pub fn dzbar(&self, label: usize, u: &[Complex64]) -> Result<Vec<Complex64>> {
        self.apply_label(label, Plane::dzbar_op, u)
    }

    /// `d/dz_j = (d/dx_j - i d/dy_j) / 2`.
    pub fn dz(&self, label: usize, u: &[Complex64]) -> Result<Vec<Complex64>> {
        self.apply_label(label, Plane::dz_op, u)
    }

    /// Adjoint of [`Grid::dzbar`] in the quadrature inner product.
    pub fn dzbar_adjoint(&self, label: usize, u: &[Complex64]) -> Result<Vec<Complex64>> {
        self.apply_label(label, Plane::dzbar_adj_op, u)
    }

    /// Volume-weighted average of `u` over the grid nodes in the closed ball
    /// of radius `r` about `z_o`.
    pub fn ball_average(&self, u: &[Complex64], z_o: &[Complex64], r: f64) -> Result<Complex64> {
        let (w, s) = self.ball_sums(u, z_o, r)?;
        Ok(s / w)
    }

    /// Quadrature volume and integral of `u` over the ball.
    pub fn ball_sums(&self, u: &[Complex64], z_o: &[Complex64], r: f64) -> Result<(f64, Complex64)> {
        if u.len() != self.len {
            return Err(Error::ShapeMismatch {
                expected: self.len,
                got: u.len(),
            });
        }
        if z_o.len() != self.n() {
            return Err(Error::Geometry(format!(
                "centre has {} coordinates, grid has {}",
                z_o.len(),
                self.n()
            )));
        }
        if r < 2.0 * self.max_spacing() - 1e-12 {
            return Err(Error::Geometry(format!(
                "ball radius {r} below two grid spacings ({})",
                2.0 * self.max_spacing()
            )));
        }
        for (p, plane) in self.planes.iter().enumerate() {
            if z_o[p].norm() + r > plane.radius() + 1e-12 {
                return Err(Error::Geometry(format!(
                    "ball of radius {r} about {:?} leaves the domain",
                    z_o
                )));
            }
        }
        // per-plane squared distances, then a tensor sweep
        let d2: Vec<Vec<f64>> = self
            .planes
            .iter()
            .enumerate()
            .map(|(p, plane)| plane.coords().iter().map(|z| (z - z_o[p]).norm_sqr()).collect())
            .collect();
        let r2 = r * r * (1.0 + 1e-12);
        let inside = |node: usize| {
            let mut s = 0.0;
            for (p, d) in d2.iter().enumerate() {
                s += d[self.plane_node(node, p)];
                if s > r2 {
                    return false;
                }
            }
            true
        };
        let vol = pairwise_map(0, self.len, |k| if inside(k) { self.weights[k] } else { 0.0 });
        let re = pairwise_map(0, self.len, |k| if inside(k) { self.weights[k] * u[k].re } else { 0.0 });
        let im = pairwise_map(0, self.len, |k| if inside(k) { self.weights[k] * u[k].im } else { 0.0 });
        if vol <= 0.0 {
            return Err(Error::Geometry("ball contains no nodes".into()));
        }
        Ok((vol, Complex64::new(re, im)))
    }
}
