//! Slice data, the cut-off construction `f_delta = chi_delta f - w` with
//! `dbar w = (dbar chi_delta) ^ f`, and the delta-schedule driver.

use std::sync::Arc;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::form::{insert_index, FormField, MultiIndex};
use crate::grid::Grid;
use crate::operators::{assemble_dbar, laplacian_apply, LinearMap, OperatorBundle};
use crate::profile::{sample_cutoff, CutoffProfile};
use crate::precond::KroneckerPreconditioner;
use crate::solver::{preconditioner_for, solve_min_norm_with, SolveOptions};

/// Relative tolerance of the closedness check on slice data.
pub const CLOSEDNESS_TOL: f64 = 1e-8;

/// Interior margin, in plane spacings, for Laplacian residuals.
pub const INTERIOR_MARGIN: f64 = 4.0;

/// A (0,q)-form on the slice `z_1 = 0`.
#[derive(Clone, Debug)]
pub struct SliceForm {
    field: FormField,
}

impl SliceForm {
    /// Accepts `field` after checking that it lives on a slice grid and is
    /// dbar-closed to [`CLOSEDNESS_TOL`].
    pub fn new(field: FormField) -> Result<Self> {
        let f = Self::unchecked(field)?;
        let r = f.closedness()?;
        if r > CLOSEDNESS_TOL {
            return Err(Error::NotClosed(r));
        }
        Ok(f)
    }

    /// Same structural checks, no closedness test. Used for traces.
    pub fn unchecked(field: FormField) -> Result<Self> {
        if field.grid().labels().contains(&1) {
            return Err(Error::Geometry("slice forms cannot depend on z_1".into()));
        }
        if field.iter().any(|(j, _)| j.contains(1)) {
            return Err(Error::InvalidIndex("slice form components cannot contain 1".into()));
        }
        Ok(Self { field })
    }

    pub fn field(&self) -> &FormField {
        &self.field
    }

    pub fn degree(&self) -> usize {
        self.field.degree()
    }

    pub fn norm(&self) -> f64 {
        self.field.norm()
    }

    /// `||dbar f|| / ||f||` on the slice; zero in top degree.
    pub fn closedness(&self) -> Result<f64> {
        let g = self.field.grid();
        if self.degree() >= g.n() {
            return Ok(0.0);
        }
        let nf = self.field.norm();
        if nf == 0.0 {
            return Ok(0.0);
        }
        Ok(assemble_dbar(g, self.degree())?.apply(&self.field)?.norm() / nf)
    }
}

/// Replicate the slice components along `z_1`.
pub fn lift_slice_form(f: &SliceForm, grid: &Arc<Grid>) -> Result<FormField> {
    let slice = grid.slice_grid()?;
    if !slice.same_as(f.field().grid()) {
        return Err(Error::GridMismatch);
    }
    let mut out = FormField::zeros(grid.clone(), f.degree())?;
    for (j, v) in f.field().iter() {
        let lifted = (0..grid.len()).map(|k| v[grid.slice_index(k)]).collect();
        out.set_component(j.clone(), lifted)?;
    }
    Ok(out)
}

/// `beta = (dbar chi) ^ f` for a cut-off `chi` depending on `z_1` only.
///
/// Only `d chi / dzbar_1` is nonzero, so every component of `beta` has the
/// form `beta_{1K} = (+1) dchi f_K`.
pub fn build_beta(f_lifted: &FormField, chi: &[f64]) -> Result<FormField> {
    let g = f_lifted.grid().clone();
    let q = f_lifted.degree();
    if q + 1 > g.n() {
        return Err(Error::DegreeOutOfRange { q: q + 1, n: g.n() });
    }
    if chi.len() != g.len() {
        return Err(Error::ShapeMismatch {
            expected: g.len(),
            got: chi.len(),
        });
    }
    let chi_c: Vec<Complex64> = chi.iter().map(|&c| Complex64::new(c, 0.0)).collect();
    let dchi = g.dzbar(1, &chi_c)?;
    let mut beta = FormField::zeros(g.clone(), q + 1)?;
    for (k, fk) in f_lifted.iter() {
        if k.contains(1) {
            continue;
        }
        let (sign, h) = insert_index(1, k)?;
        let v = dchi
            .iter()
            .zip(fk)
            .map(|(d, f)| d * f * sign as f64)
            .collect();
        beta.set_component(h, v)?;
    }
    Ok(beta)
}

/// `chi f - w`.
pub fn assemble_f_delta(f_lifted: &FormField, chi: &[f64], w: &FormField) -> Result<FormField> {
    let mut out = f_lifted.clone();
    out.mul_scalar_field(chi)?;
    out.axpy_in_place(Complex64::new(-1.0, 0.0), w)?;
    Ok(out)
}

/// Pullback to `z_1 = 0`: restrict to the slice nodes and drop every
/// component containing the index 1.
pub fn trace(field: &FormField) -> Result<SliceForm> {
    let g = field.grid();
    let nodes = g.slice_nodes()?;
    let slice = Arc::new(g.slice_grid()?);
    let mut out = FormField::zeros(slice, field.degree())?;
    for (j, v) in field.iter() {
        if j.contains(1) {
            continue;
        }
        out.set_component(j.clone(), nodes.iter().map(|&k| v[k]).collect())?;
    }
    SliceForm::unchecked(out)
}

/// L2 norms over the slice of the tangential and non-tangential parts.
pub fn slice_norms(field: &FormField) -> Result<(f64, f64)> {
    let g = field.grid();
    let nodes = g.slice_nodes()?;
    let slice = g.slice_grid()?;
    let (mut tan, mut non) = (0.0, 0.0);
    for (j, v) in field.iter() {
        let s: f64 = nodes
            .iter()
            .enumerate()
            .map(|(s, &k)| v[k].norm_sqr() * slice.weights()[s])
            .sum();
        if j.contains(1) {
            non += s;
        } else {
            tan += s;
        }
    }
    Ok((tan.sqrt(), non.sqrt()))
}

/// `||trace(field) - f|| / ||f||` on the slice; `0` when both vanish.
pub fn relative_trace_error(field: &FormField, f: &SliceForm) -> Result<f64> {
    let t = trace(field)?;
    let mut diff = t.field().clone();
    diff.axpy_in_place(Complex64::new(-1.0, 0.0), f.field())?;
    let nf = f.norm();
    let nd = diff.norm();
    Ok(if nf == 0.0 { nd } else { nd / nf })
}

/// Indicator weights for the interior nodes used in Laplacian residuals.
pub fn interior_weight(grid: &Grid) -> Vec<f64> {
    grid.interior_mask(INTERIOR_MARGIN)
        .into_iter()
        .map(|b| if b { 1.0 } else { 0.0 })
        .collect()
}

/// `||Delta u|| / ||u||` over interior nodes.
pub fn interior_laplacian_ratio(bundle: &OperatorBundle, u: &FormField) -> Result<f64> {
    let mask = interior_weight(bundle.grid());
    let lu = laplacian_apply(bundle, u)?;
    let nu = u.norm_weighted(Some(&mask));
    Ok(if nu == 0.0 { 0.0 } else { lu.norm_weighted(Some(&mask)) / nu })
}

/// Checks a delta schedule against the grid before anything is solved.
///
/// Requires a strictly decreasing positive list with `2 delta_max` inside the
/// first disc and `delta_min` at least one plane-1 spacing, so the cut-off
/// ramp spans at least one cell.
pub fn check_schedule(schedule: &[f64], grid: &Grid) -> Result<()> {
    if schedule.is_empty() {
        return Err(Error::Schedule("empty delta schedule".into()));
    }
    if schedule.iter().any(|d| !(d.is_finite() && *d > 0.0)) {
        return Err(Error::Schedule("delta values must be positive".into()));
    }
    if schedule.windows(2).any(|w| w[1] >= w[0]) {
        return Err(Error::Schedule("delta schedule must be strictly decreasing".into()));
    }
    let p1 = grid.plane(1);
    if 2.0 * schedule[0] >= p1.radius() {
        return Err(Error::Schedule(format!(
            "2 delta = {} does not fit in radius {}",
            2.0 * schedule[0],
            p1.radius()
        )));
    }
    let last = *schedule.last().unwrap();
    if last < p1.spacing() * (1.0 - 1e-12) {
        return Err(Error::Schedule(format!(
            "delta = {last} is below the plane-1 spacing {}",
            p1.spacing()
        )));
    }
    Ok(())
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct Probe {
    /// Requested point, one `[re, im]` pair per coordinate.
    pub point: Vec<[f64; 2]>,
    /// Node actually sampled (nearest grid node).
    pub node: usize,
    pub values: Vec<(MultiIndex, [f64; 2])>,
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct DeltaRecord {
    pub delta: f64,
    pub iterations: usize,
    pub converged: bool,
    pub inconsistent: bool,
    pub norm_w: f64,
    pub norm_beta: f64,
    /// `||beta / z_1||`, the norm of the data `alpha_delta`.
    pub norm_alpha: f64,
    pub norm_f_delta: f64,
    /// `||f_delta||_D / ||f||_{D^0}`.
    pub c_empirical: f64,
    /// `||w|| / (delta ||alpha_delta||)`.
    pub thm_ratio: f64,
    pub residual_dbar: f64,
    pub residual_theta: f64,
    pub residual_theta_off_slice: f64,
    /// `||dbar f_delta|| / (||chi f|| + ||w||)`.
    pub closedness: f64,
    /// `||theta f_delta - theta(chi f)|| / ||theta(chi f)||`.
    pub theta_consistency: f64,
    pub trace_error: f64,
    pub tangential_trace_w: f64,
    pub normal_trace_w: f64,
    pub laplacian_interior: f64,
    /// `||f_{delta_prev} - f_delta||`, absent for the first delta.
    pub cauchy_diff: Option<f64>,
    pub probes: Vec<Probe>,
}

#[derive(Clone, Debug)]
pub struct DeltaFields {
    pub delta: f64,
    pub f_delta: FormField,
    pub w: FormField,
}

#[derive(Clone, Debug)]
pub struct ExtensionReport {
    pub schedule: Vec<f64>,
    pub norm_f: f64,
    pub records: Vec<DeltaRecord>,
    /// Fields per delta when requested; the last one is the extension.
    pub fields: Vec<DeltaFields>,
    /// Human-readable notes on per-delta failures.
    pub failures: Vec<String>,
}

impl ExtensionReport {
    pub fn f_tilde(&self) -> Option<&FormField> {
        self.fields.last().map(|d| &d.f_delta)
    }

    pub fn final_record(&self) -> Option<&DeltaRecord> {
        self.records.last()
    }

    /// Relative spread of `c` over the last two deltas, `|a - b| / max(a, b)`.
    pub fn c_drift(&self) -> Option<f64> {
        let n = self.records.len();
        if n < 2 {
            return None;
        }
        let (a, b) = (self.records[n - 2].c_empirical, self.records[n - 1].c_empirical);
        let m = a.max(b);
        Some(if m == 0.0 { 0.0 } else { (a - b).abs() / m })
    }
}

#[derive(Clone, Debug)]
pub struct ExtensionOptions {
    pub solve: SolveOptions,
    pub profile: CutoffProfile,
    /// Probe points, one complex coordinate per plane.
    pub probes: Vec<Vec<Complex64>>,
    /// Keep every `f_delta` and `w`, not only the last.
    pub keep_all_fields: bool,
}

impl Default for ExtensionOptions {
    fn default() -> Self {
        Self {
            solve: SolveOptions::default(),
            profile: CutoffProfile::plateau(),
            probes: Vec::new(),
            keep_all_fields: false,
        }
    }
}

/// Default probes: the origin, a slice point and two points off the slice.
pub fn default_probes(grid: &Grid) -> Vec<Vec<Complex64>> {
    let n = grid.n();
    let half: Vec<f64> = grid.planes().iter().map(|p| 0.5 * p.radius()).collect();
    let mut out = Vec::new();
    let zero = vec![Complex64::new(0.0, 0.0); n];
    out.push(zero.clone());
    let mut a = zero.clone();
    a[n - 1] = Complex64::new(half[n - 1], 0.0);
    out.push(a);
    let mut b = zero.clone();
    b[0] = Complex64::new(half[0], 0.0);
    out.push(b.clone());
    b[n - 1] = Complex64::new(0.0, half[n - 1]);
    out.push(b);
    out
}

/// Grid node closest to `point`, plane by plane.
pub fn nearest_node(grid: &Grid, point: &[Complex64]) -> usize {
    let mut node = 0;
    for (p, plane) in grid.planes().iter().enumerate() {
        let best = plane
            .coords()
            .iter()
            .enumerate()
            .min_by(|a, b| (a.1 - point[p]).norm().total_cmp(&(b.1 - point[p]).norm()))
            .map(|(k, _)| k)
            .unwrap_or(0);
        let stride: usize = grid.planes()[p + 1..].iter().map(|q| q.len()).product();
        node += best * stride;
    }
    node
}

fn probe(field: &FormField, point: &[Complex64]) -> Probe {
    let node = nearest_node(field.grid(), point);
    Probe {
        point: point.iter().map(|z| [z.re, z.im]).collect(),
        node,
        values: field
            .keys()
            .into_iter()
            .map(|j| {
                let v = field.component(&j).map_or(Complex64::new(0.0, 0.0), |c| c[node]);
                (j, [v.re, v.im])
            })
            .collect(),
    }
}

/// One solve at one `delta`. `pc` comes from
/// [`preconditioner_for`](crate::solver::preconditioner_for) on the same grid.
pub fn extend_once(
    f: &SliceForm,
    f_lifted: &FormField,
    delta: f64,
    bundle: &OperatorBundle,
    opts: &ExtensionOptions,
    pc: Option<&KroneckerPreconditioner>,
) -> Result<(DeltaRecord, DeltaFields)> {
    let grid = bundle.grid().clone();
    let chi = sample_cutoff(&opts.profile, delta, &grid)?;
    let beta = build_beta(f_lifted, &chi)?;
    let sol = solve_min_norm_with(bundle, &beta, &opts.solve, pc)?;
    let f_delta = assemble_f_delta(f_lifted, &chi, &sol.w)?;

    let mut chi_f = f_lifted.clone();
    chi_f.mul_scalar_field(&chi)?;
    let closed = bundle.apply_dbar(&f_delta)?.norm();
    let closedness = {
        let s = chi_f.norm() + sol.norm_w;
        if s == 0.0 {
            closed
        } else {
            closed / s
        }
    };
    let theta_consistency = match &bundle.theta {
        Some(t) => {
            let tc = t.apply(&chi_f)?;
            let mut d = t.apply(&f_delta)?;
            d.axpy_in_place(Complex64::new(-1.0, 0.0), &tc)?;
            let n = tc.norm();
            if n == 0.0 {
                d.norm()
            } else {
                d.norm() / n
            }
        }
        None => 0.0,
    };
    let inv_r2: Vec<f64> = (0..grid.len())
        .map(|k| {
            let r2 = grid.coord(k, 1).norm_sqr();
            if r2 > 0.0 {
                1.0 / r2
            } else {
                0.0
            }
        })
        .collect();
    let norm_alpha = beta.norm_weighted(Some(&inv_r2));
    let norm_f = f.norm();
    let norm_f_delta = f_delta.norm();
    let (tan, non) = slice_norms(&sol.w)?;
    let record = DeltaRecord {
        delta,
        iterations: sol.iterations,
        converged: sol.converged,
        inconsistent: sol.inconsistent,
        norm_w: sol.norm_w,
        norm_beta: sol.norm_beta,
        norm_alpha,
        norm_f_delta,
        c_empirical: if norm_f == 0.0 { 0.0 } else { norm_f_delta / norm_f },
        thm_ratio: if norm_alpha == 0.0 {
            0.0
        } else {
            sol.norm_w / (delta * norm_alpha)
        },
        residual_dbar: sol.residual_dbar,
        residual_theta: sol.residual_theta,
        residual_theta_off_slice: sol.residual_theta_off_slice,
        closedness,
        theta_consistency,
        trace_error: relative_trace_error(&f_delta, f)?,
        tangential_trace_w: tan,
        normal_trace_w: non,
        laplacian_interior: interior_laplacian_ratio(bundle, &f_delta)?,
        cauchy_diff: None,
        probes: opts.probes.iter().map(|p| probe(&f_delta, p)).collect(),
    };
    Ok((
        record,
        DeltaFields {
            delta,
            f_delta,
            w: sol.w,
        },
    ))
}

/// Run the construction over a decreasing delta schedule.
///
/// Solver failures at one delta are recorded in `failures` and the run
/// continues; structural errors abort.
pub fn run_extension(
    f: &SliceForm,
    schedule: &[f64],
    bundle: &OperatorBundle,
    opts: &ExtensionOptions,
) -> Result<ExtensionReport> {
    let grid = bundle.grid().clone();
    check_schedule(schedule, &grid)?;
    if bundle.degree() != f.degree() {
        return Err(Error::DegreeMismatch {
            left: f.degree(),
            right: bundle.degree(),
        });
    }
    if f.degree() >= grid.n() {
        return Err(Error::DegreeOutOfRange {
            q: f.degree() + 1,
            n: grid.n(),
        });
    }
    let f_lifted = lift_slice_form(f, &grid)?;
    let mut report = ExtensionReport {
        schedule: schedule.to_vec(),
        norm_f: f.norm(),
        records: Vec::new(),
        fields: Vec::new(),
        failures: Vec::new(),
    };
    let pc = preconditioner_for(bundle, &opts.solve)?;
    let mut prev: Option<FormField> = None;
    for &delta in schedule {
        let (mut rec, fields) = extend_once(f, &f_lifted, delta, bundle, opts, pc.as_ref())?;
        if let Some(p) = &prev {
            let mut d = fields.f_delta.clone();
            d.axpy_in_place(Complex64::new(-1.0, 0.0), p)?;
            rec.cauchy_diff = Some(d.norm());
        }
        if !rec.converged {
            report.failures.push(format!(
                "delta = {delta}: no convergence after {} iterations (residual {:.3e}{})",
                rec.iterations,
                rec.residual_dbar,
                if rec.inconsistent { ", data inconsistent" } else { "" }
            ));
        }
        prev = Some(fields.f_delta.clone());
        report.records.push(rec);
        if opts.keep_all_fields {
            report.fields.push(fields);
        } else {
            report.fields.clear();
            report.fields.push(fields);
        }
    }
    Ok(report)
}
