//! Experiment configuration, read from and written to TOML.

use std::path::Path;
use std::sync::Arc;

use dbar_core::grid::{estimate_bytes, DEFAULT_MEMORY_BUDGET};
use dbar_core::pipeline::SliceForm;
use dbar_core::solver::SolveOptions;
use dbar_core::{build_grid_with, DomainSpec, FormField, Grid, MultiIndex};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::CliError;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub threads: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<String>,
    pub domain: DomainConfig,
    pub grid: GridConfig,
    pub form: FormConfig,
    pub schedule: ScheduleConfig,
    #[serde(default)]
    pub solver: SolveOptions,
    #[serde(default)]
    pub verify: VerifyConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepConfig>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DomainConfig {
    pub n: usize,
    pub polyradii: Vec<f64>,
    #[serde(default)]
    pub scale_to_unit_diameter: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub resolution: usize,
    /// Per-plane resolutions; overrides `resolution` when present.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub resolutions: Option<Vec<usize>>,
    /// Working-set cap in bytes.
    #[serde(default = "default_budget")]
    pub memory_budget: usize,
}

fn default_budget() -> usize {
    DEFAULT_MEMORY_BUDGET
}

/// Slice data: a named shape or a table of monomials per component.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FormConfig {
    pub degree: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub shape: Option<FormShape>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub components: Vec<ComponentSpec>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FormShape {
    /// The zero form.
    Zero,
    /// `f = z_2` (functions).
    Z2,
    /// `f = dzbar_2` with coefficient one.
    Constant,
    /// `f = g(z_2) dzbar_2` with `g = (1 - |z_2 - 0.1|^2 / 0.36)^3` inside its
    /// disc and zero outside.
    Bump,
}

/// `sum coeff * prod z_j^a_j conj(z_j)^b_j` over the slice coordinates
/// `z_2, ..., z_n`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ComponentSpec {
    pub index: Vec<usize>,
    pub terms: Vec<Term>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Term {
    /// Real and imaginary part.
    pub coeff: [f64; 2],
    #[serde(default)]
    pub z: Vec<u32>,
    #[serde(default)]
    pub zbar: Vec<u32>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScheduleConfig {
    /// Explicit list; wins over the geometric rule below.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub deltas: Option<Vec<f64>>,
    #[serde(default = "default_start")]
    pub start: f64,
    /// Start in units of the plane-1 spacing; overrides `start`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub start_spacings: Option<f64>,
    #[serde(default = "default_ratio")]
    pub ratio: f64,
    /// Number of deltas; without it the sequence runs down to the plane-1
    /// spacing.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub count: Option<usize>,
}

fn default_start() -> f64 {
    0.25
}

fn default_ratio() -> f64 {
    0.5
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VerifyConfig {
    /// Empty selects the default set for the configured degree.
    #[serde(default)]
    pub checks: Vec<String>,
    #[serde(default = "default_residue_eps")]
    pub residue_eps: Vec<f64>,
    #[serde(default = "default_quad_res")]
    pub quad_res: usize,
    #[serde(default = "default_eps0")]
    pub pairing_eps0: f64,
    #[serde(default = "default_pairs")]
    pub adjoint_pairs: usize,
    /// Ball radius for mean values; default four times the largest spacing.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mean_value_radius: Option<f64>,
    /// Stored `w` to run the detector on instead of solving.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub snapshot: Option<String>,
}

fn default_residue_eps() -> Vec<f64> {
    vec![0.1, 0.05]
}
fn default_quad_res() -> usize {
    64
}
fn default_eps0() -> f64 {
    0.19
}
fn default_pairs() -> usize {
    20
}

impl Default for VerifyConfig {
    fn default() -> Self {
        Self {
            checks: Vec::new(),
            residue_eps: default_residue_eps(),
            quad_res: default_quad_res(),
            pairing_eps0: default_eps0(),
            adjoint_pairs: default_pairs(),
            mean_value_radius: None,
            snapshot: None,
        }
    }
}

/// Sweep axes. Empty `presets` sweeps the enclosing config itself.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    #[serde(default)]
    pub presets: Vec<String>,
    #[serde(default)]
    pub resolutions: Vec<usize>,
    #[serde(default)]
    pub deltas: Vec<f64>,
}

pub const CHECKS: &[&str] = &[
    "residue",
    "dbar-squared",
    "adjointness",
    "laplacian-support",
    "mean-value",
    "volume",
    "detector",
];

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| CliError::Config(format!("config: {e}")))
    }

    pub fn to_toml(&self) -> Result<String, CliError> {
        toml::to_string_pretty(self).map_err(|e| CliError::Config(format!("config: {e}")))
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn domain_spec(&self) -> DomainSpec {
        DomainSpec {
            n: self.domain.n,
            polyradii: self.domain.polyradii.clone(),
            scale_to_unit_diameter: self.domain.scale_to_unit_diameter,
        }
    }

    pub fn plane_resolutions(&self) -> Vec<usize> {
        self.grid
            .resolutions
            .clone()
            .unwrap_or_else(|| vec![self.grid.resolution; self.domain.n])
    }

    /// Plane-1 radius and spacing without building anything.
    fn plane1(&self) -> Result<(f64, f64), CliError> {
        let radii = self.domain_spec().effective_radii();
        let res = self.plane_resolutions();
        let r = *radii.first().ok_or_else(|| CliError::Config("domain has no planes".into()))?;
        let n = *res.first().ok_or_else(|| CliError::Config("no resolutions".into()))?;
        Ok((r, 2.0 * r / (n as f64 - 1.0)))
    }

    pub fn deltas(&self) -> Result<Vec<f64>, CliError> {
        let (_, h) = self.plane1()?;
        let s = &self.schedule;
        if let Some(d) = &s.deltas {
            return Ok(d.clone());
        }
        if !(s.ratio > 0.0 && s.ratio < 1.0) {
            return Err(CliError::Config(format!("schedule ratio {} must lie in (0, 1)", s.ratio)));
        }
        let start = s.start_spacings.map(|k| k * h).unwrap_or(s.start);
        let mut out = Vec::new();
        let mut d = start;
        match s.count {
            Some(c) => {
                for _ in 0..c {
                    out.push(d);
                    d *= s.ratio;
                }
            }
            None => {
                while d >= h * (1.0 - 1e-12) && out.len() < 64 {
                    out.push(d);
                    d *= s.ratio;
                }
            }
        }
        Ok(out)
    }

    /// Everything that can be checked before a grid is allocated.
    pub fn validate(&self) -> Result<(), CliError> {
        let cfg = |m: String| CliError::Config(m);
        self.domain_spec().validate().map_err(|e| cfg(e.to_string()))?;
        if self.seed > i64::MAX as u64 {
            return Err(cfg(format!("seed {} does not fit a TOML integer", self.seed)));
        }
        let n = self.domain.n;
        let res = self.plane_resolutions();
        if res.len() != n {
            return Err(cfg(format!("{} resolutions for n = {n}", res.len())));
        }
        if let Some(&bad) = res.iter().find(|&&r| r < 9 || r % 2 == 0) {
            return Err(cfg(format!("resolution {bad} must be odd and at least 9")));
        }
        let approx: Vec<usize> = res.iter().map(|&r| (std::f64::consts::FRAC_PI_4 * (r * r) as f64) as usize + 4 * r).collect();
        let need = estimate_bytes(&approx);
        if need > self.grid.memory_budget {
            return Err(cfg(format!("grid needs about {need} bytes, budget {}", self.grid.memory_budget)));
        }
        let q = self.form.degree;
        if q >= n {
            return Err(cfg(format!("degree {q} has nothing to extend in dimension {n}")));
        }
        match (&self.form.shape, self.form.components.is_empty()) {
            (Some(_), false) => return Err(cfg("form: give a shape or components, not both".into())),
            (None, true) => return Err(cfg("form: give a shape or components".into())),
            _ => {}
        }
        if let Some(shape) = self.form.shape {
            let ok = match shape {
                FormShape::Zero => true,
                FormShape::Z2 => q == 0,
                FormShape::Constant | FormShape::Bump => q == 1,
            };
            if !ok {
                return Err(cfg(format!("form shape {shape:?} is not a {q}-form")));
            }
        }
        for c in &self.form.components {
            let j = MultiIndex::new(c.index.clone()).map_err(|e| cfg(e.to_string()))?;
            if j.degree() != q || j.contains(1) || !j.within(n) {
                return Err(cfg(format!("component {j}: need {q} indices from 2..{n}")));
            }
            for t in &c.terms {
                if t.z.len() > n - 1 || t.zbar.len() > n - 1 {
                    return Err(cfg(format!("component {j}: more exponents than slice coordinates")));
                }
            }
        }
        let (r1, h) = self.plane1()?;
        let deltas = self.deltas()?;
        if deltas.is_empty() {
            return Err(cfg("empty delta schedule".into()));
        }
        if deltas.iter().any(|d| !(d.is_finite() && *d > 0.0)) || deltas.windows(2).any(|w| w[1] >= w[0]) {
            return Err(cfg(format!("delta schedule {deltas:?} must be positive and strictly decreasing")));
        }
        if 2.0 * deltas[0] >= r1 {
            return Err(cfg(format!("2 delta = {} does not fit in radius {r1}", 2.0 * deltas[0])));
        }
        let last = *deltas.last().unwrap();
        if last < h * (1.0 - 1e-12) {
            return Err(cfg(format!("delta = {last} is below the plane-1 spacing {h}")));
        }
        if !(self.solver.tol > 0.0) || self.solver.max_iter == 0 {
            return Err(cfg("solver tolerance and iteration cap must be positive".into()));
        }
        for c in &self.verify.checks {
            if !CHECKS.contains(&c.as_str()) {
                return Err(cfg(format!("unknown check {c:?}; known: {CHECKS:?}")));
            }
        }
        if let Some(s) = &self.sweep {
            if s.presets.is_empty() && s.resolutions.is_empty() && s.deltas.is_empty() {
                return Err(cfg("sweep has no axes".into()));
            }
            for p in &s.presets {
                if crate::presets::preset(p).is_none() {
                    return Err(cfg(format!("unknown preset {p:?}")));
                }
            }
        }
        Ok(())
    }

    pub fn build_grid(&self) -> Result<Arc<Grid>, CliError> {
        build_grid_with(&self.domain_spec(), &self.plane_resolutions(), self.grid.memory_budget)
            .map(Arc::new)
            .map_err(|e| CliError::Config(e.to_string()))
    }

    /// Coefficient functions of the slice data, by component, as functions
    /// of the slice coordinates.
    pub fn coefficient_functions(&self) -> Vec<(MultiIndex, Box<dyn Fn(&[Complex64]) -> Complex64 + Send + Sync>)> {
        let n = self.domain.n;
        let q = self.form.degree;
        let mut out: Vec<(MultiIndex, Box<dyn Fn(&[Complex64]) -> Complex64 + Send + Sync>)> = Vec::new();
        if let Some(shape) = self.form.shape {
            match shape {
                FormShape::Zero => {}
                FormShape::Z2 => out.push((MultiIndex::empty(), Box::new(|z: &[Complex64]| z[0]))),
                FormShape::Constant => {
                    out.push((MultiIndex::new(vec![2]).unwrap(), Box::new(|_: &[Complex64]| Complex64::new(1.0, 0.0))))
                }
                FormShape::Bump => out.push((MultiIndex::new(vec![2]).unwrap(), Box::new(|z: &[Complex64]| bump(z[0])))),
            }
        }
        for c in &self.form.components {
            let terms = c.terms.clone();
            let j = MultiIndex::new(c.index.clone()).unwrap();
            out.push((
                j,
                Box::new(move |z: &[Complex64]| {
                    terms
                        .iter()
                        .map(|t| {
                            let mut v = Complex64::new(t.coeff[0], t.coeff[1]);
                            for (k, &a) in t.z.iter().enumerate() {
                                v *= z[k].powu(a);
                            }
                            for (k, &b) in t.zbar.iter().enumerate() {
                                v *= z[k].conj().powu(b);
                            }
                            v
                        })
                        .sum()
                }),
            ));
        }
        debug_assert!(out.iter().all(|(j, _)| j.degree() == q && j.within(n)));
        out
    }

    pub fn slice_form(&self, grid: &Grid) -> Result<SliceForm, CliError> {
        let slice = Arc::new(grid.slice_grid().map_err(|e| CliError::Config(e.to_string()))?);
        let mut f = FormField::zeros(slice.clone(), self.form.degree).map_err(|e| CliError::Config(e.to_string()))?;
        for (j, g) in self.coefficient_functions() {
            let mut v = f.component_or_zeros(&j).into_owned();
            for (a, b) in v.iter_mut().zip(slice.sample(|z| g(z))) {
                *a += b;
            }
            f.set_component(j, v).map_err(|e| CliError::Config(e.to_string()))?;
        }
        SliceForm::new(f).map_err(|e| CliError::Config(format!("slice data: {e}")))
    }
}

/// The bump coefficient of [`FormShape::Bump`].
pub fn bump(z: Complex64) -> Complex64 {
    let s = (z - Complex64::new(0.1, 0.0)).norm_sqr() / 0.36;
    Complex64::new((1.0 - s).max(0.0).powi(3), 0.0)
}
