//! Pairing of `(dbar u)_H` with the bumps `psi_eps` that concentrate at
//! `z_1 = 3 eps` as `eps -> 0`. A `1/z_1` singularity in a component of `u`
//! shows up as a nonzero limit of the pairing; bounded fields give `O(eps)`.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::form::{remove_index, FormField, MultiIndex};
use crate::operators::OperatorBundle;
use crate::profile::{sample_test_function, CutoffProfile};
use crate::quadrature::gauss_legendre;
use crate::sum::pairwise_map_c;

/// A fit coefficient counts only if it is at least this many fit residuals.
pub const SIGNIFICANCE: f64 = 5.0;
/// Relative floor, against the Cauchy-Schwarz bound of the pairings, below
/// which a coefficient is numerically zero.
pub const RELATIVE_FLOOR: f64 = 1e-6;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LeadingOrder {
    Constant,
    Linear,
    Quadratic,
    Zero,
}

/// Which first-order operator is paired with `psi_eps`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PairingOperator {
    /// The `H` component of `dbar u`.
    Dbar,
    /// Same signs, with `d/dz_1` in place of `d/dzbar_1`.
    DzFirst,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PairingReport {
    pub component: MultiIndex,
    pub operator: PairingOperator,
    pub schedule: Vec<f64>,
    pub values: Vec<Complex64>,
    /// `c_0 + c_1 eps + c_2 eps^2`, least squares over the schedule.
    pub coefficients: [Complex64; 3],
    pub fit_residual: f64,
    pub floor: f64,
    pub leading_order: LeadingOrder,
    pub singular: bool,
}

/// Least squares fit of complex data on `{1, e, e^2}`; returns coefficients
/// and the residual 2-norm.
fn quadratic_fit(eps: &[f64], values: &[Complex64]) -> ([Complex64; 3], f64) {
    // scaled abscissae keep the normal equations well conditioned
    let s = eps.iter().cloned().fold(0.0, f64::max);
    let t: Vec<f64> = eps.iter().map(|e| e / s).collect();
    let mut a = [[0.0; 3]; 3];
    let mut b = [Complex64::new(0.0, 0.0); 3];
    for (ti, vi) in t.iter().zip(values) {
        let row = [1.0, *ti, ti * ti];
        for i in 0..3 {
            for j in 0..3 {
                a[i][j] += row[i] * row[j];
            }
            b[i] += row[i] * vi;
        }
    }
    let det = |m: &[[f64; 3]; 3]| {
        m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1]) - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
            + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
    };
    let d = det(&a);
    let mut c = [Complex64::new(0.0, 0.0); 3];
    for (k, ck) in c.iter_mut().enumerate() {
        // Cramer's rule, real and imaginary parts at once
        let mut re = a;
        let mut im = a;
        for i in 0..3 {
            re[i][k] = b[i].re;
            im[i][k] = b[i].im;
        }
        *ck = Complex64::new(det(&re), det(&im)) / d;
    }
    let residual = t
        .iter()
        .zip(values)
        .map(|(ti, vi)| (vi - (c[0] + c[1] * ti + c[2] * ti * ti)).norm_sqr())
        .sum::<f64>()
        .sqrt();
    (
        [c[0], c[1] / s, c[2] / (s * s)],
        residual,
    )
}

/// The `H` component of the chosen first-order operator applied to `u`.
fn paired_component(u: &FormField, h: &MultiIndex, op: PairingOperator) -> Result<Vec<Complex64>> {
    let grid = u.grid();
    let mut acc = vec![Complex64::new(0.0, 0.0); grid.len()];
    for &i in h.indices() {
        let (sign, k) = remove_index(i, h)?;
        let Some(uk) = u.component(&k) else { continue };
        let d = if op == PairingOperator::DzFirst && i == 1 {
            grid.dz(i, uk)?
        } else {
            grid.dzbar(i, uk)?
        };
        for (a, x) in acc.iter_mut().zip(d) {
            *a += x * sign as f64;
        }
    }
    Ok(acc)
}

pub fn pairing_test(field: &FormField, h: &MultiIndex, schedule: &[f64], bundle: &OperatorBundle) -> Result<PairingReport> {
    pairing_test_with(field, h, schedule, bundle, PairingOperator::Dbar)
}

pub fn pairing_test_with(
    field: &FormField,
    h: &MultiIndex,
    schedule: &[f64],
    bundle: &OperatorBundle,
    op: PairingOperator,
) -> Result<PairingReport> {
    let grid = bundle.grid();
    if !field.grid().same_as(grid) {
        return Err(Error::GridMismatch);
    }
    if !h.contains(1) {
        return Err(Error::InvalidIndex(format!("pairing component {h} must contain 1")));
    }
    if h.degree() != field.degree() + 1 {
        return Err(Error::DegreeMismatch {
            left: h.degree(),
            right: field.degree() + 1,
        });
    }
    if !h.within(grid.n()) {
        return Err(Error::InvalidIndex(format!("{h} not in 1..{}", grid.n())));
    }
    if schedule.len() < 4 {
        return Err(Error::Schedule("pairing fit needs at least four eps values".into()));
    }
    if schedule.windows(2).any(|w| w[1] >= w[0]) {
        return Err(Error::Schedule("eps schedule must be strictly decreasing".into()));
    }
    let h1 = grid.plane(1).spacing();
    let eps_min = *schedule.last().unwrap();
    if eps_min < 2.0 * h1 * (1.0 - 1e-12) {
        return Err(Error::Schedule(format!(
            "eps = {eps_min} too small for the grid: need eps >= 2 h = {}",
            2.0 * h1
        )));
    }

    let du = paired_component(field, h, op)?;
    let w = grid.weights();
    let profile = CutoffProfile::unit_mass();
    let du_norm = pairwise_map_c(0, du.len(), |k| Complex64::new(w[k] * du[k].norm_sqr(), 0.0)).re.sqrt();
    let mut values = Vec::with_capacity(schedule.len());
    let mut bound = 0.0f64;
    for &eps in schedule {
        let psi = sample_test_function(&profile, eps, grid)?;
        values.push(pairwise_map_c(0, du.len(), |k| du[k] * (w[k] * psi[k])));
        let psi_norm = pairwise_map_c(0, psi.len(), |k| Complex64::new(w[k] * psi[k] * psi[k], 0.0)).re.sqrt();
        bound = bound.max(du_norm * psi_norm);
    }
    let (coefficients, fit_residual) = quadratic_fit(schedule, &values);
    let floor = RELATIVE_FLOOR * bound;
    let eps0 = schedule[0];
    let significant = |size: f64| size >= SIGNIFICANCE * fit_residual && size > floor;
    let singular = significant(coefficients[0].norm());
    let leading_order = if singular {
        LeadingOrder::Constant
    } else if significant(coefficients[1].norm() * eps0) {
        LeadingOrder::Linear
    } else if significant(coefficients[2].norm() * eps0 * eps0) {
        LeadingOrder::Quadratic
    } else {
        LeadingOrder::Zero
    };
    Ok(PairingReport {
        component: h.clone(),
        operator: op,
        schedule: schedule.to_vec(),
        values,
        coefficients,
        fit_residual,
        floor,
        leading_order,
        singular,
    })
}

/// `-(pi / 9) int g(z_2) psi(z_2) dV` for two variables, where `psi` is the
/// transverse factor `chi(2 |z_2| / R_2)` of the test functions. Polar
/// Gauss-Legendre about the origin, split at the profile breakpoints.
pub fn singular_pairing_constant(radius: f64, g: impl Fn(Complex64) -> Complex64, quad_res: usize) -> Result<Complex64> {
    if quad_res < 16 {
        return Err(Error::Resolution {
            resolution: quad_res,
            reason: "at least 16 quadrature nodes required".into(),
        });
    }
    let p = CutoffProfile::unit_mass();
    let mut edges = vec![0.0];
    edges.extend(p.breakpoints().iter().map(|t| t * radius / 2.0));
    let (x, w) = gauss_legendre(quad_res);
    let n_theta = 4 * quad_res;
    let dtheta = 2.0 * PI / n_theta as f64;
    let mut total = Complex64::new(0.0, 0.0);
    for seg in edges.windows(2) {
        let half = 0.5 * (seg[1] - seg[0]);
        for (xi, wi) in x.iter().zip(&w) {
            let rho = seg[0] + half * (xi + 1.0);
            let weight = p.value(2.0 * rho / radius) * rho * wi * half * dtheta;
            for k in 0..n_theta {
                total += g(Complex64::from_polar(rho, k as f64 * dtheta)) * weight;
            }
        }
    }
    Ok(-PI / 9.0 * total)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::form::SingularDecomposition;
    use crate::grid::{build_grid_with, DomainSpec, Grid, DEFAULT_MEMORY_BUDGET};
    use std::sync::Arc;

    fn fine_grid() -> Arc<Grid> {
        // plane 1 fine enough for eps_min = 0.19 / 8 >= 2 h
        Arc::new(build_grid_with(&DomainSpec::unit_polydisc(2), &[171, 9], DEFAULT_MEMORY_BUDGET).unwrap())
    }

    fn schedule() -> Vec<f64> {
        (0..4).map(|k| 0.19 / f64::powi(2.0, k)).collect()
    }

    #[test]
    fn fit_recovers_a_quadratic() {
        let eps = [0.2, 0.1, 0.05, 0.025];
        let c = [Complex64::new(0.3, -0.1), Complex64::new(2.0, 0.5), Complex64::new(-4.0, 1.0)];
        let v: Vec<Complex64> = eps.iter().map(|e| c[0] + c[1] * e + c[2] * e * e).collect();
        let (fit, res) = quadratic_fit(&eps, &v);
        for k in 0..3 {
            assert!((fit[k] - c[k]).norm() < 1e-10, "{k}: {}", fit[k]);
        }
        assert!(res < 1e-12);
    }

    #[test]
    fn constant_matches_closed_form_for_constant_g() {
        // int chi(2 rho / R) 2 pi rho d rho = pi R^2 mass / 4 for the
        // unit-mass profile; with g = 1 the constant is -pi^2 R^2 / 36
        let c = singular_pairing_constant(1.0, |_| Complex64::new(1.0, 0.0), 32).unwrap();
        let p = CutoffProfile::unit_mass();
        let (x, w) = gauss_legendre(8);
        let mut m = 0.0;
        let [t0, tm, t1] = p.breakpoints();
        for seg in [[0.0, t0], [t0, tm], [tm, t1]] {
            let half = 0.5 * (seg[1] - seg[0]);
            for (xi, wi) in x.iter().zip(&w) {
                let s = seg[0] + half * (xi + 1.0);
                m += p.value(s) * s * wi * half;
            }
        }
        // rho = s / 2: int chi(s) 2 pi (s / 2) (ds / 2)
        let exact = -PI / 9.0 * PI * m / 2.0;
        assert!((c.re - exact).abs() < 1e-12 && c.im.abs() < 1e-12, "{c} {exact}");
    }

    #[test]
    fn rejects_bad_requests() {
        let g = fine_grid();
        let b = OperatorBundle::new(&g, 1).unwrap();
        let u = FormField::zeros(g.clone(), 1).unwrap();
        let h12 = MultiIndex::new(vec![1, 2]).unwrap();
        let h2 = MultiIndex::new(vec![2]).unwrap();
        assert!(pairing_test(&u, &h2, &schedule(), &b).is_err());
        let tiny: Vec<f64> = (0..4).map(|k| 0.05 / f64::powi(2.0, k)).collect();
        assert!(pairing_test(&u, &h12, &tiny, &b).is_err());
        let up: Vec<f64> = schedule().into_iter().rev().collect();
        assert!(pairing_test(&u, &h12, &up, &b).is_err());
    }

    #[test]
    fn smooth_field_is_not_singular() {
        let g = fine_grid();
        let b = OperatorBundle::new(&g, 1).unwrap();
        let mut u = FormField::zeros(g.clone(), 1).unwrap();
        u.set_component(MultiIndex::new(vec![2]).unwrap(), g.sample(|z| z[0].conj() * (1.0 + z[1]))).unwrap();
        u.set_component(MultiIndex::new(vec![1]).unwrap(), g.sample(|z| z[1].conj() * z[0])).unwrap();
        let r = pairing_test(&u, &MultiIndex::new(vec![1, 2]).unwrap(), &schedule(), &b).unwrap();
        assert!(!r.singular, "{r:?}");
        assert_ne!(r.leading_order, LeadingOrder::Constant);
    }

    #[test]
    fn dz_variant_sees_the_pole() {
        let g = fine_grid();
        let b = OperatorBundle::new(&g, 1).unwrap();
        let s = Arc::new(g.slice_grid().unwrap());
        let bump = |z: Complex64| Complex64::new((1.0 - (z - 0.1).norm_sqr() / 0.36).max(0.0).powi(3), 0.0);
        let mut hf = FormField::zeros(s.clone(), 1).unwrap();
        hf.set_component(MultiIndex::new(vec![2]).unwrap(), s.sample(|z| bump(z[0]))).unwrap();
        let u = SingularDecomposition::new(hf, FormField::zeros(g.clone(), 1).unwrap()).unwrap().compose().unwrap();
        let h12 = MultiIndex::new(vec![1, 2]).unwrap();
        let r = pairing_test_with(&u, &h12, &schedule(), &b, PairingOperator::DzFirst).unwrap();
        let fine = singular_pairing_constant(1.0, bump, 64).unwrap();
        assert!(r.singular, "{r:?}");
        // the discrete constant is the plane-2 node sum of the same integrand
        let p = CutoffProfile::unit_mass();
        let p2 = s.plane(2);
        let discrete: Complex64 = p2
            .coords()
            .iter()
            .zip(p2.weights())
            .map(|(z, w)| bump(*z) * p.value(2.0 * z.norm()) * *w)
            .sum::<Complex64>()
            * (-PI / 9.0);
        // the coarsest eps sees the plane-2 sum almost exactly; the finest is
        // two spacings from its centre and carries the stencil error
        assert!((r.values[0] - discrete).norm() < 1e-3 * discrete.norm(), "{} {}", r.values[0], discrete);
        assert!((r.coefficients[0] - fine).norm() < 0.1 * fine.norm(), "{} {}", r.coefficients[0], fine);
        // while the dbar pairing of a function holomorphic in z_1 has no pole term
        let plain = pairing_test(&u, &h12, &schedule(), &b).unwrap();
        assert!(plain.coefficients[0].norm() < 0.05 * discrete.norm(), "{:?}", plain);
    }
}
