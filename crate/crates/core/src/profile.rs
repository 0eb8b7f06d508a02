//! Radial cut-off profiles and their samples on a grid.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::Grid;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Normalization {
    /// Quintic smoothstep; used for the cut-offs `chi_delta`.
    Plateau,
    /// C^1 piecewise quadratic with `int_0^4 chi(t) dt = 1`; used for `psi_eps`.
    UnitMass,
}

/// `chi(t) = 1` for `t <= t0`, `0` for `t >= t1`, monotone in between.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CutoffProfile {
    pub t0: f64,
    pub t1: f64,
    pub mode: Normalization,
}

impl CutoffProfile {
    pub fn new(t0: f64, t1: f64, mode: Normalization) -> Result<Self> {
        if !(t0 >= 0.0 && t1 > t0 && t1.is_finite()) {
            return Err(Error::Profile(format!("need 0 <= t0 < t1, got {t0}, {t1}")));
        }
        let p = Self { t0, t1, mode };
        if mode == Normalization::UnitMass {
            if t1 > 4.0 {
                return Err(Error::Profile(format!("unit-mass profile must vanish by t = 4, t1 = {t1}")));
            }
            if (p.mass() - 1.0).abs() > 1e-12 {
                return Err(Error::Profile(format!(
                    "t0 = {t0}, t1 = {t1} gives mass {}, not 1",
                    p.mass()
                )));
            }
        }
        Ok(p)
    }

    /// Plateau cut-off with `t0 = 1`, `t1 = 2` (in units of `delta`).
    pub fn plateau() -> Self {
        Self {
            t0: 1.0,
            t1: 2.0,
            mode: Normalization::Plateau,
        }
    }

    /// Unit-mass profile with `t0 = 1/2`, `t1 = 3/2`.
    pub fn unit_mass() -> Self {
        Self {
            t0: 0.5,
            t1: 1.5,
            mode: Normalization::UnitMass,
        }
    }

    fn s(&self, t: f64) -> f64 {
        ((t - self.t0) / (self.t1 - self.t0)).clamp(0.0, 1.0)
    }

    pub fn value(&self, t: f64) -> f64 {
        let s = self.s(t);
        match self.mode {
            Normalization::Plateau => 1.0 - s * s * s * (10.0 - 15.0 * s + 6.0 * s * s),
            Normalization::UnitMass => {
                if s <= 0.5 {
                    1.0 - 2.0 * s * s
                } else {
                    2.0 * (1.0 - s) * (1.0 - s)
                }
            }
        }
    }

    pub fn derivative(&self, t: f64) -> f64 {
        if t <= self.t0 || t >= self.t1 {
            return 0.0;
        }
        let s = self.s(t);
        let l = self.t1 - self.t0;
        match self.mode {
            Normalization::Plateau => -30.0 * s * s * (1.0 - s) * (1.0 - s) / l,
            Normalization::UnitMass => {
                if s <= 0.5 {
                    -4.0 * s / l
                } else {
                    -4.0 * (1.0 - s) / l
                }
            }
        }
    }

    /// Points where the derivative loses smoothness: ramp ends and midpoint.
    pub fn breakpoints(&self) -> [f64; 3] {
        [self.t0, 0.5 * (self.t0 + self.t1), self.t1]
    }

    /// `int_0^infinity chi(t) dt`. Both shapes are point-symmetric about the
    /// midpoint of the ramp, so the ramp contributes half its length.
    pub fn mass(&self) -> f64 {
        self.t0 + 0.5 * (self.t1 - self.t0)
    }
}

/// `chi(|z_1| / delta)`: 1 on `|z_1| <= delta`, 0 on `|z_1| >= 2 delta` for
/// the default plateau profile.
pub fn sample_cutoff(profile: &CutoffProfile, delta: f64, grid: &Grid) -> Result<Vec<f64>> {
    if grid.labels().first() != Some(&1) {
        return Err(Error::Geometry("cut-off needs the z_1 coordinate".into()));
    }
    let r1 = grid.plane(1).radius();
    if !(delta > 0.0) || profile.t1 * delta >= r1 {
        return Err(Error::Profile(format!(
            "delta = {delta} too large for radius {r1} (need {} delta < {r1})",
            profile.t1
        )));
    }
    Ok(grid.sample_real(|z| profile.value(z[0].norm() / delta)))
}

/// `dzbar_1` of the cut-off, evaluated analytically at the nodes.
pub fn cutoff_dzbar_exact(profile: &CutoffProfile, delta: f64, grid: &Grid) -> Vec<Complex64> {
    grid.sample(|z| {
        let r = z[0].norm();
        if r == 0.0 {
            return Complex64::new(0.0, 0.0);
        }
        // d|z|/dzbar = z / (2|z|)
        z[0] / (2.0 * r) * (profile.derivative(r / delta) / delta)
    })
}

/// `psi_eps(z) = chi(|z_1 - 3 eps|^2 / eps^2) * prod_{j >= 2} chi(2 |z_j| / R_j)`.
///
/// The `z'` factors are scaled so their support sits at `0.75 R_j`, strictly
/// inside the domain.
pub fn sample_test_function(profile: &CutoffProfile, epsilon: f64, grid: &Grid) -> Result<Vec<f64>> {
    if profile.mode != Normalization::UnitMass {
        return Err(Error::Profile("test functions need the unit-mass profile".into()));
    }
    if grid.labels().first() != Some(&1) {
        return Err(Error::Geometry("test function needs the z_1 coordinate".into()));
    }
    let r1 = grid.plane(1).radius();
    if !(epsilon > 0.0) || 5.0 * epsilon >= r1 {
        return Err(Error::Profile(format!(
            "epsilon = {epsilon} violates 5 eps < {r1}"
        )));
    }
    if (3.0 + profile.t1.sqrt()) * epsilon >= r1 {
        return Err(Error::Profile("test function support leaves the disc".into()));
    }
    let radii: Vec<f64> = grid.planes().iter().map(|p| p.radius()).collect();
    let centre = Complex64::new(3.0 * epsilon, 0.0);
    Ok(grid.sample_real(|z| {
        let mut v = profile.value((z[0] - centre).norm_sqr() / (epsilon * epsilon));
        for j in 1..z.len() {
            if v == 0.0 {
                break;
            }
            v *= profile.value(2.0 * z[j].norm() / radii[j]);
        }
        v
    }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{build_grid, DomainSpec};
    use crate::quadrature::gauss_legendre;

    #[test]
    fn unit_mass_by_quadrature() {
        let p = CutoffProfile::unit_mass();
        // piecewise polynomial: exact with Gauss-Legendre on each piece
        let (x, w) = gauss_legendre(4);
        let pieces = [(0.0, 0.5), (0.5, 1.0), (1.0, 1.5), (1.5, 4.0)];
        let mut m = 0.0;
        for (a, b) in pieces {
            for (xi, wi) in x.iter().zip(&w) {
                m += 0.5 * (b - a) * wi * p.value(a + 0.5 * (b - a) * (xi + 1.0));
            }
        }
        assert!((m - 1.0).abs() < 1e-12, "{m}");
        assert!((p.mass() - 1.0).abs() < 1e-15);
        assert_eq!(p.value(4.0), 0.0);
    }

    #[test]
    fn plateau_sandwich() {
        let p = CutoffProfile::plateau();
        assert_eq!(p.value(0.0), 1.0);
        assert_eq!(p.value(1.0), 1.0);
        assert_eq!(p.value(2.0), 0.0);
        assert_eq!(p.value(3.0), 0.0);
        let mut prev = 1.0;
        for k in 0..=400 {
            let v = p.value(k as f64 * 0.01);
            assert!((0.0..=1.0).contains(&v) && v <= prev);
            prev = v;
        }
    }

    #[test]
    fn derivative_matches_finite_difference() {
        for p in [CutoffProfile::plateau(), CutoffProfile::unit_mass()] {
            for k in 1..100 {
                let t = p.t0 - 0.2 + k as f64 * (p.t1 - p.t0 + 0.4) / 100.0;
                let e = 1e-6;
                let fd = (p.value(t + e) - p.value(t - e)) / (2.0 * e);
                assert!((fd - p.derivative(t)).abs() < 1e-5, "{t}");
            }
        }
    }

    #[test]
    fn rejects_non_unit_mass() {
        assert!(CutoffProfile::new(0.5, 2.0, Normalization::UnitMass).is_err());
        assert!(CutoffProfile::new(0.25, 1.75, Normalization::UnitMass).is_ok());
        assert!(CutoffProfile::new(2.0, 1.0, Normalization::Plateau).is_err());
    }

    #[test]
    fn sampled_cutoff_values() {
        let g = build_grid(&DomainSpec::unit_polydisc(2), 17).unwrap();
        let p = CutoffProfile::plateau();
        let delta = 0.125;
        let chi = sample_cutoff(&p, delta, &g).unwrap();
        for k in 0..g.len() {
            let r = g.coord(k, 1).norm();
            if r <= delta {
                assert_eq!(chi[k], 1.0);
            }
            if r >= 2.0 * delta {
                assert_eq!(chi[k], 0.0);
            }
        }
        assert!(sample_cutoff(&p, 0.5, &g).is_err());
    }

    #[test]
    fn cutoff_derivative_scales_like_inverse_delta() {
        let g = build_grid(&DomainSpec::unit_polydisc(2), 33).unwrap();
        let p = CutoffProfile::plateau();
        let mut maxes = Vec::new();
        for delta in [0.125, 0.0625] {
            let chi: Vec<Complex64> = sample_cutoff(&p, delta, &g)
                .unwrap()
                .into_iter()
                .map(|v| Complex64::new(v, 0.0))
                .collect();
            let d = g.dzbar(1, &chi).unwrap();
            let h = g.plane(1).spacing();
            let mut m: f64 = 0.0;
            for k in 0..g.len() {
                let r = g.coord(k, 1).norm();
                if d[k].norm() > 1e-12 {
                    // supported in the annulus, widened by the stencil reach
                    assert!(r >= delta - h - 1e-12 && r <= 2.0 * delta + h + 1e-12);
                }
                m = m.max(d[k].norm());
            }
            let exact = cutoff_dzbar_exact(&p, delta, &g)
                .iter()
                .map(|v| v.norm())
                .fold(0.0, f64::max);
            // analytic maximum of |chi'| / (2 delta) for the quintic: 15/16 / delta
            assert!(exact * delta <= 15.0 / 16.0 + 1e-12);
            assert!(m * delta <= 1.5 * 15.0 / 16.0, "{}", m * delta);
            maxes.push(m * delta);
        }
        // C / delta with the same C at both scales
        assert!((maxes[0] - maxes[1]).abs() < 0.5 * maxes[0], "{maxes:?}");
    }

    #[test]
    fn test_function_support_and_values() {
        let g = build_grid(&DomainSpec::unit_polydisc(2), 33).unwrap();
        let p = CutoffProfile::unit_mass();
        let eps = 0.125;
        let psi = sample_test_function(&p, eps, &g).unwrap();
        for k in 0..g.len() {
            let z = g.node_coords(k);
            if z[0] == Complex64::new(0.375, 0.0) && z[1] == Complex64::new(0.0, 0.0) {
                assert_eq!(psi[k], 1.0);
            }
            if z[0].norm() < 1e-12 {
                assert_eq!(psi[k], 0.0);
            }
            if psi[k] != 0.0 {
                assert!(z[0].norm() > 0.0);
            }
        }
        assert!(sample_test_function(&p, 0.2, &g).is_err());
        assert!(sample_test_function(&CutoffProfile::plateau(), 0.1, &g).is_err());
    }

    #[test]
    fn test_function_mass_scales_like_eps_squared() {
        // int psi_eps dV = pi eps^2 * (int over z' of the second factor)
        let g = crate::grid::build_grid_with(
            &DomainSpec::unit_polydisc(2),
            &[65, 17],
            crate::grid::DEFAULT_MEMORY_BUDGET,
        )
        .unwrap();
        let p = CutoffProfile::unit_mass();
        let mass = |eps: f64| {
            let psi = sample_test_function(&p, eps, &g).unwrap();
            psi.iter().zip(g.weights()).map(|(a, b)| a * b).sum::<f64>()
        };
        let (m1, m2) = (mass(0.16), mass(0.08));
        assert!((m1 / m2 - 4.0).abs() < 0.2, "{}", m1 / m2);
    }
}
