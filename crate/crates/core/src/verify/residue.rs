//! `int chi'(|z - 3 eps|^2 / eps^2) (conj(z) - 3 eps) / z dx dy` over the disc
//! of radius `2 eps` about `3 eps`, whose exact value is `pi eps^2 / 9` for a
//! unit-mass profile.

use std::f64::consts::PI;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::profile::{CutoffProfile, Normalization};
use crate::quadrature::gauss_legendre;

/// Smallest accepted node count per direction.
pub const MIN_QUAD_RES: usize = 64;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ResidueKernel {
    /// `(conj(z) - 3 eps) / z`.
    Pole,
    /// `conj(z) - 3 eps`, which integrates to zero by angular symmetry.
    NoPole,
}

/// Polar product rule about `3 eps`: Gauss-Legendre in the radius, split at
/// the profile breakpoints, and the periodic trapezoid rule in the angle.
pub fn residue_integral(profile: &CutoffProfile, epsilon: f64, quad_res: usize, kernel: ResidueKernel) -> Result<Complex64> {
    if profile.mode != Normalization::UnitMass {
        return Err(Error::Profile("residue identity needs the unit-mass profile".into()));
    }
    if quad_res < MIN_QUAD_RES {
        return Err(Error::Resolution {
            resolution: quad_res,
            reason: format!("at least {MIN_QUAD_RES} quadrature nodes required"),
        });
    }
    if !(epsilon > 0.0 && epsilon.is_finite()) {
        return Err(Error::Profile(format!("epsilon must be positive, got {epsilon}")));
    }
    let c = 3.0 * epsilon;
    let outer = 2.0 * epsilon;
    let mut breaks = vec![0.0];
    for t in profile.breakpoints() {
        let rho = t.sqrt() * epsilon;
        if rho > 0.0 && rho < outer {
            breaks.push(rho);
        }
    }
    breaks.push(outer);
    let (x, w) = gauss_legendre(quad_res);
    let angles: Vec<Complex64> = (0..quad_res)
        .map(|k| Complex64::from_polar(1.0, 2.0 * PI * k as f64 / quad_res as f64))
        .collect();
    let dtheta = 2.0 * PI / quad_res as f64;
    let mut total = Complex64::new(0.0, 0.0);
    for seg in breaks.windows(2) {
        let (a, b) = (seg[0], seg[1]);
        let half = 0.5 * (b - a);
        for (xi, wi) in x.iter().zip(&w) {
            let rho = a + half * (xi + 1.0);
            let radial = profile.derivative(rho * rho / (epsilon * epsilon)) * rho * wi * half;
            if radial == 0.0 {
                continue;
            }
            let mut ring = Complex64::new(0.0, 0.0);
            for e in &angles {
                let z = c + rho * e;
                let v = z.conj() - c;
                ring += match kernel {
                    ResidueKernel::Pole => v / z,
                    ResidueKernel::NoPole => v,
                };
            }
            total += ring * radial * dtheta;
        }
    }
    Ok(total)
}

/// The residue identity for the unit-mass profile.
pub fn residue_check(epsilon: f64, quad_res: usize) -> Result<Complex64> {
    residue_integral(&CutoffProfile::unit_mass(), epsilon, quad_res, ResidueKernel::Pole)
}
