//! Frozen reference values computed outside this crate (closed forms, or
//! adaptive quadrature in double precision).

use std::f64::consts::PI;
use std::sync::Arc;

use dbar_core::grid::rect_disc_area;
use dbar_core::quadrature::{gauss_legendre, integrate};
use dbar_core::verify::{residue_check, singular_pairing_constant, strip_ball_volume};
use dbar_core::{build_grid, build_grid_with, CutoffProfile, DomainSpec, FormField, MultiIndex};
use dbar_core::operators::OperatorBundle;
use num_complex::Complex64;

fn close(a: f64, b: f64, rel: f64) -> bool {
    (a - b).abs() <= rel * b.abs().max(1e-300)
}

#[test]
fn gauss_legendre_five_points() {
    let (x, w) = gauss_legendre(5);
    let xs = [-0.906179845938664, -0.5384693101056831, 0.0, 0.5384693101056831, 0.906179845938664];
    let ws = [0.23692688505618942, 0.4786286704993662, 0.568888888888889, 0.4786286704993662, 0.23692688505618942];
    for k in 0..5 {
        assert!((x[k] - xs[k]).abs() < 1e-15, "{k}");
        assert!((w[k] - ws[k]).abs() < 1e-15, "{k}");
    }
}

#[test]
fn composite_rule_integrates_sine() {
    let v = integrate(f64::sin, 0.0, PI, 8, 4);
    assert!((v - 2.0).abs() < 1e-14);
}

#[test]
fn rectangle_disc_areas() {
    assert!(close(rect_disc_area(0.0, 1.0, 0.0, 1.0, 1.0), PI / 4.0, 1e-13));
    assert!(close(rect_disc_area(-2.0, 2.0, -2.0, 2.0, 1.0), PI, 1e-13));
    assert!(close(rect_disc_area(-0.1, 0.2, -0.3, 0.1, 1.0), 0.12, 1e-13));
    // circular segment above y = 1/2: pi/3 - sqrt(3)/4
    assert!(close(rect_disc_area(-1.0, 1.0, 0.5, 1.0, 1.0), PI / 3.0 - 3f64.sqrt() / 4.0, 1e-12));
}

#[test]
fn cut_cell_weights_give_the_polydisc_volume() {
    for res in [9, 17, 33] {
        let g = build_grid(&DomainSpec::unit_polydisc(2), res).unwrap();
        assert!(close(g.volume(), PI * PI, 1e-12), "res {res}: {}", g.volume());
    }
    let spec = DomainSpec {
        n: 3,
        polyradii: vec![1.0, 0.5, 0.8],
        scale_to_unit_diameter: false,
    };
    let g = build_grid_with(&spec, &[13, 9, 9], dbar_core::grid::DEFAULT_MEMORY_BUDGET).unwrap();
    assert!(close(g.volume(), PI.powi(3) * 0.25 * 0.64, 1e-12));
}

#[test]
fn residue_identity_values() {
    for eps in [0.1, 0.05] {
        let v = residue_check(eps, 64).unwrap();
        assert!(close(v.re, PI * eps * eps / 9.0, 1e-10), "{eps}: {v}");
        assert!(v.im.abs() < 1e-12 * v.re);
    }
    assert!(close(residue_check(0.1, 64).unwrap().re, 0.003490658503988659, 1e-10));
}

#[test]
fn singular_pairing_constants() {
    // g = 1: -(pi/9) 2 pi int_0^{3/4} chi(2 rho) rho d rho = -25 pi^2 / 864
    let one = singular_pairing_constant(1.0, |_| Complex64::new(1.0, 0.0), 64).unwrap();
    assert!(close(one.re, -25.0 * PI * PI / 864.0, 1e-12), "{one}");
    assert!(close(one.re, -0.28557883105003934, 1e-12));
    let quad = singular_pairing_constant(0.8, |z| Complex64::new(z.norm_sqr(), 0.0), 64).unwrap();
    assert!(close(quad.re, -0.017604449924313474, 1e-10), "{quad}");
    let bump = |z: Complex64| {
        let u = 1.0 - (z - Complex64::new(0.1, 0.0)).norm_sqr() / 0.36;
        Complex64::new(u.max(0.0).powi(3), 0.0)
    };
    let b = singular_pairing_constant(1.0, bump, 128).unwrap();
    assert!(close(b.re, -0.09167828970373867, 1e-5), "{b}");
    assert!(b.im.abs() < 1e-12);
}

#[test]
fn unit_mass_profile_integrates_to_one() {
    let p = CutoffProfile::unit_mass();
    let m = integrate(|t| p.value(t), 0.0, 4.0, 8, 8);
    assert!((m - 1.0).abs() < 1e-13, "{m}");
    assert_eq!(p.value(0.0), 1.0);
    assert_eq!(p.value(1.5), 0.0);
    assert!((p.value(1.0) - 0.5).abs() < 1e-15);
}

#[test]
fn wirtinger_derivatives_of_coordinates() {
    // central differences are exact on linear functions away from the boundary
    let g = Arc::new(build_grid(&DomainSpec::unit_polydisc(2), 17).unwrap());
    let interior = g.interior_mask(2.0);
    let z2 = g.sample(|z| z[1]);
    let z2bar = g.sample(|z| z[1].conj());
    let d_z2 = g.dzbar(2, &z2).unwrap();
    let d_z2bar = g.dzbar(2, &z2bar).unwrap();
    let dz_z2 = g.dz(2, &z2).unwrap();
    for k in (0..g.len()).filter(|&k| interior[k]) {
        assert!(d_z2[k].norm() < 1e-13);
        assert!((d_z2bar[k] - 1.0).norm() < 1e-13);
        assert!((dz_z2[k] - 1.0).norm() < 1e-13);
    }
}

#[test]
fn dbar_of_a_function_has_the_expected_components() {
    let g = Arc::new(build_grid(&DomainSpec::unit_polydisc(2), 13).unwrap());
    let b = OperatorBundle::new(&g, 0).unwrap();
    let mut u = FormField::zeros(g.clone(), 0).unwrap();
    // u = zbar_1 + 2 i zbar_2 + z_1 z_2
    u.set_component(
        MultiIndex::empty(),
        g.sample(|z| z[0].conj() + Complex64::new(0.0, 2.0) * z[1].conj() + z[0] * z[1]),
    )
    .unwrap();
    let du = b.apply_dbar(&u).unwrap();
    let c1 = du.component(&MultiIndex::new(vec![1]).unwrap()).unwrap();
    let c2 = du.component(&MultiIndex::new(vec![2]).unwrap()).unwrap();
    let interior = g.interior_mask(2.0);
    for k in (0..g.len()).filter(|&k| interior[k]) {
        assert!((c1[k] - 1.0).norm() < 1e-12);
        assert!((c2[k] - Complex64::new(0.0, 2.0)).norm() < 1e-12);
    }
}

#[test]
fn strip_volume_against_closed_form() {
    // pi^2 (rho^2 delta^2 - delta^4 / 2) for n = 2
    let g = build_grid_with(&DomainSpec::unit_polydisc(2), &[65, 33], dbar_core::grid::DEFAULT_MEMORY_BUDGET).unwrap();
    let (delta, rho): (f64, f64) = (0.25, 0.9);
    let exact = PI * PI * (rho * rho * delta * delta - delta.powi(4) / 2.0);
    let v = strip_ball_volume(&g, delta, rho).unwrap();
    assert!(close(v, exact, 0.1), "{v} {exact}");
}
