//! Matrix-free discrete Dolbeault operators on (0,q)-forms.
//!
//! `(dbar u)_H = sum_{i in H} (-1)^{pos(i,H)} d/dzbar_i u_{H \ i}` and
//! `theta` is its exact adjoint for the quadrature inner product: each plane
//! carries `W^{-1} D^H W` for its own weights `W`, and the weights of the
//! other planes cancel.

use std::sync::Arc;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::form::{insert_index, remove_index, FormField, MultiIndex};
use crate::grid::Grid;

/// A linear map between form degrees on one grid.
pub trait LinearMap {
    fn source_degree(&self) -> usize;
    fn target_degree(&self) -> usize;
    fn apply(&self, u: &FormField) -> Result<FormField>;
}

#[derive(Clone, Debug)]
pub struct Dbar {
    grid: Arc<Grid>,
    q: usize,
}

#[derive(Clone, Debug)]
pub struct Theta {
    grid: Arc<Grid>,
    q: usize,
}

/// `dbar: (0,q) -> (0,q+1)` for `0 <= q < n`.
pub fn assemble_dbar(grid: &Arc<Grid>, q: usize) -> Result<Dbar> {
    if q >= grid.n() {
        return Err(Error::DegreeOutOfRange { q, n: grid.n() });
    }
    Ok(Dbar {
        grid: grid.clone(),
        q,
    })
}

/// `theta: (0,q) -> (0,q-1)` for `1 <= q <= n`.
pub fn assemble_theta(grid: &Arc<Grid>, q: usize) -> Result<Theta> {
    if q == 0 || q > grid.n() {
        return Err(Error::DegreeOutOfRange { q, n: grid.n() });
    }
    Ok(Theta {
        grid: grid.clone(),
        q,
    })
}

fn check_input(grid: &Arc<Grid>, q: usize, u: &FormField) -> Result<()> {
    if u.degree() != q {
        return Err(Error::DegreeMismatch {
            left: u.degree(),
            right: q,
        });
    }
    if !grid.same_as(u.grid()) {
        return Err(Error::GridMismatch);
    }
    Ok(())
}

impl LinearMap for Dbar {
    fn source_degree(&self) -> usize {
        self.q
    }
    fn target_degree(&self) -> usize {
        self.q + 1
    }
    fn apply(&self, u: &FormField) -> Result<FormField> {
        check_input(&self.grid, self.q, u)?;
        let g = &self.grid;
        let mut out = FormField::zeros(g.clone(), self.q + 1)?;
        for h in MultiIndex::combinations(g.labels(), self.q + 1) {
            let mut acc: Option<Vec<Complex64>> = None;
            for &i in h.indices() {
                let (sign, k) = remove_index(i, &h)?;
                let Some(uk) = u.component(&k) else { continue };
                let p = g.position(i).expect("label on grid");
                let buf = acc.get_or_insert_with(|| vec![Complex64::new(0.0, 0.0); g.len()]);
                g.apply_plane_add(p, g.planes()[p].dzbar_op(), sign as f64, uk, buf);
            }
            if let Some(v) = acc {
                out.set_component(h, v)?;
            }
        }
        Ok(out)
    }
}

impl LinearMap for Theta {
    fn source_degree(&self) -> usize {
        self.q
    }
    fn target_degree(&self) -> usize {
        self.q - 1
    }
    fn apply(&self, b: &FormField) -> Result<FormField> {
        check_input(&self.grid, self.q, b)?;
        let g = &self.grid;
        let mut out = FormField::zeros(g.clone(), self.q - 1)?;
        for k in MultiIndex::combinations(g.labels(), self.q - 1) {
            let mut acc: Option<Vec<Complex64>> = None;
            for &i in g.labels() {
                if k.contains(i) {
                    continue;
                }
                let (sign, h) = insert_index(i, &k)?;
                let Some(bh) = b.component(&h) else { continue };
                let p = g.position(i).expect("label on grid");
                let buf = acc.get_or_insert_with(|| vec![Complex64::new(0.0, 0.0); g.len()]);
                g.apply_plane_add(p, g.planes()[p].dzbar_adj_op(), sign as f64, bh, buf);
            }
            if let Some(v) = acc {
                out.set_component(k, v)?;
            }
        }
        Ok(out)
    }
}

/// The operators touching degree `q`: `dbar_q`, `theta_q`, and the two
/// neighbours needed for the Laplacian.
#[derive(Clone, Debug)]
pub struct OperatorBundle {
    grid: Arc<Grid>,
    q: usize,
    pub dbar: Option<Dbar>,
    pub theta: Option<Theta>,
    pub dbar_prev: Option<Dbar>,
    pub theta_next: Option<Theta>,
}

impl OperatorBundle {
    pub fn new(grid: &Arc<Grid>, q: usize) -> Result<Self> {
        let n = grid.n();
        if q > n {
            return Err(Error::DegreeOutOfRange { q, n });
        }
        Ok(Self {
            grid: grid.clone(),
            q,
            dbar: (q < n).then(|| assemble_dbar(grid, q)).transpose()?,
            theta: (q >= 1).then(|| assemble_theta(grid, q)).transpose()?,
            dbar_prev: (q >= 1).then(|| assemble_dbar(grid, q - 1)).transpose()?,
            theta_next: (q < n).then(|| assemble_theta(grid, q + 1)).transpose()?,
        })
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn degree(&self) -> usize {
        self.q
    }

    /// `dbar_q u`, or the zero form of degree `q + 1` does not exist.
    pub fn apply_dbar(&self, u: &FormField) -> Result<FormField> {
        self.dbar
            .as_ref()
            .ok_or(Error::DegreeOutOfRange {
                q: self.q + 1,
                n: self.grid.n(),
            })?
            .apply(u)
    }

    pub fn apply_theta(&self, u: &FormField) -> Result<FormField> {
        self.theta
            .as_ref()
            .ok_or(Error::DegreeOutOfRange {
                q: self.q,
                n: self.grid.n(),
            })?
            .apply(u)
    }
}

/// `(dbar theta + theta dbar) u`. Terms whose intermediate degree does not
/// exist are omitted.
pub fn laplacian_apply(bundle: &OperatorBundle, u: &FormField) -> Result<FormField> {
    check_input(&bundle.grid, bundle.q, u)?;
    let mut out = FormField::zeros(bundle.grid.clone(), bundle.q)?;
    if let (Some(t), Some(d)) = (&bundle.theta, &bundle.dbar_prev) {
        out.axpy_in_place(Complex64::new(1.0, 0.0), &d.apply(&t.apply(u)?)?)?;
    }
    if let (Some(d), Some(t)) = (&bundle.dbar, &bundle.theta_next) {
        out.axpy_in_place(Complex64::new(1.0, 0.0), &t.apply(&d.apply(u)?)?)?;
    }
    Ok(out)
}

/// Largest entry of the assembled `dbar_{q+1} dbar_q`, with the scale
/// `max |entry of d_i| * max |entry of d_j|` it should be compared against.
///
/// Every block of the composite is `s (D_i x D_j) + s' (D_j x D_i)` on two
/// different tensor factors, so each entry is a sum of two products.
pub fn composition_max_entry(grid: &Grid, q: usize) -> Result<(f64, f64)> {
    let n = grid.n();
    if q + 2 > n {
        return Err(Error::DegreeOutOfRange { q: q + 2, n });
    }
    let mut worst: f64 = 0.0;
    let mut scale: f64 = 0.0;
    for g in MultiIndex::combinations(grid.labels(), q + 2) {
        for (a, &i) in g.indices().iter().enumerate() {
            for &j in &g.indices()[a + 1..] {
                // path 1: remove i (outer), then j; path 2: remove j, then i
                let (s_i, g_i) = remove_index(i, &g)?;
                let (s_ij, _) = remove_index(j, &g_i)?;
                let (s_j, g_j) = remove_index(j, &g)?;
                let (s_ji, _) = remove_index(i, &g_j)?;
                let s1 = (s_i * s_ij) as f64;
                let s2 = (s_j * s_ji) as f64;
                let di = grid.plane(i).dzbar_op();
                let dj = grid.plane(j).dzbar_op();
                scale = scale.max(di.max_abs() * dj.max_abs());
                for (_, _, a) in di.entries() {
                    for (_, _, b) in dj.entries() {
                        let e = s1 * (a * b) + s2 * (b * a);
                        worst = worst.max(e.norm());
                    }
                }
            }
        }
    }
    Ok((worst, scale))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::form::l2_inner;
    use crate::grid::{build_grid, DomainSpec};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn mi(v: &[usize]) -> MultiIndex {
        MultiIndex::new(v.to_vec()).unwrap()
    }

    fn grid(n: usize, res: usize) -> Arc<Grid> {
        Arc::new(build_grid(&DomainSpec::unit_polydisc(n), res).unwrap())
    }

    fn random_form(g: &Arc<Grid>, q: usize, rng: &mut ChaCha8Rng, interior: bool) -> FormField {
        let mask = g.interior_mask(3.0);
        let mut f = FormField::zeros(g.clone(), q).unwrap();
        for j in f.keys() {
            let v = (0..g.len())
                .map(|k| {
                    if interior && !mask[k] {
                        c(0.0, 0.0)
                    } else {
                        c(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))
                    }
                })
                .collect();
            f.set_component(j, v).unwrap();
        }
        f
    }

    #[test]
    fn dbar_of_conj_z1() {
        let g = grid(2, 9);
        let u = FormField::from_components(g.clone(), 0, [(MultiIndex::empty(), g.sample(|z| z[0].conj()))]).unwrap();
        let d = assemble_dbar(&g, 0).unwrap().apply(&u).unwrap();
        assert!(d.component(&mi(&[1])).unwrap().iter().all(|v| (v - c(1.0, 0.0)).norm() < 1e-12));
        assert!(d.component_or_zeros(&mi(&[2])).iter().all(|v| v.norm() < 1e-12));
    }

    #[test]
    fn two_term_formula() {
        let g = grid(2, 9);
        let u = FormField::from_components(g.clone(), 1, [(mi(&[2]), g.sample(|z| z[0].conj()))]).unwrap();
        let d = assemble_dbar(&g, 1).unwrap().apply(&u).unwrap();
        assert!(d.component(&mi(&[1, 2])).unwrap().iter().all(|v| (v - c(1.0, 0.0)).norm() < 1e-12));
        // and with the other component: (dbar u)_{12} = -dzbar_2 u_1
        let u = FormField::from_components(g.clone(), 1, [(mi(&[1]), g.sample(|z| z[1].conj()))]).unwrap();
        let d = assemble_dbar(&g, 1).unwrap().apply(&u).unwrap();
        assert!(d.component(&mi(&[1, 2])).unwrap().iter().all(|v| (v + c(1.0, 0.0)).norm() < 1e-12));
    }

    #[test]
    fn degree_ranges() {
        let g = grid(2, 9);
        assert!(assemble_dbar(&g, 2).is_err());
        assert!(assemble_theta(&g, 0).is_err());
        assert!(assemble_theta(&g, 3).is_err());
        let u = FormField::zeros(g.clone(), 1).unwrap();
        assert!(assemble_dbar(&g, 0).unwrap().apply(&u).is_err());
    }

    #[test]
    fn composition_entries_cancel() {
        let g = grid(3, 9);
        for q in 0..=1 {
            let (worst, scale) = composition_max_entry(&g, q).unwrap();
            assert!(worst <= 1e-12 * scale, "{worst} {scale}");
        }
        let g = grid(2, 17);
        let (worst, scale) = composition_max_entry(&g, 0).unwrap();
        assert!(worst <= 1e-12 * scale);
        assert!(composition_max_entry(&g, 1).is_err());
    }

    #[test]
    fn dbar_squared_on_smooth_data() {
        let g = grid(3, 9);
        let u = FormField::from_components(
            g.clone(),
            0,
            [(MultiIndex::empty(), g.sample(|z| (z[0] * z[1].conj() + z[2].norm_sqr()).exp()))],
        )
        .unwrap();
        let d1 = assemble_dbar(&g, 0).unwrap().apply(&u).unwrap();
        let d2 = assemble_dbar(&g, 1).unwrap().apply(&d1).unwrap();
        assert!(d2.max_abs() <= 1e-12 * d1.max_abs().max(1.0) * 8.0, "{}", d2.max_abs());
    }

    #[test]
    fn adjointness_random_pairs() {
        let g = grid(2, 17);
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for q in 0..=1 {
            let d = assemble_dbar(&g, q).unwrap();
            let t = assemble_theta(&g, q + 1).unwrap();
            for interior in [true, false] {
                for _ in 0..5 {
                    let a = random_form(&g, q, &mut rng, interior);
                    let b = random_form(&g, q + 1, &mut rng, interior);
                    let lhs = l2_inner(&d.apply(&a).unwrap(), &b, None).unwrap();
                    let rhs = l2_inner(&a, &t.apply(&b).unwrap(), None).unwrap();
                    assert!((lhs - rhs).norm() <= 1e-10 * a.norm() * b.norm());
                }
            }
        }
    }

    #[test]
    fn theta_kills_dbar_of_constant_and_itself() {
        let g = grid(2, 13);
        let one = FormField::from_components(g.clone(), 0, [(MultiIndex::empty(), vec![c(2.0, 1.0); g.len()])]).unwrap();
        let d = assemble_dbar(&g, 0).unwrap().apply(&one).unwrap();
        let t = assemble_theta(&g, 1).unwrap().apply(&d).unwrap();
        assert!(t.max_abs() < 1e-12);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let b = random_form(&g, 2, &mut rng, false);
        let t1 = assemble_theta(&g, 2).unwrap().apply(&b).unwrap();
        let t2 = assemble_theta(&g, 1).unwrap().apply(&t1).unwrap();
        assert!(t2.max_abs() <= 1e-12 * t1.max_abs(), "{}", t2.max_abs());
    }

    #[test]
    fn laplacian_conventions() {
        let g = grid(2, 17);
        let inside = g.interior_mask(4.0);
        // constants
        for q in 0..=2 {
            let b = OperatorBundle::new(&g, q).unwrap();
            let mut u = FormField::zeros(g.clone(), q).unwrap();
            for j in u.keys() {
                u.set_component(j, vec![c(1.0, -0.5); g.len()]).unwrap();
            }
            let l = laplacian_apply(&b, &u).unwrap();
            for (_, v) in l.iter() {
                assert!((0..g.len()).filter(|&k| inside[k]).all(|k| v[k].norm() < 1e-11));
            }
        }
        // |z_2|^2 -> -1: the Hodge Laplacian is -(1/4) of the Euclidean one
        let b = OperatorBundle::new(&g, 1).unwrap();
        let u = FormField::from_components(g.clone(), 1, [(mi(&[1]), g.sample(|z| c(z[1].norm_sqr(), 0.0)))]).unwrap();
        let l = laplacian_apply(&b, &u).unwrap();
        let v = l.component(&mi(&[1])).unwrap();
        for k in (0..g.len()).filter(|&k| inside[k]) {
            assert!((v[k] + c(1.0, 0.0)).norm() < 1e-10, "{}", v[k]);
        }
        assert!((0..g.len())
            .filter(|&k| inside[k])
            .all(|k| l.component_or_zeros(&mi(&[2]))[k].norm() < 1e-10));
    }

    #[test]
    fn laplacian_harmonic_residual_is_second_order() {
        let res_at = |res: usize| {
            let g = grid(2, res);
            let inside = g.interior_mask(4.0);
            let b = OperatorBundle::new(&g, 1).unwrap();
            let f = |z: &[Complex64]| c(z[1].powi(4).re + z[0].powi(4).re, 0.0);
            let u = FormField::from_components(g.clone(), 1, [(mi(&[1]), g.sample(f)), (mi(&[2]), g.sample(f))]).unwrap();
            let l = laplacian_apply(&b, &u).unwrap();
            let mut m: f64 = 0.0;
            for (_, v) in l.iter() {
                for k in (0..g.len()).filter(|&k| inside[k]) {
                    m = m.max(v[k].norm());
                }
            }
            m
        };
        let (e1, e2) = (res_at(17), res_at(33));
        let slope = (e1 / e2).log2();
        assert!(slope > 1.7, "{e1} {e2} slope {slope}");
    }

    #[test]
    fn laplacian_self_adjoint_psd() {
        let g = grid(2, 13);
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let b = OperatorBundle::new(&g, 1).unwrap();
        for _ in 0..4 {
            let u = random_form(&g, 1, &mut rng, true);
            let v = random_form(&g, 1, &mut rng, true);
            let lu = laplacian_apply(&b, &u).unwrap();
            let lv = laplacian_apply(&b, &v).unwrap();
            let q = l2_inner(&lu, &u, None).unwrap();
            assert!(q.re >= -1e-10 * u.norm().powi(2));
            let a = l2_inner(&lu, &v, None).unwrap();
            let bb = l2_inner(&u, &lv, None).unwrap();
            assert!((a - bb).norm() <= 1e-10 * lu.norm() * v.norm());
        }
    }

    #[test]
    fn key_families_are_complete() {
        let g = grid(3, 9);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let u = random_form(&g, 1, &mut rng, false);
        let d = assemble_dbar(&g, 1).unwrap().apply(&u).unwrap();
        assert_eq!(d.degree(), 2);
        assert_eq!(d.iter().count(), 3);
        let t = assemble_theta(&g, 1).unwrap().apply(&u).unwrap();
        assert_eq!(t.degree(), 0);
        assert_eq!(t.iter().count(), 1);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(12))]
            #[test]
            fn dbar_squared_vanishes(seed in any::<u64>(), q in 0usize..2) {
                let g = grid(3, 9);
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let u = random_form(&g, q, &mut rng, false);
                let d1 = assemble_dbar(&g, q).unwrap().apply(&u).unwrap();
                let d2 = assemble_dbar(&g, q + 1).unwrap().apply(&d1).unwrap();
                prop_assert!(d2.max_abs() <= 1e-12 * d1.max_abs() * 16.0);
            }

            #[test]
            fn theta_is_adjoint(seed in any::<u64>(), q in 0usize..3) {
                let g = grid(3, 9);
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let a = random_form(&g, q, &mut rng, false);
                let b = random_form(&g, q + 1, &mut rng, false);
                let lhs = l2_inner(&assemble_dbar(&g, q).unwrap().apply(&a).unwrap(), &b, None).unwrap();
                let rhs = l2_inner(&a, &assemble_theta(&g, q + 1).unwrap().apply(&b).unwrap(), None).unwrap();
                prop_assert!((lhs - rhs).norm() <= 1e-10 * a.norm() * b.norm());
            }
        }
    }
}
