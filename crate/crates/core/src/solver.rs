//! Minimal-norm solutions of `dbar w = beta` by conjugate gradients on the
//! normal equations of the second kind (Craig's method), in the quadrature
//! inner products.
//!
//! With [`SliceConstraint::Tangential`] the admissible set is
//! `{w : w_J = 0 on z_1 = 0 for every J without the index 1}`; the iteration
//! then runs on `dbar M` where `M` zeroes those entries, and the result is
//! the minimal-norm admissible solution `w = M theta s`.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::form::{l2_inner, FormField};
use crate::operators::{LinearMap, OperatorBundle};
use crate::precond::KroneckerPreconditioner;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SliceConstraint {
    /// Plain minimal norm over all grid forms.
    None,
    /// Tangential components vanish on the slice.
    Tangential,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolveOptions {
    pub tol: f64,
    pub max_iter: usize,
    pub constraint: SliceConstraint,
    /// Use the Kronecker preconditioner when the grid allows it.
    #[serde(default = "default_true")]
    pub precondition: bool,
}

fn default_true() -> bool {
    true
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self {
            tol: 1e-8,
            max_iter: 20_000,
            constraint: SliceConstraint::Tangential,
            precondition: true,
        }
    }
}

/// Final residuals above this are reported as inconsistent data rather than
/// slow convergence.
pub const INCONSISTENT_RESIDUAL: f64 = 1e-3;
/// Restarts of preconditioned CG from its best iterate.
const MAX_RESTARTS: usize = 20;
/// A restart cycle must shrink the best residual by this factor to continue.
const RESTART_GAIN: f64 = 0.5;

#[derive(Clone, Debug)]
pub struct SolveResult {
    pub w: FormField,
    /// `||dbar w - beta|| / ||beta||`.
    pub residual_dbar: f64,
    /// `||theta w|| / ||w||` over the whole grid.
    pub residual_theta: f64,
    /// Same ratio, restricted to nodes more than two plane-1 spacings off
    /// the slice.
    pub residual_theta_off_slice: f64,
    pub iterations: usize,
    pub norm_w: f64,
    pub norm_beta: f64,
    pub converged: bool,
    pub inconsistent: bool,
}

fn apply_mask(constraint: SliceConstraint, slice_nodes: &[usize], f: &mut FormField) {
    if constraint == SliceConstraint::None {
        return;
    }
    for (j, v) in f.iter_mut() {
        if j.is_tangential() {
            for &k in slice_nodes {
                v[k] = Complex64::new(0.0, 0.0);
            }
        }
    }
}

/// Relative norms of `theta w`, full and away from the slice.
pub fn theta_residuals(bundle: &OperatorBundle, w: &FormField) -> Result<(f64, f64)> {
    let Some(theta) = &bundle.theta else {
        // theta of a function is zero by definition
        return Ok((0.0, 0.0));
    };
    let nw = w.norm();
    if nw == 0.0 {
        return Ok((0.0, 0.0));
    }
    let tw = theta.apply(w)?;
    let g = bundle.grid();
    let cut = 2.0 * g.plane(1).spacing() + 1e-12;
    let far: Vec<f64> = (0..g.len())
        .map(|k| if g.coord(k, 1).norm() > cut { 1.0 } else { 0.0 })
        .collect();
    Ok((tw.norm() / nw, tw.norm_weighted(Some(&far)) / w.norm_weighted(Some(&far)).max(f64::MIN_POSITIVE)))
}

/// Builds the preconditioner `solve_min_norm` would use, so that a sequence
/// of solves on one grid can share it.
pub fn preconditioner_for(bundle: &OperatorBundle, opts: &SolveOptions) -> Result<Option<KroneckerPreconditioner>> {
    if !opts.precondition || bundle.dbar.is_none() {
        return Ok(None);
    }
    KroneckerPreconditioner::new(bundle.grid(), bundle.degree() + 1)
}

pub fn solve_min_norm(bundle: &OperatorBundle, beta: &FormField, opts: &SolveOptions) -> Result<SolveResult> {
    let pc = preconditioner_for(bundle, opts)?;
    solve_min_norm_with(bundle, beta, opts, pc.as_ref())
}

/// As [`solve_min_norm`] with an explicit preconditioner. With one, the
/// iteration is preconditioned CG on `dbar M theta s = beta` and `w = M theta
/// s` is accumulated directly; without, it is Craig's method.
pub fn solve_min_norm_with(
    bundle: &OperatorBundle,
    beta: &FormField,
    opts: &SolveOptions,
    pc: Option<&KroneckerPreconditioner>,
) -> Result<SolveResult> {
    let q = bundle.degree();
    let grid = bundle.grid().clone();
    let dbar = bundle.dbar.as_ref().ok_or(Error::DegreeOutOfRange {
        q: q + 1,
        n: grid.n(),
    })?;
    let adj = bundle.theta_next.as_ref().expect("theta_{q+1} exists when dbar_q does");
    if beta.degree() != q + 1 {
        return Err(Error::DegreeMismatch {
            left: beta.degree(),
            right: q + 1,
        });
    }
    if !(opts.tol > 0.0) {
        return Err(Error::Solver(format!("tolerance must be positive, got {}", opts.tol)));
    }
    let slice_nodes = if opts.constraint == SliceConstraint::Tangential {
        grid.slice_nodes()?
    } else {
        Vec::new()
    };

    let norm_beta = beta.norm();
    let mut w = FormField::zeros(grid.clone(), q)?;
    if norm_beta == 0.0 {
        return Ok(SolveResult {
            w,
            residual_dbar: 0.0,
            residual_theta: 0.0,
            residual_theta_off_slice: 0.0,
            iterations: 0,
            norm_w: 0.0,
            norm_beta,
            converged: true,
            inconsistent: false,
        });
    }

    let one = Complex64::new(1.0, 0.0);
    let mut r = beta.clone();
    let mut iterations = 0;
    let mut converged = false;
    if let Some(pc) = pc {
        if pc.degree() != q + 1 {
            return Err(Error::DegreeMismatch {
                left: pc.degree(),
                right: q + 1,
            });
        }
        let mut best_w = w.clone();
        let mut best = f64::INFINITY;
        for _ in 0..MAX_RESTARTS {
            let before = best;
            let mut z = pc.apply(&r)?;
            let mut rho = l2_inner(&r, &z, None)?.re;
            let mut p = z;
            let mut cycle_best = f64::INFINITY;
            while iterations < opts.max_iter {
                let rn = r.norm();
                if rn < best {
                    best = rn;
                    best_w.clone_from(&w);
                }
                if rn <= opts.tol * norm_beta {
                    converged = true;
                    break;
                }
                // rounding can make the recursive residual blow up; restart
                // from the best iterate when it does
                cycle_best = cycle_best.min(rn);
                if rn > 1e3 * cycle_best {
                    break;
                }
                let mut u = adj.apply(&p)?;
                apply_mask(opts.constraint, &slice_nodes, &mut u);
                let uu = u.norm().powi(2);
                if uu == 0.0 || !(rho > 0.0) {
                    break;
                }
                let alpha = rho / uu;
                let au = dbar.apply(&u)?;
                w.axpy_in_place(Complex64::new(alpha, 0.0), &u)?;
                r.axpy_in_place(Complex64::new(-alpha, 0.0), &au)?;
                z = pc.apply(&r)?;
                let rho_new = l2_inner(&r, &z, None)?.re;
                z.axpy_in_place(Complex64::new(rho_new / rho, 0.0), &p)?;
                p = z;
                rho = rho_new;
                iterations += 1;
            }
            if converged || iterations >= opts.max_iter || best > RESTART_GAIN * before {
                break;
            }
            w.clone_from(&best_w);
            r = dbar.apply(&w)?;
            r.scale(-one);
            r.axpy_in_place(one, beta)?;
        }
        if !converged {
            w = best_w;
            r = dbar.apply(&w)?;
            r.scale(-one);
            r.axpy_in_place(one, beta)?;
        }
    }
    if !converged && iterations < opts.max_iter {
        // plain Craig, or a warm-started finish after preconditioned CG
        // stalls on the null space of the masked normal operator
        let mut p = adj.apply(&r)?;
        apply_mask(opts.constraint, &slice_nodes, &mut p);
        let mut rho = r.norm().powi(2);
        while iterations < opts.max_iter {
            if rho.sqrt() <= opts.tol * norm_beta {
                converged = true;
                break;
            }
            let pp = p.norm().powi(2);
            if pp == 0.0 {
                break;
            }
            let alpha = rho / pp;
            let ap = dbar.apply(&p)?;
            w.axpy_in_place(Complex64::new(alpha, 0.0), &p)?;
            r.axpy_in_place(Complex64::new(-alpha, 0.0), &ap)?;
            let rho_new = r.norm().powi(2);
            let b = rho_new / rho;
            rho = rho_new;
            let mut next = adj.apply(&r)?;
            apply_mask(opts.constraint, &slice_nodes, &mut next);
            next.axpy_in_place(Complex64::new(b, 0.0), &p)?;
            p = next;
            iterations += 1;
        }
    }
    if !converged && r.norm() <= opts.tol * norm_beta {
        converged = true;
    }

    // true residual, not the recursively updated one
    let mut res = dbar.apply(&w)?;
    res.axpy_in_place(-one, beta)?;
    let residual_dbar = res.norm() / norm_beta;
    let (residual_theta, residual_theta_off_slice) = theta_residuals(bundle, &w)?;
    let norm_w = w.norm();
    Ok(SolveResult {
        w,
        residual_dbar,
        residual_theta,
        residual_theta_off_slice,
        iterations,
        norm_w,
        norm_beta,
        converged,
        inconsistent: !converged && residual_dbar > INCONSISTENT_RESIDUAL,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::form::MultiIndex;
    use crate::grid::{build_grid, DomainSpec, Grid};
    use std::sync::Arc;

    fn grid(res: usize) -> Arc<Grid> {
        Arc::new(build_grid(&DomainSpec::unit_polydisc(2), res).unwrap())
    }

    fn bump(z: &[Complex64]) -> Complex64 {
        let r2 = (z[0] - Complex64::new(0.2, 0.1)).norm_sqr() + (z[1] + Complex64::new(0.1, 0.0)).norm_sqr();
        if r2 < 0.36 {
            Complex64::new((0.36 - r2).powi(3), z[1].im * (0.36 - r2).powi(2))
        } else {
            Complex64::new(0.0, 0.0)
        }
    }

    #[test]
    fn zero_data_needs_no_iterations() {
        let g = grid(9);
        let b = OperatorBundle::new(&g, 1).unwrap();
        let beta = FormField::zeros(g.clone(), 2).unwrap();
        let r = solve_min_norm(&b, &beta, &SolveOptions::default()).unwrap();
        assert_eq!(r.iterations, 0);
        assert_eq!(r.w.max_abs(), 0.0);
        assert!(r.converged);
    }

    #[test]
    fn manufactured_solution_is_beaten_in_norm() {
        let g = grid(13);
        for q in 0..=1 {
            let bundle = OperatorBundle::new(&g, q).unwrap();
            let mut gf = FormField::zeros(g.clone(), q).unwrap();
            for (k, j) in gf.keys().into_iter().enumerate() {
                let v = g.sample(|z| bump(z) * (1.0 + k as f64));
                gf.set_component(j, v).unwrap();
            }
            let beta = bundle.apply_dbar(&gf).unwrap();
            let opts = SolveOptions {
                tol: 1e-10,
                constraint: SliceConstraint::None,
                ..Default::default()
            };
            let r = solve_min_norm(&bundle, &beta, &opts).unwrap();
            assert!(r.converged, "q={q}");
            assert!(r.residual_dbar <= 1e-9, "{}", r.residual_dbar);
            assert!(r.norm_w <= gf.norm() * (1.0 + 1e-9));
            // minimal norm: orthogonal to ker dbar, hence theta-exact
            assert!(r.residual_theta <= 1e-6, "{}", r.residual_theta);
        }
    }

    #[test]
    fn tangential_constraint_is_respected() {
        let g = grid(13);
        let bundle = OperatorBundle::new(&g, 1).unwrap();
        let mut gf = FormField::zeros(g.clone(), 1).unwrap();
        let slice = g.slice_nodes().unwrap();
        let mut v = g.sample(bump);
        for &k in &slice {
            v[k] = Complex64::new(0.0, 0.0);
        }
        gf.set_component(MultiIndex::new(vec![2]).unwrap(), v).unwrap();
        gf.set_component(MultiIndex::new(vec![1]).unwrap(), g.sample(bump)).unwrap();
        let beta = bundle.apply_dbar(&gf).unwrap();
        let r = solve_min_norm(&bundle, &beta, &SolveOptions { tol: 1e-10, ..Default::default() }).unwrap();
        assert!(r.converged && r.residual_dbar <= 1e-9);
        let w2 = r.w.component(&MultiIndex::new(vec![2]).unwrap()).unwrap();
        assert!(slice.iter().all(|&k| w2[k].norm() == 0.0));
        assert!(r.norm_w <= gf.norm() * (1.0 + 1e-9));
        // the multiplier of the constraint lives on the slice only
        assert!(r.residual_theta_off_slice <= 1e-6, "{}", r.residual_theta_off_slice);
        // orthogonality to admissible kernel elements: dbar of any function
        // vanishing on the slice
        let mut phi = FormField::zeros(g.clone(), 0).unwrap();
        phi.set_component(MultiIndex::empty(), g.sample(|z| z[0] * bump(z))).unwrap();
        let kernel_elt = OperatorBundle::new(&g, 0).unwrap().apply_dbar(&phi).unwrap();
        let ip = l2_inner(&r.w, &kernel_elt, None).unwrap();
        assert!(ip.norm() <= 1e-7 * r.norm_w * kernel_elt.norm());
    }

    #[test]
    fn preconditioning_does_not_change_the_solution() {
        let g = Arc::new(
            crate::grid::build_grid_with(&DomainSpec::unit_polydisc(2), &[17, 9], crate::grid::DEFAULT_MEMORY_BUDGET)
                .unwrap(),
        );
        for q in 0..=1 {
            let bundle = OperatorBundle::new(&g, q).unwrap();
            let mut gf = FormField::zeros(g.clone(), q).unwrap();
            for (k, j) in gf.keys().into_iter().enumerate() {
                gf.set_component(j, g.sample(|z| z[0] * bump(z) * (1.0 + k as f64))).unwrap();
            }
            let beta = bundle.apply_dbar(&gf).unwrap();
            for constraint in [SliceConstraint::None, SliceConstraint::Tangential] {
                let mut opts = SolveOptions { tol: 1e-11, constraint, precondition: false, ..Default::default() };
                let plain = solve_min_norm(&bundle, &beta, &opts).unwrap();
                opts.precondition = true;
                let pc = preconditioner_for(&bundle, &opts).unwrap();
                assert!(pc.is_some());
                let fast = solve_min_norm_with(&bundle, &beta, &opts, pc.as_ref()).unwrap();
                assert!(plain.converged && fast.converged, "q={q} {:?} plain {} {} {:.2e} fast {} {} {:.2e}", constraint, plain.converged, plain.iterations, plain.residual_dbar, fast.converged, fast.iterations, fast.residual_dbar);
                assert!(fast.iterations < plain.iterations, "{} {}", fast.iterations, plain.iterations);
                let mut d = fast.w.clone();
                d.axpy_in_place(Complex64::new(-1.0, 0.0), &plain.w).unwrap();
                assert!(d.norm() <= 1e-8 * plain.norm_w, "q={q} {:?}: {}", constraint, d.norm() / plain.norm_w);
            }
        }
    }

    #[test]
    fn inconsistent_data_is_flagged() {
        let g = grid(9);
        let bundle = OperatorBundle::new(&g, 0).unwrap();
        // a non-closed 1-form cannot be dbar of anything
        let mut beta = FormField::zeros(g.clone(), 1).unwrap();
        beta.set_component(MultiIndex::new(vec![1]).unwrap(), g.sample(|z| z[1].conj())).unwrap();
        let r = solve_min_norm(
            &bundle,
            &beta,
            &SolveOptions {
                max_iter: 300,
                constraint: SliceConstraint::None,
                ..Default::default()
            },
        )
        .unwrap();
        assert!(!r.converged);
        assert!(r.inconsistent, "{}", r.residual_dbar);
    }
}
