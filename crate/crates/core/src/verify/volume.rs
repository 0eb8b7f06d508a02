//! Quadrature measure of `{|z_1| < delta} ∩ B(0, rho)`.

use crate::error::{Error, Result};
use crate::grid::Grid;

pub fn strip_ball_volume(grid: &Grid, delta: f64, rho: f64) -> Result<f64> {
    if !(delta > 0.0 && rho > 0.0) {
        return Err(Error::Geometry(format!("need positive delta and rho, got {delta}, {rho}")));
    }
    if grid.planes().iter().any(|p| p.radius() < rho) {
        return Err(Error::Geometry(format!("ball of radius {rho} leaves the domain")));
    }
    let r2 = rho * rho;
    let mut total = 0.0;
    for (k, w) in grid.weights().iter().enumerate() {
        if grid.coord(k, 1).norm() >= delta {
            continue;
        }
        let d2: f64 = grid.node_coords(k).iter().map(|z| z.norm_sqr()).sum();
        if d2 < r2 {
            total += w;
        }
    }
    Ok(total)
}
