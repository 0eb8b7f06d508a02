//! Where `Delta f_delta` lives: it vanishes off the strip `|z_1| <= 2 delta`
//! and is of size `1 / delta` inside it.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::form::FormField;
use crate::operators::{laplacian_apply, OperatorBundle};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LaplacianSupportReport {
    pub delta: f64,
    /// Nodes with `|z_1| > cut` count as outside.
    pub cut: f64,
    pub outside_max: f64,
    pub inside_max: f64,
    pub norm_f_delta: f64,
}

/// The outside region starts two plane-1 spacings past `2 delta`, the reach
/// of the composed stencils.
pub fn laplacian_support_check(f_delta: &FormField, delta: f64, bundle: &OperatorBundle) -> Result<LaplacianSupportReport> {
    if !(delta > 0.0) {
        return Err(Error::Schedule(format!("delta must be positive, got {delta}")));
    }
    let grid = bundle.grid();
    let cut = 2.0 * delta + 2.0 * grid.plane(1).spacing();
    let lap = laplacian_apply(bundle, f_delta)?;
    let outside: Vec<bool> = (0..grid.len()).map(|k| grid.coord(k, 1).norm() > cut).collect();
    let (mut outside_max, mut inside_max) = (0.0f64, 0.0f64);
    for (_, v) in lap.iter() {
        for (k, x) in v.iter().enumerate() {
            if outside[k] {
                outside_max = outside_max.max(x.norm());
            } else {
                inside_max = inside_max.max(x.norm());
            }
        }
    }
    Ok(LaplacianSupportReport {
        delta,
        cut,
        outside_max,
        inside_max,
        norm_f_delta: f_delta.norm(),
    })
}

impl LaplacianSupportReport {
    /// `inside_max(finer) / inside_max(self)`; about `delta / delta'`.
    pub fn inside_ratio(&self, finer: &LaplacianSupportReport) -> f64 {
        finer.inside_max / self.inside_max
    }
}
