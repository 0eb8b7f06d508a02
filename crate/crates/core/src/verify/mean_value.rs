//! Ball averages against point values.

use std::collections::BTreeMap;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::form::{FormField, MultiIndex};
use crate::pipeline::nearest_node;

fn centre_node(field: &FormField, z_o: &[Complex64]) -> Result<usize> {
    let grid = field.grid();
    if z_o.len() != grid.n() {
        return Err(Error::Geometry(format!("centre has {} coordinates, grid has {}", z_o.len(), grid.n())));
    }
    let node = nearest_node(grid, z_o);
    let off: f64 = grid
        .node_coords(node)
        .iter()
        .zip(z_o)
        .map(|(a, b)| (a - b).norm_sqr())
        .sum::<f64>()
        .sqrt();
    if off > 1e-9 * grid.max_spacing() {
        return Err(Error::Geometry(format!("centre {z_o:?} is not a grid node")));
    }
    Ok(node)
}

/// `|ball average - value at z_o|` for every component. `z_o` must be a node.
pub fn mean_value_deviation(field: &FormField, z_o: &[Complex64], r: f64) -> Result<BTreeMap<MultiIndex, f64>> {
    let node = centre_node(field, z_o)?;
    let grid = field.grid();
    let mut out = BTreeMap::new();
    for j in field.keys() {
        let v = field.component_or_zeros(&j);
        let avg = grid.ball_average(&v, z_o, r)?;
        out.insert(j, (avg - v[node]).norm());
    }
    Ok(out)
}

/// `max_J |avg(f_k)_J - avg(f_last)_J|` for each field of a delta sequence;
/// the last entry is zero by construction.
pub fn ball_average_cauchy(fields: &[FormField], z_o: &[Complex64], r: f64) -> Result<Vec<f64>> {
    let Some(last) = fields.last() else {
        return Ok(Vec::new());
    };
    let averages = |f: &FormField| -> Result<BTreeMap<MultiIndex, Complex64>> {
        f.check_compatible(last)?;
        f.keys()
            .into_iter()
            .map(|j| {
                let v = f.component_or_zeros(&j);
                Ok((j, f.grid().ball_average(&v, z_o, r)?))
            })
            .collect()
    };
    let target = averages(last)?;
    fields
        .iter()
        .map(|f| {
            let a = averages(f)?;
            Ok(a.iter().map(|(j, v)| (v - target[j]).norm()).fold(0.0, f64::max))
        })
        .collect()
}
