//! Binary field snapshots. All integers and floats little-endian:
//!
//! ```text
//! magic        8 bytes  "DBARSNP1"
//! n_planes     u32
//! per plane    u32 label, u32 resolution, f64 radius
//! degree       u32
//! n_components u32
//! per component
//!              u32 q, q x u32 indices, u64 len, len x (f64 re, f64 im)
//! ```
//!
//! Node order is the grid's row-major order, last plane fastest.

use std::io::{Read, Write};
use std::path::Path;
use std::sync::Arc;

use dbar_core::grid::Plane;
use dbar_core::{FormField, Grid, MultiIndex};
use num_complex::Complex64;

use crate::error::CliError;

pub const MAGIC: &[u8; 8] = b"DBARSNP1";

#[derive(Clone, Debug, PartialEq)]
pub struct PlaneHeader {
    pub label: u32,
    pub resolution: u32,
    pub radius: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Snapshot {
    pub planes: Vec<PlaneHeader>,
    pub degree: usize,
    pub components: Vec<(MultiIndex, Vec<Complex64>)>,
}

impl Snapshot {
    pub fn from_field(f: &FormField) -> Self {
        Self {
            planes: f
                .grid()
                .planes()
                .iter()
                .map(|p| PlaneHeader {
                    label: p.label() as u32,
                    resolution: p.resolution() as u32,
                    radius: p.radius(),
                })
                .collect(),
            degree: f.degree(),
            components: f.iter().map(|(j, v)| (j.clone(), v.clone())).collect(),
        }
    }

    pub fn build_grid(&self) -> Result<Grid, CliError> {
        let planes = self
            .planes
            .iter()
            .map(|p| Plane::new(p.label as usize, p.radius, p.resolution as usize).map(Arc::new))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Grid::from_planes(planes)?)
    }

    /// The field on `grid`, which must match the header.
    pub fn to_field(&self, grid: Arc<Grid>) -> Result<FormField, CliError> {
        let same = grid.planes().len() == self.planes.len()
            && grid.planes().iter().zip(&self.planes).all(|(p, h)| {
                p.label() == h.label as usize && p.resolution() == h.resolution as usize && p.radius() == h.radius
            });
        if !same {
            return Err(CliError::Config("snapshot grid does not match the configured grid".into()));
        }
        Ok(FormField::from_components(grid, self.degree, self.components.iter().cloned())?)
    }

    pub fn write_to(&self, w: &mut impl Write) -> std::io::Result<()> {
        w.write_all(MAGIC)?;
        w.write_all(&(self.planes.len() as u32).to_le_bytes())?;
        for p in &self.planes {
            w.write_all(&p.label.to_le_bytes())?;
            w.write_all(&p.resolution.to_le_bytes())?;
            w.write_all(&p.radius.to_le_bytes())?;
        }
        w.write_all(&(self.degree as u32).to_le_bytes())?;
        w.write_all(&(self.components.len() as u32).to_le_bytes())?;
        for (j, v) in &self.components {
            w.write_all(&(j.degree() as u32).to_le_bytes())?;
            for &i in j.indices() {
                w.write_all(&(i as u32).to_le_bytes())?;
            }
            w.write_all(&(v.len() as u64).to_le_bytes())?;
            let mut buf = Vec::with_capacity(16 * v.len());
            for z in v {
                buf.extend_from_slice(&z.re.to_le_bytes());
                buf.extend_from_slice(&z.im.to_le_bytes());
            }
            w.write_all(&buf)?;
        }
        Ok(())
    }

    pub fn read_from(r: &mut impl Read) -> Result<Self, CliError> {
        let bad = |m: &str| CliError::Io(format!("snapshot: {m}"));
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(bad("bad magic"));
        }
        let n = read_u32(r)? as usize;
        if n > 64 {
            return Err(bad("implausible plane count"));
        }
        let mut planes = Vec::with_capacity(n);
        for _ in 0..n {
            planes.push(PlaneHeader {
                label: read_u32(r)?,
                resolution: read_u32(r)?,
                radius: read_f64(r)?,
            });
        }
        let degree = read_u32(r)? as usize;
        let nc = read_u32(r)? as usize;
        let mut components = Vec::new();
        for _ in 0..nc {
            let q = read_u32(r)? as usize;
            if q != degree {
                return Err(bad("component degree differs from header"));
            }
            let idx = (0..q).map(|_| read_u32(r).map(|i| i as usize)).collect::<Result<Vec<_>, _>>()?;
            let j = MultiIndex::new(idx).map_err(|e| bad(&e.to_string()))?;
            let len = read_u64(r)? as usize;
            let mut bytes = vec![0u8; len.checked_mul(16).ok_or_else(|| bad("length overflow"))?];
            r.read_exact(&mut bytes)?;
            let v = bytes
                .chunks_exact(16)
                .map(|c| {
                    Complex64::new(
                        f64::from_le_bytes(c[..8].try_into().unwrap()),
                        f64::from_le_bytes(c[8..].try_into().unwrap()),
                    )
                })
                .collect();
            components.push((j, v));
        }
        Ok(Self { planes, degree, components })
    }

    pub fn save(&self, path: &Path) -> Result<(), CliError> {
        let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
        self.write_to(&mut f)?;
        f.flush()?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let f = std::fs::File::open(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
        Self::read_from(&mut std::io::BufReader::new(f))
    }
}

fn read_u32(r: &mut impl Read) -> std::io::Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_u64(r: &mut impl Read) -> std::io::Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}

fn read_f64(r: &mut impl Read) -> std::io::Result<f64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(f64::from_le_bytes(b))
}
