//! Distortion and robustness measures between meshes and watermarks.

use serde::{Deserialize, Serialize};

use crate::mesh::{vertex_curvature, vertex_normals, Mesh, MeshError, Neighborhood, Point};
use crate::watermark::Watermark;
use crate::{Error, Result};

fn dist(a: Point, b: Point) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)).sqrt()
}

fn same_count(a: &Mesh, b: &Mesh) -> Result<()> {
    if a.vertex_count() != b.vertex_count() {
        return Err(MeshError::CountMismatch(a.vertex_count(), b.vertex_count()).into());
    }
    Ok(())
}

fn directed(a: &[Point], b: &[Point]) -> f64 {
    a.iter()
        .map(|&p| b.iter().map(|&q| dist(p, q)).fold(f64::INFINITY, f64::min))
        .fold(0.0, f64::max)
}

/// Symmetric Hausdorff distance between the vertex sets.
pub fn hausdorff(a: &Mesh, b: &Mesh) -> Result<f64> {
    if a.vertex_count() == 0 || b.vertex_count() == 0 {
        return Err(MeshError::Empty.into());
    }
    Ok(directed(a.vertices(), b.vertices()).max(directed(b.vertices(), a.vertices())))
}

/// RMS distance between index-corresponding vertices (both directions coincide).
pub fn mrms(a: &Mesh, b: &Mesh) -> Result<f64> {
    same_count(a, b)?;
    if a.vertex_count() == 0 {
        return Err(MeshError::Empty.into());
    }
    let sum: f64 = displacement_map(a, b)?.iter().map(|d| d * d).sum();
    Ok((sum / a.vertex_count() as f64).sqrt())
}

/// Mean squared difference of per-vertex curvature, each mesh with its own normals.
pub fn curvature_distortion(a: &Mesh, b: &Mesh) -> Result<f64> {
    same_count(a, b)?;
    if a.vertex_count() == 0 {
        return Err(MeshError::Empty.into());
    }
    let ca = vertex_curvature(a, &Neighborhood::build(a), &vertex_normals(a))?;
    let cb = vertex_curvature(b, &Neighborhood::build(b), &vertex_normals(b))?;
    Ok(ca.iter().zip(&cb).map(|(x, y)| (x - y).powi(2)).sum::<f64>() / ca.len() as f64)
}

/// Percentage of matching bits.
pub fn bit_accuracy(w_in: &Watermark, w_dec: &Watermark) -> Result<f64> {
    if w_in.len() != w_dec.len() {
        return Err(Error::Dimension(format!("watermarks of {} and {} bits", w_in.len(), w_dec.len())));
    }
    if w_in.is_empty() {
        return Err(Error::Dimension("empty watermark".into()));
    }
    let same = w_in.bits().iter().zip(w_dec.bits()).filter(|(a, b)| a == b).count();
    Ok(100.0 * same as f64 / w_in.len() as f64)
}

/// Per-vertex Euclidean displacement `‖a_i - b_i‖`.
pub fn displacement_map(a: &Mesh, b: &Mesh) -> Result<Vec<f64>> {
    same_count(a, b)?;
    Ok(a.vertices().iter().zip(b.vertices()).map(|(&p, &q)| dist(p, q)).collect())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DistortionReport {
    pub hd: f64,
    pub mrms: f64,
    pub l_cur: f64,
    pub displacement: Vec<f64>,
}

impl DistortionReport {
    pub fn between(a: &Mesh, b: &Mesh) -> Result<Self> {
        Ok(Self {
            hd: hausdorff(a, b)?,
            mrms: mrms(a, b)?,
            l_cur: curvature_distortion(a, b)?,
            displacement: displacement_map(a, b)?,
        })
    }
}
