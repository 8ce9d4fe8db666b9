//! Triangle meshes, connectivity and discrete differential quantities.

mod geometry;
mod neighborhood;
mod obj;

use thiserror::Error;

pub use geometry::{
    normalize_unit_cube, vertex_curvature, vertex_normals, CurvatureStencil, UnitCubeTransform,
    FALLBACK_NORMAL,
};
pub use neighborhood::{laplacian_matrix, Neighborhood, SparseLaplacian};
pub use obj::{parse_obj, write_obj};

pub type Point = [f64; 3];

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MeshError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("face {face} references vertex {index}, but the mesh has {count} vertices")]
    FaceIndex {
        face: usize,
        index: usize,
        count: usize,
    },
    #[error("face {face} repeats vertex {index}")]
    RepeatedVertex { face: usize, index: usize },
    #[error("coordinate of vertex {0} is not finite")]
    NonFinite(usize),
    #[error("bounding box has zero extent on every axis")]
    Degenerate,
    #[error("mesh has no vertices")]
    Empty,
    #[error("vertices {0} and {1} coincide")]
    CoincidentNeighbors(usize, usize),
    #[error("vertex count mismatch: {0} vs {1}")]
    CountMismatch(usize, usize),
    #[error("mesh is not normalized to the unit cube")]
    NotNormalized,
}

/// Indexed triangle mesh.
#[derive(Debug, Clone, PartialEq)]
pub struct Mesh {
    vertices: Vec<Point>,
    faces: Vec<[usize; 3]>,
    normalized: bool,
}

impl Mesh {
    pub fn new(vertices: Vec<Point>, faces: Vec<[usize; 3]>) -> Result<Self, MeshError> {
        let n = vertices.len();
        for (i, v) in vertices.iter().enumerate() {
            if v.iter().any(|c| !c.is_finite()) {
                return Err(MeshError::NonFinite(i));
            }
        }
        for (fi, f) in faces.iter().enumerate() {
            for &index in f {
                if index >= n {
                    return Err(MeshError::FaceIndex {
                        face: fi,
                        index,
                        count: n,
                    });
                }
            }
            if f[0] == f[1] || f[0] == f[2] {
                return Err(MeshError::RepeatedVertex { face: fi, index: f[0] });
            }
            if f[1] == f[2] {
                return Err(MeshError::RepeatedVertex { face: fi, index: f[1] });
            }
        }
        Ok(Self {
            vertices,
            faces,
            normalized: false,
        })
    }

    pub fn empty() -> Self {
        Self {
            vertices: Vec::new(),
            faces: Vec::new(),
            normalized: false,
        }
    }

    pub fn vertices(&self) -> &[Point] {
        &self.vertices
    }

    pub fn faces(&self) -> &[[usize; 3]] {
        &self.faces
    }

    pub fn vertex_count(&self) -> usize {
        self.vertices.len()
    }

    pub fn face_count(&self) -> usize {
        self.faces.len()
    }

    /// True when produced by [`normalize_unit_cube`]; cleared by any vertex replacement.
    pub fn is_normalized(&self) -> bool {
        self.normalized
    }

    /// Same connectivity, new positions.
    pub fn with_vertices(&self, vertices: Vec<Point>) -> Result<Self, MeshError> {
        if vertices.len() != self.vertices.len() {
            return Err(MeshError::CountMismatch(self.vertices.len(), vertices.len()));
        }
        if let Some(i) = vertices.iter().position(|v| v.iter().any(|c| !c.is_finite())) {
            return Err(MeshError::NonFinite(i));
        }
        Ok(Self {
            vertices,
            faces: self.faces.clone(),
            normalized: false,
        })
    }

    /// Relabels vertex `i` as `perm[i]`, re-indexing faces consistently.
    pub fn permuted(&self, perm: &[usize]) -> Self {
        assert_eq!(perm.len(), self.vertices.len());
        let mut vertices = vec![[0.0; 3]; perm.len()];
        for (i, &p) in perm.iter().enumerate() {
            vertices[p] = self.vertices[i];
        }
        let faces = self.faces.iter().map(|f| f.map(|i| perm[i])).collect();
        Self {
            vertices,
            faces,
            normalized: self.normalized,
        }
    }

    pub(crate) fn mark_normalized(mut self) -> Self {
        self.normalized = true;
        self
    }

    /// Flat `N*3` coordinate buffer.
    pub fn flat_coords(&self) -> Vec<f64> {
        self.vertices.iter().flat_map(|v| v.iter().copied()).collect()
    }
}

pub(crate) fn sub(a: Point, b: Point) -> Point {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

pub(crate) fn dot(a: Point, b: Point) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

pub(crate) fn cross(a: Point, b: Point) -> Point {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

pub(crate) fn norm(a: Point) -> f64 {
    dot(a, a).sqrt()
}

#[cfg(test)]
mod tests;
