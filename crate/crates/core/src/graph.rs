//! Connectivity caches for single meshes and for stacked minibatches.
//!
//! A minibatch is processed as one block-diagonal graph: vertices of all
//! meshes are stacked row-wise, so graph convolution, batch normalization
//! and curvature run once over the whole batch while pooling stays per mesh.

use std::sync::Arc;

use crate::diff::{Csr, Real};
use crate::mesh::{laplacian_matrix, CurvatureStencil, Mesh, Neighborhood, SparseLaplacian};
use crate::nn::segment_mean_matrix;
use crate::{Error, Result};

/// Connectivity derived from one mesh.
#[derive(Clone, Debug)]
pub struct MeshGraph {
    pub faces: Vec<[usize; 3]>,
    pub nbhd: Neighborhood,
    pub laplacian: SparseLaplacian,
}

impl MeshGraph {
    pub fn new(mesh: &Mesh) -> Self {
        let nbhd = Neighborhood::build(mesh);
        let laplacian = laplacian_matrix(&nbhd);
        Self {
            faces: mesh.faces().to_vec(),
            nbhd,
            laplacian,
        }
    }

    pub fn len(&self) -> usize {
        self.nbhd.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nbhd.is_empty()
    }
}

/// Block-diagonal layout of several meshes.
#[derive(Clone, Debug)]
pub struct Topology<T> {
    counts: Vec<usize>,
    offsets: Vec<usize>,
    /// Neighbor aggregation for graph convolution.
    pub agg: Arc<Csr<T>>,
    /// `B x ΣN` per-mesh averaging.
    pub pool: Arc<Csr<T>>,
    /// Mesh index of every stacked row.
    pub owner: Arc<[usize]>,
    pub stencil: CurvatureStencil,
}

impl<T: Real> Topology<T> {
    pub fn stack(graphs: &[&MeshGraph], degree_norm: bool) -> Result<Self> {
        if graphs.is_empty() {
            return Err(Error::Dimension("empty batch".into()));
        }
        let counts: Vec<usize> = graphs.iter().map(|g| g.len()).collect();
        let mut offsets = Vec::with_capacity(counts.len());
        let mut total = 0;
        for &n in &counts {
            offsets.push(total);
            total += n;
        }
        let blocks: Vec<Csr<T>> = graphs.iter().map(|g| g.nbhd.aggregation_matrix(degree_norm)).collect();
        let agg = Csr::block_diag(&blocks.iter().collect::<Vec<_>>());
        let nbhds: Vec<&Neighborhood> = graphs.iter().map(|g| &g.nbhd).collect();
        let faces: Vec<[usize; 3]> = graphs
            .iter()
            .zip(&offsets)
            .flat_map(|(g, &o)| g.faces.iter().map(move |f| f.map(|i| i + o)))
            .collect();
        let stencil = CurvatureStencil::from_parts(total, &faces, &Neighborhood::stack(&nbhds));
        let owner = counts
            .iter()
            .enumerate()
            .flat_map(|(b, &n)| std::iter::repeat_n(b, n))
            .collect();
        Ok(Self {
            pool: Arc::new(segment_mean_matrix(&counts)?),
            counts,
            offsets,
            agg: Arc::new(agg),
            owner,
            stencil,
        })
    }

    pub fn meshes(&self) -> usize {
        self.counts.len()
    }

    pub fn rows(&self) -> usize {
        self.owner.len()
    }

    pub fn counts(&self) -> &[usize] {
        &self.counts
    }

    /// Stacked row indices of mesh `b`.
    pub fn segment(&self, b: usize) -> Arc<[usize]> {
        (self.offsets[b]..self.offsets[b] + self.counts[b]).collect()
    }
}
