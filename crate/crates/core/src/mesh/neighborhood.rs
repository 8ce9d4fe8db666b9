use std::sync::Arc;

use crate::diff::{Csr, Real};

use super::Mesh;

/// Per-vertex sorted adjacency lists of the undirected edge graph.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Neighborhood {
    neighbors: Vec<Vec<usize>>,
}

impl Neighborhood {
    /// Union of the three edges of every face, deduplicated.
    pub fn build(mesh: &Mesh) -> Self {
        let mut neighbors = vec![Vec::new(); mesh.vertex_count()];
        for f in mesh.faces() {
            for (a, b) in [(f[0], f[1]), (f[1], f[2]), (f[2], f[0])] {
                neighbors[a].push(b);
                neighbors[b].push(a);
            }
        }
        for list in &mut neighbors {
            list.sort_unstable();
            list.dedup();
        }
        Self { neighbors }
    }

    /// Builds from explicit lists, symmetrizing and dropping self-loops.
    pub fn from_lists(lists: Vec<Vec<usize>>) -> Self {
        let n = lists.len();
        let mut neighbors = vec![Vec::new(); n];
        for (i, list) in lists.into_iter().enumerate() {
            for j in list {
                assert!(j < n, "neighbor {j} out of range");
                if j != i {
                    neighbors[i].push(j);
                    neighbors[j].push(i);
                }
            }
        }
        for list in &mut neighbors {
            list.sort_unstable();
            list.dedup();
        }
        Self { neighbors }
    }

    pub fn len(&self) -> usize {
        self.neighbors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.neighbors.is_empty()
    }

    pub fn neighbors(&self, i: usize) -> &[usize] {
        &self.neighbors[i]
    }

    pub fn degree(&self, i: usize) -> usize {
        self.neighbors[i].len()
    }

    pub fn degrees(&self) -> Vec<usize> {
        self.neighbors.iter().map(Vec::len).collect()
    }

    pub fn is_symmetric(&self) -> bool {
        self.neighbors.iter().enumerate().all(|(i, list)| {
            list.iter()
                .all(|&j| j != i && self.neighbors[j].binary_search(&i).is_ok())
        })
    }

    /// Every ordered pair `(i, j)` with `j` adjacent to `i`, grouped by `i`.
    pub fn directed_edges(&self) -> (Vec<usize>, Vec<usize>) {
        let mut src = Vec::new();
        let mut dst = Vec::new();
        for (i, list) in self.neighbors.iter().enumerate() {
            for &j in list {
                src.push(i);
                dst.push(j);
            }
        }
        (src, dst)
    }

    /// Row `i` holds `1/|N(i)|` (or 1 when `degree_normalized` is off) at every neighbor.
    pub fn aggregation_matrix<T: Real>(&self, degree_normalized: bool) -> Csr<T> {
        let rows: Vec<Vec<(usize, T)>> = self
            .neighbors
            .iter()
            .map(|list| {
                let w = if degree_normalized {
                    T::one() / T::of(list.len().max(1) as f64)
                } else {
                    T::one()
                };
                list.iter().map(|&j| (j, w)).collect()
            })
            .collect();
        Csr::from_rows(self.len(), &rows)
    }

    /// Disjoint union; vertices of later parts are offset by the sizes of earlier ones.
    pub fn stack(parts: &[&Neighborhood]) -> Self {
        let mut neighbors = Vec::with_capacity(parts.iter().map(|p| p.len()).sum());
        let mut offset = 0;
        for p in parts {
            for list in &p.neighbors {
                neighbors.push(list.iter().map(|j| j + offset).collect());
            }
            offset += p.len();
        }
        Self { neighbors }
    }

    /// Induced subgraph on `kept` (original indices, new order = position in `kept`).
    pub fn induced(&self, kept: &[usize]) -> Self {
        let mut remap = vec![usize::MAX; self.len()];
        for (new, &old) in kept.iter().enumerate() {
            remap[old] = new;
        }
        let neighbors = kept
            .iter()
            .map(|&old| {
                let mut l: Vec<usize> = self.neighbors[old]
                    .iter()
                    .filter_map(|&j| (remap[j] != usize::MAX).then_some(remap[j]))
                    .collect();
                l.sort_unstable();
                l
            })
            .collect();
        Self { neighbors }
    }
}

/// `L = I - D^{-1} A` in CSR form (diagonal entry first in each row).
#[derive(Debug, Clone, PartialEq)]
pub struct SparseLaplacian {
    matrix: Arc<Csr<f64>>,
}

impl SparseLaplacian {
    pub fn matrix(&self) -> &Arc<Csr<f64>> {
        &self.matrix
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.matrix.get(i, j)
    }

    pub fn len(&self) -> usize {
        self.matrix.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.matrix.rows() == 0
    }

    pub fn row_sum(&self, i: usize) -> f64 {
        self.matrix.row(i).map(|(_, v)| v).sum()
    }

    pub fn cast<T: Real>(&self) -> Csr<T> {
        self.matrix.cast()
    }
}

/// 1 on the diagonal, `-1/|N(i)|` at neighbors, 0 elsewhere. Isolated vertices get an identity row.
pub fn laplacian_matrix(nbhd: &Neighborhood) -> SparseLaplacian {
    let rows: Vec<Vec<(usize, f64)>> = (0..nbhd.len())
        .map(|i| {
            let list = nbhd.neighbors(i);
            let w = -1.0 / list.len().max(1) as f64;
            std::iter::once((i, 1.0))
                .chain(list.iter().map(|&j| (j, w)))
                .collect()
        })
        .collect();
    SparseLaplacian {
        matrix: Arc::new(Csr::from_rows(nbhd.len(), &rows)),
    }
}
