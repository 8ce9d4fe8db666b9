use std::sync::Arc;

use crate::diff::{DiffError, Real, Tape, Tensor, Var, NORM_EPS};

use super::{cross, dot, norm, sub, Mesh, MeshError, Neighborhood, Point};

/// Normal assigned to vertices whose incident faces sum to the zero vector.
pub const FALLBACK_NORMAL: Point = [0.0, 0.0, 1.0];

/// Accumulated normals shorter than this use [`FALLBACK_NORMAL`].
const ZERO_NORMAL: f64 = 1e-20;

/// Maps the original frame onto the centered unit cube: `p -> (p - center) / scale`.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct UnitCubeTransform {
    pub center: Point,
    pub scale: f64,
}

impl UnitCubeTransform {
    pub fn apply(&self, p: Point) -> Point {
        let q = sub(p, self.center);
        [q[0] / self.scale, q[1] / self.scale, q[2] / self.scale]
    }

    pub fn invert(&self, p: Point) -> Point {
        [
            p[0] * self.scale + self.center[0],
            p[1] * self.scale + self.center[1],
            p[2] * self.scale + self.center[2],
        ]
    }

    /// Maps a normalized-frame mesh back to the original frame.
    pub fn denormalize(&self, mesh: &Mesh) -> Mesh {
        let vs = mesh.vertices().iter().map(|&p| self.invert(p)).collect();
        mesh.with_vertices(vs).expect("same vertex count")
    }
}

/// Centers the bounding box at the origin and scales its longest edge to 1.
pub fn normalize_unit_cube(mesh: &Mesh) -> Result<(Mesh, UnitCubeTransform), MeshError> {
    let vs = mesh.vertices();
    if vs.is_empty() {
        return Err(MeshError::Empty);
    }
    let mut lo = vs[0];
    let mut hi = vs[0];
    for v in vs {
        for a in 0..3 {
            lo[a] = lo[a].min(v[a]);
            hi[a] = hi[a].max(v[a]);
        }
    }
    let scale = (0..3).map(|a| hi[a] - lo[a]).fold(0.0, f64::max);
    if scale <= 0.0 {
        return Err(MeshError::Degenerate);
    }
    let center = [
        0.5 * (lo[0] + hi[0]),
        0.5 * (lo[1] + hi[1]),
        0.5 * (lo[2] + hi[2]),
    ];
    let t = UnitCubeTransform { center, scale };
    let out = vs
        .iter()
        .map(|&p| t.apply(p).map(|c| c.clamp(-0.5, 0.5)))
        .collect();
    Ok((mesh.with_vertices(out)?.mark_normalized(), t))
}

/// Area-weighted vertex normals (sum of incident face cross products, normalized).
pub fn vertex_normals(mesh: &Mesh) -> Vec<Point> {
    let vs = mesh.vertices();
    let mut acc = vec![[0.0; 3]; vs.len()];
    for f in mesh.faces() {
        let n = cross(sub(vs[f[1]], vs[f[0]]), sub(vs[f[2]], vs[f[0]]));
        for &i in f {
            for a in 0..3 {
                acc[i][a] += n[a];
            }
        }
    }
    acc.into_iter()
        .map(|a| {
            let l = norm(a);
            if l < ZERO_NORMAL {
                FALLBACK_NORMAL
            } else {
                [a[0] / l, a[1] / l, a[2] / l]
            }
        })
        .collect()
}

/// Sum over neighbors of the cosine between the vertex normal and the edge direction.
pub fn vertex_curvature(mesh: &Mesh, nbhd: &Neighborhood, normals: &[Point]) -> Result<Vec<f64>, MeshError> {
    let vs = mesh.vertices();
    if nbhd.len() != vs.len() {
        return Err(MeshError::CountMismatch(vs.len(), nbhd.len()));
    }
    if normals.len() != vs.len() {
        return Err(MeshError::CountMismatch(vs.len(), normals.len()));
    }
    (0..vs.len())
        .map(|i| {
            nbhd.neighbors(i).iter().try_fold(0.0, |acc, &j| {
                let d = sub(vs[j], vs[i]);
                let l = norm(d);
                if l < 1e-12 {
                    return Err(MeshError::CoincidentNeighbors(i, j));
                }
                Ok(acc + dot(d, normals[i]) / l)
            })
        })
        .collect()
}

/// Index arrays for evaluating normals and curvature on a tape.
#[derive(Debug, Clone)]
pub struct CurvatureStencil {
    vertices: usize,
    corners: Arc<[usize]>,
    face_of_corner: Arc<[usize]>,
    face_corner: [Arc<[usize]>; 3],
    src: Arc<[usize]>,
    dst: Arc<[usize]>,
}

impl CurvatureStencil {
    pub fn new(mesh: &Mesh, nbhd: &Neighborhood) -> Self {
        Self::from_parts(mesh.vertex_count(), mesh.faces(), nbhd)
    }

    pub fn from_parts(vertices: usize, faces: &[[usize; 3]], nbhd: &Neighborhood) -> Self {
        assert_eq!(vertices, nbhd.len());
        let nf = faces.len();
        let face_corner = [0, 1, 2].map(|k| faces.iter().map(|f| f[k]).collect::<Arc<[usize]>>());
        let corners: Arc<[usize]> = (0..3).flat_map(|k| faces.iter().map(move |f| f[k])).collect();
        let face_of_corner: Arc<[usize]> = (0..3).flat_map(|_| 0..nf).collect();
        let (src, dst) = nbhd.directed_edges();
        Self {
            vertices,
            corners,
            face_of_corner,
            face_corner,
            src: src.into(),
            dst: dst.into(),
        }
    }

    pub fn vertex_count(&self) -> usize {
        self.vertices
    }

    /// Unit vertex normals `N x 3` of positions `v` (differentiable).
    pub fn normals<T: Real>(&self, tape: &mut Tape<T>, v: Var) -> Result<Var, DiffError> {
        let n = self.vertices;
        let [c0, c1, c2] = &self.face_corner;
        let p0 = tape.gather_rows(v, c0.clone())?;
        let p1 = tape.gather_rows(v, c1.clone())?;
        let p2 = tape.gather_rows(v, c2.clone())?;
        let e1 = tape.sub(p1, p0)?;
        let e2 = tape.sub(p2, p0)?;
        let face_n = tape.cross_rows(e1, e2)?;
        let per_corner = tape.gather_rows(face_n, self.face_of_corner.clone())?;
        let acc = tape.scatter_add_rows(per_corner, self.corners.clone(), n)?;
        let mut fallback = Tensor::zeros(&[n, 3]);
        for i in 0..n {
            let row = tape.value(acc).row(i);
            let len2 = row.iter().fold(0.0, |s, x| s + x.f64() * x.f64());
            if len2.sqrt() < ZERO_NORMAL {
                fallback.data_mut()[i * 3 + 2] = T::one();
            }
        }
        let fallback = tape.constant(fallback);
        let acc = tape.add(acc, fallback)?;
        let len = tape.l2_norm_rows(acc, T::of(NORM_EPS))?;
        let len = tape.broadcast_cols(len, 3)?;
        tape.div(acc, len)
    }

    /// Per-vertex curvature `N x 1` of positions `v`, normals recomputed on the tape.
    pub fn curvature<T: Real>(&self, tape: &mut Tape<T>, v: Var) -> Result<Var, DiffError> {
        let normals = self.normals(tape, v)?;
        let from = tape.gather_rows(v, self.src.clone())?;
        let to = tape.gather_rows(v, self.dst.clone())?;
        let d = tape.sub(to, from)?;
        let len = tape.l2_norm_rows(d, T::of(NORM_EPS))?;
        let n_i = tape.gather_rows(normals, self.src.clone())?;
        let proj = tape.mul(d, n_i)?;
        let proj = tape.sum(proj, 1)?;
        let cos = tape.div(proj, len)?;
        tape.scatter_add_rows(cos, self.src.clone(), self.vertices)
    }
}
