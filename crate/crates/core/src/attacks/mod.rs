//! Differentiable attack layers: identity, rotation, Gaussian noise,
//! Laplacian smoothing and cropping.
//!
//! The tape versions are what training differentiates through; the
//! mesh-level [`apply`] runs the same code on a throwaway `f64` tape.

use std::sync::Arc;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::diff::{Real, Tape, Tensor, Var};
use crate::graph::MeshGraph;
use crate::mesh::{Mesh, Point};
use crate::{Error, Result};


#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AttackKind {
    Identity,
    Rotation,
    Noise,
    Smoothing,
    Cropping,
}

impl AttackKind {
    pub const ALL: [AttackKind; 5] = [
        AttackKind::Identity,
        AttackKind::Rotation,
        AttackKind::Noise,
        AttackKind::Smoothing,
        AttackKind::Cropping,
    ];

    pub fn name(self) -> &'static str {
        match self {
            AttackKind::Identity => "identity",
            AttackKind::Rotation => "rotation",
            AttackKind::Noise => "noise",
            AttackKind::Smoothing => "smoothing",
            AttackKind::Cropping => "cropping",
        }
    }

    pub fn parse(name: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|k| k.name() == name)
            .ok_or_else(|| Error::Attack(format!("unknown attack kind {name:?}")))
    }
}

/// Sampling bounds for training-time attacks.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AttackConfig {
    /// Degrees, per axis.
    pub theta_max: f64,
    pub sigma_max: f64,
    pub alpha_max: f64,
    /// Smallest retained vertex fraction under cropping.
    pub beta_min: f64,
    pub enabled: Vec<AttackKind>,
}

impl Default for AttackConfig {
    fn default() -> Self {
        Self {
            theta_max: 15.0,
            sigma_max: 0.03,
            alpha_max: 0.2,
            beta_min: 0.8,
            enabled: AttackKind::ALL.to_vec(),
        }
    }
}

impl AttackConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str, v: f64| Err(Error::Config(format!("{what} = {v} out of range")));
        if !(0.0..=180.0).contains(&self.theta_max) {
            return bad("theta_max", self.theta_max);
        }
        if !(self.sigma_max >= 0.0 && self.sigma_max.is_finite()) {
            return bad("sigma_max", self.sigma_max);
        }
        if !(self.alpha_max >= 0.0 && self.alpha_max.is_finite()) {
            return bad("alpha_max", self.alpha_max);
        }
        if !(0.0..=1.0).contains(&self.beta_min) {
            return bad("beta_min", self.beta_min);
        }
        if self.enabled.is_empty() {
            return Err(Error::Config("no attack kinds enabled".into()));
        }
        Ok(())
    }

    /// Uniform over the enabled kinds.
    pub fn sample_kind(&self, rng: &mut impl Rng) -> Result<AttackKind> {
        if self.enabled.is_empty() {
            return Err(Error::Config("no attack kinds enabled".into()));
        }
        Ok(self.enabled[rng.random_range(0..self.enabled.len())])
    }

    /// Draws intensities for a given kind.
    pub fn sample_intensity(&self, kind: AttackKind, rng: &mut impl Rng) -> AttackInstance {
        let uniform = |rng: &mut dyn rand::RngCore, lo: f64, hi: f64| if hi > lo { rng.random_range(lo..=hi) } else { lo };
        match kind {
            AttackKind::Identity => AttackInstance::Identity,
            AttackKind::Rotation => {
                let t = self.theta_max;
                AttackInstance::Rotation {
                    degrees: [uniform(rng, -t, t), uniform(rng, -t, t), uniform(rng, -t, t)],
                }
            }
            AttackKind::Noise => AttackInstance::Noise {
                sigma: uniform(rng, 0.0, self.sigma_max),
            },
            AttackKind::Smoothing => AttackInstance::Smoothing {
                alpha: uniform(rng, 0.0, self.alpha_max),
            },
            AttackKind::Cropping => AttackInstance::Cropping {
                beta: uniform(rng, self.beta_min, 1.0),
            },
        }
    }

    pub fn sample_attack(&self, rng: &mut impl Rng) -> Result<AttackInstance> {
        let kind = self.sample_kind(rng)?;
        Ok(self.sample_intensity(kind, rng))
    }
}

/// One attack with its intensity fixed.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum AttackInstance {
    Identity,
    /// Angles about x, y, z in degrees, composed as `Rz·Ry·Rx`.
    Rotation { degrees: [f64; 3] },
    /// Standard deviation of the added per-coordinate noise.
    Noise { sigma: f64 },
    Smoothing { alpha: f64 },
    /// Fraction of vertices retained.
    Cropping { beta: f64 },
}

impl AttackInstance {
    pub fn kind(&self) -> AttackKind {
        match self {
            AttackInstance::Identity => AttackKind::Identity,
            AttackInstance::Rotation { .. } => AttackKind::Rotation,
            AttackInstance::Noise { .. } => AttackKind::Noise,
            AttackInstance::Smoothing { .. } => AttackKind::Smoothing,
            AttackInstance::Cropping { .. } => AttackKind::Cropping,
        }
    }

    /// Fixed-intensity instance with the scalar used in sweeps: rotation
    /// applies `intensity` degrees about every axis.
    pub fn at(kind: AttackKind, intensity: f64) -> Result<Self> {
        let inst = match kind {
            AttackKind::Identity => AttackInstance::Identity,
            AttackKind::Rotation => AttackInstance::Rotation { degrees: [intensity; 3] },
            AttackKind::Noise => AttackInstance::Noise { sigma: intensity },
            AttackKind::Smoothing => AttackInstance::Smoothing { alpha: intensity },
            AttackKind::Cropping => AttackInstance::Cropping { beta: intensity },
        };
        inst.validate()?;
        Ok(inst)
    }

    pub fn validate(&self) -> Result<()> {
        let ok = match *self {
            AttackInstance::Identity => true,
            AttackInstance::Rotation { degrees } => degrees.iter().all(|d| (-180.0..=180.0).contains(d)),
            AttackInstance::Noise { sigma } => sigma >= 0.0 && sigma.is_finite(),
            AttackInstance::Smoothing { alpha } => alpha >= 0.0 && alpha.is_finite(),
            AttackInstance::Cropping { beta } => (0.0..=1.0).contains(&beta),
        };
        if ok {
            Ok(())
        } else {
            Err(Error::Attack(format!("intensity out of range: {self:?}")))
        }
    }
}

/// `R = Rz(θz)·Ry(θy)·Rx(θx)`, angles in degrees.
pub fn rotation_matrix(degrees: [f64; 3]) -> [[f64; 3]; 3] {
    let [ax, ay, az] = degrees.map(f64::to_radians);
    let (sx, cx) = ax.sin_cos();
    let (sy, cy) = ay.sin_cos();
    let (sz, cz) = az.sin_cos();
    [
        [cz * cy, cz * sy * sx - sz * cx, cz * sy * cx + sz * sx],
        [sz * cy, sz * sy * sx + cz * cx, sz * sy * cx - cz * sx],
        [-sy, cy * sx, cy * cx],
    ]
}

/// `V·Rᵀ`.
pub fn rotate<T: Real>(tape: &mut Tape<T>, v: Var, degrees: [f64; 3]) -> Result<Var> {
    let r = rotation_matrix(degrees);
    let rt = Tensor::matrix(3, 3, (0..9).map(|k| T::of(r[k % 3][k / 3])).collect())?;
    let rt = tape.constant(rt);
    Ok(tape.matmul(v, rt)?)
}

/// `V + ε`, ε i.i.d. normal with standard deviation `sigma`; the noise is a constant.
pub fn gaussian_noise<T: Real>(tape: &mut Tape<T>, v: Var, sigma: f64, rng: &mut impl Rng) -> Result<Var> {
    let shape = tape.shape(v).to_vec();
    let len = shape.iter().product();
    let noise = (0..len)
        .map(|_| {
            let z: f64 = StandardNormal.sample(rng);
            T::of(sigma * z)
        })
        .collect();
    let noise = tape.constant(Tensor::new(shape, noise)?);
    Ok(tape.add(v, noise)?)
}

/// One step `V - α·L·V`.
pub fn laplacian_smooth<T: Real>(tape: &mut Tape<T>, v: Var, graph: &MeshGraph, alpha: f64) -> Result<Var> {
    let n = tape.shape(v)[0];
    if graph.laplacian.len() != n {
        return Err(Error::Dimension(format!(
            "smoothing {n} vertices with a {}-vertex Laplacian",
            graph.laplacian.len()
        )));
    }
    let lv = tape.sparse_matmul(Arc::new(graph.laplacian.cast()), v)?;
    let lv = tape.scale(lv, T::of(alpha))?;
    Ok(tape.sub(v, lv)?)
}

/// Vertices kept by a cropping cut, in original order.
///
/// `p⁻` is the vertex of the all-nonpositive octant with the smallest
/// coordinate sum and `p⁺` the all-nonnegative one with the largest (falling
/// back to the global extremes when an octant is empty). The `⌈β·N⌉`
/// vertices with the largest projection on `p⁺ - p⁻` survive; ties go to
/// the lower index.
pub fn crop_selection(vertices: &[Point], beta: f64) -> Result<Vec<usize>> {
    let n = vertices.len();
    if !(0.0..=1.0).contains(&beta) {
        return Err(Error::Attack(format!("cropping ratio {beta} outside [0, 1]")));
    }
    let keep = retained_count(n, beta);
    if keep < 3 {
        return Err(Error::Attack(format!("cropping would retain {keep} vertices (need at least 3)")));
    }
    let sum = |i: usize| vertices[i].iter().sum::<f64>();
    let extreme = |filter: &dyn Fn(&Point) -> bool, better: &dyn Fn(f64, f64) -> bool| {
        let pick = |cands: &mut dyn Iterator<Item = usize>| {
            cands.fold(None, |best: Option<usize>, i| match best {
                Some(b) if !better(sum(i), sum(b)) => Some(b),
                _ => Some(i),
            })
        };
        pick(&mut (0..n).filter(|&i| filter(&vertices[i]))).or_else(|| pick(&mut (0..n)))
    };
    let lo = extreme(&|p| p.iter().all(|&c| c <= 0.0), &|a, b| a < b);
    let hi = extreme(&|p| p.iter().all(|&c| c >= 0.0), &|a, b| a > b);
    let (Some(lo), Some(hi)) = (lo, hi) else {
        return Err(Error::Attack("cropping an empty mesh".into()));
    };
    let (p_lo, p_hi) = (vertices[lo], vertices[hi]);
    let d = [p_hi[0] - p_lo[0], p_hi[1] - p_lo[1], p_hi[2] - p_lo[2]];
    let len = (d[0] * d[0] + d[1] * d[1] + d[2] * d[2]).sqrt();
    if len < 1e-12 {
        return Err(Error::Attack("cropping axis is degenerate (p+ = p-)".into()));
    }
    let proj: Vec<f64> = vertices
        .iter()
        .map(|p| ((p[0] - p_lo[0]) * d[0] + (p[1] - p_lo[1]) * d[1] + (p[2] - p_lo[2]) * d[2]) / len)
        .collect();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| proj[b].total_cmp(&proj[a]).then(a.cmp(&b)));
    let mut kept = order[..keep].to_vec();
    kept.sort_unstable();
    Ok(kept)
}

/// `⌈β·N⌉`, robust to the representation error of `β`.
pub fn retained_count(n: usize, beta: f64) -> usize {
    ((beta * n as f64 - 1e-9).ceil().max(0.0) as usize).min(n)
}

/// Faces whose three corners survive, re-indexed to positions in `kept`.
pub fn crop_faces(faces: &[[usize; 3]], kept: &[usize], n: usize) -> Vec<[usize; 3]> {
    let mut remap = vec![usize::MAX; n];
    for (new, &old) in kept.iter().enumerate() {
        remap[old] = new;
    }
    faces
        .iter()
        .filter(|f| f.iter().all(|&i| remap[i] != usize::MAX))
        .map(|f| f.map(|i| remap[i]))
        .collect()
}

/// Result of cropping: surviving original indices and the new connectivity.
#[derive(Clone, Debug)]
pub struct Cropped {
    pub kept: Vec<usize>,
    pub graph: MeshGraph,
}

/// Cuts the mesh held in `v`; gradients reach only retained rows.
pub fn crop<T: Real>(tape: &mut Tape<T>, v: Var, graph: &MeshGraph, beta: f64) -> Result<(Var, Cropped)> {
    let value = tape.value(v);
    let n = value.rows();
    let points: Vec<Point> = (0..n)
        .map(|i| {
            let r = value.row(i);
            [r[0].f64(), r[1].f64(), r[2].f64()]
        })
        .collect();
    let kept = crop_selection(&points, beta)?;
    let faces = crop_faces(&graph.faces, &kept, n);
    let out = tape.gather_rows(v, kept.iter().copied().collect())?;
    let cropped_points: Vec<Point> = kept.iter().map(|&i| points[i]).collect();
    let mesh = Mesh::new(cropped_points, faces)?;
    Ok((
        out,
        Cropped {
            kept,
            graph: MeshGraph::new(&mesh),
        },
    ))
}

/// Dispatches an attack on tape rows `v` (one mesh). Returns the attacked
/// rows and, for cropping, the surviving subset.
pub fn apply_tape<T: Real>(
    tape: &mut Tape<T>,
    v: Var,
    graph: &MeshGraph,
    attack: &AttackInstance,
    rng: &mut impl Rng,
) -> Result<(Var, Option<Cropped>)> {
    attack.validate()?;
    let out = match *attack {
        AttackInstance::Identity => v,
        AttackInstance::Rotation { degrees } => rotate(tape, v, degrees)?,
        AttackInstance::Noise { sigma } => gaussian_noise(tape, v, sigma, rng)?,
        AttackInstance::Smoothing { alpha } => laplacian_smooth(tape, v, graph, alpha)?,
        AttackInstance::Cropping { beta } => {
            let (out, cropped) = crop(tape, v, graph, beta)?;
            return Ok((out, Some(cropped)));
        }
    };
    Ok((out, None))
}

/// An attacked mesh; `kept` maps new vertex positions to original indices under cropping.
#[derive(Clone, Debug)]
pub struct Attacked {
    pub mesh: Mesh,
    pub kept: Option<Vec<usize>>,
}

/// Applies an attack to a whole mesh. Identity returns the input unchanged.
pub fn apply(mesh: &Mesh, graph: &MeshGraph, attack: &AttackInstance, rng: &mut impl Rng) -> Result<Attacked> {
    if graph.len() != mesh.vertex_count() {
        return Err(Error::Dimension(format!(
            "graph has {} vertices, mesh {}",
            graph.len(),
            mesh.vertex_count()
        )));
    }
    if let AttackInstance::Identity = attack {
        return Ok(Attacked {
            mesh: mesh.clone(),
            kept: None,
        });
    }
    let mut tape = Tape::<f64>::new();
    let v = tape.constant(Tensor::matrix(mesh.vertex_count(), 3, mesh.flat_coords())?);
    let (out, cropped) = apply_tape(&mut tape, v, graph, attack, rng)?;
    let points: Vec<Point> = tape.value(out).data().chunks(3).map(|c| [c[0], c[1], c[2]]).collect();
    Ok(match cropped {
        Some(c) => Attacked {
            mesh: Mesh::new(points, c.graph.faces)?,
            kept: Some(c.kept),
        },
        None => Attacked {
            mesh: mesh.with_vertices(points)?,
            kept: None,
        },
    })
}
