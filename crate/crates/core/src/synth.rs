//! Deterministic synthetic mesh families: radially deformed icospheres.

use std::collections::HashMap;
use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::mesh::{normalize_unit_cube, Mesh, Point};
use crate::{Error, Result};

pub const MAX_LEVEL: u32 = 5;

/// Recipe for a synthetic dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    /// Icosphere subdivision level.
    pub level: u32,
    pub count: usize,
    /// Bound on the relative radial offset; must stay below 0.5.
    pub amplitude: f64,
    /// Number of harmonic terms in the radial offset.
    pub frequency: u32,
    pub seed: u64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        Self {
            level: 3,
            count: 100,
            amplitude: 0.2,
            frequency: 3,
            seed: 0,
        }
    }
}

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        if !(1..=MAX_LEVEL).contains(&self.level) {
            return Err(Error::Config(format!(
                "subdivision level {} outside [1, {MAX_LEVEL}]",
                self.level
            )));
        }
        if !(0.0..0.5).contains(&self.amplitude) {
            return Err(Error::Config(format!("amplitude {} outside [0, 0.5)", self.amplitude)));
        }
        Ok(())
    }
}

/// Icosahedron subdivided `level` times, projected to the unit sphere, faces wound outward.
pub fn icosphere(level: u32) -> Result<Mesh> {
    if level > MAX_LEVEL {
        return Err(Error::Config(format!("icosphere level {level} outside [0, {MAX_LEVEL}]")));
    }
    let t = (1.0 + 5f64.sqrt()) / 2.0;
    let mut vertices: Vec<Point> = [
        [-1.0, t, 0.0],
        [1.0, t, 0.0],
        [-1.0, -t, 0.0],
        [1.0, -t, 0.0],
        [0.0, -1.0, t],
        [0.0, 1.0, t],
        [0.0, -1.0, -t],
        [0.0, 1.0, -t],
        [t, 0.0, -1.0],
        [t, 0.0, 1.0],
        [-t, 0.0, -1.0],
        [-t, 0.0, 1.0],
    ]
    .into_iter()
    .map(unit)
    .collect();
    let mut faces: Vec<[usize; 3]> = vec![
        [0, 11, 5],
        [0, 5, 1],
        [0, 1, 7],
        [0, 7, 10],
        [0, 10, 11],
        [1, 5, 9],
        [5, 11, 4],
        [11, 10, 2],
        [10, 7, 6],
        [7, 1, 8],
        [3, 9, 4],
        [3, 4, 2],
        [3, 2, 6],
        [3, 6, 8],
        [3, 8, 9],
        [4, 9, 5],
        [2, 4, 11],
        [6, 2, 10],
        [8, 6, 7],
        [9, 8, 1],
    ];
    for _ in 0..level {
        let mut cache: HashMap<(usize, usize), usize> = HashMap::new();
        let mut midpoint = |a: usize, b: usize, vs: &mut Vec<Point>| -> usize {
            let key = (a.min(b), a.max(b));
            *cache.entry(key).or_insert_with(|| {
                let (p, q) = (vs[a], vs[b]);
                vs.push(unit([p[0] + q[0], p[1] + q[1], p[2] + q[2]]));
                vs.len() - 1
            })
        };
        let mut next = Vec::with_capacity(faces.len() * 4);
        for [a, b, c] in faces {
            let ab = midpoint(a, b, &mut vertices);
            let bc = midpoint(b, c, &mut vertices);
            let ca = midpoint(c, a, &mut vertices);
            next.extend_from_slice(&[[a, ab, ca], [b, bc, ab], [c, ca, bc], [ab, bc, ca]]);
        }
        faces = next;
    }
    Ok(Mesh::new(vertices, faces)?)
}

fn unit(p: Point) -> Point {
    let l = (p[0] * p[0] + p[1] * p[1] + p[2] * p[2]).sqrt();
    [p[0] / l, p[1] / l, p[2] / l]
}

/// Mesh `index` of the family described by `spec` (normalized to the unit cube).
pub fn generate_one(spec: &SynthSpec, index: usize) -> Result<Mesh> {
    spec.validate()?;
    let base = icosphere(spec.level)?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    rng.set_stream(index as u64);
    let terms: Vec<(Point, f64, f64, f64)> = (0..spec.frequency)
        .map(|k| {
            let z: f64 = rng.random_range(-1.0..1.0);
            let phi: f64 = rng.random_range(0.0..2.0 * PI);
            let r = (1.0 - z * z).sqrt();
            let dir = [r * phi.cos(), r * phi.sin(), z];
            let omega = PI * (k + 1) as f64;
            let phase = rng.random_range(0.0..2.0 * PI);
            let weight = rng.random_range(0.5..1.0);
            (dir, omega, phase, weight)
        })
        .collect();
    let total: f64 = terms.iter().map(|t| t.3).sum();
    let deformed = base
        .vertices()
        .iter()
        .map(|&u| {
            let offset = if total > 0.0 {
                terms
                    .iter()
                    .map(|(d, w, ph, a)| a * (w * (u[0] * d[0] + u[1] * d[1] + u[2] * d[2]) + ph).sin())
                    .sum::<f64>()
                    / total
            } else {
                0.0
            };
            let r = 1.0 + spec.amplitude * offset;
            [u[0] * r, u[1] * r, u[2] * r]
        })
        .collect();
    let (mesh, _) = normalize_unit_cube(&base.with_vertices(deformed)?)?;
    Ok(mesh)
}

/// The whole dataset, in index order.
pub fn generate(spec: &SynthSpec) -> Result<Vec<Mesh>> {
    spec.validate()?;
    (0..spec.count).map(|i| generate_one(spec, i)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{cross, norm, sub, Neighborhood};

    fn edge_count(m: &Mesh) -> usize {
        Neighborhood::build(m).degrees().iter().sum::<usize>() / 2
    }

    #[test]
    fn icosahedron_counts() {
        let m = icosphere(0).unwrap();
        assert_eq!((m.vertex_count(), m.face_count()), (12, 20));
    }

    #[test]
    fn vertex_counts_follow_edge_recurrence() {
        // V_{k+1} = V_k + E_k, E_k = 3 F_k / 2, F_{k+1} = 4 F_k
        let (mut v, mut f) = (12usize, 20usize);
        for level in 0..=4 {
            let m = icosphere(level).unwrap();
            assert_eq!((m.vertex_count(), m.face_count()), (v, f), "level {level}");
            let e = edge_count(&m);
            assert_eq!(e, 3 * f / 2);
            assert_eq!(v as i64 - e as i64 + f as i64, 2, "Euler characteristic");
            v += e;
            f *= 4;
        }
        assert_eq!(icosphere(2).unwrap().vertex_count(), 162);
        assert_eq!(icosphere(3).unwrap().vertex_count(), 642);
        assert_eq!(icosphere(3).unwrap().face_count(), 1280);
    }

    #[test]
    fn faces_wind_outward() {
        let m = icosphere(2).unwrap();
        let vs = m.vertices();
        for f in m.faces() {
            let n = cross(sub(vs[f[1]], vs[f[0]]), sub(vs[f[2]], vs[f[0]]));
            let c = vs[f[0]];
            assert!(n[0] * c[0] + n[1] * c[1] + n[2] * c[2] > 0.0);
        }
    }

    #[test]
    fn level_out_of_range() {
        assert!(icosphere(6).is_err());
        assert!(SynthSpec { level: 0, ..Default::default() }.validate().is_err());
        assert!(SynthSpec { amplitude: 0.5, ..Default::default() }.validate().is_err());
    }

    #[test]
    fn zero_amplitude_gives_identical_spheres() {
        let spec = SynthSpec { level: 2, count: 3, amplitude: 0.0, ..Default::default() };
        let ms = generate(&spec).unwrap();
        assert_eq!(ms[0], ms[1]);
        assert_eq!(ms[1], ms[2]);
    }

    #[test]
    fn same_seed_same_dataset() {
        let spec = SynthSpec { level: 2, count: 4, seed: 9, ..Default::default() };
        assert_eq!(generate(&spec).unwrap(), generate(&spec).unwrap());
        let other = SynthSpec { seed: 10, ..spec.clone() };
        assert_ne!(generate(&spec).unwrap(), generate(&other).unwrap());
    }

    #[test]
    fn deformed_meshes_are_valid() {
        let spec = SynthSpec { level: 3, count: 5, amplitude: 0.2, seed: 1, ..Default::default() };
        for m in generate(&spec).unwrap() {
            assert!(m.is_normalized());
            assert_eq!(m.vertex_count(), 642);
            assert!(m.vertices().iter().flatten().all(|c| (-0.5..=0.5).contains(c)));
            let vs = m.vertices();
            for f in m.faces() {
                let n = cross(sub(vs[f[1]], vs[f[0]]), sub(vs[f[2]], vs[f[0]]));
                assert!(norm(n) > 0.0);
                // star-shaped about the center: outward winding survives the deformation
                let c = vs[f[0]];
                assert!(n[0] * c[0] + n[1] * c[1] + n[2] * c[2] > 0.0);
            }
            assert!(Neighborhood::build(&m).is_symmetric());
        }
    }
}
