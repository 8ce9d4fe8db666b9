use proptest::prelude::*;

use super::*;
use crate::diff::{Tape, Tensor};
use crate::synth::{generate_one, icosphere, SynthSpec};

fn triangle() -> Mesh {
    Mesh::new(vec![[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0]], vec![[0, 1, 2]]).unwrap()
}

/// `k x k` vertex grid on z = 0 with counter-clockwise triangles.
fn flat_grid(k: usize) -> Mesh {
    let mut vs = Vec::new();
    for y in 0..k {
        for x in 0..k {
            vs.push([x as f64, y as f64, 0.0]);
        }
    }
    let mut fs = Vec::new();
    for y in 0..k - 1 {
        for x in 0..k - 1 {
            let a = y * k + x;
            fs.push([a, a + 1, a + k + 1]);
            fs.push([a, a + k + 1, a + k]);
        }
    }
    Mesh::new(vs, fs).unwrap()
}

fn pyramid() -> Mesh {
    // apex 0 over a square base of half-width 1
    let vs = vec![
        [0.0, 0.0, 1.0],
        [1.0, 1.0, 0.0],
        [-1.0, 1.0, 0.0],
        [-1.0, -1.0, 0.0],
        [1.0, -1.0, 0.0],
    ];
    let fs = vec![[0, 1, 2], [0, 2, 3], [0, 3, 4], [0, 4, 1], [1, 3, 2], [1, 4, 3]];
    Mesh::new(vs, fs).unwrap()
}

fn rotation(ax: f64, ay: f64, az: f64) -> [[f64; 3]; 3] {
    let (sx, cx) = ax.sin_cos();
    let (sy, cy) = ay.sin_cos();
    let (sz, cz) = az.sin_cos();
    let rx = [[1.0, 0.0, 0.0], [0.0, cx, -sx], [0.0, sx, cx]];
    let ry = [[cy, 0.0, sy], [0.0, 1.0, 0.0], [-sy, 0.0, cy]];
    let rz = [[cz, -sz, 0.0], [sz, cz, 0.0], [0.0, 0.0, 1.0]];
    let mul = |a: [[f64; 3]; 3], b: [[f64; 3]; 3]| {
        let mut c = [[0.0; 3]; 3];
        for i in 0..3 {
            for j in 0..3 {
                c[i][j] = (0..3).map(|k| a[i][k] * b[k][j]).sum();
            }
        }
        c
    };
    mul(rz, mul(ry, rx))
}

fn apply(r: &[[f64; 3]; 3], p: Point) -> Point {
    [dot(r[0], p), dot(r[1], p), dot(r[2], p)]
}

#[test]
fn neighborhood_degrees() {
    assert_eq!(Neighborhood::build(&triangle()).degrees(), vec![2, 2, 2]);
    let two = Mesh::new(vec![[0.0; 3], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [1.0, 1.0, 0.0]], vec![[0, 1, 2], [1, 2, 3]]).unwrap();
    assert_eq!(Neighborhood::build(&two).degrees(), vec![2, 3, 3, 2]);
}

#[test]
fn icosphere_degree_census() {
    // closed triangulation: sum(6 - deg) = 6 * chi = 12, so exactly 12 valence-5 vertices
    let m = icosphere(3).unwrap();
    let nb = Neighborhood::build(&m);
    let d = nb.degrees();
    assert_eq!(d.iter().filter(|&&x| x == 5).count(), 12);
    assert_eq!(d.iter().filter(|&&x| x == 6).count(), 630);
    assert!(nb.is_symmetric());
}

#[test]
fn isolated_vertex_has_empty_list() {
    let m = Mesh::new(vec![[0.0; 3], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [5.0, 5.0, 5.0]], vec![[0, 1, 2]]).unwrap();
    let nb = Neighborhood::build(&m);
    assert!(nb.neighbors(3).is_empty());
    let lap = laplacian_matrix(&nb);
    assert_eq!(lap.get(3, 3), 1.0);
    assert_eq!(lap.matrix().row(3).count(), 1);
    assert_eq!(vertex_normals(&m)[3], FALLBACK_NORMAL);
    let cur = vertex_curvature(&m, &nb, &vertex_normals(&m)).unwrap();
    assert_eq!(cur[3], 0.0);
}

#[test]
fn laplacian_rows() {
    let lap = laplacian_matrix(&Neighborhood::build(&triangle()));
    for i in 0..3 {
        let mut row: Vec<f64> = (0..3).map(|j| lap.get(i, j)).collect();
        row.sort_by(|a, b| a.partial_cmp(b).unwrap());
        assert_eq!(row, vec![-0.5, -0.5, 1.0]);
    }
    let path = Neighborhood::from_lists(vec![vec![1], vec![2], vec![]]);
    let lap = laplacian_matrix(&path);
    assert_eq!([lap.get(1, 0), lap.get(1, 1), lap.get(1, 2)], [-0.5, 1.0, -0.5]);
    assert_eq!([lap.get(0, 0), lap.get(0, 1), lap.get(0, 2)], [1.0, -1.0, 0.0]);
    assert_eq!([lap.get(2, 0), lap.get(2, 1), lap.get(2, 2)], [0.0, -1.0, 1.0]);
}

#[test]
fn icosphere_laplacian_rows_sum_to_zero() {
    let nb = Neighborhood::build(&icosphere(3).unwrap());
    let lap = laplacian_matrix(&nb);
    for i in 0..nb.len() {
        assert!(lap.row_sum(i).abs() < 1e-12);
        for &j in nb.neighbors(i) {
            assert_eq!(lap.get(i, j), -1.0 / nb.degree(i) as f64);
        }
    }
}

#[test]
fn flat_grid_normals_point_up_and_interior_is_flat() {
    let g = flat_grid(5);
    let normals = vertex_normals(&g);
    for n in &normals {
        assert!((n[0]).abs() < 1e-15 && (n[1]).abs() < 1e-15 && (n[2] - 1.0).abs() < 1e-15);
    }
    let nb = Neighborhood::build(&g);
    let cur = vertex_curvature(&g, &nb, &normals).unwrap();
    for y in 1..4 {
        for x in 1..4 {
            assert!(cur[y * 5 + x].abs() < 1e-9);
        }
    }
}

#[test]
fn sphere_normals_match_radial_direction() {
    let m = icosphere(3).unwrap();
    for (n, v) in vertex_normals(&m).iter().zip(m.vertices()) {
        assert!((norm(*n) - 1.0).abs() < 1e-12);
        assert!(dot(*n, *v) / norm(*v) > 0.99);
    }
}

#[test]
fn tetrahedron_apex_is_convex() {
    let vs = vec![[0.0, 0.0, 1.0], [1.0, 0.0, 0.0], [-0.5, 0.8, 0.0], [-0.5, -0.8, 0.0]];
    let fs = vec![[0, 1, 2], [0, 2, 3], [0, 3, 1], [1, 3, 2]];
    let m = Mesh::new(vs, fs).unwrap();
    let nb = Neighborhood::build(&m);
    let cur = vertex_curvature(&m, &nb, &vertex_normals(&m)).unwrap();
    assert!(cur[0] < 0.0);
}

#[test]
fn square_pyramid_apex_by_hand() {
    let m = pyramid();
    let nb = Neighborhood::build(&m);
    let normals = vertex_normals(&m);
    assert!((normals[0][2] - 1.0).abs() < 1e-12);
    // each edge apex->corner is (+-1, +-1, -1): cos = -1/sqrt(3)
    let expected = 4.0 * (-1.0 / 3f64.sqrt());
    let cur = vertex_curvature(&m, &nb, &normals).unwrap();
    assert!((cur[0] - expected).abs() < 1e-12, "{} vs {}", cur[0], expected);
}

#[test]
fn coincident_neighbor_is_reported() {
    let m = Mesh::new(vec![[0.0; 3], [0.0; 3], [0.0, 1.0, 0.0]], vec![[0, 1, 2]]).unwrap();
    let nb = Neighborhood::build(&m);
    let err = vertex_curvature(&m, &nb, &vertex_normals(&m)).unwrap_err();
    assert_eq!(err, MeshError::CoincidentNeighbors(0, 1));
}

#[test]
fn normalize_segment() {
    let m = Mesh::new(vec![[0.0; 3], [2.0, 0.0, 0.0]], vec![]).unwrap();
    let (n, t) = normalize_unit_cube(&m).unwrap();
    assert_eq!(n.vertices(), &[[-0.5, 0.0, 0.0], [0.5, 0.0, 0.0]]);
    assert_eq!(t.center, [1.0, 0.0, 0.0]);
    assert_eq!(t.scale, 2.0);
    assert!(n.is_normalized());
}

#[test]
fn normalize_fixed_points_and_degenerate() {
    let corners: Vec<Point> = (0..8)
        .map(|k| [(k & 1) as f64 - 0.5, ((k >> 1) & 1) as f64 - 0.5, ((k >> 2) & 1) as f64 - 0.5])
        .collect();
    let m = Mesh::new(corners.clone(), vec![]).unwrap();
    let (n, _) = normalize_unit_cube(&m).unwrap();
    for (a, b) in n.vertices().iter().zip(&corners) {
        assert!(norm(sub(*a, *b)) < 1e-9);
    }
    let point = Mesh::new(vec![[1.0, 2.0, 3.0]; 3], vec![]).unwrap();
    assert_eq!(normalize_unit_cube(&point).unwrap_err(), MeshError::Degenerate);
    assert_eq!(normalize_unit_cube(&Mesh::empty()).unwrap_err(), MeshError::Empty);
}

#[test]
fn normalize_random_cloud_against_direct_bounding_box() {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
    let vs: Vec<Point> = (0..100)
        .map(|_| [rng.random_range(-3.0..7.0), rng.random_range(1.0..2.0), rng.random_range(-1.0..1.0)])
        .collect();
    let (n, _) = normalize_unit_cube(&Mesh::new(vs.clone(), vec![]).unwrap()).unwrap();
    let (lo, hi) = vs.iter().fold((f64::MAX, f64::MIN), |(l, h), v| (l.min(v[0]), h.max(v[0])));
    let longest = hi - lo;
    for (p, q) in n.vertices().iter().zip(&vs) {
        assert!(((q[0] - (lo + hi) / 2.0) / longest - p[0]).abs() < 1e-12);
    }
    let max_x = n.vertices().iter().map(|p| p[0].abs()).fold(0.0, f64::max);
    assert_eq!(max_x, 0.5);
    assert!(n.vertices().iter().flatten().all(|c| c.abs() <= 0.5));
}

#[test]
fn icosphere_obj_round_trip() {
    let m = icosphere(3).unwrap();
    let back = parse_obj(&write_obj(&m)).unwrap();
    assert_eq!(back.faces(), m.faces());
    let err = back
        .vertices()
        .iter()
        .zip(m.vertices())
        .map(|(a, b)| norm(sub(*a, *b)))
        .fold(0.0, f64::max);
    assert!(err < 1e-6, "{err}");
}

#[test]
fn tape_curvature_matches_exact_curvature() {
    let m = generate_one(&SynthSpec { level: 2, ..Default::default() }, 0).unwrap();
    let nb = Neighborhood::build(&m);
    let exact = vertex_curvature(&m, &nb, &vertex_normals(&m)).unwrap();
    let stencil = CurvatureStencil::new(&m, &nb);
    let mut tape = Tape::<f64>::new();
    let v = tape.constant(Tensor::matrix(m.vertex_count(), 3, m.flat_coords()).unwrap());
    let normals = stencil.normals(&mut tape, v).unwrap();
    for (i, n) in vertex_normals(&m).iter().enumerate() {
        for a in 0..3 {
            assert!((tape.value(normals).get(i, a) - n[a]).abs() < 1e-5);
        }
    }
    let cur = stencil.curvature(&mut tape, v).unwrap();
    for (i, c) in exact.iter().enumerate() {
        assert!((tape.value(cur).data()[i] - c).abs() < 1e-5);
    }
}

fn spec_strategy() -> impl Strategy<Value = Mesh> {
    (0u64..50, 1u32..3).prop_map(|(seed, level)| {
        generate_one(&SynthSpec { level, amplitude: 0.3, seed, ..Default::default() }, seed as usize).unwrap()
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn curvature_invariant_under_rotation(m in spec_strategy(), ax in -3.0f64..3.0, ay in -3.0f64..3.0, az in -3.0f64..3.0) {
        let nb = Neighborhood::build(&m);
        let base = vertex_curvature(&m, &nb, &vertex_normals(&m)).unwrap();
        let r = rotation(ax, ay, az);
        let rotated = m.with_vertices(m.vertices().iter().map(|p| apply(&r, *p)).collect()).unwrap();
        let normals: Vec<Point> = vertex_normals(&m).iter().map(|n| apply(&r, *n)).collect();
        let turned = vertex_curvature(&rotated, &nb, &normals).unwrap();
        for (a, b) in base.iter().zip(&turned) {
            prop_assert!((a - b).abs() < 1e-6);
        }
    }

    #[test]
    fn curvature_invariant_under_uniform_scaling(m in spec_strategy(), s in 0.01f64..100.0) {
        let nb = Neighborhood::build(&m);
        let base = vertex_curvature(&m, &nb, &vertex_normals(&m)).unwrap();
        let scaled = m.with_vertices(m.vertices().iter().map(|p| p.map(|c| c * s)).collect()).unwrap();
        let after = vertex_curvature(&scaled, &nb, &vertex_normals(&scaled)).unwrap();
        for (a, b) in base.iter().zip(&after) {
            prop_assert!((a - b).abs() < 1e-6);
        }
    }

    #[test]
    fn normalization_inverts(points in prop::collection::vec(prop::array::uniform3(-50.0f64..50.0), 2..40)) {
        let m = Mesh::new(points.clone(), vec![]).unwrap();
        if let Ok((n, t)) = normalize_unit_cube(&m) {
            for (p, q) in n.vertices().iter().zip(&points) {
                prop_assert!(p.iter().all(|c| c.abs() <= 0.5));
                prop_assert!(norm(sub(t.invert(*p), *q)) < 1e-9);
            }
        }
    }

    #[test]
    fn neighborhoods_are_symmetric(n in 3usize..20, faces in prop::collection::vec(prop::array::uniform3(0usize..20), 0..30)) {
        let faces: Vec<[usize; 3]> = faces.into_iter()
            .map(|f| f.map(|i| i % n))
            .filter(|f| f[0] != f[1] && f[1] != f[2] && f[0] != f[2])
            .collect();
        let m = Mesh::new(vec![[0.0; 3]; n], faces).unwrap();
        let nb = Neighborhood::build(&m);
        prop_assert!(nb.is_symmetric());
        for i in 0..n {
            prop_assert_eq!(nb.degree(i), nb.neighbors(i).len());
        }
    }
}
