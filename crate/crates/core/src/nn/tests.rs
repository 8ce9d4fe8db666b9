use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::diff::{finite_difference_gradient, gradient_gap, relative_error};
use crate::mesh::Neighborhood;

type Dense = Vec<Vec<f64>>;

fn triangle() -> Neighborhood {
    Neighborhood::from_lists(vec![vec![1, 2], vec![2], vec![]])
}

fn random_graph(rng: &mut ChaCha8Rng, n: usize) -> Neighborhood {
    let lists = (0..n)
        .map(|i| (i + 1..n).filter(|_| rng.random_bool(0.35)).collect())
        .collect();
    Neighborhood::from_lists(lists)
}

fn random_tensor(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Tensor<f64> {
    Tensor::matrix(rows, cols, (0..rows * cols).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
}

fn dense(t: &Tensor<f64>) -> Dense {
    (0..t.rows()).map(|i| t.row(i).to_vec()).collect()
}

fn mm(a: &Dense, b: &Dense) -> Dense {
    a.iter()
        .map(|row| (0..b[0].len()).map(|j| row.iter().zip(b).map(|(x, br)| x * br[j]).sum()).collect())
        .collect()
}

fn plus(a: &Dense, b: &Dense) -> Dense {
    a.iter().zip(b).map(|(x, y)| x.iter().zip(y).map(|(p, q)| p + q).collect()).collect()
}

fn plus_row(a: &Dense, b: &[f64]) -> Dense {
    a.iter().map(|x| x.iter().zip(b).map(|(p, q)| p + q).collect()).collect()
}

fn relu(a: &Dense) -> Dense {
    a.iter().map(|x| x.iter().map(|v| v.max(0.0)).collect()).collect()
}

fn neighbor_mean(nb: &Neighborhood, x: &Dense) -> Dense {
    (0..nb.len())
        .map(|i| {
            let mut acc = vec![0.0; x[0].len()];
            for &j in nb.neighbors(i) {
                for (a, v) in acc.iter_mut().zip(&x[j]) {
                    *a += v / nb.degree(i) as f64;
                }
            }
            acc
        })
        .collect()
}

fn oracle_conv(store: &ParamStore<f64>, c: &GraphConv, nb: &Neighborhood, x: &Dense) -> Dense {
    let own = mm(x, &dense(store.value(c.w0)));
    let nbr = mm(&neighbor_mean(nb, x), &dense(store.value(c.w1)));
    plus_row(&plus(&own, &nbr), store.value(c.bias).data())
}

fn oracle_bn(store: &ParamStore<f64>, bn: &BatchNorm, x: &Dense) -> Dense {
    let n = x.len() as f64;
    let d = x[0].len();
    let mut out = x.clone();
    for k in 0..d {
        let mu = x.iter().map(|r| r[k]).sum::<f64>() / n;
        let var = x.iter().map(|r| (r[k] - mu).powi(2)).sum::<f64>() / n;
        for (o, r) in out.iter_mut().zip(x) {
            o[k] = store.value(bn.gamma).data()[k] * (r[k] - mu) / (var + BN_EPS).sqrt() + store.value(bn.beta).data()[k];
        }
    }
    out
}

fn oracle_block(store: &ParamStore<f64>, b: &ResidualBlock, nb: &Neighborhood, x: &Dense) -> Dense {
    let h = relu(&oracle_bn(store, b.bn1.as_ref().unwrap(), &oracle_conv(store, &b.conv1, nb, x)));
    let h = relu(&oracle_bn(store, b.bn2.as_ref().unwrap(), &oracle_conv(store, &b.conv2, nb, &h)));
    let shortcut = match b.projection {
        Some(p) => mm(x, &dense(store.value(p))),
        None => x.clone(),
    };
    plus(&h, &shortcut)
}

fn max_diff(a: &Tensor<f64>, b: &Dense) -> f64 {
    dense(a)
        .iter()
        .flatten()
        .zip(b.iter().flatten())
        .map(|(p, q)| (p - q).abs())
        .fold(0.0, f64::max)
}

fn agg(nb: &Neighborhood, normalized: bool) -> Arc<Csr<f64>> {
    Arc::new(nb.aggregation_matrix(normalized))
}

fn scalar_conv(store: &mut ParamStore<f64>, w0: f64, w1: f64) -> GraphConv {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let c = GraphConv::new(store, "c", 1, 1, &mut rng);
    store.set(c.w0, Tensor::matrix(1, 1, vec![w0]).unwrap()).unwrap();
    store.set(c.w1, Tensor::matrix(1, 1, vec![w1]).unwrap()).unwrap();
    c
}

fn run(store: &ParamStore<f64>, mode: Mode, x: Tensor<f64>, f: impl Fn(&mut Session<'_, f64>, Var) -> Result<Var>) -> Result<Tensor<f64>> {
    let mut s = Session::new(store, mode);
    let xv = s.tape.constant(x);
    let y = f(&mut s, xv)?;
    Ok(s.tape.value(y).clone())
}

#[test]
fn graph_conv_identity_configuration() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut store = ParamStore::<f64>::new();
    let c = GraphConv::new(&mut store, "c", 4, 4, &mut rng);
    let eye = (0..16).map(|k| if k % 5 == 0 { 1.0 } else { 0.0 }).collect();
    store.set(c.w0, Tensor::matrix(4, 4, eye).unwrap()).unwrap();
    store.set(c.w1, Tensor::zeros(&[4, 4])).unwrap();
    let x = random_tensor(&mut rng, 3, 4);
    let a = agg(&triangle(), true);
    let y = run(&store, Mode::Train, x.clone(), |s, v| c.forward(s, v, &a)).unwrap();
    assert_eq!(y, x);
}

#[test]
fn graph_conv_triangle_of_ones() {
    let mut store = ParamStore::<f64>::new();
    let c = scalar_conv(&mut store, 1.0, 1.0);
    let a = agg(&triangle(), true);
    let y = run(&store, Mode::Train, Tensor::full(&[3, 1], 1.0), |s, v| c.forward(s, v, &a)).unwrap();
    assert_eq!(y.data(), &[2.0, 2.0, 2.0]);
}

#[test]
fn graph_conv_without_degree_normalization_sums() {
    // star: vertex 0 has degree 3
    let nb = Neighborhood::from_lists(vec![vec![1, 2, 3], vec![], vec![], vec![]]);
    let mut store = ParamStore::<f64>::new();
    let c = scalar_conv(&mut store, 0.0, 1.0);
    let ones = Tensor::full(&[4, 1], 1.0);
    let mean = run(&store, Mode::Train, ones.clone(), |s, v| c.forward(s, v, &agg(&nb, true))).unwrap();
    let sum = run(&store, Mode::Train, ones, |s, v| c.forward(s, v, &agg(&nb, false))).unwrap();
    assert_eq!(mean.data()[0], 1.0);
    assert_eq!(sum.data()[0], 3.0);
}

#[test]
fn degree_normalization_flag_swaps_mean_for_sum() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let nb = random_graph(&mut rng, 10);
    let mut store = ParamStore::<f64>::new();
    let c = GraphConv::new(&mut store, "c", 3, 5, &mut rng);
    let x = random_tensor(&mut rng, 10, 3);
    let mean = run(&store, Mode::Train, x.clone(), |s, v| c.forward(s, v, &agg(&nb, true))).unwrap();
    let sum = run(&store, Mode::Train, x.clone(), |s, v| c.forward(s, v, &agg(&nb, false))).unwrap();
    let xd = dense(&x);
    let w1 = dense(store.value(c.w1));
    for i in 0..10 {
        // sum - mean = (deg - 1) * mean-term; check against an explicit neighbor sum
        let total: Vec<f64> = (0..3).map(|k| nb.neighbors(i).iter().map(|&j| xd[j][k]).sum()).collect();
        let deg = nb.degree(i).max(1) as f64;
        for o in 0..5 {
            let term: f64 = (0..3).map(|k| total[k] * w1[k][o]).sum();
            let expected = term - term / deg;
            assert!((sum.get(i, o) - mean.get(i, o) - expected).abs() < 1e-12);
        }
    }
}

#[test]
fn graph_conv_rejects_mismatched_inputs() {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let mut store = ParamStore::<f64>::new();
    let c = GraphConv::new(&mut store, "c", 3, 2, &mut rng);
    let a = agg(&triangle(), true);
    assert!(matches!(run(&store, Mode::Train, Tensor::zeros(&[3, 4]), |s, v| c.forward(s, v, &a)), Err(Error::Dimension(_))));
    assert!(matches!(run(&store, Mode::Train, Tensor::zeros(&[4, 3]), |s, v| c.forward(s, v, &a)), Err(Error::Dimension(_))));
}

#[test]
fn batch_norm_two_points() {
    let mut store = ParamStore::<f64>::new();
    let bn = BatchNorm::new(&mut store, "bn", 1);
    let y = run(&store, Mode::Train, Tensor::matrix(2, 1, vec![0.0, 2.0]).unwrap(), |s, v| bn.forward(s, v)).unwrap();
    let scale = 1.0 / (1.0 + BN_EPS).sqrt();
    assert!((y.data()[0] + scale).abs() < 1e-15 && (y.data()[1] - scale).abs() < 1e-15);
    assert!((y.data()[1] - 1.0).abs() < 1e-5);
}

#[test]
fn batch_norm_infer_with_unit_stats_is_identity() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut store = ParamStore::<f64>::new();
    let bn = BatchNorm::new(&mut store, "bn", 4);
    let x = random_tensor(&mut rng, 5, 4);
    let y = run(&store, Mode::Infer, x.clone(), |s, v| bn.forward(s, v)).unwrap();
    assert!(relative_error(y.data(), x.data()) < 1e-5);
    // a single row is fine at inference
    assert!(run(&store, Mode::Infer, Tensor::zeros(&[1, 4]), |s, v| bn.forward(s, v)).is_ok());
}

#[test]
fn batch_norm_train_statistics() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut store = ParamStore::<f64>::new();
    let bn = BatchNorm::new(&mut store, "bn", 6);
    let x = random_tensor(&mut rng, 50, 6).map(|v| 3.0 * v + 7.0);
    let y = run(&store, Mode::Train, x, |s, v| bn.forward(s, v)).unwrap();
    for k in 0..6 {
        let col: Vec<f64> = (0..50).map(|i| y.get(i, k)).collect();
        let mu = col.iter().sum::<f64>() / 50.0;
        let var = col.iter().map(|c| (c - mu).powi(2)).sum::<f64>() / 50.0;
        assert!(mu.abs() < 1e-5);
        assert!((var - 1.0).abs() < 1e-3);
    }
}

#[test]
fn batch_norm_single_row_training_fails() {
    let mut store = ParamStore::<f64>::new();
    let bn = BatchNorm::new(&mut store, "bn", 2);
    let err = run(&store, Mode::Train, Tensor::zeros(&[1, 2]), |s, v| bn.forward(s, v)).unwrap_err();
    assert!(matches!(err, Error::BatchTooSmall(1)));
}

#[test]
fn batch_norm_running_statistics_follow_momentum() {
    let mut store = ParamStore::<f64>::new();
    let bn = BatchNorm::new(&mut store, "bn", 1);
    let mut s = Session::new(&store, Mode::Train);
    let x = s.tape.constant(Tensor::matrix(2, 1, vec![1.0, 3.0]).unwrap());
    bn.forward(&mut s, x).unwrap();
    // batch mean 2, population variance 1
    assert!((s.running(bn.running_mean).item() - 0.2).abs() < 1e-15);
    assert!((s.running(bn.running_var).item() - 1.0).abs() < 1e-15);
    bn.forward(&mut s, x).unwrap();
    assert!((s.running(bn.running_mean).item() - (0.9 * 0.2 + 0.2)).abs() < 1e-15);
    let updates = s.into_running_updates();
    assert_eq!(updates.len(), 2);
    // the store itself is untouched until the caller writes updates back
    assert_eq!(store.value(bn.running_mean).item(), 0.0);
}

#[test]
fn residual_block_with_zero_convolutions_is_identity() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut store = ParamStore::<f64>::new();
    let b = ResidualBlock::new(&mut store, "b", 4, 4, true, &mut rng);
    for c in [&b.conv1, &b.conv2] {
        store.set(c.w0, Tensor::zeros(&[4, 4])).unwrap();
        store.set(c.w1, Tensor::zeros(&[4, 4])).unwrap();
    }
    assert!(b.projection.is_none());
    let x = random_tensor(&mut rng, 3, 4);
    let a = agg(&triangle(), true);
    let y = run(&store, Mode::Train, x.clone(), |s, v| b.forward(s, v, &a)).unwrap();
    assert_eq!(y, x);
}

#[test]
fn widening_block_projects_shortcut() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut store = ParamStore::<f64>::new();
    let b = ResidualBlock::new(&mut store, "b", 3, 64, true, &mut rng);
    assert_eq!(store.value(b.projection.unwrap()).shape(), &[3, 64]);
    let a = agg(&triangle(), true);
    let y = run(&store, Mode::Train, random_tensor(&mut rng, 3, 3), |s, v| b.forward(s, v, &a)).unwrap();
    assert_eq!(y.shape(), &[3, 64]);
}

#[test]
fn residual_block_matches_straight_line_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut store = ParamStore::<f64>::new();
    let b = ResidualBlock::new(&mut store, "b", 3, 8, true, &mut rng);
    for bn in [b.bn1.as_ref().unwrap(), b.bn2.as_ref().unwrap()] {
        store.set(bn.gamma, random_tensor(&mut rng, 1, 8)).unwrap();
        store.set(bn.beta, random_tensor(&mut rng, 1, 8)).unwrap();
    }
    let nb = triangle();
    let x = random_tensor(&mut rng, 3, 3);
    let y = run(&store, Mode::Train, x.clone(), |s, v| b.forward(s, v, &agg(&nb, true))).unwrap();
    assert!(max_diff(&y, &oracle_block(&store, &b, &nb, &dense(&x))) < 1e-6);
}

#[test]
fn pooling_examples() {
    let mut tape = Tape::<f64>::new();
    let x = tape.constant(Tensor::matrix(2, 2, vec![1.0, 3.0, 3.0, 1.0]).unwrap());
    let p = global_average_pool(&mut tape, x).unwrap();
    assert_eq!(tape.value(p).data(), &[2.0, 2.0]);
    let one = tape.constant(Tensor::matrix(1, 3, vec![4.0, 5.0, 6.0]).unwrap());
    let p = global_average_pool(&mut tape, one).unwrap();
    assert_eq!(tape.value(p).data(), &[4.0, 5.0, 6.0]);
    let empty = tape.constant(Tensor::zeros(&[0, 3]));
    assert!(global_average_pool(&mut tape, empty).is_err());
}

#[test]
fn segment_means_match_per_mesh_pooling() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let x = random_tensor(&mut rng, 7, 2);
    let p = segment_mean_matrix::<f64>(&[3, 4]).unwrap();
    let mut out = vec![0.0; 4];
    p.matmul_acc(x.data(), 2, &mut out);
    for k in 0..2 {
        let first: f64 = (0..3).map(|i| x.get(i, k)).sum::<f64>() / 3.0;
        let second: f64 = (3..7).map(|i| x.get(i, k)).sum::<f64>() / 4.0;
        assert!((out[k] - first).abs() < 1e-15 && (out[2 + k] - second).abs() < 1e-15);
    }
    assert!(segment_mean_matrix::<f64>(&[2, 0]).is_err());
}

#[test]
fn mlp_examples() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut store = ParamStore::<f64>::new();
    let m = Mlp2::new(&mut store, "m", 4, 6, 3, &mut rng);
    store.set(m.w1, Tensor::zeros(&[4, 6])).unwrap();
    store.set(m.w2, Tensor::zeros(&[6, 3])).unwrap();
    store.set(m.b2, Tensor::matrix(1, 3, vec![0.5, -1.0, 2.0]).unwrap()).unwrap();
    let y = run(&store, Mode::Infer, random_tensor(&mut rng, 1, 4), |s, v| m.forward(s, v)).unwrap();
    assert_eq!(y.data(), &[0.5, -1.0, 2.0]);

    let mut store = ParamStore::<f64>::new();
    let m = Mlp2::new(&mut store, "m", 1, 1, 1, &mut rng);
    store.set(m.w1, Tensor::matrix(1, 1, vec![1.0]).unwrap()).unwrap();
    store.set(m.w2, Tensor::matrix(1, 1, vec![1.0]).unwrap()).unwrap();
    let y = run(&store, Mode::Infer, Tensor::matrix(1, 1, vec![2.0]).unwrap(), |s, v| m.forward(s, v)).unwrap();
    assert_eq!(y.item(), 2.0);
}

#[test]
fn mlp_matches_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let mut store = ParamStore::<f64>::new();
    let m = Mlp2::new(&mut store, "m", 5, 7, 4, &mut rng);
    store.set(m.b1, random_tensor(&mut rng, 1, 7)).unwrap();
    store.set(m.b2, random_tensor(&mut rng, 1, 4)).unwrap();
    let x = random_tensor(&mut rng, 2, 5);
    let y = run(&store, Mode::Infer, x.clone(), |s, v| m.forward(s, v)).unwrap();
    let h = relu(&plus_row(&mm(&dense(&x), &dense(store.value(m.w1))), store.value(m.b1).data()));
    let expected = plus_row(&mm(&h, &dense(store.value(m.w2))), store.value(m.b2).data());
    assert!(max_diff(&y, &expected) < 1e-6);
}

#[test]
fn encoder_expands_identical_rows() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut store = ParamStore::<f64>::new();
    let e = Encoder::new(&mut store, "e", 64, 64, &mut rng);
    let w = Tensor::matrix(1, 64, (0..64).map(|k| (k % 2) as f64).collect()).unwrap();
    let y = run(&store, Mode::Infer, w.clone(), |s, v| e.encode_and_expand(s, v, 3)).unwrap();
    assert_eq!(y.shape(), &[3, 64]);
    assert!(y.row(0) == y.row(1) && y.row(1) == y.row(2));

    // d(sum of expansion)/dz = N per entry: check through the bias
    let mut s = Session::new(&store, Mode::Infer);
    let wv = s.tape.constant(w);
    let y = e.encode_and_expand(&mut s, wv, 3).unwrap();
    let total = s.tape.sum_all(y).unwrap();
    let grads = s.tape.backward(total).unwrap();
    let g = grads.wrt(&s.tape, s.bound(e.bias).unwrap());
    assert!(g.data().iter().all(|&v| v == 3.0));
}

/// Relative error, except for gradients that vanish analytically (a bias
/// feeding batch normalization), where it is the absolute difference.
/// Relative error of tape gradients (input and every parameter) against central differences.
fn gradient_error(
    store: &ParamStore<f64>,
    x: &Tensor<f64>,
    rng: &mut ChaCha8Rng,
    f: impl Fn(&mut Session<'_, f64>, Var) -> Result<Var>,
) -> f64 {
    let probe = run(store, Mode::Train, x.clone(), &f).unwrap();
    let w = random_tensor(rng, probe.rows(), probe.cols());
    let loss = |st: &ParamStore<f64>, xin: &Tensor<f64>| -> f64 {
        let y = run(st, Mode::Train, xin.clone(), &f).unwrap();
        y.data().iter().zip(w.data()).map(|(a, b)| a * b).sum()
    };
    let mut s = Session::new(store, Mode::Train);
    let xv = s.tape.variable(x.clone());
    let y = f(&mut s, xv).unwrap();
    let wv = s.tape.constant(w.clone());
    let prod = s.tape.mul(y, wv).unwrap();
    let total = s.tape.sum_all(prod).unwrap();
    let grads = s.tape.backward(total).unwrap();

    let mut worst = relative_error(
        grads.wrt(&s.tape, xv).data(),
        finite_difference_gradient(|t| loss(store, t), x, 1e-6).unwrap().data(),
    );
    for (id, g) in s.gradients(&grads) {
        let fd = finite_difference_gradient(
            |t| {
                let mut st = store.clone();
                st.set(id, t.clone()).unwrap();
                loss(&st, x)
            },
            store.value(id),
            1e-6,
        )
        .unwrap();
        worst = worst.max(gradient_gap(g.data(), fd.data()));
    }
    worst
}

#[test]
fn layer_gradients_match_finite_differences() {
    for seed in 0..20 {
        let mut rng = ChaCha8Rng::seed_from_u64(100 + seed);
        let n = rng.random_range(3..=12);
        let nb = random_graph(&mut rng, n);
        let a = agg(&nb, seed % 2 == 0);
        let x = random_tensor(&mut rng, n, 3);

        let mut store = ParamStore::<f64>::new();
        let c = GraphConv::new(&mut store, "c", 3, 4, &mut rng);
        store.set(c.bias, random_tensor(&mut rng, 1, 4)).unwrap();
        let e = gradient_error(&store, &x, &mut rng, |s, v| c.forward(s, v, &a));
        assert!(e < 1e-5, "graph conv seed {seed}: {e}");

        let mut store = ParamStore::<f64>::new();
        let bn = BatchNorm::new(&mut store, "bn", 3);
        store.set(bn.gamma, random_tensor(&mut rng, 1, 3)).unwrap();
        let e = gradient_error(&store, &x, &mut rng, |s, v| bn.forward(s, v));
        assert!(e < 1e-5, "batch norm seed {seed}: {e}");

        let mut store = ParamStore::<f64>::new();
        let b = ResidualBlock::new(&mut store, "b", 3, 4, true, &mut rng);
        let e = gradient_error(&store, &x, &mut rng, |s, v| b.forward(s, v, &a));
        assert!(e < 1e-5, "residual block seed {seed}: {e}");
    }
}

fn permute_rows(t: &Tensor<f64>, perm: &[usize]) -> Tensor<f64> {
    // row i moves to perm[i]
    let mut out = Tensor::zeros(t.shape());
    let c = t.cols();
    for (i, &p) in perm.iter().enumerate() {
        out.data_mut()[p * c..(p + 1) * c].copy_from_slice(t.row(i));
    }
    out
}

fn permute_graph(nb: &Neighborhood, perm: &[usize]) -> Neighborhood {
    let mut lists = vec![Vec::new(); nb.len()];
    for i in 0..nb.len() {
        lists[perm[i]] = nb.neighbors(i).iter().map(|&j| perm[j]).collect();
    }
    Neighborhood::from_lists(lists)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn graph_conv_is_permutation_equivariant(seed in 0u64..1000, n in 2usize..12) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let nb = random_graph(&mut rng, n);
        let mut perm: Vec<usize> = (0..n).collect();
        rand::seq::SliceRandom::shuffle(perm.as_mut_slice(), &mut rng);
        let mut store = ParamStore::<f64>::new();
        let c = GraphConv::new(&mut store, "c", 3, 5, &mut rng);
        let x = random_tensor(&mut rng, n, 3);
        let y = run(&store, Mode::Train, x.clone(), |s, v| c.forward(s, v, &agg(&nb, true))).unwrap();
        let pnb = permute_graph(&nb, &perm);
        let py = run(&store, Mode::Train, permute_rows(&x, &perm), |s, v| c.forward(s, v, &agg(&pnb, true))).unwrap();
        prop_assert!(relative_error(permute_rows(&y, &perm).data(), py.data()) < 1e-6);
    }

    #[test]
    fn pooling_is_permutation_invariant(seed in 0u64..1000, n in 1usize..30) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = random_tensor(&mut rng, n, 4).map(|v| (v * 8.0).round() / 8.0);
        let mut perm: Vec<usize> = (0..n).collect();
        rand::seq::SliceRandom::shuffle(perm.as_mut_slice(), &mut rng);
        let mut tape = Tape::new();
        let a = tape.constant(x.clone());
        let b = tape.constant(permute_rows(&x, &perm));
        let pa = global_average_pool(&mut tape, a).unwrap();
        let pb = global_average_pool(&mut tape, b).unwrap();
        // dyadic inputs make every partial sum exact, so the order cannot matter
        prop_assert_eq!(tape.value(pa), tape.value(pb));
    }
}
