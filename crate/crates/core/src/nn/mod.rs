//! Graph network layers recorded on a [`Tape`]: degree-normalized graph
//! convolution, batch normalization, graph residual blocks, pooling, a
//! two-layer MLP and the watermark encoder.
//!
//! Parameters live in a [`ParamStore`] and are addressed by [`ParamId`]. A
//! [`Session`] binds them to a fresh tape on first use, so one forward pass
//! may reuse a layer (weight tying) and still receive a single gradient.

use std::collections::BTreeMap;
use std::sync::Arc;

use rand::Rng;

use crate::diff::{Csr, Gradients, Real, Tape, Tensor, Var};
use crate::{Error, Result};

pub const BN_EPS: f64 = 1e-5;
pub const BN_MOMENTUM: f64 = 0.1;

#[cfg(test)]
mod tests;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ParamId(usize);

impl ParamId {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Debug)]
struct Entry<T> {
    name: String,
    value: Tensor<T>,
    trainable: bool,
}

/// Named parameter tensors plus non-trainable state (batch-norm running statistics).
#[derive(Clone, Debug, Default)]
pub struct ParamStore<T> {
    entries: Vec<Entry<T>>,
}

impl<T: Real> ParamStore<T> {
    pub fn new() -> Self {
        Self { entries: Vec::new() }
    }

    /// Registers a tensor. Names must be unique.
    pub fn insert(&mut self, name: impl Into<String>, value: Tensor<T>, trainable: bool) -> ParamId {
        let name = name.into();
        assert!(self.find(&name).is_none(), "duplicate parameter name {name}");
        self.entries.push(Entry { name, value, trainable });
        ParamId(self.entries.len() - 1)
    }

    /// Uniform in ±sqrt(6 / (fan_in + fan_out)).
    pub fn xavier(&mut self, name: impl Into<String>, fan_in: usize, fan_out: usize, rng: &mut impl Rng) -> ParamId {
        let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
        let data = (0..fan_in * fan_out).map(|_| T::of(rng.random_range(-bound..=bound))).collect();
        let value = Tensor::matrix(fan_in, fan_out, data).expect("length matches");
        self.insert(name, value, true)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.entries.len()).map(ParamId)
    }

    pub fn trainable_ids(&self) -> impl Iterator<Item = ParamId> + '_ {
        self.ids().filter(|id| self.entries[id.0].trainable)
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.entries[id.0].name
    }

    pub fn is_trainable(&self, id: ParamId) -> bool {
        self.entries[id.0].trainable
    }

    pub fn value(&self, id: ParamId) -> &Tensor<T> {
        &self.entries[id.0].value
    }

    pub fn value_mut(&mut self, id: ParamId) -> &mut Tensor<T> {
        &mut self.entries[id.0].value
    }

    /// Replaces a value, keeping its shape.
    pub fn set(&mut self, id: ParamId, value: Tensor<T>) -> Result<()> {
        let slot = &mut self.entries[id.0];
        if slot.value.shape() != value.shape() {
            return Err(Error::Dimension(format!(
                "{}: expected shape {:?}, got {:?}",
                slot.name,
                slot.value.shape(),
                value.shape()
            )));
        }
        slot.value = value;
        Ok(())
    }

    pub fn find(&self, name: &str) -> Option<ParamId> {
        self.entries.iter().position(|e| e.name == name).map(ParamId)
    }

    /// Number of trainable scalars.
    pub fn scalar_count(&self) -> usize {
        self.entries.iter().filter(|e| e.trainable).map(|e| e.value.len()).sum()
    }

    pub fn cast<U: Real>(&self) -> ParamStore<U> {
        ParamStore {
            entries: self
                .entries
                .iter()
                .map(|e| Entry {
                    name: e.name.clone(),
                    value: e.value.cast(),
                    trainable: e.trainable,
                })
                .collect(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    Train,
    Infer,
}

/// One forward pass: a tape, the parameters bound onto it, and pending
/// running-statistic updates.
pub struct Session<'a, T: Real> {
    pub tape: Tape<T>,
    params: &'a ParamStore<T>,
    bound: Vec<Option<Var>>,
    mode: Mode,
    running: BTreeMap<ParamId, Tensor<T>>,
}

impl<'a, T: Real> Session<'a, T> {
    pub fn new(params: &'a ParamStore<T>, mode: Mode) -> Self {
        Self {
            tape: Tape::new(),
            params,
            bound: vec![None; params.len()],
            mode,
            running: BTreeMap::new(),
        }
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    pub fn params(&self) -> &'a ParamStore<T> {
        self.params
    }

    /// The tape node for a parameter, created on first use.
    pub fn param(&mut self, id: ParamId) -> Var {
        if let Some(v) = self.bound[id.0] {
            return v;
        }
        let value = self.params.value(id).clone();
        let v = if self.params.is_trainable(id) {
            self.tape.variable(value)
        } else {
            self.tape.constant(value)
        };
        self.bound[id.0] = Some(v);
        v
    }

    pub fn bound(&self, id: ParamId) -> Option<Var> {
        self.bound[id.0]
    }

    /// Running statistic as updated so far in this session.
    pub fn running(&self, id: ParamId) -> &Tensor<T> {
        self.running.get(&id).unwrap_or_else(|| self.params.value(id))
    }

    fn set_running(&mut self, id: ParamId, value: Tensor<T>) {
        self.running.insert(id, value);
    }

    /// Gradients of all trainable parameters, zero for those unused.
    pub fn gradients(&self, grads: &Gradients<T>) -> Vec<(ParamId, Tensor<T>)> {
        self.params
            .trainable_ids()
            .map(|id| {
                let g = match self.bound[id.0] {
                    Some(v) => grads.wrt(&self.tape, v),
                    None => Tensor::zeros(self.params.value(id).shape()),
                };
                (id, g)
            })
            .collect()
    }

    /// Running-statistic values to write back after a training step.
    pub fn into_running_updates(self) -> Vec<(ParamId, Tensor<T>)> {
        self.running.into_iter().collect()
    }
}

fn expect_cols<T: Real>(tape: &Tape<T>, x: Var, cols: usize, what: &str) -> Result<()> {
    let shape = tape.shape(x);
    if shape.len() != 2 || shape[1] != cols {
        return Err(Error::Dimension(format!("{what} expects {cols} input features, got shape {shape:?}")));
    }
    Ok(())
}

fn add_bias<T: Real>(s: &mut Session<'_, T>, x: Var, bias: ParamId) -> Result<Var> {
    let n = s.tape.shape(x)[0];
    let b = s.param(bias);
    let b = s.tape.broadcast_rows(b, n)?;
    Ok(s.tape.add(x, b)?)
}

/// `out_i = W0ᵀ f_i + W1ᵀ (Σ_{j∈N(i)} f_j / |N(i)|) + b`.
#[derive(Clone, Debug)]
pub struct GraphConv {
    pub w0: ParamId,
    pub w1: ParamId,
    pub bias: ParamId,
    pub input: usize,
    pub output: usize,
}

impl GraphConv {
    pub fn new<T: Real>(store: &mut ParamStore<T>, prefix: &str, input: usize, output: usize, rng: &mut impl Rng) -> Self {
        Self {
            w0: store.xavier(format!("{prefix}.w0"), input, output, rng),
            w1: store.xavier(format!("{prefix}.w1"), input, output, rng),
            bias: store.insert(format!("{prefix}.bias"), Tensor::zeros(&[1, output]), true),
            input,
            output,
        }
    }

    /// `agg` is the neighbor-averaging matrix, see
    /// [`Neighborhood::aggregation_matrix`](crate::mesh::Neighborhood::aggregation_matrix).
    pub fn forward<T: Real>(&self, s: &mut Session<'_, T>, x: Var, agg: &Arc<Csr<T>>) -> Result<Var> {
        expect_cols(&s.tape, x, self.input, "graph convolution")?;
        let n = s.tape.shape(x)[0];
        if agg.rows() != n || agg.cols() != n {
            return Err(Error::Dimension(format!(
                "graph convolution over {n} rows with a {}x{} neighborhood",
                agg.rows(),
                agg.cols()
            )));
        }
        let (w0, w1) = (s.param(self.w0), s.param(self.w1));
        let own = s.tape.matmul(x, w0)?;
        let mixed = s.tape.sparse_matmul(agg.clone(), x)?;
        let mixed = s.tape.matmul(mixed, w1)?;
        let out = s.tape.add(own, mixed)?;
        add_bias(s, out, self.bias)
    }
}

/// Per-feature normalization over all rows of the batch.
#[derive(Clone, Debug)]
pub struct BatchNorm {
    pub gamma: ParamId,
    pub beta: ParamId,
    pub running_mean: ParamId,
    pub running_var: ParamId,
    pub width: usize,
}

impl BatchNorm {
    pub fn new<T: Real>(store: &mut ParamStore<T>, prefix: &str, width: usize) -> Self {
        Self {
            gamma: store.insert(format!("{prefix}.gamma"), Tensor::full(&[1, width], T::one()), true),
            beta: store.insert(format!("{prefix}.beta"), Tensor::zeros(&[1, width]), true),
            running_mean: store.insert(format!("{prefix}.running_mean"), Tensor::zeros(&[1, width]), false),
            running_var: store.insert(format!("{prefix}.running_var"), Tensor::full(&[1, width], T::one()), false),
            width,
        }
    }

    pub fn forward<T: Real>(&self, s: &mut Session<'_, T>, x: Var) -> Result<Var> {
        expect_cols(&s.tape, x, self.width, "batch normalization")?;
        let n = s.tape.shape(x)[0];
        let eps = T::of(BN_EPS);
        let (centered, denom) = match s.mode() {
            Mode::Train => {
                if n < 2 {
                    return Err(Error::BatchTooSmall(n));
                }
                let mu = s.tape.mean(x, 0)?;
                let mu_b = s.tape.broadcast_rows(mu, n)?;
                let xc = s.tape.sub(x, mu_b)?;
                let sq = s.tape.square(xc)?;
                let var = s.tape.mean(sq, 0)?;
                self.track(s, mu, var);
                let var = s.tape.add_scalar(var, eps)?;
                (xc, s.tape.sqrt(var)?)
            }
            Mode::Infer => {
                let mu = s.tape.constant(s.running(self.running_mean).clone());
                let sd = s.running(self.running_var).map(|v| (v + eps).sqrt());
                let sd = s.tape.constant(sd);
                let mu_b = s.tape.broadcast_rows(mu, n)?;
                (s.tape.sub(x, mu_b)?, sd)
            }
        };
        let denom = s.tape.broadcast_rows(denom, n)?;
        let xhat = s.tape.div(centered, denom)?;
        let gamma = s.param(self.gamma);
        let gamma = s.tape.broadcast_rows(gamma, n)?;
        let y = s.tape.mul(xhat, gamma)?;
        add_bias(s, y, self.beta)
    }

    fn track<T: Real>(&self, s: &mut Session<'_, T>, mu: Var, var: Var) {
        let m = T::of(BN_MOMENTUM);
        let keep = T::one() - m;
        for (id, batch) in [(self.running_mean, mu), (self.running_var, var)] {
            let old = s.running(id);
            let data = old
                .data()
                .iter()
                .zip(s.tape.value(batch).data())
                .map(|(&r, &b)| keep * r + m * b)
                .collect();
            let next = Tensor::matrix(1, self.width, data).expect("width matches");
            s.set_running(id, next);
        }
    }
}

/// `ReLU(BN(GC(ReLU(BN(GC(x)))))) + shortcut(x)`.
#[derive(Clone, Debug)]
pub struct ResidualBlock {
    pub conv1: GraphConv,
    pub bn1: Option<BatchNorm>,
    pub conv2: GraphConv,
    pub bn2: Option<BatchNorm>,
    /// Linear shortcut, present exactly when the width changes.
    pub projection: Option<ParamId>,
}

impl ResidualBlock {
    pub fn new<T: Real>(
        store: &mut ParamStore<T>,
        prefix: &str,
        input: usize,
        output: usize,
        batch_norm: bool,
        rng: &mut impl Rng,
    ) -> Self {
        let conv1 = GraphConv::new(store, &format!("{prefix}.conv1"), input, output, rng);
        let bn1 = batch_norm.then(|| BatchNorm::new(store, &format!("{prefix}.bn1"), output));
        let conv2 = GraphConv::new(store, &format!("{prefix}.conv2"), output, output, rng);
        let bn2 = batch_norm.then(|| BatchNorm::new(store, &format!("{prefix}.bn2"), output));
        let projection = (input != output).then(|| store.xavier(format!("{prefix}.proj"), input, output, rng));
        Self {
            conv1,
            bn1,
            conv2,
            bn2,
            projection,
        }
    }

    pub fn input(&self) -> usize {
        self.conv1.input
    }

    pub fn output(&self) -> usize {
        self.conv2.output
    }

    pub fn forward<T: Real>(&self, s: &mut Session<'_, T>, x: Var, agg: &Arc<Csr<T>>) -> Result<Var> {
        let mut h = x;
        for (conv, bn) in [(&self.conv1, &self.bn1), (&self.conv2, &self.bn2)] {
            h = conv.forward(s, h, agg)?;
            if let Some(bn) = bn {
                h = bn.forward(s, h)?;
            }
            h = s.tape.relu(h)?;
        }
        let shortcut = match self.projection {
            Some(p) => {
                let p = s.param(p);
                s.tape.matmul(x, p)?
            }
            None => x,
        };
        Ok(s.tape.add(h, shortcut)?)
    }
}

/// Applies blocks in sequence.
pub fn residual_stack<T: Real>(s: &mut Session<'_, T>, blocks: &[ResidualBlock], x: Var, agg: &Arc<Csr<T>>) -> Result<Var> {
    blocks.iter().try_fold(x, |h, b| b.forward(s, h, agg))
}

/// Mean over the vertex axis, `N×d -> 1×d`.
pub fn global_average_pool<T: Real>(tape: &mut Tape<T>, x: Var) -> Result<Var> {
    let shape = tape.shape(x);
    if shape.len() != 2 || shape[0] == 0 {
        return Err(Error::Dimension(format!("pooling needs at least one row, got shape {shape:?}")));
    }
    Ok(tape.mean(x, 0)?)
}

/// Per-mesh means of a stacked batch: row `b` of `pool` holds `1/N_b` on mesh `b`'s rows.
pub fn segment_mean_matrix<T: Real>(counts: &[usize]) -> Result<Csr<T>> {
    let total = counts.iter().sum();
    let mut start = 0;
    let mut rows = Vec::with_capacity(counts.len());
    for &n in counts {
        if n == 0 {
            return Err(Error::Dimension("pooling an empty mesh".into()));
        }
        let w = T::one() / T::of(n as f64);
        rows.push((start..start + n).map(|j| (j, w)).collect());
        start += n;
    }
    Ok(Csr::from_rows(total, &rows))
}

/// Two fully connected layers with a ReLU between and a linear output.
#[derive(Clone, Debug)]
pub struct Mlp2 {
    pub w1: ParamId,
    pub b1: ParamId,
    pub w2: ParamId,
    pub b2: ParamId,
    pub input: usize,
}

impl Mlp2 {
    pub fn new<T: Real>(store: &mut ParamStore<T>, prefix: &str, input: usize, hidden: usize, output: usize, rng: &mut impl Rng) -> Self {
        Self {
            w1: store.xavier(format!("{prefix}.w1"), input, hidden, rng),
            b1: store.insert(format!("{prefix}.b1"), Tensor::zeros(&[1, hidden]), true),
            w2: store.xavier(format!("{prefix}.w2"), hidden, output, rng),
            b2: store.insert(format!("{prefix}.b2"), Tensor::zeros(&[1, output]), true),
            input,
        }
    }

    /// Row-wise over a `B×d` input.
    pub fn forward<T: Real>(&self, s: &mut Session<'_, T>, x: Var) -> Result<Var> {
        expect_cols(&s.tape, x, self.input, "mlp")?;
        let w1 = s.param(self.w1);
        let h = s.tape.matmul(x, w1)?;
        let h = add_bias(s, h, self.b1)?;
        let h = s.tape.relu(h)?;
        let w2 = s.param(self.w2);
        let y = s.tape.matmul(h, w2)?;
        add_bias(s, y, self.b2)
    }
}

/// Single fully connected layer from watermark bits to the latent code.
#[derive(Clone, Debug)]
pub struct Encoder {
    pub weight: ParamId,
    pub bias: ParamId,
    pub bits: usize,
    pub width: usize,
}

impl Encoder {
    pub fn new<T: Real>(store: &mut ParamStore<T>, prefix: &str, bits: usize, width: usize, rng: &mut impl Rng) -> Self {
        Self {
            weight: store.xavier(format!("{prefix}.weight"), bits, width, rng),
            bias: store.insert(format!("{prefix}.bias"), Tensor::zeros(&[1, width]), true),
            bits,
            width,
        }
    }

    /// `B×L` watermarks to `B×d_z` codes.
    pub fn encode<T: Real>(&self, s: &mut Session<'_, T>, w: Var) -> Result<Var> {
        expect_cols(&s.tape, w, self.bits, "watermark encoder")?;
        let weight = s.param(self.weight);
        let z = s.tape.matmul(w, weight)?;
        add_bias(s, z, self.bias)
    }

    /// Encodes one `1×L` watermark and repeats the code on `n` rows.
    pub fn encode_and_expand<T: Real>(&self, s: &mut Session<'_, T>, w: Var, n: usize) -> Result<Var> {
        let z = self.encode(s, w)?;
        Ok(s.tape.broadcast_rows(z, n)?)
    }
}
