use std::sync::atomic::{AtomicU32, Ordering};
use std::sync::Arc;

use super::{Csr, DiffError, Real, Tensor};

/// Epsilon inside `sqrt(sum x^2 + eps)` used by `l2_norm_rows` callers across the crate.
pub const NORM_EPS: f64 = 1e-8;

static NEXT_TAPE_ID: AtomicU32 = AtomicU32::new(1);

/// Handle to a value recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var {
    tape: u32,
    index: u32,
}

impl Var {
    pub fn index(&self) -> usize {
        self.index as usize
    }
}

/// The primitive catalogue, with static attributes.
#[derive(Debug, Clone)]
pub enum Primitive<T> {
    Add,
    Sub,
    /// Elementwise product.
    Mul,
    ScalarMul(T),
    AddScalar(T),
    MatMul,
    Relu,
    /// Sum over an axis of a matrix (keeps the reduced axis with size 1), or over everything.
    Sum(Option<usize>),
    Mean(Option<usize>),
    Concat(usize),
    GatherRows(Arc<[usize]>),
    ScatterAddRows { index: Arc<[usize]>, rows: usize },
    SparseMatVec(Arc<Csr<T>>),
    /// Row norms `sqrt(sum_j x_ij^2 + eps)` as a column.
    L2NormRows(T),
    Div,
    Square,
    Sqrt,
    BroadcastRows(usize),
    BroadcastCols(usize),
    Transpose,
    /// Row-wise 3D cross product.
    CrossRows,
}

/// Loose attribute bag for [`Tape::apply_named`].
#[derive(Debug, Clone, Default)]
pub struct Attrs<T> {
    pub axis: Option<usize>,
    pub scalar: Option<T>,
    pub index: Option<Arc<[usize]>>,
    pub count: Option<usize>,
    pub sparse: Option<Arc<Csr<T>>>,
}

impl<T: Real> Primitive<T> {
    pub fn name(&self) -> &'static str {
        match self {
            Primitive::Add => "add",
            Primitive::Sub => "sub",
            Primitive::Mul => "mul",
            Primitive::ScalarMul(_) => "scalar-mul",
            Primitive::AddScalar(_) => "add-scalar",
            Primitive::MatMul => "matmul",
            Primitive::Relu => "relu",
            Primitive::Sum(_) => "sum",
            Primitive::Mean(_) => "mean",
            Primitive::Concat(_) => "concat",
            Primitive::GatherRows(_) => "gather-rows",
            Primitive::ScatterAddRows { .. } => "scatter-add-rows",
            Primitive::SparseMatVec(_) => "sparse-matvec",
            Primitive::L2NormRows(_) => "l2-norm-rows",
            Primitive::Div => "divide",
            Primitive::Square => "square",
            Primitive::Sqrt => "sqrt",
            Primitive::BroadcastRows(_) => "broadcast-rows",
            Primitive::BroadcastCols(_) => "broadcast-cols",
            Primitive::Transpose => "transpose",
            Primitive::CrossRows => "cross-rows",
        }
    }

    /// Looks a primitive up by its catalogue name.
    pub fn from_name(name: &str, attrs: Attrs<T>) -> Result<Self, DiffError> {
        fn need<A>(v: Option<A>, primitive: &'static str, attr: &'static str) -> Result<A, DiffError> {
            v.ok_or(DiffError::MissingAttribute { primitive, attr })
        }
        Ok(match name {
            "add" => Primitive::Add,
            "sub" => Primitive::Sub,
            "mul" => Primitive::Mul,
            "scalar-mul" => Primitive::ScalarMul(need(attrs.scalar, "scalar-mul", "scalar")?),
            "add-scalar" => Primitive::AddScalar(need(attrs.scalar, "add-scalar", "scalar")?),
            "matmul" => Primitive::MatMul,
            "relu" => Primitive::Relu,
            "sum" => Primitive::Sum(attrs.axis),
            "mean" => Primitive::Mean(attrs.axis),
            "concat" => Primitive::Concat(need(attrs.axis, "concat", "axis")?),
            "gather-rows" => Primitive::GatherRows(need(attrs.index, "gather-rows", "index")?),
            "scatter-add-rows" => Primitive::ScatterAddRows {
                index: need(attrs.index, "scatter-add-rows", "index")?,
                rows: need(attrs.count, "scatter-add-rows", "count")?,
            },
            "sparse-matvec" => Primitive::SparseMatVec(need(attrs.sparse, "sparse-matvec", "sparse")?),
            "l2-norm-rows" => Primitive::L2NormRows(attrs.scalar.unwrap_or_else(|| T::of(NORM_EPS))),
            "divide" => Primitive::Div,
            "square" => Primitive::Square,
            "sqrt" => Primitive::Sqrt,
            "broadcast-rows" => Primitive::BroadcastRows(need(attrs.count, "broadcast-rows", "count")?),
            "broadcast-cols" => Primitive::BroadcastCols(need(attrs.count, "broadcast-cols", "count")?),
            "transpose" => Primitive::Transpose,
            "cross-rows" => Primitive::CrossRows,
            other => return Err(DiffError::UnknownPrimitive(other.to_string())),
        })
    }

    fn arity(&self) -> Option<usize> {
        match self {
            Primitive::Add
            | Primitive::Sub
            | Primitive::Mul
            | Primitive::MatMul
            | Primitive::Div
            | Primitive::CrossRows => Some(2),
            Primitive::Concat(_) => None,
            _ => Some(1),
        }
    }
}

struct Node<T> {
    value: Tensor<T>,
    prim: Option<Primitive<T>>,
    inputs: Vec<u32>,
    requires_grad: bool,
}

/// Record of primitive applications in topological order.
pub struct Tape<T> {
    id: u32,
    nodes: Vec<Node<T>>,
}

impl<T: Real> Default for Tape<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Real> Tape<T> {
    pub fn new() -> Self {
        Self {
            id: NEXT_TAPE_ID.fetch_add(1, Ordering::Relaxed),
            nodes: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// A differentiable leaf.
    pub fn variable(&mut self, value: Tensor<T>) -> Var {
        self.push(value, None, Vec::new(), true)
    }

    /// A leaf that never receives a gradient.
    pub fn constant(&mut self, value: Tensor<T>) -> Var {
        self.push(value, None, Vec::new(), false)
    }

    pub fn owns(&self, v: Var) -> bool {
        v.tape == self.id && (v.index as usize) < self.nodes.len()
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        assert!(self.owns(v), "variable from another tape");
        &self.nodes[v.index as usize].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.value(v).shape()
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.owns(v) && self.nodes[v.index as usize].requires_grad
    }

    fn push(&mut self, value: Tensor<T>, prim: Option<Primitive<T>>, inputs: Vec<u32>, requires_grad: bool) -> Var {
        let index = self.nodes.len() as u32;
        self.nodes.push(Node {
            value,
            prim,
            inputs,
            requires_grad,
        });
        Var { tape: self.id, index }
    }

    /// Applies a primitive to recorded inputs.
    pub fn apply(&mut self, prim: Primitive<T>, inputs: &[Var]) -> Result<Var, DiffError> {
        if let Some(n) = prim.arity() {
            if n != inputs.len() {
                return Err(DiffError::Arity {
                    primitive: prim.name(),
                    expected: n,
                    got: inputs.len(),
                });
            }
        }
        if inputs.iter().any(|v| !self.owns(*v)) {
            return Err(DiffError::ForeignVar);
        }
        let values: Vec<&Tensor<T>> = inputs.iter().map(|v| &self.nodes[v.index as usize].value).collect();
        let out = eval(&prim, &values)?;
        let requires_grad = inputs.iter().any(|v| self.nodes[v.index as usize].requires_grad);
        let ids = inputs.iter().map(|v| v.index).collect();
        Ok(self.push(out, Some(prim), ids, requires_grad))
    }

    /// Applies a primitive addressed by catalogue name.
    pub fn apply_named(&mut self, name: &str, inputs: &[Var], attrs: Attrs<T>) -> Result<Var, DiffError> {
        let prim = Primitive::from_name(name, attrs)?;
        self.apply(prim, inputs)
    }

    /// Recomputes every non-leaf value from the leaves.
    pub fn replay(&self) -> Result<Vec<Tensor<T>>, DiffError> {
        let mut values: Vec<Tensor<T>> = Vec::with_capacity(self.nodes.len());
        for node in &self.nodes {
            let v = match &node.prim {
                None => node.value.clone(),
                Some(p) => {
                    let ins: Vec<&Tensor<T>> = node.inputs.iter().map(|&i| &values[i as usize]).collect();
                    eval(p, &ins)?
                }
            };
            values.push(v);
        }
        Ok(values)
    }

    pub fn backward(&self, output: Var) -> Result<Gradients<T>, DiffError> {
        self.backward_retaining(output, &[])
    }

    /// Backward pass keeping gradients of leaves plus the listed intermediates.
    pub fn backward_retaining(&self, output: Var, keep: &[Var]) -> Result<Gradients<T>, DiffError> {
        if !self.owns(output) {
            return Err(DiffError::ForeignVar);
        }
        let out_node = &self.nodes[output.index as usize];
        if out_node.value.len() != 1 {
            return Err(DiffError::NotScalar(out_node.value.shape().to_vec()));
        }
        let mut retain = vec![false; self.nodes.len()];
        for (i, n) in self.nodes.iter().enumerate() {
            retain[i] = n.prim.is_none() && n.requires_grad;
        }
        for k in keep {
            if !self.owns(*k) {
                return Err(DiffError::ForeignVar);
            }
            retain[k.index as usize] = true;
        }
        let mut grads: Vec<Option<Tensor<T>>> = (0..self.nodes.len()).map(|_| None).collect();
        let end = output.index as usize;
        if out_node.requires_grad || retain[end] {
            grads[end] = Some(Tensor::full(out_node.value.shape(), T::one()));
        }
        for i in (0..=end).rev() {
            let node = &self.nodes[i];
            let Some(prim) = &node.prim else { continue };
            if !node.requires_grad {
                continue;
            }
            let Some(g) = grads[i].take() else { continue };
            let inputs: Vec<&Tensor<T>> = node.inputs.iter().map(|&j| &self.nodes[j as usize].value).collect();
            for (k, &j) in node.inputs.iter().enumerate() {
                let j = j as usize;
                if !self.nodes[j].requires_grad {
                    continue;
                }
                let dst = grads[j].get_or_insert_with(|| Tensor::zeros(self.nodes[j].value.shape()));
                accumulate(prim, k, &inputs, &node.value, &g, dst);
            }
            if retain[i] {
                grads[i] = Some(g);
            }
        }
        Ok(Gradients { tape: self.id, grads })
    }
}

/// Adjoints produced by [`Tape::backward`].
#[derive(Debug)]
pub struct Gradients<T> {
    tape: u32,
    grads: Vec<Option<Tensor<T>>>,
}

impl<T: Real> Gradients<T> {
    /// Gradient of a retained node; `None` when the node was unreachable.
    pub fn get(&self, v: Var) -> Option<&Tensor<T>> {
        if v.tape != self.tape {
            return None;
        }
        self.grads.get(v.index as usize).and_then(|g| g.as_ref())
    }

    /// Gradient with respect to `v`, zero-filled when unreachable.
    pub fn wrt(&self, tape: &Tape<T>, v: Var) -> Tensor<T> {
        self.get(v)
            .cloned()
            .unwrap_or_else(|| Tensor::zeros(tape.shape(v)))
    }

    pub fn take(&mut self, v: Var) -> Option<Tensor<T>> {
        if v.tape != self.tape {
            return None;
        }
        self.grads.get_mut(v.index as usize).and_then(|g| g.take())
    }
}

fn shape_err<T: Real>(p: &Primitive<T>, ins: &[&Tensor<T>], detail: impl Into<String>) -> DiffError {
    DiffError::Shape {
        primitive: p.name(),
        shapes: ins.iter().map(|t| t.shape().to_vec()).collect(),
        detail: detail.into(),
    }
}

fn require_matrix<T: Real>(p: &Primitive<T>, ins: &[&Tensor<T>]) -> Result<(), DiffError> {
    if ins.iter().all(|t| t.is_matrix()) {
        Ok(())
    } else {
        Err(shape_err(p, ins, "matrix operands required"))
    }
}

fn zip_map<T: Real>(a: &Tensor<T>, b: &Tensor<T>, f: impl Fn(T, T) -> T) -> Tensor<T> {
    let data = a.data().iter().zip(b.data()).map(|(&x, &y)| f(x, y)).collect();
    Tensor::new(a.shape().to_vec(), data).expect("same shape")
}

fn eval<T: Real>(p: &Primitive<T>, ins: &[&Tensor<T>]) -> Result<Tensor<T>, DiffError> {
    use Primitive as P;
    match p {
        P::Add | P::Sub | P::Mul | P::Div => {
            let (a, b) = (ins[0], ins[1]);
            if a.shape() != b.shape() {
                return Err(shape_err(p, ins, "elementwise operands must match exactly"));
            }
            Ok(match p {
                P::Add => zip_map(a, b, |x, y| x + y),
                P::Sub => zip_map(a, b, |x, y| x - y),
                P::Mul => zip_map(a, b, |x, y| x * y),
                _ => zip_map(a, b, |x, y| x / y),
            })
        }
        P::ScalarMul(c) => Ok(ins[0].map(|x| x * *c)),
        P::AddScalar(c) => Ok(ins[0].map(|x| x + *c)),
        P::Relu => Ok(ins[0].map(|x| if x > T::zero() { x } else { T::zero() })),
        P::Square => Ok(ins[0].map(|x| x * x)),
        P::Sqrt => Ok(ins[0].map(|x| x.sqrt())),
        P::MatMul => {
            require_matrix(p, ins)?;
            let (a, b) = (ins[0], ins[1]);
            let (m, k, n) = (a.rows(), a.cols(), b.cols());
            if b.rows() != k {
                return Err(shape_err(p, ins, "inner dimensions differ"));
            }
            let mut out = Tensor::zeros(&[m, n]);
            T::gemm(
                m,
                k,
                n,
                T::one(),
                a.data(),
                (k as isize, 1),
                b.data(),
                (n as isize, 1),
                T::zero(),
                out.data_mut(),
                (n as isize, 1),
            );
            Ok(out)
        }
        P::Sum(axis) | P::Mean(axis) => {
            let x = ins[0];
            let mean = matches!(p, P::Mean(_));
            match axis {
                None => {
                    if x.is_empty() && mean {
                        return Err(shape_err(p, ins, "mean of an empty tensor"));
                    }
                    let s = x.data().iter().fold(T::zero(), |acc, &v| acc + v);
                    let s = if mean { s / T::of(x.len() as f64) } else { s };
                    Ok(Tensor::scalar(s))
                }
                Some(ax) => {
                    require_matrix(p, ins)?;
                    let (r, c) = (x.rows(), x.cols());
                    match ax {
                        0 => {
                            if mean && r == 0 {
                                return Err(shape_err(p, ins, "mean over zero rows"));
                            }
                            let mut out = vec![T::zero(); c];
                            for i in 0..r {
                                for (o, &v) in out.iter_mut().zip(x.row(i)) {
                                    *o = *o + v;
                                }
                            }
                            if mean {
                                let inv = T::one() / T::of(r as f64);
                                out.iter_mut().for_each(|o| *o = *o * inv);
                            }
                            Tensor::matrix(1, c, out)
                        }
                        1 => {
                            if mean && c == 0 {
                                return Err(shape_err(p, ins, "mean over zero columns"));
                            }
                            let out = (0..r)
                                .map(|i| {
                                    let s = x.row(i).iter().fold(T::zero(), |acc, &v| acc + v);
                                    if mean {
                                        s / T::of(c as f64)
                                    } else {
                                        s
                                    }
                                })
                                .collect();
                            Tensor::matrix(r, 1, out)
                        }
                        _ => Err(shape_err(p, ins, format!("axis {ax} out of range"))),
                    }
                }
            }
        }
        P::Concat(axis) => {
            if ins.is_empty() {
                return Err(DiffError::Arity {
                    primitive: "concat",
                    expected: 1,
                    got: 0,
                });
            }
            require_matrix(p, ins)?;
            match axis {
                0 => {
                    let c = ins[0].cols();
                    if ins.iter().any(|t| t.cols() != c) {
                        return Err(shape_err(p, ins, "column counts differ"));
                    }
                    let rows = ins.iter().map(|t| t.rows()).sum();
                    let mut data = Vec::with_capacity(rows * c);
                    for t in ins {
                        data.extend_from_slice(t.data());
                    }
                    Tensor::matrix(rows, c, data)
                }
                1 => {
                    let r = ins[0].rows();
                    if ins.iter().any(|t| t.rows() != r) {
                        return Err(shape_err(p, ins, "row counts differ"));
                    }
                    let cols: usize = ins.iter().map(|t| t.cols()).sum();
                    let mut data = Vec::with_capacity(r * cols);
                    for i in 0..r {
                        for t in ins {
                            data.extend_from_slice(t.row(i));
                        }
                    }
                    Tensor::matrix(r, cols, data)
                }
                ax => Err(shape_err(p, ins, format!("axis {ax} out of range"))),
            }
        }
        P::GatherRows(index) => {
            require_matrix(p, ins)?;
            let x = ins[0];
            let c = x.cols();
            let mut data = Vec::with_capacity(index.len() * c);
            for &i in index.iter() {
                if i >= x.rows() {
                    return Err(DiffError::IndexOutOfRange {
                        primitive: "gather-rows",
                        index: i,
                        rows: x.rows(),
                    });
                }
                data.extend_from_slice(x.row(i));
            }
            Tensor::matrix(index.len(), c, data)
        }
        P::ScatterAddRows { index, rows } => {
            require_matrix(p, ins)?;
            let x = ins[0];
            if x.rows() != index.len() {
                return Err(shape_err(p, ins, format!("{} indices for {} rows", index.len(), x.rows())));
            }
            let c = x.cols();
            let mut out = Tensor::zeros(&[*rows, c]);
            for (k, &i) in index.iter().enumerate() {
                if i >= *rows {
                    return Err(DiffError::IndexOutOfRange {
                        primitive: "scatter-add-rows",
                        index: i,
                        rows: *rows,
                    });
                }
                let dst = &mut out.data_mut()[i * c..(i + 1) * c];
                for (d, &s) in dst.iter_mut().zip(x.row(k)) {
                    *d = *d + s;
                }
            }
            Ok(out)
        }
        P::SparseMatVec(s) => {
            require_matrix(p, ins)?;
            let x = ins[0];
            if x.rows() != s.cols() {
                return Err(shape_err(
                    p,
                    ins,
                    format!("sparse operand is {}x{}", s.rows(), s.cols()),
                ));
            }
            let c = x.cols();
            let mut out = Tensor::zeros(&[s.rows(), c]);
            s.matmul_acc(x.data(), c, out.data_mut());
            Ok(out)
        }
        P::L2NormRows(eps) => {
            require_matrix(p, ins)?;
            let x = ins[0];
            let out = (0..x.rows())
                .map(|i| (x.row(i).iter().fold(T::zero(), |a, &v| a + v * v) + *eps).sqrt())
                .collect();
            Tensor::matrix(x.rows(), 1, out)
        }
        P::BroadcastRows(n) => {
            let x = ins[0];
            if !x.is_matrix() || x.rows() != 1 {
                return Err(shape_err(p, ins, "expects a single row"));
            }
            let mut data = Vec::with_capacity(n * x.cols());
            for _ in 0..*n {
                data.extend_from_slice(x.data());
            }
            Tensor::matrix(*n, x.cols(), data)
        }
        P::BroadcastCols(n) => {
            let x = ins[0];
            if !x.is_matrix() || x.cols() != 1 {
                return Err(shape_err(p, ins, "expects a single column"));
            }
            let mut data = Vec::with_capacity(n * x.rows());
            for &v in x.data() {
                data.extend(std::iter::repeat_n(v, *n));
            }
            Tensor::matrix(x.rows(), *n, data)
        }
        P::Transpose => {
            require_matrix(p, ins)?;
            let x = ins[0];
            let (r, c) = (x.rows(), x.cols());
            let mut data = vec![T::zero(); r * c];
            for i in 0..r {
                for j in 0..c {
                    data[j * r + i] = x.get(i, j);
                }
            }
            Tensor::matrix(c, r, data)
        }
        P::CrossRows => {
            require_matrix(p, ins)?;
            let (a, b) = (ins[0], ins[1]);
            if a.shape() != b.shape() || a.cols() != 3 {
                return Err(shape_err(p, ins, "both operands must be n x 3"));
            }
            let mut data = Vec::with_capacity(a.len());
            for i in 0..a.rows() {
                data.extend_from_slice(&cross(a.row(i), b.row(i)));
            }
            Tensor::matrix(a.rows(), 3, data)
        }
    }
}

fn cross<T: Real>(a: &[T], b: &[T]) -> [T; 3] {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

/// Adds the contribution of output adjoint `g` to the adjoint of input `k`.
fn accumulate<T: Real>(p: &Primitive<T>, k: usize, ins: &[&Tensor<T>], out: &Tensor<T>, g: &Tensor<T>, dst: &mut Tensor<T>) {
    use Primitive as P;
    let d = dst.data_mut();
    let gd = g.data();
    match p {
        P::Add => add_into(d, gd, T::one()),
        P::Sub => add_into(d, gd, if k == 0 { T::one() } else { -T::one() }),
        P::AddScalar(_) => add_into(d, gd, T::one()),
        P::ScalarMul(c) => add_into(d, gd, *c),
        P::Mul => {
            let other = ins[1 - k].data();
            for ((d, &g), &o) in d.iter_mut().zip(gd).zip(other) {
                *d = *d + g * o;
            }
        }
        P::Div => {
            let (a, b) = (ins[0].data(), ins[1].data());
            if k == 0 {
                for ((d, &g), &b) in d.iter_mut().zip(gd).zip(b) {
                    *d = *d + g / b;
                }
            } else {
                for (((d, &g), &a), &b) in d.iter_mut().zip(gd).zip(a).zip(b) {
                    *d = *d - g * a / (b * b);
                }
            }
        }
        P::Relu => {
            for ((d, &g), &x) in d.iter_mut().zip(gd).zip(ins[0].data()) {
                if x > T::zero() {
                    *d = *d + g;
                }
            }
        }
        P::Square => {
            let two = T::of(2.0);
            for ((d, &g), &x) in d.iter_mut().zip(gd).zip(ins[0].data()) {
                *d = *d + two * x * g;
            }
        }
        P::Sqrt => {
            let two = T::of(2.0);
            for ((d, &g), &y) in d.iter_mut().zip(gd).zip(out.data()) {
                *d = *d + g / (two * y);
            }
        }
        P::MatMul => {
            let (a, b) = (ins[0], ins[1]);
            let (m, kk, n) = (a.rows(), a.cols(), b.cols());
            if k == 0 {
                // dA += G B^T
                T::gemm(m, n, kk, T::one(), gd, (n as isize, 1), b.data(), (1, n as isize), T::one(), d, (kk as isize, 1));
            } else {
                // dB += A^T G
                T::gemm(kk, m, n, T::one(), a.data(), (1, kk as isize), gd, (n as isize, 1), T::one(), d, (n as isize, 1));
            }
        }
        P::Sum(axis) | P::Mean(axis) => {
            let x = ins[0];
            let (r, c) = (x.rows(), x.cols());
            let scale = match (p, axis) {
                (P::Sum(_), _) => T::one(),
                (_, None) => T::one() / T::of(x.len() as f64),
                (_, Some(0)) => T::one() / T::of(r as f64),
                (_, _) => T::one() / T::of(c as f64),
            };
            match axis {
                None => {
                    let v = gd[0] * scale;
                    d.iter_mut().for_each(|d| *d = *d + v);
                }
                Some(0) => {
                    for i in 0..r {
                        for j in 0..c {
                            d[i * c + j] = d[i * c + j] + gd[j] * scale;
                        }
                    }
                }
                Some(_) => {
                    for i in 0..r {
                        let v = gd[i] * scale;
                        d[i * c..(i + 1) * c].iter_mut().for_each(|d| *d = *d + v);
                    }
                }
            }
        }
        P::Concat(axis) => {
            if *axis == 0 {
                let start: usize = ins[..k].iter().map(|t| t.len()).sum();
                add_into(d, &gd[start..start + ins[k].len()], T::one());
            } else {
                let offset: usize = ins[..k].iter().map(|t| t.cols()).sum();
                let (w, total) = (ins[k].cols(), g.cols());
                for i in 0..ins[k].rows() {
                    add_into(&mut d[i * w..(i + 1) * w], &gd[i * total + offset..i * total + offset + w], T::one());
                }
            }
        }
        P::GatherRows(index) => {
            let c = ins[0].cols();
            for (r, &i) in index.iter().enumerate() {
                add_into(&mut d[i * c..(i + 1) * c], &gd[r * c..(r + 1) * c], T::one());
            }
        }
        P::ScatterAddRows { index, .. } => {
            let c = ins[0].cols();
            for (r, &i) in index.iter().enumerate() {
                add_into(&mut d[r * c..(r + 1) * c], &gd[i * c..(i + 1) * c], T::one());
            }
        }
        P::SparseMatVec(s) => s.transpose_matmul_acc(gd, g.cols(), d),
        P::L2NormRows(_) => {
            let x = ins[0];
            let c = x.cols();
            for i in 0..x.rows() {
                let f = gd[i] / out.data()[i];
                for j in 0..c {
                    d[i * c + j] = d[i * c + j] + f * x.data()[i * c + j];
                }
            }
        }
        P::BroadcastRows(n) => {
            let c = ins[0].cols();
            for i in 0..*n {
                add_into(d, &gd[i * c..(i + 1) * c], T::one());
            }
        }
        P::BroadcastCols(n) => {
            for (i, d) in d.iter_mut().enumerate() {
                *d = gd[i * n..(i + 1) * n].iter().fold(*d, |acc, &v| acc + v);
            }
        }
        P::Transpose => {
            let (r, c) = (ins[0].rows(), ins[0].cols());
            for i in 0..r {
                for j in 0..c {
                    d[i * c + j] = d[i * c + j] + gd[j * r + i];
                }
            }
        }
        P::CrossRows => {
            let other = ins[1 - k];
            for i in 0..g.rows() {
                let gi = &gd[i * 3..i * 3 + 3];
                // d(a x b)/da^T g = b x g ; d(a x b)/db^T g = g x a
                let c = if k == 0 { cross(other.row(i), gi) } else { cross(gi, other.row(i)) };
                for j in 0..3 {
                    d[i * 3 + j] = d[i * 3 + j] + c[j];
                }
            }
        }
    }
}

fn add_into<T: Real>(dst: &mut [T], src: &[T], scale: T) {
    for (d, &s) in dst.iter_mut().zip(src) {
        *d = *d + scale * s;
    }
}

macro_rules! unary {
    ($($(#[$m:meta])* $fn:ident => $prim:expr;)*) => {
        $( $(#[$m])* pub fn $fn(&mut self, x: Var) -> Result<Var, DiffError> { self.apply($prim, &[x]) } )*
    };
}

macro_rules! binary {
    ($($fn:ident => $prim:expr;)*) => {
        $( pub fn $fn(&mut self, a: Var, b: Var) -> Result<Var, DiffError> { self.apply($prim, &[a, b]) } )*
    };
}

impl<T: Real> Tape<T> {
    binary! {
        add => Primitive::Add;
        sub => Primitive::Sub;
        mul => Primitive::Mul;
        div => Primitive::Div;
        matmul => Primitive::MatMul;
        cross_rows => Primitive::CrossRows;
    }

    unary! {
        relu => Primitive::Relu;
        square => Primitive::Square;
        sqrt => Primitive::Sqrt;
        transpose => Primitive::Transpose;
        /// Sum of all elements, as a scalar.
        sum_all => Primitive::Sum(None);
        mean_all => Primitive::Mean(None);
    }

    pub fn scale(&mut self, x: Var, c: T) -> Result<Var, DiffError> {
        self.apply(Primitive::ScalarMul(c), &[x])
    }

    pub fn add_scalar(&mut self, x: Var, c: T) -> Result<Var, DiffError> {
        self.apply(Primitive::AddScalar(c), &[x])
    }

    pub fn sum(&mut self, x: Var, axis: usize) -> Result<Var, DiffError> {
        self.apply(Primitive::Sum(Some(axis)), &[x])
    }

    pub fn mean(&mut self, x: Var, axis: usize) -> Result<Var, DiffError> {
        self.apply(Primitive::Mean(Some(axis)), &[x])
    }

    pub fn concat(&mut self, xs: &[Var], axis: usize) -> Result<Var, DiffError> {
        self.apply(Primitive::Concat(axis), xs)
    }

    pub fn gather_rows(&mut self, x: Var, index: Arc<[usize]>) -> Result<Var, DiffError> {
        self.apply(Primitive::GatherRows(index), &[x])
    }

    pub fn scatter_add_rows(&mut self, x: Var, index: Arc<[usize]>, rows: usize) -> Result<Var, DiffError> {
        self.apply(Primitive::ScatterAddRows { index, rows }, &[x])
    }

    pub fn sparse_matmul(&mut self, s: Arc<Csr<T>>, x: Var) -> Result<Var, DiffError> {
        self.apply(Primitive::SparseMatVec(s), &[x])
    }

    pub fn l2_norm_rows(&mut self, x: Var, eps: T) -> Result<Var, DiffError> {
        self.apply(Primitive::L2NormRows(eps), &[x])
    }

    pub fn broadcast_rows(&mut self, x: Var, n: usize) -> Result<Var, DiffError> {
        self.apply(Primitive::BroadcastRows(n), &[x])
    }

    pub fn broadcast_cols(&mut self, x: Var, n: usize) -> Result<Var, DiffError> {
        self.apply(Primitive::BroadcastCols(n), &[x])
    }
}

#[cfg(test)]
impl<T: Real> Tape<T> {
    pub(crate) fn nodes_for_test(&self) -> Vec<&Tensor<T>> {
        self.nodes.iter().map(|n| &n.value).collect()
    }
}
