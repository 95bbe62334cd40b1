//! Reverse-mode automatic differentiation over tensor-valued nodes.
//!
//! Every primitive appends a node to the tape; nodes are therefore stored in
//! topological order and `backward` is a single reverse sweep.

use std::cell::{Ref, RefCell};

use crate::error::{shape_err, Error, Result};
use crate::numcore::Tensor;
use crate::scalar::Scalar;

/// Handle to a node recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug)]
enum Op<T> {
    Leaf,
    MatMul(Var, Var),
    Add(Var, Var),
    /// `[m×n] + [n]`, bias broadcast over rows.
    AddRow(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    /// `scale·x + shift`
    Affine(Var, T),
    Tanh(Var),
    Sigmoid(Var),
    Exp(Var),
    Sum(Var),
    SliceCols(Var, usize, usize),
    Gather(Var, Vec<usize>),
    SoftmaxXent {
        logits: Var,
        targets: Vec<Option<usize>>,
        probs: Tensor<T>,
    },
}

#[derive(Debug)]
struct Node<T> {
    value: Tensor<T>,
    op: Op<T>,
    requires_grad: bool,
}

/// Ordered record of primitive operations.
#[derive(Debug, Default)]
pub struct Tape<T> {
    nodes: RefCell<Vec<Node<T>>>,
}

/// Gradients produced by [`Tape::backward`], indexed by [`Var`].
#[derive(Debug)]
pub struct Gradients<T> {
    grads: Vec<Option<Tensor<T>>>,
    shapes: Vec<Vec<usize>>,
}

impl<T: Scalar> Gradients<T> {
    /// Gradient of the loss w.r.t. `v`; zero when `v` is not on the path to the loss.
    pub fn get(&self, v: Var) -> Tensor<T> {
        match self.grads.get(v.0) {
            Some(Some(g)) => g.clone(),
            _ => Tensor::zeros(self.shapes.get(v.0).cloned().unwrap_or_default()),
        }
    }

    pub fn wrt(&self, vars: &[Var]) -> Vec<Tensor<T>> {
        vars.iter().map(|&v| self.get(v)).collect()
    }
}

impl<T: Scalar> Tape<T> {
    pub fn new() -> Self {
        Self {
            nodes: RefCell::new(Vec::new()),
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Records a differentiable input (a parameter or anything we want a gradient for).
    pub fn leaf(&self, value: Tensor<T>) -> Var {
        self.push(value, Op::Leaf, true)
    }

    /// Records an input that never receives a gradient.
    pub fn constant(&self, value: Tensor<T>) -> Var {
        self.push(value, Op::Leaf, false)
    }

    pub fn value(&self, v: Var) -> Ref<'_, Tensor<T>> {
        Ref::map(self.nodes.borrow(), |n| &n[v.0].value)
    }

    /// First element of `v`, for scalar nodes.
    pub fn scalar(&self, v: Var) -> T {
        self.nodes.borrow()[v.0].value.data()[0]
    }

    fn push(&self, value: Tensor<T>, op: Op<T>, requires_grad: bool) -> Var {
        let mut nodes = self.nodes.borrow_mut();
        nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var(nodes.len() - 1)
    }

    fn check(&self, v: Var) -> Result<()> {
        if v.0 < self.len() {
            Ok(())
        } else {
            Err(Error::Detached(v.0))
        }
    }

    fn grad_flag(&self, vars: &[Var]) -> bool {
        let nodes = self.nodes.borrow();
        vars.iter().any(|v| nodes[v.0].requires_grad)
    }

    fn record(
        &self,
        op_name: &'static str,
        value: Tensor<T>,
        op: Op<T>,
        inputs: &[Var],
    ) -> Result<Var> {
        value.ensure_finite(op_name)?;
        let rg = self.grad_flag(inputs);
        Ok(self.push(value, op, rg))
    }

    pub fn matmul(&self, a: Var, b: Var) -> Result<Var> {
        self.check(a)?;
        self.check(b)?;
        let value = {
            let n = self.nodes.borrow();
            n[a.0].value.matmul(&n[b.0].value)?
        };
        self.record("matmul", value, Op::MatMul(a, b), &[a, b])
    }

    pub fn add(&self, a: Var, b: Var) -> Result<Var> {
        self.check(a)?;
        self.check(b)?;
        let value = {
            let n = self.nodes.borrow();
            n[a.0].value.zip_map(&n[b.0].value, "add", |x, y| x + y)?
        };
        self.record("add", value, Op::Add(a, b), &[a, b])
    }

    pub fn sub(&self, a: Var, b: Var) -> Result<Var> {
        self.check(a)?;
        self.check(b)?;
        let value = {
            let n = self.nodes.borrow();
            n[a.0].value.zip_map(&n[b.0].value, "sub", |x, y| x - y)?
        };
        self.record("sub", value, Op::Sub(a, b), &[a, b])
    }

    /// Elementwise product.
    pub fn mul(&self, a: Var, b: Var) -> Result<Var> {
        self.check(a)?;
        self.check(b)?;
        let value = {
            let n = self.nodes.borrow();
            n[a.0].value.zip_map(&n[b.0].value, "mul", |x, y| x * y)?
        };
        self.record("mul", value, Op::Mul(a, b), &[a, b])
    }

    /// Adds a length-`n` row vector to every row of an `[m×n]` matrix.
    pub fn add_row(&self, a: Var, row: Var) -> Result<Var> {
        self.check(a)?;
        self.check(row)?;
        let value = {
            let n = self.nodes.borrow();
            let (av, rv) = (&n[a.0].value, &n[row.0].value);
            let (_, c) = av.dims2()?;
            if rv.numel() != c {
                return Err(shape_err(
                    "add_row",
                    format!("{:?} + {:?}", av.shape(), rv.shape()),
                ));
            }
            let mut out = av.clone();
            for r in out.data_mut().chunks_mut(c) {
                for (o, &b) in r.iter_mut().zip(rv.data()) {
                    *o += b;
                }
            }
            out
        };
        self.record("add_row", value, Op::AddRow(a, row), &[a, row])
    }

    /// `scale·a + shift`
    pub fn affine(&self, a: Var, scale: T, shift: T) -> Result<Var> {
        self.check(a)?;
        let value = self.value(a).map(|x| scale * x + shift);
        self.record("affine", value, Op::Affine(a, scale), &[a])
    }

    pub fn scale(&self, a: Var, s: T) -> Result<Var> {
        self.affine(a, s, T::zero())
    }

    pub fn tanh(&self, a: Var) -> Result<Var> {
        self.check(a)?;
        let value = self.value(a).map(|x| x.tanh());
        self.record("tanh", value, Op::Tanh(a), &[a])
    }

    pub fn sigmoid(&self, a: Var) -> Result<Var> {
        self.check(a)?;
        let value = self.value(a).map(sigmoid);
        self.record("sigmoid", value, Op::Sigmoid(a), &[a])
    }

    pub fn exp(&self, a: Var) -> Result<Var> {
        self.check(a)?;
        let value = self.value(a).map(|x| x.exp());
        self.record("exp", value, Op::Exp(a), &[a])
    }

    /// Sum of all elements, as a `[1]` tensor.
    pub fn sum(&self, a: Var) -> Result<Var> {
        self.check(a)?;
        let value = Tensor::scalar(self.value(a).sum());
        self.record("sum", value, Op::Sum(a), &[a])
    }

    /// Columns `start..end` of a rank-2 tensor.
    pub fn slice_cols(&self, a: Var, start: usize, end: usize) -> Result<Var> {
        self.check(a)?;
        let value = {
            let n = self.nodes.borrow();
            let av = &n[a.0].value;
            let (r, c) = av.dims2()?;
            if start > end || end > c {
                return Err(shape_err("slice_cols", format!("{start}..{end} of {c}")));
            }
            let mut data = Vec::with_capacity(r * (end - start));
            for row in av.rows() {
                data.extend_from_slice(&row[start..end]);
            }
            Tensor::new([r, end - start], data)?
        };
        self.record("slice_cols", value, Op::SliceCols(a, start, end), &[a])
    }

    /// Row lookup `table[idx[i]]`, e.g. token embeddings.
    pub fn gather_rows(&self, table: Var, idx: &[usize]) -> Result<Var> {
        self.check(table)?;
        let value = self.value(table).select_rows(idx)?;
        self.record(
            "gather_rows",
            value,
            Op::Gather(table, idx.to_vec()),
            &[table],
        )
    }

    /// Summed negative log-softmax of `logits` rows at the target indices.
    ///
    /// Rows whose target is `None` are masked out and contribute nothing.
    pub fn softmax_cross_entropy(&self, logits: Var, targets: &[Option<usize>]) -> Result<Var> {
        self.check(logits)?;
        let (probs, loss) = {
            let n = self.nodes.borrow();
            let lv = &n[logits.0].value;
            let (r, c) = lv.dims2()?;
            if r != targets.len() {
                return Err(shape_err(
                    "softmax_cross_entropy",
                    format!("{r} rows vs {} targets", targets.len()),
                ));
            }
            let mut probs = Vec::with_capacity(r * c);
            let mut loss = T::zero();
            for (row, tgt) in lv.rows().zip(targets) {
                let max = row.iter().copied().fold(T::neg_infinity(), T::max);
                let z: T = row.iter().map(|&x| (x - max).exp()).sum();
                let log_z = z.ln() + max;
                probs.extend(row.iter().map(|&x| (x - log_z).exp()));
                if let Some(t) = *tgt {
                    if t >= c {
                        return Err(Error::InvalidArgument(format!(
                            "target index {t} out of range for vocabulary of {c}"
                        )));
                    }
                    loss += log_z - row[t];
                }
            }
            (Tensor::new([r, c], probs)?, loss)
        };
        self.record(
            "softmax_cross_entropy",
            Tensor::scalar(loss),
            Op::SoftmaxXent {
                logits,
                targets: targets.to_vec(),
                probs,
            },
            &[logits],
        )
    }

    /// Reverse sweep from a scalar `loss`.
    pub fn backward(&self, loss: Var) -> Result<Gradients<T>> {
        self.check(loss)?;
        let nodes = self.nodes.borrow();
        let shapes: Vec<Vec<usize>> = nodes.iter().map(|n| n.value.shape().to_vec()).collect();
        if nodes[loss.0].value.numel() != 1 {
            return Err(Error::NonScalarLoss(shapes[loss.0].clone()));
        }
        let mut grads: Vec<Option<Tensor<T>>> = (0..nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(Tensor::full(shapes[loss.0].clone(), T::one()));

        for i in (0..=loss.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            let node = &nodes[i];
            if !node.requires_grad {
                grads[i] = Some(g);
                continue;
            }
            let wants = |v: Var| nodes[v.0].requires_grad;
            let acc = |v: Var, d: Tensor<T>, grads: &mut Vec<Option<Tensor<T>>>| -> Result<()> {
                match &mut grads[v.0] {
                    Some(existing) => existing.add_assign(&d),
                    slot => {
                        *slot = Some(d);
                        Ok(())
                    }
                }
            };
            match &node.op {
                Op::Leaf => {}
                Op::MatMul(a, b) => {
                    if wants(*a) {
                        acc(*a, g.matmul_t(&nodes[b.0].value)?, &mut grads)?;
                    }
                    if wants(*b) {
                        acc(*b, nodes[a.0].value.t_matmul(&g)?, &mut grads)?;
                    }
                }
                Op::Add(a, b) => {
                    if wants(*a) {
                        acc(*a, g.clone(), &mut grads)?;
                    }
                    if wants(*b) {
                        acc(*b, g.clone(), &mut grads)?;
                    }
                }
                Op::Sub(a, b) => {
                    if wants(*a) {
                        acc(*a, g.clone(), &mut grads)?;
                    }
                    if wants(*b) {
                        acc(*b, g.map(|x| -x), &mut grads)?;
                    }
                }
                Op::Mul(a, b) => {
                    if wants(*a) {
                        acc(
                            *a,
                            g.zip_map(&nodes[b.0].value, "mul'", |x, y| x * y)?,
                            &mut grads,
                        )?;
                    }
                    if wants(*b) {
                        acc(
                            *b,
                            g.zip_map(&nodes[a.0].value, "mul'", |x, y| x * y)?,
                            &mut grads,
                        )?;
                    }
                }
                Op::AddRow(a, row) => {
                    if wants(*a) {
                        acc(*a, g.clone(), &mut grads)?;
                    }
                    if wants(*row) {
                        let (_, c) = g.dims2()?;
                        let mut d = vec![T::zero(); c];
                        for r in g.rows() {
                            for (o, &x) in d.iter_mut().zip(r) {
                                *o += x;
                            }
                        }
                        let d = Tensor::new(nodes[row.0].value.shape().to_vec(), d)?;
                        acc(*row, d, &mut grads)?;
                    }
                }
                Op::Affine(a, s) => {
                    let s = *s;
                    acc(*a, g.map(|x| x * s), &mut grads)?;
                }
                Op::Tanh(a) => {
                    let d = g.zip_map(&node.value, "tanh'", |x, y| x * (T::one() - y * y))?;
                    acc(*a, d, &mut grads)?;
                }
                Op::Sigmoid(a) => {
                    let d = g.zip_map(&node.value, "sigmoid'", |x, y| x * y * (T::one() - y))?;
                    acc(*a, d, &mut grads)?;
                }
                Op::Exp(a) => {
                    let d = g.zip_map(&node.value, "exp'", |x, y| x * y)?;
                    acc(*a, d, &mut grads)?;
                }
                Op::Sum(a) => {
                    let d = Tensor::full(nodes[a.0].value.shape().to_vec(), g.data()[0]);
                    acc(*a, d, &mut grads)?;
                }
                Op::SliceCols(a, start, end) => {
                    let (r, c) = nodes[a.0].value.dims2()?;
                    let w = end - start;
                    let mut d = Tensor::zeros([r, c]);
                    let dd = d.data_mut();
                    for (i, gr) in g.rows().enumerate() {
                        dd[i * c + start..i * c + start + w].copy_from_slice(gr);
                    }
                    acc(*a, d, &mut grads)?;
                }
                Op::Gather(table, idx) => {
                    let mut d = Tensor::zeros(nodes[table.0].value.shape().to_vec());
                    let (_, c) = d.dims2()?;
                    let dd = d.data_mut();
                    for (gr, &k) in g.rows().zip(idx) {
                        for (o, &x) in dd[k * c..(k + 1) * c].iter_mut().zip(gr) {
                            *o += x;
                        }
                    }
                    acc(*table, d, &mut grads)?;
                }
                Op::SoftmaxXent {
                    logits,
                    targets,
                    probs,
                } => {
                    let up = g.data()[0];
                    let (_, c) = probs.dims2()?;
                    let mut d = probs.clone();
                    for (row, tgt) in d.data_mut().chunks_mut(c).zip(targets) {
                        match tgt {
                            Some(t) => {
                                row[*t] -= T::one();
                                row.iter_mut().for_each(|x| *x *= up);
                            }
                            None => row.iter_mut().for_each(|x| *x = T::zero()),
                        }
                    }
                    acc(*logits, d, &mut grads)?;
                }
            }
            if matches!(node.op, Op::Leaf) {
                grads[i] = Some(g);
            }
        }
        Ok(Gradients { grads, shapes })
    }
}

#[inline]
pub(crate) fn sigmoid<T: Scalar>(x: T) -> T {
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}
