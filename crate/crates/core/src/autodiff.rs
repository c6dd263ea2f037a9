//! Reverse-mode differentiation over small dense tensors.
//!
//! A [`Graph`] is an append-only list of primitive nodes; leaves are either
//! parameters or data inputs and receive their values through [`Bindings`].
//! Because nodes can only reference earlier nodes, insertion order is a
//! topological order and evaluation is a single forward sweep.
//!
//! [`gradients`] only back-propagates into the leaves named in `wrt`. Every
//! other leaf is treated as a constant, which is how frozen parameter groups
//! are expressed.

use alloc::borrow::Cow;
use alloc::collections::BTreeMap;
use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{shape_err, Error, Result};
use crate::tensor::{matmul_at_into, matmul_bt_into, matmul_into, Tensor};

/// Lower clamp applied to probabilities before `log`.
pub const PROB_FLOOR: f64 = 1e-7;
/// Upper clamp applied to probabilities before `log`.
pub const PROB_CEIL: f64 = 1.0 - 1e-7;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct NodeId(pub(crate) usize);

impl NodeId {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LeafKind {
    Param,
    Input,
}

/// Primitive operations. Anything the network and its losses need is a
/// composition of these.
#[derive(Clone, Debug, PartialEq)]
pub enum Op {
    Leaf(LeafKind),
    /// `x * w + b` with `x: [n, i]` (or `[i]`), `w: [i, o]`, `b: [o]`.
    Affine { x: NodeId, w: NodeId, b: NodeId },
    /// Plain matrix product `[n, k] x [k, m]`.
    MatMul(NodeId, NodeId),
    Relu(NodeId),
    /// `[v]_+`; numerically the same map as ReLU, kept separate so loss
    /// graphs read like the formulas they implement.
    Hinge(NodeId),
    /// Softmax over the last axis.
    Softmax(NodeId),
    /// Natural log of the input clamped to `[PROB_FLOOR, PROB_CEIL]`.
    Log(NodeId),
    Sum(NodeId),
    Mean(NodeId),
    Add(NodeId, NodeId),
    Sub(NodeId, NodeId),
    Mul(NodeId, NodeId),
    Scale(NodeId, f64),
    /// Row-wise squared Euclidean distance: `[n, d] x [n, d] -> [n]`.
    SqDist(NodeId, NodeId),
    /// Concatenation along the last axis.
    Concat(NodeId, NodeId),
}

impl Op {
    fn inputs(&self) -> Vec<NodeId> {
        match *self {
            Op::Leaf(_) => vec![],
            Op::Affine { x, w, b } => vec![x, w, b],
            Op::MatMul(a, b)
            | Op::Add(a, b)
            | Op::Sub(a, b)
            | Op::Mul(a, b)
            | Op::SqDist(a, b)
            | Op::Concat(a, b) => vec![a, b],
            Op::Relu(a)
            | Op::Hinge(a)
            | Op::Softmax(a)
            | Op::Log(a)
            | Op::Sum(a)
            | Op::Mean(a)
            | Op::Scale(a, _) => vec![a],
        }
    }

    fn name(&self) -> &'static str {
        match self {
            Op::Leaf(_) => "leaf",
            Op::Affine { .. } => "affine",
            Op::MatMul(..) => "matmul",
            Op::Relu(_) => "relu",
            Op::Hinge(_) => "hinge",
            Op::Softmax(_) => "softmax",
            Op::Log(_) => "log",
            Op::Sum(_) => "sum",
            Op::Mean(_) => "mean",
            Op::Add(..) => "add",
            Op::Sub(..) => "sub",
            Op::Mul(..) => "mul",
            Op::Scale(..) => "scale",
            Op::SqDist(..) => "sqdist",
            Op::Concat(..) => "concat",
        }
    }
}

#[derive(Clone, Debug, Default)]
pub struct Graph {
    nodes: Vec<Op>,
}

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn op(&self, id: NodeId) -> Option<&Op> {
        self.nodes.get(id.0)
    }

    pub fn param(&mut self) -> NodeId {
        self.push(Op::Leaf(LeafKind::Param))
    }

    pub fn input(&mut self) -> NodeId {
        self.push(Op::Leaf(LeafKind::Input))
    }

    pub fn is_param(&self, id: NodeId) -> bool {
        matches!(self.nodes.get(id.0), Some(Op::Leaf(LeafKind::Param)))
    }

    /// Every parameter leaf, in creation order.
    pub fn params(&self) -> Vec<NodeId> {
        (0..self.nodes.len()).map(NodeId).filter(|&id| self.is_param(id)).collect()
    }

    /// Appends an operation.
    ///
    /// # Panics
    /// If `op` references a node that does not precede it; that would break
    /// the acyclic ordering every other routine relies on.
    pub fn push(&mut self, op: Op) -> NodeId {
        let id = self.nodes.len();
        for input in op.inputs() {
            assert!(input.0 < id, "node {id} references later node {}", input.0);
        }
        self.nodes.push(op);
        NodeId(id)
    }

    pub fn affine(&mut self, x: NodeId, w: NodeId, b: NodeId) -> NodeId {
        self.push(Op::Affine { x, w, b })
    }
    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> NodeId {
        self.push(Op::MatMul(a, b))
    }
    pub fn relu(&mut self, a: NodeId) -> NodeId {
        self.push(Op::Relu(a))
    }
    pub fn hinge(&mut self, a: NodeId) -> NodeId {
        self.push(Op::Hinge(a))
    }
    pub fn softmax(&mut self, a: NodeId) -> NodeId {
        self.push(Op::Softmax(a))
    }
    pub fn log(&mut self, a: NodeId) -> NodeId {
        self.push(Op::Log(a))
    }
    pub fn sum(&mut self, a: NodeId) -> NodeId {
        self.push(Op::Sum(a))
    }
    pub fn mean(&mut self, a: NodeId) -> NodeId {
        self.push(Op::Mean(a))
    }
    pub fn add(&mut self, a: NodeId, b: NodeId) -> NodeId {
        self.push(Op::Add(a, b))
    }
    pub fn sub(&mut self, a: NodeId, b: NodeId) -> NodeId {
        self.push(Op::Sub(a, b))
    }
    pub fn mul(&mut self, a: NodeId, b: NodeId) -> NodeId {
        self.push(Op::Mul(a, b))
    }
    pub fn scale(&mut self, a: NodeId, c: f64) -> NodeId {
        self.push(Op::Scale(a, c))
    }
    pub fn sq_dist(&mut self, a: NodeId, b: NodeId) -> NodeId {
        self.push(Op::SqDist(a, b))
    }
    pub fn concat(&mut self, a: NodeId, b: NodeId) -> NodeId {
        self.push(Op::Concat(a, b))
    }
}

/// Values for the leaves of a graph. Tensors may be borrowed so parameter
/// snapshots can be bound without copying.
#[derive(Clone, Debug, Default)]
pub struct Bindings<'a> {
    slots: Vec<Option<Cow<'a, Tensor>>>,
}

impl<'a> Bindings<'a> {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn bind(&mut self, leaf: NodeId, value: Tensor) {
        self.set(leaf, Cow::Owned(value));
    }

    pub fn bind_ref(&mut self, leaf: NodeId, value: &'a Tensor) {
        self.set(leaf, Cow::Borrowed(value));
    }

    pub fn get(&self, leaf: NodeId) -> Option<&Tensor> {
        self.slots.get(leaf.0).and_then(|s| s.as_deref())
    }

    fn set(&mut self, leaf: NodeId, value: Cow<'a, Tensor>) {
        if self.slots.len() <= leaf.0 {
            self.slots.resize(leaf.0 + 1, None);
        }
        self.slots[leaf.0] = Some(value);
    }

    fn slot(&self, leaf: NodeId) -> Option<&Cow<'a, Tensor>> {
        self.slots.get(leaf.0).and_then(|s| s.as_ref())
    }
}

/// Result of a forward sweep: one tensor per node.
#[derive(Clone, Debug)]
pub struct Values<'a> {
    tensors: Vec<Cow<'a, Tensor>>,
}

impl Values<'_> {
    pub fn get(&self, id: NodeId) -> &Tensor {
        &self.tensors[id.0]
    }

    /// Scalar value of a node, if it has exactly one entry.
    pub fn scalar(&self, id: NodeId) -> Option<f64> {
        self.tensors.get(id.0).and_then(|t| t.item())
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }
}

/// `∂loss/∂leaf` for each requested parameter leaf.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct GradientMap {
    entries: BTreeMap<NodeId, Tensor>,
}

impl GradientMap {
    pub fn get(&self, leaf: NodeId) -> Option<&Tensor> {
        self.entries.get(&leaf)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (NodeId, &Tensor)> {
        self.entries.iter().map(|(k, v)| (*k, v))
    }
}

/// Evaluates every node of `graph` under `bindings`.
pub fn evaluate<'a>(graph: &Graph, bindings: &Bindings<'a>) -> Result<Values<'a>> {
    let mut tensors: Vec<Cow<'a, Tensor>> = Vec::with_capacity(graph.nodes.len());
    for (idx, op) in graph.nodes.iter().enumerate() {
        let value = match op {
            Op::Leaf(_) => bindings
                .slot(NodeId(idx))
                .cloned()
                .ok_or(Error::Unbound { node: idx })?,
            _ => Cow::Owned(forward_op(op, &tensors)?),
        };
        if !value.is_finite() {
            return Err(Error::NonFinite { node: idx });
        }
        tensors.push(value);
    }
    Ok(Values { tensors })
}

/// Forward sweep followed by a reverse sweep restricted to `wrt`.
pub fn gradients(
    graph: &Graph,
    loss: NodeId,
    bindings: &Bindings<'_>,
    wrt: &[NodeId],
) -> Result<GradientMap> {
    check_wrt(graph, loss, wrt)?;
    let values = evaluate(graph, bindings)?;
    backward(graph, &values, loss, wrt)
}

fn check_wrt(graph: &Graph, loss: NodeId, wrt: &[NodeId]) -> Result<()> {
    if loss.0 >= graph.nodes.len() {
        return Err(Error::NotInGraph { node: loss.0 });
    }
    for &leaf in wrt {
        if leaf.0 >= graph.nodes.len() {
            return Err(Error::NotInGraph { node: leaf.0 });
        }
        if !graph.is_param(leaf) {
            return Err(Error::NotAParameter { node: leaf.0 });
        }
    }
    Ok(())
}

/// Reverse sweep over an already evaluated graph.
///
/// Gradients are only propagated along nodes that depend on some leaf in
/// `wrt`; contributions from shared subexpressions are summed.
pub fn backward(
    graph: &Graph,
    values: &Values<'_>,
    loss: NodeId,
    wrt: &[NodeId],
) -> Result<GradientMap> {
    check_wrt(graph, loss, wrt)?;
    let loss_value = values.get(loss);
    if loss_value.len() != 1 {
        return Err(Error::NonScalarLoss { shape: loss_value.shape().to_vec() });
    }
    if wrt.is_empty() {
        return Ok(GradientMap::default());
    }

    let n = loss.0 + 1;
    let mut needs = vec![false; n];
    for &leaf in wrt {
        if leaf.0 < n {
            needs[leaf.0] = true;
        }
    }
    for idx in 0..n {
        if !needs[idx] {
            needs[idx] = graph.nodes[idx].inputs().iter().any(|i| needs[i.0]);
        }
    }

    let mut grads: Vec<Option<Tensor>> = vec![None; n];
    if needs[loss.0] {
        grads[loss.0] = Some(Tensor::filled(loss_value.shape(), 1.0));
    }
    for idx in (0..n).rev() {
        let Some(g) = grads[idx].take() else { continue };
        let op = &graph.nodes[idx];
        if let Op::Leaf(_) = op {
            grads[idx] = Some(g);
            continue;
        }
        backward_op(op, &g, values, idx, &needs, &mut grads)?;
    }

    let mut entries = BTreeMap::new();
    for &leaf in wrt {
        let grad = grads
            .get_mut(leaf.0)
            .and_then(|g| g.take())
            .unwrap_or_else(|| Tensor::zeros(values.get(leaf).shape()));
        entries.insert(leaf, grad);
    }
    Ok(GradientMap { entries })
}

fn accumulate(grads: &mut [Option<Tensor>], id: NodeId, contribution: Tensor) {
    match &mut grads[id.0] {
        Some(existing) => {
            for (e, c) in existing.data_mut().iter_mut().zip(contribution.data()) {
                *e += c;
            }
        }
        slot @ None => *slot = Some(contribution),
    }
}

fn same_shape(op: &'static str, a: &Tensor, b: &Tensor) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(shape_err(op, format!("{:?} vs {:?}", a.shape(), b.shape())));
    }
    Ok(())
}

/// Interprets a rank-1 or rank-2 tensor as `(rows, cols)`.
fn as_matrix(op: &'static str, t: &Tensor) -> Result<(usize, usize)> {
    match t.shape() {
        [c] => Ok((1, *c)),
        [r, c] => Ok((*r, *c)),
        s => Err(shape_err(op, format!("expected rank 1 or 2, got {s:?}"))),
    }
}

fn forward_op(op: &Op, vals: &[Cow<'_, Tensor>]) -> Result<Tensor> {
    let v = |id: &NodeId| -> &Tensor { &vals[id.0] };
    let name = op.name();
    match op {
        Op::Leaf(_) => unreachable!("leaves are bound, not computed"),
        Op::Affine { x, w, b } => {
            let (x, w, b) = (v(x), v(w), v(b));
            let (n, i) = as_matrix(name, x)?;
            let [wi, o] = *w.shape() else {
                return Err(shape_err(name, format!("weight must be rank 2, got {:?}", w.shape())));
            };
            if wi != i || b.shape() != [o] {
                return Err(shape_err(
                    name,
                    format!("x {:?}, w {:?}, b {:?}", x.shape(), w.shape(), b.shape()),
                ));
            }
            let mut out = Vec::with_capacity(n * o);
            for _ in 0..n {
                out.extend_from_slice(b.data());
            }
            matmul_into(x.data(), w.data(), &mut out, n, i, o);
            let shape = if x.rank() == 1 { vec![o] } else { vec![n, o] };
            Tensor::new(shape, out)
        }
        Op::MatMul(a, b) => {
            let (a, b) = (v(a), v(b));
            let (n, k) = as_matrix(name, a)?;
            let [bk, m] = *b.shape() else {
                return Err(shape_err(name, format!("rhs must be rank 2, got {:?}", b.shape())));
            };
            if bk != k {
                return Err(shape_err(name, format!("{:?} x {:?}", a.shape(), b.shape())));
            }
            let mut out = vec![0.0; n * m];
            matmul_into(a.data(), b.data(), &mut out, n, k, m);
            let shape = if a.rank() == 1 { vec![m] } else { vec![n, m] };
            Tensor::new(shape, out)
        }
        Op::Relu(a) | Op::Hinge(a) => {
            let a = v(a);
            let data = a.data().iter().map(|&x| if x > 0.0 { x } else { 0.0 }).collect();
            Tensor::new(a.shape().to_vec(), data)
        }
        Op::Softmax(a) => {
            let a = v(a);
            let (n, k) = as_matrix(name, a)?;
            if k == 0 {
                return Err(shape_err(name, "empty class axis".into()));
            }
            let mut out = vec![0.0; n * k];
            for r in 0..n {
                softmax_row(&a.data()[r * k..(r + 1) * k], &mut out[r * k..(r + 1) * k]);
            }
            Tensor::new(a.shape().to_vec(), out)
        }
        Op::Log(a) => {
            let a = v(a);
            let data = a
                .data()
                .iter()
                .map(|&p| libm::log(p.clamp(PROB_FLOOR, PROB_CEIL)))
                .collect();
            Tensor::new(a.shape().to_vec(), data)
        }
        Op::Sum(a) => Ok(Tensor::scalar(v(a).data().iter().sum())),
        Op::Mean(a) => {
            let a = v(a);
            if a.is_empty() {
                return Err(shape_err(name, "mean of an empty tensor".into()));
            }
            Ok(Tensor::scalar(a.data().iter().sum::<f64>() / a.len() as f64))
        }
        Op::Add(a, b) | Op::Sub(a, b) | Op::Mul(a, b) => {
            let (a, b) = (v(a), v(b));
            same_shape(name, a, b)?;
            let f: fn(f64, f64) -> f64 = match op {
                Op::Add(..) => |x, y| x + y,
                Op::Sub(..) => |x, y| x - y,
                _ => |x, y| x * y,
            };
            let data = a.data().iter().zip(b.data()).map(|(&x, &y)| f(x, y)).collect();
            Tensor::new(a.shape().to_vec(), data)
        }
        Op::Scale(a, c) => {
            let a = v(a);
            Tensor::new(a.shape().to_vec(), a.data().iter().map(|x| x * c).collect())
        }
        Op::SqDist(a, b) => {
            let (a, b) = (v(a), v(b));
            same_shape(name, a, b)?;
            let (n, d) = as_matrix(name, a)?;
            let data: Vec<f64> = (0..n)
                .map(|r| {
                    a.data()[r * d..(r + 1) * d]
                        .iter()
                        .zip(&b.data()[r * d..(r + 1) * d])
                        .map(|(x, y)| (x - y) * (x - y))
                        .sum()
                })
                .collect();
            let shape = if a.rank() == 1 { vec![] } else { vec![n] };
            Tensor::new(shape, data)
        }
        Op::Concat(a, b) => {
            let (a, b) = (v(a), v(b));
            let (na, ca) = as_matrix(name, a)?;
            let (nb, cb) = as_matrix(name, b)?;
            if na != nb || a.rank() != b.rank() {
                return Err(shape_err(name, format!("{:?} with {:?}", a.shape(), b.shape())));
            }
            let mut out = Vec::with_capacity(na * (ca + cb));
            for r in 0..na {
                out.extend_from_slice(&a.data()[r * ca..(r + 1) * ca]);
                out.extend_from_slice(&b.data()[r * cb..(r + 1) * cb]);
            }
            let shape = if a.rank() == 1 { vec![ca + cb] } else { vec![na, ca + cb] };
            Tensor::new(shape, out)
        }
    }
}

pub(crate) fn softmax_row(logits: &[f64], out: &mut [f64]) {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut total = 0.0;
    for (o, &l) in out.iter_mut().zip(logits) {
        *o = libm::exp(l - max);
        total += *o;
    }
    for o in out.iter_mut() {
        *o /= total;
    }
}

fn backward_op(
    op: &Op,
    g: &Tensor,
    values: &Values<'_>,
    idx: usize,
    needs: &[bool],
    grads: &mut [Option<Tensor>],
) -> Result<()> {
    let out = values.get(NodeId(idx));
    let need = |id: &NodeId| needs[id.0];
    match op {
        Op::Leaf(_) => {}
        Op::Affine { x, w, b } => {
            let (xv, wv) = (values.get(*x), values.get(*w));
            let (n, i) = as_matrix("affine", xv)?;
            let o = wv.shape()[1];
            if need(x) {
                let mut gx = vec![0.0; n * i];
                matmul_bt_into(g.data(), wv.data(), &mut gx, n, i, o);
                accumulate(grads, *x, Tensor::new(xv.shape().to_vec(), gx)?);
            }
            if need(w) {
                let mut gw = vec![0.0; i * o];
                matmul_at_into(xv.data(), g.data(), &mut gw, n, i, o);
                accumulate(grads, *w, Tensor::new(vec![i, o], gw)?);
            }
            if need(b) {
                let mut gb = vec![0.0; o];
                for r in 0..n {
                    for (acc, gv) in gb.iter_mut().zip(&g.data()[r * o..(r + 1) * o]) {
                        *acc += gv;
                    }
                }
                accumulate(grads, *b, Tensor::vector(gb));
            }
        }
        Op::MatMul(a, b) => {
            let (av, bv) = (values.get(*a), values.get(*b));
            let (n, k) = as_matrix("matmul", av)?;
            let m = bv.shape()[1];
            if need(a) {
                let mut ga = vec![0.0; n * k];
                matmul_bt_into(g.data(), bv.data(), &mut ga, n, k, m);
                accumulate(grads, *a, Tensor::new(av.shape().to_vec(), ga)?);
            }
            if need(b) {
                let mut gb = vec![0.0; k * m];
                matmul_at_into(av.data(), g.data(), &mut gb, n, k, m);
                accumulate(grads, *b, Tensor::new(vec![k, m], gb)?);
            }
        }
        Op::Relu(a) | Op::Hinge(a) => {
            if need(a) {
                let av = values.get(*a);
                let data = av
                    .data()
                    .iter()
                    .zip(g.data())
                    .map(|(&x, &gv)| if x > 0.0 { gv } else { 0.0 })
                    .collect();
                accumulate(grads, *a, Tensor::new(av.shape().to_vec(), data)?);
            }
        }
        Op::Softmax(a) => {
            if need(a) {
                let (n, k) = as_matrix("softmax", out)?;
                let mut data = vec![0.0; n * k];
                for r in 0..n {
                    let s = &out.data()[r * k..(r + 1) * k];
                    let gr = &g.data()[r * k..(r + 1) * k];
                    let dot: f64 = s.iter().zip(gr).map(|(x, y)| x * y).sum();
                    for j in 0..k {
                        data[r * k + j] = s[j] * (gr[j] - dot);
                    }
                }
                accumulate(grads, *a, Tensor::new(out.shape().to_vec(), data)?);
            }
        }
        Op::Log(a) => {
            if need(a) {
                let av = values.get(*a);
                let data = av
                    .data()
                    .iter()
                    .zip(g.data())
                    .map(|(&p, &gv)| {
                        if p > PROB_FLOOR && p < PROB_CEIL {
                            gv / p
                        } else {
                            0.0
                        }
                    })
                    .collect();
                accumulate(grads, *a, Tensor::new(av.shape().to_vec(), data)?);
            }
        }
        Op::Sum(a) | Op::Mean(a) => {
            if need(a) {
                let av = values.get(*a);
                let mut gv = g.data()[0];
                if let Op::Mean(_) = op {
                    gv /= av.len() as f64;
                }
                accumulate(grads, *a, Tensor::filled(av.shape(), gv));
            }
        }
        Op::Add(a, b) | Op::Sub(a, b) => {
            if need(a) {
                accumulate(grads, *a, g.clone());
            }
            if need(b) {
                let mut gb = g.clone();
                if let Op::Sub(..) = op {
                    gb.data_mut().iter_mut().for_each(|x| *x = -*x);
                }
                accumulate(grads, *b, gb);
            }
        }
        Op::Mul(a, b) => {
            let (av, bv) = (values.get(*a), values.get(*b));
            if need(a) {
                let data = g.data().iter().zip(bv.data()).map(|(x, y)| x * y).collect();
                accumulate(grads, *a, Tensor::new(av.shape().to_vec(), data)?);
            }
            if need(b) {
                let data = g.data().iter().zip(av.data()).map(|(x, y)| x * y).collect();
                accumulate(grads, *b, Tensor::new(bv.shape().to_vec(), data)?);
            }
        }
        Op::Scale(a, c) => {
            if need(a) {
                let data = g.data().iter().map(|x| x * c).collect();
                accumulate(grads, *a, Tensor::new(g.shape().to_vec(), data)?);
            }
        }
        Op::SqDist(a, b) => {
            let (av, bv) = (values.get(*a), values.get(*b));
            let (n, d) = as_matrix("sqdist", av)?;
            let mut ga = vec![0.0; n * d];
            for r in 0..n {
                let gr = g.data()[r];
                for j in 0..d {
                    let k = r * d + j;
                    ga[k] = 2.0 * (av.data()[k] - bv.data()[k]) * gr;
                }
            }
            if need(b) {
                let gb = ga.iter().map(|x| -x).collect();
                accumulate(grads, *b, Tensor::new(bv.shape().to_vec(), gb)?);
            }
            if need(a) {
                accumulate(grads, *a, Tensor::new(av.shape().to_vec(), ga)?);
            }
        }
        Op::Concat(a, b) => {
            let (av, bv) = (values.get(*a), values.get(*b));
            let (n, ca) = as_matrix("concat", av)?;
            let cb = bv.cols();
            let c = ca + cb;
            if need(a) {
                let mut data = Vec::with_capacity(n * ca);
                for r in 0..n {
                    data.extend_from_slice(&g.data()[r * c..r * c + ca]);
                }
                accumulate(grads, *a, Tensor::new(av.shape().to_vec(), data)?);
            }
            if need(b) {
                let mut data = Vec::with_capacity(n * cb);
                for r in 0..n {
                    data.extend_from_slice(&g.data()[r * c + ca..(r + 1) * c]);
                }
                accumulate(grads, *b, Tensor::new(bv.shape().to_vec(), data)?);
            }
        }
    }
    Ok(())
}
