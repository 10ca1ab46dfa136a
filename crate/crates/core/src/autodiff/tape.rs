//! Dynamic reverse-mode tape.
//!
//! Every primitive appends a node holding its forward value and the parent
//! ids needed by its backward rule. Node ids are assigned in creation order,
//! so walking the ids downwards is a valid reverse topological order.

use std::cell::RefCell;
use std::rc::Rc;

use nalgebra::DMatrix;

use super::tensor::{broadcast_shape, for_each_broadcast, matmul_raw, transpose_raw, Tensor};
use crate::error::{Error, Result};
use crate::linalg;

/// Magnitude cap on the pairwise `1/(λᵢ−λⱼ)` factors in the eigen backward rule.
pub const EIGEN_GAP_CLAMP: f64 = 1e12;

pub const DEFAULT_LEAKY_SLOPE: f64 = 0.01;

#[derive(Debug)]
struct EighSaved {
    values: Vec<f64>,
    vectors: Vec<f64>,
    n: usize,
}

#[derive(Debug)]
enum Op {
    Leaf,
    Add(usize, usize),
    Sub(usize, usize),
    Mul(usize, usize),
    Div(usize, usize),
    Neg(usize),
    Scale(usize, f64),
    AddScalar(usize),
    MatMul(usize, usize),
    Transpose(usize),
    Sum(usize),
    SumAxis(usize),
    Concat(Vec<usize>, usize),
    Slice { src: usize, axis: usize, start: usize },
    Gather(usize, Vec<usize>),
    Tanh(usize),
    Sigmoid(usize),
    Softplus(usize),
    LeakyRelu(usize, f64),
    Sqrt(usize),
    Log(usize),
    Exp(usize),
    Square(usize),
    Recip(usize),
    Reshape(usize),
    BroadcastTo(usize),
    EighValues(usize, Rc<EighSaved>),
    EighVectors(usize, Rc<EighSaved>),
}

struct Node {
    value: Rc<Tensor>,
    op: Op,
    requires_grad: bool,
}

/// Records primitive applications for one backward pass.
#[derive(Default)]
pub struct Tape {
    nodes: RefCell<Vec<Node>>,
}

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy)]
pub struct Var<'t> {
    tape: &'t Tape,
    id: usize,
}

impl std::fmt::Debug for Var<'_> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Var").field("id", &self.id).field("shape", &self.shape()).finish()
    }
}

/// Gradients of a scalar output with respect to every leaf that requires them.
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    pub fn get(&self, var: Var<'_>) -> Option<&Tensor> {
        self.grads.get(var.id).and_then(|g| g.as_ref())
    }

    /// Gradient of `var`, or zeros of its shape when no path reached it.
    pub fn get_or_zeros(&self, var: Var<'_>) -> Tensor {
        self.get(var).cloned().unwrap_or_else(|| Tensor::zeros(var.shape().as_slice()))
    }
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Trainable leaf.
    pub fn param(&self, value: Tensor) -> Var<'_> {
        self.push(value, Op::Leaf, true)
    }

    /// Leaf that never receives a gradient.
    pub fn constant(&self, value: Tensor) -> Var<'_> {
        self.push(value, Op::Leaf, false)
    }

    pub fn scalar(&self, value: f64) -> Var<'_> {
        self.constant(Tensor::scalar(value))
    }

    fn push(&self, value: Tensor, op: Op, requires_grad: bool) -> Var<'_> {
        let mut nodes = self.nodes.borrow_mut();
        nodes.push(Node { value: Rc::new(value), op, requires_grad });
        Var { tape: self, id: nodes.len() - 1 }
    }

    fn value(&self, id: usize) -> Rc<Tensor> {
        Rc::clone(&self.nodes.borrow()[id].value)
    }

    fn requires(&self, id: usize) -> bool {
        self.nodes.borrow()[id].requires_grad
    }

    /// Concatenates along `axis`; all other dimensions must agree.
    pub fn concat<'t>(&'t self, parts: &[Var<'t>], axis: usize) -> Result<Var<'t>> {
        let first = parts.first().ok_or_else(|| Error::Shape("concat of nothing".into()))?;
        let base = first.shape();
        if axis >= base.len() {
            return Err(Error::Shape(format!("concat axis {axis} out of range for {base:?}")));
        }
        let values: Vec<Rc<Tensor>> = parts.iter().map(|p| p.value()).collect();
        let mut total = 0;
        for v in &values {
            let s = v.shape();
            if s.len() != base.len() || s.iter().zip(&base).enumerate().any(|(k, (a, b))| k != axis && a != b) {
                return Err(Error::Shape(format!("concat mismatch {s:?} vs {base:?}")));
            }
            total += s[axis];
        }
        let outer: usize = base[..axis].iter().product();
        let inner: usize = base[axis + 1..].iter().product();
        let mut data = Vec::with_capacity(outer * total * inner);
        for o in 0..outer {
            for v in &values {
                let d = v.shape()[axis];
                data.extend_from_slice(&v.data()[o * d * inner..(o + 1) * d * inner]);
            }
        }
        let mut shape = base.clone();
        shape[axis] = total;
        let requires = parts.iter().any(|p| self.requires(p.id));
        let ids = parts.iter().map(|p| p.id).collect();
        Ok(self.push(Tensor::new(&shape, data)?, Op::Concat(ids, axis), requires))
    }

    /// Reverse sweep from a single-element `output`.
    pub fn backward(&self, output: Var<'_>) -> Result<Gradients> {
        let nodes = self.nodes.borrow();
        let out_node = &nodes[output.id];
        if out_node.value.len() != 1 {
            return Err(Error::Shape(format!("backward needs a scalar output, got shape {:?}", out_node.value.shape())));
        }
        let mut grads: Vec<Option<Tensor>> = vec![None; output.id + 1];
        grads[output.id] = Some(Tensor::filled(out_node.value.shape(), 1.0));

        for id in (0..=output.id).rev() {
            let node = &nodes[id];
            if !node.requires_grad {
                continue;
            }
            if matches!(node.op, Op::Leaf) {
                continue;
            }
            let Some(g) = grads[id].take() else { continue };
            backward_node(&nodes, node, &g, &mut grads)?;
        }
        // Drop gradients of intermediate nodes that were never consumed.
        for (id, slot) in grads.iter_mut().enumerate() {
            if !matches!(nodes[id].op, Op::Leaf) || !nodes[id].requires_grad {
                *slot = None;
            }
        }
        Ok(Gradients { grads })
    }
}

fn accumulate(grads: &mut [Option<Tensor>], nodes: &[Node], id: usize, g: Tensor) {
    if !nodes[id].requires_grad {
        return;
    }
    match &mut grads[id] {
        Some(existing) => existing.add_assign(&g),
        slot @ None => *slot = Some(g),
    }
}

/// Sums a broadcast gradient back down to `target` shape.
fn reduce_to(g: &Tensor, target: &[usize]) -> Tensor {
    if g.shape() == target {
        return g.clone();
    }
    let mut acc = Tensor::zeros(target);
    let data = acc.data_mut();
    let gd = g.data();
    for_each_broadcast(target, target, g.shape(), |o, off, _| data[off] += gd[o]);
    acc
}

fn zip_map(a: &Tensor, b: &Tensor, f: impl Fn(f64, f64) -> f64) -> Tensor {
    let data = a.data().iter().zip(b.data()).map(|(&x, &y)| f(x, y)).collect();
    Tensor::new(a.shape(), data).expect("same shape")
}

fn backward_node(nodes: &[Node], node: &Node, g: &Tensor, grads: &mut [Option<Tensor>]) -> Result<()> {
    let val = |id: usize| -> &Tensor { &nodes[id].value };
    let y = &node.value;
    match &node.op {
        Op::Leaf => {}
        Op::Add(a, b) => {
            accumulate(grads, nodes, *a, reduce_to(g, val(*a).shape()));
            accumulate(grads, nodes, *b, reduce_to(g, val(*b).shape()));
        }
        Op::Sub(a, b) => {
            accumulate(grads, nodes, *a, reduce_to(g, val(*a).shape()));
            accumulate(grads, nodes, *b, reduce_to(&g.map(|x| -x), val(*b).shape()));
        }
        Op::Mul(a, b) | Op::Div(a, b) => {
            let (av, bv) = (val(*a), val(*b));
            let mut ga = Tensor::zeros(av.shape());
            let mut gb = Tensor::zeros(bv.shape());
            let (gad, gbd) = (ga.data_mut(), gb.data_mut());
            let (ad, bd, gd) = (av.data(), bv.data(), g.data());
            let is_mul = matches!(node.op, Op::Mul(..));
            for_each_broadcast(av.shape(), bv.shape(), g.shape(), |o, oa, ob| {
                if is_mul {
                    gad[oa] += gd[o] * bd[ob];
                    gbd[ob] += gd[o] * ad[oa];
                } else {
                    gad[oa] += gd[o] / bd[ob];
                    gbd[ob] -= gd[o] * ad[oa] / (bd[ob] * bd[ob]);
                }
            });
            accumulate(grads, nodes, *a, ga);
            accumulate(grads, nodes, *b, gb);
        }
        Op::Neg(a) => accumulate(grads, nodes, *a, g.map(|x| -x)),
        Op::Scale(a, c) => accumulate(grads, nodes, *a, g.map(|x| x * c)),
        Op::AddScalar(a) => accumulate(grads, nodes, *a, g.clone()),
        Op::MatMul(a, b) => {
            let (av, bv) = (val(*a), val(*b));
            let (m, k) = av.dims2()?;
            let (_, n) = bv.dims2()?;
            if nodes[*a].requires_grad {
                let bt = transpose_raw(bv.data(), k, n);
                let ga = matmul_raw(g.data(), &bt, m, n, k);
                accumulate(grads, nodes, *a, Tensor::new(&[m, k], ga)?);
            }
            if nodes[*b].requires_grad {
                let at = transpose_raw(av.data(), m, k);
                let gb = matmul_raw(&at, g.data(), k, m, n);
                accumulate(grads, nodes, *b, Tensor::new(&[k, n], gb)?);
            }
        }
        Op::Transpose(a) => {
            let (r, c) = g.dims2()?;
            accumulate(grads, nodes, *a, Tensor::new(&[c, r], transpose_raw(g.data(), r, c))?);
        }
        Op::Sum(a) => {
            let s = g.item();
            accumulate(grads, nodes, *a, Tensor::filled(val(*a).shape(), s));
        }
        Op::SumAxis(a) => {
            // keep-dim sum: broadcast the reduced gradient back out
            let target = val(*a).shape().to_vec();
            let mut out = Tensor::zeros(&target);
            let od = out.data_mut();
            let gd = g.data();
            for_each_broadcast(&target, g.shape(), &target, |o, _, ob| od[o] += gd[ob]);
            accumulate(grads, nodes, *a, out);
        }
        Op::BroadcastTo(a) => {
            accumulate(grads, nodes, *a, reduce_to(g, val(*a).shape()));
        }
        Op::Concat(ids, axis) => {
            let shape = g.shape();
            let outer: usize = shape[..*axis].iter().product();
            let inner: usize = shape[axis + 1..].iter().product();
            let total = shape[*axis];
            let mut offset = 0;
            for &id in ids {
                let ps = val(id).shape().to_vec();
                let d = ps[*axis];
                if nodes[id].requires_grad {
                    let mut data = Vec::with_capacity(outer * d * inner);
                    for o in 0..outer {
                        let base = (o * total + offset) * inner;
                        data.extend_from_slice(&g.data()[base..base + d * inner]);
                    }
                    accumulate(grads, nodes, id, Tensor::new(&ps, data)?);
                }
                offset += d;
            }
        }
        Op::Slice { src, axis, start } => {
            let ps = val(*src).shape().to_vec();
            let outer: usize = ps[..*axis].iter().product();
            let inner: usize = ps[axis + 1..].iter().product();
            let full = ps[*axis];
            let len = g.shape()[*axis];
            let mut out = Tensor::zeros(&ps);
            let od = out.data_mut();
            for o in 0..outer {
                let dst = (o * full + start) * inner;
                let srcoff = o * len * inner;
                od[dst..dst + len * inner].copy_from_slice(&g.data()[srcoff..srcoff + len * inner]);
            }
            accumulate(grads, nodes, *src, out);
        }
        Op::Gather(a, idx) => {
            let ps = val(*a).shape().to_vec();
            let inner: usize = ps[1..].iter().product();
            let mut out = Tensor::zeros(&ps);
            let od = out.data_mut();
            for (row, &src) in idx.iter().enumerate() {
                for j in 0..inner {
                    od[src * inner + j] += g.data()[row * inner + j];
                }
            }
            accumulate(grads, nodes, *a, out);
        }
        Op::Tanh(a) => accumulate(grads, nodes, *a, zip_map(g, y, |g, t| g * (1.0 - t * t))),
        Op::Sigmoid(a) => accumulate(grads, nodes, *a, zip_map(g, y, |g, s| g * s * (1.0 - s))),
        Op::Softplus(a) => accumulate(grads, nodes, *a, zip_map(g, val(*a), |g, x| g * sigmoid(x))),
        Op::LeakyRelu(a, slope) => {
            let s = *slope;
            accumulate(grads, nodes, *a, zip_map(g, val(*a), |g, x| if x > 0.0 { g } else { g * s }))
        }
        Op::Sqrt(a) => accumulate(grads, nodes, *a, zip_map(g, y, |g, r| 0.5 * g / r)),
        Op::Log(a) => accumulate(grads, nodes, *a, zip_map(g, val(*a), |g, x| g / x)),
        Op::Exp(a) => accumulate(grads, nodes, *a, zip_map(g, y, |g, e| g * e)),
        Op::Square(a) => accumulate(grads, nodes, *a, zip_map(g, val(*a), |g, x| 2.0 * g * x)),
        Op::Recip(a) => accumulate(grads, nodes, *a, zip_map(g, y, |g, r| -g * r * r)),
        Op::Reshape(a) => {
            let shape = val(*a).shape().to_vec();
            accumulate(grads, nodes, *a, g.clone().reshaped(&shape)?);
        }
        Op::EighValues(a, saved) => {
            // Ā = V diag(ḡ) Vᵀ
            let n = saved.n;
            let v = &saved.vectors;
            let mut out = vec![0.0; n * n];
            for i in 0..n {
                for j in 0..n {
                    let mut s = 0.0;
                    for k in 0..n {
                        s += v[i * n + k] * g.data()[k] * v[j * n + k];
                    }
                    out[i * n + j] = s;
                }
            }
            accumulate(grads, nodes, *a, symmetric_part(out, n)?);
        }
        Op::EighVectors(a, saved) => {
            // Ā = V (F ∘ (Vᵀ Ḡ)) Vᵀ with F_ij = 1/(λ_j − λ_i), zero diagonal
            let n = saved.n;
            let v = &saved.vectors;
            let vt = transpose_raw(v, n, n);
            let mut inner = matmul_raw(&vt, g.data(), n, n, n);
            for i in 0..n {
                for j in 0..n {
                    let f = if i == j {
                        0.0
                    } else {
                        let gap = saved.values[j] - saved.values[i];
                        (1.0 / gap).clamp(-EIGEN_GAP_CLAMP, EIGEN_GAP_CLAMP)
                    };
                    inner[i * n + j] *= f;
                }
            }
            let tmp = matmul_raw(v, &inner, n, n, n);
            let out = matmul_raw(&tmp, &vt, n, n, n);
            accumulate(grads, nodes, *a, symmetric_part(out, n)?);
        }
    }
    Ok(())
}

fn symmetric_part(mut m: Vec<f64>, n: usize) -> Result<Tensor> {
    for i in 0..n {
        for j in (i + 1)..n {
            let s = 0.5 * (m[i * n + j] + m[j * n + i]);
            m[i * n + j] = s;
            m[j * n + i] = s;
        }
    }
    Tensor::new(&[n, n], m)
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `log(1 + eˣ)` without overflow for large `x`.
pub fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

/// Inverse of [`softplus`] for `y > 0`.
pub fn softplus_inverse(y: f64) -> f64 {
    if y > 30.0 {
        y + (-(-y).exp_m1()).ln()
    } else {
        y.exp_m1().ln()
    }
}

impl<'t> Var<'t> {
    pub fn id(&self) -> usize {
        self.id
    }

    pub fn tape(&self) -> &'t Tape {
        self.tape
    }

    pub fn value(&self) -> Rc<Tensor> {
        self.tape.value(self.id)
    }

    pub fn shape(&self) -> Vec<usize> {
        self.tape.nodes.borrow()[self.id].value.shape().to_vec()
    }

    pub fn item(&self) -> f64 {
        self.value().item()
    }

    pub fn requires_grad(&self) -> bool {
        self.tape.requires(self.id)
    }

    fn unary(&self, op: Op, f: impl Fn(f64) -> f64) -> Var<'t> {
        let value = self.value().map(f);
        self.tape.push(value, op, self.requires_grad())
    }

    fn binary(&self, other: Var<'t>, op: Op, f: impl Fn(f64, f64) -> f64) -> Result<Var<'t>> {
        let (a, b) = (self.value(), other.value());
        let out_shape = broadcast_shape(a.shape(), b.shape())?;
        let value = if a.shape() == b.shape() {
            zip_map(&a, &b, f)
        } else {
            let mut data = vec![0.0; out_shape.iter().product()];
            let (ad, bd) = (a.data(), b.data());
            for_each_broadcast(a.shape(), b.shape(), &out_shape, |o, oa, ob| {
                data[o] = f(ad[oa], bd[ob]);
            });
            Tensor::new(&out_shape, data)?
        };
        let requires = self.requires_grad() || other.requires_grad();
        Ok(self.tape.push(value, op, requires))
    }

    pub fn add(&self, other: Var<'t>) -> Result<Var<'t>> {
        self.binary(other, Op::Add(self.id, other.id), |a, b| a + b)
    }

    pub fn sub(&self, other: Var<'t>) -> Result<Var<'t>> {
        self.binary(other, Op::Sub(self.id, other.id), |a, b| a - b)
    }

    pub fn mul(&self, other: Var<'t>) -> Result<Var<'t>> {
        self.binary(other, Op::Mul(self.id, other.id), |a, b| a * b)
    }

    pub fn div(&self, other: Var<'t>) -> Result<Var<'t>> {
        self.binary(other, Op::Div(self.id, other.id), |a, b| a / b)
    }

    pub fn neg(&self) -> Var<'t> {
        self.unary(Op::Neg(self.id), |x| -x)
    }

    pub fn scale(&self, c: f64) -> Var<'t> {
        self.unary(Op::Scale(self.id, c), |x| c * x)
    }

    pub fn add_scalar(&self, c: f64) -> Var<'t> {
        self.unary(Op::AddScalar(self.id), |x| x + c)
    }

    pub fn matmul(&self, other: Var<'t>) -> Result<Var<'t>> {
        let (a, b) = (self.value(), other.value());
        let (m, k) = a.dims2()?;
        let (k2, n) = b.dims2()?;
        if k != k2 {
            return Err(Error::Shape(format!("matmul {:?} x {:?}", a.shape(), b.shape())));
        }
        let data = matmul_raw(a.data(), b.data(), m, k, n);
        let requires = self.requires_grad() || other.requires_grad();
        Ok(self.tape.push(Tensor::new(&[m, n], data)?, Op::MatMul(self.id, other.id), requires))
    }

    pub fn t(&self) -> Result<Var<'t>> {
        let a = self.value();
        let (r, c) = a.dims2()?;
        let value = Tensor::new(&[c, r], transpose_raw(a.data(), r, c))?;
        Ok(self.tape.push(value, Op::Transpose(self.id), self.requires_grad()))
    }

    pub fn sum(&self) -> Var<'t> {
        let s = self.value().data().iter().sum();
        self.tape.push(Tensor::scalar(s), Op::Sum(self.id), self.requires_grad())
    }

    pub fn mean(&self) -> Var<'t> {
        let n = self.value().len() as f64;
        self.sum().scale(1.0 / n)
    }

    /// Sum over `axis`, keeping it as a size-1 dimension.
    pub fn sum_axis(&self, axis: usize) -> Result<Var<'t>> {
        let a = self.value();
        let shape = a.shape().to_vec();
        if axis >= shape.len() {
            return Err(Error::Shape(format!("axis {axis} out of range for {shape:?}")));
        }
        let outer: usize = shape[..axis].iter().product();
        let inner: usize = shape[axis + 1..].iter().product();
        let d = shape[axis];
        let mut data = vec![0.0; outer * inner];
        for o in 0..outer {
            for k in 0..d {
                for i in 0..inner {
                    data[o * inner + i] += a.data()[(o * d + k) * inner + i];
                }
            }
        }
        let mut out_shape = shape;
        out_shape[axis] = 1;
        Ok(self.tape.push(Tensor::new(&out_shape, data)?, Op::SumAxis(self.id), self.requires_grad()))
    }

    pub fn mean_axis(&self, axis: usize) -> Result<Var<'t>> {
        let d = self.shape()[axis] as f64;
        Ok(self.sum_axis(axis)?.scale(1.0 / d))
    }

    /// `len` entries along `axis` starting at `start`.
    pub fn slice(&self, axis: usize, start: usize, len: usize) -> Result<Var<'t>> {
        let a = self.value();
        let shape = a.shape().to_vec();
        if axis >= shape.len() || start + len > shape[axis] {
            return Err(Error::Shape(format!("slice axis {axis} [{start}, {}) out of range for {shape:?}", start + len)));
        }
        let outer: usize = shape[..axis].iter().product();
        let inner: usize = shape[axis + 1..].iter().product();
        let d = shape[axis];
        let mut data = Vec::with_capacity(outer * len * inner);
        for o in 0..outer {
            let base = (o * d + start) * inner;
            data.extend_from_slice(&a.data()[base..base + len * inner]);
        }
        let mut out_shape = shape;
        out_shape[axis] = len;
        let op = Op::Slice { src: self.id, axis, start };
        Ok(self.tape.push(Tensor::new(&out_shape, data)?, op, self.requires_grad()))
    }

    /// Rows (axis 0) selected by `indices`, in that order.
    pub fn gather(&self, indices: &[usize]) -> Result<Var<'t>> {
        let a = self.value();
        let shape = a.shape().to_vec();
        if shape.is_empty() {
            return Err(Error::Shape("gather on a scalar".into()));
        }
        let inner: usize = shape[1..].iter().product();
        let mut data = Vec::with_capacity(indices.len() * inner);
        for &i in indices {
            if i >= shape[0] {
                return Err(Error::Shape(format!("gather index {i} out of range {}", shape[0])));
            }
            data.extend_from_slice(&a.data()[i * inner..(i + 1) * inner]);
        }
        let mut out_shape = shape;
        out_shape[0] = indices.len();
        let op = Op::Gather(self.id, indices.to_vec());
        Ok(self.tape.push(Tensor::new(&out_shape, data)?, op, self.requires_grad()))
    }

    pub fn reshape(&self, shape: &[usize]) -> Result<Var<'t>> {
        let value = (*self.value()).clone().reshaped(shape)?;
        Ok(self.tape.push(value, Op::Reshape(self.id), self.requires_grad()))
    }

    pub fn broadcast_to(&self, shape: &[usize]) -> Result<Var<'t>> {
        let a = self.value();
        let out = broadcast_shape(a.shape(), shape)?;
        if out != shape {
            return Err(Error::Shape(format!("cannot broadcast {:?} to {shape:?}", a.shape())));
        }
        let mut data = vec![0.0; out.iter().product()];
        for_each_broadcast(a.shape(), a.shape(), &out, |o, oa, _| data[o] = a.data()[oa]);
        Ok(self.tape.push(Tensor::new(&out, data)?, Op::BroadcastTo(self.id), self.requires_grad()))
    }

    pub fn tanh(&self) -> Var<'t> {
        self.unary(Op::Tanh(self.id), f64::tanh)
    }

    pub fn sigmoid(&self) -> Var<'t> {
        self.unary(Op::Sigmoid(self.id), sigmoid)
    }

    pub fn softplus(&self) -> Var<'t> {
        self.unary(Op::Softplus(self.id), softplus)
    }

    pub fn leaky_relu(&self, slope: f64) -> Var<'t> {
        self.unary(Op::LeakyRelu(self.id, slope), |x| if x > 0.0 { x } else { slope * x })
    }

    pub fn sqrt(&self) -> Var<'t> {
        self.unary(Op::Sqrt(self.id), f64::sqrt)
    }

    pub fn log(&self) -> Var<'t> {
        self.unary(Op::Log(self.id), f64::ln)
    }

    pub fn exp(&self) -> Var<'t> {
        self.unary(Op::Exp(self.id), f64::exp)
    }

    pub fn square(&self) -> Var<'t> {
        self.unary(Op::Square(self.id), |x| x * x)
    }

    pub fn recip(&self) -> Var<'t> {
        self.unary(Op::Recip(self.id), |x| 1.0 / x)
    }

    /// Differentiable symmetric eigendecomposition.
    ///
    /// Returns ascending eigenvalues `[n]` and eigenvectors `[n, n]` (as
    /// columns) with each eigenvector's largest-magnitude entry positive.
    pub fn eigh(&self) -> Result<(Var<'t>, Var<'t>)> {
        let a = self.value();
        let (n, m) = a.dims2()?;
        if n != m {
            return Err(Error::Shape(format!("eigh needs a square matrix, got {:?}", a.shape())));
        }
        let dec = linalg::eigh(&DMatrix::from_row_slice(n, n, a.data()))?;
        let vectors = Tensor::from_dmatrix(&dec.vectors);
        let saved = Rc::new(EighSaved { values: dec.values.clone(), vectors: vectors.data().to_vec(), n });
        let requires = self.requires_grad();
        let vals = self.tape.push(Tensor::vector(dec.values), Op::EighValues(self.id, Rc::clone(&saved)), requires);
        let vecs = self.tape.push(vectors, Op::EighVectors(self.id, saved), requires);
        Ok((vals, vecs))
    }
}
