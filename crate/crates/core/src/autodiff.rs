//! Reverse-mode automatic differentiation over a recorded tape.
//!
//! Every operation appends a node holding its forward value and, when the
//! tape is recording, a closure mapping the output gradient to gradients of
//! its inputs. [`Tape::backward`] walks the nodes in reverse creation order
//! exactly once. Node ids increase strictly, so the tape is a DAG by
//! construction.

use std::collections::BTreeMap;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::sparse::SparseMatrix;
use crate::tensor::{gemm, Tensor};

/// Index of a trainable tensor inside a parameter set.
pub type ParamId = usize;

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Var(usize);

impl Var {
    pub fn id(self) -> usize {
        self.0
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum OpKind {
    Constant,
    Parameter(ParamId),
    MatMul,
    MatMulNt,
    Add,
    AddRow,
    Sub,
    Mul,
    Scale,
    Square,
    Sum,
    Mean,
    Concat,
    Slice,
    Reshape,
    Elementwise(&'static str),
    SparseLinear,
    Custom(&'static str),
}

/// Maps `(input values, output value, output gradient)` to one optional
/// gradient per input.
pub type BackwardFn = Box<dyn Fn(&[&Tensor], &Tensor, &Tensor) -> Vec<Option<Tensor>>>;

struct Node {
    kind: OpKind,
    inputs: Vec<usize>,
    value: Tensor,
    backward: Option<BackwardFn>,
}

/// A scalar function with its first derivative, applied elementwise.
pub trait Elementwise {
    fn name(&self) -> &'static str;
    /// Returns `(f(x), f'(x))`.
    fn eval(&self, x: f64) -> (f64, f64);
}

pub struct Tape {
    nodes: Vec<Node>,
    recording: bool,
}

impl Default for Tape {
    fn default() -> Self {
        Self::new()
    }
}

/// Gradients produced by [`Tape::backward`].
#[derive(Debug, Clone, Default)]
pub struct Gradients {
    params: BTreeMap<ParamId, Tensor>,
    leaves: BTreeMap<usize, Tensor>,
}

impl Gradients {
    /// Gradient for a registered parameter (zeros when unreachable).
    pub fn param(&self, id: ParamId) -> Option<&Tensor> {
        self.params.get(&id)
    }

    pub fn params(&self) -> &BTreeMap<ParamId, Tensor> {
        &self.params
    }

    pub fn into_params(self) -> BTreeMap<ParamId, Tensor> {
        self.params
    }

    /// Gradient for any leaf node (constant or parameter).
    pub fn wrt(&self, v: Var) -> Option<&Tensor> {
        self.leaves.get(&v.0)
    }
}

fn shape_err(op: &str, a: &[usize], b: &[usize]) -> Error {
    Error::Shape(format!("{op}: {a:?} vs {b:?}"))
}

impl Tape {
    /// A recording tape.
    pub fn new() -> Self {
        Self { nodes: Vec::new(), recording: true }
    }

    /// A tape that computes forward values only.
    pub fn inference() -> Self {
        Self { nodes: Vec::new(), recording: false }
    }

    pub fn is_recording(&self) -> bool {
        self.recording
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn kind(&self, v: Var) -> &OpKind {
        &self.nodes[v.0].kind
    }

    pub fn inputs(&self, v: Var) -> &[usize] {
        &self.nodes[v.0].inputs
    }

    fn push(&mut self, kind: OpKind, inputs: Vec<usize>, value: Tensor, backward: Option<BackwardFn>) -> Var {
        let backward = if self.recording { backward } else { None };
        self.nodes.push(Node { kind, inputs, value, backward });
        Var(self.nodes.len() - 1)
    }

    pub fn constant(&mut self, value: Tensor) -> Var {
        self.push(OpKind::Constant, vec![], value, None)
    }

    pub fn param(&mut self, id: ParamId, value: Tensor) -> Var {
        self.push(OpKind::Parameter(id), vec![], value, None)
    }

    /// Records an operation whose forward value and local gradient are
    /// computed by the caller.
    pub fn custom(&mut self, name: &'static str, inputs: &[Var], value: Tensor, backward: BackwardFn) -> Var {
        let ids = inputs.iter().map(|v| v.0).collect();
        self.push(OpKind::Custom(name), ids, value, Some(backward))
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (sa, sb) = (self.value(a).shape(), self.value(b).shape());
        if sa.len() != 2 || sb.len() != 2 || sa[1] != sb[0] {
            return Err(shape_err("matmul", sa, sb));
        }
        let (m, k, n) = (sa[0], sa[1], sb[1]);
        let mut out = vec![0.0; m * n];
        gemm(m, k, n, self.value(a).data(), false, self.value(b).data(), false, &mut out, 0.0);
        let value = Tensor::matrix(m, n, out);
        Ok(self.push(
            OpKind::MatMul,
            vec![a.0, b.0],
            value,
            Some(Box::new(move |inp, _, g| {
                let mut ga = vec![0.0; m * k];
                gemm(m, n, k, g.data(), false, inp[1].data(), true, &mut ga, 0.0);
                let mut gb = vec![0.0; k * n];
                gemm(k, m, n, inp[0].data(), true, g.data(), false, &mut gb, 0.0);
                vec![Some(Tensor::matrix(m, k, ga)), Some(Tensor::matrix(k, n, gb))]
            })),
        ))
    }

    /// `a · bᵀ` with `a: [m, k]`, `b: [n, k]`.
    pub fn matmul_nt(&mut self, a: Var, b: Var) -> Result<Var> {
        let (sa, sb) = (self.value(a).shape(), self.value(b).shape());
        if sa.len() != 2 || sb.len() != 2 || sa[1] != sb[1] {
            return Err(shape_err("matmul_nt", sa, sb));
        }
        let (m, k, n) = (sa[0], sa[1], sb[0]);
        let mut out = vec![0.0; m * n];
        gemm(m, k, n, self.value(a).data(), false, self.value(b).data(), true, &mut out, 0.0);
        let value = Tensor::matrix(m, n, out);
        Ok(self.push(
            OpKind::MatMulNt,
            vec![a.0, b.0],
            value,
            Some(Box::new(move |inp, _, g| {
                let mut ga = vec![0.0; m * k];
                gemm(m, n, k, g.data(), false, inp[1].data(), false, &mut ga, 0.0);
                let mut gb = vec![0.0; n * k];
                gemm(n, m, k, g.data(), true, inp[0].data(), false, &mut gb, 0.0);
                vec![Some(Tensor::matrix(m, k, ga)), Some(Tensor::matrix(n, k, gb))]
            })),
        ))
    }

    fn binary_broadcast_ok(a: &Tensor, b: &Tensor) -> bool {
        a.shape() == b.shape() || b.len() == 1
    }

    /// Elementwise sum; `b` may be a single-element tensor.
    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.add_sub(a, b, 1.0)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.add_sub(a, b, -1.0)
    }

    fn add_sub(&mut self, a: Var, b: Var, sign: f64) -> Result<Var> {
        let (ta, tb) = (self.value(a), self.value(b));
        if !Self::binary_broadcast_ok(ta, tb) {
            return Err(shape_err(if sign > 0.0 { "add" } else { "sub" }, ta.shape(), tb.shape()));
        }
        let value = if tb.len() == 1 && ta.len() != 1 {
            let s = sign * tb.item();
            ta.map(|x| x + s)
        } else {
            ta.zip_map(tb, |x, y| x + sign * y)
        };
        let b_shape = tb.shape().to_vec();
        let kind = if sign > 0.0 { OpKind::Add } else { OpKind::Sub };
        Ok(self.push(
            kind,
            vec![a.0, b.0],
            value,
            Some(Box::new(move |inp, _, g| {
                let gb = if inp[1].len() == 1 && g.len() != 1 {
                    Tensor::new(b_shape.clone(), vec![sign * g.sum()]).unwrap()
                } else {
                    g.map(|x| sign * x)
                };
                vec![Some(g.clone()), Some(gb)]
            })),
        ))
    }

    /// Adds a `[n]` row vector to every row of `a: [.., n]`.
    pub fn add_row(&mut self, a: Var, row: Var) -> Result<Var> {
        let (ta, tr) = (self.value(a), self.value(row));
        let (rows, cols) = ta.as_matrix_dims();
        if tr.rank() != 1 || tr.len() != cols || ta.rank() == 0 {
            return Err(shape_err("add_row", ta.shape(), tr.shape()));
        }
        let mut data = ta.data().to_vec();
        for r in 0..rows {
            for (x, b) in data[r * cols..(r + 1) * cols].iter_mut().zip(tr.data()) {
                *x += b;
            }
        }
        let value = Tensor::new(ta.shape().to_vec(), data)?;
        Ok(self.push(
            OpKind::AddRow,
            vec![a.0, row.0],
            value,
            Some(Box::new(move |_, _, g| {
                let mut gr = vec![0.0; cols];
                for r in 0..rows {
                    for (acc, x) in gr.iter_mut().zip(&g.data()[r * cols..(r + 1) * cols]) {
                        *acc += x;
                    }
                }
                vec![Some(g.clone()), Some(Tensor::vector(gr))]
            })),
        ))
    }

    /// Elementwise product. `b` may match `a`, be a single element, or match
    /// `a` with a trailing extent of 1 (broadcast along the last axis).
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ta, tb) = (self.value(a), self.value(b));
        let sa = ta.shape().to_vec();
        let sb = tb.shape().to_vec();
        let trailing =
            sa.len() == sb.len() && !sa.is_empty() && sb[sb.len() - 1] == 1 && sa[..sa.len() - 1] == sb[..sb.len() - 1];
        let mode = if sa == sb {
            0
        } else if tb.len() == 1 {
            1
        } else if trailing {
            2
        } else {
            return Err(shape_err("mul", &sa, &sb));
        };
        let inner = *sa.last().unwrap_or(&1);
        let value = match mode {
            0 => ta.zip_map(tb, |x, y| x * y),
            1 => {
                let s = tb.item();
                ta.map(|x| x * s)
            }
            _ => {
                let mut d = ta.data().to_vec();
                for (chunk, s) in d.chunks_mut(inner).zip(tb.data()) {
                    chunk.iter_mut().for_each(|x| *x *= s);
                }
                Tensor::new(sa.clone(), d)?
            }
        };
        Ok(self.push(
            OpKind::Mul,
            vec![a.0, b.0],
            value,
            Some(Box::new(move |inp, _, g| {
                let (ta, tb) = (inp[0], inp[1]);
                match mode {
                    0 => vec![Some(g.zip_map(tb, |x, y| x * y)), Some(g.zip_map(ta, |x, y| x * y))],
                    1 => {
                        let s = tb.item();
                        let gb: f64 = g.data().iter().zip(ta.data()).map(|(x, y)| x * y).sum();
                        vec![Some(g.map(|x| x * s)), Some(Tensor::new(sb.clone(), vec![gb]).unwrap())]
                    }
                    _ => {
                        let mut ga = g.data().to_vec();
                        let mut gb = vec![0.0; tb.len()];
                        for (((gchunk, achunk), s), out) in
                            ga.chunks_mut(inner).zip(ta.data().chunks(inner)).zip(tb.data()).zip(gb.iter_mut())
                        {
                            *out = gchunk.iter().zip(achunk).map(|(x, y)| x * y).sum();
                            gchunk.iter_mut().for_each(|x| *x *= s);
                        }
                        vec![Some(Tensor::new(sa.clone(), ga).unwrap()), Some(Tensor::new(sb.clone(), gb).unwrap())]
                    }
                }
            })),
        ))
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Var {
        let value = self.value(a).map(|x| x * c);
        self.push(OpKind::Scale, vec![a.0], value, Some(Box::new(move |_, _, g| vec![Some(g.map(|x| x * c))])))
    }

    pub fn square(&mut self, a: Var) -> Var {
        let value = self.value(a).map(|x| x * x);
        self.push(
            OpKind::Square,
            vec![a.0],
            value,
            Some(Box::new(|inp, _, g| vec![Some(g.zip_map(inp[0], |gx, x| 2.0 * x * gx))])),
        )
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let value = Tensor::scalar(self.value(a).sum());
        self.push(
            OpKind::Sum,
            vec![a.0],
            value,
            Some(Box::new(|inp, _, g| vec![Some(Tensor::full(inp[0].shape(), g.item()))])),
        )
    }

    pub fn mean(&mut self, a: Var) -> Var {
        let t = self.value(a);
        let n = t.len().max(1) as f64;
        let value = Tensor::scalar(t.sum() / n);
        self.push(
            OpKind::Mean,
            vec![a.0],
            value,
            Some(Box::new(move |inp, _, g| vec![Some(Tensor::full(inp[0].shape(), g.item() / n))])),
        )
    }

    /// Mean squared difference between `pred` and `target` (same shape).
    pub fn mse(&mut self, pred: Var, target: Var) -> Result<Var> {
        let diff = self.sub(pred, target)?;
        let sq = self.square(diff);
        Ok(self.mean(sq))
    }

    /// Concatenates rank-2 tensors along `axis` (0 = rows, 1 = columns).
    pub fn concat(&mut self, parts: &[Var], axis: usize) -> Result<Var> {
        if parts.is_empty() || axis > 1 {
            return Err(Error::Shape("concat: need at least one input and axis 0 or 1".into()));
        }
        let shapes: Vec<Vec<usize>> = parts.iter().map(|&v| self.value(v).shape().to_vec()).collect();
        for s in &shapes {
            if s.len() != 2 || s[1 - axis] != shapes[0][1 - axis] {
                return Err(shape_err("concat", &shapes[0], s));
            }
        }
        let extents: Vec<usize> = shapes.iter().map(|s| s[axis]).collect();
        let total: usize = extents.iter().sum();
        let other = shapes[0][1 - axis];
        let value = if axis == 0 {
            let mut d = Vec::with_capacity(total * other);
            for &v in parts {
                d.extend_from_slice(self.value(v).data());
            }
            Tensor::matrix(total, other, d)
        } else {
            let mut d = Vec::with_capacity(total * other);
            for r in 0..other {
                for (&v, &w) in parts.iter().zip(&extents) {
                    d.extend_from_slice(&self.value(v).data()[r * w..(r + 1) * w]);
                }
            }
            Tensor::matrix(other, total, d)
        };
        let ids = parts.iter().map(|v| v.0).collect();
        Ok(self.push(
            OpKind::Concat,
            ids,
            value,
            Some(Box::new(move |_, _, g| {
                let mut out = Vec::with_capacity(extents.len());
                let mut offset = 0;
                for &w in &extents {
                    let t = if axis == 0 {
                        Tensor::matrix(w, other, g.data()[offset * other..(offset + w) * other].to_vec())
                    } else {
                        let mut d = Vec::with_capacity(other * w);
                        for r in 0..other {
                            d.extend_from_slice(&g.data()[r * total + offset..r * total + offset + w]);
                        }
                        Tensor::matrix(other, w, d)
                    };
                    out.push(Some(t));
                    offset += w;
                }
                out
            })),
        ))
    }

    /// Slices `[start, end)` along `axis` of a rank-2 tensor.
    pub fn slice(&mut self, a: Var, axis: usize, start: usize, end: usize) -> Result<Var> {
        let t = self.value(a);
        let s = t.shape().to_vec();
        if s.len() != 2 || axis > 1 || start > end || end > s[axis] {
            return Err(Error::Shape(format!("slice [{start}, {end}) on axis {axis} of {s:?}")));
        }
        let (rows, cols) = (s[0], s[1]);
        let w = end - start;
        let value = if axis == 0 {
            Tensor::matrix(w, cols, t.data()[start * cols..end * cols].to_vec())
        } else {
            let mut d = Vec::with_capacity(rows * w);
            for r in 0..rows {
                d.extend_from_slice(&t.data()[r * cols + start..r * cols + end]);
            }
            Tensor::matrix(rows, w, d)
        };
        Ok(self.push(
            OpKind::Slice,
            vec![a.0],
            value,
            Some(Box::new(move |_, _, g| {
                let mut full = vec![0.0; rows * cols];
                if axis == 0 {
                    full[start * cols..end * cols].copy_from_slice(g.data());
                } else {
                    for r in 0..rows {
                        full[r * cols + start..r * cols + end].copy_from_slice(&g.data()[r * w..(r + 1) * w]);
                    }
                }
                vec![Some(Tensor::matrix(rows, cols, full))]
            })),
        ))
    }

    pub fn reshape(&mut self, a: Var, shape: &[usize]) -> Result<Var> {
        let t = self.value(a);
        let old = t.shape().to_vec();
        let value = t.clone().reshape(shape)?;
        Ok(self.push(
            OpKind::Reshape,
            vec![a.0],
            value,
            Some(Box::new(move |_, _, g| vec![Some(g.clone().reshape(&old).unwrap())])),
        ))
    }

    /// Applies `f` elementwise, storing `f'` for the backward pass.
    pub fn map(&mut self, a: Var, f: &dyn Elementwise) -> Var {
        let t = self.value(a);
        let n = t.len();
        let mut vals = Vec::with_capacity(n);
        let mut ders = Vec::with_capacity(if self.recording { n } else { 0 });
        for &x in t.data() {
            let (v, d) = f.eval(x);
            vals.push(v);
            if self.recording {
                ders.push(d);
            }
        }
        let shape = t.shape().to_vec();
        let value = Tensor::new(shape.clone(), vals).unwrap();
        let deriv = Tensor::new(if self.recording { shape } else { vec![0] }, ders).unwrap();
        self.push(
            OpKind::Elementwise(f.name()),
            vec![a.0],
            value,
            Some(Box::new(move |_, _, g| vec![Some(g.zip_map(&deriv, |x, d| x * d))])),
        )
    }

    /// Applies a fixed sparse linear operator to `a: [cols, channels]`.
    pub fn sparse_linear(&mut self, op: &Arc<SparseMatrix>, a: Var) -> Result<Var> {
        let t = self.value(a);
        let (rows, channels) = if t.rank() == 1 { (t.len(), 1) } else { t.as_matrix_dims() };
        if rows != op.cols() {
            return Err(shape_err("sparse_linear", &[op.rows(), op.cols()], t.shape()));
        }
        let y = op.apply(t.data(), channels);
        let value = Tensor::matrix(op.rows(), channels, y);
        let op = Arc::clone(op);
        Ok(self.push(
            OpKind::SparseLinear,
            vec![a.0],
            value,
            Some(Box::new(move |inp, _, g| {
                let x = op.apply_transpose(g.data(), channels);
                vec![Some(Tensor::new(inp[0].shape().to_vec(), x).unwrap())]
            })),
        ))
    }

    /// Reverse pass from a scalar loss.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        let t = self.value(loss);
        if t.len() != 1 {
            return Err(Error::NonScalarLoss(t.shape().to_vec()));
        }
        self.backward_with_seed(loss, Tensor::full(t.shape(), 1.0))
    }

    /// Reverse pass seeded with an arbitrary output cotangent.
    pub fn backward_with_seed(&self, out: Var, seed: Tensor) -> Result<Gradients> {
        if !self.recording {
            return Err(Error::NotRecording);
        }
        if seed.shape() != self.value(out).shape() {
            return Err(shape_err("backward seed", seed.shape(), self.value(out).shape()));
        }
        let mut grads: Vec<Option<Tensor>> = vec![None; out.0 + 1];
        grads[out.0] = Some(seed);
        let mut result = Gradients::default();
        for id in (0..=out.0).rev() {
            let node = &self.nodes[id];
            let Some(g) = grads[id].take() else {
                if let OpKind::Parameter(p) = node.kind {
                    result.params.entry(p).or_insert_with(|| Tensor::zeros(node.value.shape()));
                }
                continue;
            };
            match node.kind {
                OpKind::Parameter(p) => {
                    match result.params.get_mut(&p) {
                        Some(acc) => acc.add_assign(&g),
                        None => {
                            result.params.insert(p, g.clone());
                        }
                    }
                    result.leaves.insert(id, g);
                    continue;
                }
                OpKind::Constant => {
                    result.leaves.insert(id, g);
                    continue;
                }
                _ => {}
            }
            let Some(bw) = &node.backward else { continue };
            let inputs: Vec<&Tensor> = node.inputs.iter().map(|&i| &self.nodes[i].value).collect();
            let local = bw(&inputs, &node.value, &g);
            for (&i, gi) in node.inputs.iter().zip(local) {
                let Some(gi) = gi else { continue };
                match &mut grads[i] {
                    Some(acc) => acc.add_assign(&gi),
                    slot @ None => *slot = Some(gi),
                }
            }
        }
        // Parameters created after the loss node are unreachable too.
        for node in &self.nodes[out.0 + 1..] {
            if let OpKind::Parameter(p) = node.kind {
                result.params.entry(p).or_insert_with(|| Tensor::zeros(node.value.shape()));
            }
        }
        Ok(result)
    }
}

/// Central-difference gradient check of a scalar function of one tensor.
///
/// Returns `max_i |analytic_i − fd_i| / (|fd_i| + 1e-12)`; any non-finite
/// evaluation yields `+inf`.
pub fn grad_check<F>(f: F, theta: &Tensor, step: f64) -> f64
where
    F: Fn(&mut Tape, Var) -> Result<Var>,
{
    let mut tape = Tape::new();
    let x = tape.param(0, theta.clone());
    let Ok(y) = f(&mut tape, x) else { return f64::INFINITY };
    if !tape.value(y).all_finite() {
        return f64::INFINITY;
    }
    let Ok(grads) = tape.backward(y) else { return f64::INFINITY };
    let analytic = grads.param(0).cloned().unwrap_or_else(|| Tensor::zeros(theta.shape()));

    let eval = |t: &Tensor| -> f64 {
        let mut tape = Tape::inference();
        let x = tape.constant(t.clone());
        match f(&mut tape, x) {
            Ok(y) if tape.value(y).len() == 1 => tape.value(y).item(),
            _ => f64::NAN,
        }
    };
    let mut worst: f64 = 0.0;
    for i in 0..theta.len() {
        let mut plus = theta.clone();
        plus.data_mut()[i] += step;
        let mut minus = theta.clone();
        minus.data_mut()[i] -= step;
        let fd = (eval(&plus) - eval(&minus)) / (2.0 * step);
        let a = analytic.data()[i];
        if !fd.is_finite() || !a.is_finite() {
            return f64::INFINITY;
        }
        worst = worst.max((a - fd).abs() / (fd.abs() + 1e-12));
    }
    worst
}
