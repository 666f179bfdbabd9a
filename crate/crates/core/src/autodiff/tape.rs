//! Reverse-mode differentiation over a linear record of tensor primitives.
//!
//! Every forward primitive appends one node holding its value. `backward`
//! walks the record in reverse, so the topological order is simply the
//! insertion order. Parameters are borrowed from a [`ParamStore`] and their
//! gradients are gathered into a [`Gradients`] map sized like the store.

use std::borrow::Cow;
use std::collections::HashMap;

use super::params::{Gradients, ParamId, ParamStore};
use super::tensor::{matmul_at_into, matmul_bt_into, sigmoid, Tensor};
use crate::error::{Error, Result};

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Var(usize);

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Axis {
    Rows,
    Cols,
}

#[derive(Debug)]
enum Op {
    Leaf,
    Param(ParamId),
    MatMul(Var, Var),
    Add(Var, Var),
    AddRow(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Affine(Var, f64),
    Concat(Vec<Var>, Axis),
    Slice { src: Var, axis: Axis, start: usize },
    GatherRows(Var, Vec<usize>),
    Transpose(Var),
    Softmax(Var),
    LogSoftmax(Var),
    Sigmoid(Var),
    Tanh(Var),
    Relu(Var),
    Log(Var),
    LogFloor(Var, f64),
    Sum(Var),
    SumRows(Var),
    Mean(Var),
    Max(Var, usize),
}

struct Node<'p> {
    value: Cow<'p, Tensor>,
    op: Op,
}

pub struct Tape<'p> {
    store: &'p ParamStore,
    nodes: Vec<Node<'p>>,
    param_vars: HashMap<ParamId, Var>,
    backward_at: Option<usize>,
    underflows: usize,
}

impl<'p> Tape<'p> {
    pub fn new(store: &'p ParamStore) -> Self {
        Tape {
            store,
            nodes: Vec::new(),
            param_vars: HashMap::new(),
            backward_at: None,
            underflows: 0,
        }
    }

    pub fn store(&self) -> &'p ParamStore {
        self.store
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Number of `log_floor` evaluations that hit the floor.
    pub fn underflows(&self) -> usize {
        self.underflows
    }

    /// Drop every recorded node so the tape can be reused.
    pub fn reset(&mut self) {
        self.nodes.clear();
        self.param_vars.clear();
        self.backward_at = None;
        self.underflows = 0;
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn scalar(&self, v: Var) -> f64 {
        self.nodes[v.0].value.item()
    }

    fn push(&mut self, value: Tensor, op: Op) -> Var {
        self.nodes.push(Node {
            value: Cow::Owned(value),
            op,
        });
        Var(self.nodes.len() - 1)
    }

    fn dims(&self, v: Var, op: &'static str) -> Result<(usize, usize)> {
        let t = self.value(v);
        t.dims2()
            .ok_or_else(|| Error::shape(op, t.shape(), &[]))
    }

    pub fn constant(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf)
    }

    /// Leaf for a stored parameter; repeated calls return the same node.
    pub fn param(&mut self, id: ParamId) -> Var {
        if let Some(&v) = self.param_vars.get(&id) {
            return v;
        }
        self.nodes.push(Node {
            value: Cow::Borrowed(self.store.get(id)),
            op: Op::Param(id),
        });
        let v = Var(self.nodes.len() - 1);
        self.param_vars.insert(id, v);
        v
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.value(a).matmul(self.value(b))?;
        Ok(self.push(out, Op::MatMul(a, b)))
    }

    fn same_shape(&self, op: &'static str, a: Var, b: Var) -> Result<()> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.shape() != tb.shape() {
            return Err(Error::shape(op, ta.shape(), tb.shape()));
        }
        Ok(())
    }

    fn zip_with(&self, a: Var, b: Var, f: impl Fn(f64, f64) -> f64) -> Tensor {
        let (ta, tb) = (self.value(a), self.value(b));
        let data = ta.data().iter().zip(tb.data()).map(|(&x, &y)| f(x, y)).collect();
        Tensor::from_parts(ta.shape().to_vec(), data)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("add", a, b)?;
        let out = self.zip_with(a, b, |x, y| x + y);
        Ok(self.push(out, Op::Add(a, b)))
    }

    /// `a[r×c] + row[1×c]`, broadcasting the row over every row of `a`.
    pub fn add_row(&mut self, a: Var, row: Var) -> Result<Var> {
        let (r, c) = self.dims(a, "add_row")?;
        let (rr, rc) = self.dims(row, "add_row")?;
        if rr != 1 || rc != c {
            return Err(Error::shape("add_row", self.value(a).shape(), self.value(row).shape()));
        }
        let rv = self.value(row).data();
        let mut out = self.value(a).data().to_vec();
        for i in 0..r {
            for (o, &b) in out[i * c..(i + 1) * c].iter_mut().zip(rv) {
                *o += b;
            }
        }
        Ok(self.push(Tensor::from_parts(vec![r, c], out), Op::AddRow(a, row)))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("sub", a, b)?;
        let out = self.zip_with(a, b, |x, y| x - y);
        Ok(self.push(out, Op::Sub(a, b)))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("mul", a, b)?;
        let out = self.zip_with(a, b, |x, y| x * y);
        Ok(self.push(out, Op::Mul(a, b)))
    }

    /// `scale·a + shift`.
    pub fn affine(&mut self, a: Var, scale: f64, shift: f64) -> Var {
        let out = self.value(a).map(|x| scale * x + shift);
        self.push(out, Op::Affine(a, scale))
    }

    pub fn concat(&mut self, parts: &[Var], axis: Axis) -> Result<Var> {
        if parts.is_empty() {
            return Err(Error::EmptyInput("concat of zero tensors"));
        }
        let dims: Vec<(usize, usize)> = parts
            .iter()
            .map(|&p| self.dims(p, "concat"))
            .collect::<Result<_>>()?;
        let (r0, c0) = dims[0];
        let out = match axis {
            Axis::Cols => {
                if let Some(k) = dims.iter().position(|d| d.0 != r0) {
                    return Err(Error::shape(
                        "concat",
                        self.value(parts[0]).shape(),
                        self.value(parts[k]).shape(),
                    ));
                }
                let total: usize = dims.iter().map(|d| d.1).sum();
                let mut out = Vec::with_capacity(r0 * total);
                for i in 0..r0 {
                    for &p in parts {
                        out.extend_from_slice(self.value(p).row_slice(i));
                    }
                }
                Tensor::from_parts(vec![r0, total], out)
            }
            Axis::Rows => {
                if let Some(k) = dims.iter().position(|d| d.1 != c0) {
                    return Err(Error::shape(
                        "concat",
                        self.value(parts[0]).shape(),
                        self.value(parts[k]).shape(),
                    ));
                }
                let total: usize = dims.iter().map(|d| d.0).sum();
                let mut out = Vec::with_capacity(total * c0);
                for &p in parts {
                    out.extend_from_slice(self.value(p).data());
                }
                Tensor::from_parts(vec![total, c0], out)
            }
        };
        Ok(self.push(out, Op::Concat(parts.to_vec(), axis)))
    }

    /// `len` rows or columns of `src` starting at `start`.
    pub fn slice(&mut self, src: Var, axis: Axis, start: usize, len: usize) -> Result<Var> {
        let (r, c) = self.dims(src, "slice")?;
        let extent = if axis == Axis::Rows { r } else { c };
        if len == 0 || start + len > extent {
            return Err(Error::shape("slice", self.value(src).shape(), &[start, len]));
        }
        let t = self.value(src);
        let out = match axis {
            Axis::Rows => Tensor::from_parts(vec![len, c], t.data()[start * c..(start + len) * c].to_vec()),
            Axis::Cols => {
                let mut out = Vec::with_capacity(r * len);
                for i in 0..r {
                    out.extend_from_slice(&t.row_slice(i)[start..start + len]);
                }
                Tensor::from_parts(vec![r, len], out)
            }
        };
        Ok(self.push(out, Op::Slice { src, axis, start }))
    }

    /// Rows `indices` of `src`, in order, duplicates allowed.
    pub fn gather_rows(&mut self, src: Var, indices: &[usize]) -> Result<Var> {
        let (r, c) = self.dims(src, "gather_rows")?;
        if indices.is_empty() {
            return Err(Error::EmptyInput("gather_rows index list"));
        }
        if let Some(&bad) = indices.iter().find(|&&i| i >= r) {
            return Err(Error::shape("gather_rows", self.value(src).shape(), &[bad]));
        }
        let t = self.value(src);
        let mut out = Vec::with_capacity(indices.len() * c);
        for &i in indices {
            out.extend_from_slice(t.row_slice(i));
        }
        let out = Tensor::from_parts(vec![indices.len(), c], out);
        Ok(self.push(out, Op::GatherRows(src, indices.to_vec())))
    }

    pub fn transpose(&mut self, a: Var) -> Result<Var> {
        self.dims(a, "transpose")?;
        let out = self.value(a).transpose();
        Ok(self.push(out, Op::Transpose(a)))
    }

    fn map_rows(&self, a: Var, f: impl Fn(&[f64]) -> Vec<f64>) -> Tensor {
        let t = self.value(a);
        let (r, c) = t.dims2().unwrap_or((1, t.numel()));
        let mut out = Vec::with_capacity(r * c);
        for i in 0..r {
            out.extend(f(&t.data()[i * c..(i + 1) * c]));
        }
        Tensor::from_parts(vec![r, c], out)
    }

    /// Row-wise softmax.
    pub fn softmax(&mut self, a: Var) -> Var {
        let out = self.map_rows(a, super::tensor::softmax);
        self.push(out, Op::Softmax(a))
    }

    /// Row-wise log-softmax, computed without forming the probabilities.
    pub fn log_softmax(&mut self, a: Var) -> Var {
        let out = self.map_rows(a, |row| {
            let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let lse = max + row.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
            row.iter().map(|v| v - lse).collect()
        });
        self.push(out, Op::LogSoftmax(a))
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let out = self.value(a).map(sigmoid);
        self.push(out, Op::Sigmoid(a))
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let out = self.value(a).map(f64::tanh);
        self.push(out, Op::Tanh(a))
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let out = self.value(a).map(|x| x.max(0.0));
        self.push(out, Op::Relu(a))
    }

    pub fn log(&mut self, a: Var) -> Var {
        let out = self.value(a).map(f64::ln);
        self.push(out, Op::Log(a))
    }

    /// `ln(max(a, floor))`; the gradient vanishes where the floor is active.
    pub fn log_floor(&mut self, a: Var, floor: f64) -> Var {
        let hits = self.value(a).data().iter().filter(|&&x| x <= floor).count();
        self.underflows += hits;
        let out = self.value(a).map(|x| x.max(floor).ln());
        self.push(out, Op::LogFloor(a, floor))
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let out = Tensor::scalar(self.value(a).sum());
        self.push(out, Op::Sum(a))
    }

    /// Column sums, `[r×c] → [1×c]`.
    pub fn sum_rows(&mut self, a: Var) -> Result<Var> {
        let (r, c) = self.dims(a, "sum_rows")?;
        let t = self.value(a);
        let mut out = vec![0.0; c];
        for i in 0..r {
            for (o, &v) in out.iter_mut().zip(t.row_slice(i)) {
                *o += v;
            }
        }
        Ok(self.push(Tensor::row(out), Op::SumRows(a)))
    }

    pub fn mean(&mut self, a: Var) -> Var {
        let t = self.value(a);
        let out = Tensor::scalar(t.sum() / t.numel() as f64);
        self.push(out, Op::Mean(a))
    }

    /// Maximum over all entries; the gradient flows to the first maximizer.
    pub fn max(&mut self, a: Var) -> Var {
        let (arg, best) = self
            .value(a)
            .data()
            .iter()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |acc, (i, &v)| if v > acc.1 { (i, v) } else { acc });
        self.push(Tensor::scalar(best), Op::Max(a, arg))
    }

    /// Gradient of the scalar `loss` with respect to every parameter of the store.
    pub fn backward(&mut self, loss: Var) -> Result<Gradients> {
        if self.backward_at == Some(self.nodes.len()) {
            return Err(Error::BackwardTwice);
        }
        let lt = self.value(loss);
        if !lt.is_scalar() {
            return Err(Error::NonScalarLoss(lt.shape().to_vec()));
        }
        if !lt.is_finite() {
            return Err(Error::NonFiniteValue("loss"));
        }
        let seed = Tensor::filled(lt.shape(), 1.0);
        self.backward_at = Some(self.nodes.len());

        let mut grads: Vec<Option<Tensor>> = (0..=loss.0).map(|_| None).collect();
        grads[loss.0] = Some(seed);
        let mut out = Gradients::zeros_like(self.store);

        for i in (0..=loss.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            let node = &self.nodes[i];
            let y = &*node.value;
            match &node.op {
                Op::Leaf => {}
                Op::Param(id) => out.get_mut(*id).add_assign(&g),
                Op::MatMul(a, b) => {
                    let ta = self.value(*a);
                    let tb = self.value(*b);
                    let (m, k) = ta.dims2().unwrap();
                    let n = tb.cols();
                    let mut da = vec![0.0; m * k];
                    matmul_bt_into(g.data(), tb.data(), &mut da, m, n, k);
                    let mut db = vec![0.0; k * n];
                    matmul_at_into(ta.data(), g.data(), &mut db, m, k, n);
                    accumulate(&mut grads, *a, ta.shape(), da);
                    accumulate(&mut grads, *b, tb.shape(), db);
                }
                Op::Add(a, b) => {
                    let shape = g.shape().to_vec();
                    accumulate(&mut grads, *a, &shape, g.data().to_vec());
                    accumulate(&mut grads, *b, &shape, g.into_data());
                }
                Op::AddRow(a, row) => {
                    let (r, c) = g.dims2().unwrap();
                    let mut dr = vec![0.0; c];
                    for k in 0..r {
                        for (o, &v) in dr.iter_mut().zip(g.row_slice(k)) {
                            *o += v;
                        }
                    }
                    let rshape = self.value(*row).shape().to_vec();
                    accumulate(&mut grads, *row, &rshape, dr);
                    let shape = g.shape().to_vec();
                    accumulate(&mut grads, *a, &shape, g.into_data());
                }
                Op::Sub(a, b) => {
                    let neg = g.data().iter().map(|v| -v).collect();
                    let shape = g.shape().to_vec();
                    accumulate(&mut grads, *b, &shape, neg);
                    accumulate(&mut grads, *a, &shape, g.into_data());
                }
                Op::Mul(a, b) => {
                    let (ta, tb) = (self.value(*a), self.value(*b));
                    let da = g.data().iter().zip(tb.data()).map(|(x, y)| x * y).collect();
                    let db = g.data().iter().zip(ta.data()).map(|(x, y)| x * y).collect();
                    accumulate(&mut grads, *a, ta.shape(), da);
                    accumulate(&mut grads, *b, tb.shape(), db);
                }
                Op::Affine(a, scale) => {
                    let da = g.data().iter().map(|v| v * scale).collect();
                    accumulate(&mut grads, *a, g.shape(), da);
                }
                Op::Concat(parts, axis) => {
                    let (r, c) = g.dims2().unwrap();
                    let mut offset = 0;
                    for &p in parts {
                        let shape = self.value(p).shape().to_vec();
                        let (pr, pc) = self.value(p).dims2().unwrap();
                        let dp = match axis {
                            Axis::Cols => {
                                let mut dp = Vec::with_capacity(pr * pc);
                                for k in 0..r {
                                    dp.extend_from_slice(&g.data()[k * c + offset..k * c + offset + pc]);
                                }
                                offset += pc;
                                dp
                            }
                            Axis::Rows => {
                                let dp = g.data()[offset * c..(offset + pr) * c].to_vec();
                                offset += pr;
                                dp
                            }
                        };
                        accumulate(&mut grads, p, &shape, dp);
                    }
                }
                Op::Slice { src, axis, start } => {
                    let ts = self.value(*src);
                    let (_, c) = ts.dims2().unwrap();
                    let (gr, gc) = g.dims2().unwrap();
                    let mut ds = vec![0.0; ts.numel()];
                    match axis {
                        Axis::Rows => ds[start * c..(start + gr) * c].copy_from_slice(g.data()),
                        Axis::Cols => {
                            for k in 0..gr {
                                ds[k * c + start..k * c + start + gc].copy_from_slice(g.row_slice(k));
                            }
                        }
                    }
                    accumulate(&mut grads, *src, ts.shape(), ds);
                }
                Op::GatherRows(src, idx) => {
                    let ts = self.value(*src);
                    let c = ts.cols();
                    let mut ds = vec![0.0; ts.numel()];
                    for (k, &row) in idx.iter().enumerate() {
                        for (o, &v) in ds[row * c..(row + 1) * c].iter_mut().zip(g.row_slice(k)) {
                            *o += v;
                        }
                    }
                    accumulate(&mut grads, *src, ts.shape(), ds);
                }
                Op::Transpose(a) => {
                    let shape = self.value(*a).shape().to_vec();
                    accumulate(&mut grads, *a, &shape, g.transpose().into_data());
                }
                Op::Softmax(a) => {
                    let (r, c) = y.dims2().unwrap();
                    let mut da = vec![0.0; r * c];
                    for k in 0..r {
                        let yr = y.row_slice(k);
                        let gr = g.row_slice(k);
                        let dot: f64 = yr.iter().zip(gr).map(|(p, q)| p * q).sum();
                        for j in 0..c {
                            da[k * c + j] = yr[j] * (gr[j] - dot);
                        }
                    }
                    let shape = self.value(*a).shape().to_vec();
                    accumulate(&mut grads, *a, &shape, da);
                }
                Op::LogSoftmax(a) => {
                    let (r, c) = y.dims2().unwrap();
                    let mut da = vec![0.0; r * c];
                    for k in 0..r {
                        let yr = y.row_slice(k);
                        let gr = g.row_slice(k);
                        let total: f64 = gr.iter().sum();
                        for j in 0..c {
                            da[k * c + j] = gr[j] - yr[j].exp() * total;
                        }
                    }
                    let shape = self.value(*a).shape().to_vec();
                    accumulate(&mut grads, *a, &shape, da);
                }
                Op::Sigmoid(a) => {
                    let da = g.data().iter().zip(y.data()).map(|(d, s)| d * s * (1.0 - s)).collect();
                    accumulate(&mut grads, *a, g.shape(), da);
                }
                Op::Tanh(a) => {
                    let da = g.data().iter().zip(y.data()).map(|(d, t)| d * (1.0 - t * t)).collect();
                    accumulate(&mut grads, *a, g.shape(), da);
                }
                Op::Relu(a) => {
                    let x = self.value(*a);
                    let da = g
                        .data()
                        .iter()
                        .zip(x.data())
                        .map(|(d, &v)| if v > 0.0 { *d } else { 0.0 })
                        .collect();
                    accumulate(&mut grads, *a, g.shape(), da);
                }
                Op::Log(a) => {
                    let x = self.value(*a);
                    let da = g.data().iter().zip(x.data()).map(|(d, v)| d / v).collect();
                    accumulate(&mut grads, *a, g.shape(), da);
                }
                Op::LogFloor(a, floor) => {
                    let x = self.value(*a);
                    let da = g
                        .data()
                        .iter()
                        .zip(x.data())
                        .map(|(d, &v)| if v > *floor { d / v } else { 0.0 })
                        .collect();
                    accumulate(&mut grads, *a, g.shape(), da);
                }
                Op::Sum(a) => {
                    let shape = self.value(*a).shape().to_vec();
                    let n = self.value(*a).numel();
                    accumulate(&mut grads, *a, &shape, vec![g.item(); n]);
                }
                Op::SumRows(a) => {
                    let shape = self.value(*a).shape().to_vec();
                    let r = self.value(*a).rows();
                    let da = g.data().repeat(r);
                    accumulate(&mut grads, *a, &shape, da);
                }
                Op::Mean(a) => {
                    let shape = self.value(*a).shape().to_vec();
                    let n = self.value(*a).numel();
                    accumulate(&mut grads, *a, &shape, vec![g.item() / n as f64; n]);
                }
                Op::Max(a, arg) => {
                    let shape = self.value(*a).shape().to_vec();
                    let mut da = vec![0.0; self.value(*a).numel()];
                    da[*arg] = g.item();
                    accumulate(&mut grads, *a, &shape, da);
                }
            }
        }
        Ok(out)
    }
}

fn accumulate(grads: &mut [Option<Tensor>], v: Var, shape: &[usize], delta: Vec<f64>) {
    match &mut grads[v.0] {
        Some(existing) => {
            for (a, b) in existing.data_mut().iter_mut().zip(&delta) {
                *a += b;
            }
        }
        slot @ None => *slot = Some(Tensor::from_parts(shape.to_vec(), delta)),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn store_with(values: &[(&str, Tensor)]) -> ParamStore {
        let mut s = ParamStore::new();
        for (n, t) in values {
            s.add(*n, t.clone());
        }
        s
    }

    #[test]
    fn sigmoid_of_zero_is_half() {
        let store = ParamStore::new();
        let mut tape = Tape::new(&store);
        let x = tape.constant(Tensor::scalar(0.0));
        let y = tape.sigmoid(x);
        assert_eq!(tape.scalar(y), 0.5);
    }

    #[test]
    fn softmax_of_equal_logits_is_uniform() {
        let store = ParamStore::new();
        let mut tape = Tape::new(&store);
        let x = tape.constant(Tensor::row(vec![2.5; 3]));
        let y = tape.softmax(x);
        for &p in tape.value(y).data() {
            assert!((p - 1.0 / 3.0).abs() < 1e-15);
        }
    }

    #[test]
    fn square_has_derivative_six_at_three() {
        let store = store_with(&[("x", Tensor::scalar(3.0))]);
        let mut tape = Tape::new(&store);
        let x = tape.param(ParamId(0));
        let y = tape.mul(x, x).unwrap();
        let g = tape.backward(y).unwrap();
        assert_eq!(g.get(ParamId(0)).item(), 6.0);
    }

    #[test]
    fn constant_loss_gives_zero_gradient() {
        let store = store_with(&[("p", Tensor::row(vec![1.0, 2.0]))]);
        let mut tape = Tape::new(&store);
        let _p = tape.param(ParamId(0));
        let c = tape.constant(Tensor::scalar(4.0));
        let g = tape.backward(c).unwrap();
        assert!(g.is_zero());
        assert_eq!(g.get(ParamId(0)).shape(), &[1, 2]);
    }

    #[test]
    fn backward_errors() {
        let store = store_with(&[("p", Tensor::row(vec![1.0, 2.0]))]);
        let mut tape = Tape::new(&store);
        let p = tape.param(ParamId(0));
        assert!(matches!(tape.backward(p), Err(Error::NonScalarLoss(_))));
        let s = tape.sum(p);
        tape.backward(s).unwrap();
        assert!(matches!(tape.backward(s), Err(Error::BackwardTwice)));
        // a new forward op re-arms the tape
        let s2 = tape.mean(p);
        assert!(tape.backward(s2).is_ok());
    }

    #[test]
    fn log_floor_counts_underflows() {
        let store = ParamStore::new();
        let mut tape = Tape::new(&store);
        let x = tape.constant(Tensor::row(vec![0.0, 0.5]));
        let y = tape.log_floor(x, 1e-12);
        assert_eq!(tape.underflows(), 1);
        assert!((tape.value(y).data()[0] - (1e-12f64).ln()).abs() < 1e-12);
    }

    #[test]
    fn shape_errors_are_descriptive() {
        let store = ParamStore::new();
        let mut tape = Tape::new(&store);
        let a = tape.constant(Tensor::zeros(&[2, 3]));
        let b = tape.constant(Tensor::zeros(&[3, 2]));
        let err = tape.add(a, b).unwrap_err().to_string();
        assert!(err.contains("add") && err.contains("[2, 3]") && err.contains("[3, 2]"));
        assert!(tape.concat(&[a, b], Axis::Cols).is_err());
        assert!(tape.slice(a, Axis::Cols, 2, 2).is_err());
        assert!(tape.gather_rows(a, &[2]).is_err());
    }

    #[test]
    fn shared_parameter_accumulates() {
        // y = p·p + 2p at p = 1.5 → dy/dp = 2p + 2 = 5
        let store = store_with(&[("p", Tensor::scalar(1.5))]);
        let mut tape = Tape::new(&store);
        let p = tape.param(ParamId(0));
        let sq = tape.mul(p, p).unwrap();
        let twice = tape.affine(p, 2.0, 0.0);
        let y = tape.add(sq, twice).unwrap();
        let g = tape.backward(y).unwrap();
        assert!((g.get(ParamId(0)).item() - 5.0).abs() < 1e-15);
    }
}
