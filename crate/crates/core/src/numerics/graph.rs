//! Reverse-mode automatic differentiation over a dynamic tape.
//!
//! A [`Graph`] is rebuilt for every forward pass. Nodes are appended in
//! evaluation order, so the node list is already topologically sorted and
//! [`Graph::backward`] only has to walk it once in reverse.

use super::tensor::{matmul_into, matmul_nt_into, matmul_tn_into, Tensor};
use crate::error::{Error, Result};

/// Handle to a node in a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum OpKind {
    Leaf,
    MatMul(Var, Var),
    /// `a · bᵀ`
    MatMulNT(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    /// Row-broadcast bias add: `a[m×n] + b[n]`.
    AddBias(Var, Var),
    Scale(Var, f64),
    Gelu(Var),
    Tanh(Var),
    Square(Var),
    Softmax { input: Var, axis: usize },
    Transpose(Var),
    SliceCols { input: Var, start: usize, len: usize },
    ConcatCols(Vec<Var>),
    ConcatRows(Vec<Var>),
    Reshape(Var),
    Sum(Var),
    Mean(Var),
}

struct Node {
    op: OpKind,
    value: Tensor,
    requires_grad: bool,
}

/// Operation record tape.
#[derive(Default)]
pub struct Graph {
    nodes: Vec<Node>,
}

/// Gradients produced by [`Graph::backward`], indexed by node.
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    pub fn get(&self, v: Var) -> Option<&Tensor> {
        self.grads.get(v.0).and_then(|g| g.as_ref())
    }

    pub fn take(&mut self, v: Var) -> Option<Tensor> {
        self.grads.get_mut(v.0).and_then(|g| g.take())
    }
}

fn dims2(t: &Tensor, what: &str) -> Result<(usize, usize)> {
    t.dims2()
        .map_err(|_| Error::Dimension(format!("{what} expects a matrix, got {:?}", t.shape())))
}

const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)
const GELU_A: f64 = 0.044_715;

fn gelu(x: f64) -> f64 {
    0.5 * x * (1.0 + (GELU_C * (x + GELU_A * x * x * x)).tanh())
}

fn gelu_grad(x: f64) -> f64 {
    let inner = GELU_C * (x + GELU_A * x * x * x);
    let t = inner.tanh();
    let dinner = GELU_C * (1.0 + 3.0 * GELU_A * x * x);
    0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * dinner
}

/// Numerically stable softmax over one axis of a rank-1 or rank-2 tensor.
pub fn softmax(x: &Tensor, axis: usize) -> Result<Tensor> {
    let (m, n) = match x.shape() {
        [n] => (1, *n),
        [m, n] => (*m, *n),
        s => return Err(Error::Dimension(format!("softmax on shape {:?}", s))),
    };
    let rank = x.shape().len();
    if axis >= rank {
        return Err(Error::Dimension(format!(
            "softmax axis {axis} out of range for shape {:?}",
            x.shape()
        )));
    }
    let mut out = x.clone();
    let data = out.data_mut();
    // (outer count, inner length, stride between inner elements)
    let (outer, len, stride, step) = if rank == 1 || axis == 1 {
        (m, n, 1, n)
    } else {
        (n, m, n, 1)
    };
    for o in 0..outer {
        let base = o * step;
        let mut mx = f64::NEG_INFINITY;
        for i in 0..len {
            mx = mx.max(data[base + i * stride]);
        }
        let mut total = 0.0;
        for i in 0..len {
            let e = (data[base + i * stride] - mx).exp();
            data[base + i * stride] = e;
            total += e;
        }
        for i in 0..len {
            data[base + i * stride] /= total;
        }
    }
    Ok(out)
}

impl Graph {
    pub fn new() -> Self {
        Graph { nodes: Vec::new() }
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

    pub fn op(&self, v: Var) -> &OpKind {
        &self.nodes[v.0].op
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    fn push(&mut self, op: OpKind, value: Tensor, inputs: &[Var]) -> Var {
        let requires_grad = inputs.iter().any(|i| self.nodes[i.0].requires_grad);
        self.nodes.push(Node {
            op,
            value,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    /// Leaf that never receives a gradient.
    pub fn constant(&mut self, t: Tensor) -> Var {
        self.nodes.push(Node {
            op: OpKind::Leaf,
            value: t,
            requires_grad: false,
        });
        Var(self.nodes.len() - 1)
    }

    /// Leaf whose gradient is tracked.
    pub fn leaf(&mut self, t: Tensor) -> Var {
        self.nodes.push(Node {
            op: OpKind::Leaf,
            value: t,
            requires_grad: true,
        });
        Var(self.nodes.len() - 1)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (va, vb) = (self.value(a), self.value(b));
        let (m, k) = dims2(va, "matmul")?;
        let (k2, n) = dims2(vb, "matmul")?;
        if k != k2 {
            return Err(Error::Dimension(format!(
                "matmul of {:?} and {:?}",
                va.shape(),
                vb.shape()
            )));
        }
        let mut out = vec![0.0; m * n];
        matmul_into(va.data(), vb.data(), &mut out, m, k, n);
        let t = Tensor::new(vec![m, n], out)?;
        Ok(self.push(OpKind::MatMul(a, b), t, &[a, b]))
    }

    /// `a · bᵀ`
    pub fn matmul_nt(&mut self, a: Var, b: Var) -> Result<Var> {
        let (va, vb) = (self.value(a), self.value(b));
        let (m, k) = dims2(va, "matmul_nt")?;
        let (n, k2) = dims2(vb, "matmul_nt")?;
        if k != k2 {
            return Err(Error::Dimension(format!(
                "matmul_nt of {:?} and transposed {:?}",
                va.shape(),
                vb.shape()
            )));
        }
        let mut out = vec![0.0; m * n];
        matmul_nt_into(va.data(), vb.data(), &mut out, m, k, n);
        let t = Tensor::new(vec![m, n], out)?;
        Ok(self.push(OpKind::MatMulNT(a, b), t, &[a, b]))
    }

    fn same_shape(&self, a: Var, b: Var, what: &str) -> Result<()> {
        let (sa, sb) = (self.value(a).shape(), self.value(b).shape());
        if sa != sb {
            return Err(Error::Dimension(format!("{what} of {:?} and {:?}", sa, sb)));
        }
        Ok(())
    }

    fn zip_with(&mut self, a: Var, b: Var, op: OpKind, f: impl Fn(f64, f64) -> f64) -> Var {
        let va = self.value(a);
        let vb = self.value(b);
        let data = va
            .data()
            .iter()
            .zip(vb.data())
            .map(|(&x, &y)| f(x, y))
            .collect();
        let t = Tensor::new(va.shape().to_vec(), data).expect("shape checked");
        self.push(op, t, &[a, b])
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape(a, b, "add")?;
        Ok(self.zip_with(a, b, OpKind::Add(a, b), |x, y| x + y))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape(a, b, "sub")?;
        Ok(self.zip_with(a, b, OpKind::Sub(a, b), |x, y| x - y))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape(a, b, "mul")?;
        Ok(self.zip_with(a, b, OpKind::Mul(a, b), |x, y| x * y))
    }

    pub fn add_bias(&mut self, a: Var, bias: Var) -> Result<Var> {
        let (m, n) = dims2(self.value(a), "add_bias")?;
        let vb = self.value(bias);
        if vb.len() != n {
            return Err(Error::Dimension(format!(
                "bias of shape {:?} does not match {} columns",
                vb.shape(),
                n
            )));
        }
        let mut out = self.value(a).clone();
        let b = vb.data().to_vec();
        for i in 0..m {
            for (o, bv) in out.data_mut()[i * n..(i + 1) * n].iter_mut().zip(&b) {
                *o += bv;
            }
        }
        Ok(self.push(OpKind::AddBias(a, bias), out, &[a, bias]))
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Var {
        let t = self.value(a).map(|x| x * c);
        self.push(OpKind::Scale(a, c), t, &[a])
    }

    pub fn gelu(&mut self, a: Var) -> Var {
        let t = self.value(a).map(gelu);
        self.push(OpKind::Gelu(a), t, &[a])
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let t = self.value(a).map(f64::tanh);
        self.push(OpKind::Tanh(a), t, &[a])
    }

    pub fn square(&mut self, a: Var) -> Var {
        let t = self.value(a).map(|x| x * x);
        self.push(OpKind::Square(a), t, &[a])
    }

    pub fn softmax(&mut self, a: Var, axis: usize) -> Result<Var> {
        let t = softmax(self.value(a), axis)?;
        Ok(self.push(OpKind::Softmax { input: a, axis }, t, &[a]))
    }

    pub fn transpose(&mut self, a: Var) -> Result<Var> {
        let t = self.value(a).transpose2()?;
        Ok(self.push(OpKind::Transpose(a), t, &[a]))
    }

    pub fn slice_cols(&mut self, a: Var, start: usize, len: usize) -> Result<Var> {
        let (m, n) = dims2(self.value(a), "slice_cols")?;
        if start + len > n {
            return Err(Error::Dimension(format!(
                "column slice {start}..{} of matrix with {n} columns",
                start + len
            )));
        }
        let src = self.value(a).data();
        let mut out = Vec::with_capacity(m * len);
        for i in 0..m {
            out.extend_from_slice(&src[i * n + start..i * n + start + len]);
        }
        let t = Tensor::new(vec![m, len], out)?;
        Ok(self.push(OpKind::SliceCols { input: a, start, len }, t, &[a]))
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var> {
        let first = parts
            .first()
            .ok_or_else(|| Error::Contract("concat_cols of nothing".into()))?;
        let (m, _) = dims2(self.value(*first), "concat_cols")?;
        let mut widths = Vec::with_capacity(parts.len());
        for p in parts {
            let (pm, pn) = dims2(self.value(*p), "concat_cols")?;
            if pm != m {
                return Err(Error::Dimension(format!(
                    "concat_cols row mismatch: {m} vs {pm}"
                )));
            }
            widths.push(pn);
        }
        let total: usize = widths.iter().sum();
        let mut out = Vec::with_capacity(m * total);
        for i in 0..m {
            for (p, &w) in parts.iter().zip(&widths) {
                out.extend_from_slice(&self.value(*p).data()[i * w..(i + 1) * w]);
            }
        }
        let t = Tensor::new(vec![m, total], out)?;
        Ok(self.push(OpKind::ConcatCols(parts.to_vec()), t, parts))
    }

    pub fn concat_rows(&mut self, parts: &[Var]) -> Result<Var> {
        let first = parts
            .first()
            .ok_or_else(|| Error::Contract("concat_rows of nothing".into()))?;
        let (_, n) = dims2(self.value(*first), "concat_rows")?;
        let mut rows = 0;
        let mut out = Vec::new();
        for p in parts {
            let (pm, pn) = dims2(self.value(*p), "concat_rows")?;
            if pn != n {
                return Err(Error::Dimension(format!(
                    "concat_rows column mismatch: {n} vs {pn}"
                )));
            }
            rows += pm;
            out.extend_from_slice(self.value(*p).data());
        }
        let t = Tensor::new(vec![rows, n], out)?;
        Ok(self.push(OpKind::ConcatRows(parts.to_vec()), t, parts))
    }

    pub fn reshape(&mut self, a: Var, shape: &[usize]) -> Result<Var> {
        let t = self.value(a).clone().reshape(shape)?;
        Ok(self.push(OpKind::Reshape(a), t, &[a]))
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let t = Tensor::scalar(self.value(a).sum());
        self.push(OpKind::Sum(a), t, &[a])
    }

    pub fn mean(&mut self, a: Var) -> Var {
        let v = self.value(a);
        let t = Tensor::scalar(v.sum() / v.len().max(1) as f64);
        self.push(OpKind::Mean(a), t, &[a])
    }

    /// Reverse sweep from a scalar `loss`.
    ///
    /// Every node that requires a gradient and is reachable from `loss`
    /// ends up with `∂loss/∂node`; everything else stays `None`.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        let lv = self.value(loss);
        if lv.len() != 1 {
            return Err(Error::Contract(format!(
                "backward needs a scalar loss, got shape {:?}",
                lv.shape()
            )));
        }
        let mut grads: Vec<Option<Tensor>> = vec![None; self.nodes.len()];
        grads[loss.0] = Some(Tensor::full(lv.shape(), 1.0));

        for idx in (0..=loss.0).rev() {
            let node = &self.nodes[idx];
            if !node.requires_grad {
                continue;
            }
            let Some(g) = grads[idx].take() else {
                continue;
            };
            self.propagate(idx, &g, &mut grads)?;
            grads[idx] = Some(g);
        }
        Ok(Gradients { grads })
    }

    fn propagate(&self, idx: usize, g: &Tensor, grads: &mut [Option<Tensor>]) -> Result<()> {
        let node = &self.nodes[idx];
        let acc = |v: Var, delta: Tensor, grads: &mut [Option<Tensor>]| {
            if !self.nodes[v.0].requires_grad {
                return;
            }
            match &mut grads[v.0] {
                Some(existing) => existing.add_assign(&delta),
                slot @ None => *slot = Some(delta),
            }
        };
        let needs = |v: Var| self.nodes[v.0].requires_grad;

        match &node.op {
            OpKind::Leaf => {}
            OpKind::MatMul(a, b) => {
                let (va, vb) = (self.value(*a), self.value(*b));
                let (m, k) = va.dims2()?;
                let (_, n) = vb.dims2()?;
                if needs(*a) {
                    let mut da = vec![0.0; m * k];
                    matmul_nt_into(g.data(), vb.data(), &mut da, m, n, k);
                    acc(*a, Tensor::new(vec![m, k], da)?, grads);
                }
                if needs(*b) {
                    let mut db = vec![0.0; k * n];
                    matmul_tn_into(va.data(), g.data(), &mut db, k, m, n);
                    acc(*b, Tensor::new(vec![k, n], db)?, grads);
                }
            }
            OpKind::MatMulNT(a, b) => {
                // c[m×n] = a[m×k] · b[n×k]ᵀ
                let (va, vb) = (self.value(*a), self.value(*b));
                let (m, k) = va.dims2()?;
                let (n, _) = vb.dims2()?;
                if needs(*a) {
                    let mut da = vec![0.0; m * k];
                    matmul_into(g.data(), vb.data(), &mut da, m, n, k);
                    acc(*a, Tensor::new(vec![m, k], da)?, grads);
                }
                if needs(*b) {
                    let mut db = vec![0.0; n * k];
                    matmul_tn_into(g.data(), va.data(), &mut db, n, m, k);
                    acc(*b, Tensor::new(vec![n, k], db)?, grads);
                }
            }
            OpKind::Add(a, b) => {
                acc(*a, g.clone(), grads);
                acc(*b, g.clone(), grads);
            }
            OpKind::Sub(a, b) => {
                acc(*a, g.clone(), grads);
                acc(*b, g.map(|x| -x), grads);
            }
            OpKind::Mul(a, b) => {
                let (va, vb) = (self.value(*a), self.value(*b));
                if needs(*a) {
                    let d = zip(g, vb, |x, y| x * y);
                    acc(*a, d, grads);
                }
                if needs(*b) {
                    let d = zip(g, va, |x, y| x * y);
                    acc(*b, d, grads);
                }
            }
            OpKind::AddBias(a, b) => {
                acc(*a, g.clone(), grads);
                if needs(*b) {
                    let (m, n) = g.dims2()?;
                    let mut db = vec![0.0; n];
                    for i in 0..m {
                        for (d, gv) in db.iter_mut().zip(&g.data()[i * n..(i + 1) * n]) {
                            *d += gv;
                        }
                    }
                    let shape = self.value(*b).shape().to_vec();
                    acc(*b, Tensor::new(shape, db)?, grads);
                }
            }
            OpKind::Scale(a, c) => acc(*a, g.map(|x| x * c), grads),
            OpKind::Gelu(a) => {
                let d = zip(g, self.value(*a), |gv, x| gv * gelu_grad(x));
                acc(*a, d, grads);
            }
            OpKind::Tanh(a) => {
                let d = zip(g, &node.value, |gv, y| gv * (1.0 - y * y));
                acc(*a, d, grads);
            }
            OpKind::Square(a) => {
                let d = zip(g, self.value(*a), |gv, x| 2.0 * gv * x);
                acc(*a, d, grads);
            }
            OpKind::Softmax { input, axis } => {
                let y = &node.value;
                let (m, n) = match y.shape() {
                    [n] => (1, *n),
                    [m, n] => (*m, *n),
                    _ => unreachable!("softmax forward validated rank"),
                };
                let rank = y.shape().len();
                let (outer, len, stride, step) = if rank == 1 || *axis == 1 {
                    (m, n, 1, n)
                } else {
                    (n, m, n, 1)
                };
                let mut d = vec![0.0; y.len()];
                for o in 0..outer {
                    let base = o * step;
                    let mut dot = 0.0;
                    for i in 0..len {
                        let j = base + i * stride;
                        dot += g.data()[j] * y.data()[j];
                    }
                    for i in 0..len {
                        let j = base + i * stride;
                        d[j] = y.data()[j] * (g.data()[j] - dot);
                    }
                }
                acc(*input, Tensor::new(y.shape().to_vec(), d)?, grads);
            }
            OpKind::Transpose(a) => acc(*a, g.transpose2()?, grads),
            OpKind::SliceCols { input, start, len } => {
                if needs(*input) {
                    let (m, n) = self.value(*input).dims2()?;
                    let mut d = vec![0.0; m * n];
                    for i in 0..m {
                        d[i * n + start..i * n + start + len]
                            .copy_from_slice(&g.data()[i * len..(i + 1) * len]);
                    }
                    acc(*input, Tensor::new(vec![m, n], d)?, grads);
                }
            }
            OpKind::ConcatCols(parts) => {
                let (m, total) = g.dims2()?;
                let mut offset = 0;
                for p in parts {
                    let (_, w) = self.value(*p).dims2()?;
                    if needs(*p) {
                        let mut d = Vec::with_capacity(m * w);
                        for i in 0..m {
                            d.extend_from_slice(&g.data()[i * total + offset..i * total + offset + w]);
                        }
                        acc(*p, Tensor::new(vec![m, w], d)?, grads);
                    }
                    offset += w;
                }
            }
            OpKind::ConcatRows(parts) => {
                let mut offset = 0;
                for p in parts {
                    let pv = self.value(*p);
                    let n = pv.len();
                    if needs(*p) {
                        let d = g.data()[offset..offset + n].to_vec();
                        acc(*p, Tensor::new(pv.shape().to_vec(), d)?, grads);
                    }
                    offset += n;
                }
            }
            OpKind::Reshape(a) => {
                let shape = self.value(*a).shape().to_vec();
                acc(*a, g.clone().reshape(&shape)?, grads);
            }
            OpKind::Sum(a) => {
                let shape = self.value(*a).shape().to_vec();
                acc(*a, Tensor::full(&shape, g.data()[0]), grads);
            }
            OpKind::Mean(a) => {
                let v = self.value(*a);
                let c = g.data()[0] / v.len().max(1) as f64;
                acc(*a, Tensor::full(v.shape(), c), grads);
            }
        }
        Ok(())
    }
}

fn zip(a: &Tensor, b: &Tensor, f: impl Fn(f64, f64) -> f64) -> Tensor {
    let data = a.data().iter().zip(b.data()).map(|(&x, &y)| f(x, y)).collect();
    Tensor::new(a.shape().to_vec(), data).expect("same shape")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_matmul() {
        let mut g = Graph::new();
        let i = g.constant(Tensor::eye(2));
        let a = g.constant(Tensor::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0]]));
        let c = g.matmul(i, a).unwrap();
        assert_eq!(g.value(c).data(), &[1.0, 2.0, 3.0, 4.0]);
    }

    #[test]
    fn dot_product_matmul() {
        let mut g = Graph::new();
        let a = g.constant(Tensor::from_rows(&[vec![1.0, 2.0]]));
        let b = g.constant(Tensor::from_rows(&[vec![3.0], vec![4.0]]));
        let c = g.matmul(a, b).unwrap();
        assert_eq!(g.value(c).data(), &[11.0]);
    }

    #[test]
    fn matmul_mismatch_names_both_shapes() {
        let mut g = Graph::new();
        let a = g.constant(Tensor::zeros(&[2, 3]));
        let b = g.constant(Tensor::zeros(&[2, 3]));
        let msg = g.matmul(a, b).unwrap_err().to_string();
        assert!(msg.contains("[2, 3]"), "{msg}");
        assert!(msg.matches("[2, 3]").count() == 2, "{msg}");
    }

    #[test]
    fn softmax_uniform_and_overflow_safe() {
        let s = softmax(&Tensor::new(vec![3], vec![0.0; 3]).unwrap(), 0).unwrap();
        for v in s.data() {
            assert!((v - 1.0 / 3.0).abs() < 1e-15);
        }
        let s = softmax(&Tensor::new(vec![2], vec![1000.0, 0.0]).unwrap(), 0).unwrap();
        assert_eq!(s.data()[0], 1.0);
        assert!(s.data()[1] >= 0.0 && s.data()[1] < 1e-300);
        assert!(s.is_finite());
    }

    #[test]
    fn softmax_matches_scalar_reference() {
        let x = [1.0f64, 2.0, 3.0];
        let z: f64 = x.iter().map(|v| v.exp()).sum();
        let s = softmax(&Tensor::new(vec![3], x.to_vec()).unwrap(), 0).unwrap();
        for (i, v) in s.data().iter().enumerate() {
            assert!((v - x[i].exp() / z).abs() < 1e-12);
        }
    }

    #[test]
    fn softmax_axis_zero_normalizes_columns() {
        let t = Tensor::from_rows(&[vec![1.0, 5.0], vec![2.0, -1.0], vec![0.5, 0.0]]);
        let s = softmax(&t, 0).unwrap();
        for j in 0..2 {
            let col: f64 = (0..3).map(|i| s.get2(i, j)).sum();
            assert!((col - 1.0).abs() < 1e-12);
        }
        assert!(softmax(&t, 2).is_err());
    }

    #[test]
    fn backward_of_sum_is_ones() {
        let mut g = Graph::new();
        let w = g.leaf(Tensor::from_rows(&[vec![1.0, -2.0, 3.0], vec![0.5, 0.0, 9.0]]));
        let s = g.sum(w);
        let grads = g.backward(s).unwrap();
        assert_eq!(grads.get(w).unwrap().data(), &[1.0; 6]);
    }

    #[test]
    fn backward_of_half_squared_norm_is_identity() {
        let mut g = Graph::new();
        let data = Tensor::from_rows(&[vec![1.0, -2.0], vec![0.25, 4.0]]);
        let w = g.leaf(data.clone());
        let sq = g.square(w);
        let s = g.sum(sq);
        let half = g.scale(s, 0.5);
        let grads = g.backward(half).unwrap();
        assert_eq!(grads.get(w).unwrap(), &data);
    }

    #[test]
    fn backward_rejects_non_scalar() {
        let mut g = Graph::new();
        let w = g.leaf(Tensor::zeros(&[2, 2]));
        assert!(matches!(g.backward(w), Err(Error::Contract(_))));
    }

    #[test]
    fn unreachable_leaf_has_no_gradient() {
        let mut g = Graph::new();
        let a = g.leaf(Tensor::scalar(2.0));
        let b = g.leaf(Tensor::scalar(3.0));
        let s = g.square(a);
        let grads = g.backward(s).unwrap();
        assert!(grads.get(b).is_none());
        assert_eq!(grads.get(a).unwrap().data(), &[4.0]);
    }
}
