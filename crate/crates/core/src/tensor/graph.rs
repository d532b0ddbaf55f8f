use std::sync::Arc;

use super::{kernels, Tensor};
use crate::error::{Error, Result};

/// Handle to a node in a [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    Linear { x: Var, w: Var, b: Var },
    Add(Var, Var),
    Mul(Var, Var),
    MulConst(Var, f64),
    Scale { x: Var, s: Var },
    Relu(Var),
    Transpose(Var),
    Reshape(Var),
    SoftmaxRows(Var),
    SliceRows { x: Var, start: usize },
    ConcatRows(Vec<Var>),
    Sum(Var),
    CrossEntropy { logits: Var, labels: Vec<usize> },
}

#[derive(Debug)]
struct Node {
    shape: Vec<usize>,
    value: Arc<Vec<f64>>,
    op: Op,
    requires_grad: bool,
    // extra activations needed by backward (softmax probabilities for CE)
    saved: Option<Vec<f64>>,
}

/// Dynamic reverse-mode tape. Nodes are appended in evaluation order, so the
/// node index is already a topological order.
#[derive(Debug, Default)]
pub struct Graph {
    nodes: Vec<Node>,
    grads: Vec<Option<Vec<f64>>>,
    consumed: bool,
}

fn cols_of(shape: &[usize]) -> usize {
    shape[1..].iter().product()
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

    fn push(&mut self, shape: Vec<usize>, value: Vec<f64>, op: Op, requires_grad: bool) -> Var {
        self.push_shared(shape, Arc::new(value), op, requires_grad, None)
    }

    fn push_shared(
        &mut self,
        shape: Vec<usize>,
        value: Arc<Vec<f64>>,
        op: Op,
        requires_grad: bool,
        saved: Option<Vec<f64>>,
    ) -> Var {
        debug_assert_eq!(shape.iter().product::<usize>(), value.len());
        self.nodes.push(Node {
            shape,
            value,
            op,
            requires_grad,
            saved,
        });
        Var(self.nodes.len() - 1)
    }

    fn node(&self, v: Var) -> &Node {
        &self.nodes[v.0]
    }

    fn rg(&self, vars: &[Var]) -> bool {
        vars.iter().any(|&v| self.nodes[v.0].requires_grad)
    }

    fn check_live(&self) -> Result<()> {
        if self.consumed {
            return Err(Error::Usage("graph already consumed by backward".into()));
        }
        Ok(())
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        &self.node(v).shape
    }

    pub fn value(&self, v: Var) -> &[f64] {
        &self.node(v).value
    }

    /// Snapshot of a node's value as a standalone tensor.
    pub fn tensor(&self, v: Var) -> Tensor {
        let n = self.node(v);
        Tensor::new(n.shape.clone(), (*n.value).clone()).expect("graph node shape")
    }

    /// Binds a tensor as a leaf. The value buffer is shared, not copied; the
    /// leaf tracks gradients iff the tensor does.
    pub fn leaf(&mut self, t: &Tensor) -> Var {
        self.push_shared(
            t.shape().to_vec(),
            t.shared_data(),
            Op::Leaf,
            t.requires_grad(),
            None,
        )
    }

    pub fn constant(&mut self, t: &Tensor) -> Var {
        self.push_shared(t.shape().to_vec(), t.shared_data(), Op::Leaf, false, None)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.check_live()?;
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa.len() != 2 || sb.len() != 2 || sa[1] != sb[0] {
            return Err(Error::dim("matmul", sa, sb));
        }
        let (m, k, n) = (sa[0], sa[1], sb[1]);
        let out = kernels::matmul(self.value(a), self.value(b), m, k, n);
        let rg = self.rg(&[a, b]);
        Ok(self.push(vec![m, n], out, Op::MatMul(a, b), rg))
    }

    /// `x·w + b` with `b` broadcast over rows.
    pub fn linear(&mut self, x: Var, w: Var, b: Var) -> Result<Var> {
        self.check_live()?;
        let (sx, sw, sb) = (self.shape(x), self.shape(w), self.shape(b));
        if sx.len() != 2 || sw.len() != 2 || sx[1] != sw[0] {
            return Err(Error::dim("linear", sx, sw));
        }
        if sb.iter().product::<usize>() != sw[1] {
            return Err(Error::dim("linear(bias)", sw, sb));
        }
        let (m, k, n) = (sx[0], sx[1], sw[1]);
        let mut out = kernels::matmul(self.value(x), self.value(w), m, k, n);
        let bias = self.value(b);
        for row in out.chunks_mut(n) {
            row.iter_mut().zip(bias).for_each(|(o, &bv)| *o += bv);
        }
        let rg = self.rg(&[x, w, b]);
        Ok(self.push(vec![m, n], out, Op::Linear { x, w, b }, rg))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.check_live()?;
        if self.shape(a) != self.shape(b) {
            return Err(Error::dim("add", self.shape(a), self.shape(b)));
        }
        let out: Vec<f64> = self
            .value(a)
            .iter()
            .zip(self.value(b))
            .map(|(x, y)| x + y)
            .collect();
        let rg = self.rg(&[a, b]);
        Ok(self.push(self.shape(a).to_vec(), out, Op::Add(a, b), rg))
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.check_live()?;
        if self.shape(a) != self.shape(b) {
            return Err(Error::dim("mul", self.shape(a), self.shape(b)));
        }
        let out: Vec<f64> = self
            .value(a)
            .iter()
            .zip(self.value(b))
            .map(|(x, y)| x * y)
            .collect();
        let rg = self.rg(&[a, b]);
        Ok(self.push(self.shape(a).to_vec(), out, Op::Mul(a, b), rg))
    }

    /// Multiplication by a fixed (non-learnable) constant.
    pub fn mul_const(&mut self, x: Var, c: f64) -> Result<Var> {
        self.check_live()?;
        let out: Vec<f64> = self.value(x).iter().map(|v| v * c).collect();
        let rg = self.rg(&[x]);
        Ok(self.push(self.shape(x).to_vec(), out, Op::MulConst(x, c), rg))
    }

    /// Multiplication by a single-element tensor `s`; gradients flow to both.
    pub fn scale(&mut self, x: Var, s: Var) -> Result<Var> {
        self.check_live()?;
        if self.node(s).value.len() != 1 {
            return Err(Error::dim("scale", self.shape(x), self.shape(s)));
        }
        let sv = self.value(s)[0];
        let out: Vec<f64> = self.value(x).iter().map(|v| v * sv).collect();
        let rg = self.rg(&[x, s]);
        Ok(self.push(self.shape(x).to_vec(), out, Op::Scale { x, s }, rg))
    }

    pub fn relu(&mut self, x: Var) -> Result<Var> {
        self.check_live()?;
        let out: Vec<f64> = self.value(x).iter().map(|&v| v.max(0.0)).collect();
        let rg = self.rg(&[x]);
        Ok(self.push(self.shape(x).to_vec(), out, Op::Relu(x), rg))
    }

    pub fn transpose(&mut self, x: Var) -> Result<Var> {
        self.check_live()?;
        let s = self.shape(x);
        if s.len() != 2 {
            return Err(Error::dim("transpose", s, &[2]));
        }
        let (r, c) = (s[0], s[1]);
        let out = kernels::transpose(self.value(x), r, c);
        let rg = self.rg(&[x]);
        Ok(self.push(vec![c, r], out, Op::Transpose(x), rg))
    }

    /// Row-major reshape; the value buffer is shared.
    pub fn reshape(&mut self, x: Var, shape: &[usize]) -> Result<Var> {
        self.check_live()?;
        let n: usize = shape.iter().product();
        if n != self.node(x).value.len() || shape.contains(&0) {
            return Err(Error::dim("reshape", self.shape(x), shape));
        }
        let value = Arc::clone(&self.node(x).value);
        let rg = self.rg(&[x]);
        Ok(self.push_shared(shape.to_vec(), value, Op::Reshape(x), rg, None))
    }

    /// Flattens to a single `1×N` row (row-major).
    pub fn flatten(&mut self, x: Var) -> Result<Var> {
        let n = self.node(x).value.len();
        self.reshape(x, &[1, n])
    }

    pub fn softmax_rows(&mut self, x: Var) -> Result<Var> {
        self.check_live()?;
        let s = self.shape(x);
        if s.len() != 2 {
            return Err(Error::dim("softmax_rows", s, &[2]));
        }
        if !self.value(x).iter().all(|v| v.is_finite()) {
            return Err(Error::NumericDomain("softmax_rows"));
        }
        let (r, c) = (s[0], s[1]);
        let out = kernels::softmax_rows(self.value(x), r, c);
        let rg = self.rg(&[x]);
        Ok(self.push(vec![r, c], out, Op::SoftmaxRows(x), rg))
    }

    pub fn slice_rows(&mut self, x: Var, start: usize, len: usize) -> Result<Var> {
        self.check_live()?;
        let s = self.shape(x).to_vec();
        if len == 0 || start + len > s[0] {
            return Err(Error::dim("slice_rows", &s, &[start, len]));
        }
        let c = cols_of(&s);
        let out = self.value(x)[start * c..(start + len) * c].to_vec();
        let mut shape = s.clone();
        shape[0] = len;
        let rg = self.rg(&[x]);
        Ok(self.push(shape, out, Op::SliceRows { x, start }, rg))
    }

    /// Stacks inputs along the first axis. All inputs must share trailing extents.
    pub fn concat_rows(&mut self, xs: &[Var]) -> Result<Var> {
        self.check_live()?;
        let first = xs
            .first()
            .ok_or_else(|| Error::Usage("concat_rows of nothing".into()))?;
        let tail = self.shape(*first)[1..].to_vec();
        let mut rows = 0;
        let mut out = Vec::new();
        for &x in xs {
            let s = self.shape(x);
            if s[1..] != tail[..] {
                return Err(Error::dim("concat_rows", self.shape(*first), s));
            }
            rows += s[0];
            out.extend_from_slice(self.value(x));
        }
        let mut shape = vec![rows];
        shape.extend(tail);
        let rg = self.rg(xs);
        Ok(self.push(shape, out, Op::ConcatRows(xs.to_vec()), rg))
    }

    pub fn sum(&mut self, x: Var) -> Result<Var> {
        self.check_live()?;
        let s: f64 = self.value(x).iter().sum();
        let rg = self.rg(&[x]);
        Ok(self.push(vec![1], vec![s], Op::Sum(x), rg))
    }

    /// Mean over the batch of `-log softmax(logits)[label]`.
    pub fn cross_entropy(&mut self, logits: Var, labels: &[usize]) -> Result<Var> {
        self.check_live()?;
        let s = self.shape(logits);
        if s.len() != 2 || s[0] != labels.len() {
            return Err(Error::dim("cross_entropy", s, &[labels.len()]));
        }
        let (b, c) = (s[0], s[1]);
        if let Some(&bad) = labels.iter().find(|&&l| l >= c) {
            return Err(Error::Label {
                label: bad,
                classes: c,
            });
        }
        let x = self.value(logits);
        if !x.iter().all(|v| v.is_finite()) {
            return Err(Error::NumericDomain("cross_entropy"));
        }
        let mut total = 0.0;
        for (i, &l) in labels.iter().enumerate() {
            let row = &x[i * c..(i + 1) * c];
            total += kernels::log_sum_exp(row) - row[l];
        }
        let probs = kernels::softmax_rows(x, b, c);
        let rg = self.rg(&[logits]);
        Ok(self.push_shared(
            vec![1],
            Arc::new(vec![total / b as f64]),
            Op::CrossEntropy {
                logits,
                labels: labels.to_vec(),
            },
            rg,
            Some(probs),
        ))
    }

    /// Scalar value of a single-element node.
    pub fn scalar(&self, v: Var) -> f64 {
        self.value(v)[0]
    }

    /// Reverse pass from a scalar `loss`. Consumes the graph: a second call is
    /// a usage error.
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        if self.consumed {
            return Err(Error::Usage("backward called twice on one graph".into()));
        }
        if self.node(loss).value.len() != 1 {
            return Err(Error::Usage(format!(
                "backward needs a scalar loss, got shape {:?}",
                self.shape(loss)
            )));
        }
        self.consumed = true;
        self.grads = vec![None; self.nodes.len()];
        if !self.nodes[loss.0].requires_grad {
            return Ok(());
        }
        self.grads[loss.0] = Some(vec![1.0]);
        for i in (0..=loss.0).rev() {
            let Some(g) = self.grads[i].take() else {
                continue;
            };
            self.propagate(i, &g);
            self.grads[i] = Some(g);
        }
        // non-tracking nodes never report gradients
        for (n, g) in self.nodes.iter().zip(self.grads.iter_mut()) {
            if !n.requires_grad {
                *g = None;
            }
        }
        Ok(())
    }

    fn send(&mut self, to: Var, contrib: Vec<f64>) {
        if !self.nodes[to.0].requires_grad {
            return;
        }
        match &mut self.grads[to.0] {
            Some(buf) => buf.iter_mut().zip(&contrib).for_each(|(a, b)| *a += b),
            slot @ None => *slot = Some(contrib),
        }
    }

    fn wants(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    fn propagate(&mut self, i: usize, g: &[f64]) {
        let node = &self.nodes[i];
        match &node.op {
            Op::Leaf => {}
            &Op::MatMul(a, b) => {
                let (m, k) = (self.shape(a)[0], self.shape(a)[1]);
                let n = self.shape(b)[1];
                if self.wants(a) {
                    let da = kernels::matmul_nt(g, self.value(b), m, n, k);
                    self.send(a, da);
                }
                if self.wants(b) {
                    let db = kernels::matmul_tn(self.value(a), g, m, k, n);
                    self.send(b, db);
                }
            }
            &Op::Linear { x, w, b } => {
                let (m, k) = (self.shape(x)[0], self.shape(x)[1]);
                let n = self.shape(w)[1];
                if self.wants(x) {
                    let dx = kernels::matmul_nt(g, self.value(w), m, n, k);
                    self.send(x, dx);
                }
                if self.wants(w) {
                    let dw = kernels::matmul_tn(self.value(x), g, m, k, n);
                    self.send(w, dw);
                }
                if self.wants(b) {
                    let mut db = vec![0.0; n];
                    for row in g.chunks(n) {
                        db.iter_mut().zip(row).for_each(|(d, &v)| *d += v);
                    }
                    self.send(b, db);
                }
            }
            &Op::Add(a, b) => {
                self.send(a, g.to_vec());
                self.send(b, g.to_vec());
            }
            &Op::Mul(a, b) => {
                if self.wants(a) {
                    let da = g.iter().zip(self.value(b)).map(|(x, y)| x * y).collect();
                    self.send(a, da);
                }
                if self.wants(b) {
                    let db = g.iter().zip(self.value(a)).map(|(x, y)| x * y).collect();
                    self.send(b, db);
                }
            }
            &Op::MulConst(x, c) => {
                self.send(x, g.iter().map(|v| v * c).collect());
            }
            &Op::Scale { x, s } => {
                let sv = self.value(s)[0];
                if self.wants(x) {
                    self.send(x, g.iter().map(|v| v * sv).collect());
                }
                if self.wants(s) {
                    let ds = g.iter().zip(self.value(x)).map(|(a, b)| a * b).sum();
                    self.send(s, vec![ds]);
                }
            }
            &Op::Relu(x) => {
                let dx = g
                    .iter()
                    .zip(self.value(x))
                    .map(|(&gv, &xv)| if xv > 0.0 { gv } else { 0.0 })
                    .collect();
                self.send(x, dx);
            }
            &Op::Transpose(x) => {
                // output is c×r
                let (r, c) = (self.shape(x)[0], self.shape(x)[1]);
                self.send(x, kernels::transpose(g, c, r));
            }
            &Op::Reshape(x) => {
                self.send(x, g.to_vec());
            }
            &Op::SoftmaxRows(x) => {
                let c = node.shape[1];
                let y = &node.value;
                let mut dx = vec![0.0; g.len()];
                for ((dr, gr), yr) in dx.chunks_mut(c).zip(g.chunks(c)).zip(y.chunks(c)) {
                    let dotv: f64 = gr.iter().zip(yr).map(|(a, b)| a * b).sum();
                    for ((d, &gv), &yv) in dr.iter_mut().zip(gr).zip(yr) {
                        *d = yv * (gv - dotv);
                    }
                }
                self.send(x, dx);
            }
            &Op::SliceRows { x, start } => {
                let c = cols_of(self.shape(x));
                let mut dx = vec![0.0; self.node(x).value.len()];
                dx[start * c..start * c + g.len()].copy_from_slice(g);
                self.send(x, dx);
            }
            Op::ConcatRows(xs) => {
                let xs = xs.clone();
                let mut off = 0;
                for x in xs {
                    let n = self.node(x).value.len();
                    if self.wants(x) {
                        self.send(x, g[off..off + n].to_vec());
                    }
                    off += n;
                }
            }
            &Op::Sum(x) => {
                let n = self.node(x).value.len();
                self.send(x, vec![g[0]; n]);
            }
            Op::CrossEntropy { logits, labels } => {
                let logits = *logits;
                let c = self.shape(logits)[1];
                let b = labels.len() as f64;
                let mut d = node.saved.clone().expect("cross-entropy probabilities");
                for (row, &l) in d.chunks_mut(c).zip(labels) {
                    row[l] -= 1.0;
                    row.iter_mut().for_each(|v| *v *= g[0] / b);
                }
                self.send(logits, d);
            }
        }
    }

    /// Gradient of the last backward pass w.r.t. `v`, if `v` tracks gradients
    /// and was reachable from the loss.
    pub fn grad(&self, v: Var) -> Option<&[f64]> {
        self.grads.get(v.0).and_then(|g| g.as_deref())
    }

    /// Adds the gradient of `v` into `t.grad` (no-op for frozen tensors).
    pub fn accumulate_into(&self, v: Var, t: &mut Tensor) -> Result<()> {
        match self.grad(v) {
            Some(g) => t.accumulate_grad(g),
            None => Ok(()),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(shape: &[usize], data: &[f64]) -> Tensor {
        Tensor::new(shape.to_vec(), data.to_vec()).unwrap()
    }

    #[test]
    fn matmul_identity_and_dimension_error() {
        let mut g = Graph::new();
        let a = g.leaf(&t(&[2, 2], &[1., 2., 3., 4.]));
        let i = g.leaf(&Tensor::identity(2));
        let y = g.matmul(a, i).unwrap();
        assert_eq!(g.value(y), &[1., 2., 3., 4.]);
        let bad = g.leaf(&Tensor::zeros(vec![3, 2]));
        match g.matmul(a, bad) {
            Err(Error::Dimension { lhs, rhs, .. }) => {
                assert_eq!(lhs, vec![2, 2]);
                assert_eq!(rhs, vec![3, 2]);
            }
            other => panic!("expected dimension error, got {other:?}"),
        }
    }

    #[test]
    fn softmax_analytic_rows() {
        let mut g = Graph::new();
        let x = g.leaf(&t(&[2, 3], &[5., 5., 5., 0., 2f64.ln(), f64::NEG_INFINITY]));
        // -inf is rejected
        assert!(matches!(g.softmax_rows(x), Err(Error::NumericDomain(_))));
        let x = g.leaf(&t(&[1, 3], &[5., 5., 5.]));
        let y = g.softmax_rows(x).unwrap();
        for v in g.value(y) {
            assert!((v - 1.0 / 3.0).abs() < 1e-15);
        }
        let x = g.leaf(&t(&[1, 2], &[0., 2f64.ln()]));
        let y = g.softmax_rows(x).unwrap();
        assert!((g.value(y)[0] - 1.0 / 3.0).abs() < 1e-15);
        assert!((g.value(y)[1] - 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn relu_flatten_transpose() {
        let mut g = Graph::new();
        let x = g.leaf(&t(&[3], &[-1., 0., 2.]));
        let r = g.relu(x).unwrap();
        assert_eq!(g.value(r), &[0., 0., 2.]);
        let m = g.leaf(&t(&[2, 2], &[1., 2., 3., 4.]));
        let f = g.flatten(m).unwrap();
        assert_eq!(g.shape(f), &[1, 4]);
        assert_eq!(g.value(f), &[1., 2., 3., 4.]);
        let tt = g.transpose(m).unwrap();
        assert_eq!(g.value(tt), &[1., 3., 2., 4.]);
    }

    #[test]
    fn sum_and_square_gradients() {
        let x = t(&[3], &[1.5, -2.0, 0.25]).with_grad(true);
        let mut g = Graph::new();
        let xv = g.leaf(&x);
        let s = g.sum(xv).unwrap();
        g.backward(s).unwrap();
        assert_eq!(g.grad(xv).unwrap(), &[1., 1., 1.]);

        let mut g = Graph::new();
        let xv = g.leaf(&x);
        let sq = g.mul(xv, xv).unwrap();
        let s = g.sum(sq).unwrap();
        let half = g.mul_const(s, 0.5).unwrap();
        g.backward(half).unwrap();
        assert_eq!(g.grad(xv).unwrap(), x.data());
    }

    #[test]
    fn backward_misuse_is_reported() {
        let x = t(&[2], &[1., 2.]).with_grad(true);
        let mut g = Graph::new();
        let xv = g.leaf(&x);
        assert!(matches!(g.backward(xv), Err(Error::Usage(_))));
        let mut g = Graph::new();
        let xv = g.leaf(&x);
        let s = g.sum(xv).unwrap();
        g.backward(s).unwrap();
        assert!(matches!(g.backward(s), Err(Error::Usage(_))));
        assert!(g.relu(xv).is_err());
    }

    #[test]
    fn frozen_leaves_get_no_gradient() {
        let x = t(&[2], &[1., 2.]);
        let w = t(&[2], &[3., 4.]).with_grad(true);
        let mut g = Graph::new();
        let (xv, wv) = (g.leaf(&x), g.leaf(&w));
        let p = g.mul(xv, wv).unwrap();
        let s = g.sum(p).unwrap();
        g.backward(s).unwrap();
        assert!(g.grad(xv).is_none());
        assert_eq!(g.grad(wv).unwrap(), &[1., 2.]);
    }

    #[test]
    fn cross_entropy_analytic_values() {
        let mut g = Graph::new();
        let logits = g.leaf(&Tensor::zeros(vec![3, 4]));
        let l = g.cross_entropy(logits, &[0, 1, 3]).unwrap();
        assert!((g.scalar(l) - 4f64.ln()).abs() < 1e-15);

        let mut g = Graph::new();
        let logits = g.leaf(&t(&[1, 4], &[0., 1000., 0., 0.]));
        let l = g.cross_entropy(logits, &[1]).unwrap();
        assert!(g.scalar(l).abs() < 1e-12);

        let mut g = Graph::new();
        let logits = g.leaf(&Tensor::zeros(vec![1, 4]));
        assert!(matches!(
            g.cross_entropy(logits, &[4]),
            Err(Error::Label { label: 4, classes: 4 })
        ));
    }

    #[test]
    fn scale_by_zero_collects_gradient() {
        let x = t(&[3], &[1., -2., 3.]).with_grad(true);
        let s = Tensor::scalar(0.0).with_grad(true);
        let mut g = Graph::new();
        let (xv, sv) = (g.leaf(&x), g.leaf(&s));
        let y = g.scale(xv, sv).unwrap();
        assert!(g.value(y).iter().all(|&v| v == 0.0));
        let w = g.leaf(&t(&[3], &[0.5, 1.0, 2.0]));
        let gy = g.mul(y, w).unwrap();
        let l = g.sum(gy).unwrap();
        g.backward(l).unwrap();
        // d s = Σ w ⊙ x
        assert_eq!(g.grad(sv).unwrap(), &[0.5 - 2.0 + 6.0]);
    }

    #[test]
    fn slice_concat_round_trip_gradient() {
        let x = Tensor::new(vec![4, 2], (0..8).map(f64::from).collect())
            .unwrap()
            .with_grad(true);
        let mut g = Graph::new();
        let xv = g.leaf(&x);
        let top = g.slice_rows(xv, 0, 2).unwrap();
        let bottom = g.slice_rows(xv, 2, 2).unwrap();
        let back = g.concat_rows(&[bottom, top]).unwrap();
        assert_eq!(g.value(back), &[4., 5., 6., 7., 0., 1., 2., 3.]);
        let w = g.leaf(&Tensor::new(vec![4, 2], (10..18).map(f64::from).collect()).unwrap());
        let p = g.mul(back, w).unwrap();
        let l = g.sum(p).unwrap();
        g.backward(l).unwrap();
        assert_eq!(g.grad(xv).unwrap(), &[14., 15., 16., 17., 10., 11., 12., 13.]);
    }
}
