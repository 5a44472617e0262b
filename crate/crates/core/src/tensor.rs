//! Dense row-major matrices and a small reverse-mode tape covering exactly
//! the operations the graph networks need.
//!
//! Parameters live outside the tape in a slice of [`Mat`]; a tape records
//! one forward pass and [`Tape::backward`] accumulates parameter gradients
//! into a caller-owned buffer. Losses whose gradient has a closed form
//! (softmax cross-entropy, the contrastive term, the diversity term) are
//! evaluated outside the tape and enter the backward pass as seeds.

use std::sync::Arc;

#[derive(Debug, Clone, PartialEq)]
pub struct Mat {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Mat {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Mat {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        assert_eq!(rows * cols, data.len(), "matrix buffer size");
        Mat { rows, cols, data }
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn shape(&self) -> [usize; 2] {
        [self.rows, self.cols]
    }

    /// `self @ other`
    pub fn matmul(&self, other: &Mat) -> Mat {
        assert_eq!(self.cols, other.rows, "matmul inner dimension");
        let mut out = Mat::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            let out_row = &mut out.data[i * other.cols..(i + 1) * other.cols];
            for (k, &a) in self.row(i).iter().enumerate() {
                if a == 0.0 {
                    continue;
                }
                axpy(a, other.row(k), out_row);
            }
        }
        out
    }

    /// `self @ other^T`
    pub fn matmul_t(&self, other: &Mat) -> Mat {
        assert_eq!(self.cols, other.cols, "matmul_t inner dimension");
        let mut out = Mat::zeros(self.rows, other.rows);
        for i in 0..self.rows {
            let a = self.row(i);
            for j in 0..other.rows {
                out.data[i * other.rows + j] = dot(a, other.row(j));
            }
        }
        out
    }

    /// `self^T @ other`
    pub fn t_matmul(&self, other: &Mat) -> Mat {
        assert_eq!(self.rows, other.rows, "t_matmul inner dimension");
        let mut out = Mat::zeros(self.cols, other.cols);
        for r in 0..self.rows {
            let b = other.row(r);
            for (i, &a) in self.row(r).iter().enumerate() {
                if a == 0.0 {
                    continue;
                }
                axpy(a, b, &mut out.data[i * other.cols..(i + 1) * other.cols]);
            }
        }
        out
    }

    pub fn add_assign(&mut self, other: &Mat) {
        assert_eq!(self.shape(), other.shape());
        axpy(1.0, &other.data, &mut self.data);
    }
}

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
pub fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub type NodeId = usize;

#[derive(Debug, Clone)]
enum Op {
    Param(usize),
    Const,
    MatMul(NodeId, NodeId),
    AddBias(NodeId, NodeId),
    Add(NodeId, NodeId),
    Scale(NodeId, f64),
    MulConst(NodeId, Arc<Vec<f64>>),
    Relu(NodeId),
    Sigmoid(NodeId),
    /// `out_v = x_v + sum over incident edges of w_e * x_u`
    GinAggregate {
        x: NodeId,
        w: NodeId,
        edges: Arc<Vec<(usize, usize)>>,
    },
    /// `out_e = [x_src || x_dst]`, or `[x_dst || x_src]` when reversed.
    GatherConcat {
        x: NodeId,
        edges: Arc<Vec<(usize, usize)>>,
        reversed: bool,
    },
    MeanRows(NodeId),
}

#[derive(Debug)]
struct Node {
    op: Op,
    value: Mat,
    requires_grad: bool,
}

/// Records a forward pass over a borrowed parameter slice.
pub struct Tape<'p> {
    params: &'p [Mat],
    nodes: Vec<Node>,
}

impl<'p> Tape<'p> {
    pub fn new(params: &'p [Mat]) -> Self {
        Tape {
            params,
            nodes: Vec::new(),
        }
    }

    pub fn value(&self, id: NodeId) -> &Mat {
        match self.nodes[id].op {
            Op::Param(p) => &self.params[p],
            _ => &self.nodes[id].value,
        }
    }

    fn push(&mut self, op: Op, value: Mat, requires_grad: bool) -> NodeId {
        self.nodes.push(Node {
            op,
            value,
            requires_grad,
        });
        self.nodes.len() - 1
    }

    fn rg(&self, id: NodeId) -> bool {
        self.nodes[id].requires_grad
    }

    pub fn param(&mut self, index: usize) -> NodeId {
        self.push(Op::Param(index), Mat::zeros(0, 0), true)
    }

    pub fn constant(&mut self, value: Mat) -> NodeId {
        self.push(Op::Const, value, false)
    }

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let v = self.value(a).matmul(self.value(b));
        let rg = self.rg(a) || self.rg(b);
        self.push(Op::MatMul(a, b), v, rg)
    }

    pub fn add_bias(&mut self, a: NodeId, bias: NodeId) -> NodeId {
        let b = self.value(bias);
        assert_eq!(b.rows, 1);
        let mut v = self.value(a).clone();
        assert_eq!(v.cols, b.cols);
        for r in 0..v.rows {
            axpy(1.0, &b.data, v.row_mut(r));
        }
        let rg = self.rg(a) || self.rg(bias);
        self.push(Op::AddBias(a, bias), v, rg)
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let mut v = self.value(a).clone();
        v.add_assign(self.value(b));
        let rg = self.rg(a) || self.rg(b);
        self.push(Op::Add(a, b), v, rg)
    }

    pub fn scale(&mut self, a: NodeId, c: f64) -> NodeId {
        let mut v = self.value(a).clone();
        v.data.iter_mut().for_each(|x| *x *= c);
        let rg = self.rg(a);
        self.push(Op::Scale(a, c), v, rg)
    }

    /// Element-wise product with a constant buffer of the same size.
    pub fn mul_const(&mut self, a: NodeId, mask: Arc<Vec<f64>>) -> NodeId {
        let mut v = self.value(a).clone();
        assert_eq!(v.data.len(), mask.len());
        v.data.iter_mut().zip(mask.iter()).for_each(|(x, m)| *x *= m);
        let rg = self.rg(a);
        self.push(Op::MulConst(a, mask), v, rg)
    }

    pub fn relu(&mut self, a: NodeId) -> NodeId {
        let mut v = self.value(a).clone();
        v.data.iter_mut().for_each(|x| *x = x.max(0.0));
        let rg = self.rg(a);
        self.push(Op::Relu(a), v, rg)
    }

    pub fn sigmoid(&mut self, a: NodeId) -> NodeId {
        let mut v = self.value(a).clone();
        v.data.iter_mut().for_each(|x| *x = sigmoid(*x));
        let rg = self.rg(a);
        self.push(Op::Sigmoid(a), v, rg)
    }

    /// Weighted sum aggregation with a self term. `w` is an `[E x 1]` node.
    pub fn gin_aggregate(&mut self, x: NodeId, w: NodeId, edges: Arc<Vec<(usize, usize)>>) -> NodeId {
        let xv = self.value(x);
        let wv = self.value(w);
        assert_eq!(wv.data.len(), edges.len(), "edge weight alignment");
        let mut out = xv.clone();
        for (e, &(s, d)) in edges.iter().enumerate() {
            let we = wv.data[e];
            if we == 0.0 {
                continue;
            }
            let cols = xv.cols;
            axpy(we, xv.row(d), &mut out.data[s * cols..(s + 1) * cols]);
            axpy(we, xv.row(s), &mut out.data[d * cols..(d + 1) * cols]);
        }
        let rg = self.rg(x) || self.rg(w);
        self.push(Op::GinAggregate { x, w, edges }, out, rg)
    }

    pub fn gather_concat(&mut self, x: NodeId, edges: Arc<Vec<(usize, usize)>>, reversed: bool) -> NodeId {
        let xv = self.value(x);
        let d = xv.cols;
        let mut out = Mat::zeros(edges.len(), 2 * d);
        for (e, &(s, t)) in edges.iter().enumerate() {
            let (a, b) = if reversed { (t, s) } else { (s, t) };
            let row = out.row_mut(e);
            row[..d].copy_from_slice(xv.row(a));
            row[d..].copy_from_slice(xv.row(b));
        }
        let rg = self.rg(x);
        self.push(Op::GatherConcat { x, edges, reversed }, out, rg)
    }

    pub fn mean_rows(&mut self, a: NodeId) -> NodeId {
        let av = self.value(a);
        let mut out = Mat::zeros(1, av.cols);
        if av.rows > 0 {
            for r in 0..av.rows {
                axpy(1.0, av.row(r), &mut out.data);
            }
            let inv = 1.0 / av.rows as f64;
            out.data.iter_mut().for_each(|x| *x *= inv);
        }
        let rg = self.rg(a);
        self.push(Op::MeanRows(a), out, rg)
    }

    /// Back-propagates the given output gradients and adds parameter
    /// gradients into `param_grads` (aligned with the parameter slice).
    pub fn backward(&self, seeds: &[(NodeId, &Mat)], param_grads: &mut [Mat]) {
        let mut grads: Vec<Option<Mat>> = vec![None; self.nodes.len()];
        for &(id, g) in seeds {
            assert_eq!(self.value(id).shape(), g.shape(), "seed shape");
            accumulate(&mut grads[id], g);
        }
        for id in (0..self.nodes.len()).rev() {
            let Some(g) = grads[id].take() else { continue };
            let node = &self.nodes[id];
            if !node.requires_grad {
                continue;
            }
            match &node.op {
                Op::Param(p) => param_grads[*p].add_assign(&g),
                Op::Const => {}
                Op::MatMul(a, b) => {
                    if self.rg(*a) {
                        let ga = g.matmul_t(self.value(*b));
                        accumulate(&mut grads[*a], &ga);
                    }
                    if self.rg(*b) {
                        let gb = self.value(*a).t_matmul(&g);
                        accumulate(&mut grads[*b], &gb);
                    }
                }
                Op::AddBias(a, bias) => {
                    if self.rg(*bias) {
                        let mut gb = Mat::zeros(1, g.cols);
                        for r in 0..g.rows {
                            axpy(1.0, g.row(r), &mut gb.data);
                        }
                        accumulate(&mut grads[*bias], &gb);
                    }
                    if self.rg(*a) {
                        accumulate(&mut grads[*a], &g);
                    }
                }
                Op::Add(a, b) => {
                    if self.rg(*a) {
                        accumulate(&mut grads[*a], &g);
                    }
                    if self.rg(*b) {
                        accumulate(&mut grads[*b], &g);
                    }
                }
                Op::Scale(a, c) => {
                    let mut ga = g;
                    ga.data.iter_mut().for_each(|x| *x *= c);
                    accumulate(&mut grads[*a], &ga);
                }
                Op::MulConst(a, mask) => {
                    let mut ga = g;
                    ga.data.iter_mut().zip(mask.iter()).for_each(|(x, m)| *x *= m);
                    accumulate(&mut grads[*a], &ga);
                }
                Op::Relu(a) => {
                    let mut ga = g;
                    ga.data.iter_mut().zip(&node.value.data).for_each(|(x, &y)| {
                        if y <= 0.0 {
                            *x = 0.0
                        }
                    });
                    accumulate(&mut grads[*a], &ga);
                }
                Op::Sigmoid(a) => {
                    let mut ga = g;
                    ga.data
                        .iter_mut()
                        .zip(&node.value.data)
                        .for_each(|(x, &s)| *x *= s * (1.0 - s));
                    accumulate(&mut grads[*a], &ga);
                }
                Op::GinAggregate { x, w, edges } => {
                    let xv = self.value(*x);
                    let wv = self.value(*w);
                    let cols = xv.cols;
                    if self.rg(*w) {
                        let mut gw = Mat::zeros(edges.len(), 1);
                        for (e, &(s, d)) in edges.iter().enumerate() {
                            gw.data[e] = dot(g.row(s), xv.row(d)) + dot(g.row(d), xv.row(s));
                        }
                        accumulate(&mut grads[*w], &gw);
                    }
                    if self.rg(*x) {
                        let mut gx = g.clone();
                        for (e, &(s, d)) in edges.iter().enumerate() {
                            let we = wv.data[e];
                            if we == 0.0 {
                                continue;
                            }
                            axpy(we, g.row(s), &mut gx.data[d * cols..(d + 1) * cols]);
                            axpy(we, g.row(d), &mut gx.data[s * cols..(s + 1) * cols]);
                        }
                        accumulate(&mut grads[*x], &gx);
                    }
                }
                Op::GatherConcat { x, edges, reversed } => {
                    let xv = self.value(*x);
                    let d = xv.cols;
                    let mut gx = Mat::zeros(xv.rows, d);
                    for (e, &(s, t)) in edges.iter().enumerate() {
                        let (a, b) = if *reversed { (t, s) } else { (s, t) };
                        let row = g.row(e);
                        axpy(1.0, &row[..d], &mut gx.data[a * d..(a + 1) * d]);
                        axpy(1.0, &row[d..], &mut gx.data[b * d..(b + 1) * d]);
                    }
                    accumulate(&mut grads[*x], &gx);
                }
                Op::MeanRows(a) => {
                    let rows = self.value(*a).rows;
                    let mut ga = Mat::zeros(rows, g.cols);
                    if rows > 0 {
                        let inv = 1.0 / rows as f64;
                        for r in 0..rows {
                            axpy(inv, &g.data, ga.row_mut(r));
                        }
                    }
                    accumulate(&mut grads[*a], &ga);
                }
            }
        }
    }
}

fn accumulate(slot: &mut Option<Mat>, g: &Mat) {
    match slot {
        Some(acc) => acc.add_assign(g),
        None => *slot = Some(g.clone()),
    }
}
