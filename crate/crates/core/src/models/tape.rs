//! Minimal reverse-mode differentiation over [`Matrix`] values.
//!
//! A [`Tape`] records one forward computation against a borrowed
//! [`ParamSet`]; [`Tape::backward`] returns gradients per parameter slot.
//! Everything is single-threaded and evaluated in recording order, so results
//! are bit-reproducible.

use crate::models::params::{Grads, ParamSet};
use crate::models::tensor::Matrix;

pub type NodeId = usize;

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    Param(usize),
    Embed { slot: usize, ids: Vec<usize> },
    MatMul(NodeId, NodeId),
    MatMulT(NodeId, NodeId),
    Add(NodeId, NodeId),
    AddRow(NodeId, NodeId),
    Tanh(NodeId),
    Exp(NodeId),
    Scale(NodeId, f64),
    SoftmaxRows(NodeId),
    LogSoftmaxRows(NodeId),
    MeanRows(NodeId, usize, usize),
    ConcatCols(Vec<NodeId>),
    Pick(NodeId, usize, usize),
    WeightedSum(Vec<(NodeId, f64)>),
}

struct Node {
    value: Matrix,
    op: Op,
}

pub struct Tape<'p> {
    params: &'p ParamSet,
    nodes: Vec<Node>,
    param_nodes: Vec<Option<NodeId>>,
}

impl<'p> Tape<'p> {
    pub fn new(params: &'p ParamSet) -> Self {
        Tape {
            params,
            nodes: Vec::with_capacity(128),
            param_nodes: vec![None; params.len()],
        }
    }

    fn push(&mut self, value: Matrix, op: Op) -> NodeId {
        self.nodes.push(Node { value, op });
        self.nodes.len() - 1
    }

    pub fn value(&self, id: NodeId) -> &Matrix {
        &self.nodes[id].value
    }

    pub fn constant(&mut self, value: Matrix) -> NodeId {
        self.push(value, Op::Leaf)
    }

    /// Whole parameter tensor as a node (converted once per tape).
    pub fn param(&mut self, slot: usize) -> NodeId {
        if let Some(id) = self.param_nodes[slot] {
            return id;
        }
        let value = self.params.get(slot).to_matrix();
        let id = self.push(value, Op::Param(slot));
        self.param_nodes[slot] = Some(id);
        id
    }

    /// Gathers rows `ids` of a parameter table.
    pub fn embed(&mut self, slot: usize, ids: &[usize]) -> NodeId {
        let p = self.params.get(slot);
        let mut m = Matrix::zeros(ids.len(), p.cols);
        for (r, &id) in ids.iter().enumerate() {
            for (o, &x) in m.row_mut(r).iter_mut().zip(p.row(id)) {
                *o = x as f64;
            }
        }
        self.push(
            m,
            Op::Embed {
                slot,
                ids: ids.to_vec(),
            },
        )
    }

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let v = self.value(a).matmul(self.value(b));
        self.push(v, Op::MatMul(a, b))
    }

    /// `a · bᵀ`
    pub fn matmul_t(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let v = self.value(a).matmul_t(self.value(b));
        self.push(v, Op::MatMulT(a, b))
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let mut v = self.value(a).clone();
        v.add_assign(self.value(b));
        self.push(v, Op::Add(a, b))
    }

    /// Adds a `1×C` row to every row of `a`.
    pub fn add_row(&mut self, a: NodeId, row: NodeId) -> NodeId {
        let mut v = self.value(a).clone();
        let r = self.value(row);
        assert_eq!(r.rows, 1);
        assert_eq!(r.cols, v.cols);
        for i in 0..v.rows {
            for (o, x) in v.row_mut(i).iter_mut().zip(&r.data) {
                *o += x;
            }
        }
        self.push(v, Op::AddRow(a, row))
    }

    pub fn tanh(&mut self, a: NodeId) -> NodeId {
        let v = self.value(a).map(f64::tanh);
        self.push(v, Op::Tanh(a))
    }

    pub fn exp(&mut self, a: NodeId) -> NodeId {
        let v = self.value(a).map(f64::exp);
        self.push(v, Op::Exp(a))
    }

    pub fn scale(&mut self, a: NodeId, s: f64) -> NodeId {
        let v = self.value(a).map(|x| x * s);
        self.push(v, Op::Scale(a, s))
    }

    pub fn softmax_rows(&mut self, a: NodeId) -> NodeId {
        let x = self.value(a);
        let mut v = Matrix::zeros(x.rows, x.cols);
        for r in 0..x.rows {
            let s = crate::models::tensor::softmax(x.row(r));
            v.row_mut(r).copy_from_slice(&s);
        }
        self.push(v, Op::SoftmaxRows(a))
    }

    pub fn log_softmax_rows(&mut self, a: NodeId) -> NodeId {
        let x = self.value(a);
        let mut v = Matrix::zeros(x.rows, x.cols);
        for r in 0..x.rows {
            let row = x.row(r);
            let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let lse = max + row.iter().map(|y| (y - max).exp()).sum::<f64>().ln();
            for (o, y) in v.row_mut(r).iter_mut().zip(row) {
                *o = y - lse;
            }
        }
        self.push(v, Op::LogSoftmaxRows(a))
    }

    /// Mean of rows `start..end` as a `1×C` row.
    pub fn mean_rows(&mut self, a: NodeId, start: usize, end: usize) -> NodeId {
        assert!(end > start, "mean over an empty row range");
        let v = Matrix::row_vector(self.value(a).mean_rows(start, end));
        self.push(v, Op::MeanRows(a, start, end))
    }

    /// Horizontal concatenation of `1×Cᵢ` rows.
    pub fn concat_cols(&mut self, parts: &[NodeId]) -> NodeId {
        let mut data = Vec::new();
        for &p in parts {
            let v = self.value(p);
            assert_eq!(v.rows, 1, "concat_cols expects row vectors");
            data.extend_from_slice(&v.data);
        }
        self.push(Matrix::row_vector(data), Op::ConcatCols(parts.to_vec()))
    }

    /// Scalar element `a[row, col]`.
    pub fn pick(&mut self, a: NodeId, row: usize, col: usize) -> NodeId {
        let v = Matrix::from_vec(1, 1, vec![self.value(a).at(row, col)]);
        self.push(v, Op::Pick(a, row, col))
    }

    /// `Σ wᵢ·xᵢ` over scalar nodes.
    pub fn weighted_sum(&mut self, terms: &[(NodeId, f64)]) -> NodeId {
        let s = terms.iter().map(|&(n, w)| w * self.value(n).scalar()).sum();
        self.push(Matrix::from_vec(1, 1, vec![s]), Op::WeightedSum(terms.to_vec()))
    }

    /// Gradients of the scalar node `loss` with respect to every parameter
    /// slot touched by this tape.
    pub fn backward(&self, loss: NodeId) -> Grads {
        let mut grads = Grads::new(self.params);
        let mut adj: Vec<Option<Matrix>> = (0..self.nodes.len()).map(|_| None).collect();
        adj[loss] = Some(Matrix::from_vec(1, 1, vec![1.0]));
        for id in (0..=loss).rev() {
            let Some(g) = adj[id].take() else { continue };
            let node = &self.nodes[id];
            match &node.op {
                Op::Leaf => {}
                Op::Param(slot) => grads.accumulate(*slot, &g),
                Op::Embed { slot, ids } => grads.accumulate_rows(*slot, ids, &g),
                Op::MatMul(a, b) => {
                    let da = g.matmul_t(self.value(*b));
                    let db = self.value(*a).t_matmul(&g);
                    acc(&mut adj, *a, da);
                    acc(&mut adj, *b, db);
                }
                Op::MatMulT(a, b) => {
                    // C = A Bᵀ: dA = dC B, dB = dCᵀ A
                    let da = g.matmul(self.value(*b));
                    let db = g.t_matmul(self.value(*a));
                    acc(&mut adj, *a, da);
                    acc(&mut adj, *b, db);
                }
                Op::Add(a, b) => {
                    acc(&mut adj, *a, g.clone());
                    acc(&mut adj, *b, g);
                }
                Op::AddRow(a, row) => {
                    let mut dr = Matrix::zeros(1, g.cols);
                    for r in 0..g.rows {
                        for (o, x) in dr.data.iter_mut().zip(g.row(r)) {
                            *o += x;
                        }
                    }
                    acc(&mut adj, *a, g);
                    acc(&mut adj, *row, dr);
                }
                Op::Tanh(a) => {
                    let y = &node.value;
                    let mut d = g;
                    for (o, t) in d.data.iter_mut().zip(&y.data) {
                        *o *= 1.0 - t * t;
                    }
                    acc(&mut adj, *a, d);
                }
                Op::Exp(a) => {
                    let mut d = g;
                    for (o, y) in d.data.iter_mut().zip(&node.value.data) {
                        *o *= y;
                    }
                    acc(&mut adj, *a, d);
                }
                Op::Scale(a, s) => acc(&mut adj, *a, g.map(|x| x * s)),
                Op::SoftmaxRows(a) => {
                    let y = &node.value;
                    let mut d = Matrix::zeros(y.rows, y.cols);
                    for r in 0..y.rows {
                        let (yr, gr) = (y.row(r), g.row(r));
                        let dot: f64 = yr.iter().zip(gr).map(|(p, q)| p * q).sum();
                        for (c, o) in d.row_mut(r).iter_mut().enumerate() {
                            *o = yr[c] * (gr[c] - dot);
                        }
                    }
                    acc(&mut adj, *a, d);
                }
                Op::LogSoftmaxRows(a) => {
                    let y = &node.value;
                    let mut d = Matrix::zeros(y.rows, y.cols);
                    for r in 0..y.rows {
                        let (yr, gr) = (y.row(r), g.row(r));
                        let total: f64 = gr.iter().sum();
                        for (c, o) in d.row_mut(r).iter_mut().enumerate() {
                            *o = gr[c] - yr[c].exp() * total;
                        }
                    }
                    acc(&mut adj, *a, d);
                }
                Op::MeanRows(a, start, end) => {
                    let src = self.value(*a);
                    let mut d = Matrix::zeros(src.rows, src.cols);
                    let n = (end - start) as f64;
                    for r in *start..*end {
                        for (o, x) in d.row_mut(r).iter_mut().zip(&g.data) {
                            *o = x / n;
                        }
                    }
                    acc(&mut adj, *a, d);
                }
                Op::ConcatCols(parts) => {
                    let mut off = 0;
                    for &p in parts {
                        let w = self.value(p).cols;
                        acc(
                            &mut adj,
                            p,
                            Matrix::row_vector(g.data[off..off + w].to_vec()),
                        );
                        off += w;
                    }
                }
                Op::Pick(a, row, col) => {
                    let src = self.value(*a);
                    let mut d = Matrix::zeros(src.rows, src.cols);
                    d.data[row * src.cols + col] = g.scalar();
                    acc(&mut adj, *a, d);
                }
                Op::WeightedSum(terms) => {
                    for &(n, w) in terms {
                        acc(&mut adj, n, Matrix::from_vec(1, 1, vec![w * g.scalar()]));
                    }
                }
            }
        }
        grads
    }
}

fn acc(adj: &mut [Option<Matrix>], id: NodeId, g: Matrix) {
    match &mut adj[id] {
        Some(existing) => existing.add_assign(&g),
        slot @ None => *slot = Some(g),
    }
}
