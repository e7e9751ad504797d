//! Define-by-run reverse-mode differentiation over [`Tensor`] values.
//!
//! A [`Graph`] records every primitive applied to its [`Var`]s. Nodes are only
//! ever appended, so node ids are a topological order and the backward sweep
//! is a single reverse pass. Gradients from shared subexpressions are summed.
//!
//! ```
//! use eapred::numerics::{Graph, Tensor};
//!
//! let g = Graph::new();
//! let x = g.param(Tensor::scalar(3.0));
//! let y = x.mul(x).unwrap();
//! let grads = g.backward(y).unwrap();
//! assert_eq!(grads.wrt(x).data(), &[6.0]);
//! ```

use std::cell::{Ref, RefCell};
use std::rc::Rc;

use super::kernels;
use super::rng::RngStream;
use super::{Mode, NumericsError, Tensor};

const LAYER_NORM_EPS: f64 = 1e-5;

enum Op {
    Leaf,
    MatMul(usize, usize),
    MatMulBt(usize, usize),
    Transpose(usize),
    Add(usize, usize),
    Sub(usize, usize),
    Mul(usize, usize),
    AddRow(usize, usize),
    MulRow(usize, usize),
    Scale(usize, f64),
    Sigmoid(usize),
    Tanh(usize),
    Relu(usize),
    Log(usize),
    Exp(usize),
    Softmax { input: usize, axis: usize },
    Dropout { input: usize, mask: Vec<f64> },
    SliceCols { input: usize, start: usize },
    ConcatCols(Vec<usize>),
    Row { input: usize, row: usize },
    StackRows(Vec<usize>),
    MeanRows(usize),
    Sum(usize),
    LayerNorm { input: usize, inv_std: Vec<f64> },
    Pick { input: usize, index: usize },
    ClampMin { input: usize, floor: f64 },
}

struct Node {
    value: Rc<Tensor>,
    op: Op,
    requires_grad: bool,
}

/// Computation graph for one forward pass.
#[derive(Default)]
pub struct Graph {
    nodes: RefCell<Vec<Node>>,
}

/// Handle to a node of a [`Graph`].
#[derive(Clone, Copy)]
pub struct Var<'g> {
    graph: &'g Graph,
    id: usize,
}

impl std::fmt::Debug for Var<'_> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "Var({}, {:?})", self.id, self.value().shape())
    }
}

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Leaf that receives a gradient.
    pub fn param(&self, value: Tensor) -> Var<'_> {
        self.push(value, Op::Leaf, true)
    }

    /// Leaf treated as a constant by [`Graph::backward`].
    pub fn constant(&self, value: Tensor) -> Var<'_> {
        self.push(value, Op::Leaf, false)
    }

    fn push(&self, value: Tensor, op: Op, requires_grad: bool) -> Var<'_> {
        let mut nodes = self.nodes.borrow_mut();
        nodes.push(Node {
            value: Rc::new(value),
            op,
            requires_grad,
        });
        Var {
            graph: self,
            id: nodes.len() - 1,
        }
    }

    fn node_value(&self, id: usize) -> Rc<Tensor> {
        Rc::clone(&self.nodes.borrow()[id].value)
    }

    fn needs_grad(&self, ids: &[usize]) -> bool {
        let nodes = self.nodes.borrow();
        ids.iter().any(|&i| nodes[i].requires_grad)
    }

    fn emit(&self, op_name: &'static str, value: Tensor, op: Op, parents: &[usize]) -> Result<Var<'_>, NumericsError> {
        if !value.is_finite() {
            return Err(NumericsError::NonFinite { op: op_name });
        }
        let requires_grad = self.needs_grad(parents);
        Ok(self.push(value, op, requires_grad))
    }

    /// Backpropagates from a scalar node.
    pub fn backward(&self, loss: Var<'_>) -> Result<Gradients, NumericsError> {
        let nodes = self.nodes.borrow();
        if nodes[loss.id].value.len() != 1 {
            return Err(NumericsError::shape("backward", nodes[loss.id].value.shape(), &[1]));
        }
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; nodes.len()];
        grads[loss.id] = Some(vec![1.0]);
        for id in (0..=loss.id).rev() {
            let Some(g) = grads[id].take() else { continue };
            if nodes[id].requires_grad {
                propagate(&nodes, id, &g, &mut grads);
            }
            grads[id] = Some(g);
        }
        let shapes = nodes.iter().map(|n| n.value.shape().to_vec()).collect();
        Ok(Gradients { grads, shapes })
    }
}

/// Gradients of one backward sweep, indexed by node.
pub struct Gradients {
    grads: Vec<Option<Vec<f64>>>,
    shapes: Vec<Vec<usize>>,
}

impl Gradients {
    pub fn get(&self, var: Var<'_>) -> Option<Tensor> {
        self.grads[var.id]
            .as_ref()
            .map(|g| Tensor::from_parts_unchecked(self.shapes[var.id].clone(), g.clone()))
    }

    /// Gradient with respect to `var`, zero if the loss does not depend on it.
    pub fn wrt(&self, var: Var<'_>) -> Tensor {
        self.get(var).unwrap_or_else(|| Tensor::zeros(&self.shapes[var.id]))
    }

    /// Moves the gradient out, leaving nothing behind.
    pub fn take(&mut self, var: Var<'_>) -> Tensor {
        match self.grads[var.id].take() {
            Some(g) => Tensor::from_parts_unchecked(self.shapes[var.id].clone(), g),
            None => Tensor::zeros(&self.shapes[var.id]),
        }
    }
}

fn slot<'a>(grads: &'a mut [Option<Vec<f64>>], nodes: &[Node], id: usize) -> Option<&'a mut Vec<f64>> {
    if !nodes[id].requires_grad {
        return None;
    }
    let len = nodes[id].value.len();
    Some(grads[id].get_or_insert_with(|| vec![0.0; len]))
}

fn add_into(dst: &mut [f64], src: &[f64]) {
    for (d, s) in dst.iter_mut().zip(src) {
        *d += s;
    }
}

fn propagate(nodes: &[Node], id: usize, g: &[f64], grads: &mut [Option<Vec<f64>>]) {
    let out = &nodes[id].value;
    match &nodes[id].op {
        Op::Leaf => {}
        Op::MatMul(a, b) => {
            let (av, bv) = (&nodes[*a].value, &nodes[*b].value);
            let (m, k) = av.dims2();
            let n = bv.cols();
            if let Some(da) = slot(grads, nodes, *a) {
                kernels::matmul_bt(g, bv.data(), da, m, n, k);
            }
            if let Some(db) = slot(grads, nodes, *b) {
                kernels::matmul_at(av.data(), g, db, m, k, n);
            }
        }
        Op::MatMulBt(a, b) => {
            let (av, bv) = (&nodes[*a].value, &nodes[*b].value);
            let (m, k) = av.dims2();
            let n = bv.rows();
            if let Some(da) = slot(grads, nodes, *a) {
                kernels::matmul(g, bv.data(), da, m, n, k);
            }
            if let Some(db) = slot(grads, nodes, *b) {
                kernels::matmul_at(g, av.data(), db, m, n, k);
            }
        }
        Op::Transpose(a) => {
            let (r, c) = nodes[*a].value.dims2();
            if let Some(da) = slot(grads, nodes, *a) {
                for i in 0..r {
                    for j in 0..c {
                        da[i * c + j] += g[j * r + i];
                    }
                }
            }
        }
        Op::Add(a, b) => {
            if let Some(da) = slot(grads, nodes, *a) {
                add_into(da, g);
            }
            if let Some(db) = slot(grads, nodes, *b) {
                add_into(db, g);
            }
        }
        Op::Sub(a, b) => {
            if let Some(da) = slot(grads, nodes, *a) {
                add_into(da, g);
            }
            if let Some(db) = slot(grads, nodes, *b) {
                for (d, s) in db.iter_mut().zip(g) {
                    *d -= s;
                }
            }
        }
        Op::Mul(a, b) => {
            let (av, bv) = (Rc::clone(&nodes[*a].value), Rc::clone(&nodes[*b].value));
            if let Some(da) = slot(grads, nodes, *a) {
                for ((d, gi), bi) in da.iter_mut().zip(g).zip(bv.data()) {
                    *d += gi * bi;
                }
            }
            if let Some(db) = slot(grads, nodes, *b) {
                for ((d, gi), ai) in db.iter_mut().zip(g).zip(av.data()) {
                    *d += gi * ai;
                }
            }
        }
        Op::AddRow(a, row) => {
            let c = out.cols();
            if let Some(da) = slot(grads, nodes, *a) {
                add_into(da, g);
            }
            if let Some(dr) = slot(grads, nodes, *row) {
                for g_row in g.chunks_exact(c) {
                    add_into(dr, g_row);
                }
            }
        }
        Op::MulRow(a, row) => {
            let c = out.cols();
            let (av, rv) = (Rc::clone(&nodes[*a].value), Rc::clone(&nodes[*row].value));
            if let Some(da) = slot(grads, nodes, *a) {
                for (d_row, g_row) in da.chunks_exact_mut(c).zip(g.chunks_exact(c)) {
                    for ((d, gi), ri) in d_row.iter_mut().zip(g_row).zip(rv.data()) {
                        *d += gi * ri;
                    }
                }
            }
            if let Some(dr) = slot(grads, nodes, *row) {
                for (a_row, g_row) in av.data().chunks_exact(c).zip(g.chunks_exact(c)) {
                    for ((d, gi), ai) in dr.iter_mut().zip(g_row).zip(a_row) {
                        *d += gi * ai;
                    }
                }
            }
        }
        Op::Scale(a, s) => {
            if let Some(da) = slot(grads, nodes, *a) {
                kernels::axpy(*s, g, da);
            }
        }
        Op::Sigmoid(a) => {
            if let Some(da) = slot(grads, nodes, *a) {
                for ((d, gi), y) in da.iter_mut().zip(g).zip(out.data()) {
                    *d += gi * y * (1.0 - y);
                }
            }
        }
        Op::Tanh(a) => {
            if let Some(da) = slot(grads, nodes, *a) {
                for ((d, gi), y) in da.iter_mut().zip(g).zip(out.data()) {
                    *d += gi * (1.0 - y * y);
                }
            }
        }
        Op::Relu(a) => {
            let av = Rc::clone(&nodes[*a].value);
            if let Some(da) = slot(grads, nodes, *a) {
                for ((d, gi), x) in da.iter_mut().zip(g).zip(av.data()) {
                    if *x > 0.0 {
                        *d += gi;
                    }
                }
            }
        }
        Op::Log(a) => {
            let av = Rc::clone(&nodes[*a].value);
            if let Some(da) = slot(grads, nodes, *a) {
                for ((d, gi), x) in da.iter_mut().zip(g).zip(av.data()) {
                    *d += gi / x;
                }
            }
        }
        Op::Exp(a) => {
            if let Some(da) = slot(grads, nodes, *a) {
                for ((d, gi), y) in da.iter_mut().zip(g).zip(out.data()) {
                    *d += gi * y;
                }
            }
        }
        Op::Softmax { input, axis } => {
            let (r, c) = out.dims2();
            let y = out.data();
            if let Some(da) = slot(grads, nodes, *input) {
                if *axis == 1 {
                    for i in 0..r {
                        let (ys, gs) = (&y[i * c..(i + 1) * c], &g[i * c..(i + 1) * c]);
                        let inner = kernels::dot(ys, gs);
                        for j in 0..c {
                            da[i * c + j] += ys[j] * (gs[j] - inner);
                        }
                    }
                } else {
                    for j in 0..c {
                        let inner: f64 = (0..r).map(|i| y[i * c + j] * g[i * c + j]).sum();
                        for i in 0..r {
                            da[i * c + j] += y[i * c + j] * (g[i * c + j] - inner);
                        }
                    }
                }
            }
        }
        Op::Dropout { input, mask } => {
            if let Some(da) = slot(grads, nodes, *input) {
                for ((d, gi), m) in da.iter_mut().zip(g).zip(mask) {
                    *d += gi * m;
                }
            }
        }
        Op::SliceCols { input, start } => {
            let in_cols = nodes[*input].value.cols();
            let width = out.cols();
            if let Some(da) = slot(grads, nodes, *input) {
                for (i, g_row) in g.chunks_exact(width).enumerate() {
                    let base = i * in_cols + start;
                    add_into(&mut da[base..base + width], g_row);
                }
            }
        }
        Op::ConcatCols(parts) => {
            let total = out.cols();
            let mut offset = 0;
            for &p in parts {
                let width = nodes[p].value.cols();
                if let Some(dp) = slot(grads, nodes, p) {
                    for (i, d_row) in dp.chunks_exact_mut(width).enumerate() {
                        let base = i * total + offset;
                        add_into(d_row, &g[base..base + width]);
                    }
                }
                offset += width;
            }
        }
        Op::Row { input, row } => {
            let c = out.len();
            if let Some(da) = slot(grads, nodes, *input) {
                add_into(&mut da[row * c..(row + 1) * c], g);
            }
        }
        Op::StackRows(parts) => {
            let c = out.cols();
            for (i, &p) in parts.iter().enumerate() {
                if let Some(dp) = slot(grads, nodes, p) {
                    add_into(dp, &g[i * c..(i + 1) * c]);
                }
            }
        }
        Op::MeanRows(a) => {
            let (r, c) = nodes[*a].value.dims2();
            let inv = 1.0 / r as f64;
            if let Some(da) = slot(grads, nodes, *a) {
                for d_row in da.chunks_exact_mut(c) {
                    kernels::axpy(inv, g, d_row);
                }
            }
        }
        Op::Sum(a) => {
            if let Some(da) = slot(grads, nodes, *a) {
                for d in da.iter_mut() {
                    *d += g[0];
                }
            }
        }
        Op::LayerNorm { input, inv_std } => {
            let c = out.cols();
            let y = out.data();
            if let Some(da) = slot(grads, nodes, *input) {
                for (i, &s) in inv_std.iter().enumerate() {
                    let (ys, gs) = (&y[i * c..(i + 1) * c], &g[i * c..(i + 1) * c]);
                    let mean_g = gs.iter().sum::<f64>() / c as f64;
                    let mean_gy = kernels::dot(gs, ys) / c as f64;
                    for j in 0..c {
                        da[i * c + j] += s * (gs[j] - mean_g - ys[j] * mean_gy);
                    }
                }
            }
        }
        Op::Pick { input, index } => {
            if let Some(da) = slot(grads, nodes, *input) {
                da[*index] += g[0];
            }
        }
        Op::ClampMin { input, floor } => {
            let av = Rc::clone(&nodes[*input].value);
            if let Some(da) = slot(grads, nodes, *input) {
                for ((d, gi), x) in da.iter_mut().zip(g).zip(av.data()) {
                    if *x >= *floor {
                        *d += gi;
                    }
                }
            }
        }
    }
}

impl<'g> Var<'g> {
    pub fn id(&self) -> usize {
        self.id
    }

    pub fn value(&self) -> Rc<Tensor> {
        self.graph.node_value(self.id)
    }

    /// Borrow of the node value; must be dropped before new ops are recorded.
    pub fn value_ref(&self) -> Ref<'_, Tensor> {
        Ref::map(self.graph.nodes.borrow(), |n| n[self.id].value.as_ref())
    }

    /// First entry of the value, for scalar nodes.
    pub fn item(&self) -> f64 {
        self.value().data()[0]
    }

    pub fn shape(&self) -> Vec<usize> {
        self.value().shape().to_vec()
    }

    fn same_graph(&self, other: &Var<'g>) {
        debug_assert!(std::ptr::eq(self.graph, other.graph), "vars belong to different graphs");
    }

    fn unary(self, name: &'static str, f: impl Fn(f64) -> f64, op: Op) -> Result<Var<'g>, NumericsError> {
        let out = self.value().map(f);
        self.graph.emit(name, out, op, &[self.id])
    }

    fn zip_same_shape(
        self,
        other: Var<'g>,
        name: &'static str,
        f: impl Fn(f64, f64) -> f64,
        op: Op,
    ) -> Result<Var<'g>, NumericsError> {
        self.same_graph(&other);
        let (a, b) = (self.value(), other.value());
        if a.shape() != b.shape() {
            return Err(NumericsError::shape(name, a.shape(), b.shape()));
        }
        let data = a.data().iter().zip(b.data()).map(|(&x, &y)| f(x, y)).collect();
        let out = Tensor::from_parts_unchecked(a.shape().to_vec(), data);
        self.graph.emit(name, out, op, &[self.id, other.id])
    }

    /// Matrix product `self · rhs`.
    pub fn matmul(self, rhs: Var<'g>) -> Result<Var<'g>, NumericsError> {
        self.same_graph(&rhs);
        let (a, b) = (self.value(), rhs.value());
        let (m, k) = a.dims2();
        let (k2, n) = b.dims2();
        if k != k2 {
            return Err(NumericsError::shape("matmul", a.shape(), b.shape()));
        }
        let mut out = vec![0.0; m * n];
        kernels::matmul(a.data(), b.data(), &mut out, m, k, n);
        let out = Tensor::from_parts_unchecked(vec![m, n], out);
        self.graph.emit("matmul", out, Op::MatMul(self.id, rhs.id), &[self.id, rhs.id])
    }

    /// `self · rhsᵀ` without materialising the transpose.
    pub fn matmul_t(self, rhs: Var<'g>) -> Result<Var<'g>, NumericsError> {
        self.same_graph(&rhs);
        let (a, b) = (self.value(), rhs.value());
        let (m, k) = a.dims2();
        let (n, k2) = b.dims2();
        if k != k2 {
            return Err(NumericsError::shape("matmul_t", a.shape(), b.shape()));
        }
        let mut out = vec![0.0; m * n];
        kernels::matmul_bt(a.data(), b.data(), &mut out, m, k, n);
        let out = Tensor::from_parts_unchecked(vec![m, n], out);
        self.graph.emit("matmul_t", out, Op::MatMulBt(self.id, rhs.id), &[self.id, rhs.id])
    }

    pub fn transpose(self) -> Result<Var<'g>, NumericsError> {
        let out = self.value().transpose();
        self.graph.emit("transpose", out, Op::Transpose(self.id), &[self.id])
    }

    pub fn add(self, rhs: Var<'g>) -> Result<Var<'g>, NumericsError> {
        self.zip_same_shape(rhs, "add", |x, y| x + y, Op::Add(self.id, rhs.id))
    }

    pub fn sub(self, rhs: Var<'g>) -> Result<Var<'g>, NumericsError> {
        self.zip_same_shape(rhs, "sub", |x, y| x - y, Op::Sub(self.id, rhs.id))
    }

    /// Elementwise product.
    pub fn mul(self, rhs: Var<'g>) -> Result<Var<'g>, NumericsError> {
        self.zip_same_shape(rhs, "mul", |x, y| x * y, Op::Mul(self.id, rhs.id))
    }

    fn row_broadcast(
        self,
        row: Var<'g>,
        name: &'static str,
        f: impl Fn(f64, f64) -> f64,
        op: Op,
    ) -> Result<Var<'g>, NumericsError> {
        self.same_graph(&row);
        let (a, r) = (self.value(), row.value());
        let c = a.cols();
        if r.len() != c {
            return Err(NumericsError::shape(name, a.shape(), r.shape()));
        }
        let data = a
            .data()
            .chunks_exact(c)
            .flat_map(|a_row| a_row.iter().zip(r.data()).map(|(&x, &y)| f(x, y)))
            .collect();
        let (rows, cols) = a.dims2();
        let out = Tensor::from_parts_unchecked(vec![rows, cols], data);
        self.graph.emit(name, out, op, &[self.id, row.id])
    }

    /// Adds a row vector to every row of `self`.
    pub fn add_row(self, row: Var<'g>) -> Result<Var<'g>, NumericsError> {
        self.row_broadcast(row, "add_row", |x, y| x + y, Op::AddRow(self.id, row.id))
    }

    /// Multiplies every row of `self` elementwise by a row vector.
    pub fn mul_row(self, row: Var<'g>) -> Result<Var<'g>, NumericsError> {
        self.row_broadcast(row, "mul_row", |x, y| x * y, Op::MulRow(self.id, row.id))
    }

    pub fn scale(self, factor: f64) -> Result<Var<'g>, NumericsError> {
        self.unary("scale", |x| x * factor, Op::Scale(self.id, factor))
    }

    pub fn sigmoid(self) -> Result<Var<'g>, NumericsError> {
        self.unary("sigmoid", sigmoid, Op::Sigmoid(self.id))
    }

    pub fn tanh(self) -> Result<Var<'g>, NumericsError> {
        self.unary("tanh", f64::tanh, Op::Tanh(self.id))
    }

    pub fn relu(self) -> Result<Var<'g>, NumericsError> {
        self.unary("relu", |x| x.max(0.0), Op::Relu(self.id))
    }

    /// Natural log; every entry must be strictly positive.
    pub fn log(self) -> Result<Var<'g>, NumericsError> {
        if let Some(bad) = self.value().data().iter().find(|&&x| !(x > 0.0)) {
            return Err(NumericsError::Domain {
                op: "log",
                detail: format!("non-positive input {bad}"),
            });
        }
        self.unary("log", f64::ln, Op::Log(self.id))
    }

    pub fn exp(self) -> Result<Var<'g>, NumericsError> {
        self.unary("exp", f64::exp, Op::Exp(self.id))
    }

    /// Max-subtracted softmax along `axis`. For a vector the only axis is 0;
    /// for a matrix axis 1 normalises each row and axis 0 each column.
    pub fn softmax(self, axis: usize) -> Result<Var<'g>, NumericsError> {
        let a = self.value();
        let rank2_axis = match (a.shape().len(), axis) {
            (0 | 1, 0) => 1,
            (2, 0 | 1) => axis,
            _ => {
                return Err(NumericsError::Domain {
                    op: "softmax",
                    detail: format!("axis {axis} out of range for shape {:?}", a.shape()),
                })
            }
        };
        let data = softmax_values(a.data(), a.dims2(), rank2_axis);
        let out = Tensor::from_parts_unchecked(a.shape().to_vec(), data);
        self.graph.emit(
            "softmax",
            out,
            Op::Softmax {
                input: self.id,
                axis: rank2_axis,
            },
            &[self.id],
        )
    }

    /// Inverted dropout: in training mode each entry is zeroed with
    /// probability `rate` and survivors are scaled by `1 / (1 - rate)`.
    pub fn dropout(self, rate: f64, mode: Mode, rng: &mut RngStream) -> Result<Var<'g>, NumericsError> {
        if !(0.0..1.0).contains(&rate) {
            return Err(NumericsError::Config(format!("dropout rate {rate} outside [0, 1)")));
        }
        if mode == Mode::Eval || rate == 0.0 {
            return Ok(self);
        }
        let keep = 1.0 / (1.0 - rate);
        let a = self.value();
        let mask: Vec<f64> = (0..a.len())
            .map(|_| if rng.uniform() < rate { 0.0 } else { keep })
            .collect();
        let data = a.data().iter().zip(&mask).map(|(x, m)| x * m).collect();
        let out = Tensor::from_parts_unchecked(a.shape().to_vec(), data);
        self.graph.emit("dropout", out, Op::Dropout { input: self.id, mask }, &[self.id])
    }

    /// Columns `start..start + width` of a matrix.
    pub fn slice_cols(self, start: usize, width: usize) -> Result<Var<'g>, NumericsError> {
        let a = self.value();
        let (r, c) = a.dims2();
        if width == 0 || start + width > c {
            return Err(NumericsError::Domain {
                op: "slice_cols",
                detail: format!("columns {start}..{} of shape {:?}", start + width, a.shape()),
            });
        }
        let data = a
            .data()
            .chunks_exact(c)
            .flat_map(|row| row[start..start + width].iter().copied())
            .collect();
        let out = Tensor::from_parts_unchecked(vec![r, width], data);
        self.graph.emit("slice_cols", out, Op::SliceCols { input: self.id, start }, &[self.id])
    }

    /// Row `index` as a `1 × cols` matrix.
    pub fn row(self, index: usize) -> Result<Var<'g>, NumericsError> {
        let a = self.value();
        let (r, c) = a.dims2();
        if index >= r {
            return Err(NumericsError::Domain {
                op: "row",
                detail: format!("row {index} of shape {:?}", a.shape()),
            });
        }
        let out = Tensor::from_parts_unchecked(vec![1, c], a.row(index).to_vec());
        self.graph.emit("row", out, Op::Row { input: self.id, row: index }, &[self.id])
    }

    /// Mean over rows, producing `1 × cols`.
    pub fn mean_rows(self) -> Result<Var<'g>, NumericsError> {
        let a = self.value();
        let (r, c) = a.dims2();
        let mut data = vec![0.0; c];
        for row in a.data().chunks_exact(c) {
            add_into(&mut data, row);
        }
        for v in &mut data {
            *v /= r as f64;
        }
        let out = Tensor::from_parts_unchecked(vec![1, c], data);
        self.graph.emit("mean_rows", out, Op::MeanRows(self.id), &[self.id])
    }

    pub fn sum(self) -> Result<Var<'g>, NumericsError> {
        let out = Tensor::scalar(self.value().sum());
        self.graph.emit("sum", out, Op::Sum(self.id), &[self.id])
    }

    /// Per-row standardisation without affine parameters.
    pub fn layer_norm(self) -> Result<Var<'g>, NumericsError> {
        let a = self.value();
        let (r, c) = a.dims2();
        let mut data = Vec::with_capacity(r * c);
        let mut inv_std = Vec::with_capacity(r);
        for row in a.data().chunks_exact(c) {
            let mean = row.iter().sum::<f64>() / c as f64;
            let var = row.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / c as f64;
            let s = 1.0 / (var + LAYER_NORM_EPS).sqrt();
            data.extend(row.iter().map(|x| (x - mean) * s));
            inv_std.push(s);
        }
        let out = Tensor::from_parts_unchecked(vec![r, c], data);
        self.graph.emit("layer_norm", out, Op::LayerNorm { input: self.id, inv_std }, &[self.id])
    }

    /// Scalar entry at flat `index`.
    pub fn pick(self, index: usize) -> Result<Var<'g>, NumericsError> {
        let a = self.value();
        let Some(&v) = a.data().get(index) else {
            return Err(NumericsError::Domain {
                op: "pick",
                detail: format!("index {index} of shape {:?}", a.shape()),
            });
        };
        self.graph.emit("pick", Tensor::scalar(v), Op::Pick { input: self.id, index }, &[self.id])
    }

    /// `max(x, floor)`; clamped entries pass no gradient.
    pub fn clamp_min(self, floor: f64) -> Result<Var<'g>, NumericsError> {
        self.unary("clamp_min", |x| x.max(floor), Op::ClampMin { input: self.id, floor })
    }
}

/// Concatenates matrices with equal row counts side by side.
pub fn concat_cols<'g>(parts: &[Var<'g>]) -> Result<Var<'g>, NumericsError> {
    let first = parts.first().ok_or_else(|| NumericsError::Domain {
        op: "concat_cols",
        detail: "no inputs".into(),
    })?;
    let values: Vec<Rc<Tensor>> = parts.iter().map(Var::value).collect();
    let rows = values[0].rows();
    let total: usize = values.iter().map(|v| v.cols()).sum();
    let mut data = vec![0.0; rows * total];
    let mut offset = 0;
    for v in &values {
        if v.rows() != rows {
            return Err(NumericsError::shape("concat_cols", values[0].shape(), v.shape()));
        }
        let w = v.cols();
        for (i, row) in v.data().chunks_exact(w).enumerate() {
            data[i * total + offset..i * total + offset + w].copy_from_slice(row);
        }
        offset += w;
    }
    let ids: Vec<usize> = parts.iter().map(|p| p.id).collect();
    let out = Tensor::from_parts_unchecked(vec![rows, total], data);
    first.graph.emit("concat_cols", out, Op::ConcatCols(ids.clone()), &ids)
}

/// Stacks `1 × c` rows (or length-`c` vectors) into an `n × c` matrix.
pub fn stack_rows<'g>(parts: &[Var<'g>]) -> Result<Var<'g>, NumericsError> {
    let first = parts.first().ok_or_else(|| NumericsError::Domain {
        op: "stack_rows",
        detail: "no inputs".into(),
    })?;
    let values: Vec<Rc<Tensor>> = parts.iter().map(Var::value).collect();
    let c = values[0].len();
    let mut data = Vec::with_capacity(c * parts.len());
    for v in &values {
        if v.len() != c {
            return Err(NumericsError::shape("stack_rows", values[0].shape(), v.shape()));
        }
        data.extend_from_slice(v.data());
    }
    let ids: Vec<usize> = parts.iter().map(|p| p.id).collect();
    let out = Tensor::from_parts_unchecked(vec![parts.len(), c], data);
    first.graph.emit("stack_rows", out, Op::StackRows(ids.clone()), &ids)
}

pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub(crate) fn softmax_values(data: &[f64], (r, c): (usize, usize), axis: usize) -> Vec<f64> {
    let mut out = data.to_vec();
    if axis == 1 {
        for row in out.chunks_exact_mut(c) {
            softmax_in_place(row);
        }
    } else {
        for j in 0..c {
            let mut col: Vec<f64> = (0..r).map(|i| data[i * c + j]).collect();
            softmax_in_place(&mut col);
            for (i, v) in col.into_iter().enumerate() {
                out[i * c + j] = v;
            }
        }
    }
    out
}

pub(crate) fn softmax_in_place(xs: &mut [f64]) {
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut total = 0.0;
    for x in xs.iter_mut() {
        *x = (*x - max).exp();
        total += *x;
    }
    for x in xs.iter_mut() {
        *x /= total;
    }
}
