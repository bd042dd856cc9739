//! Tape-style computation graph.
//!
//! A `Graph` is an append-only list of nodes; inputs of node `i` always have
//! index `< i`, so the backward pass is a single reverse sweep that touches
//! each node exactly once. Graphs are rebuilt from scratch every training
//! iteration rather than reused.

use crate::autodiff::tensor::{matmul_nn, matmul_nt, matmul_tn, Tensor};
use crate::error::{Error, Result};

/// Handle to a node in a specific `Graph`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct NodeId(pub usize);

/// Operation tag recorded on the tape.
#[derive(Debug, Clone, PartialEq)]
pub enum Op {
    Constant,
    Parameter,
    /// `[m,k]·[k,n] -> [m,n]`
    MatMul,
    /// Elementwise with broadcasting of `[1,n]`, `[m,1]` or `[1,1]` against `[m,n]`.
    Add,
    /// Elementwise, same shape or scalar on either side.
    Mul,
    Neg,
    Exp,
    Log,
    Square,
    Softplus,
    Tanh,
    Relu,
    Clamp {
        lo: f64,
        hi: f64,
    },
    /// Sum of all entries -> `[1,1]`.
    Sum,
    /// Row sums: `[m,n] -> [m,1]`.
    SumRows,
    /// Mean of all entries -> `[1,1]`.
    Mean,
    /// Row-wise log(mean(exp(row))): `[m,k] -> [m,1]`, overflow-safe.
    LogMeanExpRows,
    /// Column concatenation of inputs with equal row counts.
    Concat,
    /// Column range `[start, end)`.
    SliceCols {
        start: usize,
        end: usize,
    },
    /// Each row repeated `k` consecutive times: `[m,n] -> [m·k,n]`.
    RepeatRowsInterleave {
        k: usize,
    },
    /// Same data, new rank-2 shape.
    Reshape {
        rows: usize,
        cols: usize,
    },
}

struct Node {
    op: Op,
    inputs: Vec<NodeId>,
    value: Tensor,
}

/// Append-only computation tape with marked trainable parameters.
pub struct Graph {
    nodes: Vec<Node>,
    parameters: Vec<NodeId>,
}

/// Gradients for the trainable parameters of a graph, in registration order.
pub struct Gradients {
    entries: Vec<(NodeId, Tensor)>,
}

impl Gradients {
    pub fn get(&self, id: NodeId) -> Option<&Tensor> {
        self.entries.iter().find(|(n, _)| *n == id).map(|(_, g)| g)
    }

    /// Gradient tensors in parameter registration order.
    pub fn tensors(&self) -> impl Iterator<Item = &Tensor> {
        self.entries.iter().map(|(_, g)| g)
    }

    /// Consumes the gradients, yielding tensors in parameter registration
    /// order.
    pub fn into_tensors(self) -> Vec<Tensor> {
        self.entries.into_iter().map(|(_, g)| g).collect()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

impl Default for Graph {
    fn default() -> Self {
        Self::new()
    }
}

impl Graph {
    pub fn new() -> Self {
        Graph {
            nodes: Vec::new(),
            parameters: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, id: NodeId) -> &Tensor {
        &self.nodes[id.0].value
    }

    pub fn parameters(&self) -> &[NodeId] {
        &self.parameters
    }

    fn push(&mut self, op: Op, inputs: Vec<NodeId>, value: Tensor) -> NodeId {
        let id = NodeId(self.nodes.len());
        self.nodes.push(Node { op, inputs, value });
        id
    }

    pub fn constant(&mut self, value: Tensor) -> Result<NodeId> {
        if !value.all_finite() {
            return Err(Error::NonFinite { op: "constant" });
        }
        Ok(self.push(Op::Constant, vec![], value))
    }

    /// Adds a trainable leaf. Its gradient is reported by `backward`.
    pub fn parameter(&mut self, value: Tensor) -> Result<NodeId> {
        if !value.all_finite() {
            return Err(Error::NonFinite { op: "parameter" });
        }
        let id = self.push(Op::Parameter, vec![], value);
        self.parameters.push(id);
        Ok(id)
    }

    /// Appends one operation node, evaluating it eagerly. All public entry
    /// points funnel through here so the shape/finiteness checks are uniform.
    pub fn apply(&mut self, op: Op, inputs: &[NodeId]) -> Result<NodeId> {
        let value = self.eval(&op, inputs)?;
        if !value.all_finite() {
            return Err(Error::NonFinite { op: op_name(&op) });
        }
        Ok(self.push(op, inputs.to_vec(), value))
    }

    // ---- convenience wrappers ----

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.apply(Op::MatMul, &[a, b])
    }
    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.apply(Op::Add, &[a, b])
    }
    pub fn mul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.apply(Op::Mul, &[a, b])
    }
    pub fn neg(&mut self, a: NodeId) -> Result<NodeId> {
        self.apply(Op::Neg, &[a])
    }
    pub fn exp(&mut self, a: NodeId) -> Result<NodeId> {
        self.apply(Op::Exp, &[a])
    }
    pub fn log(&mut self, a: NodeId) -> Result<NodeId> {
        self.apply(Op::Log, &[a])
    }
    pub fn square(&mut self, a: NodeId) -> Result<NodeId> {
        self.apply(Op::Square, &[a])
    }
    pub fn softplus(&mut self, a: NodeId) -> Result<NodeId> {
        self.apply(Op::Softplus, &[a])
    }
    pub fn tanh(&mut self, a: NodeId) -> Result<NodeId> {
        self.apply(Op::Tanh, &[a])
    }
    pub fn relu(&mut self, a: NodeId) -> Result<NodeId> {
        self.apply(Op::Relu, &[a])
    }
    pub fn clamp(&mut self, a: NodeId, lo: f64, hi: f64) -> Result<NodeId> {
        self.apply(Op::Clamp { lo, hi }, &[a])
    }
    pub fn sum(&mut self, a: NodeId) -> Result<NodeId> {
        self.apply(Op::Sum, &[a])
    }
    pub fn sum_rows(&mut self, a: NodeId) -> Result<NodeId> {
        self.apply(Op::SumRows, &[a])
    }
    pub fn mean(&mut self, a: NodeId) -> Result<NodeId> {
        self.apply(Op::Mean, &[a])
    }
    pub fn log_mean_exp_rows(&mut self, a: NodeId) -> Result<NodeId> {
        self.apply(Op::LogMeanExpRows, &[a])
    }
    pub fn concat_cols(&mut self, inputs: &[NodeId]) -> Result<NodeId> {
        self.apply(Op::Concat, inputs)
    }
    pub fn slice_cols(&mut self, a: NodeId, start: usize, end: usize) -> Result<NodeId> {
        self.apply(Op::SliceCols { start, end }, &[a])
    }
    pub fn repeat_rows_interleave(&mut self, a: NodeId, k: usize) -> Result<NodeId> {
        self.apply(Op::RepeatRowsInterleave { k }, &[a])
    }
    pub fn reshape(&mut self, a: NodeId, rows: usize, cols: usize) -> Result<NodeId> {
        self.apply(Op::Reshape { rows, cols }, &[a])
    }

    /// Subtraction and scalar helpers, built from the primitive tags.
    pub fn sub(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let nb = self.neg(b)?;
        self.add(a, nb)
    }
    pub fn scale(&mut self, a: NodeId, factor: f64) -> Result<NodeId> {
        let s = self.constant(Tensor::scalar(factor))?;
        self.mul(a, s)
    }
    pub fn add_scalar(&mut self, a: NodeId, value: f64) -> Result<NodeId> {
        let s = self.constant(Tensor::scalar(value))?;
        self.add(a, s)
    }

    fn arity_check(&self, op: &Op, inputs: &[NodeId], expect: usize) -> Result<()> {
        if inputs.len() != expect {
            return Err(Error::ArityMismatch {
                op: op_name(op),
                expect,
                got: inputs.len(),
            });
        }
        Ok(())
    }

    fn eval(&self, op: &Op, inputs: &[NodeId]) -> Result<Tensor> {
        match op {
            Op::Constant | Op::Parameter => Err(Error::InvalidParameter(
                "leaf nodes are created via constant()/parameter()".into(),
            )),
            Op::MatMul => {
                self.arity_check(op, inputs, 2)?;
                let a = self.value(inputs[0]);
                let b = self.value(inputs[1]);
                let (m, k, k2, n) = (a.rows(), a.cols(), b.rows(), b.cols());
                if k != k2 {
                    return Err(Error::ShapeMismatch {
                        op: "matmul",
                        lhs: a.shape().to_vec(),
                        rhs: b.shape().to_vec(),
                    });
                }
                let mut out = Tensor::zeros(m, n);
                matmul_nn(a.data(), b.data(), m, k, n, out.data_mut());
                Ok(out)
            }
            Op::Add => {
                self.arity_check(op, inputs, 2)?;
                let a = self.value(inputs[0]);
                let b = self.value(inputs[1]);
                broadcast_add(a, b)
            }
            Op::Mul => {
                self.arity_check(op, inputs, 2)?;
                let a = self.value(inputs[0]);
                let b = self.value(inputs[1]);
                if a.is_scalar() || b.is_scalar() {
                    let (s, t) = if a.is_scalar() { (a, b) } else { (b, a) };
                    let sv = s.item();
                    let data = t.data().iter().map(|v| v * sv).collect();
                    Tensor::new(t.shape().to_vec(), data)
                } else if a.shape() == b.shape() {
                    let data = a.data().iter().zip(b.data()).map(|(x, y)| x * y).collect();
                    Tensor::new(a.shape().to_vec(), data)
                } else {
                    Err(Error::ShapeMismatch {
                        op: "mul",
                        lhs: a.shape().to_vec(),
                        rhs: b.shape().to_vec(),
                    })
                }
            }
            Op::Neg => self.unary(op, inputs, |x| -x),
            Op::Exp => self.unary(op, inputs, f64::exp),
            Op::Log => {
                self.arity_check(op, inputs, 1)?;
                let a = self.value(inputs[0]);
                if let Some(bad) = a.data().iter().find(|v| **v <= 0.0) {
                    return Err(Error::LogNonPositive { value: *bad });
                }
                let data = a.data().iter().map(|v| v.ln()).collect();
                Tensor::new(a.shape().to_vec(), data)
            }
            Op::Square => self.unary(op, inputs, |x| x * x),
            Op::Softplus => self.unary(op, inputs, softplus),
            Op::Tanh => self.unary(op, inputs, f64::tanh),
            Op::Relu => self.unary(op, inputs, |x| x.max(0.0)),
            Op::Clamp { lo, hi } => {
                let (lo, hi) = (*lo, *hi);
                self.unary(op, inputs, move |x| x.clamp(lo, hi))
            }
            Op::Sum => {
                self.arity_check(op, inputs, 1)?;
                Ok(Tensor::scalar(self.value(inputs[0]).data().iter().sum()))
            }
            Op::SumRows => {
                self.arity_check(op, inputs, 1)?;
                let a = self.value(inputs[0]);
                let (m, n) = (a.rows(), a.cols());
                let sums: Vec<f64> = a.data().chunks(n).map(|r| r.iter().sum()).collect();
                Tensor::new(vec![m, 1], sums)
            }
            Op::Mean => {
                self.arity_check(op, inputs, 1)?;
                let a = self.value(inputs[0]);
                if a.is_empty() {
                    return Err(Error::EmptyInput { op: "mean" });
                }
                let s: f64 = a.data().iter().sum();
                Ok(Tensor::scalar(s / a.len() as f64))
            }
            Op::LogMeanExpRows => {
                self.arity_check(op, inputs, 1)?;
                let a = self.value(inputs[0]);
                let (m, n) = (a.rows(), a.cols());
                if n == 0 {
                    return Err(Error::EmptyInput { op: "log_mean_exp_rows" });
                }
                let out: Vec<f64> = a
                    .data()
                    .chunks(n)
                    .map(crate::distributions::log_mean_exp_slice)
                    .collect();
                Tensor::new(vec![m, 1], out)
            }
            Op::Concat => {
                if inputs.is_empty() {
                    return Err(Error::EmptyInput { op: "concat" });
                }
                let m = self.value(inputs[0]).rows();
                let mut total_cols = 0;
                for &id in inputs {
                    let t = self.value(id);
                    if t.rows() != m {
                        return Err(Error::ShapeMismatch {
                            op: "concat",
                            lhs: self.value(inputs[0]).shape().to_vec(),
                            rhs: t.shape().to_vec(),
                        });
                    }
                    total_cols += t.cols();
                }
                let mut data = vec![0.0; m * total_cols];
                let mut offset = 0;
                for &id in inputs {
                    let t = self.value(id);
                    let n = t.cols();
                    for i in 0..m {
                        data[i * total_cols + offset..i * total_cols + offset + n]
                            .copy_from_slice(&t.data()[i * n..(i + 1) * n]);
                    }
                    offset += n;
                }
                Tensor::new(vec![m, total_cols], data)
            }
            Op::SliceCols { start, end } => {
                self.arity_check(op, inputs, 1)?;
                let a = self.value(inputs[0]);
                let (m, n) = (a.rows(), a.cols());
                if *start >= *end || *end > n {
                    return Err(Error::InvalidParameter(format!(
                        "slice range {start}..{end} out of bounds for {n} columns"
                    )));
                }
                let w = end - start;
                let mut data = vec![0.0; m * w];
                for i in 0..m {
                    data[i * w..(i + 1) * w]
                        .copy_from_slice(&a.data()[i * n + start..i * n + end]);
                }
                Tensor::new(vec![m, w], data)
            }
            Op::RepeatRowsInterleave { k } => {
                self.arity_check(op, inputs, 1)?;
                if *k == 0 {
                    return Err(Error::InvalidParameter("repeat count must be >= 1".into()));
                }
                let a = self.value(inputs[0]);
                let (m, n) = (a.rows(), a.cols());
                let mut data = Vec::with_capacity(m * k * n);
                for i in 0..m {
                    let row = &a.data()[i * n..(i + 1) * n];
                    for _ in 0..*k {
                        data.extend_from_slice(row);
                    }
                }
                Tensor::new(vec![m * k, n], data)
            }
            Op::Reshape { rows, cols } => {
                self.arity_check(op, inputs, 1)?;
                let a = self.value(inputs[0]);
                if rows * cols != a.len() {
                    return Err(Error::ShapeMismatch {
                        op: "reshape",
                        lhs: a.shape().to_vec(),
                        rhs: vec![*rows, *cols],
                    });
                }
                Tensor::new(vec![*rows, *cols], a.data().to_vec())
            }
        }
    }

    fn unary(&self, op: &Op, inputs: &[NodeId], f: impl Fn(f64) -> f64) -> Result<Tensor> {
        self.arity_check(op, inputs, 1)?;
        let a = self.value(inputs[0]);
        let data = a.data().iter().map(|v| f(*v)).collect();
        Tensor::new(a.shape().to_vec(), data)
    }

    /// Reverse sweep from a scalar loss node. Returns gradients for the
    /// trainable parameters only; intermediate gradients are discarded.
    /// Parameters with no path to the loss get zero gradients.
    pub fn backward(&self, loss: NodeId) -> Result<Gradients> {
        let loss_value = self.value(loss);
        if !loss_value.is_scalar() {
            return Err(Error::NonScalarLoss {
                shape: loss_value.shape().to_vec(),
            });
        }
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; self.nodes.len()];
        grads[loss.0] = Some(vec![1.0]);

        for i in (0..=loss.0).rev() {
            let upstream = match grads[i].take() {
                Some(g) => g,
                None => continue,
            };
            let node = &self.nodes[i];
            match &node.op {
                Op::Constant | Op::Parameter => {
                    grads[i] = Some(upstream); // keep for the parameter report
                    continue;
                }
                Op::MatMul => {
                    let a = self.value(node.inputs[0]);
                    let b = self.value(node.inputs[1]);
                    let (m, k, n) = (a.rows(), a.cols(), b.cols());
                    // dA = dC·Bᵀ
                    let mut da = vec![0.0; m * k];
                    matmul_nt(&upstream, b.data(), m, n, k, &mut da);
                    accumulate(&mut grads, node.inputs[0], &da, m * k);
                    // dB = Aᵀ·dC
                    let mut db = vec![0.0; k * n];
                    matmul_tn(a.data(), &upstream, m, k, n, &mut db);
                    accumulate(&mut grads, node.inputs[1], &db, k * n);
                }
                Op::Add => {
                    for &input in &node.inputs {
                        let t = self.value(input);
                        let reduced = reduce_to_shape(
                            &upstream,
                            node.value.rows(),
                            node.value.cols(),
                            t.rows(),
                            t.cols(),
                        );
                        accumulate(&mut grads, input, &reduced, t.len());
                    }
                }
                Op::Mul => {
                    let a = self.value(node.inputs[0]);
                    let b = self.value(node.inputs[1]);
                    for (this, other) in [(0, b), (1, a)] {
                        let t = self.value(node.inputs[this]);
                        let g: Vec<f64> = if t.is_scalar() && !other.is_scalar() {
                            vec![upstream
                                .iter()
                                .zip(other.data())
                                .map(|(u, o)| u * o)
                                .sum()]
                        } else if other.is_scalar() && !t.is_scalar() {
                            let ov = other.item();
                            upstream.iter().map(|u| u * ov).collect()
                        } else {
                            upstream.iter().zip(other.data()).map(|(u, o)| u * o).collect()
                        };
                        accumulate(&mut grads, node.inputs[this], &g, t.len());
                    }
                }
                Op::Neg => {
                    let g: Vec<f64> = upstream.iter().map(|u| -u).collect();
                    accumulate(&mut grads, node.inputs[0], &g, g.len());
                }
                Op::Exp => {
                    let g: Vec<f64> = upstream
                        .iter()
                        .zip(node.value.data())
                        .map(|(u, y)| u * y)
                        .collect();
                    accumulate(&mut grads, node.inputs[0], &g, g.len());
                }
                Op::Log => {
                    let x = self.value(node.inputs[0]);
                    let g: Vec<f64> = upstream.iter().zip(x.data()).map(|(u, v)| u / v).collect();
                    accumulate(&mut grads, node.inputs[0], &g, g.len());
                }
                Op::Square => {
                    let x = self.value(node.inputs[0]);
                    let g: Vec<f64> = upstream
                        .iter()
                        .zip(x.data())
                        .map(|(u, v)| 2.0 * v * u)
                        .collect();
                    accumulate(&mut grads, node.inputs[0], &g, g.len());
                }
                Op::Softplus => {
                    let x = self.value(node.inputs[0]);
                    let g: Vec<f64> = upstream
                        .iter()
                        .zip(x.data())
                        .map(|(u, v)| u * sigmoid(*v))
                        .collect();
                    accumulate(&mut grads, node.inputs[0], &g, g.len());
                }
                Op::Tanh => {
                    let g: Vec<f64> = upstream
                        .iter()
                        .zip(node.value.data())
                        .map(|(u, t)| u * (1.0 - t * t))
                        .collect();
                    accumulate(&mut grads, node.inputs[0], &g, g.len());
                }
                Op::Relu => {
                    let x = self.value(node.inputs[0]);
                    let g: Vec<f64> = upstream
                        .iter()
                        .zip(x.data())
                        .map(|(u, v)| if *v > 0.0 { *u } else { 0.0 })
                        .collect();
                    accumulate(&mut grads, node.inputs[0], &g, g.len());
                }
                Op::Clamp { lo, hi } => {
                    let x = self.value(node.inputs[0]);
                    let g: Vec<f64> = upstream
                        .iter()
                        .zip(x.data())
                        .map(|(u, v)| if *v >= *lo && *v <= *hi { *u } else { 0.0 })
                        .collect();
                    accumulate(&mut grads, node.inputs[0], &g, g.len());
                }
                Op::Sum => {
                    let t = self.value(node.inputs[0]);
                    let g = vec![upstream[0]; t.len()];
                    accumulate(&mut grads, node.inputs[0], &g, t.len());
                }
                Op::SumRows => {
                    let t = self.value(node.inputs[0]);
                    let (m, n) = (t.rows(), t.cols());
                    let mut g = vec![0.0; m * n];
                    for i in 0..m {
                        g[i * n..(i + 1) * n].fill(upstream[i]);
                    }
                    accumulate(&mut grads, node.inputs[0], &g, m * n);
                }
                Op::Mean => {
                    let t = self.value(node.inputs[0]);
                    let g = vec![upstream[0] / t.len() as f64; t.len()];
                    accumulate(&mut grads, node.inputs[0], &g, t.len());
                }
                Op::LogMeanExpRows => {
                    // d/dw_k log mean exp(w) = softmax(w)_k
                    let t = self.value(node.inputs[0]);
                    let (m, n) = (t.rows(), t.cols());
                    let mut g = vec![0.0; m * n];
                    for i in 0..m {
                        let row = &t.data()[i * n..(i + 1) * n];
                        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                        let mut denom = 0.0;
                        for v in row {
                            denom += (v - max).exp();
                        }
                        for j in 0..n {
                            g[i * n + j] = upstream[i] * (row[j] - max).exp() / denom;
                        }
                    }
                    accumulate(&mut grads, node.inputs[0], &g, m * n);
                }
                Op::Concat => {
                    let m = node.value.rows();
                    let total = node.value.cols();
                    let mut offset = 0;
                    for &input in &node.inputs {
                        let t = self.value(input);
                        let n = t.cols();
                        let mut g = vec![0.0; m * n];
                        for i in 0..m {
                            g[i * n..(i + 1) * n].copy_from_slice(
                                &upstream[i * total + offset..i * total + offset + n],
                            );
                        }
                        accumulate(&mut grads, input, &g, m * n);
                        offset += n;
                    }
                }
                Op::SliceCols { start, end } => {
                    let t = self.value(node.inputs[0]);
                    let (m, n) = (t.rows(), t.cols());
                    let w = end - start;
                    let mut g = vec![0.0; m * n];
                    for i in 0..m {
                        g[i * n + start..i * n + end]
                            .copy_from_slice(&upstream[i * w..(i + 1) * w]);
                    }
                    accumulate(&mut grads, node.inputs[0], &g, m * n);
                }
                Op::RepeatRowsInterleave { k } => {
                    let t = self.value(node.inputs[0]);
                    let (m, n) = (t.rows(), t.cols());
                    let mut g = vec![0.0; m * n];
                    for i in 0..m {
                        let gi = &mut g[i * n..(i + 1) * n];
                        for rep in 0..*k {
                            let up = &upstream[(i * k + rep) * n..(i * k + rep + 1) * n];
                            for (gj, uj) in gi.iter_mut().zip(up) {
                                *gj += uj;
                            }
                        }
                    }
                    accumulate(&mut grads, node.inputs[0], &g, m * n);
                }
                Op::Reshape { .. } => {
                    let t = self.value(node.inputs[0]);
                    accumulate(&mut grads, node.inputs[0], &upstream, t.len());
                }
            }
        }

        let entries = self
            .parameters
            .iter()
            .map(|&id| {
                let shape = self.value(id).shape().to_vec();
                let data = match grads[id.0].take() {
                    Some(g) => g,
                    None => vec![0.0; self.value(id).len()],
                };
                (id, Tensor::new(shape, data).expect("gradient shape"))
            })
            .collect();
        Ok(Gradients { entries })
    }
}

fn op_name(op: &Op) -> &'static str {
    match op {
        Op::Constant => "constant",
        Op::Parameter => "parameter",
        Op::MatMul => "matmul",
        Op::Add => "add",
        Op::Mul => "mul",
        Op::Neg => "neg",
        Op::Exp => "exp",
        Op::Log => "log",
        Op::Square => "square",
        Op::Softplus => "softplus",
        Op::Tanh => "tanh",
        Op::Relu => "relu",
        Op::Clamp { .. } => "clamp",
        Op::Sum => "sum",
        Op::SumRows => "sum_rows",
        Op::Mean => "mean",
        Op::LogMeanExpRows => "log_mean_exp_rows",
        Op::Concat => "concat",
        Op::SliceCols { .. } => "slice_cols",
        Op::RepeatRowsInterleave { .. } => "repeat_rows_interleave",
        Op::Reshape { .. } => "reshape",
    }
}

pub(crate) fn softplus(x: f64) -> f64 {
    // ln(1 + e^x), stable on both tails
    if x > 30.0 {
        x
    } else if x < -30.0 {
        x.exp()
    } else {
        x.exp().ln_1p()
    }
}

pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn accumulate(grads: &mut [Option<Vec<f64>>], target: NodeId, g: &[f64], len: usize) {
    debug_assert_eq!(g.len(), len);
    match &mut grads[target.0] {
        Some(acc) => {
            for (a, v) in acc.iter_mut().zip(g) {
                *a += v;
            }
        }
        None => grads[target.0] = Some(g.to_vec()),
    }
}

/// Forward add with broadcasting of `[1,n]`, `[m,1]`, or `[1,1]` shapes.
fn broadcast_add(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    let (am, an) = (a.rows(), a.cols());
    let (bm, bn) = (b.rows(), b.cols());
    let m = am.max(bm);
    let n = an.max(bn);
    let compat = |rm: usize, rn: usize| (rm == m || rm == 1) && (rn == n || rn == 1);
    if !compat(am, an) || !compat(bm, bn) {
        return Err(Error::ShapeMismatch {
            op: "add",
            lhs: a.shape().to_vec(),
            rhs: b.shape().to_vec(),
        });
    }
    let mut data = vec![0.0; m * n];
    for i in 0..m {
        for j in 0..n {
            let av = a.data()[(i % am) * an + (j % an)];
            let bv = b.data()[(i % bm) * bn + (j % bn)];
            data[i * n + j] = av + bv;
        }
    }
    Tensor::new(vec![m, n], data)
}

/// Sums an `[m,n]` upstream gradient down to the (possibly broadcast) input
/// shape `[tm,tn]`.
fn reduce_to_shape(upstream: &[f64], m: usize, n: usize, tm: usize, tn: usize) -> Vec<f64> {
    if tm == m && tn == n {
        return upstream.to_vec();
    }
    let mut out = vec![0.0; tm * tn];
    for i in 0..m {
        for j in 0..n {
            out[(i % tm) * tn + (j % tn)] += upstream[i * n + j];
        }
    }
    out
}
