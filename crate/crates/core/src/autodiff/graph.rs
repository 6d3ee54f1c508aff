use std::collections::HashMap;

use super::array::{matmul_nt, matmul_raw, matmul_tn, Array};
use crate::error::{Error, Result};

/// Lower clamp applied by [`Graph::guarded_log`]; gives `0·log 0 = 0` in the limit.
pub const LOG_FLOOR: f64 = 1e-12;

/// Per-coordinate offset substituted into all-zero rows before normalization.
pub const ZERO_ROW_JITTER: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct NodeId(usize);

impl NodeId {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone)]
pub enum Op {
    Input {
        name: String,
        shape: Option<Vec<usize>>,
    },
    Constant,
    MatMul(NodeId, NodeId),
    /// Elementwise sum; a rank-1 (or `1×d`) right operand is broadcast over rows.
    Add(NodeId, NodeId),
    Sub(NodeId, NodeId),
    Mul(NodeId, NodeId),
    Scale(NodeId, f64),
    Tanh(NodeId),
    Exp(NodeId),
    Log(NodeId),
    GuardedLog(NodeId),
    Square(NodeId),
    SoftmaxRows(NodeId),
    NormalizeRows(NodeId),
    Sum(NodeId),
    Mean(NodeId),
    SelectRows(NodeId, Vec<usize>),
    ConcatRows(Vec<NodeId>),
}

impl Op {
    pub fn kind(&self) -> &'static str {
        match self {
            Op::Input { .. } => "input",
            Op::Constant => "constant",
            Op::MatMul(..) => "matmul",
            Op::Add(..) => "add",
            Op::Sub(..) => "subtract",
            Op::Mul(..) => "multiply",
            Op::Scale(..) => "scalar-scale",
            Op::Tanh(_) => "elementwise-tanh",
            Op::Exp(_) => "elementwise-exp",
            Op::Log(_) => "elementwise-log",
            Op::GuardedLog(_) => "guarded-log",
            Op::Square(_) => "square",
            Op::SoftmaxRows(_) => "softmax-rows",
            Op::NormalizeRows(_) => "normalize-rows",
            Op::Sum(_) => "sum",
            Op::Mean(_) => "mean",
            Op::SelectRows(..) => "select-rows",
            Op::ConcatRows(_) => "concat-rows",
        }
    }

    fn parents(&self) -> Vec<NodeId> {
        match self {
            Op::Input { .. } | Op::Constant => Vec::new(),
            Op::MatMul(a, b) | Op::Add(a, b) | Op::Sub(a, b) | Op::Mul(a, b) => vec![*a, *b],
            Op::Scale(a, _)
            | Op::Tanh(a)
            | Op::Exp(a)
            | Op::Log(a)
            | Op::GuardedLog(a)
            | Op::Square(a)
            | Op::SoftmaxRows(a)
            | Op::NormalizeRows(a)
            | Op::Sum(a)
            | Op::Mean(a)
            | Op::SelectRows(a, _) => vec![*a],
            Op::ConcatRows(parts) => parts.clone(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct Node {
    pub op: Op,
    pub value: Option<Array>,
    pub grad: Option<Array>,
}

/// A define-then-run expression graph with reverse-mode differentiation.
///
/// Nodes are appended in construction order, so every node's parents have
/// smaller indices and index order is a topological order.
#[derive(Debug, Clone, Default)]
pub struct Graph {
    nodes: Vec<Node>,
}

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    fn push(&mut self, op: Op) -> NodeId {
        self.nodes.push(Node {
            op,
            value: None,
            grad: None,
        });
        NodeId(self.nodes.len() - 1)
    }

    pub fn input(&mut self, name: &str) -> NodeId {
        self.push(Op::Input {
            name: name.to_string(),
            shape: None,
        })
    }

    /// An input whose binding must have exactly `shape`.
    pub fn input_shaped(&mut self, name: &str, shape: &[usize]) -> NodeId {
        self.push(Op::Input {
            name: name.to_string(),
            shape: Some(shape.to_vec()),
        })
    }

    /// A fixed value that receives no gradient.
    pub fn constant(&mut self, value: Array) -> NodeId {
        let id = self.push(Op::Constant);
        self.nodes[id.0].value = Some(value);
        id
    }

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> NodeId {
        self.push(Op::MatMul(a, b))
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
    pub fn scale(&mut self, a: NodeId, factor: f64) -> NodeId {
        self.push(Op::Scale(a, factor))
    }
    pub fn tanh(&mut self, a: NodeId) -> NodeId {
        self.push(Op::Tanh(a))
    }
    pub fn exp(&mut self, a: NodeId) -> NodeId {
        self.push(Op::Exp(a))
    }
    /// Natural log; rejects non-positive inputs at forward time.
    pub fn log(&mut self, a: NodeId) -> NodeId {
        self.push(Op::Log(a))
    }
    /// `log(max(x, LOG_FLOOR))`, for entropy terms only.
    pub fn guarded_log(&mut self, a: NodeId) -> NodeId {
        self.push(Op::GuardedLog(a))
    }
    pub fn square(&mut self, a: NodeId) -> NodeId {
        self.push(Op::Square(a))
    }
    pub fn softmax_rows(&mut self, a: NodeId) -> NodeId {
        self.push(Op::SoftmaxRows(a))
    }
    /// Scales each row to unit Euclidean norm. All-zero rows are replaced by
    /// `ZERO_ROW_JITTER` in every coordinate first.
    pub fn normalize_rows(&mut self, a: NodeId) -> NodeId {
        self.push(Op::NormalizeRows(a))
    }
    pub fn sum(&mut self, a: NodeId) -> NodeId {
        self.push(Op::Sum(a))
    }
    pub fn mean(&mut self, a: NodeId) -> NodeId {
        self.push(Op::Mean(a))
    }
    pub fn select_rows(&mut self, a: NodeId, indices: Vec<usize>) -> NodeId {
        self.push(Op::SelectRows(a, indices))
    }
    pub fn concat_rows(&mut self, parts: Vec<NodeId>) -> NodeId {
        self.push(Op::ConcatRows(parts))
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn node(&self, id: NodeId) -> &Node {
        &self.nodes[id.0]
    }

    pub fn value(&self, id: NodeId) -> Option<&Array> {
        self.nodes[id.0].value.as_ref()
    }

    pub fn grad(&self, id: NodeId) -> Option<&Array> {
        self.nodes[id.0].grad.as_ref()
    }

    /// Names of all input nodes, in construction order.
    pub fn input_names(&self) -> Vec<&str> {
        self.nodes
            .iter()
            .filter_map(|n| match &n.op {
                Op::Input { name, .. } => Some(name.as_str()),
                _ => None,
            })
            .collect()
    }

    fn ancestors(&self, root: NodeId) -> Vec<bool> {
        let mut needed = vec![false; root.0 + 1];
        needed[root.0] = true;
        for i in (0..=root.0).rev() {
            if needed[i] {
                for p in self.nodes[i].op.parents() {
                    needed[p.0] = true;
                }
            }
        }
        needed
    }

    /// Evaluates every node `root` depends on and returns the root value.
    /// Every input node must be bound, whether or not the root uses it.
    pub fn forward(&mut self, root: NodeId, inputs: &HashMap<String, Array>) -> Result<&Array> {
        let needed = self.ancestors(root);
        for i in 0..self.nodes.len() {
            let is_input = matches!(self.nodes[i].op, Op::Input { .. });
            if !(is_input || needed.get(i).copied().unwrap_or(false)) {
                continue;
            }
            let value = self.eval_node(i, inputs)?;
            if let Some(v) = value {
                if !v.all_finite() {
                    return Err(Error::NonFinite(format!(
                        "node {i} ({}) produced a non-finite value",
                        self.nodes[i].op.kind()
                    )));
                }
                self.nodes[i].value = Some(v);
            }
            self.nodes[i].grad = None;
        }
        Ok(self.nodes[root.0].value.as_ref().expect("root evaluated"))
    }

    fn val(&self, id: NodeId) -> &Array {
        self.nodes[id.0]
            .value
            .as_ref()
            .expect("parents are evaluated before children")
    }

    fn shape_err(&self, node: usize, detail: String) -> Error {
        Error::Shape {
            node,
            op: self.nodes[node].op.kind(),
            detail,
        }
    }

    fn eval_node(&self, i: usize, inputs: &HashMap<String, Array>) -> Result<Option<Array>> {
        let op = &self.nodes[i].op;
        let out = match op {
            Op::Constant => return Ok(None),
            Op::Input { name, shape } => {
                let bound = inputs
                    .get(name)
                    .ok_or_else(|| Error::MissingInput(name.clone()))?;
                if let Some(expected) = shape {
                    if bound.shape() != expected.as_slice() {
                        return Err(self.shape_err(
                            i,
                            format!(
                                "input `{name}` expects {expected:?}, bound {:?}",
                                bound.shape()
                            ),
                        ));
                    }
                }
                bound.clone()
            }
            Op::MatMul(a, b) => {
                let (a, b) = (self.val(*a), self.val(*b));
                if a.ndim() != 2 || b.ndim() != 2 || a.cols() != b.rows() {
                    return Err(
                        self.shape_err(i, format!("{:?} · {:?}", a.shape(), b.shape()))
                    );
                }
                let (m, k, n) = (a.rows(), a.cols(), b.cols());
                Array::matrix(m, n, matmul_raw(a.data(), b.data(), m, k, n))?
            }
            Op::Add(a, b) => {
                let (a, b) = (self.val(*a), self.val(*b));
                if a.shape() == b.shape() {
                    zip_map(a, b, |x, y| x + y)
                } else if is_row_broadcast(a, b) {
                    let mut out = a.clone();
                    let d = a.cols();
                    for row in out.data_mut().chunks_mut(d) {
                        for (o, &bv) in row.iter_mut().zip(b.data()) {
                            *o += bv;
                        }
                    }
                    out
                } else {
                    return Err(
                        self.shape_err(i, format!("{:?} + {:?}", a.shape(), b.shape()))
                    );
                }
            }
            Op::Sub(a, b) | Op::Mul(a, b) => {
                let (a, b) = (self.val(*a), self.val(*b));
                if a.shape() != b.shape() {
                    return Err(self.shape_err(
                        i,
                        format!("operands {:?} and {:?} differ", a.shape(), b.shape()),
                    ));
                }
                if matches!(op, Op::Sub(..)) {
                    zip_map(a, b, |x, y| x - y)
                } else {
                    zip_map(a, b, |x, y| x * y)
                }
            }
            Op::Scale(a, c) => self.val(*a).map(|v| v * c),
            Op::Tanh(a) => self.val(*a).map(f64::tanh),
            Op::Exp(a) => self.val(*a).map(f64::exp),
            Op::Log(a) => {
                let a = self.val(*a);
                if let Some(&bad) = a.data().iter().find(|&&v| v <= 0.0) {
                    return Err(Error::LogDomain {
                        node: i,
                        value: bad,
                    });
                }
                a.map(f64::ln)
            }
            Op::GuardedLog(a) => self.val(*a).map(|v| v.max(LOG_FLOOR).ln()),
            Op::Square(a) => self.val(*a).map(|v| v * v),
            Op::SoftmaxRows(a) => {
                let a = self.val(*a);
                if a.ndim() != 2 {
                    return Err(self.shape_err(i, format!("needs a matrix, got {:?}", a.shape())));
                }
                softmax_rows(a)
            }
            Op::NormalizeRows(a) => {
                let a = self.val(*a);
                if a.ndim() != 2 {
                    return Err(self.shape_err(i, format!("needs a matrix, got {:?}", a.shape())));
                }
                normalize_rows(a).0
            }
            Op::Sum(a) => Array::scalar(self.val(*a).sum()),
            Op::Mean(a) => {
                let a = self.val(*a);
                if a.is_empty() {
                    return Err(self.shape_err(i, "mean of an empty array".into()));
                }
                Array::scalar(a.sum() / a.len() as f64)
            }
            Op::SelectRows(a, idx) => {
                let a = self.val(*a);
                if a.ndim() != 2 {
                    return Err(self.shape_err(i, format!("needs a matrix, got {:?}", a.shape())));
                }
                if let Some(&bad) = idx.iter().find(|&&r| r >= a.rows()) {
                    return Err(
                        self.shape_err(i, format!("row {bad} out of range for {} rows", a.rows()))
                    );
                }
                a.select_rows(idx)
            }
            Op::ConcatRows(parts) => {
                if parts.is_empty() {
                    return Err(self.shape_err(i, "nothing to concatenate".into()));
                }
                let cols = self.val(parts[0]).cols();
                let mut data = Vec::new();
                let mut rows = 0;
                for p in parts {
                    let v = self.val(*p);
                    if v.ndim() != 2 || v.cols() != cols {
                        return Err(self.shape_err(
                            i,
                            format!("part {:?} does not have {cols} columns", v.shape()),
                        ));
                    }
                    rows += v.rows();
                    data.extend_from_slice(v.data());
                }
                Array::matrix(rows, cols, data)?
            }
        };
        Ok(Some(out))
    }

    /// Propagates `∂root/∂node` back to every node and returns the gradient
    /// for each named input. Inputs the root does not depend on get zeros.
    pub fn backward(&mut self, root: NodeId) -> Result<HashMap<String, Array>> {
        let root_val = self.nodes[root.0]
            .value
            .as_ref()
            .ok_or(Error::NotEvaluated(root.0))?;
        if !root_val.is_scalar() {
            return Err(Error::NotScalar(root_val.shape().to_vec()));
        }
        let needed = self.ancestors(root);
        let mut grads: Vec<Option<Array>> = vec![None; root.0 + 1];
        grads[root.0] = Some(Array::full(root_val.shape(), 1.0));

        for i in (0..=root.0).rev() {
            if !needed[i] {
                continue;
            }
            let Some(g) = grads[i].take() else {
                continue;
            };
            for (parent, contribution) in self.local_grads(i, &g) {
                match &mut grads[parent.0] {
                    Some(acc) => {
                        for (a, c) in acc.data_mut().iter_mut().zip(contribution.data()) {
                            *a += c;
                        }
                    }
                    slot @ None => *slot = Some(contribution),
                }
            }
            grads[i] = Some(g);
        }

        let mut out = HashMap::new();
        for (i, node) in self.nodes.iter_mut().enumerate() {
            let g = grads.get_mut(i).and_then(Option::take);
            if let Op::Input { name, .. } = &node.op {
                let g = match (g, &node.value) {
                    (Some(g), _) => g,
                    (None, Some(v)) => Array::zeros(v.shape()),
                    (None, None) => continue,
                };
                out.insert(name.clone(), g.clone());
                node.grad = Some(g);
            } else {
                node.grad = g;
            }
        }
        Ok(out)
    }

    fn local_grads(&self, i: usize, g: &Array) -> Vec<(NodeId, Array)> {
        let y = self.nodes[i].value.as_ref().expect("evaluated");
        match &self.nodes[i].op {
            Op::Input { .. } | Op::Constant => Vec::new(),
            Op::MatMul(a, b) => {
                let (av, bv) = (self.val(*a), self.val(*b));
                let (m, k, n) = (av.rows(), av.cols(), bv.cols());
                let ga = Array::matrix(m, k, matmul_nt(g.data(), bv.data(), m, n, k))
                    .expect("shape");
                let gb = Array::matrix(k, n, matmul_tn(av.data(), g.data(), m, k, n))
                    .expect("shape");
                vec![(*a, ga), (*b, gb)]
            }
            Op::Add(a, b) => {
                let bv = self.val(*b);
                let gb = if bv.shape() == g.shape() {
                    g.clone()
                } else {
                    let d = bv.len();
                    let mut acc = vec![0.0; d];
                    for row in g.data().chunks(d) {
                        for (s, v) in acc.iter_mut().zip(row) {
                            *s += v;
                        }
                    }
                    Array::new(bv.shape().to_vec(), acc).expect("shape")
                };
                vec![(*a, g.clone()), (*b, gb)]
            }
            Op::Sub(a, b) => vec![(*a, g.clone()), (*b, g.map(|v| -v))],
            Op::Mul(a, b) => {
                let (av, bv) = (self.val(*a), self.val(*b));
                vec![
                    (*a, zip_map(g, bv, |gv, x| gv * x)),
                    (*b, zip_map(g, av, |gv, x| gv * x)),
                ]
            }
            Op::Scale(a, c) => vec![(*a, g.map(|v| v * c))],
            Op::Tanh(a) => vec![(*a, zip_map(g, y, |gv, t| gv * (1.0 - t * t)))],
            Op::Exp(a) => vec![(*a, zip_map(g, y, |gv, e| gv * e))],
            Op::Log(a) => vec![(*a, zip_map(g, self.val(*a), |gv, x| gv / x))],
            Op::GuardedLog(a) => vec![(
                *a,
                zip_map(g, self.val(*a), |gv, x| if x > LOG_FLOOR { gv / x } else { 0.0 }),
            )],
            Op::Square(a) => vec![(*a, zip_map(g, self.val(*a), |gv, x| 2.0 * x * gv))],
            Op::SoftmaxRows(a) => {
                let mut out = g.clone();
                let d = y.cols();
                for (orow, yrow) in out.data_mut().chunks_mut(d).zip(y.data().chunks(d)) {
                    let dot: f64 = orow.iter().zip(yrow).map(|(gv, yv)| gv * yv).sum();
                    for (o, yv) in orow.iter_mut().zip(yrow) {
                        *o = yv * (*o - dot);
                    }
                }
                vec![(*a, out)]
            }
            Op::NormalizeRows(a) => {
                let (_, norms) = normalize_rows(self.val(*a));
                let mut out = g.clone();
                let d = y.cols();
                for ((orow, yrow), norm) in out
                    .data_mut()
                    .chunks_mut(d)
                    .zip(y.data().chunks(d))
                    .zip(norms)
                {
                    let dot: f64 = orow.iter().zip(yrow).map(|(gv, yv)| gv * yv).sum();
                    for (o, yv) in orow.iter_mut().zip(yrow) {
                        *o = (*o - yv * dot) / norm;
                    }
                }
                vec![(*a, out)]
            }
            Op::Sum(a) => {
                let av = self.val(*a);
                vec![(*a, Array::full(av.shape(), g.item()))]
            }
            Op::Mean(a) => {
                let av = self.val(*a);
                vec![(*a, Array::full(av.shape(), g.item() / av.len() as f64))]
            }
            Op::SelectRows(a, idx) => {
                let av = self.val(*a);
                let mut out = Array::zeros(av.shape());
                for (r, &src) in idx.iter().enumerate() {
                    for (o, v) in out.row_mut(src).iter_mut().zip(g.row(r)) {
                        *o += v;
                    }
                }
                vec![(*a, out)]
            }
            Op::ConcatRows(parts) => {
                let mut offset = 0;
                parts
                    .iter()
                    .map(|p| {
                        let pv = self.val(*p);
                        let len = pv.len();
                        let piece = Array::new(
                            pv.shape().to_vec(),
                            g.data()[offset..offset + len].to_vec(),
                        )
                        .expect("shape");
                        offset += len;
                        (*p, piece)
                    })
                    .collect()
            }
        }
    }
}

fn is_row_broadcast(a: &Array, b: &Array) -> bool {
    a.ndim() == 2
        && ((b.ndim() == 1 && b.len() == a.cols())
            || (b.ndim() == 2 && b.rows() == 1 && b.cols() == a.cols()))
}

fn zip_map(a: &Array, b: &Array, f: impl Fn(f64, f64) -> f64) -> Array {
    let data = a.data().iter().zip(b.data()).map(|(&x, &y)| f(x, y)).collect();
    Array::new(a.shape().to_vec(), data).expect("same shape")
}

/// Row-wise softmax with per-row max subtraction.
pub fn softmax_rows(a: &Array) -> Array {
    let mut out = a.clone();
    let d = a.cols();
    for row in out.data_mut().chunks_mut(d) {
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut total = 0.0;
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            total += *v;
        }
        for v in row.iter_mut() {
            *v /= total;
        }
    }
    out
}

/// Unit-normalizes rows, returning the normalized matrix and each row's
/// (post-jitter) norm.
pub fn normalize_rows(a: &Array) -> (Array, Vec<f64>) {
    let mut out = a.clone();
    let d = a.cols();
    let mut norms = Vec::with_capacity(a.rows());
    for row in out.data_mut().chunks_mut(d) {
        if row.iter().all(|&v| v == 0.0) {
            row.iter_mut().for_each(|v| *v = ZERO_ROW_JITTER);
        }
        let norm = row.iter().map(|v| v * v).sum::<f64>().sqrt();
        row.iter_mut().for_each(|v| *v /= norm);
        norms.push(norm);
    }
    (out, norms)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bind(pairs: &[(&str, Array)]) -> HashMap<String, Array> {
        pairs
            .iter()
            .map(|(k, v)| (k.to_string(), v.clone()))
            .collect()
    }

    #[test]
    fn sum_of_square() {
        let mut g = Graph::new();
        let x = g.input("x");
        let sq = g.square(x);
        let root = g.sum(sq);
        let v = g.forward(root, &bind(&[("x", Array::vector(vec![3.0]))])).unwrap();
        assert_eq!(v.item(), 9.0);
        let grads = g.backward(root).unwrap();
        assert_eq!(grads["x"].data(), &[6.0]);
    }

    #[test]
    fn linear_gradient_is_constant() {
        let mut g = Graph::new();
        let x = g.input("x");
        let s = g.scale(x, -2.5);
        let root = g.sum(s);
        g.forward(root, &bind(&[("x", Array::vector(vec![1.0, 7.0, -3.0]))]))
            .unwrap();
        let grads = g.backward(root).unwrap();
        assert_eq!(grads["x"].data(), &[-2.5, -2.5, -2.5]);
    }

    #[test]
    fn softmax_of_zero_row_is_uniform() {
        let mut g = Graph::new();
        let x = g.input("x");
        let root = g.softmax_rows(x);
        let v = g
            .forward(root, &bind(&[("x", Array::from_rows(&[vec![0.0, 0.0]]).unwrap())]))
            .unwrap();
        assert_eq!(v.data(), &[0.5, 0.5]);
    }

    #[test]
    fn missing_binding_is_rejected() {
        let mut g = Graph::new();
        let x = g.input("x");
        let root = g.sum(x);
        assert!(matches!(
            g.forward(root, &HashMap::new()),
            Err(Error::MissingInput(name)) if name == "x"
        ));
    }

    #[test]
    fn shape_mismatch_names_the_node() {
        let mut g = Graph::new();
        let a = g.input("a");
        let b = g.input("b");
        let m = g.matmul(a, b);
        let root = g.sum(m);
        let err = g
            .forward(
                root,
                &bind(&[("a", Array::zeros(&[2, 3])), ("b", Array::zeros(&[2, 3]))]),
            )
            .unwrap_err();
        match err {
            Error::Shape { node, op, .. } => {
                assert_eq!(node, m.index());
                assert_eq!(op, "matmul");
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn declared_input_shape_is_enforced() {
        let mut g = Graph::new();
        let x = g.input_shaped("x", &[2, 2]);
        let root = g.sum(x);
        assert!(g.forward(root, &bind(&[("x", Array::zeros(&[2, 3]))])).is_err());
        assert!(g.forward(root, &bind(&[("x", Array::zeros(&[2, 2]))])).is_ok());
    }

    #[test]
    fn backward_rejects_non_scalar_root() {
        let mut g = Graph::new();
        let x = g.input("x");
        let root = g.tanh(x);
        g.forward(root, &bind(&[("x", Array::vector(vec![1.0, 2.0]))]))
            .unwrap();
        assert!(matches!(g.backward(root), Err(Error::NotScalar(_))));
    }

    #[test]
    fn raw_log_rejects_non_positive() {
        let mut g = Graph::new();
        let x = g.input("x");
        let root = g.log(x);
        let err = g
            .forward(root, &bind(&[("x", Array::vector(vec![1.0, 0.0]))]))
            .unwrap_err();
        assert!(matches!(err, Error::LogDomain { value, .. } if value == 0.0));
    }

    #[test]
    fn guarded_log_clamps() {
        let mut g = Graph::new();
        let x = g.input("x");
        let root = g.guarded_log(x);
        let v = g
            .forward(root, &bind(&[("x", Array::vector(vec![0.0]))]))
            .unwrap();
        assert_eq!(v.item(), LOG_FLOOR.ln());
    }

    #[test]
    fn exp_overflow_is_reported() {
        let mut g = Graph::new();
        let x = g.input("x");
        let root = g.exp(x);
        let err = g
            .forward(root, &bind(&[("x", Array::vector(vec![1000.0]))]))
            .unwrap_err();
        assert!(matches!(err, Error::NonFinite(_)));
    }

    #[test]
    fn zero_row_normalizes_without_nan() {
        let (n, norms) = normalize_rows(&Array::zeros(&[1, 4]));
        assert!(n.all_finite());
        assert!((n.data().iter().map(|v| v * v).sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(norms[0] > 0.0);
    }

    #[test]
    fn unreachable_input_gets_zero_gradient() {
        let mut g = Graph::new();
        let x = g.input("x");
        let y = g.input("y");
        let root = g.sum(x);
        let inputs = bind(&[("x", Array::vector(vec![1.0])), ("y", Array::vector(vec![2.0]))]);
        g.forward(root, &inputs).unwrap();
        let grads = g.backward(root).unwrap();
        assert_eq!(grads["y"].data(), &[0.0]);
        assert!(g.value(y).is_some());
    }

    #[test]
    fn shared_subexpression_accumulates() {
        // d/dx sum(x * x) = 2x, reached through both Mul operands.
        let mut g = Graph::new();
        let x = g.input("x");
        let m = g.mul(x, x);
        let root = g.sum(m);
        g.forward(root, &bind(&[("x", Array::vector(vec![1.5, -2.0]))]))
            .unwrap();
        let grads = g.backward(root).unwrap();
        assert_eq!(grads["x"].data(), &[3.0, -4.0]);
    }
}
