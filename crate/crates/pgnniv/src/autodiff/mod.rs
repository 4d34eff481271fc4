//! Minimal reverse-mode automatic differentiation over dense `f64` matrices.
//!
//! A [`Tape`] is an append-only sequence of nodes; every node's parents
//! precede it, so one reverse sweep propagates adjoints correctly. Values are
//! dense row-major matrices (`ndarray::Array2<f64>`); scalars are `1x1`.
//! Trainable leaves are [`Param`]s, registered on the tape by name, and
//! [`Tape::backward`] returns their gradients keyed by that name.
//!
//! A tape is built for one evaluation and dropped afterwards; training loops
//! construct a fresh tape per iteration. Tapes are single-threaded, but
//! independent tapes may run on different threads freely.

pub mod gradcheck;

use ndarray::{Array2, Axis};
use std::collections::BTreeMap;
use thiserror::Error;

/// Dense row-major matrix of `f64`.
pub type Matrix = Array2<f64>;

/// Errors raised while building a graph or running backward.
#[derive(Debug, Error)]
pub enum TapeError {
    #[error("{op}: shape mismatch, left is {lhs:?}, right is {rhs:?}")]
    ShapeMismatch {
        op: &'static str,
        lhs: (usize, usize),
        rhs: (usize, usize),
    },
    #[error("{op}: fractional exponent {exponent} requires a strictly positive base, found {value}")]
    NonPositiveBase {
        op: &'static str,
        exponent: f64,
        value: f64,
    },
    #[error("backward: output must be scalar (1x1), got {shape:?}")]
    NonScalarOutput { shape: (usize, usize) },
    #[error("{op}: column {col} out of bounds for shape {shape:?}")]
    ColumnOutOfBounds {
        op: &'static str,
        col: usize,
        shape: (usize, usize),
    },
    #[error("{op}: empty operand list")]
    EmptyOperands { op: &'static str },
}

/// Handle to a node on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NodeId(usize);

/// A named trainable value. The shape is fixed at creation.
#[derive(Debug, Clone)]
pub struct Param {
    id: String,
    value: Matrix,
}

impl Param {
    pub fn new(id: impl Into<String>, value: Matrix) -> Self {
        Self { id: id.into(), value }
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn value(&self) -> &Matrix {
        &self.value
    }

    pub fn shape(&self) -> (usize, usize) {
        dims(&self.value)
    }

    /// Replaces the stored value. Panics if the shape differs; the shape is
    /// part of the parameter's identity.
    pub fn set_value(&mut self, value: Matrix) {
        assert_eq!(
            dims(&self.value),
            dims(&value),
            "param {}: shape is immutable",
            self.id
        );
        self.value = value;
    }
}

/// Ordered collection of [`Param`]s with stable name lookup.
#[derive(Debug, Clone, Default)]
pub struct ParamStore {
    params: Vec<Param>,
    index: BTreeMap<String, usize>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds a parameter. Panics on duplicate names; parameter names are the
    /// key gradients and checkpoints are addressed by.
    pub fn insert(&mut self, param: Param) {
        assert!(
            !self.index.contains_key(param.id()),
            "duplicate param id {}",
            param.id()
        );
        self.index.insert(param.id().to_string(), self.params.len());
        self.params.push(param);
    }

    pub fn get(&self, id: &str) -> Option<&Param> {
        self.index.get(id).map(|&i| &self.params[i])
    }

    pub fn get_mut(&mut self, id: &str) -> Option<&mut Param> {
        self.index.get(id).copied().map(move |i| &mut self.params[i])
    }

    pub fn iter(&self) -> impl Iterator<Item = &Param> {
        self.params.iter()
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }
}

/// Gradients returned by [`Tape::backward`], keyed by param id.
#[derive(Debug, Clone, Default)]
pub struct Gradients {
    by_id: BTreeMap<String, Matrix>,
}

impl Gradients {
    pub fn get(&self, id: &str) -> Option<&Matrix> {
        self.by_id.get(id)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &Matrix)> {
        self.by_id.iter()
    }
}

#[derive(Debug, Clone)]
enum OpKind {
    /// Constant leaf (inputs, targets, fixed coefficients).
    Leaf,
    /// Trainable leaf; the string is the param id.
    ParamLeaf(String),
    /// Matrix product `a . b`.
    MatMul(NodeId, NodeId),
    /// Elementwise sum of same-shaped operands.
    Add(NodeId, NodeId),
    /// Row-broadcast sum: `(m x n) + (1 x n)`.
    AddBias(NodeId, NodeId),
    /// Elementwise difference.
    Sub(NodeId, NodeId),
    /// Elementwise (Hadamard) product.
    Mul(NodeId, NodeId),
    /// Scale by a `1x1` node: every entry of `a` times the scalar node.
    MulScalar(NodeId, NodeId),
    /// Elementwise `a * mul + add`; only the multiplier matters in reverse.
    Affine(NodeId, f64),
    /// Elementwise `a ^ exponent` with a constant exponent.
    PowScalar(NodeId, f64),
    /// Elementwise square.
    Square(NodeId),
    /// Elementwise `max(0, a)`.
    Relu(NodeId),
    /// Sum of all entries, yielding `1x1`.
    Sum(NodeId),
    /// Mean of all entries, yielding `1x1`.
    Mean(NodeId),
    /// Single column extraction, yielding `m x 1`.
    Col(NodeId, usize),
    /// Horizontal concatenation of equal-height columns blocks.
    ConcatCols(Vec<NodeId>),
}

#[derive(Debug)]
struct Node {
    op: OpKind,
    value: Matrix,
    adjoint: Matrix,
}

/// Append-only computational graph. See the module docs for the contract.
#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
    param_nodes: Vec<NodeId>,
}

fn dims(m: &Matrix) -> (usize, usize) {
    (m.nrows(), m.ncols())
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    fn push(&mut self, op: OpKind, value: Matrix) -> NodeId {
        let adjoint = Matrix::zeros(value.raw_dim());
        self.nodes.push(Node { op, value, adjoint });
        NodeId(self.nodes.len() - 1)
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Value of a node.
    pub fn value(&self, id: NodeId) -> &Matrix {
        &self.nodes[id.0].value
    }

    /// Value of a `1x1` node as a plain scalar.
    pub fn scalar(&self, id: NodeId) -> f64 {
        let v = self.value(id);
        assert_eq!(dims(v), (1, 1), "scalar() on non-scalar node");
        v[(0, 0)]
    }

    /// Adjoint of a node after [`Tape::backward`].
    pub fn adjoint(&self, id: NodeId) -> &Matrix {
        &self.nodes[id.0].adjoint
    }

    pub fn constant(&mut self, value: Matrix) -> NodeId {
        self.push(OpKind::Leaf, value)
    }

    /// Convenience: a `1x1` constant.
    pub fn scalar_constant(&mut self, value: f64) -> NodeId {
        self.constant(Matrix::from_elem((1, 1), value))
    }

    /// Registers a trainable leaf; its gradient is reported under the
    /// param's id by [`Tape::backward`].
    pub fn param(&mut self, param: &Param) -> NodeId {
        let id = self.push(OpKind::ParamLeaf(param.id().to_string()), param.value().clone());
        self.param_nodes.push(id);
        id
    }

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, TapeError> {
        let (la, lb) = (dims(self.value(a)), dims(self.value(b)));
        if la.1 != lb.0 {
            return Err(TapeError::ShapeMismatch { op: "matmul", lhs: la, rhs: lb });
        }
        let value = self.value(a).dot(self.value(b));
        Ok(self.push(OpKind::MatMul(a, b), value))
    }

    fn elementwise(
        &mut self,
        op: &'static str,
        a: NodeId,
        b: NodeId,
        f: impl Fn(&Matrix, &Matrix) -> Matrix,
        kind: impl Fn(NodeId, NodeId) -> OpKind,
    ) -> Result<NodeId, TapeError> {
        let (la, lb) = (dims(self.value(a)), dims(self.value(b)));
        if la != lb {
            return Err(TapeError::ShapeMismatch { op, lhs: la, rhs: lb });
        }
        let value = f(self.value(a), self.value(b));
        Ok(self.push(kind(a, b), value))
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, TapeError> {
        self.elementwise("add", a, b, |x, y| x + y, OpKind::Add)
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, TapeError> {
        self.elementwise("sub", a, b, |x, y| x - y, OpKind::Sub)
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, TapeError> {
        self.elementwise("mul", a, b, |x, y| x * y, OpKind::Mul)
    }

    /// `(m x n) + (1 x n)` row broadcast, the bias term of a dense layer.
    pub fn add_bias(&mut self, a: NodeId, bias: NodeId) -> Result<NodeId, TapeError> {
        let (la, lb) = (dims(self.value(a)), dims(self.value(bias)));
        if lb.0 != 1 || la.1 != lb.1 {
            return Err(TapeError::ShapeMismatch { op: "add_bias", lhs: la, rhs: lb });
        }
        let value = self.value(a) + self.value(bias);
        Ok(self.push(OpKind::AddBias(a, bias), value))
    }

    /// Multiplies every entry of `a` by the `1x1` node `s`.
    pub fn mul_scalar(&mut self, a: NodeId, s: NodeId) -> Result<NodeId, TapeError> {
        let ls = dims(self.value(s));
        if ls != (1, 1) {
            return Err(TapeError::ShapeMismatch { op: "mul_scalar", lhs: dims(self.value(a)), rhs: ls });
        }
        let sv = self.value(s)[(0, 0)];
        let value = self.value(a) * sv;
        Ok(self.push(OpKind::MulScalar(a, s), value))
    }

    /// Elementwise `a * mul + add` with constant coefficients.
    pub fn affine(&mut self, a: NodeId, mul: f64, add: f64) -> NodeId {
        let value = self.value(a).mapv(|x| x * mul + add);
        self.push(OpKind::Affine(a, mul), value)
    }

    /// Elementwise scaling by a constant.
    pub fn scale(&mut self, a: NodeId, c: f64) -> NodeId {
        self.affine(a, c, 0.0)
    }

    pub fn neg(&mut self, a: NodeId) -> NodeId {
        self.affine(a, -1.0, 0.0)
    }

    /// Elementwise power with constant exponent. A fractional exponent
    /// requires every entry to be strictly positive.
    pub fn pow_scalar(&mut self, a: NodeId, exponent: f64) -> Result<NodeId, TapeError> {
        if exponent.fract() != 0.0 {
            if let Some(&bad) = self.value(a).iter().find(|&&x| x <= 0.0) {
                return Err(TapeError::NonPositiveBase {
                    op: "pow_scalar",
                    exponent,
                    value: bad,
                });
            }
        }
        let value = self.value(a).mapv(|x| x.powf(exponent));
        Ok(self.push(OpKind::PowScalar(a, exponent), value))
    }

    pub fn square(&mut self, a: NodeId) -> NodeId {
        let value = self.value(a).mapv(|x| x * x);
        self.push(OpKind::Square(a), value)
    }

    /// Elementwise `max(0, x)`. The subgradient at exactly 0 is 0.
    pub fn relu(&mut self, a: NodeId) -> NodeId {
        let value = self.value(a).mapv(|x| x.max(0.0));
        self.push(OpKind::Relu(a), value)
    }

    /// Sum of all entries as a `1x1` node.
    pub fn sum(&mut self, a: NodeId) -> NodeId {
        let value = Matrix::from_elem((1, 1), self.value(a).sum());
        self.push(OpKind::Sum(a), value)
    }

    /// Mean of all entries as a `1x1` node.
    pub fn mean(&mut self, a: NodeId) -> NodeId {
        let v = self.value(a);
        let value = Matrix::from_elem((1, 1), v.sum() / v.len() as f64);
        self.push(OpKind::Mean(a), value)
    }

    /// Extracts column `col` as an `m x 1` node.
    pub fn col(&mut self, a: NodeId, col: usize) -> Result<NodeId, TapeError> {
        let la = dims(self.value(a));
        if col >= la.1 {
            return Err(TapeError::ColumnOutOfBounds { op: "col", col, shape: la });
        }
        let value = self
            .value(a)
            .column(col)
            .to_owned()
            .insert_axis(Axis(1));
        Ok(self.push(OpKind::Col(a, col), value))
    }

    /// Concatenates blocks horizontally; all operands must share the row
    /// count.
    pub fn concat_cols(&mut self, parts: &[NodeId]) -> Result<NodeId, TapeError> {
        let Some(&first) = parts.first() else {
            return Err(TapeError::EmptyOperands { op: "concat_cols" });
        };
        let rows = dims(self.value(first)).0;
        let mut total = 0;
        for &p in parts {
            let lp = dims(self.value(p));
            if lp.0 != rows {
                return Err(TapeError::ShapeMismatch {
                    op: "concat_cols",
                    lhs: (rows, total),
                    rhs: lp,
                });
            }
            total += lp.1;
        }
        let mut value = Matrix::zeros((rows, total));
        let mut offset = 0;
        for &p in parts {
            let w = dims(self.value(p)).1;
            value
                .slice_mut(ndarray::s![.., offset..offset + w])
                .assign(self.value(p));
            offset += w;
        }
        Ok(self.push(OpKind::ConcatCols(parts.to_vec()), value))
    }

    /// Reverse pass seeded with 1 at `output`. `output` must be `1x1`.
    /// Returns the gradient of every param registered on this tape;
    /// params not reachable from `output` get an exact zero gradient.
    pub fn backward(&mut self, output: NodeId) -> Result<Gradients, TapeError> {
        self.backward_seeded(output, 1.0)
    }

    /// Reverse pass with an explicit seed value. Adjoints are reset first,
    /// so repeated calls on the same tape are reproducible.
    pub fn backward_seeded(&mut self, output: NodeId, seed: f64) -> Result<Gradients, TapeError> {
        let out_shape = dims(self.value(output));
        if out_shape != (1, 1) {
            return Err(TapeError::NonScalarOutput { shape: out_shape });
        }
        for node in &mut self.nodes {
            node.adjoint.fill(0.0);
        }
        self.nodes[output.0].adjoint[(0, 0)] = seed;

        for i in (0..=output.0).rev() {
            // Split off the current node so parent adjoints can be updated
            // while reading this node's adjoint and the parents' values.
            let (front, back) = self.nodes.split_at_mut(i);
            let node = &back[0];
            if node.adjoint.iter().all(|&x| x == 0.0) {
                continue;
            }
            let dz = &node.adjoint;
            match &node.op {
                OpKind::Leaf | OpKind::ParamLeaf(_) => {}
                OpKind::MatMul(a, b) => {
                    let da = dz.dot(&front[b.0].value.t());
                    let db = front[a.0].value.t().dot(dz);
                    front[a.0].adjoint += &da;
                    front[b.0].adjoint += &db;
                }
                OpKind::Add(a, b) => {
                    front[a.0].adjoint += dz;
                    front[b.0].adjoint += dz;
                }
                OpKind::AddBias(a, b) => {
                    front[a.0].adjoint += dz;
                    let db = dz.sum_axis(Axis(0)).insert_axis(Axis(0));
                    front[b.0].adjoint += &db;
                }
                OpKind::Sub(a, b) => {
                    front[a.0].adjoint += dz;
                    front[b.0].adjoint -= dz;
                }
                OpKind::Mul(a, b) => {
                    let da = dz * &front[b.0].value;
                    let db = dz * &front[a.0].value;
                    front[a.0].adjoint += &da;
                    front[b.0].adjoint += &db;
                }
                OpKind::MulScalar(a, s) => {
                    let sv = front[s.0].value[(0, 0)];
                    let da = dz * sv;
                    let ds = (dz * &front[a.0].value).sum();
                    front[a.0].adjoint += &da;
                    front[s.0].adjoint[(0, 0)] += ds;
                }
                OpKind::Affine(a, mul) => {
                    let da = dz * *mul;
                    front[a.0].adjoint += &da;
                }
                OpKind::PowScalar(a, e) => {
                    let av = &front[a.0].value;
                    let da = dz * &av.mapv(|x| e * x.powf(e - 1.0));
                    front[a.0].adjoint += &da;
                }
                OpKind::Square(a) => {
                    let da = dz * &front[a.0].value * 2.0;
                    front[a.0].adjoint += &da;
                }
                OpKind::Relu(a) => {
                    let mask = front[a.0].value.mapv(|x| if x > 0.0 { 1.0 } else { 0.0 });
                    let da = dz * &mask;
                    front[a.0].adjoint += &da;
                }
                OpKind::Sum(a) => {
                    front[a.0].adjoint += dz[(0, 0)];
                }
                OpKind::Mean(a) => {
                    let n = front[a.0].value.len() as f64;
                    front[a.0].adjoint += dz[(0, 0)] / n;
                }
                OpKind::Col(a, col) => {
                    let dz_col = dz.column(0);
                    let mut target = front[a.0].adjoint.column_mut(*col);
                    target += &dz_col;
                }
                OpKind::ConcatCols(parts) => {
                    let mut offset = 0;
                    for p in parts {
                        let w = front[p.0].value.ncols();
                        let slice = dz.slice(ndarray::s![.., offset..offset + w]);
                        front[p.0].adjoint += &slice;
                        offset += w;
                    }
                }
            }
        }

        let mut by_id = BTreeMap::new();
        for &pid in &self.param_nodes {
            let node = &self.nodes[pid.0];
            let OpKind::ParamLeaf(name) = &node.op else { unreachable!() };
            by_id
                .entry(name.clone())
                .and_modify(|g: &mut Matrix| *g += &node.adjoint)
                .or_insert_with(|| node.adjoint.clone());
        }
        Ok(Gradients { by_id })
    }
}

/// One plain gradient-descent step: `value <- value - learning_rate * grad`.
/// Params without a gradient entry are left unchanged.
pub fn sgd_step(params: &mut ParamStore, grads: &Gradients, learning_rate: f64) {
    assert!(learning_rate > 0.0, "learning_rate must be positive");
    for param in &mut params.params {
        if let Some(g) = grads.get(&param.id) {
            param.value.scaled_add(-learning_rate, g);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn matmul_identity_passes_through() {
        let mut t = Tape::new();
        let i = t.constant(array![[1.0, 0.0], [0.0, 1.0]]);
        let m = t.constant(array![[5.0, -2.0], [3.0, 7.0]]);
        let prod = t.matmul(i, m).unwrap();
        assert_eq!(t.value(prod), &array![[5.0, -2.0], [3.0, 7.0]]);
    }

    #[test]
    fn matmul_scalar_product() {
        let mut t = Tape::new();
        let a = t.constant(array![[2.0]]);
        let b = t.constant(array![[3.0]]);
        let prod = t.matmul(a, b).unwrap();
        assert_eq!(t.scalar(prod), 6.0);
    }

    #[test]
    fn matmul_shape_error_names_both_shapes() {
        let mut t = Tape::new();
        let a = t.constant(Matrix::zeros((2, 3)));
        let b = t.constant(Matrix::zeros((2, 3)));
        let err = t.matmul(a, b).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("(2, 3)"), "got: {msg}");
    }

    #[test]
    fn relu_sign_cases() {
        let mut t = Tape::new();
        let a = t.constant(array![[-1.0, 0.0, 2.0]]);
        let r = t.relu(a);
        assert_eq!(t.value(r), &array![[0.0, 0.0, 2.0]]);
    }

    #[test]
    fn relu_slopes_at_plus_minus_three() {
        for (x, want) in [(3.0, 1.0), (-3.0, 0.0)] {
            let mut t = Tape::new();
            let p = Param::new("x", array![[x]]);
            let n = t.param(&p);
            let r = t.relu(n);
            let grads = t.backward(r).unwrap();
            assert_eq!(grads.get("x").unwrap()[(0, 0)], want);
        }
    }

    #[test]
    fn mean_and_pow_examples() {
        let mut t = Tape::new();
        let a = t.constant(array![[1.0, 2.0, 3.0]]);
        let m = t.mean(a);
        assert_eq!(t.scalar(m), 2.0);
        let four = t.scalar_constant(4.0);
        let root = t.pow_scalar(four, 0.5).unwrap();
        assert_eq!(t.scalar(root), 2.0);
    }

    #[test]
    fn pow_gradient_matches_closed_form() {
        // d/dq q^1.8520 at q=2 is 1.8520 * 2^0.8520.
        let mut t = Tape::new();
        let p = Param::new("q", array![[2.0]]);
        let q = t.param(&p);
        let y = t.pow_scalar(q, 1.8520).unwrap();
        let grads = t.backward(y).unwrap();
        let got = grads.get("q").unwrap()[(0, 0)];
        let want = 1.8520 * 2.0f64.powf(0.8520);
        assert!((got - want).abs() / want < 1e-6, "got {got}, want {want}");
    }

    #[test]
    fn pow_rejects_non_positive_base_for_fractional_exponent() {
        let mut t = Tape::new();
        let a = t.constant(array![[1.0, -2.0]]);
        let err = t.pow_scalar(a, 0.5).unwrap_err();
        assert!(matches!(err, TapeError::NonPositiveBase { .. }));
    }

    #[test]
    fn backward_square_at_three() {
        let mut t = Tape::new();
        let p = Param::new("w", array![[3.0]]);
        let w = t.param(&p);
        let f = t.square(w);
        let grads = t.backward(f).unwrap();
        assert_eq!(grads.get("w").unwrap()[(0, 0)], 6.0);
    }

    #[test]
    fn backward_rejects_non_scalar_output() {
        let mut t = Tape::new();
        let a = t.constant(array![[1.0, 2.0]]);
        let err = t.backward(a).unwrap_err();
        assert!(matches!(err, TapeError::NonScalarOutput { .. }));
    }

    #[test]
    fn disconnected_param_gets_exact_zero() {
        let mut t = Tape::new();
        let used = Param::new("used", array![[2.0]]);
        let unused = Param::new("unused", array![[7.0]]);
        let a = t.param(&used);
        let _b = t.param(&unused);
        let f = t.square(a);
        let grads = t.backward(f).unwrap();
        assert_eq!(grads.get("unused").unwrap()[(0, 0)], 0.0);
        assert_eq!(grads.get("used").unwrap()[(0, 0)], 4.0);
    }

    #[test]
    fn backward_is_linear_in_seed() {
        let mut t = Tape::new();
        let p = Param::new("w", array![[1.5, -0.5], [2.0, 0.25]]);
        let w = t.param(&p);
        let sq = t.square(w);
        let s = t.sum(sq);
        let g1 = t.backward_seeded(s, 1.0).unwrap();
        let g2 = t.backward_seeded(s, 2.0).unwrap();
        let a = g1.get("w").unwrap();
        let b = g2.get("w").unwrap();
        for (x, y) in a.iter().zip(b.iter()) {
            assert_eq!(2.0 * x, *y);
        }
    }

    #[test]
    fn repeated_backward_is_deterministic() {
        let mut t = Tape::new();
        let p = Param::new("w", array![[0.3, 1.2, -0.7]]);
        let w = t.param(&p);
        let r = t.relu(w);
        let s = t.sum(r);
        let g1 = t.backward(s).unwrap();
        let g2 = t.backward(s).unwrap();
        assert_eq!(g1.get("w").unwrap(), g2.get("w").unwrap());
    }

    #[test]
    fn sgd_step_examples() {
        let mut store = ParamStore::new();
        store.insert(Param::new("w", array![[1.0]]));
        let mut grads = Gradients::default();
        grads.by_id.insert("w".into(), array![[2.0]]);
        sgd_step(&mut store, &grads, 0.1);
        assert!((store.get("w").unwrap().value()[(0, 0)] - 0.8).abs() < 1e-15);

        // Zero gradient leaves the value unchanged.
        let mut zero = Gradients::default();
        zero.by_id.insert("w".into(), array![[0.0]]);
        let before = store.get("w").unwrap().value().clone();
        sgd_step(&mut store, &zero, 0.1);
        assert_eq!(store.get("w").unwrap().value(), &before);
    }

    #[test]
    fn sgd_converges_on_shifted_parabola() {
        // f(w) = (w - 5)^2 has its minimum at 5.
        let mut store = ParamStore::new();
        store.insert(Param::new("w", array![[0.0]]));
        for _ in 0..10_000 {
            let mut t = Tape::new();
            let w = t.param(store.get("w").unwrap());
            let five = t.scalar_constant(5.0);
            let d = t.sub(w, five).unwrap();
            let f = t.square(d);
            let grads = t.backward(f).unwrap();
            sgd_step(&mut store, &grads, 0.1);
        }
        let w = store.get("w").unwrap().value()[(0, 0)];
        assert!((w - 5.0).abs() < 1e-6, "w = {w}");
    }

    #[test]
    fn col_and_concat_roundtrip_gradients() {
        let mut t = Tape::new();
        let p = Param::new("m", array![[1.0, 2.0], [3.0, 4.0]]);
        let m = t.param(&p);
        let c0 = t.col(m, 0).unwrap();
        let c1 = t.col(m, 1).unwrap();
        let back = t.concat_cols(&[c1, c0]).unwrap();
        assert_eq!(t.value(back), &array![[2.0, 1.0], [4.0, 3.0]]);
        let s = t.sum(back);
        let grads = t.backward(s).unwrap();
        assert_eq!(grads.get("m").unwrap(), &array![[1.0, 1.0], [1.0, 1.0]]);
    }

    #[test]
    fn param_shape_is_immutable() {
        let mut p = Param::new("w", Matrix::zeros((2, 2)));
        let result = std::panic::catch_unwind(std::panic::AssertUnwindSafe(|| {
            p.set_value(Matrix::zeros((1, 2)));
        }));
        assert!(result.is_err());
    }
}
