//! Tape-based reverse-mode automatic differentiation over scalars.
//!
//! Every operation records a node whose outgoing edges carry the local
//! partial derivatives with respect to its parents. Edges may also point
//! straight at a slot of a [`ParameterStore`](super::ParameterStore), so
//! fused kernels (bilinear lookups, spherical-harmonic dot products, network
//! neurons) never materialize one leaf node per parameter they touch.
//!
//! Constants are plain values that never reach the tape, which is why a
//! [`Var`] carries an optional tape reference.

use std::cell::RefCell;
use std::collections::BTreeMap;
use std::fmt;
use std::ops::{Add, Div, Mul, Neg, Sub};

use super::params::ParamId;
use super::AutodiffError;

const PARAM_BIT: u32 = 1 << 31;
const NO_NODE: u32 = u32::MAX;

/// Tag of the operation that produced a node.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[repr(u8)]
pub enum Op {
    Input,
    Param,
    Detach,
    Add,
    Sub,
    Mul,
    Div,
    Neg,
    Exp,
    Ln,
    Sin,
    Cos,
    Sqrt,
    Sigmoid,
    Relu,
    Powi,
    Max,
    Linear,
    Dot,
    ParamAffine,
    Neuron,
}

#[derive(Clone, Copy, Debug)]
struct Edge {
    target: u32,
    partial: f64,
}

#[derive(Clone, Copy, Debug)]
struct NodeRec {
    start: u32,
    op: Op,
}

#[derive(Default)]
struct TapeData {
    nodes: Vec<NodeRec>,
    edges: Vec<Edge>,
    adjoint: Vec<f64>,
}

impl TapeData {
    fn edge_range(&self, i: usize) -> std::ops::Range<usize> {
        let start = self.nodes[i].start as usize;
        let end = self
            .nodes
            .get(i + 1)
            .map_or(self.edges.len(), |n| n.start as usize);
        start..end
    }
}

/// Single-owner record of a computation. Rebuild (or [`clear`](Tape::clear))
/// per evaluation; nodes only ever reference earlier nodes, so the graph is
/// acyclic by construction.
#[derive(Default)]
pub struct Tape {
    data: RefCell<TapeData>,
}

impl fmt::Debug for Tape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let d = self.data.borrow();
        f.debug_struct("Tape")
            .field("nodes", &d.nodes.len())
            .field("edges", &d.edges.len())
            .finish()
    }
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    /// Drops all nodes but keeps the allocations for reuse.
    pub fn clear(&self) {
        let mut d = self.data.borrow_mut();
        d.nodes.clear();
        d.edges.clear();
    }

    pub fn len(&self) -> usize {
        self.data.borrow().nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Operation tag of the node behind `v`, `None` for constants.
    pub fn op_of(&self, v: Var<'_>) -> Option<Op> {
        if v.idx == NO_NODE {
            return None;
        }
        self.data.borrow().nodes.get(v.idx as usize).map(|n| n.op)
    }

    /// Free leaf variable; its adjoint is available from [`Gradients::wrt`].
    pub fn input(&self, value: f64) -> Var<'_> {
        self.push_raw(Op::Input, value, std::iter::empty())
    }

    /// Leaf bound to parameter slot `id`.
    pub fn param(&self, id: ParamId, value: f64) -> Var<'_> {
        self.push_raw(
            Op::Param,
            value,
            std::iter::once(Edge {
                target: id | PARAM_BIT,
                partial: 1.0,
            }),
        )
    }

    /// `bias + Σ coef·θ[id]`, recorded as a single node.
    pub fn param_affine(&self, value: f64, terms: &[(ParamId, f64)]) -> Var<'_> {
        self.push_raw(
            Op::ParamAffine,
            value,
            terms.iter().map(|&(id, c)| Edge {
                target: id | PARAM_BIT,
                partial: c,
            }),
        )
    }

    /// `θ[bias] + Σ_k θ[weights + k]·x_k`, recorded as a single node.
    pub fn neuron<'t>(
        &'t self,
        value: f64,
        bias: ParamId,
        weights: ParamId,
        weight_values: &[f64],
        inputs: &[Var<'t>],
    ) -> Var<'t> {
        debug_assert_eq!(weight_values.len(), inputs.len());
        let params = std::iter::once(Edge {
            target: bias | PARAM_BIT,
            partial: 1.0,
        })
        .chain(inputs.iter().enumerate().map(|(k, x)| Edge {
            target: (weights + k as u32) | PARAM_BIT,
            partial: x.val,
        }));
        let nodes = inputs
            .iter()
            .zip(weight_values)
            .filter(|(x, _)| x.idx != NO_NODE)
            .map(|(x, &w)| Edge {
                target: x.idx,
                partial: w,
            });
        self.push_raw(Op::Neuron, value, params.chain(nodes))
    }

    fn push_raw(&self, op: Op, value: f64, edges: impl Iterator<Item = Edge>) -> Var<'_> {
        let mut d = self.data.borrow_mut();
        let start = d.edges.len() as u32;
        d.edges.extend(edges);
        let idx = d.nodes.len() as u32;
        assert!(idx < PARAM_BIT, "tape overflow");
        d.nodes.push(NodeRec { start, op });
        Var {
            tape: Some(self),
            idx,
            val: value,
        }
    }

    fn push<'t>(&'t self, op: Op, value: f64, parents: &[(Var<'t>, f64)]) -> Var<'t> {
        self.push_raw(
            op,
            value,
            parents
                .iter()
                .filter(|(p, _)| p.idx != NO_NODE)
                .map(|&(p, partial)| Edge {
                    target: p.idx,
                    partial,
                }),
        )
    }

    /// Propagates `seed · d(root)` backwards and accumulates parameter
    /// gradients into `sink` (indexed by [`ParamId`]).
    pub fn backward_into(&self, root: Var<'_>, seed: f64, sink: &mut [f64]) {
        self.sweep(root, seed, |id, g| sink[id as usize] += g);
    }

    /// Full backward pass returning node adjoints and a sparse parameter map.
    pub fn backward(&self, root: Var<'_>) -> Result<Gradients, AutodiffError> {
        if let Some(t) = root.tape {
            if !std::ptr::eq(t, self) {
                return Err(AutodiffError::ForeignRoot);
            }
        }
        let mut params = BTreeMap::new();
        self.sweep(root, 1.0, |id, g| *params.entry(id).or_insert(0.0) += g);
        let adjoint = self.data.borrow().adjoint.clone();
        Ok(Gradients { adjoint, params })
    }

    /// Backward pass over a list of outputs; only a single scalar root is
    /// accepted.
    pub fn backward_outputs(&self, outputs: &[Var<'_>]) -> Result<Gradients, AutodiffError> {
        match outputs {
            [root] => self.backward(*root),
            _ => Err(AutodiffError::NonScalarRoot(outputs.len())),
        }
    }

    fn sweep(&self, root: Var<'_>, seed: f64, mut on_param: impl FnMut(ParamId, f64)) {
        let mut d = self.data.borrow_mut();
        let n = d.nodes.len();
        let mut adjoint = std::mem::take(&mut d.adjoint);
        adjoint.clear();
        adjoint.resize(n, 0.0);
        if root.idx != NO_NODE {
            let r = root.idx as usize;
            adjoint[r] = seed;
            for i in (0..=r).rev() {
                let a = adjoint[i];
                if a == 0.0 {
                    continue;
                }
                for e in &d.edges[d.edge_range(i)] {
                    let g = a * e.partial;
                    if e.target & PARAM_BIT != 0 {
                        on_param(e.target & !PARAM_BIT, g);
                    } else {
                        adjoint[e.target as usize] += g;
                    }
                }
            }
        }
        d.adjoint = adjoint;
    }
}

/// Result of [`Tape::backward`].
#[derive(Clone, Debug)]
pub struct Gradients {
    adjoint: Vec<f64>,
    params: BTreeMap<ParamId, f64>,
}

impl Gradients {
    /// d(root)/d(v); zero for constants and for nodes the root does not
    /// depend on.
    pub fn wrt(&self, v: Var<'_>) -> f64 {
        if v.idx == NO_NODE {
            return 0.0;
        }
        self.adjoint.get(v.idx as usize).copied().unwrap_or(0.0)
    }

    pub fn param(&self, id: ParamId) -> f64 {
        self.params.get(&id).copied().unwrap_or(0.0)
    }

    pub fn params(&self) -> &BTreeMap<ParamId, f64> {
        &self.params
    }
}

/// Differentiable scalar: a value plus (unless constant) its node on a tape.
#[derive(Clone, Copy)]
pub struct Var<'t> {
    tape: Option<&'t Tape>,
    idx: u32,
    val: f64,
}

impl fmt::Debug for Var<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.idx == NO_NODE {
            write!(f, "Var(const {})", self.val)
        } else {
            write!(f, "Var(#{} = {})", self.idx, self.val)
        }
    }
}

impl<'t> Var<'t> {
    pub fn constant(val: f64) -> Self {
        Var {
            tape: None,
            idx: NO_NODE,
            val,
        }
    }

    pub fn value(self) -> f64 {
        self.val
    }

    pub fn is_constant(self) -> bool {
        self.idx == NO_NODE
    }

    pub fn tape(self) -> Option<&'t Tape> {
        self.tape
    }

    /// Same value, zero vector-Jacobian product.
    pub fn detach(self) -> Self {
        match self.tape {
            Some(t) => t.push_raw(Op::Detach, self.val, std::iter::empty()),
            None => self,
        }
    }

    /// Convenience full backward pass from this root.
    pub fn backward(self) -> Gradients {
        match self.tape {
            Some(t) => t.backward(self).expect("root belongs to its own tape"),
            None => Gradients {
                adjoint: Vec::new(),
                params: BTreeMap::new(),
            },
        }
    }

    fn unary(self, op: Op, val: f64, partial: f64) -> Self {
        match self.tape {
            Some(t) => t.push(op, val, &[(self, partial)]),
            None => Var::constant(val),
        }
    }

    fn binary(self, other: Self, op: Op, val: f64, pa: f64, pb: f64) -> Self {
        match self.tape.or(other.tape) {
            Some(t) => t.push(op, val, &[(self, pa), (other, pb)]),
            None => Var::constant(val),
        }
    }

    /// `bias + Σ c_k x_k` as one node.
    pub fn linear(terms: &[(Var<'t>, f64)], bias: f64) -> Self {
        let val = terms.iter().fold(bias, |acc, (x, c)| acc + x.val * c);
        match terms.iter().find_map(|(x, _)| x.tape) {
            Some(t) => t.push(Op::Linear, val, terms),
            None => Var::constant(val),
        }
    }

    /// `Σ a_k b_k` as one node.
    pub fn dot(a: &[Var<'t>], b: &[Var<'t>]) -> Self {
        assert_eq!(a.len(), b.len(), "dot of unequal lengths");
        let val = a.iter().zip(b).map(|(x, y)| x.val * y.val).sum();
        let tape = a.iter().chain(b).find_map(|x| x.tape);
        match tape {
            Some(t) => {
                let parents: Vec<(Var<'t>, f64)> = a
                    .iter()
                    .zip(b)
                    .flat_map(|(&x, &y)| [(x, y.val), (y, x.val)])
                    .collect();
                t.push(Op::Dot, val, &parents)
            }
            None => Var::constant(val),
        }
    }

    pub fn exp(self) -> Self {
        let e = self.val.exp();
        self.unary(Op::Exp, e, e)
    }

    pub fn ln(self) -> Self {
        self.unary(Op::Ln, self.val.ln(), 1.0 / self.val)
    }

    pub fn sin(self) -> Self {
        self.unary(Op::Sin, self.val.sin(), self.val.cos())
    }

    pub fn cos(self) -> Self {
        self.unary(Op::Cos, self.val.cos(), -self.val.sin())
    }

    pub fn sqrt(self) -> Self {
        let s = self.val.sqrt();
        self.unary(Op::Sqrt, s, 0.5 / s)
    }

    pub fn sigmoid(self) -> Self {
        let (s, ds) = sigmoid_with_slope(self.val);
        self.unary(Op::Sigmoid, s, ds)
    }

    /// `(x)_+`, with subgradient 0 at exactly 0.
    pub fn relu(self) -> Self {
        if self.val > 0.0 {
            self.unary(Op::Relu, self.val, 1.0)
        } else {
            self.unary(Op::Relu, 0.0, 0.0)
        }
    }

    pub fn powi(self, n: i32) -> Self {
        let p = self.val.powi(n);
        let dp = if n == 0 {
            0.0
        } else {
            n as f64 * self.val.powi(n - 1)
        };
        self.unary(Op::Powi, p, dp)
    }

    /// `max(x, floor)` for a constant floor.
    pub fn max_const(self, floor: f64) -> Self {
        if self.val >= floor {
            self.unary(Op::Max, self.val, 1.0)
        } else {
            Var::constant(floor)
        }
    }
}

/// Logistic function and its derivative, both accurate in the tails.
pub fn sigmoid_with_slope(x: f64) -> (f64, f64) {
    let e = (-x.abs()).exp();
    let s = if x >= 0.0 {
        1.0 / (1.0 + e)
    } else {
        e / (1.0 + e)
    };
    (s, e / ((1.0 + e) * (1.0 + e)))
}

impl<'t> Add for Var<'t> {
    type Output = Var<'t>;
    fn add(self, rhs: Self) -> Self {
        self.binary(rhs, Op::Add, self.val + rhs.val, 1.0, 1.0)
    }
}

impl<'t> Sub for Var<'t> {
    type Output = Var<'t>;
    fn sub(self, rhs: Self) -> Self {
        self.binary(rhs, Op::Sub, self.val - rhs.val, 1.0, -1.0)
    }
}

impl<'t> Mul for Var<'t> {
    type Output = Var<'t>;
    fn mul(self, rhs: Self) -> Self {
        self.binary(rhs, Op::Mul, self.val * rhs.val, rhs.val, self.val)
    }
}

impl<'t> Div for Var<'t> {
    type Output = Var<'t>;
    fn div(self, rhs: Self) -> Self {
        let q = self.val / rhs.val;
        self.binary(rhs, Op::Div, q, 1.0 / rhs.val, -q / rhs.val)
    }
}

impl<'t> Neg for Var<'t> {
    type Output = Var<'t>;
    fn neg(self) -> Self {
        self.unary(Op::Neg, -self.val, -1.0)
    }
}

impl<'t> Add<f64> for Var<'t> {
    type Output = Var<'t>;
    fn add(self, rhs: f64) -> Self {
        self.unary(Op::Add, self.val + rhs, 1.0)
    }
}

impl<'t> Sub<f64> for Var<'t> {
    type Output = Var<'t>;
    fn sub(self, rhs: f64) -> Self {
        self.unary(Op::Sub, self.val - rhs, 1.0)
    }
}

impl<'t> Mul<f64> for Var<'t> {
    type Output = Var<'t>;
    fn mul(self, rhs: f64) -> Self {
        self.unary(Op::Mul, self.val * rhs, rhs)
    }
}

impl<'t> Div<f64> for Var<'t> {
    type Output = Var<'t>;
    fn div(self, rhs: f64) -> Self {
        self.unary(Op::Div, self.val / rhs, 1.0 / rhs)
    }
}

impl<'t> Add<Var<'t>> for f64 {
    type Output = Var<'t>;
    fn add(self, rhs: Var<'t>) -> Var<'t> {
        rhs + self
    }
}

impl<'t> Sub<Var<'t>> for f64 {
    type Output = Var<'t>;
    fn sub(self, rhs: Var<'t>) -> Var<'t> {
        rhs.unary(Op::Sub, self - rhs.val, -1.0)
    }
}

impl<'t> Mul<Var<'t>> for f64 {
    type Output = Var<'t>;
    fn mul(self, rhs: Var<'t>) -> Var<'t> {
        rhs * self
    }
}

impl<'t> Div<Var<'t>> for f64 {
    type Output = Var<'t>;
    fn div(self, rhs: Var<'t>) -> Var<'t> {
        let q = self / rhs.val;
        rhs.unary(Op::Div, q, -q / rhs.val)
    }
}
