//! Weighted expression trees.
//!
//! A tree is stored as a flat pre-order node list, so the subtree rooted at
//! any position is a contiguous slice and crossover/mutation points can be
//! addressed by index. Every node carries a multiplicative weight applied to
//! its own output before the parent consumes it; the root is weighted too.
//!
//! The canonical text form is prefix notation with explicit weights:
//!
//! ```text
//! (mul w=1.0 (add w=1.0 (var0 w=1.0) (const1 w=1.0)))
//! ```

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

/// Absolute residual assigned to an observation whose evaluation hits a guard.
pub const PENALTY: f64 = 1e6;
/// Divisors with smaller magnitude are a guard violation.
pub const MIN_DIVISOR: f64 = 1e-12;
/// `exp` arguments with larger magnitude are a guard violation.
pub const MAX_EXP_ARG: f64 = 100.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum NodeKind {
    Add,
    Sub,
    Mul,
    Div,
    Log,
    Exp,
    /// Input dimension, 0-based.
    Var(usize),
    /// The literal constant 1.
    One,
}

impl NodeKind {
    pub const FUNCTIONS: [NodeKind; 6] = [
        NodeKind::Add,
        NodeKind::Sub,
        NodeKind::Mul,
        NodeKind::Div,
        NodeKind::Log,
        NodeKind::Exp,
    ];

    pub fn arity(self) -> usize {
        match self {
            NodeKind::Add | NodeKind::Sub | NodeKind::Mul | NodeKind::Div => 2,
            NodeKind::Log | NodeKind::Exp => 1,
            NodeKind::Var(_) | NodeKind::One => 0,
        }
    }

    pub fn is_transcendental(self) -> bool {
        matches!(self, NodeKind::Log | NodeKind::Exp)
    }

    pub fn is_terminal(self) -> bool {
        self.arity() == 0
    }

    fn write_name(self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            NodeKind::Add => f.write_str("add"),
            NodeKind::Sub => f.write_str("sub"),
            NodeKind::Mul => f.write_str("mul"),
            NodeKind::Div => f.write_str("div"),
            NodeKind::Log => f.write_str("log"),
            NodeKind::Exp => f.write_str("exp"),
            NodeKind::Var(i) => write!(f, "var{i}"),
            NodeKind::One => f.write_str("const1"),
        }
    }

    fn from_name(name: &str) -> Option<NodeKind> {
        Some(match name {
            "add" => NodeKind::Add,
            "sub" => NodeKind::Sub,
            "mul" => NodeKind::Mul,
            "div" => NodeKind::Div,
            "log" => NodeKind::Log,
            "exp" => NodeKind::Exp,
            "const1" => NodeKind::One,
            _ => {
                let idx = name.strip_prefix("var")?;
                if idx.is_empty() || !idx.bytes().all(|b| b.is_ascii_digit()) {
                    return None;
                }
                NodeKind::Var(idx.parse().ok()?)
            }
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Node {
    pub kind: NodeKind,
    pub weight: f64,
}

impl Node {
    pub fn new(kind: NodeKind) -> Self {
        Node { kind, weight: 1.0 }
    }

    pub fn weighted(kind: NodeKind, weight: f64) -> Self {
        Node { kind, weight }
    }
}

/// Result of evaluating a tree at one observation.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum EvalOutcome {
    Value(f64),
    /// A domain guard fired or an intermediate value was non-finite.
    Violation,
}

impl EvalOutcome {
    pub fn value(self) -> Option<f64> {
        match self {
            EvalOutcome::Value(v) => Some(v),
            EvalOutcome::Violation => None,
        }
    }

    pub fn is_violation(self) -> bool {
        matches!(self, EvalOutcome::Violation)
    }
}

/// Maximum node count and depth for trees produced by the search.
#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct TreeLimits {
    pub max_nodes: usize,
    pub max_depth: usize,
}

impl Default for TreeLimits {
    fn default() -> Self {
        TreeLimits {
            max_nodes: 20,
            max_depth: 17,
        }
    }
}

impl TreeLimits {
    pub fn admits(&self, tree: &ExprTree) -> bool {
        tree.len() <= self.max_nodes && tree.depth() <= self.max_depth
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExprTree {
    nodes: Vec<Node>,
}

impl ExprTree {
    /// Builds a tree from a pre-order node list, checking arities.
    pub fn from_nodes(nodes: Vec<Node>) -> Result<Self> {
        if nodes.is_empty() {
            return Err(Error::InvalidTree("no nodes".into()));
        }
        let mut open = 1usize;
        for (i, n) in nodes.iter().enumerate() {
            if open == 0 {
                return Err(Error::InvalidTree(format!("trailing nodes from position {i}")));
            }
            if !n.weight.is_finite() {
                return Err(Error::InvalidTree(format!("non-finite weight at position {i}")));
            }
            open = open - 1 + n.kind.arity();
        }
        if open != 0 {
            return Err(Error::InvalidTree(format!("{open} missing operand(s)")));
        }
        Ok(ExprTree { nodes })
    }

    pub fn leaf(kind: NodeKind, weight: f64) -> Self {
        debug_assert!(kind.is_terminal());
        ExprTree {
            nodes: vec![Node::weighted(kind, weight)],
        }
    }

    pub fn var(index: usize) -> Self {
        Self::leaf(NodeKind::Var(index), 1.0)
    }

    pub fn one() -> Self {
        Self::leaf(NodeKind::One, 1.0)
    }

    /// A `const1` leaf whose weight carries `value`.
    pub fn constant(value: f64) -> Self {
        Self::leaf(NodeKind::One, value)
    }

    pub fn unary(kind: NodeKind, child: ExprTree) -> Self {
        debug_assert_eq!(kind.arity(), 1);
        let mut nodes = Vec::with_capacity(child.len() + 1);
        nodes.push(Node::new(kind));
        nodes.extend(child.nodes);
        ExprTree { nodes }
    }

    pub fn binary(kind: NodeKind, lhs: ExprTree, rhs: ExprTree) -> Self {
        debug_assert_eq!(kind.arity(), 2);
        let mut nodes = Vec::with_capacity(lhs.len() + rhs.len() + 1);
        nodes.push(Node::new(kind));
        nodes.extend(lhs.nodes);
        nodes.extend(rhs.nodes);
        ExprTree { nodes }
    }

    #[allow(clippy::should_implement_trait)]
    pub fn add(lhs: ExprTree, rhs: ExprTree) -> Self {
        Self::binary(NodeKind::Add, lhs, rhs)
    }

    #[allow(clippy::should_implement_trait)]
    pub fn sub(lhs: ExprTree, rhs: ExprTree) -> Self {
        Self::binary(NodeKind::Sub, lhs, rhs)
    }

    #[allow(clippy::should_implement_trait)]
    pub fn mul(lhs: ExprTree, rhs: ExprTree) -> Self {
        Self::binary(NodeKind::Mul, lhs, rhs)
    }

    #[allow(clippy::should_implement_trait)]
    pub fn div(lhs: ExprTree, rhs: ExprTree) -> Self {
        Self::binary(NodeKind::Div, lhs, rhs)
    }

    pub fn log(child: ExprTree) -> Self {
        Self::unary(NodeKind::Log, child)
    }

    pub fn exp(child: ExprTree) -> Self {
        Self::unary(NodeKind::Exp, child)
    }

    pub fn with_root_weight(mut self, weight: f64) -> Self {
        self.nodes[0].weight = weight;
        self
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn root(&self) -> Node {
        self.nodes[0]
    }

    /// Node count, terminals included.
    #[allow(clippy::len_without_is_empty)]
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn transcendental_count(&self) -> usize {
        self.nodes
            .iter()
            .filter(|n| n.kind.is_transcendental())
            .count()
    }

    /// Depth with the root at depth 0.
    pub fn depth(&self) -> usize {
        // Unfilled child slots of each open ancestor.
        let mut pending: Vec<usize> = Vec::with_capacity(self.nodes.len());
        let mut max_depth = 0;
        for node in &self.nodes {
            while pending.last() == Some(&0) {
                pending.pop();
            }
            max_depth = max_depth.max(pending.len());
            if let Some(top) = pending.last_mut() {
                *top -= 1;
            }
            let arity = node.kind.arity();
            if arity > 0 {
                pending.push(arity);
            }
        }
        max_depth
    }

    /// End (exclusive) of the subtree rooted at `start`.
    pub fn subtree_end(&self, start: usize) -> usize {
        let mut open = 1usize;
        let mut i = start;
        while open > 0 {
            open = open - 1 + self.nodes[i].kind.arity();
            i += 1;
        }
        i
    }

    /// Positions of the direct children of the node at `index`.
    pub fn children(&self, index: usize) -> Vec<usize> {
        let arity = self.nodes[index].kind.arity();
        let mut out = Vec::with_capacity(arity);
        let mut pos = index + 1;
        for _ in 0..arity {
            out.push(pos);
            pos = self.subtree_end(pos);
        }
        out
    }

    pub fn subtree(&self, start: usize) -> ExprTree {
        ExprTree {
            nodes: self.nodes[start..self.subtree_end(start)].to_vec(),
        }
    }

    /// Returns a copy with the subtree at `start` replaced by `replacement`.
    pub fn replace_subtree(&self, start: usize, replacement: &ExprTree) -> ExprTree {
        let end = self.subtree_end(start);
        let mut nodes = Vec::with_capacity(self.nodes.len() - (end - start) + replacement.len());
        nodes.extend_from_slice(&self.nodes[..start]);
        nodes.extend_from_slice(&replacement.nodes);
        nodes.extend_from_slice(&self.nodes[end..]);
        ExprTree { nodes }
    }

    pub fn contains_var(&self, start: usize) -> bool {
        self.nodes[start..self.subtree_end(start)]
            .iter()
            .any(|n| matches!(n.kind, NodeKind::Var(_)))
    }

    pub fn max_var_index(&self) -> Option<usize> {
        self.nodes
            .iter()
            .filter_map(|n| match n.kind {
                NodeKind::Var(i) => Some(i),
                _ => None,
            })
            .max()
    }

    /// Weights in pre-order.
    pub fn weights(&self) -> Vec<f64> {
        self.nodes.iter().map(|n| n.weight).collect()
    }

    pub fn set_weights(&self, weights: &[f64]) -> Result<ExprTree> {
        if weights.len() != self.nodes.len() {
            return Err(Error::LengthMismatch {
                expected: self.nodes.len(),
                actual: weights.len(),
            });
        }
        let mut out = self.clone();
        for (node, &w) in out.nodes.iter_mut().zip(weights) {
            node.weight = w;
        }
        Ok(out)
    }

    /// Same structure (kinds), ignoring weights.
    pub fn same_shape(&self, other: &ExprTree) -> bool {
        self.nodes.len() == other.nodes.len()
            && self
                .nodes
                .iter()
                .zip(&other.nodes)
                .all(|(a, b)| a.kind == b.kind)
    }

    pub fn evaluate(&self, x: &[f64]) -> EvalOutcome {
        let mut stack = Vec::with_capacity(self.nodes.len());
        match self.eval_with(x, &mut stack) {
            Some(v) => EvalOutcome::Value(v),
            None => EvalOutcome::Violation,
        }
    }

    /// Evaluates at `x` using `stack` as scratch space; `None` on a guard
    /// violation or a non-finite intermediate.
    ///
    /// Walking the pre-order list backwards visits every child before its
    /// parent, and leaves a binary node's first operand on top of the stack.
    pub fn eval_with(&self, x: &[f64], stack: &mut Vec<f64>) -> Option<f64> {
        stack.clear();
        for node in self.nodes.iter().rev() {
            let raw = match node.kind {
                NodeKind::Var(i) => x[i],
                NodeKind::One => 1.0,
                NodeKind::Log => {
                    let a = stack.pop()?;
                    if a <= 0.0 {
                        return None;
                    }
                    a.ln()
                }
                NodeKind::Exp => {
                    let a = stack.pop()?;
                    if a.abs() > MAX_EXP_ARG {
                        return None;
                    }
                    a.exp()
                }
                NodeKind::Add => {
                    let a = stack.pop()?;
                    let b = stack.pop()?;
                    a + b
                }
                NodeKind::Sub => {
                    let a = stack.pop()?;
                    let b = stack.pop()?;
                    a - b
                }
                NodeKind::Mul => {
                    let a = stack.pop()?;
                    let b = stack.pop()?;
                    a * b
                }
                NodeKind::Div => {
                    let a = stack.pop()?;
                    let b = stack.pop()?;
                    if b.abs() < MIN_DIVISOR {
                        return None;
                    }
                    a / b
                }
            };
            let v = node.weight * raw;
            if !v.is_finite() {
                return None;
            }
            stack.push(v);
        }
        stack.pop()
    }

    /// Intercept and per-variable slopes when the tree is affine in its
    /// inputs, judged structurally; `None` otherwise.
    pub fn affine_coefficients(&self, dim: usize) -> Option<(f64, Vec<f64>)> {
        self.affine_at(0, dim)
    }

    fn affine_at(&self, i: usize, dim: usize) -> Option<(f64, Vec<f64>)> {
        let node = self.nodes[i];
        let scale = |(c, s): (f64, Vec<f64>), k: f64| (c * k, s.into_iter().map(|v| v * k).collect());
        let (c, s) = match node.kind {
            NodeKind::One => (1.0, vec![0.0; dim]),
            NodeKind::Var(j) => {
                if j >= dim {
                    return None;
                }
                let mut s = vec![0.0; dim];
                s[j] = 1.0;
                (0.0, s)
            }
            NodeKind::Log | NodeKind::Exp => {
                // Affine only when the argument is constant.
                let arg = self.affine_at(i + 1, dim)?;
                if arg.1.iter().any(|&v| v != 0.0) {
                    return None;
                }
                let v = self.subtree(i).with_root_weight(1.0).evaluate(&vec![0.0; dim]).value()?;
                (v, vec![0.0; dim])
            }
            NodeKind::Add | NodeKind::Sub | NodeKind::Mul | NodeKind::Div => {
                let ch = self.children(i);
                let a = self.affine_at(ch[0], dim)?;
                let b = self.affine_at(ch[1], dim)?;
                let a_const = a.1.iter().all(|&v| v == 0.0);
                let b_const = b.1.iter().all(|&v| v == 0.0);
                match node.kind {
                    NodeKind::Add => (a.0 + b.0, a.1.iter().zip(&b.1).map(|(p, q)| p + q).collect()),
                    NodeKind::Sub => (a.0 - b.0, a.1.iter().zip(&b.1).map(|(p, q)| p - q).collect()),
                    NodeKind::Mul if b_const => scale(a, b.0),
                    NodeKind::Mul if a_const => scale(b, a.0),
                    NodeKind::Div if b_const && b.0.abs() >= MIN_DIVISOR => scale(a, 1.0 / b.0),
                    _ => return None,
                }
            }
        };
        Some(scale((c, s), node.weight))
    }

    fn fmt_at(&self, i: usize, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let node = self.nodes[i];
        f.write_str("(")?;
        node.kind.write_name(f)?;
        write!(f, " w={:?}", node.weight)?;
        for c in self.children(i) {
            f.write_str(" ")?;
            self.fmt_at(c, f)?;
        }
        f.write_str(")")
    }
}

impl fmt::Display for ExprTree {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.fmt_at(0, f)
    }
}

impl FromStr for ExprTree {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let mut parser = Parser { src: s.as_bytes(), pos: 0, nodes: Vec::new() };
        parser.node()?;
        parser.skip_ws();
        if parser.pos != parser.src.len() {
            return Err(parser.err("trailing input"));
        }
        ExprTree::from_nodes(parser.nodes)
    }
}

struct Parser<'a> {
    src: &'a [u8],
    pos: usize,
    nodes: Vec<Node>,
}

impl Parser<'_> {
    fn err(&self, msg: &str) -> Error {
        Error::Parse { pos: self.pos, msg: msg.to_string() }
    }

    fn skip_ws(&mut self) {
        while self.pos < self.src.len() && self.src[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    fn expect(&mut self, byte: u8) -> Result<()> {
        self.skip_ws();
        if self.src.get(self.pos) == Some(&byte) {
            self.pos += 1;
            Ok(())
        } else {
            Err(self.err(&format!("expected `{}`", byte as char)))
        }
    }

    fn word(&mut self) -> &str {
        self.skip_ws();
        let start = self.pos;
        while self.pos < self.src.len() && !self.src[self.pos].is_ascii_whitespace() && !matches!(self.src[self.pos], b'(' | b')') {
            self.pos += 1;
        }
        std::str::from_utf8(&self.src[start..self.pos]).unwrap_or("")
    }

    fn node(&mut self) -> Result<()> {
        self.expect(b'(')?;
        let name = self.word().to_string();
        let kind = NodeKind::from_name(&name).ok_or_else(|| self.err(&format!("unknown node `{name}`")))?;
        let w = self.word().to_string();
        let weight: f64 = w
            .strip_prefix("w=")
            .and_then(|v| v.parse().ok())
            .ok_or_else(|| self.err("expected `w=<number>`"))?;
        self.nodes.push(Node::weighted(kind, weight));
        for _ in 0..kind.arity() {
            self.node()?;
        }
        self.expect(b')')
    }
}
