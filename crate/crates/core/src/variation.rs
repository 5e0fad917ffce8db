//! Initialisation and subtree variation under the node and depth limits.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::expr::{ExprTree, Node, NodeKind, TreeLimits};

/// Attempts at a given ramp depth before the depth is lowered.
const INIT_ATTEMPTS_PER_DEPTH: usize = 20;
/// Point re-draws before an operator falls back to the parent copy.
pub const OPERATOR_RETRIES: usize = 10;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct VariationConfig {
    pub crossover_rate: f64,
    pub mutation_rate: f64,
    pub mutation_depth: usize,
    pub init_depth_min: usize,
    pub init_depth_max: usize,
    pub limits: TreeLimits,
}

impl Default for VariationConfig {
    fn default() -> Self {
        VariationConfig {
            crossover_rate: 0.9,
            mutation_rate: 0.1,
            mutation_depth: 4,
            init_depth_min: 2,
            init_depth_max: 6,
            limits: TreeLimits::default(),
        }
    }
}

fn random_terminal<R: Rng + ?Sized>(dim: usize, rng: &mut R) -> NodeKind {
    let pick = rng.random_range(0..=dim);
    if pick == dim {
        NodeKind::One
    } else {
        NodeKind::Var(pick)
    }
}

fn random_function<R: Rng + ?Sized>(rng: &mut R) -> NodeKind {
    NodeKind::FUNCTIONS[rng.random_range(0..NodeKind::FUNCTIONS.len())]
}

fn build<R: Rng + ?Sized>(out: &mut Vec<Node>, depth: usize, max_depth: usize, full: bool, dim: usize, rng: &mut R) {
    let kind = if depth >= max_depth {
        random_terminal(dim, rng)
    } else if full || depth == 0 {
        random_function(rng)
    } else {
        // Uniform over the combined primitive set.
        let n_terms = dim + 1;
        let pick = rng.random_range(0..NodeKind::FUNCTIONS.len() + n_terms);
        if pick < NodeKind::FUNCTIONS.len() {
            NodeKind::FUNCTIONS[pick]
        } else {
            random_terminal(dim, rng)
        }
    };
    out.push(Node::new(kind));
    for _ in 0..kind.arity() {
        build(out, depth + 1, max_depth, full, dim, rng);
    }
}

/// "Full" tree: functions on every level above `max_depth`.
pub fn full<R: Rng + ?Sized>(max_depth: usize, dim: usize, rng: &mut R) -> ExprTree {
    let mut nodes = Vec::new();
    build(&mut nodes, 0, max_depth, true, dim, rng);
    ExprTree::from_nodes(nodes).expect("generated tree is well formed")
}

/// "Grow" tree: a function at the root, then functions or terminals until `max_depth`.
pub fn grow<R: Rng + ?Sized>(max_depth: usize, dim: usize, rng: &mut R) -> ExprTree {
    let mut nodes = Vec::new();
    build(&mut nodes, 0, max_depth, false, dim, rng);
    ExprTree::from_nodes(nodes).expect("generated tree is well formed")
}

/// Depths ramped over `init_depth_min..=init_depth_max`, alternating full and
/// grow. Trees breaking the limits are redrawn, lowering the depth after
/// repeated failures.
pub fn ramped_half_and_half<R: Rng + ?Sized>(count: usize, dim: usize, cfg: &VariationConfig, rng: &mut R) -> Vec<ExprTree> {
    let lo = cfg.init_depth_min.max(1);
    let hi = cfg.init_depth_max.max(lo);
    let span = hi - lo + 1;
    (0..count)
        .map(|i| {
            let target = lo + (i / 2) % span;
            let use_full = i % 2 == 0;
            let mut depth = target;
            loop {
                for _ in 0..INIT_ATTEMPTS_PER_DEPTH {
                    let t = if use_full { full(depth, dim, rng) } else { grow(depth, dim, rng) };
                    if cfg.limits.admits(&t) {
                        return t;
                    }
                }
                if depth > 1 {
                    depth -= 1;
                } else {
                    return grow(1, dim, rng);
                }
            }
        })
        .collect()
}

/// Swaps uniformly chosen subtrees with probability `crossover_rate`.
pub fn subtree_crossover<R: Rng + ?Sized>(
    p1: &ExprTree,
    p2: &ExprTree,
    cfg: &VariationConfig,
    rng: &mut R,
) -> (ExprTree, ExprTree) {
    if rng.random::<f64>() >= cfg.crossover_rate {
        return (p1.clone(), p2.clone());
    }
    let mut c1 = None;
    let mut c2 = None;
    for _ in 0..OPERATOR_RETRIES {
        let i = rng.random_range(0..p1.len());
        let j = rng.random_range(0..p2.len());
        let s1 = p1.subtree(i);
        let s2 = p2.subtree(j);
        if c1.is_none() {
            let t = p1.replace_subtree(i, &s2);
            if cfg.limits.admits(&t) {
                c1 = Some(t);
            }
        }
        if c2.is_none() {
            let t = p2.replace_subtree(j, &s1);
            if cfg.limits.admits(&t) {
                c2 = Some(t);
            }
        }
        if c1.is_some() && c2.is_some() {
            break;
        }
    }
    (c1.unwrap_or_else(|| p1.clone()), c2.unwrap_or_else(|| p2.clone()))
}

/// Replaces a uniformly chosen subtree by a fresh grow tree with probability
/// `mutation_rate`.
pub fn subtree_mutation<R: Rng + ?Sized>(tree: &ExprTree, dim: usize, cfg: &VariationConfig, rng: &mut R) -> ExprTree {
    if rng.random::<f64>() >= cfg.mutation_rate {
        return tree.clone();
    }
    for _ in 0..OPERATOR_RETRIES {
        let i = rng.random_range(0..tree.len());
        let depth = rng.random_range(0..=cfg.mutation_depth);
        let fresh = if depth == 0 { ExprTree::leaf(random_terminal(dim, rng), 1.0) } else { grow(depth, dim, rng) };
        let t = tree.replace_subtree(i, &fresh);
        if cfg.limits.admits(&t) {
            return t;
        }
    }
    tree.clone()
}
