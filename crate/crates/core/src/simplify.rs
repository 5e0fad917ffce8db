//! Constant folding and size-reducing algebraic rewrites.
//!
//! Node weights make many textbook identities unsound, so every algebraic
//! rewrite is checked numerically: the rewritten tree must flag at exactly
//! the same probe inputs as the tree handed to [`Simplifier::simplify`] and
//! agree with it elsewhere to `1e-9 * (1 + |reference|)`. A rewrite is kept
//! only if it also removes at least one node, so repeated application
//! terminates.

use rand::Rng;

use crate::dataset::Dataset;
use crate::expr::{EvalOutcome, ExprTree, NodeKind};

pub const PROBE_COUNT: usize = 32;
pub const PROBE_TOLERANCE: f64 = 1e-9;

/// Replaces every variable-free subtree of two or more nodes by a `const1`
/// leaf carrying its value. Subtrees whose evaluation trips a guard are left
/// alone, though their foldable parts are still folded.
pub fn constant_fold(tree: &ExprTree) -> ExprTree {
    let mut t = tree.clone();
    // Children sit after their parent in pre-order, so a descending sweep
    // folds inner subtrees first and never moves positions still to visit.
    for i in (0..t.len()).rev() {
        let end = t.subtree_end(i);
        if end - i < 2 || t.contains_var(i) {
            continue;
        }
        if let EvalOutcome::Value(v) = t.subtree(i).evaluate(&[]) {
            t = t.replace_subtree(i, &ExprTree::constant(v));
        }
    }
    t
}

#[derive(Clone, Debug)]
pub struct Simplifier {
    probes: Vec<Vec<f64>>,
}

impl Simplifier {
    pub fn new(probes: Vec<Vec<f64>>) -> Self {
        Simplifier { probes }
    }

    /// Draws [`PROBE_COUNT`] points uniformly from the bounding box of the
    /// dataset's inputs.
    pub fn from_dataset<R: Rng + ?Sized>(data: &Dataset, rng: &mut R) -> Self {
        let bounds = data.column_bounds();
        let probes = (0..PROBE_COUNT)
            .map(|_| {
                bounds[..data.dim()]
                    .iter()
                    .map(|&(lo, hi)| if hi > lo { rng.random_range(lo..=hi) } else { lo })
                    .collect()
            })
            .collect();
        Simplifier { probes }
    }

    pub fn probes(&self) -> &[Vec<f64>] {
        &self.probes
    }

    fn outcomes(&self, tree: &ExprTree) -> Vec<EvalOutcome> {
        self.probes.iter().map(|p| tree.evaluate(p)).collect()
    }

    fn agrees(&self, candidate: &ExprTree, reference: &[EvalOutcome]) -> bool {
        self.probes.iter().zip(reference).all(|(p, r)| match (candidate.evaluate(p), *r) {
            (EvalOutcome::Violation, EvalOutcome::Violation) => true,
            (EvalOutcome::Value(a), EvalOutcome::Value(b)) => (a - b).abs() <= PROBE_TOLERANCE * (1.0 + b.abs()),
            _ => false,
        })
    }

    /// Applies accepted rewrites until none applies.
    pub fn algebraic_simplify(&self, tree: &ExprTree) -> ExprTree {
        let reference = self.outcomes(tree);
        self.rewrite_to_fixpoint(tree.clone(), &reference, false)
    }

    /// Constant folding followed by algebraic rewrites, repeated to a fixpoint.
    pub fn simplify(&self, tree: &ExprTree) -> ExprTree {
        let reference = self.outcomes(tree);
        self.rewrite_to_fixpoint(constant_fold(tree), &reference, true)
    }

    fn rewrite_to_fixpoint(&self, mut t: ExprTree, reference: &[EvalOutcome], fold: bool) -> ExprTree {
        'sweep: loop {
            for i in (0..t.len()).rev() {
                for rule in [collect_terms, cancel_factors, reduce_log_exp] {
                    let Some(sub) = rule(&t, i) else { continue };
                    let cand = t.replace_subtree(i, &sub);
                    if cand.len() < t.len() && self.agrees(&cand, reference) {
                        t = if fold { constant_fold(&cand) } else { cand };
                        continue 'sweep;
                    }
                }
            }
            return t;
        }
    }
}

fn is_const_leaf(t: &ExprTree) -> bool {
    t.len() == 1 && t.root().kind == NodeKind::One
}

/// Appends `(coefficient, term with unit root weight)` pairs of the sum rooted at `i`.
fn sum_terms(t: &ExprTree, i: usize, scale: f64, out: &mut Vec<(f64, ExprTree)>) {
    let node = t.nodes()[i];
    let s = scale * node.weight;
    match node.kind {
        NodeKind::Add | NodeKind::Sub => {
            let ch = t.children(i);
            sum_terms(t, ch[0], s, out);
            sum_terms(t, ch[1], if node.kind == NodeKind::Sub { -s } else { s }, out);
        }
        NodeKind::Mul => {
            let ch = t.children(i);
            let (a, b) = (t.subtree(ch[0]), t.subtree(ch[1]));
            if is_const_leaf(&a) {
                sum_terms(t, ch[1], s * a.root().weight, out);
            } else if is_const_leaf(&b) {
                sum_terms(t, ch[0], s * b.root().weight, out);
            } else {
                out.push((s, t.subtree(i).with_root_weight(1.0)));
            }
        }
        _ => out.push((s, t.subtree(i).with_root_weight(1.0))),
    }
}

fn weighted_term(coef: f64, term: &ExprTree) -> ExprTree {
    term.clone().with_root_weight(coef)
}

/// Like terms of a sum merged, zero terms dropped.
fn collect_terms(t: &ExprTree, i: usize) -> Option<ExprTree> {
    if !matches!(t.nodes()[i].kind, NodeKind::Add | NodeKind::Sub) {
        return None;
    }
    let mut terms = Vec::new();
    sum_terms(t, i, 1.0, &mut terms);
    let mut groups: Vec<(String, f64, ExprTree)> = Vec::new();
    for (c, term) in terms {
        let key = term.to_string();
        match groups.iter_mut().find(|g| g.0 == key) {
            Some(g) => g.1 += c,
            None => groups.push((key, c, term)),
        }
    }
    if groups.iter().any(|g| !g.1.is_finite()) {
        return None;
    }
    let mut parts = groups.into_iter().filter(|g| g.1 != 0.0).map(|g| weighted_term(g.1, &g.2));
    let Some(first) = parts.next() else { return Some(ExprTree::constant(0.0)) };
    Some(parts.fold(first, ExprTree::add))
}

/// Appends factors of the product rooted at `i`; `num` marks the numerator side.
fn product_factors(t: &ExprTree, i: usize, num: bool, coef: &mut f64, out: &mut Vec<(bool, ExprTree)>) {
    let node = t.nodes()[i];
    if num {
        *coef *= node.weight;
    } else {
        *coef /= node.weight;
    }
    match node.kind {
        NodeKind::Mul | NodeKind::Div => {
            let ch = t.children(i);
            product_factors(t, ch[0], num, coef, out);
            product_factors(t, ch[1], if node.kind == NodeKind::Div { !num } else { num }, coef, out);
        }
        NodeKind::One => {}
        _ => out.push((num, t.subtree(i).with_root_weight(1.0))),
    }
}

fn product(factors: Vec<ExprTree>) -> Option<ExprTree> {
    let mut it = factors.into_iter();
    let first = it.next()?;
    Some(it.fold(first, ExprTree::mul))
}

/// Cancels factors shared by numerator and denominator, absorbs constants
/// into one coefficient, and merges exponentials into a single `exp`.
fn cancel_factors(t: &ExprTree, i: usize) -> Option<ExprTree> {
    if !matches!(t.nodes()[i].kind, NodeKind::Mul | NodeKind::Div) {
        return None;
    }
    let mut coef = 1.0;
    let mut factors = Vec::new();
    product_factors(t, i, true, &mut coef, &mut factors);
    if !coef.is_finite() {
        return None;
    }

    let keys: Vec<String> = factors.iter().map(|f| f.1.to_string()).collect();
    let mut alive = vec![true; factors.len()];
    for a in 0..factors.len() {
        if !alive[a] || !factors[a].0 {
            continue;
        }
        if let Some(b) = (0..factors.len()).find(|&b| alive[b] && !factors[b].0 && keys[b] == keys[a]) {
            alive[a] = false;
            alive[b] = false;
        }
    }
    let factors: Vec<(bool, ExprTree)> = factors.into_iter().zip(alive).filter(|p| p.1).map(|p| p.0).collect();

    let (exps, mut rest): (Vec<_>, Vec<_>) = factors.into_iter().partition(|f| f.1.root().kind == NodeKind::Exp);
    if exps.len() >= 2 {
        let (pos, neg): (Vec<_>, Vec<_>) = exps.into_iter().map(|(s, e)| (s, e.subtree(1))).partition(|f| f.0);
        let merged = if pos.is_empty() {
            (false, ExprTree::exp(neg.into_iter().map(|f| f.1).reduce(ExprTree::add)?))
        } else {
            let plus = pos.into_iter().map(|f| f.1).reduce(ExprTree::add)?;
            (true, ExprTree::exp(neg.into_iter().fold(plus, |acc, f| ExprTree::sub(acc, f.1))))
        };
        rest.push(merged);
    } else {
        rest.extend(exps);
    }

    let (num, den): (Vec<_>, Vec<_>) = rest.into_iter().partition(|f| f.0);
    let num = product(num.into_iter().map(|f| f.1).collect());
    let den = product(den.into_iter().map(|f| f.1).collect());
    Some(match (num, den) {
        (None, None) => ExprTree::constant(coef),
        (Some(n), None) => {
            let w = n.root().weight * coef;
            n.with_root_weight(w)
        }
        (None, Some(d)) => ExprTree::div(ExprTree::constant(coef), d),
        (Some(n), Some(d)) => ExprTree::div(n, d).with_root_weight(coef),
    })
}

/// `log(exp(a))` and `exp(log(a))` with a unit inner weight collapse to `a`.
fn reduce_log_exp(t: &ExprTree, i: usize) -> Option<ExprTree> {
    let outer = t.nodes()[i];
    let inner_kind = match outer.kind {
        NodeKind::Log => NodeKind::Exp,
        NodeKind::Exp => NodeKind::Log,
        _ => return None,
    };
    let inner = t.nodes()[i + 1];
    if inner.kind != inner_kind || inner.weight != 1.0 {
        return None;
    }
    let arg = t.subtree(i + 2);
    let w = arg.root().weight * outer.weight;
    Some(arg.with_root_weight(w))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::tests::arb_tree;
    use proptest::prelude::{prop, prop_assert, prop_assert_eq, proptest, TestCaseError};
    use rand::SeedableRng;

    fn probes_1d() -> Simplifier {
        let mut r = rand_chacha::ChaCha8Rng::seed_from_u64(0);
        Simplifier::new((0..PROBE_COUNT).map(|_| vec![r.random_range(-5.0..5.0)]).collect())
    }

    fn x() -> ExprTree {
        ExprTree::var(0)
    }

    #[test]
    fn folding_examples() {
        let two = constant_fold(&ExprTree::add(ExprTree::one(), ExprTree::one()));
        assert_eq!(two, ExprTree::constant(2.0));

        let m = constant_fold(&ExprTree::mul(x(), ExprTree::add(ExprTree::one(), ExprTree::one())));
        assert_eq!(m, ExprTree::mul(x(), ExprTree::constant(2.0)));
        assert_eq!(m.len(), 3);

        let bad = ExprTree::log(ExprTree::constant(-1.0));
        let folded = constant_fold(&bad);
        assert_eq!(folded, bad);
        assert!(folded.evaluate(&[0.0]).is_violation());

        // The flagged outer log stays; its constant argument still folds.
        let nested = ExprTree::log(ExprTree::sub(ExprTree::one(), ExprTree::constant(3.0)));
        assert_eq!(constant_fold(&nested), ExprTree::log(ExprTree::constant(-2.0)));
    }

    #[test]
    fn cancellation() {
        let s = probes_1d();
        let t = ExprTree::div(ExprTree::mul(x(), ExprTree::one()), x());
        assert_eq!(s.simplify(&t), ExprTree::constant(1.0));
    }

    #[test]
    fn collection() {
        let s = probes_1d();
        let t = ExprTree::add(ExprTree::mul(x(), ExprTree::one()), ExprTree::mul(x(), ExprTree::one()));
        assert_eq!(s.simplify(&t), ExprTree::leaf(NodeKind::Var(0), 2.0));
        let zero = ExprTree::sub(x(), x());
        assert_eq!(s.simplify(&zero), ExprTree::constant(0.0));
    }

    #[test]
    fn exponent_combination() {
        let s = probes_1d();
        let t = ExprTree::mul(ExprTree::exp(x()), ExprTree::exp(x()));
        let out = s.simplify(&t);
        assert!(out.len() < t.len());
        assert_eq!(out, ExprTree::exp(ExprTree::leaf(NodeKind::Var(0), 2.0)));
        let q = s.simplify(&ExprTree::div(ExprTree::exp(x()), ExprTree::exp(ExprTree::one())));
        assert_eq!(q.len(), 2, "{q}");
        for p in s.probes() {
            let a = q.evaluate(p).value().unwrap();
            assert!((a - (p[0] - 1.0).exp()).abs() <= 1e-12 * a.abs().max(1.0));
        }
    }

    #[test]
    fn log_exp_reduction() {
        let s = probes_1d();
        assert_eq!(s.simplify(&ExprTree::log(ExprTree::exp(x()))), x());
        // exp(log(x)) is undefined for x <= 0 while x is not; probes catch it.
        let el = ExprTree::exp(ExprTree::log(x()));
        assert_eq!(s.simplify(&el), el);
        let positive = Simplifier::new((1..=PROBE_COUNT).map(|i| vec![i as f64 / 8.0]).collect());
        assert_eq!(positive.simplify(&el), x());
    }

    #[test]
    fn weighted_identity_is_not_applied_blindly() {
        // log(2 * exp(x)) = x + ln 2 has no smaller form in the alphabet.
        let s = probes_1d();
        let t = ExprTree::log(ExprTree::exp(x()).with_root_weight(2.0));
        assert_eq!(s.simplify(&t), t);
    }

    fn check_preserved(s: &Simplifier, t: &ExprTree, out: &ExprTree, xs: &[f64]) -> Result<(), TestCaseError> {
        prop_assert!(out.len() <= t.len());
        for &v in xs {
            if let (EvalOutcome::Value(a), EvalOutcome::Value(b)) = (out.evaluate(&[v]), t.evaluate(&[v])) {
                prop_assert!((a - b).abs() <= 1e-9 * (1.0 + b.abs()), "{t} -> {out} at {v}: {b} vs {a}");
            }
        }
        let _ = s;
        Ok(())
    }

    proptest! {
        #[test]
        fn semantics_preserved(t in arb_tree(5), xs in prop::collection::vec(-5.0f64..5.0, 20)) {
            let s = probes_1d();
            let out = s.simplify(&t);
            check_preserved(&s, &t, &out, &xs)?;
            check_preserved(&s, &t, &constant_fold(&t), &xs)?;
            prop_assert!(constant_fold(&t).len() <= t.len());
        }

        #[test]
        fn fixpoint_is_stable(t in arb_tree(5)) {
            let s = probes_1d();
            let once = s.simplify(&t);
            prop_assert_eq!(s.simplify(&once).len(), once.len());
        }
    }
}
