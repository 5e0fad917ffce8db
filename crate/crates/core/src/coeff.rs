//! CMA-ES tuning of node weights.

use rand::Rng;

use crate::archive::{describe_residuals, Archive, GridSpec};
use crate::cluster::ClusterAssignment;
use crate::cmaes::{EsConfig, EsState};
use crate::dataset::Dataset;
use crate::error::Result;
use crate::expr::ExprTree;
use crate::loss::{self, LossKind};

/// One scored weight vector handed to the offer callback.
pub struct Candidate<'a> {
    pub tree: &'a ExprTree,
    pub residuals: &'a [f64],
    pub loss: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EsOutcome {
    pub best: ExprTree,
    pub best_loss: f64,
    /// Candidate evaluations performed.
    pub evaluations: usize,
}

/// Runs up to `generations` ask/tell rounds starting from the tree's current
/// weights. Every sampled candidate is passed to `offer` in sampling order.
/// The returned tree is the lowest-loss one seen, `tree` itself (with
/// `initial_loss`) included.
#[allow(clippy::too_many_arguments)]
pub fn run_es<R, F>(
    tree: &ExprTree,
    initial_loss: f64,
    data: &Dataset,
    kind: LossKind,
    cfg: &EsConfig,
    generations: usize,
    rng: &mut R,
    mut offer: F,
) -> Result<EsOutcome>
where
    R: Rng + ?Sized,
    F: FnMut(Candidate<'_>) -> Result<()>,
{
    let mut state = EsState::new(&tree.weights(), cfg)?;
    let mut best = tree.clone();
    let mut best_loss = initial_loss;
    let mut evaluations = 0;
    let mut residuals = Vec::with_capacity(data.len());
    for _ in 0..generations {
        let samples = state.ask(rng);
        let mut losses = Vec::with_capacity(samples.len());
        for w in &samples {
            let cand = tree.set_weights(w)?;
            loss::residuals_into(&cand, data, &mut residuals);
            let l = loss::loss_from_residuals(kind, &residuals)?;
            evaluations += 1;
            offer(Candidate { tree: &cand, residuals: &residuals, loss: l })?;
            if l < best_loss {
                best_loss = l;
                best = cand;
            }
            losses.push(l);
        }
        state.tell(&samples, &losses)?;
    }
    Ok(EsOutcome { best, best_loss, evaluations })
}

/// Full-length run that offers every candidate to `archive`.
pub fn optimize_coefficients<R: Rng + ?Sized>(
    tree: &ExprTree,
    data: &Dataset,
    kind: LossKind,
    cfg: &EsConfig,
    archive: &mut Archive,
    assignment: &ClusterAssignment,
    rng: &mut R,
) -> Result<EsOutcome> {
    let grid: GridSpec = *archive.spec();
    let initial = loss::loss(kind, tree, data)?;
    run_es(tree, initial, data, kind, cfg, cfg.generations, rng, |c| {
        let d = describe_residuals(c.tree, c.residuals, assignment, &grid);
        archive.update(c.tree, loss::fitness_from_loss(c.loss), c.loss, d)?;
        Ok(())
    })
}
