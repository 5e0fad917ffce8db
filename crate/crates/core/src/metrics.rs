//! Accuracy, coverage, QD-Score and 2-D hypervolume.

use crate::archive::Archive;
use crate::dataset::{Dataset, SubsetLabel};
use crate::error::Result;
use crate::expr::ExprTree;
use crate::loss::{self, LossKind};

/// Reference point on the (fitness, node count) plane.
pub const HV_REFERENCE: (f64, f64) = (0.0, 20.0);

/// `1 / (1 + MSE)` on the rows carrying `label`.
pub fn subset_accuracy(tree: &ExprTree, data: &Dataset, label: SubsetLabel) -> Result<f64> {
    accuracy(tree, &data.subset(label)?)
}

/// `1 / (1 + MSE)` on all rows.
pub fn accuracy(tree: &ExprTree, data: &Dataset) -> Result<f64> {
    loss::fitness(LossKind::Mse, tree, data)
}

pub fn coverage(archive: &Archive) -> f64 {
    archive.coverage()
}

pub fn qd_score(archive: &Archive) -> f64 {
    archive.qd_score()
}

/// Area dominated by `points` (fitness maximised, node count minimised)
/// inside the box bounded by [`HV_REFERENCE`].
pub fn hypervolume(points: &[(f64, f64)]) -> f64 {
    let (f_ref, n_ref) = HV_REFERENCE;
    let mut pts: Vec<(f64, f64)> =
        points.iter().copied().filter(|&(f, n)| f > f_ref && n < n_ref && f.is_finite() && n.is_finite()).collect();
    pts.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.total_cmp(&b.1)));
    // Walk fitness levels downward; each point that lowers the node frontier
    // adds the strip between its node count and the previous frontier.
    let mut area = 0.0;
    let mut frontier = n_ref;
    for (f, n) in pts {
        if n < frontier {
            area += (f - f_ref) * (frontier - n);
            frontier = n;
        }
    }
    area
}

pub fn archive_hypervolume(archive: &Archive) -> f64 {
    let pts: Vec<(f64, f64)> = archive.elites().map(|e| (e.fitness, e.tree.node_count() as f64)).collect();
    hypervolume(&pts)
}
