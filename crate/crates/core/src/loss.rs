//! Residuals, losses and the fitness transform.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::expr::{ExprTree, PENALTY};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LossKind {
    Mse,
    Mae,
    Medae,
}

impl LossKind {
    pub const ALL: [LossKind; 3] = [LossKind::Mse, LossKind::Mae, LossKind::Medae];

    pub fn name(self) -> &'static str {
        match self {
            LossKind::Mse => "mse",
            LossKind::Mae => "mae",
            LossKind::Medae => "medae",
        }
    }
}

impl fmt::Display for LossKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for LossKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "mse" => Ok(LossKind::Mse),
            "mae" => Ok(LossKind::Mae),
            "medae" => Ok(LossKind::Medae),
            _ => Err(Error::InvalidConfig(format!("unknown loss `{s}` (expected mse, mae or medae)"))),
        }
    }
}

/// `y_i - f(x_i)`, with guard-violating observations set to `+PENALTY`.
pub fn residuals(tree: &ExprTree, data: &Dataset) -> Result<Vec<f64>> {
    if data.len() == 0 {
        return Err(Error::EmptyDataset);
    }
    let mut out = Vec::with_capacity(data.len());
    residuals_into(tree, data, &mut out);
    Ok(out)
}

pub(crate) fn residuals_into(tree: &ExprTree, data: &Dataset, out: &mut Vec<f64>) {
    out.clear();
    let mut stack = Vec::with_capacity(tree.len());
    for i in 0..data.len() {
        let r = match tree.eval_with(data.row(i), &mut stack) {
            Some(v) => {
                let r = data.target(i) - v;
                if r.is_finite() {
                    r
                } else {
                    PENALTY
                }
            }
            None => PENALTY,
        };
        out.push(r);
    }
}

/// Neumaier-compensated sum; independent of how the inputs were produced.
pub fn compensated_sum(values: impl IntoIterator<Item = f64>) -> f64 {
    let mut sum = 0.0;
    let mut comp = 0.0;
    for v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            comp += (sum - t) + v;
        } else {
            comp += (v - t) + sum;
        }
        sum = t;
    }
    sum + comp
}

/// Median with the two-middle-values average for even lengths. Reorders `values`.
pub fn median_in_place(values: &mut [f64]) -> f64 {
    let n = values.len();
    let mid = n / 2;
    let (lower, upper, _) = values.select_nth_unstable_by(mid, f64::total_cmp);
    let upper = *upper;
    if n % 2 == 1 {
        upper
    } else {
        let lower_max = lower.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        0.5 * (lower_max + upper)
    }
}

/// Loss from precomputed residuals.
pub fn loss_from_residuals(kind: LossKind, residuals: &[f64]) -> Result<f64> {
    if residuals.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let n = residuals.len() as f64;
    Ok(match kind {
        LossKind::Mse => compensated_sum(residuals.iter().map(|r| r * r)) / n,
        LossKind::Mae => compensated_sum(residuals.iter().map(|r| r.abs())) / n,
        LossKind::Medae => {
            let mut abs: Vec<f64> = residuals.iter().map(|r| r.abs()).collect();
            median_in_place(&mut abs)
        }
    })
}

pub fn loss(kind: LossKind, tree: &ExprTree, data: &Dataset) -> Result<f64> {
    loss_from_residuals(kind, &residuals(tree, data)?)
}

/// `1 / (1 + loss)`, in `(0, 1]` for any non-negative loss.
pub fn fitness_from_loss(loss: f64) -> f64 {
    1.0 / (1.0 + loss)
}

pub fn fitness(kind: LossKind, tree: &ExprTree, data: &Dataset) -> Result<f64> {
    Ok(fitness_from_loss(loss(kind, tree, data)?))
}
