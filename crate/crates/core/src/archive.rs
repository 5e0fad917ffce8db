//! Behaviour descriptors and the MAP-Elites grid.
//!
//! The grid has one axis per descriptor at unit resolution:
//! `clusters x rep_max x (trans_max + 1)` cells. A cell keeps a single elite
//! and only gives it up to a strictly fitter candidate.

use std::io::{BufRead, Write};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::cluster::ClusterAssignment;
use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::expr::ExprTree;
use crate::loss;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GridSpec {
    pub clusters: usize,
    pub rep_max: usize,
    pub trans_max: usize,
}

impl Default for GridSpec {
    fn default() -> Self {
        GridSpec { clusters: 10, rep_max: 20, trans_max: 4 }
    }
}

impl GridSpec {
    pub fn cell_count(&self) -> usize {
        self.clusters * self.rep_max * (self.trans_max + 1)
    }

    pub fn cell_index(&self, d: BehaviorDescriptor) -> Option<usize> {
        if d.out_cluster >= self.clusters || d.rep_power < 1 || d.rep_power > self.rep_max || d.trans_count > self.trans_max {
            return None;
        }
        Some((d.out_cluster * self.rep_max + (d.rep_power - 1)) * (self.trans_max + 1) + d.trans_count)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct BehaviorDescriptor {
    pub out_cluster: usize,
    pub rep_power: usize,
    pub trans_count: usize,
}

/// Cluster with the largest mean absolute residual, lowest index on ties.
/// Empty clusters never win.
pub fn outlier_cluster_index(residuals: &[f64], assignment: &ClusterAssignment) -> usize {
    let k = assignment.k();
    let mut sums = vec![0.0; k];
    for (r, &l) in residuals.iter().zip(assignment.labels()) {
        sums[l] += r.abs();
    }
    let mut best = (0, f64::NEG_INFINITY);
    for (j, (&s, &size)) in sums.iter().zip(assignment.sizes()).enumerate() {
        if size == 0 {
            continue;
        }
        let mean = s / size as f64;
        if mean > best.1 {
            best = (j, mean);
        }
    }
    best.0
}

/// Descriptor from precomputed residuals, with the structural axes clamped to `grid`.
pub fn describe_residuals(tree: &ExprTree, residuals: &[f64], assignment: &ClusterAssignment, grid: &GridSpec) -> BehaviorDescriptor {
    BehaviorDescriptor {
        out_cluster: outlier_cluster_index(residuals, assignment),
        rep_power: tree.node_count().clamp(1, grid.rep_max),
        trans_count: tree.transcendental_count().min(grid.trans_max),
    }
}

pub fn describe(tree: &ExprTree, data: &Dataset, assignment: &ClusterAssignment, grid: &GridSpec) -> Result<BehaviorDescriptor> {
    let r = loss::residuals(tree, data)?;
    Ok(describe_residuals(tree, &r, assignment, grid))
}

#[derive(Clone, Debug, PartialEq)]
pub struct Elite {
    pub tree: ExprTree,
    pub fitness: f64,
    pub loss: f64,
    pub descriptor: BehaviorDescriptor,
}

/// JSON Lines record for one occupied cell.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EliteRecord {
    pub out_cluster: usize,
    pub rep_power: usize,
    pub trans_count: usize,
    pub fitness: f64,
    pub loss: f64,
    pub expr: String,
    pub weights: Vec<f64>,
}

impl From<&Elite> for EliteRecord {
    fn from(e: &Elite) -> Self {
        EliteRecord {
            out_cluster: e.descriptor.out_cluster,
            rep_power: e.descriptor.rep_power,
            trans_count: e.descriptor.trans_count,
            fitness: e.fitness,
            loss: e.loss,
            expr: e.tree.to_string(),
            weights: e.tree.weights(),
        }
    }
}

impl EliteRecord {
    pub fn descriptor(&self) -> BehaviorDescriptor {
        BehaviorDescriptor { out_cluster: self.out_cluster, rep_power: self.rep_power, trans_count: self.trans_count }
    }

    pub fn tree(&self) -> Result<ExprTree> {
        self.expr.parse()
    }
}

#[derive(Clone, Debug)]
pub struct Archive {
    spec: GridSpec,
    cells: Vec<Option<Elite>>,
    /// Occupied cell indices in first-occupation order.
    occupied: Vec<usize>,
    best: Option<usize>,
}

impl Archive {
    pub fn new(spec: GridSpec) -> Self {
        Archive { spec, cells: vec![None; spec.cell_count()], occupied: Vec::new(), best: None }
    }

    pub fn spec(&self) -> &GridSpec {
        &self.spec
    }

    pub fn occupied_count(&self) -> usize {
        self.occupied.len()
    }

    pub fn is_empty(&self) -> bool {
        self.occupied.is_empty()
    }

    pub fn get(&self, d: BehaviorDescriptor) -> Option<&Elite> {
        self.spec.cell_index(d).and_then(|i| self.cells[i].as_ref())
    }

    /// Elites in first-occupation order.
    pub fn elites(&self) -> impl Iterator<Item = &Elite> + '_ {
        self.occupied.iter().map(move |&i| self.cells[i].as_ref().expect("occupied cell"))
    }

    /// Elites ordered by cell index.
    pub fn elites_by_cell(&self) -> impl Iterator<Item = &Elite> + '_ {
        self.cells.iter().flatten()
    }

    pub fn best(&self) -> Option<&Elite> {
        self.best.and_then(|i| self.cells[i].as_ref())
    }

    /// Inserts into an empty cell or replaces a strictly less fit elite.
    /// Returns whether the archive changed.
    pub fn update(&mut self, tree: &ExprTree, fitness: f64, loss: f64, descriptor: BehaviorDescriptor) -> Result<bool> {
        let idx = self.spec.cell_index(descriptor).ok_or(Error::OutOfGrid((
            descriptor.out_cluster,
            descriptor.rep_power,
            descriptor.trans_count,
        )))?;
        let slot = &mut self.cells[idx];
        match slot {
            Some(incumbent) if incumbent.fitness >= fitness => return Ok(false),
            Some(_) => {}
            None => self.occupied.push(idx),
        }
        // NaN fitness never enters: the comparison above rejects nothing for
        // NaN, so guard explicitly.
        if fitness.is_nan() {
            if slot.is_none() {
                self.occupied.pop();
            }
            return Ok(false);
        }
        *slot = Some(Elite { tree: tree.clone(), fitness, loss, descriptor });
        let better = match self.best {
            Some(b) => self.cells[b].as_ref().is_none_or(|e| fitness > e.fitness),
            None => true,
        };
        if better {
            self.best = Some(idx);
        }
        Ok(true)
    }

    /// Two independent uniform draws over occupied cells.
    pub fn select_two<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<(&Elite, &Elite)> {
        if self.occupied.is_empty() {
            return Err(Error::EmptyArchive);
        }
        let n = self.occupied.len();
        let a = self.occupied[rng.random_range(0..n)];
        let b = self.occupied[rng.random_range(0..n)];
        Ok((self.cells[a].as_ref().expect("occupied"), self.cells[b].as_ref().expect("occupied")))
    }

    pub fn coverage(&self) -> f64 {
        self.occupied.len() as f64 / self.spec.cell_count() as f64
    }

    pub fn qd_score(&self) -> f64 {
        loss::compensated_sum(self.elites_by_cell().map(|e| e.fitness)) / self.spec.cell_count() as f64
    }

    pub fn records(&self) -> Vec<EliteRecord> {
        self.elites_by_cell().map(EliteRecord::from).collect()
    }

    /// Writes one JSON object per elite, ordered by cell, after an optional
    /// `{"meta": ...}` line.
    pub fn write_jsonl<W: Write>(&self, mut w: W, meta: Option<&serde_json::Value>) -> Result<()> {
        if let Some(m) = meta {
            serde_json::to_writer(&mut w, &serde_json::json!({ "meta": m }))?;
            w.write_all(b"\n")?;
        }
        for rec in self.records() {
            serde_json::to_writer(&mut w, &rec)?;
            w.write_all(b"\n")?;
        }
        Ok(())
    }
}

/// Reads records written by [`Archive::write_jsonl`], skipping the metadata line.
pub fn read_jsonl<R: BufRead>(r: R) -> Result<Vec<EliteRecord>> {
    let mut out = Vec::new();
    for (i, line) in r.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let value: serde_json::Value =
            serde_json::from_str(&line).map_err(|e| Error::Record { line: i + 1, msg: e.to_string() })?;
        if value.get("meta").is_some() {
            continue;
        }
        out.push(serde_json::from_value(value).map_err(|e| Error::Record { line: i + 1, msg: e.to_string() })?);
    }
    Ok(out)
}

/// Inclusive descriptor box for expert-guided filtering.
#[derive(Clone, Debug, PartialEq)]
pub struct DescriptorQuery {
    pub rep: (usize, usize),
    pub trans: (usize, usize),
    pub clusters: Option<Vec<usize>>,
    pub top_k: usize,
}

impl DescriptorQuery {
    pub fn admits(&self, d: BehaviorDescriptor) -> bool {
        (self.rep.0..=self.rep.1).contains(&d.rep_power)
            && (self.trans.0..=self.trans.1).contains(&d.trans_count)
            && self.clusters.as_ref().is_none_or(|c| c.contains(&d.out_cluster))
    }

    /// Matching records, fittest first; ties go to fewer nodes, then to the
    /// lexicographically smaller expression text.
    pub fn run(&self, records: &[EliteRecord]) -> Vec<EliteRecord> {
        let mut hits: Vec<EliteRecord> = records.iter().filter(|r| self.admits(r.descriptor())).cloned().collect();
        hits.sort_by(|a, b| {
            b.fitness
                .total_cmp(&a.fitness)
                .then(a.rep_power.cmp(&b.rep_power))
                .then_with(|| a.expr.cmp(&b.expr))
        });
        hits.truncate(self.top_k);
        hits
    }
}
