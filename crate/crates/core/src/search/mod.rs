//! The three search loops and what they share: run configuration, the
//! scored problem, the offspring pipeline and trace recording.

mod drsr;
mod mosr;
pub mod nsga;
mod sr;
mod trace;

use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::archive::{describe_residuals, Archive, BehaviorDescriptor, EliteRecord, GridSpec};
use crate::cluster::{self, ClusterAssignment};
use crate::cmaes::EsConfig;
use crate::coeff;
use crate::dataset::{self, Dataset, Nguyen, SubsetLabel, TransformSpec};
use crate::error::{Error, Result};
use crate::expr::ExprTree;
use crate::loss::{self, LossKind};
use crate::metrics;
use crate::par;
use crate::rng::{self, SearchRng};
use crate::simplify::Simplifier;
use crate::variation::{self, VariationConfig};

pub use drsr::run_drsr;
pub use mosr::run_mosr;
pub use sr::{run_sr, tournament};
pub use trace::{MetricSeries, TraceRecord};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Drsr,
    Sr,
    Mosr,
}

impl Method {
    pub const ALL: [Method; 3] = [Method::Drsr, Method::Sr, Method::Mosr];

    pub fn name(self) -> &'static str {
        match self {
            Method::Drsr => "drsr",
            Method::Sr => "sr",
            Method::Mosr => "mosr",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "drsr" => Ok(Method::Drsr),
            "sr" => Ok(Method::Sr),
            "mosr" => Ok(Method::Mosr),
            _ => Err(Error::InvalidConfig(format!("unknown method `{s}` (expected drsr, sr or mosr)"))),
        }
    }
}

fn default_n_base() -> usize {
    20
}

fn default_n_noise() -> usize {
    20
}

fn default_mixture_n() -> usize {
    40
}

/// Where the run's data comes from. Generator seeds default to one derived
/// from the run seed.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum DatasetSpec {
    Nguyen {
        benchmark: String,
        #[serde(default = "default_n_base")]
        n_base: usize,
        #[serde(default = "default_n_noise")]
        n_noise: usize,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        seed: Option<u64>,
    },
    Mixture {
        #[serde(default = "default_mixture_n")]
        n: usize,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        seed: Option<u64>,
    },
    Csv {
        path: PathBuf,
        x_columns: Vec<String>,
        y_column: String,
        #[serde(default)]
        transforms: Vec<TransformSpec>,
    },
}

impl DatasetSpec {
    pub fn build(&self, run_seed: u64) -> Result<Dataset> {
        let derived = || rng::derive_seed(run_seed, &[rng::STREAM_DATASET]);
        match self {
            DatasetSpec::Nguyen { benchmark, n_base, n_noise, seed } => {
                dataset::gen_nguyen(benchmark.parse::<Nguyen>()?, *n_base, *n_noise, seed.unwrap_or_else(derived))
            }
            DatasetSpec::Mixture { n, seed } => dataset::gen_mixture(*n, seed.unwrap_or_else(derived)),
            DatasetSpec::Csv { path, x_columns, y_column, transforms } => {
                let load = dataset::load_csv(path, x_columns, y_column)?;
                if load.skipped > 0 {
                    log::warn!("{}: skipped {} malformed row(s)", path.display(), load.skipped);
                }
                transforms.iter().try_fold(load.dataset, |d, &t| d.transform(t))
            }
        }
    }
}

fn default_budget() -> usize {
    100_000
}
fn default_population() -> usize {
    1000
}
fn default_tournament() -> usize {
    3
}
fn default_trace_interval() -> usize {
    1000
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub method: Method,
    pub loss: LossKind,
    pub dataset: DatasetSpec,
    #[serde(default)]
    pub seed: u64,
    /// Fitness evaluations allowed, initial population and CMA-ES samples included.
    #[serde(default = "default_budget")]
    pub budget: usize,
    #[serde(default = "default_population")]
    pub population: usize,
    #[serde(default)]
    pub grid: GridSpec,
    #[serde(default)]
    pub variation: VariationConfig,
    #[serde(default)]
    pub es: EsConfig,
    #[serde(default = "default_tournament")]
    pub tournament_size: usize,
    /// Offspring between trace records for the archive-based method.
    #[serde(default = "default_trace_interval")]
    pub trace_interval: usize,
}

impl RunConfig {
    pub fn new(method: Method, loss: LossKind, dataset: DatasetSpec) -> Self {
        RunConfig {
            method,
            loss,
            dataset,
            seed: 0,
            budget: default_budget(),
            population: default_population(),
            grid: GridSpec::default(),
            variation: VariationConfig::default(),
            es: EsConfig::default(),
            tournament_size: default_tournament(),
            trace_interval: default_trace_interval(),
        }
    }

    /// Every violated constraint, as `field.path: message`.
    pub fn problems(&self) -> Vec<String> {
        let mut out = Vec::new();
        let mut need = |ok: bool, path: &str, msg: &str| {
            if !ok {
                out.push(format!("{path}: {msg}"));
            }
        };
        need(self.budget > 0, "budget", "must be positive");
        need(self.population >= 2, "population", "must be at least 2");
        need(self.grid.clusters >= 1, "grid.clusters", "must be at least 1");
        need(self.grid.rep_max >= 1, "grid.rep_max", "must be at least 1");
        need(self.tournament_size >= 1, "tournament_size", "must be at least 1");
        need(self.trace_interval >= 1, "trace_interval", "must be at least 1");
        need(self.es.population >= 2, "es.population", "must be at least 2");
        need(self.es.generations >= 1, "es.generations", "must be at least 1");
        need(self.es.sigma0 > 0.0 && self.es.sigma0.is_finite(), "es.sigma0", "must be positive and finite");
        let v = &self.variation;
        need((0.0..=1.0).contains(&v.crossover_rate), "variation.crossover_rate", "must lie in [0, 1]");
        need((0.0..=1.0).contains(&v.mutation_rate), "variation.mutation_rate", "must lie in [0, 1]");
        need(v.init_depth_min >= 1, "variation.init_depth_min", "must be at least 1");
        need(v.init_depth_min <= v.init_depth_max, "variation.init_depth_max", "must be at least init_depth_min");
        need(v.limits.max_nodes >= 1, "variation.limits.max_nodes", "must be at least 1");
        match &self.dataset {
            DatasetSpec::Nguyen { benchmark, n_base, n_noise, .. } => {
                need(benchmark.parse::<Nguyen>().is_ok(), "dataset.benchmark", "expected one of 1, 7, 11, 12");
                need(n_base + n_noise >= 1, "dataset.n_base", "dataset needs at least one row");
            }
            DatasetSpec::Mixture { n, .. } => need(*n >= 2, "dataset.n", "must be at least 2"),
            DatasetSpec::Csv { x_columns, .. } => need(!x_columns.is_empty(), "dataset.x_columns", "must not be empty"),
        }
        out
    }

    pub fn validate(&self) -> Result<()> {
        let p = self.problems();
        if p.is_empty() {
            Ok(())
        } else {
            Err(Error::InvalidConfig(p.join("; ")))
        }
    }

    /// SHA-256 of the canonical JSON form with the seed zeroed, so trials of
    /// one experiment share a hash.
    pub fn config_hash(&self) -> String {
        let mut c = self.clone();
        c.seed = 0;
        let json = serde_json::to_string(&c).expect("config serialises");
        hex::encode(Sha256::digest(json.as_bytes()))
    }
}

/// A tree with its loss, fitness and descriptor.
#[derive(Clone, Debug, PartialEq)]
pub struct Scored {
    pub tree: ExprTree,
    pub loss: f64,
    pub fitness: f64,
    pub descriptor: BehaviorDescriptor,
}

impl Scored {
    pub fn objectives(&self) -> nsga::Objectives {
        (self.fitness, self.tree.node_count() as f64)
    }

    pub fn record(&self) -> EliteRecord {
        EliteRecord {
            out_cluster: self.descriptor.out_cluster,
            rep_power: self.descriptor.rep_power,
            trans_count: self.descriptor.trans_count,
            fitness: self.fitness,
            loss: self.loss,
            expr: self.tree.to_string(),
            weights: self.tree.weights(),
        }
    }
}

/// Data, loss, clustering and probe set fixed for one run.
#[derive(Clone, Debug)]
pub struct Problem {
    pub data: Dataset,
    pub loss: LossKind,
    pub assignment: ClusterAssignment,
    pub grid: GridSpec,
    pub simplifier: Simplifier,
    subsets: Vec<(SubsetLabel, Dataset)>,
}

impl Problem {
    pub fn new(data: Dataset, loss: LossKind, grid: GridSpec, seed: u64) -> Result<Self> {
        let assignment = cluster::kmeans(&data, grid.clusters, rng::derive_seed(seed, &[rng::STREAM_CLUSTER]))?;
        let simplifier = Simplifier::from_dataset(&data, &mut rng::stream(seed, &[rng::STREAM_PROBES]));
        let subsets = data.label_set().into_iter().map(|l| Ok((l, data.subset(l)?))).collect::<Result<_>>()?;
        Ok(Problem { data, loss, assignment, grid, simplifier, subsets })
    }

    pub fn subsets(&self) -> &[(SubsetLabel, Dataset)] {
        &self.subsets
    }

    pub fn score(&self, tree: &ExprTree) -> Scored {
        let mut r = Vec::with_capacity(self.data.len());
        loss::residuals_into(tree, &self.data, &mut r);
        let l = loss::loss_from_residuals(self.loss, &r).expect("dataset is non-empty");
        self.scored_from(tree.clone(), &r, l)
    }

    fn scored_from(&self, tree: ExprTree, residuals: &[f64], loss: f64) -> Scored {
        let descriptor = describe_residuals(&tree, residuals, &self.assignment, &self.grid);
        Scored { tree, loss, fitness: loss::fitness_from_loss(loss), descriptor }
    }

    pub fn offer(&self, archive: &mut Archive, s: &Scored) {
        archive.update(&s.tree, s.fitness, s.loss, s.descriptor).expect("descriptor is clamped to the grid");
    }
}

/// Evaluations a child may spend: one for itself plus whole CMA-ES
/// generations, trimmed to what is left.
pub(crate) fn child_allotment(remaining: usize, es: &EsConfig) -> usize {
    if remaining == 0 {
        return 0;
    }
    1 + es.population * es.generations.min((remaining - 1) / es.population)
}

/// Allotments for up to `count` children drawn in order from `remaining`.
pub(crate) fn allotments(mut remaining: usize, count: usize, es: &EsConfig) -> Vec<usize> {
    let mut out = Vec::with_capacity(count);
    for _ in 0..count {
        let a = child_allotment(remaining, es);
        if a == 0 {
            break;
        }
        remaining -= a;
        out.push(a);
    }
    out
}

/// A child after mutation, simplification and CMA-ES.
pub(crate) struct Developed {
    /// The simplified child followed by every CMA-ES sample, in order.
    pub offers: Vec<Scored>,
    /// Lowest-loss member of `offers`.
    pub best: Scored,
    pub evaluations: usize,
}

/// Mutates, simplifies and scores `child`, then tunes its weights with at
/// most `allotment - 1` CMA-ES evaluations.
pub(crate) fn develop(problem: &Problem, cfg: &RunConfig, child: &ExprTree, allotment: usize, keep_offers: bool, rng: &mut SearchRng) -> Developed {
    let mutated = variation::subtree_mutation(child, problem.data.dim(), &cfg.variation, rng);
    let simplified = problem.simplifier.simplify(&mutated);
    let first = problem.score(&simplified);
    let generations = (allotment - 1) / cfg.es.population;
    let mut offers = Vec::new();
    let mut best = first.clone();
    let out = coeff::run_es(&first.tree, first.loss, &problem.data, problem.loss, &cfg.es, generations, rng, |c| {
        if keep_offers || c.loss < best.loss {
            let s = problem.scored_from(c.tree.clone(), c.residuals, c.loss);
            if s.loss < best.loss {
                best = s.clone();
            }
            if keep_offers {
                offers.push(s);
            }
        }
        Ok(())
    })
    .expect("CMA-ES state stays valid for validated configs");
    offers.insert(0, first);
    Developed { offers, best, evaluations: 1 + out.evaluations }
}

/// Crossover of two parents; returns the two unmutated children.
pub(crate) fn cross<R: Rng + ?Sized>(a: &ExprTree, b: &ExprTree, cfg: &RunConfig, rng: &mut R) -> (ExprTree, ExprTree) {
    variation::subtree_crossover(a, b, &cfg.variation, rng)
}

/// Initial trees, scored for as many as the budget allows.
pub(crate) fn initial_population(problem: &Problem, cfg: &RunConfig) -> Vec<Scored> {
    let mut r = rng::stream(cfg.seed, &[rng::STREAM_INIT]);
    let trees = variation::ramped_half_and_half(cfg.population, problem.data.dim(), &cfg.variation, &mut r);
    let n = cfg.population.min(cfg.budget);
    par::map_ref(&trees[..n], |t| problem.score(t))
}

pub const METRIC_BEST_FITNESS: &str = "best_fitness";
pub const METRIC_COVERAGE: &str = "coverage";
pub const METRIC_QD_SCORE: &str = "qd_score";
pub const METRIC_HYPERVOLUME: &str = "hypervolume";

pub fn accuracy_metric_best(label: SubsetLabel) -> String {
    format!("acc_best_{label}")
}

pub fn accuracy_metric_max(label: SubsetLabel) -> String {
    format!("acc_max_{label}")
}

/// Metric values for one trace record. `solutions` is what the method
/// reports as its answer set; `best` is its single best member.
pub(crate) fn snapshot(problem: &Problem, archive: &Archive, solutions: &[(&ExprTree, f64)], best: Option<&ExprTree>) -> Vec<(String, f64)> {
    let best_fitness = solutions.iter().map(|s| s.1).fold(0.0, f64::max);
    let points: Vec<(f64, f64)> = solutions.iter().map(|s| (s.1, s.0.node_count() as f64)).collect();
    let mut out = vec![
        (METRIC_BEST_FITNESS.to_string(), best_fitness),
        (METRIC_COVERAGE.to_string(), metrics::coverage(archive)),
        (METRIC_QD_SCORE.to_string(), metrics::qd_score(archive)),
        (METRIC_HYPERVOLUME.to_string(), metrics::hypervolume(&points)),
    ];
    for (label, subset) in &problem.subsets {
        let acc = |t: &ExprTree| metrics::accuracy(t, subset).expect("subset is non-empty");
        out.push((accuracy_metric_best(*label), best.map_or(0.0, acc)));
        let all = par::map_ref(solutions, |s| acc(s.0));
        out.push((accuracy_metric_max(*label), all.into_iter().fold(0.0, f64::max)));
    }
    out
}

/// Archive of a population, filled in population order.
pub(crate) fn population_archive(grid: GridSpec, pop: &[Scored], problem: &Problem) -> Archive {
    let mut a = Archive::new(grid);
    for s in pop {
        problem.offer(&mut a, s);
    }
    a
}

/// Index of the fittest member, lowest index on ties.
pub(crate) fn best_index(pop: &[Scored]) -> usize {
    let mut best = 0;
    for (i, s) in pop.iter().enumerate() {
        if s.fitness > pop[best].fitness {
            best = i;
        }
    }
    best
}

/// What a run produced.
#[derive(Clone, Debug)]
pub struct RunTrace {
    pub method: Method,
    pub config_hash: String,
    pub seed: u64,
    pub records: Vec<TraceRecord>,
    pub evaluations: usize,
    /// The archive for DRSR; an archive built from the final population for
    /// the baselines.
    pub archive: Archive,
    /// Final population for the baselines; empty for DRSR.
    pub population: Vec<Scored>,
    pub best: Scored,
}

/// Builds the dataset and problem for `cfg`, then runs the configured method.
pub fn run(cfg: &RunConfig) -> Result<RunTrace> {
    cfg.validate()?;
    let data = cfg.dataset.build(cfg.seed)?;
    run_on(cfg, data)
}

/// Runs on an explicit dataset, ignoring `cfg.dataset`.
pub fn run_on(cfg: &RunConfig, data: Dataset) -> Result<RunTrace> {
    cfg.validate()?;
    let problem = Problem::new(data, cfg.loss, cfg.grid, cfg.seed)?;
    let trace = match cfg.method {
        Method::Drsr => run_drsr(&problem, cfg),
        Method::Sr => run_sr(&problem, cfg),
        Method::Mosr => run_mosr(&problem, cfg),
    };
    debug_assert!(trace.evaluations <= cfg.budget);
    Ok(trace)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn nguyen1() -> DatasetSpec {
        DatasetSpec::Nguyen { benchmark: "1".into(), n_base: 20, n_noise: 0, seed: None }
    }

    #[test]
    fn allotment_never_overspends() {
        let es = EsConfig::default();
        assert_eq!(child_allotment(0, &es), 0);
        assert_eq!(child_allotment(1, &es), 1);
        assert_eq!(child_allotment(10, &es), 1);
        assert_eq!(child_allotment(11, &es), 11);
        assert_eq!(child_allotment(1_000, &es), 201);
        assert_eq!(allotments(250, 2, &es), vec![201, 41]);
        assert_eq!(allotments(201, 2, &es), vec![201]);
        for rem in 0..700 {
            assert!(allotments(rem, 5, &es).iter().sum::<usize>() <= rem);
        }
    }

    #[test]
    fn config_json_round_trip_and_defaults() {
        let json = r#"{"method":"drsr","loss":"medae","dataset":{"kind":"nguyen","benchmark":"1"}}"#;
        let cfg: RunConfig = serde_json::from_str(json).unwrap();
        let spec = DatasetSpec::Nguyen { benchmark: "1".into(), n_base: 20, n_noise: 20, seed: None };
        assert_eq!(cfg, RunConfig::new(Method::Drsr, LossKind::Medae, spec));
        assert_eq!(cfg.budget, 100_000);
        assert_eq!(cfg.population, 1000);
        assert_eq!(cfg.grid.cell_count(), 1000);
        let back: RunConfig = serde_json::from_str(&serde_json::to_string(&cfg).unwrap()).unwrap();
        assert_eq!(back, cfg);
        assert!(serde_json::from_str::<RunConfig>(r#"{"method":"drsr","loss":"huber","dataset":{"kind":"mixture"}}"#).is_err());
    }

    #[test]
    fn problems_name_fields() {
        let mut cfg = RunConfig::new(Method::Sr, LossKind::Mse, nguyen1());
        assert!(cfg.problems().is_empty());
        cfg.budget = 0;
        cfg.population = 1;
        cfg.dataset = DatasetSpec::Nguyen { benchmark: "2".into(), n_base: 20, n_noise: 0, seed: None };
        let p = cfg.problems();
        assert!(p.iter().any(|s| s.starts_with("budget:")));
        assert!(p.iter().any(|s| s.starts_with("population:")));
        assert!(p.iter().any(|s| s.starts_with("dataset.benchmark:")));
    }

    #[test]
    fn hash_ignores_seed_only() {
        let a = RunConfig::new(Method::Drsr, LossKind::Mse, nguyen1());
        let b = RunConfig { seed: 99, ..a.clone() };
        let c = RunConfig { budget: 5, ..a.clone() };
        assert_eq!(a.config_hash(), b.config_hash());
        assert_ne!(a.config_hash(), c.config_hash());
        assert_eq!(a.config_hash().len(), 64);
    }
}
