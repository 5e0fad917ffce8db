//! Diversified-residual symbolic regression.
//!
//! Genetic-programming search over weighted expression trees that keeps a
//! MAP-Elites archive of competitive expressions, indexed by which cluster of
//! the data an expression fits worst, how many nodes it has, and how many
//! transcendental functions it uses. Single-objective (`SR`) and NSGA-II
//! (`MOSR`) baselines share the same representation, variation operators,
//! simplification, and CMA-ES coefficient tuning.
//!
//! The main entry point is [`search::run`], driven by a [`search::RunConfig`].

pub mod archive;
pub mod cluster;
pub mod cmaes;
pub mod coeff;
pub mod dataset;
pub mod error;
pub mod expr;
pub mod loss;
pub mod metrics;
pub mod par;
pub mod rng;
pub mod search;
pub mod simplify;
pub mod variation;

pub use archive::{Archive, BehaviorDescriptor, Elite, GridSpec};
pub use cluster::ClusterAssignment;
pub use dataset::{Dataset, SubsetLabel};
pub use error::{Error, Result};
pub use expr::{EvalOutcome, ExprTree, Node, NodeKind};
pub use loss::LossKind;
pub use search::{Method, RunConfig, RunTrace};
