//! `run`: load an experiment config and execute its trials.

use std::fs;
use std::path::{Path, PathBuf};

use drsr::search::{self, DatasetSpec};
use drsr::RunConfig;
use serde_json::Value;

use crate::error::{CliError, CliResult};

pub const CONFIG_COPY: &str = "config.json";

/// A run config plus the experiment-level fields.
#[derive(Clone, Debug, PartialEq)]
pub struct Experiment {
    pub run: RunConfig,
    pub trials: usize,
    pub output_dir: Option<PathBuf>,
}

impl Experiment {
    /// Parses the JSON text. Relative CSV dataset paths are resolved against
    /// `base_dir`.
    pub fn parse(text: &str, base_dir: &Path) -> CliResult<Self> {
        let mut doc: Value = serde_json::from_str(text).map_err(|e| CliError::invalid(format!("config: {e}")))?;
        let obj = doc.as_object_mut().ok_or_else(|| CliError::invalid("config: expected a JSON object"))?;
        let mut problems = Vec::new();

        let trials = match obj.remove("trials") {
            None => 1,
            Some(v) => v.as_u64().map(|n| n as usize).unwrap_or_else(|| {
                problems.push("trials: expected a non-negative integer".to_string());
                0
            }),
        };
        let output_dir = match obj.remove("output_dir") {
            None => None,
            Some(Value::String(s)) => Some(PathBuf::from(s)),
            Some(_) => {
                problems.push("output_dir: expected a string".to_string());
                None
            }
        };

        let mut run: RunConfig = match serde_path_to_error::deserialize(doc) {
            Ok(run) => run,
            Err(e) => {
                let path = e.path().to_string();
                problems.push(format!("{path}: {}", e.into_inner()));
                return Err(CliError::Validation(problems));
            }
        };
        if let DatasetSpec::Csv { path, .. } = &mut run.dataset {
            if path.is_relative() {
                *path = base_dir.join(&*path);
            }
        }
        if trials == 0 && problems.is_empty() {
            problems.push("trials: must be at least 1".to_string());
        }
        problems.extend(run.problems());
        if problems.is_empty() {
            Ok(Experiment { run, trials, output_dir })
        } else {
            Err(CliError::Validation(problems))
        }
    }

    pub fn load(path: &Path) -> CliResult<Self> {
        let text = fs::read_to_string(path).map_err(|e| CliError::invalid(format!("config: {}: {e}", path.display())))?;
        Experiment::parse(&text, path.parent().unwrap_or(Path::new(".")))
    }

    /// Seed of trial `i`.
    pub fn trial_seed(&self, i: usize) -> u64 {
        self.run.seed.wrapping_add(i as u64)
    }
}

pub fn trial_dir(out: &Path, i: usize) -> PathBuf {
    out.join(format!("trial_{i:03}"))
}

/// Runs every trial, `jobs` at a time, writing each into its own directory.
pub fn run_trials(exp: &Experiment, out: &Path, jobs: usize) -> CliResult<()> {
    fs::create_dir_all(out)?;
    let mut copy = serde_json::to_value(&exp.run).map_err(|e| CliError::Runtime(e.to_string()))?;
    copy["trials"] = exp.trials.into();
    fs::write(out.join(CONFIG_COPY), serde_json::to_string_pretty(&copy).expect("config serialises") + "\n")?;

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| CliError::Runtime(e.to_string()))?;
    let results: Vec<CliResult<()>> = pool.install(|| {
        use rayon::prelude::*;
        (0..exp.trials)
            .into_par_iter()
            .map(|i| {
                let cfg = RunConfig { seed: exp.trial_seed(i), ..exp.run.clone() };
                log::info!("trial {i}: {} / {} seed {}", cfg.method, cfg.loss, cfg.seed);
                let trace = search::run(&cfg)?;
                trace.write_dir(&trial_dir(out, i))?;
                log::info!("trial {i}: done after {} evaluations, best fitness {:.6}", trace.evaluations, trace.best.fitness);
                Ok(())
            })
            .collect()
    });
    results.into_iter().collect()
}
