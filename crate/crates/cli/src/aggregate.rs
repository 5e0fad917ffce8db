//! `aggregate`: align per-trial metric traces and summarise them with
//! percentile-bootstrap confidence intervals.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::io::Write;
use std::path::Path;

use rand::Rng;

use crate::error::{CliError, CliResult};

pub const RESAMPLES: usize = 10_000;
pub const CONFIDENCE: f64 = 0.95;
const BOOTSTRAP_SEED: u64 = 0x5eed_b007;

/// One metric trace: `(evaluations, value)` rows in file order.
pub type Trace = Vec<(usize, f64)>;

/// Everything read from one trial directory.
#[derive(Clone, Debug, PartialEq)]
pub struct Trial {
    pub config_hash: String,
    pub seed: u64,
    pub metrics: BTreeMap<String, Trace>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SummaryRow {
    pub metric: String,
    pub evaluations: usize,
    pub mean: f64,
    pub ci_low: f64,
    pub ci_high: f64,
}

fn parse_meta(line: &str) -> Option<(String, u64)> {
    let mut hash = None;
    let mut seed = None;
    for part in line.strip_prefix('#')?.split_whitespace() {
        match part.split_once('=')? {
            ("config_hash", v) => hash = Some(v.to_string()),
            ("seed", v) => seed = v.parse().ok(),
            _ => {}
        }
    }
    Some((hash?, seed?))
}

/// Parses one metric CSV as written by a run.
pub fn parse_trace(text: &str, name: &str) -> CliResult<(String, u64, Trace)> {
    let bad = |msg: &str| CliError::invalid(format!("{name}: {msg}"));
    let mut lines = text.lines();
    let (hash, seed) = lines.next().and_then(parse_meta).ok_or_else(|| bad("missing `# config_hash=… seed=…` header"))?;
    if lines.next() != Some("generation,evaluations,value") {
        return Err(bad("expected column header `generation,evaluations,value`"));
    }
    let mut rows = Vec::new();
    for (i, line) in lines.enumerate().filter(|(_, l)| !l.trim().is_empty()) {
        let fields: Vec<&str> = line.split(',').collect();
        let row = match fields.as_slice() {
            [_, e, v] => e.parse().ok().zip(v.parse().ok()),
            _ => None,
        };
        rows.push(row.ok_or_else(|| bad(&format!("malformed row {}", i + 3)))?);
    }
    Ok((hash, seed, rows))
}

pub fn read_trial(dir: &Path) -> CliResult<Option<Trial>> {
    let mut meta: Option<(String, u64)> = None;
    let mut metrics = BTreeMap::new();
    let mut paths: Vec<_> = fs::read_dir(dir)?.filter_map(|e| e.ok().map(|e| e.path())).collect();
    paths.sort();
    for path in paths.into_iter().filter(|p| p.extension().is_some_and(|e| e == "csv")) {
        let name = path.file_stem().and_then(|s| s.to_str()).unwrap_or_default().to_string();
        let (hash, seed, rows) = parse_trace(&fs::read_to_string(&path)?, &path.display().to_string())?;
        match &meta {
            Some(m) if *m != (hash.clone(), seed) => {
                return Err(CliError::invalid(format!("{}: header disagrees with other files of the trial", path.display())))
            }
            _ => meta = Some((hash, seed)),
        }
        metrics.insert(name, rows);
    }
    Ok(meta.map(|(config_hash, seed)| Trial { config_hash, seed, metrics }))
}

/// Trials in the immediate subdirectories of `dir` (and `dir` itself).
pub fn read_trials(dir: &Path) -> CliResult<Vec<Trial>> {
    let mut dirs: Vec<_> = fs::read_dir(dir)
        .map_err(|e| CliError::invalid(format!("--in {}: {e}", dir.display())))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_dir())
        .collect();
    dirs.sort();
    dirs.insert(0, dir.to_path_buf());
    let mut trials = Vec::new();
    for d in dirs {
        if let Some(t) = read_trial(&d)? {
            trials.push(t);
        }
    }
    Ok(trials)
}

/// Last value recorded at or before `evaluations`.
fn carried_forward(trace: &Trace, evaluations: usize) -> Option<f64> {
    trace.iter().take_while(|r| r.0 <= evaluations).last().map(|r| r.1)
}

/// Mean and percentile-bootstrap interval of `values`. Values are sorted
/// first so the result does not depend on their order.
pub fn bootstrap<R: Rng + ?Sized>(values: &[f64], rng: &mut R) -> (f64, f64, f64) {
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    let mean = sorted.iter().sum::<f64>() / n as f64;
    let mut means: Vec<f64> = (0..RESAMPLES)
        .map(|_| (0..n).map(|_| sorted[rng.random_range(0..n)]).sum::<f64>() / n as f64)
        .collect();
    means.sort_by(f64::total_cmp);
    let tail = (1.0 - CONFIDENCE) / 2.0;
    let lo = (tail * RESAMPLES as f64).floor() as usize;
    let hi = ((1.0 - tail) * RESAMPLES as f64).ceil() as usize - 1;
    (mean, means[lo], means[hi])
}

/// Aligns every metric on the union of recorded evaluation counts, carrying
/// each trial's last observation forward, and summarises each grid point.
/// Grid points before some trial's first record are skipped.
pub fn summarise(trials: &[Trial]) -> CliResult<Vec<SummaryRow>> {
    if trials.len() < 2 {
        return Err(CliError::invalid(format!("--in: need at least 2 trials, found {}", trials.len())));
    }
    let names: BTreeSet<&String> = trials[0].metrics.keys().collect();
    if let Some(t) = trials.iter().find(|t| t.metrics.keys().collect::<BTreeSet<_>>() != names) {
        return Err(CliError::invalid(format!("trial with seed {} has a different set of metrics", t.seed)));
    }
    if let Some(t) = trials.iter().find(|t| t.config_hash != trials[0].config_hash) {
        return Err(CliError::invalid(format!("trial with seed {} comes from a different config", t.seed)));
    }

    let mut rows = Vec::new();
    for (m, name) in names.into_iter().enumerate() {
        let grid: BTreeSet<usize> = trials.iter().flat_map(|t| t.metrics[name].iter().map(|r| r.0)).collect();
        for (g, evaluations) in grid.into_iter().enumerate() {
            let values: Option<Vec<f64>> = trials.iter().map(|t| carried_forward(&t.metrics[name], evaluations)).collect();
            let Some(values) = values else { continue };
            let mut rng = drsr::rng::stream(BOOTSTRAP_SEED, &[m as u64, g as u64]);
            let (mean, ci_low, ci_high) = bootstrap(&values, &mut rng);
            rows.push(SummaryRow { metric: name.clone(), evaluations, mean, ci_low, ci_high });
        }
    }
    Ok(rows)
}

pub fn write_summary<W: Write>(trials: &[Trial], rows: &[SummaryRow], mut w: W) -> std::io::Result<()> {
    let mut seeds: Vec<u64> = trials.iter().map(|t| t.seed).collect();
    seeds.sort_unstable();
    let seeds: Vec<String> = seeds.iter().map(u64::to_string).collect();
    writeln!(w, "# config_hash={} seeds={}", trials[0].config_hash, seeds.join(","))?;
    writeln!(w, "metric,evaluations,trials,mean,ci_low,ci_high")?;
    for r in rows {
        writeln!(w, "{},{},{},{:?},{:?},{:?}", r.metric, r.evaluations, trials.len(), r.mean, r.ci_low, r.ci_high)?;
    }
    Ok(())
}
