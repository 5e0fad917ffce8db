//! Observations, synthetic generators, CSV ingestion and column transforms.

use std::fmt;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::expr::ExprTree;
use crate::rng;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SubsetLabel {
    Base,
    Noise,
    Linear,
    Logistic,
}

impl SubsetLabel {
    pub fn name(self) -> &'static str {
        match self {
            SubsetLabel::Base => "base",
            SubsetLabel::Noise => "noise",
            SubsetLabel::Linear => "linear",
            SubsetLabel::Logistic => "logistic",
        }
    }
}

impl fmt::Display for SubsetLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SubsetLabel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "base" => Ok(SubsetLabel::Base),
            "noise" => Ok(SubsetLabel::Noise),
            "linear" => Ok(SubsetLabel::Linear),
            "logistic" => Ok(SubsetLabel::Logistic),
            _ => Err(Error::InvalidConfig(format!("unknown subset label `{s}`"))),
        }
    }
}

/// One applied column transform. Column `dim` (the last) is the target.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum TransformStep {
    Delog10,
    Log10,
    /// Per-column `(min, max)` used for the affine map onto `[0, 1]`.
    Minmax01 { bounds: Vec<(f64, f64)> },
}

impl TransformStep {
    pub fn forward(&self, column: usize, v: f64) -> f64 {
        match self {
            TransformStep::Delog10 => 10f64.powf(v),
            TransformStep::Log10 => v.log10(),
            TransformStep::Minmax01 { bounds } => {
                let (lo, hi) = bounds[column];
                if hi > lo {
                    (v - lo) / (hi - lo)
                } else {
                    0.5
                }
            }
        }
    }

    pub fn inverse(&self, column: usize, v: f64) -> f64 {
        match self {
            TransformStep::Delog10 => v.log10(),
            TransformStep::Log10 => 10f64.powf(v),
            TransformStep::Minmax01 { bounds } => {
                let (lo, hi) = bounds[column];
                lo + v * (hi - lo)
            }
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TransformSpec {
    Delog10,
    Log10,
    Minmax01,
}

impl FromStr for TransformSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "delog10" => Ok(TransformSpec::Delog10),
            "log10" => Ok(TransformSpec::Log10),
            "minmax01" => Ok(TransformSpec::Minmax01),
            _ => Err(Error::InvalidConfig(format!("unknown transform `{s}`"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    inputs: Vec<f64>,
    targets: Vec<f64>,
    dim: usize,
    labels: Option<Vec<SubsetLabel>>,
    pub provenance: String,
    transforms: Vec<TransformStep>,
}

impl Dataset {
    pub fn new(rows: Vec<Vec<f64>>, targets: Vec<f64>) -> Result<Self> {
        if rows.is_empty() {
            return Err(Error::EmptyDataset);
        }
        if rows.len() != targets.len() {
            return Err(Error::LengthMismatch { expected: rows.len(), actual: targets.len() });
        }
        let dim = rows[0].len();
        let mut inputs = Vec::with_capacity(rows.len() * dim);
        for r in &rows {
            if r.len() != dim {
                return Err(Error::LengthMismatch { expected: dim, actual: r.len() });
            }
            inputs.extend_from_slice(r);
        }
        Ok(Dataset { inputs, targets, dim, labels: None, provenance: String::new(), transforms: Vec::new() })
    }

    pub fn with_labels(mut self, labels: Vec<SubsetLabel>) -> Result<Self> {
        if labels.len() != self.len() {
            return Err(Error::LengthMismatch { expected: self.len(), actual: labels.len() });
        }
        self.labels = Some(labels);
        Ok(self)
    }

    pub fn with_provenance(mut self, provenance: impl Into<String>) -> Self {
        self.provenance = provenance.into();
        self
    }

    #[allow(clippy::len_without_is_empty)]
    pub fn len(&self) -> usize {
        self.targets.len()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.inputs[i * self.dim..(i + 1) * self.dim]
    }

    pub fn target(&self, i: usize) -> f64 {
        self.targets[i]
    }

    pub fn targets(&self) -> &[f64] {
        &self.targets
    }

    pub fn labels(&self) -> Option<&[SubsetLabel]> {
        self.labels.as_deref()
    }

    pub fn transforms(&self) -> &[TransformStep] {
        &self.transforms
    }

    /// Distinct labels in first-appearance order.
    pub fn label_set(&self) -> Vec<SubsetLabel> {
        let mut out = Vec::new();
        for &l in self.labels.iter().flatten() {
            if !out.contains(&l) {
                out.push(l);
            }
        }
        out
    }

    /// Rows carrying `label`, or an error when there are none.
    pub fn subset(&self, label: SubsetLabel) -> Result<Dataset> {
        let labels = self.labels.as_ref().ok_or_else(|| Error::EmptySubset(label.to_string()))?;
        let idx: Vec<usize> = (0..self.len()).filter(|&i| labels[i] == label).collect();
        if idx.is_empty() {
            return Err(Error::EmptySubset(label.to_string()));
        }
        let mut inputs = Vec::with_capacity(idx.len() * self.dim);
        for &i in &idx {
            inputs.extend_from_slice(self.row(i));
        }
        Ok(Dataset {
            inputs,
            targets: idx.iter().map(|&i| self.targets[i]).collect(),
            dim: self.dim,
            labels: Some(vec![label; idx.len()]),
            provenance: format!("{} [{label}]", self.provenance),
            transforms: self.transforms.clone(),
        })
    }

    /// Per-dimension `(min, max)` over inputs followed by the target.
    pub fn column_bounds(&self) -> Vec<(f64, f64)> {
        (0..=self.dim)
            .map(|c| {
                (0..self.len()).map(|i| self.value(i, c)).fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| {
                    (lo.min(v), hi.max(v))
                })
            })
            .collect()
    }

    /// Column `c` of row `i`, where `c == dim` is the target.
    pub fn value(&self, i: usize, c: usize) -> f64 {
        if c == self.dim {
            self.targets[i]
        } else {
            self.inputs[i * self.dim + c]
        }
    }

    fn map_columns(&self, step: TransformStep, f: impl Fn(usize, f64) -> f64) -> Dataset {
        let mut out = self.clone();
        for i in 0..self.len() {
            for c in 0..self.dim {
                out.inputs[i * self.dim + c] = f(c, self.inputs[i * self.dim + c]);
            }
            out.targets[i] = f(self.dim, self.targets[i]);
        }
        out.transforms.push(step);
        out
    }

    /// Applies `spec` to every input column and the target, recording the step.
    pub fn transform(&self, spec: TransformSpec) -> Result<Dataset> {
        let step = match spec {
            TransformSpec::Delog10 => TransformStep::Delog10,
            TransformSpec::Log10 => {
                for i in 0..self.len() {
                    for c in 0..=self.dim {
                        let v = self.value(i, c);
                        if v <= 0.0 || v.is_nan() {
                            return Err(Error::NonPositiveLog { column: c, row: i, value: v });
                        }
                    }
                }
                TransformStep::Log10
            }
            TransformSpec::Minmax01 => TransformStep::Minmax01 { bounds: self.column_bounds() },
        };
        let applied = step.clone();
        Ok(self.map_columns(step, |c, v| applied.forward(c, v)))
    }

    /// Undoes every recorded transform, newest first.
    pub fn inverse_transform(&self) -> Dataset {
        let mut out = self.clone();
        while let Some(step) = out.transforms.pop() {
            let mut next = out.map_columns(step.clone(), |c, v| step.inverse(c, v));
            next.transforms.pop();
            out = next;
        }
        out
    }

    /// Snapshot as CSV with `x0..,y,label` columns, preceded by `meta` as a
    /// `#` comment line when given.
    pub fn write_csv<W: Write>(&self, mut w: W, meta: Option<&str>) -> Result<()> {
        if let Some(m) = meta {
            writeln!(w, "# {m}")?;
        }
        let mut wtr = csv::Writer::from_writer(w);
        let mut header: Vec<String> = (0..self.dim).map(|c| format!("x{c}")).collect();
        header.push("y".into());
        header.push("label".into());
        wtr.write_record(&header)?;
        for i in 0..self.len() {
            let mut rec: Vec<String> = self.row(i).iter().map(|v| format!("{v:?}")).collect();
            rec.push(format!("{:?}", self.targets[i]));
            rec.push(self.labels.as_ref().map(|l| l[i].to_string()).unwrap_or_default());
            wtr.write_record(&rec)?;
        }
        wtr.flush()?;
        Ok(())
    }
}

/// Nguyen benchmark functions used for outlier experiments.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Nguyen {
    N1,
    N7,
    N11,
    N12,
}

impl FromStr for Nguyen {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let key = s.trim().to_ascii_lowercase();
        let key = key.strip_prefix("nguyen").unwrap_or(&key).trim_start_matches(['-', '_']);
        match key {
            "1" => Ok(Nguyen::N1),
            "7" => Ok(Nguyen::N7),
            "11" => Ok(Nguyen::N11),
            "12" => Ok(Nguyen::N12),
            _ => Err(Error::UnknownBenchmark(s.to_string())),
        }
    }
}

impl Nguyen {
    pub fn dim(self) -> usize {
        match self {
            Nguyen::N1 | Nguyen::N7 => 1,
            Nguyen::N11 | Nguyen::N12 => 2,
        }
    }

    pub fn domain(self) -> (f64, f64) {
        match self {
            Nguyen::N1 => (-1.0, 1.0),
            Nguyen::N7 => (0.0, 2.0),
            Nguyen::N11 | Nguyen::N12 => (0.0, 1.0),
        }
    }

    /// Ground truth, written with the same operation order as
    /// [`Nguyen::ground_truth`] so base rows have zero residual exactly.
    pub fn eval(self, x: &[f64]) -> f64 {
        match self {
            Nguyen::N1 => {
                let x = x[0];
                x * x * x + x * x + x
            }
            Nguyen::N7 => {
                let x = x[0];
                (x + 1.0).ln() + (x * x + 1.0).ln()
            }
            Nguyen::N11 => (x[1] * x[0].ln()).exp(),
            Nguyen::N12 => {
                let (a, b) = (x[0], x[1]);
                (a * a) * (a * a) - (a * a) * a + 0.5 * (b * b) - b
            }
        }
    }

    pub fn ground_truth(self) -> ExprTree {
        let x = || ExprTree::var(0);
        let y = || ExprTree::var(1);
        match self {
            Nguyen::N1 => ExprTree::add(
                ExprTree::add(ExprTree::mul(ExprTree::mul(x(), x()), x()), ExprTree::mul(x(), x())),
                x(),
            ),
            Nguyen::N7 => ExprTree::add(
                ExprTree::log(ExprTree::add(x(), ExprTree::one())),
                ExprTree::log(ExprTree::add(ExprTree::mul(x(), x()), ExprTree::one())),
            ),
            // x1^x2 = exp(x2 * log x1)
            Nguyen::N11 => ExprTree::exp(ExprTree::mul(y(), ExprTree::log(x()))),
            Nguyen::N12 => ExprTree::sub(
                ExprTree::add(
                    ExprTree::sub(
                        ExprTree::mul(ExprTree::mul(x(), x()), ExprTree::mul(x(), x())),
                        ExprTree::mul(ExprTree::mul(x(), x()), x()),
                    ),
                    ExprTree::mul(y(), y()).with_root_weight(0.5),
                ),
                y(),
            ),
        }
    }
}

/// Base rows follow the benchmark exactly; noise rows add N(0, 1) to the target.
pub fn gen_nguyen(bench: Nguyen, n_base: usize, n_noise: usize, seed: u64) -> Result<Dataset> {
    let mut rng = rng::stream(seed, &[rng::STREAM_DATASET]);
    let (lo, hi) = bench.domain();
    let mut rows = Vec::with_capacity(n_base + n_noise);
    let mut targets = Vec::with_capacity(n_base + n_noise);
    let mut labels = Vec::with_capacity(n_base + n_noise);
    for k in 0..n_base + n_noise {
        let x: Vec<f64> = (0..bench.dim()).map(|_| rng.random_range(lo..=hi)).collect();
        let mut y = bench.eval(&x);
        if k >= n_base {
            let eps: f64 = rng.sample(StandardNormal);
            y += eps;
            labels.push(SubsetLabel::Noise);
        } else {
            labels.push(SubsetLabel::Base);
        }
        rows.push(x);
        targets.push(y);
    }
    Ok(Dataset::new(rows, targets)?
        .with_labels(labels)?
        .with_provenance(format!("nguyen-{bench:?} n_base={n_base} n_noise={n_noise} seed={seed}")))
}

pub const MIXTURE_A: f64 = 1.0;
pub const MIXTURE_B: f64 = 0.1;
pub const MIXTURE_C: f64 = -4.0;
pub const MIXTURE_D: f64 = 1.6;

pub fn mixture_linear(x: f64) -> f64 {
    MIXTURE_A - MIXTURE_B * x
}

pub fn mixture_logistic(x: f64) -> f64 {
    1.0 / (1.0 + (MIXTURE_C + MIXTURE_D * x).exp())
}

/// Linear/logistic mixture on `x ~ U[0, 10]`, each row picking a component
/// with probability 0.5.
pub fn gen_mixture(n: usize, seed: u64) -> Result<Dataset> {
    if n < 2 {
        return Err(Error::InvalidConfig(format!("mixture needs n >= 2, got {n}")));
    }
    let mut rng = rng::stream(seed, &[rng::STREAM_DATASET]);
    let mut rows = Vec::with_capacity(n);
    let mut targets = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    for _ in 0..n {
        let x: f64 = rng.random_range(0.0..=10.0);
        let linear = rng.random_bool(0.5);
        rows.push(vec![x]);
        if linear {
            targets.push(mixture_linear(x));
            labels.push(SubsetLabel::Linear);
        } else {
            targets.push(mixture_logistic(x));
            labels.push(SubsetLabel::Logistic);
        }
    }
    Ok(Dataset::new(rows, targets)?.with_labels(labels)?.with_provenance(format!("mixture n={n} seed={seed}")))
}

/// `a - b x` as a three-node tree.
pub fn mixture_linear_tree() -> ExprTree {
    ExprTree::sub(ExprTree::constant(MIXTURE_A), ExprTree::var(0).with_root_weight(MIXTURE_B))
}

/// `1 / (1 + e^c exp(d x))` in the six-node logistic shape.
pub fn mixture_logistic_tree() -> ExprTree {
    ExprTree::div(
        ExprTree::one(),
        ExprTree::add(
            ExprTree::one(),
            ExprTree::exp(ExprTree::var(0).with_root_weight(MIXTURE_D)).with_root_weight(MIXTURE_C.exp()),
        ),
    )
}

#[derive(Debug)]
pub struct CsvLoad {
    pub dataset: Dataset,
    /// Rows dropped because a selected field was missing or non-numeric.
    pub skipped: usize,
}

/// Reads a comma-separated file with a header row. Lines starting with `#`
/// are ignored.
pub fn load_csv(path: &Path, x_cols: &[String], y_col: &str) -> Result<CsvLoad> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .comment(Some(b'#'))
        .flexible(true)
        .from_path(path)?;
    let headers = rdr.headers()?.clone();
    let find = |name: &str| {
        headers
            .iter()
            .position(|h| h.trim() == name)
            .ok_or_else(|| Error::MissingColumn(name.to_string()))
    };
    let x_idx: Vec<usize> = x_cols.iter().map(|c| find(c)).collect::<Result<_>>()?;
    let y_idx = find(y_col)?;
    let mut rows = Vec::new();
    let mut targets = Vec::new();
    let mut skipped = 0;
    for rec in rdr.records() {
        let rec = rec?;
        let field = |i: usize| rec.get(i).and_then(|s| s.trim().parse::<f64>().ok()).filter(|v| v.is_finite());
        let x: Option<Vec<f64>> = x_idx.iter().map(|&i| field(i)).collect();
        match (x, field(y_idx)) {
            (Some(x), Some(y)) => {
                rows.push(x);
                targets.push(y);
            }
            _ => skipped += 1,
        }
    }
    if rows.is_empty() {
        return Err(Error::NoValidRows { path: path.to_path_buf() });
    }
    if skipped > 0 {
        log::warn!("{}: skipped {skipped} row(s) with missing or non-numeric fields", path.display());
    }
    let dataset = Dataset::new(rows, targets)?.with_provenance(path.display().to_string());
    Ok(CsvLoad { dataset, skipped })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nguyen_values() {
        assert_eq!(Nguyen::N1.eval(&[1.0]), 3.0);
        assert_eq!(Nguyen::N7.eval(&[0.0]), 0.0);
        assert!((Nguyen::N11.eval(&[0.5, 1.0]) - 0.5).abs() < 1e-15);
        assert!(matches!("nguyen-3".parse::<Nguyen>(), Err(Error::UnknownBenchmark(_))));
        assert_eq!("Nguyen-12".parse::<Nguyen>().unwrap(), Nguyen::N12);
        assert_eq!("7".parse::<Nguyen>().unwrap(), Nguyen::N7);
    }

    #[test]
    fn ground_truth_trees_are_exact_on_base_rows() {
        for bench in [Nguyen::N1, Nguyen::N7, Nguyen::N11, Nguyen::N12] {
            let ds = gen_nguyen(bench, 20, 5, 3).unwrap();
            let tree = bench.ground_truth();
            assert!(tree.node_count() <= 20);
            let labels = ds.labels().unwrap();
            for i in 0..ds.len() {
                if labels[i] == SubsetLabel::Base {
                    assert_eq!(tree.evaluate(ds.row(i)).value(), Some(ds.target(i)), "{bench:?} row {i}");
                }
            }
        }
    }

    #[test]
    fn nguyen_layout_and_determinism() {
        let a = gen_nguyen(Nguyen::N12, 20, 20, 11).unwrap();
        assert_eq!(a.len(), 40);
        assert_eq!(a.dim(), 2);
        assert_eq!(a.subset(SubsetLabel::Base).unwrap().len(), 20);
        assert_eq!(a, gen_nguyen(Nguyen::N12, 20, 20, 11).unwrap());
        assert_ne!(a, gen_nguyen(Nguyen::N12, 20, 20, 12).unwrap());
        for i in 0..a.len() {
            assert!(a.row(i).iter().all(|v| (0.0..=1.0).contains(v)));
        }
    }

    #[test]
    fn mixture_components() {
        assert_eq!(mixture_linear(0.0), 1.0);
        assert_eq!(mixture_logistic(2.5), 0.5);
        let expected = 1.0 / (1.0 + 12f64.exp());
        assert!((mixture_logistic(10.0) - expected).abs() < 1e-20);
        assert!((expected - 6.1e-6).abs() < 0.05e-6);

        let lin = mixture_linear_tree();
        let log = mixture_logistic_tree();
        assert_eq!(lin.node_count(), 3);
        assert_eq!(log.node_count(), 6);
        for k in 0..=20 {
            let x = 0.5 * k as f64;
            assert!((lin.evaluate(&[x]).value().unwrap() - mixture_linear(x)).abs() < 1e-14);
            assert!((log.evaluate(&[x]).value().unwrap() - mixture_logistic(x)).abs() < 1e-14);
        }
    }

    #[test]
    fn mixture_label_fraction() {
        let ds = gen_mixture(10_000, 5).unwrap();
        let linear = ds.labels().unwrap().iter().filter(|&&l| l == SubsetLabel::Linear).count();
        let frac = linear as f64 / 1e4;
        assert!((0.48..=0.52).contains(&frac), "{frac}");
        for i in 0..ds.len() {
            let x = ds.row(i)[0];
            assert!((0.0..=10.0).contains(&x));
        }
        assert!(gen_mixture(1, 0).is_err());
    }

    #[test]
    fn minmax_round_trip() {
        let ds = Dataset::new(vec![vec![0.0], vec![5.0], vec![10.0]], vec![2.0, 4.0, 3.0]).unwrap();
        let t = ds.transform(TransformSpec::Minmax01).unwrap();
        assert_eq!((0..3).map(|i| t.row(i)[0]).collect::<Vec<_>>(), vec![0.0, 0.5, 1.0]);
        assert_eq!(t.transforms()[0], TransformStep::Minmax01 { bounds: vec![(0.0, 10.0), (2.0, 4.0)] });
        assert_eq!(t.inverse_transform(), ds);
    }

    #[test]
    fn constant_column_maps_to_half() {
        let ds = Dataset::new(vec![vec![3.0], vec![3.0], vec![3.0]], vec![1.0, 2.0, 3.0]).unwrap();
        let t = ds.transform(TransformSpec::Minmax01).unwrap();
        assert!((0..3).all(|i| t.row(i)[0] == 0.5));
        assert_eq!(t.inverse_transform().row(0)[0], 3.0);
    }

    #[test]
    fn log_transforms() {
        let ds = Dataset::new(vec![vec![1.0], vec![100.0]], vec![10.0, 1000.0]).unwrap();
        let t = ds.transform(TransformSpec::Log10).unwrap();
        assert_eq!(t.row(1)[0], 2.0);
        assert_eq!(t.target(1), 3.0);
        let back = t.transform(TransformSpec::Delog10).unwrap();
        assert!((back.target(1) - 1000.0).abs() < 1e-9);
        let bad = Dataset::new(vec![vec![0.0]], vec![1.0]).unwrap();
        assert!(matches!(bad.transform(TransformSpec::Log10), Err(Error::NonPositiveLog { column: 0, row: 0, .. })));
    }

    fn write_tmp(contents: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(contents.as_bytes()).unwrap();
        f
    }

    #[test]
    fn csv_loading() {
        let cols = vec!["m".to_string()];
        let f = write_tmp("m,l\n1,2\n3,4\n5,6\n");
        let load = load_csv(f.path(), &cols, "l").unwrap();
        assert_eq!((load.dataset.len(), load.skipped), (3, 0));

        let f = write_tmp("m,l\n1,2\n3,\n5,6\n");
        let load = load_csv(f.path(), &cols, "l").unwrap();
        assert_eq!((load.dataset.len(), load.skipped), (2, 1));

        let f = write_tmp("m,l\n");
        assert!(matches!(load_csv(f.path(), &cols, "l"), Err(Error::NoValidRows { .. })));
        assert!(matches!(load_csv(f.path(), &cols, "zz"), Err(Error::MissingColumn(_))));
        assert!(load_csv(Path::new("/nonexistent/file.csv"), &cols, "l").is_err());
    }

    #[test]
    fn snapshot_has_label_column() {
        let ds = gen_mixture(4, 1).unwrap();
        let mut buf = Vec::new();
        ds.write_csv(&mut buf, Some("seed=1")).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some("# seed=1"));
        assert_eq!(lines.next(), Some("x0,y,label"));
        assert_eq!(text.lines().count(), 6);
    }
}
