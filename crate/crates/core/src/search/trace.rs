//! Trace records and their CSV / JSON Lines export.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::Path;

use super::RunTrace;
use crate::error::Result;

#[derive(Clone, Debug, PartialEq)]
pub struct TraceRecord {
    pub generation: usize,
    pub evaluations: usize,
    pub values: Vec<(String, f64)>,
}

impl TraceRecord {
    pub fn get(&self, metric: &str) -> Option<f64> {
        self.values.iter().find(|v| v.0 == metric).map(|v| v.1)
    }
}

/// One metric over a run: `(generation, evaluations, value)` rows.
pub type MetricSeries = Vec<(usize, usize, f64)>;

pub const ARCHIVE_FILE: &str = "archive.jsonl";

impl RunTrace {
    /// Metric names in record order.
    pub fn metric_names(&self) -> Vec<String> {
        self.records.first().map(|r| r.values.iter().map(|v| v.0.clone()).collect()).unwrap_or_default()
    }

    pub fn series(&self, metric: &str) -> MetricSeries {
        self.records.iter().filter_map(|r| r.get(metric).map(|v| (r.generation, r.evaluations, v))).collect()
    }

    pub fn last(&self, metric: &str) -> Option<f64> {
        self.records.last().and_then(|r| r.get(metric))
    }

    pub fn meta_line(&self) -> String {
        format!("config_hash={} seed={}", self.config_hash, self.seed)
    }

    pub fn write_metric_csv<W: Write>(&self, metric: &str, mut w: W) -> Result<()> {
        writeln!(w, "# {}", self.meta_line())?;
        writeln!(w, "generation,evaluations,value")?;
        for (g, e, v) in self.series(metric) {
            writeln!(w, "{g},{e},{v:?}")?;
        }
        Ok(())
    }

    pub fn write_archive_jsonl<W: Write>(&self, w: W) -> Result<()> {
        let meta = serde_json::json!({
            "config_hash": self.config_hash,
            "seed": self.seed,
            "method": self.method.name(),
        });
        self.archive.write_jsonl(w, Some(&meta))
    }

    /// Writes `<metric>.csv` for every metric plus the archive snapshot.
    pub fn write_dir(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        for m in self.metric_names() {
            let mut f = BufWriter::new(File::create(dir.join(format!("{m}.csv")))?);
            self.write_metric_csv(&m, &mut f)?;
            f.flush()?;
        }
        let mut f = BufWriter::new(File::create(dir.join(ARCHIVE_FILE))?);
        self.write_archive_jsonl(&mut f)?;
        f.flush()?;
        Ok(())
    }
}
