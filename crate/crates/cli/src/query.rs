//! `query`: descriptor-box filtering of an archive snapshot.

use std::fmt::Write as _;

use drsr::archive::EliteRecord;

use crate::error::{CliError, CliResult};

/// Parses `a:b` (inclusive) or a single value `a`.
pub fn parse_range(flag: &str, s: &str) -> CliResult<(usize, usize)> {
    let bad = || CliError::invalid(format!("{flag}: expected `a:b` with a <= b, got `{s}`"));
    let (lo, hi) = s.split_once(':').unwrap_or((s, s));
    let lo: usize = lo.trim().parse().map_err(|_| bad())?;
    let hi: usize = hi.trim().parse().map_err(|_| bad())?;
    if lo > hi {
        return Err(bad());
    }
    Ok((lo, hi))
}

pub fn parse_clusters(s: &str) -> CliResult<Vec<usize>> {
    s.split(',')
        .map(|c| c.trim().parse().map_err(|_| CliError::invalid(format!("--clusters: `{c}` is not a cluster index"))))
        .collect()
}

pub fn render_table(rows: &[EliteRecord]) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "{:>4}  {:>10}  {:>12}  {:>7}  {:>5}  {:>5}  {:<40}  weights", "rank", "fitness", "loss", "cluster", "nodes", "trans", "expression");
    for (i, r) in rows.iter().enumerate() {
        let weights: Vec<String> = r.weights.iter().map(|w| format!("{w:.6}")).collect();
        let _ = writeln!(
            out,
            "{:>4}  {:>10.6}  {:>12.6e}  {:>7}  {:>5}  {:>5}  {:<40}  [{}]",
            i + 1,
            r.fitness,
            r.loss,
            r.out_cluster,
            r.rep_power,
            r.trans_count,
            r.expr,
            weights.join(", ")
        );
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ranges() {
        assert_eq!(parse_range("--rep", "1:5").unwrap(), (1, 5));
        assert_eq!(parse_range("--trans", "0").unwrap(), (0, 0));
        assert!(parse_range("--rep", "5:1").is_err());
        assert!(parse_range("--rep", "a:b").is_err());
        assert_eq!(parse_clusters("0, 3,7").unwrap(), vec![0, 3, 7]);
        assert!(parse_clusters("0,x").is_err());
    }

    #[test]
    fn empty_table_has_only_a_header() {
        assert_eq!(render_table(&[]).lines().count(), 1);
    }
}
