//! k-means partition of the rescaled input-output space.

use std::io::{BufRead, Write};

use rand::Rng;

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::rng;

pub const DEFAULT_CLUSTERS: usize = 10;
pub const MAX_LLOYD_ITERATIONS: usize = 300;

#[derive(Clone, Debug, PartialEq)]
pub struct ClusterAssignment {
    labels: Vec<usize>,
    k: usize,
    centroids: Vec<Vec<f64>>,
    /// Per-column `(min, max)` of the rescale, inputs then target.
    bounds: Vec<(f64, f64)>,
    sizes: Vec<usize>,
}

impl ClusterAssignment {
    /// Wraps externally supplied labels; centroids are left empty.
    pub fn from_labels(labels: Vec<usize>, k: usize) -> Result<Self> {
        if let Some(&bad) = labels.iter().find(|&&l| l >= k) {
            return Err(Error::InvalidConfig(format!("cluster label {bad} out of range for k={k}")));
        }
        let sizes = sizes(&labels, k);
        Ok(ClusterAssignment { labels, k, centroids: Vec::new(), bounds: Vec::new(), sizes })
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn centroids(&self) -> &[Vec<f64>] {
        &self.centroids
    }

    pub fn bounds(&self) -> &[(f64, f64)] {
        &self.bounds
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn write_csv<W: Write>(&self, mut w: W, meta: Option<&str>) -> Result<()> {
        if let Some(m) = meta {
            writeln!(w, "# {m}")?;
        }
        writeln!(w, "row_index,cluster")?;
        for (i, l) in self.labels.iter().enumerate() {
            writeln!(w, "{i},{l}")?;
        }
        Ok(())
    }

    /// Reads `row_index,cluster` rows; `k` is one more than the largest label
    /// unless given.
    pub fn read_csv<R: BufRead>(r: R, k: Option<usize>) -> Result<Self> {
        let mut pairs = Vec::new();
        for (line_no, line) in r.lines().enumerate() {
            let line = line?;
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') || line.starts_with("row_index") {
                continue;
            }
            let bad = |msg: &str| Error::Record { line: line_no + 1, msg: msg.to_string() };
            let (a, b) = line.split_once(',').ok_or_else(|| bad("expected `row_index,cluster`"))?;
            let row: usize = a.trim().parse().map_err(|_| bad("bad row index"))?;
            let cluster: usize = b.trim().parse().map_err(|_| bad("bad cluster"))?;
            pairs.push((row, cluster));
        }
        pairs.sort_unstable();
        if pairs.iter().enumerate().any(|(i, &(row, _))| row != i) {
            return Err(Error::InvalidConfig("cluster file must list every row exactly once".into()));
        }
        let labels: Vec<usize> = pairs.into_iter().map(|(_, c)| c).collect();
        let k = k.unwrap_or_else(|| labels.iter().max().map_or(1, |m| m + 1));
        Self::from_labels(labels, k)
    }
}

fn sizes(labels: &[usize], k: usize) -> Vec<usize> {
    let mut s = vec![0; k];
    for &l in labels {
        s[l] += 1;
    }
    s
}

/// Maps every input column and the target onto `[0, 1]`; constant columns go to 0.5.
pub fn rescale(data: &Dataset) -> (Vec<Vec<f64>>, Vec<(f64, f64)>) {
    let bounds = data.column_bounds();
    let points = (0..data.len())
        .map(|i| {
            bounds
                .iter()
                .enumerate()
                .map(|(c, &(lo, hi))| if hi > lo { (data.value(i, c) - lo) / (hi - lo) } else { 0.5 })
                .collect()
        })
        .collect();
    (points, bounds)
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(p, q)| (p - q) * (p - q)).sum()
}

/// Index of the nearest centroid, lowest index on ties.
fn nearest(p: &[f64], centroids: &[Vec<f64>]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (j, c) in centroids.iter().enumerate() {
        let d = sq_dist(p, c);
        if d < best.1 {
            best = (j, d);
        }
    }
    best
}

pub fn within_cluster_sse(points: &[Vec<f64>], labels: &[usize], centroids: &[Vec<f64>]) -> f64 {
    points.iter().zip(labels).map(|(p, &l)| sq_dist(p, &centroids[l])).sum()
}

fn kmeans_pp<R: Rng>(points: &[Vec<f64>], k: usize, rng: &mut R) -> Vec<Vec<f64>> {
    let n = points.len();
    let mut centroids = vec![points[rng.random_range(0..n)].clone()];
    let mut d2: Vec<f64> = points.iter().map(|p| sq_dist(p, &centroids[0])).collect();
    while centroids.len() < k {
        let total: f64 = d2.iter().sum();
        let pick = if total > 0.0 {
            let mut target = rng.random::<f64>() * total;
            let mut idx = n - 1;
            for (i, &d) in d2.iter().enumerate() {
                if target < d {
                    idx = i;
                    break;
                }
                target -= d;
            }
            idx
        } else {
            rng.random_range(0..n)
        };
        let c = points[pick].clone();
        for (d, p) in d2.iter_mut().zip(points) {
            *d = d.min(sq_dist(p, &c));
        }
        centroids.push(c);
    }
    centroids
}

/// Lloyd iterations from a k-means++ start; at most
/// [`MAX_LLOYD_ITERATIONS`] rounds or until labels stop changing.
///
/// A centroid left without points is moved onto the point farthest from its
/// own centroid, so all `k` clusters stay populated whenever `n >= k`.
pub fn lloyd(points: &[Vec<f64>], k: usize, seed: u64) -> Result<(Vec<usize>, Vec<Vec<f64>>)> {
    lloyd_traced(points, k, seed, None)
}

pub(crate) fn lloyd_traced(
    points: &[Vec<f64>],
    k: usize,
    seed: u64,
    mut sse_trace: Option<&mut Vec<f64>>,
) -> Result<(Vec<usize>, Vec<Vec<f64>>)> {
    let n = points.len();
    if k == 0 || n < k {
        return Err(Error::TooFewPoints { n, k });
    }
    let dim = points[0].len();
    let mut rng = rng::stream(seed, &[rng::STREAM_CLUSTER]);
    let mut centroids = kmeans_pp(points, k, &mut rng);
    let mut labels: Vec<usize> = points.iter().map(|p| nearest(p, &centroids).0).collect();

    for iter in 0..MAX_LLOYD_ITERATIONS {
        let mut counts = sizes(&labels, k);
        let mut sums = vec![vec![0.0; dim]; k];
        for (p, &l) in points.iter().zip(&labels) {
            for (s, v) in sums[l].iter_mut().zip(p) {
                *s += v;
            }
        }
        for j in 0..k {
            if counts[j] > 0 {
                centroids[j] = sums[j].iter().map(|s| s / counts[j] as f64).collect();
            }
        }
        // An empty cluster takes over the point farthest from its own
        // centroid, among clusters that can spare one.
        for j in 0..k {
            if counts[j] == 0 {
                let far = (0..n)
                    .filter(|&i| counts[labels[i]] > 1)
                    .map(|i| (i, sq_dist(&points[i], &centroids[labels[i]])))
                    .fold(None::<(usize, f64)>, |best, (i, d)| match best {
                        Some((_, bd)) if bd >= d => best,
                        _ => Some((i, d)),
                    });
                if let Some((i, _)) = far {
                    counts[labels[i]] -= 1;
                    counts[j] += 1;
                    labels[i] = j;
                    centroids[j] = points[i].clone();
                }
            }
        }
        if let Some(trace) = sse_trace.as_deref_mut() {
            trace.push(within_cluster_sse(points, &labels, &centroids));
        }
        let next: Vec<usize> = points.iter().map(|p| nearest(p, &centroids).0).collect();
        if next == labels || iter + 1 == MAX_LLOYD_ITERATIONS {
            break;
        }
        labels = next;
    }
    Ok((labels, centroids))
}

/// Rescales `data` and clusters it with `k` centroids.
pub fn kmeans(data: &Dataset, k: usize, seed: u64) -> Result<ClusterAssignment> {
    let (points, bounds) = rescale(data);
    let (labels, centroids) = lloyd(&points, k, seed)?;
    let sizes = sizes(&labels, k);
    Ok(ClusterAssignment { labels, k, centroids, bounds, sizes })
}
