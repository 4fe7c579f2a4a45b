//! Lloyd's k-means with k-means++ seeding and best-of-N restarts.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{derive_seed, stream, Stage, StreamRng};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KMeansParams {
    pub k: usize,
    pub max_iter: usize,
    /// Stop once the relative SSE improvement of an iteration drops below this.
    pub tol: f64,
    pub restarts: usize,
}

impl Default for KMeansParams {
    fn default() -> Self {
        KMeansParams {
            k: 7,
            max_iter: 300,
            tol: 1e-6,
            restarts: 10,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterModel {
    pub k: usize,
    pub centroids: Vec<Vec<f64>>,
    pub labels: Vec<usize>,
    pub sse: f64,
    pub iterations_run: usize,
    pub seed: u64,
    /// SSE after the initial assignment and after every Lloyd iteration.
    pub sse_trace: Vec<f64>,
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn check_points(points: &[Vec<f64>]) -> Result<usize> {
    let d = points.first().map(Vec::len).unwrap_or(0);
    if d == 0 {
        return Err(Error::Domain("points must have at least one dimension".into()));
    }
    for (i, p) in points.iter().enumerate() {
        if p.len() != d {
            return Err(Error::Domain(format!("point {i} has {} dims, expected {d}", p.len())));
        }
        if p.iter().any(|v| !v.is_finite()) {
            return Err(Error::Domain(format!("point {i} has a non-finite coordinate")));
        }
    }
    Ok(d)
}

/// Nearest centroid per point; ties go to the lowest centroid index.
pub fn assign(points: &[Vec<f64>], centroids: &[Vec<f64>]) -> Result<Vec<usize>> {
    let Some(d) = centroids.first().map(Vec::len) else {
        return Err(Error::Domain("no centroids".into()));
    };
    if centroids.iter().chain(points).any(|v| v.len() != d) {
        return Err(Error::Domain("point/centroid dimension mismatch".into()));
    }
    Ok(points.iter().map(|p| nearest(p, centroids).0).collect())
}

fn nearest(p: &[f64], centroids: &[Vec<f64>]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (j, c) in centroids.iter().enumerate() {
        let dist = sq_dist(p, c);
        if dist < best.1 {
            best = (j, dist);
        }
    }
    best
}

/// Sum of squared distances from each point to its assigned centroid.
pub fn sse(points: &[Vec<f64>], centroids: &[Vec<f64>], labels: &[usize]) -> Result<f64> {
    if points.len() != labels.len() {
        return Err(Error::Domain("labels and points differ in length".into()));
    }
    let mut total = 0.0;
    for (p, &l) in points.iter().zip(labels) {
        let c = centroids
            .get(l)
            .ok_or_else(|| Error::Domain(format!("label {l} out of range for {} centroids", centroids.len())))?;
        if c.len() != p.len() {
            return Err(Error::Domain("point/centroid dimension mismatch".into()));
        }
        total += sq_dist(p, c);
    }
    Ok(total)
}

/// k-means++ seeding.
fn plus_plus_init(points: &[Vec<f64>], k: usize, rng: &mut StreamRng) -> Vec<Vec<f64>> {
    let n = points.len();
    let mut centroids = vec![points[rng.gen_range(0..n)].clone()];
    let mut d2: Vec<f64> = points.iter().map(|p| sq_dist(p, &centroids[0])).collect();
    while centroids.len() < k {
        let total: f64 = d2.iter().sum();
        let pick = if total > 0.0 {
            let mut target = rng.gen::<f64>() * total;
            let mut chosen = n - 1;
            for (i, &w) in d2.iter().enumerate() {
                if w > 0.0 && target < w {
                    chosen = i;
                    break;
                }
                target -= w;
            }
            // guard against rounding leaving a zero-weight pick
            if d2[chosen] == 0.0 {
                chosen = d2.iter().rposition(|&w| w > 0.0).unwrap_or(chosen);
            }
            chosen
        } else {
            rng.gen_range(0..n)
        };
        let c = points[pick].clone();
        for (dist, p) in d2.iter_mut().zip(points) {
            *dist = dist.min(sq_dist(p, &c));
        }
        centroids.push(c);
    }
    centroids
}

/// Gives every empty cluster the point farthest from its own centroid,
/// taken from a cluster with more than one member.
fn repair_empty(points: &[Vec<f64>], centroids: &mut [Vec<f64>], labels: &mut [usize]) {
    let k = centroids.len();
    loop {
        let mut sizes = vec![0usize; k];
        for &l in labels.iter() {
            sizes[l] += 1;
        }
        let Some(empty) = sizes.iter().position(|&s| s == 0) else {
            return;
        };
        let mut far = None;
        let mut far_dist = f64::NEG_INFINITY;
        for (i, p) in points.iter().enumerate() {
            if sizes[labels[i]] < 2 {
                continue;
            }
            let dist = sq_dist(p, &centroids[labels[i]]);
            if dist > far_dist {
                far_dist = dist;
                far = Some(i);
            }
        }
        let i = far.expect("n >= k guarantees a cluster with two members");
        centroids[empty] = points[i].clone();
        labels[i] = empty;
    }
}

fn update(points: &[Vec<f64>], labels: &[usize], k: usize, d: usize) -> Vec<Vec<f64>> {
    let mut sums = vec![vec![0.0; d]; k];
    let mut counts = vec![0usize; k];
    for (p, &l) in points.iter().zip(labels) {
        counts[l] += 1;
        for (s, v) in sums[l].iter_mut().zip(p) {
            *s += v;
        }
    }
    sums.into_iter()
        .zip(counts)
        .map(|(s, c)| s.into_iter().map(|v| v / c as f64).collect())
        .collect()
}

/// Runs Lloyd iterations from the given centroids.
pub fn lloyd(
    points: &[Vec<f64>],
    initial: Vec<Vec<f64>>,
    max_iter: usize,
    tol: f64,
) -> Result<ClusterModel> {
    let d = check_points(points)?;
    let k = initial.len();
    if k == 0 || k > points.len() {
        return Err(Error::Domain(format!("need 1 <= k <= n, got k = {k}, n = {}", points.len())));
    }
    let mut centroids = initial;
    let mut labels = assign(points, &centroids)?;
    repair_empty(points, &mut centroids, &mut labels);
    let mut current = sse(points, &centroids, &labels)?;
    let mut trace = vec![current];
    let mut iterations = 0;
    while iterations < max_iter {
        iterations += 1;
        let mut next_centroids = update(points, &labels, k, d);
        let mut next_labels = assign(points, &next_centroids)?;
        repair_empty(points, &mut next_centroids, &mut next_labels);
        let next = sse(points, &next_centroids, &next_labels)?;
        trace.push(next);
        let improvement = current - next;
        centroids = next_centroids;
        labels = next_labels;
        let prev = current;
        current = next;
        if prev == 0.0 || improvement <= tol * prev {
            break;
        }
    }
    Ok(ClusterModel {
        k,
        centroids,
        labels,
        sse: current,
        iterations_run: iterations,
        seed: 0,
        sse_trace: trace,
    })
}

/// Best-of-`restarts` k-means by SSE. Restart `r` seeds its own stream from
/// `(seed, r)`; earlier restarts win SSE ties.
pub fn kmeans_fit(points: &[Vec<f64>], params: &KMeansParams, seed: u64) -> Result<ClusterModel> {
    check_points(points)?;
    let KMeansParams { k, max_iter, tol, restarts } = *params;
    if k == 0 || points.len() < k {
        return Err(Error::Domain(format!(
            "k-means needs 1 <= k <= n, got k = {k}, n = {}",
            points.len()
        )));
    }
    let runs: Vec<ClusterModel> = (0..restarts.max(1) as u64)
        .into_par_iter()
        .map(|r| {
            let mut rng = stream(seed, Stage::KMeansRestart, r);
            let init = plus_plus_init(points, k, &mut rng);
            let mut model = lloyd(points, init, max_iter, tol)?;
            model.seed = derive_seed(seed, Stage::KMeansRestart, r);
            Ok(model)
        })
        .collect::<Result<_>>()?;
    let mut best = None::<ClusterModel>;
    for m in runs {
        if best.as_ref().is_none_or(|b| m.sse < b.sse) {
            best = Some(m);
        }
    }
    let mut best = best.expect("at least one restart");
    best.seed = seed;
    Ok(best)
}
