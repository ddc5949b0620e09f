use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand::seq::index;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::math::{ceil_tolerant, rng_for, SimRng};
use crate::matrix::squared_distance;
use crate::{Error, Matrix, Result};

/// Lloyd iteration cap.
pub const MAX_ITERATIONS: usize = 300;

/// Independent seeded starts per [`kmeans`] call.
pub const RESTARTS: usize = 10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterAssignment {
    /// Cluster of each point.
    pub labels: Vec<usize>,
    /// `k × m` cluster means.
    pub centroids: Matrix,
    pub k: usize,
    /// Within-cluster sum of squared distances of `(labels, centroids)`.
    pub objective: f64,
    /// Objective after initial assignment, then after every centroid update.
    pub history: Vec<f64>,
}

impl ClusterAssignment {
    pub fn sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.k];
        self.labels.iter().for_each(|&l| sizes[l] += 1);
        sizes
    }

    /// Point indices of each cluster, ascending.
    pub fn members(&self) -> Vec<Vec<usize>> {
        let mut members = vec![Vec::new(); self.k];
        for (i, &l) in self.labels.iter().enumerate() {
            members[l].push(i);
        }
        members
    }
}

/// Within-cluster sum of squared Euclidean distances.
pub fn wcss(points: &Matrix, labels: &[usize], centroids: &Matrix) -> f64 {
    labels
        .iter()
        .enumerate()
        .map(|(i, &l)| squared_distance(points.row(i), centroids.row(l)))
        .sum()
}

fn nearest(point: &[f64], centroids: &Matrix) -> usize {
    let mut best = 0;
    let mut best_d = f64::INFINITY;
    for (j, c) in centroids.row_iter().enumerate() {
        let d = squared_distance(point, c);
        if d < best_d {
            best = j;
            best_d = d;
        }
    }
    best
}

fn means(points: &Matrix, labels: &[usize], k: usize, previous: &Matrix) -> Matrix {
    let mut sums = Matrix::zeros(k, points.cols());
    let mut counts = vec![0usize; k];
    for (i, &l) in labels.iter().enumerate() {
        counts[l] += 1;
        sums.row_mut(l)
            .iter_mut()
            .zip(points.row(i))
            .for_each(|(s, &p)| *s += p);
    }
    for (j, &n) in counts.iter().enumerate() {
        if n == 0 {
            sums.row_mut(j).copy_from_slice(previous.row(j));
        } else {
            sums.row_mut(j).iter_mut().for_each(|s| *s /= n as f64);
        }
    }
    sums
}

/// Gives every empty cluster the point farthest from its current centroid,
/// taken from a cluster that has members to spare. Ties are broken by `rng`.
fn repair_empty(points: &Matrix, labels: &mut [usize], centroids: &mut Matrix, rng: &mut SimRng) {
    let k = centroids.rows();
    let mut sizes = vec![0usize; k];
    labels.iter().for_each(|&l| sizes[l] += 1);
    for empty in 0..k {
        if sizes[empty] > 0 {
            continue;
        }
        let dist: Vec<f64> = (0..labels.len())
            .map(|i| {
                if sizes[labels[i]] >= 2 {
                    squared_distance(points.row(i), centroids.row(labels[i]))
                } else {
                    f64::NEG_INFINITY
                }
            })
            .collect();
        let far = dist.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let ties: Vec<usize> = (0..dist.len()).filter(|&i| dist[i] == far).collect();
        let pick = ties[rng.random_range(0..ties.len())];
        sizes[labels[pick]] -= 1;
        labels[pick] = empty;
        sizes[empty] = 1;
        centroids.row_mut(empty).copy_from_slice(points.row(pick));
    }
}

/// Lloyd's algorithm from `k` distinct seeded data points, restarted
/// [`RESTARTS`] times from different samples; the lowest objective wins
/// (ties to the earlier start).
///
/// Assignment ties go to the lowest centroid index. Each run stops at an
/// assignment fixpoint or after [`MAX_ITERATIONS`] updates.
pub fn kmeans(points: &Matrix, k: usize, seed: u64) -> Result<ClusterAssignment> {
    let n = points.rows();
    if k == 0 || k > n {
        return Err(Error::Argument(format!(
            "k-means needs 1 <= k <= {n}, got k = {k}"
        )));
    }
    let mut best: Option<ClusterAssignment> = None;
    for start in 0..RESTARTS {
        let run = lloyd(points, k, &mut rng_for(seed, &[0x6b6d, start as u64]));
        if best.as_ref().map_or(true, |b| run.objective < b.objective) {
            best = Some(run);
        }
    }
    Ok(best.expect("at least one start"))
}

fn lloyd(points: &Matrix, k: usize, rng: &mut SimRng) -> ClusterAssignment {
    let n = points.rows();
    let init: Vec<usize> = index::sample(rng, n, k).into_vec();
    let mut centroids = points.gather_rows(&init);
    let assign = |centroids: &Matrix| -> Vec<usize> {
        points.row_iter().map(|p| nearest(p, centroids)).collect()
    };
    let mut labels = assign(&centroids);
    repair_empty(points, &mut labels, &mut centroids, rng);
    let mut history = vec![wcss(points, &labels, &centroids)];
    for _ in 0..MAX_ITERATIONS {
        centroids = means(points, &labels, k, &centroids);
        history.push(wcss(points, &labels, &centroids));
        let mut next = assign(&centroids);
        repair_empty(points, &mut next, &mut centroids, rng);
        if next == labels {
            break;
        }
        labels = next;
    }
    // a capped run may end on a fresh assignment; refresh the means
    centroids = means(points, &labels, k, &centroids);
    let objective = wcss(points, &labels, &centroids);
    ClusterAssignment {
        labels,
        centroids,
        k,
        objective,
        history,
    }
}

/// [`kmeans`] followed by size balancing: while a cluster holds more than
/// `cap = ⌈cap_factor·N/K⌉` points, its member farthest from the centroid
/// (ties to the lower point index) moves to the nearest cluster below the
/// cap (ties to the lower cluster index), and both centroids are recomputed.
pub fn kmeans_balanced(
    points: &Matrix,
    k: usize,
    cap_factor: f64,
    seed: u64,
) -> Result<ClusterAssignment> {
    let n = points.rows();
    if k == 0 || k > n {
        return Err(Error::Argument(format!(
            "k-means needs 1 <= k <= {n}, got k = {k}"
        )));
    }
    let cap = ceil_tolerant(cap_factor * n as f64 / k as f64);
    if cap * k < n {
        return Err(Error::Config(format!(
            "cluster cap {cap} times {k} clusters cannot hold {n} points"
        )));
    }
    let mut out = kmeans(points, k, seed)?;
    let mut sizes = out.sizes();
    while let Some(over) = (0..k).find(|&j| sizes[j] > cap) {
        let mover = (0..n)
            .filter(|&i| out.labels[i] == over)
            .map(|i| (squared_distance(points.row(i), out.centroids.row(over)), i))
            .fold(None, |best: Option<(f64, usize)>, (d, i)| match best {
                Some((bd, _)) if bd >= d => best,
                _ => Some((d, i)),
            })
            .map(|(_, i)| i)
            .expect("over-cap cluster has members");
        let target = (0..k)
            .filter(|&j| sizes[j] < cap)
            .map(|j| (squared_distance(points.row(mover), out.centroids.row(j)), j))
            .fold(None, |best: Option<(f64, usize)>, (d, j)| match best {
                Some((bd, _)) if bd <= d => best,
                _ => Some((d, j)),
            })
            .map(|(_, j)| j)
            .expect("cap * k >= n leaves room below the cap");
        out.labels[mover] = target;
        sizes[over] -= 1;
        sizes[target] += 1;
        for j in [over, target] {
            let members: Vec<usize> = (0..n).filter(|&i| out.labels[i] == j).collect();
            let mean = points.gather_rows(&members);
            let row = out.centroids.row_mut(j);
            row.iter_mut().for_each(|v| *v = 0.0);
            for p in mean.row_iter() {
                row.iter_mut().zip(p).for_each(|(v, x)| *v += x);
            }
            row.iter_mut().for_each(|v| *v /= members.len() as f64);
        }
    }
    out.objective = wcss(points, &out.labels, &out.centroids);
    Ok(out)
}

/// WCSS of seeded [`kmeans`] for `k = 1..=k_max`.
pub fn elbow_curve(points: &Matrix, k_max: usize, seed: u64) -> Result<Vec<f64>> {
    if k_max < 2 || k_max > points.rows() {
        return Err(Error::Argument(format!(
            "elbow search needs 2 <= k_max <= {}, got {k_max}",
            points.rows()
        )));
    }
    (1..=k_max)
        .map(|k| kmeans(points, k, seed).map(|a| a.objective))
        .collect()
}

/// The `k` in `2..k_max` maximising the discrete second difference
/// `W(k−1) − 2W(k) + W(k+1)` of the WCSS curve; ties go to the smaller `k`.
/// Returns 2 when `k_max = 2`.
pub fn elbow_select_k(points: &Matrix, k_max: usize, seed: u64) -> Result<usize> {
    let w = elbow_curve(points, k_max, seed)?;
    let mut best = 2;
    let mut best_score = f64::NEG_INFINITY;
    for k in 2..k_max {
        // w[k - 1] is WCSS(k)
        let score = w[k - 2] - 2.0 * w[k - 1] + w[k];
        if score > best_score {
            best = k;
            best_score = score;
        }
    }
    Ok(best)
}
