//! Lloyd's k-means with k-means++ seeding.
//!
//! Shared by codebook learning and atom initialization. Ties in nearest-centroid
//! assignment go to the lowest centroid index; empty clusters are reseeded from
//! the point farthest from its current centroid.

use std::collections::HashSet;

use rand::Rng;

use crate::error::{Error, Result};
use crate::seed;

pub const DEFAULT_MAX_ITER: usize = 100;

#[derive(Debug, Clone)]
pub struct KMeansFit {
    pub centroids: Vec<Vec<f64>>,
    pub assignment: Vec<usize>,
    /// Within-cluster sum of squared distances after each assignment step.
    pub objective: Vec<f64>,
    /// Number of update/assign rounds performed.
    pub iterations: usize,
    pub converged: bool,
}

pub fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Index of the nearest centroid and its squared distance. Ties go to the lowest index.
pub fn nearest(point: &[f64], centroids: &[Vec<f64>]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (j, c) in centroids.iter().enumerate() {
        let d = squared_distance(point, c);
        if d < best.1 {
            best = (j, d);
        }
    }
    best
}

pub fn count_distinct<P: AsRef<[f64]>>(points: &[P]) -> usize {
    let set: HashSet<Vec<u64>> = points
        .iter()
        .map(|p| p.as_ref().iter().map(|v| v.to_bits()).collect())
        .collect();
    set.len()
}

fn plus_plus_init<P: AsRef<[f64]>>(points: &[P], k: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = seed::rng(seed);
    let n = points.len();
    let first = rng.random_range(0..n);
    let mut centroids = vec![points[first].as_ref().to_vec()];
    let mut dist: Vec<f64> = points
        .iter()
        .map(|p| squared_distance(p.as_ref(), &centroids[0]))
        .collect();

    while centroids.len() < k {
        let total: f64 = dist.iter().sum();
        let pick = if total > 0.0 {
            let target = rng.random::<f64>() * total;
            let mut acc = 0.0;
            let mut chosen = None;
            for (i, &d) in dist.iter().enumerate() {
                acc += d;
                if d > 0.0 && acc > target {
                    chosen = Some(i);
                    break;
                }
            }
            // Rounding can leave `target` just past the last partial sum.
            chosen.unwrap_or_else(|| dist.iter().rposition(|&d| d > 0.0).unwrap())
        } else {
            // Only reachable with fewer distinct points than k, which callers reject.
            rng.random_range(0..n)
        };
        let c = points[pick].as_ref().to_vec();
        for (d, p) in dist.iter_mut().zip(points) {
            let nd = squared_distance(p.as_ref(), &c);
            if nd < *d {
                *d = nd;
            }
        }
        centroids.push(c);
    }
    centroids
}

fn assign<P: AsRef<[f64]>>(
    points: &[P],
    centroids: &[Vec<f64>],
    assignment: &mut [usize],
    dist: &mut [f64],
) -> (usize, f64) {
    let mut changed = 0;
    let mut objective = 0.0;
    for (i, p) in points.iter().enumerate() {
        let (j, d) = nearest(p.as_ref(), centroids);
        if assignment[i] != j {
            changed += 1;
            assignment[i] = j;
        }
        dist[i] = d;
        objective += d;
    }
    (changed, objective)
}

/// Recomputes centroids as member means and reseeds empty clusters.
fn update<P: AsRef<[f64]>>(
    points: &[P],
    centroids: &mut [Vec<f64>],
    assignment: &[usize],
    dist: &[f64],
) {
    let k = centroids.len();
    let dim = centroids[0].len();
    let mut sums = vec![vec![0.0; dim]; k];
    let mut counts = vec![0usize; k];
    for (p, &a) in points.iter().zip(assignment) {
        counts[a] += 1;
        for (s, v) in sums[a].iter_mut().zip(p.as_ref()) {
            *s += v;
        }
    }

    let mut used = vec![false; points.len()];
    for j in 0..k {
        if counts[j] > 0 {
            let inv = 1.0 / counts[j] as f64;
            centroids[j] = sums[j].iter().map(|s| s * inv).collect();
        } else {
            let far = (0..points.len())
                .filter(|&i| !used[i])
                .fold(None, |best: Option<usize>, i| match best {
                    Some(b) if dist[b] >= dist[i] => Some(b),
                    _ => Some(i),
                });
            if let Some(i) = far {
                used[i] = true;
                centroids[j] = points[i].as_ref().to_vec();
            }
        }
    }
}

/// Moves the farthest member of the largest cluster into each empty cluster.
fn repair_empty<P: AsRef<[f64]>>(points: &[P], centroids: &[Vec<f64>], assignment: &mut [usize]) {
    let k = centroids.len();
    loop {
        let mut counts = vec![0usize; k];
        for &a in assignment.iter() {
            counts[a] += 1;
        }
        let Some(empty) = counts.iter().position(|&c| c == 0) else {
            return;
        };
        let largest = (0..k).fold(0, |b, j| if counts[j] > counts[b] { j } else { b });
        if counts[largest] < 2 {
            return;
        }
        let victim = (0..points.len())
            .filter(|&i| assignment[i] == largest)
            .fold(None, |best: Option<(usize, f64)>, i| {
                let d = squared_distance(points[i].as_ref(), &centroids[largest]);
                match best {
                    Some((_, bd)) if bd >= d => best,
                    _ => Some((i, d)),
                }
            })
            .map(|(i, _)| i)
            .unwrap();
        assignment[victim] = empty;
    }
}

/// Clusters `points` into `k` groups. Requires at least `k` distinct points.
pub fn kmeans<P: AsRef<[f64]>>(points: &[P], k: usize, seed: u64, max_iter: usize) -> Result<KMeansFit> {
    if k == 0 {
        return Err(Error::invalid("k-means needs at least one cluster"));
    }
    let dim = points.first().map(|p| p.as_ref().len()).unwrap_or(0);
    if let Some(p) = points.iter().find(|p| p.as_ref().len() != dim) {
        return Err(Error::LengthMismatch {
            expected: dim,
            found: p.as_ref().len(),
        });
    }
    if points.iter().any(|p| p.as_ref().iter().any(|v| !v.is_finite())) {
        return Err(Error::NonFinite("k-means input".into()));
    }
    let distinct = count_distinct(points);
    if distinct < k {
        return Err(Error::invalid(format!(
            "k-means needs at least {k} distinct points, found {distinct}"
        )));
    }

    let mut centroids = plus_plus_init(points, k, seed);
    let mut assignment = vec![usize::MAX; points.len()];
    let mut dist = vec![0.0; points.len()];
    let (_, obj) = assign(points, &centroids, &mut assignment, &mut dist);
    let mut objective = vec![obj];
    let mut iterations = 0;
    let mut converged = false;

    while iterations < max_iter {
        update(points, &mut centroids, &assignment, &dist);
        let (changed, obj) = assign(points, &centroids, &mut assignment, &mut dist);
        objective.push(obj);
        iterations += 1;
        if changed == 0 {
            converged = true;
            break;
        }
    }
    repair_empty(points, &centroids, &mut assignment);

    Ok(KMeansFit {
        centroids,
        assignment,
        objective,
        iterations,
        converged,
    })
}
