//! Recovering a biclustering from a relaxation solution: k-means on the rows
//! of both diagonal blocks, then a maximum-weight matching of row clusters
//! to column clusters by density.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::instance::{density, objective_unchecked, Biclustering, DataMatrix};
use crate::relaxation::{NodeProblem, Side};

pub const DEFAULT_RESTARTS: usize = 20;
const LLOYD_ITERS: usize = 300;

#[derive(Debug, Clone, PartialEq)]
pub struct ClusterAssignment {
    pub labels: Vec<usize>,
    /// One center per row.
    pub centers: DMatrix<f64>,
    pub inertia: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MatchResult {
    /// `perm[i]` is the column matched to row `i`.
    pub perm: Vec<usize>,
    pub value: f64,
}

fn sq_dist(points: &DMatrix<f64>, i: usize, centers: &DMatrix<f64>, c: usize) -> f64 {
    (0..points.ncols())
        .map(|d| (points[(i, d)] - centers[(c, d)]).powi(2))
        .sum()
}

/// k-means on the rows of `points`.
pub fn kmeans(points: &DMatrix<f64>, k: usize, restarts: usize, seed: u64) -> Result<ClusterAssignment> {
    kmeans_weighted(points, None, k, restarts, seed)
}

/// Weighted k-means: best of `restarts` runs of Lloyd's method from
/// k-means++ seeds. Empty clusters are refilled with the point farthest
/// from its center.
pub fn kmeans_weighted(
    points: &DMatrix<f64>,
    weights: Option<&[f64]>,
    k: usize,
    restarts: usize,
    seed: u64,
) -> Result<ClusterAssignment> {
    let n = points.nrows();
    if k == 0 || n < k {
        return Err(Error::InvalidArgument(format!("cannot form {k} clusters from {n} points")));
    }
    let unit = vec![1.0; n];
    let weights = weights.unwrap_or(&unit);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut best: Option<ClusterAssignment> = None;
    for _ in 0..restarts.max(1) {
        let run = lloyd(points, weights, k, &mut rng);
        if best.as_ref().is_none_or(|b| run.inertia < b.inertia) {
            best = Some(run);
        }
    }
    Ok(best.expect("at least one restart"))
}

fn pick_weighted(rng: &mut ChaCha8Rng, mass: &[f64]) -> Option<usize> {
    let total: f64 = mass.iter().sum();
    if total <= 0.0 || !total.is_finite() {
        return None;
    }
    let mut r = rng.random::<f64>() * total;
    for (i, &m) in mass.iter().enumerate() {
        if m > 0.0 {
            if r < m {
                return Some(i);
            }
            r -= m;
        }
    }
    mass.iter().rposition(|&m| m > 0.0)
}

fn lloyd(points: &DMatrix<f64>, weights: &[f64], k: usize, rng: &mut ChaCha8Rng) -> ClusterAssignment {
    let (n, dim) = points.shape();
    let mut centers = DMatrix::zeros(k, dim);
    let mut chosen = vec![false; n];
    let first = pick_weighted(rng, weights).unwrap_or(0);
    centers.row_mut(0).copy_from(&points.row(first));
    chosen[first] = true;
    let mut d2: Vec<f64> = (0..n).map(|i| sq_dist(points, i, &centers, 0)).collect();
    for c in 1..k {
        let mass: Vec<f64> = (0..n).map(|i| if chosen[i] { 0.0 } else { weights[i] * d2[i] }).collect();
        let next = pick_weighted(rng, &mass).unwrap_or_else(|| {
            let free: Vec<usize> = (0..n).filter(|&i| !chosen[i]).collect();
            free[rng.random_range(0..free.len())]
        });
        chosen[next] = true;
        centers.row_mut(c).copy_from(&points.row(next));
        for i in 0..n {
            d2[i] = d2[i].min(sq_dist(points, i, &centers, c));
        }
    }

    let mut labels = vec![usize::MAX; n];
    for _ in 0..LLOYD_ITERS {
        let mut changed = false;
        for i in 0..n {
            let mut best = (f64::INFINITY, 0);
            for c in 0..k {
                let d = sq_dist(points, i, &centers, c);
                if d < best.0 {
                    best = (d, c);
                }
            }
            if labels[i] != best.1 {
                labels[i] = best.1;
                changed = true;
            }
        }
        repair_empty(points, weights, k, &mut labels, &centers);
        let new_centers = centroids(points, weights, k, &labels);
        let moved = (&new_centers - &centers).amax() > 0.0;
        centers = new_centers;
        if !changed && !moved {
            break;
        }
    }
    let inertia = (0..n).map(|i| weights[i] * sq_dist(points, i, &centers, labels[i])).sum();
    ClusterAssignment { labels, centers, inertia }
}

fn centroids(points: &DMatrix<f64>, weights: &[f64], k: usize, labels: &[usize]) -> DMatrix<f64> {
    let dim = points.ncols();
    let mut sums = DMatrix::zeros(k, dim);
    let mut mass = vec![0.0; k];
    for (i, &l) in labels.iter().enumerate() {
        mass[l] += weights[i];
        for d in 0..dim {
            sums[(l, d)] += weights[i] * points[(i, d)];
        }
    }
    for c in 0..k {
        if mass[c] > 0.0 {
            sums.row_mut(c).scale_mut(1.0 / mass[c]);
        }
    }
    sums
}

fn repair_empty(points: &DMatrix<f64>, weights: &[f64], k: usize, labels: &mut [usize], centers: &DMatrix<f64>) {
    loop {
        let mut count = vec![0usize; k];
        for &l in labels.iter() {
            count[l] += 1;
        }
        let Some(empty) = count.iter().position(|&c| c == 0) else { return };
        let mut far = (f64::NEG_INFINITY, usize::MAX);
        for (i, &l) in labels.iter().enumerate() {
            if count[l] > 1 {
                let d = weights[i] * sq_dist(points, i, centers, l);
                if d > far.0 {
                    far = (d, i);
                }
            }
        }
        labels[far.1] = empty;
    }
}

/// Permutation maximizing `sum_i w[(i, perm[i])]` (Hungarian method).
pub fn assignment_max(w: &DMatrix<f64>) -> MatchResult {
    let n = w.nrows();
    assert_eq!(n, w.ncols(), "assignment needs a square matrix");
    if n == 0 {
        return MatchResult { perm: Vec::new(), value: 0.0 };
    }
    // minimize -w, 1-based potentials
    let cost = |i: usize, j: usize| -w[(i - 1, j - 1)];
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
    let mut p = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0;
        let mut minv = vec![f64::INFINITY; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0;
            for j in 1..=n {
                if !used[j] {
                    let cur = cost(i0, j) - u[i0] - v[j];
                    if cur < minv[j] {
                        minv[j] = cur;
                        way[j] = j0;
                    }
                    if minv[j] < delta {
                        delta = minv[j];
                        j1 = j;
                    }
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut perm = vec![0; n];
    for j in 1..=n {
        perm[p[j] - 1] = j - 1;
    }
    let value = (0..n).map(|i| w[(i, perm[i])]).sum();
    MatchResult { perm, value }
}

/// Matches row clusters to column clusters by density and returns the
/// resulting biclustering with its recomputed objective.
pub fn match_clusters(a: &DataMatrix, k: usize, row_labels: &[usize], col_labels: &[usize]) -> Result<(Biclustering, f64)> {
    let rows: Vec<Vec<usize>> = (0..k).map(|c| (0..a.n()).filter(|&i| row_labels[i] == c).collect()).collect();
    let cols: Vec<Vec<usize>> = (0..k).map(|c| (0..a.m()).filter(|&j| col_labels[j] == c).collect()).collect();
    let mut w = DMatrix::zeros(k, k);
    for i in 0..k {
        for j in 0..k {
            w[(i, j)] = density(a, &rows[i], &cols[j])?;
        }
    }
    let matched = assignment_max(&w);
    let mut new_col = vec![0; k];
    for (i, &j) in matched.perm.iter().enumerate() {
        new_col[j] = i;
    }
    let col_labels: Vec<usize> = col_labels.iter().map(|&c| new_col[c]).collect();
    let value = objective_unchecked(a, k, row_labels, &col_labels);
    Ok((Biclustering::new(k, row_labels.to_vec(), col_labels), value))
}

/// Rounds a full-size lifted matrix (rows of `A` first, then columns).
pub fn round_solution(a: &DataMatrix, k: usize, z_full: &DMatrix<f64>, seed: u64) -> Result<(Biclustering, f64)> {
    let (n, m) = (a.n(), a.m());
    if z_full.nrows() != n + m || z_full.ncols() != n + m {
        return Err(Error::InvalidArgument("lifted matrix has the wrong size".into()));
    }
    let zu = z_full.view((0, 0), (n, n)).into_owned();
    let zv = z_full.view((n, n), (m, m)).into_owned();
    let ru = kmeans(&zu, k, DEFAULT_RESTARTS, seed)?;
    let rv = kmeans(&zv, k, DEFAULT_RESTARTS, seed.wrapping_add(1))?;
    match_clusters(a, k, &ru.labels, &rv.labels)
}

/// Same as [`round_solution`] applied to `node.expand(zbar)`, computed on
/// the reduced matrix: a group's expanded rows coincide, so they are
/// clustered as one point weighted by the group size.
pub fn round_reduced(a: &DataMatrix, node: &NodeProblem, zbar: &DMatrix<f64>, seed: u64) -> Result<(Biclustering, f64)> {
    let k = node.k;
    let mut labels = Vec::new();
    for (idx, side) in [Side::U, Side::V].into_iter().enumerate() {
        let o = node.offset(side);
        let c = node.multiplicities(side);
        let s = c.len();
        let pts = DMatrix::from_fn(s, s, |g, h| zbar[(o + g, o + h)] * c[h].sqrt());
        let res = kmeans_weighted(&pts, Some(c), k, DEFAULT_RESTARTS, seed.wrapping_add(idx as u64))?;
        let mut full = vec![0; node.shrink().full_size(side)];
        for (g, members) in node.shrink().groups(side).iter().enumerate() {
            for &x in members {
                full[x] = res.labels[g];
            }
        }
        labels.push(full);
    }
    match_clusters(a, k, &labels[0], &labels[1])
}
