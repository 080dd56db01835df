//! Exhaustive search over all biclusterings of tiny instances.
//!
//! Row labelings are enumerated in canonical form (labels in order of first
//! appearance) since relabeling rows and columns together leaves the
//! objective unchanged; column labelings are enumerated in full.

use crate::error::{Error, Result};
use crate::instance::{Biclustering, DataMatrix};

/// Largest number of (row labeling, column labeling) combinations searched.
pub const ENUMERATION_LIMIT: f64 = 1e8;

/// Stirling number of the second kind, as a float.
fn stirling2(n: usize, k: usize) -> f64 {
    let mut row = vec![0.0f64; k + 1];
    row[0] = 1.0;
    for _ in 0..n {
        for j in (1..=k).rev() {
            row[j] = j as f64 * row[j] + row[j - 1];
        }
        row[0] = 0.0;
    }
    row[k]
}

/// Number of combinations [`brute_force`] examines.
pub fn combinations(n: usize, m: usize, k: usize) -> f64 {
    stirling2(n, k) * (k as f64).powi(m as i32)
}

/// Optimal biclustering and its value.
pub fn brute_force(a: &DataMatrix, k: usize) -> Result<(Biclustering, f64)> {
    brute_force_with(a, k, |_, _| true)?
        .ok_or_else(|| Error::InvalidArgument("no biclustering exists".into()))
}

/// Optimum over the biclusterings accepted by `accept(row_labels,
/// col_labels)`. `accept` must not depend on how labels are named.
pub fn brute_force_with(
    a: &DataMatrix,
    k: usize,
    accept: impl Fn(&[usize], &[usize]) -> bool,
) -> Result<Option<(Biclustering, f64)>> {
    let (n, m) = (a.n(), a.m());
    if k < 2 || k > n.min(m) {
        return Err(Error::InvalidArgument(format!(
            "k = {k} must lie in [2, {}]",
            n.min(m)
        )));
    }
    let combos = combinations(n, m, k);
    if combos > ENUMERATION_LIMIT {
        return Err(Error::TooLarge {
            combos,
            limit: ENUMERATION_LIMIT,
        });
    }

    let mut best: Option<(Biclustering, f64)> = None;
    let mut rows = vec![0usize; n];
    loop {
        if is_canonical_surjection(&rows, k) {
            let mut block = vec![vec![0.0; m]; k];
            let mut nr = vec![0usize; k];
            for (i, &l) in rows.iter().enumerate() {
                nr[l] += 1;
                for j in 0..m {
                    block[l][j] += a.get(i, j);
                }
            }
            let mut cols = vec![0usize; m];
            loop {
                let mut nc = vec![0usize; k];
                let mut sums = vec![0.0; k];
                for (j, &l) in cols.iter().enumerate() {
                    nc[l] += 1;
                    sums[l] += block[l][j];
                }
                if nc.iter().all(|&c| c > 0) {
                    let value: f64 = (0..k).map(|l| sums[l] / ((nr[l] * nc[l]) as f64).sqrt()).sum();
                    if best.as_ref().is_none_or(|(_, v)| value > *v) && accept(&rows, &cols) {
                        best = Some((Biclustering::new(k, rows.clone(), cols.clone()), value));
                    }
                }
                if !advance(&mut cols, k) {
                    break;
                }
            }
        }
        if !advance(&mut rows, k) {
            break;
        }
    }
    Ok(best)
}

fn advance(labels: &mut [usize], k: usize) -> bool {
    for x in labels.iter_mut().rev() {
        *x += 1;
        if *x < k {
            return true;
        }
        *x = 0;
    }
    false
}

fn is_canonical_surjection(labels: &[usize], k: usize) -> bool {
    let mut next = 0;
    for &l in labels {
        if l > next {
            return false;
        }
        if l == next {
            next += 1;
        }
    }
    next == k
}
