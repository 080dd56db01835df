//! Pair and triangle inequalities on the diagonal blocks of the lifted
//! matrix, and the pool that carries them through the cutting-plane loop.
//!
//! For a side block `Z` (either `Z_UU` or `Z_VV`) and distinct indices:
//!
//! * pair, anchor `i`:      `Z_ij <= Z_ii`
//! * triangle, anchor `i`:  `Z_ij + Z_ih <= Z_ii + Z_jh`
//!
//! Every lifted biclustering satisfies both families.

use std::collections::{HashMap, HashSet};

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::relaxation::Side;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum CutKind {
    PairU,
    PairV,
    TriU,
    TriV,
}

/// One inequality, in reduced indices of its side. Triangles keep
/// `j < h`, so equal cuts compare equal.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Cut {
    pub side: Side,
    pub anchor: usize,
    pub j: usize,
    pub h: Option<usize>,
}

impl Cut {
    pub fn pair(side: Side, anchor: usize, j: usize) -> Self {
        debug_assert_ne!(anchor, j);
        Self { side, anchor, j, h: None }
    }

    pub fn triangle(side: Side, anchor: usize, j: usize, h: usize) -> Self {
        debug_assert!(anchor != j && anchor != h && j != h);
        let (j, h) = if j < h { (j, h) } else { (h, j) };
        Self { side, anchor, j, h: Some(h) }
    }

    pub fn kind(&self) -> CutKind {
        match (self.side, self.h) {
            (Side::U, None) => CutKind::PairU,
            (Side::V, None) => CutKind::PairV,
            (Side::U, Some(_)) => CutKind::TriU,
            (Side::V, Some(_)) => CutKind::TriV,
        }
    }

    #[cfg(test)]
    fn max_index(&self) -> usize {
        self.anchor.max(self.j).max(self.h.unwrap_or(0))
    }

    /// Entries `(row, col, coefficient)` of the constraint matrix in the
    /// full reduced space, listing each symmetric off-diagonal position
    /// once with coefficient `c` standing for `c/2` at `(r, c)` and `(c, r)`.
    fn terms(&self, nu: usize) -> ([(usize, usize, f64); 4], usize) {
        let o = match self.side {
            Side::U => 0,
            Side::V => nu,
        };
        let (a, j) = (self.anchor + o, self.j + o);
        match self.h {
            None => ([(a, j, 1.0), (a, a, -1.0), (0, 0, 0.0), (0, 0, 0.0)], 2),
            Some(h) => {
                let h = h + o;
                ([(a, j, 1.0), (a, h, 1.0), (a, a, -1.0), (j, h, -1.0)], 4)
            }
        }
    }
}

/// Violation of `c` by the side block `z`. Positive means violated.
pub fn violation(z: &DMatrix<f64>, c: &Cut) -> f64 {
    let sym = |r: usize, s: usize| 0.5 * (z[(r, s)] + z[(s, r)]);
    let (i, j) = (c.anchor, c.j);
    match c.h {
        None => sym(i, j) - z[(i, i)],
        Some(h) => sym(i, j) + sym(i, h) - z[(i, i)] - sym(j, h),
    }
}

/// Violation of `c` evaluated on the full reduced matrix `z` whose first
/// `nu` indices are the row side.
pub fn violation_full(z: &DMatrix<f64>, nu: usize, c: &Cut) -> f64 {
    let (terms, len) = c.terms(nu);
    terms[..len]
        .iter()
        .map(|&(r, s, w)| if r == s { w * z[(r, r)] } else { w * 0.5 * (z[(r, s)] + z[(s, r)]) })
        .sum()
}

/// `B(Z)`: one violation per cut.
pub fn apply_b(z: &DMatrix<f64>, nu: usize, cuts: &[Cut]) -> Vec<f64> {
    cuts.iter().map(|c| violation_full(z, nu, c)).collect()
}

/// Accumulates `scale * B^T(t)` into `out`.
pub fn add_adjoint_b(out: &mut DMatrix<f64>, nu: usize, cuts: &[Cut], t: &[f64], scale: f64) {
    for (c, &tc) in cuts.iter().zip(t) {
        if tc == 0.0 {
            continue;
        }
        let (terms, len) = c.terms(nu);
        for &(r, s, w) in &terms[..len] {
            if r == s {
                out[(r, r)] += scale * tc * w;
            } else {
                let v = 0.5 * scale * tc * w;
                out[(r, s)] += v;
                out[(s, r)] += v;
            }
        }
    }
}

/// `B^T(t)` as a dense `dim x dim` matrix.
pub fn adjoint_b(dim: usize, nu: usize, cuts: &[Cut], t: &[f64]) -> DMatrix<f64> {
    let mut out = DMatrix::zeros(dim, dim);
    add_adjoint_b(&mut out, nu, cuts, t, 1.0);
    out
}

/// Ordered list of distinct cuts with the slack each had at the last solve.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct CutPool {
    cuts: Vec<Cut>,
    slack: Vec<f64>,
    index: HashSet<Cut>,
}

impl CutPool {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_cuts(cuts: impl IntoIterator<Item = Cut>) -> Self {
        let mut pool = Self::new();
        pool.extend(cuts);
        pool
    }

    pub fn cuts(&self) -> &[Cut] {
        &self.cuts
    }

    pub fn slack(&self) -> &[f64] {
        &self.slack
    }

    pub fn len(&self) -> usize {
        self.cuts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cuts.is_empty()
    }

    pub fn contains(&self, c: &Cut) -> bool {
        self.index.contains(c)
    }

    /// Appends the cuts not already present; returns how many were new.
    pub fn extend(&mut self, cuts: impl IntoIterator<Item = Cut>) -> usize {
        let mut added = 0;
        for c in cuts {
            if self.index.insert(c) {
                self.cuts.push(c);
                self.slack.push(0.0);
                added += 1;
            }
        }
        added
    }

    /// Records `-violation` of every cut against `z`.
    pub fn evaluate(&mut self, z: &DMatrix<f64>, nu: usize) {
        self.slack = self.cuts.iter().map(|c| -violation_full(z, nu, c)).collect();
    }

    /// Rewrites the pool after merging reduced indices `i < j` on `side`:
    /// index `j` becomes `i` and every index above `j` shifts down by one.
    /// Pair cuts collapsing onto one index are dropped; triangles whose
    /// anchor merges with another index are tautologies and are dropped;
    /// triangles whose two non-anchor indices merge become pair cuts.
    pub fn remap_merge(&self, side: Side, i: usize, j: usize) -> CutPool {
        let (i, j) = if i < j { (i, j) } else { (j, i) };
        let f = |x: usize| match x.cmp(&j) {
            std::cmp::Ordering::Equal => i,
            std::cmp::Ordering::Greater => x - 1,
            std::cmp::Ordering::Less => x,
        };
        let mut out = CutPool::new();
        for c in &self.cuts {
            if c.side != side {
                out.extend([*c]);
                continue;
            }
            let (a, b) = (f(c.anchor), f(c.j));
            let mapped = match c.h.map(f) {
                None => (a != b).then(|| Cut::pair(side, a, b)),
                Some(h) => {
                    if a == b || a == h {
                        None
                    } else if b == h {
                        Some(Cut::pair(side, a, b))
                    } else {
                        Some(Cut::triangle(side, a, b, h))
                    }
                }
            };
            if let Some(m) = mapped {
                out.extend([m]);
            }
        }
        out
    }
}

/// Knobs of the separation routine.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SeparationConfig {
    /// Candidate cuts examined per call.
    pub max_sample: usize,
    /// Violated cuts returned per call.
    pub max_add: usize,
    /// A cut counts as violated when its violation exceeds this.
    pub viol_tol: f64,
}

impl Default for SeparationConfig {
    fn default() -> Self {
        Self {
            max_sample: 100_000,
            max_add: 10_000,
            viol_tol: 1e-4,
        }
    }
}

fn pair_count(s: usize) -> u128 {
    (s as u128) * (s.saturating_sub(1) as u128)
}

fn triangle_count(s: usize) -> u128 {
    let s = s as u128;
    if s < 3 {
        0
    } else {
        s * (s - 1) * (s - 2) / 2
    }
}

/// Enumerates every pair and triangle cut of both sides.
fn for_each_cut(nu: usize, nv: usize, mut f: impl FnMut(Cut)) {
    for (side, size) in [(Side::U, nu), (Side::V, nv)] {
        for a in 0..size {
            for j in 0..size {
                if j != a {
                    f(Cut::pair(side, a, j));
                }
            }
        }
        for a in 0..size {
            for j in 0..size {
                if j == a {
                    continue;
                }
                for h in (j + 1)..size {
                    if h != a {
                        f(Cut::triangle(side, a, j, h));
                    }
                }
            }
        }
    }
}

fn finish(mut found: Vec<(f64, Cut)>, max_add: usize) -> Vec<Cut> {
    found.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
    found.truncate(max_add);
    found.into_iter().map(|(_, c)| c).collect()
}

/// Exhaustive separation: every violated cut not in `pool`, most violated
/// first, at most `max_add`.
pub fn separate_exact(
    z: &DMatrix<f64>,
    nu: usize,
    pool: &CutPool,
    viol_tol: f64,
    max_add: usize,
) -> Vec<Cut> {
    let nv = z.nrows() - nu;
    let mut found = Vec::new();
    for_each_cut(nu, nv, |c| {
        let v = violation_full(z, nu, &c);
        if v > viol_tol && !pool.contains(&c) {
            found.push((v, c));
        }
    });
    finish(found, max_add)
}

/// Randomized separation. Draws up to `max_sample` candidates uniformly
/// from all pair and triangle cuts of both sides and returns the violated
/// ones not already pooled, most violated first, at most `max_add`. When
/// the whole family has at most `max_sample` members it is enumerated
/// instead, which makes the result exact.
pub fn separate(
    z: &DMatrix<f64>,
    nu: usize,
    pool: &CutPool,
    cfg: &SeparationConfig,
    seed: u64,
) -> Vec<Cut> {
    let nv = z.nrows() - nu;
    let counts = [
        (Side::U, pair_count(nu), triangle_count(nu), nu),
        (Side::V, pair_count(nv), triangle_count(nv), nv),
    ];
    let population: u128 = counts.iter().map(|c| c.1 + c.2).sum();
    if population == 0 {
        return Vec::new();
    }
    if population <= cfg.max_sample as u128 {
        return separate_exact(z, nu, pool, cfg.viol_tol, cfg.max_add);
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut seen: HashMap<Cut, f64> = HashMap::new();
    let mut found = Vec::new();
    for _ in 0..cfg.max_sample {
        let mut r = rng.random_range(0..population);
        let mut pick = None;
        for &(side, pairs, tris, size) in &counts {
            if r < pairs {
                let a = rng.random_range(0..size);
                let mut j = rng.random_range(0..size - 1);
                if j >= a {
                    j += 1;
                }
                pick = Some(Cut::pair(side, a, j));
                break;
            }
            r -= pairs;
            if r < tris {
                let a = rng.random_range(0..size);
                let mut j = rng.random_range(0..size - 1);
                if j >= a {
                    j += 1;
                }
                let mut h = rng.random_range(0..size - 2);
                let (lo, hi) = if a < j { (a, j) } else { (j, a) };
                if h >= lo {
                    h += 1;
                }
                if h >= hi {
                    h += 1;
                }
                pick = Some(Cut::triangle(side, a, j, h));
                break;
            }
            r -= tris;
        }
        let c = pick.expect("sample index within population");
        if seen.contains_key(&c) || pool.contains(&c) {
            continue;
        }
        let v = violation_full(z, nu, &c);
        seen.insert(c, v);
        if v > cfg.viol_tol {
            found.push((v, c));
        }
    }
    finish(found, cfg.max_add)
}

/// Drops cuts that are slack by more than `slack_tol` and carry a
/// multiplier below `1e-8`. `t` is aligned with the pool order.
pub fn purge(pool: &CutPool, z: &DMatrix<f64>, nu: usize, t: &[f64], slack_tol: f64) -> CutPool {
    let mut out = CutPool::new();
    for (idx, c) in pool.cuts.iter().enumerate() {
        let slack = -violation_full(z, nu, c);
        let mult = t.get(idx).copied().unwrap_or(0.0);
        if slack > slack_tol && mult < 1e-8 {
            continue;
        }
        out.cuts.push(*c);
        out.slack.push(slack);
        out.index.insert(*c);
    }
    out
}

/// Whether `c` refers only to indices below the side sizes.
#[cfg(test)]
fn in_range(c: &Cut, nu: usize, nv: usize) -> bool {
    let size = match c.side {
        Side::U => nu,
        Side::V => nv,
    };
    c.max_index() < size
}
