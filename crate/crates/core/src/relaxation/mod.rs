//! Per-node doubly nonnegative relaxation.
//!
//! A node is described by must-link groups (rows or columns forced into the
//! same bicluster, collapsed into one reduced index), cannot-link pairs of
//! reduced indices, and a pool of valid inequalities. The relaxation lives
//! on the reduced space: with `c` the group sizes of a side,
//!
//! ```text
//! max  <A_bar, X_UV>
//! s.t. <diag(c_U), X_UU> = k,   X_UU c_U = 1,
//!      <diag(c_V), X_VV> = k,   X_VV c_V = 1,
//!      X_ij = 0 on cannot-link pairs,  B(X) <= 0,  X >= 0,  X psd,
//! ```
//!
//! where `A_bar` holds the block sums of the data matrix over the groups.
//! Expanding a reduced matrix duplicates every row and column once per
//! group member.

mod admm;

use std::collections::BTreeSet;

use nalgebra::{DMatrix, DVector};

use crate::cuts::{self, Cut, CutPool};
use crate::error::{Error, Result};
use crate::instance::{validate, Biclustering, DataMatrix};
use crate::numkernel::{sym_eig, EigenPair, SymMatrix};

pub use admm::{solve_dnn, SdpSolution, SolveOptions, SolveStatus};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Side {
    U,
    V,
}

impl std::fmt::Display for Side {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Side::U => "U",
            Side::V => "V",
        })
    }
}

/// Original indices represented by each reduced index, per side.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ShrinkMap {
    groups_u: Vec<Vec<usize>>,
    groups_v: Vec<Vec<usize>>,
}

impl ShrinkMap {
    pub fn identity(n: usize, m: usize) -> Self {
        Self {
            groups_u: (0..n).map(|i| vec![i]).collect(),
            groups_v: (0..m).map(|j| vec![j]).collect(),
        }
    }

    /// Builds a map from explicit groups; each side must partition
    /// `0..len` into nonempty groups.
    pub fn from_groups(groups_u: Vec<Vec<usize>>, groups_v: Vec<Vec<usize>>) -> Result<Self> {
        for (name, groups) in [("row", &groups_u), ("column", &groups_v)] {
            let total: usize = groups.iter().map(Vec::len).sum();
            let mut seen = vec![false; total];
            for g in groups {
                if g.is_empty() {
                    return Err(Error::InvalidArgument(format!("empty {name} group")));
                }
                for &x in g {
                    if x >= total || seen[x] {
                        return Err(Error::InvalidArgument(format!(
                            "{name} groups do not partition 0..{total}"
                        )));
                    }
                    seen[x] = true;
                }
            }
        }
        let sort = |mut gs: Vec<Vec<usize>>| {
            for g in &mut gs {
                g.sort_unstable();
            }
            gs
        };
        Ok(Self {
            groups_u: sort(groups_u),
            groups_v: sort(groups_v),
        })
    }

    pub fn groups(&self, side: Side) -> &[Vec<usize>] {
        match side {
            Side::U => &self.groups_u,
            Side::V => &self.groups_v,
        }
    }

    /// Reduced size of a side.
    pub fn size(&self, side: Side) -> usize {
        self.groups(side).len()
    }

    /// Original size of a side.
    pub fn full_size(&self, side: Side) -> usize {
        self.groups(side).iter().map(Vec::len).sum()
    }

    pub fn multiplicities(&self, side: Side) -> Vec<f64> {
        self.groups(side).iter().map(|g| g.len() as f64).collect()
    }

    /// Reduced index of every original index.
    pub fn reduced_index(&self, side: Side) -> Vec<usize> {
        let mut out = vec![0; self.full_size(side)];
        for (g, members) in self.groups(side).iter().enumerate() {
            for &x in members {
                out[x] = g;
            }
        }
        out
    }

    /// Merges reduced indices `i` and `j`. The union takes the smaller
    /// position; indices above the larger one shift down by one.
    pub fn merge(&self, side: Side, i: usize, j: usize) -> Self {
        let (i, j) = if i < j { (i, j) } else { (j, i) };
        let mut out = self.clone();
        let groups = match side {
            Side::U => &mut out.groups_u,
            Side::V => &mut out.groups_v,
        };
        let moved = groups.remove(j);
        groups[i].extend(moved);
        groups[i].sort_unstable();
        out
    }
}

/// One node of the branch-and-cut tree.
#[derive(Debug, Clone)]
pub struct NodeProblem {
    pub k: usize,
    shrink: ShrinkMap,
    a_bar: DMatrix<f64>,
    c_u: Vec<f64>,
    c_v: Vec<f64>,
    cl_u: BTreeSet<(usize, usize)>,
    cl_v: BTreeSet<(usize, usize)>,
    pub cuts: CutPool,
}

/// Root node: singleton groups, no cannot-links, no cuts.
pub fn build_root(a: &DataMatrix, k: usize) -> Result<NodeProblem> {
    if k < 2 || k > a.n().min(a.m()) {
        return Err(Error::InvalidArgument(format!(
            "k = {k} must lie in [2, {}]",
            a.n().min(a.m())
        )));
    }
    Ok(NodeProblem {
        k,
        shrink: ShrinkMap::identity(a.n(), a.m()),
        a_bar: a.as_matrix().clone(),
        c_u: vec![1.0; a.n()],
        c_v: vec![1.0; a.m()],
        cl_u: BTreeSet::new(),
        cl_v: BTreeSet::new(),
        cuts: CutPool::new(),
    })
}

fn ordered(i: usize, j: usize) -> (usize, usize) {
    if i < j {
        (i, j)
    } else {
        (j, i)
    }
}

impl NodeProblem {
    /// Node with explicit must-link groups and cannot-link pairs given in
    /// reduced indices.
    pub fn with_constraints(
        a: &DataMatrix,
        k: usize,
        shrink: ShrinkMap,
        cl_u: impl IntoIterator<Item = (usize, usize)>,
        cl_v: impl IntoIterator<Item = (usize, usize)>,
    ) -> Result<Self> {
        let mut node = build_root(a, k)?;
        if shrink.full_size(Side::U) != a.n() || shrink.full_size(Side::V) != a.m() {
            return Err(Error::InvalidArgument("shrink map does not match the matrix".into()));
        }
        let (nu, nv) = (shrink.size(Side::U), shrink.size(Side::V));
        let ru = shrink.reduced_index(Side::U);
        let rv = shrink.reduced_index(Side::V);
        let mut a_bar = DMatrix::zeros(nu, nv);
        for i in 0..a.n() {
            for j in 0..a.m() {
                a_bar[(ru[i], rv[j])] += a.get(i, j);
            }
        }
        node.a_bar = a_bar;
        node.c_u = shrink.multiplicities(Side::U);
        node.c_v = shrink.multiplicities(Side::V);
        node.shrink = shrink;
        for (side, pairs, size) in [(Side::U, cl_u.into_iter().collect::<Vec<_>>(), nu), (Side::V, cl_v.into_iter().collect(), nv)] {
            for (i, j) in pairs {
                if i == j || i >= size || j >= size {
                    return Err(Error::Contradiction(format!(
                        "cannot-link ({i}, {j}) invalid on side {side}"
                    )));
                }
                node.cl_mut(side).insert(ordered(i, j));
            }
        }
        Ok(node)
    }

    pub fn shrink(&self) -> &ShrinkMap {
        &self.shrink
    }

    pub fn nu(&self) -> usize {
        self.c_u.len()
    }

    pub fn nv(&self) -> usize {
        self.c_v.len()
    }

    /// Dimension of the reduced lifted matrix.
    pub fn dim(&self) -> usize {
        self.nu() + self.nv()
    }

    /// Length of the multiplier vector `[alpha_U, y_U, alpha_V, y_V]`.
    pub fn lambda_len(&self) -> usize {
        self.dim() + 2
    }

    pub fn a_bar(&self) -> &DMatrix<f64> {
        &self.a_bar
    }

    pub fn multiplicities(&self, side: Side) -> &[f64] {
        match side {
            Side::U => &self.c_u,
            Side::V => &self.c_v,
        }
    }

    pub fn cl(&self, side: Side) -> &BTreeSet<(usize, usize)> {
        match side {
            Side::U => &self.cl_u,
            Side::V => &self.cl_v,
        }
    }

    fn cl_mut(&mut self, side: Side) -> &mut BTreeSet<(usize, usize)> {
        match side {
            Side::U => &mut self.cl_u,
            Side::V => &mut self.cl_v,
        }
    }

    pub fn is_cl(&self, side: Side, i: usize, j: usize) -> bool {
        self.cl(side).contains(&ordered(i, j))
    }

    /// Offset of a side inside the lifted matrix.
    pub fn offset(&self, side: Side) -> usize {
        match side {
            Side::U => 0,
            Side::V => self.nu(),
        }
    }

    /// Positions `(r, s)`, `r < s`, of the lifted matrix fixed to zero.
    pub fn cl_positions(&self) -> Vec<(usize, usize)> {
        let o = self.nu();
        self.cl_u
            .iter()
            .copied()
            .chain(self.cl_v.iter().map(|&(i, j)| (i + o, j + o)))
            .collect()
    }

    /// `[[0, A_bar], [A_bar^T, 0]]`.
    pub fn w_bar(&self) -> DMatrix<f64> {
        let (nu, n) = (self.nu(), self.dim());
        let mut w = DMatrix::zeros(n, n);
        w.view_mut((0, nu), (nu, self.nv())).copy_from(&self.a_bar);
        w.view_mut((nu, 0), (self.nv(), nu)).copy_from(&self.a_bar.transpose());
        w
    }

    /// Right-hand side `(k, 1, k, 1)`.
    pub fn b(&self) -> DVector<f64> {
        let mut b = DVector::from_element(self.lambda_len(), 1.0);
        b[0] = self.k as f64;
        b[self.nu() + 1] = self.k as f64;
        b
    }

    /// `0.5 <W_bar, Z>`.
    pub fn objective_of(&self, z: &DMatrix<f64>) -> f64 {
        let nu = self.nu();
        let mut s = 0.0;
        for j in 0..self.nv() {
            for i in 0..nu {
                s += self.a_bar[(i, j)] * 0.5 * (z[(i, nu + j)] + z[(nu + j, i)]);
            }
        }
        s
    }

    fn check_dim(&self, z: &DMatrix<f64>) -> Result<()> {
        if z.nrows() != self.dim() || z.ncols() != self.dim() {
            return Err(Error::InvalidArgument(format!(
                "expected a {0}x{0} matrix, got {1}x{2}",
                self.dim(),
                z.nrows(),
                z.ncols()
            )));
        }
        Ok(())
    }

    /// `A(Z)` on the symmetric part of `z`.
    pub fn apply_operator_a(&self, z: &DMatrix<f64>) -> Result<DVector<f64>> {
        self.check_dim(z)?;
        Ok(self.apply_a(z))
    }

    pub(crate) fn apply_a(&self, z: &DMatrix<f64>) -> DVector<f64> {
        let mut out = DVector::zeros(self.lambda_len());
        let mut pos = 0;
        for (c, o) in [(&self.c_u, 0), (&self.c_v, self.nu())] {
            let s = c.len();
            out[pos] = (0..s).map(|g| c[g] * z[(o + g, o + g)]).sum();
            for g in 0..s {
                let mut acc = 0.0;
                for h in 0..s {
                    acc += 0.5 * (z[(o + g, o + h)] + z[(o + h, o + g)]) * c[h];
                }
                out[pos + 1 + g] = acc;
            }
            pos += s + 1;
        }
        out
    }

    /// `A^T(lambda)`.
    pub fn adjoint_operator_a(&self, lambda: &[f64]) -> Result<DMatrix<f64>> {
        if lambda.len() != self.lambda_len() {
            return Err(Error::InvalidArgument(format!(
                "expected {} multipliers, got {}",
                self.lambda_len(),
                lambda.len()
            )));
        }
        let mut out = DMatrix::zeros(self.dim(), self.dim());
        self.add_adjoint_a(&mut out, lambda, 1.0);
        Ok(out)
    }

    /// Accumulates `scale * A^T(lambda)` into `out`.
    pub(crate) fn add_adjoint_a(&self, out: &mut DMatrix<f64>, lambda: &[f64], scale: f64) {
        let mut pos = 0;
        for (c, o) in [(&self.c_u, 0), (&self.c_v, self.nu())] {
            let s = c.len();
            let alpha = lambda[pos];
            let y = &lambda[pos + 1..pos + 1 + s];
            for h in 0..s {
                for g in 0..s {
                    out[(o + g, o + h)] += scale * 0.5 * (y[g] * c[h] + c[g] * y[h]);
                }
                out[(o + h, o + h)] += scale * alpha * c[h];
            }
            pos += s + 1;
        }
    }

    /// Constraint matrices of `A` followed by those of the pooled cuts, as
    /// lists of upper-triangle entries `(r, s, value)` of symmetric matrices.
    pub(crate) fn constraint_rows(&self) -> Vec<Vec<(usize, usize, f64)>> {
        let mut rows = Vec::with_capacity(self.lambda_len() + self.cuts.len());
        for (c, o) in [(&self.c_u, 0), (&self.c_v, self.nu())] {
            let s = c.len();
            rows.push((0..s).map(|g| (o + g, o + g, c[g])).collect());
            for g in 0..s {
                rows.push(
                    (0..s)
                        .map(|h| {
                            if h == g {
                                (o + g, o + g, c[g])
                            } else {
                                let (r, t) = ordered(g, h);
                                (o + r, o + t, 0.5 * c[h])
                            }
                        })
                        .collect(),
                );
            }
        }
        for cut in self.cuts.cuts() {
            let o = self.offset(cut.side);
            let (a, j) = (cut.anchor + o, cut.j + o);
            let entry = |r: usize, s: usize, v: f64| {
                let (r, s) = ordered(r, s);
                (r, s, v)
            };
            let mut row = vec![entry(a, j, 0.5), (a, a, -1.0)];
            if let Some(h) = cut.h {
                row.push(entry(a, h + o, 0.5));
                row.push(entry(j, h + o, -0.5));
            }
            rows.push(row);
        }
        rows
    }

    /// ML child: merges reduced indices `i` and `j` of `side`.
    pub fn shrink_child(&self, side: Side, i: usize, j: usize) -> Result<Self> {
        let size = self.shrink.size(side);
        if i == j || i >= size || j >= size {
            return Err(Error::InvalidArgument(format!(
                "cannot merge ({i}, {j}) on side {side} of size {size}"
            )));
        }
        if self.is_cl(side, i, j) {
            return Err(Error::Contradiction(format!(
                "({i}, {j}) on side {side} is cannot-link"
            )));
        }
        let (i, j) = ordered(i, j);
        let remap = |x: usize| match x.cmp(&j) {
            std::cmp::Ordering::Equal => i,
            std::cmp::Ordering::Greater => x - 1,
            std::cmp::Ordering::Less => x,
        };
        let mut child = self.clone();
        child.shrink = self.shrink.merge(side, i, j);
        let merge_vec = |c: &[f64]| {
            let mut c = c.to_vec();
            let cj = c.remove(j);
            c[i] += cj;
            c
        };
        match side {
            Side::U => {
                child.c_u = merge_vec(&self.c_u);
                let mut a = self.a_bar.clone();
                let row_j = a.row(j).into_owned();
                let mut row_i = a.row_mut(i);
                row_i += row_j;
                child.a_bar = a.remove_row(j);
            }
            Side::V => {
                child.c_v = merge_vec(&self.c_v);
                let mut a = self.a_bar.clone();
                let col_j = a.column(j).into_owned();
                let mut col_i = a.column_mut(i);
                col_i += col_j;
                child.a_bar = a.remove_column(j);
            }
        }
        let cl: BTreeSet<_> = self
            .cl(side)
            .iter()
            .map(|&(a, b)| ordered(remap(a), remap(b)))
            .collect();
        *child.cl_mut(side) = cl;
        child.cuts = self.cuts.remap_merge(side, i, j);
        Ok(child)
    }

    /// CL child: forbids reduced indices `i` and `j` of `side` from sharing
    /// a bicluster.
    pub fn cl_child(&self, side: Side, i: usize, j: usize) -> Result<Self> {
        let size = self.shrink.size(side);
        if i == j {
            return Err(Error::Contradiction(format!(
                "index {i} on side {side} is merged with itself"
            )));
        }
        if i >= size || j >= size {
            return Err(Error::InvalidArgument(format!(
                "pair ({i}, {j}) out of range on side {side}"
            )));
        }
        let mut child = self.clone();
        child.cl_mut(side).insert(ordered(i, j));
        Ok(child)
    }

    /// Full-size matrix `T^T Z_bar T`.
    pub fn expand(&self, zbar: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        self.check_dim(zbar)?;
        Ok(expand_with(&self.shrink, zbar))
    }

    /// Restriction of the lifted biclustering to the reduced space, or
    /// `None` if `b` splits a group or joins a cannot-link pair.
    pub fn lift_reduced(&self, b: &Biclustering) -> Option<DMatrix<f64>> {
        let gu = self.shrink.groups(Side::U);
        let gv = self.shrink.groups(Side::V);
        let label = |labels: &[usize], groups: &[Vec<usize>]| -> Option<Vec<usize>> {
            groups
                .iter()
                .map(|g| {
                    let l = labels[g[0]];
                    g.iter().all(|&x| labels[x] == l).then_some(l)
                })
                .collect()
        };
        let lu = label(&b.row_labels, gu)?;
        let lv = label(&b.col_labels, gv)?;
        if self.cl_u.iter().any(|&(i, j)| lu[i] == lu[j]) || self.cl_v.iter().any(|&(i, j)| lv[i] == lv[j]) {
            return None;
        }
        let full = lift_biclustering(b);
        let reps: Vec<usize> = gu
            .iter()
            .map(|g| g[0])
            .chain(gv.iter().map(|g| g[0] + b.row_labels.len()))
            .collect();
        Some(DMatrix::from_fn(reps.len(), reps.len(), |r, s| full[(reps[r], reps[s])]))
    }

    /// Whether the node admits no biclustering: a side with fewer than `k`
    /// groups, or cannot-link constraints that need more than `k` labels.
    pub fn is_infeasible(&self) -> bool {
        for side in [Side::U, Side::V] {
            let size = self.shrink.size(side);
            if size < self.k || !colorable(size, self.cl(side), self.k) {
                return true;
            }
        }
        false
    }

    /// Number of cut rows and the `B` operator applied to `z`.
    pub fn apply_cuts(&self, z: &DMatrix<f64>) -> Vec<f64> {
        cuts::apply_b(z, self.nu(), self.cuts.cuts())
    }

    pub fn cut_list(&self) -> &[Cut] {
        self.cuts.cuts()
    }

    /// Eigendecomposition of `D^(1/2) Z_bar D^(1/2)`, `D` the group sizes.
    /// Its eigenvalues are the nonzero eigenvalues of `expand(Z_bar)`.
    pub fn weighted_eig(&self, zbar: &DMatrix<f64>) -> Result<(EigenPair, Vec<f64>)> {
        self.check_dim(zbar)?;
        let root: Vec<f64> = self.c_u.iter().chain(&self.c_v).map(|c| c.sqrt()).collect();
        let n = root.len();
        let weighted = DMatrix::from_fn(n, n, |r, s| root[r] * 0.5 * (zbar[(r, s)] + zbar[(s, r)]) * root[s]);
        Ok((sym_eig(&SymMatrix::new(weighted)?)?, root))
    }

    /// Eigenvalues of `expand(Z_bar)` above `rel_tol` times the largest.
    pub fn numerical_rank(&self, zbar: &DMatrix<f64>, rel_tol: f64) -> Result<usize> {
        let (eig, _) = self.weighted_eig(zbar)?;
        let top = eig.values.last().copied().unwrap_or(0.0).max(0.0);
        Ok(eig.values.iter().filter(|&&v| v > rel_tol * top).count())
    }
}

pub(crate) fn expand_with(shrink: &ShrinkMap, zbar: &DMatrix<f64>) -> DMatrix<f64> {
    let ru = shrink.reduced_index(Side::U);
    let rv = shrink.reduced_index(Side::V);
    let nu = shrink.size(Side::U);
    let idx: Vec<usize> = ru.iter().copied().chain(rv.iter().map(|&g| g + nu)).collect();
    DMatrix::from_fn(idx.len(), idx.len(), |r, s| zbar[(idx[r], idx[s])])
}

/// Lifted matrix of a biclustering: `1/|U_j|` within row clusters,
/// `1/|V_j|` within column clusters, `1/sqrt(|U_j||V_j|)` within bicliques.
pub fn lift_biclustering(b: &Biclustering) -> DMatrix<f64> {
    let (n, m) = (b.row_labels.len(), b.col_labels.len());
    let mut nr = vec![0usize; b.k];
    let mut nc = vec![0usize; b.k];
    for &l in &b.row_labels {
        nr[l] += 1;
    }
    for &l in &b.col_labels {
        nc[l] += 1;
    }
    let labels: Vec<(Side, usize)> = b
        .row_labels
        .iter()
        .map(|&l| (Side::U, l))
        .chain(b.col_labels.iter().map(|&l| (Side::V, l)))
        .collect();
    DMatrix::from_fn(n + m, n + m, |r, s| {
        let (sr, lr) = labels[r];
        let (ss, ls) = labels[s];
        if lr != ls {
            return 0.0;
        }
        match (sr, ss) {
            (Side::U, Side::U) => 1.0 / nr[lr] as f64,
            (Side::V, Side::V) => 1.0 / nc[lr] as f64,
            _ => 1.0 / ((nr[lr] * nc[lr]) as f64).sqrt(),
        }
    })
}

/// Lifted matrix of a validated biclustering of an `n x m` instance.
pub fn lift_checked(b: &Biclustering, n: usize, m: usize) -> Result<DMatrix<f64>> {
    validate(b, n, m, b.k).map_err(Error::Validation)?;
    Ok(lift_biclustering(b))
}

/// Backtracking check that the graph on `size` vertices with edges `pairs`
/// can be colored with `k` colors. Gives up (answering yes) after a fixed
/// number of steps.
fn colorable(size: usize, pairs: &BTreeSet<(usize, usize)>, k: usize) -> bool {
    if pairs.is_empty() {
        return size >= k;
    }
    let mut adj = vec![Vec::new(); size];
    for &(i, j) in pairs {
        adj[i].push(j);
        adj[j].push(i);
    }
    // color high-degree vertices first
    let mut order: Vec<usize> = (0..size).filter(|&v| !adj[v].is_empty()).collect();
    order.sort_by_key(|&v| std::cmp::Reverse(adj[v].len()));
    let mut color = vec![usize::MAX; size];
    let mut budget = 200_000usize;

    fn go(
        pos: usize,
        order: &[usize],
        adj: &[Vec<usize>],
        color: &mut [usize],
        k: usize,
        budget: &mut usize,
    ) -> Option<bool> {
        if pos == order.len() {
            return Some(true);
        }
        if *budget == 0 {
            return None;
        }
        *budget -= 1;
        let v = order[pos];
        let used = color.iter().filter(|&&c| c != usize::MAX).max().map_or(0, |&c| c + 1);
        for c in 0..k.min(used + 1) {
            if adj[v].iter().all(|&u| color[u] != c) {
                color[v] = c;
                match go(pos + 1, order, adj, color, k, budget) {
                    Some(true) => return Some(true),
                    None => return None,
                    Some(false) => {}
                }
                color[v] = usize::MAX;
            }
        }
        Some(false)
    }

    go(0, &order, &adj, &mut color, k, &mut budget).unwrap_or(true)
}
