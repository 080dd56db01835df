//! Alternating-direction augmented Lagrangian on the dual of the node
//! relaxation.
//!
//! The relaxation is handled in minimization form with `C = -W_bar / (2 s)`
//! for a data scale `s`:
//!
//! ```text
//! min <C, X>  s.t.  A(X) = b,  B(X) + slack = 0,  slack >= 0,  X in K,  X psd
//! ```
//!
//! with `K` the nonnegative matrices vanishing on cannot-link positions.
//! The dual variables are `y` (equalities), `w <= 0` (cuts), `Z` in the dual
//! cone of `K`, and `S` psd. Each sweep minimizes the augmented Lagrangian of
//! the dual in `(y, w)`, then `(Z, r)`, then `S`, and finishes with the
//! multiplier update of `X` and the cut slacks. The linear system of the
//! `(y, w)` step does not depend on the penalty and is factored once.

use std::collections::HashMap;
use std::time::Instant;

use nalgebra::{Cholesky, DMatrix, DVector, Dyn, SymmetricEigen};

use super::{NodeProblem, ShrinkMap, Side};
use crate::cuts::{self, Cut};
use crate::error::Result;
use crate::safebound::{certified_bound, SafeBound, EIG_BOUND};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolveStatus {
    /// KKT residual below the tolerance.
    Converged,
    /// Iteration cap reached first.
    MaxIter,
    /// The certified bound fell below the requested cutoff.
    Cutoff,
    /// Deadline passed.
    TimeLimit,
}

#[derive(Debug, Clone)]
pub struct SolveOptions {
    /// Target for the relative KKT residual.
    pub tol: f64,
    pub max_iter: usize,
    /// Stop as soon as a certified bound below this value is found.
    pub cutoff: Option<f64>,
    pub deadline: Option<Instant>,
    pub initial_penalty: f64,
    /// Iterations between two certified-bound evaluations.
    pub bound_every: usize,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self {
            tol: 1e-4,
            max_iter: 20_000,
            cutoff: None,
            deadline: None,
            initial_penalty: 1.0,
            bound_every: 25,
        }
    }
}

/// Primal and dual output of [`solve_dnn`].
#[derive(Debug, Clone)]
pub struct SdpSolution {
    /// Reduced lifted matrix.
    pub zbar: DMatrix<f64>,
    /// `[alpha_U, y_U, alpha_V, y_V]`.
    pub lambda: Vec<f64>,
    /// Cut multipliers, aligned with the node's pool.
    pub t: Vec<f64>,
    /// Multiplier of `Z >= 0`, zero on cannot-link positions.
    pub q: DMatrix<f64>,
    /// Free-sign multipliers of the cannot-link equalities, zero elsewhere.
    pub cl_dual: DMatrix<f64>,
    pub kkt_residual: f64,
    /// `0.5 <W_bar, zbar>`.
    pub objective: f64,
    pub iterations: usize,
    pub status: SolveStatus,
    /// Best certified bound seen during the solve; matches the stored
    /// multipliers.
    pub bound: SafeBound,
    state: State,
}

impl SdpSolution {
    pub fn scale(&self) -> f64 {
        self.state.scale
    }
}

#[derive(Debug, Clone)]
struct State {
    shrink: ShrinkMap,
    cuts: Vec<Cut>,
    x: DMatrix<f64>,
    y: DVector<f64>,
    w: Vec<f64>,
    slack: Vec<f64>,
    z: DMatrix<f64>,
    s: DMatrix<f64>,
    mu: f64,
    scale: f64,
}

enum Linear {
    Dense(Cholesky<f64, Dyn>),
    Cg { a_block: Cholesky<f64, Dyn>, diag_b: Vec<f64> },
}

const DENSE_LIMIT: usize = 1200;

/// Gram matrix `<A_i, A_j>` of the listed constraint rows, restricted to
/// rows `0..limit`.
fn gram(rows: &[Vec<(usize, usize, f64)>], dim: usize, limit: usize) -> DMatrix<f64> {
    let mut buckets: Vec<Vec<(usize, f64)>> = vec![Vec::new(); dim * dim];
    for (idx, row) in rows.iter().take(limit).enumerate() {
        for &(r, s, c) in row {
            buckets[r * dim + s].push((idx, c));
        }
    }
    let mut m = DMatrix::zeros(limit, limit);
    for (pos, bucket) in buckets.iter().enumerate() {
        let weight = if pos / dim == pos % dim { 1.0 } else { 2.0 };
        for &(i, ci) in bucket {
            for &(j, cj) in bucket {
                m[(i, j)] += weight * ci * cj;
            }
        }
    }
    m
}

struct Ops<'a> {
    node: &'a NodeProblem,
    cuts: &'a [Cut],
    pa: usize,
    nu: usize,
}

impl Ops<'_> {
    fn apply(&self, x: &DMatrix<f64>) -> (DVector<f64>, Vec<f64>) {
        (self.node.apply_a(x), cuts::apply_b(x, self.nu, self.cuts))
    }

    fn adjoint(&self, y: &[f64], w: &[f64]) -> DMatrix<f64> {
        let n = self.node.dim();
        let mut out = DMatrix::zeros(n, n);
        self.node.add_adjoint_a(&mut out, y, 1.0);
        cuts::add_adjoint_b(&mut out, self.nu, self.cuts, w, 1.0);
        out
    }

    fn system(&self, v: &[f64]) -> Vec<f64> {
        let k = self.adjoint(&v[..self.pa], &v[self.pa..]);
        let (a, b) = self.apply(&k);
        let mut out: Vec<f64> = a.iter().copied().collect();
        out.extend(b.iter().zip(&v[self.pa..]).map(|(x, y)| x + y));
        out
    }
}

impl Linear {
    fn build(node: &NodeProblem) -> Result<Self> {
        let rows = node.constraint_rows();
        let pa = node.lambda_len();
        let p = rows.len();
        let n = node.dim();
        let singular = || crate::error::Error::InvalidArgument("singular constraint system".into());
        if p <= DENSE_LIMIT {
            let mut m = gram(&rows, n, p);
            for i in pa..p {
                m[(i, i)] += 1.0;
            }
            Cholesky::new(m).map(Linear::Dense).ok_or_else(singular)
        } else {
            let a_block = Cholesky::new(gram(&rows, n, pa)).ok_or_else(singular)?;
            let diag_b = rows[pa..]
                .iter()
                .map(|row| {
                    1.0 + row
                        .iter()
                        .map(|&(r, s, c)| if r == s { c * c } else { 2.0 * c * c })
                        .sum::<f64>()
                })
                .collect();
            Ok(Linear::Cg { a_block, diag_b })
        }
    }

    fn solve(&self, ops: &Ops, rhs: &[f64], guess: &[f64]) -> Vec<f64> {
        match self {
            Linear::Dense(ch) => ch.solve(&DVector::from_column_slice(rhs)).iter().copied().collect(),
            Linear::Cg { a_block, diag_b } => {
                let pa = ops.pa;
                let precond = |r: &[f64]| -> Vec<f64> {
                    let mut z: Vec<f64> =
                        a_block.solve(&DVector::from_column_slice(&r[..pa])).iter().copied().collect();
                    z.extend(r[pa..].iter().zip(diag_b).map(|(x, d)| x / d));
                    z
                };
                conjugate_gradient(|v| ops.system(v), precond, rhs, guess, 1e-10, 500)
            }
        }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn conjugate_gradient(
    apply: impl Fn(&[f64]) -> Vec<f64>,
    precond: impl Fn(&[f64]) -> Vec<f64>,
    rhs: &[f64],
    guess: &[f64],
    rel_tol: f64,
    max_iter: usize,
) -> Vec<f64> {
    let mut x = guess.to_vec();
    let ax = apply(&x);
    let mut r: Vec<f64> = rhs.iter().zip(&ax).map(|(b, a)| b - a).collect();
    let target = rel_tol * dot(rhs, rhs).sqrt().max(1e-300);
    let mut z = precond(&r);
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    for _ in 0..max_iter {
        if dot(&r, &r).sqrt() <= target {
            break;
        }
        let ap = apply(&p);
        let alpha = rz / dot(&p, &ap);
        for i in 0..x.len() {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        z = precond(&r);
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..p.len() {
            p[i] = z[i] + beta * p[i];
        }
    }
    x
}

/// Maps a matrix defined on the reduced indices of `from` onto those of
/// `to`, where every group of `to` is a union of groups of `from`. Entries
/// are summed (`sum = true`) or averaged with multiplicity weights.
fn regroup(from: &ShrinkMap, to: &ShrinkMap, m: &DMatrix<f64>, sum: bool) -> Option<DMatrix<f64>> {
    let mut parts: Vec<Vec<(usize, f64)>> = Vec::new();
    let mut offset_from = 0;
    for side in [Side::U, Side::V] {
        let old_index = from.reduced_index(side);
        let old_mult = from.multiplicities(side);
        if old_index.len() != to.full_size(side) {
            return None;
        }
        for g in to.groups(side) {
            let mut members: Vec<usize> = g.iter().map(|&x| old_index[x]).collect();
            members.sort_unstable();
            members.dedup();
            let total: usize = members.iter().map(|&a| old_mult[a] as usize).sum();
            if total != g.len() {
                return None;
            }
            parts.push(
                members
                    .into_iter()
                    .map(|a| (a + offset_from, old_mult[a] / g.len() as f64))
                    .collect(),
            );
        }
        offset_from += from.size(side);
    }
    let n = parts.len();
    Some(DMatrix::from_fn(n, n, |r, s| {
        let mut acc = 0.0;
        for &(a, wa) in &parts[r] {
            for &(b, wb) in &parts[s] {
                acc += if sum { m[(a, b)] } else { wa * wb * m[(a, b)] };
            }
        }
        acc
    }))
}

fn regroup_vector(from: &ShrinkMap, to: &ShrinkMap, y: &DVector<f64>) -> Option<DVector<f64>> {
    let mut out = Vec::with_capacity(to.size(Side::U) + to.size(Side::V) + 2);
    let mut pos = 0;
    for side in [Side::U, Side::V] {
        let old_index = from.reduced_index(side);
        out.push(y[pos]);
        for g in to.groups(side) {
            let mut members: Vec<usize> = g.iter().map(|&x| old_index[x]).collect();
            members.sort_unstable();
            members.dedup();
            out.push(members.iter().map(|&a| y[pos + 1 + a]).sum());
        }
        pos += from.size(side) + 1;
    }
    Some(DVector::from_vec(out))
}

fn initial_state(node: &NodeProblem, warm: Option<&SdpSolution>, mu0: f64, scale: f64) -> State {
    let n = node.dim();
    let cuts = node.cut_list().to_vec();
    let cold = || State {
        shrink: node.shrink().clone(),
        cuts: cuts.clone(),
        x: DMatrix::zeros(n, n),
        y: DVector::zeros(node.lambda_len()),
        w: vec![0.0; cuts.len()],
        slack: vec![0.0; cuts.len()],
        z: DMatrix::zeros(n, n),
        s: DMatrix::zeros(n, n),
        mu: mu0,
        scale,
    };
    let Some(warm) = warm else { return cold() };
    let old = &warm.state;
    let rescale = old.scale / scale;
    let (x, y, z, s) = if &old.shrink == node.shrink() {
        (old.x.clone(), old.y.clone(), old.z.clone(), old.s.clone())
    } else {
        match (
            regroup(&old.shrink, node.shrink(), &old.x, false),
            regroup_vector(&old.shrink, node.shrink(), &old.y),
            regroup(&old.shrink, node.shrink(), &old.z, true),
            regroup(&old.shrink, node.shrink(), &old.s, true),
        ) {
            (Some(x), Some(y), Some(z), Some(s)) => (x, y, z, s),
            _ => return cold(),
        }
    };
    let same_space = &old.shrink == node.shrink();
    let previous: HashMap<Cut, usize> = if same_space {
        old.cuts.iter().enumerate().map(|(i, c)| (*c, i)).collect()
    } else {
        HashMap::new()
    };
    let bx = cuts::apply_b(&x, node.nu(), &cuts);
    let mut w = Vec::with_capacity(cuts.len());
    let mut slack = Vec::with_capacity(cuts.len());
    for (i, c) in cuts.iter().enumerate() {
        match previous.get(c) {
            Some(&j) => {
                w.push(old.w[j] * rescale);
                slack.push(old.slack[j]);
            }
            None => {
                w.push(0.0);
                slack.push((-bx[i]).max(0.0));
            }
        }
    }
    let mut z = z * rescale;
    for (r, c) in node.cl_positions() {
        if !same_space {
            z[(r, c)] = 0.0;
            z[(c, r)] = 0.0;
        }
    }
    State {
        shrink: node.shrink().clone(),
        cuts,
        x,
        y: y * rescale,
        w,
        slack,
        z,
        s: s * rescale,
        mu: old.mu,
        scale,
    }
}

struct Certificate {
    bound: SafeBound,
    lambda: Vec<f64>,
    t: Vec<f64>,
    q: DMatrix<f64>,
    cl_dual: DMatrix<f64>,
}

fn certificate(node: &NodeProblem, st: &State, free: &[(usize, usize)]) -> Result<Certificate> {
    let sc = st.scale;
    let lambda: Vec<f64> = st.y.iter().map(|v| -sc * v).collect();
    let t: Vec<f64> = st.w.iter().map(|v| (-sc * v).max(0.0)).collect();
    let mut q = st.z.map(|v| (sc * v).max(0.0));
    let mut cl_dual = DMatrix::zeros(q.nrows(), q.ncols());
    for &(r, c) in free {
        cl_dual[(r, c)] = sc * st.z[(r, c)];
        cl_dual[(c, r)] = sc * st.z[(c, r)];
        q[(r, c)] = 0.0;
        q[(c, r)] = 0.0;
    }
    let bound = certified_bound(node, &lambda, &t, &q, Some(&cl_dual))?;
    Ok(Certificate {
        bound,
        lambda,
        t,
        q,
        cl_dual,
    })
}

/// Approximately solves the node relaxation. The returned multipliers
/// always carry a valid bound (see [`crate::safebound`]); the primal matrix
/// is accurate to about `opts.tol` when the status is `Converged`.
pub fn solve_dnn(
    node: &NodeProblem,
    warm: Option<&SdpSolution>,
    opts: &SolveOptions,
) -> Result<SdpSolution> {
    let n = node.dim();
    let nu = node.nu();
    let cut_list = node.cut_list();
    let ops = Ops {
        node,
        cuts: cut_list,
        pa: node.lambda_len(),
        nu,
    };
    let pa = ops.pa;
    let w_bar = node.w_bar();
    let scale = (0.5 * w_bar.norm()).max(1e-12);
    let c_hat = &w_bar * (-0.5 / scale);
    let b = node.b();
    let b_norm = b.norm();
    let c_norm = c_hat.norm();
    let free = node.cl_positions();
    let mut is_free = vec![false; n * n];
    for &(r, c) in &free {
        is_free[r * n + c] = true;
        is_free[c * n + r] = true;
    }

    let linear = Linear::build(node)?;
    let mut st = initial_state(node, warm, opts.initial_penalty, scale);
    let mut r_cut: Vec<f64> = st
        .w
        .iter()
        .zip(&st.slack)
        .map(|(w, s)| (-w - st.mu * s).max(0.0))
        .collect();
    let mut yw: Vec<f64> = st.y.iter().copied().chain(st.w.iter().copied()).collect();

    let mut best: Option<Certificate> = None;
    let mut status = SolveStatus::MaxIter;
    let mut kkt = f64::INFINITY;
    let mut iterations = 0;
    let mut balance = 0i32;

    for iter in 1..=opts.max_iter {
        iterations = iter;
        let mu = st.mu;

        // (y, w) step
        let g = &st.s + &st.z - &c_hat;
        let (ax, bx) = ops.apply(&st.x);
        let (ag, bg) = ops.apply(&g);
        let mut rhs = Vec::with_capacity(yw.len());
        for i in 0..pa {
            rhs.push(mu * (b[i] - ax[i]) - ag[i]);
        }
        for i in 0..cut_list.len() {
            rhs.push(-mu * (bx[i] + st.slack[i]) - bg[i] - r_cut[i]);
        }
        yw = linear.solve(&ops, &rhs, &yw);
        st.y = DVector::from_column_slice(&yw[..pa]);
        st.w = yw[pa..].to_vec();
        let h = ops.adjoint(&yw[..pa], &yw[pa..]);

        // (Z, r) step
        let mut z = -(&h + &st.s - &c_hat) - &st.x * mu;
        for (idx, v) in z.iter_mut().enumerate() {
            // column-major index
            let (r, c) = (idx % n, idx / n);
            if !is_free[r * n + c] && *v < 0.0 {
                *v = 0.0;
            }
        }
        st.z = z;
        for i in 0..cut_list.len() {
            r_cut[i] = (-st.w[i] - mu * st.slack[i]).max(0.0);
        }

        // S step and X update from one eigendecomposition
        let v = &c_hat - &h - &st.z - &st.x * mu;
        let v = (&v + v.transpose()) * 0.5;
        let eig = SymmetricEigen::new(v);
        let mut pos = eig.eigenvectors.clone();
        let mut neg = eig.eigenvectors.clone();
        for (j, &lam) in eig.eigenvalues.iter().enumerate() {
            let sp = lam.max(0.0).sqrt();
            let sn = ((-lam).max(0.0) / mu).sqrt();
            pos.column_mut(j).scale_mut(sp);
            neg.column_mut(j).scale_mut(sn);
        }
        st.s = &pos * pos.transpose();
        st.x = &neg * neg.transpose();
        for i in 0..cut_list.len() {
            st.slack[i] = (st.slack[i] + (st.w[i] + r_cut[i]) / mu).max(0.0);
        }

        // residuals
        let (ax, bx) = ops.apply(&st.x);
        let mut p2 = (ax - &b).norm_squared();
        for i in 0..cut_list.len() {
            p2 += (bx[i] + st.slack[i]).powi(2);
        }
        for c in 0..n {
            for r in 0..n {
                let x = st.x[(r, c)];
                if is_free[r * n + c] {
                    p2 += x * x;
                } else if x < 0.0 {
                    p2 += x * x;
                }
            }
        }
        let pinf = p2.sqrt() / (1.0 + b_norm);
        let resid = &h + &st.s + &st.z - &c_hat;
        let mut d2 = resid.norm_squared();
        for i in 0..cut_list.len() {
            d2 += (st.w[i] + r_cut[i]).powi(2);
        }
        let dinf = d2.sqrt() / (1.0 + c_norm);
        let pobj = c_hat.dot(&st.x);
        let dobj = b.dot(&st.y);
        let gap = (pobj - dobj).abs() / (1.0 + pobj.abs() + dobj.abs());
        kkt = pinf.max(dinf).max(gap);

        if kkt <= opts.tol {
            status = SolveStatus::Converged;
            break;
        }
        if iter % opts.bound_every == 0 {
            let cert = certificate(node, &st, &free)?;
            if best.as_ref().is_none_or(|b| cert.bound.value < b.bound.value) {
                best = Some(cert);
            }
            if let (Some(cut), Some(b)) = (opts.cutoff, best.as_ref()) {
                if b.bound.value < cut {
                    status = SolveStatus::Cutoff;
                    break;
                }
            }
        }
        if iter % 10 == 0 {
            if let Some(deadline) = opts.deadline {
                if Instant::now() >= deadline {
                    status = SolveStatus::TimeLimit;
                    break;
                }
            }
        }

        // penalty balancing
        if pinf > 4.0 * dinf {
            balance += 1;
        } else if dinf > 4.0 * pinf {
            balance -= 1;
        } else {
            balance = 0;
        }
        if balance >= 10 {
            st.mu = (st.mu * 2.0).min(1e6);
            balance = 0;
        } else if balance <= -10 {
            st.mu = (st.mu / 2.0).max(1e-6);
            balance = 0;
        }
    }

    let last = certificate(node, &st, &free)?;
    let cert = match best {
        Some(b) if b.bound.value < last.bound.value => b,
        _ => last,
    };
    let zbar = clip_spectrum(node, &st.x)?;
    Ok(SdpSolution {
        objective: node.objective_of(&zbar),
        zbar,
        lambda: cert.lambda,
        t: cert.t,
        q: cert.q,
        cl_dual: cert.cl_dual,
        kkt_residual: kkt,
        iterations,
        status,
        bound: cert.bound,
        state: st,
    })
}

/// Clips the spectrum of the expanded matrix to `[0, EIG_BOUND]`. Every
/// feasible point lies in that spectral band, so the clipped iterate is
/// never farther from the feasible set.
fn clip_spectrum(node: &NodeProblem, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let (eig, root) = node.weighted_eig(x)?;
    let n = root.len();
    let clipped: Vec<f64> = eig.values.iter().map(|v| v.clamp(0.0, EIG_BOUND)).collect();
    let v = &eig.vectors;
    let m = v * DMatrix::from_diagonal(&DVector::from_vec(clipped)) * v.transpose();
    Ok(DMatrix::from_fn(n, n, |r, s| 0.5 * (m[(r, s)] + m[(s, r)]) / (root[r] * root[s])))
}
