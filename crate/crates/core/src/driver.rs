//! Best-first branch-and-cut.
//!
//! Each node runs a cutting-plane loop: solve the relaxation, certify an
//! upper bound, round to update the incumbent, prune if the bound is close
//! enough to the incumbent, otherwise add violated cuts and re-solve. When
//! cuts stop paying off the node is split on its least decided pair.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::rc::Rc;
use std::time::{Duration, Instant};

use crate::branching::{any_pair, make_children, select_pair, DECIDED_TOL};
use crate::cuts::{purge, separate, SeparationConfig};
use crate::error::{Error, Result};
use crate::instance::{Biclustering, DataMatrix};
use crate::relaxation::{build_root, solve_dnn, NodeProblem, SdpSolution, Side, SolveOptions, SolveStatus};
use crate::rounding::{kmeans, match_clusters, round_reduced, DEFAULT_RESTARTS};

/// Eigenvalues of the relaxation solution above this fraction of the
/// largest count towards its rank.
pub const RANK_REL_TOL: f64 = 1e-3;

#[derive(Debug, Clone, PartialEq)]
pub struct SolverParams {
    /// Relative optimality tolerance.
    pub eps: f64,
    /// KKT residual target of each relaxation solve.
    pub sdp_tol: f64,
    /// Cut rounds stop once the bound improves by at most this fraction.
    pub cp_rel_tol: f64,
    pub max_cp_rounds: usize,
    pub max_sample: usize,
    pub max_add: usize,
    pub viol_tol: f64,
    pub slack_tol: f64,
    pub decided_tol: f64,
    pub max_sdp_iter: usize,
    pub time_limit: Option<Duration>,
    pub node_limit: Option<usize>,
    pub seed: u64,
    /// Record every node's must-link groups and cannot-link pairs in the trace.
    pub record_constraints: bool,
}

impl Default for SolverParams {
    fn default() -> Self {
        Self {
            eps: 1e-3,
            sdp_tol: 1e-4,
            cp_rel_tol: 1e-3,
            max_cp_rounds: 60,
            max_sample: 100_000,
            max_add: 10_000,
            viol_tol: 1e-4,
            slack_tol: 1e-5,
            decided_tol: DECIDED_TOL,
            max_sdp_iter: 20_000,
            time_limit: None,
            node_limit: None,
            seed: 0,
            record_constraints: false,
        }
    }
}

impl SolverParams {
    pub fn check(&self) -> Result<()> {
        let positive = [
            ("eps", self.eps),
            ("sdp_tol", self.sdp_tol),
            ("cp_rel_tol", self.cp_rel_tol),
            ("viol_tol", self.viol_tol),
            ("slack_tol", self.slack_tol),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidArgument(format!("{name} must be positive, got {v}")));
            }
        }
        if self.max_add > self.max_sample {
            return Err(Error::InvalidArgument(format!(
                "max_add ({}) exceeds max_sample ({})",
                self.max_add, self.max_sample
            )));
        }
        if self.max_add == 0 {
            return Err(Error::InvalidArgument("max_add must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Termination {
    /// Gap below `eps`.
    Optimal,
    TimeLimit,
    NodeLimit,
}

impl Termination {
    pub fn as_str(&self) -> &'static str {
        match self {
            Termination::Optimal => "optimal",
            Termination::TimeLimit => "time_limit",
            Termination::NodeLimit => "node_limit",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NodeOutcome {
    Pruned,
    Branched,
    Infeasible,
    /// Every pair decided; evaluated exactly.
    Exact,
    /// Left open by a time or node limit.
    Open,
}

/// Bounds after one relaxation solve of a node.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RoundRecord {
    /// Certified bound from this solve alone.
    pub ub: f64,
    /// Incumbent value after rounding this solve.
    pub lb: f64,
    /// Cuts in the pool during the solve.
    pub cuts: usize,
    pub sdp_iterations: usize,
    pub sdp_status: SolveStatus,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NodeRecord {
    pub id: usize,
    pub parent: Option<usize>,
    pub depth: usize,
    /// Bound used for the pruning decision (never above the parent's).
    pub ub: f64,
    pub outcome: NodeOutcome,
    pub rounds: Vec<RoundRecord>,
    pub cuts_added: usize,
    /// Original row and column indices forced together, when recorded.
    pub groups_u: Vec<Vec<usize>>,
    pub groups_v: Vec<Vec<usize>>,
    /// Cannot-link pairs as original indices, when recorded.
    pub cl_u: Vec<(usize, usize)>,
    pub cl_v: Vec<(usize, usize)>,
}

impl NodeRecord {
    /// Cut rounds performed (solves after the first).
    pub fn cp_rounds(&self) -> usize {
        self.rounds.len().saturating_sub(1)
    }
}

#[derive(Debug, Clone)]
pub struct SolveResult {
    pub best: Biclustering,
    pub lb: f64,
    pub ub: f64,
    pub gap: f64,
    /// Nodes whose relaxation was solved or evaluated.
    pub nodes: usize,
    pub cp_rounds_root: usize,
    pub wall_time: Duration,
    pub termination: Termination,
    pub trace: Vec<NodeRecord>,
}

/// `(ub - lb) / |ub|`, zero when both vanish.
pub fn relative_gap(lb: f64, ub: f64) -> f64 {
    if ub.abs() < 1e-300 {
        if (ub - lb).abs() < 1e-300 {
            0.0
        } else {
            f64::INFINITY
        }
    } else {
        ((ub - lb) / ub.abs()).max(0.0)
    }
}

struct Pending {
    id: usize,
    parent: Option<usize>,
    depth: usize,
    parent_ub: f64,
    node: NodeProblem,
    warm: Option<Rc<SdpSolution>>,
}

impl PartialEq for Pending {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Pending {}

impl PartialOrd for Pending {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Pending {
    // max-heap: larger bound first, then smaller id
    fn cmp(&self, other: &Self) -> Ordering {
        self.parent_ub
            .total_cmp(&other.parent_ub)
            .then_with(|| other.id.cmp(&self.id))
    }
}

struct Incumbent {
    best: Biclustering,
    value: f64,
}

impl Incumbent {
    fn offer(&mut self, b: Biclustering, value: f64) {
        if value > self.value {
            self.best = b;
            self.value = value;
        }
    }
}

fn prunable(ub: f64, lb: f64, eps: f64) -> bool {
    ub - lb < eps * ub.abs() || ub <= lb
}

/// Starting incumbent: k-means on the rows and on the columns of `A`.
fn initial_incumbent(a: &DataMatrix, k: usize, seed: u64) -> Result<Incumbent> {
    let rows = kmeans(a.as_matrix(), k, DEFAULT_RESTARTS, seed)?;
    let cols = kmeans(&a.as_matrix().transpose(), k, DEFAULT_RESTARTS, seed.wrapping_add(1))?;
    let (best, value) = match_clusters(a, k, &rows.labels, &cols.labels)?;
    Ok(Incumbent { best, value })
}

fn node_seed(seed: u64, id: usize, round: usize) -> u64 {
    seed ^ (id as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ (round as u64).wrapping_mul(0xD1B5_4A32_D192_ED03)
}

fn record_constraints(node: &NodeProblem, rec: &mut NodeRecord) {
    let shrink = node.shrink();
    rec.groups_u = shrink.groups(Side::U).to_vec();
    rec.groups_v = shrink.groups(Side::V).to_vec();
    let rep = |side: Side, (i, j): (usize, usize)| (shrink.groups(side)[i][0], shrink.groups(side)[j][0]);
    rec.cl_u = node.cl(Side::U).iter().map(|&p| rep(Side::U, p)).collect();
    rec.cl_v = node.cl(Side::V).iter().map(|&p| rep(Side::V, p)).collect();
}

/// Solves the biclustering problem with `k` bicliques.
pub fn solve(a: &DataMatrix, k: usize, params: &SolverParams) -> Result<SolveResult> {
    params.check()?;
    let start = Instant::now();
    let deadline = params.time_limit.map(|t| start + t);
    let root = build_root(a, k)?;
    let mut inc = initial_incumbent(a, k, params.seed)?;
    let sep = SeparationConfig {
        max_sample: params.max_sample,
        max_add: params.max_add,
        viol_tol: params.viol_tol,
    };

    let mut queue = BinaryHeap::new();
    queue.push(Pending {
        id: 0,
        parent: None,
        depth: 0,
        parent_ub: f64::INFINITY,
        node: root,
        warm: None,
    });
    let mut next_id = 1;
    let mut trace: Vec<NodeRecord> = Vec::new();
    let mut closed_ub = f64::NEG_INFINITY;
    let mut nodes = 0;
    let mut termination = Termination::Optimal;
    let mut stopped_open: Vec<f64> = Vec::new();

    while let Some(top) = queue.peek() {
        // the queue head carries the largest open bound
        if prunable(top.parent_ub.max(closed_ub), inc.value, params.eps) && top.parent_ub.is_finite() {
            break;
        }
        if deadline.is_some_and(|d| Instant::now() >= d) {
            termination = Termination::TimeLimit;
            break;
        }
        if params.node_limit.is_some_and(|l| nodes >= l) {
            termination = Termination::NodeLimit;
            break;
        }
        let Pending { id, parent, depth, parent_ub, mut node, warm } = queue.pop().expect("peeked");
        if prunable(parent_ub, inc.value, params.eps) {
            closed_ub = closed_ub.max(parent_ub.min(inc.value));
            continue;
        }
        nodes += 1;
        let mut rec = NodeRecord {
            id,
            parent,
            depth,
            ub: parent_ub,
            outcome: NodeOutcome::Open,
            rounds: Vec::new(),
            cuts_added: 0,
            groups_u: Vec::new(),
            groups_v: Vec::new(),
            cl_u: Vec::new(),
            cl_v: Vec::new(),
        };
        if params.record_constraints {
            record_constraints(&node, &mut rec);
        }

        if node.is_infeasible() {
            rec.outcome = NodeOutcome::Infeasible;
            rec.ub = f64::NEG_INFINITY;
            trace.push(rec);
            continue;
        }
        if node.nu() == k && node.nv() == k {
            let labels = |side: Side| {
                let mut out = vec![0; node.shrink().full_size(side)];
                for (g, members) in node.shrink().groups(side).iter().enumerate() {
                    for &x in members {
                        out[x] = g;
                    }
                }
                out
            };
            let (b, value) = match_clusters(a, k, &labels(Side::U), &labels(Side::V))?;
            inc.offer(b, value);
            rec.outcome = NodeOutcome::Exact;
            rec.ub = value;
            closed_ub = closed_ub.max(value);
            trace.push(rec);
            continue;
        }

        let mut warm = warm;
        let mut prev_ub: Option<f64> = None;
        let mut round = 0;
        let branch_from: Option<Rc<SdpSolution>>;
        loop {
            let opts = SolveOptions {
                tol: params.sdp_tol,
                max_iter: params.max_sdp_iter,
                cutoff: (inc.value > 0.0).then(|| inc.value / (1.0 - params.eps)),
                deadline,
                ..SolveOptions::default()
            };
            let sol = Rc::new(solve_dnn(&node, warm.as_deref(), &opts)?);
            let ub = sol.bound.value.min(parent_ub);
            let (b, value) = round_reduced(a, &node, &sol.zbar, node_seed(params.seed, id, round))?;
            inc.offer(b, value);
            rec.rounds.push(RoundRecord {
                ub: sol.bound.value,
                lb: inc.value,
                cuts: node.cuts.len(),
                sdp_iterations: sol.iterations,
                sdp_status: sol.status,
            });
            rec.ub = ub;
            if prunable(ub, inc.value, params.eps) {
                rec.outcome = NodeOutcome::Pruned;
                closed_ub = closed_ub.max(ub);
                branch_from = None;
                break;
            }
            if sol.status == SolveStatus::TimeLimit || deadline.is_some_and(|d| Instant::now() >= d) {
                rec.outcome = NodeOutcome::Open;
                stopped_open.push(ub);
                termination = Termination::TimeLimit;
                branch_from = None;
                break;
            }
            let stalled = prev_ub.is_some_and(|p| (p - ub) <= params.cp_rel_tol * p.abs());
            // a rank-k relaxation solution already encodes a biclustering,
            // so cuts have nothing left to separate it from
            let exact_recovery = node.numerical_rank(&sol.zbar, RANK_REL_TOL)? == k;
            if stalled || exact_recovery || round >= params.max_cp_rounds {
                branch_from = Some(sol);
                break;
            }
            let found = separate(&sol.zbar, node.nu(), &node.cuts, &sep, node_seed(params.seed ^ 0x5eed, id, round));
            if found.is_empty() {
                branch_from = Some(sol);
                break;
            }
            node.cuts = purge(&node.cuts, &sol.zbar, node.nu(), &sol.t, params.slack_tol);
            rec.cuts_added += node.cuts.extend(found);
            prev_ub = Some(ub);
            warm = Some(sol);
            round += 1;
        }

        if termination == Termination::TimeLimit {
            trace.push(rec);
            break;
        }
        if let Some(sol) = branch_from {
            let pair = select_pair(&node, &sol.zbar, params.decided_tol).or_else(|| any_pair(&node, &sol.zbar));
            match pair {
                Some(p) => {
                    let (ml, cl) = make_children(&node, &p)?;
                    rec.outcome = NodeOutcome::Branched;
                    for child in [ml, cl] {
                        queue.push(Pending {
                            id: next_id,
                            parent: Some(id),
                            depth: depth + 1,
                            parent_ub: rec.ub,
                            node: child,
                            warm: Some(Rc::clone(&sol)),
                        });
                        next_id += 1;
                    }
                }
                None => {
                    // no pair left to split: the bound stands as is
                    rec.outcome = NodeOutcome::Pruned;
                    closed_ub = closed_ub.max(rec.ub);
                }
            }
        }
        trace.push(rec);
    }

    let open_ub = queue
        .iter()
        .map(|p| p.parent_ub)
        .chain(stopped_open)
        .fold(f64::NEG_INFINITY, f64::max);
    let ub = open_ub.max(closed_ub).max(inc.value);
    let gap = relative_gap(inc.value, ub);
    if termination == Termination::Optimal && !(gap < params.eps) && !queue.is_empty() {
        termination = Termination::NodeLimit;
    }
    let cp_rounds_root = trace.first().map_or(0, NodeRecord::cp_rounds);
    Ok(SolveResult {
        best: inc.best,
        lb: inc.value,
        ub,
        gap,
        nodes,
        cp_rounds_root,
        wall_time: start.elapsed(),
        termination,
        trace,
    })
}

/// One line of an elbow scan.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ElbowRow {
    pub k: usize,
    pub lb: f64,
    pub ub: f64,
}

/// Root relaxation and rounding for every `k` in `k_min..=k_max`.
pub fn elbow_scan(a: &DataMatrix, k_min: usize, k_max: usize, params: &SolverParams) -> Result<Vec<ElbowRow>> {
    params.check()?;
    let limit = a.n().min(a.m());
    if k_min < 2 || k_min > k_max || k_max > limit {
        return Err(Error::InvalidArgument(format!(
            "need 2 <= k_min <= k_max <= {limit}, got {k_min}..{k_max}"
        )));
    }
    let opts = SolveOptions {
        tol: params.sdp_tol,
        max_iter: params.max_sdp_iter,
        ..SolveOptions::default()
    };
    (k_min..=k_max)
        .map(|k| {
            let node = build_root(a, k)?;
            let sol = solve_dnn(&node, None, &opts)?;
            let (_, lb) = round_reduced(a, &node, &sol.zbar, node_seed(params.seed, 0, 0))?;
            Ok(ElbowRow { k, lb, ub: sol.bound.value })
        })
        .collect()
}
