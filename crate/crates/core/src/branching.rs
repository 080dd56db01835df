//! Choosing the least decided pair and splitting a node on it.
//!
//! For a pair `i < j` on one side, `min(Z_ij, Z_ii - Z_ij)` is zero when the
//! relaxation already puts the two in different clusters (`Z_ij = 0`) or in
//! the same cluster (`Z_ij = Z_ii`). Scores are scaled by the full side size
//! so that row and column pairs compare.

use nalgebra::DMatrix;

use crate::error::Result;
use crate::relaxation::{NodeProblem, Side};

pub const DECIDED_TOL: f64 = 1e-4;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BranchPair {
    pub side: Side,
    pub i: usize,
    pub j: usize,
    pub score: f64,
}

fn scan(node: &NodeProblem, zbar: &DMatrix<f64>, mut visit: impl FnMut(BranchPair)) {
    for side in [Side::U, Side::V] {
        let o = node.offset(side);
        let size = node.shrink().size(side);
        let scale = node.shrink().full_size(side) as f64;
        for i in 0..size {
            for j in (i + 1)..size {
                if node.is_cl(side, i, j) {
                    continue;
                }
                let zij = 0.5 * (zbar[(o + i, o + j)] + zbar[(o + j, o + i)]);
                let zii = zbar[(o + i, o + i)];
                let score = (scale * zij.min(zii - zij)).max(0.0);
                visit(BranchPair { side, i, j, score });
            }
        }
    }
}

/// Highest scoring pair above `decided_tol`. Ties go to the row side, then
/// to the lexicographically smallest pair.
pub fn select_pair(node: &NodeProblem, zbar: &DMatrix<f64>, decided_tol: f64) -> Option<BranchPair> {
    let mut best: Option<BranchPair> = None;
    scan(node, zbar, |p| {
        if p.score > decided_tol && best.is_none_or(|b| p.score > b.score) {
            best = Some(p);
        }
    });
    best
}

/// Highest scoring pair that is not cannot-link, whatever its score.
pub fn any_pair(node: &NodeProblem, zbar: &DMatrix<f64>) -> Option<BranchPair> {
    let mut best: Option<BranchPair> = None;
    scan(node, zbar, |p| {
        if best.is_none_or(|b| p.score > b.score) {
            best = Some(p);
        }
    });
    best
}

/// `(must-link child, cannot-link child)`.
pub fn make_children(node: &NodeProblem, p: &BranchPair) -> Result<(NodeProblem, NodeProblem)> {
    Ok((node.shrink_child(p.side, p.i, p.j)?, node.cl_child(p.side, p.i, p.j)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instance::{Biclustering, DataMatrix};
    use crate::relaxation::{build_root, lift_biclustering};

    fn node(n: usize, m: usize) -> NodeProblem {
        let a = DataMatrix::from_row_major(n, m, &vec![1.0; n * m]).unwrap();
        build_root(&a, 2).unwrap()
    }

    #[test]
    fn integral_solution_has_no_candidate() {
        let b = Biclustering::new(2, vec![0, 1, 0], vec![1, 0, 1]);
        assert!(select_pair(&node(3, 3), &lift_biclustering(&b), DECIDED_TOL).is_none());
    }

    #[test]
    fn score_arithmetic() {
        let nd = node(2, 2);
        let mut z = DMatrix::zeros(4, 4);
        z[(0, 0)] = 0.5;
        z[(1, 1)] = 0.5;
        z[(0, 1)] = 0.25;
        z[(1, 0)] = 0.25;
        let p = select_pair(&nd, &z, DECIDED_TOL).unwrap();
        assert_eq!((p.side, p.i, p.j), (Side::U, 0, 1));
        assert!((p.score - 0.5).abs() < 1e-15);
    }

    fn uniform_blocks(nd: &NodeProblem, diag: f64, off: f64) -> DMatrix<f64> {
        let n = nd.dim();
        let mut z = DMatrix::zeros(n, n);
        for (o, s) in [(0, nd.nu()), (nd.nu(), nd.nv())] {
            for i in 0..s {
                for j in 0..s {
                    z[(o + i, o + j)] = if i == j { diag } else { off };
                }
            }
        }
        z
    }

    #[test]
    fn ties_prefer_rows_then_lexicographic() {
        let nd = node(2, 2);
        let p = select_pair(&nd, &uniform_blocks(&nd, 0.5, 0.25), DECIDED_TOL).unwrap();
        assert_eq!((p.side, p.i, p.j), (Side::U, 0, 1));

        let nd = node(3, 3);
        let p = select_pair(&nd, &uniform_blocks(&nd, 0.5, 0.2), DECIDED_TOL).unwrap();
        assert_eq!((p.side, p.i, p.j), (Side::U, 0, 1));
    }

    #[test]
    fn children_sizes() {
        let nd = node(3, 3);
        let p = BranchPair { side: Side::U, i: 0, j: 2, score: 1.0 };
        let (ml, cl) = make_children(&nd, &p).unwrap();
        assert_eq!(ml.nu(), 2);
        assert!(cl.is_cl(Side::U, 0, 2));
    }
}
