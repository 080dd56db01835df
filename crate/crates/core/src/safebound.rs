//! Certified upper bounds from approximate dual multipliers.
//!
//! For any `lambda`, `t >= 0` and `Q >= 0` (free on cannot-link positions,
//! where the primal is fixed to zero) set
//!
//! ```text
//! S~ = A^T(lambda) + B^T(t) - Q - W_bar / 2.
//! ```
//!
//! Every feasible `X` of the node relaxation has `lambda_max(X) <= 2`, so
//! `0.5 <W_bar, X> <= b^T lambda - 2 * (sum of the negative eigenvalues of S~)`.
//! The bound holds whatever the accuracy of the multipliers.

use nalgebra::DMatrix;

use crate::cuts;
use crate::error::{Error, Result};
use crate::numkernel::{eigenvalues, neg_sum_of};
use crate::relaxation::{NodeProblem, SdpSolution};

/// Upper bound on the largest eigenvalue of a feasible reduced matrix.
pub const EIG_BOUND: f64 = 2.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SafeBound {
    /// Certified bound on the node optimum.
    pub value: f64,
    /// Nonnegative eigenvalue correction.
    pub correction: f64,
    /// `b^T lambda`.
    pub dual_objective: f64,
}

/// Bound from the multipliers stored in `sol`.
pub fn safe_upper_bound(node: &NodeProblem, sol: &SdpSolution) -> Result<SafeBound> {
    certified_bound(node, &sol.lambda, &sol.t, &sol.q, Some(&sol.cl_dual))
}

/// Bound from raw multipliers. Negative entries of `t` and of `q` off the
/// cannot-link positions are clamped to zero; `cl_dual` contributes only on
/// cannot-link positions.
pub fn certified_bound(
    node: &NodeProblem,
    lambda: &[f64],
    t: &[f64],
    q: &DMatrix<f64>,
    cl_dual: Option<&DMatrix<f64>>,
) -> Result<SafeBound> {
    let n = node.dim();
    if t.len() != node.cuts.len() {
        return Err(Error::InvalidArgument(format!(
            "{} cut multipliers for {} cuts",
            t.len(),
            node.cuts.len()
        )));
    }
    if q.nrows() != n || q.ncols() != n {
        return Err(Error::InvalidArgument("multiplier matrix has the wrong size".into()));
    }
    let mut s = node.adjoint_operator_a(lambda)?;
    let t: Vec<f64> = t.iter().map(|&x| x.max(0.0)).collect();
    cuts::add_adjoint_b(&mut s, node.nu(), node.cut_list(), &t, 1.0);
    let mut q_eff = q.map(|x| x.max(0.0));
    if let Some(cl) = cl_dual {
        for (r, c) in node.cl_positions() {
            q_eff[(r, c)] = cl[(r, c)];
            q_eff[(c, r)] = cl[(c, r)];
        }
    }
    s -= q_eff;
    let nu = node.nu();
    for j in 0..node.nv() {
        for i in 0..nu {
            let a = 0.5 * node.a_bar()[(i, j)];
            s[(i, nu + j)] -= a;
            s[(nu + j, i)] -= a;
        }
    }
    let s = 0.5 * (&s + s.transpose());
    let neg = neg_sum_of(&eigenvalues(&s));
    let dual_objective: f64 = node.b().iter().zip(lambda).map(|(b, l)| b * l).sum();
    let correction = -EIG_BOUND * neg;
    Ok(SafeBound {
        value: dual_objective + correction,
        correction,
        dual_objective,
    })
}
