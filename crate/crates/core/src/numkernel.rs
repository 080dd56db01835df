//! Dense symmetric kernels: eigendecomposition, PSD and nonnegative
//! projections, and sums of negative eigenvalues.
//!
//! The eigensolver is nalgebra's Householder tridiagonalization followed by
//! implicit symmetric QR; eigenvalues are returned in ascending order.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};

/// Eigenvalues below this count as negative in [`neg_eig_sum`].
pub const NEG_EIG_THRESHOLD: f64 = -1e-12;

/// Dense real symmetric matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct SymMatrix(DMatrix<f64>);

impl SymMatrix {
    /// Wraps `m` after checking squareness, finiteness and symmetry
    /// (relative tolerance `1e-12`).
    pub fn new(m: DMatrix<f64>) -> Result<Self> {
        if m.nrows() != m.ncols() {
            return Err(Error::InvalidArgument(format!(
                "symmetric matrix must be square, got {}x{}",
                m.nrows(),
                m.ncols()
            )));
        }
        if m.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidArgument("non-finite matrix entry".into()));
        }
        let scale = 1.0 + m.amax();
        let n = m.nrows();
        for i in 0..n {
            for j in (i + 1)..n {
                if (m[(i, j)] - m[(j, i)]).abs() > 1e-12 * scale {
                    return Err(Error::InvalidArgument(format!(
                        "matrix not symmetric at ({i}, {j})"
                    )));
                }
            }
        }
        Ok(Self(m))
    }

    /// Wraps `(m + m^T) / 2`.
    pub fn symmetrized(m: &DMatrix<f64>) -> Result<Self> {
        if m.nrows() != m.ncols() {
            return Err(Error::InvalidArgument("matrix must be square".into()));
        }
        Self::new((m + m.transpose()) * 0.5)
    }

    pub fn identity(dim: usize) -> Self {
        Self(DMatrix::identity(dim, dim))
    }

    pub fn from_diagonal(d: &[f64]) -> Self {
        Self(DMatrix::from_diagonal(&DVector::from_column_slice(d)))
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn as_matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.0
    }

    pub fn trace(&self) -> f64 {
        self.0.trace()
    }
}

impl std::ops::Index<(usize, usize)> for SymMatrix {
    type Output = f64;
    fn index(&self, idx: (usize, usize)) -> &f64 {
        &self.0[idx]
    }
}

/// Spectral decomposition `S = V diag(values) V^T`.
#[derive(Debug, Clone)]
pub struct EigenPair {
    /// Ascending.
    pub values: Vec<f64>,
    /// Column `i` is the eigenvector of `values[i]`.
    pub vectors: DMatrix<f64>,
}

pub fn sym_eig(s: &SymMatrix) -> Result<EigenPair> {
    if s.0.iter().any(|x| !x.is_finite()) {
        return Err(Error::InvalidArgument("non-finite matrix entry".into()));
    }
    Ok(eig_sorted(&s.0))
}

fn eig_sorted(m: &DMatrix<f64>) -> EigenPair {
    let n = m.nrows();
    if n == 0 {
        return EigenPair {
            values: Vec::new(),
            vectors: DMatrix::zeros(0, 0),
        };
    }
    let eig = SymmetricEigen::new(m.clone());
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let mut vectors = DMatrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        vectors.set_column(dst, &eig.eigenvectors.column(src));
    }
    EigenPair { values, vectors }
}

/// Eigenvalues only, ascending.
pub(crate) fn eigenvalues(m: &DMatrix<f64>) -> Vec<f64> {
    if m.nrows() == 0 {
        return Vec::new();
    }
    let mut v: Vec<f64> = m.clone().symmetric_eigenvalues().iter().copied().collect();
    v.sort_by(f64::total_cmp);
    v
}

/// Nearest PSD matrix in Frobenius norm.
pub fn project_psd(s: &SymMatrix) -> Result<SymMatrix> {
    if s.0.iter().any(|x| !x.is_finite()) {
        return Err(Error::InvalidArgument("non-finite matrix entry".into()));
    }
    Ok(SymMatrix(psd_part(&s.0)))
}

/// `V diag(max(values, 0)) V^T` for a symmetric `m`.
pub(crate) fn psd_part(m: &DMatrix<f64>) -> DMatrix<f64> {
    let n = m.nrows();
    if n == 0 {
        return DMatrix::zeros(0, 0);
    }
    let eig = SymmetricEigen::new(m.clone());
    let pos: Vec<usize> = (0..n).filter(|&i| eig.eigenvalues[i] > 0.0).collect();
    if pos.is_empty() {
        return DMatrix::zeros(n, n);
    }
    let mut scaled = DMatrix::zeros(n, pos.len());
    let mut plain = DMatrix::zeros(n, pos.len());
    for (c, &i) in pos.iter().enumerate() {
        let col = eig.eigenvectors.column(i);
        plain.set_column(c, &col);
        scaled.set_column(c, &(col * eig.eigenvalues[i]));
    }
    let out = scaled * plain.transpose();
    (&out + out.transpose()) * 0.5
}

/// Sum of the eigenvalues strictly below [`NEG_EIG_THRESHOLD`]; `0` for PSD
/// input.
pub fn neg_eig_sum(s: &SymMatrix) -> Result<f64> {
    if s.0.iter().any(|x| !x.is_finite()) {
        return Err(Error::InvalidArgument("non-finite matrix entry".into()));
    }
    Ok(neg_sum_of(&eigenvalues(&s.0)))
}

pub(crate) fn neg_sum_of(values: &[f64]) -> f64 {
    values.iter().filter(|&&v| v < NEG_EIG_THRESHOLD).sum()
}

/// Entrywise `max(x, 0)`.
pub fn project_nonneg(m: &DMatrix<f64>) -> DMatrix<f64> {
    m.map(|x| x.max(0.0))
}

/// Largest eigenvalue, `-inf` for an empty matrix.
pub fn lambda_max(s: &SymMatrix) -> f64 {
    eigenvalues(&s.0).last().copied().unwrap_or(f64::NEG_INFINITY)
}

pub fn lambda_min(s: &SymMatrix) -> f64 {
    eigenvalues(&s.0).first().copied().unwrap_or(f64::INFINITY)
}
