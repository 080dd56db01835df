//! Instances, solutions and the planted-biclustering generator.
//!
//! A [`DataMatrix`] holds the edge weights of the complete bipartite graph
//! `K_{n,m}`: row `i` is vertex `u_i`, column `j` is vertex `v_j`. A
//! [`Biclustering`] assigns every row and every column one of `k` labels;
//! rows and columns sharing label `j` form biclique `j`.

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result, Violation};

/// Dense `n x m` affinity matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct DataMatrix {
    data: DMatrix<f64>,
}

impl DataMatrix {
    /// Builds a matrix from row-major values.
    pub fn from_row_major(n: usize, m: usize, values: &[f64]) -> Result<Self> {
        if n == 0 || m == 0 {
            return Err(Error::InvalidArgument(format!(
                "matrix must be at least 1x1, got {n}x{m}"
            )));
        }
        if values.len() != n * m {
            return Err(Error::InvalidArgument(format!(
                "expected {} values for a {n}x{m} matrix, got {}",
                n * m,
                values.len()
            )));
        }
        Self::new(DMatrix::from_row_slice(n, m, values))
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        let m = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != m) {
            return Err(Error::InvalidArgument("ragged rows".into()));
        }
        let flat: Vec<f64> = rows.iter().flatten().copied().collect();
        Self::from_row_major(n, m, &flat)
    }

    pub fn new(data: DMatrix<f64>) -> Result<Self> {
        if data.nrows() == 0 || data.ncols() == 0 {
            return Err(Error::InvalidArgument("matrix must be at least 1x1".into()));
        }
        if let Some(pos) = data.iter().position(|x| !x.is_finite()) {
            let (i, j) = (pos % data.nrows(), pos / data.nrows());
            return Err(Error::InvalidArgument(format!(
                "non-finite entry at ({i}, {j})"
            )));
        }
        Ok(Self { data })
    }

    #[inline]
    pub fn n(&self) -> usize {
        self.data.nrows()
    }

    #[inline]
    pub fn m(&self) -> usize {
        self.data.ncols()
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[(i, j)]
    }

    pub fn as_matrix(&self) -> &DMatrix<f64> {
        &self.data
    }

    /// `c * A`.
    pub fn scaled(&self, c: f64) -> Result<Self> {
        Self::new(&self.data * c)
    }
}

/// `k` disjoint bicliques covering every row and column.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Biclustering {
    pub k: usize,
    pub row_labels: Vec<usize>,
    pub col_labels: Vec<usize>,
}

impl Biclustering {
    pub fn new(k: usize, row_labels: Vec<usize>, col_labels: Vec<usize>) -> Self {
        Self {
            k,
            row_labels,
            col_labels,
        }
    }

    /// Members of biclique `j` on the row side.
    pub fn rows_of(&self, j: usize) -> Vec<usize> {
        members(&self.row_labels, j)
    }

    pub fn cols_of(&self, j: usize) -> Vec<usize> {
        members(&self.col_labels, j)
    }

    /// Relabels so that labels appear in order of first occurrence among
    /// the rows. Two biclusterings are equal up to relabeling iff their
    /// canonical forms are equal.
    pub fn canonical(&self) -> Self {
        let mut map = vec![usize::MAX; self.k];
        let mut next = 0;
        for &l in self.row_labels.iter().chain(self.col_labels.iter()) {
            if l < self.k && map[l] == usize::MAX {
                map[l] = next;
                next += 1;
            }
        }
        let relabel = |l: usize| if l < self.k { map[l] } else { l };
        Self {
            k: self.k,
            row_labels: self.row_labels.iter().map(|&l| relabel(l)).collect(),
            col_labels: self.col_labels.iter().map(|&l| relabel(l)).collect(),
        }
    }
}

fn members(labels: &[usize], j: usize) -> Vec<usize> {
    labels
        .iter()
        .enumerate()
        .filter_map(|(i, &l)| (l == j).then_some(i))
        .collect()
}

/// Parameters of a planted-biclustering instance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlantedSpec {
    pub n: usize,
    pub m: usize,
    pub k: usize,
    pub sigma: f64,
    pub seed: u64,
}

impl PlantedSpec {
    /// `{n}_{m}_{k}_{sigma}`.
    pub fn name(&self) -> String {
        format!("{}_{}_{}_{}", self.n, self.m, self.k, self.sigma)
    }
}

/// Total weight of the induced biclique divided by `sqrt(|rows| |cols|)`.
pub fn density(a: &DataMatrix, rows: &[usize], cols: &[usize]) -> Result<f64> {
    if rows.is_empty() || cols.is_empty() {
        return Err(Error::InvalidArgument(
            "density is undefined for an empty side".into(),
        ));
    }
    if let Some(&i) = rows.iter().find(|&&i| i >= a.n()) {
        return Err(Error::InvalidArgument(format!("row index {i} out of range")));
    }
    if let Some(&j) = cols.iter().find(|&&j| j >= a.m()) {
        return Err(Error::InvalidArgument(format!("column index {j} out of range")));
    }
    let mut total = 0.0;
    for &i in rows {
        for &j in cols {
            total += a.get(i, j);
        }
    }
    Ok(total / ((rows.len() * cols.len()) as f64).sqrt())
}

/// Sum of the densities of the `k` bicliques.
pub fn objective(a: &DataMatrix, b: &Biclustering) -> Result<f64> {
    validate(b, a.n(), a.m(), b.k).map_err(Error::Validation)?;
    Ok(objective_unchecked(a, b.k, &b.row_labels, &b.col_labels))
}

/// Objective for label arrays already known to be valid.
pub(crate) fn objective_unchecked(
    a: &DataMatrix,
    k: usize,
    row_labels: &[usize],
    col_labels: &[usize],
) -> f64 {
    let mut block = vec![0.0; k];
    let mut nr = vec![0usize; k];
    let mut nc = vec![0usize; k];
    for &l in row_labels {
        nr[l] += 1;
    }
    for &l in col_labels {
        nc[l] += 1;
    }
    for (i, &li) in row_labels.iter().enumerate() {
        for (j, &lj) in col_labels.iter().enumerate() {
            if li == lj {
                block[li] += a.get(i, j);
            }
        }
    }
    (0..k)
        .map(|j| block[j] / ((nr[j] * nc[j]) as f64).sqrt())
        .sum()
}

/// Checks every invariant of `b` against the dimensions `(n, m)` and `k`.
pub fn validate(
    b: &Biclustering,
    n: usize,
    m: usize,
    k: usize,
) -> std::result::Result<(), Vec<Violation>> {
    let mut out = Vec::new();
    if k < 2 || k > n.min(m) || b.k != k {
        out.push(Violation::BadK { k: b.k, n, m });
    }
    if b.row_labels.len() != n {
        out.push(Violation::RowLength {
            expected: n,
            found: b.row_labels.len(),
        });
    }
    if b.col_labels.len() != m {
        out.push(Violation::ColLength {
            expected: m,
            found: b.col_labels.len(),
        });
    }
    let mut row_seen = vec![false; k];
    let mut col_seen = vec![false; k];
    for (index, &label) in b.row_labels.iter().enumerate() {
        if label >= k {
            out.push(Violation::RowLabelOutOfRange { index, label });
        } else {
            row_seen[label] = true;
        }
    }
    for (index, &label) in b.col_labels.iter().enumerate() {
        if label >= k {
            out.push(Violation::ColLabelOutOfRange { index, label });
        } else {
            col_seen[label] = true;
        }
    }
    for j in 0..k {
        if !row_seen[j] {
            out.push(Violation::EmptyRowCluster(j));
        }
        if !col_seen[j] {
            out.push(Violation::EmptyColCluster(j));
        }
    }
    if out.is_empty() {
        Ok(())
    } else {
        Err(out)
    }
}

// Independent ChaCha streams per region of the generator, so that changing
// how one region is drawn never shifts the others.
const STREAM_ROW_PERM: u64 = 1;
const STREAM_COL_PERM: u64 = 2;
const STREAM_SIGNAL: u64 = 3;
const STREAM_NOISE: u64 = 4;

fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

/// Near-equal contiguous block labels, shuffled.
fn planted_labels(len: usize, k: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
    let base = len / k;
    let extra = len % k;
    let mut labels = Vec::with_capacity(len);
    for j in 0..k {
        let size = base + usize::from(j < extra);
        labels.extend(std::iter::repeat_n(j, size));
    }
    labels.shuffle(rng);
    labels
}

/// Samples a planted instance: in-block entries `Uniform[0, 1]`, off-block
/// entries `0`, then `N(0.5, sigma^2)` noise on every entry.
///
/// Uses ChaCha8 with one stream per region; the output is a pure function
/// of `spec` on every platform.
pub fn generate_planted(spec: &PlantedSpec) -> Result<(DataMatrix, Biclustering)> {
    let PlantedSpec { n, m, k, sigma, seed } = *spec;
    if n == 0 || m == 0 {
        return Err(Error::InvalidArgument("n and m must be positive".into()));
    }
    if k < 2 || k > n.min(m) {
        return Err(Error::InvalidArgument(format!(
            "k = {k} must lie in [2, min(n, m)] = [2, {}]",
            n.min(m)
        )));
    }
    if !(sigma >= 0.0 && sigma.is_finite()) {
        return Err(Error::InvalidArgument(format!("sigma = {sigma} must be >= 0")));
    }
    let row_labels = planted_labels(n, k, &mut stream(seed, STREAM_ROW_PERM));
    let col_labels = planted_labels(m, k, &mut stream(seed, STREAM_COL_PERM));

    let mut signal = stream(seed, STREAM_SIGNAL);
    let mut noise_rng = stream(seed, STREAM_NOISE);
    let noise = Normal::new(0.5, sigma)
        .map_err(|e| Error::InvalidArgument(format!("noise distribution: {e}")))?;

    let mut values = Vec::with_capacity(n * m);
    for &li in &row_labels {
        for &lj in &col_labels {
            // one uniform per entry keeps the stream layout shape-independent
            let u: f64 = signal.random();
            let base = if li == lj { u } else { 0.0 };
            values.push(base + noise.sample(&mut noise_rng));
        }
    }
    let a = DataMatrix::from_row_major(n, m, &values)?;
    Ok((a, Biclustering::new(k, row_labels, col_labels)))
}
