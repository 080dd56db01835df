use std::fmt;

use thiserror::Error;

/// A single broken invariant of a [`crate::Biclustering`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Violation {
    /// `k` is outside `[2, min(n, m)]`.
    BadK { k: usize, n: usize, m: usize },
    /// A label array has the wrong length.
    RowLength { expected: usize, found: usize },
    ColLength { expected: usize, found: usize },
    /// A label is `>= k`.
    RowLabelOutOfRange { index: usize, label: usize },
    ColLabelOutOfRange { index: usize, label: usize },
    /// No row (resp. column) carries this label.
    EmptyRowCluster(usize),
    EmptyColCluster(usize),
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::BadK { k, n, m } => {
                write!(f, "k = {k} outside [2, min({n}, {m})]")
            }
            Violation::RowLength { expected, found } => {
                write!(f, "row_labels has length {found}, expected {expected}")
            }
            Violation::ColLength { expected, found } => {
                write!(f, "col_labels has length {found}, expected {expected}")
            }
            Violation::RowLabelOutOfRange { index, label } => {
                write!(f, "label out of range: row {index} has label {label}")
            }
            Violation::ColLabelOutOfRange { index, label } => {
                write!(f, "label out of range: column {index} has label {label}")
            }
            Violation::EmptyRowCluster(j) => write!(f, "empty row cluster {j}"),
            Violation::EmptyColCluster(j) => write!(f, "empty column cluster {j}"),
        }
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("invalid biclustering: {}", join(.0))]
    Validation(Vec<Violation>),

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("format error: {0}")]
    Format(String),

    #[error("contradictory branching decision: {0}")]
    Contradiction(String),

    #[error("instance too large for enumeration: {combos:.3e} labelings exceed the limit {limit:.0e}")]
    TooLarge { combos: f64, limit: f64 },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

fn join(v: &[Violation]) -> String {
    v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join("; ")
}

pub type Result<T> = std::result::Result<T, Error>;
