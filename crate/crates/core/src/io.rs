//! Matrix and solution files.
//!
//! Matrix file: a header line `n m`, then `n` lines of `m` whitespace
//! separated decimal reals. Values are written with 17 significant digits,
//! so a save/load cycle reproduces every `f64` bit for bit. Blank lines and
//! lines starting with `#` are ignored.
//!
//! Solution file: TOML with the keys `k`, `objective`, `row_labels` and
//! `col_labels`:
//!
//! ```text
//! k = 2
//! objective = 2.0
//! row_labels = [0, 1]
//! col_labels = [0, 1]
//! ```
//!
//! All writers go through a temporary file in the target directory that is
//! renamed into place, so a failed write never leaves a partial file.

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::instance::{validate, Biclustering, DataMatrix};

pub fn format_matrix(a: &DataMatrix) -> String {
    let mut out = format!("{} {}\n", a.n(), a.m());
    for i in 0..a.n() {
        let row: Vec<String> = (0..a.m()).map(|j| format!("{:.16e}", a.get(i, j))).collect();
        out.push_str(&row.join(" "));
        out.push('\n');
    }
    out
}

pub fn parse_matrix(text: &str) -> Result<DataMatrix> {
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'));

    let (hline, header) = lines.next().ok_or(Error::Parse {
        line: 1,
        message: "missing header \"n m\"".into(),
    })?;
    let dims: Vec<&str> = header.split_whitespace().collect();
    if dims.len() != 2 {
        return Err(Error::Parse {
            line: hline,
            message: format!("header must be \"n m\", got {header:?}"),
        });
    }
    let parse_dim = |tok: &str| {
        tok.parse::<usize>().map_err(|_| Error::Parse {
            line: hline,
            message: format!("invalid dimension {tok:?}"),
        })
    };
    let (n, m) = (parse_dim(dims[0])?, parse_dim(dims[1])?);
    if n == 0 || m == 0 {
        return Err(Error::Format(format!("dimensions must be positive, got {n}x{m}")));
    }

    let mut values = Vec::with_capacity(n * m);
    let mut rows = 0;
    for (line, content) in lines {
        if rows == n {
            return Err(Error::Format(format!(
                "line {line}: more than the {n} rows announced in the header"
            )));
        }
        let before = values.len();
        for tok in content.split_whitespace() {
            let x: f64 = tok.parse().map_err(|_| Error::Parse {
                line,
                message: format!("non-numeric token {tok:?}"),
            })?;
            if !x.is_finite() {
                return Err(Error::Parse {
                    line,
                    message: format!("non-finite value {tok:?}"),
                });
            }
            values.push(x);
        }
        let count = values.len() - before;
        if count != m {
            return Err(Error::Parse {
                line,
                message: format!("expected {m} values, found {count}"),
            });
        }
        rows += 1;
    }
    if rows != n {
        return Err(Error::Format(format!(
            "header announces {n} rows, file has {rows}"
        )));
    }
    DataMatrix::from_row_major(n, m, &values)
}

pub fn load_matrix(path: impl AsRef<Path>) -> Result<DataMatrix> {
    parse_matrix(&fs::read_to_string(path)?)
}

pub fn save_matrix(path: impl AsRef<Path>, a: &DataMatrix) -> Result<()> {
    write_atomic(path.as_ref(), format_matrix(a).as_bytes())
}

/// Contents of a solution file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolutionFile {
    pub k: usize,
    pub objective: f64,
    pub row_labels: Vec<usize>,
    pub col_labels: Vec<usize>,
}

impl SolutionFile {
    pub fn new(b: &Biclustering, objective: f64) -> Self {
        Self {
            k: b.k,
            objective,
            row_labels: b.row_labels.clone(),
            col_labels: b.col_labels.clone(),
        }
    }

    pub fn biclustering(&self) -> Biclustering {
        Biclustering::new(self.k, self.row_labels.clone(), self.col_labels.clone())
    }
}

pub fn format_solution(s: &SolutionFile) -> Result<String> {
    toml::to_string(s).map_err(|e| Error::Format(e.to_string()))
}

/// Parses a solution file. Label invariants are checked separately with
/// [`validate`] because the matrix dimensions are not known here.
pub fn parse_solution(text: &str) -> Result<SolutionFile> {
    toml::from_str(text).map_err(|e| {
        let line = e
            .span()
            .map(|s| text[..s.start.min(text.len())].matches('\n').count() + 1)
            .unwrap_or(0);
        Error::Parse {
            line,
            message: e.message().to_string(),
        }
    })
}

pub fn load_solution(path: impl AsRef<Path>) -> Result<SolutionFile> {
    parse_solution(&fs::read_to_string(path)?)
}

/// Loads a solution and checks it against an `n x m` instance.
pub fn load_solution_for(path: impl AsRef<Path>, n: usize, m: usize) -> Result<SolutionFile> {
    let s = load_solution(path)?;
    validate(&s.biclustering(), n, m, s.k).map_err(Error::Validation)?;
    Ok(s)
}

pub fn save_solution(path: impl AsRef<Path>, s: &SolutionFile) -> Result<()> {
    write_atomic(path.as_ref(), format_solution(s)?.as_bytes())
}

/// Writes `bytes` to a sibling temporary file, then renames it over `path`.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.flush()?;
    tmp.persist(path).map_err(|e| Error::Io(e.error))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matrix_round_trip_is_bitwise() {
        let vals = [0.1, -2.5e-17, 1.0 / 3.0, 12345.678901234567, f64::MIN_POSITIVE, -0.0];
        let a = DataMatrix::from_row_major(2, 3, &vals).unwrap();
        let b = parse_matrix(&format_matrix(&a)).unwrap();
        assert_eq!((b.n(), b.m()), (2, 3));
        for i in 0..2 {
            for j in 0..3 {
                assert_eq!(a.get(i, j).to_bits(), b.get(i, j).to_bits());
            }
        }
    }

    #[test]
    fn short_row_is_a_parse_error_at_that_line() {
        let err = parse_matrix("2 3\n1 2 3\n4 5\n").unwrap_err();
        match err {
            Error::Parse { line, message } => {
                assert_eq!(line, 3);
                assert!(message.contains("expected 3"));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn non_numeric_token_is_named() {
        let err = parse_matrix("1 2\n1 abc\n").unwrap_err();
        match err {
            Error::Parse { line, message } => {
                assert_eq!(line, 2);
                assert!(message.contains("\"abc\""));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn row_count_mismatch_is_a_format_error() {
        assert!(matches!(parse_matrix("3 1\n1\n2\n"), Err(Error::Format(_))));
        assert!(matches!(parse_matrix("1 1\n1\n2\n"), Err(Error::Format(_))));
        assert!(matches!(parse_matrix("0 1\n"), Err(Error::Format(_))));
    }

    #[test]
    fn bad_header() {
        assert!(matches!(parse_matrix(""), Err(Error::Parse { .. })));
        assert!(matches!(parse_matrix("2\n1\n"), Err(Error::Parse { line: 1, .. })));
        assert!(matches!(parse_matrix("2 x\n"), Err(Error::Parse { line: 1, .. })));
    }

    #[test]
    fn solution_round_trip() {
        let b = Biclustering::new(2, vec![0, 1, 0], vec![1, 0]);
        let s = SolutionFile::new(&b, 1.0 / 7.0);
        let text = format_solution(&s).unwrap();
        assert!(text.contains("row_labels"));
        let back = parse_solution(&text).unwrap();
        assert_eq!(back, s);
        assert_eq!(back.biclustering(), b);
    }

    #[test]
    fn solution_parse_error_has_line() {
        let err = parse_solution("k = 2\nobjective = 1.0\nrow_labels = [0, 1\n").unwrap_err();
        assert!(matches!(err, Error::Parse { line, .. } if line >= 3));
        assert!(parse_solution("k = 2\n").is_err());
    }

    #[test]
    fn files_round_trip_on_disk() {
        let dir = tempfile::tempdir().unwrap();
        let a = DataMatrix::from_row_major(2, 2, &[1.0, 2.0, 3.0, 4.0]).unwrap();
        let p = dir.path().join("a.txt");
        save_matrix(&p, &a).unwrap();
        assert_eq!(load_matrix(&p).unwrap(), a);

        let b = Biclustering::new(2, vec![0, 1], vec![0, 1]);
        let sp = dir.path().join("s.toml");
        save_solution(&sp, &SolutionFile::new(&b, 5.0)).unwrap();
        assert!(load_solution_for(&sp, 2, 2).is_ok());
        assert!(matches!(load_solution_for(&sp, 3, 2), Err(Error::Validation(_))));
    }
}
