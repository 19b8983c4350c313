//! Plain CSV persistence for vectors and small matrices.
//!
//! Layout: a header line `rows=R,cols=C` followed by `R` comma-separated
//! rows. Values use Rust's shortest round-trip formatting, so a write/read
//! cycle is lossless.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

pub fn matrix_to_csv(m: &DMatrix<f64>) -> String {
    let mut out = format!("rows={},cols={}\n", m.nrows(), m.ncols());
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            if j > 0 {
                out.push(',');
            }
            write!(out, "{}", m[(i, j)]).unwrap();
        }
        out.push('\n');
    }
    out
}

pub fn matrix_from_csv(text: &str, origin: &str) -> Result<DMatrix<f64>> {
    let bad = |message: String| Error::Parse {
        path: origin.to_string(),
        message,
    };
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    let header = lines.next().ok_or_else(|| bad("empty file".into()))?;
    let mut rows = None;
    let mut cols = None;
    for field in header.split(',') {
        match field.trim().split_once('=') {
            Some(("rows", v)) => rows = v.trim().parse::<usize>().ok(),
            Some(("cols", v)) => cols = v.trim().parse::<usize>().ok(),
            _ => {}
        }
    }
    let (rows, cols) = match (rows, cols) {
        (Some(r), Some(c)) => (r, c),
        _ => return Err(bad(format!("bad header `{header}`"))),
    };
    let mut data = Vec::with_capacity(rows * cols);
    let mut seen = 0;
    for (i, line) in lines.enumerate() {
        let before = data.len();
        for tok in line.split(',') {
            let v: f64 = tok
                .trim()
                .parse()
                .map_err(|_| bad(format!("row {i}: cannot parse `{tok}`")))?;
            data.push(v);
        }
        if data.len() - before != cols {
            return Err(bad(format!("row {i} has {} entries, expected {cols}", data.len() - before)));
        }
        seen += 1;
    }
    if seen != rows {
        return Err(bad(format!("found {seen} rows, header says {rows}")));
    }
    Ok(DMatrix::from_row_slice(rows, cols, &data))
}

pub fn write_matrix_csv(path: impl AsRef<Path>, m: &DMatrix<f64>) -> Result<()> {
    fs::write(path, matrix_to_csv(m))?;
    Ok(())
}

pub fn read_matrix_csv(path: impl AsRef<Path>) -> Result<DMatrix<f64>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path)?;
    matrix_from_csv(&text, &path.display().to_string())
}

/// Vectors are stored as a single column.
pub fn write_vector_csv(path: impl AsRef<Path>, v: &DVector<f64>) -> Result<()> {
    write_matrix_csv(path, &DMatrix::from_column_slice(v.len(), 1, v.as_slice()))
}

pub fn read_vector_csv(path: impl AsRef<Path>) -> Result<DVector<f64>> {
    let path = path.as_ref();
    let m = read_matrix_csv(path)?;
    if m.ncols() != 1 {
        return Err(Error::Parse {
            path: path.display().to_string(),
            message: format!("expected a single column, found {}", m.ncols()),
        });
    }
    Ok(m.column(0).into_owned())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #[test]
        fn csv_round_trip_is_lossless(
            rows in 0usize..5,
            cols in 1usize..5,
            seed in proptest::collection::vec(-1e12f64..1e12, 25),
        ) {
            let m = DMatrix::from_fn(rows, cols, |i, j| seed[i * 5 + j] / 3.0);
            let back = matrix_from_csv(&matrix_to_csv(&m), "mem").unwrap();
            prop_assert_eq!(m, back);
        }
    }

    #[test]
    fn rejects_ragged_rows() {
        let err = matrix_from_csv("rows=2,cols=2\n1,2\n3\n", "mem").unwrap_err();
        assert!(matches!(err, Error::Parse { .. }));
    }
}
