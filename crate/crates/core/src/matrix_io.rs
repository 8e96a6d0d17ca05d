//! Plain-text matrix files.
//!
//! One header line followed by one line per row, whitespace separated, each
//! value printed with 12 significant digits.

use std::io::{BufRead, Write};

use ndarray::Array2;

use crate::error::{Error, Result};

pub fn format_value(v: f64) -> String {
    format!("{v:.11e}")
}

pub fn write_rows<W: Write>(w: &mut W, m: &Array2<f64>) -> Result<()> {
    for row in m.rows() {
        let line: Vec<String> = row.iter().map(|&v| format_value(v)).collect();
        writeln!(w, "{}", line.join(" "))?;
    }
    Ok(())
}

/// Reads exactly `rows` lines of `cols` numbers.
pub fn read_rows<R: BufRead>(lines: &mut std::io::Lines<R>, rows: usize, cols: usize) -> Result<Array2<f64>> {
    let mut data = Vec::with_capacity(rows * cols);
    for r in 0..rows {
        let line = lines
            .next()
            .ok_or_else(|| Error::Parse(format!("expected {rows} matrix rows, found {r}")))??;
        let values: Vec<f64> = line
            .split_whitespace()
            .map(|t| t.parse::<f64>().map_err(|e| Error::Parse(format!("row {r}: '{t}': {e}"))))
            .collect::<Result<_>>()?;
        if values.len() != cols {
            return Err(Error::Parse(format!("row {r} has {} values, expected {cols}", values.len())));
        }
        data.extend(values);
    }
    Array2::from_shape_vec((rows, cols), data).map_err(|e| Error::Parse(e.to_string()))
}

/// Generic matrix file: header `rows R cols C`.
pub fn write_matrix<W: Write>(w: &mut W, m: &Array2<f64>) -> Result<()> {
    writeln!(w, "rows {} cols {}", m.nrows(), m.ncols())?;
    write_rows(w, m)
}

pub fn read_matrix<R: BufRead>(r: R) -> Result<Array2<f64>> {
    let mut lines = r.lines();
    let header = lines.next().ok_or_else(|| Error::Parse("empty matrix file".into()))??;
    let tokens: Vec<&str> = header.split_whitespace().collect();
    let (rows, cols) = match tokens.as_slice() {
        ["rows", r, "cols", c] => (
            r.parse::<usize>().map_err(|e| Error::Parse(e.to_string()))?,
            c.parse::<usize>().map_err(|e| Error::Parse(e.to_string()))?,
        ),
        _ => return Err(Error::Parse(format!("bad matrix header '{header}'"))),
    };
    read_rows(&mut lines, rows, cols)
}

pub fn save_matrix(path: &std::path::Path, m: &Array2<f64>) -> Result<()> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    write_matrix(&mut f, m)?;
    f.flush()?;
    Ok(())
}

pub fn load_matrix(path: &std::path::Path) -> Result<Array2<f64>> {
    read_matrix(std::io::BufReader::new(std::fs::File::open(path)?))
}
