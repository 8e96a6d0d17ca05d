//! Adjacency snapshot files.
//!
//! ```text
//! M 3 mode Sinkhorn beta 0.9 updates 12
//! <M rows of M values, 12 significant digits>
//! ```

use std::io::{BufRead, Write};
use std::path::Path;

use super::adjacency::{AdjacencyState, NormMode};
use crate::error::{Error, Result};
use crate::matrix_io::{read_rows, write_rows};

pub fn write_snapshot<W: Write>(w: &mut W, state: &AdjacencyState) -> Result<()> {
    writeln!(
        w,
        "M {} mode {} beta {} updates {}",
        state.n_experts(),
        state.norm_mode(),
        state.beta(),
        state.update_count()
    )?;
    write_rows(w, state.matrix())
}

pub fn read_snapshot<R: BufRead>(r: R) -> Result<AdjacencyState> {
    let mut lines = r.lines();
    let header = lines.next().ok_or_else(|| Error::Parse("empty snapshot".into()))??;
    let t: Vec<&str> = header.split_whitespace().collect();
    let (m, mode, beta, updates) = match t.as_slice() {
        ["M", m, "mode", mode, "beta", beta, "updates", updates] => (*m, *mode, *beta, *updates),
        _ => return Err(Error::Parse(format!("bad snapshot header '{header}'"))),
    };
    let parse_err = |what: &str, e: &dyn std::fmt::Display| Error::Parse(format!("snapshot {what}: {e}"));
    let m: usize = m.parse().map_err(|e| parse_err("M", &e))?;
    let mode: NormMode = mode.parse()?;
    let beta: f64 = beta.parse().map_err(|e| parse_err("beta", &e))?;
    let updates: u64 = updates.parse().map_err(|e| parse_err("updates", &e))?;
    let a = read_rows(&mut lines, m, m)?;
    AdjacencyState::from_matrix(a, mode, beta, updates)
}

pub fn save_snapshot(path: &Path, state: &AdjacencyState) -> Result<()> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    write_snapshot(&mut f, state)?;
    f.flush()?;
    Ok(())
}

pub fn load_snapshot(path: &Path) -> Result<AdjacencyState> {
    read_snapshot(std::io::BufReader::new(std::fs::File::open(path)?))
}
