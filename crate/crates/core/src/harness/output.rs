//! Tabular output as CSV plus a whitespace-separated `.dat` mirror for gnuplot.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use crate::error::Result;

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new<S: AsRef<str>>(header: &[S]) -> Self {
        Self { header: header.iter().map(|s| s.as_ref().to_string()).collect(), rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(&self.header)?;
        for r in &self.rows {
            out.write_record(r)?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn write_dat<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "# {}", self.header.join(" "))?;
        for r in &self.rows {
            let cells: Vec<String> = r.iter().map(|c| if c.is_empty() { "-".into() } else { c.replace(' ', "_") }).collect();
            writeln!(w, "{}", cells.join(" "))?;
        }
        Ok(())
    }

    /// Writes `<stem>.csv` and `<stem>.dat` inside `dir`.
    pub fn save(&self, dir: &Path, stem: &str) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        self.write_csv(BufWriter::new(File::create(dir.join(format!("{stem}.csv")))?))?;
        let mut dat = BufWriter::new(File::create(dir.join(format!("{stem}.dat")))?);
        self.write_dat(&mut dat)?;
        dat.flush()?;
        Ok(())
    }

    pub fn column(&self, name: &str) -> Option<usize> {
        self.header.iter().position(|h| h == name)
    }
}

/// Shortest round-trip formatting, so equal values print identically.
pub fn num(v: f64) -> String {
    v.to_string()
}

pub fn join_values(vs: &[f64]) -> String {
    vs.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(";")
}
