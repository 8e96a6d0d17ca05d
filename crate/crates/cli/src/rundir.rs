//! Run directories: staged under a temporary name and renamed into place once
//! the completion marker is written.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::Serialize;

use symphony_core::harness::Table;

use crate::Failure;

/// Version of every CSV layout described in `docs/schema`.
pub const SCHEMA_VERSION: u32 = 1;
pub const MARKER: &str = "COMPLETE";

#[derive(Serialize)]
struct Marker<'a> {
    command: &'a str,
    seed: u64,
    wall_clock_s: f64,
    manifest_hash: &'a str,
    schema_version: u32,
    /// CSV file name to schema name.
    csv: &'a BTreeMap<String, String>,
}

#[derive(Debug)]
pub struct RunDir {
    staging: PathBuf,
    target: PathBuf,
    start: Instant,
    csv: BTreeMap<String, String>,
    done: bool,
}

impl RunDir {
    /// Stages `<out>/<run_id>`. Fails before any work if the run already exists.
    pub fn create(out: &Path, run_id: &str) -> Result<Self, Failure> {
        let target = out.join(run_id);
        if target.exists() {
            return Err(Failure::Invalid(format!("run directory {} already exists", target.display())));
        }
        let staging = out.join(format!(".{run_id}.partial-{}", std::process::id()));
        std::fs::create_dir_all(&staging)
            .map_err(|e| Failure::Invalid(format!("cannot create {}: {e}", staging.display())))?;
        Ok(Self { staging, target, start: Instant::now(), csv: BTreeMap::new(), done: false })
    }

    pub fn path(&self) -> &Path {
        &self.staging
    }

    pub fn write(&self, name: &str, text: &str) -> symphony_core::Result<()> {
        Ok(std::fs::write(self.staging.join(name), text)?)
    }

    /// Writes `<stem>.csv` and its `.dat` mirror and records the schema.
    pub fn table(&mut self, table: &Table, stem: &str) -> symphony_core::Result<()> {
        table.save(&self.staging, stem)?;
        self.note_csv(stem);
        Ok(())
    }

    /// Records a CSV written by other code under the schema `stem`.
    pub fn note_csv(&mut self, stem: &str) {
        self.csv.insert(format!("{stem}.csv"), stem.to_string());
    }

    pub fn commit(mut self, command: &str, seed: u64, manifest_hash: &str) -> Result<PathBuf, Failure> {
        let marker = Marker {
            command,
            seed,
            wall_clock_s: self.start.elapsed().as_secs_f64(),
            manifest_hash,
            schema_version: SCHEMA_VERSION,
            csv: &self.csv,
        };
        let text = toml::to_string(&marker).expect("marker serializes");
        if let Err(e) = self.write(MARKER, &text) {
            return Err(self.fail(&e.to_string(), None));
        }
        if let Err(e) = std::fs::rename(&self.staging, &self.target) {
            let reason = format!("cannot move run into {}: {e}", self.target.display());
            return Err(self.fail(&reason, None));
        }
        self.done = true;
        Ok(self.target.clone())
    }

    /// Keeps the partial output as `<run_id>.failed` with the reason in `error.txt`.
    ///
    /// `dump` is a diagnostics path inside the staging directory, if any.
    pub fn fail(mut self, reason: &str, dump: Option<&Path>) -> Failure {
        self.done = true;
        let _ = std::fs::write(self.staging.join("error.txt"), format!("{reason}\n"));
        let mut failed = self.target.clone().into_os_string();
        failed.push(".failed");
        let mut failed = PathBuf::from(failed);
        if failed.exists() {
            failed = self.staging.with_extension("failed");
        }
        let kept = match std::fs::rename(&self.staging, &failed) {
            Ok(()) => failed,
            Err(_) => self.staging.clone(),
        };
        let diagnostics = match dump.and_then(|d| d.strip_prefix(&self.staging).ok()) {
            Some(rel) => kept.join(rel),
            None => kept,
        };
        Failure::Runtime { reason: reason.to_string(), diagnostics }
    }
}

impl Drop for RunDir {
    fn drop(&mut self) {
        if !self.done {
            let _ = std::fs::remove_dir_all(&self.staging);
        }
    }
}
