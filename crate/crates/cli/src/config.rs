//! Manifests for the verification and benchmark commands.
//!
//! Training commands use `RunManifest` from the core crate. Every field here has
//! a default, so each command also runs without a manifest.

use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use symphony_core::harness::{BenchConfig, RunManifest};
use symphony_core::theory::NoiseKind;

use crate::Failure;

pub fn digest(text: &str) -> String {
    hex::encode(Sha256::digest(text.as_bytes()))
}

fn read(path: &Path) -> Result<String, Failure> {
    std::fs::read_to_string(path).map_err(|e| Failure::Invalid(format!("cannot read manifest {}: {e}", path.display())))
}

fn parse<T: DeserializeOwned>(path: &Path) -> Result<T, Failure> {
    toml::from_str(&read(path)?)
        .map_err(|e| Failure::Invalid(format!("{}: {}", path.display(), e.message().replace('\n', " "))))
}

/// Resolves a path from a manifest relative to the manifest's directory.
fn relative_to(manifest: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        manifest.parent().unwrap_or(Path::new(".")).join(p)
    }
}

pub fn load_run_manifest(path: Option<&Path>, command: &str, seed: Option<u64>) -> Result<RunManifest, Failure> {
    let path = path.ok_or_else(|| Failure::Invalid(format!("{command} needs --manifest PATH")))?;
    let mut m = RunManifest::from_toml(&read(path)?).map_err(|e| Failure::Invalid(format!("{}: {e}", path.display())))?;
    if let Some(s) = seed {
        m.seed = s;
    }
    Ok(m)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OracleChoice {
    Analytic,
    MonteCarlo,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Theorem1Manifest {
    pub seed: u64,
    /// Region file; the two-circle fixture when absent.
    pub regions: Option<PathBuf>,
    pub pairs: Vec<(usize, usize)>,
    pub n: usize,
    pub alpha: f64,
    pub trials: usize,
    /// Absolute contamination radii.
    pub epsilon: Vec<f64>,
    pub noise: Vec<NoiseKind>,
    /// Radius `L̃` is calibrated at; the largest `epsilon` when absent.
    pub epsilon_ref: Option<f64>,
    /// Analytic needs two-dimensional regions; the default picks it when possible.
    pub oracle: Option<OracleChoice>,
    /// Sample sizes for the convergence fit; fewer than two skips it.
    pub convergence_n: Vec<usize>,
    pub convergence_trials: usize,
}

impl Default for Theorem1Manifest {
    fn default() -> Self {
        Self {
            seed: 505,
            regions: None,
            pairs: vec![(0, 1)],
            n: 2000,
            alpha: 0.05,
            trials: 500,
            epsilon: vec![0.0, 0.01, 0.05, 0.1],
            noise: vec![NoiseKind::UniformBall, NoiseKind::Adversarial],
            epsilon_ref: None,
            oracle: None,
            convergence_n: vec![100, 1_000, 10_000, 100_000],
            convergence_trials: 64,
        }
    }
}

impl Theorem1Manifest {
    pub fn load(path: Option<&Path>, seed: Option<u64>) -> Result<Self, Failure> {
        let mut m: Self = match path {
            Some(p) => {
                let mut m: Self = parse(p)?;
                m.regions = m.regions.map(|r| relative_to(p, &r));
                m
            }
            None => Self::default(),
        };
        if let Some(s) = seed {
            m.seed = s;
        }
        m.validate()?;
        Ok(m)
    }

    fn validate(&self) -> Result<(), Failure> {
        let bad = |msg: &str| Err(Failure::Invalid(msg.to_string()));
        if self.pairs.is_empty() || self.pairs.iter().any(|(j, k)| j == k) {
            return bad("pairs must be non-empty and name two distinct regions");
        }
        if self.n == 0 || self.trials == 0 {
            return bad("n and trials must be positive");
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return bad("alpha must lie in (0, 1)");
        }
        if self.epsilon.is_empty() || self.epsilon.iter().any(|e| !(*e >= 0.0 && e.is_finite())) {
            return bad("epsilon must list finite, non-negative radii");
        }
        if self.noise.is_empty() {
            return bad("noise must list at least one kind");
        }
        if self.epsilon_ref.is_some_and(|e| !(e > 0.0 && e.is_finite())) {
            return bad("epsilon_ref must be positive");
        }
        if self.convergence_n.len() >= 2 && (self.convergence_trials == 0 || self.convergence_n.contains(&0)) {
            return bad("convergence sample sizes and trials must be positive");
        }
        Ok(())
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("manifest serializes")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RandomAdjacencies {
    pub count: usize,
    pub min_experts: usize,
    pub max_experts: usize,
    /// K is drawn from `2..=max_k`, capped at `M − 1`.
    pub max_k: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Prop1Manifest {
    pub seed: u64,
    /// Matrix or adjacency snapshot file; the bundled 2x2 fixture when absent.
    pub adjacency: Option<PathBuf>,
    /// Defaults to `min(2, M − 1)` for a single matrix.
    pub k: Option<usize>,
    pub trials: usize,
    /// Random Sinkhorn adjacencies instead of a file.
    pub random: Option<RandomAdjacencies>,
}

impl Default for Prop1Manifest {
    fn default() -> Self {
        Self { seed: 303, adjacency: None, k: None, trials: 1000, random: None }
    }
}

impl Prop1Manifest {
    pub fn load(path: Option<&Path>, seed: Option<u64>) -> Result<Self, Failure> {
        let mut m: Self = match path {
            Some(p) => {
                let mut m: Self = parse(p)?;
                m.adjacency = m.adjacency.map(|a| relative_to(p, &a));
                m
            }
            None => Self::default(),
        };
        if let Some(s) = seed {
            m.seed = s;
        }
        if m.trials == 0 {
            return Err(Failure::Invalid("trials must be positive".into()));
        }
        if let Some(r) = &m.random {
            if r.count == 0 || r.min_experts < 3 || r.max_experts < r.min_experts || r.max_k < 2 {
                return Err(Failure::Invalid(
                    "random adjacencies need count >= 1, 3 <= min_experts <= max_experts and max_k >= 2".into(),
                ));
            }
        }
        Ok(m)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("manifest serializes")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BenchManifest {
    pub seed: u64,
    pub m_grid: Vec<usize>,
    pub n_grid: Vec<usize>,
    pub k: usize,
    pub dim: usize,
    pub repetitions: usize,
    pub min_sample_ms: u64,
}

impl Default for BenchManifest {
    fn default() -> Self {
        let d = BenchConfig::default();
        Self {
            seed: d.seed,
            m_grid: d.m_grid,
            n_grid: d.n_grid,
            k: d.k,
            dim: d.dim,
            repetitions: d.repetitions,
            min_sample_ms: d.min_sample.as_millis() as u64,
        }
    }
}

impl BenchManifest {
    pub fn load(path: Option<&Path>, seed: Option<u64>) -> Result<Self, Failure> {
        let mut m: Self = match path {
            Some(p) => parse(p)?,
            None => Self::default(),
        };
        if let Some(s) = seed {
            m.seed = s;
        }
        if m.m_grid.is_empty() || m.n_grid.is_empty() || m.repetitions == 0 || m.dim == 0 {
            return Err(Failure::Invalid("bench needs non-empty grids, repetitions >= 1 and dim >= 1".into()));
        }
        if let Some(&m_min) = m.m_grid.iter().min() {
            if m.k == 0 || m.k > m_min {
                return Err(Failure::Invalid(format!("K exceeds expert count (K={}, M={m_min})", m.k)));
            }
        }
        Ok(m)
    }

    pub fn config(&self) -> BenchConfig {
        BenchConfig {
            m_grid: self.m_grid.clone(),
            n_grid: self.n_grid.clone(),
            k: self.k,
            dim: self.dim,
            repetitions: self.repetitions,
            min_sample: std::time::Duration::from_millis(self.min_sample_ms),
            seed: self.seed,
        }
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("manifest serializes")
    }
}
