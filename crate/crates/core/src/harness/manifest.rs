//! Run manifests: a TOML file that fully determines a training and evaluation run.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::task::{TaskKind, TaskParams};
use crate::error::{arg_err, Error, Result};
use crate::moe::RoutingMode;
use crate::rng::derive_seed;
use crate::router::{RouterKind, Truncation};
use crate::social_graph::NormMode;
use crate::theory::NoiseKind;

const EVAL_STREAM: u64 = 1 << 32;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OptimParams {
    #[serde(default = "default_lr")]
    pub lr: f64,
    #[serde(default = "default_momentum")]
    pub momentum: f64,
    #[serde(default = "default_epochs")]
    pub epochs: usize,
    #[serde(default = "default_batch")]
    pub batch_size: usize,
}

fn default_lr() -> f64 {
    0.1
}
fn default_momentum() -> f64 {
    0.9
}
fn default_epochs() -> usize {
    30
}
fn default_batch() -> usize {
    64
}

impl Default for OptimParams {
    fn default() -> Self {
        Self { lr: default_lr(), momentum: default_momentum(), epochs: default_epochs(), batch_size: default_batch() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunManifest {
    pub mode: RoutingMode,
    #[serde(default = "default_router")]
    pub router: RouterKind,
    #[serde(default = "default_experts")]
    pub experts: usize,
    #[serde(default = "default_k")]
    pub k: usize,
    #[serde(default = "default_beta")]
    pub beta: f64,
    #[serde(default)]
    pub norm_mode: NormMode,
    #[serde(default)]
    pub truncation: Truncation,
    #[serde(default = "default_hidden")]
    pub hidden: usize,
    #[serde(default = "default_aux")]
    pub aux_weight: f64,
    /// Standard deviation of the initial router weights.
    #[serde(default = "default_router_scale")]
    pub router_scale: f64,
    pub seed: u64,
    /// Evaluation seeds are `0..eval_seeds`, each mixed with `seed`.
    #[serde(default = "default_eval_seeds")]
    pub eval_seeds: usize,
    /// Contamination radii as multiples of the domain diameter.
    #[serde(default = "default_epsilon_grid")]
    pub epsilon_grid: Vec<f64>,
    #[serde(default = "default_noise")]
    pub noise: NoiseKind,
    pub task: TaskParams,
    #[serde(default)]
    pub optim: OptimParams,
}

fn default_router() -> RouterKind {
    RouterKind::Linear
}
fn default_experts() -> usize {
    16
}
fn default_k() -> usize {
    2
}
fn default_beta() -> f64 {
    0.9
}
fn default_hidden() -> usize {
    16
}
fn default_aux() -> f64 {
    0.01
}
fn default_router_scale() -> f64 {
    0.5
}
fn default_eval_seeds() -> usize {
    10
}
pub fn default_epsilon_grid() -> Vec<f64> {
    vec![0.0, 0.01, 0.05, 0.1, 0.2]
}
fn default_noise() -> NoiseKind {
    NoiseKind::UniformBall
}

impl RunManifest {
    /// Default configuration for `mode` on `task`.
    pub fn new(mode: RoutingMode, task: TaskParams, seed: u64) -> Self {
        Self {
            mode,
            router: default_router(),
            experts: default_experts(),
            k: default_k(),
            beta: default_beta(),
            norm_mode: NormMode::default(),
            truncation: Truncation::default(),
            hidden: default_hidden(),
            aux_weight: default_aux(),
            router_scale: default_router_scale(),
            seed,
            eval_seeds: default_eval_seeds(),
            epsilon_grid: default_epsilon_grid(),
            noise: default_noise(),
            task,
            optim: OptimParams::default(),
        }
    }

    /// Reference robustness run: 2-D mixture regression over 12 regions with 16 experts, K = 2.
    pub fn reference(mode: RoutingMode, seed: u64) -> Self {
        let task = TaskParams {
            kind: TaskKind::MixtureRegression,
            dim: 2,
            regions: 12,
            out_dim: 1,
            noise_sigma: 0.05,
            train: 4096,
            valid: 512,
            test: 2048,
            ..TaskParams::default()
        };
        let mut m = Self::new(mode, task, seed);
        m.epsilon_grid = vec![0.0, 0.1];
        m
    }

    pub fn validate(&self) -> Result<()> {
        if self.experts == 0 {
            return Err(arg_err("experts must be at least 1"));
        }
        if self.k == 0 || self.k > self.experts {
            return Err(arg_err(format!("K exceeds expert count (K={}, M={})", self.k, self.experts)));
        }
        if !(0.0..1.0).contains(&self.beta) {
            return Err(arg_err("beta must lie in [0, 1)"));
        }
        if self.hidden == 0 {
            return Err(arg_err("hidden width must be at least 1"));
        }
        if !(self.aux_weight >= 0.0 && self.aux_weight.is_finite()) {
            return Err(arg_err("aux_weight must be finite and non-negative"));
        }
        if !(self.router_scale > 0.0 && self.router_scale.is_finite()) {
            return Err(arg_err("router_scale must be positive"));
        }
        if self.epsilon_grid.iter().any(|e| !(*e >= 0.0 && e.is_finite())) {
            return Err(arg_err("epsilon grid values must be finite and non-negative"));
        }
        if self.optim.batch_size == 0 || !(self.optim.lr > 0.0) || !(0.0..1.0).contains(&self.optim.momentum) {
            return Err(arg_err("optimizer needs batch_size >= 1, lr > 0 and momentum in [0, 1)"));
        }
        if self.task.kind == TaskKind::RegionClassification && self.task.regions < 2 {
            return Err(arg_err("classification needs at least two regions"));
        }
        self.task.validate()
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let m: Self = toml::from_str(text).map_err(|e| Error::Parse(format!("manifest: {}", e.to_string().trim_end())))?;
        m.validate()?;
        Ok(m)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("manifest serializes")
    }

    /// SHA-256 of the canonical TOML form, hex encoded.
    pub fn hash(&self) -> String {
        hex::encode(Sha256::digest(self.to_toml().as_bytes()))
    }

    /// Noise seeds for contaminated evaluation, one per `eval_seeds`.
    pub fn evaluation_seeds(&self) -> Vec<u64> {
        (0..self.eval_seeds as u64).map(|i| derive_seed(self.seed, EVAL_STREAM + i)).collect()
    }

    /// Same manifest with a different seed.
    pub fn with_seed(&self, seed: u64) -> Self {
        Self { seed, ..self.clone() }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> RunManifest {
        RunManifest::new(RoutingMode::Symphony, TaskParams::default(), 3)
    }

    #[test]
    fn toml_roundtrip_and_hash() {
        let m = sample();
        let back = RunManifest::from_toml(&m.to_toml()).unwrap();
        assert_eq!(back, m);
        assert_eq!(back.hash(), m.hash());
        assert_ne!(m.with_seed(4).hash(), m.hash());
        assert_eq!(m.hash().len(), 64);
    }

    #[test]
    fn defaults_fill_missing_keys() {
        let text = "mode = \"Baseline\"\nseed = 1\n[task]\nkind = \"MixtureRegression\"\n";
        let m = RunManifest::from_toml(text).unwrap();
        assert_eq!((m.experts, m.k, m.beta), (16, 2, 0.9));
        assert_eq!(m.epsilon_grid, vec![0.0, 0.01, 0.05, 0.1, 0.2]);
        assert_eq!(m.norm_mode, NormMode::Sinkhorn);
    }

    #[test]
    fn rejects_k_above_m_and_unknown_keys() {
        let mut m = sample();
        m.k = 17;
        let err = RunManifest::from_toml(&m.to_toml()).unwrap_err().to_string();
        assert!(err.contains("K exceeds expert count"), "{err}");
        assert!(RunManifest::from_toml("mode = \"Baseline\"\nseed = 1\nbogus = 2\n[task]\nkind = \"MixtureRegression\"\n").is_err());
    }
}
