//! Model checkpoints: a directory of plain-text matrices plus `checkpoint.toml`.

use std::path::Path;

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use super::expert::{Expert, ExpertSet};
use super::layer::{GatePlacement, LayerConfig, MoeLayer, RoutingMode};
use crate::error::{Error, Result};
use crate::matrix_io::{load_matrix, save_matrix};
use crate::router::{CosineParams, RouterKind, RouterParams, Truncation, ZeroNormPolicy};
use crate::social_graph::{load_snapshot, save_snapshot};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointManifest {
    pub experts: usize,
    pub dim: usize,
    pub hidden: usize,
    pub out_dim: usize,
    pub k: usize,
    pub mode: RoutingMode,
    pub router: RouterKind,
    pub truncation: Truncation,
    pub baseline_gate: GatePlacement,
    pub aux_weight: f64,
    pub cosine_temperature: Option<f64>,
    pub seed: u64,
}

const MANIFEST: &str = "checkpoint.toml";

fn row(v: &Array1<f64>) -> Array2<f64> {
    v.clone().insert_axis(ndarray::Axis(0))
}

fn unrow(m: Array2<f64>) -> Result<Array1<f64>> {
    if m.nrows() != 1 {
        return Err(Error::Parse("expected a single-row vector file".into()));
    }
    Ok(m.row(0).to_owned())
}

pub fn save_checkpoint(dir: &Path, layer: &MoeLayer, seed: u64) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let manifest = CheckpointManifest {
        experts: layer.experts.len(),
        dim: layer.experts.in_dim(),
        hidden: layer.experts.hidden(),
        out_dim: layer.experts.out_dim(),
        k: layer.config.k,
        mode: layer.config.mode,
        router: layer.router.kind,
        truncation: layer.config.truncation,
        baseline_gate: layer.config.baseline_gate,
        aux_weight: layer.config.aux_weight,
        cosine_temperature: layer.router.cosine.as_ref().map(|c| c.temperature),
        seed,
    };
    let text = toml::to_string(&manifest).map_err(|e| Error::Parse(e.to_string()))?;
    std::fs::write(dir.join(MANIFEST), text)?;
    save_matrix(&dir.join("router_weight.txt"), &layer.router.weight)?;
    save_matrix(&dir.join("router_bias.txt"), &row(&layer.router.bias))?;
    if let Some(c) = &layer.router.cosine {
        save_matrix(&dir.join("cosine_projection.txt"), &c.projection)?;
        save_matrix(&dir.join("cosine_experts.txt"), &c.experts)?;
    }
    for (j, e) in layer.experts.iter().enumerate() {
        save_matrix(&dir.join(format!("expert_{j:03}_w1.txt")), &e.w1)?;
        save_matrix(&dir.join(format!("expert_{j:03}_b1.txt")), &row(&e.b1))?;
        save_matrix(&dir.join(format!("expert_{j:03}_w2.txt")), &e.w2)?;
        save_matrix(&dir.join(format!("expert_{j:03}_b2.txt")), &row(&e.b2))?;
    }
    if let Some(a) = &layer.adjacency {
        save_snapshot(&dir.join("adjacency.txt"), a)?;
    }
    Ok(())
}

pub fn load_checkpoint(dir: &Path) -> Result<(MoeLayer, CheckpointManifest)> {
    let text = std::fs::read_to_string(dir.join(MANIFEST))?;
    let manifest: CheckpointManifest = toml::from_str(&text).map_err(|e| Error::Parse(e.to_string()))?;
    let weight = load_matrix(&dir.join("router_weight.txt"))?;
    let bias = unrow(load_matrix(&dir.join("router_bias.txt"))?)?;
    let router = match manifest.router {
        RouterKind::Linear => RouterParams::linear(weight, bias)?,
        RouterKind::Random => RouterParams::random(weight, bias)?,
        RouterKind::Cosine => {
            let projection = load_matrix(&dir.join("cosine_projection.txt"))?;
            let experts = load_matrix(&dir.join("cosine_experts.txt"))?;
            let mut cos = CosineParams {
                projection,
                experts,
                temperature: manifest.cosine_temperature.unwrap_or(1.0),
                zero_norm: ZeroNormPolicy::Clamp,
            };
            // printed digits may move the norm slightly off one
            cos.renormalize_experts();
            RouterParams::cosine(cos.projection, cos.experts, cos.temperature)?
        }
    };
    let experts = (0..manifest.experts)
        .map(|j| -> Result<Expert> {
            Ok(Expert {
                w1: load_matrix(&dir.join(format!("expert_{j:03}_w1.txt")))?,
                b1: unrow(load_matrix(&dir.join(format!("expert_{j:03}_b1.txt")))?)?,
                w2: load_matrix(&dir.join(format!("expert_{j:03}_w2.txt")))?,
                b2: unrow(load_matrix(&dir.join(format!("expert_{j:03}_b2.txt")))?)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let experts = ExpertSet::new(experts)?;
    let adjacency_path = dir.join("adjacency.txt");
    let adjacency = if adjacency_path.exists() { Some(load_snapshot(&adjacency_path)?) } else { None };
    let config = LayerConfig {
        k: manifest.k,
        mode: manifest.mode,
        truncation: manifest.truncation,
        baseline_gate: manifest.baseline_gate,
        aux_weight: manifest.aux_weight,
    };
    Ok((MoeLayer::new(experts, router, adjacency, config)?, manifest))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_from;
    use crate::router::TokenBatch;
    use crate::social_graph::{AdjacencyState, NormMode};

    #[test]
    fn checkpoint_roundtrip_preserves_outputs() {
        let mut rng = rng_from(2);
        let experts = ExpertSet::init(4, 3, 6, 2, &mut rng).unwrap();
        let router = RouterParams::init(RouterKind::Cosine, 4, 3, 1.0, &mut rng).unwrap();
        let mut adj = AdjacencyState::new(4, 0.9, NormMode::Sinkhorn).unwrap();
        adj.merge_counts(&Array2::from_elem((4, 4), 1.0)).unwrap();
        adj.normalize_and_ema().unwrap();
        let mut layer = MoeLayer::new(experts, router, Some(adj), LayerConfig::new(2, RoutingMode::Symphony)).unwrap();
        layer.freeze_graph(true);

        let dir = tempfile::tempdir().unwrap();
        save_checkpoint(dir.path(), &layer, 42).unwrap();
        let (mut back, manifest) = load_checkpoint(dir.path()).unwrap();
        assert_eq!(manifest.seed, 42);
        assert_eq!(manifest.mode, RoutingMode::Symphony);
        back.freeze_graph(true);

        let batch = TokenBatch::from_rows(&[vec![0.1, -0.4, 0.9], vec![1.0, 0.0, -0.3]]).unwrap();
        let (a, _) = layer.forward(&batch).unwrap();
        let (b, _) = back.forward(&batch).unwrap();
        assert_eq!(a.selections.tokens.iter().map(|s| &s.indices).collect::<Vec<_>>(),
                   b.selections.tokens.iter().map(|s| &s.indices).collect::<Vec<_>>());
        for (x, y) in a.y.iter().zip(b.y.iter()) {
            assert!((x - y).abs() < 1e-9);
        }
    }
}
