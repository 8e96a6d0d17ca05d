//! Training loop over a synthetic task.

use std::path::{Path, PathBuf};
use std::time::Instant;

use ndarray::{Array2, Axis};
use rand::seq::SliceRandom;

use super::manifest::RunManifest;
use super::output::{num, Table};
use super::task::{generate_task, SyntheticTask, TaskKind};
use crate::error::{Error, Result};
use crate::matrix_io::save_matrix;
use crate::moe::{forward, load_balance_report, save_checkpoint, ExpertSet, LayerConfig, LayerOutput, MoeLayer, RoutingMode, Sgd};
use crate::router::{softmax_row, RouterParams, TokenBatch};
use crate::rng::stream;
use crate::social_graph::{save_snapshot, AdjacencyState};

/// Stream indices for seed-derived randomness outside the task generator.
const INIT_STREAM: u64 = 10;
const SHUFFLE_STREAM: u64 = 1000;

/// Mean loss and its gradient with respect to the predictions.
///
/// Regression uses the mean squared error over all output entries;
/// classification uses softmax cross-entropy averaged over tokens.
pub fn task_loss(kind: TaskKind, pred: &Array2<f64>, target: &Array2<f64>) -> (f64, Array2<f64>) {
    let n = pred.nrows().max(1) as f64;
    match kind {
        TaskKind::MixtureRegression => {
            let diff = pred - target;
            let count = (pred.len().max(1)) as f64;
            let loss = diff.iter().map(|d| d * d).sum::<f64>() / count;
            (loss, diff * (2.0 / count))
        }
        TaskKind::RegionClassification => {
            let mut grad = Array2::zeros(pred.raw_dim());
            let mut loss = 0.0;
            for ((p, t), mut g) in pred.rows().into_iter().zip(target.rows()).zip(grad.rows_mut()) {
                let probs = softmax_row(&p.to_vec());
                for (j, (&q, &y)) in probs.iter().zip(t.iter()).enumerate() {
                    if y > 0.0 {
                        loss -= y * q.max(1e-300).ln();
                    }
                    g[j] = (q - y) / n;
                }
            }
            (loss / n, grad)
        }
    }
}

/// Builds the untrained layer described by `manifest` for a task of `dim` inputs and `out` outputs.
pub fn build_layer(manifest: &RunManifest, dim: usize, out: usize) -> Result<MoeLayer> {
    let mut rng = stream(manifest.seed, INIT_STREAM);
    let experts = ExpertSet::init(manifest.experts, dim, manifest.hidden, out, &mut rng)?;
    let router = RouterParams::init(manifest.router, manifest.experts, dim, manifest.router_scale, &mut rng)?;
    let adjacency = match manifest.mode {
        RoutingMode::Symphony => Some(AdjacencyState::new(manifest.experts, manifest.beta, manifest.norm_mode)?),
        RoutingMode::Baseline => None,
    };
    let mut config = LayerConfig::new(manifest.k, manifest.mode);
    config.truncation = manifest.truncation;
    config.aux_weight = manifest.aux_weight;
    MoeLayer::new(experts, router, adjacency, config)
}

/// Forward pass that never touches the stored social graph.
pub fn infer(layer: &MoeLayer, x: &Array2<f64>) -> Result<LayerOutput> {
    let batch = TokenBatch::new(x.clone())?;
    let mut adjacency = match layer.config.mode {
        RoutingMode::Symphony => layer.adjacency.clone().map(|mut a| {
            a.set_frozen(true);
            a
        }),
        RoutingMode::Baseline => None,
    };
    Ok(forward(&layer.experts, &layer.router, adjacency.as_mut(), &batch, &layer.config)?.0)
}

/// Second-largest magnitude in the spectrum of the graph; 1 for the implicit identity graph.
pub fn graph_rho(layer: &MoeLayer) -> Result<f64> {
    match (&layer.config.mode, &layer.adjacency) {
        (RoutingMode::Symphony, Some(a)) => Ok(a.spectral_report(None)?.rho),
        _ => Ok(1.0),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochRow {
    /// Zero is the untrained model.
    pub epoch: usize,
    pub train_loss: f64,
    pub valid_loss: f64,
    pub aux_loss: f64,
    pub entropy_ratio: f64,
    pub rho: f64,
    pub graph_updates: u64,
    pub wall_time_per_batch: f64,
}

pub const CURVE_COLUMNS: [&str; 9] = [
    "epoch",
    "train_loss",
    "valid_loss",
    "aux_loss",
    "entropy_ratio",
    "rho",
    "graph_updates",
    "wall_time_per_batch",
    "manifest_hash",
];

pub fn curve_table(curve: &[EpochRow], hash: &str) -> Table {
    let mut t = Table::new(&CURVE_COLUMNS);
    for r in curve {
        t.push(vec![
            r.epoch.to_string(),
            num(r.train_loss),
            num(r.valid_loss),
            num(r.aux_loss),
            num(r.entropy_ratio),
            num(r.rho),
            r.graph_updates.to_string(),
            num(r.wall_time_per_batch),
            hash.to_string(),
        ]);
    }
    t
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub layer: MoeLayer,
    pub task: SyntheticTask,
    pub curve: Vec<EpochRow>,
    /// Graph after each epoch; empty in baseline mode.
    pub snapshots: Vec<AdjacencyState>,
    pub manifest_hash: String,
}

fn epoch_row(layer: &MoeLayer, task: &SyntheticTask, epoch: usize, wall: f64) -> Result<EpochRow> {
    let kind = task.params.kind;
    let out = infer(layer, &task.train.x)?;
    let (train_loss, _) = task_loss(kind, &out.y, &task.train.y);
    let (valid_loss, _) = task_loss(kind, &infer(layer, &task.valid.x)?.y, &task.valid.y);
    Ok(EpochRow {
        epoch,
        train_loss,
        valid_loss,
        aux_loss: out.aux_loss,
        entropy_ratio: load_balance_report([&out.selections]).entropy_ratio,
        rho: graph_rho(layer)?,
        graph_updates: layer.adjacency.as_ref().map_or(0, |a| a.update_count()),
        wall_time_per_batch: wall,
    })
}

fn dump_divergence(dir: &Path, reason: &str, x: &Array2<f64>, y: &Array2<f64>, layer: &MoeLayer) -> Result<PathBuf> {
    std::fs::create_dir_all(dir)?;
    std::fs::write(dir.join("reason.txt"), format!("{reason}\n"))?;
    save_matrix(&dir.join("batch_x.txt"), x)?;
    save_matrix(&dir.join("batch_y.txt"), y)?;
    if let Some(a) = &layer.adjacency {
        save_snapshot(&dir.join("adjacency.txt"), a)?;
    }
    Ok(dir.to_path_buf())
}

/// Trains the model described by `manifest`.
///
/// With `out` set, writes `train_curve.csv`/`.dat`, one adjacency snapshot per
/// epoch under `adjacency/` (symphony mode only) and the final `checkpoint/`.
/// A non-finite loss aborts with [`Error::Divergence`] after dumping the last
/// batch and graph to `out/divergence` (or a temporary directory).
pub fn train(manifest: &RunManifest, out: Option<&Path>) -> Result<TrainOutcome> {
    manifest.validate()?;
    let hash = manifest.hash();
    let task = generate_task(&manifest.task, manifest.seed)?;
    let kind = manifest.task.kind;
    let mut layer = build_layer(manifest, manifest.task.dim, manifest.task.output_width())?;
    let mut sgd = Sgd::new(manifest.optim.lr, manifest.optim.momentum);
    let mut curve = vec![epoch_row(&layer, &task, 0, 0.0)?];
    let mut snapshots = Vec::new();
    let n = task.train.len();
    let bs = manifest.optim.batch_size.min(n);
    let mut order: Vec<usize> = (0..n).collect();

    for epoch in 1..=manifest.optim.epochs {
        order.shuffle(&mut stream(manifest.seed, SHUFFLE_STREAM + epoch as u64));
        let start = Instant::now();
        let mut batches = 0usize;
        for chunk in order.chunks(bs) {
            let x = task.train.x.select(Axis(0), chunk);
            let y = task.train.y.select(Axis(0), chunk);
            let (output, cache) = layer.forward(&TokenBatch::new(x.clone())?)?;
            let (loss, grad) = task_loss(kind, &output.y, &y);
            if !loss.is_finite() {
                let reason = format!("non-finite loss at epoch {epoch}, batch {batches}");
                let dir = match out {
                    Some(o) => o.join("divergence"),
                    None => std::env::temp_dir().join(format!("symphony-divergence-{}", &hash[..12])),
                };
                let dump = dump_divergence(&dir, &reason, &x, &y, &layer)?;
                return Err(Error::Divergence { message: reason, dump });
            }
            let grads = layer.backward(Some(&cache), &grad)?;
            sgd.step(&mut layer, &grads);
            layer.end_batch()?;
            batches += 1;
        }
        let wall = start.elapsed().as_secs_f64() / batches.max(1) as f64;
        curve.push(epoch_row(&layer, &task, epoch, wall)?);
        if let (RoutingMode::Symphony, Some(a)) = (manifest.mode, &layer.adjacency) {
            snapshots.push(a.clone());
        }
    }

    if let Some(dir) = out {
        curve_table(&curve, &hash).save(dir, "train_curve")?;
        for (e, s) in snapshots.iter().enumerate() {
            let adir = dir.join("adjacency");
            std::fs::create_dir_all(&adir)?;
            save_snapshot(&adir.join(format!("epoch_{:03}.txt", e + 1)), s)?;
        }
        save_checkpoint(&dir.join("checkpoint"), &layer, manifest.seed)?;
    }
    Ok(TrainOutcome { layer, task, curve, snapshots, manifest_hash: hash })
}
