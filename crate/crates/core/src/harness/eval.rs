//! Clean and contaminated evaluation with a frozen social graph.

use std::time::Instant;

use rayon::prelude::*;
use sha2::{Digest, Sha256};

use super::contaminate::contaminate;
use super::output::{join_values, num, Table};
use super::task::{Dataset, SyntheticTask};
use super::train::{graph_rho, infer, task_loss};
use crate::error::{arg_err, Error, Result};
use crate::moe::{load_balance_report, MoeLayer};
use crate::social_graph::{write_snapshot, AdjacencyState};
use crate::theory::NoiseKind;

#[derive(Debug, Clone, PartialEq)]
pub struct MetricsRow {
    pub split: String,
    pub seed: u64,
    /// Radius as a multiple of the domain diameter.
    pub epsilon_rel: f64,
    pub epsilon: f64,
    pub loss: f64,
    pub entropy_ratio: f64,
    pub cv: f64,
    pub frequencies: Vec<f64>,
    pub rho: f64,
    pub wall_time_per_batch: f64,
}

pub const METRICS_COLUMNS: [&str; 11] = [
    "split",
    "seed",
    "epsilon_rel",
    "epsilon",
    "loss",
    "entropy_ratio",
    "cv",
    "frequencies",
    "rho",
    "wall_time_per_batch",
    "manifest_hash",
];

pub fn metrics_table(rows: &[MetricsRow], hash: &str) -> Table {
    let mut t = Table::new(&METRICS_COLUMNS);
    for r in rows {
        t.push(vec![
            r.split.clone(),
            r.seed.to_string(),
            num(r.epsilon_rel),
            num(r.epsilon),
            num(r.loss),
            num(r.entropy_ratio),
            num(r.cv),
            join_values(&r.frequencies),
            num(r.rho),
            num(r.wall_time_per_batch),
            hash.to_string(),
        ]);
    }
    t
}

/// SHA-256 of the snapshot text of `a`.
pub fn adjacency_fingerprint(a: &AdjacencyState) -> String {
    let mut buf = Vec::new();
    write_snapshot(&mut buf, a).expect("writing to memory");
    buf.extend_from_slice(&a.accumulator().iter().flat_map(|v| v.to_le_bytes()).collect::<Vec<u8>>());
    hex::encode(Sha256::digest(&buf))
}

fn evaluate_cell(
    layer: &MoeLayer,
    data: &Dataset,
    task: &SyntheticTask,
    split: &str,
    epsilon_rel: f64,
    seed: u64,
    noise: NoiseKind,
    rho: f64,
) -> Result<MetricsRow> {
    let epsilon = epsilon_rel * task.params.diameter();
    let x = contaminate(&data.x, epsilon, noise, seed, &task.regions.centers)?;
    let start = Instant::now();
    let out = infer(layer, &x)?;
    let wall = start.elapsed().as_secs_f64();
    let (loss, _) = task_loss(task.params.kind, &out.y, &data.y);
    if !loss.is_finite() {
        return Err(Error::Numerical { message: format!("non-finite {split} loss at epsilon {epsilon}"), dump: String::new() });
    }
    let balance = load_balance_report([&out.selections]);
    Ok(MetricsRow {
        split: split.to_string(),
        seed,
        epsilon_rel,
        epsilon,
        loss,
        entropy_ratio: balance.entropy_ratio,
        cv: balance.cv,
        frequencies: balance.frequencies,
        rho,
        wall_time_per_batch: wall,
    })
}

/// One row per `(epsilon, seed)` cell on the test split, in grid order.
///
/// `epsilon_grid` holds multiples of the domain diameter. The layer's graph is
/// treated as frozen; its fingerprint is checked before and after.
pub fn evaluate(
    layer: &MoeLayer,
    task: &SyntheticTask,
    epsilon_grid: &[f64],
    seeds: &[u64],
    noise: NoiseKind,
) -> Result<Vec<MetricsRow>> {
    evaluate_split(layer, task, &task.test, "test", epsilon_grid, seeds, noise)
}

pub fn evaluate_split(
    layer: &MoeLayer,
    task: &SyntheticTask,
    data: &Dataset,
    split: &str,
    epsilon_grid: &[f64],
    seeds: &[u64],
    noise: NoiseKind,
) -> Result<Vec<MetricsRow>> {
    if epsilon_grid.is_empty() || seeds.is_empty() {
        return Err(arg_err("evaluation needs at least one epsilon and one seed"));
    }
    let before = layer.adjacency.as_ref().map(adjacency_fingerprint);
    let rho = graph_rho(layer)?;
    let cells: Vec<(f64, u64)> = epsilon_grid.iter().flat_map(|&e| seeds.iter().map(move |&s| (e, s))).collect();
    let rows = cells
        .par_iter()
        .map(|&(e, s)| evaluate_cell(layer, data, task, split, e, s, noise, rho))
        .collect::<Result<Vec<_>>>()?;
    let after = layer.adjacency.as_ref().map(adjacency_fingerprint);
    if before != after {
        return Err(Error::State("adjacency changed during evaluation".into()));
    }
    Ok(rows)
}

/// Mean of `loss(ε) − loss(0)` per epsilon, pairing rows by seed.
pub fn mean_degradation(rows: &[MetricsRow]) -> Vec<(f64, f64)> {
    let mut grid: Vec<f64> = Vec::new();
    for r in rows {
        if !grid.contains(&r.epsilon_rel) {
            grid.push(r.epsilon_rel);
        }
    }
    let clean = |seed: u64| rows.iter().find(|r| r.seed == seed && r.epsilon_rel == 0.0).map(|r| r.loss);
    grid.iter()
        .map(|&e| {
            let diffs: Vec<f64> = rows
                .iter()
                .filter(|r| r.epsilon_rel == e)
                .filter_map(|r| clean(r.seed).map(|c| r.loss - c))
                .collect();
            (e, crate::stats::mean(&diffs))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::manifest::RunManifest;
    use crate::harness::task::TaskParams;
    use crate::harness::train::train;
    use crate::moe::RoutingMode;

    fn trained(mode: RoutingMode) -> (MoeLayer, SyntheticTask) {
        let task = TaskParams { train: 512, valid: 64, test: 256, ..TaskParams::default() };
        let mut m = RunManifest::new(mode, task, 6);
        m.experts = 4;
        m.optim.epochs = 4;
        let out = train(&m, None).unwrap();
        (out.layer, out.task)
    }

    #[test]
    fn zero_epsilon_equals_clean_loss() {
        let (layer, task) = trained(RoutingMode::Symphony);
        let rows = evaluate(&layer, &task, &[0.0, 0.1], &[1, 2], NoiseKind::UniformBall).unwrap();
        assert_eq!(rows.len(), 4);
        let (clean, _) = task_loss(task.params.kind, &infer(&layer, &task.test.x).unwrap().y, &task.test.y);
        assert_eq!(rows[0].loss, clean);
        assert_eq!(rows[1].loss, clean);
        for r in &rows {
            assert!((r.frequencies.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            assert!((0.0..=1.0).contains(&r.entropy_ratio));
        }
    }

    #[test]
    fn evaluation_leaves_graph_untouched_and_is_deterministic() {
        let (layer, task) = trained(RoutingMode::Symphony);
        let before = adjacency_fingerprint(layer.adjacency.as_ref().unwrap());
        let a = evaluate(&layer, &task, &[0.0, 0.05], &[3, 4, 5], NoiseKind::SphereSurface).unwrap();
        let b = evaluate(&layer, &task, &[0.0, 0.05], &[3, 4, 5], NoiseKind::SphereSurface).unwrap();
        assert_eq!(before, adjacency_fingerprint(layer.adjacency.as_ref().unwrap()));
        let strip = |rows: &[MetricsRow]| rows.iter().map(|r| (r.loss, r.frequencies.clone())).collect::<Vec<_>>();
        assert_eq!(strip(&a), strip(&b));
    }

    #[test]
    fn frozen_graph_rejects_counting() {
        let (layer, _) = trained(RoutingMode::Symphony);
        let mut a = layer.adjacency.clone().unwrap();
        a.set_frozen(true);
        let rec = crate::router::SelectionRecord { n_experts: 4, k: 1, tokens: vec![] };
        assert!(matches!(a.accumulate_coselect(&rec), Err(Error::Frozen)));
    }

    #[test]
    fn degradation_pairs_by_seed() {
        let row = |seed, e, loss| MetricsRow {
            split: "test".into(),
            seed,
            epsilon_rel: e,
            epsilon: e,
            loss,
            entropy_ratio: 1.0,
            cv: 0.0,
            frequencies: vec![1.0],
            rho: 0.0,
            wall_time_per_batch: 0.0,
        };
        let rows = vec![row(1, 0.0, 1.0), row(2, 0.0, 2.0), row(1, 0.1, 1.5), row(2, 0.1, 2.7)];
        let d = mean_degradation(&rows);
        assert_eq!(d[0], (0.0, 0.0));
        assert_eq!(d[1].0, 0.1);
        assert!((d[1].1 - 0.6).abs() < 1e-12);
    }
}
