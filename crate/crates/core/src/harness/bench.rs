//! Wall-time comparison of baseline and symphony routing.

use std::hint::black_box;
use std::time::{Duration, Instant};

use ndarray::Array2;
use rand::Rng as _;

use super::output::{num, Table};
use crate::error::{arg_err, Result};
use crate::router::{compute_scores, gate_softmax_first, RouterKind, RouterParams, RouterScores, TokenBatch, Truncation};
use crate::rng::{derive_seed, rng_from};
use crate::social_graph::{estimate_overhead, AdjacencyState, NormMode};
use crate::stats::median;

#[derive(Debug, Clone, PartialEq)]
pub struct BenchConfig {
    pub m_grid: Vec<usize>,
    pub n_grid: Vec<usize>,
    pub k: usize,
    /// Token width fed to the router.
    pub dim: usize,
    pub repetitions: usize,
    /// Minimum wall time of one timed sample.
    pub min_sample: Duration,
    pub seed: u64,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self {
            m_grid: vec![16],
            n_grid: vec![256, 512, 1024, 2048, 4096],
            k: 2,
            dim: 768,
            repetitions: 301,
            min_sample: Duration::from_millis(3),
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchRow {
    pub m: usize,
    pub n: usize,
    pub k: usize,
    /// Median seconds per routed batch.
    pub baseline_s: f64,
    /// Smoothed routing with a frozen, active graph.
    pub symphony_s: f64,
    /// Smoothed routing plus counting and one normalize/EMA step.
    pub train_s: f64,
    /// Symphony with the graph bypassed (no update yet).
    pub bypass_s: f64,
    /// Median over repetitions of the paired relative difference to baseline.
    pub delta_pct: f64,
    pub train_delta_pct: f64,
    pub bypass_delta_pct: f64,
    pub predicted_train_flops: u128,
    pub predicted_infer_flops: u128,
    pub predicted_train_bytes: u128,
    pub predicted_infer_bytes: u128,
    /// Bytes held by the graph, its accumulator and the smoothed gates.
    pub extra_bytes: usize,
}

pub const BENCH_COLUMNS: [&str; 17] = [
    "M",
    "N",
    "K",
    "baseline_s",
    "symphony_s",
    "train_s",
    "bypass_s",
    "delta_pct",
    "train_delta_pct",
    "bypass_delta_pct",
    "predicted_train_flops",
    "predicted_infer_flops",
    "predicted_train_bytes",
    "predicted_infer_bytes",
    "extra_bytes",
    "dim",
    "repetitions",
];

pub fn bench_table(rows: &[BenchRow], cfg: &BenchConfig) -> Table {
    let mut t = Table::new(&BENCH_COLUMNS);
    for r in rows {
        t.push(vec![
            r.m.to_string(),
            r.n.to_string(),
            r.k.to_string(),
            num(r.baseline_s),
            num(r.symphony_s),
            num(r.train_s),
            num(r.bypass_s),
            num(r.delta_pct),
            num(r.train_delta_pct),
            num(r.bypass_delta_pct),
            r.predicted_train_flops.to_string(),
            r.predicted_infer_flops.to_string(),
            r.predicted_train_bytes.to_string(),
            r.predicted_infer_bytes.to_string(),
            r.extra_bytes.to_string(),
            cfg.dim.to_string(),
            cfg.repetitions.to_string(),
        ]);
    }
    t
}

fn baseline_route(router: &RouterParams, batch: &TokenBatch, k: usize) -> Result<()> {
    let scores = compute_scores(router, batch)?;
    black_box(gate_softmax_first(&scores, k, Truncation::Raw)?);
    Ok(())
}

/// Inference-mode symphony routing: score and smooth with a frozen graph.
fn symphony_route(router: &RouterParams, batch: &TokenBatch, k: usize, graph: &AdjacencyState) -> Result<()> {
    let scores = compute_scores(router, batch)?;
    black_box(graph.route(&scores, k, Truncation::Raw)?);
    Ok(())
}

/// Training-mode symphony routing: score, smooth, count and close the window.
fn train_route(router: &RouterParams, batch: &TokenBatch, k: usize, graph: &mut AdjacencyState) -> Result<()> {
    let scores: RouterScores = compute_scores(router, batch)?;
    black_box(graph.route_and_count(&scores, k, Truncation::Raw)?);
    graph.normalize_and_ema()
}

fn bypass_route(router: &RouterParams, batch: &TokenBatch, k: usize, graph: &AdjacencyState) -> Result<()> {
    let scores = compute_scores(router, batch)?;
    black_box(graph.route(&scores, k, Truncation::Raw)?);
    Ok(())
}

/// Seconds per call of `f`, repeating until one sample lasts at least `min`.
fn calibrate<F: FnMut() -> Result<()>>(mut f: F, min: Duration) -> Result<usize> {
    let mut iters = 1usize;
    loop {
        let start = Instant::now();
        for _ in 0..iters {
            f()?;
        }
        if start.elapsed() >= min || iters >= 1 << 20 {
            return Ok(iters);
        }
        iters *= 2;
    }
}

fn time<F: FnMut() -> Result<()>>(mut f: F, iters: usize) -> Result<f64> {
    let start = Instant::now();
    for _ in 0..iters {
        f()?;
    }
    Ok(start.elapsed().as_secs_f64() / iters as f64)
}

fn relative(base: f64, other: f64) -> f64 {
    100.0 * (other - base) / base
}

/// Median-of-repetitions routing time for every `(M, N)` pair.
///
/// The four variants are interleaved call by call, in rotating order, so slow
/// drifts in machine load affect them alike.
pub fn bench_overhead(cfg: &BenchConfig) -> Result<Vec<BenchRow>> {
    if cfg.m_grid.is_empty() || cfg.n_grid.is_empty() || cfg.repetitions == 0 || cfg.dim == 0 {
        return Err(arg_err("bench grids, repetitions and dim must be non-empty"));
    }
    let mut rows = Vec::new();
    for &m in &cfg.m_grid {
        if cfg.k == 0 || cfg.k > m {
            return Err(arg_err(format!("K exceeds expert count (K={}, M={m})", cfg.k)));
        }
        for &n in &cfg.n_grid {
            let mut rng = rng_from(derive_seed(cfg.seed, (m * 1_000_003 + n) as u64));
            let router = RouterParams::init(RouterKind::Linear, m, cfg.dim, 1.0 / (cfg.dim as f64).sqrt(), &mut rng)?;
            let batch = TokenBatch::new(Array2::from_shape_fn((n, cfg.dim), |_| rng.random_range(-1.0..1.0)))?;
            let mut graph = AdjacencyState::new(m, 0.9, NormMode::Sinkhorn)?;
            // one warm-up window so smoothing is active
            train_route(&router, &batch, cfg.k, &mut graph)?;
            let mut frozen = graph.clone();
            frozen.set_frozen(true);
            let fresh = AdjacencyState::new(m, 0.9, NormMode::Sinkhorn)?;

            let iters = calibrate(|| baseline_route(&router, &batch, cfg.k), cfg.min_sample)?;
            let mut t: [Vec<f64>; 4] = Default::default();
            for rep in 0..cfg.repetitions {
                let mut sums = [0.0; 4];
                // adjacent single calls share machine state, so the pairing stays tight
                for i in 0..iters {
                    for slot in 0..4 {
                        let v = (rep + i + slot) % 4;
                        sums[v] += match v {
                            0 => time(|| baseline_route(&router, &batch, cfg.k), 1)?,
                            1 => time(|| symphony_route(&router, &batch, cfg.k, &frozen), 1)?,
                            2 => time(|| train_route(&router, &batch, cfg.k, &mut graph), 1)?,
                            _ => time(|| bypass_route(&router, &batch, cfg.k, &fresh), 1)?,
                        };
                    }
                }
                for (tv, s) in t.iter_mut().zip(sums) {
                    tv.push(s / iters as f64);
                }
            }
            let paired = |other: &[f64]| median(&t[0].iter().zip(other).map(|(&b, &o)| relative(b, o)).collect::<Vec<_>>());
            let est = estimate_overhead(m as u64, cfg.k as u64, n as u64, 1, 8)?;
            rows.push(BenchRow {
                m,
                n,
                k: cfg.k,
                baseline_s: median(&t[0]),
                symphony_s: median(&t[1]),
                train_s: median(&t[2]),
                bypass_s: median(&t[3]),
                delta_pct: paired(&t[1]),
                train_delta_pct: paired(&t[2]),
                bypass_delta_pct: paired(&t[3]),
                predicted_train_flops: est.train_flops,
                predicted_infer_flops: est.infer_flops,
                predicted_train_bytes: est.train_bytes,
                predicted_infer_bytes: est.infer_bytes,
                extra_bytes: std::mem::size_of::<f64>() * (2 * m * m + n * m),
            });
        }
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn small_grid_runs() {
        let cfg = BenchConfig {
            m_grid: vec![4],
            n_grid: vec![16, 32],
            dim: 8,
            repetitions: 3,
            min_sample: Duration::from_micros(200),
            ..BenchConfig::default()
        };
        let rows = bench_overhead(&cfg).unwrap();
        assert_eq!(rows.len(), 2);
        assert_eq!(rows[1].predicted_infer_flops, 32 * 16);
        assert!(rows.iter().all(|r| r.baseline_s > 0.0 && r.symphony_s > 0.0));
        let t = bench_table(&rows, &cfg);
        assert_eq!(t.rows.len(), 2);
    }

    #[test]
    fn rejects_bad_grids() {
        let cfg = BenchConfig { k: 5, m_grid: vec![4], ..BenchConfig::default() };
        assert!(bench_overhead(&cfg).unwrap_err().to_string().contains("K exceeds expert count"));
        assert!(bench_overhead(&BenchConfig { n_grid: vec![], ..BenchConfig::default() }).is_err());
    }
}
