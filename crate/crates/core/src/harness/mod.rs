//! Synthetic tasks, contamination, training, evaluation and routing benchmarks.

mod bench;
mod compare;
mod contaminate;
mod eval;
mod manifest;
mod output;
mod task;
mod train;

pub use bench::{bench_overhead, bench_table, BenchConfig, BenchRow, BENCH_COLUMNS};
pub use compare::{
    compare_modes, comparison_table, summarize_comparison, ComparisonRow, ComparisonSummary, COMPARISON_COLUMNS,
};
pub use contaminate::contaminate;
pub use eval::{adjacency_fingerprint, evaluate, evaluate_split, mean_degradation, metrics_table, MetricsRow, METRICS_COLUMNS};
pub use manifest::{default_epsilon_grid, OptimParams, RunManifest};
pub use output::{join_values, num, Table};
pub use task::{generate_task, nearest_center, Dataset, SyntheticTask, TaskKind, TaskParams};
pub use train::{build_layer, curve_table, graph_rho, infer, task_loss, train, EpochRow, TrainOutcome, CURVE_COLUMNS};
