//! Baseline against Symphony on matched seeds.

use super::eval::{evaluate, evaluate_split, mean_degradation};
use super::manifest::RunManifest;
use super::output::{num, Table};
use super::train::train;
use crate::error::{arg_err, Result};
use crate::moe::RoutingMode;
use crate::stats::{mean, sign_test_p};

#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonRow {
    pub seed: u64,
    /// Contamination radius (multiple of the diameter) the degradation is taken at.
    pub epsilon_rel: f64,
    pub baseline_degradation: f64,
    pub symphony_degradation: f64,
    /// Normalized selection entropy on the clean validation split.
    pub baseline_entropy: f64,
    pub symphony_entropy: f64,
}

pub const COMPARISON_COLUMNS: [&str; 6] = [
    "seed",
    "epsilon_rel",
    "baseline_degradation",
    "symphony_degradation",
    "baseline_entropy",
    "symphony_entropy",
];

#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonSummary {
    pub seeds: usize,
    pub mean_baseline_degradation: f64,
    pub mean_symphony_degradation: f64,
    /// Seeds where symphony degrades strictly less.
    pub symphony_wins: usize,
    pub untied: usize,
    /// One-sided sign test on `symphony_wins` out of `untied`.
    pub sign_test_p: f64,
    pub mean_baseline_entropy: f64,
    pub mean_symphony_entropy: f64,
}

/// Trains both modes of `manifest` for every seed and evaluates them alike.
///
/// Degradation is the test loss at `epsilon_rel` minus the clean test loss,
/// averaged over the manifest's evaluation seeds.
pub fn compare_modes(manifest: &RunManifest, seeds: &[u64], epsilon_rel: f64) -> Result<Vec<ComparisonRow>> {
    if seeds.is_empty() {
        return Err(arg_err("comparison needs at least one seed"));
    }
    if !(epsilon_rel > 0.0 && epsilon_rel.is_finite()) {
        return Err(arg_err("comparison radius must be positive"));
    }
    let mut rows = Vec::with_capacity(seeds.len());
    for &seed in seeds {
        let mut out = [(0.0, 0.0); 2];
        for (slot, mode) in [RoutingMode::Baseline, RoutingMode::Symphony].into_iter().enumerate() {
            let m = RunManifest { mode, ..manifest.with_seed(seed) };
            let run = train(&m, None)?;
            let cells = evaluate(&run.layer, &run.task, &[0.0, epsilon_rel], &m.evaluation_seeds(), m.noise)?;
            let degradation = mean_degradation(&cells)
                .into_iter()
                .find(|(e, _)| *e == epsilon_rel)
                .map_or(f64::NAN, |(_, d)| d);
            let valid = evaluate_split(&run.layer, &run.task, &run.task.valid, "valid", &[0.0], &[0], m.noise)?;
            out[slot] = (degradation, valid[0].entropy_ratio);
        }
        rows.push(ComparisonRow {
            seed,
            epsilon_rel,
            baseline_degradation: out[0].0,
            symphony_degradation: out[1].0,
            baseline_entropy: out[0].1,
            symphony_entropy: out[1].1,
        });
    }
    Ok(rows)
}

pub fn summarize_comparison(rows: &[ComparisonRow]) -> ComparisonSummary {
    let col = |f: fn(&ComparisonRow) -> f64| rows.iter().map(f).collect::<Vec<f64>>();
    let symphony_wins = rows.iter().filter(|r| r.symphony_degradation < r.baseline_degradation).count();
    let untied = rows.iter().filter(|r| r.symphony_degradation != r.baseline_degradation).count();
    ComparisonSummary {
        seeds: rows.len(),
        mean_baseline_degradation: mean(&col(|r| r.baseline_degradation)),
        mean_symphony_degradation: mean(&col(|r| r.symphony_degradation)),
        symphony_wins,
        untied,
        sign_test_p: sign_test_p(symphony_wins, untied),
        mean_baseline_entropy: mean(&col(|r| r.baseline_entropy)),
        mean_symphony_entropy: mean(&col(|r| r.symphony_entropy)),
    }
}

pub fn comparison_table(rows: &[ComparisonRow]) -> Table {
    let mut t = Table::new(&COMPARISON_COLUMNS);
    for r in rows {
        t.push(vec![
            r.seed.to_string(),
            num(r.epsilon_rel),
            num(r.baseline_degradation),
            num(r.symphony_degradation),
            num(r.baseline_entropy),
            num(r.symphony_entropy),
        ]);
    }
    t
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::TaskParams;

    #[test]
    fn small_comparison_has_one_row_per_seed() {
        let task = TaskParams { train: 256, valid: 64, test: 128, ..TaskParams::default() };
        let mut m = RunManifest::new(RoutingMode::Baseline, task, 0);
        m.experts = 4;
        m.optim.epochs = 2;
        m.eval_seeds = 2;
        let rows = compare_modes(&m, &[3, 4], 0.1).unwrap();
        assert_eq!(rows.iter().map(|r| r.seed).collect::<Vec<_>>(), vec![3, 4]);
        assert!(rows.iter().all(|r| r.baseline_degradation.is_finite() && r.symphony_entropy <= 1.0));
        let s = summarize_comparison(&rows);
        assert_eq!(s.seeds, 2);
        assert!(s.sign_test_p > 0.0 && s.sign_test_p <= 1.0);
        assert_eq!(comparison_table(&rows).rows.len(), 2);
    }

    #[test]
    fn rejects_empty_seed_lists() {
        let m = RunManifest::new(RoutingMode::Baseline, TaskParams::default(), 0);
        assert!(compare_modes(&m, &[], 0.1).is_err());
        assert!(compare_modes(&m, &[0], 0.0).is_err());
    }
}
