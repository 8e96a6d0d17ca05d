use ndarray::{Array2, Axis};

use crate::router::SelectionRecord;

/// Switch-style auxiliary loss `M * sum_j f_j P_j`.
///
/// `f_j` is the fraction of tokens whose TopK contains expert `j` and `P_j`
/// the mean dense gate of expert `j`. Uniform routing gives exactly `K`.
pub fn load_balance_loss(dense_gates: &Array2<f64>, selections: &SelectionRecord) -> f64 {
    let n = dense_gates.nrows();
    let m = dense_gates.ncols();
    if n == 0 {
        return 0.0;
    }
    let mean_gate = dense_gates.mean_axis(Axis(0)).expect("non-empty gates");
    let counts = selections.counts();
    m as f64
        * counts
            .iter()
            .zip(mean_gate.iter())
            .map(|(&c, &p)| c as f64 / n as f64 * p)
            .sum::<f64>()
}

#[derive(Debug, Clone, PartialEq)]
pub struct LoadBalanceReport {
    /// Share of all selections that went to each expert; sums to one.
    pub frequencies: Vec<f64>,
    /// Coefficient of variation of the frequencies.
    pub cv: f64,
    /// Entropy of the frequencies divided by `ln M`.
    pub entropy_ratio: f64,
}

pub fn load_balance_from_counts(counts: &[usize]) -> LoadBalanceReport {
    let m = counts.len();
    let total: usize = counts.iter().sum();
    let frequencies: Vec<f64> = if total == 0 {
        vec![0.0; m]
    } else {
        counts.iter().map(|&c| c as f64 / total as f64).collect()
    };
    let mean = 1.0 / m as f64;
    let var = frequencies.iter().map(|f| (f - mean).powi(2)).sum::<f64>() / m as f64;
    let entropy: f64 = frequencies.iter().filter(|&&f| f > 0.0).map(|&f| -f * f.ln()).sum();
    let entropy_ratio = if m > 1 { (entropy / (m as f64).ln()).clamp(0.0, 1.0) } else { 1.0 };
    LoadBalanceReport { frequencies, cv: var.sqrt() / mean, entropy_ratio }
}

/// Expert usage over one or more batches of selections.
pub fn load_balance_report<'a, I>(selections: I) -> LoadBalanceReport
where
    I: IntoIterator<Item = &'a SelectionRecord>,
{
    let mut counts: Vec<usize> = Vec::new();
    for rec in selections {
        if counts.is_empty() {
            counts = vec![0; rec.n_experts];
        }
        for (acc, c) in counts.iter_mut().zip(rec.counts()) {
            *acc += c;
        }
    }
    load_balance_from_counts(&counts)
}
