use ndarray::{Array1, Array2, Axis};

use crate::error::{arg_err, dim_err, Error, Result};
use crate::router::{softmax, topk_into, truncate_gates, GateDistribution, RouterScores, SelectionRecord, TieRule, Truncation};

/// Normalization applied to the co-selection counts before the EMA step.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
pub enum NormMode {
    /// Divide each row by its sum.
    RowNorm,
    /// Alternating row/column scaling to a symmetric doubly-stochastic matrix.
    #[default]
    Sinkhorn,
}

impl std::fmt::Display for NormMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            NormMode::RowNorm => f.write_str("RowNorm"),
            NormMode::Sinkhorn => f.write_str("Sinkhorn"),
        }
    }
}

impl std::str::FromStr for NormMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "rownorm" => Ok(Self::RowNorm),
            "sinkhorn" => Ok(Self::Sinkhorn),
            other => Err(arg_err(format!("unknown normalization mode '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SinkhornConfig {
    /// Ridge added to the diagonal so every row has support.
    pub delta: f64,
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for SinkhornConfig {
    fn default() -> Self {
        Self { delta: 1e-8, tol: 1e-12, max_iter: 10_000 }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct GraphOptions {
    /// Drop the `s_j s_j` self-counts from the accumulator.
    pub exclude_diagonal: bool,
    /// Zero normalized entries below this value and normalize again.
    pub sparsify_threshold: Option<f64>,
    pub sinkhorn: SinkhornConfig,
}

/// Row-normalizes `counts`; all-zero rows become identity rows.
pub fn row_normalize(counts: &Array2<f64>) -> Array2<f64> {
    let mut out = counts.clone();
    for (j, mut row) in out.rows_mut().into_iter().enumerate() {
        let total: f64 = row.sum();
        if total > 0.0 {
            row.mapv_inplace(|v| v / total);
        } else {
            row.fill(0.0);
            row[j] = 1.0;
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SinkhornStats {
    pub iterations: usize,
    /// Largest deviation of any row or column sum from one, before symmetrization.
    pub residual: f64,
}

/// Sinkhorn balancing of `counts + delta * I`, symmetrized on exit.
pub fn sinkhorn(counts: &Array2<f64>, cfg: &SinkhornConfig) -> (Array2<f64>, SinkhornStats) {
    let m = counts.nrows();
    let mut x: Vec<f64> = counts.iter().copied().collect();
    for j in 0..m {
        x[j * m + j] += cfg.delta;
    }
    let (mut rows, mut cols) = (vec![0.0; m], vec![0.0; m]);
    let sums = |x: &[f64], rows: &mut [f64], cols: &mut [f64]| {
        rows.fill(0.0);
        cols.fill(0.0);
        for (r, row) in x.chunks_exact(m).enumerate() {
            for (c, v) in cols.iter_mut().zip(row) {
                rows[r] += v;
                *c += v;
            }
        }
        rows.iter().chain(cols.iter()).map(|s| (s - 1.0).abs()).fold(0.0, f64::max)
    };
    let mut iterations = 0;
    let mut residual = sums(&x, &mut rows, &mut cols);
    while residual > cfg.tol && iterations < cfg.max_iter {
        cols.fill(0.0);
        for (row, s) in x.chunks_exact_mut(m).zip(&rows) {
            let inv = 1.0 / s;
            for (v, c) in row.iter_mut().zip(cols.iter_mut()) {
                *v *= inv;
                *c += *v;
            }
        }
        cols.iter_mut().for_each(|c| *c = 1.0 / *c);
        let mut row_dev: f64 = 0.0;
        for (row, r) in x.chunks_exact_mut(m).zip(rows.iter_mut()) {
            row.iter_mut().zip(&cols).for_each(|(v, inv)| *v *= inv);
            *r = lane_sum(row);
            row_dev = row_dev.max((*r - 1.0).abs());
        }
        iterations += 1;
        // columns are one up to rounding right after the column step
        residual = row_dev;
    }
    residual = sums(&x, &mut rows, &mut cols);
    let x = Array2::from_shape_vec((m, m), x).expect("square buffer");
    let sym = (&x + &x.t()) * 0.5;
    (sym, SinkhornStats { iterations, residual })
}

fn lane_sum(xs: &[f64]) -> f64 {
    let mut acc = [0.0; 4];
    let chunks = xs.chunks_exact(4);
    let tail: f64 = chunks.remainder().iter().sum();
    for c in chunks {
        acc.iter_mut().zip(c).for_each(|(a, v)| *a += v);
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

/// Co-selection counts `sum_i s_i s_i^T` for one batch of selections.
pub fn coselect_counts(selections: &SelectionRecord, exclude_diagonal: bool) -> Result<Array2<f64>> {
    let m = selections.n_experts;
    let mut counts = Array2::zeros((m, m));
    for (i, sel) in selections.tokens.iter().enumerate() {
        if let Some(&bad) = sel.indices.iter().find(|&&j| j >= m) {
            return Err(arg_err(format!("token {i} selects expert {bad} but M={m}")));
        }
        for &j in &sel.indices {
            for &k in &sel.indices {
                if j != k || !exclude_diagonal {
                    counts[[j, k]] += 1.0;
                }
            }
        }
    }
    Ok(counts)
}

/// Expert social graph: smoothed adjacency `A` plus the raw co-selection window.
///
/// `A` starts as the zero matrix. Until the first normalize step the graph is
/// bypassed and routing falls back to the base gate.
#[derive(Debug, Clone, PartialEq)]
pub struct AdjacencyState {
    a: Array2<f64>,
    accumulator: Array2<f64>,
    beta: f64,
    norm_mode: NormMode,
    update_count: u64,
    frozen: bool,
    last_sinkhorn: Option<SinkhornStats>,
    pub options: GraphOptions,
}

impl AdjacencyState {
    pub fn new(m: usize, beta: f64, norm_mode: NormMode) -> Result<Self> {
        if m == 0 {
            return Err(arg_err("adjacency needs at least one expert"));
        }
        if !(0.0..1.0).contains(&beta) {
            return Err(arg_err(format!("beta must lie in [0, 1), got {beta}")));
        }
        Ok(Self {
            a: Array2::zeros((m, m)),
            accumulator: Array2::zeros((m, m)),
            beta,
            norm_mode,
            update_count: 0,
            frozen: false,
            last_sinkhorn: None,
            options: GraphOptions::default(),
        })
    }

    /// State with a given smoothed adjacency, as if `updates` normalize steps had run.
    pub fn from_matrix(a: Array2<f64>, norm_mode: NormMode, beta: f64, updates: u64) -> Result<Self> {
        if a.nrows() != a.ncols() {
            return Err(dim_err(format!("adjacency must be square, got {}x{}", a.nrows(), a.ncols())));
        }
        if a.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(arg_err("adjacency entries must be finite and nonnegative"));
        }
        let mut state = Self::new(a.nrows(), beta, norm_mode)?;
        if updates == 0 && a.iter().any(|v| *v != 0.0) {
            return Err(arg_err("an adjacency with zero updates must be the zero matrix"));
        }
        state.a = a;
        state.update_count = updates;
        Ok(state)
    }

    pub fn identity(m: usize, norm_mode: NormMode) -> Self {
        Self::from_matrix(Array2::eye(m), norm_mode, 0.9, 1).expect("identity is a valid adjacency")
    }

    pub fn n_experts(&self) -> usize {
        self.a.nrows()
    }

    pub fn matrix(&self) -> &Array2<f64> {
        &self.a
    }

    pub fn accumulator(&self) -> &Array2<f64> {
        &self.accumulator
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn norm_mode(&self) -> NormMode {
        self.norm_mode
    }

    pub fn update_count(&self) -> u64 {
        self.update_count
    }

    pub fn is_frozen(&self) -> bool {
        self.frozen
    }

    pub fn set_frozen(&mut self, frozen: bool) {
        self.frozen = frozen;
    }

    /// Adds `sum_i s_i s_i^T` over the selected experts of every token.
    pub fn accumulate_coselect(&mut self, selections: &SelectionRecord) -> Result<()> {
        if self.frozen {
            return Err(Error::Frozen);
        }
        if selections.n_experts != self.n_experts() {
            return Err(dim_err(format!(
                "selections over {} experts, adjacency has {}",
                selections.n_experts,
                self.n_experts()
            )));
        }
        let counts = coselect_counts(selections, self.options.exclude_diagonal)?;
        self.merge_counts(&counts)
    }

    /// Adds a partial count matrix computed elsewhere, e.g. on another thread.
    pub fn merge_counts(&mut self, counts: &Array2<f64>) -> Result<()> {
        if self.frozen {
            return Err(Error::Frozen);
        }
        if counts.dim() != self.accumulator.dim() {
            return Err(dim_err("partial counts do not match the adjacency shape"));
        }
        self.accumulator += counts;
        Ok(())
    }

    fn normalized_accumulator(&self) -> (Array2<f64>, Option<SinkhornStats>) {
        let normalize = |x: &Array2<f64>| match self.norm_mode {
            NormMode::RowNorm => (row_normalize(x), None),
            NormMode::Sinkhorn => {
                let (a, stats) = sinkhorn(x, &self.options.sinkhorn);
                (a, Some(stats))
            }
        };
        let (mut fresh, mut stats) = normalize(&self.accumulator);
        if let Some(threshold) = self.options.sparsify_threshold {
            fresh.mapv_inplace(|v| if v < threshold { 0.0 } else { v });
            (fresh, stats) = normalize(&fresh);
        }
        (fresh, stats)
    }

    /// Balancing statistics of the most recent Sinkhorn normalization.
    ///
    /// A residual above the configured tolerance means the window's count
    /// pattern lacks total support, which happens mostly with
    /// `exclude_diagonal`; the smoothed graph is then only approximately
    /// doubly stochastic.
    pub fn sinkhorn_stats(&self) -> Option<SinkhornStats> {
        self.last_sinkhorn
    }

    /// Normalizes the window, folds it into `A` by EMA and clears the window.
    ///
    /// The first update assigns the normalized window directly.
    pub fn normalize_and_ema(&mut self) -> Result<()> {
        if self.frozen {
            return Err(Error::Frozen);
        }
        let (fresh, stats) = self.normalized_accumulator();
        self.last_sinkhorn = stats;
        if self.update_count == 0 {
            self.a = fresh;
        } else {
            let beta = self.beta;
            self.a.zip_mut_with(&fresh, |a, f| *a = *a * beta + f * (1.0 - beta));
        }
        self.accumulator.fill(0.0);
        self.update_count += 1;
        Ok(())
    }

    /// `A · g` for every dense gate row. Bypassed before the first update.
    pub fn symphony_gate(&self, dense: &GateDistribution) -> Result<GateDistribution> {
        if dense.gates.ncols() != self.n_experts() {
            return Err(dim_err(format!(
                "gates over {} experts, adjacency has {}",
                dense.gates.ncols(),
                self.n_experts()
            )));
        }
        if self.update_count == 0 {
            return Ok(dense.clone());
        }
        Ok(GateDistribution::dense(dense.gates.dot(&self.a.t())))
    }

    /// Smoothed routing: softmax, smoothing by `A`, then TopK on the smoothed gates.
    pub fn route(&self, scores: &RouterScores, k: usize, convention: Truncation) -> Result<SymphonyRouting> {
        let dense = softmax(scores);
        let smoothed = self.symphony_gate(&dense)?;
        let (gates, selection) = truncate_gates(&smoothed.gates, k, convention)?;
        Ok(SymphonyRouting { dense, smoothed, gates, selection })
    }

    /// [`route`](Self::route), then count the base-gate TopK unless frozen.
    pub fn route_and_count(&mut self, scores: &RouterScores, k: usize, convention: Truncation) -> Result<SymphonyRouting> {
        let routing = self.route(scores, k, convention)?;
        if !self.frozen {
            self.accumulate_topk(&routing.dense.gates, k)?;
        }
        Ok(routing)
    }

    /// Counts the TopK sets of the given gate rows without materializing them.
    pub fn accumulate_topk(&mut self, gates: &Array2<f64>, k: usize) -> Result<()> {
        if self.frozen {
            return Err(Error::Frozen);
        }
        let m = self.n_experts();
        if gates.ncols() != m {
            return Err(dim_err(format!("gates over {} experts, adjacency has {m}", gates.ncols())));
        }
        if k == 0 || k > m {
            return Err(arg_err(format!("K exceeds expert count (K={k}, M={m})")));
        }
        let mut idx = Vec::with_capacity(k);
        let standard = gates.as_standard_layout();
        let rows = standard.as_slice().expect("standard layout");
        let exclude = self.options.exclude_diagonal;
        let acc = self.accumulator.as_slice_mut().expect("owned accumulator is contiguous");
        for row in rows.chunks_exact(m) {
            topk_into(row, k, TieRule::LowestIndex, &mut idx);
            for &j in &idx {
                for &l in &idx {
                    if j != l || !exclude {
                        acc[j * m + l] += 1.0;
                    }
                }
            }
        }
        Ok(())
    }

    /// Row sums of `A`; reported rather than asserted under RowNorm.
    pub fn row_sums(&self) -> Array1<f64> {
        self.a.sum_axis(Axis(1))
    }
}

/// Everything produced by one smoothed routing pass.
#[derive(Debug, Clone)]
pub struct SymphonyRouting {
    pub dense: GateDistribution,
    pub smoothed: GateDistribution,
    /// Sparse mixing weights taken from the smoothed gates.
    pub gates: GateDistribution,
    pub selection: SelectionRecord,
}

impl SymphonyRouting {
    /// TopK of the unsmoothed softmax; this is what gets counted.
    pub fn base_selection(&self, k: usize) -> Result<SelectionRecord> {
        Ok(truncate_gates(&self.dense.gates, k, Truncation::Renormalized)?.1)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::router::{gate_softmax_first, Selection};
    use crate::rng::rng_from;
    use ndarray::array;
    use rand::Rng as _;

    fn record(m: usize, sets: &[&[usize]]) -> SelectionRecord {
        SelectionRecord {
            n_experts: m,
            k: sets.first().map_or(0, |s| s.len()),
            tokens: sets
                .iter()
                .map(|s| Selection { indices: s.to_vec(), weights: vec![1.0 / s.len() as f64; s.len()] })
                .collect(),
        }
    }

    #[test]
    fn three_token_counts() {
        let mut st = AdjacencyState::new(4, 0.9, NormMode::RowNorm).unwrap();
        st.accumulate_coselect(&record(4, &[&[0, 1], &[0, 1], &[1, 2]])).unwrap();
        let expected = array![
            [2.0, 2.0, 0.0, 0.0],
            [2.0, 3.0, 1.0, 0.0],
            [0.0, 1.0, 1.0, 0.0],
            [0.0, 0.0, 0.0, 0.0]
        ];
        assert_eq!(st.accumulator(), &expected);

        st.normalize_and_ema().unwrap();
        let a = st.matrix();
        assert_eq!(a.row(0).to_vec(), vec![0.5, 0.5, 0.0, 0.0]);
        let r1 = a.row(1);
        assert!((r1[0] - 1.0 / 3.0).abs() < 1e-15 && (r1[1] - 0.5).abs() < 1e-15 && (r1[2] - 1.0 / 6.0).abs() < 1e-15);
        assert_eq!(a.row(3).to_vec(), vec![0.0, 0.0, 0.0, 1.0]);
        assert_eq!(st.accumulator(), &Array2::<f64>::zeros((4, 4)));
        assert_eq!(st.update_count(), 1);
    }

    #[test]
    fn empty_and_single_selection() {
        let mut st = AdjacencyState::new(3, 0.9, NormMode::Sinkhorn).unwrap();
        st.accumulate_coselect(&record(3, &[])).unwrap();
        assert_eq!(st.accumulator(), &Array2::<f64>::zeros((3, 3)));
        st.accumulate_coselect(&record(3, &[&[2]])).unwrap();
        let mut expected = Array2::zeros((3, 3));
        expected[[2, 2]] = 1.0;
        assert_eq!(st.accumulator(), &expected);
    }

    #[test]
    fn exclude_diagonal_flag() {
        let mut st = AdjacencyState::new(3, 0.9, NormMode::RowNorm).unwrap();
        st.options.exclude_diagonal = true;
        st.accumulate_coselect(&record(3, &[&[0, 2]])).unwrap();
        assert_eq!(st.accumulator(), &array![[0.0, 0.0, 1.0], [0.0, 0.0, 0.0], [1.0, 0.0, 0.0]]);
    }

    #[test]
    fn out_of_range_index_and_frozen() {
        let mut st = AdjacencyState::new(3, 0.9, NormMode::RowNorm).unwrap();
        assert!(st.accumulate_coselect(&record(3, &[&[0, 3]])).is_err());
        st.set_frozen(true);
        assert!(matches!(st.accumulate_coselect(&record(3, &[&[0, 1]])), Err(Error::Frozen)));
        assert!(matches!(st.normalize_and_ema(), Err(Error::Frozen)));
    }

    #[test]
    fn identity_accumulator_normalizes_to_identity() {
        for mode in [NormMode::RowNorm, NormMode::Sinkhorn] {
            let mut st = AdjacencyState::new(4, 0.5, mode).unwrap();
            st.merge_counts(&Array2::eye(4)).unwrap();
            st.normalize_and_ema().unwrap();
            for (a, b) in st.matrix().iter().zip(Array2::<f64>::eye(4).iter()) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn zero_accumulator_gives_identity() {
        for mode in [NormMode::RowNorm, NormMode::Sinkhorn] {
            let mut st = AdjacencyState::new(3, 0.5, mode).unwrap();
            st.normalize_and_ema().unwrap();
            for (a, b) in st.matrix().iter().zip(Array2::<f64>::eye(3).iter()) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn ema_mixing() {
        let mut st = AdjacencyState::new(2, 0.0, NormMode::RowNorm).unwrap();
        st.merge_counts(&array![[1.0, 1.0], [1.0, 1.0]]).unwrap();
        st.normalize_and_ema().unwrap();
        st.merge_counts(&array![[1.0, 0.0], [0.0, 1.0]]).unwrap();
        st.normalize_and_ema().unwrap();
        assert_eq!(st.matrix(), &Array2::<f64>::eye(2));

        let mut st = AdjacencyState::new(2, 0.75, NormMode::RowNorm).unwrap();
        st.merge_counts(&array![[1.0, 1.0], [1.0, 1.0]]).unwrap();
        st.normalize_and_ema().unwrap();
        assert_eq!(st.matrix(), &array![[0.5, 0.5], [0.5, 0.5]]);
        st.merge_counts(&array![[1.0, 0.0], [0.0, 1.0]]).unwrap();
        st.normalize_and_ema().unwrap();
        assert_eq!(st.matrix(), &array![[0.625, 0.375], [0.375, 0.625]]);
    }

    #[test]
    fn sinkhorn_invariants_on_random_counts() {
        let mut rng = rng_from(3);
        for _ in 0..50 {
            let m = rng.random_range(2..12);
            let mut st = AdjacencyState::new(m, 0.9, NormMode::Sinkhorn).unwrap();
            for _ in 0..3 {
                let mut counts = Array2::<f64>::zeros((m, m));
                for _ in 0..rng.random_range(1..30) {
                    let j = rng.random_range(0..m);
                    let k = rng.random_range(0..m);
                    counts[[j, j]] += 1.0;
                    if j != k {
                        counts[[k, k]] += 1.0;
                        counts[[j, k]] += 1.0;
                        counts[[k, j]] += 1.0;
                    }
                }
                st.merge_counts(&counts).unwrap();
                st.normalize_and_ema().unwrap();
                let a = st.matrix();
                for j in 0..m {
                    for k in 0..m {
                        assert!((a[[j, k]] - a[[k, j]]).abs() < 1e-9);
                        assert!((0.0..=1.0 + 1e-12).contains(&a[[j, k]]));
                    }
                }
                for s in a.sum_axis(Axis(0)).iter().chain(a.sum_axis(Axis(1)).iter()) {
                    assert!((s - 1.0).abs() < 1e-6);
                }
            }
        }
    }

    #[test]
    fn sparsify_threshold_drops_weak_edges() {
        let mut st = AdjacencyState::new(3, 0.9, NormMode::RowNorm).unwrap();
        st.options.sparsify_threshold = Some(0.2);
        st.merge_counts(&array![[10.0, 1.0, 0.0], [1.0, 10.0, 0.0], [0.0, 0.0, 1.0]]).unwrap();
        st.normalize_and_ema().unwrap();
        assert_eq!(st.matrix(), &Array2::<f64>::eye(3));
    }

    #[test]
    fn gate_examples() {
        let g = GateDistribution::dense(array![[0.9, 0.1], [0.3, 0.7]]);
        let st = AdjacencyState::identity(2, NormMode::Sinkhorn);
        assert_eq!(st.symphony_gate(&g).unwrap().gates, g.gates);

        let st = AdjacencyState::from_matrix(array![[0.5, 0.5], [0.5, 0.5]], NormMode::Sinkhorn, 0.9, 1).unwrap();
        let out = st.symphony_gate(&GateDistribution::dense(array![[0.9, 0.1]])).unwrap();
        assert_eq!(out.gates, array![[0.5, 0.5]]);

        let m = 5;
        let st = AdjacencyState::from_matrix(Array2::from_elem((m, m), 0.2), NormMode::Sinkhorn, 0.9, 1).unwrap();
        let out = st.symphony_gate(&GateDistribution::dense(array![[0.1, 0.6, 0.1, 0.1, 0.1]])).unwrap();
        assert!(out.gates.iter().all(|v| (v - 0.2).abs() < 1e-15));

        let bad = GateDistribution::dense(array![[0.5, 0.5, 0.0]]);
        assert!(matches!(st.symphony_gate(&bad), Err(Error::Dimension(_))));
    }

    #[test]
    fn zero_state_bypasses_smoothing() {
        let st = AdjacencyState::new(3, 0.9, NormMode::Sinkhorn).unwrap();
        let g = GateDistribution::dense(array![[0.2, 0.5, 0.3]]);
        assert_eq!(st.symphony_gate(&g).unwrap(), g);
    }

    #[test]
    fn route_three_expert_example() {
        let a = array![[1.0, 0.0, 0.0], [0.0, 0.5, 0.5], [0.0, 0.5, 0.5]];
        let st = AdjacencyState::from_matrix(a, NormMode::RowNorm, 0.9, 1).unwrap();
        let scores = RouterScores(array![[0.2f64.ln(), 0.5f64.ln(), 0.3f64.ln()]]);
        let r = st.route(&scores, 2, Truncation::Raw).unwrap();
        assert_eq!(r.selection.tokens[0].indices, vec![1, 2]);
        assert!((r.gates.gates[[0, 1]] - 0.4).abs() < 1e-12);
        assert!((r.gates.gates[[0, 2]] - 0.4).abs() < 1e-12);
        assert_eq!(r.gates.gates[[0, 0]], 0.0);
        assert_eq!(r.base_selection(2).unwrap().tokens[0].indices, vec![1, 2]);
    }

    #[test]
    fn identity_route_matches_baseline() {
        let mut rng = rng_from(9);
        let st = AdjacencyState::identity(6, NormMode::Sinkhorn);
        let scores = RouterScores(Array2::from_shape_fn((20, 6), |_| rng.random::<f64>() * 4.0 - 2.0));
        for conv in [Truncation::Raw, Truncation::Renormalized] {
            let r = st.route(&scores, 2, conv).unwrap();
            let (g, sel) = gate_softmax_first(&scores, 2, conv).unwrap();
            assert_eq!(r.gates, g);
            assert_eq!(r.selection, sel);
        }
    }

    #[test]
    fn counting_uses_base_selection() {
        let a = array![[0.0, 0.5, 0.5], [0.5, 0.0, 0.5], [0.5, 0.5, 0.0]];
        let mut st = AdjacencyState::from_matrix(a, NormMode::Sinkhorn, 0.9, 1).unwrap();
        let scores = RouterScores(array![[3.0, 0.0, -3.0]]);
        let r = st.route_and_count(&scores, 1, Truncation::Raw).unwrap();
        assert_eq!(r.base_selection(1).unwrap().tokens[0].indices, vec![0]);
        assert_ne!(r.selection.tokens[0].indices, vec![0]);
        assert_eq!(st.accumulator()[[0, 0]], 1.0);
        assert_eq!(st.accumulator().sum(), 1.0);

        st.set_frozen(true);
        st.route_and_count(&scores, 1, Truncation::Raw).unwrap();
        assert_eq!(st.accumulator().sum(), 1.0);
    }

    #[test]
    fn rejects_bad_construction() {
        assert!(AdjacencyState::new(3, 1.0, NormMode::RowNorm).is_err());
        assert!(AdjacencyState::new(3, -0.1, NormMode::RowNorm).is_err());
        assert!(AdjacencyState::from_matrix(Array2::eye(3), NormMode::RowNorm, 0.9, 0).is_err());
        assert!(AdjacencyState::from_matrix(Array2::zeros((2, 3)), NormMode::RowNorm, 0.9, 1).is_err());
    }
}
