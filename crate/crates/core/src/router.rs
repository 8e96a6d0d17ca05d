//! Base router scores, softmax gating and the two TopK placements.
//!
//! A router maps each token `x` to one logit per expert. Three families are
//! supported: the affine router `Wx + b`, the cosine router that scores a
//! normalized low-dimensional projection against unit expert embeddings, and
//! the random router, which is the affine router with frozen parameters.

use ndarray::{Array1, Array2, ArrayView1, Axis};
use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{arg_err, dim_err, Error, Result};
use crate::rng::Rng;

/// Smallest norm used when normalizing a projected token in the cosine router.
pub const MIN_PROJECTED_NORM: f64 = 1e-12;

/// N×D matrix of token embeddings.
#[derive(Debug, Clone, PartialEq)]
pub struct TokenBatch {
    data: Array2<f64>,
}

impl TokenBatch {
    pub fn new(data: Array2<f64>) -> Result<Self> {
        if data.nrows() == 0 || data.ncols() == 0 {
            return Err(arg_err("token batch must have at least one token and one dimension"));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(arg_err("token batch contains non-finite entries"));
        }
        Ok(Self { data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let d = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != d) {
            return Err(dim_err("ragged token rows"));
        }
        let flat: Vec<f64> = rows.iter().flatten().copied().collect();
        let data = Array2::from_shape_vec((rows.len(), d), flat).map_err(|e| dim_err(e.to_string()))?;
        Self::new(data)
    }

    pub fn n_tokens(&self) -> usize {
        self.data.nrows()
    }

    pub fn dim(&self) -> usize {
        self.data.ncols()
    }

    pub fn data(&self) -> &Array2<f64> {
        &self.data
    }

    pub fn token(&self, i: usize) -> ArrayView1<'_, f64> {
        self.data.row(i)
    }

    pub fn into_inner(self) -> Array2<f64> {
        self.data
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
pub enum RouterKind {
    Linear,
    Cosine,
    Random,
}

impl std::str::FromStr for RouterKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "linear" => Ok(Self::Linear),
            "cosine" => Ok(Self::Cosine),
            "random" => Ok(Self::Random),
            other => Err(arg_err(format!("unknown router kind '{other}'"))),
        }
    }
}

/// What the cosine router does with a projected token of zero norm.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub enum ZeroNormPolicy {
    /// Treat the norm as [`MIN_PROJECTED_NORM`]; the scores become zero.
    #[default]
    Clamp,
    Reject,
}

/// Projection `Ω` (De×D), unit-norm expert embeddings `E` (M×De) and temperature.
#[derive(Debug, Clone, PartialEq)]
pub struct CosineParams {
    pub projection: Array2<f64>,
    pub experts: Array2<f64>,
    pub temperature: f64,
    pub zero_norm: ZeroNormPolicy,
}

impl CosineParams {
    /// Rescales every expert embedding to unit length.
    pub fn renormalize_experts(&mut self) {
        for mut row in self.experts.rows_mut() {
            let n = row.dot(&row).sqrt().max(MIN_PROJECTED_NORM);
            row.mapv_inplace(|v| v / n);
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RouterParams {
    pub kind: RouterKind,
    /// Expert embeddings, one row per expert (M×D).
    pub weight: Array2<f64>,
    pub bias: Array1<f64>,
    pub cosine: Option<CosineParams>,
}

impl RouterParams {
    pub fn linear(weight: Array2<f64>, bias: Array1<f64>) -> Result<Self> {
        Self::affine(RouterKind::Linear, weight, bias)
    }

    /// Affine router whose parameters are never trained.
    pub fn random(weight: Array2<f64>, bias: Array1<f64>) -> Result<Self> {
        Self::affine(RouterKind::Random, weight, bias)
    }

    /// Affine router with `b_j = -|w_j|^2 / 2`, the isotropic unit-variance
    /// Gaussian likelihood with uniform prior. Its argmax is the nearest center.
    pub fn gaussian(weight: Array2<f64>) -> Result<Self> {
        let bias = weight.rows().into_iter().map(|w| -0.5 * w.dot(&w)).collect();
        Self::linear(weight, bias)
    }

    fn affine(kind: RouterKind, weight: Array2<f64>, bias: Array1<f64>) -> Result<Self> {
        if weight.nrows() == 0 {
            return Err(arg_err("a router needs at least one expert"));
        }
        if weight.ncols() == 0 {
            return Err(arg_err("router dimension must be positive"));
        }
        if bias.len() != weight.nrows() {
            return Err(dim_err(format!("bias has {} entries for {} experts", bias.len(), weight.nrows())));
        }
        if weight.iter().chain(bias.iter()).any(|v| !v.is_finite()) {
            return Err(arg_err("router parameters must be finite"));
        }
        Ok(Self { kind, weight, bias, cosine: None })
    }

    pub fn cosine(projection: Array2<f64>, experts: Array2<f64>, temperature: f64) -> Result<Self> {
        let m = experts.nrows();
        let d = projection.ncols();
        if m == 0 {
            return Err(arg_err("a router needs at least one expert"));
        }
        if projection.nrows() != experts.ncols() {
            return Err(dim_err(format!(
                "projection maps to {} dims but expert embeddings have {}",
                projection.nrows(),
                experts.ncols()
            )));
        }
        if !(temperature > 0.0 && temperature.is_finite()) {
            return Err(arg_err("cosine temperature must be positive"));
        }
        if projection.iter().chain(experts.iter()).any(|v| !v.is_finite()) {
            return Err(arg_err("router parameters must be finite"));
        }
        for (j, row) in experts.rows().into_iter().enumerate() {
            if (row.dot(&row).sqrt() - 1.0).abs() > 1e-9 {
                return Err(arg_err(format!("cosine expert embedding {j} is not unit norm")));
            }
        }
        Ok(Self {
            kind: RouterKind::Cosine,
            weight: Array2::zeros((m, d)),
            bias: Array1::zeros(m),
            cosine: Some(CosineParams {
                projection,
                experts,
                temperature,
                zero_norm: ZeroNormPolicy::Clamp,
            }),
        })
    }

    /// Random initialization for any router family; weights ~ N(0, scale^2).
    pub fn init(kind: RouterKind, m: usize, d: usize, scale: f64, rng: &mut Rng) -> Result<Self> {
        let mut normal = |rows: usize, cols: usize| {
            Array2::from_shape_fn((rows, cols), |_| {
                let z: f64 = StandardNormal.sample(rng);
                scale * z
            })
        };
        match kind {
            RouterKind::Linear => Self::linear(normal(m, d), Array1::zeros(m)),
            RouterKind::Random => {
                let w = normal(m, d);
                Self::random(w, Array1::zeros(m))
            }
            RouterKind::Cosine => {
                let de = d.clamp(1, 8);
                let projection = normal(de, d);
                let mut experts = normal(m, de);
                for mut row in experts.rows_mut() {
                    let n = row.dot(&row).sqrt().max(MIN_PROJECTED_NORM);
                    row.mapv_inplace(|v| v / n);
                }
                Self::cosine(projection, experts, 1.0)
            }
        }
    }

    pub fn n_experts(&self) -> usize {
        match &self.cosine {
            Some(c) => c.experts.nrows(),
            None => self.weight.nrows(),
        }
    }

    pub fn dim(&self) -> usize {
        match &self.cosine {
            Some(c) => c.projection.ncols(),
            None => self.weight.ncols(),
        }
    }

    pub fn is_trainable(&self) -> bool {
        self.kind != RouterKind::Random
    }
}

/// Router logits, one row per token.
#[derive(Debug, Clone, PartialEq)]
pub struct RouterScores(pub Array2<f64>);

impl RouterScores {
    pub fn n_tokens(&self) -> usize {
        self.0.nrows()
    }

    pub fn n_experts(&self) -> usize {
        self.0.ncols()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GateKind {
    Dense,
    Sparse { k: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct GateDistribution {
    pub gates: Array2<f64>,
    pub kind: GateKind,
}

impl GateDistribution {
    pub fn dense(gates: Array2<f64>) -> Self {
        Self { gates, kind: GateKind::Dense }
    }

    pub fn row_sums(&self) -> Array1<f64> {
        self.gates.sum_axis(Axis(1))
    }
}

/// Experts chosen for one token, ascending, with their normalized weights.
#[derive(Debug, Clone, PartialEq)]
pub struct Selection {
    pub indices: Vec<usize>,
    pub weights: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SelectionRecord {
    pub n_experts: usize,
    pub k: usize,
    pub tokens: Vec<Selection>,
}

impl SelectionRecord {
    /// Number of times each expert was selected.
    pub fn counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.n_experts];
        for sel in &self.tokens {
            for &j in &sel.indices {
                counts[j] += 1;
            }
        }
        counts
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub enum TieRule {
    #[default]
    LowestIndex,
    HighestIndex,
}

/// How gates that survive TopK after the softmax are reported.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
pub enum Truncation {
    /// Keep the surviving values as they are.
    #[default]
    Raw,
    /// Divide the survivors by their sum.
    Renormalized,
}

impl std::str::FromStr for Truncation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "raw" => Ok(Self::Raw),
            "renormalized" | "renorm" => Ok(Self::Renormalized),
            other => Err(arg_err(format!("unknown truncation convention '{other}'"))),
        }
    }
}

pub fn compute_scores(params: &RouterParams, batch: &TokenBatch) -> Result<RouterScores> {
    if params.dim() != batch.dim() {
        return Err(dim_err(format!("router expects dimension {} but tokens have {}", params.dim(), batch.dim())));
    }
    match params.kind {
        RouterKind::Linear | RouterKind::Random => {
            let mut scores = batch.data().dot(&params.weight.t());
            scores += &params.bias;
            Ok(RouterScores(scores))
        }
        RouterKind::Cosine => {
            let c = params
                .cosine
                .as_ref()
                .ok_or_else(|| arg_err("cosine router is missing its projection parameters"))?;
            let mut projected = batch.data().dot(&c.projection.t());
            for (i, mut row) in projected.rows_mut().into_iter().enumerate() {
                let norm = row.dot(&row).sqrt();
                if norm < MIN_PROJECTED_NORM && c.zero_norm == ZeroNormPolicy::Reject {
                    return Err(Error::Numerical {
                        message: format!("token {i} projects to the zero vector"),
                        dump: String::new(),
                    });
                }
                let norm = norm.max(MIN_PROJECTED_NORM);
                row.mapv_inplace(|v| v / norm);
            }
            let mut scores = projected.dot(&c.experts.t());
            scores.mapv_inplace(|v| v / c.temperature);
            Ok(RouterScores(scores))
        }
    }
}

/// Max-subtracted softmax of one row. `-inf` entries map to exactly zero.
pub fn softmax_row(logits: &[f64]) -> Vec<f64> {
    let mut out = logits.to_vec();
    softmax_in_place(&mut out);
    out
}

fn softmax_in_place(row: &mut [f64]) {
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut total = 0.0;
    for v in row.iter_mut() {
        *v = if *v == f64::NEG_INFINITY { 0.0 } else { (*v - max).exp() };
        total += *v;
    }
    row.iter_mut().for_each(|v| *v /= total);
}

pub fn softmax(scores: &RouterScores) -> GateDistribution {
    let mut gates = scores.0.clone();
    for mut row in gates.rows_mut() {
        softmax_in_place(row.as_slice_mut().expect("owned rows are contiguous"));
    }
    GateDistribution::dense(gates)
}

/// Indices of the `k` largest values, returned in ascending order.
pub fn topk_select(values: &[f64], k: usize, tie: TieRule) -> Result<Vec<usize>> {
    if k == 0 || k > values.len() {
        return Err(arg_err(format!("K={k} must lie in 1..={}", values.len())));
    }
    let mut out = Vec::with_capacity(k);
    topk_into(values, k, tie, &mut out);
    Ok(out)
}

/// Integer key with the same order as `f64::total_cmp`.
#[inline]
fn order_key(v: f64) -> i64 {
    let b = v.to_bits() as i64;
    b ^ (((b >> 63) as u64) >> 1) as i64
}

/// Insertion-based TopK into `out`; `k` must already be valid.
pub(crate) fn topk_into(values: &[f64], k: usize, tie: TieRule, out: &mut Vec<usize>) {
    out.clear();
    if k > 8 {
        out.extend(0..values.len());
        out.sort_by(|&a, &b| {
            values[b].total_cmp(&values[a]).then(match tie {
                TieRule::LowestIndex => a.cmp(&b),
                TieRule::HighestIndex => b.cmp(&a),
            })
        });
        out.truncate(k);
        out.sort_unstable();
        return;
    }
    // best-first buffer of (key, index), filled by branch-free compare-swap;
    // later indices win ties only under HighestIndex
    let later_wins = tie == TieRule::HighestIndex;
    let beats = |a: (i64, usize), b: (i64, usize)| {
        b.1 == usize::MAX || a.0 > b.0 || (a.0 == b.0 && ((a.1 > b.1) == later_wins))
    };
    let mut best = [(i64::MIN, usize::MAX); 8];
    let slots = &mut best[..k];
    for (j, &v) in values.iter().enumerate() {
        let mut carry = (order_key(v), j);
        if !beats(carry, slots[k - 1]) {
            continue;
        }
        for slot in slots.iter_mut() {
            let (hi, lo) = if beats(carry, *slot) { (carry, *slot) } else { (*slot, carry) };
            *slot = hi;
            carry = lo;
        }
    }
    let chosen = &mut best[..k];
    for i in 1..k {
        let mut p = i;
        while p > 0 && chosen[p - 1].1 > chosen[p].1 {
            chosen.swap(p, p - 1);
            p -= 1;
        }
    }
    out.extend(chosen.iter().map(|&(_, j)| j));
}

fn check_k(k: usize, m: usize) -> Result<()> {
    if k == 0 || k > m {
        return Err(arg_err(format!("K exceeds expert count (K={k}, M={m})")));
    }
    Ok(())
}

/// Mask every non-TopK logit to `-inf`, then softmax the survivors.
pub fn gate_logits_first(scores: &RouterScores, k: usize) -> Result<(GateDistribution, SelectionRecord)> {
    let m = scores.n_experts();
    check_k(k, m)?;
    let mut gates = Array2::zeros(scores.0.raw_dim());
    let mut tokens = Vec::with_capacity(scores.n_tokens());
    for (row, mut out) in scores.0.rows().into_iter().zip(gates.rows_mut()) {
        let row = row.to_vec();
        let indices = topk_select(&row, k, TieRule::LowestIndex)?;
        let kept: Vec<f64> = indices.iter().map(|&j| row[j]).collect();
        let weights = softmax_row(&kept);
        for (&j, &w) in indices.iter().zip(&weights) {
            out[j] = w;
        }
        tokens.push(Selection { indices, weights });
    }
    Ok((
        GateDistribution { gates, kind: GateKind::Sparse { k } },
        SelectionRecord { n_experts: m, k, tokens },
    ))
}

/// TopK applied to already-computed gate rows (dense softmax or smoothed gates).
pub fn truncate_gates(dense: &Array2<f64>, k: usize, convention: Truncation) -> Result<(GateDistribution, SelectionRecord)> {
    let m = dense.ncols();
    check_k(k, m)?;
    let mut gates = Array2::zeros(dense.raw_dim());
    let mut tokens = Vec::with_capacity(dense.nrows());
    let mut scratch = Vec::with_capacity(m);
    for (row, mut out) in dense.rows().into_iter().zip(gates.rows_mut()) {
        let row: &[f64] = match row.to_slice() {
            Some(r) => r,
            None => {
                scratch.clear();
                scratch.extend(row.iter().copied());
                &scratch
            }
        };
        let mut indices = Vec::with_capacity(k);
        topk_into(row, k, TieRule::LowestIndex, &mut indices);
        let total: f64 = indices.iter().map(|&j| row[j]).sum();
        let weights: Vec<f64> = if total > 0.0 {
            indices.iter().map(|&j| row[j] / total).collect()
        } else {
            vec![1.0 / k as f64; k]
        };
        for (&j, &w) in indices.iter().zip(&weights) {
            out[j] = match convention {
                Truncation::Raw => row[j],
                Truncation::Renormalized => w,
            };
        }
        tokens.push(Selection { indices, weights });
    }
    Ok((
        GateDistribution { gates, kind: GateKind::Sparse { k } },
        SelectionRecord { n_experts: m, k, tokens },
    ))
}

/// Softmax first, then keep the K largest gates.
pub fn gate_softmax_first(scores: &RouterScores, k: usize, convention: Truncation) -> Result<(GateDistribution, SelectionRecord)> {
    check_k(k, scores.n_experts())?;
    truncate_gates(&softmax(scores).gates, k, convention)
}

/// Random matrix with unit-norm rows.
pub fn random_unit_rows(m: usize, d: usize, rng: &mut Rng) -> Array2<f64> {
    let mut out = Array2::from_shape_fn((m, d), |_| rng.random::<f64>() - 0.5);
    for mut row in out.rows_mut() {
        let n = row.dot(&row).sqrt().max(MIN_PROJECTED_NORM);
        row.mapv_inplace(|v| v / n);
    }
    out
}
