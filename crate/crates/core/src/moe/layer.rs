use ndarray::{Array1, Array2, Axis};

use super::balance::load_balance_loss;
use super::expert::{ExpertGrads, ExpertSet, ExpertTrace};
use crate::error::{arg_err, dim_err, Error, Result};
use crate::router::{
    compute_scores, gate_logits_first, softmax, truncate_gates, RouterKind, RouterParams, SelectionRecord, TokenBatch, Truncation, MIN_PROJECTED_NORM,
};
use crate::social_graph::AdjacencyState;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
pub enum RoutingMode {
    #[default]
    Baseline,
    Symphony,
}

impl std::fmt::Display for RoutingMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            RoutingMode::Baseline => f.write_str("Baseline"),
            RoutingMode::Symphony => f.write_str("Symphony"),
        }
    }
}

impl std::str::FromStr for RoutingMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "baseline" => Ok(Self::Baseline),
            "symphony" => Ok(Self::Symphony),
            other => Err(arg_err(format!("unknown routing mode '{other}'"))),
        }
    }
}

/// Where TopK sits relative to the softmax in baseline mode.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
pub enum GatePlacement {
    #[default]
    SoftmaxFirst,
    LogitsFirst,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LayerConfig {
    pub k: usize,
    pub mode: RoutingMode,
    pub truncation: Truncation,
    pub baseline_gate: GatePlacement,
    /// Weight of the load-balancing term in the training objective.
    pub aux_weight: f64,
}

impl LayerConfig {
    pub fn new(k: usize, mode: RoutingMode) -> Self {
        Self { k, mode, truncation: Truncation::Raw, baseline_gate: GatePlacement::SoftmaxFirst, aux_weight: 0.01 }
    }
}

#[derive(Debug, Clone)]
pub struct LayerOutput {
    pub y: Array2<f64>,
    pub selections: SelectionRecord,
    pub dense_gates: Array2<f64>,
    /// Equal to `dense_gates` in baseline mode or before the first graph update.
    pub smoothed_gates: Array2<f64>,
    /// Sparse mixing weights actually applied to the expert outputs.
    pub mixing: Array2<f64>,
    pub aux_loss: f64,
}

/// Everything the backward pass needs from a forward pass.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    x: Array2<f64>,
    dense: Array2<f64>,
    /// Values TopK was applied to (`A p` for symphony, `p` otherwise).
    upstream: Array2<f64>,
    selections: SelectionRecord,
    mixing: Array2<f64>,
    smoothing: Option<Array2<f64>>,
    traces: Vec<Vec<ExpertTrace>>,
    config: LayerConfig,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub experts: Vec<ExpertGrads>,
    pub router_weight: Array2<f64>,
    pub router_bias: Array1<f64>,
    pub cosine_projection: Option<Array2<f64>>,
    pub cosine_experts: Option<Array2<f64>>,
    pub input: Array2<f64>,
}

impl Gradients {
    pub fn zeros(experts: &ExpertSet, router: &RouterParams, n: usize) -> Self {
        Self {
            experts: experts.iter().map(ExpertGrads::zeros_like).collect(),
            router_weight: Array2::zeros(router.weight.raw_dim()),
            router_bias: Array1::zeros(router.bias.len()),
            cosine_projection: router.cosine.as_ref().map(|c| Array2::zeros(c.projection.raw_dim())),
            cosine_experts: router.cosine.as_ref().map(|c| Array2::zeros(c.experts.raw_dim())),
            input: Array2::zeros((n, router.dim())),
        }
    }
}

fn check_dims(experts: &ExpertSet, router: &RouterParams, batch: &TokenBatch, cfg: &LayerConfig) -> Result<()> {
    if router.n_experts() != experts.len() {
        return Err(dim_err(format!("router scores {} experts but {} exist", router.n_experts(), experts.len())));
    }
    if router.dim() != batch.dim() || experts.in_dim() != batch.dim() {
        return Err(dim_err(format!(
            "token dimension {} does not match router ({}) or experts ({})",
            batch.dim(),
            router.dim(),
            experts.in_dim()
        )));
    }
    if cfg.k == 0 || cfg.k > experts.len() {
        return Err(arg_err(format!("K exceeds expert count (K={}, M={})", cfg.k, experts.len())));
    }
    Ok(())
}

/// Routes every token and mixes the outputs of its selected experts only.
///
/// In symphony mode an unfrozen `adjacency` receives the co-selection counts
/// of the base-gate TopK as a side effect.
pub fn forward(
    experts: &ExpertSet,
    router: &RouterParams,
    adjacency: Option<&mut AdjacencyState>,
    batch: &TokenBatch,
    cfg: &LayerConfig,
) -> Result<(LayerOutput, ForwardCache)> {
    check_dims(experts, router, batch, cfg)?;
    let scores = compute_scores(router, batch)?;
    let dense = softmax(&scores).gates;

    let (upstream, mixing, selections, smoothing) = match cfg.mode {
        RoutingMode::Baseline => {
            let (gates, sel) = match cfg.baseline_gate {
                GatePlacement::SoftmaxFirst => truncate_gates(&dense, cfg.k, cfg.truncation)?,
                GatePlacement::LogitsFirst => gate_logits_first(&scores, cfg.k)?,
            };
            (dense.clone(), gates.gates, sel, None)
        }
        RoutingMode::Symphony => {
            let state = adjacency.ok_or_else(|| arg_err("symphony mode requires an adjacency state"))?;
            if state.n_experts() != experts.len() {
                return Err(dim_err("adjacency size does not match expert count"));
            }
            let routing = state.route_and_count(&scores, cfg.k, cfg.truncation)?;
            let smoothing = (state.update_count() > 0).then(|| state.matrix().clone());
            (routing.smoothed.gates, routing.gates.gates, routing.selection, smoothing)
        }
    };

    let n = batch.n_tokens();
    let mut y = Array2::zeros((n, experts.out_dim()));
    let mut traces = Vec::with_capacity(n);
    for (i, sel) in selections.tokens.iter().enumerate() {
        let x = batch.token(i);
        let mut token_traces = Vec::with_capacity(sel.indices.len());
        let mut yi = y.row_mut(i);
        for &j in &sel.indices {
            let trace = experts.get(j).forward(x);
            yi.scaled_add(mixing[[i, j]], &trace.out);
            token_traces.push(trace);
        }
        traces.push(token_traces);
    }

    let aux_loss = load_balance_loss(&dense, &selections);
    let output = LayerOutput {
        y,
        selections: selections.clone(),
        dense_gates: dense.clone(),
        smoothed_gates: upstream.clone(),
        mixing: mixing.clone(),
        aux_loss,
    };
    let cache = ForwardCache {
        x: batch.data().clone(),
        dense,
        upstream,
        selections,
        mixing,
        smoothing,
        traces,
        config: *cfg,
    };
    Ok((output, cache))
}

/// Gradients of `sum_i <grad_y_i, y_i> + aux_weight * aux_loss`.
///
/// The TopK selection and the adjacency are held constant; gradients reach the
/// router through the surviving gate values and the dense softmax.
pub fn backward(
    experts: &ExpertSet,
    router: &RouterParams,
    cache: Option<&ForwardCache>,
    grad_y: &Array2<f64>,
) -> Result<Gradients> {
    let cache = cache.ok_or_else(|| Error::State("backward called without a recorded forward pass".into()))?;
    let n = cache.x.nrows();
    let m = experts.len();
    if grad_y.dim() != (n, experts.out_dim()) {
        return Err(dim_err(format!("output gradient has shape {:?}, expected ({n}, {})", grad_y.dim(), experts.out_dim())));
    }
    let cfg = &cache.config;
    let mut grads = Gradients::zeros(experts, router, n);
    let mut d_scores = Array2::<f64>::zeros((n, m));
    let mut d_dense = Array2::<f64>::zeros((n, m));

    for (i, (sel, traces)) in cache.selections.tokens.iter().zip(&cache.traces).enumerate() {
        let x = cache.x.row(i);
        let gy = grad_y.row(i);
        let mut d_mix = Vec::with_capacity(sel.indices.len());
        for (&j, trace) in sel.indices.iter().zip(traces) {
            d_mix.push(gy.dot(&trace.out));
            let w = cache.mixing[[i, j]];
            if w != 0.0 {
                let dx = experts.get(j).backward(x, trace, (&gy * w).view(), &mut grads.experts[j]);
                grads.input.row_mut(i).scaled_add(1.0, &dx);
            }
        }

        let logits_first = cfg.mode == RoutingMode::Baseline && cfg.baseline_gate == GatePlacement::LogitsFirst;
        if logits_first {
            // masked softmax over the selected logits
            let w: Vec<f64> = sel.indices.iter().map(|&j| cache.mixing[[i, j]]).collect();
            let inner: f64 = w.iter().zip(&d_mix).map(|(a, b)| a * b).sum();
            for ((&j, &wj), &dj) in sel.indices.iter().zip(&w).zip(&d_mix) {
                d_scores[[i, j]] += wj * (dj - inner);
            }
            continue;
        }

        let mut d_up = Array1::<f64>::zeros(m);
        match cfg.truncation {
            Truncation::Raw => {
                for (&j, &dj) in sel.indices.iter().zip(&d_mix) {
                    d_up[j] = dj;
                }
            }
            Truncation::Renormalized => {
                let total: f64 = sel.indices.iter().map(|&j| cache.upstream[[i, j]]).sum();
                if total > 0.0 {
                    let inner: f64 = sel.indices.iter().zip(&d_mix).map(|(&j, &dj)| cache.mixing[[i, j]] * dj).sum();
                    for (&j, &dj) in sel.indices.iter().zip(&d_mix) {
                        d_up[j] = (dj - inner) / total;
                    }
                }
            }
        }
        let d_p = match &cache.smoothing {
            Some(a) => a.t().dot(&d_up),
            None => d_up,
        };
        d_dense.row_mut(i).assign(&d_p);
    }

    if cfg.aux_weight != 0.0 {
        let counts = cache.selections.counts();
        for (j, &c) in counts.iter().enumerate() {
            let f = c as f64 / n as f64;
            let coef = cfg.aux_weight * m as f64 * f / n as f64;
            d_dense.column_mut(j).mapv_inplace(|v| v + coef);
        }
    }

    for ((mut ds, p), dp) in d_scores.rows_mut().into_iter().zip(cache.dense.rows()).zip(d_dense.rows()) {
        let inner = p.dot(&dp);
        ds.zip_mut_with(&(&p * &(&dp - inner)), |a, b| *a += b);
    }

    router_backward(router, cache, &d_scores, &mut grads);
    Ok(grads)
}

fn router_backward(router: &RouterParams, cache: &ForwardCache, d_scores: &Array2<f64>, grads: &mut Gradients) {
    match router.kind {
        RouterKind::Linear | RouterKind::Random => {
            if router.is_trainable() {
                grads.router_weight += &d_scores.t().dot(&cache.x);
                grads.router_bias += &d_scores.sum_axis(Axis(0));
            }
            grads.input += &d_scores.dot(&router.weight);
        }
        RouterKind::Cosine => {
            let c = router.cosine.as_ref().expect("cosine router carries its parameters");
            let z = cache.x.dot(&c.projection.t());
            let mut d_z = Array2::<f64>::zeros(z.raw_dim());
            let mut d_e = Array2::<f64>::zeros(c.experts.raw_dim());
            for (i, zi) in z.rows().into_iter().enumerate() {
                let norm = zi.dot(&zi).sqrt().max(MIN_PROJECTED_NORM);
                let u = &zi / norm;
                let ds = d_scores.row(i);
                let d_u = c.experts.t().dot(&ds) / c.temperature;
                for (j, &g) in ds.iter().enumerate() {
                    d_e.row_mut(j).scaled_add(g / c.temperature, &u);
                }
                let radial = u.dot(&d_u);
                d_z.row_mut(i).assign(&((&d_u - &(&u * radial)) / norm));
            }
            if let Some(p) = grads.cosine_projection.as_mut() {
                *p += &d_z.t().dot(&cache.x);
            }
            if let Some(e) = grads.cosine_experts.as_mut() {
                *e += &d_e;
            }
            grads.input += &d_z.dot(&c.projection);
        }
    }
}

/// Experts, router and (in symphony mode) the social graph of one layer.
#[derive(Debug, Clone)]
pub struct MoeLayer {
    pub experts: ExpertSet,
    pub router: RouterParams,
    pub adjacency: Option<AdjacencyState>,
    pub config: LayerConfig,
}

impl MoeLayer {
    pub fn new(experts: ExpertSet, router: RouterParams, adjacency: Option<AdjacencyState>, config: LayerConfig) -> Result<Self> {
        if config.mode == RoutingMode::Symphony && adjacency.is_none() {
            return Err(arg_err("symphony mode requires an adjacency state"));
        }
        if router.n_experts() != experts.len() || router.dim() != experts.in_dim() {
            return Err(dim_err("router and experts disagree on shape"));
        }
        if config.k == 0 || config.k > experts.len() {
            return Err(arg_err(format!("K exceeds expert count (K={}, M={})", config.k, experts.len())));
        }
        Ok(Self { experts, router, adjacency, config })
    }

    pub fn forward(&mut self, batch: &TokenBatch) -> Result<(LayerOutput, ForwardCache)> {
        let adjacency = match self.config.mode {
            RoutingMode::Symphony => self.adjacency.as_mut(),
            RoutingMode::Baseline => None,
        };
        forward(&self.experts, &self.router, adjacency, batch, &self.config)
    }

    pub fn backward(&self, cache: Option<&ForwardCache>, grad_y: &Array2<f64>) -> Result<Gradients> {
        backward(&self.experts, &self.router, cache, grad_y)
    }

    /// Sets the frozen flag of the social graph, if any.
    pub fn freeze_graph(&mut self, frozen: bool) {
        if let Some(a) = self.adjacency.as_mut() {
            a.set_frozen(frozen);
        }
    }

    /// Closes the current counting window (once per batch during training).
    pub fn end_batch(&mut self) -> Result<()> {
        match (self.config.mode, self.adjacency.as_mut()) {
            (RoutingMode::Symphony, Some(a)) if !a.is_frozen() => a.normalize_and_ema(),
            _ => Ok(()),
        }
    }
}
