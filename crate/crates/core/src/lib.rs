//! Symphony routing for sparse mixture-of-experts layers.
//!
//! The crate is organized bottom-up:
//!
//! * [`router`]: base router scores, softmax and the two TopK placements.
//! * [`social_graph`]: expert co-selection graph and smoothed gating.
//! * [`moe`]: a small trainable mixture-of-experts layer.
//! * [`theory`]: Monte Carlo checks of the concentration and contraction bounds.
//! * [`harness`]: synthetic tasks, contamination, training and evaluation runs.

pub mod error;
pub mod harness;
pub mod matrix_io;
pub mod moe;
pub mod rng;
pub mod router;
pub mod social_graph;
pub mod stats;
pub mod theory;

pub use error::{Error, Result};
pub use router::{
    compute_scores, gate_logits_first, gate_softmax_first, softmax, topk_select, GateDistribution, GateKind,
    RouterKind, RouterParams, RouterScores, Selection, SelectionRecord, TieRule, TokenBatch, Truncation,
};
pub use social_graph::{AdjacencyState, NormMode, SpectralReport};
