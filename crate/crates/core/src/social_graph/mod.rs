//! The expert social graph.
//!
//! Co-selection counting, normalization with an exponential moving average,
//! adjacency-smoothed gating, spectral diagnostics and overhead accounting.

mod adjacency;
mod overhead;
mod snapshot;
mod spectral;

pub use adjacency::{
    coselect_counts, row_normalize, sinkhorn, AdjacencyState, GraphOptions, NormMode, SinkhornConfig, SinkhornStats,
    SymphonyRouting,
};
pub use overhead::{estimate_overhead, ComplexityEstimate, GIB, MIB};
pub use snapshot::{load_snapshot, read_snapshot, save_snapshot, write_snapshot};
pub use spectral::{
    is_connected, singular_values, spectral_report_of, symmetric_eigenvalues, topk_margin, SpectralReport,
    SpectrumKind, EDGE_EPS,
};
