//! A single sparse mixture-of-experts layer with analytic gradients.

mod balance;
mod checkpoint;
mod expert;
mod layer;
mod optim;

pub use balance::{load_balance_from_counts, load_balance_loss, load_balance_report, LoadBalanceReport};
pub use checkpoint::{load_checkpoint, save_checkpoint, CheckpointManifest};
pub use expert::{Expert, ExpertGrads, ExpertSet, ExpertTrace};
pub use layer::{
    backward, forward, ForwardCache, GatePlacement, Gradients, LayerConfig, LayerOutput, MoeLayer, RoutingMode,
};
pub use optim::Sgd;
