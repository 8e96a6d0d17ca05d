//! Monte Carlo checks of the concentration bound on co-selection frequencies
//! and of the contraction properties of adjacency smoothing.
//!
//! Expert regions are balls `B_j = {x : ‖x − w_j‖ ≤ R_j}` in a box carrying the
//! uniform probability measure `μ`; the co-selection region of a pair is
//! `C_jk = B_j ∩ B_k`.

mod noise;
mod oracle;
mod prop1;
mod region;
mod theorem1;

pub use noise::{isotropic, random_direction, set_norm, NoiseKind};
pub use oracle::{
    expansion_measure, grown_coselect_measure, lens_area, oracle_coselect_measure, MeasureEstimate, OracleMode,
    MC_SAMPLES,
};
pub use prop1::{
    check_prop1, doubly_stochastic_error, random_sinkhorn_adjacency, Prop1Check, Prop1Report, CHECK_TOL, DS_TOL,
    MIN_MARGIN,
};
pub use region::RegionSpec;
pub use theorem1::{
    adversarial_step, calibrate_l_tilde, check_theorem1, convergence_fit, empirical_ajk, escape_fraction, gamma,
    BoundCheckResult, Calibration, ConvergenceFit, Theorem1Config, Theorem1Report,
};
