//! Input builders shared by the routing and graph benchmarks.

use ndarray::Array2;
use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};

use symphony_core::rng::rng_from;
use symphony_core::theory::random_sinkhorn_adjacency;
use symphony_core::{AdjacencyState, NormMode, RouterScores};

/// Router scores for `n` tokens over `m` experts, standard normal.
pub fn scores(n: usize, m: usize, seed: u64) -> RouterScores {
    let mut rng = rng_from(seed);
    RouterScores(Array2::from_shape_fn((n, m), |_| StandardNormal.sample(&mut rng)))
}

/// A frozen Sinkhorn graph past its first update, so routing is smoothed.
pub fn active_graph(m: usize, k: usize, seed: u64) -> AdjacencyState {
    let mut rng = rng_from(seed);
    let a = random_sinkhorn_adjacency(m, k.max(2).min(m - 1), 8 * m, &mut rng).expect("m >= 3");
    let mut g = AdjacencyState::from_matrix(a, NormMode::Sinkhorn, 0.9, 1).expect("valid adjacency");
    g.set_frozen(true);
    g
}

/// Symmetric co-selection style counts with a positive diagonal.
pub fn counts(m: usize, seed: u64) -> Array2<f64> {
    let mut rng = rng_from(seed);
    let raw = Array2::from_shape_fn((m, m), |_| f64::from(rng.random_range(0u32..50)));
    let mut c = &raw + &raw.t();
    for j in 0..m {
        c[[j, j]] += 1.0;
    }
    c
}
