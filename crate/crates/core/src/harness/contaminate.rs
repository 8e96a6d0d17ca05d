//! Bounded input contamination `x + δ` with `‖δ‖₂ ≤ ε` per token.

use ndarray::Array2;

use crate::error::{arg_err, Result};
use crate::rng::rng_from;
use crate::theory::{isotropic, set_norm, NoiseKind};

/// Unit direction from `x` toward the nearest face of its Voronoi cell, if it has neighbours.
fn toward_nearest_face(centers: &[Vec<f64>], x: &[f64], out: &mut [f64]) -> bool {
    let dist2 = |c: &[f64]| c.iter().zip(x).map(|(a, b)| (a - b) * (a - b)).sum::<f64>();
    let own = super::task::nearest_center(centers, x);
    let own_d = dist2(&centers[own]);
    let mut best: Option<(usize, f64)> = None;
    for (b, c) in centers.iter().enumerate() {
        if b == own {
            continue;
        }
        let gap = c.iter().zip(&centers[own]).map(|(p, q)| (p - q) * (p - q)).sum::<f64>().sqrt();
        if gap == 0.0 {
            continue;
        }
        // distance from x to the bisector of (own, b)
        let face = (dist2(c) - own_d) / (2.0 * gap);
        if best.is_none_or(|(_, f)| face < f) {
            best = Some((b, face));
        }
    }
    let Some((b, _)) = best else { return false };
    for ((o, p), q) in out.iter_mut().zip(&centers[b]).zip(&centers[own]) {
        *o = p - q;
    }
    true
}

/// Adds `delta` to `x`, shrinking it until the realized displacement is within `epsilon`.
fn apply_within(x: &mut [f64], delta: &mut [f64], epsilon: f64) {
    let original = x.to_vec();
    loop {
        let moved = original.iter().zip(delta.iter()).map(|(a, d)| a + d);
        let dist = original.iter().zip(moved.clone()).map(|(a, b)| (b - a) * (b - a)).sum::<f64>().sqrt();
        if dist <= epsilon {
            x.iter_mut().zip(moved).for_each(|(v, m)| *v = m);
            return;
        }
        delta.iter_mut().for_each(|d| *d *= 1.0 - 4.0 * f64::EPSILON);
    }
}

/// Adds noise of norm at most `epsilon` to every row of `x`.
///
/// `Adversarial` moves each token a full ε toward the nearest face of its
/// region (given by `centers`) and needs at least two centers. `epsilon = 0`
/// returns an exact copy.
pub fn contaminate(x: &Array2<f64>, epsilon: f64, noise: NoiseKind, seed: u64, centers: &[Vec<f64>]) -> Result<Array2<f64>> {
    if !(epsilon >= 0.0 && epsilon.is_finite()) {
        return Err(arg_err("epsilon must be finite and non-negative"));
    }
    if noise == NoiseKind::Adversarial && centers.len() < 2 {
        return Err(arg_err("adversarial contamination needs at least two region centers"));
    }
    if centers.iter().any(|c| c.len() != x.ncols()) {
        return Err(arg_err("center dimension does not match the tokens"));
    }
    let mut out = x.clone();
    if epsilon == 0.0 {
        return Ok(out);
    }
    let mut rng = rng_from(seed);
    let mut delta = vec![0.0; x.ncols()];
    for mut row in out.rows_mut() {
        match noise {
            NoiseKind::Adversarial => {
                let token = row.to_vec();
                if toward_nearest_face(centers, &token, &mut delta) {
                    set_norm(&mut delta, epsilon);
                } else {
                    delta.iter_mut().for_each(|d| *d = 0.0);
                }
            }
            _ => isotropic(noise, epsilon, &mut rng, &mut delta),
        }
        apply_within(row.as_slice_mut().expect("standard layout"), &mut delta, epsilon);
    }
    Ok(out)
}
