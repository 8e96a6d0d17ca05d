//! Ground-truth measure of co-selection regions `C_jk = B_j ∩ B_k`.

use std::f64::consts::PI;

use rayon::prelude::*;

use super::region::RegionSpec;
use crate::error::{arg_err, Result};
use crate::rng::stream;

/// Default Monte Carlo sample count.
pub const MC_SAMPLES: u64 = 10_000_000;

const CHUNK: u64 = 1 << 16;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum OracleMode {
    /// Closed-form circle intersection; two-dimensional regions only.
    Analytic2D,
    /// Uniform samples over the whole domain box.
    MonteCarloDense { samples: u64, seed: u64 },
}

impl OracleMode {
    pub fn monte_carlo(seed: u64) -> Self {
        OracleMode::MonteCarloDense { samples: MC_SAMPLES, seed }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeasureEstimate {
    pub value: f64,
    /// Zero for the analytic oracle.
    pub std_error: f64,
}

/// Area of the intersection of two discs with radii `r1`, `r2` and centers `d` apart.
pub fn lens_area(r1: f64, r2: f64, d: f64) -> f64 {
    if d >= r1 + r2 {
        return 0.0;
    }
    let small = r1.min(r2);
    if d <= (r1 - r2).abs() {
        return PI * small * small;
    }
    let a1 = ((d * d + r1 * r1 - r2 * r2) / (2.0 * d * r1)).clamp(-1.0, 1.0).acos();
    let a2 = ((d * d + r2 * r2 - r1 * r1) / (2.0 * d * r2)).clamp(-1.0, 1.0).acos();
    let kite = ((-d + r1 + r2) * (d + r1 - r2) * (d - r1 + r2) * (d + r1 + r2)).max(0.0).sqrt();
    r1 * r1 * a1 + r2 * r2 * a2 - 0.5 * kite
}

/// Monte Carlo count of box samples satisfying `hit`, split into independently seeded chunks.
fn mc_fraction<F>(spec: &RegionSpec, samples: u64, seed: u64, hit: F) -> MeasureEstimate
where
    F: Fn(&[f64]) -> bool + Sync,
{
    let chunks = samples.div_ceil(CHUNK);
    let hits: u64 = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut rng = stream(seed, c);
            let mut x = vec![0.0; spec.dim];
            let n = CHUNK.min(samples - c * CHUNK);
            let mut count = 0u64;
            for _ in 0..n {
                spec.fill_sample(&mut rng, &mut x);
                count += u64::from(hit(&x));
            }
            count
        })
        .sum();
    let p = hits as f64 / samples as f64;
    MeasureEstimate { value: p, std_error: (p * (1.0 - p) / samples as f64).sqrt() }
}

fn check_mode(spec: &RegionSpec, mode: OracleMode) -> Result<()> {
    match mode {
        OracleMode::Analytic2D if spec.dim != 2 => Err(arg_err("the analytic oracle requires d = 2")),
        OracleMode::MonteCarloDense { samples: 0, .. } => Err(arg_err("Monte Carlo oracle needs samples > 0")),
        _ => Ok(()),
    }
}

/// `μ(C_jk)` under the uniform probability measure on the domain box.
pub fn oracle_coselect_measure(spec: &RegionSpec, j: usize, k: usize, mode: OracleMode) -> Result<MeasureEstimate> {
    grown_coselect_measure(spec, j, k, 0.0, mode)
}

/// `μ(C^g_jk)` where both radii are enlarged by `grow`.
///
/// The analytic oracle assumes the grown lens stays inside the box.
pub fn grown_coselect_measure(
    spec: &RegionSpec,
    j: usize,
    k: usize,
    grow: f64,
    mode: OracleMode,
) -> Result<MeasureEstimate> {
    spec.check_pair(j, k)?;
    check_mode(spec, mode)?;
    if grow < 0.0 && spec.radii[j].min(spec.radii[k]) + grow <= 0.0 {
        return Ok(MeasureEstimate { value: 0.0, std_error: 0.0 });
    }
    Ok(match mode {
        OracleMode::Analytic2D => {
            let d = spec.distance_to_center(j, &spec.centers[k]);
            let area = lens_area(spec.radii[j] + grow, spec.radii[k] + grow, d);
            MeasureEstimate { value: area / spec.box_volume(), std_error: 0.0 }
        }
        OracleMode::MonteCarloDense { samples, seed } => mc_fraction(spec, samples, seed, |x| spec.in_pair(j, k, x, grow)),
    })
}

/// `μ(C^ε_jk) − μ(C_jk)`: mass within the ε-enlargement but outside the region.
///
/// The Monte Carlo variant uses common samples for both sets.
pub fn expansion_measure(spec: &RegionSpec, j: usize, k: usize, epsilon: f64, mode: OracleMode) -> Result<MeasureEstimate> {
    if epsilon < 0.0 {
        return Err(arg_err("epsilon must be non-negative"));
    }
    spec.check_pair(j, k)?;
    check_mode(spec, mode)?;
    Ok(match mode {
        OracleMode::Analytic2D => {
            let outer = grown_coselect_measure(spec, j, k, epsilon, mode)?.value;
            let inner = grown_coselect_measure(spec, j, k, 0.0, mode)?.value;
            MeasureEstimate { value: outer - inner, std_error: 0.0 }
        }
        OracleMode::MonteCarloDense { samples, seed } => mc_fraction(spec, samples, seed, |x| {
            spec.in_pair(j, k, x, epsilon) && !spec.in_pair(j, k, x, 0.0)
        }),
    })
}
