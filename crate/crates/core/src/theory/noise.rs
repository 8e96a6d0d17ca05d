//! Bounded additive noise `‖δ‖ ≤ ε`.

use std::fmt;
use std::str::FromStr;

use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::Error;
use crate::rng::Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum NoiseKind {
    /// Uniform in the closed ball of radius ε.
    UniformBall,
    /// Uniform on the sphere of radius ε.
    SphereSurface,
    /// Step of length ε toward the nearest boundary of the target region.
    Adversarial,
}

impl fmt::Display for NoiseKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            NoiseKind::UniformBall => "uniform-ball",
            NoiseKind::SphereSurface => "sphere-surface",
            NoiseKind::Adversarial => "adversarial",
        })
    }
}

impl FromStr for NoiseKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Error> {
        match s {
            "uniform-ball" | "uniform" | "UniformBall" => Ok(NoiseKind::UniformBall),
            "sphere-surface" | "sphere" | "SphereSurface" => Ok(NoiseKind::SphereSurface),
            "adversarial" | "Adversarial" => Ok(NoiseKind::Adversarial),
            other => Err(Error::Parse(format!("unknown noise kind '{other}'"))),
        }
    }
}

/// Writes a uniformly random unit vector into `out`.
pub fn random_direction(rng: &mut Rng, out: &mut [f64]) {
    loop {
        let mut norm2 = 0.0;
        for o in out.iter_mut() {
            let z: f64 = StandardNormal.sample(rng);
            *o = z;
            norm2 += z * z;
        }
        if norm2 > 1e-300 {
            let inv = norm2.sqrt().recip();
            out.iter_mut().for_each(|o| *o *= inv);
            return;
        }
    }
}

/// Rescales `delta` in place so its Euclidean norm is exactly `radius` or below.
pub fn set_norm(delta: &mut [f64], radius: f64) {
    let norm = delta.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm == 0.0 {
        return;
    }
    let scale = radius / norm;
    delta.iter_mut().for_each(|v| *v *= scale);
    // rounding can leave the norm a few ulps above the target
    let mut n = delta.iter().map(|v| v * v).sum::<f64>().sqrt();
    while n > radius {
        delta.iter_mut().for_each(|v| *v *= 1.0 - f64::EPSILON);
        n = delta.iter().map(|v| v * v).sum::<f64>().sqrt();
    }
}

/// Isotropic noise; `Adversarial` is region dependent and not handled here.
pub fn isotropic(kind: NoiseKind, epsilon: f64, rng: &mut Rng, out: &mut [f64]) {
    if epsilon == 0.0 {
        out.iter_mut().for_each(|o| *o = 0.0);
        return;
    }
    random_direction(rng, out);
    let radius = match kind {
        NoiseKind::UniformBall => epsilon * rng.random::<f64>().powf(1.0 / out.len() as f64),
        NoiseKind::SphereSurface | NoiseKind::Adversarial => epsilon,
    };
    set_norm(out, radius);
}
