//! Concentration of the empirical co-selection frequency `a_jk` around `μ(C_jk)`.

use std::io::Write;

use rayon::prelude::*;

use super::noise::{isotropic, set_norm, NoiseKind};
use super::oracle::{expansion_measure, oracle_coselect_measure, OracleMode};
use super::region::RegionSpec;
use crate::error::{arg_err, Error, Result};
use crate::rng::{derive_seed, rng_from, Rng};
use crate::stats::least_squares_slope;

/// `sqrt(ln(2/α) / (2N)) + L̃ ε`.
pub fn gamma(n: usize, alpha: f64, l_tilde: f64, epsilon: f64) -> f64 {
    ((2.0 / alpha).ln() / (2.0 * n as f64)).sqrt() + l_tilde * epsilon
}

fn ordered(j: usize, k: usize) -> (usize, usize) {
    (j.min(k), j.max(k))
}

/// Step of length ε radially outward from the ball with the smaller slack.
///
/// Points outside `C_jk` are left in place.
pub fn adversarial_step(spec: &RegionSpec, j: usize, k: usize, x: &[f64], epsilon: f64, out: &mut [f64]) {
    out.iter_mut().for_each(|o| *o = 0.0);
    if epsilon == 0.0 || !spec.in_pair(j, k, x, 0.0) {
        return;
    }
    let (j, k) = ordered(j, k);
    let slack_j = spec.radii[j] - spec.distance_to_center(j, x);
    let slack_k = spec.radii[k] - spec.distance_to_center(k, x);
    let b = if slack_k < slack_j { k } else { j };
    for ((o, xi), ci) in out.iter_mut().zip(x).zip(&spec.centers[b]) {
        *o = xi - ci;
    }
    if out.iter().all(|v| *v == 0.0) {
        out[0] = 1.0;
    }
    set_norm(out, epsilon);
}

fn perturb(spec: &RegionSpec, j: usize, k: usize, x: &[f64], epsilon: f64, noise: NoiseKind, rng: &mut Rng, delta: &mut [f64]) {
    match noise {
        NoiseKind::Adversarial => adversarial_step(spec, j, k, x, epsilon, delta),
        _ => isotropic(noise, epsilon, rng, delta),
    }
}

/// `(1/N) Σ 1[x_i + δ_i ∈ C_jk]` with `x_i` uniform on the domain box.
pub fn empirical_ajk(
    spec: &RegionSpec,
    j: usize,
    k: usize,
    n: usize,
    epsilon: f64,
    noise: NoiseKind,
    seed: u64,
) -> Result<f64> {
    spec.check_pair(j, k)?;
    if n == 0 {
        return Err(arg_err("N must be at least 1"));
    }
    if !(epsilon >= 0.0) {
        return Err(arg_err("epsilon must be non-negative"));
    }
    let (j, k) = ordered(j, k);
    let mut rng = rng_from(seed);
    let mut x = vec![0.0; spec.dim];
    let mut delta = vec![0.0; spec.dim];
    let mut hits = 0usize;
    for _ in 0..n {
        spec.fill_sample(&mut rng, &mut x);
        perturb(spec, j, k, &x, epsilon, noise, &mut rng, &mut delta);
        x.iter_mut().zip(&delta).for_each(|(a, b)| *a += b);
        hits += usize::from(spec.in_pair(j, k, &x, 0.0));
    }
    Ok(hits as f64 / n as f64)
}

/// Fraction of `n` points drawn uniformly from `C_jk` that the noise pushes out of it.
pub fn escape_fraction(
    spec: &RegionSpec,
    j: usize,
    k: usize,
    epsilon: f64,
    noise: NoiseKind,
    n: usize,
    seed: u64,
) -> Result<f64> {
    spec.check_pair(j, k)?;
    if n == 0 {
        return Err(arg_err("N must be at least 1"));
    }
    if !(epsilon >= 0.0) {
        return Err(arg_err("epsilon must be non-negative"));
    }
    let (j, k) = ordered(j, k);
    // sample from the bounding box of the lens, then reject
    let mut lo = Vec::with_capacity(spec.dim);
    let mut hi = Vec::with_capacity(spec.dim);
    for a in 0..spec.dim {
        let l = spec.lower[a].max(spec.centers[j][a] - spec.radii[j]).max(spec.centers[k][a] - spec.radii[k]);
        let h = spec.upper[a].min(spec.centers[j][a] + spec.radii[j]).min(spec.centers[k][a] + spec.radii[k]);
        if l >= h {
            return Ok(0.0);
        }
        lo.push(l);
        hi.push(h);
    }
    if spec.distance_to_center(j, &spec.centers[k]) >= spec.radii[j] + spec.radii[k] {
        return Ok(0.0);
    }
    let bounds = RegionSpec::with_overhang(vec![spec.centers[j].clone()], vec![1.0], lo, hi)?;
    let mut rng = rng_from(seed);
    let mut x = vec![0.0; spec.dim];
    let mut delta = vec![0.0; spec.dim];
    let (mut inside, mut escaped, mut attempts) = (0usize, 0usize, 0u64);
    let max_attempts = (n as u64).saturating_mul(100_000);
    while inside < n {
        attempts += 1;
        if attempts > max_attempts {
            return Err(arg_err("co-selection region is too thin to sample"));
        }
        bounds.fill_sample(&mut rng, &mut x);
        if !spec.in_pair(j, k, &x, 0.0) {
            continue;
        }
        inside += 1;
        perturb(spec, j, k, &x, epsilon, noise, &mut rng, &mut delta);
        x.iter_mut().zip(&delta).for_each(|(a, b)| *a += b);
        escaped += usize::from(!spec.in_pair(j, k, &x, 0.0));
    }
    Ok(escaped as f64 / n as f64)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Calibration {
    pub l_tilde: f64,
    pub epsilon_ref: f64,
    /// `(μ(C^ε) − μ(C)) / ε` per pair.
    pub per_pair: Vec<((usize, usize), f64)>,
}

/// Fits `L̃` as the largest expansion rate over `pairs` at `epsilon_ref`.
pub fn calibrate_l_tilde(spec: &RegionSpec, pairs: &[(usize, usize)], epsilon_ref: f64, oracle: OracleMode) -> Result<Calibration> {
    if !(epsilon_ref > 0.0) {
        return Err(arg_err("reference epsilon must be positive"));
    }
    if pairs.is_empty() {
        return Err(arg_err("calibration needs at least one pair"));
    }
    let per_pair = pairs
        .iter()
        .map(|&(j, k)| Ok(((j, k), expansion_measure(spec, j, k, epsilon_ref, oracle)?.value / epsilon_ref)))
        .collect::<Result<Vec<_>>>()?;
    let l_tilde = per_pair.iter().map(|p| p.1).fold(0.0, f64::max);
    Ok(Calibration { l_tilde, epsilon_ref, per_pair })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Theorem1Config {
    pub n: usize,
    pub epsilon: f64,
    pub alpha: f64,
    pub trials: usize,
    pub l_tilde: f64,
    pub noise: NoiseKind,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoundCheckResult {
    pub pair: (usize, usize),
    pub trial: usize,
    pub a_jk: f64,
    pub mu: f64,
    pub gamma: f64,
    pub violated: bool,
    pub n: usize,
    pub epsilon: f64,
    pub alpha: f64,
    pub l_tilde: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Theorem1Report {
    pub results: Vec<BoundCheckResult>,
    pub violation_rate: f64,
    /// `α + 2 sqrt(α (1 − α) / trials)`.
    pub allowed_rate: f64,
    pub max_error: f64,
}

impl Theorem1Report {
    pub fn holds(&self) -> bool {
        self.violation_rate <= self.allowed_rate
    }

    /// Columns: pair, N, epsilon, alpha, a_jk, mu, gamma, violated.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["pair", "N", "epsilon", "alpha", "a_jk", "mu", "gamma", "violated"])?;
        for r in &self.results {
            out.write_record([
                format!("{}-{}", r.pair.0, r.pair.1),
                r.n.to_string(),
                r.epsilon.to_string(),
                r.alpha.to_string(),
                r.a_jk.to_string(),
                r.mu.to_string(),
                r.gamma.to_string(),
                u8::from(r.violated).to_string(),
            ])?;
        }
        out.flush()?;
        Ok(())
    }
}

/// Runs `trials` independently seeded estimates per pair and flags `|a_jk − μ| > γ`.
pub fn check_theorem1(
    spec: &RegionSpec,
    pairs: &[(usize, usize)],
    cfg: &Theorem1Config,
    oracle: OracleMode,
) -> Result<Theorem1Report> {
    if pairs.is_empty() || cfg.trials == 0 {
        return Err(arg_err("need at least one pair and one trial"));
    }
    if !(cfg.alpha > 0.0 && cfg.alpha < 1.0) {
        return Err(arg_err("alpha must lie in (0, 1)"));
    }
    if !(cfg.l_tilde >= 0.0 && cfg.l_tilde.is_finite()) {
        return Err(arg_err("L_tilde must be finite and non-negative"));
    }
    let g = gamma(cfg.n, cfg.alpha, cfg.l_tilde, cfg.epsilon);
    let mut results = Vec::with_capacity(pairs.len() * cfg.trials);
    for (p, &(j, k)) in pairs.iter().enumerate() {
        let mu = oracle_coselect_measure(spec, j, k, oracle)?.value;
        let pair_seed = derive_seed(cfg.seed, p as u64);
        let estimates = (0..cfg.trials)
            .into_par_iter()
            .map(|t| empirical_ajk(spec, j, k, cfg.n, cfg.epsilon, cfg.noise, derive_seed(pair_seed, t as u64)))
            .collect::<Result<Vec<f64>>>()?;
        results.extend(estimates.into_iter().enumerate().map(|(trial, a)| BoundCheckResult {
            pair: (j, k),
            trial,
            a_jk: a,
            mu,
            gamma: g,
            violated: (a - mu).abs() > g,
            n: cfg.n,
            epsilon: cfg.epsilon,
            alpha: cfg.alpha,
            l_tilde: cfg.l_tilde,
        }));
    }
    let violations = results.iter().filter(|r| r.violated).count();
    let max_error = results.iter().map(|r| (r.a_jk - r.mu).abs()).fold(0.0, f64::max);
    Ok(Theorem1Report {
        violation_rate: violations as f64 / results.len() as f64,
        allowed_rate: cfg.alpha + 2.0 * (cfg.alpha * (1.0 - cfg.alpha) / cfg.trials as f64).sqrt(),
        max_error,
        results,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceFit {
    pub ns: Vec<usize>,
    pub max_errors: Vec<f64>,
    /// Slope of `ln max_error` against `ln N`.
    pub slope: f64,
}

/// Worst error over `trials` noiseless estimates at each N, with the log-log slope.
pub fn convergence_fit(
    spec: &RegionSpec,
    j: usize,
    k: usize,
    ns: &[usize],
    trials: usize,
    mu: f64,
    seed: u64,
) -> Result<ConvergenceFit> {
    if ns.len() < 2 || trials == 0 {
        return Err(arg_err("need at least two sample sizes and one trial"));
    }
    let mut max_errors = Vec::with_capacity(ns.len());
    for (i, &n) in ns.iter().enumerate() {
        let level_seed = derive_seed(seed, i as u64);
        let worst = (0..trials)
            .into_par_iter()
            .map(|t| empirical_ajk(spec, j, k, n, 0.0, NoiseKind::UniformBall, derive_seed(level_seed, t as u64)).map(|a| (a - mu).abs()))
            .collect::<Result<Vec<f64>>>()?
            .into_iter()
            .fold(0.0, f64::max);
        if worst == 0.0 {
            return Err(Error::Numerical { message: format!("zero error at N = {n}; slope undefined"), dump: String::new() });
        }
        max_errors.push(worst);
    }
    let lx: Vec<f64> = ns.iter().map(|&n| (n as f64).ln()).collect();
    let ly: Vec<f64> = max_errors.iter().map(|e| e.ln()).collect();
    Ok(ConvergenceFit { ns: ns.to_vec(), slope: least_squares_slope(&lx, &ly), max_errors })
}
