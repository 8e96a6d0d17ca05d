//! Property checks for smoothing with a doubly stochastic adjacency:
//! contraction of mean-zero perturbations, margin-protected TopK stability,
//! the uniform fixed point and norm non-expansion on probability vectors.

use ndarray::{Array1, Array2};
use rand::seq::index::sample;
use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{arg_err, dim_err, Result};
use crate::rng::{stream, Rng};
use crate::router::{softmax_row, topk_select, TieRule};
use crate::social_graph::{
    is_connected, sinkhorn, spectral_report_of, topk_margin, NormMode, SinkhornConfig,
};

/// Tolerance on row and column sums for the doubly stochastic precondition.
pub const DS_TOL: f64 = 1e-6;
/// Absolute slack allowed in the contraction and non-expansion checks.
pub const CHECK_TOL: f64 = 1e-9;
/// Minimum TopK margin of the smoothed gate used for the stability check.
pub const MIN_MARGIN: f64 = 1e-3;
/// Perturbation radius used when `rho` is zero and the bound is unlimited.
const RADIUS_CAP: f64 = 10.0;

#[derive(Debug, Clone, PartialEq)]
pub struct Prop1Check {
    pub name: &'static str,
    pub trials: usize,
    pub violations: usize,
    /// Draws with no usable input, such as a gate vector without a TopK margin.
    pub skipped: usize,
    /// Smallest `bound − value` over all trials; negative means a violation.
    pub worst_slack: f64,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Prop1Report {
    pub m: usize,
    pub k: usize,
    pub applicable: bool,
    /// Why the checks were skipped, if they were.
    pub notes: Vec<String>,
    pub rho: f64,
    pub connected: bool,
    pub doubly_stochastic_error: f64,
    pub checks: Vec<Prop1Check>,
}

impl Prop1Report {
    pub fn passed(&self) -> bool {
        self.applicable && self.checks.iter().all(|c| c.passed)
    }

    pub fn check(&self, name: &str) -> Option<&Prop1Check> {
        self.checks.iter().find(|c| c.name == name)
    }
}

fn norm(v: &Array1<f64>) -> f64 {
    v.dot(v).sqrt()
}

fn mean_zero_unit(m: usize, rng: &mut Rng) -> Array1<f64> {
    loop {
        let mut v: Array1<f64> = Array1::from_shape_fn(m, |_| StandardNormal.sample(rng));
        let mean = v.mean().unwrap_or(0.0);
        v -= mean;
        let n = norm(&v);
        if n > 1e-8 {
            return v / n;
        }
    }
}

fn random_probability(m: usize, rng: &mut Rng) -> Array1<f64> {
    let temp: f64 = rng.random_range(1.0..12.0);
    let logits: Vec<f64> = (0..m).map(|_| { let z: f64 = StandardNormal.sample(rng); temp * z }).collect();
    Array1::from(softmax_row(&logits))
}

/// Largest deviation of any row or column sum from one.
pub fn doubly_stochastic_error(a: &Array2<f64>) -> f64 {
    let rows = a.rows().into_iter().map(|r| (r.sum() - 1.0).abs());
    let cols = a.columns().into_iter().map(|c| (c.sum() - 1.0).abs());
    rows.chain(cols).fold(0.0, f64::max)
}

fn finish(name: &'static str, slacks: &[f64], skipped: usize, tol: f64) -> Prop1Check {
    let violations = slacks.iter().filter(|&&s| s < -tol).count();
    Prop1Check {
        name,
        trials: slacks.len(),
        violations,
        skipped,
        worst_slack: slacks.iter().copied().fold(f64::INFINITY, f64::min),
        passed: violations == 0,
    }
}

/// Runs all four checks over `trials` random draws each.
///
/// A matrix that is not doubly stochastic or whose graph is disconnected
/// produces a report with `applicable = false` and no checks.
pub fn check_prop1(a: &Array2<f64>, k: usize, trials: usize, seed: u64) -> Result<Prop1Report> {
    if a.nrows() != a.ncols() || a.nrows() == 0 {
        return Err(dim_err("adjacency must be a non-empty square matrix"));
    }
    let m = a.nrows();
    if k == 0 || k >= m {
        return Err(arg_err(format!("K must satisfy 1 <= K < M (K={k}, M={m})")));
    }
    if trials == 0 {
        return Err(arg_err("trials must be positive"));
    }
    let ds_err = doubly_stochastic_error(a);
    let connected = is_connected(a);
    let mut notes = Vec::new();
    if a.iter().any(|v| !(*v >= 0.0)) {
        notes.push("adjacency has negative or non-finite entries".to_string());
    }
    if ds_err > DS_TOL {
        notes.push(format!("not doubly stochastic: max row/column sum error {ds_err:.3e}"));
    }
    if !connected {
        notes.push("co-selection graph is disconnected".to_string());
    }
    let symmetric = a.iter().zip(a.t().iter()).all(|(x, y)| (x - y).abs() <= 1e-9);
    let mode = if symmetric { NormMode::Sinkhorn } else { NormMode::RowNorm };
    let report = spectral_report_of(a, mode, None)?;
    let rho = report.rho;
    if !notes.is_empty() {
        return Ok(Prop1Report { m, k, applicable: false, notes, rho, connected, doubly_stochastic_error: ds_err, checks: vec![] });
    }

    let tol = CHECK_TOL + ds_err * (m as f64).sqrt();

    let mut rng = stream(seed, 0);
    let contraction: Vec<f64> = (0..trials)
        .map(|_| {
            let v = mean_zero_unit(m, &mut rng);
            rho * norm(&v) - norm(&a.dot(&v))
        })
        .collect();

    let mut rng = stream(seed, 1);
    let mut stability = Vec::with_capacity(trials);
    let mut skipped = 0;
    for _ in 0..trials {
        let mut found = None;
        for _ in 0..1_000 {
            let s = random_probability(m, &mut rng);
            let r = a.dot(&s);
            if let Some(g) = topk_margin(r.as_slice().expect("contiguous"), k)? {
                if g > MIN_MARGIN {
                    found = Some((s, r, g));
                    break;
                }
            }
        }
        let Some((s, r, g)) = found else {
            skipped += 1;
            continue;
        };
        let limit = if rho > 0.0 { (g / (2.0 * rho)).min(RADIUS_CAP) } else { RADIUS_CAP };
        let radius = limit * rng.random::<f64>() * (1.0 - 1e-9);
        let ds = mean_zero_unit(m, &mut rng) * radius;
        let before = topk_select(r.as_slice().expect("contiguous"), k, TieRule::LowestIndex)?;
        let r2 = a.dot(&(&s + &ds));
        let r2 = r2.as_slice().expect("contiguous");
        let lo_in = before.iter().map(|&j| r2[j]).fold(f64::INFINITY, f64::min);
        let hi_out = (0..m).filter(|j| !before.contains(j)).map(|j| r2[j]).fold(f64::NEG_INFINITY, f64::max);
        let after = topk_select(r2, k, TieRule::LowestIndex)?;
        // slack is the surviving margin; an index change is always a violation
        stability.push(if after == before { lo_in - hi_out } else { f64::NEG_INFINITY });
    }

    let mut rng = stream(seed, 2);
    let fixed_point: Vec<f64> = (0..trials)
        .map(|_| {
            let c: f64 = rng.random_range(-10.0..10.0);
            let u = Array1::from_elem(m, c / m as f64);
            let err = (&a.dot(&u) - &u).iter().fold(0.0f64, |acc, v| acc.max(v.abs()));
            DS_TOL * c.abs() / m as f64 + CHECK_TOL - err
        })
        .collect();

    let mut rng = stream(seed, 3);
    let nonexpansion: Vec<f64> = (0..trials)
        .map(|_| {
            let s = random_probability(m, &mut rng);
            norm(&s) - norm(&a.dot(&s))
        })
        .collect();

    if skipped > 0 {
        notes.push(format!("{skipped} stability draws found no gate vector with margin above {MIN_MARGIN}"));
    }
    let checks = vec![
        finish("contraction", &contraction, 0, tol),
        finish("topk-stability", &stability, skipped, 0.0),
        finish("uniform-fixed-point", &fixed_point, 0, 0.0),
        finish("non-expansion", &nonexpansion, 0, tol),
    ];
    Ok(Prop1Report { m, k, applicable: true, notes, rho, connected, doubly_stochastic_error: ds_err, checks })
}

/// Sinkhorn-normalized co-selection counts from random TopK draws, resampled until connected.
pub fn random_sinkhorn_adjacency(m: usize, k: usize, tokens: usize, rng: &mut Rng) -> Result<Array2<f64>> {
    if m < 2 || k == 0 || k > m {
        return Err(arg_err(format!("need M >= 2 and 1 <= K <= M (K={k}, M={m})")));
    }
    for _ in 0..1000 {
        let mut counts = Array2::<f64>::zeros((m, m));
        for _ in 0..tokens {
            let picked = sample(rng, m, k).into_vec();
            for &a in &picked {
                for &b in &picked {
                    counts[[a, b]] += 1.0;
                }
            }
        }
        if is_connected(&counts) {
            return Ok(sinkhorn(&counts, &SinkhornConfig::default()).0);
        }
    }
    Err(arg_err("could not draw a connected co-selection graph"))
}
