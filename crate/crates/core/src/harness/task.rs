//! Synthetic region-structured tasks.
//!
//! Tokens are uniform on the box `[-h, h]^d`. Each token belongs to the region
//! with the nearest center (ties go to the lowest index). Regression targets
//! come from a per-region affine map plus Gaussian noise; classification
//! labels are the region index.

use ndarray::{Array1, Array2};
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{arg_err, Result};
use crate::rng::{stream, Rng};
use crate::theory::RegionSpec;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum TaskKind {
    MixtureRegression,
    RegionClassification,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TaskParams {
    pub kind: TaskKind,
    #[serde(default = "d_dim")]
    pub dim: usize,
    #[serde(default = "d_regions")]
    pub regions: usize,
    /// Regression output width; classification uses one output per region.
    #[serde(default = "d_out")]
    pub out_dim: usize,
    /// Observation noise on regression targets.
    #[serde(default = "d_sigma")]
    pub noise_sigma: f64,
    #[serde(default = "d_half")]
    pub half_width: f64,
    /// Standard deviation of the entries of the per-region maps and offsets.
    #[serde(default = "d_scale")]
    pub target_scale: f64,
    #[serde(default = "d_train")]
    pub train: usize,
    #[serde(default = "d_valid")]
    pub valid: usize,
    #[serde(default = "d_test")]
    pub test: usize,
}

fn d_dim() -> usize {
    2
}
fn d_regions() -> usize {
    4
}
fn d_out() -> usize {
    1
}
fn d_sigma() -> f64 {
    0.0
}
fn d_half() -> f64 {
    1.0
}
fn d_scale() -> f64 {
    1.0
}
fn d_train() -> usize {
    2048
}
fn d_valid() -> usize {
    512
}
fn d_test() -> usize {
    1024
}

impl Default for TaskParams {
    fn default() -> Self {
        Self {
            kind: TaskKind::MixtureRegression,
            dim: d_dim(),
            regions: d_regions(),
            out_dim: d_out(),
            noise_sigma: d_sigma(),
            half_width: d_half(),
            target_scale: d_scale(),
            train: d_train(),
            valid: d_valid(),
            test: d_test(),
        }
    }
}

impl TaskParams {
    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 || self.regions == 0 || self.out_dim == 0 {
            return Err(arg_err("task dim, regions and out_dim must be at least 1"));
        }
        if !(self.half_width > 0.0 && self.half_width.is_finite()) {
            return Err(arg_err("half_width must be positive"));
        }
        if !(self.noise_sigma >= 0.0 && self.target_scale >= 0.0) {
            return Err(arg_err("noise_sigma and target_scale must be non-negative"));
        }
        if self.train == 0 || self.valid == 0 || self.test == 0 {
            return Err(arg_err("every split needs at least one token"));
        }
        Ok(())
    }

    /// Width of the model output for this task.
    pub fn output_width(&self) -> usize {
        match self.kind {
            TaskKind::MixtureRegression => self.out_dim,
            TaskKind::RegionClassification => self.regions,
        }
    }

    pub fn diameter(&self) -> f64 {
        2.0 * self.half_width * (self.dim as f64).sqrt()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub x: Array2<f64>,
    /// Regression targets, or one-hot labels for classification.
    pub y: Array2<f64>,
    pub region: Vec<usize>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.x.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.x.nrows() == 0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticTask {
    pub params: TaskParams,
    pub seed: u64,
    /// Region centers; each radius is the distance to the nearest other center.
    pub regions: RegionSpec,
    pub maps: Vec<(Array2<f64>, Array1<f64>)>,
    pub train: Dataset,
    pub valid: Dataset,
    pub test: Dataset,
}

/// Index of the nearest center, lowest index on ties.
pub fn nearest_center(centers: &[Vec<f64>], x: &[f64]) -> usize {
    let mut best = (0, f64::INFINITY);
    for (j, c) in centers.iter().enumerate() {
        let d: f64 = c.iter().zip(x).map(|(a, b)| (a - b) * (a - b)).sum();
        if d < best.1 {
            best = (j, d);
        }
    }
    best.0
}

fn normal_matrix(rows: usize, cols: usize, std: f64, rng: &mut Rng) -> Array2<f64> {
    Array2::from_shape_fn((rows, cols), |_| {
        let z: f64 = StandardNormal.sample(rng);
        std * z
    })
}

fn sample_split(
    params: &TaskParams,
    centers: &[Vec<f64>],
    maps: &[(Array2<f64>, Array1<f64>)],
    n: usize,
    rng: &mut Rng,
) -> Dataset {
    let h = params.half_width;
    let width = params.output_width();
    let mut x = Array2::zeros((n, params.dim));
    let mut y = Array2::zeros((n, width));
    let mut region = Vec::with_capacity(n);
    let noise = Normal::new(0.0, params.noise_sigma).expect("validated sigma");
    let box_spec = RegionSpec::with_overhang(vec![vec![0.0; params.dim]], vec![1.0], vec![-h; params.dim], vec![h; params.dim])
        .expect("validated box");
    let mut token = vec![0.0; params.dim];
    for i in 0..n {
        box_spec.fill_sample(rng, &mut token);
        let r = nearest_center(centers, &token);
        let xi = Array1::from(token.clone());
        match params.kind {
            TaskKind::MixtureRegression => {
                let (w, c) = &maps[r];
                let mut target = w.dot(&xi) + c;
                if params.noise_sigma > 0.0 {
                    target.mapv_inplace(|v| v + noise.sample(rng));
                }
                y.row_mut(i).assign(&target);
            }
            TaskKind::RegionClassification => y[[i, r]] = 1.0,
        }
        x.row_mut(i).assign(&xi);
        region.push(r);
    }
    Dataset { x, y, region }
}

/// Deterministic in `(params, seed)`; each split has its own derived stream.
pub fn generate_task(params: &TaskParams, seed: u64) -> Result<SyntheticTask> {
    params.validate()?;
    let (d, m, h) = (params.dim, params.regions, params.half_width);
    let mut rng = stream(seed, 0);
    let box_spec = RegionSpec::with_overhang(vec![vec![0.0; d]], vec![1.0], vec![-h; d], vec![h; d])?;
    let centers: Vec<Vec<f64>> = (0..m).map(|_| box_spec.sample_box(&mut rng)).collect();
    let radii: Vec<f64> = (0..m)
        .map(|j| {
            let nearest = (0..m)
                .filter(|&k| k != j)
                .map(|k| centers[j].iter().zip(&centers[k]).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt())
                .fold(f64::INFINITY, f64::min);
            if nearest.is_finite() && nearest > 0.0 { nearest } else { params.diameter() }
        })
        .collect();
    let regions = RegionSpec::with_overhang(centers.clone(), radii, vec![-h; d], vec![h; d])?;

    let mut rng = stream(seed, 1);
    let maps: Vec<(Array2<f64>, Array1<f64>)> = (0..m)
        .map(|_| {
            let w = normal_matrix(params.out_dim, d, params.target_scale / (d as f64).sqrt(), &mut rng);
            let c = normal_matrix(1, params.out_dim, params.target_scale, &mut rng).row(0).to_owned();
            (w, c)
        })
        .collect();

    let train = sample_split(params, &centers, &maps, params.train, &mut stream(seed, 2));
    let valid = sample_split(params, &centers, &maps, params.valid, &mut stream(seed, 3));
    let test = sample_split(params, &centers, &maps, params.test, &mut stream(seed, 4));
    Ok(SyntheticTask { params: params.clone(), seed, regions, maps, train, valid, test })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_region_noise_free_is_affine() {
        let params = TaskParams { regions: 1, out_dim: 2, dim: 3, ..TaskParams::default() };
        let task = generate_task(&params, 5).unwrap();
        let (w, c) = &task.maps[0];
        for (x, y) in task.train.x.rows().into_iter().zip(task.train.y.rows()) {
            let expected = w.dot(&x) + c;
            assert!((&expected - &y).iter().all(|v| v.abs() < 1e-12));
        }
    }

    #[test]
    fn regeneration_is_identical() {
        let params = TaskParams { noise_sigma: 0.1, ..TaskParams::default() };
        assert_eq!(generate_task(&params, 9).unwrap(), generate_task(&params, 9).unwrap());
        assert_ne!(generate_task(&params, 9).unwrap().train, generate_task(&params, 10).unwrap().train);
    }

    #[test]
    fn splits_differ_and_labels_follow_nearest_center() {
        let params = TaskParams { kind: TaskKind::RegionClassification, regions: 5, ..TaskParams::default() };
        let task = generate_task(&params, 1).unwrap();
        assert_ne!(task.train.x.row(0), task.valid.x.row(0));
        for (i, x) in task.test.x.rows().into_iter().enumerate() {
            let r = nearest_center(&task.regions.centers, x.as_slice().unwrap());
            assert_eq!(task.test.region[i], r);
            assert_eq!(task.test.y[[i, r]], 1.0);
            assert_eq!(task.test.y.row(i).sum(), 1.0);
        }
    }

    #[test]
    fn ties_go_to_lowest_index() {
        let centers = vec![vec![1.0, 0.0], vec![-1.0, 0.0]];
        assert_eq!(nearest_center(&centers, &[0.0, 0.5]), 0);
    }
}
