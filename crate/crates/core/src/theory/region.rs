//! Ball-shaped expert regions inside an axis-aligned domain box.
//!
//! File layout:
//!
//! ```text
//! dim 2 2
//! -2 3 -2 2          # lower/upper bound per axis
//! 0 0 1              # center coordinates then radius, one line per region
//! 1 0 1
//! ```

use std::io::{BufRead, Write};
use std::path::Path;

use rand::Rng as _;

use crate::error::{arg_err, Error, Result};
use crate::rng::Rng;

#[derive(Debug, Clone, PartialEq)]
pub struct RegionSpec {
    pub dim: usize,
    pub centers: Vec<Vec<f64>>,
    pub radii: Vec<f64>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl RegionSpec {
    /// Validates shapes, positive radii and that every ball lies in the box.
    pub fn new(centers: Vec<Vec<f64>>, radii: Vec<f64>, lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        let spec = Self::with_overhang(centers, radii, lower, upper)?;
        for (j, (c, &r)) in spec.centers.iter().zip(&spec.radii).enumerate() {
            let inside = c
                .iter()
                .zip(spec.lower.iter().zip(&spec.upper))
                .all(|(&x, (&lo, &hi))| x - r >= lo - 1e-12 && x + r <= hi + 1e-12);
            if !inside {
                return Err(arg_err(format!("ball {j} is not contained in the domain box")));
            }
        }
        Ok(spec)
    }

    /// Like [`new`](Self::new) but allows balls that reach outside the box.
    pub fn with_overhang(centers: Vec<Vec<f64>>, radii: Vec<f64>, lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        let dim = lower.len();
        if dim == 0 || upper.len() != dim {
            return Err(arg_err("box bounds must have one lower and one upper value per axis"));
        }
        if lower.iter().zip(&upper).any(|(lo, hi)| !(lo < hi)) {
            return Err(arg_err("box lower bounds must be below upper bounds"));
        }
        if centers.len() != radii.len() || centers.is_empty() {
            return Err(arg_err("need one radius per center and at least one region"));
        }
        if centers.iter().any(|c| c.len() != dim) {
            return Err(arg_err("center dimension does not match the box"));
        }
        if radii.iter().any(|&r| !(r > 0.0 && r.is_finite())) {
            return Err(arg_err("radii must be positive"));
        }
        Ok(Self { dim, centers, radii, lower, upper })
    }

    pub fn n_regions(&self) -> usize {
        self.centers.len()
    }

    pub fn box_volume(&self) -> f64 {
        self.lower.iter().zip(&self.upper).map(|(lo, hi)| hi - lo).product()
    }

    pub fn diameter(&self) -> f64 {
        self.lower.iter().zip(&self.upper).map(|(lo, hi)| (hi - lo).powi(2)).sum::<f64>().sqrt()
    }

    pub fn sample_box(&self, rng: &mut Rng) -> Vec<f64> {
        self.lower.iter().zip(&self.upper).map(|(&lo, &hi)| rng.random_range(lo..hi)).collect()
    }

    pub fn fill_sample(&self, rng: &mut Rng, out: &mut [f64]) {
        for ((o, &lo), &hi) in out.iter_mut().zip(&self.lower).zip(&self.upper) {
            *o = lo + (hi - lo) * rng.random::<f64>();
        }
    }

    pub fn distance_to_center(&self, j: usize, x: &[f64]) -> f64 {
        self.centers[j].iter().zip(x).map(|(c, v)| (c - v).powi(2)).sum::<f64>().sqrt()
    }

    pub fn in_ball(&self, j: usize, x: &[f64], grow: f64) -> bool {
        self.distance_to_center(j, x) <= self.radii[j] + grow
    }

    /// Membership in the co-selection region `B_j ∩ B_k` with radii grown by `grow`.
    pub fn in_pair(&self, j: usize, k: usize, x: &[f64], grow: f64) -> bool {
        self.in_ball(j, x, grow) && self.in_ball(k, x, grow)
    }

    pub fn check_pair(&self, j: usize, k: usize) -> Result<()> {
        if j == k {
            return Err(arg_err("a co-selection pair needs two distinct regions"));
        }
        if j >= self.n_regions() || k >= self.n_regions() {
            return Err(arg_err(format!("pair ({j}, {k}) out of range for {} regions", self.n_regions())));
        }
        Ok(())
    }

    pub fn write<W: Write>(&self, w: &mut W) -> Result<()> {
        writeln!(w, "dim {} {}", self.dim, self.n_regions())?;
        let bounds: Vec<String> = self.lower.iter().zip(&self.upper).flat_map(|(lo, hi)| [lo.to_string(), hi.to_string()]).collect();
        writeln!(w, "{}", bounds.join(" "))?;
        for (c, r) in self.centers.iter().zip(&self.radii) {
            let mut fields: Vec<String> = c.iter().map(f64::to_string).collect();
            fields.push(r.to_string());
            writeln!(w, "{}", fields.join(" "))?;
        }
        Ok(())
    }

    pub fn read<R: BufRead>(r: R) -> Result<Self> {
        let mut lines = r
            .lines()
            .map(|l| l.map(|s| s.split('#').next().unwrap_or("").trim().to_string()))
            .filter(|l| l.as_ref().map_or(true, |s| !s.is_empty()));
        let mut next = |what: &str| -> Result<Vec<String>> {
            let line = lines.next().ok_or_else(|| Error::Parse(format!("region file ends before {what}")))??;
            Ok(line.split_whitespace().map(str::to_string).collect())
        };
        let header = next("header")?;
        let (dim, m) = match header.as_slice() {
            [tag, d, m] if tag == "dim" => (
                d.parse::<usize>().map_err(|e| Error::Parse(e.to_string()))?,
                m.parse::<usize>().map_err(|e| Error::Parse(e.to_string()))?,
            ),
            _ => return Err(Error::Parse("region header must be 'dim <d> <M>'".into())),
        };
        let nums = |fields: Vec<String>| -> Result<Vec<f64>> {
            fields.iter().map(|t| t.parse::<f64>().map_err(|e| Error::Parse(format!("'{t}': {e}")))).collect()
        };
        let bounds = nums(next("box bounds")?)?;
        if bounds.len() != 2 * dim {
            return Err(Error::Parse(format!("expected {} box bounds, found {}", 2 * dim, bounds.len())));
        }
        let lower = bounds.iter().step_by(2).copied().collect();
        let upper = bounds.iter().skip(1).step_by(2).copied().collect();
        let mut centers = Vec::with_capacity(m);
        let mut radii = Vec::with_capacity(m);
        for j in 0..m {
            let mut v = nums(next(&format!("region {j}"))?)?;
            if v.len() != dim + 1 {
                return Err(Error::Parse(format!("region {j} needs {} numbers", dim + 1)));
            }
            radii.push(v.pop().expect("non-empty"));
            centers.push(v);
        }
        Self::new(centers, radii, lower, upper)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::read(std::io::BufReader::new(std::fs::File::open(path)?))
    }

    /// Two unit circles one unit apart in the box `[-2, 3] x [-2, 2]`.
    pub fn two_circle_fixture() -> Self {
        Self::new(vec![vec![0.0, 0.0], vec![1.0, 0.0]], vec![1.0, 1.0], vec![-2.0, -2.0], vec![3.0, 2.0])
            .expect("fixture is valid")
    }
}
