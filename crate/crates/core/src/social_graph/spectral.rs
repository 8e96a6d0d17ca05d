use nalgebra::{DMatrix, SymmetricEigen};
use ndarray::Array2;

use super::adjacency::{AdjacencyState, NormMode};
use crate::error::{arg_err, dim_err, Error, Result};
use crate::router::{topk_select, TieRule};

/// Edge weight above which two experts count as connected.
pub const EDGE_EPS: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SpectrumKind {
    /// Eigenvalues of a symmetric adjacency.
    Eigenvalues,
    /// Singular values, used as a magnitude proxy when `A` is not symmetric.
    SingularValues,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpectralReport {
    /// Sorted in descending order.
    pub values: Vec<f64>,
    pub kind: SpectrumKind,
    /// Largest magnitude among all but the leading value.
    pub rho: f64,
    pub connected: bool,
    pub margin: Option<f64>,
}

fn to_nalgebra(a: &Array2<f64>) -> DMatrix<f64> {
    DMatrix::from_fn(a.nrows(), a.ncols(), |i, j| a[[i, j]])
}

fn dump(a: &Array2<f64>) -> String {
    let mut buf = Vec::new();
    crate::matrix_io::write_matrix(&mut buf, a).expect("writing to memory");
    String::from_utf8(buf).expect("ascii output")
}

pub fn symmetric_eigenvalues(a: &Array2<f64>) -> Result<Vec<f64>> {
    let eig = SymmetricEigen::try_new(to_nalgebra(a), 1e-15, 10_000).ok_or_else(|| Error::Numerical {
        message: "symmetric eigensolver did not converge".into(),
        dump: dump(a),
    })?;
    let mut values: Vec<f64> = eig.eigenvalues.iter().copied().collect();
    values.sort_by(|x, y| y.total_cmp(x));
    Ok(values)
}

pub fn singular_values(a: &Array2<f64>) -> Result<Vec<f64>> {
    let svd = to_nalgebra(a).try_svd(false, false, 1e-15, 10_000).ok_or_else(|| Error::Numerical {
        message: "SVD did not converge".into(),
        dump: dump(a),
    })?;
    let mut values: Vec<f64> = svd.singular_values.iter().copied().collect();
    values.sort_by(|x, y| y.total_cmp(x));
    Ok(values)
}

struct DisjointSet {
    parent: Vec<usize>,
}

impl DisjointSet {
    fn new(n: usize) -> Self {
        Self { parent: (0..n).collect() }
    }

    fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            self.parent[ra] = rb;
        }
    }
}

/// Whether the undirected graph with edges `a_jk > EDGE_EPS` (j != k) is connected.
pub fn is_connected(a: &Array2<f64>) -> bool {
    let m = a.nrows();
    let mut ds = DisjointSet::new(m);
    for j in 0..m {
        for k in (j + 1)..m {
            if a[[j, k]] > EDGE_EPS || a[[k, j]] > EDGE_EPS {
                ds.union(j, k);
            }
        }
    }
    let root = ds.find(0);
    (1..m).all(|j| ds.find(j) == root)
}

/// `min_{j in TopK} r_j - max_{j not in TopK} r_j`; `None` when K = M.
pub fn topk_margin(r: &[f64], k: usize) -> Result<Option<f64>> {
    let top = topk_select(r, k, TieRule::LowestIndex)?;
    let lo_in = top.iter().map(|&j| r[j]).fold(f64::INFINITY, f64::min);
    let hi_out = (0..r.len())
        .filter(|j| !top.contains(j))
        .map(|j| r[j])
        .fold(f64::NEG_INFINITY, f64::max);
    Ok((hi_out > f64::NEG_INFINITY).then_some(lo_in - hi_out))
}

/// Spectrum, second-magnitude `rho`, connectivity and optional TopK margin of `A·gate`.
pub fn spectral_report_of(a: &Array2<f64>, mode: NormMode, gate: Option<(&[f64], usize)>) -> Result<SpectralReport> {
    if a.nrows() != a.ncols() {
        return Err(dim_err("adjacency must be square"));
    }
    if a.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical { message: "adjacency has non-finite entries".into(), dump: dump(a) });
    }
    let (values, kind) = match mode {
        NormMode::Sinkhorn => (symmetric_eigenvalues(a)?, SpectrumKind::Eigenvalues),
        NormMode::RowNorm => (singular_values(a)?, SpectrumKind::SingularValues),
    };
    let rho = values.iter().skip(1).map(|v| v.abs()).fold(0.0, f64::max);
    let margin = match gate {
        Some((row, k)) => {
            if row.len() != a.ncols() {
                return Err(dim_err("gate row length does not match adjacency"));
            }
            if k == 0 || k > row.len() {
                return Err(arg_err("K out of range for margin"));
            }
            let r: Vec<f64> = (0..a.nrows()).map(|j| (0..a.ncols()).map(|c| a[[j, c]] * row[c]).sum()).collect();
            topk_margin(&r, k)?
        }
        None => None,
    };
    Ok(SpectralReport { values, kind, rho, connected: is_connected(a), margin })
}

impl AdjacencyState {
    pub fn spectral_report(&self, gate: Option<(&[f64], usize)>) -> Result<SpectralReport> {
        spectral_report_of(self.matrix(), self.norm_mode(), gate)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn averaging_matrix() {
        let m = 5;
        let a = Array2::from_elem((m, m), 1.0 / m as f64);
        let r = spectral_report_of(&a, NormMode::Sinkhorn, None).unwrap();
        assert!((r.values[0] - 1.0).abs() < 1e-12);
        assert!(r.values[1..].iter().all(|v| v.abs() < 1e-12));
        assert!(r.rho < 1e-12);
        assert!(r.connected);
    }

    #[test]
    fn identity_is_disconnected() {
        let r = spectral_report_of(&Array2::eye(4), NormMode::Sinkhorn, None).unwrap();
        assert!(r.values.iter().all(|v| (v - 1.0).abs() < 1e-12));
        assert!((r.rho - 1.0).abs() < 1e-12);
        assert!(!r.connected);
    }

    #[test]
    fn two_by_two() {
        let a = array![[0.6, 0.4], [0.4, 0.6]];
        let r = spectral_report_of(&a, NormMode::Sinkhorn, Some((&[0.7, 0.3], 1))).unwrap();
        assert!((r.values[0] - 1.0).abs() < 1e-12);
        assert!((r.values[1] - 0.2).abs() < 1e-12);
        assert!((r.rho - 0.2).abs() < 1e-12);
        // r = (0.54, 0.46)
        assert!((r.margin.unwrap() - 0.08).abs() < 1e-12);
    }

    #[test]
    fn rownorm_reports_singular_values() {
        let a = array![[0.5, 0.5, 0.0], [1.0 / 3.0, 0.5, 1.0 / 6.0], [0.0, 0.0, 1.0]];
        let r = spectral_report_of(&a, NormMode::RowNorm, None).unwrap();
        assert_eq!(r.kind, SpectrumKind::SingularValues);
        assert!(r.values.windows(2).all(|w| w[0] >= w[1]));
        // a_12 = 1/6 links the third expert even though its own row is an identity row
        assert!(r.connected);
    }

    #[test]
    fn margin_at_k_equal_m_is_none() {
        assert_eq!(topk_margin(&[0.2, 0.8], 2).unwrap(), None);
        assert!((topk_margin(&[0.1, 0.5, 0.4], 1).unwrap().unwrap() - 0.1).abs() < 1e-15);
    }
}
