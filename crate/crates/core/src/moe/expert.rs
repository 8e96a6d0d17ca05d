use ndarray::{Array1, Array2, ArrayView1};
use rand_distr::{Distribution, StandardNormal};

use crate::error::{arg_err, Result};
use crate::rng::Rng;

/// Two-layer rectifier perceptron `W2 relu(W1 x + b1) + b2`.
#[derive(Debug, Clone, PartialEq)]
pub struct Expert {
    pub w1: Array2<f64>,
    pub b1: Array1<f64>,
    pub w2: Array2<f64>,
    pub b2: Array1<f64>,
}

/// Intermediate values kept for the backward pass.
#[derive(Debug, Clone)]
pub struct ExpertTrace {
    pub pre: Array1<f64>,
    pub out: Array1<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExpertGrads {
    pub w1: Array2<f64>,
    pub b1: Array1<f64>,
    pub w2: Array2<f64>,
    pub b2: Array1<f64>,
}

impl ExpertGrads {
    pub fn zeros_like(e: &Expert) -> Self {
        Self {
            w1: Array2::zeros(e.w1.raw_dim()),
            b1: Array1::zeros(e.b1.len()),
            w2: Array2::zeros(e.w2.raw_dim()),
            b2: Array1::zeros(e.b2.len()),
        }
    }
}

impl Expert {
    pub fn init(d: usize, h: usize, d_out: usize, rng: &mut Rng) -> Self {
        let mut normal = |rows: usize, cols: usize, std: f64| {
            Array2::from_shape_fn((rows, cols), |_| {
                let z: f64 = StandardNormal.sample(rng);
                std * z
            })
        };
        Self {
            w1: normal(h, d, (2.0 / d as f64).sqrt()),
            b1: Array1::zeros(h),
            w2: normal(d_out, h, (1.0 / h as f64).sqrt()),
            b2: Array1::zeros(d_out),
        }
    }

    /// Expert that ignores its input and returns `value`.
    pub fn constant(d: usize, h: usize, value: Array1<f64>) -> Self {
        Self {
            w1: Array2::zeros((h, d)),
            b1: Array1::zeros(h),
            w2: Array2::zeros((value.len(), h)),
            b2: value,
        }
    }

    /// Exact identity on R^d built as `relu(x) - relu(-x)`.
    pub fn identity(d: usize) -> Self {
        let mut w1 = Array2::zeros((2 * d, d));
        let mut w2 = Array2::zeros((d, 2 * d));
        for i in 0..d {
            w1[[i, i]] = 1.0;
            w1[[d + i, i]] = -1.0;
            w2[[i, i]] = 1.0;
            w2[[i, d + i]] = -1.0;
        }
        Self { w1, b1: Array1::zeros(2 * d), w2, b2: Array1::zeros(d) }
    }

    pub fn dims(&self) -> (usize, usize, usize) {
        (self.w1.ncols(), self.w1.nrows(), self.w2.nrows())
    }

    pub fn forward(&self, x: ArrayView1<'_, f64>) -> ExpertTrace {
        let pre = self.w1.dot(&x) + &self.b1;
        let hidden = pre.mapv(|v| v.max(0.0));
        let out = self.w2.dot(&hidden) + &self.b2;
        ExpertTrace { pre, out }
    }

    /// Accumulates parameter gradients into `grads` and returns `dL/dx`.
    pub fn backward(
        &self,
        x: ArrayView1<'_, f64>,
        trace: &ExpertTrace,
        grad_out: ArrayView1<'_, f64>,
        grads: &mut ExpertGrads,
    ) -> Array1<f64> {
        let hidden = trace.pre.mapv(|v| v.max(0.0));
        for (o, &g) in grad_out.iter().enumerate() {
            if g != 0.0 {
                grads.w2.row_mut(o).scaled_add(g, &hidden);
            }
        }
        grads.b2 += &grad_out;
        let mut grad_pre = self.w2.t().dot(&grad_out);
        grad_pre.zip_mut_with(&trace.pre, |g, &p| {
            if p <= 0.0 {
                *g = 0.0;
            }
        });
        for (h, &g) in grad_pre.iter().enumerate() {
            if g != 0.0 {
                grads.w1.row_mut(h).scaled_add(g, &x);
            }
        }
        grads.b1 += &grad_pre;
        self.w1.t().dot(&grad_pre)
    }
}

/// M experts sharing input, hidden and output widths.
#[derive(Debug, Clone, PartialEq)]
pub struct ExpertSet {
    experts: Vec<Expert>,
}

impl ExpertSet {
    pub fn new(experts: Vec<Expert>) -> Result<Self> {
        let first = experts.first().ok_or_else(|| arg_err("expert set is empty"))?.dims();
        for (j, e) in experts.iter().enumerate() {
            if e.dims() != first || e.b1.len() != first.1 || e.b2.len() != first.2 || e.w2.ncols() != first.1 {
                return Err(arg_err(format!("expert {j} has inconsistent shapes")));
            }
            let finite = e.w1.iter().chain(&e.b1).chain(&e.w2).chain(&e.b2).all(|v| v.is_finite());
            if !finite {
                return Err(arg_err(format!("expert {j} has non-finite parameters")));
            }
        }
        Ok(Self { experts })
    }

    pub fn init(m: usize, d: usize, h: usize, d_out: usize, rng: &mut Rng) -> Result<Self> {
        Self::new((0..m).map(|_| Expert::init(d, h, d_out, rng)).collect())
    }

    pub fn len(&self) -> usize {
        self.experts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.experts.is_empty()
    }

    pub fn in_dim(&self) -> usize {
        self.experts[0].dims().0
    }

    pub fn hidden(&self) -> usize {
        self.experts[0].dims().1
    }

    pub fn out_dim(&self) -> usize {
        self.experts[0].dims().2
    }

    pub fn get(&self, j: usize) -> &Expert {
        &self.experts[j]
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Expert> {
        self.experts.iter()
    }

    pub fn iter_mut(&mut self) -> std::slice::IterMut<'_, Expert> {
        self.experts.iter_mut()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_from;
    use ndarray::array;

    #[test]
    fn identity_expert_is_exact() {
        let e = Expert::identity(3);
        let x = array![0.5, -2.0, 3.25];
        assert_eq!(e.forward(x.view()).out, x);
    }

    #[test]
    fn constant_expert() {
        let e = Expert::constant(2, 4, array![1.5, -1.0]);
        assert_eq!(e.forward(array![9.0, -3.0].view()).out, array![1.5, -1.0]);
    }

    #[test]
    fn inconsistent_set_rejected() {
        let mut rng = rng_from(0);
        let a = Expert::init(2, 3, 1, &mut rng);
        let b = Expert::init(2, 4, 1, &mut rng);
        assert!(ExpertSet::new(vec![a, b]).is_err());
        assert!(ExpertSet::new(vec![]).is_err());
    }
}
