use crate::error::{arg_err, Result};

pub const MIB: f64 = 1024.0 * 1024.0;
pub const GIB: f64 = 1024.0 * 1024.0 * 1024.0;

/// Extra cost of maintaining and applying the social graph across `layers` layers.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ComplexityEstimate {
    pub train_flops: u128,
    pub infer_flops: u128,
    pub train_bytes: u128,
    pub infer_bytes: u128,
}

impl ComplexityEstimate {
    pub fn train_mib(&self) -> f64 {
        self.train_bytes as f64 / MIB
    }

    pub fn infer_mib(&self) -> f64 {
        self.infer_bytes as f64 / MIB
    }

    pub fn train_gflops(&self) -> f64 {
        self.train_flops as f64 / GIB
    }

    pub fn infer_gflops(&self) -> f64 {
        self.infer_flops as f64 / GIB
    }
}

fn pairs(k: u128) -> u128 {
    k * k.saturating_sub(1) / 2
}

/// Inference stores `M^2` entries and spends `N M^2` flops per layer; training
/// adds the `N C(K,2)` co-selection updates on top of both.
pub fn estimate_overhead(m: u64, k: u64, n: u64, layers: u64, bytes_per_entry: u64) -> Result<ComplexityEstimate> {
    if m == 0 || k == 0 || n == 0 || layers == 0 || bytes_per_entry == 0 {
        return Err(arg_err("all counts must be at least 1"));
    }
    if k > m {
        return Err(arg_err(format!("K exceeds expert count (K={k}, M={m})")));
    }
    let (m, k, n, l, b) = (m as u128, k as u128, n as u128, layers as u128, bytes_per_entry as u128);
    let square = m * m;
    Ok(ComplexityEstimate {
        train_flops: l * n * (square + pairs(k)),
        infer_flops: l * n * square,
        train_bytes: l * (square + n * pairs(k)) * b,
        infer_bytes: l * square * b,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn large_model_example() {
        let e = estimate_overhead(256, 8, 4096, 58, 4).unwrap();
        assert_eq!(e.train_mib(), 39.875);
        assert_eq!(e.infer_mib(), 14.5);
        assert_eq!(e.infer_gflops(), 14.5);
        assert_eq!((e.train_gflops() * 100.0).round() / 100.0, 14.51);
    }

    #[test]
    fn unit_and_small_scale() {
        let e = estimate_overhead(1, 1, 1, 1, 4).unwrap();
        assert_eq!((e.infer_bytes, e.infer_flops), (4, 1));
        let e = estimate_overhead(16, 2, 512, 1, 4).unwrap();
        assert_eq!(e.infer_flops, 131_072);
        assert_eq!(e.train_flops - e.infer_flops, 512);
    }

    #[test]
    fn k_above_m_rejected() {
        assert!(estimate_overhead(4, 5, 10, 1, 4).is_err());
        assert!(estimate_overhead(4, 2, 0, 1, 4).is_err());
    }
}
