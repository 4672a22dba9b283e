use nalgebra::DMatrix;

use super::SampleBuffer;
use crate::error::{Error, Result};

/// Symmetric Toeplitz autocorrelation matrix of order `L`, stored as its
/// first row `r(0) .. r(L-1)`.
#[derive(Debug, Clone, PartialEq)]
pub struct AutocorrMatrix {
    lags: Vec<f64>,
}

impl AutocorrMatrix {
    pub fn from_lags(lags: Vec<f64>) -> Result<Self> {
        if lags.is_empty() {
            return Err(Error::InvalidInput("autocorrelation needs at least one lag".into()));
        }
        if let Some(k) = lags.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidInput(format!("non-finite autocorrelation lag {k}")));
        }
        Ok(Self { lags })
    }

    pub fn zeros(order: usize) -> Self {
        Self {
            lags: vec![0.0; order.max(1)],
        }
    }

    pub fn order(&self) -> usize {
        self.lags.len()
    }

    pub fn lags(&self) -> &[f64] {
        &self.lags
    }

    pub fn into_lags(self) -> Vec<f64> {
        self.lags
    }

    /// Entry `(i, j)` of the expanded matrix.
    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.lags[i.abs_diff(j)]
    }

    pub fn expand(&self) -> DMatrix<f64> {
        let n = self.order();
        DMatrix::from_fn(n, n, |i, j| self.get(i, j))
    }

    /// Lagwise difference `self - other`.
    pub fn sub(&self, other: &AutocorrMatrix) -> Result<Self> {
        self.check_order(other)?;
        Ok(Self {
            lags: self.lags.iter().zip(&other.lags).map(|(a, b)| a - b).collect(),
        })
    }

    /// Lagwise sum `self + other`.
    pub fn add(&self, other: &AutocorrMatrix) -> Result<Self> {
        self.check_order(other)?;
        Ok(Self {
            lags: self.lags.iter().zip(&other.lags).map(|(a, b)| a + b).collect(),
        })
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            lags: self.lags.iter().map(|v| v * factor).collect(),
        }
    }

    fn check_order(&self, other: &AutocorrMatrix) -> Result<()> {
        if self.order() != other.order() {
            return Err(Error::InvalidInput(format!(
                "autocorrelation order mismatch: {} vs {}",
                self.order(),
                other.order()
            )));
        }
        Ok(())
    }
}

/// Biased lag estimate `r(k) = (1/N) sum_{n} x(n) x(n+k)` for `k < order`.
///
/// The biased normalisation keeps the Toeplitz expansion positive
/// semidefinite. Requires `2 <= order <= N/2`.
pub fn estimate_autocorr(buf: &SampleBuffer, order: usize) -> Result<AutocorrMatrix> {
    let x = buf.samples();
    let n = x.len();
    if order < 2 || 2 * order > n {
        return Err(Error::Precondition(format!(
            "autocorrelation order {order} needs 2 <= L <= N/2 (N = {n})"
        )));
    }
    let inv_n = 1.0 / n as f64;
    let lags = (0..order)
        .map(|k| dot(&x[..n - k], &x[k..]) * inv_n)
        .collect();
    Ok(AutocorrMatrix { lags })
}

// Four independent accumulators so the compiler can vectorise the loop.
fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = [0.0f64; 4];
    let chunks = a.len() / 4;
    for c in 0..chunks {
        let i = 4 * c;
        acc[0] += a[i] * b[i];
        acc[1] += a[i + 1] * b[i + 1];
        acc[2] += a[i + 2] * b[i + 2];
        acc[3] += a[i + 3] * b[i + 3];
    }
    let mut tail = 0.0;
    for i in 4 * chunks..a.len() {
        tail += a[i] * b[i];
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

#[cfg(test)]
mod tests {
    use std::f64::consts::PI;

    use super::*;

    fn cosine(f0: f64, fs: f64, n: usize) -> SampleBuffer {
        let x = (0..n).map(|k| (2.0 * PI * f0 * k as f64 / fs).cos()).collect();
        SampleBuffer::synthetic(x, fs).unwrap()
    }

    #[test]
    fn zero_buffer_gives_zero_matrix() {
        let buf = SampleBuffer::synthetic(vec![0.0; 2000], 1.0).unwrap();
        let r = estimate_autocorr(&buf, 100).unwrap();
        assert_eq!(r.order(), 100);
        assert!(r.lags().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn matches_direct_summation_for_cosine() {
        let (f0, fs, n, order) = (1.0e6, 33.33e6, 20_000, 50);
        let buf = cosine(f0, fs, n);
        let r = estimate_autocorr(&buf, order).unwrap();
        let x = buf.samples();
        for k in 0..order {
            // brute-force definition
            let mut s = 0.0;
            for i in 0..n - k {
                s += x[i] * x[i + k];
            }
            let direct = s / n as f64;
            assert!((r.lags()[k] - direct).abs() < 1e-12, "lag {k}");
            // closed form up to the finite-length end effect
            let approx = 0.5 * (1.0 - k as f64 / n as f64) * (2.0 * PI * f0 * k as f64 / fs).cos();
            assert!((r.lags()[k] - approx).abs() < 2e-3, "lag {k}: {} vs {approx}", r.lags()[k]);
        }
    }

    #[test]
    fn rejects_orders_outside_range() {
        let buf = cosine(1.0, 10.0, 100);
        assert!(matches!(estimate_autocorr(&buf, 51), Err(Error::Precondition(_))));
        assert!(matches!(estimate_autocorr(&buf, 1), Err(Error::Precondition(_))));
        assert!(estimate_autocorr(&buf, 50).is_ok());
    }

    #[test]
    fn expansion_is_symmetric_toeplitz() {
        let r = AutocorrMatrix::from_lags(vec![4.0, 1.5, -0.25, 0.125, 2.0]).unwrap();
        let m = r.expand();
        for i in 0..5 {
            for j in 0..5 {
                assert_eq!(m[(i, j)], m[(j, i)]);
                if i + 1 < 5 && j + 1 < 5 {
                    assert_eq!(m[(i, j)], m[(i + 1, j + 1)]);
                }
            }
        }
    }

    #[test]
    fn lagwise_arithmetic_checks_order() {
        let a = AutocorrMatrix::from_lags(vec![1.0, 2.0]).unwrap();
        let b = AutocorrMatrix::from_lags(vec![1.0, 2.0, 3.0]).unwrap();
        assert!(a.sub(&b).is_err());
        assert_eq!(a.sub(&a).unwrap(), AutocorrMatrix::zeros(2));
        assert!(AutocorrMatrix::from_lags(vec![1.0, f64::NAN]).is_err());
    }
}
