//! SVD of symmetric Toeplitz matrices.
//!
//! A symmetric Toeplitz matrix is also centrosymmetric (`J T J = T` with `J`
//! the exchange matrix), so its eigenvectors are either symmetric or
//! skew-symmetric about the centre. The orthogonal change of basis
//! `Q = [[I, I], [J, -J]] / sqrt(2)` block-diagonalises it into two
//! half-size symmetric problems, which is roughly four times cheaper than
//! one full-size decomposition. The SVD follows from the eigenpairs:
//! `sigma = |mu|`, `u = q`, `v = sign(mu) q`.

use std::f64::consts::SQRT_2;

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use super::AutocorrMatrix;
use crate::error::{Error, Result};

/// Signed eigenvalues (unsorted) and, optionally, the matching
/// orthonormal eigenvectors as columns.
#[derive(Debug, Clone)]
pub struct ToeplitzEigen {
    pub values: Vec<f64>,
    pub vectors: Option<DMatrix<f64>>,
}

#[derive(Debug, Clone)]
pub struct SvdDecomposition {
    singular_values: Vec<f64>,
    left: DMatrix<f64>,
    right: DMatrix<f64>,
}

impl SvdDecomposition {
    /// Nonincreasing, nonnegative.
    pub fn singular_values(&self) -> &[f64] {
        &self.singular_values
    }

    pub fn left_vectors(&self) -> &DMatrix<f64> {
        &self.left
    }

    pub fn right_vectors(&self) -> &DMatrix<f64> {
        &self.right
    }

    pub fn order(&self) -> usize {
        self.singular_values.len()
    }

    /// `U_k S_k V_k^T` using the leading `k` singular triplets.
    pub fn reconstruct_rank(&self, k: usize) -> DMatrix<f64> {
        let k = k.min(self.order());
        let u = self.left.columns(0, k);
        let v = self.right.columns(0, k);
        let s = DMatrix::from_diagonal(&DVector::from_column_slice(&self.singular_values[..k]));
        u * s * v.transpose()
    }

    pub fn reconstruct(&self) -> DMatrix<f64> {
        self.reconstruct_rank(self.order())
    }
}

fn check_finite(r: &AutocorrMatrix) -> Result<()> {
    if r.lags().iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput("matrix has non-finite entries".into()));
    }
    Ok(())
}

/// Eigen-decomposition of the symmetric Toeplitz expansion of `r`.
pub fn toeplitz_eigen(r: &AutocorrMatrix, with_vectors: bool) -> Result<ToeplitzEigen> {
    check_finite(r)?;
    let lags = r.lags();
    let n = lags.len();
    let half = n / 2;
    let odd = n % 2 == 1;

    let sym_size = half + usize::from(odd);
    let sym = DMatrix::from_fn(sym_size, sym_size, |i, j| {
        if i < half && j < half {
            lags[i.abs_diff(j)] + lags[n - 1 - i - j]
        } else if i == half && j == half {
            lags[0]
        } else {
            // odd order only: coupling to the centre sample
            let k = i.min(j);
            SQRT_2 * lags[half - k]
        }
    });
    let skew = DMatrix::from_fn(half, half, |i, j| {
        lags[i.abs_diff(j)] - lags[n - 1 - i - j]
    });

    if !with_vectors {
        let mut values: Vec<f64> = sym.symmetric_eigenvalues().iter().copied().collect();
        if half > 0 {
            values.extend(skew.symmetric_eigenvalues().iter().copied());
        }
        return Ok(ToeplitzEigen {
            values,
            vectors: None,
        });
    }

    let sym_eig = SymmetricEigen::new(sym);
    let mut values: Vec<f64> = sym_eig.eigenvalues.iter().copied().collect();
    let mut vectors = DMatrix::zeros(n, n);
    let inv = 1.0 / SQRT_2;
    for c in 0..sym_size {
        let y = sym_eig.eigenvectors.column(c);
        for i in 0..half {
            vectors[(i, c)] = y[i] * inv;
            vectors[(n - 1 - i, c)] = y[i] * inv;
        }
        if odd {
            vectors[(half, c)] = y[half];
        }
    }
    if half > 0 {
        let skew_eig = SymmetricEigen::new(skew);
        values.extend(skew_eig.eigenvalues.iter().copied());
        for c in 0..half {
            let x = skew_eig.eigenvectors.column(c);
            let col = sym_size + c;
            for i in 0..half {
                vectors[(i, col)] = x[i] * inv;
                vectors[(n - 1 - i, col)] = -x[i] * inv;
            }
        }
    }
    Ok(ToeplitzEigen {
        values,
        vectors: Some(vectors),
    })
}

fn descending_magnitude_order(values: &[f64]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..values.len()).collect();
    idx.sort_by(|&a, &b| values[b].abs().total_cmp(&values[a].abs()));
    idx
}

/// Singular values only, nonincreasing.
pub fn singular_values(r: &AutocorrMatrix) -> Result<Vec<f64>> {
    let eig = toeplitz_eigen(r, false)?;
    let mut sv: Vec<f64> = eig.values.iter().map(|v| v.abs()).collect();
    sv.sort_by(|a, b| b.total_cmp(a));
    Ok(sv)
}

/// Full SVD `R = U S V^T` of the expanded Toeplitz matrix.
pub fn svd(r: &AutocorrMatrix) -> Result<SvdDecomposition> {
    let eig = toeplitz_eigen(r, true)?;
    let q = eig.vectors.expect("vectors requested");
    let n = eig.values.len();
    let order = descending_magnitude_order(&eig.values);
    let mut left = DMatrix::zeros(n, n);
    let mut right = DMatrix::zeros(n, n);
    let mut singular_values = Vec::with_capacity(n);
    for (dst, &src) in order.iter().enumerate() {
        let mu = eig.values[src];
        let sign = if mu < 0.0 { -1.0 } else { 1.0 };
        singular_values.push(mu.abs());
        left.set_column(dst, &q.column(src));
        right.set_column(dst, &(q.column(src) * sign));
    }
    Ok(SvdDecomposition {
        singular_values,
        left,
        right,
    })
}
