//! Additive basis regression and the cross-environment coefficient test.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF};

use super::basis::{basis_expand, BasisFamily};
use crate::error::{Error, Result};
use crate::linalg::Cholesky;
use crate::matrix::Matrix;

/// Relative pivot below which a design counts as rank deficient.
const RANK_TOL: f64 = 1e-12;

/// OLS fit of `y ~ 1 + Σ_k Ψ(x_k)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdditiveFit {
    pub intercept: f64,
    /// One coefficient block of length `width` per predictor.
    pub blocks: Vec<Vec<f64>>,
    /// Homoskedastic coefficient covariance, intercept first.
    pub covariance: Matrix<f64>,
    pub sigma2: f64,
    pub width: usize,
}

impl AdditiveFit {
    pub fn block_covariance(&self, k: usize) -> Matrix<f64> {
        let off = 1 + k * self.width;
        Matrix::from_fn(self.width, self.width, |a, b| self.covariance.get(off + a, off + b))
    }
}

/// Design matrix `[1 | Ψ(x_1) | … | Ψ(x_p)]`.
pub fn additive_design(predictors: &Matrix<f64>, family: &BasisFamily) -> Result<Matrix<f64>> {
    let (n, p) = predictors.shape();
    let drop_first = matches!(family, BasisFamily::BSpline { .. });
    let r = family.regression_width();
    let mut design = Matrix::zeros(n, 1 + p * r);
    for i in 0..n {
        design.set(i, 0, 1.0);
    }
    for k in 0..p {
        let psi = basis_expand(&predictors.column(k), family)?;
        let skip = drop_first as usize;
        for i in 0..n {
            for f in 0..r {
                design.set(i, 1 + k * r + f, psi.get(i, f + skip));
            }
        }
    }
    Ok(design)
}

/// Least squares with a rank check. `Err(SingularSystem)` flags a
/// deficient design.
pub fn fit_additive(predictors: &Matrix<f64>, y: &[f64], family: &BasisFamily) -> Result<AdditiveFit> {
    let n = y.len();
    if predictors.nrows() != n {
        return Err(Error::DimensionMismatch(format!(
            "{} predictor rows for {n} responses",
            predictors.nrows()
        )));
    }
    let x = additive_design(predictors, family)?;
    let q = x.ncols();
    if n <= q {
        return Err(Error::InsufficientSamples(format!(
            "{n} samples for {q} regression coefficients"
        )));
    }
    let xt = x.transpose();
    let gram = xt.matmul(&x)?;
    let max_diag = (0..q).map(|i| gram.get(i, i)).fold(0.0, f64::max);
    let chol = Cholesky::new(gram)?;
    let l = chol.lower();
    if let Some(pivot) = (0..q).find(|&i| l.get(i, i).powi(2) <= RANK_TOL * max_diag) {
        return Err(Error::SingularSystem { pivot });
    }
    let xty = xt.matmul(&Matrix::from_vec(n, 1, y.to_vec())?)?;
    let beta = chol.solve(&xty)?;
    let fitted = x.matmul(&beta)?;
    let rss: f64 = (0..n).map(|i| (y[i] - fitted.get(i, 0)).powi(2)).sum();
    let sigma2 = rss / (n - q) as f64;
    let covariance = chol.inverse()?.map(|v| v * sigma2);
    let r = family.regression_width();
    let p = predictors.ncols();
    Ok(AdditiveFit {
        intercept: beta.get(0, 0),
        blocks: (0..p).map(|k| (0..r).map(|f| beta.get(1 + k * r + f, 0)).collect()).collect(),
        covariance,
        sigma2,
        width: r,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WaldResult {
    pub statistic: f64,
    pub df: usize,
    pub p_value: f64,
}

/// Chi-square test that all coefficient blocks are equal, weighting each by
/// its inverse covariance around the precision-weighted mean.
pub fn wald_equality(blocks: &[&[f64]], covariances: &[Matrix<f64>]) -> Result<WaldResult> {
    let h = blocks.len();
    if h < 2 || covariances.len() != h {
        return Err(Error::InvalidParameter(format!(
            "need at least two blocks with matching covariances, got {h} and {}",
            covariances.len()
        )));
    }
    let r = blocks[0].len();
    if blocks.iter().any(|b| b.len() != r) || covariances.iter().any(|c| c.shape() != (r, r)) {
        return Err(Error::DimensionMismatch("coefficient blocks differ in size".into()));
    }
    let precisions: Vec<Matrix<f64>> = covariances
        .iter()
        .map(|c| Cholesky::new(c.clone())?.inverse())
        .collect::<Result<_>>()?;
    let mut total = Matrix::<f64>::zeros(r, r);
    let mut weighted = Matrix::<f64>::zeros(r, 1);
    for (w, b) in precisions.iter().zip(blocks) {
        let wb = w.matmul(&Matrix::from_vec(r, 1, b.to_vec())?)?;
        for a in 0..r {
            weighted.set(a, 0, weighted.get(a, 0) + wb.get(a, 0));
            for c in 0..r {
                total.set(a, c, total.get(a, c) + w.get(a, c));
            }
        }
    }
    let mean = Cholesky::new(total)?.solve(&weighted)?;
    let mut statistic = 0.0;
    for (w, b) in precisions.iter().zip(blocks) {
        let dev: Vec<f64> = (0..r).map(|a| b[a] - mean.get(a, 0)).collect();
        for a in 0..r {
            for c in 0..r {
                statistic += dev[a] * w.get(a, c) * dev[c];
            }
        }
    }
    let df = (h - 1) * r;
    let chi = ChiSquared::new(df as f64).map_err(|e| Error::InvalidParameter(e.to_string()))?;
    Ok(WaldResult {
        statistic,
        df,
        p_value: chi.sf(statistic.max(0.0)),
    })
}
