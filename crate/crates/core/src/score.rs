//! Kernelized Stein estimators of the score and of the diagonal of its
//! Jacobian (the Hessian of the log-density).
//!
//! With a Gaussian kernel `κ(x, y) = exp(-‖x − y‖² / 2s²)` and the kernel
//! matrix `K` over the samples,
//!
//! ```text
//! G = −(K + ηI)⁻¹ ⟨∇, K⟩
//! J = −G∘G + (K + ηI)⁻¹ ⟨∇²_diag, K⟩
//! ```
//!
//! where `⟨∇, K⟩ᵢⱼ = Σₖ ∂κ(xⁱ, xᵏ)/∂xᵏⱼ` and `⟨∇²_diag, K⟩ᵢⱼ = Σₖ ∂²κ(xⁱ, xᵏ)/∂(xᵏⱼ)²`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Cholesky;
use crate::matrix::Matrix;
use crate::scalar::Real;

/// Rows used by the median heuristic.
pub const MEDIAN_SUBSAMPLE: usize = 2000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Bandwidth {
    /// Median pairwise Euclidean distance.
    MedianHeuristic,
    Fixed(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct KernelConfig {
    pub bandwidth: Bandwidth,
    /// Ridge added to the kernel diagonal.
    pub eta: f64,
}

impl Default for KernelConfig {
    fn default() -> Self {
        Self {
            bandwidth: Bandwidth::MedianHeuristic,
            eta: 0.05,
        }
    }
}

impl KernelConfig {
    pub fn with_eta(eta: f64) -> Self {
        Self {
            eta,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.eta >= 0.0) || !self.eta.is_finite() {
            return Err(Error::InvalidParameter(format!("eta must be >= 0, got {}", self.eta)));
        }
        if let Bandwidth::Fixed(s) = self.bandwidth {
            if !(s > 0.0) || !s.is_finite() {
                return Err(Error::InvalidParameter(format!("bandwidth must be > 0, got {s}")));
            }
        }
        Ok(())
    }

    /// Effective bandwidth for a dataset.
    pub fn resolve_bandwidth<T: Real>(&self, x: &Matrix<T>) -> Result<T> {
        match self.bandwidth {
            Bandwidth::Fixed(s) => Ok(T::lit(s)),
            Bandwidth::MedianHeuristic => median_heuristic(x),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreEstimate<T> {
    /// Row `i` estimates `∇ log p(xⁱ)`.
    pub gradients: Matrix<T>,
    /// Row `i` estimates `diag ∇² log p(xⁱ)`.
    pub hessian_diag: Matrix<T>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VarianceDiagnostics<T> {
    pub var: Vec<T>,
}

/// Kernel matrix with per-coordinate derivatives in the second argument.
#[derive(Debug, Clone)]
pub struct KernelDerivatives<T> {
    pub k: Matrix<T>,
    /// `dk[j][(i, k)] = ∂κ(xⁱ, xᵏ)/∂xᵏⱼ`
    pub dk: Vec<Matrix<T>>,
    /// `d2k[j][(i, k)] = ∂²κ(xⁱ, xᵏ)/∂(xᵏⱼ)²`
    pub d2k: Vec<Matrix<T>>,
}

fn check_input<T: Real>(x: &Matrix<T>, min_rows: usize) -> Result<()> {
    if x.nrows() < min_rows {
        return Err(Error::InsufficientSamples(format!(
            "{} rows, need at least {min_rows}",
            x.nrows()
        )));
    }
    if let Some((i, j)) = x.first_non_finite() {
        return Err(Error::NonFinite(format!("sample {i} coordinate {j}")));
    }
    Ok(())
}

fn check_bandwidth<T: Real>(s: T) -> Result<()> {
    if !(s > T::zero()) || !s.is_finite() {
        return Err(Error::InvalidParameter(format!("bandwidth must be > 0, got {s}")));
    }
    Ok(())
}

/// Median pairwise distance over at most [`MEDIAN_SUBSAMPLE`] evenly spaced
/// rows. Falls back to the largest distance when over half the pairs
/// coincide.
pub fn median_heuristic<T: Real>(x: &Matrix<T>) -> Result<T> {
    let m = x.nrows();
    if m < 2 {
        return Err(Error::InsufficientSamples("median heuristic needs 2 rows".into()));
    }
    let rows: Vec<usize> = if m > MEDIAN_SUBSAMPLE {
        (0..MEDIAN_SUBSAMPLE).map(|i| i * m / MEDIAN_SUBSAMPLE).collect()
    } else {
        (0..m).collect()
    };
    let mut dists = Vec::with_capacity(rows.len() * (rows.len() - 1) / 2);
    for (a, &i) in rows.iter().enumerate() {
        let xi = x.row(i);
        for &k in &rows[a + 1..] {
            let d2: T = xi.iter().zip(x.row(k)).map(|(&u, &v)| (u - v) * (u - v)).sum();
            dists.push(d2.sqrt());
        }
    }
    let n = dists.len();
    let cmp = |a: &T, b: &T| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal);
    let (_, &mut upper, _) = dists.select_nth_unstable_by(n / 2, cmp);
    let med = if n % 2 == 0 {
        let lower = dists[..n / 2].iter().copied().fold(T::neg_infinity(), T::max);
        (lower + upper) / T::lit(2.0)
    } else {
        upper
    };
    if med > T::zero() {
        return Ok(med);
    }
    let max = dists.iter().copied().fold(T::zero(), T::max);
    if max > T::zero() {
        Ok(max)
    } else {
        Err(Error::InvalidParameter("all samples coincide; bandwidth is zero".into()))
    }
}

fn kernel_matrix<T: Real>(x: &Matrix<T>, s: T) -> Matrix<T> {
    let m = x.nrows();
    let inv = T::one() / (T::lit(2.0) * s * s);
    let mut k = Matrix::zeros(m, m);
    for i in 0..m {
        k.set(i, i, T::one());
        let xi = x.row(i);
        for j in (i + 1)..m {
            let d2: T = xi.iter().zip(x.row(j)).map(|(&u, &v)| (u - v) * (u - v)).sum();
            let v = (-d2 * inv).exp();
            k.set(i, j, v);
            k.set(j, i, v);
        }
    }
    k
}

pub fn rbf_kernel_with_derivatives<T: Real>(x: &Matrix<T>, s: T) -> Result<KernelDerivatives<T>> {
    check_input(x, 2)?;
    check_bandwidth(s)?;
    let (m, d) = x.shape();
    let k = kernel_matrix(x, s);
    let s2 = s * s;
    let s4 = s2 * s2;
    let mut dk = Vec::with_capacity(d);
    let mut d2k = Vec::with_capacity(d);
    for j in 0..d {
        dk.push(Matrix::from_fn(m, m, |a, b| {
            k.get(a, b) * (x.get(a, j) - x.get(b, j)) / s2
        }));
        d2k.push(Matrix::from_fn(m, m, |a, b| {
            let diff = x.get(a, j) - x.get(b, j);
            k.get(a, b) * (diff * diff / s4 - T::one() / s2)
        }));
    }
    Ok(KernelDerivatives { k, dk, d2k })
}

/// `(K + ηI)` factor, retried once with a larger ridge on failure.
fn factor_ridge<T: Real>(k: &Matrix<T>, eta: f64) -> Result<Cholesky<T>> {
    let with_ridge = |eta: f64| {
        let mut a = k.clone();
        let e = T::lit(eta);
        for i in 0..a.nrows() {
            a.set(i, i, a.get(i, i) + e);
        }
        Cholesky::new(a)
    };
    match with_ridge(eta) {
        Ok(ch) => Ok(ch),
        Err(Error::SingularSystem { pivot }) => {
            let bumped = eta.max(1e-6) * 10.0;
            log::warn!(
                "kernel system not positive definite at pivot {pivot} with eta={eta}; retrying with eta={bumped}"
            );
            with_ridge(bumped)
        }
        Err(e) => Err(e),
    }
}

/// Stein right-hand sides restricted to `cols`:
/// `(⟨∇, K⟩[:, cols], ⟨∇²_diag, K⟩[:, cols])`.
fn stein_rhs<T: Real>(x: &Matrix<T>, k: &Matrix<T>, s: T, cols: &[usize]) -> (Matrix<T>, Matrix<T>) {
    let m = x.nrows();
    let c = cols.len();
    let s2 = s * s;
    let s4 = s2 * s2;
    let mut grad = Matrix::zeros(m, c);
    let mut hess = Matrix::zeros(m, c);
    let xs = x.select_columns(cols);
    let mut g_acc = vec![T::zero(); c];
    let mut h_acc = vec![T::zero(); c];
    for i in 0..m {
        g_acc.iter_mut().for_each(|v| *v = T::zero());
        h_acc.iter_mut().for_each(|v| *v = T::zero());
        let mut row_sum = T::zero();
        let xi = xs.row(i);
        let ki = k.row(i);
        for (kk, &w) in ki.iter().enumerate() {
            row_sum = row_sum + w;
            let xk = xs.row(kk);
            for t in 0..c {
                let diff = xi[t] - xk[t];
                let wd = w * diff;
                g_acc[t] = g_acc[t] + wd;
                h_acc[t] = h_acc[t] + wd * diff;
            }
        }
        for t in 0..c {
            grad.set(i, t, g_acc[t] / s2);
            hess.set(i, t, h_acc[t] / s4 - row_sum / s2);
        }
    }
    (grad, hess)
}

/// Gradient and Hessian-diagonal estimates for the listed coordinates.
///
/// Each listed column's values are bit-identical to the corresponding
/// column of the full estimate.
pub fn estimate_columns<T: Real>(
    x: &Matrix<T>,
    cfg: &KernelConfig,
    cols: &[usize],
) -> Result<ScoreEstimate<T>> {
    cfg.validate()?;
    check_input(x, 2)?;
    if let Some(&bad) = cols.iter().find(|&&c| c >= x.ncols()) {
        return Err(Error::DimensionMismatch(format!(
            "column {bad} requested from {} columns",
            x.ncols()
        )));
    }
    let s = cfg.resolve_bandwidth(x)?;
    check_bandwidth(s)?;
    let k = kernel_matrix(x, s);
    let (mut grad_rhs, hess_rhs) = stein_rhs(x, &k, s, cols);
    let chol = factor_ridge(&k, cfg.eta)?;
    drop(k);

    // G = −(K + ηI)⁻¹ ⟨∇, K⟩
    chol.solve_in_place(&mut grad_rhs)?;
    let gradients = grad_rhs.map(|v| -v);
    let mut second = hess_rhs;
    chol.solve_in_place(&mut second)?;
    let (m, c) = second.shape();
    let hessian_diag = Matrix::from_fn(m, c, |i, t| {
        let g = gradients.get(i, t);
        second.get(i, t) - g * g
    });
    Ok(ScoreEstimate {
        gradients,
        hessian_diag,
    })
}

pub fn estimate_score<T: Real>(x: &Matrix<T>, cfg: &KernelConfig) -> Result<ScoreEstimate<T>> {
    let cols: Vec<usize> = (0..x.ncols()).collect();
    estimate_columns(x, cfg, &cols)
}

pub fn estimate_score_gradient<T: Real>(x: &Matrix<T>, cfg: &KernelConfig) -> Result<Matrix<T>> {
    Ok(estimate_score(x, cfg)?.gradients)
}

pub fn estimate_hessian_diag<T: Real>(x: &Matrix<T>, cfg: &KernelConfig) -> Result<Matrix<T>> {
    Ok(estimate_score(x, cfg)?.hessian_diag)
}

/// Unbiased sample variance of each column.
pub fn column_variances<T: Real>(j: &Matrix<T>) -> Vec<T> {
    let (m, d) = j.shape();
    let mf = T::from_usize(m).unwrap();
    (0..d)
        .map(|c| {
            let mean = (0..m).map(|i| j.get(i, c)).sum::<T>() / mf;
            let ss: T = (0..m)
                .map(|i| {
                    let e = j.get(i, c) - mean;
                    e * e
                })
                .sum();
            ss / (mf - T::one())
        })
        .collect()
}

/// Variance of the estimated Hessian diagonal for the listed coordinates.
pub fn jacobian_variance_columns<T: Real>(
    x: &Matrix<T>,
    cfg: &KernelConfig,
    cols: &[usize],
) -> Result<Vec<T>> {
    check_input(x, 3)?;
    let est = estimate_columns(x, cfg, cols)?;
    Ok(column_variances(&est.hessian_diag))
}

pub fn jacobian_variance<T: Real>(x: &Matrix<T>, cfg: &KernelConfig) -> Result<VarianceDiagnostics<T>> {
    let cols: Vec<usize> = (0..x.ncols()).collect();
    Ok(VarianceDiagnostics {
        var: jacobian_variance_columns(x, cfg, &cols)?,
    })
}

/// Exact score of `N(mean, covariance)` at each row of `x`.
pub fn analytic_gaussian_score<T: Real>(
    mean: &[T],
    covariance: &Matrix<T>,
    x: &Matrix<T>,
) -> Result<ScoreEstimate<T>> {
    let d = mean.len();
    if covariance.shape() != (d, d) || x.ncols() != d {
        return Err(Error::DimensionMismatch(format!(
            "mean of length {d}, covariance {:?}, samples with {} columns",
            covariance.shape(),
            x.ncols()
        )));
    }
    for i in 0..d {
        for j in 0..i {
            let (a, b) = (covariance.get(i, j), covariance.get(j, i));
            if (a - b).abs() > T::lit(1e-10) * (T::one() + a.abs()) {
                return Err(Error::InvalidParameter("covariance is not symmetric".into()));
            }
        }
    }
    let precision = match Cholesky::new(covariance.clone()) {
        Ok(ch) => ch.inverse()?,
        Err(Error::SingularSystem { .. }) => {
            return Err(Error::InvalidParameter(
                "covariance is not positive definite".into(),
            ))
        }
        Err(e) => return Err(e),
    };
    let m = x.nrows();
    let centered = Matrix::from_fn(m, d, |i, j| x.get(i, j) - mean[j]);
    let gradients = centered.matmul(&precision)?.map(|v| -v);
    let hessian_diag = Matrix::from_fn(m, d, |_, j| -precision.get(j, j));
    Ok(ScoreEstimate {
        gradients,
        hessian_diag,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed;
    use rand::Rng;
    use rand_distr::StandardNormal;

    fn normal_matrix(m: usize, d: usize, seed: u64) -> Matrix<f64> {
        let mut rng = seed::stream(seed, "score-test", 0);
        Matrix::from_fn(m, d, |_, _| rng.sample(StandardNormal))
    }

    #[test]
    fn identical_points_kernel() {
        let x = Matrix::from_rows(&[vec![0.7, -0.2], vec![0.7, -0.2]]).unwrap();
        let s: f64 = 1.3;
        let kd = rbf_kernel_with_derivatives(&x, s).unwrap();
        assert_eq!(kd.k.get(0, 1), 1.0);
        for j in 0..2 {
            assert_eq!(kd.dk[j].get(0, 1), 0.0);
            assert!((kd.d2k[j].get(0, 1) + 1.0 / (s * s)).abs() < 1e-15);
        }
    }

    #[test]
    fn one_bandwidth_apart() {
        let s = 0.8;
        let x = Matrix::from_rows(&[vec![0.0], vec![s]]).unwrap();
        let kd = rbf_kernel_with_derivatives(&x, s).unwrap();
        assert!((kd.k.get(0, 1) - (-0.5f64).exp()).abs() < 1e-15);
        assert!((kd.k.get(0, 1) - 0.6065).abs() < 1e-4);
    }

    #[test]
    fn kernel_derivatives_match_finite_differences() {
        let h = 1e-4;
        for rep in 0..20 {
            let x = normal_matrix(5, 3, 100 + rep);
            let s = 1.1;
            let kd = rbf_kernel_with_derivatives(&x, s).unwrap();
            let kern = |a: &[f64], b: &[f64]| -> f64 {
                let d2: f64 = a.iter().zip(b).map(|(u, v)| (u - v).powi(2)).sum();
                (-d2 / (2.0 * s * s)).exp()
            };
            for i in 0..5 {
                for k in 0..5 {
                    for j in 0..3 {
                        let mut plus = x.row(k).to_vec();
                        let mut minus = plus.clone();
                        plus[j] += h;
                        minus[j] -= h;
                        let xi = x.row(i);
                        let f0 = kern(xi, x.row(k));
                        let fp = kern(xi, &plus);
                        let fm = kern(xi, &minus);
                        let d1 = (fp - fm) / (2.0 * h);
                        let d2 = (fp - 2.0 * f0 + fm) / (h * h);
                        assert!((d1 - kd.dk[j].get(i, k)).abs() < 1e-5);
                        assert!((d2 - kd.d2k[j].get(i, k)).abs() < 1e-5);
                    }
                }
            }
        }
    }

    #[test]
    fn kernel_is_symmetric_psd() {
        let x = normal_matrix(30, 2, 5);
        let kd = rbf_kernel_with_derivatives(&x, 0.9).unwrap();
        for i in 0..30 {
            assert_eq!(kd.k.get(i, i), 1.0);
            for j in 0..30 {
                assert_eq!(kd.k.get(i, j), kd.k.get(j, i));
            }
        }
        let mut jittered = kd.k.clone();
        for i in 0..30 {
            jittered.set(i, i, jittered.get(i, i) + 1e-9);
        }
        assert!(Cholesky::new(jittered).is_ok());
    }

    fn pearson(a: &[f64], b: &[f64]) -> f64 {
        let n = a.len() as f64;
        let ma = a.iter().sum::<f64>() / n;
        let mb = b.iter().sum::<f64>() / n;
        let cov: f64 = a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).sum();
        let va: f64 = a.iter().map(|x| (x - ma).powi(2)).sum();
        let vb: f64 = b.iter().map(|y| (y - mb).powi(2)).sum();
        cov / (va * vb).sqrt()
    }

    #[test]
    fn gradient_tracks_gaussian_score() {
        for d in [1usize, 2] {
            let x = normal_matrix(1000, d, 7 + d as u64);
            let g = estimate_score_gradient(&x, &KernelConfig::with_eta(0.05)).unwrap();
            for j in 0..d {
                let truth: Vec<f64> = x.column(j).iter().map(|v| -v).collect();
                let est = g.column(j);
                assert!(pearson(&truth, &est) > 0.95);
                let mean = truth.iter().sum::<f64>() / 1000.0;
                let sd = (truth.iter().map(|t| (t - mean).powi(2)).sum::<f64>() / 999.0).sqrt();
                let rmse = (truth.iter().zip(&est).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / 1000.0).sqrt();
                assert!(rmse / sd < 0.3, "d={d} relative rmse {}", rmse / sd);
            }
        }
    }

    #[test]
    fn duplicated_rows_get_equal_estimates() {
        let x = normal_matrix(150, 2, 3);
        let doubled = Matrix::vstack(&[&x, &x]).unwrap();
        let est = estimate_score(&doubled, &KernelConfig::with_eta(0.05)).unwrap();
        for i in 0..150 {
            for j in 0..2 {
                let a = est.gradients.get(i, j);
                let b = est.gradients.get(i + 150, j);
                assert!((a - b).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn hessian_diag_near_minus_one_for_standard_normal() {
        let x = normal_matrix(1000, 1, 21);
        let j = estimate_hessian_diag(&x, &KernelConfig::with_eta(0.05)).unwrap();
        let mean = j.column(0).iter().sum::<f64>() / 1000.0;
        assert!((mean + 1.0).abs() < 0.3, "mean {mean}");
    }

    #[test]
    fn hessian_diag_anisotropic_gaussian() {
        let z = normal_matrix(1000, 2, 22);
        let x = Matrix::from_fn(1000, 2, |i, j| if j == 1 { 2.0 * z.get(i, j) } else { z.get(i, j) });
        let jm = estimate_hessian_diag(&x, &KernelConfig::with_eta(0.05)).unwrap();
        assert!(jm.all_finite());
        assert_eq!(jm.shape(), (1000, 2));
        let expected = [-1.0, -0.25];
        for c in 0..2 {
            let mean = jm.column(c).iter().sum::<f64>() / 1000.0;
            assert!(((mean - expected[c]) / expected[c]).abs() < 0.35, "col {c} mean {mean}");
        }
    }

    #[test]
    fn column_subset_is_bitwise_identical() {
        let x = normal_matrix(200, 4, 8);
        let cfg = KernelConfig::with_eta(0.05);
        let full = estimate_score(&x, &cfg).unwrap();
        let part = estimate_columns(&x, &cfg, &[2]).unwrap();
        for i in 0..200 {
            assert_eq!(full.hessian_diag.get(i, 2).to_bits(), part.hessian_diag.get(i, 0).to_bits());
            assert_eq!(full.gradients.get(i, 2).to_bits(), part.gradients.get(i, 0).to_bits());
        }
    }

    #[test]
    fn permutation_equivariance() {
        let x = normal_matrix(120, 2, 9);
        let perm: Vec<usize> = (0..120).map(|i| (i * 37) % 120).collect();
        let px = x.select_rows(&perm);
        let cfg = KernelConfig::with_eta(0.05);
        let a = estimate_score(&x, &cfg).unwrap();
        let b = estimate_score(&px, &cfg).unwrap();
        for (new, &old) in perm.iter().enumerate() {
            for j in 0..2 {
                assert!((a.gradients.get(old, j) - b.gradients.get(new, j)).abs() < 1e-8);
                assert!((a.hessian_diag.get(old, j) - b.hessian_diag.get(new, j)).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn variance_of_constant_columns_is_zero() {
        let j = Matrix::from_fn(10, 3, |_, c| c as f64 - 1.0);
        assert!(column_variances(&j).iter().all(|&v| v == 0.0));
    }

    #[test]
    fn bimodal_mixture_has_larger_hessian_variance() {
        let n = normal_matrix(1000, 1, 31);
        // Both runs share one kernel scale.
        let cfg = KernelConfig {
            bandwidth: Bandwidth::Fixed(3.0),
            eta: 0.05,
        };
        let uni = jacobian_variance(&n, &cfg).unwrap().var[0];
        let mix = Matrix::from_fn(1000, 1, |i, _| n.get(i, 0) + if i % 2 == 0 { -3.0 } else { 3.0 });
        let bi = jacobian_variance(&mix, &cfg).unwrap().var[0];
        assert!(uni / bi < 0.2, "unimodal {uni} bimodal {bi}");
    }

    #[test]
    fn too_few_rows_rejected() {
        let x = normal_matrix(2, 2, 1);
        assert!(matches!(
            jacobian_variance(&x, &KernelConfig::default()),
            Err(Error::InsufficientSamples(_))
        ));
        let bad = Matrix::from_rows(&[vec![f64::NAN], vec![1.0], vec![2.0]]).unwrap();
        assert!(matches!(estimate_score(&bad, &KernelConfig::default()), Err(Error::NonFinite(_))));
    }

    #[test]
    fn zero_ridge_on_duplicates_retries() {
        let x = Matrix::from_rows(&[vec![0.0], vec![0.0], vec![1.0], vec![2.0]]).unwrap();
        let est = estimate_score(&x, &KernelConfig::with_eta(0.0)).unwrap();
        assert!(est.gradients.all_finite());
    }

    #[test]
    fn analytic_oracle_examples() {
        let x = Matrix::from_rows(&[vec![0.0, 0.0]]).unwrap();
        let est = analytic_gaussian_score(&[0.0, 0.0], &Matrix::identity(2), &x).unwrap();
        assert_eq!(est.gradients.row(0), &[0.0, 0.0]);
        assert_eq!(est.hessian_diag.row(0), &[-1.0, -1.0]);
        let x = Matrix::from_rows(&[vec![2.0f64]]).unwrap();
        let cov = Matrix::from_rows(&[vec![4.0]]).unwrap();
        let est = analytic_gaussian_score(&[0.0], &cov, &x).unwrap();
        assert!((est.gradients.get(0, 0) + 0.5).abs() < 1e-15);
        let bad = Matrix::from_rows(&[vec![1.0, 2.0], vec![2.0, 1.0]]).unwrap();
        assert!(analytic_gaussian_score(&[0.0, 0.0], &bad, &Matrix::zeros(1, 2)).is_err());
    }

    #[test]
    fn analytic_oracle_matches_log_density_differences() {
        let mut rng = seed::stream(4, "spd", 0);
        let b = Matrix::from_fn(3, 3, |_, _| rng.random::<f64>() - 0.5);
        let mut cov = b.matmul(&b.transpose()).unwrap();
        for i in 0..3 {
            cov.set(i, i, cov.get(i, i) + 0.5);
        }
        let mean = [0.3, -0.1, 0.7];
        let prec = Cholesky::new(cov.clone()).unwrap().inverse().unwrap();
        let logp = |x: &[f64]| -> f64 {
            let c: Vec<f64> = x.iter().zip(&mean).map(|(a, m)| a - m).collect();
            let mut q = 0.0;
            for i in 0..3 {
                for j in 0..3 {
                    q += c[i] * prec.get(i, j) * c[j];
                }
            }
            -0.5 * q
        };
        let x = normal_matrix(5, 3, 77);
        let est = analytic_gaussian_score(&mean, &cov, &x).unwrap();
        let h = 1e-5;
        for i in 0..5 {
            for j in 0..3 {
                let mut p = x.row(i).to_vec();
                let mut m = p.clone();
                p[j] += h;
                m[j] -= h;
                let fd = (logp(&p) - logp(&m)) / (2.0 * h);
                assert!((fd - est.gradients.get(i, j)).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn single_precision_estimates() {
        let x = normal_matrix(300, 1, 12).cast::<f32>();
        let g = estimate_score_gradient(&x, &KernelConfig::with_eta(0.05)).unwrap();
        let truth: Vec<f64> = x.column(0).iter().map(|&v| -(v as f64)).collect();
        let est: Vec<f64> = g.column(0).iter().map(|&v| v as f64).collect();
        assert!(pearson(&truth, &est) > 0.9);
    }
}
