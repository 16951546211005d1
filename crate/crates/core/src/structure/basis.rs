use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::Matrix;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum BasisFamily {
    /// `x, x², …, x^degree`
    Polynomial { degree: usize },
    /// Clamped B-splines on the given breakpoints (boundaries included).
    BSpline { knots: Vec<f64>, degree: usize },
}

impl BasisFamily {
    /// Evenly spaced breakpoints over `[lo, hi]`.
    pub fn uniform_bspline(intervals: usize, degree: usize, lo: f64, hi: f64) -> Self {
        let knots = (0..=intervals)
            .map(|i| lo + (hi - lo) * i as f64 / intervals as f64)
            .collect();
        BasisFamily::BSpline { knots, degree }
    }

    /// Number of columns produced by [`basis_expand`].
    pub fn dim(&self) -> usize {
        match self {
            BasisFamily::Polynomial { degree } => *degree,
            BasisFamily::BSpline { knots, degree } => knots.len().saturating_sub(1) + degree,
        }
    }

    /// Columns used per regressor next to an intercept. B-splines sum to
    /// one, so their first column is dropped.
    pub fn regression_width(&self) -> usize {
        match self {
            BasisFamily::Polynomial { degree } => *degree,
            BasisFamily::BSpline { .. } => self.dim() - 1,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            BasisFamily::Polynomial { degree } if *degree == 0 => {
                Err(Error::InvalidParameter("polynomial degree must be >= 1".into()))
            }
            BasisFamily::BSpline { knots, .. } if knots.len() < 2 => {
                Err(Error::InvalidParameter("B-spline needs at least two breakpoints".into()))
            }
            BasisFamily::BSpline { knots, .. }
                if knots.windows(2).any(|w| !(w[1] > w[0])) || knots.iter().any(|k| !k.is_finite()) =>
            {
                Err(Error::InvalidParameter("B-spline breakpoints must be finite and strictly increasing".into()))
            }
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BasisConfig {
    pub family: BasisFamily,
    /// Test level in (0, 1).
    pub alpha: f64,
    /// Standardize each regressor (pooled over environments) before expansion.
    pub standardize: bool,
}

impl Default for BasisConfig {
    fn default() -> Self {
        Self {
            family: BasisFamily::Polynomial { degree: 5 },
            alpha: 0.05,
            standardize: true,
        }
    }
}

impl BasisConfig {
    pub fn validate(&self) -> Result<()> {
        self.family.validate()?;
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::InvalidParameter(format!(
                "alpha must lie in (0, 1), got {}",
                self.alpha
            )));
        }
        Ok(())
    }
}

/// Clamped knot vector: each boundary repeated `degree + 1` times.
fn clamped(knots: &[f64], degree: usize) -> Vec<f64> {
    let mut t = vec![knots[0]; degree];
    t.extend_from_slice(knots);
    t.extend(std::iter::repeat_n(knots[knots.len() - 1], degree));
    t
}

/// Values of all B-spline basis functions at `x` (Cox–de Boor).
fn bspline_row(t: &[f64], degree: usize, x: f64, out: &mut [f64]) {
    let nb = t.len() - degree - 1;
    // Degree-0 support: half-open intervals, last one closed.
    let last = t.len() - degree - 2;
    let mut span = degree;
    while span < last && x >= t[span + 1] {
        span += 1;
    }
    let mut b = vec![0.0; t.len() - 1];
    b[span] = 1.0;
    for p in 1..=degree {
        for i in 0..t.len() - 1 - p {
            let left = if t[i + p] > t[i] {
                (x - t[i]) / (t[i + p] - t[i]) * b[i]
            } else {
                0.0
            };
            let right = if t[i + p + 1] > t[i + 1] {
                (t[i + p + 1] - x) / (t[i + p + 1] - t[i + 1]) * b[i + 1]
            } else {
                0.0
            };
            b[i] = left + right;
        }
    }
    out.copy_from_slice(&b[..nb]);
}

/// Evaluates every basis function at every point: `n × dim`.
pub fn basis_expand(x: &[f64], family: &BasisFamily) -> Result<Matrix<f64>> {
    family.validate()?;
    if let Some(v) = x.iter().find(|v| !v.is_finite()) {
        return Err(Error::NonFinite(format!("basis input {v}")));
    }
    let n = x.len();
    match family {
        BasisFamily::Polynomial { degree } => Ok(Matrix::from_fn(n, *degree, |i, p| x[i].powi(p as i32 + 1))),
        BasisFamily::BSpline { knots, degree } => {
            let (lo, hi) = (knots[0], knots[knots.len() - 1]);
            let tol = 1e-9 * (hi - lo);
            if let Some(v) = x.iter().find(|&&v| v < lo - tol || v > hi + tol) {
                return Err(Error::InvalidParameter(format!(
                    "value {v} outside the B-spline range [{lo}, {hi}]"
                )));
            }
            let t = clamped(knots, *degree);
            let dim = family.dim();
            let mut out = Matrix::zeros(n, dim);
            for (i, &v) in x.iter().enumerate() {
                bspline_row(&t, *degree, v.clamp(lo, hi), out.row_mut(i));
            }
            Ok(out)
        }
    }
}
