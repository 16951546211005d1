//! Per-environment sample tables.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::scalar::Real;

/// `m x d` samples from one environment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvironmentData<T> {
    pub values: Matrix<T>,
    pub env_id: usize,
    pub column_names: Option<Vec<String>>,
}

impl<T: Real> EnvironmentData<T> {
    pub fn new(values: Matrix<T>, env_id: usize) -> Result<Self> {
        if let Some((i, j)) = values.first_non_finite() {
            return Err(Error::NonFinite(format!(
                "environment {env_id} row {i} column {j}"
            )));
        }
        Ok(Self {
            values,
            env_id,
            column_names: None,
        })
    }

    pub fn with_names(mut self, names: Vec<String>) -> Result<Self> {
        if names.len() != self.values.ncols() {
            return Err(Error::DimensionMismatch(format!(
                "{} column names for {} columns",
                names.len(),
                self.values.ncols()
            )));
        }
        self.column_names = Some(names);
        Ok(self)
    }

    pub fn num_samples(&self) -> usize {
        self.values.nrows()
    }

    pub fn num_vars(&self) -> usize {
        self.values.ncols()
    }

    /// Column labels, falling back to `x0, x1, ...`.
    pub fn names(&self) -> Vec<String> {
        self.column_names
            .clone()
            .unwrap_or_else(|| (0..self.num_vars()).map(|j| format!("x{j}")).collect())
    }

    pub fn cast<U: Real>(&self) -> EnvironmentData<U> {
        EnvironmentData {
            values: self.values.cast(),
            env_id: self.env_id,
            column_names: self.column_names.clone(),
        }
    }
}

/// Shared column count of a set of environments.
pub fn common_width<T: Real>(datasets: &[EnvironmentData<T>]) -> Result<usize> {
    let d = datasets
        .first()
        .map(|e| e.num_vars())
        .ok_or_else(|| Error::InvalidParameter("no datasets".into()))?;
    for e in datasets {
        if e.num_vars() != d {
            return Err(Error::DimensionMismatch(format!(
                "environment {} has {} columns, expected {d}",
                e.env_id,
                e.num_vars()
            )));
        }
    }
    Ok(d)
}
