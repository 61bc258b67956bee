use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Mean vector and covariance matrix summarising a predictive belief.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussianMoments {
    pub mean: DVector<f64>,
    pub cov: DMatrix<f64>,
}

impl GaussianMoments {
    pub fn new(mean: DVector<f64>, cov: DMatrix<f64>) -> Result<Self> {
        if cov.nrows() != mean.len() || cov.ncols() != mean.len() {
            return Err(Error::dims("covariance", mean.len(), cov.nrows()));
        }
        Ok(Self { mean, cov })
    }

    pub fn scalar(mean: f64, variance: f64) -> Self {
        Self {
            mean: DVector::from_element(1, mean),
            cov: DMatrix::from_element(1, 1, variance),
        }
    }

    /// Point mass at `mean`.
    pub fn degenerate(mean: &[f64]) -> Self {
        let n = mean.len();
        Self {
            mean: DVector::from_column_slice(mean),
            cov: DMatrix::zeros(n, n),
        }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    /// Mean of a one-dimensional law.
    pub fn mean1(&self) -> f64 {
        self.mean[0]
    }

    /// Variance of a one-dimensional law.
    pub fn var1(&self) -> f64 {
        self.cov[(0, 0)]
    }

    pub fn sd1(&self) -> f64 {
        self.var1().max(0.0).sqrt()
    }

    /// Checks symmetry, non-negative diagonal and |correlation| ≤ 1 + 1e-10.
    pub fn validate(&self) -> Result<()> {
        let n = self.dim();
        if self.cov.nrows() != n || self.cov.ncols() != n {
            return Err(Error::dims("covariance", n, self.cov.nrows()));
        }
        for i in 0..n {
            let vi = self.cov[(i, i)];
            if !(vi >= 0.0) {
                return Err(Error::NotPositiveDefinite(format!(
                    "variance {i} is {vi}"
                )));
            }
            for j in (i + 1)..n {
                let (a, b) = (self.cov[(i, j)], self.cov[(j, i)]);
                let scale = vi.max(self.cov[(j, j)]).max(f64::MIN_POSITIVE);
                if (a - b).abs() > 1e-10 * scale {
                    return Err(Error::NotPositiveDefinite(format!(
                        "covariance not symmetric at ({i}, {j})"
                    )));
                }
                let denom = (vi * self.cov[(j, j)]).sqrt();
                if denom > 0.0 && a.abs() / denom > 1.0 + 1e-10 {
                    return Err(Error::NotPositiveDefinite(format!(
                        "|correlation| > 1 at ({i}, {j})"
                    )));
                }
            }
        }
        Ok(())
    }

    /// Marginal law of the selected coordinates.
    pub fn marginal(&self, idx: &[usize]) -> Self {
        Self {
            mean: DVector::from_iterator(idx.len(), idx.iter().map(|&i| self.mean[i])),
            cov: DMatrix::from_fn(idx.len(), idx.len(), |a, b| self.cov[(idx[a], idx[b])]),
        }
    }
}
