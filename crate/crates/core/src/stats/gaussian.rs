use nalgebra::{DMatrix, DVector};

use super::StatsError;
use crate::embed::EmbeddingSet;

/// Mean and covariance of an embedding set.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianStats {
    mean: DVector<f64>,
    cov: DMatrix<f64>,
    n: usize,
}

impl GaussianStats {
    pub fn new(mean: DVector<f64>, cov: DMatrix<f64>, n: usize) -> Result<Self, StatsError> {
        let d = mean.len();
        if d == 0 {
            return Err(StatsError::InvalidStats("zero dimension".into()));
        }
        if cov.shape() != (d, d) {
            return Err(StatsError::DimensionMismatch {
                expected: d,
                actual: cov.nrows(),
            });
        }
        if n < 2 {
            return Err(StatsError::TooFewSamples { n, required: 2 });
        }
        if mean.iter().chain(cov.iter()).any(|v| !v.is_finite()) {
            return Err(StatsError::NonFinite);
        }
        let scale = cov.amax().max(f64::MIN_POSITIVE);
        if (&cov - cov.transpose()).amax() > 1e-8 * scale {
            return Err(StatsError::InvalidStats("covariance is not symmetric".into()));
        }
        Ok(GaussianStats { mean, cov, n })
    }

    /// Fits the rows of an `N × D` matrix with the unbiased covariance.
    pub fn fit(x: &DMatrix<f64>) -> Result<Self, StatsError> {
        let n = x.nrows();
        if n < 2 {
            return Err(StatsError::TooFewSamples { n, required: 2 });
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(StatsError::NonFinite);
        }
        let mean = x.row_mean().transpose();
        let mut centered = x.clone();
        for mut row in centered.row_iter_mut() {
            row -= mean.transpose();
        }
        let s = centered.tr_mul(&centered) / (n - 1) as f64;
        let cov = (&s + s.transpose()) * 0.5;
        Ok(GaussianStats { mean, cov, n })
    }

    pub fn mean(&self) -> &DVector<f64> {
        &self.mean
    }

    pub fn cov(&self) -> &DMatrix<f64> {
        &self.cov
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }
}

pub fn fit_gaussian(set: &EmbeddingSet) -> Result<GaussianStats, StatsError> {
    GaussianStats::fit(&set.to_matrix())
}
