use std::cmp::Ordering;

use nalgebra::{DMatrix, SymmetricEigen};

use super::{GaussianStats, StatsError};

const EIGEN_EPS: f64 = 1e-14;
const EIGEN_MAX_ITER: usize = 10_000;

fn eigen(m: DMatrix<f64>) -> Option<SymmetricEigen<f64, nalgebra::Dyn>> {
    SymmetricEigen::try_new(m, EIGEN_EPS, EIGEN_MAX_ITER)
}

/// Principal square root of a symmetric PSD matrix, negative eigenvalues clamped.
fn sqrt_psd(m: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    let e = eigen(m.clone())?;
    let roots = e.eigenvalues.map(|l| l.max(0.0).sqrt());
    let v = &e.eigenvectors;
    let mut scaled = v.clone();
    for (mut col, r) in scaled.column_iter_mut().zip(roots.iter()) {
        col *= *r;
    }
    Some(&scaled * v.transpose())
}

fn trace_sqrt_product(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Option<f64> {
    let ra = sqrt_psd(a)?;
    let m = &ra * b * &ra;
    let m = (&m + m.transpose()) * 0.5;
    let e = eigen(m)?;
    let s: f64 = e.eigenvalues.iter().map(|l| l.max(0.0).sqrt()).sum();
    s.is_finite().then_some(s)
}

fn total_order(a: &GaussianStats, b: &GaussianStats) -> Ordering {
    a.cov()
        .iter()
        .zip(b.cov().iter())
        .chain(a.mean().iter().zip(b.mean().iter()))
        .map(|(x, y)| x.total_cmp(y))
        .find(|o| o.is_ne())
        .unwrap_or(Ordering::Equal)
}

/// Fréchet distance between two Gaussians:
/// `‖μa − μb‖² + tr Σa + tr Σb − 2 tr (Σa^½ Σb Σa^½)^½`.
///
/// The arguments are put in a canonical order first, so the result is
/// exactly symmetric and exactly zero for identical inputs.
pub fn frechet_distance(a: &GaussianStats, b: &GaussianStats) -> Result<f64, StatsError> {
    if a.dim() != b.dim() {
        return Err(StatsError::DimensionMismatch {
            expected: a.dim(),
            actual: b.dim(),
        });
    }
    let (a, b) = match total_order(a, b) {
        Ordering::Equal => return Ok(0.0),
        Ordering::Less => (a, b),
        Ordering::Greater => (b, a),
    };
    let dmu = (a.mean() - b.mean()).norm_squared();
    let (sa, sb) = (a.cov(), b.cov());
    let traces = sa.trace() + sb.trace();

    let cross = match trace_sqrt_product(sa, sb) {
        Some(s) => s,
        None => {
            let d = a.dim();
            let eps = 1e-6 * traces / (2 * d) as f64;
            log::warn!("covariance square root ill-conditioned; retrying with ridge {eps:e}");
            let ridge = DMatrix::identity(d, d) * eps;
            let (ra, rb) = (sa + &ridge, sb + &ridge);
            let s = trace_sqrt_product(&ra, &rb).ok_or_else(|| {
                StatsError::NumericalFailure("eigendecomposition did not converge after regularization".into())
            })?;
            return finish(dmu + ra.trace() + rb.trace() - 2.0 * s);
        }
    };
    finish(dmu + traces - 2.0 * cross)
}

fn finish(fad: f64) -> Result<f64, StatsError> {
    if fad.is_finite() {
        Ok(fad.max(0.0))
    } else {
        Err(StatsError::NumericalFailure("distance is not finite".into()))
    }
}
