use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use super::{GaussianStats, StatsError};
use crate::embed::{EmbedderSpec, EmbeddingSet};

/// How embeddings are reduced before fitting Gaussians.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub enum Projection {
    /// No projection.
    Np,
    /// The top `k` principal components of the reference set, not whitened.
    Pca(usize),
}

impl Projection {
    pub const PCA100: Projection = Projection::Pca(100);
    pub const PCA10: Projection = Projection::Pca(10);

    pub fn label(self) -> String {
        self.to_string()
    }
}

impl fmt::Display for Projection {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Projection::Np => f.write_str("NP"),
            Projection::Pca(k) => write!(f, "PCA{k}"),
        }
    }
}

impl FromStr for Projection {
    type Err = StatsError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let up = s.trim().to_ascii_uppercase();
        if up == "NP" {
            return Ok(Projection::Np);
        }
        up.strip_prefix("PCA")
            .and_then(|k| k.parse::<usize>().ok())
            .filter(|&k| k > 0)
            .map(Projection::Pca)
            .ok_or_else(|| StatsError::InvalidProjection(format!("unknown projection {s:?}")))
    }
}

impl From<Projection> for String {
    fn from(p: Projection) -> String {
        p.to_string()
    }
}

impl TryFrom<String> for Projection {
    type Error = StatsError;

    fn try_from(s: String) -> Result<Self, Self::Error> {
        s.parse()
    }
}

/// A fitted linear projection `y = components · (x − center)`.
#[derive(Debug, Clone, PartialEq)]
pub struct PcaProjection {
    components: DMatrix<f64>,
    center: DVector<f64>,
    explained_variance: DVector<f64>,
    mode: Projection,
}

impl PcaProjection {
    pub fn new(
        components: DMatrix<f64>,
        center: DVector<f64>,
        explained_variance: DVector<f64>,
        mode: Projection,
    ) -> Result<Self, StatsError> {
        let (k, d) = components.shape();
        if center.len() != d {
            return Err(StatsError::DimensionMismatch {
                expected: d,
                actual: center.len(),
            });
        }
        if explained_variance.len() != k {
            return Err(StatsError::DimensionMismatch {
                expected: k,
                actual: explained_variance.len(),
            });
        }
        let gram = &components * components.transpose();
        if (gram - DMatrix::identity(k, k)).amax() > 1e-6 {
            return Err(StatsError::InvalidProjection("component rows are not orthonormal".into()));
        }
        let ev = explained_variance.as_slice();
        if ev.iter().any(|&v| v.is_nan() || v < 0.0) || ev.windows(2).any(|w| w[1] > w[0]) {
            return Err(StatsError::InvalidProjection(
                "explained variance must be non-negative and non-increasing".into(),
            ));
        }
        Ok(PcaProjection {
            components,
            center,
            explained_variance,
            mode,
        })
    }

    pub fn identity(dim: usize) -> Self {
        PcaProjection {
            components: DMatrix::identity(dim, dim),
            center: DVector::zeros(dim),
            explained_variance: DVector::zeros(dim),
            mode: Projection::Np,
        }
    }

    pub fn components(&self) -> &DMatrix<f64> {
        &self.components
    }

    pub fn center(&self) -> &DVector<f64> {
        &self.center
    }

    pub fn explained_variance(&self) -> &DVector<f64> {
        &self.explained_variance
    }

    pub fn mode(&self) -> Projection {
        self.mode
    }

    pub fn input_dim(&self) -> usize {
        self.components.ncols()
    }

    pub fn output_dim(&self) -> usize {
        self.components.nrows()
    }

    /// Projects the rows of an `N × D` matrix in double precision.
    pub fn project_matrix(&self, x: &DMatrix<f64>) -> Result<DMatrix<f64>, StatsError> {
        if x.ncols() != self.input_dim() {
            return Err(StatsError::DimensionMismatch {
                expected: self.input_dim(),
                actual: x.ncols(),
            });
        }
        if self.mode == Projection::Np && self.center.iter().all(|&c| c == 0.0) {
            return Ok(x.clone());
        }
        let mut centered = x.clone();
        for mut row in centered.row_iter_mut() {
            row -= self.center.transpose();
        }
        Ok(centered * self.components.transpose())
    }
}

/// Fits a projection on the reference embeddings.
pub fn fit_pca(reference: &EmbeddingSet, mode: Projection) -> Result<PcaProjection, StatsError> {
    fit_pca_matrix(&reference.to_matrix(), mode)
}

pub fn fit_pca_matrix(x: &DMatrix<f64>, mode: Projection) -> Result<PcaProjection, StatsError> {
    let (n, d) = x.shape();
    let k = match mode {
        Projection::Np => d,
        Projection::Pca(k) => {
            if k > d {
                return Err(StatsError::InvalidProjection(format!(
                    "{k} components requested from {d}-dimensional embeddings"
                )));
            }
            if n <= k {
                return Err(StatsError::TooFewSamples { n, required: k + 1 });
            }
            k
        }
    };
    let g = GaussianStats::fit(x)?;
    let (values, vectors) = sorted_eigen(g.cov().clone())?;
    let explained = DVector::from_iterator(k, values.iter().take(k).map(|v| v.max(0.0)));

    if mode == Projection::Np {
        let mut p = PcaProjection::identity(d);
        p.explained_variance = explained;
        return Ok(p);
    }

    let tol = values[0].abs().max(f64::MIN_POSITIVE) * d as f64 * f64::EPSILON;
    let rank = values.iter().filter(|&&v| v > tol).count();
    if k > rank {
        log::warn!("{k} components requested but the reference covariance has rank {rank}");
    }
    let components = DMatrix::from_fn(k, d, |i, j| vectors[(j, i)]);
    Ok(PcaProjection {
        components,
        center: g.mean().clone(),
        explained_variance: explained,
        mode,
    })
}

/// Eigenpairs sorted by descending eigenvalue. Each eigenvector's largest
/// entry (first on ties) is made positive.
fn sorted_eigen(cov: DMatrix<f64>) -> Result<(Vec<f64>, DMatrix<f64>), StatsError> {
    let d = cov.nrows();
    let e = SymmetricEigen::try_new(cov, 1e-14, 10_000)
        .ok_or_else(|| StatsError::NumericalFailure("covariance eigendecomposition did not converge".into()))?;
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| e.eigenvalues[b].total_cmp(&e.eigenvalues[a]));
    let values = order.iter().map(|&i| e.eigenvalues[i]).collect();
    let mut vectors = DMatrix::zeros(d, d);
    for (dst, &src) in order.iter().enumerate() {
        let col = e.eigenvectors.column(src);
        let lead = col.iter().enumerate().fold(0, |best, (i, v)| {
            if v.abs() > col[best].abs() {
                i
            } else {
                best
            }
        });
        let sign = if col[lead] < 0.0 { -1.0 } else { 1.0 };
        vectors.set_column(dst, &(col * sign));
    }
    Ok((values, vectors))
}

/// Applies `p` to every row of `set`.
pub fn project(p: &PcaProjection, set: &EmbeddingSet) -> Result<EmbeddingSet, StatsError> {
    if set.dim() != p.input_dim() {
        return Err(StatsError::DimensionMismatch {
            expected: p.input_dim(),
            actual: set.dim(),
        });
    }
    if p.mode == Projection::Np && p.center.iter().all(|&c| c == 0.0) {
        return Ok(set.clone());
    }
    let y = p.project_matrix(&set.to_matrix())?;
    let k = p.output_dim();
    let spec = EmbedderSpec {
        id: format!("{}+pca{k}", set.embedder.id),
        dim: k,
        input_rate: set.embedder.input_rate,
    };
    let values = y.transpose().iter().map(|&v| v as f32).collect();
    EmbeddingSet::new(
        values,
        spec,
        set.regime_label.clone(),
        set.window_duration_s,
        set.source_fingerprint.clone(),
    )
    .map_err(|e| StatsError::InvalidStats(e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(n: usize, d: usize, seed: u64) -> DMatrix<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mix = DMatrix::from_fn(d, d, |_, _| rng.random_range(-1.0..1.0));
        DMatrix::from_fn(n, d, |_, _| rng.random_range(-1.0..1.0)) * mix
    }

    fn set_of(x: &DMatrix<f64>) -> EmbeddingSet {
        let spec = EmbedderSpec {
            id: "t".into(),
            dim: x.ncols(),
            input_rate: 48_000,
        };
        let values = x.transpose().iter().map(|&v| v as f32).collect();
        EmbeddingSet::new(values, spec, "L0", 5.0, "fp").unwrap()
    }

    #[test]
    fn labels() {
        assert_eq!("pca100".parse::<Projection>().unwrap(), Projection::PCA100);
        assert_eq!("NP".parse::<Projection>().unwrap(), Projection::Np);
        assert_eq!(Projection::PCA10.to_string(), "PCA10");
        assert!("PCA0".parse::<Projection>().is_err());
        assert!("whiten".parse::<Projection>().is_err());
        let json = serde_json::to_string(&Projection::PCA10).unwrap();
        assert_eq!(json, "\"PCA10\"");
        assert_eq!(serde_json::from_str::<Projection>(&json).unwrap(), Projection::PCA10);
    }

    #[test]
    fn rank_one_data() {
        let dir = [1.0, -2.0, 0.5];
        let x = DMatrix::from_fn(40, 3, |i, j| (i as f64 - 13.0) * 0.3 * dir[j]);
        let g = GaussianStats::fit(&x).unwrap();
        let p = fit_pca_matrix(&x, Projection::Pca(1)).unwrap();
        assert!((p.explained_variance()[0] - g.cov().trace()).abs() < 1e-9);
    }

    #[test]
    fn identity_preserves_input_and_distances() {
        let x = random(30, 6, 3);
        let set = set_of(&x);
        let p = fit_pca(&set, Projection::Np).unwrap();
        assert_eq!(project(&p, &set).unwrap(), set);
        let y = p.project_matrix(&x).unwrap();
        assert_eq!(y, x);
    }

    #[test]
    fn center_point_maps_to_zero() {
        let c = DVector::from_vec(vec![0.5, -1.0, 2.0]);
        let comps = DMatrix::from_row_slice(2, 3, &[1.0, 0.0, 0.0, 0.0, 0.0, 1.0]);
        let p = PcaProjection::new(comps, c.clone(), DVector::from_vec(vec![2.0, 1.0]), Projection::Pca(2)).unwrap();
        let x = DMatrix::from_row_slice(1, 3, c.as_slice());
        assert!(p.project_matrix(&x).unwrap().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn projected_variances_match_explained_variance() {
        let x = random(200, 50, 5);
        let p = fit_pca_matrix(&x, Projection::Pca(10)).unwrap();
        let y = p.project_matrix(&x).unwrap();
        let g = GaussianStats::fit(&y).unwrap();
        for i in 0..10 {
            assert!((g.cov()[(i, i)] - p.explained_variance()[i]).abs() < 1e-6);
            for j in 0..i {
                assert!(g.cov()[(i, j)].abs() < 1e-6);
            }
        }
        let ev = p.explained_variance().as_slice();
        assert!(ev.windows(2).all(|w| w[0] >= w[1]));
        let gram = p.components() * p.components().transpose();
        assert!((gram - DMatrix::identity(10, 10)).amax() < 1e-6);
    }

    #[test]
    fn projected_set_is_labelled() {
        let x = random(20, 8, 9);
        let set = set_of(&x);
        let p = fit_pca(&set, Projection::Pca(3)).unwrap();
        let y = project(&p, &set).unwrap();
        assert_eq!(y.dim(), 3);
        assert_eq!(y.embedder.id, "t+pca3");
        assert_eq!(y.count(), 20);
    }

    #[test]
    fn too_few_rows_or_too_many_components() {
        let x = random(10, 20, 1);
        assert!(matches!(
            fit_pca_matrix(&x, Projection::Pca(10)),
            Err(StatsError::TooFewSamples { n: 10, required: 11 })
        ));
        assert!(matches!(
            fit_pca_matrix(&x, Projection::Pca(21)),
            Err(StatsError::InvalidProjection(_))
        ));
        assert!(fit_pca_matrix(&x, Projection::Pca(9)).is_ok());
        let p = fit_pca_matrix(&x, Projection::Pca(2)).unwrap();
        assert!(matches!(
            project(&p, &set_of(&random(5, 4, 2))),
            Err(StatsError::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn rank_deficient_fit_is_allowed() {
        let x = DMatrix::from_fn(30, 5, |i, j| if j < 2 { (i * (j + 1)) as f64 } else { 1.0 });
        let p = fit_pca_matrix(&x, Projection::Pca(4)).unwrap();
        assert!(p.explained_variance()[3].abs() < 1e-9);
    }
}
