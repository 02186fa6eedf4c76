#![allow(dead_code)]

use std::path::{Path, PathBuf};

use apa_core::pipeline::synth::{write_corpus, SynthOptions};
use apa_core::stats::GaussianStats;
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub type Mat = Vec<Vec<f64>>;

pub fn apa_bin() -> &'static str {
    env!("CARGO_BIN_EXE_apa")
}

pub fn echo_bin() -> &'static str {
    env!("CARGO_BIN_EXE_apa-echo-bridge")
}

/// Eigen-decomposition of a symmetric matrix by cyclic Jacobi rotations.
/// Eigenvalues come back in descending order; `vecs[i][k]` is component `i`
/// of eigenvector `k`.
pub fn jacobi_eigen(a: &Mat) -> (Vec<f64>, Mat) {
    let n = a.len();
    let mut m = a.clone();
    let mut v: Mat = (0..n).map(|i| (0..n).map(|j| f64::from(u8::from(i == j))).collect()).collect();
    for _sweep in 0..100 {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| m[i][j] * m[i][j])
            .sum();
        let scale: f64 = (0..n).map(|i| m[i][i] * m[i][i]).sum::<f64>().max(1e-300);
        if off <= 1e-30 * scale {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                if m[p][q].abs() < 1e-300 {
                    continue;
                }
                let theta = (m[q][q] - m[p][p]) / (2.0 * m[p][q]);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let (mkp, mkq) = (m[k][p], m[k][q]);
                    m[k][p] = c * mkp - s * mkq;
                    m[k][q] = s * mkp + c * mkq;
                }
                for k in 0..n {
                    let (mpk, mqk) = (m[p][k], m[q][k]);
                    m[p][k] = c * mpk - s * mqk;
                    m[q][k] = s * mpk + c * mqk;
                }
                for row in v.iter_mut() {
                    let (vp, vq) = (row[p], row[q]);
                    row[p] = c * vp - s * vq;
                    row[q] = s * vp + c * vq;
                }
            }
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| m[j][j].total_cmp(&m[i][i]));
    let vals = order.iter().map(|&k| m[k][k]).collect();
    let vecs = (0..n).map(|i| order.iter().map(|&k| v[i][k]).collect()).collect();
    (vals, vecs)
}

pub fn matmul(a: &Mat, b: &Mat) -> Mat {
    let (n, m, p) = (a.len(), b.len(), b[0].len());
    (0..n)
        .map(|i| (0..p).map(|j| (0..m).map(|k| a[i][k] * b[k][j]).sum()).collect())
        .collect()
}

/// Principal square root of a symmetric positive semi-definite matrix.
pub fn sqrt_psd(a: &Mat) -> Mat {
    let (vals, vecs) = jacobi_eigen(a);
    let n = a.len();
    (0..n)
        .map(|i| {
            (0..n)
                .map(|j| (0..n).map(|k| vecs[i][k] * vals[k].max(0.0).sqrt() * vecs[j][k]).sum())
                .collect()
        })
        .collect()
}

/// Fréchet distance between two Gaussians, computed independently of the
/// library.
pub fn fad_oracle(mu_a: &[f64], cov_a: &Mat, mu_b: &[f64], cov_b: &Mat) -> f64 {
    let dmu: f64 = mu_a.iter().zip(mu_b).map(|(a, b)| (a - b) * (a - b)).sum();
    let tr = |m: &Mat| (0..m.len()).map(|i| m[i][i]).sum::<f64>();
    let sa = sqrt_psd(cov_a);
    let inner = matmul(&matmul(&sa, cov_b), &sa);
    let sym: Mat = (0..inner.len())
        .map(|i| (0..inner.len()).map(|j| 0.5 * (inner[i][j] + inner[j][i])).collect())
        .collect();
    let (vals, _) = jacobi_eigen(&sym);
    let tr_sqrt: f64 = vals.iter().map(|v| v.max(0.0).sqrt()).sum();
    dmu + tr(cov_a) + tr(cov_b) - 2.0 * tr_sqrt
}

pub fn random_mean(rng: &mut ChaCha8Rng, d: usize) -> Vec<f64> {
    (0..d).map(|_| rng.random_range(-2.0..2.0)).collect()
}

/// `L·Lᵀ / d + 0.05·I` with uniform entries in `L`.
pub fn random_spd(rng: &mut ChaCha8Rng, d: usize) -> Mat {
    let l: Mat = (0..d).map(|_| (0..d).map(|_| rng.random_range(-1.0..1.0)).collect()).collect();
    (0..d)
        .map(|i| {
            (0..d)
                .map(|j| {
                    let dot: f64 = (0..d).map(|k| l[i][k] * l[j][k]).sum();
                    dot / d as f64 + if i == j { 0.05 } else { 0.0 }
                })
                .collect()
        })
        .collect()
}

pub fn stats(mu: &[f64], cov: &Mat) -> GaussianStats {
    let d = mu.len();
    GaussianStats::new(
        DVector::from_column_slice(mu),
        DMatrix::from_fn(d, d, |i, j| cov[i][j]),
        100,
    )
    .unwrap()
}

pub fn to_rows(m: &DMatrix<f64>) -> Mat {
    (0..m.nrows()).map(|i| m.row(i).iter().copied().collect()).collect()
}

/// Unbiased sample covariance of the rows of `x`.
pub fn sample_cov(x: &Mat) -> Mat {
    let n = x.len();
    let d = x[0].len();
    let mean: Vec<f64> = (0..d).map(|j| x.iter().map(|r| r[j]).sum::<f64>() / n as f64).collect();
    (0..d)
        .map(|a| {
            (0..d)
                .map(|b| x.iter().map(|r| (r[a] - mean[a]) * (r[b] - mean[b])).sum::<f64>() / (n - 1) as f64)
                .collect()
        })
        .collect()
}

/// CLES by enumerating every pair.
pub fn cles_brute(a: &[f64], b: &[f64]) -> f64 {
    let mut s = 0.0;
    for &x in a {
        for &y in b {
            s += if x > y {
                1.0
            } else if x == y {
                0.5
            } else {
                0.0
            };
        }
    }
    s / (a.len() * b.len()) as f64
}

pub fn synth_manifest(dir: &Path, songs: usize, duration_s: f64, seed: u64) -> PathBuf {
    write_corpus(
        dir,
        &SynthOptions {
            songs,
            duration_s,
            seed,
        },
    )
    .unwrap()
}
