use nalgebra::{DMatrix, SymmetricEigen};
use rayon::prelude::*;

use super::{ContentError, EmbeddingMatrix};

#[derive(Debug, Clone, PartialEq)]
pub struct PcaModel {
    pub mean: Vec<f64>,
    /// r orthonormal rows of length d, by decreasing eigenvalue.
    pub components: Vec<Vec<f64>>,
    pub eigenvalues: Vec<f64>,
    pub variance_ratios: Vec<f64>,
    pub total_variance: f64,
    /// Set when the input had no variance; components are then unit axes.
    pub degenerate: bool,
}

impl PcaModel {
    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn explained(&self) -> f64 {
        self.variance_ratios.iter().sum()
    }

    pub fn transform(&self, x: &EmbeddingMatrix) -> Result<EmbeddingMatrix, ContentError> {
        if x.dim() != self.dim() {
            return Err(ContentError::Contract(format!(
                "model expects dim {}, matrix has {}",
                self.dim(),
                x.dim()
            )));
        }
        let r = self.components.len();
        let rows: Vec<Vec<f64>> = (0..x.rows())
            .into_par_iter()
            .map(|i| {
                let row = x.row(i);
                self.components
                    .iter()
                    .map(|c| c.iter().zip(row).zip(&self.mean).map(|((c, v), m)| c * (v - m)).sum())
                    .collect()
            })
            .collect();
        EmbeddingMatrix::from_rows(r, rows)
    }

    pub fn inverse_transform(&self, y: &EmbeddingMatrix) -> Result<EmbeddingMatrix, ContentError> {
        if y.dim() != self.components.len() {
            return Err(ContentError::Contract("score dim does not match component count".into()));
        }
        let d = self.dim();
        let rows = y
            .iter_rows()
            .map(|s| {
                let mut out = self.mean.clone();
                for (coef, c) in s.iter().zip(&self.components) {
                    for j in 0..d {
                        out[j] += coef * c[j];
                    }
                }
                out
            })
            .collect();
        EmbeddingMatrix::from_rows(d, rows)
    }
}

/// Fits PCA on the sample covariance of `x` and projects onto the top `r` components.
pub fn pca_fit_transform(x: &EmbeddingMatrix, r: usize) -> Result<(PcaModel, EmbeddingMatrix), ContentError> {
    let (n, d) = (x.rows(), x.dim());
    if n < 2 {
        return Err(ContentError::Contract(format!("PCA needs at least 2 rows, got {n}")));
    }
    if r == 0 || r > (n - 1).min(d) {
        return Err(ContentError::Contract(format!(
            "target dim {r} outside 1..={} for {n} rows of dim {d}",
            (n - 1).min(d)
        )));
    }

    let mut mean = vec![0.0; d];
    for row in x.iter_rows() {
        for (m, v) in mean.iter_mut().zip(row) {
            *m += v;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n as f64);

    // Constant columns have zero covariance with everything; only the rest enter
    // the eigenproblem.
    let active: Vec<usize> = (0..d)
        .filter(|&j| x.iter_rows().any(|row| row[j] - mean[j] != 0.0))
        .collect();
    let m = active.len();

    // Column-major centred data so each covariance entry is one contiguous dot product.
    let mut cols = vec![0.0; n * m];
    for (i, row) in x.iter_rows().enumerate() {
        for (a, &j) in active.iter().enumerate() {
            cols[a * n + i] = row[j] - mean[j];
        }
    }
    let upper: Vec<Vec<f64>> = (0..m)
        .into_par_iter()
        .map(|a| {
            let ca = &cols[a * n..(a + 1) * n];
            (a..m)
                .map(|b| {
                    let cb = &cols[b * n..(b + 1) * n];
                    ca.iter().zip(cb).map(|(p, q)| p * q).sum::<f64>() / (n - 1) as f64
                })
                .collect()
        })
        .collect();
    let cov = DMatrix::from_fn(m, m, |a, b| {
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        upper[lo][hi - lo]
    });
    let total_variance: f64 = (0..m).map(|j| cov[(j, j)]).sum();

    let scale = x.as_slice().iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let degenerate = total_variance <= scale * scale * d as f64 * 1e-24;

    let model = if degenerate {
        log::warn!("PCA input has zero variance; components are unit axes and ratios are 0");
        let components = (0..r)
            .map(|k| {
                let mut e = vec![0.0; d];
                e[k] = 1.0;
                e
            })
            .collect();
        PcaModel {
            mean,
            components,
            eigenvalues: vec![0.0; r],
            variance_ratios: vec![0.0; r],
            total_variance: 0.0,
            degenerate: true,
        }
    } else {
        let (values, vectors) = symmetric_eigen(cov);
        // Candidates: eigenpairs of the active block, then unit axes of constant columns (eigenvalue 0).
        let mut cand: Vec<(f64, usize)> = (0..m).map(|k| (values[k], k)).collect();
        let inactive: Vec<usize> = (0..d).filter(|j| active.binary_search(j).is_err()).collect();
        cand.extend(inactive.iter().enumerate().map(|(t, _)| (0.0, m + t)));
        cand.sort_by(|p, q| q.0.total_cmp(&p.0).then(p.1.cmp(&q.1)));
        let mut components = Vec::with_capacity(r);
        let mut eigenvalues = Vec::with_capacity(r);
        for &(value, key) in cand.iter().take(r) {
            let mut v = vec![0.0; d];
            if key < m {
                for (a, &j) in active.iter().enumerate() {
                    v[j] = vectors[(a, key)];
                }
            } else {
                v[inactive[key - m]] = 1.0;
            }
            orient(&mut v);
            components.push(v);
            eigenvalues.push(value.max(0.0));
        }
        let variance_ratios = eigenvalues.iter().map(|l| l / total_variance).collect();
        PcaModel {
            mean,
            components,
            eigenvalues,
            variance_ratios,
            total_variance,
            degenerate: false,
        }
    };
    let y = model.transform(x)?;
    Ok((model, y))
}

/// Eigenvalues and column eigenvectors of a symmetric matrix. nalgebra's solver
/// can return NaN on sparse block-structured input; cyclic Jacobi takes over then.
fn symmetric_eigen(a: DMatrix<f64>) -> (Vec<f64>, DMatrix<f64>) {
    let eig = SymmetricEigen::new(a.clone());
    if eig.eigenvalues.iter().chain(eig.eigenvectors.iter()).all(|v| v.is_finite()) {
        return (eig.eigenvalues.iter().copied().collect(), eig.eigenvectors);
    }
    log::debug!("symmetric eigensolver returned non-finite values; using Jacobi rotations");
    jacobi_eigen(a)
}

fn jacobi_eigen(mut a: DMatrix<f64>) -> (Vec<f64>, DMatrix<f64>) {
    let m = a.nrows();
    let mut v = DMatrix::<f64>::identity(m, m);
    let norm: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    for _sweep in 0..100 {
        let off: f64 = (0..m)
            .flat_map(|p| (p + 1..m).map(move |q| (p, q)))
            .map(|(p, q)| a[(p, q)] * a[(p, q)])
            .sum::<f64>()
            .sqrt();
        if off <= f64::EPSILON * norm * 1e-3 || off == 0.0 {
            break;
        }
        for p in 0..m {
            for q in p + 1..m {
                let apq = a[(p, q)];
                if apq == 0.0 {
                    continue;
                }
                let theta = (a[(q, q)] - a[(p, p)]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..m {
                    let (akp, akq) = (a[(k, p)], a[(k, q)]);
                    a[(k, p)] = c * akp - s * akq;
                    a[(k, q)] = s * akp + c * akq;
                }
                for k in 0..m {
                    let (apk, aqk) = (a[(p, k)], a[(q, k)]);
                    a[(p, k)] = c * apk - s * aqk;
                    a[(q, k)] = s * apk + c * aqk;
                }
                for k in 0..m {
                    let (vkp, vkq) = (v[(k, p)], v[(k, q)]);
                    v[(k, p)] = c * vkp - s * vkq;
                    v[(k, q)] = s * vkp + c * vkq;
                }
            }
        }
    }
    ((0..m).map(|i| a[(i, i)]).collect(), v)
}

/// Flips `v` so its largest-magnitude coordinate (first on ties) is positive.
fn orient(v: &mut [f64]) {
    let mut best = 0;
    for (j, x) in v.iter().enumerate() {
        if x.abs() > v[best].abs() {
            best = j;
        }
    }
    if v[best] < 0.0 {
        v.iter_mut().for_each(|x| *x = -*x);
    }
}
