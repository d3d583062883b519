//! PCA by eigendecomposition of the mean-centered covariance. For the
//! high-dimensional descriptor vectors (d >> n) the n x n Gram matrix is
//! decomposed instead; both routes yield the same retained subspace.

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum PcaError {
    #[error("need at least 2 samples, got {0}")]
    TooFewSamples(usize),
    #[error("dimension mismatch: model is {model}, input is {input}")]
    DimensionMismatch { model: usize, input: usize },
}

/// How many components to keep.
#[derive(Debug, Clone, Copy)]
pub enum PcaTarget {
    /// Smallest m reaching this explained-variance fraction.
    VarianceFraction(f64),
    /// Fixed output dimension (capped at the data rank).
    Dim(usize),
}

/// Trained PCA embedding: column-orthonormal basis of the retained
/// principal subspace.
#[derive(Debug, Clone, PartialEq)]
pub struct PcaModel {
    pub mean: Vec<f64>,
    /// d x m, columns are principal directions.
    pub basis: DMatrix<f64>,
    /// Descending per-component variances.
    pub explained_variance: Vec<f64>,
}

impl PcaModel {
    pub fn input_dim(&self) -> usize {
        self.basis.nrows()
    }

    pub fn output_dim(&self) -> usize {
        self.basis.ncols()
    }

    /// Projects a d-vector into the m-dimensional principal subspace.
    pub fn project(&self, v: &[f64]) -> Result<Vec<f64>, PcaError> {
        if v.len() != self.input_dim() {
            return Err(PcaError::DimensionMismatch {
                model: self.input_dim(),
                input: v.len(),
            });
        }
        let centered = DVector::from_iterator(v.len(), v.iter().zip(&self.mean).map(|(x, m)| x - m));
        let proj = self.basis.transpose() * centered;
        Ok(proj.iter().copied().collect())
    }

    /// Maps an embedded point back to the input space (plus mean).
    pub fn reconstruct(&self, embedded: &[f64]) -> Vec<f64> {
        let e = DVector::from_column_slice(embedded);
        let back = &self.basis * e;
        back.iter().zip(&self.mean).map(|(x, m)| x + m).collect()
    }
}

/// Fits PCA on row vectors. Default target is 95% explained variance.
pub fn fit_pca(vectors: &[Vec<f64>], target: PcaTarget) -> Result<PcaModel, PcaError> {
    let n = vectors.len();
    if n < 2 {
        return Err(PcaError::TooFewSamples(n));
    }
    let d = vectors[0].len();
    let mut mean = vec![0f64; d];
    for v in vectors {
        for (m, x) in mean.iter_mut().zip(v) {
            *m += x;
        }
    }
    for m in mean.iter_mut() {
        *m /= n as f64;
    }

    // centered data, rows are samples
    let x = DMatrix::from_fn(n, d, |i, j| vectors[i][j] - mean[j]);

    let (mut directions, mut variances): (Vec<DVector<f64>>, Vec<f64>) = if d <= n {
        let cov = (x.transpose() * &x) / (n as f64 - 1.0);
        let se = cov.symmetric_eigen();
        let mut idx: Vec<usize> = (0..d).collect();
        idx.sort_by(|&a, &b| se.eigenvalues[b].partial_cmp(&se.eigenvalues[a]).unwrap());
        idx.iter()
            .map(|&i| (se.eigenvectors.column(i).into_owned(), se.eigenvalues[i].max(0.0)))
            .unzip()
    } else {
        // Gram trick: eigenvectors of X X^T lift to X^T v / sqrt(lambda)
        let gram = &x * x.transpose();
        let se = gram.symmetric_eigen();
        let mut idx: Vec<usize> = (0..n).collect();
        idx.sort_by(|&a, &b| se.eigenvalues[b].partial_cmp(&se.eigenvalues[a]).unwrap());
        let mut dirs = Vec::new();
        let mut vars = Vec::new();
        for &i in &idx {
            let lambda = se.eigenvalues[i].max(0.0);
            if lambda <= 1e-12 {
                continue;
            }
            let u = (x.transpose() * se.eigenvectors.column(i)) / lambda.sqrt();
            dirs.push(u);
            vars.push(lambda / (n as f64 - 1.0));
        }
        (dirs, vars)
    };

    // drop numerically-zero components
    let total: f64 = variances.iter().sum();
    let keep = match target {
        PcaTarget::Dim(m) => m.min(directions.len()),
        PcaTarget::VarianceFraction(f) => {
            let mut acc = 0.0;
            let mut m = 0;
            for v in &variances {
                m += 1;
                acc += v;
                if total > 0.0 && acc / total >= f {
                    break;
                }
            }
            m.max(1)
        }
    };
    directions.truncate(keep);
    variances.truncate(keep);

    let mut basis = DMatrix::zeros(d, keep);
    for (j, dir) in directions.iter().enumerate() {
        basis.set_column(j, dir);
    }
    Ok(PcaModel {
        mean,
        basis,
        explained_variance: variances,
    })
}
