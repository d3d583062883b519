//! Soft-margin RBF-kernel SVM trained from scratch by sequential minimal
//! optimization with maximal-violating-pair working-set selection.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum SvmError {
    #[error("both classes must be present in the training set")]
    SingleClass,
    #[error("labels must be +1 or -1, got {0}")]
    InvalidLabel(f64),
    #[error("empty training set")]
    Empty,
    #[error("dimension mismatch: model is {model}, input is {input}")]
    DimensionMismatch { model: usize, input: usize },
}

/// KKT violation tolerance at which SMO terminates.
pub const SMO_TOLERANCE: f64 = 1e-3;

#[derive(Debug, Clone, PartialEq)]
pub struct SvmModel {
    pub support_vectors: Vec<Vec<f64>>,
    /// alpha_i * y_i for each support vector; bounded by the class C.
    pub dual_coeffs: Vec<f64>,
    pub bias: f64,
    pub gamma: f64,
    pub c: f64,
}

#[inline]
pub fn rbf_kernel(a: &[f64], b: &[f64], gamma: f64) -> f64 {
    let d2: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
    (-gamma * d2).exp()
}

impl SvmModel {
    /// Decision value `sum_i coeff_i K(sv_i, x) + b`; positive means the
    /// +1 class.
    pub fn decision(&self, x: &[f64]) -> Result<f64, SvmError> {
        if let Some(sv) = self.support_vectors.first() {
            if sv.len() != x.len() {
                return Err(SvmError::DimensionMismatch {
                    model: sv.len(),
                    input: x.len(),
                });
            }
        }
        Ok(self
            .support_vectors
            .iter()
            .zip(&self.dual_coeffs)
            .map(|(sv, c)| c * rbf_kernel(sv, x, self.gamma))
            .sum::<f64>()
            + self.bias)
    }

    pub fn classify(&self, x: &[f64]) -> Result<bool, SvmError> {
        Ok(self.decision(x)? > 0.0)
    }
}

/// Diagnostics from one SMO solve.
#[derive(Debug, Clone)]
pub struct SmoStats {
    pub iterations: usize,
    /// Final duality gap `b_low - b_up`.
    pub gap: f64,
    /// Max |incremental f_i - recomputed f_i| at termination.
    pub f_consistency: f64,
}

/// Trains the dual soft-margin problem
/// `min 0.5 a' Q a - e' a  s.t. 0 <= a_i <= C_i, y' a = 0`
/// with `K(x,y) = exp(-gamma |x-y|^2)` to KKT tolerance 1e-3.
///
/// `class_c` gives the box constraint per class `(C_pos, C_neg)`; pass
/// `(c, c)` for the unweighted problem. Deterministic given sample order.
pub fn train_svm(
    points: &[Vec<f64>],
    labels: &[f64],
    class_c: (f64, f64),
    gamma: f64,
) -> Result<(SvmModel, SmoStats), SvmError> {
    let n = points.len();
    if n == 0 {
        return Err(SvmError::Empty);
    }
    assert_eq!(labels.len(), n);
    for &y in labels {
        if y != 1.0 && y != -1.0 {
            return Err(SvmError::InvalidLabel(y));
        }
    }
    if labels.iter().all(|&y| y == labels[0]) {
        return Err(SvmError::SingleClass);
    }
    assert!(gamma > 0.0 && class_c.0 > 0.0 && class_c.1 > 0.0);

    let c_of = |i: usize| if labels[i] > 0.0 { class_c.0 } else { class_c.1 };

    // full kernel matrix; training sets here are small (hundreds)
    let mut kernel = vec![0f64; n * n];
    for i in 0..n {
        for j in i..n {
            let k = rbf_kernel(&points[i], &points[j], gamma);
            kernel[i * n + j] = k;
            kernel[j * n + i] = k;
        }
    }
    let k_at = |i: usize, j: usize| kernel[i * n + j];

    let mut alpha = vec![0f64; n];
    // f_i = sum_j alpha_j y_j K_ij, maintained incrementally
    let mut f = vec![0f64; n];

    let in_up = |i: usize, alpha: &[f64]| {
        (labels[i] > 0.0 && alpha[i] < c_of(i)) || (labels[i] < 0.0 && alpha[i] > 0.0)
    };
    let in_low = |i: usize, alpha: &[f64]| {
        (labels[i] > 0.0 && alpha[i] > 0.0) || (labels[i] < 0.0 && alpha[i] < c_of(i))
    };

    let max_iter = (100 * n).max(10_000);
    let mut iterations = 0;
    let mut gap;
    loop {
        // maximal violating pair on F_i = f_i - y_i
        let mut i_up = None;
        let mut b_up = f64::INFINITY;
        let mut i_low = None;
        let mut b_low = f64::NEG_INFINITY;
        for t in 0..n {
            let ft = f[t] - labels[t];
            if in_up(t, &alpha) && ft < b_up {
                b_up = ft;
                i_up = Some(t);
            }
            if in_low(t, &alpha) && ft > b_low {
                b_low = ft;
                i_low = Some(t);
            }
        }
        gap = b_low - b_up;
        let (Some(i), Some(j)) = (i_low, i_up) else { break };
        if gap <= 2.0 * SMO_TOLERANCE || iterations >= max_iter {
            break;
        }

        // two-variable analytic step on (i, j): optimize alpha_j, then
        // alpha_i follows from the equality constraint
        let (yi, yj) = (labels[i], labels[j]);
        let (ci, cj) = (c_of(i), c_of(j));
        let e_i = f[i] - yi;
        let e_j = f[j] - yj;
        let (lo, hi) = if yi != yj {
            let d = alpha[j] - alpha[i];
            (d.max(0.0), (ci + d).min(cj))
        } else {
            let s = alpha[i] + alpha[j];
            ((s - ci).max(0.0), s.min(cj))
        };
        let eta = k_at(i, i) + k_at(j, j) - 2.0 * k_at(i, j);
        let mut aj_new = alpha[j] + yj * (e_i - e_j) / eta.max(1e-12);
        aj_new = aj_new.clamp(lo, hi);
        let delta_j = aj_new - alpha[j];
        if delta_j.abs() < 1e-14 {
            // no progress possible on the worst pair (degenerate kernel
            // rows or box-saturated); stop rather than spin
            break;
        }
        let ai_new = alpha[i] - yi * yj * delta_j;
        let delta_i = ai_new - alpha[i];
        alpha[i] = ai_new;
        alpha[j] = aj_new;
        for t in 0..n {
            f[t] += delta_i * yi * k_at(i, t) + delta_j * yj * k_at(j, t);
        }
        iterations += 1;
    }

    // recompute b from the final violating bounds
    let mut b_up = f64::INFINITY;
    let mut b_low = f64::NEG_INFINITY;
    for t in 0..n {
        let ft = f[t] - labels[t];
        if in_up(t, &alpha) {
            b_up = b_up.min(ft);
        }
        if in_low(t, &alpha) {
            b_low = b_low.max(ft);
        }
    }
    let bias = -(b_up + b_low) / 2.0;

    // consistency of the incremental f against a fresh kernel expansion
    let mut f_consistency = 0f64;
    for t in 0..n {
        let fresh: f64 = (0..n).map(|s| alpha[s] * labels[s] * k_at(s, t)).sum();
        f_consistency = f_consistency.max((fresh - f[t]).abs());
    }

    let mut support_vectors = Vec::new();
    let mut dual_coeffs = Vec::new();
    for t in 0..n {
        if alpha[t] > 1e-12 {
            support_vectors.push(points[t].clone());
            dual_coeffs.push(alpha[t] * labels[t]);
        }
    }
    Ok((
        SvmModel {
            support_vectors,
            dual_coeffs,
            bias,
            gamma,
            c: class_c.0.max(class_c.1),
        },
        SmoStats {
            iterations,
            gap,
            f_consistency,
        },
    ))
}
