//! Objective functions, instantaneous losses and their exact gradients.
//!
//! Two families are covered: the l2-regularized logistic loss for binary
//! classification, `log(1 + exp(-y w.x)) + (lambda / 2n) ||w||^2`, and the
//! regularized squared factorization error for ratings,
//! `(r - q.p)^2 + lambda (||p||^2 + ||q||^2)`.
//!
//! All functions here are pure; gradients are analytic and are checked
//! against central finite differences in the test suite. The logistic terms
//! use the stable `log1p(exp(-|m|)) + max(-m, 0)` formulation so that no
//! finite margin can overflow.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::ParamVector;

/// One classification example: sparse features and a label in `{-1, +1}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledExample {
    indices: Vec<usize>,
    values: Vec<f64>,
    label: i8,
}

impl LabeledExample {
    /// Feature indices must be strictly increasing; the label must be +/-1.
    pub fn new(indices: Vec<usize>, values: Vec<f64>, label: i32) -> Result<Self> {
        if label != 1 && label != -1 {
            return Err(Error::contract(format!("label must be +1 or -1, got {label}")));
        }
        if indices.len() != values.len() {
            return Err(Error::contract("indices/values length mismatch".to_string()));
        }
        if indices.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::contract("feature indices must be strictly increasing".to_string()));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::contract("non-finite feature value".to_string()));
        }
        Ok(LabeledExample { indices, values, label: label as i8 })
    }

    pub fn label(&self) -> f64 {
        f64::from(self.label)
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn max_index(&self) -> Option<usize> {
        self.indices.last().copied()
    }

    /// `<w, x>` over the sparse support, accumulated in index order.
    pub fn dot(&self, w: &ParamVector) -> f64 {
        let wv = w.values();
        self.indices
            .iter()
            .zip(&self.values)
            .map(|(&i, &v)| wv[i] * v)
            .sum()
    }

    pub fn squared_norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum()
    }

    fn check_dim(&self, w: &ParamVector) -> Result<()> {
        if let Some(max) = self.max_index() {
            if max >= w.dim() {
                return Err(Error::contract(format!(
                    "feature index {max} out of range for dimension {}",
                    w.dim()
                )));
            }
        }
        Ok(())
    }
}

/// Regularization weight and global training size for the logistic loss.
/// `n_total` is the size of the *full* training set, so sharding the data
/// does not change the per-example regularizer `lambda / (2 n_total)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogisticLossSpec {
    pub lambda: f64,
    pub n_total: usize,
}

impl LogisticLossSpec {
    pub fn new(lambda: f64, n_total: usize) -> Result<Self> {
        if !(lambda >= 0.0) {
            return Err(Error::contract(format!("lambda must be >= 0, got {lambda}")));
        }
        if n_total == 0 {
            return Err(Error::contract("n_total must be >= 1".to_string()));
        }
        Ok(LogisticLossSpec { lambda, n_total })
    }

    fn reg_weight(&self) -> f64 {
        self.lambda / self.n_total as f64
    }
}

/// One observed rating `r_ui`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rating {
    pub user: usize,
    pub item: usize,
    pub value: f64,
}

/// Regularization weight and latent dimension for matrix factorization.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MfLossSpec {
    pub lambda: f64,
    pub k_latent: usize,
}

impl MfLossSpec {
    pub fn new(lambda: f64, k_latent: usize) -> Result<Self> {
        if !(lambda >= 0.0) {
            return Err(Error::contract(format!("lambda must be >= 0, got {lambda}")));
        }
        if k_latent == 0 {
            return Err(Error::contract("k_latent must be >= 1".to_string()));
        }
        Ok(MfLossSpec { lambda, k_latent })
    }
}

/// Upper bound on the smoothness constant of the shard objectives.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SmoothnessEstimate {
    pub l_bound: f64,
}

/// Stable `log(1 + exp(-m))`.
fn log1p_exp_neg(m: f64) -> f64 {
    (-m).max(0.0) + (-m.abs()).exp().ln_1p()
}

/// Logistic sigmoid of `-m`, i.e. `1 / (1 + exp(m))`. Saturates cleanly for
/// any finite `m` (overflowing `exp` yields +inf, hence exactly 0).
fn sigmoid_neg(m: f64) -> f64 {
    1.0 / (1.0 + m.exp())
}

/// Instantaneous l2-regularized logistic loss of one example.
pub fn logistic_loss(w: &ParamVector, ex: &LabeledExample, spec: &LogisticLossSpec) -> Result<f64> {
    ex.check_dim(w)?;
    let margin = ex.label() * ex.dot(w);
    Ok(log1p_exp_neg(margin) + 0.5 * spec.reg_weight() * w.norm_sq())
}

/// Mean gradient of the instantaneous loss over a batch:
/// `(1/|B|) sum_i [ -y_i x_i / (1 + exp(y_i <w, x_i>)) ] + (lambda/n) w`.
///
/// The sparse data terms are accumulated example by example in batch order,
/// the buffer is scaled by `1/|B|`, and the regularizer is added last; this
/// order is part of the determinism contract.
pub fn logistic_grad(
    w: &ParamVector,
    batch: &[LabeledExample],
    spec: &LogisticLossSpec,
) -> Result<ParamVector> {
    if batch.is_empty() {
        return Err(Error::contract("logistic_grad over an empty batch".to_string()));
    }
    let mut grad = ParamVector::zeros(w.dim());
    for ex in batch {
        ex.check_dim(w)?;
        let margin = ex.label() * ex.dot(w);
        let coef = -ex.label() * sigmoid_neg(margin);
        let g = grad.values_mut();
        for (&i, &v) in ex.indices().iter().zip(ex.values()) {
            g[i] += coef * v;
        }
    }
    grad.scale(1.0 / batch.len() as f64);
    grad.add_scaled(spec.reg_weight(), w);
    Ok(grad)
}

/// Full-shard average gradient, the anchor of the variance-reduced epoch.
pub fn shard_mean_gradient(
    w: &ParamVector,
    shard: &[LabeledExample],
    spec: &LogisticLossSpec,
) -> Result<ParamVector> {
    if shard.is_empty() {
        return Err(Error::contract("shard_mean_gradient over an empty shard".to_string()));
    }
    logistic_grad(w, shard, spec)
}

/// Mean logistic objective over the given examples (the global objective
/// when called on the full training set).
pub fn logistic_objective(
    w: &ParamVector,
    examples: &[LabeledExample],
    spec: &LogisticLossSpec,
) -> Result<f64> {
    if examples.is_empty() {
        return Err(Error::contract("objective over an empty dataset".to_string()));
    }
    let mut total = 0.0;
    for ex in examples {
        total += logistic_loss(w, ex, spec)?;
    }
    Ok(total / examples.len() as f64)
}

/// Instantaneous factorization loss of one observed rating.
pub fn mf_loss(p_u: &[f64], q_i: &[f64], r: f64, spec: &MfLossSpec) -> Result<f64> {
    if p_u.len() != q_i.len() {
        return Err(Error::contract(format!(
            "factor length mismatch: {} vs {}",
            p_u.len(),
            q_i.len()
        )));
    }
    let pred: f64 = p_u.iter().zip(q_i).map(|(a, b)| a * b).sum();
    let residual = r - pred;
    let reg: f64 = p_u.iter().map(|v| v * v).sum::<f64>() + q_i.iter().map(|v| v * v).sum::<f64>();
    Ok(residual * residual + spec.lambda * reg)
}

/// Exact gradient of [`mf_loss`] with respect to `(p_u, q_i)`:
/// `grad_p = -2 (r - <q,p>) q + 2 lambda p`, and symmetrically for `q`.
pub fn mf_grad(p_u: &[f64], q_i: &[f64], r: f64, spec: &MfLossSpec) -> Result<(Vec<f64>, Vec<f64>)> {
    if p_u.len() != q_i.len() {
        return Err(Error::contract(format!(
            "factor length mismatch: {} vs {}",
            p_u.len(),
            q_i.len()
        )));
    }
    let pred: f64 = p_u.iter().zip(q_i).map(|(a, b)| a * b).sum();
    let residual = r - pred;
    let grad_p: Vec<f64> = p_u
        .iter()
        .zip(q_i)
        .map(|(p, q)| -2.0 * residual * q + 2.0 * spec.lambda * p)
        .collect();
    let grad_q: Vec<f64> = p_u
        .iter()
        .zip(q_i)
        .map(|(p, q)| -2.0 * residual * p + 2.0 * spec.lambda * q)
        .collect();
    Ok((grad_p, grad_q))
}

/// Sum of [`mf_loss`] over the observed ratings (the factorization
/// objective is a sum, not a mean).
pub fn mf_objective(
    p: &crate::linalg::Matrix,
    q: &crate::linalg::Matrix,
    ratings: &[Rating],
    spec: &MfLossSpec,
) -> Result<f64> {
    if ratings.is_empty() {
        return Err(Error::contract("objective over an empty rating set".to_string()));
    }
    let mut total = 0.0;
    for r in ratings {
        total += mf_loss(p.row(r.user), q.row(r.item), r.value, spec)?;
    }
    Ok(total)
}

/// Upper bound on the smoothness constant of the logistic shard objectives:
/// `(1/4) max_i ||x_i||^2 + lambda / n_total`. The sigmoid curvature is at
/// most 1/4, so a step size of `1 / l_bound` always stays below `2 / L`.
pub fn estimate_smoothness(
    examples: &[LabeledExample],
    spec: &LogisticLossSpec,
) -> Result<SmoothnessEstimate> {
    if examples.is_empty() {
        return Err(Error::contract("smoothness estimate over an empty dataset".to_string()));
    }
    let max_norm_sq = examples
        .iter()
        .map(LabeledExample::squared_norm)
        .fold(0.0, f64::max);
    Ok(SmoothnessEstimate { l_bound: 0.25 * max_norm_sq + spec.reg_weight() })
}
