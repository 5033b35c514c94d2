//! Listwise, contrastive, and joint objectives with analytic gradients.
//!
//! The listwise loss is the cross entropy between two top-one ranking
//! distributions: `P` derived from relevance ratings through a
//! rank-discounted transform, and `Q` derived from cosine similarity
//! scores through a temperature-scaled softmax. The contrastive loss is
//! symmetric: a categorical cross entropy over each row (audio against
//! all captions) plus one over each column (caption against all audio)
//! of a batch similarity matrix. The joint objective is their convex
//! combination.
//!
//! All gradients here are with respect to the similarity inputs; the
//! model module chains them through the encoder parameters.

use ndarray::{Array1, Array2};

use crate::error::{Error, Result};

/// Bound-checking tolerance for similarity inputs, which are cosines and
/// may exceed [-1, 1] by rounding only.
const SIM_TOL: f64 = 1e-9;

/// Similarity scores of N candidate items against one query, each in [-1, 1].
#[derive(Debug, Clone, PartialEq)]
pub struct SimilarityVector(Array1<f64>);

impl SimilarityVector {
    /// Validates entries against [-1, 1] with tolerance 1e-9 and clamps
    /// rounding excursions back into range.
    pub fn new(values: Array1<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::record("similarity vector must be non-empty".to_string()));
        }
        let mut values = values;
        for (i, v) in values.iter_mut().enumerate() {
            if !v.is_finite() || v.abs() > 1.0 + SIM_TOL {
                return Err(Error::record(format!(
                    "similarity[{i}] = {v} outside [-1, 1]"
                )));
            }
            *v = v.clamp(-1.0, 1.0);
        }
        Ok(Self(values))
    }

    pub fn values(&self) -> &Array1<f64> {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// B x B similarity matrix for a batch of B positive pairs; entry (i, j)
/// is the similarity of audio i with caption j, so the targets sit on the
/// diagonal.
#[derive(Debug, Clone, PartialEq)]
pub struct SimilarityMatrix(Array2<f64>);

impl SimilarityMatrix {
    pub fn new(values: Array2<f64>) -> Result<Self> {
        if values.nrows() != values.ncols() {
            return Err(Error::DimensionMismatch {
                expected: values.nrows(),
                got: values.ncols(),
                context: "similarity matrix must be square".to_string(),
            });
        }
        if values.nrows() == 0 {
            return Err(Error::record("similarity matrix must be non-empty".to_string()));
        }
        let mut values = values;
        for ((i, j), v) in values.indexed_iter_mut() {
            if !v.is_finite() || v.abs() > 1.0 + SIM_TOL {
                return Err(Error::record(format!(
                    "similarity[{i}][{j}] = {v} outside [-1, 1]"
                )));
            }
            *v = v.clamp(-1.0, 1.0);
        }
        Ok(Self(values))
    }

    pub fn values(&self) -> &Array2<f64> {
        &self.0
    }

    /// Batch size B.
    pub fn batch_size(&self) -> usize {
        self.0.nrows()
    }
}

/// Hyperparameters of the three objectives.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct LossConfig {
    /// Temperature of the similarity-based top-one distribution.
    pub omega: f64,
    /// Contrastive softmax temperature.
    pub tau: f64,
    /// Joint mixing weight: `alpha * contrastive + (1 - alpha) * listwise`.
    pub alpha: f64,
}

impl Default for LossConfig {
    fn default() -> Self {
        Self {
            omega: 0.05,
            tau: 0.07,
            alpha: 0.5,
        }
    }
}

impl LossConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.omega.is_finite() && self.omega > 0.0) {
            return Err(Error::config(format!("omega must be > 0, got {}", self.omega)));
        }
        if !(self.tau.is_finite() && self.tau > 0.0) {
            return Err(Error::config(format!("tau must be > 0, got {}", self.tau)));
        }
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(Error::config(format!(
                "alpha must be in [0, 1], got {}",
                self.alpha
            )));
        }
        Ok(())
    }
}

/// A loss value together with its gradient with respect to the similarity
/// input that produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct LossValue<G> {
    pub value: f64,
    pub grad: G,
}

/// Joint loss over one listwise and one contrastive sub-loss, keeping each
/// branch's (already mixed) gradient on its own similarity input.
#[derive(Debug, Clone, PartialEq)]
pub struct JointLossValue {
    pub value: f64,
    pub infonce_grad: Array2<f64>,
    pub listnet_grad: Array1<f64>,
}

/// Competition ("1224") rank of each rating in the descending order:
/// `r_i = 1 + #{j : s_j > s_i}`, so ties share the minimal position.
pub fn rank_positions(ratings: &[f64]) -> Vec<usize> {
    ratings
        .iter()
        .map(|si| 1 + ratings.iter().filter(|sj| **sj > *si).count())
        .collect()
}

fn check_ratings(ratings: &[f64]) -> Result<()> {
    for (i, r) in ratings.iter().enumerate() {
        if !r.is_finite() || *r < 0.0 || *r > 100.0 {
            return Err(Error::record(format!("rating[{i}] = {r} outside [0, 100]")));
        }
    }
    Ok(())
}

/// Rank-discounted transform of one rating: `s / log2(rank + 1)`.
fn discount(rating: f64, rank: usize) -> f64 {
    rating / ((rank as f64) + 1.0).log2()
}

/// Top-one ranking distribution over items from their relevance ratings:
/// `p_i = phi(s_i) / sum_j phi(s_j)` with `phi(s) = s / log2(r(s) + 1)`.
///
/// Fails when all ratings are zero, which leaves the distribution
/// undefined.
pub fn top_one_p(ratings: &[f64]) -> Result<Vec<f64>> {
    check_ratings(ratings)?;
    let ranks = rank_positions(ratings);
    let phi: Vec<f64> = ratings
        .iter()
        .zip(&ranks)
        .map(|(&s, &r)| discount(s, r))
        .collect();
    let total: f64 = phi.iter().sum();
    if total <= 0.0 {
        return Err(Error::degenerate(
            "all ratings are zero; top-one distribution undefined".to_string(),
        ));
    }
    Ok(phi.into_iter().map(|f| f / total).collect())
}

/// Max-subtracted softmax of `logits`.
fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|&l| (l - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}

/// Top-one distribution over items from their similarity scores:
/// a temperature-scaled softmax `q_i = softmax(t_i / omega)`.
pub fn top_one_q(sims: &SimilarityVector, omega: f64) -> Result<Vec<f64>> {
    if !(omega.is_finite() && omega > 0.0) {
        return Err(Error::config(format!("omega must be > 0, got {omega}")));
    }
    let logits: Vec<f64> = sims.values().iter().map(|&t| t / omega).collect();
    Ok(softmax(&logits))
}

/// Listwise cross entropy `-sum_j p_j ln q_j` between the rating-derived
/// and similarity-derived top-one distributions, with the analytic
/// gradient `(q - p) / omega` with respect to the similarities.
pub fn listnet_loss(ratings: &[f64], sims: &SimilarityVector, omega: f64) -> Result<LossValue<Array1<f64>>> {
    if ratings.len() != sims.len() {
        return Err(Error::DimensionMismatch {
            expected: ratings.len(),
            got: sims.len(),
            context: "ratings vs similarity scores".to_string(),
        });
    }
    let p = top_one_p(ratings)?;
    let q = top_one_q(sims, omega)?;
    // ln q via the stabilized log-softmax so q_i near 0 stays finite when
    // p_i = 0 (0 * ln 0 never occurs: p_i = 0 terms are skipped).
    let logits: Vec<f64> = sims.values().iter().map(|&t| t / omega).collect();
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let log_z = logits.iter().map(|&l| (l - max).exp()).sum::<f64>().ln() + max;
    let value: f64 = p
        .iter()
        .zip(&logits)
        .filter(|(pi, _)| **pi > 0.0)
        .map(|(pi, &li)| -pi * (li - log_z))
        .sum();
    let grad = Array1::from_iter(p.iter().zip(&q).map(|(pi, qi)| (qi - pi) / omega));
    Ok(LossValue { value, grad })
}

/// Symmetric contrastive loss over a batch similarity matrix: the mean
/// over rows of a diagonal-target cross entropy plus the mean over
/// columns, each with temperature `tau`. The gradient is the analytic
/// softmax cross-entropy gradient of both directions, each scaled by
/// `1 / (B * tau)`.
pub fn infonce_loss(sims: &SimilarityMatrix, tau: f64) -> Result<LossValue<Array2<f64>>> {
    if !(tau.is_finite() && tau > 0.0) {
        return Err(Error::config(format!("tau must be > 0, got {tau}")));
    }
    let b = sims.batch_size();
    let s = sims.values();
    let mut value = 0.0;
    let mut grad = Array2::<f64>::zeros((b, b));
    let scale = 1.0 / (b as f64 * tau);

    // Audio direction: each row classifies its matching caption.
    for i in 0..b {
        let logits: Vec<f64> = (0..b).map(|j| s[[i, j]] / tau).collect();
        let probs = softmax(&logits);
        value += -(probs[i].ln()) / b as f64;
        for j in 0..b {
            let target = if i == j { 1.0 } else { 0.0 };
            grad[[i, j]] += scale * (probs[j] - target);
        }
    }

    // Caption direction: each column classifies its matching audio.
    for j in 0..b {
        let logits: Vec<f64> = (0..b).map(|i| s[[i, j]] / tau).collect();
        let probs = softmax(&logits);
        value += -(probs[j].ln()) / b as f64;
        for i in 0..b {
            let target = if i == j { 1.0 } else { 0.0 };
            grad[[i, j]] += scale * (probs[i] - target);
        }
    }

    // Cross entropy against a point target is non-negative; tiny negative
    // rounding residue is clipped.
    Ok(LossValue {
        value: value.max(0.0),
        grad,
    })
}

/// Convex combination of the two objectives:
/// `alpha * contrastive + (1 - alpha) * listwise`, with each branch's
/// gradient scaled by its mixing weight.
pub fn joint_loss(
    infonce: &LossValue<Array2<f64>>,
    listnet: &LossValue<Array1<f64>>,
    alpha: f64,
) -> Result<JointLossValue> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::config(format!("alpha must be in [0, 1], got {alpha}")));
    }
    Ok(JointLossValue {
        value: alpha * infonce.value + (1.0 - alpha) * listnet.value,
        infonce_grad: &infonce.grad * alpha,
        listnet_grad: &listnet.grad * (1.0 - alpha),
    })
}
