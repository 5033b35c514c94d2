//! Dual-encoder projection heads, cosine scoring with analytic backward,
//! Adam optimization, and the training loop with reduce-on-plateau
//! scheduling and early stopping.

use ndarray::{Array1, Array2};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::path::Path;

use crate::dataset::{FeatureTable, PairSet, RelevanceList, SplitSpec, Subset};
use crate::error::{Error, Result};
use crate::losses::{
    infonce_loss, listnet_loss, LossConfig, SimilarityMatrix, SimilarityVector,
};

/// One affine projection head: `W x + b`, no nonlinearity.
#[derive(Debug, Clone, PartialEq)]
pub struct ProjectionHead {
    /// `d_out x d_in`.
    pub weights: Array2<f64>,
    pub bias: Array1<f64>,
}

impl ProjectionHead {
    pub fn d_in(&self) -> usize {
        self.weights.ncols()
    }

    pub fn d_out(&self) -> usize {
        self.weights.nrows()
    }

    /// Seeded initialization: all parameters uniform in `±1/sqrt(d_in)`.
    pub fn init(d_in: usize, d_out: usize, rng: &mut ChaCha8Rng) -> Self {
        let bound = 1.0 / (d_in as f64).sqrt();
        let weights = Array2::from_shape_fn((d_out, d_in), |_| rng.gen_range(-bound..bound));
        let bias = Array1::from_shape_fn(d_out, |_| rng.gen_range(-bound..bound));
        Self { weights, bias }
    }

    /// Affine map of one feature vector.
    pub fn embed(&self, features: &[f64]) -> Result<Array1<f64>> {
        if features.len() != self.d_in() {
            return Err(Error::DimensionMismatch {
                expected: self.d_in(),
                got: features.len(),
                context: "projection head input".to_string(),
            });
        }
        let x = ndarray::ArrayView1::from(features);
        Ok(self.weights.dot(&x) + &self.bias)
    }

    /// Embeds a stack of rows at once; `rows` is `n x d_in`.
    fn embed_batch(&self, rows: &Array2<f64>) -> Result<Array2<f64>> {
        if rows.ncols() != self.d_in() {
            return Err(Error::DimensionMismatch {
                expected: self.d_in(),
                got: rows.ncols(),
                context: "projection head batch input".to_string(),
            });
        }
        Ok(rows.dot(&self.weights.t()) + &self.bias)
    }
}

/// Two projection heads mapping modality features into a shared space.
#[derive(Debug, Clone, PartialEq)]
pub struct DualEncoder {
    pub audio_head: ProjectionHead,
    pub text_head: ProjectionHead,
}

impl DualEncoder {
    pub fn init(audio_d_in: usize, text_d_in: usize, d_out: usize, rng: &mut ChaCha8Rng) -> Self {
        let audio_head = ProjectionHead::init(audio_d_in, d_out, rng);
        let text_head = ProjectionHead::init(text_d_in, d_out, rng);
        Self {
            audio_head,
            text_head,
        }
    }

    pub fn embed_dim(&self) -> usize {
        self.audio_head.d_out()
    }

    /// Cosine similarity of one (audio, caption) feature pair.
    pub fn score_pair(&self, audio: &[f64], caption: &[f64]) -> Result<f64> {
        let u = self.audio_head.embed(audio)?;
        let v = self.text_head.embed(caption)?;
        cosine(u.as_slice().unwrap(), v.as_slice().unwrap())
    }

    /// All pairwise cosines of projected embeddings, with a cache that
    /// supports the backward pass. `audio_rows` is `n_a x d_in_audio`,
    /// `caption_rows` is `n_c x d_in_text`; the result is `n_a x n_c`.
    pub fn score_batch(&self, audio_rows: Array2<f64>, caption_rows: Array2<f64>) -> Result<BatchScore> {
        let audio_e = self.audio_head.embed_batch(&audio_rows)?;
        let text_e = self.text_head.embed_batch(&caption_rows)?;
        let audio_norms: Vec<f64> = audio_e
            .rows()
            .into_iter()
            .map(|r| r.dot(&r).sqrt())
            .collect();
        let text_norms: Vec<f64> = text_e.rows().into_iter().map(|r| r.dot(&r).sqrt()).collect();
        for (i, n) in audio_norms.iter().enumerate() {
            if *n <= 0.0 {
                return Err(Error::degenerate(format!(
                    "audio embedding {i} has zero norm"
                )));
            }
        }
        for (j, n) in text_norms.iter().enumerate() {
            if *n <= 0.0 {
                return Err(Error::degenerate(format!("text embedding {j} has zero norm")));
            }
        }
        let raw = audio_e.dot(&text_e.t());
        let mut sims = raw.clone();
        for ((i, j), v) in sims.indexed_iter_mut() {
            *v = (*v / (audio_norms[i] * text_norms[j])).clamp(-1.0, 1.0);
        }
        Ok(BatchScore {
            audio_x: audio_rows,
            text_x: caption_rows,
            audio_e,
            text_e,
            audio_norms,
            text_norms,
            sims,
        })
    }
}

/// Forward cache of [`DualEncoder::score_batch`].
#[derive(Debug, Clone)]
pub struct BatchScore {
    audio_x: Array2<f64>,
    text_x: Array2<f64>,
    audio_e: Array2<f64>,
    text_e: Array2<f64>,
    audio_norms: Vec<f64>,
    text_norms: Vec<f64>,
    /// `n_a x n_c` cosine matrix.
    pub sims: Array2<f64>,
}

impl BatchScore {
    /// Chains `d_loss/d_sims` back to parameter gradients of both heads.
    pub fn backward(&self, d_sims: &Array2<f64>) -> EncoderGrads {
        let (n_a, n_c) = self.sims.dim();
        let d_out = self.audio_e.ncols();
        let mut d_audio_e = Array2::<f64>::zeros((n_a, d_out));
        let mut d_text_e = Array2::<f64>::zeros((n_c, d_out));

        for i in 0..n_a {
            let nu = self.audio_norms[i];
            for j in 0..n_c {
                let g = d_sims[[i, j]];
                if g == 0.0 {
                    continue;
                }
                let nv = self.text_norms[j];
                let s = self.sims[[i, j]];
                let inv = 1.0 / (nu * nv);
                for k in 0..d_out {
                    let u = self.audio_e[[i, k]];
                    let v = self.text_e[[j, k]];
                    d_audio_e[[i, k]] += g * (v * inv - s * u / (nu * nu));
                    d_text_e[[j, k]] += g * (u * inv - s * v / (nv * nv));
                }
            }
        }

        EncoderGrads {
            audio_w: d_audio_e.t().dot(&self.audio_x),
            audio_b: d_audio_e.sum_axis(ndarray::Axis(0)),
            text_w: d_text_e.t().dot(&self.text_x),
            text_b: d_text_e.sum_axis(ndarray::Axis(0)),
        }
    }
}

/// Parameter gradients for both projection heads.
#[derive(Debug, Clone)]
pub struct EncoderGrads {
    pub audio_w: Array2<f64>,
    pub audio_b: Array1<f64>,
    pub text_w: Array2<f64>,
    pub text_b: Array1<f64>,
}

/// Cosine similarity, clamped to [-1, 1] against rounding. Zero-norm
/// inputs are an error: a head collapsing to zero is a pathology worth
/// surfacing, not a value to invent.
pub fn cosine(u: &[f64], v: &[f64]) -> Result<f64> {
    if u.len() != v.len() {
        return Err(Error::DimensionMismatch {
            expected: u.len(),
            got: v.len(),
            context: "cosine inputs".to_string(),
        });
    }
    let nu = u.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nv = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if nu <= 0.0 || nv <= 0.0 {
        return Err(Error::degenerate("cosine of a zero-norm vector".to_string()));
    }
    let dot: f64 = u.iter().zip(v).map(|(a, b)| a * b).sum();
    Ok((dot / (nu * nv)).clamp(-1.0, 1.0))
}

const ADAM_BETA1: f64 = 0.9;
const ADAM_BETA2: f64 = 0.999;
const ADAM_EPS: f64 = 1e-8;

/// Adam moment estimates over one flat parameter vector.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    m: Vec<f64>,
    v: Vec<f64>,
    t: u64,
}

impl AdamState {
    pub fn new(n_params: usize) -> Self {
        Self {
            m: vec![0.0; n_params],
            v: vec![0.0; n_params],
            t: 0,
        }
    }
}

/// One Adam update with beta1 = 0.9, beta2 = 0.999, eps = 1e-8.
pub fn adam_step(params: &mut [f64], grads: &[f64], state: &mut AdamState, lr: f64) -> Result<()> {
    if params.len() != grads.len() || params.len() != state.m.len() {
        return Err(Error::DimensionMismatch {
            expected: params.len(),
            got: grads.len(),
            context: "adam parameters vs gradients".to_string(),
        });
    }
    state.t += 1;
    let bc1 = 1.0 - ADAM_BETA1.powi(state.t as i32);
    let bc2 = 1.0 - ADAM_BETA2.powi(state.t as i32);
    for i in 0..params.len() {
        let g = grads[i];
        state.m[i] = ADAM_BETA1 * state.m[i] + (1.0 - ADAM_BETA1) * g;
        state.v[i] = ADAM_BETA2 * state.v[i] + (1.0 - ADAM_BETA2) * g * g;
        let m_hat = state.m[i] / bc1;
        let v_hat = state.v[i] / bc2;
        params[i] -= lr * m_hat / (v_hat.sqrt() + ADAM_EPS);
    }
    Ok(())
}

/// Which objective drives training.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LossMode {
    ListNet,
    InfoNce,
    Joint,
}

impl std::str::FromStr for LossMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "listnet" => Ok(LossMode::ListNet),
            "infonce" => Ok(LossMode::InfoNce),
            "joint" => Ok(LossMode::Joint),
            other => Err(Error::config(format!(
                "unknown loss mode {other:?} (expected listnet, infonce, or joint)"
            ))),
        }
    }
}

impl std::fmt::Display for LossMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            LossMode::ListNet => "listnet",
            LossMode::InfoNce => "infonce",
            LossMode::Joint => "joint",
        };
        f.write_str(s)
    }
}

/// Full training configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub loss_mode: LossMode,
    pub omega: f64,
    pub tau: f64,
    pub alpha: f64,
    /// Initial learning rate.
    pub lr0: f64,
    /// Epochs without validation improvement before the learning rate is
    /// divided by `lr_factor`.
    pub plateau_patience: usize,
    pub lr_factor: f64,
    /// Epochs without validation improvement before training stops.
    pub stop_patience: usize,
    pub max_epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub embed_dim: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            loss_mode: LossMode::Joint,
            omega: 0.05,
            tau: 0.07,
            alpha: 0.5,
            lr0: 0.001,
            plateau_patience: 5,
            lr_factor: 10.0,
            stop_patience: 10,
            max_epochs: 100,
            batch_size: 32,
            seed: 0,
            embed_dim: 300,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        self.loss_config().validate()?;
        if !(self.lr0.is_finite() && self.lr0 > 0.0) {
            return Err(Error::config(format!("lr0 must be > 0, got {}", self.lr0)));
        }
        if self.plateau_patience < 1 || self.stop_patience < 1 {
            return Err(Error::config("patience values must be >= 1".to_string()));
        }
        if !(self.lr_factor.is_finite() && self.lr_factor > 1.0) {
            return Err(Error::config(format!(
                "lr_factor must be > 1, got {}",
                self.lr_factor
            )));
        }
        if self.batch_size < 1 {
            return Err(Error::config("batch_size must be >= 1".to_string()));
        }
        if self.embed_dim < 1 {
            return Err(Error::config("embed_dim must be >= 1".to_string()));
        }
        Ok(())
    }

    pub fn loss_config(&self) -> LossConfig {
        LossConfig {
            omega: self.omega,
            tau: self.tau,
            alpha: self.alpha,
        }
    }
}

/// Why training ended.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    MaxEpochs,
    EarlyStopped,
}

/// Per-epoch history of a training run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub train_loss: Vec<f64>,
    pub val_loss: Vec<f64>,
    /// Learning rate in effect during each epoch.
    pub lr_history: Vec<f64>,
    /// 1-based epoch of the best validation loss; 0 when no epoch ran.
    pub best_epoch: usize,
    pub final_lr: f64,
    pub stop_reason: StopReason,
}

/// Input bundle for [`train`]. Lists are required for the listwise modes,
/// pairs for the contrastive modes; joint needs both.
pub struct TrainData<'a> {
    pub audio: &'a FeatureTable,
    pub captions: &'a FeatureTable,
    pub pairs: Option<&'a PairSet>,
    pub lists: Option<&'a [RelevanceList]>,
    pub split: &'a SplitSpec,
}

fn gather_rows(table: &FeatureTable, ids: &[&str], context: &str) -> Result<Array2<f64>> {
    let mut rows = Array2::<f64>::zeros((ids.len(), table.dimension()));
    for (r, id) in ids.iter().enumerate() {
        let features = table.require(id, context)?;
        rows.row_mut(r).assign(&ndarray::ArrayView1::from(features));
    }
    Ok(rows)
}

struct FlatParams;

impl FlatParams {
    fn len(enc: &DualEncoder) -> usize {
        enc.audio_head.weights.len()
            + enc.audio_head.bias.len()
            + enc.text_head.weights.len()
            + enc.text_head.bias.len()
    }

    fn pack(enc: &DualEncoder) -> Vec<f64> {
        let mut flat = Vec::with_capacity(Self::len(enc));
        flat.extend(enc.audio_head.weights.iter());
        flat.extend(enc.audio_head.bias.iter());
        flat.extend(enc.text_head.weights.iter());
        flat.extend(enc.text_head.bias.iter());
        flat
    }

    fn unpack(enc: &mut DualEncoder, flat: &[f64]) {
        let mut it = flat.iter();
        for w in enc.audio_head.weights.iter_mut() {
            *w = *it.next().unwrap();
        }
        for b in enc.audio_head.bias.iter_mut() {
            *b = *it.next().unwrap();
        }
        for w in enc.text_head.weights.iter_mut() {
            *w = *it.next().unwrap();
        }
        for b in enc.text_head.bias.iter_mut() {
            *b = *it.next().unwrap();
        }
    }

    fn accumulate(acc: &mut [f64], grads: &EncoderGrads, scale: f64) {
        let mut k = 0;
        for g in grads
            .audio_w
            .iter()
            .chain(grads.audio_b.iter())
            .chain(grads.text_w.iter())
            .chain(grads.text_b.iter())
        {
            acc[k] += scale * g;
            k += 1;
        }
    }
}

/// One contrastive batch: aligned positive-audio and caption feature rows.
fn infonce_batch(
    enc: &DualEncoder,
    data: &TrainData,
    caption_ids: &[&str],
) -> Result<(BatchScore, SimilarityMatrix)> {
    let pairs = data.pairs.expect("checked by caller");
    let mut audio_ids = Vec::with_capacity(caption_ids.len());
    for cid in caption_ids {
        let aid = pairs.positive_of(cid).ok_or_else(|| Error::MissingId {
            id: cid.to_string(),
            context: "caption has no positive pair".to_string(),
        })?;
        audio_ids.push(aid);
    }
    let audio_rows = gather_rows(data.audio, &audio_ids, "audio features for contrastive batch")?;
    let caption_rows = gather_rows(data.captions, caption_ids, "caption features for contrastive batch")?;
    let score = enc.score_batch(audio_rows, caption_rows)?;
    let sims = SimilarityMatrix::new(score.sims.clone())?;
    Ok((score, sims))
}

/// Scores one relevance list: N audio items against its caption.
fn list_score(enc: &DualEncoder, data: &TrainData, list: &RelevanceList) -> Result<(BatchScore, SimilarityVector)> {
    let audio_ids: Vec<&str> = list.items.iter().map(|(a, _)| a.as_str()).collect();
    let audio_rows = gather_rows(data.audio, &audio_ids, "audio features for relevance list")?;
    let caption_rows = gather_rows(
        data.captions,
        &[list.caption_id.as_str()],
        "caption features for relevance list",
    )?;
    let score = enc.score_batch(audio_rows, caption_rows)?;
    let sims = SimilarityVector::new(score.sims.column(0).to_owned())?;
    Ok((score, sims))
}

fn listnet_validation(enc: &DualEncoder, data: &TrainData, lists: &[&RelevanceList], omega: f64) -> Result<f64> {
    let mut total = 0.0;
    for list in lists {
        let (_, sims) = list_score(enc, data, list)?;
        total += listnet_loss(&list.ratings(), &sims, omega)?.value;
    }
    Ok(total / lists.len() as f64)
}

fn infonce_validation(
    enc: &DualEncoder,
    data: &TrainData,
    caption_ids: &[&str],
    batch_size: usize,
    tau: f64,
) -> Result<f64> {
    let mut total = 0.0;
    let mut weight = 0.0;
    for chunk in caption_ids.chunks(batch_size) {
        let (_, sims) = infonce_batch(enc, data, chunk)?;
        let b = chunk.len() as f64;
        total += infonce_loss(&sims, tau)?.value * b;
        weight += b;
    }
    Ok(total / weight)
}

/// Trains a dual encoder on the configured objective.
///
/// Deterministic given (data, config): initialization, shuffling, and
/// batching all derive from `config.seed`. The learning rate is divided by
/// `lr_factor` after `plateau_patience` consecutive epochs without
/// validation improvement, training stops after `stop_patience` such
/// epochs, and the returned encoder holds the parameters of the best
/// validation epoch.
pub fn train(data: &TrainData, config: &TrainConfig) -> Result<(DualEncoder, TrainReport)> {
    config.validate()?;

    let needs_lists = matches!(config.loss_mode, LossMode::ListNet | LossMode::Joint);
    let needs_pairs = matches!(config.loss_mode, LossMode::InfoNce | LossMode::Joint);

    let lists = if needs_lists {
        let lists = data.lists.ok_or_else(|| {
            Error::config(format!(
                "loss mode {} requires relevance lists (ratings data)",
                config.loss_mode
            ))
        })?;
        if lists.is_empty() {
            return Err(Error::config("relevance list data is empty".to_string()));
        }
        Some(lists)
    } else {
        None
    };
    let pairs = if needs_pairs {
        let pairs = data.pairs.ok_or_else(|| {
            Error::config(format!(
                "loss mode {} requires binary pairs data",
                config.loss_mode
            ))
        })?;
        if pairs.is_empty() {
            return Err(Error::config("pairs data is empty".to_string()));
        }
        Some(pairs)
    } else {
        None
    };

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut enc = DualEncoder::init(
        data.audio.dimension(),
        data.captions.dimension(),
        config.embed_dim,
        &mut rng,
    );

    let mut report = TrainReport {
        train_loss: Vec::new(),
        val_loss: Vec::new(),
        lr_history: Vec::new(),
        best_epoch: 0,
        final_lr: config.lr0,
        stop_reason: StopReason::MaxEpochs,
    };
    if config.max_epochs == 0 {
        return Ok((enc, report));
    }

    // Train/validation partitions per stream, in deterministic data order.
    let train_lists: Vec<&RelevanceList> = lists
        .map(|ls| {
            ls.iter()
                .filter(|l| data.split.subset_of(&l.caption_id) == Some(Subset::Development))
                .collect()
        })
        .unwrap_or_default();
    let val_lists: Vec<&RelevanceList> = lists
        .map(|ls| {
            ls.iter()
                .filter(|l| data.split.subset_of(&l.caption_id) == Some(Subset::Validation))
                .collect()
        })
        .unwrap_or_default();
    let train_pair_captions: Vec<&str> = pairs
        .map(|ps| {
            ps.iter()
                .map(|(c, _)| c)
                .filter(|c| data.split.subset_of(c) == Some(Subset::Development))
                .collect()
        })
        .unwrap_or_default();
    let val_pair_captions: Vec<&str> = pairs
        .map(|ps| {
            ps.iter()
                .map(|(c, _)| c)
                .filter(|c| data.split.subset_of(c) == Some(Subset::Validation))
                .collect()
        })
        .unwrap_or_default();

    if needs_lists && (train_lists.is_empty() || val_lists.is_empty()) {
        return Err(Error::config(
            "development and validation splits must both contain rated captions".to_string(),
        ));
    }
    if needs_pairs && (train_pair_captions.is_empty() || val_pair_captions.is_empty()) {
        return Err(Error::config(
            "development and validation splits must both contain paired captions".to_string(),
        ));
    }

    let n_params = FlatParams::len(&enc);
    let mut params = FlatParams::pack(&enc);
    let mut adam = AdamState::new(n_params);
    let mut lr = config.lr0;

    let mut best_val = f64::INFINITY;
    let mut best_params = params.clone();
    let mut stagnant = 0usize;
    let mut plateau = 0usize;

    for epoch in 1..=config.max_epochs {
        report.lr_history.push(lr);

        // Shuffle each training stream for this epoch.
        let mut list_order: Vec<usize> = (0..train_lists.len()).collect();
        let mut pair_order: Vec<usize> = (0..train_pair_captions.len()).collect();
        if needs_lists {
            list_order.shuffle(&mut rng);
        }
        if needs_pairs {
            pair_order.shuffle(&mut rng);
        }

        let list_chunks: Vec<&[usize]> = list_order.chunks(config.batch_size).collect();
        let pair_chunks: Vec<&[usize]> = pair_order.chunks(config.batch_size).collect();
        let n_steps = match config.loss_mode {
            LossMode::ListNet => list_chunks.len(),
            LossMode::InfoNce => pair_chunks.len(),
            LossMode::Joint => list_chunks.len().max(pair_chunks.len()),
        };

        let mut epoch_loss = 0.0;
        for step in 0..n_steps {
            FlatParams::unpack(&mut enc, &params);
            let mut grad_acc = vec![0.0f64; n_params];
            let mut step_loss = 0.0;

            let (inf_weight, list_weight) = match config.loss_mode {
                LossMode::ListNet => (0.0, 1.0),
                LossMode::InfoNce => (1.0, 0.0),
                LossMode::Joint => (config.alpha, 1.0 - config.alpha),
            };

            if needs_pairs && inf_weight > 0.0 {
                let chunk = pair_chunks[step % pair_chunks.len()];
                let ids: Vec<&str> = chunk.iter().map(|&i| train_pair_captions[i]).collect();
                let (score, sims) = infonce_batch(&enc, data, &ids)?;
                let loss = infonce_loss(&sims, config.tau)?;
                step_loss += inf_weight * loss.value;
                let d_sims = &loss.grad * inf_weight;
                let grads = score.backward(&d_sims);
                FlatParams::accumulate(&mut grad_acc, &grads, 1.0);
            }

            if needs_lists && list_weight > 0.0 {
                let chunk = list_chunks[step % list_chunks.len()];
                let inv = 1.0 / chunk.len() as f64;
                let mut branch_loss = 0.0;
                for &idx in chunk {
                    let list = train_lists[idx];
                    let (score, sims) = list_score(&enc, data, list)?;
                    let loss = listnet_loss(&list.ratings(), &sims, config.omega)?;
                    branch_loss += loss.value * inv;
                    let d_sims = loss
                        .grad
                        .insert_axis(ndarray::Axis(1))
                        .mapv(|g| g * inv * list_weight);
                    let grads = score.backward(&d_sims);
                    FlatParams::accumulate(&mut grad_acc, &grads, 1.0);
                }
                step_loss += list_weight * branch_loss;
            }

            adam_step(&mut params, &grad_acc, &mut adam, lr)?;
            epoch_loss += step_loss;
        }
        report.train_loss.push(epoch_loss / n_steps as f64);

        // Validation on the monitored objective, in fixed order.
        FlatParams::unpack(&mut enc, &params);
        let val = match config.loss_mode {
            LossMode::ListNet => listnet_validation(&enc, data, &val_lists, config.omega)?,
            LossMode::InfoNce => {
                infonce_validation(&enc, data, &val_pair_captions, config.batch_size, config.tau)?
            }
            LossMode::Joint => {
                let inf =
                    infonce_validation(&enc, data, &val_pair_captions, config.batch_size, config.tau)?;
                let lst = listnet_validation(&enc, data, &val_lists, config.omega)?;
                config.alpha * inf + (1.0 - config.alpha) * lst
            }
        };
        report.val_loss.push(val);

        if val < best_val {
            best_val = val;
            best_params.copy_from_slice(&params);
            report.best_epoch = epoch;
            stagnant = 0;
            plateau = 0;
        } else {
            stagnant += 1;
            plateau += 1;
            if stagnant >= config.stop_patience {
                report.stop_reason = StopReason::EarlyStopped;
                break;
            }
            if plateau >= config.plateau_patience {
                lr /= config.lr_factor;
                plateau = 0;
            }
        }
    }

    report.final_lr = lr;
    FlatParams::unpack(&mut enc, &best_params);
    Ok((enc, report))
}

const CHECKPOINT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct HeadDump {
    d_in: usize,
    d_out: usize,
    /// Row-major `d_out x d_in`.
    weights: Vec<f64>,
    bias: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct CheckpointDump {
    version: u32,
    config: TrainConfig,
    audio_head: HeadDump,
    text_head: HeadDump,
}

fn dump_head(head: &ProjectionHead) -> HeadDump {
    HeadDump {
        d_in: head.d_in(),
        d_out: head.d_out(),
        weights: head.weights.iter().copied().collect(),
        bias: head.bias.to_vec(),
    }
}

fn restore_head(dump: HeadDump) -> Result<ProjectionHead> {
    let weights = Array2::from_shape_vec((dump.d_out, dump.d_in), dump.weights)
        .map_err(|e| Error::record(format!("checkpoint weight shape: {e}")))?;
    if dump.bias.len() != dump.d_out {
        return Err(Error::record(format!(
            "checkpoint bias length {} does not match d_out {}",
            dump.bias.len(),
            dump.d_out
        )));
    }
    Ok(ProjectionHead {
        weights,
        bias: Array1::from_vec(dump.bias),
    })
}

/// Writes a versioned JSON checkpoint of both heads and the config that
/// produced them.
pub fn save_checkpoint(path: &Path, enc: &DualEncoder, config: &TrainConfig) -> Result<()> {
    let dump = CheckpointDump {
        version: CHECKPOINT_VERSION,
        config: config.clone(),
        audio_head: dump_head(&enc.audio_head),
        text_head: dump_head(&enc.text_head),
    };
    let json = serde_json::to_string_pretty(&dump)
        .map_err(|e| Error::record(format!("checkpoint serialization: {e}")))?;
    std::fs::write(path, json).map_err(|e| Error::io(path, e))
}

/// Loads a checkpoint written by [`save_checkpoint`].
pub fn load_checkpoint(path: &Path) -> Result<(DualEncoder, TrainConfig)> {
    let json = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let dump: CheckpointDump =
        serde_json::from_str(&json).map_err(|e| Error::parse(path, None, e.to_string()))?;
    if dump.version != CHECKPOINT_VERSION {
        return Err(Error::parse(
            path,
            None,
            format!("unsupported checkpoint version {}", dump.version),
        ));
    }
    let enc = DualEncoder {
        audio_head: restore_head(dump.audio_head)?,
        text_head: restore_head(dump.text_head)?,
    };
    if enc.audio_head.d_out() != enc.text_head.d_out() {
        return Err(Error::parse(
            path,
            None,
            "audio and text heads disagree on embedding dimension".to_string(),
        ));
    }
    Ok((enc, dump.config))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use ndarray::arr2;

    #[test]
    fn embed_identity_head() {
        let head = ProjectionHead {
            weights: Array2::eye(3),
            bias: Array1::zeros(3),
        };
        let y = head.embed(&[1.0, -2.0, 0.5]).unwrap();
        assert_eq!(y.to_vec(), vec![1.0, -2.0, 0.5]);
    }

    #[test]
    fn embed_constant_head() {
        let head = ProjectionHead {
            weights: Array2::zeros((2, 3)),
            bias: Array1::from_vec(vec![7.0, -1.0]),
        };
        let y = head.embed(&[9.0, 9.0, 9.0]).unwrap();
        assert_eq!(y.to_vec(), vec![7.0, -1.0]);
    }

    #[test]
    fn embed_matches_naive_triple_loop() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let head = ProjectionHead::init(5, 3, &mut rng);
        let x: Vec<f64> = (0..5).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let y = head.embed(&x).unwrap();
        for i in 0..3 {
            let mut expect = head.bias[i];
            for j in 0..5 {
                expect += head.weights[[i, j]] * x[j];
            }
            assert_abs_diff_eq!(y[i], expect, epsilon = 1e-12);
        }
    }

    #[test]
    fn embed_rejects_dimension_mismatch() {
        let head = ProjectionHead {
            weights: Array2::eye(3),
            bias: Array1::zeros(3),
        };
        assert!(head.embed(&[1.0, 2.0]).is_err());
    }

    #[test]
    fn cosine_basics() {
        assert_abs_diff_eq!(cosine(&[1.0, 2.0], &[1.0, 2.0]).unwrap(), 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(cosine(&[1.0, 0.0], &[0.0, 3.0]).unwrap(), 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(cosine(&[1.0, 2.0], &[2.0, 1.0]).unwrap(), 0.8, epsilon = 1e-15);
        assert!(cosine(&[0.0, 0.0], &[1.0, 0.0]).is_err());
    }

    #[test]
    fn score_batch_single_pair_matches_score_pair() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let enc = DualEncoder::init(4, 6, 3, &mut rng);
        let a: Vec<f64> = (0..4).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let c: Vec<f64> = (0..6).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let score = enc
            .score_batch(
                Array2::from_shape_vec((1, 4), a.clone()).unwrap(),
                Array2::from_shape_vec((1, 6), c.clone()).unwrap(),
            )
            .unwrap();
        assert_abs_diff_eq!(
            score.sims[[0, 0]],
            enc.score_pair(&a, &c).unwrap(),
            epsilon = 1e-12
        );
    }

    #[test]
    fn score_batch_duplicated_audio_row_duplicates_sims_row() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let enc = DualEncoder::init(3, 3, 2, &mut rng);
        let a = arr2(&[[1.0, 0.5, -0.2], [1.0, 0.5, -0.2], [0.3, 0.3, 0.9]]);
        let c = arr2(&[[0.1, 0.2, 0.3], [0.9, -0.5, 0.0]]);
        let score = enc.score_batch(a, c).unwrap();
        for j in 0..2 {
            assert_eq!(score.sims[[0, j]], score.sims[[1, j]]);
        }
    }

    #[test]
    fn adam_zero_grad_leaves_params_unchanged() {
        let mut params = vec![0.5, -0.25, 3.0];
        let mut state = AdamState::new(3);
        for _ in 0..10 {
            adam_step(&mut params, &[0.0, 0.0, 0.0], &mut state, 0.01).unwrap();
        }
        assert_eq!(params, vec![0.5, -0.25, 3.0]);
    }

    #[test]
    fn adam_matches_reference_single_step() {
        // reference: m = (1-b1) g, v = (1-b2) g^2, mh = g, vh = g^2
        // update = lr * g / (|g| + eps)
        let g = 0.37;
        let lr = 0.05;
        let mut params = vec![1.0];
        let mut state = AdamState::new(1);
        adam_step(&mut params, &[g], &mut state, lr).unwrap();
        let expected = 1.0 - lr * g / (g.abs() + 1e-8);
        assert_abs_diff_eq!(params[0], expected, epsilon = 1e-12);
    }

    #[test]
    fn adam_is_deterministic() {
        let grads = [0.1, -0.2, 0.05];
        let run = || {
            let mut params = vec![0.3, 0.6, -0.9];
            let mut state = AdamState::new(3);
            for _ in 0..5 {
                adam_step(&mut params, &grads, &mut state, 0.01).unwrap();
            }
            params
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn checkpoint_round_trips_exactly() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let enc = DualEncoder::init(7, 5, 4, &mut rng);
        let config = TrainConfig::default();
        let file = tempfile::NamedTempFile::new().unwrap();
        save_checkpoint(file.path(), &enc, &config).unwrap();
        let (loaded, loaded_config) = load_checkpoint(file.path()).unwrap();
        assert_eq!(loaded, enc);
        assert_eq!(loaded_config, config);
    }

    fn tiny_data() -> (crate::dataset::SyntheticData, SplitSpec) {
        let data = crate::dataset::generate_synthetic(5, 12, 20, 6, 4, 0.1).unwrap();
        let split = crate::dataset::split_captions(data.captions.ids(), 1, 0.5, 0.25).unwrap();
        (data, split)
    }

    #[test]
    fn train_zero_epochs_returns_initialized_encoder() {
        let (data, split) = tiny_data();
        let config = TrainConfig {
            max_epochs: 0,
            embed_dim: 4,
            ..TrainConfig::default()
        };
        let train_data = TrainData {
            audio: &data.audio,
            captions: &data.captions,
            pairs: Some(&data.pairs),
            lists: Some(&data.lists),
            split: &split,
        };
        let (enc, report) = train(&train_data, &config).unwrap();
        assert!(report.train_loss.is_empty());
        assert_eq!(report.best_epoch, 0);
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let expected = DualEncoder::init(6, 6, 4, &mut rng);
        assert_eq!(enc, expected);
    }

    #[test]
    fn train_is_bit_for_bit_deterministic() {
        let (data, split) = tiny_data();
        let config = TrainConfig {
            max_epochs: 4,
            embed_dim: 4,
            batch_size: 4,
            ..TrainConfig::default()
        };
        let train_data = TrainData {
            audio: &data.audio,
            captions: &data.captions,
            pairs: Some(&data.pairs),
            lists: Some(&data.lists),
            split: &split,
        };
        let (enc_a, rep_a) = train(&train_data, &config).unwrap();
        let (enc_b, rep_b) = train(&train_data, &config).unwrap();
        assert_eq!(enc_a, enc_b);
        assert_eq!(rep_a, rep_b);
    }

    #[test]
    fn train_listnet_requires_lists() {
        let (data, split) = tiny_data();
        let config = TrainConfig {
            loss_mode: LossMode::ListNet,
            max_epochs: 1,
            embed_dim: 4,
            ..TrainConfig::default()
        };
        let train_data = TrainData {
            audio: &data.audio,
            captions: &data.captions,
            pairs: Some(&data.pairs),
            lists: None,
            split: &split,
        };
        let err = train(&train_data, &config).unwrap_err();
        assert!(err.to_string().contains("relevance lists"), "{err}");
    }

    #[test]
    fn train_lr_sequence_is_non_increasing_by_exact_factor() {
        let (data, split) = tiny_data();
        let config = TrainConfig {
            max_epochs: 30,
            embed_dim: 4,
            batch_size: 4,
            plateau_patience: 2,
            stop_patience: 8,
            ..TrainConfig::default()
        };
        let train_data = TrainData {
            audio: &data.audio,
            captions: &data.captions,
            pairs: Some(&data.pairs),
            lists: Some(&data.lists),
            split: &split,
        };
        let (_, report) = train(&train_data, &config).unwrap();
        for w in report.lr_history.windows(2) {
            assert!(w[1] <= w[0]);
            if w[1] < w[0] {
                assert_abs_diff_eq!(w[0] / w[1], config.lr_factor, epsilon = 1e-9);
            }
        }
        // epochs after the best epoch never exceed the stop patience
        assert!(report.val_loss.len() - report.best_epoch <= config.stop_patience);
    }
}
