//! Logistic regression with batch initialization and streaming updates.
//!
//! The model is deliberately plain: fixed-step full-batch gradient descent
//! for initialization, and the same gradient step applied to each incoming
//! mini-batch window during streaming. Both paths share one step function,
//! so a streaming update on a window is exactly one batch epoch on it.
//!
//! The objective is mean negative log-likelihood plus an L2 penalty on the
//! weights (the bias is unregularized):
//!
//! ```text
//! loss = (1/n) Σ [−y ln p − (1−y) ln(1−p)] + (λ/2)‖w‖²
//! ```

use thiserror::Error;

use crate::featurize::{FeatureVector, FEATURE_DIM};

/// Serialized model header: magic string plus schema version.
const MODEL_MAGIC: &[u8; 8] = b"SLRMODEL";
const MODEL_VERSION: u16 = 1;
/// magic + version + 13 weights + bias + eta + lambda + update counter.
const MODEL_FILE_LEN: usize = 8 + 2 + (FEATURE_DIM + 3) * 8 + 8;

/// A labeled minute: encoded features plus the occupancy label.
pub type LabeledMinute = (FeatureVector, bool);

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("batch is empty")]
    EmptyBatch,
    #[error("training dataset is empty")]
    EmptyDataset,
    #[error("invalid training config: {0}")]
    InvalidConfig(String),
    #[error("training diverged at epoch {epoch}: loss = {loss}")]
    Diverged { epoch: u32, loss: f64 },
    #[error("model payload is {got} bytes, expected {expected}")]
    TruncatedModel { got: usize, expected: usize },
    #[error("model payload has wrong magic bytes")]
    BadMagic,
    #[error("model schema version {found} is not supported (expected {MODEL_VERSION})")]
    VersionMismatch { found: u16 },
    #[error("model payload holds non-finite parameters")]
    NonFiniteModel,
}

/// Logistic regression parameters plus the hyperparameters carried along
/// for streaming updates.
///
/// States are immutable values: every update returns a new state.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelState {
    weights: [f64; FEATURE_DIM],
    bias: f64,
    learning_rate: f64,
    l2: f64,
    updates: u64,
}

impl ModelState {
    /// The zero model: predicts 0.5 everywhere.
    pub fn zero(learning_rate: f64, l2: f64) -> Self {
        Self {
            weights: [0.0; FEATURE_DIM],
            bias: 0.0,
            learning_rate,
            l2,
            updates: 0,
        }
    }

    pub fn from_parts(
        weights: [f64; FEATURE_DIM],
        bias: f64,
        learning_rate: f64,
        l2: f64,
        updates: u64,
    ) -> Self {
        Self {
            weights,
            bias,
            learning_rate,
            l2,
            updates,
        }
    }

    pub fn weights(&self) -> &[f64; FEATURE_DIM] {
        &self.weights
    }

    pub fn bias(&self) -> f64 {
        self.bias
    }

    pub fn learning_rate(&self) -> f64 {
        self.learning_rate
    }

    pub fn l2(&self) -> f64 {
        self.l2
    }

    /// Number of streaming updates applied since initialization.
    pub fn updates(&self) -> u64 {
        self.updates
    }

    /// Occupancy probability for one feature vector: σ(w·x + b).
    pub fn predict_proba(&self, x: &FeatureVector) -> f64 {
        let mut z = self.bias;
        for (w, v) in self.weights.iter().zip(x.values()) {
            z += w * v;
        }
        sigmoid(z)
    }

    /// Mean loss and gradients over a batch. The gradient is
    /// `grad_w = (1/n) Σ (p−y)·x + λw`, `grad_b = (1/n) Σ (p−y)`.
    pub fn loss_and_gradient(
        &self,
        batch: &[LabeledMinute],
    ) -> Result<(f64, [f64; FEATURE_DIM], f64), ModelError> {
        if batch.is_empty() {
            return Err(ModelError::EmptyBatch);
        }
        let n = batch.len() as f64;
        let mut loss = 0.0;
        let mut grad_w = [0.0; FEATURE_DIM];
        let mut grad_b = 0.0;
        for (x, occupied) in batch {
            let y = *occupied as u8 as f64;
            let mut z = self.bias;
            for (w, v) in self.weights.iter().zip(x.values()) {
                z += w * v;
            }
            // −y ln σ(z) − (1−y) ln(1−σ(z)) = y·softplus(−z) + (1−y)·softplus(z)
            loss += y * softplus(-z) + (1.0 - y) * softplus(z);
            let residual = sigmoid(z) - y;
            for (g, v) in grad_w.iter_mut().zip(x.values()) {
                *g += residual * v;
            }
            grad_b += residual;
        }
        loss /= n;
        grad_b /= n;
        let mut penalty = 0.0;
        for (g, w) in grad_w.iter_mut().zip(&self.weights) {
            *g = *g / n + self.l2 * w;
            penalty += w * w;
        }
        loss += 0.5 * self.l2 * penalty;
        Ok((loss, grad_w, grad_b))
    }

    /// One gradient-descent step on the batch using the state's step size.
    /// Shared by batch training and streaming updates; does not advance the
    /// streaming update counter.
    pub fn gradient_step(&self, batch: &[LabeledMinute]) -> Result<(Self, f64), ModelError> {
        let (loss, grad_w, grad_b) = self.loss_and_gradient(batch)?;
        let mut next = self.clone();
        for (w, g) in next.weights.iter_mut().zip(&grad_w) {
            *w -= self.learning_rate * g;
        }
        next.bias -= self.learning_rate * grad_b;
        Ok((next, loss))
    }

    /// Incremental streaming update: one gradient step on the window's mean
    /// gradient. An empty window is a no-op; a non-empty window advances the
    /// update counter.
    pub fn update_stream(&self, window: &[LabeledMinute]) -> Self {
        if window.is_empty() {
            return self.clone();
        }
        let (mut next, _) = self
            .gradient_step(window)
            .expect("non-empty window cannot fail");
        next.updates += 1;
        next
    }

    /// Serialize to the versioned binary format.
    pub fn save(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(MODEL_FILE_LEN);
        out.extend_from_slice(MODEL_MAGIC);
        out.extend_from_slice(&MODEL_VERSION.to_le_bytes());
        for w in &self.weights {
            out.extend_from_slice(&w.to_le_bytes());
        }
        out.extend_from_slice(&self.bias.to_le_bytes());
        out.extend_from_slice(&self.learning_rate.to_le_bytes());
        out.extend_from_slice(&self.l2.to_le_bytes());
        out.extend_from_slice(&self.updates.to_le_bytes());
        out
    }

    /// Decode a payload produced by [`Self::save`]. Bit-exact round trip.
    pub fn load(bytes: &[u8]) -> Result<Self, ModelError> {
        if bytes.len() < 10 {
            return Err(ModelError::TruncatedModel {
                got: bytes.len(),
                expected: MODEL_FILE_LEN,
            });
        }
        if &bytes[..8] != MODEL_MAGIC {
            return Err(ModelError::BadMagic);
        }
        let version = u16::from_le_bytes([bytes[8], bytes[9]]);
        if version != MODEL_VERSION {
            return Err(ModelError::VersionMismatch { found: version });
        }
        if bytes.len() != MODEL_FILE_LEN {
            return Err(ModelError::TruncatedModel {
                got: bytes.len(),
                expected: MODEL_FILE_LEN,
            });
        }
        let f64_at = |i: usize| {
            let s = 10 + i * 8;
            f64::from_le_bytes(bytes[s..s + 8].try_into().unwrap())
        };
        let mut weights = [0.0; FEATURE_DIM];
        for (i, w) in weights.iter_mut().enumerate() {
            *w = f64_at(i);
        }
        let bias = f64_at(FEATURE_DIM);
        let learning_rate = f64_at(FEATURE_DIM + 1);
        let l2 = f64_at(FEATURE_DIM + 2);
        let s = 10 + (FEATURE_DIM + 3) * 8;
        let updates = u64::from_le_bytes(bytes[s..s + 8].try_into().unwrap());
        let state = Self {
            weights,
            bias,
            learning_rate,
            l2,
            updates,
        };
        if !state.is_finite() {
            return Err(ModelError::NonFiniteModel);
        }
        Ok(state)
    }

    fn is_finite(&self) -> bool {
        self.weights.iter().all(|w| w.is_finite())
            && self.bias.is_finite()
            && self.learning_rate.is_finite()
            && self.l2.is_finite()
    }
}

/// Batch training hyperparameters.
///
/// `shuffle_seed` is carried for stochastic trainers; the full-batch
/// descent used here is order-independent and ignores it.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub epochs: u32,
    pub learning_rate: f64,
    pub l2: f64,
    pub shuffle_seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        // Calibrated so the weekly occupancy pattern is fully learned on a
        // year of minute data: the weekend one-hot columns are active on
        // only 1/7 of samples and need roughly eta * epochs > 100 at this
        // data scale before their weights overtake the weekday features.
        Self {
            epochs: 500,
            learning_rate: 0.5,
            l2: 1e-4,
            shuffle_seed: 0,
        }
    }
}

impl TrainConfig {
    fn validate(&self) -> Result<(), ModelError> {
        if !self.learning_rate.is_finite() || self.learning_rate <= 0.0 {
            return Err(ModelError::InvalidConfig(format!(
                "learning rate must be positive and finite, got {}",
                self.learning_rate
            )));
        }
        if self.l2 < 0.0 || !self.l2.is_finite() {
            return Err(ModelError::InvalidConfig(format!(
                "l2 strength must be non-negative and finite, got {}",
                self.l2
            )));
        }
        Ok(())
    }
}

/// Numerically safe logistic function; branches on the sign of `z` so the
/// exponential never overflows. Deep negative saturation is floored at the
/// smallest positive double instead of underflowing to an exact zero, so
/// the output is always strictly positive.
pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        (e / (1.0 + e)).max(f64::MIN_POSITIVE)
    }
}

/// ln(1 + e^z) without overflow.
fn softplus(z: f64) -> f64 {
    z.max(0.0) + (-z.abs()).exp().ln_1p()
}

/// Batch-initialize a model: full-batch gradient descent from the zero
/// model for `cfg.epochs` steps. The returned state carries the config's
/// step size and L2 strength for subsequent streaming use.
pub fn fit_batch(data: &[LabeledMinute], cfg: &TrainConfig) -> Result<ModelState, ModelError> {
    cfg.validate()?;
    if data.is_empty() {
        return Err(ModelError::EmptyDataset);
    }
    let mut state = ModelState::zero(cfg.learning_rate, cfg.l2);
    for epoch in 0..cfg.epochs {
        let (next, loss) = state.gradient_step(data)?;
        if !loss.is_finite() {
            return Err(ModelError::Diverged { epoch, loss });
        }
        state = next;
    }
    Ok(state)
}
