//! Situation assessment agent: hashed bag-of-words features, a multinomial
//! logistic-regression classifier over the four hazard categories plus
//! `None`, and confidence-gated alerting.
//!
//! Token hash: FNV-1a 64-bit over the token's UTF-8 bytes (offset basis
//! `0xcbf29ce484222325`, prime `0x100000001b3`), reduced modulo the feature
//! dimension.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::nn::softmax;
use crate::optim::Adam;
use crate::rng;
use crate::scenario::{EventClass, TweetRecord};
use crate::SimTime;

pub const FEATURE_DIM: usize = 16_384;
pub const CHECKPOINT_VERSION: u32 = 1;
const NUM_CLASSES: usize = EventClass::COUNT;

#[derive(Debug, Error)]
pub enum AssessError {
    #[error("degenerate training data: {0}")]
    DegenerateData(String),
    #[error("invalid config: {0}")]
    Config(String),
    #[error("checkpoint error: {0}")]
    Checkpoint(String),
}

pub fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in bytes {
        h ^= *b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// Sparse vector with strictly increasing indices.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct SparseVec {
    pub idx: Vec<u32>,
    pub val: Vec<f64>,
}

impl SparseVec {
    pub fn is_zero(&self) -> bool {
        self.val.iter().all(|v| *v == 0.0)
    }

    pub fn norm(&self) -> f64 {
        self.val.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn to_dense(&self, dim: usize) -> Vec<f64> {
        let mut out = vec![0.0; dim];
        for (i, v) in self.idx.iter().zip(&self.val) {
            out[*i as usize] = *v;
        }
        out
    }
}

pub fn tokenize(text: &str) -> impl Iterator<Item = String> + '_ {
    text.split(|c: char| !c.is_alphanumeric()).filter(|t| !t.is_empty()).map(str::to_lowercase)
}

/// Term-frequency vector of hashed tokens, L2-normalized.
pub fn featurize(text: &str, dim: usize) -> SparseVec {
    let mut counts: Vec<(u32, f64)> =
        tokenize(text).map(|t| ((fnv1a(t.as_bytes()) % dim as u64) as u32, 1.0)).collect();
    counts.sort_by_key(|(i, _)| *i);
    let mut out = SparseVec::default();
    for (i, c) in counts {
        if out.idx.last() == Some(&i) {
            *out.val.last_mut().unwrap() += c;
        } else {
            out.idx.push(i);
            out.val.push(c);
        }
    }
    let norm = out.norm();
    if norm > 0.0 {
        out.val.iter_mut().for_each(|v| *v /= norm);
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AssessConfig {
    pub feature_dim: usize,
    pub confidence_threshold: f64,
    pub batch_size: usize,
    pub base_lr: f64,
    /// Multiplier on `base_lr`; the base rate is tuned for transformer
    /// fine-tuning and barely moves a linear model.
    pub lr_scale: f64,
    pub weight_decay: f64,
    pub epochs: usize,
    pub train_fraction: f64,
    pub val_fraction: f64,
}

impl Default for AssessConfig {
    fn default() -> Self {
        AssessConfig {
            feature_dim: FEATURE_DIM,
            confidence_threshold: 0.7,
            batch_size: 32,
            base_lr: 2e-5,
            lr_scale: 500.0,
            weight_decay: 0.01,
            epochs: 30,
            train_fraction: 0.70,
            val_fraction: 0.15,
        }
    }
}

impl AssessConfig {
    pub fn learning_rate(&self) -> f64 {
        self.base_lr * self.lr_scale
    }

    pub fn validate(&self) -> Result<(), AssessError> {
        let bad = |m: &str| Err(AssessError::Config(m.into()));
        if self.feature_dim == 0 || self.batch_size == 0 || self.epochs == 0 {
            return bad("feature_dim, batch_size and epochs must be positive");
        }
        if !(self.confidence_threshold > 0.0 && self.confidence_threshold < 1.0) {
            return bad("confidence_threshold must lie in (0, 1)");
        }
        if self.learning_rate().is_nan() || self.learning_rate() <= 0.0 || self.weight_decay < 0.0 {
            return bad("learning rate must be positive and weight decay nonnegative");
        }
        if self.train_fraction <= 0.0 || self.val_fraction < 0.0 || self.train_fraction + self.val_fraction > 1.0 {
            return bad("split fractions must be positive and sum to at most 1");
        }
        Ok(())
    }
}

/// Linear softmax classifier. `weights` is `[NUM_CLASSES x feature_dim]`
/// row-major in [`EventClass::ALL`] order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssessModel {
    pub feature_dim: usize,
    pub confidence_threshold: f64,
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Assessment {
    pub class: EventClass,
    pub confidence: f64,
    pub probs: [f64; NUM_CLASSES],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Alert {
    pub alert_id: String,
    pub source_ref: String,
    pub class: EventClass,
    pub confidence: f64,
    pub created_time: SimTime,
}

#[derive(Serialize, Deserialize)]
struct Checkpoint {
    format_version: u32,
    classes: Vec<EventClass>,
    model: AssessModel,
}

impl AssessModel {
    pub fn zeros(feature_dim: usize, confidence_threshold: f64) -> Self {
        AssessModel {
            feature_dim,
            confidence_threshold,
            weights: vec![0.0; NUM_CLASSES * feature_dim],
            bias: vec![0.0; NUM_CLASSES],
        }
    }

    pub fn is_finite(&self) -> bool {
        self.weights.iter().chain(&self.bias).all(|v| v.is_finite())
    }

    pub fn logits(&self, x: &SparseVec) -> [f64; NUM_CLASSES] {
        let mut z = [0.0; NUM_CLASSES];
        for (c, zc) in z.iter_mut().enumerate() {
            let row = &self.weights[c * self.feature_dim..(c + 1) * self.feature_dim];
            *zc = self.bias[c] + x.idx.iter().zip(&x.val).map(|(i, v)| row[*i as usize] * v).sum::<f64>();
        }
        z
    }

    pub fn probs(&self, x: &SparseVec) -> [f64; NUM_CLASSES] {
        let p = softmax(&self.logits(x));
        let mut out = [0.0; NUM_CLASSES];
        out.copy_from_slice(&p);
        out
    }

    pub fn assess(&self, x: &SparseVec) -> Assessment {
        let probs = self.probs(x);
        let mut best = 0;
        for c in 1..NUM_CLASSES {
            if probs[c] > probs[best] {
                best = c;
            }
        }
        Assessment { class: EventClass::ALL[best], confidence: probs[best], probs }
    }

    pub fn assess_text(&self, text: &str) -> Assessment {
        self.assess(&featurize(text, self.feature_dim))
    }

    /// Mean cross-entropy over `batch` and its gradient laid out as
    /// `weights` followed by `bias`.
    pub fn loss_and_grad(&self, batch: &[(&SparseVec, EventClass)]) -> (f64, Vec<f64>) {
        let d = self.feature_dim;
        let mut grad = vec![0.0; NUM_CLASSES * d + NUM_CLASSES];
        if batch.is_empty() {
            return (0.0, grad);
        }
        let n = batch.len() as f64;
        let mut loss = 0.0;
        for (x, y) in batch {
            let p = self.probs(x);
            loss -= p[y.index()].max(f64::MIN_POSITIVE).ln();
            for c in 0..NUM_CLASSES {
                let g = (p[c] - if c == y.index() { 1.0 } else { 0.0 }) / n;
                for (i, v) in x.idx.iter().zip(&x.val) {
                    grad[c * d + *i as usize] += g * v;
                }
                grad[NUM_CLASSES * d + c] += g;
            }
        }
        (loss / n, grad)
    }

    pub fn flat_params(&self) -> Vec<f64> {
        self.weights.iter().chain(&self.bias).copied().collect()
    }

    pub fn set_flat_params(&mut self, p: &[f64]) {
        let nw = self.weights.len();
        self.weights.copy_from_slice(&p[..nw]);
        self.bias.copy_from_slice(&p[nw..]);
    }

    pub fn accuracy(&self, data: &[(SparseVec, EventClass)]) -> f64 {
        if data.is_empty() {
            return 0.0;
        }
        data.iter().filter(|(x, y)| self.assess(x).class == *y).count() as f64 / data.len() as f64
    }

    /// Checkpoint: JSON record with format version, class order and the model.
    pub fn to_checkpoint(&self) -> Vec<u8> {
        let ck = Checkpoint { format_version: CHECKPOINT_VERSION, classes: EventClass::ALL.to_vec(), model: self.clone() };
        serde_json::to_vec(&ck).expect("model serializes")
    }

    pub fn from_checkpoint(bytes: &[u8]) -> Result<Self, AssessError> {
        let ck: Checkpoint = serde_json::from_slice(bytes).map_err(|e| AssessError::Checkpoint(e.to_string()))?;
        if ck.format_version != CHECKPOINT_VERSION {
            return Err(AssessError::Checkpoint(format!("unsupported version {}", ck.format_version)));
        }
        if ck.classes != EventClass::ALL {
            return Err(AssessError::Checkpoint("class order mismatch".into()));
        }
        let m = ck.model;
        if m.weights.len() != NUM_CLASSES * m.feature_dim || m.bias.len() != NUM_CLASSES {
            return Err(AssessError::Checkpoint("parameter shape mismatch".into()));
        }
        Ok(m)
    }
}

/// Alert iff the top class is a hazard and its probability reaches the
/// threshold.
pub fn maybe_alert(
    model: &AssessModel,
    assessment: &Assessment,
    alert_id: &str,
    source_ref: &str,
    now: SimTime,
) -> Option<Alert> {
    (assessment.class != EventClass::None && assessment.confidence >= model.confidence_threshold).then(|| Alert {
        alert_id: alert_id.into(),
        source_ref: source_ref.into(),
        class: assessment.class,
        confidence: assessment.confidence,
        created_time: now,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssessTrainReport {
    pub train_size: usize,
    pub val_size: usize,
    pub test_size: usize,
    pub best_epoch: usize,
    pub train_accuracy: f64,
    pub val_accuracy: f64,
    pub test_accuracy: f64,
}

/// Trains on a seeded 70/15/15 split and keeps the epoch with the best
/// validation accuracy (earliest on ties).
pub fn train(
    records: &[TweetRecord],
    config: &AssessConfig,
    seed: u64,
) -> Result<(AssessModel, AssessTrainReport), AssessError> {
    config.validate()?;
    let mut data: Vec<(SparseVec, EventClass)> =
        records.iter().map(|r| (featurize(&r.text, config.feature_dim), r.label)).collect();
    let mut split_rng = rng::stream(seed, 1);
    data.shuffle(&mut split_rng);
    let n = data.len();
    let n_train = ((n as f64) * config.train_fraction).round() as usize;
    let n_val = ((n as f64) * config.val_fraction).round() as usize;
    let n_val = n_val.min(n - n_train.min(n));
    let test = data.split_off((n_train + n_val).min(n));
    let val = data.split_off(n_train.min(n));
    let train = data;
    let mut classes: Vec<EventClass> = train.iter().map(|(_, y)| *y).collect();
    classes.sort();
    classes.dedup();
    if classes.len() < 2 {
        return Err(AssessError::DegenerateData(format!(
            "training split has {} distinct class(es); at least 2 required",
            classes.len()
        )));
    }

    let mut model = AssessModel::zeros(config.feature_dim, config.confidence_threshold);
    let mut params = model.flat_params();
    let mut opt = Adam::new(params.len(), config.learning_rate()).with_weight_decay(config.weight_decay);
    let mut shuffle_rng = rng::stream(seed, 2);
    let mut order: Vec<usize> = (0..train.len()).collect();
    let score = |m: &AssessModel| if val.is_empty() { m.accuracy(&train) } else { m.accuracy(&val) };
    let mut best = (score(&model), 0usize, params.clone());
    for epoch in 1..=config.epochs {
        order.shuffle(&mut shuffle_rng);
        for chunk in order.chunks(config.batch_size) {
            let batch: Vec<(&SparseVec, EventClass)> = chunk.iter().map(|&i| (&train[i].0, train[i].1)).collect();
            let (_, grad) = model.loss_and_grad(&batch);
            opt.step(&mut params, &grad);
            model.set_flat_params(&params);
        }
        let s = score(&model);
        if s > best.0 {
            best = (s, epoch, params.clone());
        }
    }
    model.set_flat_params(&best.2);
    let report = AssessTrainReport {
        train_size: train.len(),
        val_size: val.len(),
        test_size: test.len(),
        best_epoch: best.1,
        train_accuracy: model.accuracy(&train),
        val_accuracy: model.accuracy(&val),
        test_accuracy: model.accuracy(&test),
    };
    Ok((model, report))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn featurize_basics() {
        assert!(featurize("", 64).is_zero());
        assert_eq!(featurize("flood flood", 64), featurize("Flood", 64));
        let v = featurize("Fire near the river, fire!", 1024);
        assert!((v.norm() - 1.0).abs() < 1e-12);
        assert!(v.idx.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn fnv_reference_values() {
        assert_eq!(fnv1a(b""), 0xcbf29ce484222325);
        assert_eq!(fnv1a(b"a"), 0xaf63dc4c8601ec8c);
        assert_eq!(fnv1a(b"foobar"), 0x85944171f73967e8);
    }

    #[test]
    fn zero_model_is_uniform_and_silent() {
        let m = AssessModel::zeros(16, 0.7);
        let a = m.assess(&SparseVec::default());
        assert!(a.probs.iter().all(|p| (p - 0.2).abs() < 1e-15));
        assert!(maybe_alert(&m, &a, "a", "r", SimTime::ZERO).is_none());
    }

    #[test]
    fn threshold_boundary() {
        let m = AssessModel::zeros(4, 0.7);
        let mut a = Assessment { class: EventClass::Flood, confidence: 0.69, probs: [0.0; 5] };
        assert!(maybe_alert(&m, &a, "a", "r", SimTime::ZERO).is_none());
        a.confidence = 0.7;
        assert!(maybe_alert(&m, &a, "a", "r", SimTime::ZERO).is_some());
        a.class = EventClass::None;
        assert!(maybe_alert(&m, &a, "a", "r", SimTime::ZERO).is_none());
    }

    fn tweet(i: usize, text: &str, label: EventClass) -> TweetRecord {
        TweetRecord { tweet_id: format!("t{i}"), time: 0, text: text.into(), label }
    }

    #[test]
    fn separable_two_class_reaches_full_validation_accuracy() {
        let recs: Vec<TweetRecord> = (0..200)
            .map(|i| {
                if i % 2 == 0 {
                    tweet(i, &format!("smoke flames wildfire {i}"), EventClass::Wildfire)
                } else {
                    tweet(i, &format!("water levee flooding {i}"), EventClass::Flood)
                }
            })
            .collect();
        let cfg = AssessConfig { feature_dim: 1024, epochs: 10, ..Default::default() };
        let (m, rep) = train(&recs, &cfg, 5).unwrap();
        assert_eq!(rep.val_accuracy, 1.0);
        let (m2, _) = train(&recs, &cfg, 5).unwrap();
        assert_eq!(m, m2);
        assert_eq!(AssessModel::from_checkpoint(&m.to_checkpoint()).unwrap(), m);
    }

    #[test]
    fn single_class_is_degenerate() {
        let recs: Vec<TweetRecord> = (0..20).map(|i| tweet(i, "rain", EventClass::Flood)).collect();
        let cfg = AssessConfig { feature_dim: 64, ..Default::default() };
        assert!(matches!(train(&recs, &cfg, 0), Err(AssessError::DegenerateData(_))));
    }
}
