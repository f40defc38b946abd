//! Prediction agent: a Gaussian-output MLP forecasting severity `H` steps
//! ahead with per-step variance and 90% intervals.
//!
//! Input layout (version [`INPUT_LAYOUT_VERSION`], 32 dims):
//!
//! | dims   | content                                              |
//! |--------|------------------------------------------------------|
//! | 0..4   | category one-hot                                     |
//! | 4      | current severity / 10                                |
//! | 5, 6   | lat / 90, lon / 180                                  |
//! | 7..11  | sin/cos day-of-year, sin/cos hour                    |
//! | 11..19 | trailing 8 severity observations / 10, oldest first  |
//! | 19..25 | weather covariates (normalized; zero when unknown)   |
//! | 25..29 | per-type engaged-resource fractions                  |
//! | 29..32 | reserved, zero                                       |
//!
//! Two-sided normal quantiles: 80% 1.2816, 90% 1.6449 (used as 1.645),
//! 95% 1.9600, 99% 2.5758.

use std::f64::consts::PI;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::nn::Mlp;
use crate::optim::Adam;
use crate::rng::{self, SimRng};
use crate::scenario::{Category, ScenarioPack};

pub const INPUT_DIM: usize = 32;
pub const DEFAULT_HORIZON: usize = 6;
pub const VAR_FLOOR: f64 = 1e-6;
pub const Z90: f64 = 1.645;
pub const INPUT_LAYOUT_VERSION: u32 = 1;
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum PredictError {
    #[error("contract violation: {0}")]
    Contract(String),
    #[error("numerical error: {0}")]
    Numerical(String),
    #[error("checkpoint error: {0}")]
    Checkpoint(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredInput(pub [f64; INPUT_DIM]);

/// Raw characteristics assembled into a [`PredInput`].
#[derive(Debug, Clone, PartialEq)]
pub struct Characteristics {
    pub category: Category,
    pub severity: f64,
    pub lat: f64,
    pub lon: f64,
    /// UTC epoch seconds.
    pub time: i64,
    /// Up to 8 most recent observations, oldest first; missing leading
    /// entries repeat the oldest available value.
    pub trailing: Vec<f64>,
    pub weather: [f64; 6],
    pub engaged: [f64; 4],
}

impl PredInput {
    pub fn build(c: &Characteristics) -> Self {
        let mut x = [0.0; INPUT_DIM];
        x[c.category.index()] = 1.0;
        x[4] = c.severity / 10.0;
        x[5] = c.lat / 90.0;
        x[6] = c.lon / 180.0;
        let day = c.time.rem_euclid(365 * 86_400) as f64 / (365.0 * 86_400.0);
        let hour = c.time.rem_euclid(86_400) as f64 / 86_400.0;
        x[7] = (2.0 * PI * day).sin();
        x[8] = (2.0 * PI * day).cos();
        x[9] = (2.0 * PI * hour).sin();
        x[10] = (2.0 * PI * hour).cos();
        let hist: Vec<f64> = c.trailing.iter().rev().take(8).rev().copied().collect();
        let pad = hist.first().copied().unwrap_or(c.severity);
        for k in 0..8 {
            let v = if k + hist.len() >= 8 { hist[k + hist.len() - 8] } else { pad };
            x[11 + k] = v / 10.0;
        }
        x[19..25].copy_from_slice(&c.weather);
        x[25..29].copy_from_slice(&c.engaged);
        PredInput(x)
    }

    pub fn validate(&self) -> Result<(), PredictError> {
        let x = &self.0;
        if x.iter().any(|v| !v.is_finite()) {
            return Err(PredictError::Contract("non-finite input".into()));
        }
        let onehot = &x[0..4];
        if onehot.iter().any(|v| *v != 0.0 && *v != 1.0) || onehot.iter().sum::<f64>() != 1.0 {
            return Err(PredictError::Contract("category block must be one-hot".into()));
        }
        if x[29..32].iter().any(|v| *v != 0.0) {
            return Err(PredictError::Contract("reserved dims must be zero".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepForecast {
    pub mean: f64,
    pub variance: f64,
    pub ci90: (f64, f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredOutput {
    pub steps: Vec<StepForecast>,
}

impl PredOutput {
    /// Splits raw net output `[means.., log-variances..]` and floors the
    /// variances.
    pub fn from_raw(raw: &[f64]) -> Self {
        let h = raw.len() / 2;
        let steps = (0..h)
            .map(|i| {
                let mean = raw[i];
                let variance = raw[h + i].exp().max(VAR_FLOOR);
                let half = Z90 * variance.sqrt();
                StepForecast { mean, variance, ci90: (mean - half, mean + half) }
            })
            .collect();
        PredOutput { steps }
    }

    pub fn horizon(&self) -> usize {
        self.steps.len()
    }
}

/// Gaussian NLL summed over steps, and its gradient with respect to the raw
/// net output. Floored variances pass no gradient to the log-variance.
pub fn nll_loss(raw: &[f64], target: &[f64]) -> Result<(f64, Vec<f64>), PredictError> {
    let h = raw.len() / 2;
    if raw.len() != 2 * h || target.len() != h {
        return Err(PredictError::Contract(format!("expected {} targets for {} outputs", h, raw.len())));
    }
    if target.iter().any(|y| !y.is_finite()) {
        return Err(PredictError::Numerical("non-finite target".into()));
    }
    let mut loss = 0.0;
    let mut grad = vec![0.0; raw.len()];
    for i in 0..h {
        let mu = raw[i];
        let ev = raw[h + i].exp();
        let var = ev.max(VAR_FLOOR);
        let r = target[i] - mu;
        loss += 0.5 * (2.0 * PI * var).ln() + r * r / (2.0 * var);
        grad[i] = -r / var;
        grad[h + i] = if ev > VAR_FLOOR { 0.5 - r * r / (2.0 * var) } else { 0.0 };
    }
    if !loss.is_finite() {
        return Err(PredictError::Numerical(format!("loss {loss} from outputs {raw:?}")));
    }
    Ok((loss, grad))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredNet {
    pub horizon: usize,
    pub mlp: Mlp,
}

#[derive(Serialize, Deserialize)]
struct Checkpoint {
    format_version: u32,
    input_layout: u32,
    net: PredNet,
}

impl PredNet {
    pub fn new(input_dim: usize, hidden: &[usize], horizon: usize, rng: &mut SimRng) -> Self {
        let mut sizes = vec![input_dim];
        sizes.extend(hidden);
        sizes.push(2 * horizon);
        PredNet { horizon, mlp: Mlp::new(&sizes, 0.1, rng) }
    }

    pub fn forecast_raw(&self, x: &[f64]) -> PredOutput {
        PredOutput::from_raw(&self.mlp.forward(x))
    }

    pub fn forecast(&self, input: &PredInput) -> Result<PredOutput, PredictError> {
        input.validate()?;
        Ok(self.forecast_raw(&input.0))
    }

    /// Mean NLL over `data` and its parameter gradient.
    pub fn batch_loss(&self, data: &[(&[f64], &[f64])]) -> Result<(f64, Vec<f64>), PredictError> {
        let mut grad = vec![0.0; self.mlp.num_params()];
        let mut total = 0.0;
        let n = data.len().max(1) as f64;
        for (x, y) in data {
            let acts = self.mlp.forward_cached(x);
            let (l, g) = nll_loss(acts.output(), y)?;
            total += l / n;
            let g: Vec<f64> = g.iter().map(|v| v / n).collect();
            self.mlp.backward(&acts, &g, &mut grad);
        }
        Ok((total, grad))
    }

    pub fn to_checkpoint(&self) -> Vec<u8> {
        serde_json::to_vec(&Checkpoint {
            format_version: CHECKPOINT_VERSION,
            input_layout: INPUT_LAYOUT_VERSION,
            net: self.clone(),
        })
        .expect("serializable")
    }

    pub fn from_checkpoint(bytes: &[u8]) -> Result<Self, PredictError> {
        let ck: Checkpoint = serde_json::from_slice(bytes).map_err(|e| PredictError::Checkpoint(e.to_string()))?;
        if ck.format_version != CHECKPOINT_VERSION || ck.input_layout != INPUT_LAYOUT_VERSION {
            return Err(PredictError::Checkpoint("unsupported checkpoint or input layout version".into()));
        }
        Ok(ck.net)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PredictConfig {
    pub horizon: usize,
    pub hidden: Vec<usize>,
    pub lr: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub patience: usize,
    pub val_fraction: f64,
}

impl Default for PredictConfig {
    fn default() -> Self {
        PredictConfig {
            horizon: DEFAULT_HORIZON,
            hidden: vec![64, 64],
            lr: 1e-3,
            batch_size: 64,
            max_epochs: 300,
            patience: 20,
            val_fraction: 0.2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictTrainReport {
    pub epochs_run: usize,
    pub best_epoch: usize,
    pub best_val_nll: f64,
}

/// `(input, targets)` pairs.
pub type Dataset = Vec<(Vec<f64>, Vec<f64>)>;

/// Mini-batch Adam on the NLL with early stopping on validation NLL; the
/// parameters from the best validation epoch are returned.
pub fn train(data: &[(Vec<f64>, Vec<f64>)], config: &PredictConfig, seed: u64) -> Result<(PredNet, PredictTrainReport), PredictError> {
    if data.len() < 2 {
        return Err(PredictError::Contract("need at least 2 samples".into()));
    }
    let dim = data[0].0.len();
    if data.iter().any(|(x, y)| x.len() != dim || y.len() != config.horizon) {
        return Err(PredictError::Contract(format!("samples must have {dim} inputs and {} targets", config.horizon)));
    }
    let mut idx: Vec<usize> = (0..data.len()).collect();
    idx.shuffle(&mut rng::stream(seed, 1));
    let n_val = ((data.len() as f64 * config.val_fraction).round() as usize).clamp(1, data.len() - 1);
    let (val_idx, train_idx) = idx.split_at(n_val);
    let view = |ids: &[usize]| -> Vec<(&[f64], &[f64])> {
        ids.iter().map(|&i| (data[i].0.as_slice(), data[i].1.as_slice())).collect()
    };
    let val = view(val_idx);
    let mut net = PredNet::new(dim, &config.hidden, config.horizon, &mut rng::stream(seed, 2));
    let mut opt = Adam::new(net.mlp.num_params(), config.lr);
    let mut order = train_idx.to_vec();
    let mut shuffle = rng::stream(seed, 3);
    let mut best = (net.batch_loss(&val)?.0, 0usize, net.clone());
    let mut epochs_run = 0;
    for epoch in 1..=config.max_epochs {
        epochs_run = epoch;
        order.shuffle(&mut shuffle);
        for chunk in order.chunks(config.batch_size.max(1)) {
            let (_, g) = net.batch_loss(&view(chunk))?;
            opt.step(net.mlp.params_mut(), &g);
        }
        if !net.mlp.is_finite() {
            return Err(PredictError::Numerical(format!("parameters diverged at epoch {epoch}")));
        }
        let v = net.batch_loss(&val)?.0;
        if v < best.0 {
            best = (v, epoch, net.clone());
        } else if epoch - best.1 >= config.patience {
            break;
        }
    }
    Ok((best.2, PredictTrainReport { epochs_run, best_epoch: best.1, best_val_nll: best.0 }))
}

/// Samples from the true severity paths of a pack: the input describes the
/// event at step `k` (with its trailing path), the targets are the next
/// `horizon` path values.
pub fn dataset_from_pack(pack: &ScenarioPack, horizon: usize) -> Dataset {
    let mut out = Vec::new();
    for t in &pack.ground_truth {
        let path = &t.severity_path;
        for k in 0..path.len().saturating_sub(horizon) {
            let c = Characteristics {
                category: t.category,
                severity: path[k],
                lat: t.lat,
                lon: t.lon,
                time: pack.start_epoch + (t.onset_ms / 1000) as i64 + (k as u64 * pack.path_step_s) as i64,
                trailing: path[..=k].to_vec(),
                weather: [0.0; 6],
                engaged: [0.0; 4],
            };
            out.push((PredInput::build(&c).0.to_vec(), path[k + 1..=k + horizon].to_vec()));
        }
    }
    out
}
