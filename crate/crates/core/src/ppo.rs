//! Proximal policy optimization for discrete action spaces: separate policy
//! and value MLPs, generalized advantage estimation, the clipped surrogate
//! objective with hand-derived gradients, and a seeded training loop with
//! early stopping.

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::alloc::{random_world, AllocAction, AllocConfig, AllocWorld, WorldSpec, NUM_ACTIONS, STATE_DIM};
use crate::nn::{masked_log_softmax, Mlp};
use crate::optim::Adam;
use crate::rng::{self, SimRng};

pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum PpoError {
    #[error("contract violation: {0}")]
    Contract(String),
    #[error("non-finite {what} at episode {episode}")]
    Diverged { what: String, episode: usize, last_good: Box<PpoAgent> },
    #[error("checkpoint error: {0}")]
    Checkpoint(String),
}

/// Interface the trainer drives. Episodes end when `step` reports `done`.
pub trait Env {
    fn obs_dim(&self) -> usize;
    fn num_actions(&self) -> usize;
    fn reset(&mut self, rng: &mut SimRng) -> Vec<f64>;
    /// Returns `(next_obs, reward, done)`.
    fn step(&mut self, action: usize) -> (Vec<f64>, f64, bool);
    /// Allowed actions in the current state; `None` allows all.
    fn action_mask(&self) -> Option<Vec<bool>> {
        None
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PpoConfig {
    pub gamma: f64,
    pub lambda: f64,
    pub clip_eps: f64,
    pub lr: f64,
    pub update_epochs: usize,
    pub minibatch: usize,
    pub entropy_coef: f64,
    pub value_coef: f64,
    pub max_episodes: usize,
    pub early_stop_window: usize,
    pub early_stop_patience: usize,
    pub early_stop_rel_improvement: f64,
    /// Whole episodes are collected until at least this many steps.
    pub rollout_steps: usize,
    pub hidden: Vec<usize>,
    pub normalize_advantages: bool,
    /// Global gradient-norm clip per network; `None` disables.
    pub max_grad_norm: Option<f64>,
}

impl Default for PpoConfig {
    fn default() -> Self {
        PpoConfig {
            gamma: 0.99,
            lambda: 0.95,
            clip_eps: 0.2,
            lr: 3e-4,
            update_epochs: 4,
            minibatch: 64,
            entropy_coef: 0.01,
            value_coef: 0.5,
            max_episodes: 10_000,
            early_stop_window: 100,
            early_stop_patience: 500,
            early_stop_rel_improvement: 0.01,
            rollout_steps: 256,
            hidden: vec![64, 64],
            normalize_advantages: true,
            max_grad_norm: Some(0.5),
        }
    }
}

impl PpoConfig {
    pub fn validate(&self) -> Result<(), PpoError> {
        let ok = self.gamma > 0.0
            && self.gamma <= 1.0
            && (0.0..=1.0).contains(&self.lambda)
            && self.clip_eps > 0.0
            && self.lr > 0.0
            && self.minibatch > 0
            && self.rollout_steps > 0
            && self.early_stop_window > 0;
        if ok {
            Ok(())
        } else {
            Err(PpoError::Contract("PPO config out of range (0<gamma<=1, 0<=lambda<=1, eps>0, lr>0)".into()))
        }
    }
}

/// Advantages and returns by the backward GAE recursion. `values` holds
/// `T + 1` entries: the last is the bootstrap value after the final step.
pub fn gae(
    rewards: &[f64],
    values: &[f64],
    dones: &[bool],
    gamma: f64,
    lambda: f64,
) -> Result<(Vec<f64>, Vec<f64>), PpoError> {
    let t = rewards.len();
    if values.len() != t + 1 || dones.len() != t {
        return Err(PpoError::Contract(format!(
            "gae expects rewards/dones of length T and values of length T+1; got {}, {}, {}",
            t,
            dones.len(),
            values.len()
        )));
    }
    let mut adv = vec![0.0; t];
    let mut next = 0.0;
    for i in (0..t).rev() {
        let live = if dones[i] { 0.0 } else { 1.0 };
        let delta = rewards[i] + gamma * values[i + 1] * live - values[i];
        next = delta + gamma * lambda * live * next;
        adv[i] = next;
    }
    let ret = adv.iter().zip(values).map(|(a, v)| a + v).collect();
    Ok((adv, ret))
}

/// In-place standardization with a standard-deviation floor of 1e-8.
pub fn normalize(xs: &mut [f64]) {
    if xs.is_empty() {
        return;
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    let std = var.sqrt().max(1e-8);
    xs.iter_mut().for_each(|x| *x = (*x - mean) / std);
}

/// One training sample.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub obs: Vec<f64>,
    pub action: usize,
    pub old_logp: f64,
    pub advantage: f64,
    pub ret: f64,
    pub mask: Option<Vec<bool>>,
}

/// Loss terms and their parameter gradients, kept separate so each can be
/// checked on its own.
#[derive(Debug, Clone)]
pub struct LossBreakdown {
    /// `-E[min(rho A, clip(rho) A)]`
    pub surrogate: f64,
    /// `E[(V - R)^2]`
    pub value: f64,
    /// `E[H(pi)]`
    pub entropy: f64,
    pub total: f64,
    pub grad_surrogate: Vec<f64>,
    pub grad_entropy: Vec<f64>,
    pub grad_value: Vec<f64>,
    pub clip_fraction: f64,
}

impl LossBreakdown {
    /// Gradient of `total` with respect to the policy parameters.
    pub fn policy_grad(&self, entropy_coef: f64) -> Vec<f64> {
        self.grad_surrogate.iter().zip(&self.grad_entropy).map(|(s, e)| s - entropy_coef * e).collect()
    }

    /// Gradient of `total` with respect to the value parameters.
    pub fn value_grad(&self, value_coef: f64) -> Vec<f64> {
        self.grad_value.iter().map(|g| value_coef * g).collect()
    }
}

/// `L = surrogate + c_v * value - c_e * entropy` over `batch`.
pub fn clipped_loss(batch: &[Sample], policy: &Mlp, value: &Mlp, cfg: &PpoConfig) -> Result<LossBreakdown, PpoError> {
    if batch.is_empty() {
        return Err(PpoError::Contract("empty batch".into()));
    }
    let n = batch.len() as f64;
    let mut out = LossBreakdown {
        surrogate: 0.0,
        value: 0.0,
        entropy: 0.0,
        total: 0.0,
        grad_surrogate: vec![0.0; policy.num_params()],
        grad_entropy: vec![0.0; policy.num_params()],
        grad_value: vec![0.0; value.num_params()],
        clip_fraction: 0.0,
    };
    let mut clipped = 0usize;
    for s in batch {
        let acts = policy.forward_cached(&s.obs);
        let logits = acts.output();
        let mask = s.mask.as_deref();
        let logp = masked_log_softmax(logits, mask);
        let allowed = |j: usize| mask.is_none_or(|m| m[j]);
        let p: Vec<f64> = logp.iter().enumerate().map(|(j, l)| if allowed(j) { l.exp() } else { 0.0 }).collect();
        if !logp[s.action].is_finite() {
            return Err(PpoError::Contract(format!("action {} is masked or has non-finite log-prob", s.action)));
        }

        let rho = (logp[s.action] - s.old_logp).exp();
        let a = s.advantage;
        let unclipped = rho * a;
        let clipped_rho = rho.clamp(1.0 - cfg.clip_eps, 1.0 + cfg.clip_eps);
        let surr = unclipped.min(clipped_rho * a);
        out.surrogate -= surr / n;
        let active = unclipped <= clipped_rho * a;
        if !active {
            clipped += 1;
        }
        // d(-surr)/dlogp[a] then chain through the log-softmax
        let d_logp_a = if active { -unclipped / n } else { 0.0 };
        let mut g_surr = vec![0.0; logits.len()];
        for j in 0..logits.len() {
            if allowed(j) {
                g_surr[j] = d_logp_a * ((j == s.action) as u8 as f64 - p[j]);
            }
        }
        policy.backward(&acts, &g_surr, &mut out.grad_surrogate);

        let h: f64 = (0..logits.len()).filter(|&j| allowed(j) && p[j] > 0.0).map(|j| -p[j] * logp[j]).sum();
        out.entropy += h / n;
        let g_ent: Vec<f64> = (0..logits.len())
            .map(|j| if allowed(j) && p[j] > 0.0 { -p[j] * (logp[j] + h) / n } else { 0.0 })
            .collect();
        policy.backward(&acts, &g_ent, &mut out.grad_entropy);

        let vacts = value.forward_cached(&s.obs);
        let v = vacts.output()[0];
        out.value += (v - s.ret).powi(2) / n;
        value.backward(&vacts, &[2.0 * (v - s.ret) / n], &mut out.grad_value);
    }
    out.total = out.surrogate + cfg.value_coef * out.value - cfg.entropy_coef * out.entropy;
    out.clip_fraction = clipped as f64 / n;
    if !out.total.is_finite() {
        return Err(PpoError::Contract(format!(
            "non-finite loss: surrogate {} value {} entropy {}",
            out.surrogate, out.value, out.entropy
        )));
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PpoAgent {
    pub policy: Mlp,
    pub value: Mlp,
    pub config: PpoConfig,
}

#[derive(Serialize, Deserialize)]
struct Checkpoint {
    format_version: u32,
    agent: PpoAgent,
}

impl PpoAgent {
    pub fn new(obs_dim: usize, num_actions: usize, config: PpoConfig, rng: &mut SimRng) -> Self {
        let mut sizes = vec![obs_dim];
        sizes.extend(&config.hidden);
        let mut vsizes = sizes.clone();
        sizes.push(num_actions);
        vsizes.push(1);
        let policy = Mlp::new(&sizes, 0.01, rng);
        let value = Mlp::new(&vsizes, 1.0, rng);
        PpoAgent { policy, value, config }
    }

    pub fn is_finite(&self) -> bool {
        self.policy.is_finite() && self.value.is_finite()
    }

    pub fn log_probs(&self, obs: &[f64], mask: Option<&[bool]>) -> Vec<f64> {
        masked_log_softmax(&self.policy.forward(obs), mask)
    }

    pub fn value_of(&self, obs: &[f64]) -> f64 {
        self.value.forward(obs)[0]
    }

    /// Most probable allowed action (lowest index on ties).
    pub fn act_greedy(&self, obs: &[f64], mask: Option<&[bool]>) -> usize {
        let lp = self.log_probs(obs, mask);
        let mut best = 0;
        for (j, l) in lp.iter().enumerate() {
            if *l > lp[best] {
                best = j;
            }
        }
        best
    }

    /// Samples an action; returns it with its log-probability.
    pub fn act_sample(&self, obs: &[f64], mask: Option<&[bool]>, rng: &mut SimRng) -> (usize, f64) {
        let lp = self.log_probs(obs, mask);
        let u: f64 = rng.random();
        let mut acc = 0.0;
        let mut last = 0;
        for (j, l) in lp.iter().enumerate() {
            if l.is_finite() {
                acc += l.exp();
                last = j;
                if u < acc {
                    return (j, *l);
                }
            }
        }
        (last, lp[last])
    }

    pub fn to_checkpoint(&self) -> Vec<u8> {
        serde_json::to_vec(&Checkpoint { format_version: CHECKPOINT_VERSION, agent: self.clone() }).expect("serializable")
    }

    pub fn from_checkpoint(bytes: &[u8]) -> Result<Self, PpoError> {
        let ck: Checkpoint = serde_json::from_slice(bytes).map_err(|e| PpoError::Checkpoint(e.to_string()))?;
        if ck.format_version != CHECKPOINT_VERSION {
            return Err(PpoError::Checkpoint(format!("unsupported version {}", ck.format_version)));
        }
        Ok(ck.agent)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub episode: usize,
    /// Mean return over the trailing window ending at `episode`.
    pub mean_reward: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub agent: PpoAgent,
    pub curve: Vec<CurvePoint>,
    pub episodes: usize,
    pub updates: usize,
    pub stopped_early: bool,
}

impl TrainOutcome {
    pub fn curve_csv(&self) -> String {
        let mut s = String::from("episode,mean_reward\n");
        for p in &self.curve {
            s.push_str(&format!("{},{}\n", p.episode, p.mean_reward));
        }
        s
    }
}

/// Early-stop rule: stop once the trailing-window mean has not improved by
/// the relative threshold for `patience` episodes.
#[derive(Debug, Clone)]
pub struct EarlyStopper {
    window: usize,
    patience: usize,
    rel: f64,
    best: Option<f64>,
    best_episode: usize,
}

impl EarlyStopper {
    pub fn new(window: usize, patience: usize, rel: f64) -> Self {
        EarlyStopper { window, patience, rel, best: None, best_episode: 0 }
    }

    /// Feeds the trailing mean after `episode` (1-based); returns true to stop.
    pub fn observe(&mut self, episode: usize, trailing_mean: f64) -> bool {
        if episode < self.window {
            return false;
        }
        let improved = match self.best {
            None => true,
            Some(b) => trailing_mean - b > self.rel * b.abs(),
        };
        if improved {
            self.best = Some(trailing_mean);
            self.best_episode = episode;
        }
        episode >= self.window + self.patience && episode - self.best_episode >= self.patience
    }
}

struct Episode {
    obs: Vec<Vec<f64>>,
    actions: Vec<usize>,
    logps: Vec<f64>,
    rewards: Vec<f64>,
    values: Vec<f64>,
    masks: Vec<Option<Vec<bool>>>,
}

fn clip_grad(g: &mut [f64], max_norm: Option<f64>) {
    if let Some(max) = max_norm {
        let norm = g.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > max {
            g.iter_mut().for_each(|x| *x *= max / norm);
        }
    }
}

/// Seeded PPO training. Rollouts collect whole episodes; advantage
/// normalization and minibatch order are deterministic in `seed`.
pub fn train<E: Env>(env: &mut E, config: &PpoConfig, seed: u64) -> Result<TrainOutcome, PpoError> {
    config.validate()?;
    let mut init_rng = rng::stream(seed, 10);
    let mut env_rng = rng::stream(seed, 11);
    let mut act_rng = rng::stream(seed, 12);
    let mut shuffle_rng = rng::stream(seed, 13);
    let mut agent = PpoAgent::new(env.obs_dim(), env.num_actions(), config.clone(), &mut init_rng);
    let mut popt = Adam::new(agent.policy.num_params(), config.lr);
    let mut vopt = Adam::new(agent.value.num_params(), config.lr);
    let mut returns: Vec<f64> = Vec::new();
    let mut curve = Vec::new();
    let mut stopper =
        EarlyStopper::new(config.early_stop_window, config.early_stop_patience, config.early_stop_rel_improvement);
    let mut updates = 0;
    let mut stopped_early = false;

    while returns.len() < config.max_episodes && !stopped_early {
        let mut samples = Vec::new();
        let mut steps = 0;
        while steps < config.rollout_steps && returns.len() < config.max_episodes {
            let mut ep = Episode {
                obs: vec![],
                actions: vec![],
                logps: vec![],
                rewards: vec![],
                values: vec![],
                masks: vec![],
            };
            let mut obs = env.reset(&mut env_rng);
            loop {
                let mask = env.action_mask();
                let (a, lp) = agent.act_sample(&obs, mask.as_deref(), &mut act_rng);
                let v = agent.value_of(&obs);
                let (next, r, done) = env.step(a);
                ep.obs.push(obs);
                ep.actions.push(a);
                ep.logps.push(lp);
                ep.rewards.push(r);
                ep.values.push(v);
                ep.masks.push(mask);
                obs = next;
                if done {
                    break;
                }
            }
            let t = ep.rewards.len();
            steps += t;
            let mut values = ep.values.clone();
            values.push(0.0);
            let mut dones = vec![false; t];
            dones[t - 1] = true;
            let (adv, ret) = gae(&ep.rewards, &values, &dones, config.gamma, config.lambda)?;
            returns.push(ep.rewards.iter().sum());
            let episode = returns.len();
            let lo = episode.saturating_sub(config.early_stop_window);
            let mean = returns[lo..].iter().sum::<f64>() / (episode - lo) as f64;
            curve.push(CurvePoint { episode, mean_reward: mean });
            if stopper.observe(episode, mean) {
                stopped_early = true;
            }
            for i in 0..t {
                samples.push(Sample {
                    obs: std::mem::take(&mut ep.obs[i]),
                    action: ep.actions[i],
                    old_logp: ep.logps[i],
                    advantage: adv[i],
                    ret: ret[i],
                    mask: ep.masks[i].take(),
                });
            }
            if stopped_early {
                break;
            }
        }
        if config.normalize_advantages {
            let mut adv: Vec<f64> = samples.iter().map(|s| s.advantage).collect();
            normalize(&mut adv);
            for (s, a) in samples.iter_mut().zip(adv) {
                s.advantage = a;
            }
        }
        let mut order: Vec<usize> = (0..samples.len()).collect();
        for _ in 0..config.update_epochs {
            order.shuffle(&mut shuffle_rng);
            for chunk in order.chunks(config.minibatch) {
                let batch: Vec<Sample> = chunk.iter().map(|&i| samples[i].clone()).collect();
                let last_good = agent.clone();
                let diverged = |what: &str| PpoError::Diverged {
                    what: what.into(),
                    episode: returns.len(),
                    last_good: Box::new(last_good.clone()),
                };
                let loss = clipped_loss(&batch, &agent.policy, &agent.value, config).map_err(|_| diverged("loss"))?;
                let mut gp = loss.policy_grad(config.entropy_coef);
                let mut gv = loss.value_grad(config.value_coef);
                clip_grad(&mut gp, config.max_grad_norm);
                clip_grad(&mut gv, config.max_grad_norm);
                popt.step(agent.policy.params_mut(), &gp);
                vopt.step(agent.value.params_mut(), &gv);
                if !agent.is_finite() {
                    return Err(diverged("parameters"));
                }
            }
        }
        updates += 1;
    }
    Ok(TrainOutcome { agent, episodes: returns.len(), curve, updates, stopped_early })
}

/// Mean undiscounted return of the greedy policy over `episodes` resets.
pub fn evaluate_greedy<E: Env>(agent: &PpoAgent, env: &mut E, episodes: usize, seed: u64) -> f64 {
    let mut rng = rng::stream(seed, 20);
    let mut total = 0.0;
    for _ in 0..episodes {
        let mut obs = env.reset(&mut rng);
        loop {
            let mask = env.action_mask();
            let a = agent.act_greedy(&obs, mask.as_deref());
            let (next, r, done) = env.step(a);
            total += r;
            obs = next;
            if done {
                break;
            }
        }
    }
    total / episodes.max(1) as f64
}

/// Allocation environment over random worlds (or a fixed world when
/// `fixed` is set).
#[derive(Debug, Clone)]
pub struct AllocEnv {
    pub spec: WorldSpec,
    pub config: AllocConfig,
    pub fixed: Option<AllocWorld>,
    pub use_mask: bool,
    world: AllocWorld,
}

impl AllocEnv {
    pub fn random(spec: WorldSpec, config: AllocConfig) -> Self {
        let world = AllocWorld::new([0; 4], config.clone());
        AllocEnv { spec, config, fixed: None, use_mask: true, world }
    }

    pub fn fixed(world: AllocWorld) -> Self {
        AllocEnv {
            spec: WorldSpec::default(),
            config: world.config.clone(),
            fixed: Some(world.clone()),
            use_mask: true,
            world,
        }
    }

    pub fn world(&self) -> &AllocWorld {
        &self.world
    }
}

impl Env for AllocEnv {
    fn obs_dim(&self) -> usize {
        STATE_DIM
    }

    fn num_actions(&self) -> usize {
        NUM_ACTIONS
    }

    fn reset(&mut self, rng: &mut SimRng) -> Vec<f64> {
        self.world = match &self.fixed {
            Some(w) => w.clone(),
            None => random_world(&self.spec, &self.config, rng),
        };
        self.world.encode_state().to_vec()
    }

    fn step(&mut self, action: usize) -> (Vec<f64>, f64, bool) {
        let out = self.world.step(action).expect("trainer only emits valid indices");
        (self.world.encode_state().to_vec(), out.reward, out.done)
    }

    fn action_mask(&self) -> Option<Vec<bool>> {
        self.use_mask.then(|| self.world.action_mask().to_vec())
    }
}

/// Drives the greedy policy on a world until it chooses no-op or no useful
/// dispatch remains; returns the dispatches made. Time is not advanced.
pub fn plan_dispatches(agent: &PpoAgent, world: &mut AllocWorld, max: usize) -> Vec<AllocAction> {
    let mut out = Vec::new();
    while out.len() < max {
        let mask = world.action_mask();
        if !mask[1..].iter().any(|m| *m) {
            break;
        }
        let a = AllocAction::decode(agent.act_greedy(&world.encode_state(), Some(&mask))).expect("valid index");
        if a == AllocAction::Noop || !world.dispatch(a) {
            break;
        }
        out.push(a);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gae_single_terminal_step() {
        let (a, r) = gae(&[2.5], &[0.0, 9.0], &[true], 0.99, 0.95).unwrap();
        assert_eq!(a, vec![2.5]);
        assert_eq!(r, vec![2.5]);
    }

    #[test]
    fn gae_lambda_zero_is_td_error() {
        let rewards = [1.0, -0.5, 0.25];
        let values = [0.3, 0.1, -0.2, 0.7];
        let dones = [false, false, false];
        let (a, _) = gae(&rewards, &values, &dones, 0.9, 0.0).unwrap();
        for t in 0..3 {
            let delta = rewards[t] + 0.9 * values[t + 1] - values[t];
            assert!((a[t] - delta).abs() < 1e-15);
        }
        assert!(gae(&rewards, &values[..3], &dones, 0.9, 0.0).is_err());
    }

    #[test]
    fn identical_policies_give_negative_mean_advantage() {
        let mut rng = rng::seeded(3);
        let policy = Mlp::new(&[3, 4, 2], 1.0, &mut rng);
        let value = Mlp::new(&[3, 4, 1], 1.0, &mut rng);
        let batch: Vec<Sample> = (0..4)
            .map(|i| {
                let obs = vec![i as f64 * 0.1, 0.5, -0.2];
                let lp = masked_log_softmax(&policy.forward(&obs), None);
                Sample { obs, action: i % 2, old_logp: lp[i % 2], advantage: i as f64 - 1.0, ret: 0.0, mask: None }
            })
            .collect();
        let cfg = PpoConfig::default();
        let loss = clipped_loss(&batch, &policy, &value, &cfg).unwrap();
        assert!((loss.surrogate + 0.5).abs() < 1e-12);
        assert_eq!(loss.clip_fraction, 0.0);
    }

    #[test]
    fn early_stop_never_before_window_plus_patience() {
        let mut s = EarlyStopper::new(100, 500, 0.01);
        for e in 1..600 {
            assert!(!s.observe(e, 1.0));
        }
        assert!(s.observe(600, 1.0));
    }

    #[test]
    fn checkpoint_round_trip() {
        let agent = PpoAgent::new(4, 3, PpoConfig::default(), &mut rng::seeded(1));
        assert_eq!(PpoAgent::from_checkpoint(&agent.to_checkpoint()).unwrap(), agent);
    }
}
