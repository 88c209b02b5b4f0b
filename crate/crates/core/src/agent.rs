//! Deep Q-learning over frozen encoder features.
//!
//! The encoder never trains here: features for every grid state are
//! precomputed into a [`FeatureTable`] up front, which both enforces the
//! freeze contract and makes rollouts cheap. The Q-network is a small MLP
//! trained with experience replay, an epsilon-greedy behaviour policy and
//! a periodically synced target network.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec;
use crate::gridworld::{enumerate_states, state_index, step, FactorState, GridAction, GridSpec, DEFAULT_STATE_CAP};
use crate::metrics::LatentMap;
use crate::nn::{Adam, AdamConfig, Dense, ParamAlloc};

/// Corner-reaching task: every timestep costs `step_reward` until the goal
/// or the step cap.
#[derive(Debug, Clone, PartialEq)]
pub struct RlTask {
    pub spec: GridSpec,
    pub start: FactorState,
    pub goal: FactorState,
    pub step_reward: f64,
    pub gamma: f64,
    pub max_episode_steps: usize,
}

impl RlTask {
    /// Bottom-right start, top-left goal.
    pub fn corner_task(spec: GridSpec, gamma: f64, max_episode_steps: usize) -> Result<Self> {
        let far = spec.grid_cells_per_axis as u32 - 1;
        let task = RlTask {
            spec,
            start: FactorState::new(vec![(far, far); spec.num_squares]),
            goal: FactorState::new(vec![(0, 0); spec.num_squares]),
            step_reward: -1.0,
            gamma,
            max_episode_steps,
        };
        task.validate()?;
        Ok(task)
    }

    pub fn validate(&self) -> Result<()> {
        self.spec.validate()?;
        self.start.validate(&self.spec)?;
        self.goal.validate(&self.spec)?;
        if self.start == self.goal {
            return Err(Error::Precondition("start must differ from goal".into()));
        }
        if !(0.0..1.0).contains(&self.gamma) {
            return Err(Error::Precondition("gamma must be in [0, 1)".into()));
        }
        if self.max_episode_steps == 0 {
            return Err(Error::Precondition("max_episode_steps must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DqnConfig {
    /// Environment steps (one gradient step each once learning starts).
    pub total_steps: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub replay_capacity: usize,
    /// Steps before gradient updates begin.
    pub learning_starts: usize,
    pub target_sync_interval: usize,
    pub epsilon_start: f64,
    pub epsilon_end: f64,
    /// Fraction of total steps over which epsilon decays linearly.
    pub epsilon_decay_fraction: f64,
    pub hidden: usize,
}

impl Default for DqnConfig {
    fn default() -> Self {
        DqnConfig {
            total_steps: 20_000,
            batch_size: 64,
            learning_rate: 1e-3,
            replay_capacity: 10_000,
            learning_starts: 500,
            target_sync_interval: 200,
            epsilon_start: 1.0,
            epsilon_end: 0.05,
            epsilon_decay_fraction: 0.5,
            hidden: 64,
        }
    }
}

/// Frozen per-state feature vectors, indexed by `state_index`.
#[derive(Debug, Clone)]
pub struct FeatureTable {
    pub dim: usize,
    features: Vec<Vec<f64>>,
}

impl FeatureTable {
    /// Encode every state once through a frozen latent map.
    pub fn from_latent_map(map: &dyn LatentMap, spec: &GridSpec) -> Result<Self> {
        let states = enumerate_states(spec, DEFAULT_STATE_CAP)?;
        let features = map.encode_states(spec, &states)?;
        Ok(FeatureTable { dim: map.latent_dim(), features })
    }

    /// Oracle features: the raw ground-truth factors.
    pub fn from_factors(spec: &GridSpec) -> Result<Self> {
        let states = enumerate_states(spec, DEFAULT_STATE_CAP)?;
        let features = states
            .iter()
            .map(|s| s.factors().iter().map(|&f| f as f64).collect())
            .collect();
        Ok(FeatureTable { dim: spec.num_factors(), features })
    }

    /// Deterministic pseudo-random features, the no-structure baseline.
    pub fn random(spec: &GridSpec, dim: usize, seed: u64) -> Result<Self> {
        let states = enumerate_states(spec, DEFAULT_STATE_CAP)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let features = states
            .iter()
            .map(|_| (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect())
            .collect();
        Ok(FeatureTable { dim, features })
    }

    pub fn get(&self, idx: usize) -> &[f64] {
        &self.features[idx]
    }
}

/// Posterior means of the rendered observation under a frozen encoder.
pub fn extract_features(
    frozen_encoder: &dyn LatentMap,
    state: &FactorState,
    spec: &GridSpec,
) -> Result<Vec<f64>> {
    state.validate(spec)?;
    Ok(frozen_encoder
        .encode_states(spec, std::slice::from_ref(state))?
        .remove(0))
}

/// Two-hidden-layer MLP mapping features to one action value per action.
#[derive(Debug, Clone)]
pub struct QNetwork {
    l1: Dense,
    l2: Dense,
    head: Dense,
    pub params: Vec<f64>,
}

impl QNetwork {
    pub fn new(feature_dim: usize, num_actions: usize, hidden: usize, seed: u64) -> Self {
        let mut alloc = ParamAlloc::new();
        let l1 = Dense::new(&mut alloc, feature_dim, hidden);
        let l2 = Dense::new(&mut alloc, hidden, hidden);
        let head = Dense::new(&mut alloc, hidden, num_actions);
        let mut params = vec![0.0; alloc.len()];
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        l1.init(&mut params, 2.0, &mut rng);
        l2.init(&mut params, 2.0, &mut rng);
        head.init(&mut params, 1.0, &mut rng);
        QNetwork { l1, l2, head, params }
    }

    pub fn num_actions(&self) -> usize {
        self.head.out_dim
    }

    pub fn forward(&self, features: &[f64]) -> Vec<f64> {
        self.forward_with(&self.params, features).0
    }

    fn forward_with(&self, params: &[f64], features: &[f64]) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
        let mut h1 = self.l1.forward(params, features);
        crate::nn::relu_inplace(&mut h1);
        let mut h2 = self.l2.forward(params, &h1);
        crate::nn::relu_inplace(&mut h2);
        let q = self.head.forward(params, &h2);
        (q, h1, h2)
    }

    /// Accumulate gradients of `0.5 * sum_i dq_i^2`-style upstream `dq`
    /// into `grads`.
    fn backward(
        &self,
        params: &[f64],
        grads: &mut [f64],
        features: &[f64],
        h1: &[f64],
        h2: &[f64],
        dq: &[f64],
    ) {
        let mut dh2 = self.head.backward(params, grads, h2, dq);
        crate::nn::relu_backward_inplace(&mut dh2, h2);
        let mut dh1 = self.l2.backward(params, grads, h1, &dh2);
        crate::nn::relu_backward_inplace(&mut dh1, h1);
        self.l1.backward(params, grads, features, &dh1);
    }

    pub fn greedy_action(&self, features: &[f64]) -> usize {
        let q = self.forward(features);
        argmax(&q)
    }
}

fn argmax(xs: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in xs.iter().enumerate() {
        if v > xs[best] {
            best = i;
        }
    }
    best
}

#[derive(Debug, Clone, Copy)]
struct Replay {
    state: usize,
    action: usize,
    reward: f64,
    next_state: usize,
    /// True terminal (goal reached); step-cap truncation still bootstraps.
    done: bool,
}

/// Per-episode returns plus the trained network.
#[derive(Debug, Clone)]
pub struct DqnOutput {
    pub returns: Vec<f64>,
    pub qnet: QNetwork,
}

/// Standard DQN over frozen features. Deterministic per seed; aborts with
/// a diagnostic if the TD loss goes non-finite.
pub fn dqn_train(
    task: &RlTask,
    features: &FeatureTable,
    cfg: &DqnConfig,
    seed: u64,
) -> Result<DqnOutput> {
    task.validate()?;
    if cfg.total_steps == 0 || cfg.batch_size == 0 {
        return Err(Error::Precondition("total_steps and batch_size must be positive".into()));
    }
    let actions = GridAction::all(&task.spec);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut qnet = QNetwork::new(features.dim, actions.len(), cfg.hidden, rng.random());
    let mut target = qnet.clone();
    let mut adam = Adam::new(
        AdamConfig { learning_rate: cfg.learning_rate, ..Default::default() },
        qnet.params.len(),
    );
    let mut replay: Vec<Replay> = Vec::with_capacity(cfg.replay_capacity);
    let mut replay_next = 0usize;

    let mut returns = Vec::new();
    let mut state = task.start.clone();
    let mut state_idx = state_index(&state, &task.spec);
    let goal_idx = state_index(&task.goal, &task.spec);
    let mut episode_return = 0.0;
    let mut episode_steps = 0usize;
    let decay_steps = (cfg.total_steps as f64 * cfg.epsilon_decay_fraction).max(1.0);

    for t in 0..cfg.total_steps {
        let epsilon = if (t as f64) < decay_steps {
            cfg.epsilon_start + (cfg.epsilon_end - cfg.epsilon_start) * (t as f64 / decay_steps)
        } else {
            cfg.epsilon_end
        };
        let action_idx = if rng.random_range(0.0..1.0) < epsilon {
            rng.random_range(0..actions.len())
        } else {
            qnet.greedy_action(features.get(state_idx))
        };
        let next = step(&state, actions[action_idx], &task.spec)?;
        let next_idx = state_index(&next, &task.spec);
        let reward = task.step_reward;
        let done = next_idx == goal_idx;
        let record = Replay { state: state_idx, action: action_idx, reward, next_state: next_idx, done };
        if replay.len() < cfg.replay_capacity {
            replay.push(record);
        } else {
            replay[replay_next] = record;
            replay_next = (replay_next + 1) % cfg.replay_capacity;
        }

        episode_return += reward;
        episode_steps += 1;
        if done || episode_steps >= task.max_episode_steps {
            returns.push(episode_return);
            state = task.start.clone();
            state_idx = state_index(&state, &task.spec);
            episode_return = 0.0;
            episode_steps = 0;
        } else {
            state = next;
            state_idx = next_idx;
        }

        if t >= cfg.learning_starts && !replay.is_empty() {
            let mut grads = vec![0.0; qnet.params.len()];
            let mut td_loss = 0.0;
            for _ in 0..cfg.batch_size {
                let r = replay[rng.random_range(0..replay.len())];
                let next_q = target.forward(features.get(r.next_state));
                let bootstrap = if r.done { 0.0 } else { task.gamma * next_q[argmax(&next_q)] };
                let target_val = r.reward + bootstrap;
                let (q, h1, h2) = qnet.forward_with(&qnet.params, features.get(r.state));
                let err = q[r.action] - target_val;
                td_loss += err * err;
                let mut dq = vec![0.0; q.len()];
                dq[r.action] = 2.0 * err / cfg.batch_size as f64;
                qnet.backward(&qnet.params, &mut grads, features.get(r.state), &h1, &h2, &dq);
            }
            td_loss /= cfg.batch_size as f64;
            if !td_loss.is_finite() {
                return Err(Error::Divergence { step: t, loss: td_loss });
            }
            adam.step(&mut qnet.params, &grads);
        }
        if cfg.target_sync_interval > 0 && (t + 1) % cfg.target_sync_interval == 0 {
            target = qnet.clone();
        }
    }

    Ok(DqnOutput { returns, qnet })
}

/// Evaluation policy: greedy over a trained network or uniform random.
pub enum Policy<'a> {
    Greedy(&'a QNetwork, &'a FeatureTable),
    UniformRandom,
}

/// Roll out `episodes` episodes and report the mean and standard deviation
/// of episode returns. Greedy rollouts take epsilon = 0.
pub fn evaluate_policy(
    policy: &Policy<'_>,
    task: &RlTask,
    episodes: usize,
    seed: u64,
) -> Result<(f64, f64)> {
    task.validate()?;
    if episodes == 0 {
        return Err(Error::Precondition("need at least one evaluation episode".into()));
    }
    let actions = GridAction::all(&task.spec);
    let goal_idx = state_index(&task.goal, &task.spec);
    let per_episode = |ep: usize| -> Result<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(ep as u64));
        let mut state = task.start.clone();
        let mut ret = 0.0;
        for _ in 0..task.max_episode_steps {
            let a = match policy {
                Policy::Greedy(qnet, features) => {
                    qnet.greedy_action(features.get(state_index(&state, &task.spec)))
                }
                Policy::UniformRandom => rng.random_range(0..actions.len()),
            };
            state = step(&state, actions[a], &task.spec)?;
            ret += task.step_reward;
            if state_index(&state, &task.spec) == goal_idx {
                break;
            }
        }
        Ok(ret)
    };
    let rets = exec::map_range(episodes, per_episode);
    let rets: Vec<f64> = rets.into_iter().collect::<Result<_>>()?;
    let mean = rets.iter().sum::<f64>() / episodes as f64;
    let var = rets.iter().map(|r| (r - mean) * (r - mean)).sum::<f64>() / episodes as f64;
    Ok((mean, var.sqrt()))
}
