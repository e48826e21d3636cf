//! Dueling double-DQN agents with replay buffers.
//!
//! The same agent type is instantiated twice by the hierarchical
//! controller: once over (core count x frequency) actions and once over
//! priority actions.

use rand::Rng;
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::net::{relu, relu_backward, seeded_rng, Linear};

#[derive(Debug, Error, PartialEq)]
pub enum AgentError {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("state dimension mismatch: expected {expected}, got {got}")]
    StateDimMismatch { expected: usize, got: usize },
    #[error("not enough samples in buffer: have {have}, need {need}")]
    NotEnoughSamples { have: usize, need: usize },
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct AgentConfig {
    pub n_state: usize,
    pub n_actions: usize,
    pub n_hidden: usize,
    pub learning_rate: f64,
    pub gamma: f64,
    pub epsilon_start: f64,
    pub epsilon_end: f64,
    /// Multiplicative decay applied per episode via `decay_epsilon`.
    pub epsilon_decay: f64,
    pub buffer_capacity: usize,
    pub batch_size: usize,
    /// Target network hard-sync period, in learning steps.
    pub target_update_every: usize,
    pub seed: u64,
}

impl AgentConfig {
    pub fn new(n_state: usize, n_actions: usize, seed: u64) -> Self {
        AgentConfig {
            n_state,
            n_actions,
            n_hidden: 64,
            learning_rate: 0.001,
            gamma: 0.99,
            epsilon_start: 1.0,
            epsilon_end: 0.01,
            epsilon_decay: 0.995,
            buffer_capacity: 10_000,
            batch_size: 32,
            target_update_every: 100,
            seed,
        }
    }

    fn validate(&self) -> Result<(), AgentError> {
        if self.n_state == 0 || self.n_actions == 0 || self.n_hidden == 0 {
            return Err(AgentError::InvalidConfig("dims must be >= 1".into()));
        }
        if self.buffer_capacity == 0 || self.batch_size == 0 {
            return Err(AgentError::InvalidConfig(
                "buffer_capacity and batch_size must be >= 1".into(),
            ));
        }
        if !(0.0..1.0).contains(&self.gamma) {
            return Err(AgentError::InvalidConfig("gamma must be in [0, 1)".into()));
        }
        if self.epsilon_end > self.epsilon_start {
            return Err(AgentError::InvalidConfig(
                "epsilon_end must be <= epsilon_start".into(),
            ));
        }
        if self.batch_size > self.buffer_capacity {
            return Err(AgentError::InvalidConfig(
                "batch_size must be <= buffer_capacity".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct Transition {
    pub state: Vec<f64>,
    pub action: usize,
    pub reward: f64,
    pub next_state: Vec<f64>,
    pub done: bool,
    /// True when the transition came from the learned model rather than
    /// the simulator.
    pub simulated: bool,
}

/// Fixed-capacity FIFO ring buffer with seeded uniform sampling.
#[derive(Debug, Clone)]
pub struct ReplayBuffer {
    capacity: usize,
    items: Vec<Transition>,
    head: usize,
}

impl ReplayBuffer {
    pub fn new(capacity: usize) -> Self {
        ReplayBuffer {
            capacity,
            items: Vec::new(),
            head: 0,
        }
    }

    /// Drops all stored transitions, keeping the capacity.
    pub fn clear(&mut self) {
        self.items.clear();
        self.head = 0;
    }

    pub fn push(&mut self, t: Transition) {
        if self.items.len() < self.capacity {
            self.items.push(t);
        } else {
            self.items[self.head] = t;
            self.head = (self.head + 1) % self.capacity;
        }
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &Transition> {
        self.items.iter()
    }

    pub fn sample(&self, n: usize, rng: &mut ChaCha20Rng) -> Result<Vec<&Transition>, AgentError> {
        if self.items.len() < n {
            return Err(AgentError::NotEnoughSamples {
                have: self.items.len(),
                need: n,
            });
        }
        Ok((0..n)
            .map(|_| &self.items[rng.gen_range(0..self.items.len())])
            .collect())
    }
}

/// Dueling head network: shared hidden layer, then separate value and
/// advantage streams. Q(s, a) = V(s) + A(s, a) - mean_a A(s, a).
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct DuelingNet {
    shared: Linear,
    value: Linear,
    advantage: Linear,
}

impl DuelingNet {
    pub fn new(n_state: usize, n_hidden: usize, n_actions: usize, rng: &mut ChaCha20Rng) -> Self {
        DuelingNet {
            shared: Linear::new(n_state, n_hidden, rng),
            value: Linear::new(n_hidden, 1, rng),
            advantage: Linear::new(n_hidden, n_actions, rng),
        }
    }

    pub fn param_count(&self) -> u64 {
        (self.shared.param_count() + self.value.param_count() + self.advantage.param_count()) as u64
    }

    pub fn q_values(&self, state: &[f64]) -> Vec<f64> {
        let (_, _, q) = self.forward_raw(state);
        q
    }

    fn forward_raw(&self, state: &[f64]) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
        let pre = self.shared.forward(state);
        let hid = relu(&pre);
        let v = self.value.forward(&hid)[0];
        let adv = self.advantage.forward(&hid);
        let mean_adv = adv.iter().sum::<f64>() / adv.len() as f64;
        let q = adv.iter().map(|a| v + a - mean_adv).collect();
        (pre, hid, q)
    }
}

/// Structural parameter count of a two-network (online + target) dueling
/// agent whose value and advantage streams are folded into a single
/// hidden-to-output block of width `n_actions` plus one value unit.
pub fn dueling_pair_param_count(n_state: usize, n_hidden: usize, n_actions: usize) -> u64 {
    let (s, h, a) = (n_state as u64, n_hidden as u64, n_actions as u64);
    2 * ((s * h + h) + (h * a + a) + (h + 1))
}

/// D3QN agent: online + target dueling networks, epsilon-greedy policy,
/// double-Q targets, MSE loss, SGD.
#[derive(Debug, Clone)]
pub struct D3qnAgent {
    pub config: AgentConfig,
    pub online: DuelingNet,
    pub target: DuelingNet,
    pub epsilon: f64,
    pub learn_steps: usize,
    rng: ChaCha20Rng,
}

impl D3qnAgent {
    pub fn new(config: AgentConfig) -> Result<Self, AgentError> {
        config.validate()?;
        let mut rng = seeded_rng(config.seed);
        let online = DuelingNet::new(config.n_state, config.n_hidden, config.n_actions, &mut rng);
        let target = online.clone();
        Ok(D3qnAgent {
            epsilon: config.epsilon_start,
            config,
            online,
            target,
            learn_steps: 0,
            rng,
        })
    }

    pub fn q_values(&self, state: &[f64]) -> Result<Vec<f64>, AgentError> {
        if state.len() != self.config.n_state {
            return Err(AgentError::StateDimMismatch {
                expected: self.config.n_state,
                got: state.len(),
            });
        }
        Ok(self.online.q_values(state))
    }

    /// Epsilon-greedy action at the agent's current epsilon. Greedy ties
    /// break toward the lowest index.
    pub fn select_action(&mut self, state: &[f64]) -> Result<usize, AgentError> {
        let eps = self.epsilon;
        self.select_action_with(state, eps)
    }

    /// Epsilon-greedy action at an explicit epsilon.
    pub fn select_action_with(&mut self, state: &[f64], epsilon: f64) -> Result<usize, AgentError> {
        let q = self.q_values(state)?;
        if self.rng.gen::<f64>() < epsilon {
            return Ok(self.rng.gen_range(0..self.config.n_actions));
        }
        Ok(argmax(&q))
    }

    /// Greedy action with exploration disabled; does not touch the RNG.
    pub fn greedy_action(&self, state: &[f64]) -> Result<usize, AgentError> {
        Ok(argmax(&self.q_values(state)?))
    }

    /// One gradient step on a batch of transitions using double-Q
    /// targets: y = r + gamma * Q_target(s', argmax_a Q_online(s', a)).
    /// Returns the batch MSE loss. Syncs the target network every
    /// `target_update_every` calls and decays epsilon.
    pub fn learn_batch(&mut self, batch: &[&Transition]) -> Result<f64, AgentError> {
        if batch.is_empty() {
            return Err(AgentError::NotEnoughSamples { have: 0, need: 1 });
        }
        let n = batch.len() as f64;
        let mut gsw = vec![0.0; self.online.shared.w.len()];
        let mut gsb = vec![0.0; self.online.shared.b.len()];
        let mut gvw = vec![0.0; self.online.value.w.len()];
        let mut gvb = vec![0.0; self.online.value.b.len()];
        let mut gaw = vec![0.0; self.online.advantage.w.len()];
        let mut gab = vec![0.0; self.online.advantage.b.len()];
        let mut total_loss = 0.0;
        let n_actions = self.config.n_actions as f64;

        for t in batch {
            if t.state.len() != self.config.n_state || t.next_state.len() != self.config.n_state
            {
                return Err(AgentError::StateDimMismatch {
                    expected: self.config.n_state,
                    got: t.state.len(),
                });
            }
            let target_y = if t.done {
                t.reward
            } else {
                let a_star = argmax(&self.online.q_values(&t.next_state));
                t.reward + self.config.gamma * self.target.q_values(&t.next_state)[a_star]
            };
            let (pre, hid, q) = self.online.forward_raw(&t.state);
            let err = q[t.action] - target_y;
            total_loss += err * err;
            // dL/dQ_a = 2*err/n for the taken action only; Q folds the
            // value and mean-centered advantage streams.
            let dq = 2.0 * err / n;
            // value stream: dQ_a/dV = 1
            let grad_v = vec![dq];
            // advantage stream: dQ_a/dA_j = [j == a] - 1/n_actions
            let grad_adv: Vec<f64> = (0..self.config.n_actions)
                .map(|j| {
                    let ind = if j == t.action { 1.0 } else { 0.0 };
                    dq * (ind - 1.0 / n_actions)
                })
                .collect();
            let dh_v = self.online.value.backward(&hid, &grad_v, &mut gvw, &mut gvb);
            let dh_a = self
                .online
                .advantage
                .backward(&hid, &grad_adv, &mut gaw, &mut gab);
            let dh: Vec<f64> = dh_v.iter().zip(&dh_a).map(|(a, b)| a + b).collect();
            let dpre = relu_backward(&pre, &dh);
            self.online
                .shared
                .backward(&t.state, &dpre, &mut gsw, &mut gsb);
        }

        let lr = self.config.learning_rate;
        self.online.shared.apply_sgd(&gsw, &gsb, lr, 1.0);
        self.online.value.apply_sgd(&gvw, &gvb, lr, 1.0);
        self.online.advantage.apply_sgd(&gaw, &gab, lr, 1.0);

        self.learn_steps += 1;
        if self.learn_steps % self.config.target_update_every == 0 {
            self.sync_target();
        }
        Ok(total_loss / n)
    }

    /// Exponential per-episode epsilon decay with a floor at epsilon_end.
    pub fn decay_epsilon(&mut self) {
        self.epsilon = (self.epsilon * self.config.epsilon_decay).max(self.config.epsilon_end);
    }

    pub fn sync_target(&mut self) {
        self.target = self.online.clone();
    }
}

/// Decay rate such that epsilon_start reaches epsilon_end after `horizon`
/// episodes of exponential decay.
pub fn epsilon_decay_for_horizon(start: f64, end: f64, horizon: usize) -> f64 {
    if horizon == 0 || end >= start {
        return 1.0;
    }
    (end / start).powf(1.0 / horizon as f64)
}

pub fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = i;
        }
    }
    best
}
