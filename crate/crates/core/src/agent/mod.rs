//! Deep Q-learning generator: Q-network, TD updates, exploration and replay.

mod network;
mod replay;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use network::{Gradients, Layer, QNetwork};
pub use replay::ReplayBuffer;

#[derive(Debug, thiserror::Error)]
pub enum AgentError {
    #[error("expected input of length {expected}, got {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("training batch is empty")]
    EmptyBatch,
    #[error("replay buffer is empty")]
    EmptyBuffer,
    #[error("no q-values to choose from")]
    EmptyQ,
    #[error("action mask has {mask} entries for {n_actions} actions")]
    MaskLength { mask: usize, n_actions: usize },
    #[error("action {action} out of range for {n_actions} actions")]
    BadAction { action: usize, n_actions: usize },
    #[error("target network has layer sizes {target:?}, source has {found:?}")]
    ArchitectureMismatch { target: Vec<usize>, found: Vec<usize> },
    #[error("invalid agent configuration: {0}")]
    BadConfig(&'static str),
    #[error("checkpoint: {0}")]
    Json(#[from] serde_json::Error),
    #[error("checkpoint: {0}")]
    Io(#[from] std::io::Error),
}

/// Network input: a semantic vector together with the size of the feature
/// set it summarizes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct State {
    pub phi: Vec<f64>,
    pub n_features: usize,
}

impl State {
    pub fn new(phi: Vec<f64>, n_features: usize) -> Self {
        Self { phi, n_features }
    }

    /// The vector fed to the network, scaled by 1/(1 + feature count).
    pub fn inputs(&self) -> Vec<f64> {
        let s = 1.0 / (1.0 + self.n_features as f64);
        self.phi.iter().map(|v| v * s).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Transition {
    pub s: State,
    pub a: usize,
    pub r: f64,
    pub s_next: State,
    pub terminal: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentConfig {
    pub gamma: f64,
    pub epsilon_start: f64,
    pub epsilon_end: f64,
    /// Multiplicative decay applied per action selection.
    pub epsilon_decay: f64,
    pub learning_rate: f64,
    pub minibatch: usize,
    /// Training steps between target-network copies.
    pub target_sync: usize,
    pub hidden: Vec<usize>,
    pub buffer_capacity: usize,
    pub seed: u64,
}

impl Default for AgentConfig {
    fn default() -> Self {
        Self {
            gamma: 0.99,
            epsilon_start: 1.0,
            epsilon_end: 0.05,
            epsilon_decay: 0.995,
            learning_rate: 1e-3,
            minibatch: 32,
            target_sync: 50,
            hidden: vec![64, 64],
            buffer_capacity: 10_000,
            seed: 0,
        }
    }
}

impl AgentConfig {
    pub fn validate(&self) -> Result<(), AgentError> {
        if !(0.0..=1.0).contains(&self.gamma) {
            return Err(AgentError::BadConfig("gamma must be in [0, 1]"));
        }
        if !(0.0 <= self.epsilon_end && self.epsilon_end <= self.epsilon_start && self.epsilon_start <= 1.0) {
            return Err(AgentError::BadConfig("need 0 <= epsilon_end <= epsilon_start <= 1"));
        }
        if !(self.epsilon_decay > 0.0 && self.epsilon_decay <= 1.0) {
            return Err(AgentError::BadConfig("epsilon_decay must be in (0, 1]"));
        }
        if !(self.learning_rate > 0.0) {
            return Err(AgentError::BadConfig("learning_rate must be positive"));
        }
        if self.minibatch == 0 || self.target_sync == 0 || self.buffer_capacity == 0 {
            return Err(AgentError::BadConfig("minibatch, target_sync and buffer_capacity must be positive"));
        }
        if self.hidden.contains(&0) {
            return Err(AgentError::BadConfig("hidden layers must be non-empty"));
        }
        Ok(())
    }
}

/// Exploration rate after `step` selections.
pub fn epsilon_at(step: u64, cfg: &AgentConfig) -> f64 {
    let decayed = cfg.epsilon_start * cfg.epsilon_decay.powf(step as f64);
    decayed.max(cfg.epsilon_end)
}

/// Index of the largest value; ties go to the lowest index.
pub fn argmax(q: &[f64]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, &v) in q.iter().enumerate() {
        if best.is_none_or(|b| v > q[b]) {
            best = Some(i);
        }
    }
    best
}

/// ε-greedy choice: uniform with probability ε, otherwise the argmax.
pub fn select_action<R: Rng>(q: &[f64], epsilon: f64, rng: &mut R) -> Result<usize, AgentError> {
    select_action_masked(q, epsilon, &vec![true; q.len()], rng)
}

/// ε-greedy choice restricted to actions whose mask entry is set; an
/// all-false mask falls back to every action.
pub fn select_action_masked<R: Rng>(
    q: &[f64],
    epsilon: f64,
    mask: &[bool],
    rng: &mut R,
) -> Result<usize, AgentError> {
    if q.is_empty() {
        return Err(AgentError::EmptyQ);
    }
    if mask.len() != q.len() {
        return Err(AgentError::MaskLength {
            mask: mask.len(),
            n_actions: q.len(),
        });
    }
    let mut valid: Vec<usize> = (0..q.len()).filter(|&a| mask[a]).collect();
    if valid.is_empty() {
        valid = (0..q.len()).collect();
    }
    if rng.gen::<f64>() < epsilon {
        Ok(valid[rng.gen_range(0..valid.len())])
    } else {
        let scores: Vec<f64> = valid.iter().map(|&a| q[a]).collect();
        Ok(valid[argmax(&scores).expect("non-empty")])
    }
}

/// TD target for one transition under the frozen network.
fn td_target(target_net: &QNetwork, t: &Transition, gamma: f64) -> Result<f64, AgentError> {
    if t.terminal {
        return Ok(t.r);
    }
    let next = target_net.forward(&t.s_next.inputs())?;
    Ok(t.r + gamma * next.iter().cloned().fold(f64::NEG_INFINITY, f64::max))
}

/// Mean squared TD error over `batch` and its gradient with respect to the
/// parameters of `net`; `target_net` is held fixed.
pub fn loss_and_gradient(
    net: &QNetwork,
    target_net: &QNetwork,
    batch: &[Transition],
    gamma: f64,
) -> Result<(f64, Gradients), AgentError> {
    if batch.is_empty() {
        return Err(AgentError::EmptyBatch);
    }
    let b = batch.len() as f64;
    let mut grad = net.zero_gradients();
    let mut loss = 0.0;
    for t in batch {
        if t.a >= net.n_actions() {
            return Err(AgentError::BadAction {
                action: t.a,
                n_actions: net.n_actions(),
            });
        }
        let y = td_target(target_net, t, gamma)?;
        let input = t.s.inputs();
        let q = net.forward(&input)?[t.a];
        let residual = q - y;
        loss += residual * residual / b;
        net.accumulate_gradient(&input, t.a, 2.0 * residual / b, &mut grad);
    }
    Ok((loss, grad))
}

/// One SGD step on the TD loss; returns the loss before the step.
pub fn td_train_step(
    net: &mut QNetwork,
    target_net: &QNetwork,
    batch: &[Transition],
    cfg: &AgentConfig,
) -> Result<f64, AgentError> {
    let (loss, grad) = loss_and_gradient(net, target_net, batch, cfg.gamma)?;
    net.descend(&grad, cfg.learning_rate);
    Ok(loss)
}

/// Copies `net` into `target_net`.
pub fn sync_target(net: &QNetwork, target_net: &mut QNetwork) -> Result<(), AgentError> {
    target_net.copy_from(net)
}

/// Policy and target networks, replay memory and schedules in one owner.
#[derive(Debug, Clone)]
pub struct DqnAgent {
    cfg: AgentConfig,
    net: QNetwork,
    target: QNetwork,
    buffer: ReplayBuffer,
    rng: ChaCha8Rng,
    selections: u64,
    train_steps: u64,
}

impl DqnAgent {
    pub fn new(n_inputs: usize, n_actions: usize, cfg: AgentConfig) -> Result<Self, AgentError> {
        cfg.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let mut sizes = vec![n_inputs];
        sizes.extend(&cfg.hidden);
        sizes.push(n_actions);
        let net = QNetwork::new(&sizes, &mut rng)?;
        let target = net.clone();
        let buffer = ReplayBuffer::new(cfg.buffer_capacity)?;
        Ok(Self {
            cfg,
            net,
            target,
            buffer,
            rng,
            selections: 0,
            train_steps: 0,
        })
    }

    pub fn config(&self) -> &AgentConfig {
        &self.cfg
    }

    pub fn network(&self) -> &QNetwork {
        &self.net
    }

    pub fn target_network(&self) -> &QNetwork {
        &self.target
    }

    pub fn buffer(&self) -> &ReplayBuffer {
        &self.buffer
    }

    pub fn epsilon(&self) -> f64 {
        epsilon_at(self.selections, &self.cfg)
    }

    pub fn q_values(&self, s: &State) -> Result<Vec<f64>, AgentError> {
        self.net.forward(&s.inputs())
    }

    /// ε-greedy action; advances the exploration schedule.
    pub fn act(&mut self, s: &State) -> Result<usize, AgentError> {
        let all = vec![true; self.net.n_actions()];
        self.act_masked(s, &all)
    }

    /// ε-greedy action among the allowed ones.
    pub fn act_masked(&mut self, s: &State, mask: &[bool]) -> Result<usize, AgentError> {
        let q = self.q_values(s)?;
        let a = select_action_masked(&q, self.epsilon(), mask, &mut self.rng)?;
        self.selections += 1;
        Ok(a)
    }

    /// Greedy action without exploration.
    pub fn greedy(&self, s: &State) -> Result<usize, AgentError> {
        argmax(&self.q_values(s)?).ok_or(AgentError::EmptyQ)
    }

    pub fn observe(&mut self, t: Transition) {
        self.buffer.push(t);
    }

    /// Samples a minibatch, takes one TD step and syncs the target network
    /// every `target_sync` steps. Returns the pre-step loss.
    pub fn train_step(&mut self) -> Result<f64, AgentError> {
        let size = self.cfg.minibatch.min(self.buffer.len());
        let batch = self.buffer.sample(size, &mut self.rng)?;
        let loss = td_train_step(&mut self.net, &self.target, &batch, &self.cfg)?;
        self.train_steps += 1;
        if self.train_steps.is_multiple_of(self.cfg.target_sync as u64) {
            sync_target(&self.net, &mut self.target)?;
        }
        Ok(loss)
    }

    pub fn train_steps(&self) -> u64 {
        self.train_steps
    }

    pub fn save(&self, path: &std::path::Path) -> Result<(), AgentError> {
        std::fs::write(path, self.net.to_json())?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg() -> AgentConfig {
        AgentConfig::default()
    }

    fn transition(s: Vec<f64>, a: usize, r: f64, terminal: bool) -> Transition {
        Transition {
            s: State::new(s.clone(), 0),
            a,
            r,
            s_next: State::new(s, 0),
            terminal,
        }
    }

    #[test]
    fn epsilon_schedule() {
        let c = cfg();
        assert_eq!(epsilon_at(0, &c), 1.0);
        assert!((epsilon_at(100, &c) - 0.995f64.powi(100)).abs() < 1e-12);
        assert!((epsilon_at(100, &c) - 0.6058).abs() < 5e-5);
        assert_eq!(epsilon_at(1_000_000, &c), 0.05);
        for s in 0..2000 {
            assert!(epsilon_at(s + 1, &c) <= epsilon_at(s, &c));
        }
    }

    #[test]
    fn greedy_selection_and_ties() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert_eq!(select_action(&[0.1, 0.9, 0.3], 0.0, &mut rng).unwrap(), 1);
        assert_eq!(select_action(&[0.5, 0.5], 0.0, &mut rng).unwrap(), 0);
        assert!(matches!(select_action(&[], 0.5, &mut rng), Err(AgentError::EmptyQ)));
    }

    #[test]
    fn masked_selection() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let q = [0.1, 0.9, 0.3];
        assert_eq!(select_action_masked(&q, 0.0, &[true, false, true], &mut rng).unwrap(), 2);
        for _ in 0..200 {
            assert_ne!(select_action_masked(&q, 1.0, &[true, false, true], &mut rng).unwrap(), 1);
        }
        assert_eq!(select_action_masked(&q, 0.0, &[false; 3], &mut rng).unwrap(), 1);
        assert!(select_action_masked(&q, 0.0, &[true], &mut rng).is_err());
    }

    #[test]
    fn uniform_exploration_frequencies() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let mut counts = [0usize; 3];
        let n = 10_000;
        for _ in 0..n {
            counts[select_action(&[0.0, 5.0, 1.0], 1.0, &mut rng).unwrap()] += 1;
        }
        let p = 1.0 / 3.0;
        let sigma = (n as f64 * p * (1.0 - p)).sqrt();
        for c in counts {
            assert!((c as f64 - n as f64 * p).abs() <= 3.0 * sigma, "{counts:?}");
        }
    }

    #[test]
    fn td_loss_hand_cases() {
        let mut net = QNetwork::zeros(&[2, 3, 2]);
        let target = net.clone();
        let zero = [transition(vec![1.0, 0.0], 0, 0.0, true)];
        assert_eq!(td_train_step(&mut net, &target, &zero, &cfg()).unwrap(), 0.0);
        assert_eq!(net, target);
        let one = [transition(vec![1.0, 0.0], 1, 1.0, true)];
        assert_eq!(td_train_step(&mut net, &target, &one, &cfg()).unwrap(), 1.0);
        assert_ne!(net, target);
        assert!(matches!(td_train_step(&mut net, &target, &[], &cfg()), Err(AgentError::EmptyBatch)));
    }

    #[test]
    fn non_terminal_uses_target_max() {
        let mut target = QNetwork::zeros(&[1, 2]);
        target.set_parameters(&[0.0, 0.0, 2.0, 3.0]).unwrap();
        let net = QNetwork::zeros(&[1, 2]);
        let t = [transition(vec![1.0], 0, 1.0, false)];
        let (loss, _) = loss_and_gradient(&net, &target, &t, 0.5).unwrap();
        // y = 1 + 0.5·3, Q = 0
        assert_eq!(loss, 2.5f64.powi(2));
    }

    #[test]
    fn sync_copies_exactly() {
        let mut agent = DqnAgent::new(3, 2, AgentConfig { hidden: vec![4], ..cfg() }).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut other = QNetwork::new(&[3, 4, 2], &mut rng).unwrap();
        sync_target(agent.network(), &mut other).unwrap();
        sync_target(agent.network(), &mut other).unwrap();
        for _ in 0..100 {
            let x: Vec<f64> = (0..3).map(|_| rng.gen_range(-1.0..1.0)).collect();
            assert_eq!(agent.network().forward(&x).unwrap(), other.forward(&x).unwrap());
        }
        // frozen target between syncs
        let before = agent.target_network().clone();
        agent.observe(transition(vec![1.0, 0.0, 0.0], 1, 1.0, true));
        for _ in 0..10 {
            agent.train_step().unwrap();
        }
        assert_eq!(agent.target_network(), &before);
        assert_ne!(agent.network(), &before);
    }

    #[test]
    fn state_scaling() {
        assert_eq!(State::new(vec![2.0, 4.0], 1).inputs(), vec![1.0, 2.0]);
    }

    #[test]
    fn config_validation() {
        assert!(AgentConfig { gamma: 1.5, ..cfg() }.validate().is_err());
        assert!(AgentConfig { epsilon_end: 0.5, epsilon_start: 0.1, ..cfg() }.validate().is_err());
        assert!(AgentConfig { minibatch: 0, ..cfg() }.validate().is_err());
        assert!(cfg().validate().is_ok());
    }
}
