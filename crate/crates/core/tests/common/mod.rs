#![allow(dead_code)]

use kraft::agent::{loss_and_gradient, AgentConfig, DqnAgent, QNetwork, State, Transition};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const CHAIN_STATES: usize = 5;
pub const LEFT: usize = 0;
pub const RIGHT: usize = 1;

fn one_hot(s: usize) -> State {
    let mut v = vec![0.0; CHAIN_STATES];
    v[s] = 1.0;
    State::new(v, 0)
}

/// Agent settings for the chain: defaults except the discount and a larger
/// step size, since 2000 plain SGD updates at 1e-3 are too few.
pub fn chain_config(seed: u64) -> AgentConfig {
    AgentConfig {
        gamma: 0.9,
        learning_rate: 1e-2,
        seed,
        ..AgentConfig::default()
    }
}

/// Trains on the deterministic 5-state chain for `steps` environment steps
/// (one TD update per step) and reports whether the greedy policy moves
/// right from every non-terminal state.
pub fn chain_run(cfg: AgentConfig, steps: usize) -> bool {
    let mut agent = DqnAgent::new(CHAIN_STATES, 2, cfg.clone()).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x5eed);
    let mut s = rng.gen_range(0..CHAIN_STATES - 1);
    let mut t = 0;
    for _ in 0..steps {
        let a = agent.act(&one_hot(s)).unwrap();
        let next = if a == RIGHT { s + 1 } else { s.saturating_sub(1) };
        let terminal = next == CHAIN_STATES - 1;
        let r = if terminal { 1.0 } else { 0.0 };
        agent.observe(Transition {
            s: one_hot(s),
            a,
            r,
            s_next: one_hot(next),
            terminal,
        });
        agent.train_step().unwrap();
        t += 1;
        if terminal || t >= 20 {
            s = rng.gen_range(0..CHAIN_STATES - 1);
            t = 0;
        } else {
            s = next;
        }
    }
    (0..CHAIN_STATES - 1).all(|s| agent.greedy(&one_hot(s)).unwrap() == RIGHT)
}

pub fn random_batch(rng: &mut ChaCha8Rng, n_in: usize, n_actions: usize, size: usize) -> Vec<Transition> {
    (0..size)
        .map(|_| {
            let mut v = || (0..n_in).map(|_| rng.gen_range(-1.0..1.0)).collect::<Vec<f64>>();
            let (s, s_next) = (v(), v());
            Transition {
                s: State::new(s, 0),
                a: rng.gen_range(0..n_actions),
                r: rng.gen_range(-1.0..1.0),
                s_next: State::new(s_next, 0),
                terminal: rng.gen_bool(0.3),
            }
        })
        .collect()
}

/// Largest relative error between the analytic gradient and central
/// differences with step `delta`.
pub fn max_relative_error(net: &QNetwork, target: &QNetwork, batch: &[Transition], delta: f64) -> f64 {
    let (_, grad) = loss_and_gradient(net, target, batch, 0.9).unwrap();
    let analytic = grad.flatten();
    let params = net.parameters();
    let mut worst: f64 = 0.0;
    for i in 0..params.len() {
        let mut probe = net.clone();
        let mut p = params.clone();
        p[i] = params[i] + delta;
        probe.set_parameters(&p).unwrap();
        let plus = loss_and_gradient(&probe, target, batch, 0.9).unwrap().0;
        p[i] = params[i] - delta;
        probe.set_parameters(&p).unwrap();
        let minus = loss_and_gradient(&probe, target, batch, 0.9).unwrap().0;
        let numeric = (plus - minus) / (2.0 * delta);
        let denom = analytic[i].abs().max(numeric.abs()).max(1e-8);
        worst = worst.max((analytic[i] - numeric).abs() / denom);
    }
    worst
}
