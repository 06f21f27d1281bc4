//! The feature-engineering loop: vectorize, act, expand, filter, evaluate,
//! reward, learn.

use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::agent::{AgentConfig, AgentError, DqnAgent, State, Transition};
use crate::data::{Dataset, Task};
use crate::kg::{KnowledgeGraph, Verdict};
use crate::learn::{
    evaluate_cv, feature_importance, impute_medians, train, FeatureMatrix, LearnError, LearnerKind, LearnerSpec,
    Matrix, Target,
};
use crate::transform::{catalog, expand_action, ExpandOptions, FeatureExpr, TransformError};
use crate::vectorize::phi_state;

/// Upper bound on the pipeline length.
pub const MAX_STEPS: usize = 20;

#[derive(Debug, thiserror::Error)]
pub enum EngineError {
    #[error("invalid engine configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Transform(#[from] TransformError),
    #[error(transparent)]
    Learn(#[from] LearnError),
    #[error(transparent)]
    Agent(#[from] AgentError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Policy {
    Dqn,
    /// Uniform random actions; no learning.
    Random,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EngineConfig {
    pub episodes: usize,
    /// Transformations applied per episode.
    pub steps: usize,
    /// Candidates kept per expansion.
    pub cap: usize,
    /// Maximum feature-set size after pruning.
    pub budget: usize,
    pub max_order: usize,
    pub k: usize,
    /// Learner used for scoring; by task when absent.
    pub learner: Option<LearnerKind>,
    pub seed: u64,
    /// Episodes without a new best score before stopping.
    pub patience: usize,
    pub policy: Policy,
    pub agent: AgentConfig,
}

impl Default for EngineConfig {
    fn default() -> Self {
        Self {
            episodes: 30,
            steps: 5,
            cap: 8,
            budget: 64,
            max_order: 5,
            k: 5,
            learner: None,
            seed: 0,
            patience: 10,
            policy: Policy::Dqn,
            agent: AgentConfig::default(),
        }
    }
}

impl EngineConfig {
    pub fn validate(&self) -> Result<(), EngineError> {
        let counts = [
            ("episodes", self.episodes),
            ("steps", self.steps),
            ("cap", self.cap),
            ("budget", self.budget),
            ("k", self.k),
            ("patience", self.patience),
        ];
        for (name, v) in counts {
            if v == 0 {
                return Err(EngineError::Config(format!("{name} must be at least 1")));
            }
        }
        if self.steps > MAX_STEPS {
            return Err(EngineError::Config(format!("steps must be at most {MAX_STEPS}")));
        }
        self.agent.validate()?;
        Ok(())
    }

    pub fn learner_spec(&self, task: Task) -> LearnerSpec {
        let kind = self.learner.unwrap_or_else(|| LearnerKind::default_for(task));
        LearnerSpec::new(kind).with_seed(self.seed)
    }
}

/// Signed change in score between consecutive states.
pub fn compute_reward(prev: f64, new: f64) -> f64 {
    new - prev
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Discard {
    pub feature: String,
    pub expression: FeatureExpr,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub step: usize,
    pub action: String,
    /// Exploration rate used for this choice; absent for the random policy.
    pub epsilon: Option<f64>,
    pub generated: usize,
    pub kept: Vec<String>,
    pub discarded: Vec<Discard>,
    /// Generated features removed to respect the budget.
    pub pruned: Vec<String>,
    pub score_before: f64,
    pub score_after: f64,
    pub reward: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeTrace {
    pub episode: usize,
    pub steps: Vec<StepRecord>,
    pub final_score: f64,
    pub best_so_far: f64,
}

impl EpisodeTrace {
    pub fn total_reward(&self) -> f64 {
        self.steps.iter().map(|s| s.reward).sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Origin {
    Raw,
    Generated,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureReport {
    pub name: String,
    pub expression: FeatureExpr,
    #[serde(flatten)]
    pub verdict: Verdict,
    pub unit: String,
    pub origin: Origin,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrderPoint {
    pub max_order: usize,
    pub best_score: f64,
    pub baseline_score: f64,
}

/// Files a run was made from, echoed into the result.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct RunInputs {
    pub dataset: String,
    pub schema: Option<String>,
    pub kg: Option<String>,
    pub mapping: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FEResult {
    pub seed: u64,
    pub config: EngineConfig,
    pub task: Task,
    pub learner: LearnerKind,
    pub inputs: Option<RunInputs>,
    pub baseline_score: f64,
    pub best_score: f64,
    pub best_episode: Option<usize>,
    pub best_features: Vec<FeatureReport>,
    pub trajectory: Vec<EpisodeTrace>,
    pub order_sweep: Option<Vec<OrderPoint>>,
}

impl FEResult {
    pub fn discards(&self) -> impl Iterator<Item = (usize, usize, &Discard)> {
        self.trajectory
            .iter()
            .flat_map(|e| e.steps.iter().flat_map(move |s| s.discarded.iter().map(move |d| (e.episode, s.step, d))))
    }

    pub fn feature(&self, name: &str) -> Option<&FeatureReport> {
        self.best_features.iter().find(|f| f.name == name)
    }
}

/// Current feature set with evaluated values.
#[derive(Debug, Clone)]
struct Pool {
    exprs: Vec<FeatureExpr>,
    values: Vec<Vec<Option<f64>>>,
    n_raw: usize,
}

impl Pool {
    fn key(&self) -> Vec<String> {
        let mut k: Vec<String> = self.exprs.iter().map(FeatureExpr::render_name).collect();
        k.sort();
        k
    }

    fn matrix(&self) -> FeatureMatrix {
        FeatureMatrix::new(self.values.clone())
    }
}

enum Chooser {
    Dqn(Box<DqnAgent>),
    Random(ChaCha8Rng),
}

pub struct Engine<'a> {
    d: &'a Dataset,
    kg: &'a KnowledgeGraph,
    cfg: EngineConfig,
    learner: LearnerSpec,
    target: Vec<f64>,
    raw: Pool,
    cache: HashMap<Vec<String>, f64>,
    chooser: Chooser,
}

impl<'a> Engine<'a> {
    pub fn new(d: &'a Dataset, kg: &'a KnowledgeGraph, mut cfg: EngineConfig) -> Result<Self, EngineError> {
        cfg.validate()?;
        cfg.agent.seed = cfg.seed;
        let learner = cfg.learner_spec(d.task());
        if !learner.kind.supports(d.task()) {
            return Err(EngineError::Config(format!(
                "learner {:?} does not support {:?}",
                learner.kind,
                d.task()
            )));
        }
        let target = match Target::from_dataset(d) {
            Target::Classes { labels, .. } => labels.into_iter().map(|l| l as f64).collect(),
            Target::Values(v) => v,
        };
        let (exprs, values): (Vec<FeatureExpr>, Vec<Vec<Option<f64>>>) = d
            .feature_columns()
            .map(|c| (FeatureExpr::raw(c.name.clone()), c.encoded()))
            .unzip();
        let raw = Pool {
            n_raw: exprs.len(),
            exprs,
            values,
        };
        let chooser = match cfg.policy {
            Policy::Dqn => {
                Chooser::Dqn(Box::new(DqnAgent::new(kg.concept_count(), catalog().len(), cfg.agent.clone())?))
            }
            Policy::Random => Chooser::Random(ChaCha8Rng::seed_from_u64(cfg.seed)),
        };
        Ok(Self {
            d,
            kg,
            cfg,
            learner,
            target,
            raw,
            cache: HashMap::new(),
            chooser,
        })
    }

    pub fn config(&self) -> &EngineConfig {
        &self.cfg
    }

    pub fn agent(&self) -> Option<&DqnAgent> {
        match &self.chooser {
            Chooser::Dqn(a) => Some(a),
            Chooser::Random(_) => None,
        }
    }

    fn score(&mut self, pool: &Pool) -> Result<f64, EngineError> {
        let key = pool.key();
        if let Some(&s) = self.cache.get(&key) {
            return Ok(s);
        }
        let s = evaluate_cv(&self.learner, self.d, &pool.matrix(), self.cfg.k, self.cfg.seed)?;
        self.cache.insert(key, s);
        Ok(s)
    }

    /// Cross-validated score of the raw feature set.
    pub fn baseline(&mut self) -> Result<f64, EngineError> {
        let raw = self.raw.clone();
        self.score(&raw)
    }

    fn state(&self, pool: &Pool) -> State {
        State::new(phi_state(self.kg, &pool.exprs).as_f64(), pool.exprs.len())
    }

    /// Actions with at least one applicable operand tuple in `pool`.
    fn action_mask(&self, pool: &Pool) -> Result<Vec<bool>, EngineError> {
        let kinds = pool
            .exprs
            .iter()
            .map(|e| e.kind(self.d))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(catalog().iter().map(|op| op.applicable_to(&kinds)).collect())
    }

    fn choose(&mut self, s: &State, mask: &[bool]) -> Result<(usize, Option<f64>), EngineError> {
        match &mut self.chooser {
            Chooser::Dqn(agent) => {
                let eps = agent.epsilon();
                Ok((agent.act_masked(s, mask)?, Some(eps)))
            }
            Chooser::Random(rng) => {
                let mut valid: Vec<usize> = (0..mask.len()).filter(|&a| mask[a]).collect();
                if valid.is_empty() {
                    valid = (0..mask.len()).collect();
                }
                Ok((valid[rng.gen_range(0..valid.len())], None))
            }
        }
    }

    /// Drops the least important generated features until the pool fits the
    /// budget; returns their names.
    fn prune(&self, pool: &mut Pool) -> Result<Vec<String>, EngineError> {
        if pool.exprs.len() <= self.cfg.budget {
            return Ok(Vec::new());
        }
        let n = self.d.n_rows();
        let all: Vec<usize> = (0..n).collect();
        let fill = impute_medians(&pool.matrix(), &all);
        let cols: Vec<Vec<f64>> = pool
            .values
            .iter()
            .zip(&fill)
            .map(|(col, &f)| col.iter().map(|v| v.unwrap_or(f)).collect())
            .collect();
        let spec = LearnerSpec::new(LearnerKind::RandomForest).with_seed(self.cfg.seed);
        let model = train(&spec, &Matrix::from_columns(n, &cols), &Target::from_dataset(self.d))?;
        let importance = feature_importance(&model)?;
        // generated features, least important first; later additions lose ties
        let mut generated: Vec<usize> = (pool.n_raw..pool.exprs.len()).collect();
        generated.sort_by(|&a, &b| importance[a].total_cmp(&importance[b]).then(b.cmp(&a)));
        let excess = pool.exprs.len() - self.cfg.budget;
        let mut drop: Vec<usize> = generated.into_iter().take(excess).collect();
        drop.sort_unstable();
        let names = drop.iter().map(|&i| pool.exprs[i].render_name()).collect();
        for &i in drop.iter().rev() {
            pool.exprs.remove(i);
            pool.values.remove(i);
        }
        Ok(names)
    }

    /// Runs one episode from the raw feature set. Returns the trace and the
    /// best pool seen during the episode with its score.
    fn episode(&mut self, index: usize, best: f64) -> Result<(EpisodeTrace, Option<(f64, Pool)>), EngineError> {
        let mut pool = self.raw.clone();
        let mut score = self.baseline()?;
        let mut steps = Vec::with_capacity(self.cfg.steps);
        let mut best_here: Option<(f64, Pool)> = None;
        let opts = ExpandOptions {
            cap: self.cfg.cap,
            max_order: self.cfg.max_order,
        };
        for step in 0..self.cfg.steps {
            let s = self.state(&pool);
            let mask = self.action_mask(&pool)?;
            let (action, epsilon) = self.choose(&s, &mask)?;
            let op = catalog()[action];
            let candidates = expand_action(op, &pool.exprs, self.d, &self.target, opts)?;
            let generated = candidates.len();
            let mut kept = Vec::new();
            let mut discarded = Vec::new();
            for c in candidates {
                match self.kg.judge(&c.expr) {
                    Verdict::NonInterpretable { reason } => discarded.push(Discard {
                        feature: c.display_name,
                        expression: c.expr,
                        reason,
                    }),
                    _ => {
                        kept.push(c.display_name);
                        pool.exprs.push(c.expr);
                        pool.values.push(c.values);
                    }
                }
            }
            let pruned = self.prune(&mut pool)?;
            let new_score = self.score(&pool)?;
            let reward = compute_reward(score, new_score);
            let terminal = step + 1 == self.cfg.steps;
            let s_next = self.state(&pool);
            if let Chooser::Dqn(agent) = &mut self.chooser {
                agent.observe(Transition {
                    s,
                    a: action,
                    r: reward,
                    s_next,
                    terminal,
                });
                if agent.buffer().len() >= agent.config().minibatch {
                    agent.train_step()?;
                }
            }
            let threshold = best_here.as_ref().map_or(best, |(b, _)| *b);
            if new_score > threshold {
                best_here = Some((new_score, pool.clone()));
            }
            steps.push(StepRecord {
                step,
                action: op.name().to_string(),
                epsilon,
                generated,
                kept,
                discarded,
                pruned,
                score_before: score,
                score_after: new_score,
                reward,
            });
            score = new_score;
        }
        let best_so_far = best_here.as_ref().map_or(best, |(b, _)| *b);
        Ok((
            EpisodeTrace {
                episode: index,
                steps,
                final_score: score,
                best_so_far,
            },
            best_here,
        ))
    }

    fn report(&self, pool: &Pool) -> Vec<FeatureReport> {
        pool.exprs
            .iter()
            .enumerate()
            .map(|(i, e)| FeatureReport {
                name: e.render_name(),
                expression: e.clone(),
                verdict: self.kg.judge(e),
                unit: self.kg.describe_unit(self.kg.unit_of(e).as_ref()),
                origin: if i < pool.n_raw { Origin::Raw } else { Origin::Generated },
            })
            .collect()
    }

    /// Runs episodes until the budget is spent or the best score has not
    /// improved for `patience` episodes.
    pub fn run(&mut self) -> Result<FEResult, EngineError> {
        let baseline = self.baseline()?;
        let mut best = baseline;
        let mut best_pool = self.raw.clone();
        let mut best_episode = None;
        let mut stale = 0;
        let mut trajectory = Vec::new();
        for e in 0..self.cfg.episodes {
            let (trace, found) = self.episode(e, best)?;
            trajectory.push(trace);
            match found {
                Some((score, pool)) => {
                    best = score;
                    best_pool = pool;
                    best_episode = Some(e);
                    stale = 0;
                }
                None => {
                    stale += 1;
                    if stale >= self.cfg.patience {
                        break;
                    }
                }
            }
        }
        Ok(FEResult {
            seed: self.cfg.seed,
            task: self.d.task(),
            learner: self.learner.kind,
            inputs: None,
            baseline_score: baseline,
            best_score: best,
            best_episode,
            best_features: self.report(&best_pool),
            trajectory,
            order_sweep: None,
            config: self.cfg.clone(),
        })
    }
}

/// Runs the engine on `d` with `cfg`.
pub fn run(d: &Dataset, kg: &KnowledgeGraph, cfg: EngineConfig) -> Result<FEResult, EngineError> {
    Engine::new(d, kg, cfg)?.run()
}

/// Independent runs, one per maximum order, sharing the seed.
pub fn max_order_sweep(
    cfg: &EngineConfig,
    d: &Dataset,
    kg: &KnowledgeGraph,
    orders: &[usize],
) -> Result<Vec<OrderPoint>, EngineError> {
    if orders.windows(2).any(|w| w[0] >= w[1]) {
        return Err(EngineError::Config("sweep orders must be strictly ascending".into()));
    }
    orders
        .iter()
        .map(|&max_order| {
            let r = run(
                d,
                kg,
                EngineConfig {
                    max_order,
                    ..cfg.clone()
                },
            )?;
            Ok(OrderPoint {
                max_order,
                best_score: r.best_score,
                baseline_score: r.baseline_score,
            })
        })
        .collect()
}

/// Values of `exprs` on `d`, in order.
pub fn feature_values(d: &Dataset, exprs: &[FeatureExpr]) -> Result<Vec<Vec<Option<f64>>>, EngineError> {
    exprs
        .iter()
        .map(|e| Ok(crate::transform::apply(e, d)?.values))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{Column, ColumnData};
    use crate::kg::{ColumnMapping, ConceptRef};

    fn planted(n: usize) -> Dataset {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let w: Vec<f64> = (0..n).map(|_| rng.gen_range(1.0..3.0)).collect();
        let h: Vec<f64> = (0..n).map(|_| rng.gen_range(0.5..2.0)).collect();
        let y: Vec<f64> = w.iter().zip(&h).map(|(a, b)| a / (b * b)).collect();
        let col = |name: &str, v: &[f64]| Column {
            name: name.into(),
            data: ColumnData::Numeric(v.iter().map(|x| Some(*x)).collect()),
        };
        Dataset::new(vec![col("w", &w), col("h", &h), col("y", &y)], "y", Task::Regression).unwrap()
    }

    fn kg() -> KnowledgeGraph {
        let mut m = ColumnMapping::new();
        m.insert("w".into(), ConceptRef { class: "Weight".into(), unit: Some("kg".into()) });
        m.insert("h".into(), ConceptRef { class: "Height".into(), unit: Some("m".into()) });
        KnowledgeGraph::bundled().with_mapping(m).unwrap()
    }

    fn small() -> EngineConfig {
        EngineConfig {
            episodes: 3,
            steps: 3,
            ..EngineConfig::default()
        }
    }

    #[test]
    fn reward_is_signed_difference() {
        assert!((compute_reward(0.740, 0.832) - 0.092).abs() < 1e-12);
        assert_eq!(compute_reward(0.5, 0.5), 0.0);
        assert!((compute_reward(0.8, 0.7) + 0.1).abs() < 1e-12);
    }

    #[test]
    fn config_validation() {
        assert!(EngineConfig { steps: 21, ..small() }.validate().is_err());
        assert!(EngineConfig { cap: 0, ..small() }.validate().is_err());
        let d = planted(30);
        let kg = kg();
        let bad = EngineConfig {
            learner: Some(LearnerKind::Logistic),
            ..small()
        };
        assert!(matches!(Engine::new(&d, &kg, bad), Err(EngineError::Config(_))));
    }

    #[test]
    fn minimal_loop() {
        let d = planted(40);
        let kg = kg();
        let cfg = EngineConfig {
            episodes: 1,
            steps: 1,
            cap: 1,
            ..EngineConfig::default()
        };
        let r = run(&d, &kg, cfg).unwrap();
        assert_eq!(r.trajectory.len(), 1);
        assert_eq!(r.trajectory[0].steps.len(), 1);
        assert!(r.trajectory[0].steps[0].generated <= 1);
    }

    #[test]
    fn invariants_hold() {
        let d = planted(60);
        let kg = kg();
        let r = run(&d, &kg, small()).unwrap();
        assert!(r.best_score >= r.baseline_score);
        let mut prev = f64::NEG_INFINITY;
        for e in &r.trajectory {
            assert!(e.best_so_far >= prev);
            prev = e.best_so_far;
            let sum = e.total_reward();
            assert!((sum - (e.final_score - r.baseline_score)).abs() < 1e-12);
            for s in &e.steps {
                assert_eq!(s.kept.len() + s.discarded.len(), s.generated);
            }
        }
        assert!(r.best_features.iter().all(|f| !f.verdict.is_non_interpretable()));
        assert!(r.best_features.iter().filter(|f| f.origin == Origin::Raw).count() == 2);
    }

    #[test]
    fn budget_pruning_keeps_raw_features() {
        let d = planted(60);
        let kg = kg();
        let cfg = EngineConfig {
            budget: 3,
            episodes: 2,
            policy: Policy::Random,
            ..small()
        };
        let r = run(&d, &kg, cfg).unwrap();
        for e in &r.trajectory {
            for s in &e.steps {
                assert!(s.pruned.iter().all(|p| p != "W" && p != "H"));
            }
        }
        assert!(r.best_features.len() <= 3);
        assert!(r.best_features.iter().any(|f| f.name == "W"));
        assert!(r.best_features.iter().any(|f| f.name == "H"));
    }

    #[test]
    fn deterministic() {
        let d = planted(50);
        let kg = kg();
        let a = serde_json::to_string(&run(&d, &kg, small()).unwrap()).unwrap();
        let b = serde_json::to_string(&run(&d, &kg, small()).unwrap()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn order_zero_keeps_baseline() {
        let d = planted(40);
        let kg = kg();
        let pts = max_order_sweep(&small(), &d, &kg, &[0, 1, 2]).unwrap();
        assert_eq!(pts.len(), 3);
        assert_eq!(pts[0].best_score, pts[0].baseline_score);
        assert!(max_order_sweep(&small(), &d, &kg, &[2, 1]).is_err());
    }
}
