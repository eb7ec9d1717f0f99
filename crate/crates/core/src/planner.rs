//! Anytime belief-tree search over determinized scenarios with importance
//! weights.
//!
//! Every node value is a weighted, root-discounted sum
//! `(1/K) Σ_φ w_φ γ^d V_φ` over the node's scenarios, so the root lower bound
//! of a policy is its importance-sampled value estimate. Weights are fixed at
//! the root and carried unchanged down the tree.

use std::collections::BTreeMap;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::belief::{sample_state, weight_unchecked, BeliefError, IntentionDistribution, ATTENTION_FLOOR};
use crate::driving::{reactive_action, relaxed_upper_bound, AgentPaths, DrivingError, DrivingModel, Observation, WorldState};
use crate::pomdp::Pomdp;
use crate::rng::{transition_stream, ScenarioStream, SAMPLING_KEY};

#[derive(Debug, Error, PartialEq)]
pub enum PlanError {
    #[error(transparent)]
    Belief(#[from] BeliefError),
    #[error(transparent)]
    Driving(#[from] DrivingError),
    #[error("at least one scenario is required")]
    NoScenarios,
    #[error("scenario {index} has invalid weight {weight}")]
    BadWeight { index: usize, weight: f64 },
    #[error("cannot evaluate an empty trajectory set")]
    EmptyEstimate,
}

/// Search-time hooks on top of the generative model.
pub trait SearchModel: Pomdp {
    /// Action of the rollout policy that provides leaf lower bounds.
    fn default_action(&self, state: &Self::State) -> usize;
    /// Upper bound on the discounted return of `steps` more steps.
    fn upper_bound(&self, state: &Self::State, steps: usize) -> f64;
}

impl SearchModel for DrivingModel {
    fn default_action(&self, state: &WorldState) -> usize {
        reactive_action(&state.ego, &state.exo, self.params()).index()
    }

    fn upper_bound(&self, state: &WorldState, steps: usize) -> f64 {
        relaxed_upper_bound(&state.ego, steps, self.params())
    }
}

/// One determinized sampled future: an initial state, its importance weight
/// and the stream its transitions consume.
#[derive(Debug, Clone)]
pub struct Scenario<S> {
    pub state: S,
    pub weight: f64,
    pub stream: ScenarioStream,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PlannerConfig {
    /// Number of root scenarios `K`.
    pub scenarios: usize,
    /// Maximum number of node expansions per plan.
    pub max_expansions: usize,
    /// Regularisation per policy-tree node.
    pub lambda: f64,
    /// Target fraction of the root gap for weighted excess uncertainty.
    pub xi: f64,
    /// Search stops once the root gap falls below this.
    pub gap_tolerance: f64,
    /// Optional wall-clock limit; leave unset for reproducible plans.
    pub time_limit_ms: Option<u64>,
}

impl Default for PlannerConfig {
    fn default() -> Self {
        Self {
            scenarios: 100,
            max_expansions: 200,
            lambda: 0.01,
            xi: 0.95,
            gap_tolerance: 1e-6,
            time_limit_ms: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActionStats {
    pub action: usize,
    /// Weighted estimate of the best known policy starting with `action`.
    pub value: f64,
    /// Regularised lower bound.
    pub lower: f64,
    pub upper: f64,
    pub scenarios: usize,
    pub weight_sum: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanResult {
    pub action: usize,
    pub value_estimate: f64,
    pub root_stats: Vec<ActionStats>,
    pub expansions: usize,
}

#[derive(Debug, Clone)]
struct Particle<S> {
    id: usize,
    state: S,
    terminal: bool,
}

#[derive(Debug, Clone)]
struct Branch {
    reward: f64,
    children: Vec<usize>,
    lower: f64,
    upper: f64,
    value: f64,
}

#[derive(Debug, Clone)]
struct Node<S> {
    depth: usize,
    parent: Option<usize>,
    particles: Vec<Particle<S>>,
    weight_sum: f64,
    lower0: f64,
    lower: f64,
    upper: f64,
    value: f64,
    branches: Vec<Branch>,
}

/// The search tree. Nodes live in an arena; node 0 is the root.
pub struct BeliefTree<'m, M: SearchModel> {
    model: &'m M,
    config: PlannerConfig,
    weights: Vec<f64>,
    streams: Vec<ScenarioStream>,
    root_weight: f64,
    nodes: Vec<Node<M::State>>,
    expansions: usize,
}

impl<'m, M: SearchModel> BeliefTree<'m, M> {
    pub fn new(model: &'m M, scenarios: Vec<Scenario<M::State>>, config: PlannerConfig) -> Result<Self, PlanError> {
        if scenarios.is_empty() {
            return Err(PlanError::NoScenarios);
        }
        for (index, s) in scenarios.iter().enumerate() {
            if !(s.weight.is_finite() && s.weight >= 0.0) {
                return Err(PlanError::BadWeight { index, weight: s.weight });
            }
        }
        let weights: Vec<f64> = scenarios.iter().map(|s| s.weight).collect();
        // zero weights are legal (intentions the belief has ruled out) but
        // the estimate needs some mass
        if weights.iter().sum::<f64>() <= 0.0 {
            return Err(PlanError::EmptyEstimate);
        }
        let streams = scenarios.iter().map(|s| s.stream).collect();
        let particles = scenarios
            .into_iter()
            .enumerate()
            .map(|(id, s)| Particle {
                id,
                state: s.state,
                terminal: false,
            })
            .collect();
        let mut tree = Self {
            model,
            config,
            root_weight: weights.iter().sum(),
            weights,
            streams,
            nodes: Vec::new(),
            expansions: 0,
        };
        let root = tree.make_node(0, None, particles);
        tree.nodes.push(root);
        Ok(tree)
    }

    pub fn scenario_weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn expansions(&self) -> usize {
        self.expansions
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    /// `(lower, upper)` of the root.
    pub fn root_bounds(&self) -> (f64, f64) {
        (self.nodes[0].lower, self.nodes[0].upper)
    }

    fn k(&self) -> f64 {
        self.weights.len() as f64
    }

    fn horizon(&self) -> usize {
        self.model.spec().horizon()
    }

    /// Discounted return of the rollout policy from `depth` to the horizon,
    /// discounted to `depth`.
    pub fn default_rollout(&self, id: usize, state: &M::State, depth: usize) -> f64 {
        let gamma = self.model.spec().gamma();
        let mut state = state.clone();
        let mut discount = 1.0;
        let mut total = 0.0;
        for t in depth..self.horizon() {
            let a = self.model.default_action(&state);
            let mut s = transition_stream(&self.streams[id], t);
            let tr = self.model.step(&state, a, &mut s);
            total += discount * tr.reward;
            discount *= gamma;
            if tr.terminal {
                break;
            }
            state = tr.state;
        }
        total
    }

    fn make_node(&self, depth: usize, parent: Option<usize>, particles: Vec<Particle<M::State>>) -> Node<M::State> {
        let scale = self.model.spec().gamma().powi(depth as i32) / self.k();
        let remaining = self.horizon().saturating_sub(depth);
        let mut lower = 0.0;
        let mut upper = 0.0;
        let mut weight_sum = 0.0;
        for p in &particles {
            let w = self.weights[p.id];
            weight_sum += w;
            if p.terminal || remaining == 0 {
                continue;
            }
            lower += w * scale * self.default_rollout(p.id, &p.state, depth);
            upper += w * scale * self.model.upper_bound(&p.state, remaining);
        }
        Node {
            depth,
            parent,
            particles,
            weight_sum,
            lower0: lower,
            lower,
            upper: upper.max(lower),
            value: lower,
            branches: Vec::new(),
        }
    }

    fn expandable(&self, idx: usize) -> bool {
        let n = &self.nodes[idx];
        n.branches.is_empty() && n.depth < self.horizon() && n.particles.iter().any(|p| !p.terminal)
    }

    /// Expands every action of node `idx`: each scenario steps once on its
    /// own stream and the results are grouped by observation key.
    pub fn expand(&mut self, idx: usize) {
        if !self.expandable(idx) {
            return;
        }
        let depth = self.nodes[idx].depth;
        let scale = self.model.spec().gamma().powi(depth as i32) / self.k();
        let mut branches = Vec::with_capacity(self.model.spec().action_count());
        for a in 0..self.model.spec().action_count() {
            let mut groups: BTreeMap<(bool, M::ObsKey), Vec<Particle<M::State>>> = BTreeMap::new();
            let mut reward = 0.0;
            for p in &self.nodes[idx].particles {
                let next = if p.terminal {
                    p.clone()
                } else {
                    let mut s = transition_stream(&self.streams[p.id], depth);
                    let tr = self.model.step(&p.state, a, &mut s);
                    reward += self.weights[p.id] * scale * tr.reward;
                    Particle {
                        id: p.id,
                        state: tr.state,
                        terminal: tr.terminal,
                    }
                };
                let key = (next.terminal, self.model.observation_key(&next.state));
                groups.entry(key).or_default().push(next);
            }
            let mut children = Vec::with_capacity(groups.len());
            for particles in groups.into_values() {
                let child = self.make_node(depth + 1, Some(idx), particles);
                children.push(self.nodes.len());
                self.nodes.push(child);
            }
            branches.push(Branch {
                reward,
                children,
                lower: 0.0,
                upper: 0.0,
                value: 0.0,
            });
        }
        self.nodes[idx].branches = branches;
        self.expansions += 1;
        self.refresh(idx);
    }

    fn refresh(&mut self, idx: usize) {
        let lambda = self.config.lambda;
        let mut branches = std::mem::take(&mut self.nodes[idx].branches);
        for b in &mut branches {
            b.lower = b.reward - lambda + b.children.iter().map(|&c| self.nodes[c].lower).sum::<f64>();
            b.upper = b.reward + b.children.iter().map(|&c| self.nodes[c].upper).sum::<f64>();
            b.value = b.reward + b.children.iter().map(|&c| self.nodes[c].value).sum::<f64>();
        }
        let node = &mut self.nodes[idx];
        let (mut lower, mut value) = (node.lower0, node.lower0);
        for b in &branches {
            if b.lower > lower {
                lower = b.lower;
                value = b.value;
            }
        }
        let best_upper = branches.iter().map(|b| b.upper).fold(f64::NEG_INFINITY, f64::max);
        node.lower = lower.max(node.lower);
        if lower >= node.lower {
            node.value = value;
        }
        node.upper = node.upper.min(best_upper).max(node.lower);
        node.branches = branches;
    }

    fn backup(&mut self, mut idx: usize) {
        loop {
            self.refresh(idx);
            match self.nodes[idx].parent {
                Some(p) => idx = p,
                None => break,
            }
        }
    }

    fn weu(&self, idx: usize) -> f64 {
        let n = &self.nodes[idx];
        let root = &self.nodes[0];
        // weight fraction relative to the root so the target stays below the
        // root gap whatever the sum of the importance weights
        let mass = n.weight_sum / self.root_weight;
        (n.upper - n.lower) - self.config.xi * mass * (root.upper - root.lower)
    }

    /// One trial from the root. Returns `false` when nothing was expanded.
    pub fn trial(&mut self) -> bool {
        let before = self.expansions;
        let mut idx = 0;
        loop {
            if self.expandable(idx) {
                if self.expansions >= self.config.max_expansions {
                    break;
                }
                self.expand(idx);
            }
            let node = &self.nodes[idx];
            if node.branches.is_empty() {
                break;
            }
            let mut best_a = 0;
            for (a, b) in node.branches.iter().enumerate() {
                if b.upper > node.branches[best_a].upper {
                    best_a = a;
                }
            }
            let mut next = None;
            let mut best = 0.0;
            for &c in &node.branches[best_a].children {
                let e = self.weu(c);
                if e > best {
                    best = e;
                    next = Some(c);
                }
            }
            match next {
                Some(c) => idx = c,
                None => break,
            }
        }
        self.backup(idx);
        self.expansions > before
    }

    /// Runs trials until the budget is spent, the root gap closes or no
    /// trial makes progress.
    pub fn search(&mut self) {
        let start = Instant::now();
        let limit = self.config.time_limit_ms.map(Duration::from_millis);
        self.expand(0);
        while self.expansions < self.config.max_expansions {
            let (l, u) = self.root_bounds();
            if u - l <= self.config.gap_tolerance {
                break;
            }
            if limit.is_some_and(|t| start.elapsed() >= t) {
                break;
            }
            if !self.trial() {
                break;
            }
        }
    }

    /// Root action with the highest regularised lower bound (lowest index on
    /// ties) and its value estimate.
    pub fn result(&self) -> PlanResult {
        let root = &self.nodes[0];
        let count = root.particles.len();
        let root_stats: Vec<ActionStats> = root
            .branches
            .iter()
            .enumerate()
            .map(|(action, b)| ActionStats {
                action,
                value: b.value,
                lower: b.lower,
                upper: b.upper,
                scenarios: count,
                weight_sum: root.weight_sum,
            })
            .collect();
        let mut best = 0;
        for s in &root_stats {
            if s.lower > root_stats[best].lower {
                best = s.action;
            }
        }
        PlanResult {
            action: best,
            value_estimate: root_stats.get(best).map_or(root.value, |s| s.value),
            root_stats,
            expansions: self.expansions,
        }
    }

    /// Scenario counts of the children of `(node, action)`; for tests and
    /// diagnostics.
    pub fn child_counts(&self, node: usize, action: usize) -> Vec<usize> {
        self.nodes[node]
            .branches
            .get(action)
            .map(|b| b.children.iter().map(|&c| self.nodes[c].particles.len()).collect())
            .unwrap_or_default()
    }

    /// Child node ids of `(node, action)`.
    pub fn children(&self, node: usize, action: usize) -> Vec<usize> {
        self.nodes[node]
            .branches
            .get(action)
            .map(|b| b.children.clone())
            .unwrap_or_default()
    }
}

/// Builds and searches a tree over the given scenarios.
pub fn search<M: SearchModel>(model: &M, scenarios: Vec<Scenario<M::State>>, config: PlannerConfig) -> Result<PlanResult, PlanError> {
    let mut tree = BeliefTree::new(model, scenarios, config)?;
    tree.search();
    Ok(tree.result())
}

/// `(1/n) Σ w·V`.
pub fn evaluate_policy_value(trajectories: &[(f64, f64)]) -> Result<f64, PlanError> {
    if trajectories.is_empty() {
        return Err(PlanError::EmptyEstimate);
    }
    Ok(trajectories.iter().map(|(w, v)| w * v).sum::<f64>() / trajectories.len() as f64)
}

/// Weighted estimate of the policy "take `first` at the root, then follow
/// the rollout policy", using the tree's stream convention.
pub fn fixed_policy_estimate<M: SearchModel>(model: &M, scenarios: &[Scenario<M::State>], first: usize) -> Result<f64, PlanError> {
    let gamma = model.spec().gamma();
    let horizon = model.spec().horizon();
    let pairs: Vec<(f64, f64)> = scenarios
        .iter()
        .map(|sc| {
            let mut state = sc.state.clone();
            let mut discount = 1.0;
            let mut total = 0.0;
            for t in 0..horizon {
                let a = if t == 0 { first } else { model.default_action(&state) };
                let tr = model.step(&state, a, &mut transition_stream(&sc.stream, t));
                total += discount * tr.reward;
                discount *= gamma;
                if tr.terminal {
                    break;
                }
                state = tr.state;
            }
            (sc.weight, total)
        })
        .collect();
    evaluate_policy_value(&pairs)
}

fn root_state(z: &Observation, intentions: Vec<usize>, paths: &AgentPaths) -> Result<WorldState, PlanError> {
    Ok(WorldState::new(z.ego.clone(), z.exo.clone(), intentions, AgentPaths::clone(paths))?)
}

fn check_shapes(b: &IntentionDistribution, q: &IntentionDistribution, paths: &AgentPaths) -> Result<(), PlanError> {
    let counts: Vec<usize> = paths.iter().map(Vec::len).collect();
    if b.counts() != counts || q.counts() != counts {
        return Err(BeliefError::ShapeMismatch(format!(
            "paths {counts:?}, belief {:?}, attention {:?}",
            b.counts(),
            q.counts()
        ))
        .into());
    }
    Ok(())
}

/// Draws `k` root scenarios from `q` with weights `b/q`. Scenario `i` uses
/// the sub-stream `split(i)` of the plan seed.
pub fn sample_scenarios(
    b: &IntentionDistribution,
    q: &IntentionDistribution,
    z: &Observation,
    paths: &AgentPaths,
    k: usize,
    seed: u64,
) -> Result<Vec<Scenario<WorldState>>, PlanError> {
    q.check_support(ATTENTION_FLOOR)?;
    check_shapes(b, q, paths)?;
    if k == 0 {
        return Err(PlanError::NoScenarios);
    }
    // intentions the belief has ruled out would only produce zero weights
    let q = &q.restricted_to(b);
    let root = ScenarioStream::new(seed);
    (0..k)
        .map(|i| {
            let stream = root.split(i as u64);
            let particle = sample_state(q, z, &mut stream.split(SAMPLING_KEY));
            let weight = weight_unchecked(b, q, &particle.intentions)?;
            Ok(Scenario {
                state: root_state(z, particle.intentions, paths)?,
                weight,
                stream,
            })
        })
        .collect()
}

/// Importance-sampling planner: scenarios from `q`, weights `b/q`.
pub fn plan(
    model: &DrivingModel,
    b: &IntentionDistribution,
    z: &Observation,
    q: &IntentionDistribution,
    paths: &AgentPaths,
    config: &PlannerConfig,
    seed: u64,
) -> Result<PlanResult, PlanError> {
    let scenarios = sample_scenarios(b, q, z, paths, config.scenarios, seed)?;
    search(model, scenarios, *config)
}

/// Plain DESPOT: scenarios drawn from the belief itself with unit weights.
pub fn plan_despot(
    model: &DrivingModel,
    b: &IntentionDistribution,
    z: &Observation,
    paths: &AgentPaths,
    config: &PlannerConfig,
    seed: u64,
) -> Result<PlanResult, PlanError> {
    check_shapes(b, b, paths)?;
    if config.scenarios == 0 {
        return Err(PlanError::NoScenarios);
    }
    let root = ScenarioStream::new(seed);
    let scenarios = (0..config.scenarios)
        .map(|i| {
            let stream = root.split(i as u64);
            let particle = sample_state(b, z, &mut stream.split(SAMPLING_KEY));
            Ok(Scenario {
                state: root_state(z, particle.intentions, paths)?,
                weight: 1.0,
                stream,
            })
        })
        .collect::<Result<Vec<_>, PlanError>>()?;
    search(model, scenarios, *config)
}
