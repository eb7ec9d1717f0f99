//! Factored intention distributions (belief `b` and attention `q` share the
//! representation), Bayes updates from consecutive observations, particle
//! sampling and importance weights.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::driving::Observation;
use crate::geometry::Polyline;
use crate::rng::ScenarioStream;

/// Minimum entry of any importance distribution handed to the planner.
pub const ATTENTION_FLOOR: f64 = 1e-4;

/// Standard deviation of the observation likelihood around the noise-free
/// path-following prediction (m).
pub const OBSERVATION_SIGMA: f64 = 0.3;

/// Every posterior entry is mixed up to at least this value, so a single
/// surprising observation cannot rule an intention out for good and joint
/// probabilities stay representable.
pub const BELIEF_FLOOR: f64 = 1e-6;

#[derive(Debug, Error, PartialEq)]
pub enum BeliefError {
    #[error("agent {0} has no intentions")]
    NoIntentions(usize),
    #[error("agent {agent}: probabilities sum to {sum}")]
    NotNormalized { agent: usize, sum: f64 },
    #[error("agent {agent}: invalid probability {value}")]
    InvalidProbability { agent: usize, value: f64 },
    #[error("agent {agent} intention {intention}: attention {value} below support floor {floor}")]
    SupportViolation {
        agent: usize,
        intention: usize,
        value: f64,
        floor: f64,
    },
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
}

/// Per-agent categorical distributions over candidate paths.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntentionDistribution {
    agents: Vec<Vec<f64>>,
}

impl IntentionDistribution {
    /// Validates non-negativity and per-agent normalisation (1e-9).
    pub fn new(agents: Vec<Vec<f64>>) -> Result<Self, BeliefError> {
        for (i, probs) in agents.iter().enumerate() {
            if probs.is_empty() {
                return Err(BeliefError::NoIntentions(i));
            }
            if let Some(&bad) = probs.iter().find(|p| !(p.is_finite() && **p >= 0.0)) {
                return Err(BeliefError::InvalidProbability { agent: i, value: bad });
            }
            let sum: f64 = probs.iter().sum();
            if (sum - 1.0).abs() > 1e-9 {
                return Err(BeliefError::NotNormalized { agent: i, sum });
            }
        }
        Ok(Self { agents })
    }

    /// Normalises each agent's non-negative scores.
    pub fn from_scores(scores: Vec<Vec<f64>>) -> Result<Self, BeliefError> {
        let agents = scores
            .into_iter()
            .enumerate()
            .map(|(i, s)| {
                let total: f64 = s.iter().sum();
                if s.is_empty() {
                    Err(BeliefError::NoIntentions(i))
                } else if !(total > 0.0 && total.is_finite()) {
                    Err(BeliefError::NotNormalized { agent: i, sum: total })
                } else {
                    Ok(s.iter().map(|x| x / total).collect())
                }
            })
            .collect::<Result<Vec<_>, _>>()?;
        Self::new(agents)
    }

    /// Uniform `1/M_i` per agent.
    pub fn uniform(counts: &[usize]) -> Result<Self, BeliefError> {
        counts
            .iter()
            .enumerate()
            .map(|(i, &m)| {
                if m == 0 {
                    Err(BeliefError::NoIntentions(i))
                } else {
                    Ok(vec![1.0 / m as f64; m])
                }
            })
            .collect::<Result<Vec<_>, _>>()
            .map(|agents| Self { agents })
    }

    pub fn num_agents(&self) -> usize {
        self.agents.len()
    }

    pub fn agent(&self, i: usize) -> &[f64] {
        &self.agents[i]
    }

    pub fn agents(&self) -> &[Vec<f64>] {
        &self.agents
    }

    pub fn counts(&self) -> Vec<usize> {
        self.agents.iter().map(Vec::len).collect()
    }

    /// Probability of a joint intention assignment (agents independent).
    pub fn probability(&self, intentions: &[usize]) -> f64 {
        self.agents
            .iter()
            .zip(intentions)
            .map(|(p, &k)| p[k])
            .product()
    }

    pub fn min_entry(&self) -> f64 {
        self.agents
            .iter()
            .flatten()
            .copied()
            .fold(f64::INFINITY, f64::min)
    }

    /// Mixes each agent with the uniform distribution so every entry is at
    /// least `floor`: `q = floor + (1 - M·floor)·p`. Sums are preserved.
    pub fn floored(&self, floor: f64) -> Self {
        let agents = self
            .agents
            .iter()
            .map(|p| {
                let m = p.len() as f64;
                let keep = 1.0 - m * floor;
                p.iter().map(|x| floor + keep * x).collect()
            })
            .collect();
        Self { agents }
    }

    /// Drops the entries where `support` is exactly zero and renormalises.
    /// Agents without such entries are copied bit for bit, as are agents
    /// whose remaining mass would be empty.
    pub fn restricted_to(&self, support: &Self) -> Self {
        let agents = self
            .agents
            .iter()
            .zip(&support.agents)
            .map(|(p, s)| {
                if !s.contains(&0.0) {
                    return p.clone();
                }
                let kept: Vec<f64> = p.iter().zip(s).map(|(&x, &w)| if w == 0.0 { 0.0 } else { x }).collect();
                let total: f64 = kept.iter().sum();
                if total > 0.0 {
                    kept.iter().map(|x| x / total).collect()
                } else {
                    p.clone()
                }
            })
            .collect();
        Self { agents }
    }

    /// Errors if any entry is below `floor`.
    pub fn check_support(&self, floor: f64) -> Result<(), BeliefError> {
        for (agent, p) in self.agents.iter().enumerate() {
            for (intention, &value) in p.iter().enumerate() {
                // tolerate the rounding of `floored`
                if value < floor * (1.0 - 1e-9) {
                    return Err(BeliefError::SupportViolation {
                        agent,
                        intention,
                        value,
                        floor,
                    });
                }
            }
        }
        Ok(())
    }

    /// Flat serialisation: agent offsets (length `agents + 1`) and the
    /// concatenated probabilities.
    pub fn to_flat(&self) -> (Vec<usize>, Vec<f64>) {
        let mut offsets = Vec::with_capacity(self.agents.len() + 1);
        let mut values = Vec::new();
        offsets.push(0);
        for p in &self.agents {
            values.extend_from_slice(p);
            offsets.push(values.len());
        }
        (offsets, values)
    }

    pub fn from_flat(offsets: &[usize], values: &[f64]) -> Result<Self, BeliefError> {
        if offsets.first() != Some(&0) || offsets.last() != Some(&values.len()) {
            return Err(BeliefError::ShapeMismatch("offset header does not span values".into()));
        }
        let agents = offsets
            .windows(2)
            .map(|w| {
                if w[1] < w[0] {
                    Err(BeliefError::ShapeMismatch("offsets decrease".into()))
                } else {
                    Ok(values[w[0]..w[1]].to_vec())
                }
            })
            .collect::<Result<Vec<_>, _>>()?;
        Self::new(agents)
    }
}

/// Uniform initial belief.
pub fn init_belief(paths_per_agent: &[usize]) -> Result<IntentionDistribution, BeliefError> {
    IntentionDistribution::uniform(paths_per_agent)
}

/// One Bayes step for a single agent. Falls back to the prior when every
/// posterior term vanishes.
pub fn bayes_update(prior: &[f64], likelihoods: &[f64]) -> Vec<f64> {
    let joint: Vec<f64> = prior.iter().zip(likelihoods).map(|(p, l)| p * l).collect();
    let total: f64 = joint.iter().sum();
    if !(total > 0.0 && total.is_finite()) {
        return prior.to_vec();
    }
    joint.into_iter().map(|x| x / total).collect()
}

/// Noise-free one-step position of an agent that was at `from` and now moves
/// at `speed` along `path`.
pub fn predict_on_path(path: &Polyline, from: crate::geometry::Vec2, speed: f64, dt: f64) -> crate::geometry::Vec2 {
    let arc = path.project(from).arc;
    path.point_at(arc + speed * dt)
}

/// Bayes update of each agent's intention distribution with an isotropic
/// Gaussian likelihood (σ = [`OBSERVATION_SIGMA`]) of its observed position
/// around the position predicted by following each candidate path from its
/// previous position at its newly observed speed. Agents are matched by
/// index. The result is mixed with the uniform distribution up to
/// [`BELIEF_FLOOR`].
pub fn update_belief(
    b: &IntentionDistribution,
    z_prev: &Observation,
    z: &Observation,
    paths: &[Vec<Polyline>],
    dt: f64,
) -> Result<IntentionDistribution, BeliefError> {
    let n = b.num_agents();
    if z_prev.exo.len() != n || z.exo.len() != n || paths.len() != n {
        return Err(BeliefError::ShapeMismatch(format!(
            "belief over {n} agents, observations with {} and {}, {} path sets",
            z_prev.exo.len(),
            z.exo.len(),
            paths.len()
        )));
    }
    let two_var = 2.0 * OBSERVATION_SIGMA * OBSERVATION_SIGMA;
    let agents = (0..n)
        .map(|i| {
            let prev = z_prev.exo[i];
            let now = z.exo[i];
            let likelihoods: Vec<f64> = paths[i]
                .iter()
                .map(|path| {
                    let predicted = predict_on_path(path, prev.position, now.speed, dt);
                    (-predicted.distance(now.position).powi(2) / two_var).exp()
                })
                .collect();
            if likelihoods.len() != b.agent(i).len() {
                return Err(BeliefError::ShapeMismatch(format!(
                    "agent {i}: {} intentions but {} paths",
                    b.agent(i).len(),
                    likelihoods.len()
                )));
            }
            Ok(bayes_update(b.agent(i), &likelihoods))
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(IntentionDistribution { agents }.floored(BELIEF_FLOOR))
}

/// An initial-state sample: the observed physical state plus a joint
/// intention assignment.
#[derive(Debug, Clone, PartialEq)]
pub struct StateParticle {
    pub observation: Observation,
    pub intentions: Vec<usize>,
}

/// Draws each agent's intention independently by inverse CDF.
pub fn sample_state(dist: &IntentionDistribution, z: &Observation, stream: &mut ScenarioStream) -> StateParticle {
    let intentions = dist.agents.iter().map(|p| stream.next_categorical(p)).collect();
    StateParticle {
        observation: z.clone(),
        intentions,
    }
}

/// `Π_i b_i(θ_i) / q_i(θ_i)`; `q` must satisfy the support floor.
pub fn importance_weight(
    b: &IntentionDistribution,
    q: &IntentionDistribution,
    particle: &StateParticle,
) -> Result<f64, BeliefError> {
    q.check_support(ATTENTION_FLOOR)?;
    weight_unchecked(b, q, &particle.intentions)
}

/// Weight of an assignment without the support check (callers validate `q`
/// once per plan).
pub fn weight_unchecked(b: &IntentionDistribution, q: &IntentionDistribution, intentions: &[usize]) -> Result<f64, BeliefError> {
    if b.counts() != q.counts() || intentions.len() != b.num_agents() {
        return Err(BeliefError::ShapeMismatch("belief, attention and particle disagree".into()));
    }
    Ok(b.agents
        .iter()
        .zip(&q.agents)
        .zip(intentions)
        .map(|((pb, pq), &k)| pb[k] / pq[k])
        .product())
}
