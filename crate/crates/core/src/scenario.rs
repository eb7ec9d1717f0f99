//! Scenario files: the initial ego state, the exo-agents with optional true
//! intentions and priors, and the seed. Each episode instantiates a scenario
//! with its own seed, which jitters agent start positions and draws any
//! unspecified true intention from the agent's prior.
//!
//! ```toml
//! name = "crossing"
//! ego_path = "main"
//! ego_start = 0.0
//! ego_speed = 3.0
//! seed = 1
//! jitter = 2.0
//! [[agents]]
//! x = 20.0
//! y = -12.0
//! speed = 3.0
//! prior = [0.1, 0.9]
//! ```

use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::belief::{BeliefError, IntentionDistribution};
use crate::driving::{DrivingError, EgoState, ExoState, WorldState};
use crate::geometry::Polyline;
use crate::map::{LaneGraph, MapError, PathExtraction};
use crate::rng::ScenarioStream;

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("failed to read scenario {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("failed to parse scenario: {0}")]
    Parse(#[from] toml::de::Error),
    #[error(transparent)]
    Map(#[from] MapError),
    #[error(transparent)]
    Driving(#[from] DrivingError),
    #[error(transparent)]
    Belief(#[from] BeliefError),
    #[error("agent {agent}: prior has {prior} entries but {paths} candidate paths")]
    PriorShape { agent: usize, prior: usize, paths: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentSpec {
    pub x: f64,
    pub y: f64,
    pub speed: f64,
    /// True intention; drawn from the prior when absent.
    #[serde(default)]
    pub intention: Option<usize>,
    /// Initial belief over the candidate paths; uniform when absent.
    #[serde(default)]
    pub prior: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSpec {
    pub name: String,
    pub ego_path: String,
    #[serde(default)]
    pub ego_start: f64,
    #[serde(default)]
    pub ego_speed: f64,
    #[serde(default)]
    pub seed: u64,
    /// Agents start up to this far (m) ahead of their listed position.
    #[serde(default)]
    pub jitter: f64,
    #[serde(default)]
    pub agents: Vec<AgentSpec>,
}

/// One instantiated episode start.
#[derive(Debug, Clone)]
pub struct EpisodeStart {
    pub state: WorldState,
    pub prior: IntentionDistribution,
}

impl ScenarioSpec {
    pub fn parse(text: &str) -> Result<Self, ScenarioError> {
        Ok(toml::from_str(text)?)
    }

    pub fn load(path: &Path) -> Result<Self, ScenarioError> {
        let text = std::fs::read_to_string(path).map_err(|source| ScenarioError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::parse(&text)
    }

    /// Builds the start state for episode `episode`. Same inputs, same state.
    pub fn instantiate(
        &self,
        map: &LaneGraph,
        extraction: &PathExtraction,
        episode: u64,
    ) -> Result<EpisodeStart, ScenarioError> {
        let ego_path = Arc::new(map.ego_path(&self.ego_path)?);
        let ego = EgoState::on_path(ego_path, self.ego_start, self.ego_speed);
        let mut stream = ScenarioStream::new(self.seed).split(episode);
        let mut exo = Vec::with_capacity(self.agents.len());
        let mut paths: Vec<Vec<Polyline>> = Vec::with_capacity(self.agents.len());
        let mut priors = Vec::with_capacity(self.agents.len());
        let mut intentions = Vec::with_capacity(self.agents.len());
        for (i, a) in self.agents.iter().enumerate() {
            let listed = crate::geometry::Vec2::new(a.x, a.y);
            let offset = self.jitter * stream.next_uniform();
            let position = if offset > 0.0 {
                map.candidate_paths(listed, extraction)?[0].point_at(offset)
            } else {
                listed
            };
            let candidates = map.candidate_paths(position, extraction)?;
            let prior = match &a.prior {
                Some(p) if p.len() != candidates.len() => {
                    return Err(ScenarioError::PriorShape {
                        agent: i,
                        prior: p.len(),
                        paths: candidates.len(),
                    })
                }
                Some(p) => p.clone(),
                None => vec![1.0 / candidates.len() as f64; candidates.len()],
            };
            let draw = stream.next_categorical(&prior);
            let intention = a.intention.unwrap_or(draw);
            let start = candidates[0].point_at(0.0);
            exo.push(ExoState {
                position: start,
                speed: a.speed,
                heading: candidates.get(intention).unwrap_or(&candidates[0]).heading_at(0.0),
            });
            intentions.push(intention);
            paths.push(candidates);
            priors.push(prior);
        }
        let prior = IntentionDistribution::new(priors)?;
        let state = WorldState::new(ego, exo, intentions, Arc::new(paths))?;
        Ok(EpisodeStart { state, prior })
    }
}
