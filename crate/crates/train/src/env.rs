//! Episodes of the driving simulator with belief tracking.

use std::sync::Arc;

use leader_core::belief::update_belief;
use leader_core::driving::{is_collision, observe, AgentPaths};
use leader_core::map::LaneGraph;
use leader_core::pomdp::Pomdp;
use leader_core::scenario::ScenarioSpec;
use leader_core::{Action, DrivingModel, DrivingParams, IntentionDistribution, Observation, ScenarioStream, WorldState};

use crate::{derive_stream, TrainError};

const START_KEY: u64 = 1;
const NOISE_KEY: u64 = 2;

/// A map, the scenarios played on it and the driving model.
#[derive(Debug, Clone)]
pub struct World {
    pub map: Arc<LaneGraph>,
    pub scenarios: Vec<ScenarioSpec>,
    pub model: DrivingModel,
}

impl World {
    pub fn new(map: LaneGraph, scenarios: Vec<ScenarioSpec>, params: DrivingParams) -> Result<Self, TrainError> {
        if scenarios.is_empty() {
            return Err(TrainError::Config("a world needs at least one scenario".into()));
        }
        Ok(Self {
            map: Arc::new(map),
            scenarios,
            model: DrivingModel::new(params)?,
        })
    }

    pub fn params(&self) -> &DrivingParams {
        self.model.params()
    }

    /// Starts episode `episode` of a run seeded with `seed`. Scenarios are
    /// played round robin.
    pub fn start_episode(&self, seed: u64, episode: u64, max_steps: usize) -> Result<Episode, TrainError> {
        let spec = &self.scenarios[(episode % self.scenarios.len() as u64) as usize];
        let key = derive_stream(seed, &[START_KEY, episode]).next_u64();
        let start = spec.instantiate(&self.map, &self.params().extraction, key)?;
        let observation = observe(&start.state);
        Ok(Episode {
            id: episode,
            scenario: spec.name.clone(),
            paths: Arc::clone(&start.state.paths),
            state: start.state,
            belief: start.prior,
            observation,
            noise: derive_stream(seed, &[NOISE_KEY, episode]),
            step: 0,
            max_steps,
            done: false,
            collided: false,
            rewards: Vec::new(),
            speeds: Vec::new(),
            decelerations: 0,
            travelled: 0.0,
        })
    }
}

/// What one environment step produced.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepOutcome {
    pub reward: f64,
    pub collision: bool,
    pub done: bool,
}

/// A running episode: the true world state, the belief tracked from
/// observations only, and running statistics.
#[derive(Debug, Clone)]
pub struct Episode {
    pub id: u64,
    pub scenario: String,
    pub state: WorldState,
    pub belief: IntentionDistribution,
    pub observation: Observation,
    pub paths: AgentPaths,
    noise: ScenarioStream,
    pub step: usize,
    pub max_steps: usize,
    pub done: bool,
    pub collided: bool,
    pub rewards: Vec<f64>,
    /// Ego speed after each step.
    pub speeds: Vec<f64>,
    pub decelerations: usize,
    /// Arc length covered by the ego (m).
    pub travelled: f64,
}

impl Episode {
    /// Executes `action`, advances the belief and updates the statistics.
    /// The episode ends on collision, path exhaustion or the step limit.
    pub fn advance(&mut self, world: &World, action: Action) -> Result<StepOutcome, TrainError> {
        if self.done {
            return Err(TrainError::EpisodeOver);
        }
        let t = world.model.step(&self.state, action.index(), &mut self.noise);
        let z = observe(&t.state);
        self.belief = update_belief(&self.belief, &self.observation, &z, &self.paths, world.params().dt)?;
        let collision = is_collision(&t.state, world.params());
        self.travelled += (t.state.ego.progress - self.state.ego.progress).max(0.0);
        self.state = t.state;
        self.observation = z;
        self.step += 1;
        self.rewards.push(t.reward);
        self.speeds.push(self.state.ego.speed);
        if action == Action::Dec {
            self.decelerations += 1;
        }
        self.collided |= collision;
        self.done = t.terminal || self.step >= self.max_steps;
        Ok(StepOutcome {
            reward: t.reward,
            collision,
            done: self.done,
        })
    }

    pub fn discounted_return(&self, gamma: f64) -> f64 {
        self.rewards.iter().rev().fold(0.0, |acc, r| r + gamma * acc)
    }

    pub fn average_speed(&self) -> f64 {
        if self.speeds.is_empty() {
            0.0
        } else {
            self.speeds.iter().sum::<f64>() / self.speeds.len() as f64
        }
    }
}
