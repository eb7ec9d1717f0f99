//! Experience collection with the importance-sampling planner, the replay
//! buffer and the alternating critic/generator updates.

pub mod actor;
pub mod config;
pub mod env;
pub mod learner;
pub mod replay;
pub mod trainer;

use thiserror::Error;

pub use actor::{actor_step, AttentionSource, StepRecord};
pub use config::TrainConfig;
pub use env::{Episode, StepOutcome, World};
pub use learner::{critic_update, generator_update, Learner};
pub use replay::{ReplayBuffer, ReplayEntry};
pub use trainer::{train, CurveRecord, TrainOutput, TrainSink};

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("invalid training configuration: {0}")]
    Config(String),
    #[error("replay buffer holds {have} entries, batch needs {need}")]
    NotReady { have: usize, need: usize },
    #[error("non-finite {what} at update {update}")]
    NonFinite { what: &'static str, update: u64 },
    #[error("episode has already ended")]
    EpisodeOver,
    #[error(transparent)]
    Neural(#[from] leader_neural::NeuralError),
    #[error(transparent)]
    Plan(#[from] leader_core::planner::PlanError),
    #[error(transparent)]
    Belief(#[from] leader_core::belief::BeliefError),
    #[error(transparent)]
    Scenario(#[from] leader_core::scenario::ScenarioError),
    #[error(transparent)]
    Map(#[from] leader_core::map::MapError),
    #[error(transparent)]
    Model(#[from] leader_core::pomdp::PomdpError),
    #[error("sink: {0}")]
    Sink(String),
}

/// A stream derived from `seed` by successive splits along `path`.
pub fn derive_stream(seed: u64, path: &[u64]) -> leader_core::ScenarioStream {
    path.iter()
        .fold(leader_core::ScenarioStream::new(seed), |s, &k| s.split(k))
}
