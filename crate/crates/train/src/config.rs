use serde::{Deserialize, Serialize};

use leader_core::PlannerConfig;

use crate::TrainError;

/// Knobs of the training loop. Step counts are environment steps summed over
/// all actors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    /// Steps collected under uniform attention with critic-only updates.
    pub warmup_steps: usize,
    pub total_steps: usize,
    pub batch_size: usize,
    pub critic_lr: f64,
    pub generator_lr: f64,
    pub buffer_capacity: usize,
    pub actors: usize,
    pub seed: u64,
    /// Episodes are cut after this many steps.
    pub max_episode_steps: usize,
    /// Write a checkpoint every this many steps (0 disables).
    pub checkpoint_every: usize,
    pub planner: PlannerConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            warmup_steps: 2000,
            total_steps: 20000,
            batch_size: 64,
            critic_lr: 1e-3,
            generator_lr: 1e-4,
            buffer_capacity: 50_000,
            actors: 1,
            seed: 0,
            max_episode_steps: 60,
            checkpoint_every: 0,
            planner: PlannerConfig {
                scenarios: 30,
                max_expansions: 20,
                ..PlannerConfig::default()
            },
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        let positive = [
            ("total_steps", self.total_steps),
            ("batch_size", self.batch_size),
            ("buffer_capacity", self.buffer_capacity),
            ("actors", self.actors),
            ("max_episode_steps", self.max_episode_steps),
            ("planner.scenarios", self.planner.scenarios),
        ];
        for (name, v) in positive {
            if v == 0 {
                return Err(TrainError::Config(format!("{name} must be positive")));
            }
        }
        if self.warmup_steps > self.total_steps {
            return Err(TrainError::Config(format!(
                "warm-up ({}) exceeds the total step count ({})",
                self.warmup_steps, self.total_steps
            )));
        }
        if self.batch_size > self.buffer_capacity {
            return Err(TrainError::Config("batch larger than the buffer".into()));
        }
        if !(self.critic_lr > 0.0 && self.generator_lr > 0.0) {
            return Err(TrainError::Config("learning rates must be positive".into()));
        }
        Ok(())
    }
}
