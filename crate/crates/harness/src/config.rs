//! Run configuration files.
//!
//! ```toml
//! [map]
//! worlds = [ { map = "../maps/crossing.toml", scenarios = ["../scenarios/crossing.toml"] } ]
//! [map.driving]
//! horizon = 10
//! [planner]            # evaluation planner
//! scenarios = 100
//! [networks]
//! width = 32
//! [training]
//! total_steps = 5000
//! [training.planner]   # planner used while collecting experience
//! scenarios = 30
//! [evaluation]
//! episodes = 200
//! ```
//!
//! Relative paths resolve against the directory of the configuration file.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use leader_core::map::LaneGraph;
use leader_core::scenario::ScenarioSpec;
use leader_core::{DrivingParams, PlannerConfig};
use leader_neural::NetworkConfig;
use leader_train::{TrainConfig, World};

use crate::HarnessError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorldEntry {
    pub map: PathBuf,
    pub scenarios: Vec<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MapSection {
    pub worlds: Vec<WorldEntry>,
    #[serde(default)]
    pub driving: DrivingParams,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainingSection {
    #[serde(flatten)]
    pub config: TrainConfig,
    pub output_dir: PathBuf,
}

impl Default for TrainingSection {
    fn default() -> Self {
        Self {
            config: TrainConfig::default(),
            output_dir: PathBuf::from("runs/train"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvaluationSection {
    /// Episodes per world.
    pub episodes: usize,
    pub seed: u64,
    pub max_episode_steps: usize,
    /// Checkpoint used by the `leader` policy.
    pub checkpoint: Option<PathBuf>,
    pub output_dir: PathBuf,
    pub workers: usize,
}

impl Default for EvaluationSection {
    fn default() -> Self {
        Self {
            episodes: 200,
            seed: 1000,
            max_episode_steps: 60,
            checkpoint: None,
            output_dir: PathBuf::from("runs/eval"),
            workers: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub map: MapSection,
    #[serde(default)]
    pub planner: PlannerConfig,
    #[serde(default)]
    pub networks: NetworkConfig,
    #[serde(default)]
    pub training: TrainingSection,
    #[serde(default)]
    pub evaluation: EvaluationSection,
    /// Directory relative paths resolve against.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

impl RunConfig {
    pub fn parse(text: &str, base_dir: &Path) -> Result<Self, HarnessError> {
        let mut c: RunConfig = toml::from_str(text)?;
        c.base_dir = base_dir.to_path_buf();
        if c.map.worlds.is_empty() {
            return Err(HarnessError::Invalid("[map] lists no worlds".into()));
        }
        Ok(c)
    }

    pub fn load(path: &Path) -> Result<Self, HarnessError> {
        let text = std::fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Self::parse(&text, &base)
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    /// Loads every map with its scenarios.
    pub fn worlds(&self) -> Result<Vec<World>, HarnessError> {
        self.map
            .worlds
            .iter()
            .map(|w| {
                let map = LaneGraph::load(&self.resolve(&w.map))?;
                let scenarios = w
                    .scenarios
                    .iter()
                    .map(|s| ScenarioSpec::load(&self.resolve(s)))
                    .collect::<Result<Vec<_>, _>>()?;
                Ok(World::new(map, scenarios, self.map.driving)?)
            })
            .collect()
    }
}
