#![allow(dead_code)]

use leader_core::map::{LaneGraph, PathExtraction};
use leader_core::scenario::ScenarioSpec;
use leader_core::DrivingParams;
use leader_neural::{Layout, NetworkConfig};
use leader_train::World;

/// An ego lane along y = 0 and one approach lane from the south that either
/// crosses the ego lane or turns east before reaching it.
pub const CROSSING_MAP: &str = r#"
name = "crossing"
nodes = [
    { id = 0, x = -40.0, y = 0.0 },
    { id = 1, x = 80.0, y = 0.0 },
    { id = 10, x = 20.0, y = -30.0 },
    { id = 11, x = 20.0, y = -8.0 },
    { id = 12, x = 20.0, y = 40.0 },
    { id = 13, x = 70.0, y = -8.0 },
]
edges = [
    { from = 0, to = 1, speed_limit = 6.0 },
    { from = 10, to = 11, speed_limit = 3.0 },
    { from = 11, to = 12, speed_limit = 3.0 },
    { from = 11, to = 13, speed_limit = 3.0 },
]
ego_paths = [ { name = "main", nodes = [0, 1] } ]
"#;

pub const CROSSING_SCENARIO: &str = r#"
name = "crossing"
ego_path = "main"
ego_start = 20.0
ego_speed = 3.0
seed = 7
jitter = 3.0
[[agents]]
x = 20.0
y = -22.0
speed = 3.0
prior = [0.1, 0.9]
"#;

pub fn params() -> DrivingParams {
    DrivingParams {
        extraction: PathExtraction {
            length: 80.0,
            snap_distance: 3.0,
        },
        ..DrivingParams::default()
    }
}

pub fn crossing_world() -> World {
    World::new(
        LaneGraph::parse(CROSSING_MAP).unwrap(),
        vec![ScenarioSpec::parse(CROSSING_SCENARIO).unwrap()],
        params(),
    )
    .unwrap()
}

pub fn small_networks() -> NetworkConfig {
    NetworkConfig {
        layout: Layout {
            slots: 2,
            max_intentions: 2,
        },
        width: 8,
        hidden: 4,
        generator_feature_layers: 1,
        generator_head_layers: 2,
        critic_feature_layers: 1,
        critic_head_layers: 2,
        noise_scale: 0.5,
    }
}
