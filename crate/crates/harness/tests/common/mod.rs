#![allow(dead_code)]

use std::path::{Path, PathBuf};

pub fn fixture(rel: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures").join(rel)
}

/// A small configuration over the crossing toy, cheap enough for tests.
pub fn tiny_config(out: &Path) -> String {
    format!(
        r#"
[map]
worlds = [ {{ map = "{map}", scenarios = ["{scenario}"] }} ]

[map.driving.extraction]
length = 80.0
snap_distance = 3.0

[planner]
scenarios = 8
max_expansions = 5

[networks]
width = 6
hidden = 4
generator_feature_layers = 1
generator_head_layers = 2
critic_feature_layers = 1
critic_head_layers = 2

[networks.layout]
slots = 2
max_intentions = 2

[training]
warmup_steps = 20
total_steps = 60
batch_size = 8
buffer_capacity = 200
max_episode_steps = 15
checkpoint_every = 30
output_dir = "{out}/train"

[training.planner]
scenarios = 8
max_expansions = 5

[evaluation]
episodes = 3
seed = 5
max_episode_steps = 12
checkpoint = "{out}/train/final.ckpt"
output_dir = "{out}/eval"
"#,
        map = fixture("maps/crossing.toml").display(),
        scenario = fixture("scenarios/crossing.toml").display(),
        out = out.display(),
    )
}
