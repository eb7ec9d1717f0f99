//! Attention snapshots as plot data: one JSON record per line.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::logs::{BodyLog, EpisodeLog, Point};
use crate::HarnessError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SnapshotRecord {
    EgoPath { points: Vec<Point> },
    Ego { t: usize, body: BodyLog },
    Agent { agent: usize, body: BodyLog },
    /// One candidate path with its belief and attention values.
    Intention {
        agent: usize,
        intention: usize,
        belief: f64,
        attention: f64,
        points: Vec<Point>,
    },
}

/// Geometry, belief and attention at step `step` of `log`.
pub fn export_attention_snapshot(log: &EpisodeLog, step: usize) -> Result<Vec<SnapshotRecord>, HarnessError> {
    let s = log.steps.get(step).ok_or_else(|| {
        HarnessError::Invalid(format!("step {step} is outside the episode ({} steps)", log.steps.len()))
    })?;
    let mut out = vec![
        SnapshotRecord::EgoPath {
            points: log.header.ego_path.clone(),
        },
        SnapshotRecord::Ego { t: s.t, body: s.ego },
    ];
    for (i, body) in s.agents.iter().enumerate() {
        out.push(SnapshotRecord::Agent { agent: i, body: *body });
        for (m, path) in log.header.agent_paths[i].iter().enumerate() {
            out.push(SnapshotRecord::Intention {
                agent: i,
                intention: m,
                belief: s.belief[i][m],
                attention: s.attention[i][m],
                points: path.clone(),
            });
        }
    }
    Ok(out)
}

pub fn write_snapshot<W: Write>(mut w: W, records: &[SnapshotRecord]) -> Result<(), HarnessError> {
    for r in records {
        serde_json::to_writer(&mut w, r)?;
        w.write_all(b"\n").map_err(|e| HarnessError::io(std::path::Path::new("<snapshot>"), e))?;
    }
    Ok(())
}

pub fn read_snapshot(text: &str) -> Result<Vec<SnapshotRecord>, HarnessError> {
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| serde_json::from_str(l).map_err(HarnessError::from))
        .collect()
}
