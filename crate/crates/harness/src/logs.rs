//! Line-delimited JSON episode logs: an `episode` record with the static
//! geometry, then one `step` record per planning step.

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use leader_core::geometry::Polyline;
use leader_core::{Action, Observation};

use crate::HarnessError;

pub type Point = [f64; 2];

fn points(p: &Polyline) -> Vec<Point> {
    p.points().iter().map(|v| [v.x, v.y]).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeHeader {
    pub episode: u64,
    pub map: String,
    pub scenario: String,
    pub policy: String,
    pub gamma: f64,
    pub ego_path: Vec<Point>,
    /// Arc length of the ego at episode start.
    pub ego_start: f64,
    /// Candidate paths per agent.
    pub agent_paths: Vec<Vec<Vec<Point>>>,
}

impl EpisodeHeader {
    pub fn new(episode: &leader_train::Episode, map: &str, policy: &str, gamma: f64) -> Self {
        Self {
            episode: episode.id,
            map: map.to_string(),
            scenario: episode.scenario.clone(),
            policy: policy.to_string(),
            gamma,
            ego_path: points(&episode.observation.ego.path),
            ego_start: episode.observation.ego.progress,
            agent_paths: episode.paths.iter().map(|set| set.iter().map(points).collect()).collect(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BodyLog {
    pub x: f64,
    pub y: f64,
    pub heading: f64,
    pub speed: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepLog {
    pub episode: u64,
    pub t: usize,
    /// Ego state at decision time.
    pub ego: BodyLog,
    pub ego_progress: f64,
    pub agents: Vec<BodyLog>,
    pub belief: Vec<Vec<f64>>,
    pub attention: Vec<Vec<f64>>,
    pub action: Action,
    pub reward: f64,
    /// Planner value estimate.
    pub value: f64,
    pub critic_value: Option<f64>,
    pub collision: bool,
    /// Ego arc length after the step.
    pub progress_after: f64,
}

impl StepLog {
    pub fn new(episode: u64, record: &leader_train::StepRecord, progress_after: f64) -> Self {
        let z: &Observation = &record.z;
        Self {
            episode,
            t: record.step,
            ego: BodyLog {
                x: z.ego.position.x,
                y: z.ego.position.y,
                heading: z.ego.heading,
                speed: z.ego.speed,
            },
            ego_progress: z.ego.progress,
            agents: z
                .exo
                .iter()
                .map(|a| BodyLog {
                    x: a.position.x,
                    y: a.position.y,
                    heading: a.heading,
                    speed: a.speed,
                })
                .collect(),
            belief: record.b.agents().to_vec(),
            attention: record.q.agents().to_vec(),
            action: record.action,
            reward: record.outcome.reward,
            value: record.plan.value_estimate,
            critic_value: record.critic_value,
            collision: record.outcome.collision,
            progress_after,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LogRecord {
    Episode(EpisodeHeader),
    Step(StepLog),
}

/// One episode: header and contiguous steps from `t = 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeLog {
    pub header: EpisodeHeader,
    pub steps: Vec<StepLog>,
}

impl EpisodeLog {
    pub fn discounted_return(&self) -> f64 {
        self.steps.iter().rev().fold(0.0, |acc, s| s.reward + self.header.gamma * acc)
    }

    pub fn collisions(&self) -> usize {
        self.steps.iter().filter(|s| s.collision).count()
    }

    pub fn decelerations(&self) -> usize {
        self.steps.iter().filter(|s| s.action == Action::Dec).count()
    }

    pub fn travelled(&self) -> f64 {
        let mut last = self.header.ego_start;
        let mut total = 0.0;
        for s in &self.steps {
            total += (s.progress_after - last).max(0.0);
            last = s.progress_after;
        }
        total
    }

    pub fn records(&self) -> impl Iterator<Item = LogRecord> + '_ {
        std::iter::once(LogRecord::Episode(self.header.clone())).chain(self.steps.iter().cloned().map(LogRecord::Step))
    }
}

pub fn write_logs<W: Write>(mut w: W, logs: &[EpisodeLog]) -> Result<(), HarnessError> {
    for log in logs {
        for r in log.records() {
            serde_json::to_writer(&mut w, &r)?;
            w.write_all(b"\n").map_err(|e| HarnessError::io(std::path::Path::new("<log>"), e))?;
        }
    }
    Ok(())
}

/// Parses a log stream, checking that every step belongs to the open
/// episode and that time indices run contiguously from zero.
pub fn read_logs<R: BufRead>(r: R) -> Result<Vec<EpisodeLog>, HarnessError> {
    let mut logs: Vec<EpisodeLog> = Vec::new();
    for (i, line) in r.lines().enumerate() {
        let n = i + 1;
        let line = line.map_err(|e| HarnessError::io(std::path::Path::new("<log>"), e))?;
        if line.trim().is_empty() {
            continue;
        }
        let record: LogRecord = serde_json::from_str(&line).map_err(|e| HarnessError::Log {
            line: n,
            reason: e.to_string(),
        })?;
        match record {
            LogRecord::Episode(header) => logs.push(EpisodeLog { header, steps: Vec::new() }),
            LogRecord::Step(step) => {
                let log = logs.last_mut().ok_or(HarnessError::Log {
                    line: n,
                    reason: "step before any episode record".into(),
                })?;
                if step.episode != log.header.episode || step.t != log.steps.len() {
                    return Err(HarnessError::Log {
                        line: n,
                        reason: format!(
                            "expected step {} of episode {}, found step {} of episode {}",
                            log.steps.len(),
                            log.header.episode,
                            step.t,
                            step.episode
                        ),
                    });
                }
                log.steps.push(step);
            }
        }
    }
    Ok(logs)
}

pub fn load_logs(path: &std::path::Path) -> Result<Vec<EpisodeLog>, HarnessError> {
    let f = std::fs::File::open(path).map_err(|e| HarnessError::io(path, e))?;
    read_logs(std::io::BufReader::new(f))
}
