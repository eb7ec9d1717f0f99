//! Table-style driving metrics over a set of episode logs.

use serde::{Deserialize, Serialize};

use crate::logs::EpisodeLog;
use crate::HarnessError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    /// Map name, or `all` for pooled rows.
    pub label: String,
    pub policy: String,
    pub episodes: usize,
    pub steps: usize,
    pub collisions: usize,
    /// Mean discounted return per episode.
    pub cumulative_reward: f64,
    /// Collisions per 1000 steps.
    pub collision_rate: f64,
    /// Mean ego arc length per episode (m).
    pub travelled_distance: f64,
    /// Mean over episodes of `1 / max(1, N_dec)`.
    pub smoothness_factor: f64,
}

pub fn compute_metrics(logs: &[EpisodeLog], label: &str, policy: &str) -> Result<MetricsReport, HarnessError> {
    if logs.is_empty() {
        return Err(HarnessError::Invalid("metrics need at least one episode".into()));
    }
    let n = logs.len() as f64;
    let steps: usize = logs.iter().map(|l| l.steps.len()).sum();
    let collisions: usize = logs.iter().map(EpisodeLog::collisions).sum();
    let mean = |f: &dyn Fn(&EpisodeLog) -> f64| {
        // sort before summing so the result does not depend on episode order
        let mut v: Vec<f64> = logs.iter().map(f).collect();
        v.sort_by(f64::total_cmp);
        v.iter().sum::<f64>() / n
    };
    Ok(MetricsReport {
        label: label.to_string(),
        policy: policy.to_string(),
        episodes: logs.len(),
        steps,
        collisions,
        cumulative_reward: mean(&|l| l.discounted_return()),
        collision_rate: if steps == 0 { 0.0 } else { 1000.0 * collisions as f64 / steps as f64 },
        travelled_distance: mean(&|l| l.travelled()),
        smoothness_factor: mean(&|l| 1.0 / l.decelerations().max(1) as f64),
    })
}

pub fn write_reports<W: std::io::Write>(w: W, reports: &[MetricsReport]) -> Result<(), HarnessError> {
    let mut csv = csv::Writer::from_writer(w);
    for r in reports {
        csv.serialize(r)?;
    }
    csv.flush().map_err(|e| HarnessError::io(std::path::Path::new("<metrics>"), e))?;
    Ok(())
}
