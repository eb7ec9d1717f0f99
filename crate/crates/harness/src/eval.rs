//! Evaluation runs: fixed seeds, no learning.

use leader_core::PlannerConfig;
use leader_neural::Checkpoint;
use leader_train::actor::NetworkMemory;
use leader_train::{actor_step, derive_stream, AttentionSource, World};

use crate::logs::{EpisodeHeader, EpisodeLog, StepLog};
use crate::metrics::{compute_metrics, MetricsReport};
use crate::HarnessError;

const EVAL_WORLD_KEY: u64 = 20;

#[derive(Debug, Clone)]
pub enum Policy {
    Leader(Box<Checkpoint>),
    Uniform,
    Ttc,
}

impl Policy {
    pub fn name(&self) -> &'static str {
        match self {
            Policy::Leader(_) => "leader",
            Policy::Uniform => "uniform",
            Policy::Ttc => "ttc",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvalSettings {
    /// Episodes per world.
    pub episodes: usize,
    pub seed: u64,
    pub max_episode_steps: usize,
    pub planner: PlannerConfig,
    pub workers: usize,
}

#[derive(Debug, Clone)]
pub struct Evaluation {
    pub logs: Vec<EpisodeLog>,
    /// One row per world, then the pooled row.
    pub reports: Vec<MetricsReport>,
}

impl Evaluation {
    pub fn pooled(&self) -> &MetricsReport {
        self.reports.last().expect("evaluation always has a pooled row")
    }
}

/// Seed of world `w` in an evaluation seeded with `seed`; shared by every
/// policy so that episodes start identically.
pub fn eval_world_seed(seed: u64, w: usize) -> u64 {
    derive_stream(seed, &[EVAL_WORLD_KEY, w as u64]).next_u64()
}

/// Plays one episode to the end.
pub fn run_episode(
    world: &World,
    world_seed: u64,
    episode: u64,
    policy: &Policy,
    settings: &EvalSettings,
) -> Result<EpisodeLog, HarnessError> {
    let mut ep = world.start_episode(world_seed, episode, settings.max_episode_steps)?;
    let header = EpisodeHeader::new(&ep, world.map.name(), policy.name(), world.params().gamma);
    let mut memory = match policy {
        Policy::Leader(c) => NetworkMemory::new(&c.config),
        _ => NetworkMemory {
            generator: vec![],
            critic: vec![],
        },
    };
    let mut steps = Vec::new();
    while !ep.done {
        let source = match policy {
            Policy::Leader(c) => AttentionSource::Learned {
                config: &c.config,
                generator: &c.generator,
                critic: Some(&c.critic),
                warmup: false,
            },
            Policy::Uniform => AttentionSource::Uniform,
            Policy::Ttc => AttentionSource::Ttc,
        };
        let record = actor_step(world, &mut ep, &mut memory, source, &settings.planner, world_seed)?;
        steps.push(StepLog::new(ep.id, &record, ep.state.ego.progress));
    }
    Ok(EpisodeLog { header, steps })
}

/// Runs `settings.episodes` episodes on every world. Results are ordered by
/// world then episode whatever the worker count.
pub fn run_evaluation(worlds: &[World], policy: &Policy, settings: &EvalSettings) -> Result<Evaluation, HarnessError> {
    if settings.episodes == 0 {
        return Err(HarnessError::Invalid("evaluation needs at least one episode".into()));
    }
    let jobs: Vec<(usize, u64)> = (0..worlds.len())
        .flat_map(|w| (0..settings.episodes as u64).map(move |e| (w, e)))
        .collect();
    let run = |&(w, e): &(usize, u64)| run_episode(&worlds[w], eval_world_seed(settings.seed, w), e, policy, settings);
    let workers = settings.workers.max(1);
    let logs: Vec<EpisodeLog> = if workers == 1 {
        jobs.iter().map(run).collect::<Result<_, _>>()?
    } else {
        let mut slots: Vec<Option<Result<EpisodeLog, HarnessError>>> = (0..jobs.len()).map(|_| None).collect();
        std::thread::scope(|scope| {
            let chunks: Vec<_> = slots.chunks_mut(jobs.len().div_ceil(workers)).enumerate().collect();
            let size = jobs.len().div_ceil(workers);
            for (c, chunk) in chunks {
                let jobs = &jobs;
                let run = &run;
                scope.spawn(move || {
                    for (i, slot) in chunk.iter_mut().enumerate() {
                        *slot = Some(run(&jobs[c * size + i]));
                    }
                });
            }
        });
        slots.into_iter().map(|s| s.expect("every job ran")).collect::<Result<_, _>>()?
    };
    let mut reports = Vec::with_capacity(worlds.len() + 1);
    for (w, world) in worlds.iter().enumerate() {
        let mine: Vec<EpisodeLog> = logs[w * settings.episodes..(w + 1) * settings.episodes].to_vec();
        reports.push(compute_metrics(&mine, world.map.name(), policy.name())?);
    }
    reports.push(compute_metrics(&logs, "all", policy.name())?);
    Ok(Evaluation { logs, reports })
}
