//! The actor/learner loop.
//!
//! Every environment step is followed by one learner round: a critic update
//! and, once the warm-up steps are collected, a generator update on the
//! same batch. Actors take network snapshots at episode start. With one
//! actor everything runs on the calling thread and is deterministic; with
//! several, actors run on their own threads and the learner on the caller's.

use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::mpsc;
use std::sync::{Arc, Mutex, RwLock};

use serde::{Deserialize, Serialize};

use leader_core::ScenarioStream;
use leader_neural::{Checkpoint, NetworkConfig, NetworkParams};

use crate::actor::{actor_step, AttentionSource, NetworkMemory};
use crate::config::TrainConfig;
use crate::env::{Episode, World};
use crate::learner::Learner;
use crate::replay::{ReplayBuffer, ReplayEntry};
use crate::{derive_stream, TrainError};

const WORLD_KEY: u64 = 10;
const LEARNER_KEY: u64 = 11;

/// One learning-curve row, written when an episode ends.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveRecord {
    /// Environment steps completed when the episode ended.
    pub iteration: usize,
    /// Discounted return of the episode.
    pub cumulative_reward: f64,
    pub collision: u8,
    pub avg_speed: f64,
    /// Mean critic loss over the updates made during the episode (NaN if
    /// none).
    pub critic_loss: f64,
    /// Mean generator objective over the episode's updates (NaN if none).
    pub generator_objective: f64,
}

/// Receives learning-curve rows and periodic checkpoints.
pub trait TrainSink {
    fn record(&mut self, record: &CurveRecord) -> Result<(), TrainError>;

    fn checkpoint(&mut self, _step: usize, _checkpoint: &Checkpoint) -> Result<(), TrainError> {
        Ok(())
    }
}

impl TrainSink for Vec<CurveRecord> {
    fn record(&mut self, record: &CurveRecord) -> Result<(), TrainError> {
        self.push(record.clone());
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutput {
    pub learner: Learner,
    pub steps: usize,
    pub episodes: u64,
    pub buffer_len: usize,
}

impl TrainOutput {
    pub fn checkpoint(&self, seed: u64) -> Checkpoint {
        Checkpoint {
            seed,
            config: self.learner.config,
            generator: self.learner.generator.clone(),
            critic: self.learner.critic.clone(),
        }
    }
}

#[derive(Debug, Default)]
struct Means {
    critic: (f64, usize),
    generator: (f64, usize),
}

impl Means {
    fn take(&mut self) -> (f64, f64) {
        let mean = |(s, n): (f64, usize)| if n == 0 { f64::NAN } else { s / n as f64 };
        let out = (mean(self.critic), mean(self.generator));
        *self = Self::default();
        out
    }
}

/// Learner side of the loop: one update round per collected step.
struct LearnerState {
    learner: Learner,
    stream: ScenarioStream,
    means: Means,
    batch_size: usize,
    warmup: usize,
}

impl LearnerState {
    fn round(&mut self, buffer: &ReplayBuffer, steps: usize) -> Result<(), TrainError> {
        let batch = match buffer.sample(self.batch_size, &mut self.stream) {
            Ok(b) => b,
            Err(TrainError::NotReady { .. }) => return Ok(()),
            Err(e) => return Err(e),
        };
        self.update(&batch, steps)
    }

    fn update(&mut self, batch: &[Arc<ReplayEntry>], steps: usize) -> Result<(), TrainError> {
        let loss = self.learner.update_critic(batch)?;
        self.means.critic.0 += loss;
        self.means.critic.1 += 1;
        if steps > self.warmup {
            let objective = self.learner.update_generator(batch, &mut self.stream)?;
            self.means.generator.0 += objective;
            self.means.generator.1 += 1;
        }
        Ok(())
    }
}

fn world_seed(seed: u64, world: usize) -> u64 {
    derive_stream(seed, &[WORLD_KEY, world as u64]).next_u64()
}

/// Episode `e` of the run is episode `e / n` of world `e % n`.
fn start(worlds: &[World], config: &TrainConfig, e: u64) -> Result<(usize, u64, Episode), TrainError> {
    let w = (e % worlds.len() as u64) as usize;
    let seed = world_seed(config.seed, w);
    let episode = worlds[w].start_episode(seed, e / worlds.len() as u64, config.max_episode_steps)?;
    Ok((w, seed, episode))
}

fn finish(episode: &Episode, world: &World, steps: usize, means: &mut Means) -> CurveRecord {
    let (critic_loss, generator_objective) = means.take();
    CurveRecord {
        iteration: steps,
        cumulative_reward: episode.discounted_return(world.params().gamma),
        collision: u8::from(episode.collided),
        avg_speed: episode.average_speed(),
        critic_loss,
        generator_objective,
    }
}

fn checkpoint_of(learner: &Learner, seed: u64) -> Checkpoint {
    Checkpoint {
        seed,
        config: learner.config,
        generator: learner.generator.clone(),
        critic: learner.critic.clone(),
    }
}

/// Trains freshly initialised networks on episodes drawn round robin from
/// `worlds`.
pub fn train(
    worlds: &[World],
    config: &TrainConfig,
    networks: NetworkConfig,
    sink: &mut dyn TrainSink,
) -> Result<TrainOutput, TrainError> {
    config.validate()?;
    if worlds.is_empty() {
        return Err(TrainError::Config("no worlds to train on".into()));
    }
    let learner = Learner::new(networks, config.seed, config.critic_lr, config.generator_lr);
    let state = LearnerState {
        learner,
        stream: derive_stream(config.seed, &[LEARNER_KEY]),
        means: Means::default(),
        batch_size: config.batch_size,
        warmup: config.warmup_steps,
    };
    if config.actors == 1 {
        train_single(worlds, config, state, sink)
    } else {
        train_parallel(worlds, config, state, sink)
    }
}

fn train_single(
    worlds: &[World],
    config: &TrainConfig,
    mut state: LearnerState,
    sink: &mut dyn TrainSink,
) -> Result<TrainOutput, TrainError> {
    let mut buffer = ReplayBuffer::new(config.buffer_capacity)?;
    let mut steps = 0;
    let mut e = 0;
    while steps < config.total_steps {
        let (w, seed, mut episode) = start(worlds, config, e)?;
        let generator = state.learner.generator.clone();
        let critic = state.learner.critic.clone();
        let mut memory = NetworkMemory::new(&state.learner.config);
        while !episode.done && steps < config.total_steps {
            let source = AttentionSource::Learned {
                config: &state.learner.config,
                generator: &generator,
                critic: Some(&critic),
                warmup: steps < config.warmup_steps,
            };
            let record = actor_step(&worlds[w], &mut episode, &mut memory, source, &config.planner, seed)?;
            buffer.push(record.entry.expect("learned sources produce entries"));
            steps += 1;
            state.round(&buffer, steps)?;
            if config.checkpoint_every > 0 && steps % config.checkpoint_every == 0 {
                sink.checkpoint(steps, &checkpoint_of(&state.learner, config.seed))?;
            }
        }
        sink.record(&finish(&episode, &worlds[w], steps, &mut state.means))?;
        e += 1;
    }
    Ok(TrainOutput {
        learner: state.learner,
        steps,
        episodes: e,
        buffer_len: buffer.len(),
    })
}

enum Event {
    Step,
    EpisodeDone(CurveRecordDraft),
    Failed(TrainError),
}

/// Episode statistics sent by an actor; the learner adds its loss means.
struct CurveRecordDraft {
    cumulative_reward: f64,
    collision: bool,
    avg_speed: f64,
}

fn train_parallel(
    worlds: &[World],
    config: &TrainConfig,
    mut state: LearnerState,
    sink: &mut dyn TrainSink,
) -> Result<TrainOutput, TrainError> {
    let buffer = Mutex::new(ReplayBuffer::new(config.buffer_capacity)?);
    let snapshot: RwLock<Arc<(NetworkParams, NetworkParams)>> =
        RwLock::new(Arc::new((state.learner.generator.clone(), state.learner.critic.clone())));
    let claimed = AtomicUsize::new(0);
    let next_episode = AtomicUsize::new(0);
    let stop = AtomicBool::new(false);
    let net_config = state.learner.config;
    let (tx, rx) = mpsc::channel::<Event>();

    let result = std::thread::scope(|scope| -> Result<(usize, u64), TrainError> {
        for _ in 0..config.actors {
            let tx = tx.clone();
            let (buffer, snapshot, claimed, next_episode, stop) = (&buffer, &snapshot, &claimed, &next_episode, &stop);
            scope.spawn(move || {
                let run = || -> Result<(), TrainError> {
                    while !stop.load(Ordering::Relaxed) {
                        let e = next_episode.fetch_add(1, Ordering::Relaxed) as u64;
                        let (w, seed, mut episode) = start(worlds, config, e)?;
                        let nets = Arc::clone(&snapshot.read().expect("snapshot lock"));
                        let mut memory = NetworkMemory::new(&net_config);
                        while !episode.done {
                            let step = claimed.fetch_add(1, Ordering::Relaxed);
                            if step >= config.total_steps {
                                stop.store(true, Ordering::Relaxed);
                                break;
                            }
                            let source = AttentionSource::Learned {
                                config: &net_config,
                                generator: &nets.0,
                                critic: Some(&nets.1),
                                warmup: step < config.warmup_steps,
                            };
                            let record = actor_step(&worlds[w], &mut episode, &mut memory, source, &config.planner, seed)?;
                            buffer
                                .lock()
                                .expect("buffer lock")
                                .push(record.entry.expect("learned sources produce entries"));
                            if tx.send(Event::Step).is_err() {
                                return Ok(());
                            }
                        }
                        if episode.step > 0 {
                            let draft = CurveRecordDraft {
                                cumulative_reward: episode.discounted_return(worlds[w].params().gamma),
                                collision: episode.collided,
                                avg_speed: episode.average_speed(),
                            };
                            if tx.send(Event::EpisodeDone(draft)).is_err() {
                                return Ok(());
                            }
                        }
                    }
                    Ok(())
                };
                if let Err(e) = run() {
                    stop.store(true, Ordering::Relaxed);
                    let _ = tx.send(Event::Failed(e));
                }
            });
        }
        drop(tx);

        let mut steps = 0;
        let mut episodes = 0;
        for event in rx {
            match event {
                Event::Step => {
                    steps += 1;
                    let batch = {
                        let guard = buffer.lock().expect("buffer lock");
                        guard.sample(config.batch_size, &mut state.stream)
                    };
                    match batch {
                        Ok(batch) => {
                            state.update(&batch, steps)?;
                            *snapshot.write().expect("snapshot lock") =
                                Arc::new((state.learner.generator.clone(), state.learner.critic.clone()));
                        }
                        Err(TrainError::NotReady { .. }) => {}
                        Err(e) => return Err(e),
                    }
                    if config.checkpoint_every > 0 && steps % config.checkpoint_every == 0 {
                        sink.checkpoint(steps, &checkpoint_of(&state.learner, config.seed))?;
                    }
                }
                Event::EpisodeDone(d) => {
                    episodes += 1;
                    let (critic_loss, generator_objective) = state.means.take();
                    sink.record(&CurveRecord {
                        iteration: steps,
                        cumulative_reward: d.cumulative_reward,
                        collision: u8::from(d.collision),
                        avg_speed: d.avg_speed,
                        critic_loss,
                        generator_objective,
                    })?;
                }
                Event::Failed(e) => {
                    stop.store(true, Ordering::Relaxed);
                    return Err(e);
                }
            }
        }
        Ok((steps, episodes))
    });
    let (steps, episodes) = result.inspect_err(|_| stop.store(true, Ordering::Relaxed))?;
    let buffer_len = buffer.into_inner().expect("buffer lock").len();
    Ok(TrainOutput {
        learner: state.learner,
        steps,
        episodes,
        buffer_len,
    })
}
