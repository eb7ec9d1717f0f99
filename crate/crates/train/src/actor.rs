//! One planning step of an actor: attention, plan, execute, record.

use leader_core::attention::{ttc_attention, uniform_attention};
use leader_core::{plan, Action, IntentionDistribution, Observation, PlanResult, PlannerConfig};
use leader_neural::models::{critic_forward, generator_forward};
use leader_neural::{encode_attention, encode_state, NetworkConfig, NetworkParams};

use crate::env::{Episode, StepOutcome, World};
use crate::replay::ReplayEntry;
use crate::{derive_stream, TrainError};

const PLAN_KEY: u64 = 3;
const EPS_KEY: u64 = 4;

/// Where the planner's attention comes from.
#[derive(Debug, Clone, Copy)]
pub enum AttentionSource<'a> {
    Uniform,
    Ttc,
    /// The generator. With `warmup` set the planner gets uniform attention
    /// instead, but the networks still run so their memories advance and a
    /// replay entry is produced.
    Learned {
        config: &'a NetworkConfig,
        generator: &'a NetworkParams,
        critic: Option<&'a NetworkParams>,
        warmup: bool,
    },
}

/// Recurrent memories carried through an episode; reset at episode start.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkMemory {
    pub generator: Vec<f64>,
    pub critic: Vec<f64>,
}

impl NetworkMemory {
    pub fn new(config: &NetworkConfig) -> Self {
        Self {
            generator: vec![0.0; config.hidden],
            critic: vec![0.0; config.hidden],
        }
    }
}

#[derive(Debug, Clone)]
pub struct StepRecord {
    pub step: usize,
    pub b: IntentionDistribution,
    pub z: Observation,
    pub q: IntentionDistribution,
    pub plan: PlanResult,
    pub action: Action,
    pub outcome: StepOutcome,
    /// Critic prediction for `(b, z, q)` when a critic was supplied.
    pub critic_value: Option<f64>,
    /// Present for learned attention sources.
    pub entry: Option<ReplayEntry>,
}

/// Attention for the current step, the plan under it, and the executed
/// action; the belief advances with the new observation.
pub fn actor_step(
    world: &World,
    episode: &mut Episode,
    memory: &mut NetworkMemory,
    source: AttentionSource<'_>,
    planner: &PlannerConfig,
    seed: u64,
) -> Result<StepRecord, TrainError> {
    if episode.done {
        return Err(TrainError::EpisodeOver);
    }
    let params = world.params();
    let b = episode.belief.clone();
    let z = episode.observation.clone();
    let key = [episode.id, episode.step as u64];
    let mut learned = None;
    let q = match source {
        AttentionSource::Uniform => uniform_attention(&b),
        AttentionSource::Ttc => ttc_attention(&b, &z, &episode.paths, params)?,
        AttentionSource::Learned {
            config,
            generator,
            critic,
            warmup,
        } => {
            let encoded = encode_state(&config.layout, &b, &z, &episode.paths, params.v_max)?;
            let mut eps_stream = derive_stream(seed, &[EPS_KEY, key[0], key[1]]);
            let eps: Vec<f64> = (0..config.layout.attention_dim()).map(|_| eps_stream.next_gaussian()).collect();
            let pass = generator_forward(generator, &config.layout, &encoded, &eps, &memory.generator, config.noise_scale)?;
            let q = if warmup { uniform_attention(&b) } else { pass.q.clone() };
            let slot_q = encode_attention(&config.layout, &encoded, &q);
            let generator_memory = std::mem::replace(&mut memory.generator, pass.memory);
            let critic_memory = memory.critic.clone();
            let critic_value = match critic {
                Some(c) => {
                    let pass = critic_forward(c, &encoded, &slot_q, &memory.critic)?;
                    memory.critic = pass.memory;
                    Some(pass.value)
                }
                None => None,
            };
            learned = Some((encoded, slot_q, generator_memory, critic_memory, critic_value));
            q
        }
    };
    let plan_seed = derive_stream(seed, &[PLAN_KEY, key[0], key[1]]).next_u64();
    let result = plan(&world.model, &b, &z, &q, &episode.paths, planner, plan_seed)?;
    let action = Action::ALL[result.action];
    let step = episode.step;
    let outcome = episode.advance(world, action)?;
    let (entry, critic_value) = match learned {
        Some((encoded, slot_q, generator_memory, critic_memory, critic_value)) => (
            Some(ReplayEntry {
                b: b.clone(),
                z: z.clone(),
                q: q.clone(),
                value: result.value_estimate,
                episode: episode.id,
                step,
                encoded,
                slot_q,
                generator_memory,
                critic_memory,
            }),
            critic_value,
        ),
        None => (None, None),
    };
    Ok(StepRecord {
        step,
        b,
        z,
        q,
        plan: result,
        action,
        outcome,
        critic_value,
        entry,
    })
}
