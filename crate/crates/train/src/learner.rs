//! Critic regression onto planner values and generator descent through the
//! frozen critic.

use std::sync::Arc;

use leader_core::ScenarioStream;
use leader_neural::models::{critic_backward, critic_forward, generator_backward, generator_forward};
use leader_neural::{Adam, Layout, NetworkConfig, NetworkParams};

use crate::replay::ReplayEntry;
use crate::TrainError;

/// `mean |C_φ(b, z, q) − V̂|²` over the batch followed by one Adam step on
/// `φ`. Returns the loss before the step.
pub fn critic_update(
    critic: &mut NetworkParams,
    optimizer: &mut Adam,
    lr: f64,
    layout: &Layout,
    batch: &[Arc<ReplayEntry>],
) -> Result<f64, TrainError> {
    if batch.is_empty() {
        return Err(TrainError::NotReady { have: 0, need: 1 });
    }
    let n = batch.len() as f64;
    let mut grad = vec![0.0; critic.len()];
    let mut loss = 0.0;
    for e in batch {
        let pass = critic_forward(critic, &e.encoded, &e.slot_q, &e.critic_memory)?;
        let err = pass.value - e.value;
        loss += err * err / n;
        critic_backward(critic, layout, &pass, 2.0 * err / n, &mut grad);
    }
    if !loss.is_finite() {
        return Err(TrainError::NonFinite {
            what: "critic loss",
            update: optimizer.steps(),
        });
    }
    optimizer.step(critic, &grad, lr)?;
    Ok(loss)
}

/// `mean_ε C_φ(b, z, G_ψ(b, z, ε))` over the batch with one fresh standard
/// normal draw per entry, followed by one Adam step on `ψ`. The critic is
/// only read. Returns the objective before the step.
pub fn generator_update(
    generator: &mut NetworkParams,
    optimizer: &mut Adam,
    lr: f64,
    critic: &NetworkParams,
    config: &NetworkConfig,
    batch: &[Arc<ReplayEntry>],
    noise: &mut ScenarioStream,
) -> Result<f64, TrainError> {
    if batch.is_empty() {
        return Err(TrainError::NotReady { have: 0, need: 1 });
    }
    let n = batch.len() as f64;
    let layout = &config.layout;
    let mut grad = vec![0.0; generator.len()];
    let mut critic_grad = vec![0.0; critic.len()];
    let mut objective = 0.0;
    for e in batch {
        let eps: Vec<f64> = (0..layout.attention_dim()).map(|_| noise.next_gaussian()).collect();
        let g = generator_forward(generator, layout, &e.encoded, &eps, &e.generator_memory, config.noise_scale)?;
        let c = critic_forward(critic, &e.encoded, &g.slot_q, &e.critic_memory)?;
        objective += c.value / n;
        let dq = critic_backward(critic, layout, &c, 1.0 / n, &mut critic_grad);
        generator_backward(generator, layout, &e.encoded, &g, &dq, &mut grad);
    }
    if !objective.is_finite() {
        return Err(TrainError::NonFinite {
            what: "generator objective",
            update: optimizer.steps(),
        });
    }
    optimizer.step(generator, &grad, lr)?;
    Ok(objective)
}

/// Both networks with their optimisers.
#[derive(Debug, Clone)]
pub struct Learner {
    pub config: NetworkConfig,
    pub generator: NetworkParams,
    pub critic: NetworkParams,
    generator_opt: Adam,
    critic_opt: Adam,
    pub critic_lr: f64,
    pub generator_lr: f64,
}

impl Learner {
    /// Freshly initialised networks.
    pub fn new(config: NetworkConfig, seed: u64, critic_lr: f64, generator_lr: f64) -> Self {
        let generator = NetworkParams::init(config.generator_spec(), seed);
        let critic = NetworkParams::init(config.critic_spec(), seed.wrapping_add(1));
        Self::from_networks(config, generator, critic, critic_lr, generator_lr)
    }

    pub fn from_networks(
        config: NetworkConfig,
        generator: NetworkParams,
        critic: NetworkParams,
        critic_lr: f64,
        generator_lr: f64,
    ) -> Self {
        Self {
            generator_opt: Adam::new(generator.len()),
            critic_opt: Adam::new(critic.len()),
            config,
            generator,
            critic,
            critic_lr,
            generator_lr,
        }
    }

    pub fn critic_steps(&self) -> u64 {
        self.critic_opt.steps()
    }

    pub fn generator_steps(&self) -> u64 {
        self.generator_opt.steps()
    }

    pub fn update_critic(&mut self, batch: &[Arc<ReplayEntry>]) -> Result<f64, TrainError> {
        critic_update(&mut self.critic, &mut self.critic_opt, self.critic_lr, &self.config.layout, batch)
    }

    pub fn update_generator(&mut self, batch: &[Arc<ReplayEntry>], noise: &mut ScenarioStream) -> Result<f64, TrainError> {
        generator_update(
            &mut self.generator,
            &mut self.generator_opt,
            self.generator_lr,
            &self.critic,
            &self.config,
            batch,
            noise,
        )
    }
}
