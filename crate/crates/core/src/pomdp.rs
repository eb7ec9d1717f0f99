//! Generic POMDP contracts shared by the planner and the driving model.

use thiserror::Error;

use crate::rng::{transition_stream, ScenarioStream};

#[derive(Debug, Error, PartialEq)]
pub enum PomdpError {
    #[error("discount factor {0} outside [0, 1)")]
    InvalidDiscount(f64),
    #[error("planning horizon must be at least 1")]
    ZeroHorizon,
    #[error("action count must be at least 1")]
    NoActions,
}

/// Discount, planning depth and action-set size of a POMDP.
///
/// The same horizon bounds both the natural trajectory density and the
/// importance-biased one.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PomdpSpec {
    gamma: f64,
    horizon: usize,
    action_count: usize,
}

impl PomdpSpec {
    pub fn new(gamma: f64, horizon: usize, action_count: usize) -> Result<Self, PomdpError> {
        if !(0.0..1.0).contains(&gamma) {
            return Err(PomdpError::InvalidDiscount(gamma));
        }
        if horizon == 0 {
            return Err(PomdpError::ZeroHorizon);
        }
        if action_count == 0 {
            return Err(PomdpError::NoActions);
        }
        Ok(Self {
            gamma,
            horizon,
            action_count,
        })
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn action_count(&self) -> usize {
        self.action_count
    }
}

/// `Σ_t γ^t r_t`. The empty sequence has return 0.
pub fn discounted_return(rewards: &[f64], gamma: f64) -> Result<f64, PomdpError> {
    if !(0.0..1.0).contains(&gamma) {
        return Err(PomdpError::InvalidDiscount(gamma));
    }
    let mut discount = 1.0;
    let mut total = 0.0;
    for r in rewards {
        total += discount * r;
        discount *= gamma;
    }
    Ok(total)
}

/// Result of one simulated step.
#[derive(Debug, Clone)]
pub struct Transition<S> {
    pub state: S,
    pub reward: f64,
    pub terminal: bool,
}

/// A generative POMDP model. `step` must draw all of its randomness from
/// the supplied stream so that scenarios replay exactly.
pub trait Pomdp {
    type State: Clone;
    type Observation: Clone;
    type ObsKey: Ord + Clone + std::fmt::Debug;

    fn spec(&self) -> &PomdpSpec;

    fn step(
        &self,
        state: &Self::State,
        action: usize,
        stream: &mut ScenarioStream,
    ) -> Transition<Self::State>;

    fn observe(&self, state: &Self::State) -> Self::Observation;

    /// Discrete key of the observation emitted in `state`, used for
    /// observation branching in the belief tree.
    fn observation_key(&self, state: &Self::State) -> Self::ObsKey;
}

#[derive(Debug, Clone)]
pub struct TrajectoryStep<S, O> {
    pub action: usize,
    pub state: S,
    pub observation: O,
}

#[derive(Debug, Clone)]
pub struct Trajectory<S, O> {
    pub initial_state: S,
    pub steps: Vec<TrajectoryStep<S, O>>,
    pub rewards: Vec<f64>,
}

impl<S, O> Trajectory<S, O> {
    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn discounted_return(&self, gamma: f64) -> Result<f64, PomdpError> {
        discounted_return(&self.rewards, gamma)
    }
}

/// Simulates `policy` from `start` for up to `horizon` steps, stopping early
/// at a terminal state. The policy sees the observation history (the
/// observation of `start` first). Step `t` consumes the sub-stream
/// `transition_stream(stream, t)`, the same convention the planner uses.
pub fn sample_trajectory<M, P>(
    model: &M,
    start: &M::State,
    mut policy: P,
    stream: &ScenarioStream,
    horizon: usize,
) -> Trajectory<M::State, M::Observation>
where
    M: Pomdp,
    P: FnMut(&[M::Observation]) -> usize,
{
    let mut history = vec![model.observe(start)];
    let mut state = start.clone();
    let mut steps = Vec::new();
    let mut rewards = Vec::new();
    for depth in 0..horizon {
        let action = policy(&history);
        let mut s = transition_stream(stream, depth);
        let t = model.step(&state, action, &mut s);
        let observation = model.observe(&t.state);
        history.push(observation.clone());
        steps.push(TrajectoryStep {
            action,
            state: t.state.clone(),
            observation,
        });
        rewards.push(t.reward);
        state = t.state;
        if t.terminal {
            break;
        }
    }
    Trajectory {
        initial_state: start.clone(),
        steps,
        rewards,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn two_term_geometric_sum() {
        assert_eq!(discounted_return(&[1.0, 1.0], 0.5).unwrap(), 1.5);
    }

    #[test]
    fn empty_return_is_zero() {
        assert_eq!(discounted_return(&[], 0.95).unwrap(), 0.0);
    }

    #[test]
    fn small_penalties() {
        let r = discounted_return(&[-0.1, -0.1, -0.1], 0.95).unwrap();
        assert!((r - -0.28525).abs() < 1e-12);
    }

    #[test]
    fn rejects_bad_gamma() {
        assert_eq!(
            discounted_return(&[1.0], 1.0),
            Err(PomdpError::InvalidDiscount(1.0))
        );
        assert!(discounted_return(&[1.0], -0.1).is_err());
        assert!(PomdpSpec::new(0.95, 0, 3).is_err());
        assert!(PomdpSpec::new(0.95, 10, 0).is_err());
    }

    proptest! {
        #[test]
        fn return_is_linear(rs in prop::collection::vec(-10.0f64..10.0, 0..20),
                            a in -5.0f64..5.0, g in 0.0f64..0.99) {
            let scaled: Vec<f64> = rs.iter().map(|r| a * r).collect();
            let lhs = discounted_return(&scaled, g).unwrap();
            let rhs = a * discounted_return(&rs, g).unwrap();
            prop_assert!((lhs - rhs).abs() <= 1e-9 * (1.0 + rhs.abs()));
        }

        #[test]
        fn constant_reward_closed_form(c in -5.0f64..5.0, n in 0usize..40, g in 0.0f64..0.99) {
            let rs = vec![c; n];
            let closed = c * (1.0 - g.powi(n as i32)) / (1.0 - g);
            let got = discounted_return(&rs, g).unwrap();
            prop_assert!((got - closed).abs() <= 1e-9 * (1.0 + closed.abs()));
        }
    }
}
