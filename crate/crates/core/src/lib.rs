//! POMDP model, belief tracking and importance-sampling tree search for
//! crowd driving.

pub mod attention;
pub mod belief;
pub mod driving;
pub mod geometry;
pub mod is_math;
pub mod map;
pub mod planner;
pub mod pomdp;
pub mod rng;
pub mod scenario;

pub use belief::{IntentionDistribution, ATTENTION_FLOOR};
pub use driving::{Action, DrivingModel, DrivingParams, Observation, WorldState};
pub use planner::{plan, plan_despot, PlanResult, PlannerConfig};
pub use rng::ScenarioStream;
