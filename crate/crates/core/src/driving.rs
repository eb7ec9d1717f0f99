//! The crowd-driving POMDP: ego kinematics (pure pursuit steering over a
//! kinematic bicycle), a simplified intention-conditioned exo-agent motion
//! model, collision geometry, the additive reward and the observation
//! function.
//!
//! Exo-agents follow their intended path at the lane speed limit and brake
//! in proportion to how far their forward time-to-collision drops below a
//! threshold; Gaussian noise perturbs the resulting positions.

use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{wrap_angle, Polyline, Vec2};
use crate::map::PathExtraction;
use crate::pomdp::{Pomdp, PomdpSpec, Transition};
use crate::rng::ScenarioStream;

#[derive(Debug, Error, PartialEq)]
pub enum DrivingError {
    #[error("agent {agent}: intention {intention} out of range (has {count} paths)")]
    IntentionOutOfRange {
        agent: usize,
        intention: usize,
        count: usize,
    },
    #[error("{exo} exo-agents but {intentions} intentions and {paths} path sets")]
    LengthMismatch {
        exo: usize,
        intentions: usize,
        paths: usize,
    },
    #[error("agent {0} has no candidate paths")]
    NoPaths(usize),
    #[error("action index {0} out of range")]
    BadAction(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Action {
    Acc,
    Cur,
    Dec,
}

impl Action {
    pub const ALL: [Action; 3] = [Action::Acc, Action::Cur, Action::Dec];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Result<Self, DrivingError> {
        Self::ALL.get(i).copied().ok_or(DrivingError::BadAction(i))
    }

    /// Longitudinal acceleration in m/s² given the action magnitude.
    pub fn acceleration(self, magnitude: f64) -> f64 {
        match self {
            Action::Acc => magnitude,
            Action::Cur => 0.0,
            Action::Dec => -magnitude,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Action::Acc => "ACC",
            Action::Cur => "CUR",
            Action::Dec => "DEC",
        }
    }
}

/// Model constants. Defaults are the desk-scale values used throughout.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DrivingParams {
    pub v_max: f64,
    pub dt: f64,
    /// Magnitude of the ACC/DEC accelerations.
    pub accel: f64,
    pub wheelbase: f64,
    pub max_steer: f64,
    pub lookahead_min: f64,
    pub lookahead_gain: f64,
    pub ego_radius: f64,
    pub exo_radius: f64,
    /// Exo-agents brake when their forward time-to-collision is below this.
    pub exo_ttc_threshold: f64,
    pub exo_brake: f64,
    pub exo_accel: f64,
    /// Standard deviation of the position noise added to exo transitions.
    pub exo_noise: f64,
    /// Grid side for observation binning (m).
    pub obs_cell: f64,
    /// Speed bin width for observation binning (m/s).
    pub speed_bin: f64,
    /// The rollout policy decelerates when any agent is within this TTC.
    pub rollout_ttc: f64,
    pub gamma: f64,
    pub horizon: usize,
    pub extraction: PathExtraction,
}

impl Default for DrivingParams {
    fn default() -> Self {
        Self {
            v_max: 6.0,
            dt: 1.0 / 3.0,
            accel: 3.0,
            wheelbase: 2.5,
            max_steer: 0.6,
            lookahead_min: 1.0,
            lookahead_gain: 0.5,
            ego_radius: 1.5,
            exo_radius: 1.0,
            exo_ttc_threshold: 3.0,
            exo_brake: 4.0,
            exo_accel: 1.5,
            exo_noise: 0.05,
            obs_cell: 1.0,
            speed_bin: 0.5,
            rollout_ttc: 2.0,
            gamma: 0.95,
            horizon: 10,
            extraction: PathExtraction::default(),
        }
    }
}

impl DrivingParams {
    /// The same parameters with all transition noise removed.
    pub fn noise_free(mut self) -> Self {
        self.exo_noise = 0.0;
        self
    }
}

/// Ego-vehicle state. `progress` caches the arc length of the projection of
/// `position` on `path`.
#[derive(Debug, Clone, PartialEq)]
pub struct EgoState {
    pub position: Vec2,
    pub speed: f64,
    pub heading: f64,
    pub path: Arc<Polyline>,
    pub progress: f64,
}

impl EgoState {
    /// Ego placed on its path at arc length `start`, aligned with the path.
    pub fn on_path(path: Arc<Polyline>, start: f64, speed: f64) -> Self {
        Self {
            position: path.point_at(start),
            heading: path.heading_at(start),
            speed,
            progress: start,
            path,
        }
    }

    pub fn velocity(&self) -> Vec2 {
        Vec2::from_angle(self.heading) * self.speed
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExoState {
    pub position: Vec2,
    pub speed: f64,
    pub heading: f64,
}

impl ExoState {
    pub fn velocity(&self) -> Vec2 {
        Vec2::from_angle(self.heading) * self.speed
    }
}

/// Candidate paths of every exo-agent, shared between all states of an
/// episode.
pub type AgentPaths = Arc<Vec<Vec<Polyline>>>;

#[derive(Debug, Clone, PartialEq)]
pub struct WorldState {
    pub ego: EgoState,
    pub exo: Vec<ExoState>,
    pub intentions: Vec<usize>,
    pub paths: AgentPaths,
}

impl WorldState {
    pub fn new(
        ego: EgoState,
        exo: Vec<ExoState>,
        intentions: Vec<usize>,
        paths: AgentPaths,
    ) -> Result<Self, DrivingError> {
        if exo.len() != intentions.len() || exo.len() != paths.len() {
            return Err(DrivingError::LengthMismatch {
                exo: exo.len(),
                intentions: intentions.len(),
                paths: paths.len(),
            });
        }
        for (agent, (&intention, set)) in intentions.iter().zip(paths.iter()).enumerate() {
            if set.is_empty() {
                return Err(DrivingError::NoPaths(agent));
            }
            if intention >= set.len() {
                return Err(DrivingError::IntentionOutOfRange {
                    agent,
                    intention,
                    count: set.len(),
                });
            }
        }
        Ok(Self {
            ego,
            exo,
            intentions,
            paths,
        })
    }

    pub fn intended_path(&self, agent: usize) -> &Polyline {
        &self.paths[agent][self.intentions[agent]]
    }

    pub fn path_counts(&self) -> Vec<usize> {
        self.paths.iter().map(Vec::len).collect()
    }
}

/// Everything observable: ego and exo physical states, no intentions.
#[derive(Debug, Clone, PartialEq)]
pub struct Observation {
    pub ego: EgoState,
    pub exo: Vec<ExoState>,
}

/// Binned observation used for tree branching.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ObservationKey(pub Vec<i32>);

/// Signalled when the ego has run off the end of its reference path.
#[derive(Debug, Clone, PartialEq)]
pub struct PathExhausted(pub EgoState);

/// Pure-pursuit steering toward a speed-proportional lookahead point on the
/// reference path, then one kinematic-bicycle step at the updated speed.
pub fn step_ego(ego: &EgoState, action: Action, p: &DrivingParams) -> Result<EgoState, PathExhausted> {
    let speed = (ego.speed + action.acceleration(p.accel) * p.dt).clamp(0.0, p.v_max);
    let lookahead = p.lookahead_min.max(p.lookahead_gain * ego.speed);
    let target = ego.path.point_at(ego.progress + lookahead);
    let to_target = target - ego.position;
    let alpha = wrap_angle(to_target.angle() - ego.heading);
    let steer = (2.0 * p.wheelbase * alpha.sin())
        .atan2(to_target.norm().max(1e-9))
        .clamp(-p.max_steer, p.max_steer);
    let position = ego.position + Vec2::from_angle(ego.heading) * (speed * p.dt);
    let heading = wrap_angle(ego.heading + speed / p.wheelbase * steer.tan() * p.dt);
    let proj = ego
        .path
        .project_window(position, ego.progress - 1.0, ego.progress + speed * p.dt + 5.0);
    let next = EgoState {
        position,
        speed,
        heading,
        path: Arc::clone(&ego.path),
        progress: proj.arc.max(ego.progress),
    };
    if next.progress >= ego.path.length() {
        Err(PathExhausted(next))
    } else {
        Ok(next)
    }
}

/// Time until an entity ahead along `heading`'s ray comes within `reach`,
/// assuming it keeps its velocity component along the ray. Infinite when
/// nothing closes in.
fn forward_ttc(
    pos: Vec2,
    heading: f64,
    speed: f64,
    other: Vec2,
    other_velocity: Vec2,
    reach: f64,
) -> f64 {
    let dir = Vec2::from_angle(heading);
    let rel = other - pos;
    let longitudinal = rel.dot(dir);
    if longitudinal <= 0.0 || rel.cross(dir).abs() > reach {
        return f64::INFINITY;
    }
    let closing = speed - other_velocity.dot(dir);
    let gap = (longitudinal - reach).max(0.0);
    if gap == 0.0 {
        return 0.0;
    }
    if closing <= 0.0 {
        return f64::INFINITY;
    }
    gap / closing
}

/// Constant-velocity time until two discs first touch; 0 if already
/// touching, infinite if they never do.
pub fn constant_velocity_ttc(p1: Vec2, u1: Vec2, p2: Vec2, u2: Vec2, reach: f64) -> f64 {
    let d = p2 - p1;
    let c = d.norm_sq() - reach * reach;
    if c <= 0.0 {
        return 0.0;
    }
    let w = u2 - u1;
    let a = w.norm_sq();
    let b = 2.0 * d.dot(w);
    if a <= 1e-12 || b >= 0.0 {
        return f64::INFINITY;
    }
    let disc = b * b - 4.0 * a * c;
    if disc < 0.0 {
        return f64::INFINITY;
    }
    (-b - disc.sqrt()) / (2.0 * a)
}

/// Advances every exo-agent along its intended path. `noise` holds one
/// standard-normal 2D draw per agent, scaled by `p.exo_noise`.
pub fn step_exo(state: &WorldState, noise: &[Vec2], p: &DrivingParams) -> Vec<ExoState> {
    let ego_velocity = state.ego.velocity();
    let exo_velocities: Vec<Vec2> = state.exo.iter().map(ExoState::velocity).collect();
    state
        .exo
        .iter()
        .enumerate()
        .map(|(i, agent)| {
            let path = state.intended_path(i);
            let mut ttc = forward_ttc(
                agent.position,
                agent.heading,
                agent.speed,
                state.ego.position,
                ego_velocity,
                p.exo_radius + p.ego_radius,
            );
            for (j, other) in state.exo.iter().enumerate() {
                if j != i {
                    ttc = ttc.min(forward_ttc(
                        agent.position,
                        agent.heading,
                        agent.speed,
                        other.position,
                        exo_velocities[j],
                        2.0 * p.exo_radius,
                    ));
                }
            }
            let arc = path.project(agent.position).arc;
            let speed = if ttc < p.exo_ttc_threshold {
                let urgency = 1.0 - ttc / p.exo_ttc_threshold;
                (agent.speed - p.exo_brake * p.dt * urgency).max(0.0)
            } else {
                let preferred = path.speed_limit_at(arc);
                let dv = (preferred - agent.speed).clamp(-p.exo_brake * p.dt, p.exo_accel * p.dt);
                agent.speed + dv
            };
            let next_arc = arc + speed * p.dt;
            let n = noise.get(i).copied().unwrap_or(Vec2::ZERO);
            ExoState {
                position: path.point_at(next_arc) + n * p.exo_noise,
                speed,
                heading: path.heading_at(next_arc),
            }
        })
        .collect()
}

/// Closed disc-disc test between the ego and every exo-agent.
pub fn is_collision(state: &WorldState, p: &DrivingParams) -> bool {
    let reach = p.ego_radius + p.exo_radius;
    state
        .exo
        .iter()
        .any(|a| a.position.distance(state.ego.position) <= reach)
}

/// `r_co(s) + r_ef(s) + r_sm(a)`.
pub fn reward(state: &WorldState, action: Action, p: &DrivingParams) -> f64 {
    let v = state.ego.speed;
    let mut r = (v - p.v_max) / p.v_max;
    if is_collision(state, p) {
        r += -20.0 * (v * v + 0.5);
    }
    if action != Action::Cur {
        r += -0.1;
    }
    r
}

pub fn observe(state: &WorldState) -> Observation {
    Observation {
        ego: state.ego.clone(),
        exo: state.exo.clone(),
    }
}

fn bin(value: f64, width: f64) -> i32 {
    (value / width).floor() as i32
}

/// Bins positions to a `cell`-sided grid and speeds to `speed_bin` wide
/// bins; equal keys iff all bins are equal.
pub fn observation_key(z: &Observation, cell: f64, speed_bin: f64) -> ObservationKey {
    let mut key = Vec::with_capacity(3 + 3 * z.exo.len());
    key.push(bin(z.ego.position.x, cell));
    key.push(bin(z.ego.position.y, cell));
    key.push(bin(z.ego.speed, speed_bin));
    for a in &z.exo {
        key.push(bin(a.position.x, cell));
        key.push(bin(a.position.y, cell));
        key.push(bin(a.speed, speed_bin));
    }
    ObservationKey(key)
}

/// Smallest constant-velocity TTC between the ego and any exo-agent.
pub fn min_ego_ttc(ego: &EgoState, exo: &[ExoState], p: &DrivingParams) -> f64 {
    let reach = p.ego_radius + p.exo_radius;
    let u = ego.velocity();
    exo.iter()
        .map(|a| constant_velocity_ttc(ego.position, u, a.position, a.velocity(), reach))
        .fold(f64::INFINITY, f64::min)
}

/// The reactive rollout policy: DEC if any agent is within the rollout TTC,
/// else ACC below the speed limit, else CUR.
pub fn reactive_action(ego: &EgoState, exo: &[ExoState], p: &DrivingParams) -> Action {
    if min_ego_ttc(ego, exo, p) < p.rollout_ttc {
        Action::Dec
    } else if ego.speed < p.v_max {
        Action::Acc
    } else {
        Action::Cur
    }
}

/// Discounted return (from the current step) of the relaxation that drops
/// collision and smoothness penalties: full acceleration to `v_max`, stopping
/// at the earliest possible path exhaustion. Dominates every feasible return.
pub fn relaxed_upper_bound(ego: &EgoState, steps: usize, p: &DrivingParams) -> f64 {
    let remaining = ego.path.length() - ego.progress;
    let mut speed = ego.speed;
    let mut travelled = 0.0;
    let mut discount = 1.0;
    let mut total = 0.0;
    for _ in 0..steps {
        speed = (speed + p.accel * p.dt).min(p.v_max);
        total += discount * (speed - p.v_max) / p.v_max;
        discount *= p.gamma;
        travelled += speed * p.dt;
        if travelled >= remaining {
            break;
        }
    }
    total
}

/// The driving POMDP bound to the candidate paths of one episode.
#[derive(Debug, Clone)]
pub struct DrivingModel {
    params: DrivingParams,
    spec: PomdpSpec,
}

impl DrivingModel {
    pub fn new(params: DrivingParams) -> Result<Self, crate::pomdp::PomdpError> {
        let spec = PomdpSpec::new(params.gamma, params.horizon, Action::ALL.len())?;
        Ok(Self { params, spec })
    }

    pub fn params(&self) -> &DrivingParams {
        &self.params
    }

    /// One full world transition with explicit noise draws.
    pub fn transition_with_noise(
        &self,
        state: &WorldState,
        action: Action,
        noise: &[Vec2],
    ) -> Transition<WorldState> {
        let p = &self.params;
        let (ego, exhausted) = match step_ego(&state.ego, action, p) {
            Ok(e) => (e, false),
            Err(PathExhausted(e)) => (e, true),
        };
        let exo = step_exo(state, noise, p);
        let next = WorldState {
            ego,
            exo,
            intentions: state.intentions.clone(),
            paths: Arc::clone(&state.paths),
        };
        let collision = is_collision(&next, p);
        Transition {
            reward: reward(&next, action, p),
            terminal: collision || exhausted,
            state: next,
        }
    }

    /// Noise draws for one transition, in agent order (x then y).
    pub fn draw_noise(&self, agents: usize, stream: &mut ScenarioStream) -> Vec<Vec2> {
        (0..agents)
            .map(|_| {
                let x = stream.next_gaussian();
                let y = stream.next_gaussian();
                Vec2::new(x, y)
            })
            .collect()
    }
}

impl Pomdp for DrivingModel {
    type State = WorldState;
    type Observation = Observation;
    type ObsKey = ObservationKey;

    fn spec(&self) -> &PomdpSpec {
        &self.spec
    }

    fn step(&self, state: &WorldState, action: usize, stream: &mut ScenarioStream) -> Transition<WorldState> {
        let action = Action::ALL[action];
        let noise = self.draw_noise(state.exo.len(), stream);
        self.transition_with_noise(state, action, &noise)
    }

    fn observe(&self, state: &WorldState) -> Observation {
        observe(state)
    }

    fn observation_key(&self, state: &WorldState) -> ObservationKey {
        let p = &self.params;
        let mut key = Vec::with_capacity(3 + 3 * state.exo.len());
        key.push(bin(state.ego.position.x, p.obs_cell));
        key.push(bin(state.ego.position.y, p.obs_cell));
        key.push(bin(state.ego.speed, p.speed_bin));
        for a in &state.exo {
            key.push(bin(a.position.x, p.obs_cell));
            key.push(bin(a.position.y, p.obs_cell));
            key.push(bin(a.speed, p.speed_bin));
        }
        ObservationKey(key)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pomdp::sample_trajectory;
    use proptest::prelude::*;

    fn straight(len: f64) -> Arc<Polyline> {
        Arc::new(Polyline::uniform(vec![Vec2::new(0.0, 0.0), Vec2::new(len, 0.0)], 6.0).unwrap())
    }

    fn empty_world(speed: f64) -> WorldState {
        WorldState::new(EgoState::on_path(straight(200.0), 10.0, speed), vec![], vec![], Arc::new(vec![])).unwrap()
    }

    fn world_with_agent(agent: ExoState, paths: Vec<Polyline>, intention: usize) -> WorldState {
        WorldState::new(
            EgoState::on_path(straight(200.0), 10.0, 3.0),
            vec![agent],
            vec![intention],
            Arc::new(vec![paths]),
        )
        .unwrap()
    }

    #[test]
    fn aligned_cur_advances_straight() {
        let p = DrivingParams::default();
        let ego = EgoState::on_path(straight(100.0), 5.0, 3.0);
        let next = step_ego(&ego, Action::Cur, &p).unwrap();
        assert!((next.position.x - (5.0 + 3.0 * p.dt)).abs() < 1e-12);
        assert_eq!(next.position.y, 0.0);
        assert_eq!(next.heading, 0.0);
        assert_eq!(next.speed, 3.0);
    }

    #[test]
    fn dec_clamps_at_rest() {
        let p = DrivingParams::default();
        let ego = EgoState::on_path(straight(100.0), 5.0, 0.5);
        assert_eq!(step_ego(&ego, Action::Dec, &p).unwrap().speed, 0.0);
    }

    #[test]
    fn acc_clamps_at_v_max() {
        let p = DrivingParams::default();
        let ego = EgoState::on_path(straight(100.0), 5.0, p.v_max);
        assert_eq!(step_ego(&ego, Action::Acc, &p).unwrap().speed, p.v_max);
    }

    #[test]
    fn path_end_is_signalled() {
        let p = DrivingParams::default();
        let ego = EgoState::on_path(straight(10.0), 9.5, 3.0);
        assert!(step_ego(&ego, Action::Cur, &p).is_err());
    }

    #[test]
    fn pure_pursuit_converges_to_offset_path() {
        let p = DrivingParams::default();
        let mut ego = EgoState::on_path(straight(500.0), 0.0, 5.0);
        ego.position.y = 1.0;
        for _ in 0..60 {
            ego = step_ego(&ego, Action::Cur, &p).unwrap();
        }
        assert!(ego.position.y.abs() < 0.1, "lateral error {}", ego.position.y);
    }

    #[test]
    fn free_agent_advances_at_its_speed() {
        let p = DrivingParams::default();
        let path = Polyline::uniform(vec![Vec2::new(0.0, 50.0), Vec2::new(30.0, 50.0)], 4.0).unwrap();
        let agent = ExoState {
            position: Vec2::new(2.0, 50.0),
            speed: 4.0,
            heading: 0.0,
        };
        let w = world_with_agent(agent, vec![path], 0);
        let next = step_exo(&w, &[Vec2::ZERO], &p);
        assert!((next[0].position.x - (2.0 + 4.0 * p.dt)).abs() < 1e-12);
        assert_eq!(next[0].speed, 4.0);
        assert_eq!(step_exo(&w, &[Vec2::ZERO], &p), next);
    }

    #[test]
    fn agent_brakes_for_stopped_ego() {
        let p = DrivingParams::default();
        let mut ego = EgoState::on_path(straight(200.0), 12.0, 0.0);
        ego.speed = 0.0;
        let path = Polyline::uniform(vec![Vec2::new(0.0, 0.0), Vec2::new(40.0, 0.0)], 5.0).unwrap();
        let agent = ExoState {
            position: Vec2::new(10.0, 0.0),
            speed: 5.0,
            heading: 0.0,
        };
        let w = WorldState::new(ego, vec![agent], vec![0], Arc::new(vec![vec![path]])).unwrap();
        let next = step_exo(&w, &[Vec2::ZERO], &p);
        assert!(next[0].speed < 5.0);
    }

    #[test]
    fn noise_perturbs_position() {
        let p = DrivingParams::default();
        let path = Polyline::uniform(vec![Vec2::new(0.0, 50.0), Vec2::new(30.0, 50.0)], 4.0).unwrap();
        let agent = ExoState {
            position: Vec2::new(2.0, 50.0),
            speed: 4.0,
            heading: 0.0,
        };
        let w = world_with_agent(agent, vec![path], 0);
        let a = step_exo(&w, &[Vec2::ZERO], &p);
        let b = step_exo(&w, &[Vec2::new(1.0, -2.0)], &p);
        assert!((b[0].position.x - a[0].position.x - 0.05).abs() < 1e-12);
        assert!((b[0].position.y - a[0].position.y + 0.1).abs() < 1e-12);
    }

    #[test]
    fn reward_examples() {
        let p = DrivingParams::default();
        let path = Polyline::uniform(vec![Vec2::new(0.0, 0.0), Vec2::new(40.0, 0.0)], 5.0).unwrap();
        let mut w = empty_world(2.0);
        w.exo.push(ExoState {
            position: w.ego.position,
            speed: 0.0,
            heading: 0.0,
        });
        w.intentions.push(0);
        w.paths = Arc::new(vec![vec![path]]);
        assert!((reward(&w, Action::Cur, &p) - -90.666_666_666_666_67).abs() < 1e-9);
        assert_eq!(reward(&empty_world(6.0), Action::Cur, &p), 0.0);
        assert!((reward(&empty_world(3.0), Action::Acc, &p) - -0.6).abs() < 1e-9);
    }

    #[test]
    fn collision_boundary_is_closed() {
        let p = DrivingParams::default();
        let reach = p.ego_radius + p.exo_radius;
        let path = Polyline::uniform(vec![Vec2::new(0.0, 0.0), Vec2::new(40.0, 0.0)], 5.0).unwrap();
        let at = |d: f64| {
            let mut w = empty_world(0.0);
            w.ego.position = Vec2::ZERO;
            w.exo.push(ExoState {
                position: Vec2::new(d, 0.0),
                speed: 0.0,
                heading: 0.0,
            });
            w.intentions.push(0);
            w.paths = Arc::new(vec![vec![path.clone()]]);
            is_collision(&w, &p)
        };
        assert!(!at(reach + 0.01));
        assert!(at(0.0));
        assert!(at(reach));
    }

    #[test]
    fn observation_drops_intentions() {
        let paths = vec![
            Polyline::uniform(vec![Vec2::new(0.0, 10.0), Vec2::new(30.0, 10.0)], 4.0).unwrap(),
            Polyline::uniform(vec![Vec2::new(0.0, 10.0), Vec2::new(0.0, 40.0)], 4.0).unwrap(),
        ];
        let agent = ExoState {
            position: Vec2::new(0.0, 10.0),
            speed: 3.0,
            heading: 0.0,
        };
        let a = world_with_agent(agent, paths.clone(), 0);
        let b = world_with_agent(agent, paths, 1);
        assert_eq!(observe(&a), observe(&b));
        assert_eq!(observe(&a).ego, a.ego);
        assert!(observe(&empty_world(1.0)).exo.is_empty());
    }

    #[test]
    fn observation_key_binning() {
        let mut z = observe(&empty_world(1.0));
        z.ego.position = Vec2::new(1.4, 2.6);
        let k = observation_key(&z, 1.0, 0.5);
        assert_eq!(&k.0[..2], &[1, 2]);
        let mut z2 = z.clone();
        z2.ego.position = Vec2::new(1.1, 2.9);
        assert_eq!(observation_key(&z2, 1.0, 0.5), k);
        z2.ego.position = Vec2::new(0.99, 2.9);
        assert_ne!(observation_key(&z2, 1.0, 0.5), k);
    }

    #[test]
    fn invalid_intentions_rejected() {
        let path = Polyline::uniform(vec![Vec2::new(0.0, 0.0), Vec2::new(40.0, 0.0)], 5.0).unwrap();
        let agent = ExoState {
            position: Vec2::ZERO,
            speed: 0.0,
            heading: 0.0,
        };
        let r = WorldState::new(
            EgoState::on_path(straight(100.0), 0.0, 0.0),
            vec![agent],
            vec![1],
            Arc::new(vec![vec![path]]),
        );
        assert!(matches!(r, Err(DrivingError::IntentionOutOfRange { .. })));
    }

    #[test]
    fn trajectory_without_agents_is_deterministic_kinematics() {
        let model = DrivingModel::new(DrivingParams::default()).unwrap();
        let start = empty_world(3.0);
        let traj = sample_trajectory(&model, &start, |_| Action::Cur.index(), &ScenarioStream::new(1), 2);
        assert_eq!(traj.len(), 2);
        let dt = model.params().dt;
        assert!((traj.steps[0].state.ego.position.x - (10.0 + 3.0 * dt)).abs() < 1e-12);
        assert!((traj.steps[1].state.ego.position.x - (10.0 + 6.0 * dt)).abs() < 1e-12);
    }

    #[test]
    fn trajectory_replays_from_the_same_stream() {
        let model = DrivingModel::new(DrivingParams::default()).unwrap();
        let paths = vec![Polyline::uniform(vec![Vec2::new(0.0, 10.0), Vec2::new(60.0, 10.0)], 4.0).unwrap()];
        let agent = ExoState {
            position: Vec2::new(1.0, 10.0),
            speed: 4.0,
            heading: 0.0,
        };
        let start = world_with_agent(agent, paths, 0);
        let stream = ScenarioStream::new(77);
        let a = sample_trajectory(&model, &start, |_| 0, &stream, 5);
        let b = sample_trajectory(&model, &start, |_| 0, &stream, 5);
        for (x, y) in a.steps.iter().zip(&b.steps) {
            assert_eq!(x.state, y.state);
        }
        assert_eq!(a.rewards, b.rewards);
    }

    #[test]
    fn one_step_matches_manual_transition() {
        let model = DrivingModel::new(DrivingParams::default()).unwrap();
        let p = *model.params();
        let paths = vec![Polyline::uniform(vec![Vec2::new(0.0, 10.0), Vec2::new(60.0, 10.0)], 4.0).unwrap()];
        let agent = ExoState {
            position: Vec2::new(1.0, 10.0),
            speed: 4.0,
            heading: 0.0,
        };
        let start = world_with_agent(agent, paths, 0);
        let stream = ScenarioStream::new(5);
        let traj = sample_trajectory(&model, &start, |_| Action::Cur.index(), &stream, 1);
        // replay the two gaussian draws by hand
        let mut s = crate::rng::transition_stream(&stream, 0);
        let (nx, ny) = (s.next_gaussian(), s.next_gaussian());
        let expected = Vec2::new(1.0 + 4.0 * p.dt + nx * p.exo_noise, 10.0 + ny * p.exo_noise);
        let got = traj.steps[0].state.exo[0].position;
        assert!((got.x - expected.x).abs() < 1e-12 && (got.y - expected.y).abs() < 1e-12);
    }

    #[test]
    fn cv_ttc_cases() {
        let t = constant_velocity_ttc(Vec2::ZERO, Vec2::new(2.0, 0.0), Vec2::new(12.0, 0.0), Vec2::ZERO, 2.0);
        assert!((t - 5.0).abs() < 1e-12);
        let t = constant_velocity_ttc(Vec2::ZERO, Vec2::new(-2.0, 0.0), Vec2::new(12.0, 0.0), Vec2::ZERO, 2.0);
        assert!(t.is_infinite());
        assert_eq!(constant_velocity_ttc(Vec2::ZERO, Vec2::ZERO, Vec2::new(1.0, 0.0), Vec2::ZERO, 2.0), 0.0);
    }

    #[test]
    fn upper_bound_respects_early_termination() {
        let p = DrivingParams::default();
        let ego = EgoState::on_path(straight(10.0), 9.0, 6.0);
        assert_eq!(relaxed_upper_bound(&ego, 10, &p), 0.0);
        let ego = EgoState::on_path(straight(1000.0), 0.0, 0.0);
        let u = relaxed_upper_bound(&ego, 3, &p);
        let expected = (1.0 - 6.0) / 6.0 + 0.95 * (2.0 - 6.0) / 6.0 + 0.95f64.powi(2) * (3.0 - 6.0) / 6.0;
        assert!((u - expected).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn ego_speed_stays_in_range(v in 0.0f64..6.0, a in 0usize..3, steps in 1usize..20) {
            let p = DrivingParams::default();
            let mut ego = EgoState::on_path(straight(1000.0), 0.0, v);
            for _ in 0..steps {
                ego = step_ego(&ego, Action::ALL[a], &p).unwrap();
                prop_assert!(ego.speed >= 0.0 && ego.speed <= p.v_max);
            }
        }

        #[test]
        fn reward_is_non_positive(v in 0.0f64..6.0, a in 0usize..3) {
            let p = DrivingParams::default();
            let r = reward(&empty_world(v), Action::ALL[a], &p);
            prop_assert!(r <= 0.0 && r >= -1.1);
        }

        #[test]
        fn noise_free_transition_is_a_function(seed_a in any::<u64>(), seed_b in any::<u64>(), a in 0usize..3) {
            let model = DrivingModel::new(DrivingParams::default().noise_free()).unwrap();
            let paths = vec![Polyline::uniform(vec![Vec2::new(0.0, 10.0), Vec2::new(60.0, 10.0)], 4.0).unwrap()];
            let agent = ExoState { position: Vec2::new(1.0, 10.0), speed: 4.0, heading: 0.0 };
            let start = world_with_agent(agent, paths, 0);
            let x = model.step(&start, a, &mut ScenarioStream::new(seed_a));
            let y = model.step(&start, a, &mut ScenarioStream::new(seed_b));
            prop_assert_eq!(x.state, y.state);
        }

        #[test]
        fn observation_key_is_binning(x in -50.0f64..50.0, y in -50.0f64..50.0, dx in -3.0f64..3.0) {
            let mut z = observe(&empty_world(2.0));
            z.ego.position = Vec2::new(x, y);
            let mut z2 = z.clone();
            z2.ego.position.x = x + dx;
            let same_bin = (x / 1.0).floor() == ((x + dx) / 1.0).floor();
            prop_assert_eq!(observation_key(&z, 1.0, 0.5) == observation_key(&z2, 1.0, 0.5), same_bin);
        }
    }
}
