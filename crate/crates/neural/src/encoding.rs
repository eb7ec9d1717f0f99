//! Fixed-layout vector encoding of `(b, z)` and of attention vectors.
//!
//! Layout: ego block, then `slots` agent blocks. Agents are assigned to
//! slots nearest first (ties by index) and absent slots are zero with a
//! cleared presence flag. Within an agent block each of the
//! `max_intentions` intention sub-blocks carries a validity flag, the belief
//! entry and two look-ahead points of the candidate path.

use serde::{Deserialize, Serialize};

use leader_core::belief::{IntentionDistribution, ATTENTION_FLOOR};
use leader_core::driving::Observation;
use leader_core::geometry::{Polyline, Vec2};

use crate::NeuralError;

/// Distances normalise by this (m).
const DISTANCE_SCALE: f64 = 20.0;
/// Ego path look-ahead distances (m).
const EGO_LOOKAHEAD: [f64; 3] = [5.0, 10.0, 20.0];
/// Agent path look-ahead distances (m).
const PATH_LOOKAHEAD: [f64; 2] = [5.0, 15.0];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Layout {
    pub slots: usize,
    pub max_intentions: usize,
}

impl Default for Layout {
    fn default() -> Self {
        Self {
            slots: 20,
            max_intentions: 4,
        }
    }
}

impl Layout {
    pub const EGO_FEATURES: usize = 1 + 2 * EGO_LOOKAHEAD.len();
    const AGENT_FEATURES: usize = 5;
    const INTENTION_FEATURES: usize = 2 + 2 * PATH_LOOKAHEAD.len();

    pub fn slot_features(&self) -> usize {
        Self::AGENT_FEATURES + self.max_intentions * Self::INTENTION_FEATURES
    }

    /// Length of the `(b, z)` encoding.
    pub fn state_dim(&self) -> usize {
        Self::EGO_FEATURES + self.slots * self.slot_features()
    }

    /// Length of an attention vector in slot-block layout.
    pub fn attention_dim(&self) -> usize {
        self.slots * self.max_intentions
    }

    pub fn critic_input_dim(&self) -> usize {
        self.state_dim() + self.attention_dim()
    }
}

/// An encoded `(b, z)` with the slot assignment needed to map network
/// outputs back to agents.
#[derive(Debug, Clone, PartialEq)]
pub struct EncodedState {
    pub features: Vec<f64>,
    /// Agent index held by each slot.
    pub slot_agents: Vec<Option<usize>>,
    /// Intention count of every agent in the observation.
    pub counts: Vec<usize>,
}

fn push_point(out: &mut Vec<f64>, p: Vec2, origin: Vec2, heading: f64) {
    let local = p.to_frame(origin, heading);
    out.push(local.x / DISTANCE_SCALE);
    out.push(local.y / DISTANCE_SCALE);
}

/// Encodes `(b, z)` given every agent's candidate paths.
pub fn encode_state(
    layout: &Layout,
    b: &IntentionDistribution,
    z: &Observation,
    paths: &[Vec<Polyline>],
    v_max: f64,
) -> Result<EncodedState, NeuralError> {
    let counts = b.counts();
    if z.exo.len() != counts.len() || paths.len() != counts.len() {
        return Err(NeuralError::Shape(format!(
            "belief over {} agents, {} observed, {} path sets",
            counts.len(),
            z.exo.len(),
            paths.len()
        )));
    }
    let ego = &z.ego;
    let (origin, heading) = (ego.position, ego.heading);
    let mut f = Vec::with_capacity(layout.state_dim());
    f.push(ego.speed / v_max);
    for d in EGO_LOOKAHEAD {
        push_point(&mut f, ego.path.point_at(ego.progress + d), origin, heading);
    }

    let mut order: Vec<usize> = (0..counts.len()).collect();
    order.sort_by(|&a, &b| {
        let da = z.exo[a].position.distance(origin);
        let db = z.exo[b].position.distance(origin);
        da.total_cmp(&db).then(a.cmp(&b))
    });
    order.truncate(layout.slots);
    order.sort_unstable();
    let mut slot_agents: Vec<Option<usize>> = order.iter().copied().map(Some).collect();
    slot_agents.resize(layout.slots, None);

    for slot in &slot_agents {
        let Some(i) = *slot else {
            f.extend(std::iter::repeat(0.0).take(layout.slot_features()));
            continue;
        };
        if counts[i] > layout.max_intentions {
            return Err(NeuralError::TooManyIntentions {
                agent: i,
                count: counts[i],
                max: layout.max_intentions,
            });
        }
        let a = &z.exo[i];
        f.push(1.0);
        push_point(&mut f, a.position, origin, heading);
        let v = a.velocity().to_frame(Vec2::ZERO, heading);
        f.push(v.x / v_max);
        f.push(v.y / v_max);
        for m in 0..layout.max_intentions {
            if m < counts[i] {
                let path = &paths[i][m];
                let arc = path.project(a.position).arc;
                f.push(1.0);
                f.push(b.agent(i)[m]);
                for d in PATH_LOOKAHEAD {
                    push_point(&mut f, path.point_at(arc + d), origin, heading);
                }
            } else {
                f.extend(std::iter::repeat(0.0).take(Layout::INTENTION_FEATURES));
            }
        }
    }
    debug_assert_eq!(f.len(), layout.state_dim());
    Ok(EncodedState {
        features: f,
        slot_agents,
        counts,
    })
}

/// Writes `q` into slot-block layout (zeros for absent agents and invalid
/// intentions).
pub fn encode_attention(layout: &Layout, enc: &EncodedState, q: &IntentionDistribution) -> Vec<f64> {
    let mut v = vec![0.0; layout.attention_dim()];
    for (slot, agent) in enc.slot_agents.iter().enumerate() {
        if let Some(i) = *agent {
            for (m, &p) in q.agent(i).iter().enumerate().take(layout.max_intentions) {
                v[slot * layout.max_intentions + m] = p;
            }
        }
    }
    v
}

/// Rebuilds a full distribution from per-slot probabilities; agents without
/// a slot get uniform attention. Slot entries are floored.
pub fn decode_attention(layout: &Layout, enc: &EncodedState, slot_probs: &[f64]) -> Result<IntentionDistribution, NeuralError> {
    let mut agents: Vec<Vec<f64>> = enc.counts.iter().map(|&m| vec![1.0 / m as f64; m]).collect();
    for (slot, agent) in enc.slot_agents.iter().enumerate() {
        if let Some(i) = *agent {
            let base = slot * layout.max_intentions;
            agents[i] = slot_probs[base..base + enc.counts[i]].to_vec();
        }
    }
    let q = IntentionDistribution::new(agents).map_err(|e| NeuralError::Shape(e.to_string()))?;
    Ok(q)
}

/// `floor + (1 - M·floor)·p`: the mixing applied to generator softmax
/// outputs.
pub fn floor_mix(p: f64, m: usize) -> f64 {
    ATTENTION_FLOOR + (1.0 - m as f64 * ATTENTION_FLOOR) * p
}
