//! The attention generator and the value critic.

use serde::{Deserialize, Serialize};

use leader_core::belief::IntentionDistribution;

use crate::encoding::{decode_attention, floor_mix, EncodedState, Layout};
use crate::net::{Cache, NetSpec, NetworkParams};
use crate::NeuralError;

/// Network sizes. Head depths count the fully connected layers after the GRU,
/// including the output layer.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NetworkConfig {
    pub layout: Layout,
    pub width: usize,
    pub hidden: usize,
    pub generator_feature_layers: usize,
    pub generator_head_layers: usize,
    pub critic_feature_layers: usize,
    pub critic_head_layers: usize,
    /// Scale of the standard-normal noise added to generator logits.
    pub noise_scale: f64,
}

impl Default for NetworkConfig {
    fn default() -> Self {
        Self {
            layout: Layout::default(),
            width: 64,
            hidden: 64,
            generator_feature_layers: 4,
            generator_head_layers: 2,
            critic_feature_layers: 3,
            critic_head_layers: 2,
            noise_scale: 0.5,
        }
    }
}

impl NetworkConfig {
    pub fn generator_spec(&self) -> NetSpec {
        NetSpec {
            input: self.layout.state_dim(),
            feature: vec![self.width; self.generator_feature_layers],
            hidden: self.hidden,
            head: vec![self.width; self.generator_head_layers.saturating_sub(1)],
            output: self.layout.attention_dim(),
        }
    }

    pub fn critic_spec(&self) -> NetSpec {
        NetSpec {
            input: self.layout.critic_input_dim(),
            feature: vec![self.width; self.critic_feature_layers],
            hidden: self.hidden,
            head: vec![self.width; self.critic_head_layers.saturating_sub(1)],
            output: 1,
        }
    }
}

/// Everything a generator forward pass produces.
#[derive(Debug, Clone)]
pub struct GeneratorPass {
    pub q: IntentionDistribution,
    /// Floored attention in slot-block layout (the critic's `q` input).
    pub slot_q: Vec<f64>,
    pub memory: Vec<f64>,
    probs: Vec<f64>,
    cache: Cache,
}

impl GeneratorPass {
    pub fn relu_pattern(&self) -> Vec<bool> {
        self.cache.relu_pattern()
    }
}

/// `q = floor_mix(softmax(logits + σ·ε))` per agent slot.
pub fn generator_forward(
    params: &NetworkParams,
    layout: &Layout,
    enc: &EncodedState,
    eps: &[f64],
    memory: &[f64],
    noise_scale: f64,
) -> Result<GeneratorPass, NeuralError> {
    if eps.len() != layout.attention_dim() {
        return Err(NeuralError::Shape(format!(
            "noise has {} entries, layout needs {}",
            eps.len(),
            layout.attention_dim()
        )));
    }
    let (logits, memory, cache) = params.forward(&enc.features, memory)?;
    let mm = layout.max_intentions;
    let mut probs = vec![0.0; layout.attention_dim()];
    let mut slot_q = vec![0.0; layout.attention_dim()];
    for (slot, agent) in enc.slot_agents.iter().enumerate() {
        let Some(i) = *agent else { continue };
        let m = enc.counts[i];
        let base = slot * mm;
        let z: Vec<f64> = (0..m).map(|k| logits[base + k] + noise_scale * eps[base + k]).collect();
        let top = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let e: Vec<f64> = z.iter().map(|v| (v - top).exp()).collect();
        let total: f64 = e.iter().sum();
        for k in 0..m {
            probs[base + k] = e[k] / total;
            slot_q[base + k] = floor_mix(probs[base + k], m);
        }
    }
    let q = decode_attention(layout, enc, &slot_q)?;
    Ok(GeneratorPass {
        q,
        slot_q,
        memory,
        probs,
        cache,
    })
}

/// Accumulates `∂L/∂ψ` given `∂L/∂slot_q`.
pub fn generator_backward(
    params: &NetworkParams,
    layout: &Layout,
    enc: &EncodedState,
    pass: &GeneratorPass,
    d_slot_q: &[f64],
    grad: &mut [f64],
) {
    let mm = layout.max_intentions;
    let mut d_logits = vec![0.0; layout.attention_dim()];
    for (slot, agent) in enc.slot_agents.iter().enumerate() {
        let Some(i) = *agent else { continue };
        let m = enc.counts[i];
        let base = slot * mm;
        let keep = floor_mix(1.0, m) - floor_mix(0.0, m);
        let dp: Vec<f64> = (0..m).map(|k| d_slot_q[base + k] * keep).collect();
        let dot: f64 = (0..m).map(|k| pass.probs[base + k] * dp[k]).sum();
        for k in 0..m {
            d_logits[base + k] = pass.probs[base + k] * (dp[k] - dot);
        }
    }
    params.backward(&pass.cache, &d_logits, None, grad);
}

/// Critic input: the state encoding followed by the slot-layout attention.
pub fn critic_input(enc: &EncodedState, slot_q: &[f64]) -> Vec<f64> {
    let mut x = enc.features.clone();
    x.extend_from_slice(slot_q);
    x
}

#[derive(Debug, Clone)]
pub struct CriticPass {
    pub value: f64,
    pub memory: Vec<f64>,
    cache: Cache,
}

impl CriticPass {
    pub fn relu_pattern(&self) -> Vec<bool> {
        self.cache.relu_pattern()
    }
}

pub fn critic_forward(params: &NetworkParams, enc: &EncodedState, slot_q: &[f64], memory: &[f64]) -> Result<CriticPass, NeuralError> {
    let (out, memory, cache) = params.forward(&critic_input(enc, slot_q), memory)?;
    Ok(CriticPass {
        value: out[0],
        memory,
        cache,
    })
}

/// Accumulates `∂L/∂φ` given `∂L/∂v` and returns `∂L/∂slot_q`.
pub fn critic_backward(params: &NetworkParams, layout: &Layout, pass: &CriticPass, d_value: f64, grad: &mut [f64]) -> Vec<f64> {
    let (dx, _) = params.backward(&pass.cache, &[d_value], None, grad);
    dx[layout.state_dim()..].to_vec()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::encoding::encode_state;
    use leader_core::belief::ATTENTION_FLOOR;
    use leader_core::driving::{EgoState, ExoState, Observation};
    use leader_core::geometry::{Polyline, Vec2};
    use leader_core::ScenarioStream;
    use std::sync::Arc;

    fn small() -> NetworkConfig {
        NetworkConfig {
            layout: Layout {
                slots: 2,
                max_intentions: 3,
            },
            width: 8,
            hidden: 6,
            generator_feature_layers: 2,
            generator_head_layers: 2,
            critic_feature_layers: 2,
            critic_head_layers: 3,
            noise_scale: 0.5,
        }
    }

    fn state() -> EncodedState {
        let ego_path = Arc::new(Polyline::uniform(vec![Vec2::new(0.0, 0.0), Vec2::new(100.0, 0.0)], 6.0).unwrap());
        let z = Observation {
            ego: EgoState::on_path(ego_path, 0.0, 3.0),
            exo: vec![ExoState {
                position: Vec2::new(10.0, 5.0),
                speed: 2.0,
                heading: 0.0,
            }],
        };
        let paths = vec![vec![
            Polyline::uniform(vec![Vec2::new(10.0, 5.0), Vec2::new(40.0, 5.0)], 4.0).unwrap(),
            Polyline::uniform(vec![Vec2::new(10.0, 5.0), Vec2::new(10.0, -30.0)], 4.0).unwrap(),
            Polyline::uniform(vec![Vec2::new(10.0, 5.0), Vec2::new(10.0, 30.0)], 4.0).unwrap(),
        ]];
        let b = IntentionDistribution::new(vec![vec![0.2, 0.3, 0.5]]).unwrap();
        encode_state(&small().layout, &b, &z, &paths, 6.0).unwrap()
    }

    #[test]
    fn equal_logits_give_uniform_attention() {
        let cfg = small();
        let p = NetworkParams::zeros(cfg.generator_spec());
        let enc = state();
        let eps = vec![0.0; cfg.layout.attention_dim()];
        let pass = generator_forward(&p, &cfg.layout, &enc, &eps, &vec![0.0; cfg.hidden], 0.5).unwrap();
        for v in pass.q.agent(0) {
            assert!((v - 1.0 / 3.0).abs() < 1e-15);
        }
    }

    #[test]
    fn outputs_are_valid_distributions() {
        let cfg = small();
        let enc = state();
        let mut s = ScenarioStream::new(8);
        for t in 0..100 {
            let p = NetworkParams::init(cfg.generator_spec(), t);
            let eps: Vec<f64> = (0..cfg.layout.attention_dim()).map(|_| 3.0 * s.next_gaussian()).collect();
            let pass = generator_forward(&p, &cfg.layout, &enc, &eps, &vec![0.0; cfg.hidden], 0.5).unwrap();
            let q = pass.q.agent(0);
            assert!((q.iter().sum::<f64>() - 1.0).abs() < 1e-9);
            assert!(q.iter().all(|&v| v >= ATTENTION_FLOOR));
        }
    }

    #[test]
    fn generator_is_pure() {
        let cfg = small();
        let enc = state();
        let p = NetworkParams::init(cfg.generator_spec(), 1);
        let eps = vec![0.3; cfg.layout.attention_dim()];
        let h = vec![0.1; cfg.hidden];
        let a = generator_forward(&p, &cfg.layout, &enc, &eps, &h, 0.5).unwrap();
        let b = generator_forward(&p, &cfg.layout, &enc, &eps, &h, 0.5).unwrap();
        assert_eq!(a.q, b.q);
        assert_eq!(a.memory, b.memory);
    }

    #[test]
    fn zero_critic_outputs_zero() {
        let cfg = small();
        let enc = state();
        let p = NetworkParams::zeros(cfg.critic_spec());
        let v = critic_forward(&p, &enc, &vec![0.2; cfg.layout.attention_dim()], &vec![0.0; cfg.hidden]).unwrap();
        assert_eq!(v.value, 0.0);
    }

    #[test]
    fn random_critics_are_finite_and_remember() {
        let cfg = small();
        let enc = state();
        let mut s = ScenarioStream::new(4);
        for _ in 0..100 {
            let mut p = NetworkParams::zeros(cfg.critic_spec());
            for v in p.values_mut() {
                *v = 0.1 * s.next_gaussian();
            }
            let q = vec![0.25; cfg.layout.attention_dim()];
            let a = critic_forward(&p, &enc, &q, &vec![0.0; cfg.hidden]).unwrap();
            assert!(a.value.is_finite());
            let q2 = vec![0.5; cfg.layout.attention_dim()];
            let b = critic_forward(&p, &enc, &q2, &vec![0.0; cfg.hidden]).unwrap();
            assert_ne!(a.memory, b.memory);
        }
    }
}
