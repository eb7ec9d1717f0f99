//! A small neural network stack (dense layers, a GRU cell, reverse-mode
//! gradients, Adam) hosting the attention generator and the value critic.

pub mod checkpoint;
pub mod encoding;
pub mod gradcheck;
pub mod models;
pub mod net;
pub mod optim;

use thiserror::Error;

pub use checkpoint::Checkpoint;
pub use encoding::{encode_attention, encode_state, EncodedState, Layout};
pub use models::{critic_backward, critic_forward, generator_backward, generator_forward, NetworkConfig};
pub use net::{gru_step, NetSpec, NetworkParams};
pub use optim::Adam;

#[derive(Debug, Error)]
pub enum NeuralError {
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("non-finite activation in layer {layer}")]
    NonFinite { layer: usize },
    #[error("non-finite gradient at parameter {0}")]
    NonFiniteGradient(usize),
    #[error("agent {agent} has {count} intentions, layout allows {max}")]
    TooManyIntentions { agent: usize, count: usize, max: usize },
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
