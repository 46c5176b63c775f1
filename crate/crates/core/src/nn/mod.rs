//! A small numerical engine sized to one architecture: event embedding and
//! conditioning concatenated, an FC layer with ReLU, a stack of GRU layers
//! with inverted dropout between them, and a linear head over the event
//! vocabulary. Gradients are written out by hand.

pub mod adam;
pub mod checkpoint;
pub mod loss;
pub mod model;
pub mod params;
pub mod tensor;

pub use adam::{adam_step, AdamState};
pub use checkpoint::{Checkpoint, CheckpointError, ConditioningMode};
pub use loss::{cross_entropy, softmax};
pub use model::{
    backward, backward_into, forward, gru_cell, loss_and_gradients, predict, Dropout, ForwardTrace, InferenceState,
    ModelError,
};
pub use params::{GruLayerParams, ModelConfig, ModelParams};
pub use tensor::{Matrix, Scalar};
