//! Small recurrent encoders and decoders with explicit backward passes.
//!
//! Encoders stack dense, LSTM, bidirectional LSTM and frame-stacking
//! downsample layers. Heads: a CTC projection, a transducer joint with a
//! prediction network, or a location-aware attention decoder. Parameters
//! live in one flat vector described by a named [`Layout`].

mod attend;
mod encoder;
mod file;
mod layers;
mod model;
mod params;
mod predict;
mod scorer;
mod spec;
mod train;

pub use attend::AttentionState;
pub use file::{spec_hash, MODEL_TAG, MODEL_VERSION};
pub use layers::LstmState;
pub use model::{Model, Utterance};
pub use params::{Layout, Parameters, TensorInfo};
pub use predict::PredictionState;
pub use scorer::{AttentionScorer, RnntScorer};
pub use spec::{AttentionConfig, Direction, LayerKind, LayerSpec, ModelKind, ModelSpec};
pub use train::{train, EpochMetrics, Optimizer, TrainConfig};
