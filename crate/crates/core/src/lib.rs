//! Sequence transducers for speech-style recognition at toy scale.
//!
//! * [`numerics`]: log-space primitives, matrices, seeded RNG, finite differences.
//! * [`losses`]: CTC, RNN-T and attention objectives with exact gradients.
//! * [`lm`]: character n-gram language model.
//! * [`decoders`]: greedy and beam search for all three model families.
//! * [`network`]: LSTM encoders/decoders with explicit backward passes and training.

pub mod decoders;
pub mod error;
pub mod lm;
pub mod losses;
pub mod network;
pub mod numerics;

pub use error::{Error, Result};
