//! Experiment harness: synthetic corpora, training and decoding drivers,
//! error-rate scoring and the ablation, downsampling and alignment studies.

pub mod ablation;
pub mod align;
pub mod data;
pub mod decode;
pub mod experiment;
pub mod metrics;
pub mod report;
pub mod sweep;
