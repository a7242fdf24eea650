//! Experiment configuration and the model-training driver.

use std::path::Path;

use serde::{Deserialize, Serialize};
use transduce_core::lm::{train_ngram_with_symbols, NGramLM};
use transduce_core::network::{train, AttentionConfig, EpochMetrics, LayerSpec, Model, ModelKind, ModelSpec, TrainConfig, Utterance};
use transduce_core::{Error, Result};

use crate::data::SyntheticSpec;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelConfig {
    /// Cells per direction in each encoder layer.
    pub width: usize,
    pub encoder_layers: usize,
    /// Total encoder downsampling factor.
    pub downsample: usize,
    pub embedding: usize,
    pub decoder_width: usize,
    pub attention: AttentionConfig,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            width: 32,
            encoder_layers: 2,
            downsample: 2,
            embedding: 16,
            decoder_width: 32,
            attention: AttentionConfig { conv_width: 5, channels: 4, dim: 32 },
        }
    }
}

impl ModelConfig {
    pub fn spec(&self, kind: ModelKind, data: &SyntheticSpec) -> ModelSpec {
        let decoder = match kind {
            ModelKind::Ctc => Vec::new(),
            ModelKind::Rnnt => vec![LayerSpec::embedding(self.embedding), LayerSpec::lstm(self.decoder_width)],
            ModelKind::Attention => {
                vec![LayerSpec::embedding(self.embedding), LayerSpec::attention_decoder(self.decoder_width)]
            }
        };
        let spec = ModelSpec {
            kind,
            alphabet: data.alphabet(),
            feature_dim: data.feature_dim,
            encoder: vec![LayerSpec::bilstm(self.width); self.encoder_layers.max(1)],
            decoder,
            attention: (kind == ModelKind::Attention).then(|| self.attention.clone()),
        };
        spec.with_downsampling(self.downsample)
    }
}

/// Per-kind training settings.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainSection {
    pub ctc: TrainConfig,
    pub rnnt: TrainConfig,
    pub attention: TrainConfig,
}

impl Default for TrainSection {
    fn default() -> Self {
        let base = TrainConfig::default();
        Self { ctc: base.clone(), rnnt: base.clone(), attention: base }
    }
}

impl TrainSection {
    pub fn for_kind(&self, kind: ModelKind) -> &TrainConfig {
        match kind {
            ModelKind::Ctc => &self.ctc,
            ModelKind::Rnnt => &self.rnnt,
            ModelKind::Attention => &self.attention,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LmConfig {
    pub order: usize,
    pub k: f64,
}

impl Default for LmConfig {
    fn default() -> Self {
        Self { order: 4, k: 0.1 }
    }
}

/// Decoder-ablation grid. LM weights are picked on the dev set.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AblationGrid {
    pub beam_width: usize,
    pub lm_weights: Vec<f64>,
    pub word_bonuses: Vec<f64>,
    pub rescore_weights: Vec<f64>,
    pub length_norm: f64,
    pub coverage_weight: f64,
    pub max_output_len: usize,
}

impl Default for AblationGrid {
    fn default() -> Self {
        Self {
            beam_width: 8,
            lm_weights: vec![0.0, 0.25, 0.5, 0.75, 1.0],
            word_bonuses: vec![0.0, 0.5, 1.0, 2.0],
            rescore_weights: vec![0.0, 0.25, 0.5, 1.0],
            length_norm: 1.0,
            coverage_weight: 0.2,
            max_output_len: 100,
        }
    }
}

/// Reduced training budget for the multi-run experiments.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Budget {
    /// Leading training utterances to use; 0 uses all of them.
    pub train_utterances: usize,
    /// Multiplier on each kind's epoch count.
    pub epoch_scale: f64,
}

impl Default for Budget {
    fn default() -> Self {
        Self { train_utterances: 0, epoch_scale: 1.0 }
    }
}

impl Budget {
    pub fn train_set<'a>(&self, train: &'a [Utterance]) -> &'a [Utterance] {
        match self.train_utterances {
            0 => train,
            n => &train[..n.min(train.len())],
        }
    }

    pub fn apply(&self, cfg: &TrainConfig) -> TrainConfig {
        let epochs = ((cfg.epochs as f64 * self.epoch_scale).round() as usize).max(1);
        TrainConfig { epochs, ..cfg.clone() }
    }

    fn validate(&self) -> Result<()> {
        if !(self.epoch_scale.is_finite() && self.epoch_scale > 0.0) {
            return Err(Error::Config("epoch_scale must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SweepConfig {
    pub kinds: Vec<ModelKind>,
    pub factors: Vec<usize>,
    pub seeds: Vec<u64>,
    pub budget: Budget,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self { kinds: ModelKind::ALL.to_vec(), factors: vec![1, 2, 4, 8], seeds: vec![1, 2, 3], budget: Budget::default() }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ForwardOnlyConfig {
    pub kinds: Vec<ModelKind>,
    /// Forward-only cells per layer; 0 picks the width whose parameter
    /// count is closest to the bidirectional model.
    pub width: usize,
    pub budget: Budget,
}

impl Default for ForwardOnlyConfig {
    fn default() -> Self {
        Self { kinds: ModelKind::ALL.to_vec(), width: 0, budget: Budget::default() }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub data: SyntheticSpec,
    pub model: ModelConfig,
    pub train: TrainSection,
    pub lm: LmConfig,
    pub decode: AblationGrid,
    pub sweep: SweepConfig,
    pub forward_only: ForwardOnlyConfig,
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<()> {
        self.data.validate()?;
        for kind in ModelKind::ALL {
            self.train.for_kind(kind).validate()?;
            self.model.spec(kind, &self.data).validate()?;
        }
        if self.decode.beam_width == 0 || self.decode.max_output_len == 0 {
            return Err(Error::Config("beam_width and max_output_len must be at least 1".into()));
        }
        if self.sweep.factors.contains(&0) {
            return Err(Error::Config("downsampling factors must be at least 1".into()));
        }
        self.sweep.budget.validate()?;
        self.forward_only.budget.validate()?;
        Ok(())
    }

    pub fn train_lm(&self, corpus: &[String]) -> Result<NGramLM> {
        let symbols: Vec<char> = self.data.alphabet().symbols().to_vec();
        train_ngram_with_symbols(corpus, self.lm.order, self.lm.k, &symbols)
    }
}

#[derive(Clone, Debug)]
pub struct TrainedModel {
    pub model: Model,
    pub history: Vec<EpochMetrics>,
    /// Training utterances the model cannot represent (CTC after
    /// downsampling), left out of training.
    pub dropped: usize,
}

/// Trains a freshly initialized model. CTC-infeasible utterances are
/// dropped; if none remain the initial model is returned untrained.
pub fn train_model(spec: ModelSpec, data: &[Utterance], cfg: &TrainConfig, seed: u64) -> Result<TrainedModel> {
    let mut model = Model::new(spec, seed)?;
    let usable: Vec<Utterance> = data.iter().filter(|u| model.check_feasible(u).is_ok()).cloned().collect();
    let dropped = data.len() - usable.len();
    let history = if usable.is_empty() {
        Vec::new()
    } else {
        let cfg = TrainConfig { seed: cfg.seed.wrapping_add(seed), ..cfg.clone() };
        train(&mut model, &usable, &cfg)?
    };
    Ok(TrainedModel { model, history, dropped })
}
