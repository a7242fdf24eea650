//! Greedy and beam-search inference for CTC, RNN-T and attention models.
//!
//! Ranking everywhere uses the same deterministic order: higher objective
//! score, then fewer tokens, then lexicographically smaller token ids.

mod attention;
mod ctc;
mod exhaustive;
mod rnnt;

pub use attention::{attention_beam, attention_greedy, coverage_from_mass, coverage_score, COVERAGE_FLOOR};
pub use ctc::{ctc_greedy, ctc_prefix_beam};
pub use exhaustive::{exhaustive_search, SearchResult, EXHAUSTIVE_GUARD};
pub use rnnt::{rnnt_beam, rnnt_greedy};

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lm::NGramLM;
use crate::losses::{Alphabet, LabelSeq};

/// Search hyperparameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DecodeConfig {
    pub beam_width: usize,
    /// Shallow-fusion LM weight for CTC.
    pub lm_weight: f64,
    /// Bonus per emitted word boundary for CTC (per symbol when the alphabet
    /// has no space).
    pub word_bonus: f64,
    /// Length-normalization exponent for attention scores.
    pub length_norm: f64,
    /// Coverage weight for attention scores.
    pub coverage_weight: f64,
    /// LM weight applied when rescoring a finished beam.
    pub rescore_weight: f64,
    /// Cap on labels emitted at a single encoder frame (RNN-T).
    pub max_symbols_per_step: usize,
    /// Cap on emitted labels per hypothesis.
    pub max_output_len: usize,
}

impl Default for DecodeConfig {
    fn default() -> Self {
        Self {
            beam_width: 32,
            lm_weight: 0.0,
            word_bonus: 0.0,
            length_norm: 0.0,
            coverage_weight: 0.0,
            rescore_weight: 0.0,
            max_symbols_per_step: 10,
            max_output_len: 200,
        }
    }
}

impl DecodeConfig {
    pub fn greedy() -> Self {
        Self { beam_width: 1, ..Self::default() }
    }

    /// Length normalization only (gamma = 1, no coverage).
    pub fn length_norm_only(beam_width: usize) -> Self {
        Self { beam_width, length_norm: 1.0, coverage_weight: 0.0, ..Self::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if self.beam_width == 0 || self.max_symbols_per_step == 0 || self.max_output_len == 0 {
            return Err(Error::Config("beam width and caps must be at least 1".into()));
        }
        let weights = [
            self.lm_weight,
            self.word_bonus,
            self.length_norm,
            self.coverage_weight,
            self.rescore_weight,
        ];
        if weights.iter().any(|w| !w.is_finite()) {
            return Err(Error::Config("decode weights must be finite".into()));
        }
        Ok(())
    }
}

/// Which objective a hypothesis is ranked under.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Objective {
    Ctc,
    Rnnt,
    Attention,
}

/// A (partial) transcript with its score decomposed into components.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Hypothesis {
    pub tokens: LabelSeq,
    pub objective: Objective,
    /// Model log-probability of `tokens` (including eos for finished
    /// attention hypotheses).
    pub log_p_model: f64,
    /// Shallow-fusion LM log-probability (CTC only).
    pub log_p_lm: f64,
    /// Units counted by the word bonus (CTC only).
    pub word_count: usize,
    /// Coverage of the accumulated attention (attention only).
    pub coverage: f64,
    /// LM log-probability attached by [`rescore_with_lm`].
    pub rescore_lm: Option<f64>,
    /// Attention: no eos emitted yet.
    pub alive: bool,
    /// Hit `max_output_len` (RNN-T: frozen; attention: unterminated).
    pub truncated: bool,
}

impl Hypothesis {
    pub fn new(tokens: Vec<usize>, objective: Objective, log_p_model: f64) -> Self {
        Self {
            tokens: LabelSeq(tokens),
            objective,
            log_p_model,
            log_p_lm: 0.0,
            word_count: 0,
            coverage: 0.0,
            rescore_lm: None,
            alive: false,
            truncated: false,
        }
    }

    /// Number of predictions the attention length normalizer divides by:
    /// the symbols plus the eos step once finished.
    pub fn normalized_length(&self) -> usize {
        self.tokens.len() + usize::from(!self.alive)
    }

    /// Total objective under `cfg`, recomputed from the components.
    pub fn score(&self, cfg: &DecodeConfig) -> f64 {
        let base = match self.objective {
            Objective::Ctc => {
                self.log_p_model + cfg.lm_weight * self.log_p_lm + cfg.word_bonus * self.word_count as f64
            }
            Objective::Rnnt => self.log_p_model,
            Objective::Attention => {
                length_normalized(self.log_p_model, self.normalized_length(), cfg.length_norm)
                    + cfg.coverage_weight * self.coverage
            }
        };
        match self.rescore_lm {
            Some(lm) => base + cfg.rescore_weight * lm,
            None => base,
        }
    }

    pub fn text(&self, alphabet: &Alphabet) -> String {
        alphabet.decode(&self.tokens)
    }
}

pub(crate) fn length_normalized(log_p: f64, len: usize, gamma: f64) -> f64 {
    if gamma == 0.0 {
        log_p
    } else {
        log_p / (len.max(1) as f64).powf(gamma)
    }
}

/// Deterministic ranking: higher score, then shorter, then lexicographic.
pub(crate) fn rank_order(score_a: f64, a: &[usize], score_b: f64, b: &[usize]) -> Ordering {
    score_b
        .total_cmp(&score_a)
        .then_with(|| a.len().cmp(&b.len()))
        .then_with(|| a.cmp(b))
}

pub(crate) fn sort_hypotheses(hyps: &mut [Hypothesis], cfg: &DecodeConfig) {
    hyps.sort_by(|a, b| rank_order(a.score(cfg), &a.tokens, b.score(cfg), &b.tokens));
}

/// Incremental scorer driving RNN-T and attention search.
///
/// Attention scorers return a normalized log-distribution over `V + 2`
/// classes. RNN-T prediction scorers return the label-side joint projection
/// over `V + 1` classes, which [`rnnt_beam`] adds to each frame projection
/// before normalizing. States must be independent when cloned.
pub trait StepScorer {
    type State: Clone;

    /// State after consuming `sos`, and the scorer output for the first step.
    fn start(&self) -> (Self::State, Vec<f64>);

    /// Consume `token` from `state`.
    fn step(&self, state: &Self::State, token: usize) -> (Self::State, Vec<f64>);

    /// Attention weights that produced the state's latest output, if the
    /// scorer attends.
    fn attention<'a>(&self, _state: &'a Self::State) -> Option<&'a [f64]> {
        None
    }
}

/// Re-rank a finished beam after attaching `lm_score(tokens)` to every
/// hypothesis; the sort is stable, so `rescore_weight = 0` keeps the order.
pub fn rescore_with_lm(
    mut beam: Vec<Hypothesis>,
    lm: &NGramLM,
    alphabet: &Alphabet,
    cfg: &DecodeConfig,
) -> Vec<Hypothesis> {
    for h in beam.iter_mut() {
        h.rescore_lm = Some(lm.score(&h.text(alphabet)));
    }
    beam.sort_by(|a, b| b.score(cfg).total_cmp(&a.score(cfg)));
    beam
}
