//! Decoding drivers shared by the CLI and the experiments.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use transduce_core::decoders::{
    attention_beam, attention_greedy, ctc_greedy, ctc_prefix_beam, rescore_with_lm, rnnt_beam, rnnt_greedy,
    DecodeConfig, Hypothesis, Objective,
};
use transduce_core::lm::NGramLM;
use transduce_core::network::{Model, ModelKind, Utterance};
use transduce_core::numerics::RealMatrix;
use transduce_core::Result;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DecodeMode {
    Greedy,
    /// Beam search without any LM term.
    Beam,
    /// Shallow fusion for CTC, n-best rescoring otherwise.
    BeamLm,
}

impl DecodeMode {
    pub fn name(self) -> &'static str {
        match self {
            DecodeMode::Greedy => "greedy",
            DecodeMode::Beam => "beam",
            DecodeMode::BeamLm => "beam+lm",
        }
    }
}

/// Encoder-side quantities a decoder needs, computed once per utterance.
pub enum Encoded {
    Ctc(RealMatrix),
    Rnnt(RealMatrix),
    Attention(RealMatrix),
}

pub fn encode(model: &Model, frames: &RealMatrix) -> Result<Encoded> {
    let h = model.encode(frames)?;
    Ok(match model.kind() {
        ModelKind::Ctc => Encoded::Ctc(model.ctc_logits(&h)?),
        ModelKind::Rnnt => Encoded::Rnnt(model.rnnt_frames(&h)?),
        ModelKind::Attention => Encoded::Attention(h),
    })
}

fn without_lm(cfg: &DecodeConfig) -> DecodeConfig {
    DecodeConfig { lm_weight: 0.0, word_bonus: 0.0, rescore_weight: 0.0, ..cfg.clone() }
}

fn best_path_log_prob(logits: &RealMatrix) -> f64 {
    logits
        .iter_rows()
        .map(|r| {
            let m = r.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            -r.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
        })
        .sum()
}

/// Ranked hypotheses before any rescoring. CTC fusion uses `lm` only when
/// `mode` is [`DecodeMode::BeamLm`]; greedy returns a single hypothesis.
pub fn search(
    model: &Model,
    enc: &Encoded,
    mode: DecodeMode,
    cfg: &DecodeConfig,
    lm: Option<&NGramLM>,
) -> Result<Vec<Hypothesis>> {
    let alphabet = &model.spec().alphabet;
    let plain = without_lm(cfg);
    Ok(match (enc, mode) {
        (Encoded::Ctc(logits), DecodeMode::Greedy) => {
            vec![Hypothesis::new(ctc_greedy(logits).0, Objective::Ctc, best_path_log_prob(logits))]
        }
        (Encoded::Ctc(logits), DecodeMode::Beam) => ctc_prefix_beam(logits, None, alphabet, &plain),
        (Encoded::Ctc(logits), DecodeMode::BeamLm) => ctc_prefix_beam(logits, lm, alphabet, cfg),
        (Encoded::Rnnt(frames), DecodeMode::Greedy) => vec![rnnt_greedy(frames, &model.rnnt_scorer()?, &plain)],
        (Encoded::Rnnt(frames), _) => rnnt_beam(frames, &model.rnnt_scorer()?, &plain),
        (Encoded::Attention(h), DecodeMode::Greedy) => vec![attention_greedy(&model.attention_scorer(h)?, &plain)],
        (Encoded::Attention(h), _) => attention_beam(&model.attention_scorer(h)?, &plain),
    })
}

/// Best hypothesis under `mode`, applying LM rescoring for RNN-T and
/// attention in [`DecodeMode::BeamLm`].
pub fn best(
    model: &Model,
    nbest: Vec<Hypothesis>,
    mode: DecodeMode,
    cfg: &DecodeConfig,
    lm: Option<&NGramLM>,
) -> Hypothesis {
    let rescore = mode == DecodeMode::BeamLm && model.kind() != ModelKind::Ctc;
    let ranked = match lm {
        Some(lm) if rescore => rescore_with_lm(nbest, lm, &model.spec().alphabet, cfg),
        _ => nbest,
    };
    ranked.into_iter().next().expect("searches return at least one hypothesis")
}

/// One decoded utterance, as written to JSON lines.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Decoded {
    pub id: String,
    pub reference: String,
    pub hypothesis: String,
    pub truncated: bool,
}

pub fn decode_one(
    model: &Model,
    utt: &Utterance,
    mode: DecodeMode,
    cfg: &DecodeConfig,
    lm: Option<&NGramLM>,
) -> Result<Decoded> {
    let enc = encode(model, &utt.frames).map_err(|e| e.for_utterance(&utt.id))?;
    let h = best(model, search(model, &enc, mode, cfg, lm)?, mode, cfg, lm);
    Ok(Decoded {
        id: utt.id.clone(),
        reference: utt.reference.clone(),
        hypothesis: h.text(&model.spec().alphabet),
        truncated: h.truncated,
    })
}

/// Decodes every utterance (in parallel), returning results in input order.
pub fn decode_set(
    model: &Model,
    utts: &[Utterance],
    mode: DecodeMode,
    cfg: &DecodeConfig,
    lm: Option<&NGramLM>,
) -> Result<Vec<Decoded>> {
    utts.par_iter().map(|u| decode_one(model, u, mode, cfg, lm)).collect()
}
