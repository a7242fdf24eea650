use super::attend::{AttentionDecoder, AttentionState};
use super::predict::{Prediction, PredictionState};
use crate::decoders::StepScorer;
use crate::numerics::{log_softmax_in_place, RealMatrix};

/// Prediction network as an incremental label-side scorer.
pub struct RnntScorer<'m> {
    pred: &'m Prediction,
    p: &'m [f64],
}

impl<'m> RnntScorer<'m> {
    pub(crate) fn new(pred: &'m Prediction, p: &'m [f64]) -> Self {
        Self { pred, p }
    }
}

impl StepScorer for RnntScorer<'_> {
    type State = PredictionState;

    fn start(&self) -> (PredictionState, Vec<f64>) {
        self.pred.step(self.p, &self.pred.initial(), self.pred.sos())
    }

    fn step(&self, state: &PredictionState, token: usize) -> (PredictionState, Vec<f64>) {
        self.pred.step(self.p, state, token)
    }
}

/// Attention decoder bound to one encoder output.
pub struct AttentionScorer<'m> {
    dec: &'m AttentionDecoder,
    p: &'m [f64],
    h: RealMatrix,
    wh: RealMatrix,
}

impl<'m> AttentionScorer<'m> {
    pub(crate) fn new(dec: &'m AttentionDecoder, p: &'m [f64], h: RealMatrix) -> Self {
        let wh = dec.precompute(p, &h);
        Self { dec, p, h, wh }
    }

    /// State before any symbol is consumed.
    pub fn initial_state(&self) -> AttentionState {
        self.dec.initial_state(self.h.rows())
    }

    /// One decoder step returning raw output logits over `V + 2` classes.
    pub fn attention_step(&self, state: &AttentionState, y_prev: usize) -> (AttentionState, Vec<f64>) {
        let (next, logits, _) = self.dec.step(self.p, &self.h, &self.wh, state, y_prev);
        (next, logits)
    }
}

impl StepScorer for AttentionScorer<'_> {
    type State = AttentionState;

    fn start(&self) -> (AttentionState, Vec<f64>) {
        self.step(&self.initial_state(), self.dec.sos())
    }

    fn step(&self, state: &AttentionState, token: usize) -> (AttentionState, Vec<f64>) {
        let (next, mut out) = self.attention_step(state, token);
        log_softmax_in_place(&mut out);
        (next, out)
    }

    fn attention<'a>(&self, state: &'a AttentionState) -> Option<&'a [f64]> {
        Some(&state.alpha)
    }
}
