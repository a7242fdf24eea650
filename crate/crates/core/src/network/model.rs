use super::attend::AttentionDecoder;
use super::encoder::{Encoder, EncoderCache};
use super::layers::Dense;
use super::params::{Layout, LayoutBuilder, Parameters};
use super::predict::Prediction;
use super::scorer::{AttentionScorer, RnntScorer};
use super::spec::{ModelKind, ModelSpec};
use crate::error::{Error, Result};
use crate::losses::{attention_nll, ctc_loss, ctc_min_frames, joint_combine, rnnt_loss, LossResult};
use crate::numerics::{RealMatrix, SeededRng};

/// One input sequence with its transcript.
#[derive(Clone, Debug, PartialEq)]
pub struct Utterance {
    pub id: String,
    pub frames: RealMatrix,
    pub reference: String,
}

#[derive(Clone, Debug)]
pub(crate) enum Head {
    Ctc(Dense),
    Rnnt { joint: Dense, pred: Prediction },
    Attention(AttentionDecoder),
}

#[derive(Clone, Debug)]
pub(crate) struct Network {
    pub encoder: Encoder,
    pub head: Head,
}

impl Network {
    fn build(spec: &ModelSpec) -> Result<(Self, Layout)> {
        spec.validate()?;
        let vocab = spec.alphabet.len();
        let mut lb = LayoutBuilder::default();
        let encoder = Encoder::new(&mut lb, &spec.encoder, spec.feature_dim);
        let d = encoder.width();
        let head = match spec.kind {
            ModelKind::Ctc => Head::Ctc(Dense::new(&mut lb, "ctc.out", d, vocab + 1)),
            ModelKind::Rnnt => {
                let joint = Dense::new(&mut lb, "joint.enc", d, vocab + 1);
                let pred = Prediction::new(&mut lb, &spec.decoder, vocab);
                Head::Rnnt { joint, pred }
            }
            ModelKind::Attention => Head::Attention(AttentionDecoder::new(
                &mut lb,
                spec.decoder[0].width,
                spec.decoder[1].width,
                &spec.attention_config(),
                d,
                vocab,
            )),
        };
        Ok((Self { encoder, head }, lb.finish()))
    }
}

/// A model spec with its parameters.
#[derive(Clone, Debug)]
pub struct Model {
    spec: ModelSpec,
    net: Network,
    params: Parameters,
}

impl Model {
    /// Parameter layout implied by `spec`.
    pub fn layout_for(spec: &ModelSpec) -> Result<Layout> {
        Ok(Network::build(spec)?.1)
    }

    /// Randomly initialized model.
    pub fn new(spec: ModelSpec, seed: u64) -> Result<Self> {
        let (net, layout) = Network::build(&spec)?;
        let params = Parameters::init(layout, &mut SeededRng::new(seed));
        Ok(Self { spec, net, params })
    }

    /// All parameters zero.
    pub fn zeroed(spec: ModelSpec) -> Result<Self> {
        let (net, layout) = Network::build(&spec)?;
        Ok(Self { spec, net, params: Parameters::zeros(layout) })
    }

    pub fn from_parameters(spec: ModelSpec, params: Parameters) -> Result<Self> {
        let (net, layout) = Network::build(&spec)?;
        if &layout != params.layout() {
            return Err(Error::Format("parameter layout does not match the model spec".into()));
        }
        Ok(Self { spec, net, params })
    }

    pub fn spec(&self) -> &ModelSpec {
        &self.spec
    }

    pub fn kind(&self) -> ModelKind {
        self.spec.kind
    }

    pub fn params(&self) -> &Parameters {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut Parameters {
        &mut self.params
    }

    pub fn parameter_count(&self) -> usize {
        self.params.len()
    }

    /// Input frames per encoder step.
    pub fn frames_per_step(&self) -> usize {
        self.spec.downsampling()
    }

    pub fn labels(&self, reference: &str) -> Result<Vec<usize>> {
        Ok(self.spec.alphabet.encode(reference)?.0)
    }

    fn check_frames(&self, frames: &RealMatrix) -> Result<()> {
        if frames.rows() == 0 {
            return Err(Error::Shape("utterance has no frames".into()));
        }
        if frames.cols() != self.spec.feature_dim {
            return Err(Error::Shape(format!(
                "expected {} features per frame, got {}",
                self.spec.feature_dim,
                frames.cols()
            )));
        }
        if !frames.is_finite() {
            return Err(Error::NonFinite("input frames".into()));
        }
        Ok(())
    }

    /// Encoder output, `T' x D`.
    pub fn encode(&self, frames: &RealMatrix) -> Result<RealMatrix> {
        Ok(self.encode_cached(frames)?.0)
    }

    fn encode_cached(&self, frames: &RealMatrix) -> Result<(RealMatrix, EncoderCache)> {
        self.check_frames(frames)?;
        Ok(self.net.encoder.forward(self.params.values(), frames))
    }

    fn wrong_kind(&self, wanted: &str) -> Error {
        Error::Config(format!("{wanted} needs a different model kind than {}", self.spec.kind))
    }

    /// CTC frame logits `T' x (V + 1)` from an encoder output.
    pub fn ctc_logits(&self, h: &RealMatrix) -> Result<RealMatrix> {
        match &self.net.head {
            Head::Ctc(out) => Ok(out.forward(self.params.values(), h)),
            _ => Err(self.wrong_kind("ctc_logits")),
        }
    }

    /// Frame side of the transducer joint, `T' x (V + 1)`.
    pub fn rnnt_frames(&self, h: &RealMatrix) -> Result<RealMatrix> {
        match &self.net.head {
            Head::Rnnt { joint, .. } => Ok(joint.forward(self.params.values(), h)),
            _ => Err(self.wrong_kind("rnnt_frames")),
        }
    }

    pub fn rnnt_scorer(&self) -> Result<RnntScorer<'_>> {
        match &self.net.head {
            Head::Rnnt { pred, .. } => Ok(RnntScorer::new(pred, self.params.values())),
            _ => Err(self.wrong_kind("rnnt_scorer")),
        }
    }

    pub fn attention_scorer(&self, h: &RealMatrix) -> Result<AttentionScorer<'_>> {
        match &self.net.head {
            Head::Attention(dec) => Ok(AttentionScorer::new(dec, self.params.values(), h.clone())),
            _ => Err(self.wrong_kind("attention_scorer")),
        }
    }

    /// Prediction network outputs over `[sos, labels..]`.
    pub fn prediction_outputs(&self, labels: &[usize]) -> Result<RealMatrix> {
        match &self.net.head {
            Head::Rnnt { pred, .. } => Ok(pred.forward(self.params.values(), labels).0),
            _ => Err(self.wrong_kind("prediction_outputs")),
        }
    }

    /// Teacher-forced attention logits `(U + 1) x (V + 2)`.
    pub fn attention_logits(&self, h: &RealMatrix, labels: &[usize]) -> Result<RealMatrix> {
        match &self.net.head {
            Head::Attention(dec) => Ok(dec.forward(self.params.values(), h, labels).0),
            _ => Err(self.wrong_kind("attention_logits")),
        }
    }

    /// Fails when a CTC model cannot emit the reference after downsampling.
    pub fn check_feasible(&self, utt: &Utterance) -> Result<()> {
        let labels = self.labels(&utt.reference).map_err(|e| e.for_utterance(&utt.id))?;
        if self.spec.kind == ModelKind::Ctc {
            let available = self.spec.encoded_len(utt.frames.rows());
            let required = ctc_min_frames(&labels);
            if required > available {
                return Err(Error::NoAlignment { required, available }.for_utterance(&utt.id));
            }
        }
        Ok(())
    }

    /// Negative log-likelihood of the reference and its gradient with respect
    /// to every parameter (flat, in layout order).
    pub fn loss(&self, utt: &Utterance) -> Result<LossResult<Vec<f64>>> {
        self.loss_inner(&utt.frames, &utt.reference).map_err(|e| e.for_utterance(&utt.id))
    }

    fn loss_inner(&self, frames: &RealMatrix, reference: &str) -> Result<LossResult<Vec<f64>>> {
        let labels = self.labels(reference)?;
        let p = self.params.values();
        let mut g = vec![0.0; p.len()];
        let (h, cache) = self.encode_cached(frames)?;
        let (loss, dh) = match &self.net.head {
            Head::Ctc(out) => {
                let logits = out.forward(p, &h);
                let r = ctc_loss(&logits, &labels)?;
                (r.loss, out.backward(p, &mut g, &h, &r.grad))
            }
            Head::Rnnt { joint, pred } => {
                let h_proj = joint.forward(p, &h);
                let (g_proj, pcache) = pred.forward(p, &labels);
                let r = rnnt_loss(&joint_combine(&h_proj, &g_proj)?, &labels)?;
                let (dhp, dgp) = r.grad.split_grad();
                pred.backward(p, &mut g, &pcache, &dgp);
                (r.loss, joint.backward(p, &mut g, &h, &dhp))
            }
            Head::Attention(dec) => {
                let (logits, traces) = dec.forward(p, &h, &labels);
                let r = attention_nll(&logits, &labels)?;
                (r.loss, dec.backward(p, &mut g, &h, &traces, &r.grad))
            }
        };
        self.net.encoder.backward(p, &mut g, &cache, dh);
        Ok(LossResult { loss, grad: g })
    }

    /// Loss only, for finite-difference checks.
    pub fn loss_value(&self, utt: &Utterance) -> Result<f64> {
        Ok(self.loss(utt)?.loss)
    }

    /// Loss divided by the number of reference symbols (at least one).
    pub fn per_symbol(loss: f64, reference: &str) -> f64 {
        loss / reference.chars().count().max(1) as f64
    }
}
