use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::losses::Alphabet;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LayerKind {
    Dense,
    RnnCell,
    BidirectionalRnn,
    Downsample,
    Embedding,
    AttentionDecoder,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    #[default]
    Forward,
    Bidirectional,
}

fn one() -> usize {
    1
}

/// One layer of an encoder or decoder stack.
///
/// `width` is the cell count per direction for recurrent layers, the output
/// size for dense, embedding and downsample projections (0 keeps the input
/// width for downsample) and the recurrent width of an attention decoder.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LayerSpec {
    pub kind: LayerKind,
    #[serde(default)]
    pub width: usize,
    #[serde(default = "one")]
    pub downsample_factor: usize,
    #[serde(default)]
    pub direction: Direction,
}

impl LayerSpec {
    fn of(kind: LayerKind, width: usize) -> Self {
        Self { kind, width, downsample_factor: 1, direction: Direction::Forward }
    }

    pub fn dense(width: usize) -> Self {
        Self::of(LayerKind::Dense, width)
    }

    pub fn lstm(width: usize) -> Self {
        Self::of(LayerKind::RnnCell, width)
    }

    pub fn bilstm(width: usize) -> Self {
        Self { direction: Direction::Bidirectional, ..Self::of(LayerKind::BidirectionalRnn, width) }
    }

    /// Concatenate `factor` frames and project back to the input width.
    pub fn downsample(factor: usize) -> Self {
        Self { downsample_factor: factor, ..Self::of(LayerKind::Downsample, 0) }
    }

    pub fn embedding(width: usize) -> Self {
        Self::of(LayerKind::Embedding, width)
    }

    pub fn attention_decoder(width: usize) -> Self {
        Self::of(LayerKind::AttentionDecoder, width)
    }

    pub fn is_recurrent(&self) -> bool {
        matches!(self.kind, LayerKind::RnnCell | LayerKind::BidirectionalRnn)
    }

    pub fn is_bidirectional(&self) -> bool {
        self.kind == LayerKind::BidirectionalRnn
            || (self.kind == LayerKind::RnnCell && self.direction == Direction::Bidirectional)
    }

    /// Frames consumed per output step.
    pub fn factor(&self) -> usize {
        if self.kind == LayerKind::Downsample {
            self.downsample_factor
        } else {
            1
        }
    }

    pub(crate) fn output_width(&self, input: usize) -> usize {
        match self.kind {
            _ if self.is_bidirectional() => 2 * self.width,
            LayerKind::Downsample if self.width == 0 => input,
            _ => self.width,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Ctc,
    Rnnt,
    Attention,
}

impl ModelKind {
    pub const ALL: [ModelKind; 3] = [ModelKind::Ctc, ModelKind::Rnnt, ModelKind::Attention];

    pub fn name(self) -> &'static str {
        match self {
            ModelKind::Ctc => "ctc",
            ModelKind::Rnnt => "rnnt",
            ModelKind::Attention => "attention",
        }
    }
}

impl std::fmt::Display for ModelKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ctc" => Ok(ModelKind::Ctc),
            "rnnt" => Ok(ModelKind::Rnnt),
            "attention" => Ok(ModelKind::Attention),
            other => Err(Error::Config(format!("unknown model kind {other:?}"))),
        }
    }
}

/// Location-aware attention energy.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AttentionConfig {
    /// Width of the convolution over the previous attention row.
    pub conv_width: usize,
    /// Location feature channels.
    pub channels: usize,
    /// Dimension of the energy MLP.
    pub dim: usize,
}

impl Default for AttentionConfig {
    fn default() -> Self {
        Self { conv_width: 5, channels: 4, dim: 32 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub kind: ModelKind,
    pub alphabet: Alphabet,
    pub feature_dim: usize,
    pub encoder: Vec<LayerSpec>,
    #[serde(default)]
    pub decoder: Vec<LayerSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub attention: Option<AttentionConfig>,
}

impl ModelSpec {
    /// Desk-scale defaults: two bidirectional layers of `width` cells and a
    /// matching decoder for the kind.
    pub fn standard(kind: ModelKind, alphabet: Alphabet, feature_dim: usize, width: usize) -> Self {
        let decoder = match kind {
            ModelKind::Ctc => Vec::new(),
            ModelKind::Rnnt => vec![LayerSpec::embedding(width / 2), LayerSpec::lstm(width)],
            ModelKind::Attention => vec![LayerSpec::embedding(width / 2), LayerSpec::attention_decoder(width)],
        };
        let attention = (kind == ModelKind::Attention).then(|| AttentionConfig { dim: width, ..Default::default() });
        Self {
            kind,
            alphabet,
            feature_dim,
            encoder: vec![LayerSpec::bilstm(width), LayerSpec::bilstm(width)],
            decoder,
            attention,
        }
    }

    /// Product of all downsampling factors (input frames per encoder step).
    pub fn downsampling(&self) -> usize {
        self.encoder.iter().map(LayerSpec::factor).product()
    }

    /// Encoder length for `frames` input frames (ceil at every stage).
    pub fn encoded_len(&self, frames: usize) -> usize {
        self.encoder.iter().fold(frames, |t, l| t.div_ceil(l.factor()))
    }

    pub fn encoder_width(&self) -> usize {
        self.encoder.iter().fold(self.feature_dim, |w, l| l.output_width(w))
    }

    pub fn attention_config(&self) -> AttentionConfig {
        self.attention.clone().unwrap_or_default()
    }

    /// The same spec with its downsampling replaced by a single layer of
    /// `factor` after the first recurrent layer (removed when `factor` is 1).
    pub fn with_downsampling(&self, factor: usize) -> Self {
        let mut spec = self.clone();
        spec.encoder.retain(|l| l.kind != LayerKind::Downsample);
        if factor > 1 {
            let at = spec.encoder.iter().position(LayerSpec::is_recurrent).map_or(0, |i| i + 1);
            spec.encoder.insert(at, LayerSpec::downsample(factor));
        }
        spec
    }

    /// Every bidirectional encoder layer replaced by a forward layer of
    /// `width` cells.
    pub fn forward_only(&self, width: usize) -> Self {
        let mut spec = self.clone();
        for l in spec.encoder.iter_mut().filter(|l| l.is_bidirectional()) {
            *l = LayerSpec::lstm(width);
        }
        spec
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if self.feature_dim == 0 {
            return bad("feature_dim must be at least 1".into());
        }
        if self.encoder.is_empty() {
            return bad("encoder needs at least one layer".into());
        }
        for (i, l) in self.encoder.iter().enumerate() {
            match l.kind {
                LayerKind::Dense | LayerKind::RnnCell | LayerKind::BidirectionalRnn if l.width == 0 => {
                    return bad(format!("encoder layer {i} has zero width"));
                }
                LayerKind::Downsample if l.downsample_factor == 0 => {
                    return bad(format!("encoder layer {i} has downsample factor 0"));
                }
                LayerKind::Embedding | LayerKind::AttentionDecoder => {
                    return bad(format!("encoder layer {i}: {:?} is a decoder layer", l.kind));
                }
                _ => {}
            }
        }
        let dec = &self.decoder;
        match self.kind {
            ModelKind::Ctc if !dec.is_empty() => bad("ctc models have no decoder".into()),
            ModelKind::Ctc => Ok(()),
            ModelKind::Rnnt => {
                if dec.first().map(|l| l.kind) != Some(LayerKind::Embedding) {
                    return bad("rnnt decoder must start with an embedding".into());
                }
                for (i, l) in dec.iter().enumerate() {
                    if l.width == 0 {
                        return bad(format!("decoder layer {i} has zero width"));
                    }
                    let causal = matches!(l.kind, LayerKind::Dense)
                        || (l.kind == LayerKind::RnnCell && !l.is_bidirectional());
                    if i > 0 && !causal {
                        return bad(format!("rnnt decoder layer {i} must be dense or a forward rnn_cell"));
                    }
                }
                Ok(())
            }
            ModelKind::Attention => {
                let kinds: Vec<_> = dec.iter().map(|l| l.kind).collect();
                if kinds != [LayerKind::Embedding, LayerKind::AttentionDecoder] {
                    return bad("attention decoder must be [embedding, attention_decoder]".into());
                }
                if dec.iter().any(|l| l.width == 0) {
                    return bad("decoder widths must be at least 1".into());
                }
                let a = self.attention_config();
                if a.conv_width == 0 || a.channels == 0 || a.dim == 0 {
                    return bad("attention sizes must be at least 1".into());
                }
                Ok(())
            }
        }
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("model specs always serialize")
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let spec: Self = toml::from_str(text).map_err(|e| Error::Format(e.to_string()))?;
        spec.validate()?;
        Ok(spec)
    }
}
