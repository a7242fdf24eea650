use super::layers::{Dense, Lstm, LstmState, LstmStep};
use super::params::{LayoutBuilder, Tensor};
use super::spec::{LayerKind, LayerSpec};
use crate::numerics::RealMatrix;

#[derive(Clone, Debug)]
enum Layer {
    Dense(Dense),
    Lstm(Lstm),
}

enum Cache {
    Input(RealMatrix),
    Lstm(Vec<LstmStep>),
}

/// Recurrent state of the prediction network (one entry per LSTM layer).
#[derive(Clone, Debug, PartialEq)]
pub struct PredictionState {
    pub layers: Vec<LstmState>,
}

pub(crate) struct PredictionCache {
    inputs: Vec<usize>,
    layers: Vec<Cache>,
    last: RealMatrix,
}

/// Transducer prediction network: embedding of the previous label (sos
/// first) through causal layers, projected to the `V + 1` joint classes.
#[derive(Clone, Debug)]
pub(crate) struct Prediction {
    embed: Tensor,
    layers: Vec<Layer>,
    proj: Dense,
    sos: usize,
}

impl Prediction {
    /// `specs[0]` is the embedding; the rest are dense or forward LSTM layers.
    pub fn new(lb: &mut LayoutBuilder, specs: &[LayerSpec], vocab: usize) -> Self {
        let mut width = specs[0].width;
        let embed = lb.add("pred.embed".into(), vocab + 1, width, 1);
        let mut layers = Vec::new();
        for (i, s) in specs.iter().enumerate().skip(1) {
            let name = format!("pred{i}");
            layers.push(match s.kind {
                LayerKind::Dense => Layer::Dense(Dense::new(lb, &name, width, s.width)),
                _ => Layer::Lstm(Lstm::new(lb, &name, width, s.width)),
            });
            width = s.width;
        }
        let proj = Dense::new(lb, "pred.out", width, vocab + 1);
        Self { embed, layers, proj, sos: vocab }
    }

    pub fn sos(&self) -> usize {
        self.sos
    }

    pub fn initial(&self) -> PredictionState {
        let layers = self
            .layers
            .iter()
            .filter_map(|l| match l {
                Layer::Lstm(l) => Some(LstmState::zeros(l.hidden())),
                Layer::Dense(_) => None,
            })
            .collect();
        PredictionState { layers }
    }

    /// Consumes `token` (a symbol or sos) and returns the label-side joint
    /// projection.
    pub fn step(&self, p: &[f64], state: &PredictionState, token: usize) -> (PredictionState, Vec<f64>) {
        let mut x = self.embed.row(p, token).to_vec();
        let mut next = Vec::with_capacity(state.layers.len());
        let mut states = state.layers.iter();
        for layer in &self.layers {
            x = match layer {
                Layer::Dense(d) => d.apply(p, &x),
                Layer::Lstm(l) => {
                    let (s, _) = l.step(p, &x, states.next().expect("one state per lstm"));
                    let h = s.h.clone();
                    next.push(s);
                    h
                }
            };
        }
        (PredictionState { layers: next }, self.proj.apply(p, &x))
    }

    /// Outputs for inputs `[sos, y_1, .., y_U]`, shape `(U + 1) x (V + 1)`.
    pub fn forward(&self, p: &[f64], labels: &[usize]) -> (RealMatrix, PredictionCache) {
        let mut inputs = Vec::with_capacity(labels.len() + 1);
        inputs.push(self.sos);
        inputs.extend_from_slice(labels);
        let mut x = RealMatrix::zeros(inputs.len(), self.embed.cols);
        for (u, &k) in inputs.iter().enumerate() {
            x.row_mut(u).copy_from_slice(self.embed.row(p, k));
        }
        let mut caches = Vec::with_capacity(self.layers.len());
        for layer in &self.layers {
            let (y, c) = match layer {
                Layer::Dense(d) => (d.forward(p, &x), Cache::Input(x)),
                Layer::Lstm(l) => {
                    let (y, c) = l.forward_seq(p, &x, false);
                    (y, Cache::Lstm(c))
                }
            };
            caches.push(c);
            x = y;
        }
        let out = self.proj.forward(p, &x);
        (out, PredictionCache { inputs, layers: caches, last: x })
    }

    pub fn backward(&self, p: &[f64], g: &mut [f64], cache: &PredictionCache, dout: &RealMatrix) {
        let mut d = self.proj.backward(p, g, &cache.last, dout);
        for (layer, c) in self.layers.iter().zip(&cache.layers).rev() {
            d = match (layer, c) {
                (Layer::Dense(l), Cache::Input(x)) => l.backward(p, g, x, &d),
                (Layer::Lstm(l), Cache::Lstm(c)) => l.backward_seq(p, g, c, &d, false),
                _ => unreachable!("cache matches its layer"),
            };
        }
        for (u, &k) in cache.inputs.iter().enumerate() {
            for (a, b) in self.embed.row_mut(g, k).iter_mut().zip(d.row(u)) {
                *a += b;
            }
        }
    }
}
