use super::layers::{Dense, Lstm, LstmStep};
use super::params::LayoutBuilder;
use super::spec::{LayerKind, LayerSpec};
use crate::numerics::RealMatrix;

#[derive(Clone, Debug)]
enum Layer {
    Dense(Dense),
    Lstm(Lstm),
    BiLstm(Lstm, Lstm),
    /// Concatenate `k` consecutive frames (zero-padded at the end), project.
    Downsample(usize, Dense),
}

enum Cache {
    Input(RealMatrix),
    Lstm(Vec<LstmStep>),
    BiLstm(Vec<LstmStep>, Vec<LstmStep>),
    Downsample { stacked: RealMatrix, frames: usize },
}

/// Activations of one encoder pass.
pub struct EncoderCache {
    layers: Vec<Cache>,
}

#[derive(Clone, Debug)]
pub(crate) struct Encoder {
    layers: Vec<Layer>,
    width: usize,
}

impl Encoder {
    pub fn new(lb: &mut LayoutBuilder, specs: &[LayerSpec], feature_dim: usize) -> Self {
        let mut width = feature_dim;
        let mut layers = Vec::with_capacity(specs.len());
        for (i, s) in specs.iter().enumerate() {
            let name = format!("enc{i}");
            let out = s.output_width(width);
            let layer = match s.kind {
                _ if s.is_bidirectional() => Layer::BiLstm(
                    Lstm::new(lb, &format!("{name}.fwd"), width, s.width),
                    Lstm::new(lb, &format!("{name}.bwd"), width, s.width),
                ),
                LayerKind::RnnCell => Layer::Lstm(Lstm::new(lb, &name, width, s.width)),
                LayerKind::Downsample => {
                    let k = s.downsample_factor;
                    Layer::Downsample(k, Dense::new(lb, &name, k * width, out))
                }
                _ => Layer::Dense(Dense::new(lb, &name, width, out)),
            };
            layers.push(layer);
            width = out;
        }
        Self { layers, width }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn forward(&self, p: &[f64], x: &RealMatrix) -> (RealMatrix, EncoderCache) {
        let mut caches = Vec::with_capacity(self.layers.len());
        let mut cur = x.clone();
        for layer in &self.layers {
            let (next, cache) = match layer {
                Layer::Dense(d) => (d.forward(p, &cur), Cache::Input(cur)),
                Layer::Lstm(l) => {
                    let (y, c) = l.forward_seq(p, &cur, false);
                    (y, Cache::Lstm(c))
                }
                Layer::BiLstm(f, b) => {
                    let (yf, cf) = f.forward_seq(p, &cur, false);
                    let (yb, cb) = b.forward_seq(p, &cur, true);
                    (concat_cols(&yf, &yb), Cache::BiLstm(cf, cb))
                }
                Layer::Downsample(k, proj) => {
                    let stacked = stack_frames(&cur, *k);
                    let y = proj.forward(p, &stacked);
                    (y, Cache::Downsample { stacked, frames: cur.rows() })
                }
            };
            caches.push(cache);
            cur = next;
        }
        (cur, EncoderCache { layers: caches })
    }

    /// Accumulates parameter gradients and returns the gradient with respect
    /// to the input frames.
    pub fn backward(&self, p: &[f64], g: &mut [f64], cache: &EncoderCache, dy: RealMatrix) -> RealMatrix {
        let mut d = dy;
        for (layer, c) in self.layers.iter().zip(&cache.layers).rev() {
            d = match (layer, c) {
                (Layer::Dense(l), Cache::Input(x)) => l.backward(p, g, x, &d),
                (Layer::Lstm(l), Cache::Lstm(c)) => l.backward_seq(p, g, c, &d, false),
                (Layer::BiLstm(f, b), Cache::BiLstm(cf, cb)) => {
                    let (df, db) = split_cols(&d, f.hidden());
                    let mut dx = f.backward_seq(p, g, cf, &df, false);
                    let dxb = b.backward_seq(p, g, cb, &db, true);
                    for (a, b) in dx.data_mut().iter_mut().zip(dxb.data()) {
                        *a += b;
                    }
                    dx
                }
                (Layer::Downsample(k, proj), Cache::Downsample { stacked, frames }) => {
                    let ds = proj.backward(p, g, stacked, &d);
                    unstack_frames(&ds, *k, *frames)
                }
                _ => unreachable!("cache matches its layer"),
            };
        }
        d
    }
}

fn concat_cols(a: &RealMatrix, b: &RealMatrix) -> RealMatrix {
    let mut out = RealMatrix::zeros(a.rows(), a.cols() + b.cols());
    for t in 0..a.rows() {
        let row = out.row_mut(t);
        row[..a.cols()].copy_from_slice(a.row(t));
        row[a.cols()..].copy_from_slice(b.row(t));
    }
    out
}

fn split_cols(m: &RealMatrix, left: usize) -> (RealMatrix, RealMatrix) {
    let right = m.cols() - left;
    let mut a = RealMatrix::zeros(m.rows(), left);
    let mut b = RealMatrix::zeros(m.rows(), right);
    for t in 0..m.rows() {
        a.row_mut(t).copy_from_slice(&m.row(t)[..left]);
        b.row_mut(t).copy_from_slice(&m.row(t)[left..]);
    }
    (a, b)
}

/// Row `t` of the result is input rows `k t .. k t + k` side by side.
pub(crate) fn stack_frames(x: &RealMatrix, k: usize) -> RealMatrix {
    let d = x.cols();
    let rows = x.rows().div_ceil(k);
    let mut out = RealMatrix::zeros(rows, k * d);
    for t in 0..x.rows() {
        let (r, j) = (t / k, t % k);
        out.row_mut(r)[j * d..(j + 1) * d].copy_from_slice(x.row(t));
    }
    out
}

fn unstack_frames(ds: &RealMatrix, k: usize, frames: usize) -> RealMatrix {
    let d = ds.cols() / k;
    let mut dx = RealMatrix::zeros(frames, d);
    for t in 0..frames {
        let (r, j) = (t / k, t % k);
        dx.row_mut(t).copy_from_slice(&ds.row(r)[j * d..(j + 1) * d]);
    }
    dx
}
