//! Location-aware attention decoder.
//!
//! One step with previous symbol `y`:
//!
//! ```text
//! g_attn = AttentionRNN(emb(y), g_attn)
//! f_t    = (F * alpha_prev)_t                      (1-D conv, zero padded)
//! e_t    = v . tanh(W h_t + S g_attn + Q f_t + b)
//! alpha  = softmax(e)
//! c      = sum_t alpha_t h_t
//! g_dec  = DecoderRNN([c; g_attn], g_dec)
//! logits = O g_dec + o
//! ```

use super::layers::{add_into, dot, gemv_acc, gemv_t_acc, outer_acc, Dense, Lstm, LstmState, LstmStep};
use super::params::{LayoutBuilder, Tensor};
use super::spec::AttentionConfig;
use crate::numerics::RealMatrix;

/// Decoder state between steps.
#[derive(Clone, Debug, PartialEq)]
pub struct AttentionState {
    pub g_attn: LstmState,
    pub g_dec: LstmState,
    /// Attention row of the latest step over the encoder steps.
    pub alpha: Vec<f64>,
}

pub(crate) struct StepTrace {
    token: usize,
    attn: LstmStep,
    dec: LstmStep,
    g_attn: Vec<f64>,
    g_dec: Vec<f64>,
    alpha_prev: Vec<f64>,
    /// `T' x channels`.
    loc: Vec<f64>,
    /// `T' x dim`, post-tanh.
    z: Vec<f64>,
    alpha: Vec<f64>,
}

#[derive(Clone, Debug)]
pub(crate) struct AttentionDecoder {
    embed: Tensor,
    attn_rnn: Lstm,
    w_h: Tensor,
    s: Tensor,
    q: Tensor,
    conv: Tensor,
    b: Tensor,
    v: Tensor,
    dec_rnn: Lstm,
    out: Dense,
    kernel: usize,
    channels: usize,
    dim: usize,
    sos: usize,
}

impl AttentionDecoder {
    pub fn new(
        lb: &mut LayoutBuilder,
        embed_width: usize,
        width: usize,
        cfg: &AttentionConfig,
        enc_width: usize,
        vocab: usize,
    ) -> Self {
        let (a, c, k) = (cfg.dim, cfg.channels, cfg.conv_width);
        let embed = lb.add("att.embed".into(), vocab + 1, embed_width, 1);
        let attn_rnn = Lstm::new(lb, "att.rnn", embed_width, width);
        let w_h = lb.add("att.w_enc".into(), a, enc_width, enc_width);
        let s = lb.add("att.w_state".into(), a, width, width);
        let q = lb.add("att.w_loc".into(), a, c, c);
        let conv = lb.add("att.conv".into(), c, k, k);
        let b = lb.add("att.b".into(), 1, a, enc_width);
        let v = lb.add("att.v".into(), 1, a, a);
        let dec_rnn = Lstm::new(lb, "att.dec", enc_width + width, width);
        let out = Dense::new(lb, "att.out", width, vocab + 2);
        Self { embed, attn_rnn, w_h, s, q, conv, b, v, dec_rnn, out, kernel: k, channels: c, dim: a, sos: vocab }
    }

    pub fn sos(&self) -> usize {
        self.sos
    }

    /// Content term `W h_t` for every encoder step.
    pub fn precompute(&self, p: &[f64], h: &RealMatrix) -> RealMatrix {
        let mut wh = RealMatrix::zeros(h.rows(), self.dim);
        for t in 0..h.rows() {
            gemv_acc(self.w_h.of(p), h.row(t), wh.row_mut(t));
        }
        wh
    }

    /// Zero recurrent states; the previous attention row is one-hot at the
    /// first encoder step.
    pub fn initial_state(&self, frames: usize) -> AttentionState {
        let n = self.attn_rnn.hidden();
        let mut alpha = vec![0.0; frames];
        alpha[0] = 1.0;
        AttentionState { g_attn: LstmState::zeros(n), g_dec: LstmState::zeros(n), alpha }
    }

    fn location(&self, p: &[f64], alpha_prev: &[f64]) -> Vec<f64> {
        let (c, k) = (self.channels, self.kernel);
        let conv = self.conv.of(p);
        let t_len = alpha_prev.len();
        let mut loc = vec![0.0; t_len * c];
        for t in 0..t_len {
            for ch in 0..c {
                let mut acc = 0.0;
                for j in 0..k {
                    if let Some(src) = (t + j).checked_sub(k / 2).filter(|&s| s < t_len) {
                        acc += conv[ch * k + j] * alpha_prev[src];
                    }
                }
                loc[t * c + ch] = acc;
            }
        }
        loc
    }

    pub fn step(
        &self,
        p: &[f64],
        h: &RealMatrix,
        wh: &RealMatrix,
        state: &AttentionState,
        token: usize,
    ) -> (AttentionState, Vec<f64>, StepTrace) {
        let (a, c) = (self.dim, self.channels);
        let t_len = h.rows();
        let (g_attn, attn_cache) = self.attn_rnn.step(p, self.embed.row(p, token), &state.g_attn);

        let mut common = self.b.of(p).to_vec();
        gemv_acc(self.s.of(p), &g_attn.h, &mut common);
        let loc = self.location(p, &state.alpha);
        let v = self.v.of(p);
        let mut z = vec![0.0; t_len * a];
        let mut energy = vec![0.0; t_len];
        for t in 0..t_len {
            let zt = &mut z[t * a..(t + 1) * a];
            zt.copy_from_slice(&common);
            add_into(zt, wh.row(t));
            gemv_acc(self.q.of(p), &loc[t * c..(t + 1) * c], zt);
            for x in zt.iter_mut() {
                *x = x.tanh();
            }
            energy[t] = dot(v, zt);
        }
        let alpha = softmax(&energy);

        let enc_width = h.cols();
        let mut dec_in = vec![0.0; enc_width + g_attn.h.len()];
        for t in 0..t_len {
            for (x, &hv) in dec_in[..enc_width].iter_mut().zip(h.row(t)) {
                *x += alpha[t] * hv;
            }
        }
        dec_in[enc_width..].copy_from_slice(&g_attn.h);
        let (g_dec, dec_cache) = self.dec_rnn.step(p, &dec_in, &state.g_dec);
        let logits = self.out.apply(p, &g_dec.h);

        let trace = StepTrace {
            token,
            attn: attn_cache,
            dec: dec_cache,
            g_attn: g_attn.h.clone(),
            g_dec: g_dec.h.clone(),
            alpha_prev: state.alpha.clone(),
            loc,
            z,
            alpha: alpha.clone(),
        };
        (AttentionState { g_attn, g_dec, alpha }, logits, trace)
    }

    /// Teacher-forced logits for inputs `[sos, y_1, .., y_U]`.
    pub fn forward(&self, p: &[f64], h: &RealMatrix, labels: &[usize]) -> (RealMatrix, Vec<StepTrace>) {
        let wh = self.precompute(p, h);
        let mut state = self.initial_state(h.rows());
        let mut logits = RealMatrix::zeros(labels.len() + 1, self.out.output());
        let mut traces = Vec::with_capacity(labels.len() + 1);
        for (u, &tok) in std::iter::once(&self.sos).chain(labels).enumerate() {
            let (next, l, trace) = self.step(p, h, &wh, &state, tok);
            logits.row_mut(u).copy_from_slice(&l);
            traces.push(trace);
            state = next;
        }
        (logits, traces)
    }

    /// Backpropagates `dlogits` through all steps; returns the gradient with
    /// respect to the encoder output.
    pub fn backward(
        &self,
        p: &[f64],
        g: &mut [f64],
        h: &RealMatrix,
        traces: &[StepTrace],
        dlogits: &RealMatrix,
    ) -> RealMatrix {
        let (a, c, k) = (self.dim, self.channels, self.kernel);
        let n = self.attn_rnn.hidden();
        let t_len = h.rows();
        let enc_width = h.cols();
        let mut dh = RealMatrix::zeros(t_len, enc_width);
        let mut dwh = vec![0.0; t_len * a];
        let mut dga_next = vec![0.0; n];
        let mut dca_next = vec![0.0; n];
        let mut dgd_next = vec![0.0; n];
        let mut dcd_next = vec![0.0; n];
        let mut dalpha_next = vec![0.0; t_len];

        for (u, tr) in traces.iter().enumerate().rev() {
            let mut dgd = dgd_next;
            self.out.backward_row(p, g, &tr.g_dec, dlogits.row(u), &mut dgd);
            let (din, dgd_prev, dcd_prev) = self.dec_rnn.step_backward(p, g, &tr.dec, &dgd, &dcd_next);
            let (dctx, dga_in) = din.split_at(enc_width);
            let mut dga = dga_in.to_vec();
            add_into(&mut dga, &dga_next);

            let mut dalpha = dalpha_next;
            for t in 0..t_len {
                dalpha[t] += dot(h.row(t), dctx);
                for (d, &x) in dh.row_mut(t).iter_mut().zip(dctx) {
                    *d += tr.alpha[t] * x;
                }
            }
            let mean = dot(&tr.alpha, &dalpha);
            let v = self.v.of(p);
            let mut dpre_sum = vec![0.0; a];
            let mut dalpha_prev = vec![0.0; t_len];
            let mut dloc = vec![0.0; c];
            for t in 0..t_len {
                let de = tr.alpha[t] * (dalpha[t] - mean);
                if de == 0.0 {
                    continue;
                }
                let zt = &tr.z[t * a..(t + 1) * a];
                for (gv, &zv) in self.v.of_mut(g).iter_mut().zip(zt) {
                    *gv += de * zv;
                }
                let dpre: Vec<f64> = zt.iter().zip(v).map(|(&zv, &vv)| de * vv * (1.0 - zv * zv)).collect();
                add_into(&mut dwh[t * a..(t + 1) * a], &dpre);
                add_into(&mut dpre_sum, &dpre);
                let loc_t = &tr.loc[t * c..(t + 1) * c];
                outer_acc(self.q.of_mut(g), &dpre, loc_t);
                dloc.iter_mut().for_each(|x| *x = 0.0);
                gemv_t_acc(self.q.of(p), &dpre, &mut dloc);
                let conv = self.conv.of(p);
                for ch in 0..c {
                    for j in 0..k {
                        if let Some(src) = (t + j).checked_sub(k / 2).filter(|&s| s < t_len) {
                            self.conv.of_mut(g)[ch * k + j] += dloc[ch] * tr.alpha_prev[src];
                            dalpha_prev[src] += conv[ch * k + j] * dloc[ch];
                        }
                    }
                }
            }
            add_into(self.b.of_mut(g), &dpre_sum);
            outer_acc(self.s.of_mut(g), &dpre_sum, &tr.g_attn);
            gemv_t_acc(self.s.of(p), &dpre_sum, &mut dga);

            let (dx, dga_prev, dca_prev) = self.attn_rnn.step_backward(p, g, &tr.attn, &dga, &dca_next);
            add_into(self.embed.row_mut(g, tr.token), &dx);

            dga_next = dga_prev;
            dca_next = dca_prev;
            dgd_next = dgd_prev;
            dcd_next = dcd_prev;
            dalpha_next = dalpha_prev;
        }

        for t in 0..t_len {
            let d = &dwh[t * a..(t + 1) * a];
            outer_acc(self.w_h.of_mut(g), d, h.row(t));
            gemv_t_acc(self.w_h.of(p), d, dh.row_mut(t));
        }
        dh
    }
}

fn softmax(e: &[f64]) -> Vec<f64> {
    let m = e.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut out: Vec<f64> = e.iter().map(|&x| (x - m).exp()).collect();
    let z: f64 = out.iter().sum();
    out.iter_mut().for_each(|x| *x /= z);
    out
}
