//! Dense and LSTM building blocks with hand-written backward passes.
//!
//! Forward functions read parameters from a flat slice; backward functions
//! accumulate into a gradient slice of the same layout.

use super::params::{LayoutBuilder, Tensor};
use crate::numerics::RealMatrix;

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `out += W x` for row-major `W` with `x.len()` columns.
pub(crate) fn gemv_acc(w: &[f64], x: &[f64], out: &mut [f64]) {
    let cols = x.len();
    for (o, row) in out.iter_mut().zip(w.chunks_exact(cols)) {
        *o += dot(row, x);
    }
}

/// `dx += Wᵀ dy`.
pub(crate) fn gemv_t_acc(w: &[f64], dy: &[f64], dx: &mut [f64]) {
    let cols = dx.len();
    for (&d, row) in dy.iter().zip(w.chunks_exact(cols)) {
        if d != 0.0 {
            for (x, &wv) in dx.iter_mut().zip(row) {
                *x += d * wv;
            }
        }
    }
}

/// `dW += dy xᵀ`.
pub(crate) fn outer_acc(dw: &mut [f64], dy: &[f64], x: &[f64]) {
    let cols = x.len();
    for (&d, row) in dy.iter().zip(dw.chunks_exact_mut(cols)) {
        if d != 0.0 {
            for (g, &xv) in row.iter_mut().zip(x) {
                *g += d * xv;
            }
        }
    }
}

pub(crate) fn add_into(dst: &mut [f64], src: &[f64]) {
    for (d, s) in dst.iter_mut().zip(src) {
        *d += s;
    }
}

#[inline]
fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Affine map `y = W x + b`.
#[derive(Clone, Debug)]
pub(crate) struct Dense {
    w: Tensor,
    b: Tensor,
}

impl Dense {
    pub fn new(lb: &mut LayoutBuilder, name: &str, input: usize, output: usize) -> Self {
        let w = lb.add(format!("{name}.w"), output, input, input);
        let b = lb.add(format!("{name}.b"), 1, output, input);
        Self { w, b }
    }

    pub fn input(&self) -> usize {
        self.w.cols
    }

    pub fn output(&self) -> usize {
        self.w.rows
    }

    pub fn apply(&self, p: &[f64], x: &[f64]) -> Vec<f64> {
        let mut y = self.b.of(p).to_vec();
        gemv_acc(self.w.of(p), x, &mut y);
        y
    }

    pub fn forward(&self, p: &[f64], x: &RealMatrix) -> RealMatrix {
        let mut y = RealMatrix::zeros(x.rows(), self.output());
        for t in 0..x.rows() {
            y.row_mut(t).copy_from_slice(&self.apply(p, x.row(t)));
        }
        y
    }

    /// Accumulates parameter gradients for one row and adds `Wᵀ dy` to `dx`.
    pub fn backward_row(&self, p: &[f64], g: &mut [f64], x: &[f64], dy: &[f64], dx: &mut [f64]) {
        outer_acc(self.w.of_mut(g), dy, x);
        add_into(self.b.of_mut(g), dy);
        gemv_t_acc(self.w.of(p), dy, dx);
    }

    pub fn backward(&self, p: &[f64], g: &mut [f64], x: &RealMatrix, dy: &RealMatrix) -> RealMatrix {
        let mut dx = RealMatrix::zeros(x.rows(), self.input());
        for t in 0..x.rows() {
            self.backward_row(p, g, x.row(t), dy.row(t), dx.row_mut(t));
        }
        dx
    }
}

/// Hidden and cell state of an LSTM.
#[derive(Clone, Debug, PartialEq)]
pub struct LstmState {
    pub h: Vec<f64>,
    pub c: Vec<f64>,
}

impl LstmState {
    pub fn zeros(width: usize) -> Self {
        Self { h: vec![0.0; width], c: vec![0.0; width] }
    }
}

/// Activations of one LSTM step kept for the backward pass.
#[derive(Clone, Debug)]
pub(crate) struct LstmStep {
    /// `[x; h_prev]`.
    z: Vec<f64>,
    /// Activated gates `[i; f; o; g]`.
    gates: Vec<f64>,
    c_prev: Vec<f64>,
    tanh_c: Vec<f64>,
}

/// LSTM cell without peepholes: gates from `W [x; h_prev] + b`,
/// `c = f*c_prev + i*g`, `h = o*tanh(c)`.
#[derive(Clone, Debug)]
pub(crate) struct Lstm {
    w: Tensor,
    b: Tensor,
    input: usize,
    hidden: usize,
}

impl Lstm {
    pub fn new(lb: &mut LayoutBuilder, name: &str, input: usize, hidden: usize) -> Self {
        let fan_in = input + hidden;
        let w = lb.add(format!("{name}.w"), 4 * hidden, fan_in, fan_in);
        let b = lb.add(format!("{name}.b"), 1, 4 * hidden, fan_in);
        Self { w, b, input, hidden }
    }

    pub fn hidden(&self) -> usize {
        self.hidden
    }

    pub fn step(&self, p: &[f64], x: &[f64], prev: &LstmState) -> (LstmState, LstmStep) {
        let n = self.hidden;
        debug_assert_eq!(x.len(), self.input);
        let mut z = Vec::with_capacity(self.input + n);
        z.extend_from_slice(x);
        z.extend_from_slice(&prev.h);
        let mut gates = self.b.of(p).to_vec();
        gemv_acc(self.w.of(p), &z, &mut gates);
        for v in &mut gates[..3 * n] {
            *v = sigmoid(*v);
        }
        for v in &mut gates[3 * n..] {
            *v = v.tanh();
        }
        let mut c = vec![0.0; n];
        let mut h = vec![0.0; n];
        let mut tanh_c = vec![0.0; n];
        for j in 0..n {
            let (i, f, o, g) = (gates[j], gates[n + j], gates[2 * n + j], gates[3 * n + j]);
            c[j] = f * prev.c[j] + i * g;
            tanh_c[j] = c[j].tanh();
            h[j] = o * tanh_c[j];
        }
        let cache = LstmStep { z, gates, c_prev: prev.c.clone(), tanh_c };
        (LstmState { h, c }, cache)
    }

    /// Backward through one step given the gradients reaching `h` and `c`;
    /// returns `(dx, dh_prev, dc_prev)`.
    pub fn step_backward(
        &self,
        p: &[f64],
        g: &mut [f64],
        cache: &LstmStep,
        dh: &[f64],
        dc: &[f64],
    ) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
        let n = self.hidden;
        let gt = &cache.gates;
        let mut da = vec![0.0; 4 * n];
        let mut dc_prev = vec![0.0; n];
        for j in 0..n {
            let (i, f, o, gg) = (gt[j], gt[n + j], gt[2 * n + j], gt[3 * n + j]);
            let tc = cache.tanh_c[j];
            let dct = dc[j] + dh[j] * o * (1.0 - tc * tc);
            da[j] = dct * gg * i * (1.0 - i);
            da[n + j] = dct * cache.c_prev[j] * f * (1.0 - f);
            da[2 * n + j] = dh[j] * tc * o * (1.0 - o);
            da[3 * n + j] = dct * i * (1.0 - gg * gg);
            dc_prev[j] = dct * f;
        }
        outer_acc(self.w.of_mut(g), &da, &cache.z);
        add_into(self.b.of_mut(g), &da);
        let mut dz = vec![0.0; self.input + n];
        gemv_t_acc(self.w.of(p), &da, &mut dz);
        let dh_prev = dz.split_off(self.input);
        (dz, dh_prev, dc_prev)
    }

    /// Runs over all rows of `x` (last to first when `reverse`), from a zero
    /// state. Output row `t` is the hidden state after consuming row `t`.
    pub fn forward_seq(&self, p: &[f64], x: &RealMatrix, reverse: bool) -> (RealMatrix, Vec<LstmStep>) {
        let t_len = x.rows();
        let mut out = RealMatrix::zeros(t_len, self.hidden);
        let mut caches = Vec::with_capacity(t_len);
        let mut state = LstmState::zeros(self.hidden);
        for i in 0..t_len {
            let t = if reverse { t_len - 1 - i } else { i };
            let (next, cache) = self.step(p, x.row(t), &state);
            out.row_mut(t).copy_from_slice(&next.h);
            caches.push(cache);
            state = next;
        }
        (out, caches)
    }

    /// Backward of [`Lstm::forward_seq`]; `caches` are in processing order.
    pub fn backward_seq(
        &self,
        p: &[f64],
        g: &mut [f64],
        caches: &[LstmStep],
        dy: &RealMatrix,
        reverse: bool,
    ) -> RealMatrix {
        let t_len = caches.len();
        let mut dx = RealMatrix::zeros(t_len, self.input);
        let mut dh_next = vec![0.0; self.hidden];
        let mut dc_next = vec![0.0; self.hidden];
        for i in (0..t_len).rev() {
            let t = if reverse { t_len - 1 - i } else { i };
            let mut dh = dy.row(t).to_vec();
            add_into(&mut dh, &dh_next);
            let (dxi, dhp, dcp) = self.step_backward(p, g, &caches[i], &dh, &dc_next);
            dx.row_mut(t).copy_from_slice(&dxi);
            dh_next = dhp;
            dc_next = dcp;
        }
        dx
    }
}
