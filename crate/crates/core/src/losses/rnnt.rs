//! RNN-Transducer loss over the `T' x (U+1)` alignment lattice.

use super::alphabet::check_labels;
use super::LossResult;
use crate::error::{Error, Result};
use crate::numerics::{log_add, log_softmax_in_place, RealMatrix};

const NEG_INF: f64 = f64::NEG_INFINITY;

/// Scores over `V+1` classes for every lattice node `(t, u)`.
#[derive(Clone, Debug, PartialEq)]
pub struct JointLogits {
    frames: usize,
    rows: usize,
    classes: usize,
    data: Vec<f64>,
}

impl JointLogits {
    pub fn zeros(frames: usize, rows: usize, classes: usize) -> Self {
        Self { frames, rows, classes, data: vec![0.0; frames * rows * classes] }
    }

    pub fn from_vec(frames: usize, rows: usize, classes: usize, data: Vec<f64>) -> Result<Self> {
        if frames * rows * classes != data.len() {
            return Err(Error::Shape(format!(
                "joint {frames}x{rows}x{classes} needs {} values, got {}",
                frames * rows * classes,
                data.len()
            )));
        }
        Ok(Self { frames, rows, classes, data })
    }

    /// `T'`.
    pub fn frames(&self) -> usize {
        self.frames
    }

    /// `U + 1`.
    pub fn rows(&self) -> usize {
        self.rows
    }

    /// `V + 1`; the last class is blank.
    pub fn classes(&self) -> usize {
        self.classes
    }

    #[inline]
    pub fn node(&self, t: usize, u: usize) -> &[f64] {
        let start = (t * self.rows + u) * self.classes;
        &self.data[start..start + self.classes]
    }

    #[inline]
    pub fn node_mut(&mut self, t: usize, u: usize) -> &mut [f64] {
        let start = (t * self.rows + u) * self.classes;
        &mut self.data[start..start + self.classes]
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    /// Gradient with respect to the two additive inputs of [`joint_combine`]:
    /// sums over `u` for the frame side and over `t` for the label side.
    pub fn split_grad(&self) -> (RealMatrix, RealMatrix) {
        let mut dh = RealMatrix::zeros(self.frames, self.classes);
        let mut dg = RealMatrix::zeros(self.rows, self.classes);
        for t in 0..self.frames {
            for u in 0..self.rows {
                let node = self.node(t, u);
                for (k, &v) in node.iter().enumerate() {
                    dh.row_mut(t)[k] += v;
                    dg.row_mut(u)[k] += v;
                }
            }
        }
        (dh, dg)
    }
}

/// `joint[t, u, :] = h_proj[t, :] + g_proj[u, :]`, materialized.
pub fn joint_combine(h_proj: &RealMatrix, g_proj: &RealMatrix) -> Result<JointLogits> {
    if h_proj.cols() != g_proj.cols() {
        return Err(Error::Shape(format!(
            "joint inputs disagree on class count: {} vs {}",
            h_proj.cols(),
            g_proj.cols()
        )));
    }
    let classes = h_proj.cols();
    let mut joint = JointLogits::zeros(h_proj.rows(), g_proj.rows(), classes);
    for t in 0..h_proj.rows() {
        let h = h_proj.row(t);
        for u in 0..g_proj.rows() {
            let g = g_proj.row(u);
            for ((o, &a), &b) in joint.node_mut(t, u).iter_mut().zip(h).zip(g) {
                *o = a + b;
            }
        }
    }
    Ok(joint)
}

pub(crate) fn node_log_probs(joint: &JointLogits) -> Result<JointLogits> {
    if joint.frames == 0 || joint.rows == 0 || joint.classes < 2 {
        return Err(Error::Shape("joint must have at least one frame, one row and two classes".into()));
    }
    if joint.data.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("joint logits".into()));
    }
    let mut lp = joint.clone();
    for chunk in lp.data.chunks_mut(lp.classes) {
        log_softmax_in_place(chunk);
    }
    Ok(lp)
}

pub(crate) fn check_rnnt_input(joint: &JointLogits, labels: &[usize]) -> Result<usize> {
    if joint.rows != labels.len() + 1 {
        return Err(Error::Shape(format!(
            "joint has {} label rows but {} labels need {}",
            joint.rows,
            labels.len(),
            labels.len() + 1
        )));
    }
    let blank = joint.classes - 1;
    check_labels(labels, blank)?;
    Ok(blank)
}

/// RNN-T loss and its exact gradient with respect to the joint logits.
///
/// Paths start at `(0, 0)` and finish with a mandatory blank at `(T'-1, U)`.
pub fn rnnt_loss(joint: &JointLogits, labels: &[usize]) -> Result<LossResult<JointLogits>> {
    let Lattice { lp, blank, alpha, beta, log_p } = forward_backward(joint, labels)?;
    let frames = joint.frames;
    let rows = joint.rows;
    let last_u = rows - 1;
    let mut grad = JointLogits::zeros(frames, rows, joint.classes);
    for t in 0..frames {
        for u in 0..rows {
            let node = lp.node(t, u);
            let a = alpha.get(t, u);
            let occupancy = (a + beta.get(t, u) - log_p).exp();
            let g = grad.node_mut(t, u);
            for (k, gk) in g.iter_mut().enumerate() {
                *gk = node[k].exp() * occupancy;
            }
            let after_blank = if t + 1 < frames {
                beta.get(t + 1, u)
            } else if u == last_u {
                0.0
            } else {
                NEG_INF
            };
            g[blank] -= (a + node[blank] + after_blank - log_p).exp();
            if u < last_u {
                let y = labels[u];
                g[y] -= (a + node[y] + beta.get(t, u + 1) - log_p).exp();
            }
        }
    }
    Ok(LossResult { loss: -log_p, grad })
}

/// Posterior probability that a path passes through each
/// lattice node, as a `T' x (U+1)` matrix.
pub fn rnnt_node_posteriors(joint: &JointLogits, labels: &[usize]) -> Result<RealMatrix> {
    let fb = forward_backward(joint, labels)?;
    let mut post = RealMatrix::zeros(joint.frames, joint.rows);
    for t in 0..joint.frames {
        for u in 0..joint.rows {
            post.set(t, u, (fb.alpha.get(t, u) + fb.beta.get(t, u) - fb.log_p).exp());
        }
    }
    Ok(post)
}

struct Lattice {
    lp: JointLogits,
    blank: usize,
    alpha: RealMatrix,
    beta: RealMatrix,
    log_p: f64,
}

fn forward_backward(joint: &JointLogits, labels: &[usize]) -> Result<Lattice> {
    let lp = node_log_probs(joint)?;
    let blank = check_rnnt_input(joint, labels)?;
    let frames = joint.frames;
    let rows = joint.rows;
    let last_u = rows - 1;

    let mut alpha = RealMatrix::filled(frames, rows, NEG_INF);
    for t in 0..frames {
        for u in 0..rows {
            let a = if t == 0 && u == 0 {
                0.0
            } else {
                let mut a = NEG_INF;
                if t > 0 {
                    a = alpha.get(t - 1, u) + lp.node(t - 1, u)[blank];
                }
                if u > 0 {
                    a = log_add(a, alpha.get(t, u - 1) + lp.node(t, u - 1)[labels[u - 1]]);
                }
                a
            };
            alpha.set(t, u, a);
        }
    }

    // beta includes the emissions made at its own node.
    let mut beta = RealMatrix::filled(frames, rows, NEG_INF);
    for t in (0..frames).rev() {
        for u in (0..rows).rev() {
            let node = lp.node(t, u);
            let b = if t == frames - 1 && u == last_u {
                node[blank]
            } else {
                let mut b = NEG_INF;
                if t + 1 < frames {
                    b = node[blank] + beta.get(t + 1, u);
                }
                if u < last_u {
                    b = log_add(b, node[labels[u]] + beta.get(t, u + 1));
                }
                b
            };
            beta.set(t, u, b);
        }
    }

    let log_p = alpha.get(frames - 1, last_u) + lp.node(frames - 1, last_u)[blank];
    if !log_p.is_finite() {
        return Err(Error::NonFinite("rnnt likelihood underflowed".into()));
    }

    Ok(Lattice { lp, blank, alpha, beta, log_p })
}
