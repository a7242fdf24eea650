//! Best single alignments (Viterbi) for CTC and RNN-T, and validated
//! attention weights.
//!
//! Both Viterbi decoders compute best-to-go scores backwards and then trace
//! forwards from the start node, so ties resolve toward emitting a label as
//! early as possible.

use serde::{Deserialize, Serialize};

use super::ctc::{can_skip, check_ctc_input, expand_labels, frame_log_probs};
use super::rnnt::{check_rnnt_input, node_log_probs, JointLogits};
use crate::error::{Error, Result};
use crate::numerics::RealMatrix;

const NEG_INF: f64 = f64::NEG_INFINITY;

/// Tolerance on attention row sums.
pub const ATTENTION_ROW_TOL: f64 = 1e-6;

#[derive(Clone, Copy, Debug)]
pub enum AlignmentInput<'a> {
    Ctc(&'a RealMatrix),
    Rnnt(&'a JointLogits),
    /// `U x T'` attention weights.
    Attention(&'a RealMatrix),
}

/// One move through the RNN-T lattice, made at node `(t, u)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LatticeStep {
    pub t: usize,
    pub u: usize,
    /// Emitted label, or `None` for blank (advance in time).
    pub label: Option<usize>,
}

#[derive(Clone, Debug, PartialEq)]
pub enum AlignmentPath {
    Ctc {
        /// Label or blank for each of the `T'` frames.
        frames: Vec<usize>,
        /// Index into the blank-interleaved label sequence, per frame.
        states: Vec<usize>,
        blank: usize,
        log_prob: f64,
    },
    Rnnt {
        steps: Vec<LatticeStep>,
        log_prob: f64,
    },
    Attention {
        weights: RealMatrix,
    },
}

impl AlignmentPath {
    pub fn log_prob(&self) -> Option<f64> {
        match self {
            AlignmentPath::Ctc { log_prob, .. } | AlignmentPath::Rnnt { log_prob, .. } => Some(*log_prob),
            AlignmentPath::Attention { .. } => None,
        }
    }

    /// Checks the structural invariants: CTC states never decrease and
    /// advance by at most two; RNN-T moves exactly one node per step from
    /// `(0, 0)`; attention rows are normalized.
    pub fn is_valid(&self) -> bool {
        match self {
            AlignmentPath::Ctc { frames, states, .. } => {
                frames.len() == states.len()
                    && states.first().is_some_and(|&s| s <= 1)
                    && states.windows(2).all(|w| w[1] >= w[0] && w[1] - w[0] <= 2)
            }
            AlignmentPath::Rnnt { steps, .. } => {
                let Some(first) = steps.first() else { return false };
                if (first.t, first.u) != (0, 0) || steps.last().and_then(|s| s.label).is_some() {
                    return false;
                }
                steps.windows(2).all(|w| {
                    let (a, b) = (w[0], w[1]);
                    match a.label {
                        Some(_) => b.t == a.t && b.u == a.u + 1,
                        None => b.t == a.t + 1 && b.u == a.u,
                    }
                })
            }
            AlignmentPath::Attention { weights } => weights
                .iter_rows()
                .all(|r| (r.iter().sum::<f64>() - 1.0).abs() <= ATTENTION_ROW_TOL),
        }
    }
}

pub fn best_alignment(input: AlignmentInput<'_>, labels: &[usize]) -> Result<AlignmentPath> {
    match input {
        AlignmentInput::Ctc(logits) => ctc_viterbi(logits, labels),
        AlignmentInput::Rnnt(joint) => rnnt_viterbi(joint, labels),
        AlignmentInput::Attention(weights) => {
            if weights.rows() != labels.len() {
                return Err(Error::Shape(format!(
                    "attention matrix has {} rows for {} labels",
                    weights.rows(),
                    labels.len()
                )));
            }
            for (u, row) in weights.iter_rows().enumerate() {
                let sum: f64 = row.iter().sum();
                if row.iter().any(|&a| !(0.0..=1.0 + ATTENTION_ROW_TOL).contains(&a))
                    || (sum - 1.0).abs() > ATTENTION_ROW_TOL
                {
                    return Err(Error::Shape(format!("attention row {u} is not a distribution (sum {sum})")));
                }
            }
            Ok(AlignmentPath::Attention { weights: weights.clone() })
        }
    }
}

fn ctc_viterbi(logits: &RealMatrix, labels: &[usize]) -> Result<AlignmentPath> {
    let lp = frame_log_probs(logits)?;
    let blank = check_ctc_input(logits, labels)?;
    let frames = lp.rows();
    let ext = expand_labels(labels, blank);
    let n = ext.len();

    // Successors of a state in tie-break priority: a new label first, then
    // staying put, then moving onto a blank.
    let successors = |s: usize| -> Vec<usize> {
        let mut v = Vec::with_capacity(3);
        if ext[s] == blank {
            if s + 1 < n {
                v.push(s + 1);
            }
            v.push(s);
        } else {
            if s + 2 < n && can_skip(&ext, s + 2, blank) {
                v.push(s + 2);
            }
            v.push(s);
            if s + 1 < n {
                v.push(s + 1);
            }
        }
        v
    };

    let mut best = RealMatrix::filled(frames, n, NEG_INF);
    best.set(frames - 1, n - 1, lp.get(frames - 1, blank));
    if n > 1 {
        best.set(frames - 1, n - 2, lp.get(frames - 1, ext[n - 2]));
    }
    for t in (0..frames - 1).rev() {
        for s in 0..n {
            let next = successors(s).into_iter().map(|q| best.get(t + 1, q)).fold(NEG_INF, f64::max);
            if next > NEG_INF {
                best.set(t, s, lp.get(t, ext[s]) + next);
            }
        }
    }

    let mut s = if n > 1 && best.get(0, 1) >= best.get(0, 0) { 1 } else { 0 };
    let log_prob = best.get(0, s);
    let mut states = vec![s];
    for t in 1..frames {
        let mut pick = None;
        for q in successors(s) {
            let v = best.get(t, q);
            if v > NEG_INF && pick.is_none_or(|(_, pv)| v > pv) {
                pick = Some((q, v));
            }
        }
        s = pick.expect("feasible alignment has a successor").0;
        states.push(s);
    }
    let frames_out = states.iter().map(|&s| ext[s]).collect();
    Ok(AlignmentPath::Ctc { frames: frames_out, states, blank, log_prob })
}

fn rnnt_viterbi(joint: &JointLogits, labels: &[usize]) -> Result<AlignmentPath> {
    let lp = node_log_probs(joint)?;
    let blank = check_rnnt_input(joint, labels)?;
    let frames = joint.frames();
    let last_u = labels.len();

    let mut best = RealMatrix::filled(frames, last_u + 1, NEG_INF);
    for t in (0..frames).rev() {
        for u in (0..=last_u).rev() {
            let node = lp.node(t, u);
            let v = if t == frames - 1 && u == last_u {
                node[blank]
            } else {
                let emit = if u < last_u { node[labels[u]] + best.get(t, u + 1) } else { NEG_INF };
                let adv = if t + 1 < frames { node[blank] + best.get(t + 1, u) } else { NEG_INF };
                emit.max(adv)
            };
            best.set(t, u, v);
        }
    }

    let (mut t, mut u) = (0, 0);
    let mut steps = Vec::with_capacity(frames + last_u);
    loop {
        let node = lp.node(t, u);
        if t == frames - 1 && u == last_u {
            steps.push(LatticeStep { t, u, label: None });
            break;
        }
        let emit = if u < last_u { node[labels[u]] + best.get(t, u + 1) } else { NEG_INF };
        let adv = if t + 1 < frames { node[blank] + best.get(t + 1, u) } else { NEG_INF };
        if u < last_u && emit >= adv {
            steps.push(LatticeStep { t, u, label: Some(labels[u]) });
            u += 1;
        } else {
            steps.push(LatticeStep { t, u, label: None });
            t += 1;
        }
    }
    Ok(AlignmentPath::Rnnt { steps, log_prob: best.get(0, 0) })
}
