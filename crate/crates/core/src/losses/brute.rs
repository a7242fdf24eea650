//! Literal path enumeration: the oracle the dynamic programs are checked against.

use super::ctc::{collapse, ctc_min_frames, frame_log_probs};
use super::rnnt::{node_log_probs, JointLogits};
use crate::error::{Error, Result};
use crate::numerics::{logsumexp, RealMatrix};

pub const MAX_FRAMES: usize = 8;
pub const MAX_LABELS: usize = 5;
pub const MAX_VOCAB: usize = 4;

#[derive(Clone, Copy, Debug)]
pub enum BruteForceInput<'a> {
    /// `T' x (V+1)` frame logits.
    Ctc(&'a RealMatrix),
    Rnnt(&'a JointLogits),
}

fn guard(frames: usize, labels: usize, vocab: usize) -> Result<()> {
    if frames > MAX_FRAMES || labels > MAX_LABELS || vocab > MAX_VOCAB {
        return Err(Error::GuardExceeded(format!(
            "T'={frames} U={labels} V={vocab} (limits {MAX_FRAMES}/{MAX_LABELS}/{MAX_VOCAB})"
        )));
    }
    Ok(())
}

/// One enumerated path: its frame-level (CTC) or step-level (RNN-T) symbols
/// and its log-probability. RNN-T steps use `classes - 1` for blank.
#[derive(Clone, Debug, PartialEq)]
pub struct EnumeratedPath {
    pub symbols: Vec<usize>,
    pub log_prob: f64,
}

/// Every raw path consistent with `labels`, in a fixed enumeration order.
pub fn enumerate_paths(input: BruteForceInput<'_>, labels: &[usize]) -> Result<Vec<EnumeratedPath>> {
    match input {
        BruteForceInput::Ctc(logits) => enumerate_ctc(logits, labels),
        BruteForceInput::Rnnt(joint) => enumerate_rnnt(joint, labels),
    }
}

/// `-log` of the summed probability of all enumerated paths.
pub fn brute_force_loss(input: BruteForceInput<'_>, labels: &[usize]) -> Result<f64> {
    let paths = enumerate_paths(input, labels)?;
    if paths.is_empty() {
        let available = match input {
            BruteForceInput::Ctc(l) => l.rows(),
            BruteForceInput::Rnnt(j) => j.frames(),
        };
        return Err(Error::NoAlignment { required: ctc_min_frames(labels), available });
    }
    let lps: Vec<f64> = paths.iter().map(|p| p.log_prob).collect();
    Ok(-logsumexp(&lps)?)
}

fn enumerate_ctc(logits: &RealMatrix, labels: &[usize]) -> Result<Vec<EnumeratedPath>> {
    let classes = logits.cols();
    guard(logits.rows(), labels.len(), classes.saturating_sub(1))?;
    let lp = frame_log_probs(logits)?;
    let blank = classes - 1;
    let frames = lp.rows();
    let mut path = vec![0usize; frames];
    let mut out = Vec::new();
    loop {
        if collapse(&path, blank) == labels {
            let log_prob = path.iter().enumerate().map(|(t, &k)| lp.get(t, k)).sum();
            out.push(EnumeratedPath { symbols: path.clone(), log_prob });
        }
        // odometer increment
        let mut i = frames;
        loop {
            if i == 0 {
                return Ok(out);
            }
            i -= 1;
            path[i] += 1;
            if path[i] < classes {
                break;
            }
            path[i] = 0;
        }
    }
}

fn enumerate_rnnt(joint: &JointLogits, labels: &[usize]) -> Result<Vec<EnumeratedPath>> {
    guard(joint.frames(), labels.len(), joint.classes().saturating_sub(1))?;
    if joint.rows() != labels.len() + 1 {
        return Err(Error::Shape(format!(
            "joint has {} label rows for {} labels",
            joint.rows(),
            labels.len()
        )));
    }
    let lp = node_log_probs(joint)?;
    let mut out = Vec::new();
    let mut steps = Vec::new();
    walk_lattice(&lp, labels, 0, 0, 0.0, &mut steps, &mut out);
    Ok(out)
}

fn walk_lattice(
    lp: &JointLogits,
    labels: &[usize],
    t: usize,
    u: usize,
    acc: f64,
    steps: &mut Vec<usize>,
    out: &mut Vec<EnumeratedPath>,
) {
    let blank = lp.classes() - 1;
    let node = lp.node(t, u);
    if u < labels.len() {
        steps.push(labels[u]);
        walk_lattice(lp, labels, t, u + 1, acc + node[labels[u]], steps, out);
        steps.pop();
    }
    steps.push(blank);
    if t + 1 < lp.frames() {
        walk_lattice(lp, labels, t + 1, u, acc + node[blank], steps, out);
    } else if u == labels.len() {
        out.push(EnumeratedPath { symbols: steps.clone(), log_prob: acc + node[blank] });
    }
    steps.pop();
}
