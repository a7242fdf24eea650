//! CTC negative log-likelihood by forward-backward over the blank-interleaved
//! label sequence.

use super::alphabet::check_labels;
use super::LossResult;
use crate::error::{Error, Result};
use crate::numerics::{log_add, log_softmax_in_place, RealMatrix};

const NEG_INF: f64 = f64::NEG_INFINITY;

/// Frames needed to emit `labels` under CTC: one per label plus a separating
/// blank between each pair of equal neighbours.
pub fn ctc_min_frames(labels: &[usize]) -> usize {
    labels.len() + labels.windows(2).filter(|w| w[0] == w[1]).count()
}

/// Row-wise log-softmax of the logits, validating that every entry is finite.
pub(crate) fn frame_log_probs(logits: &RealMatrix) -> Result<RealMatrix> {
    if logits.rows() == 0 || logits.cols() < 2 {
        return Err(Error::Shape(format!(
            "frame logits must be at least 1x2, got {}x{}",
            logits.rows(),
            logits.cols()
        )));
    }
    if !logits.is_finite() {
        return Err(Error::NonFinite("frame logits".into()));
    }
    let mut lp = logits.clone();
    for t in 0..lp.rows() {
        log_softmax_in_place(lp.row_mut(t));
    }
    Ok(lp)
}

/// The 2U+1 state sequence: blank, y1, blank, y2, ..., yU, blank.
pub(crate) fn expand_labels(labels: &[usize], blank: usize) -> Vec<usize> {
    let mut ext = Vec::with_capacity(2 * labels.len() + 1);
    ext.push(blank);
    for &l in labels {
        ext.push(l);
        ext.push(blank);
    }
    ext
}

/// Whether state `s` may be entered directly from `s - 2`.
#[inline]
pub(crate) fn can_skip(ext: &[usize], s: usize, blank: usize) -> bool {
    s >= 2 && ext[s] != blank && ext[s] != ext[s - 2]
}

pub(crate) fn check_ctc_input(logits: &RealMatrix, labels: &[usize]) -> Result<usize> {
    let blank = logits.cols().saturating_sub(1);
    check_labels(labels, blank)?;
    let required = ctc_min_frames(labels);
    if required > logits.rows() {
        return Err(Error::NoAlignment { required, available: logits.rows() });
    }
    Ok(blank)
}

/// CTC loss and its exact gradient with respect to the unnormalized logits.
///
/// `logits` is `T' x (V+1)`; the last column is blank.
pub fn ctc_loss(logits: &RealMatrix, labels: &[usize]) -> Result<LossResult> {
    let fb = forward_backward(logits, labels)?;
    let (lp, ext, log_p) = (&fb.lp, &fb.ext, fb.log_p);
    let frames = lp.rows();
    let mut grad = RealMatrix::zeros(frames, logits.cols());
    for t in 0..frames {
        let row = grad.row_mut(t);
        for (k, g) in row.iter_mut().enumerate() {
            *g = lp.get(t, k).exp();
        }
        for (s, &k) in ext.iter().enumerate() {
            let occ = fb.occupancy(t, s);
            if occ > NEG_INF {
                row[k] -= occ.exp();
            }
        }
    }
    Ok(LossResult { loss: -log_p, grad })
}

/// Posterior probability of occupying each blank-interleaved state at each
/// frame, as a `T' x (2U+1)` matrix. Every row sums to one.
pub fn ctc_state_posteriors(logits: &RealMatrix, labels: &[usize]) -> Result<RealMatrix> {
    let fb = forward_backward(logits, labels)?;
    let mut post = RealMatrix::zeros(fb.lp.rows(), fb.ext.len());
    for t in 0..post.rows() {
        for s in 0..post.cols() {
            post.set(t, s, fb.occupancy(t, s).exp());
        }
    }
    Ok(post)
}

struct Lattice {
    lp: RealMatrix,
    ext: Vec<usize>,
    alpha: RealMatrix,
    beta: RealMatrix,
    log_p: f64,
}

impl Lattice {
    fn occupancy(&self, t: usize, s: usize) -> f64 {
        self.alpha.get(t, s) + self.beta.get(t, s) - self.log_p
    }
}

fn forward_backward(logits: &RealMatrix, labels: &[usize]) -> Result<Lattice> {
    let lp = frame_log_probs(logits)?;
    let blank = check_ctc_input(logits, labels)?;
    let frames = lp.rows();
    let ext = expand_labels(labels, blank);
    let states = ext.len();

    let mut alpha = RealMatrix::filled(frames, states, NEG_INF);
    alpha.set(0, 0, lp.get(0, blank));
    if states > 1 {
        alpha.set(0, 1, lp.get(0, ext[1]));
    }
    for t in 1..frames {
        for s in 0..states {
            let mut a = alpha.get(t - 1, s);
            if s >= 1 {
                a = log_add(a, alpha.get(t - 1, s - 1));
            }
            if can_skip(&ext, s, blank) {
                a = log_add(a, alpha.get(t - 1, s - 2));
            }
            if a > NEG_INF {
                alpha.set(t, s, a + lp.get(t, ext[s]));
            }
        }
    }

    // beta excludes the emission at its own frame.
    let mut beta = RealMatrix::filled(frames, states, NEG_INF);
    beta.set(frames - 1, states - 1, 0.0);
    if states > 1 {
        beta.set(frames - 1, states - 2, 0.0);
    }
    for t in (0..frames - 1).rev() {
        for s in 0..states {
            let mut b = beta.get(t + 1, s) + lp.get(t + 1, ext[s]);
            if s + 1 < states {
                b = log_add(b, beta.get(t + 1, s + 1) + lp.get(t + 1, ext[s + 1]));
            }
            if s + 2 < states && can_skip(&ext, s + 2, blank) {
                b = log_add(b, beta.get(t + 1, s + 2) + lp.get(t + 1, ext[s + 2]));
            }
            beta.set(t, s, b);
        }
    }

    let mut log_p = alpha.get(frames - 1, states - 1);
    if states > 1 {
        log_p = log_add(log_p, alpha.get(frames - 1, states - 2));
    }
    if !log_p.is_finite() {
        return Err(Error::NonFinite("ctc likelihood underflowed".into()));
    }
    Ok(Lattice { lp, ext, alpha, beta, log_p })
}

/// The CTC collapse map: merge repeats, then drop blanks.
pub fn collapse(path: &[usize], blank: usize) -> Vec<usize> {
    let mut out = Vec::new();
    let mut prev = None;
    for &k in path {
        if Some(k) != prev && k != blank {
            out.push(k);
        }
        prev = Some(k);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_frame_uniform() {
        // B^-1("a") over 2 frames = {a-, -a, aa}, each 1/4.
        let logits = RealMatrix::zeros(2, 2);
        let r = ctc_loss(&logits, &[0]).unwrap();
        assert!((r.loss - (-(0.75f64).ln())).abs() < 1e-12);
        assert!((r.loss - 0.287682).abs() < 1e-6);
    }

    #[test]
    fn empty_labels_all_blank() {
        let logits = RealMatrix::from_rows(&[
            vec![0.3, -1.0, 0.2],
            vec![1.5, 0.0, -0.7],
            vec![0.0, 0.1, 0.9],
        ])
        .unwrap();
        let r = ctc_loss(&logits, &[]).unwrap();
        let want: f64 = (0..3)
            .map(|t| -crate::numerics::log_softmax(logits.row(t)).unwrap()[2])
            .sum();
        assert!((r.loss - want).abs() < 1e-12);
    }

    #[test]
    fn repeated_label_needs_separator() {
        let logits = RealMatrix::zeros(2, 2);
        assert_eq!(
            ctc_loss(&logits, &[0, 0]).unwrap_err(),
            Error::NoAlignment { required: 3, available: 2 }
        );
        assert!(ctc_loss(&RealMatrix::zeros(3, 2), &[0, 0]).is_ok());
    }

    #[test]
    fn rejects_blank_and_nan() {
        assert!(matches!(
            ctc_loss(&RealMatrix::zeros(3, 3), &[2]),
            Err(Error::InvalidLabel { id: 2, vocab: 2 })
        ));
        let mut bad = RealMatrix::zeros(2, 2);
        bad.set(1, 1, f64::NAN);
        assert!(ctc_loss(&bad, &[0]).is_err());
    }

    #[test]
    fn gradient_rows_sum_to_zero() {
        let logits = RealMatrix::from_rows(&[
            vec![0.1, 0.5, -0.2],
            vec![1.0, -1.0, 0.0],
            vec![0.3, 0.3, 0.9],
            vec![-0.5, 0.2, 0.1],
        ])
        .unwrap();
        let r = ctc_loss(&logits, &[0, 1]).unwrap();
        for row in r.grad.iter_rows() {
            assert!(row.iter().sum::<f64>().abs() < 1e-12);
        }
    }

    #[test]
    fn collapse_examples() {
        assert_eq!(collapse(&[0, 0, 1, 2, 1], 2), vec![0, 1, 1]);
        assert_eq!(collapse(&[2, 2, 2], 2), Vec::<usize>::new());
    }
}
