//! Transduction objectives (CTC, RNN-T, teacher-forced attention) with exact
//! analytic gradients, enumeration oracles and Viterbi alignments.

mod align;
mod alphabet;
mod attention;
mod brute;
mod ctc;
mod rnnt;

pub use align::{best_alignment, AlignmentInput, AlignmentPath, LatticeStep, ATTENTION_ROW_TOL};
pub use alphabet::{Alphabet, LabelSeq};
pub use attention::attention_nll;
pub use brute::{brute_force_loss, enumerate_paths, BruteForceInput, EnumeratedPath, MAX_FRAMES, MAX_LABELS, MAX_VOCAB};
pub use ctc::{collapse, ctc_loss, ctc_min_frames, ctc_state_posteriors};
pub use rnnt::{joint_combine, rnnt_loss, rnnt_node_posteriors, JointLogits};

use crate::numerics::RealMatrix;

/// Negative log-likelihood in nats plus its gradient with respect to the
/// unnormalized input scores (same shape as the input).
#[derive(Clone, Debug)]
pub struct LossResult<G = RealMatrix> {
    pub loss: f64,
    pub grad: G,
}
