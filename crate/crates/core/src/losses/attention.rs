use super::alphabet::check_labels;
use super::LossResult;
use crate::error::{Error, Result};
use crate::numerics::{log_softmax_in_place, RealMatrix};

/// Teacher-forced attention decoder loss.
///
/// `step_logits` is `(U+1) x (V+2)`: row `u` scores the `u`-th target, the
/// final row scores `eos` (class `V+1`). The gradient is softmax minus one-hot
/// per row.
pub fn attention_nll(step_logits: &RealMatrix, labels: &[usize]) -> Result<LossResult> {
    if step_logits.cols() < 3 {
        return Err(Error::Shape(format!(
            "attention logits need at least 3 classes, got {}",
            step_logits.cols()
        )));
    }
    let vocab = step_logits.cols() - 2;
    let eos = vocab + 1;
    check_labels(labels, vocab)?;
    if step_logits.rows() != labels.len() + 1 {
        return Err(Error::Shape(format!(
            "{} labels need {} logit rows, got {}",
            labels.len(),
            labels.len() + 1,
            step_logits.rows()
        )));
    }
    if !step_logits.is_finite() {
        return Err(Error::NonFinite("attention logits".into()));
    }
    let mut grad = step_logits.clone();
    let mut loss = 0.0;
    for u in 0..grad.rows() {
        let target = labels.get(u).copied().unwrap_or(eos);
        let row = grad.row_mut(u);
        log_softmax_in_place(row);
        loss -= row[target];
        for v in row.iter_mut() {
            *v = v.exp();
        }
        row[target] -= 1.0;
    }
    Ok(LossResult { loss, grad })
}
