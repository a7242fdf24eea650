use crate::error::{Error, Result};

/// Upper bound on `(V + 2)^max_len` for [`exhaustive_search`].
pub const EXHAUSTIVE_GUARD: f64 = 1e6;

#[derive(Clone, Debug, PartialEq)]
pub struct SearchResult {
    pub best: Vec<usize>,
    pub score: f64,
    pub evaluated: usize,
}

/// Scores every sequence over `0..vocab` of length `0..=max_len` and returns
/// the argmax. Sequences are visited by length, then lexicographically, and
/// only a strictly better score replaces the incumbent, so ties go to the
/// shorter and then lexicographically smaller sequence.
pub fn exhaustive_search<F>(mut score_fn: F, vocab: usize, max_len: usize) -> Result<SearchResult>
where
    F: FnMut(&[usize]) -> f64,
{
    if ((vocab + 2) as f64).powi(max_len as i32) > EXHAUSTIVE_GUARD {
        return Err(Error::GuardExceeded(format!("(V+2)^L = {}^{max_len}", vocab + 2)));
    }
    let mut best = Vec::new();
    let mut best_score = score_fn(&[]);
    let mut evaluated = 1;
    if vocab == 0 {
        return Ok(SearchResult { best, score: best_score, evaluated });
    }
    for len in 1..=max_len {
        let mut seq = vec![0usize; len];
        loop {
            let s = score_fn(&seq);
            evaluated += 1;
            if s > best_score {
                best_score = s;
                best = seq.clone();
            }
            let mut i = len;
            loop {
                if i == 0 {
                    break;
                }
                i -= 1;
                seq[i] += 1;
                if seq[i] < vocab {
                    break;
                }
                seq[i] = 0;
            }
            if seq.iter().all(|&x| x == 0) {
                break;
            }
        }
    }
    Ok(SearchResult { best, score: best_score, evaluated })
}
