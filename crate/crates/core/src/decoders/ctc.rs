use std::collections::HashMap;

use super::{rank_order, sort_hypotheses, DecodeConfig, Hypothesis, Objective};
use crate::lm::{LmState, LmToken, NGramLM};
use crate::losses::{collapse, Alphabet, LabelSeq};
use crate::numerics::{argmax, log_add, log_softmax_in_place, RealMatrix};

const NEG_INF: f64 = f64::NEG_INFINITY;

/// Per-frame argmax, then the collapse map. The last column is blank.
pub fn ctc_greedy(logits: &RealMatrix) -> LabelSeq {
    let blank = logits.cols() - 1;
    let path: Vec<usize> = logits.iter_rows().map(argmax).collect();
    LabelSeq(collapse(&path, blank))
}

#[derive(Clone)]
struct Prefix {
    /// Paths ending in blank.
    blank: f64,
    /// Paths ending in the prefix's last label.
    label: f64,
    lm_state: Option<LmState>,
    lm: f64,
    words: usize,
}

impl Prefix {
    fn acoustic(&self) -> f64 {
        log_add(self.blank, self.label)
    }

    fn score(&self, cfg: &DecodeConfig) -> f64 {
        self.acoustic() + cfg.lm_weight * self.lm + cfg.word_bonus * self.words as f64
    }
}

/// Prefix beam search with optional shallow LM fusion.
///
/// Each prefix carries its blank-ending and label-ending probabilities.
/// The LM and word bonus are functions of the prefix alone; the final
/// ranking adds the LM's sentence-end probability.
pub fn ctc_prefix_beam(
    logits: &RealMatrix,
    lm: Option<&NGramLM>,
    alphabet: &Alphabet,
    cfg: &DecodeConfig,
) -> Vec<Hypothesis> {
    let blank = logits.cols() - 1;
    let vocab = blank;
    let boundary = alphabet.word_boundary();
    let lm_tokens: Vec<Option<LmToken>> = (0..vocab)
        .map(|k| lm.map(|m| m.token(alphabet.symbol(k).unwrap_or('\u{fffd}'))))
        .collect();

    let mut beam: Vec<(Vec<usize>, Prefix)> = vec![(
        Vec::new(),
        Prefix { blank: 0.0, label: NEG_INF, lm_state: lm.map(NGramLM::start), lm: 0.0, words: 0 },
    )];
    let mut all_blank = 0.0;
    let mut row = vec![0.0; logits.cols()];

    for t in 0..logits.rows() {
        row.copy_from_slice(logits.row(t));
        log_softmax_in_place(&mut row);
        all_blank += row[blank];

        let mut next: HashMap<Vec<usize>, Prefix> = HashMap::with_capacity(beam.len() * (vocab + 1));
        for (prefix, p) in &beam {
            let total = p.acoustic();
            let entry = next.entry(prefix.clone()).or_insert_with(|| Prefix { blank: NEG_INF, label: NEG_INF, ..p.clone() });
            entry.blank = log_add(entry.blank, total + row[blank]);
            if let Some(&last) = prefix.last() {
                entry.label = log_add(entry.label, p.label + row[last]);
            }
            for k in 0..vocab {
                if row[k] == NEG_INF {
                    continue;
                }
                let from = if prefix.last() == Some(&k) { p.blank } else { total };
                if from == NEG_INF {
                    continue;
                }
                let mut extended = prefix.clone();
                extended.push(k);
                let entry = next.entry(extended).or_insert_with(|| {
                    let (lm_state, lm_lp) = match (lm, &p.lm_state, lm_tokens[k]) {
                        (Some(m), Some(s), Some(tok)) => {
                            let (ns, lp) = m.advance_token(s, tok);
                            (Some(ns), lp)
                        }
                        _ => (None, 0.0),
                    };
                    let counts = boundary.is_none_or(|b| b == k);
                    Prefix {
                        blank: NEG_INF,
                        label: NEG_INF,
                        lm_state,
                        lm: p.lm + lm_lp,
                        words: p.words + usize::from(counts),
                    }
                });
                entry.label = log_add(entry.label, from + row[k]);
            }
        }
        let mut ranked: Vec<(Vec<usize>, Prefix)> = next.into_iter().collect();
        ranked.sort_by(|a, b| rank_order(a.1.score(cfg), &a.0, b.1.score(cfg), &b.0));
        ranked.truncate(cfg.beam_width);
        beam = ranked;
    }

    let mut out: Vec<Hypothesis> = beam
        .into_iter()
        .map(|(tokens, p)| to_hypothesis(tokens, &p, lm))
        .collect();
    if !out.iter().any(|h| h.tokens.is_empty()) {
        let empty = Prefix { blank: all_blank, label: NEG_INF, lm_state: lm.map(NGramLM::start), lm: 0.0, words: 0 };
        out.push(to_hypothesis(Vec::new(), &empty, lm));
    }
    sort_hypotheses(&mut out, cfg);
    out
}

fn to_hypothesis(tokens: Vec<usize>, p: &Prefix, lm: Option<&NGramLM>) -> Hypothesis {
    let end = match (lm, &p.lm_state) {
        (Some(m), Some(s)) => m.finish(s),
        _ => 0.0,
    };
    let mut h = Hypothesis::new(tokens, Objective::Ctc, p.acoustic());
    h.log_p_lm = p.lm + end;
    h.word_count = p.words;
    h
}
