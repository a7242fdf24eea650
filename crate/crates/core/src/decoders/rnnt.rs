use std::collections::HashMap;

use super::{rank_order, sort_hypotheses, DecodeConfig, Hypothesis, Objective, StepScorer};
use crate::numerics::{argmax, log_add, log_softmax_in_place, RealMatrix};

const NEG_INF: f64 = f64::NEG_INFINITY;

fn node_dist(frame: &[f64], label_side: &[f64]) -> Vec<f64> {
    let mut d: Vec<f64> = frame.iter().zip(label_side).map(|(a, b)| a + b).collect();
    log_softmax_in_place(&mut d);
    d
}

/// Prediction-network outputs memoized by prefix; the label side of the
/// joint depends only on the emitted labels.
struct PrefixCache<'s, S: StepScorer> {
    scorer: &'s S,
    map: HashMap<Vec<usize>, (S::State, Vec<f64>)>,
}

impl<'s, S: StepScorer> PrefixCache<'s, S> {
    fn new(scorer: &'s S) -> Self {
        let mut map = HashMap::new();
        map.insert(Vec::new(), scorer.start());
        Self { scorer, map }
    }

    fn output(&mut self, prefix: &[usize]) -> &[f64] {
        if !self.map.contains_key(prefix) {
            let (parent, last) = prefix.split_at(prefix.len() - 1);
            self.output(parent);
            let state = &self.map[parent].0;
            let next = self.scorer.step(state, last[0]);
            self.map.insert(prefix.to_vec(), next);
        }
        &self.map[prefix].1
    }
}

/// Greedy transducer decoding: at each frame emit the argmax label until
/// blank wins or the per-frame cap is hit.
pub fn rnnt_greedy<S: StepScorer>(frames: &RealMatrix, scorer: &S, cfg: &DecodeConfig) -> Hypothesis {
    let blank = frames.cols() - 1;
    let (mut state, mut g) = scorer.start();
    let mut tokens = Vec::new();
    let mut log_p = 0.0;
    let mut truncated = false;
    for t in 0..frames.rows() {
        let mut emitted = 0;
        loop {
            let d = node_dist(frames.row(t), &g);
            let k = argmax(&d);
            let capped = emitted >= cfg.max_symbols_per_step || tokens.len() >= cfg.max_output_len;
            if k == blank || capped {
                truncated |= k != blank && tokens.len() >= cfg.max_output_len;
                log_p += d[blank];
                break;
            }
            log_p += d[k];
            tokens.push(k);
            emitted += 1;
            (state, g) = scorer.step(&state, k);
        }
    }
    let mut h = Hypothesis::new(tokens, Objective::Rnnt, log_p);
    h.truncated = truncated;
    h
}

/// Time-synchronous transducer beam search without length normalization.
///
/// Within a frame, hypotheses are expanded level by level (one more label
/// per level, up to `max_symbols_per_step`); every level contributes its
/// blank-terminated mass to the next frame's beam, where identical prefixes
/// are merged by log-sum. With a beam wider than the reachable set this is
/// the exact marginal of every label sequence up to `max_output_len`.
pub fn rnnt_beam<S: StepScorer>(frames: &RealMatrix, scorer: &S, cfg: &DecodeConfig) -> Vec<Hypothesis> {
    let blank = frames.cols() - 1;
    let mut cache = PrefixCache::new(scorer);
    let mut beam: Vec<(Vec<usize>, f64)> = vec![(Vec::new(), 0.0)];
    let mut truncated: HashMap<Vec<usize>, bool> = HashMap::new();

    for t in 0..frames.rows() {
        let frame = frames.row(t);
        let mut ended: HashMap<Vec<usize>, f64> = HashMap::new();
        let mut level = beam;
        for depth in 0..=cfg.max_symbols_per_step {
            let mut grown: HashMap<Vec<usize>, f64> = HashMap::new();
            for (prefix, lp) in &level {
                let d = node_dist(frame, cache.output(prefix));
                let e = ended.entry(prefix.clone()).or_insert(NEG_INF);
                *e = log_add(*e, lp + d[blank]);
                if depth == cfg.max_symbols_per_step {
                    continue;
                }
                if prefix.len() >= cfg.max_output_len {
                    if d[..blank].iter().any(|&v| v > NEG_INF) {
                        truncated.insert(prefix.clone(), true);
                    }
                    continue;
                }
                for k in 0..blank {
                    let v = lp + d[k];
                    if v == NEG_INF {
                        continue;
                    }
                    let mut ext = prefix.clone();
                    ext.push(k);
                    let e = grown.entry(ext).or_insert(NEG_INF);
                    *e = log_add(*e, v);
                }
            }
            if grown.is_empty() {
                break;
            }
            level = prune(grown, cfg.beam_width);
        }
        beam = prune(ended, cfg.beam_width);
    }

    let mut out: Vec<Hypothesis> = beam
        .into_iter()
        .map(|(tokens, lp)| {
            let was_truncated = truncated.contains_key(&tokens);
            let mut h = Hypothesis::new(tokens, Objective::Rnnt, lp);
            h.truncated = was_truncated;
            h
        })
        .collect();
    sort_hypotheses(&mut out, cfg);
    out
}

fn prune(map: HashMap<Vec<usize>, f64>, width: usize) -> Vec<(Vec<usize>, f64)> {
    let mut v: Vec<(Vec<usize>, f64)> = map.into_iter().filter(|(_, lp)| *lp > NEG_INF).collect();
    v.sort_by(|a, b| rank_order(a.1, &a.0, b.1, &b.0));
    v.truncate(width);
    v
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Label side that forbids everything except blank.
    struct BlankOnly;

    impl StepScorer for BlankOnly {
        type State = ();
        fn start(&self) -> ((), Vec<f64>) {
            ((), vec![NEG_INF, NEG_INF, 0.0])
        }
        fn step(&self, _: &(), _: usize) -> ((), Vec<f64>) {
            self.start()
        }
    }

    /// Label side independent of the prefix.
    struct Flat;

    impl StepScorer for Flat {
        type State = ();
        fn start(&self) -> ((), Vec<f64>) {
            ((), vec![0.0, 0.0])
        }
        fn step(&self, _: &(), _: usize) -> ((), Vec<f64>) {
            self.start()
        }
    }

    #[test]
    fn blank_only_scorer_outputs_nothing() {
        let frames = RealMatrix::zeros(3, 3);
        let cfg = DecodeConfig { beam_width: 4, ..DecodeConfig::default() };
        let out = rnnt_beam(&frames, &BlankOnly, &cfg);
        assert!(out[0].tokens.is_empty());
        assert!(out[0].log_p_model.abs() < 1e-12);
        assert!(rnnt_greedy(&frames, &BlankOnly, &cfg).tokens.is_empty());
    }

    #[test]
    fn merged_prefix_is_the_marginal() {
        // V = 1, uniform: P("a") over 2 frames = 2 * (1/2)^3.
        let frames = RealMatrix::zeros(2, 2);
        let cfg = DecodeConfig { beam_width: 16, max_output_len: 1, ..DecodeConfig::default() };
        let out = rnnt_beam(&frames, &Flat, &cfg);
        let a = out.iter().find(|h| h.tokens.0 == vec![0]).unwrap();
        assert!((a.log_p_model - 0.25f64.ln()).abs() < 1e-12);
        assert!(a.truncated);
    }
}
