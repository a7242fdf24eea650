use super::{rank_order, sort_hypotheses, DecodeConfig, Hypothesis, Objective, StepScorer};
use crate::numerics::RealMatrix;

const NEG_INF: f64 = f64::NEG_INFINITY;

/// Floor inside the coverage logarithm for never-attended encoder steps.
pub const COVERAGE_FLOOR: f64 = 1e-10;

/// Saturating coverage `Σ_t log(min(Σ_u α[u][t], 1))` of a `U x T'` matrix.
pub fn coverage_score(attn_rows: &RealMatrix) -> f64 {
    let mut mass = vec![0.0; attn_rows.cols()];
    for row in attn_rows.iter_rows() {
        for (m, &a) in mass.iter_mut().zip(row) {
            *m += a;
        }
    }
    coverage_from_mass(&mass)
}

/// Coverage from per-step accumulated attention mass.
pub fn coverage_from_mass(mass: &[f64]) -> f64 {
    mass.iter().map(|&m| m.min(1.0).max(COVERAGE_FLOOR).ln()).sum()
}

fn accumulate(mass: &mut Vec<f64>, alpha: Option<&[f64]>) {
    if let Some(a) = alpha {
        if mass.is_empty() {
            mass.resize(a.len(), 0.0);
        }
        for (m, &x) in mass.iter_mut().zip(a) {
            *m += x;
        }
    }
}

fn best_symbol(dist: &[f64], vocab: usize) -> usize {
    let mut best = 0;
    for k in 1..vocab {
        if dist[k] > dist[best] {
            best = k;
        }
    }
    best
}

/// Greedy attention decoding: argmax over symbols and eos at every step
/// (sos is never emitted). Stops on eos or after `max_output_len` symbols,
/// in which case the result is flagged truncated and left alive.
pub fn attention_greedy<S: StepScorer>(scorer: &S, cfg: &DecodeConfig) -> Hypothesis {
    let (mut state, mut dist) = scorer.start();
    let eos = dist.len() - 1;
    let vocab = eos - 1;
    let mut mass = Vec::new();
    accumulate(&mut mass, scorer.attention(&state));
    let mut tokens = Vec::new();
    let mut log_p = 0.0;
    let mut finished = false;
    while tokens.len() < cfg.max_output_len {
        let k = best_symbol(&dist, vocab);
        if dist[eos] >= dist[k] {
            log_p += dist[eos];
            finished = true;
            break;
        }
        log_p += dist[k];
        tokens.push(k);
        (state, dist) = scorer.step(&state, k);
        accumulate(&mut mass, scorer.attention(&state));
    }
    if !finished && tokens.len() >= cfg.max_output_len && dist[eos] > NEG_INF {
        // One step of grace so that a genuinely finished transcript of
        // exactly max_output_len symbols is not flagged.
        if dist[eos] >= dist[best_symbol(&dist, vocab)] {
            log_p += dist[eos];
            finished = true;
        }
    }
    let mut h = Hypothesis::new(tokens, Objective::Attention, log_p);
    h.alive = !finished;
    h.truncated = !finished;
    h.coverage = coverage_from_mass(&mass);
    h
}

struct Live<St> {
    tokens: Vec<usize>,
    log_p: f64,
    state: St,
    dist: Vec<f64>,
    mass: Vec<f64>,
}

/// Output-synchronous attention beam search.
///
/// Candidates (symbol extensions and eos completions of every live
/// hypothesis) compete for `beam_width` slots under the length-normalized,
/// coverage-adjusted score; completed ones leave the live beam. At
/// `max_output_len` symbols only eos may follow. When neither length
/// normalization nor coverage is active, the search stops as soon as the
/// best completed hypothesis outscores every live one (scores can only
/// decrease). If nothing completes, the best live hypothesis is returned
/// flagged unterminated.
pub fn attention_beam<S: StepScorer>(scorer: &S, cfg: &DecodeConfig) -> Vec<Hypothesis> {
    let (state, dist) = scorer.start();
    let eos = dist.len() - 1;
    let vocab = eos - 1;
    let mut mass = Vec::new();
    accumulate(&mut mass, scorer.attention(&state));
    let mut live = vec![Live { tokens: Vec::new(), log_p: 0.0, state, dist, mass }];
    let mut done: Vec<Hypothesis> = Vec::new();
    let monotone = cfg.length_norm == 0.0 && cfg.coverage_weight == 0.0;

    while !live.is_empty() {
        // (parent, symbol or eos, hypothesis used for ranking)
        let mut cands: Vec<(usize, usize, Hypothesis)> = Vec::new();
        for (i, h) in live.iter().enumerate() {
            let coverage = coverage_from_mass(&h.mass);
            let mut push = |k: usize, alive: bool| {
                let lp = h.log_p + h.dist[k];
                if lp == NEG_INF {
                    return;
                }
                let mut tokens = h.tokens.clone();
                if alive {
                    tokens.push(k);
                }
                let mut hyp = Hypothesis::new(tokens, Objective::Attention, lp);
                hyp.alive = alive;
                hyp.coverage = coverage;
                cands.push((i, k, hyp));
            };
            push(eos, false);
            if h.tokens.len() < cfg.max_output_len {
                for k in 0..vocab {
                    push(k, true);
                }
            }
        }
        if cands.is_empty() {
            break;
        }
        cands.sort_by(|a, b| {
            rank_order(a.2.score(cfg), &a.2.tokens, b.2.score(cfg), &b.2.tokens)
                .then_with(|| a.2.alive.cmp(&b.2.alive))
        });
        cands.truncate(cfg.beam_width);

        let mut next = Vec::new();
        for (parent, k, hyp) in cands {
            if !hyp.alive {
                done.push(hyp);
                continue;
            }
            let p = &live[parent];
            let (state, dist) = scorer.step(&p.state, k);
            let mut mass = p.mass.clone();
            accumulate(&mut mass, scorer.attention(&state));
            next.push(Live { tokens: hyp.tokens.0, log_p: hyp.log_p_model, state, dist, mass });
        }
        live = next;

        if monotone && !done.is_empty() {
            let best_done = done.iter().map(|h| h.score(cfg)).fold(NEG_INF, f64::max);
            if live.iter().all(|h| h.log_p < best_done) {
                break;
            }
        }
    }

    if done.is_empty() {
        let mut out: Vec<Hypothesis> = live
            .into_iter()
            .map(|h| {
                let mut hyp = Hypothesis::new(h.tokens, Objective::Attention, h.log_p);
                hyp.alive = true;
                hyp.truncated = true;
                hyp.coverage = coverage_from_mass(&h.mass);
                hyp
            })
            .collect();
        sort_hypotheses(&mut out, cfg);
        return out;
    }
    sort_hypotheses(&mut done, cfg);
    done.truncate(cfg.beam_width);
    done
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn coverage_examples() {
        let identity = RealMatrix::from_rows(&[vec![1.0, 0.0, 0.0], vec![0.0, 1.0, 0.0], vec![0.0, 0.0, 1.0]]).unwrap();
        assert_eq!(coverage_score(&identity), 0.0);
        let stuck = RealMatrix::from_rows(&vec![vec![1.0, 0.0, 0.0, 0.0]; 3]).unwrap();
        assert!((coverage_score(&stuck) - 3.0 * COVERAGE_FLOOR.ln()).abs() < 1e-9);
        let uniform = RealMatrix::filled(2, 2, 0.5);
        assert_eq!(coverage_score(&uniform), 0.0);
    }

    /// Emits eos with probability one at the first step.
    struct Silent;

    impl StepScorer for Silent {
        type State = ();
        fn start(&self) -> ((), Vec<f64>) {
            ((), vec![NEG_INF, NEG_INF, NEG_INF, 0.0])
        }
        fn step(&self, _: &(), _: usize) -> ((), Vec<f64>) {
            self.start()
        }
    }

    /// Never emits eos.
    struct Looping;

    impl StepScorer for Looping {
        type State = ();
        fn start(&self) -> ((), Vec<f64>) {
            ((), vec![-(2f64.ln()), -(2f64.ln()), NEG_INF, NEG_INF])
        }
        fn step(&self, _: &(), _: usize) -> ((), Vec<f64>) {
            self.start()
        }
    }

    #[test]
    fn immediate_eos() {
        let cfg = DecodeConfig { beam_width: 4, ..DecodeConfig::default() };
        let out = attention_beam(&Silent, &cfg);
        assert!(out[0].tokens.is_empty());
        assert!(!out[0].alive);
        assert_eq!(out[0].log_p_model, 0.0);
        let g = attention_greedy(&Silent, &cfg);
        assert!(g.tokens.is_empty() && !g.truncated);
    }

    #[test]
    fn looping_scorer_is_unterminated() {
        let cfg = DecodeConfig { beam_width: 2, max_output_len: 5, ..DecodeConfig::default() };
        let out = attention_beam(&Looping, &cfg);
        assert!(out[0].alive && out[0].truncated);
        assert_eq!(out[0].tokens.len(), 5);
        let g = attention_greedy(&Looping, &cfg);
        assert!(g.truncated && g.tokens.len() == 5);
    }
}
